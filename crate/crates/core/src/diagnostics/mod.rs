//! Analytical checks on fitted models: auxiliary-function identities,
//! information matrices, convergence rates and a grid-search oracle.

pub mod fd;
pub mod fisher;
pub mod objective;
pub mod oracle;
pub mod speed;

pub use fisher::{score_and_fisher, FisherReport};
pub use objective::{free_energy, jensen_gap, kl_posterior, log_responsibilities, proximal_objective, q_function};
pub use oracle::{brute_force_mle, brute_force_zoom, GridAxis, GridSpec, OracleResult};
pub use speed::{observed_rate, speed_matrix, SpeedDiagnostics};
