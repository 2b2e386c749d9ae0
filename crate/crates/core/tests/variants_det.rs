mod common;

use common::*;
use emkit::diagnostics::{free_energy, observed_rate, q_function};
use emkit::fixtures;
use emkit::variants::det::{ecm_chain, ecme_newton, gem_ascent, sage_sweep};
use emkit::variants::px::{verify_expansion, ExpandedModel, ExpansionKind};
use emkit::{
    em_map, BlockPlan, EmError, FitStatus, FitTrace, GaussianMixture, LatentModel, ParamVec, Responsibilities,
    StoppingRule, SufficientStats, VariantConfig,
};

fn pair(c: f64, s: f64, m: usize) -> GaussianMixture {
    GaussianMixture::new(fixtures::quantile_pair(c, s, m), 2).unwrap()
}

fn overlapping() -> GaussianMixture {
    GaussianMixture::new(fixtures::overlapping(), 2).unwrap()
}

fn poorly_separated() -> GaussianMixture {
    GaussianMixture::new(fixtures::poorly_separated(), 2).unwrap()
}

fn asym_start(m: &GaussianMixture, c: f64) -> ParamVec {
    m.params(&[0.45, 0.55], &[-1.5 * c, 0.7 * c], &[1.0, 1.2]).unwrap()
}

fn mle(m: &GaussianMixture, t0: &ParamVec) -> ParamVec {
    fit(m, VariantConfig::Em, t0, stop_all(100_000, 1e-14), 0).final_theta().clone()
}

fn free_path(m: &dyn LatentModel, tr: &FitTrace) -> Vec<Vec<f64>> {
    tr.thetas().map(|t| m.to_free(t)).collect()
}

// gem

#[test]
fn gem_with_many_passes_matches_the_m_step() {
    let m = d1();
    let t0 = d1_theta0(&m);
    let stats = m.e_stats(&t0).unwrap();
    let exact = em_map(&m, &t0).unwrap();
    let approx = gem_ascent(&m, &stats, &t0, 200).unwrap();
    assert!(approx.sup_dist(&exact) <= 1e-6);
}

#[test]
fn gem_leaves_a_fixed_point_alone() {
    let m = d1();
    let hat = mle(&m, &d1_theta0(&m));
    let stats = m.e_stats(&hat).unwrap();
    assert!(gem_ascent(&m, &stats, &hat, 1).unwrap().sup_dist(&hat) <= 1e-12);
    let tr = fit(&m, VariantConfig::Gem { ascent_passes: Some(1) }, &hat, StoppingRule::default(), 0);
    assert!(tr.final_theta().sup_dist(&hat) <= 1e-12);
}

#[test]
fn one_gem_pass_increases_q() {
    let m = d1();
    let t0 = d1_theta0(&m);
    let stats = m.e_stats(&t0).unwrap();
    let next = gem_ascent(&m, &stats, &t0, 1).unwrap();
    assert!(q_function(&m, &next, &t0).unwrap() > q_function(&m, &t0, &t0).unwrap());
}

// cem

#[test]
fn cem_with_held_weights_and_variances_is_k_means() {
    for (m, mu0) in [(d1(), [-3.0, 2.0]), (poorly_separated(), [-0.2, 0.1]), (overlapping(), [-2.0, 0.4])] {
        let t0 = m.params(&[0.5, 0.5], &mu0, &[1.0, 1.0]).unwrap();
        let cfg = VariantConfig::Cem { hold_weights: true, hold_dispersion: true };
        let tr = fit(&m, cfg, &t0, StoppingRule { max_iters: 50, ..Default::default() }, 0);
        let mut centroids = mu0.to_vec();
        let mut prev = t0.clone();
        for rec in &tr.records {
            let (assign, next) = kmeans_step(m.data(), &centroids);
            assert_eq!(m.classify(&prev), assign);
            centroids = next;
            // the model centres the data before averaging, so only D1 is exact to the bit
            let means = m.means(&rec.theta);
            for (a, b) in means.iter().zip(&centroids) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            if m.n_items() == 4 {
                assert_eq!(means, centroids);
            }
            assert_eq!(m.weights(&rec.theta), &[0.5, 0.5]);
            prev = rec.theta.clone();
        }
    }
}

#[test]
fn cem_on_hard_responsibilities_is_an_em_step() {
    let m = GaussianMixture::new(vec![-50.0, -49.0, 49.0, 50.0], 2).unwrap();
    let t0 = m.params(&[0.5, 0.5], &[-49.5, 49.5], &[0.25, 0.25]).unwrap();
    let r = m.responsibilities(&t0).unwrap();
    assert!(r.as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
    let cfg = VariantConfig::Cem { hold_weights: false, hold_dispersion: false };
    let stop = StoppingRule { max_iters: 1, ..Default::default() };
    let cem = fit(&m, cfg, &t0, stop, 0);
    let em = fit(&m, VariantConfig::Em, &t0, stop, 0);
    assert!(cem.final_theta().sup_dist(em.final_theta()) <= 1e-12);
}

#[test]
fn cem_does_not_beat_em_likelihood() {
    let m = d1();
    let t0 = d1_theta0(&m);
    let cem = fit(&m, VariantConfig::from_tag("cem").unwrap(), &t0, StoppingRule::default(), 0);
    let em = fit(&m, VariantConfig::Em, &t0, StoppingRule::default(), 0);
    assert!(cem.final_loglik() <= em.final_loglik() + 1e-9);
}

#[test]
fn cem_classification_likelihood_never_decreases() {
    let m = overlapping();
    let tr = fit(&m, VariantConfig::from_tag("cem").unwrap(), &asym_start(&m, 0.5), StoppingRule::default(), 0);
    let obj: Vec<f64> = tr.records.iter().map(|r| r.objective.unwrap()).collect();
    assert!(worst_drop(&obj) <= 1e-10);
}

#[test]
fn cem_empty_class_is_reported() {
    let m = d1();
    let t0 = m.params(&[0.5, 0.5], &[0.0, 100.0], &[1.0, 1.0]).unwrap();
    let tr = fit(&m, VariantConfig::from_tag("cem").unwrap(), &t0, StoppingRule::default(), 0);
    assert_eq!(tr.status, FitStatus::Diverged);
    assert!(tr.message.unwrap().contains("empty class"));
}

// aitken

#[test]
fn aitken_contracts_faster_than_em_near_the_optimum() {
    let m = poorly_separated();
    let hat = mle(&m, &asym_start(&m, 1.0));
    let v_hat = m.to_free(&hat);
    let start = m
        .params(
            &[0.47, 0.53],
            &[m.mean(&hat, 0) - 0.05, m.mean(&hat, 1) + 0.05],
            &[m.variance(&hat, 0) * 1.05, m.variance(&hat, 1) * 0.95],
        )
        .unwrap();
    let stop = stop_all(200, 1e-13);
    let em = fit(&m, VariantConfig::Em, &start, stop, 0);
    let ait = fit(&m, VariantConfig::Aitken, &start, stop, 0);
    let r_em = observed_rate(&free_path(&m, &em), &v_hat).unwrap();
    let r_ait = observed_rate(&free_path(&m, &ait), &v_hat).unwrap();
    assert!(r_ait < r_em, "aitken {r_ait} em {r_em}");
}

// aem

#[test]
fn aem_is_monotone_and_faster_when_clusters_overlap() {
    let m = poorly_separated();
    let t0 = asym_start(&m, 1.0);
    let aem = fit(&m, VariantConfig::from_tag("aem").unwrap(), &t0, StoppingRule::default(), 0);
    let em = fit(&m, VariantConfig::Em, &t0, StoppingRule::default(), 0);
    assert_eq!(aem.status, FitStatus::Converged);
    assert!(worst_drop(&aem.logliks()) <= 1e-10);
    assert!(aem.iterations() < em.iterations(), "aem {} em {}", aem.iterations(), em.iterations());
}

// ecm / ecme / sage

#[test]
fn ecm_chain_on_d1_never_lowers_q() {
    let m = d1();
    let groups = BlockPlan::Model.groups(m.layout()).unwrap();
    assert_eq!(groups.len(), 3);
    let (_, chain) = ecm_chain(&m, &d1_theta0(&m), &groups).unwrap();
    assert_eq!(chain.len(), 4);
    for w in chain.windows(2) {
        assert!(w[1] >= w[0]);
    }
}

#[test]
fn ecm_chain_in_reverse_order_never_lowers_q() {
    let m = overlapping();
    let groups = BlockPlan::Order(vec![2, 1, 0]).groups(m.layout()).unwrap();
    let (_, chain) = ecm_chain(&m, &asym_start(&m, 0.5), &groups).unwrap();
    for w in chain.windows(2) {
        assert!(w[1] >= w[0]);
    }
}

#[test]
fn ecm_and_em_agree_at_convergence() {
    let m = d1();
    let t0 = d1_theta0(&m);
    let ecm = fit(&m, VariantConfig::from_tag("ecm").unwrap(), &t0, StoppingRule::default(), 0);
    let em = fit(&m, VariantConfig::Em, &t0, StoppingRule::default(), 0);
    assert!((ecm.final_loglik() - em.final_loglik()).abs() <= 1e-6);
}

#[test]
fn ecme_without_newton_is_ecm() {
    let m = overlapping();
    let t0 = asym_start(&m, 0.5);
    let a = fit(&m, VariantConfig::Ecme { plan: BlockPlan::Model, newton: false }, &t0, StoppingRule::default(), 0);
    let b = fit(&m, VariantConfig::Ecm { plan: BlockPlan::Model }, &t0, StoppingRule::default(), 0);
    assert!(same_iterates(&a, &b));
}

#[test]
fn newton_step_vanishes_at_the_mle() {
    let m = overlapping();
    let hat = mle(&m, &asym_start(&m, 0.5));
    let step = ecme_newton(&m, &hat).unwrap();
    assert!(step.sup_dist(&hat) <= 1e-8);
}

#[test]
fn ecme_needs_no_more_iterations_than_em() {
    for m in [d1(), overlapping(), poorly_separated()] {
        let t0 = asym_start(&m, 1.0);
        let ecme = fit(&m, VariantConfig::from_tag("ecme").unwrap(), &t0, StoppingRule::default(), 0);
        let em = fit(&m, VariantConfig::Em, &t0, StoppingRule::default(), 0);
        assert!(ecme.iterations() <= em.iterations(), "ecme {} em {}", ecme.iterations(), em.iterations());
    }
}

#[test]
fn sage_cycles_never_lower_the_likelihood() {
    for m in [d1(), overlapping()] {
        let groups = BlockPlan::Model.groups(m.layout()).unwrap();
        let mut theta = asym_start(&m, 1.0);
        let mut prev = m.log_obs_lik(&theta);
        for _ in 0..30 {
            let (next, ls) = sage_sweep(&m, &theta, &groups).unwrap();
            for l in ls {
                assert!(l - prev >= -1e-10, "cycle delta {}", l - prev);
                prev = l;
            }
            theta = next;
        }
    }
}

// reductions

fn reductions(n: usize) -> Vec<VariantConfig> {
    vec![
        VariantConfig::Gem { ascent_passes: None },
        VariantConfig::Ecm { plan: BlockPlan::Single },
        VariantConfig::Sage { plan: BlockPlan::Single },
        VariantConfig::Aem { line_tol: 1e-6, max_bracket: 20, unit_step: true },
        VariantConfig::Sparse { tau: 0.0, refresh_period: None },
        VariantConfig::Sparse { tau: 0.0, refresh_period: Some(1) },
        VariantConfig::Incremental { batch: Some(n) },
        VariantConfig::PxEm { expansion: ExpansionKind::Null },
    ]
}

#[test]
fn degenerate_configurations_reproduce_em_bit_for_bit() {
    for m in [d1(), overlapping(), poorly_separated()] {
        let t0 = asym_start(&m, 1.0);
        let stop = StoppingRule { max_iters: 200, ..Default::default() };
        let em = fit(&m, VariantConfig::Em, &t0, stop, 0);
        for cfg in reductions(m.n_items()) {
            let tag = format!("{cfg:?}");
            assert!(same_iterates(&em, &fit(&m, cfg, &t0, stop, 0)), "{tag}");
        }
    }
}

// monotone family and fixed points

#[test]
fn likelihood_driven_variants_are_monotone() {
    for m in [d1(), overlapping(), poorly_separated()] {
        let t0 = asym_start(&m, 1.0);
        for tag in ["em", "gem", "aem", "ecm", "ecme", "sage", "px_em"] {
            let tr = fit(&m, VariantConfig::from_tag(tag).unwrap(), &t0, StoppingRule::default(), 0);
            assert!(worst_drop(&tr.logliks()) <= 1e-10, "{tag}");
        }
        let tr = fit(&m, VariantConfig::PxEm { expansion: ExpansionKind::Scale }, &t0, StoppingRule::default(), 0);
        assert!(worst_drop(&tr.logliks()) <= 1e-10, "px scale");
    }
}

#[test]
fn fixed_points_agree_on_d1() {
    let m = d1();
    let t0 = d1_theta0(&m);
    let stop = stop_all(10_000, 1e-10);
    let em = fit(&m, VariantConfig::Em, &t0, stop, 0);
    for tag in ["ecm", "ecme", "aem", "incremental"] {
        let tr = fit(&m, VariantConfig::from_tag(tag).unwrap(), &t0, stop, 0);
        assert!(tr.final_theta().sup_dist(em.final_theta()) <= 1e-5, "{tag}");
    }
}

// px-em

#[test]
fn scale_expansion_matches_em() {
    for m in [d1(), overlapping()] {
        let t0 = asym_start(&m, 1.0);
        let px = fit(&m, VariantConfig::PxEm { expansion: ExpansionKind::Scale }, &t0, StoppingRule::default(), 0);
        let em = fit(&m, VariantConfig::Em, &t0, StoppingRule::default(), 0);
        assert!((px.final_loglik() - em.final_loglik()).abs() <= 1e-6);
        assert!(px.iterations() <= em.iterations());
    }
}

#[test]
fn scale_expansion_is_rejected_for_poisson() {
    let m = emkit::PoissonMixture::new(vec![0, 1, 9, 11], 2).unwrap();
    let t0 = m.params(&[0.5, 0.5], &[1.0, 8.0]).unwrap();
    let cfg = VariantConfig::PxEm { expansion: ExpansionKind::Scale };
    assert!(matches!(emkit::run_fit(&m, &cfg, &t0, &StoppingRule::default(), 0), Err(EmError::Config(_))));
}

/// An expansion whose reduction forgets to rescale the variances.
struct Broken<'a>(&'a GaussianMixture);

impl ExpandedModel for Broken<'_> {
    fn base(&self) -> &dyn LatentModel {
        self.0
    }
    fn null_alpha(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn probe_alpha(&self) -> Vec<f64> {
        vec![2.0]
    }
    fn expanded_log_joint_row(&self, theta: &ParamVec, alpha: &[f64], item: usize, out: &mut [f64]) {
        let y = self.0.data()[item];
        for (k, o) in out.iter_mut().enumerate() {
            let (mu, var) = (self.0.mean(theta, k), self.0.variance(theta, k));
            *o = self.0.weights(theta)[k].ln() + normal_pdf(y, alpha[0] * mu, alpha[0] * alpha[0] * var).ln();
        }
    }
    fn expanded_m_step(&self, stats: &SufficientStats) -> emkit::Result<(ParamVec, Vec<f64>)> {
        Ok((self.0.m_step(stats)?, vec![1.0]))
    }
    fn reduce(&self, theta: &ParamVec, alpha: &[f64]) -> emkit::Result<ParamVec> {
        let mut v = theta.values().to_vec();
        v[2] *= alpha[0];
        v[4] *= alpha[0];
        theta.with_values(v)
    }
}

#[test]
fn inconsistent_expansion_fails_its_marginal_check() {
    let m = d1();
    assert!(matches!(verify_expansion(&Broken(&m), &d1_theta0(&m)), Err(EmError::Config(_))));
}

// incremental

#[test]
fn incremental_passes_keep_a_converged_solution() {
    let m = overlapping();
    let hat = mle(&m, &asym_start(&m, 0.5));
    for batch in [1, 7, 80] {
        let tr = fit(&m, VariantConfig::Incremental { batch: Some(batch) }, &hat, stop_all(40, 0.0), 0);
        assert!(tr.final_theta().sup_dist(&hat) <= 1e-8, "batch {batch}");
    }
}

#[test]
fn incremental_free_energy_never_decreases() {
    for batch in [1, 2, 3] {
        let m = d1();
        let t0 = d1_theta0(&m);
        let tr = fit(&m, VariantConfig::Incremental { batch: Some(batch) }, &t0, StoppingRule::default(), 0);
        let obj: Vec<f64> = tr.records.iter().map(|r| r.objective.unwrap()).collect();
        assert!(worst_drop(&obj) <= 1e-10, "batch {batch}");
        // the recorded objective is the free energy of the cached q at the new θ, which bounds L
        for (rec, &f) in tr.records.iter().zip(&obj) {
            assert!(f <= rec.loglik + 1e-10);
        }
    }
}

// sparse

#[test]
fn fully_frozen_q_converges_after_one_m_step() {
    let m = overlapping();
    let t0 = asym_start(&m, 0.5);
    let tr = fit(&m, VariantConfig::Sparse { tau: 1.0, refresh_period: None }, &t0, StoppingRule::default(), 0);
    let target = m.m_step(&m.e_stats(&t0).unwrap()).unwrap();
    assert_eq!(tr.status, FitStatus::Converged);
    assert_eq!(tr.iterations(), 2);
    assert!(tr.thetas().skip(1).all(|t| *t == target));
}

#[test]
fn sparse_saves_evaluations_on_separated_clusters() {
    let m = pair(10.0, 1.0, 20);
    let t0 = asym_start(&m, 10.0);
    let stop = StoppingRule::default();
    let em = fit(&m, VariantConfig::Em, &t0, stop, 0);
    let sparse = fit(&m, VariantConfig::from_tag("sparse").unwrap(), &t0, stop, 0);
    assert!((sparse.final_loglik() - em.final_loglik()).abs() <= 1e-4);
    let count = |t: &FitTrace| t.records.iter().map(|r| r.evaluations).sum::<u64>();
    let per_iter = |t: &FitTrace| count(t) as f64 / t.iterations() as f64;
    assert!(per_iter(&sparse) < per_iter(&em), "{} vs {}", per_iter(&sparse), per_iter(&em));
}

#[test]
fn sparse_free_energy_never_decreases_between_refreshes() {
    let m = overlapping();
    let t0 = asym_start(&m, 0.5);
    let cfg = VariantConfig::Sparse { tau: 0.2, refresh_period: Some(4) };
    let tr = fit(&m, cfg, &t0, StoppingRule { max_iters: 40, ..Default::default() }, 0);
    let obj: Vec<f64> = tr.records.iter().map(|r| r.objective.unwrap()).collect();
    for (n, w) in obj.windows(2).enumerate() {
        // record n+1 is iteration n+2; refreshes happen on iterations 1, 5, 9, ...
        let refresh = (n + 1) % 4 == 0;
        if !refresh {
            assert!(w[1] - w[0] >= -1e-10 * w[0].abs(), "iteration {}", n + 2);
        }
    }
}

#[test]
fn sparse_rejects_tau_outside_unit_interval() {
    let m = d1();
    let cfg = VariantConfig::Sparse { tau: 1.5, refresh_period: Some(5) };
    assert!(matches!(emkit::run_fit(&m, &cfg, &d1_theta0(&m), &StoppingRule::default(), 0), Err(EmError::Config(_))));
}

#[test]
fn free_energy_at_the_posterior_equals_the_likelihood() {
    let m = d1();
    let t = d1_theta0(&m);
    let q: Responsibilities = m.responsibilities(&t).unwrap();
    assert!((free_energy(&m, &t, &q).unwrap() - m.log_obs_lik(&t)).abs() <= 1e-12);
}
