//! Result documents (JSON with every float at 17 significant digits) and
//! streamed CSV traces.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use emkit::IterRecord;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{Map, Value};

use crate::error::CliError;

/// `x` with 17 significant digits, enough to recover every `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty printer that writes floats through [`fmt_f64`].
struct Sig17(PrettyFormatter<'static>);

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    doc.serialize(&mut ser).expect("documents serialize to memory");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// Writes `doc` to `out`, or to stdout when no path is given.
pub fn emit<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = to_json(doc);
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Non-finite values are stored as `null`.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryBlock {
    pub burn_in: usize,
    pub samples: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub command: String,
    pub config: Map<String, Value>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Index of the start that produced this fit.
    pub restart: usize,
    pub iterations: usize,
    pub initial_loglik: Option<f64>,
    pub final_loglik: Option<f64>,
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    /// Trace file path; it holds one row per iteration, starting at iteration 1.
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<SpeedSummary>,
}

impl FitDocument {
    pub fn loglik(initial: f64, last: f64) -> (Option<f64>, Option<f64>) {
        (finite(initial), finite(last))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: FitDocument =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed result document: {e}")))?;
        if doc.command != "fit" {
            return Err(CliError::Config(format!("result document comes from `{}`, not fit", doc.command)));
        }
        Ok(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub options: Map<String, Value>,
    pub status: String,
    pub restart: usize,
    pub iterations: usize,
    pub final_loglik: Option<f64>,
    pub observed_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDocument {
    pub command: String,
    pub config: Map<String, Value>,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseDocument {
    pub command: String,
    pub config: Map<String, Value>,
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    /// Names of the free coordinates indexing `speed_matrix` and `eigenvalues`.
    pub free_names: Vec<String>,
    pub residual: f64,
    pub speed_matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub global_speed: f64,
    pub predicted_rate: f64,
    pub jacobian_radius: f64,
    pub jacobian_gap: f64,
    pub f_post_min_eigenvalue: f64,
    pub f_post_psd: bool,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisDocument {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDocument {
    pub command: String,
    pub config: Map<String, Value>,
    /// Axes of the last (finest) grid searched.
    pub axes: Vec<AxisDocument>,
    pub point: Vec<f64>,
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub max_loglik: f64,
    pub evaluated: u64,
}

/// Comma-separated trace: a header row, then one row per iteration written
/// with a single call so every prefix of the file is a valid table.
pub struct TraceWriter {
    file: File,
}

impl TraceWriter {
    pub fn create(path: &Path, names: &[String]) -> Result<Self, CliError> {
        let mut file =
            File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        file.write_all(format!("iter,L,{}\n", names.join(",")).as_bytes())?;
        Ok(Self { file })
    }

    pub fn row(&mut self, record: &IterRecord) -> io::Result<()> {
        let mut line = format!("{},{}", record.iter, fmt_f64(record.loglik));
        for v in record.theta.values() {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}
