//! Run configuration: a flat `key = value` file merged with command-line
//! overrides, parsed into raw strings first and validated second.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use emkit::fit::StopMode;
use emkit::variants::px::ExpansionKind;
use emkit::{BlockPlan, GammaSchedule, KernelKind, SampleSchedule, StoppingRule, VariantConfig};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Environment variable that replaces the default seed of 0.
pub const SEED_ENV: &str = "EMKIT_SEED";

const GENERAL_KEYS: [&str; 23] = [
    "family",
    "components",
    "data",
    "variant",
    "variants",
    "seed",
    "max_iters",
    "tol_param",
    "tol_loglik",
    "stop_mode",
    "init",
    "init_weights",
    "init_means",
    "init_variances",
    "init_rates",
    "restarts",
    "burn_in",
    "diagnostics",
    "out",
    "trace",
    "result",
    "grid_points",
    "zoom_stages",
];

const VARIANT_KEYS: [&str; 15] = [
    "gem_passes",
    "cem_hold_weights",
    "cem_hold_dispersion",
    "aem_line_tol",
    "aem_max_bracket",
    "aem_unit_step",
    "blocks",
    "ecme_newton",
    "px_expansion",
    "incremental_batch",
    "sparse_tau",
    "sparse_period",
    "gamma",
    "samples",
    "kernel",
];

fn is_known(key: &str) -> bool {
    GENERAL_KEYS.contains(&key) || VARIANT_KEYS.contains(&key)
}

/// Unvalidated key/value pairs; a later `set` replaces an earlier one.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        if !is_known(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses `KEY=VALUE` as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(k, v)
    }

    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(k, v).map_err(|e| CliError::Config(format!("{origin}:{}: {}", n + 1, e.detail())))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text, &path.display().to_string())
    }

    /// Loads a config echo (string values) from a result document.
    pub fn merge_echo(&mut self, echo: &Map<String, Value>) -> Result<(), CliError> {
        for (k, v) in echo {
            let v = v.as_str().ok_or_else(|| CliError::Config(format!("echoed key `{k}` is not a string")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Poisson,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
        }
    }
}

/// Where the first start of a fit comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Equal weights, locations at evenly spaced sample quantiles.
    Quantile,
    /// Random weights and locations drawn from the init substream.
    Random,
    /// Weights plus means and variances (Gaussian) or rates (Poisson).
    Explicit { weights: Vec<f64>, locations: Vec<f64>, variances: Vec<f64> },
}

/// Which subcommand a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Bench,
    Diagnose,
    Oracle,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub family: Family,
    pub components: usize,
    pub data: String,
    pub variants: Vec<VariantConfig>,
    pub seed: u64,
    pub stop: StoppingRule,
    pub init: InitSpec,
    pub restarts: usize,
    pub burn_in: Option<usize>,
    pub diagnostics: bool,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub grid_points: usize,
    pub zoom_stages: usize,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    let x: f64 = parse(key, value)?;
    if !x.is_finite() {
        return Err(CliError::Config(format!("`{key}`: `{value}` is not finite")));
    }
    Ok(x)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_gamma(value: &str) -> Result<GammaSchedule, CliError> {
    let (kind, rest) = value.split_once(':').unwrap_or((value, ""));
    Ok(match kind {
        "harmonic" if rest.is_empty() => GammaSchedule::Harmonic,
        "constant" => GammaSchedule::Constant(parse_f64("gamma", rest)?),
        "power" => {
            let (offset, exponent) = rest
                .split_once(':')
                .ok_or_else(|| CliError::Config("`gamma`: expected power:OFFSET:EXPONENT".into()))?;
            GammaSchedule::Power { offset: parse("gamma", offset)?, exponent: parse_f64("gamma", exponent)? }
        }
        "table" => GammaSchedule::Table(parse_f64_list("gamma", rest)?),
        _ => return Err(CliError::Config(format!("`gamma`: unknown schedule `{value}`"))),
    })
}

fn render_gamma(g: &GammaSchedule) -> String {
    match g {
        GammaSchedule::Harmonic => "harmonic".into(),
        GammaSchedule::Constant(x) => format!("constant:{x}"),
        GammaSchedule::Power { offset, exponent } => format!("power:{offset}:{exponent}"),
        GammaSchedule::Table(v) => format!("table:{}", join(v)),
    }
}

fn parse_samples(value: &str) -> Result<SampleSchedule, CliError> {
    let (kind, rest) = value.split_once(':').unwrap_or((value, ""));
    Ok(match kind {
        "quadratic" if rest.is_empty() => SampleSchedule::Quadratic,
        "constant" => SampleSchedule::Constant(parse("samples", rest)?),
        "table" => SampleSchedule::Table(parse_list("samples", rest)?),
        _ => return Err(CliError::Config(format!("`samples`: unknown schedule `{value}`"))),
    })
}

fn render_samples(s: &SampleSchedule) -> String {
    match s {
        SampleSchedule::Quadratic => "quadratic".into(),
        SampleSchedule::Constant(m) => format!("constant:{m}"),
        SampleSchedule::Table(v) => format!("table:{}", join(v)),
    }
}

fn parse_kernel(value: &str) -> Result<KernelKind, CliError> {
    match value.split_once(':') {
        None if value == "exact" => Ok(KernelKind::Exact),
        Some(("mh", sweeps)) => Ok(KernelKind::MetropolisHastings { sweeps: parse("kernel", sweeps)? }),
        _ => Err(CliError::Config(format!("`kernel`: expected exact or mh:SWEEPS, got `{value}`"))),
    }
}

fn render_kernel(k: &KernelKind) -> String {
    match k {
        KernelKind::Exact => "exact".into(),
        KernelKind::MetropolisHastings { sweeps } => format!("mh:{sweeps}"),
    }
}

fn parse_plan(value: &str) -> Result<BlockPlan, CliError> {
    Ok(match value {
        "model" => BlockPlan::Model,
        "single" => BlockPlan::Single,
        order => BlockPlan::Order(parse_list("blocks", order)?),
    })
}

fn render_plan(p: &BlockPlan) -> String {
    match p {
        BlockPlan::Model => "model".into(),
        BlockPlan::Single => "single".into(),
        BlockPlan::Order(v) => join(v),
    }
}

fn parse_expansion(value: &str) -> Result<ExpansionKind, CliError> {
    match value {
        "null" => Ok(ExpansionKind::Null),
        "scale" => Ok(ExpansionKind::Scale),
        _ => Err(CliError::Config(format!("`px_expansion`: expected null or scale, got `{value}`"))),
    }
}

fn render_expansion(e: &ExpansionKind) -> String {
    match e {
        ExpansionKind::Null => "null".into(),
        ExpansionKind::Scale => "scale".into(),
    }
}

/// Effective options of a variant as `(key, value)` pairs, in a fixed order.
pub fn variant_options(cfg: &VariantConfig) -> Vec<(&'static str, String)> {
    match cfg {
        VariantConfig::Em | VariantConfig::Aitken | VariantConfig::Sem | VariantConfig::Da => vec![],
        VariantConfig::Gem { ascent_passes } => {
            vec![("gem_passes", ascent_passes.map_or("exact".into(), |p| p.to_string()))]
        }
        VariantConfig::Cem { hold_weights, hold_dispersion } => {
            vec![("cem_hold_weights", hold_weights.to_string()), ("cem_hold_dispersion", hold_dispersion.to_string())]
        }
        VariantConfig::Aem { line_tol, max_bracket, unit_step } => vec![
            ("aem_line_tol", line_tol.to_string()),
            ("aem_max_bracket", max_bracket.to_string()),
            ("aem_unit_step", unit_step.to_string()),
        ],
        VariantConfig::Ecm { plan } | VariantConfig::Sage { plan } => vec![("blocks", render_plan(plan))],
        VariantConfig::Ecme { plan, newton } => {
            vec![("blocks", render_plan(plan)), ("ecme_newton", newton.to_string())]
        }
        VariantConfig::PxEm { expansion } => vec![("px_expansion", render_expansion(expansion))],
        VariantConfig::Incremental { batch } => {
            vec![("incremental_batch", batch.map_or("auto".into(), |b| b.to_string()))]
        }
        VariantConfig::Sparse { tau, refresh_period } => vec![
            ("sparse_tau", tau.to_string()),
            ("sparse_period", refresh_period.map_or("never".into(), |p| p.to_string())),
        ],
        VariantConfig::Saem { gamma } => vec![("gamma", render_gamma(gamma))],
        VariantConfig::Mcem { samples } => vec![("samples", render_samples(samples))],
        VariantConfig::Saem2 { gamma, samples, kernel } => vec![
            ("gamma", render_gamma(gamma)),
            ("samples", render_samples(samples)),
            ("kernel", render_kernel(kernel)),
        ],
    }
}

/// Builds a variant from its tag and whichever of its options `raw` sets.
pub fn variant_from_raw(tag: &str, raw: &RawConfig) -> Result<VariantConfig, CliError> {
    let mut cfg = VariantConfig::from_tag(tag).map_err(|_| {
        CliError::Config(format!(
            "`variant`: unknown variant `{tag}`; expected one of {}",
            VariantConfig::TAGS.join(", ")
        ))
    })?;
    let get = |k: &str| raw.get(k);
    match &mut cfg {
        VariantConfig::Gem { ascent_passes } => {
            if let Some(v) = get("gem_passes") {
                *ascent_passes = if v == "exact" { None } else { Some(parse("gem_passes", v)?) };
            }
        }
        VariantConfig::Cem { hold_weights, hold_dispersion } => {
            if let Some(v) = get("cem_hold_weights") {
                *hold_weights = parse_bool("cem_hold_weights", v)?;
            }
            if let Some(v) = get("cem_hold_dispersion") {
                *hold_dispersion = parse_bool("cem_hold_dispersion", v)?;
            }
        }
        VariantConfig::Aem { line_tol, max_bracket, unit_step } => {
            if let Some(v) = get("aem_line_tol") {
                *line_tol = parse_f64("aem_line_tol", v)?;
            }
            if let Some(v) = get("aem_max_bracket") {
                *max_bracket = parse("aem_max_bracket", v)?;
            }
            if let Some(v) = get("aem_unit_step") {
                *unit_step = parse_bool("aem_unit_step", v)?;
            }
        }
        VariantConfig::Ecm { plan } | VariantConfig::Sage { plan } => {
            if let Some(v) = get("blocks") {
                *plan = parse_plan(v)?;
            }
        }
        VariantConfig::Ecme { plan, newton } => {
            if let Some(v) = get("blocks") {
                *plan = parse_plan(v)?;
            }
            if let Some(v) = get("ecme_newton") {
                *newton = parse_bool("ecme_newton", v)?;
            }
        }
        VariantConfig::PxEm { expansion } => {
            if let Some(v) = get("px_expansion") {
                *expansion = parse_expansion(v)?;
            }
        }
        VariantConfig::Incremental { batch } => {
            if let Some(v) = get("incremental_batch") {
                *batch = if v == "auto" { None } else { Some(parse("incremental_batch", v)?) };
            }
        }
        VariantConfig::Sparse { tau, refresh_period } => {
            if let Some(v) = get("sparse_tau") {
                *tau = parse_f64("sparse_tau", v)?;
            }
            if let Some(v) = get("sparse_period") {
                *refresh_period = if v == "never" { None } else { Some(parse("sparse_period", v)?) };
            }
        }
        VariantConfig::Saem { gamma } => {
            if let Some(v) = get("gamma") {
                *gamma = parse_gamma(v)?;
            }
        }
        VariantConfig::Mcem { samples } => {
            if let Some(v) = get("samples") {
                *samples = parse_samples(v)?;
            }
        }
        VariantConfig::Saem2 { gamma, samples, kernel } => {
            if let Some(v) = get("gamma") {
                *gamma = parse_gamma(v)?;
            }
            if let Some(v) = get("samples") {
                *samples = parse_samples(v)?;
            }
            if let Some(v) = get("kernel") {
                *kernel = parse_kernel(v)?;
            }
        }
        VariantConfig::Em | VariantConfig::Aitken | VariantConfig::Sem | VariantConfig::Da => {}
    }
    cfg.validate().map_err(|e| CliError::Config(format!("variant `{tag}`: {e}")))?;
    Ok(cfg)
}

fn seed_default() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}: cannot parse `{v}` as a seed"))),
        Err(_) => Ok(0),
    }
}

impl Settings {
    pub fn from_raw(raw: &RawConfig, command: Command) -> Result<Self, CliError> {
        let family = match raw.get("family").unwrap_or("gaussian") {
            "gaussian" => Family::Gaussian,
            "poisson" => Family::Poisson,
            other => return Err(CliError::Config(format!("`family`: expected gaussian or poisson, got `{other}`"))),
        };
        let components: usize = raw.get("components").map_or(Ok(2), |v| parse("components", v))?;
        if components == 0 {
            return Err(CliError::Config("`components`: must be at least 1".into()));
        }
        let data = raw.get("data").ok_or_else(|| CliError::Config("`data`: no data file given".into()))?.to_string();

        let tags: Vec<String> = match (command, raw.get("variants")) {
            (Command::Bench, Some(list)) => list.split(',').map(|s| s.trim().to_string()).collect(),
            (Command::Bench, None) | (Command::Fit, _) => vec![raw.get("variant").unwrap_or("em").to_string()],
            _ => vec![],
        };
        if command == Command::Fit && raw.get("variants").is_some() {
            return Err(CliError::Config("`variants`: only bench runs several variants; use `variant`".into()));
        }
        if tags.iter().any(String::is_empty) {
            return Err(CliError::Config("`variants`: empty variant name".into()));
        }
        let mut variants = Vec::with_capacity(tags.len());
        for tag in &tags {
            if variants.iter().any(|v: &VariantConfig| v.tag() == tag) {
                return Err(CliError::Config(format!("`variants`: `{tag}` listed twice")));
            }
            variants.push(variant_from_raw(tag, raw)?);
        }

        let seed = match raw.get("seed") {
            Some(v) => parse("seed", v)?,
            None => seed_default()?,
        };
        let defaults = StoppingRule::default();
        let max_iters = raw.get("max_iters").map_or(Ok(defaults.max_iters), |v| parse("max_iters", v))?;
        let tol_param = raw.get("tol_param").map_or(Ok(defaults.tol_param), |v| parse_f64("tol_param", v))?;
        let tol_loglik = raw.get("tol_loglik").map_or(Ok(defaults.tol_loglik), |v| parse_f64("tol_loglik", v))?;
        let mode = match raw.get("stop_mode").unwrap_or("any") {
            "any" => StopMode::AnyOf,
            "all" => StopMode::AllOf,
            other => return Err(CliError::Config(format!("`stop_mode`: expected any or all, got `{other}`"))),
        };
        let stop = StoppingRule::new(max_iters, tol_param, tol_loglik, mode)
            .map_err(|e| CliError::Config(format!("stopping rule: {e}")))?;

        let init = match raw.get("init").unwrap_or("quantile") {
            "quantile" => InitSpec::Quantile,
            "random" => InitSpec::Random,
            "explicit" => {
                let need = |k: &str| {
                    raw.get(k)
                        .ok_or_else(|| CliError::Config(format!("`{k}`: required when init = explicit")))
                        .and_then(|v| parse_f64_list(k, v))
                };
                let weights = need("init_weights")?;
                let (locations, variances) = match family {
                    Family::Gaussian => (need("init_means")?, need("init_variances")?),
                    Family::Poisson => (need("init_rates")?, vec![]),
                };
                InitSpec::Explicit { weights, locations, variances }
            }
            other => {
                return Err(CliError::Config(format!("`init`: expected quantile, random or explicit, got `{other}`")))
            }
        };
        let restarts: usize = raw.get("restarts").map_or(Ok(1), |v| parse("restarts", v))?;
        if restarts == 0 {
            return Err(CliError::Config("`restarts`: must be at least 1".into()));
        }
        let burn_in = match raw.get("burn_in") {
            None | Some("auto") => None,
            Some(v) => Some(parse("burn_in", v)?),
        };
        if let Some(b) = burn_in {
            if b >= max_iters {
                return Err(CliError::Config(format!(
                    "`burn_in`: {b} leaves no samples out of {max_iters} iterations"
                )));
            }
        }
        let diagnostics = raw.get("diagnostics").map_or(Ok(false), |v| parse_bool("diagnostics", v))?;
        let grid_points: usize = raw.get("grid_points").map_or(Ok(21), |v| parse("grid_points", v))?;
        if grid_points < 2 {
            return Err(CliError::Config("`grid_points`: must be at least 2".into()));
        }
        let zoom_stages = raw.get("zoom_stages").map_or(Ok(4), |v| parse("zoom_stages", v))?;

        let settings = Settings {
            family,
            components,
            data,
            variants,
            seed,
            stop,
            init,
            restarts,
            burn_in,
            diagnostics,
            out: raw.get("out").map(PathBuf::from),
            trace: raw.get("trace").map(PathBuf::from),
            result: raw.get("result").map(PathBuf::from),
            grid_points,
            zoom_stages,
        };
        settings.check_relevance(raw, command)?;
        Ok(settings)
    }

    /// Rejects keys that the chosen command, family or variants would ignore.
    fn check_relevance(&self, raw: &RawConfig, command: Command) -> Result<(), CliError> {
        let runs = matches!(command, Command::Fit | Command::Bench);
        let explicit = matches!(self.init, InitSpec::Explicit { .. });
        let stochastic = self.variants.iter().any(VariantConfig::is_stochastic);
        for key in raw.keys() {
            let why = match key {
                "init_weights" | "init_means" | "init_variances" | "init_rates" if !explicit => {
                    Some("only applies with init = explicit".to_string())
                }
                "init_means" | "init_variances" if self.family == Family::Poisson => {
                    Some("does not apply to the poisson family; use init_rates".to_string())
                }
                "init_rates" if self.family == Family::Gaussian => {
                    Some("does not apply to the gaussian family; use init_means and init_variances".to_string())
                }
                "burn_in" if runs && !stochastic => Some("only applies to stochastic variants".to_string()),
                "trace" | "diagnostics" if command != Command::Fit => Some("only applies to fit".to_string()),
                "result" if command != Command::Diagnose => Some("only applies to diagnose".to_string()),
                "grid_points" | "zoom_stages" if command != Command::Oracle => {
                    Some("only applies to oracle".to_string())
                }
                k if runs && VARIANT_KEYS.contains(&k) => {
                    let used = self.variants.iter().any(|v| variant_options(v).iter().any(|(o, _)| *o == k));
                    (!used).then(|| {
                        let tags: Vec<&str> = self.variants.iter().map(VariantConfig::tag).collect();
                        format!("does not apply to variant {}", tags.join(", "))
                    })
                }
                _ => None,
            };
            if let Some(why) = why {
                return Err(CliError::Config(format!("`{key}`: {why}")));
            }
        }
        Ok(())
    }

    /// Keys and values that reproduce a run of `variant` exactly.
    pub fn echo(&self, variant: Option<&VariantConfig>) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), Value::String(v));
        };
        put("family", self.family.as_str().into());
        put("components", self.components.to_string());
        put("data", self.data.clone());
        if let Some(v) = variant {
            put("variant", v.tag().into());
        }
        put("seed", self.seed.to_string());
        put("max_iters", self.stop.max_iters.to_string());
        put("tol_param", self.stop.tol_param.to_string());
        put("tol_loglik", self.stop.tol_loglik.to_string());
        put("stop_mode", if self.stop.mode == StopMode::AllOf { "all" } else { "any" }.into());
        match &self.init {
            InitSpec::Quantile => put("init", "quantile".into()),
            InitSpec::Random => put("init", "random".into()),
            InitSpec::Explicit { weights, locations, variances } => {
                put("init", "explicit".into());
                put("init_weights", join(weights));
                match self.family {
                    Family::Gaussian => {
                        put("init_means", join(locations));
                        put("init_variances", join(variances));
                    }
                    Family::Poisson => put("init_rates", join(locations)),
                }
            }
        }
        put("restarts", self.restarts.to_string());
        if let Some(v) = variant {
            if v.is_stochastic() {
                put("burn_in", self.burn_in.map_or("auto".into(), |b| b.to_string()));
            }
            for (k, val) in variant_options(v) {
                put(k, val);
            }
        }
        m
    }
}
