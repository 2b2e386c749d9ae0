use std::path::Path;
use std::time::Instant;

use emkit::diagnostics::observed_rate;
use emkit::diagnostics::oracle::{
    brute_force_zoom, gaussian_default_grid, gaussian_shared_sd_map, poisson_default_grid, poisson_map,
};
use emkit::diagnostics::speed_matrix;
use emkit::fit::StopMode;
use emkit::variants::build_driver;
use emkit::{
    run_fit, run_fit_observed, FitStatus, FitTrace, ParamVec, StationaryEstimate, StoppingRule, VariantConfig,
};
use serde_json::{Map, Value};

use crate::config::{variant_options, InitSpec, Settings};
use crate::data::Model;
use crate::error::CliError;
use crate::output::{
    emit, fmt_f64, AxisDocument, BenchDocument, BenchRow, DiagnoseDocument, FitDocument, OracleDocument, SpeedSummary,
    StationaryBlock, TraceWriter,
};

/// Budget and tolerances of the reference run that locates `θ̂` for the observed rate.
const REFERENCE_TOL: f64 = 1e-14;
const REFERENCE_MIN_ITERS: usize = 10_000;

struct Outcome {
    trace: FitTrace,
    restart: usize,
}

fn failed(trace: &FitTrace) -> bool {
    matches!(trace.status, FitStatus::Diverged | FitStatus::InvalidParam)
}

/// Runs every start and keeps the highest final `L` among runs that did not
/// fail; ties go to the earlier start.
fn best_of_starts(model: &Model, settings: &Settings, variant: &VariantConfig) -> Result<Outcome, CliError> {
    let mut best: Option<Outcome> = None;
    for r in 0..settings.restarts {
        let start = model.start(settings, r)?;
        let trace = run_fit(model.as_dyn(), variant, &start, &settings.stop, settings.seed)?;
        let better = match &best {
            None => true,
            Some(b) if failed(&b.trace) => !failed(&trace),
            Some(b) => !failed(&trace) && trace.final_loglik() > b.trace.final_loglik(),
        };
        if better {
            best = Some(Outcome { trace, restart: r });
        }
    }
    Ok(best.expect("at least one start"))
}

/// Like [`best_of_starts`], streaming the chosen run to `trace_path`.
fn traced_fit(
    model: &Model,
    settings: &Settings,
    variant: &VariantConfig,
    trace_path: &Path,
) -> Result<Outcome, CliError> {
    let restart = if settings.restarts > 1 { best_of_starts(model, settings, variant)?.restart } else { 0 };
    let start = model.start(settings, restart)?;
    let names = model.as_dyn().layout().qualified_names();
    let mut writer = TraceWriter::create(trace_path, &names)?;
    let mut io_error = None;
    let trace = run_fit_observed(model.as_dyn(), variant, &start, &settings.stop, settings.seed, &mut |r| {
        if r.iter > 0 && io_error.is_none() {
            io_error = writer.row(r).err();
        }
    })?;
    if let Some(e) = io_error {
        return Err(CliError::Io(format!("cannot write {}: {e}", trace_path.display())));
    }
    Ok(Outcome { trace, restart })
}

fn speed_summary(model: &Model, theta: &ParamVec) -> SpeedSummary {
    match speed_matrix(model.as_dyn(), theta) {
        Ok(d) => SpeedSummary {
            error: None,
            predicted_rate: Some(d.predicted_rate),
            global_speed: Some(d.global_speed),
            eigenvalues: Some(d.eigenvalues),
            identity_residual: Some(d.identity_residual),
        },
        Err(e) => SpeedSummary {
            error: Some(e.to_string()),
            predicted_rate: None,
            global_speed: None,
            eigenvalues: None,
            identity_residual: None,
        },
    }
}

fn status_error(trace: &FitTrace) -> Result<(), CliError> {
    if failed(trace) {
        return Err(CliError::Diverged(format!(
            "{} ({})",
            trace.status.as_str(),
            trace.message.as_deref().unwrap_or("no message")
        )));
    }
    Ok(())
}

pub fn fit(settings: &Settings) -> Result<(), CliError> {
    let model = Model::load(settings)?;
    let variant = &settings.variants[0];
    let outcome = match &settings.trace {
        Some(path) => traced_fit(&model, settings, variant, path)?,
        None => best_of_starts(&model, settings, variant)?,
    };
    let trace = &outcome.trace;
    let stationary = if variant.is_stochastic() {
        StationaryEstimate::from_trace(trace, settings.burn_in).ok().map(|e| StationaryBlock {
            burn_in: e.burn_in,
            samples: e.samples,
            mean: e.mean,
            sd: e.sd,
        })
    } else {
        None
    };
    let diagnostics = settings.diagnostics.then(|| speed_summary(&model, trace.final_theta()));
    let (initial_loglik, final_loglik) = FitDocument::loglik(trace.initial.loglik, trace.final_loglik());
    let doc = FitDocument {
        command: "fit".into(),
        config: settings.echo(Some(variant)),
        status: trace.status.as_str().into(),
        message: trace.message.clone(),
        restart: outcome.restart,
        iterations: trace.iterations(),
        initial_loglik,
        final_loglik,
        names: model.as_dyn().layout().qualified_names(),
        theta: trace.final_theta().values().to_vec(),
        trace: settings.trace.as_ref().map(|p| p.display().to_string()),
        stationary,
        diagnostics,
    };
    emit(&doc, settings.out.as_deref())?;
    status_error(trace)
}

/// Contraction factor of a deterministic run towards the end point of a
/// much tighter run of the same variant from the same start.
fn bench_rate(model: &Model, settings: &Settings, variant: &VariantConfig, outcome: &Outcome) -> Option<f64> {
    if variant.is_stochastic() || failed(&outcome.trace) {
        return None;
    }
    let tight = StoppingRule {
        max_iters: (10 * settings.stop.max_iters).max(REFERENCE_MIN_ITERS),
        tol_param: REFERENCE_TOL,
        tol_loglik: REFERENCE_TOL,
        mode: StopMode::AllOf,
    };
    let m = model.as_dyn();
    let reference = run_fit(m, variant, &outcome.trace.initial.theta, &tight, settings.seed).ok()?;
    let v_hat = m.to_free(reference.final_theta());
    let path: Vec<Vec<f64>> = outcome.trace.thetas().map(|t| m.to_free(t)).collect();
    observed_rate(&path, &v_hat)
}

fn options_map(variant: &VariantConfig) -> Map<String, Value> {
    variant_options(variant).into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect()
}

/// Outcome, wall time in milliseconds and observed rate of one bench member.
type BenchRun = (Outcome, f64, Option<f64>);

pub fn bench(settings: &Settings) -> Result<(), CliError> {
    let model = Model::load(settings)?;
    // every member must be runnable before any of them starts
    let starts: Vec<ParamVec> = (0..settings.restarts).map(|r| model.start(settings, r)).collect::<Result<_, _>>()?;
    for v in &settings.variants {
        build_driver(model.as_dyn(), v, &starts[0])
            .map_err(|e| CliError::Config(format!("variant `{}`: {}", v.tag(), CliError::from(e).detail())))?;
    }
    let results: Vec<Result<BenchRun, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = settings
            .variants
            .iter()
            .map(|v| {
                let model = &model;
                s.spawn(move || {
                    let clock = Instant::now();
                    let outcome = best_of_starts(model, settings, v)?;
                    let wall = clock.elapsed().as_secs_f64();
                    let rate = bench_rate(model, settings, v, &outcome);
                    Ok((outcome, wall, rate))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });

    let mut rows = Vec::new();
    println!(
        "{:<12} {:>10} {:<14} {:>24} {:>10} {:>24}",
        "variant", "iterations", "status", "final_L", "wall_ms", "observed_rate"
    );
    for (v, res) in settings.variants.iter().zip(results) {
        let (outcome, wall, rate) = res?;
        let tr = &outcome.trace;
        println!(
            "{:<12} {:>10} {:<14} {:>24} {:>10.3} {:>24}",
            v.tag(),
            tr.iterations(),
            tr.status.as_str(),
            fmt_f64(tr.final_loglik()),
            wall * 1e3,
            rate.map_or("-".into(), fmt_f64),
        );
        rows.push(BenchRow {
            variant: v.tag().into(),
            options: options_map(v),
            status: tr.status.as_str().into(),
            restart: outcome.restart,
            iterations: tr.iterations(),
            final_loglik: FitDocument::loglik(0.0, tr.final_loglik()).1,
            observed_rate: rate,
        });
    }
    if let Some(out) = &settings.out {
        let doc = BenchDocument { command: "bench".into(), config: settings.echo(None), rows };
        emit(&doc, Some(out))?;
    }
    Ok(())
}

/// `θ̂` comes from a fit result document or from an explicit start.
pub fn diagnose(settings: &Settings) -> Result<(), CliError> {
    let model = Model::load(settings)?;
    let m = model.as_dyn();
    let (theta, status) = match (&settings.result, &settings.init) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read result {}: {e}", path.display())))?;
            let doc = FitDocument::parse(&text)?;
            if doc.names != m.layout().qualified_names() {
                return Err(CliError::Config(format!(
                    "result {} does not match the configured model ({} components, {})",
                    path.display(),
                    settings.components,
                    settings.family.as_str()
                )));
            }
            let theta = ParamVec::new(doc.theta, m.layout().clone())
                .map_err(|e| CliError::Config(format!("result parameters: {e}")))?;
            (theta, Some(doc.status))
        }
        (None, InitSpec::Explicit { .. }) => (model.start(settings, 0)?, None),
        (None, _) => {
            return Err(CliError::Config("diagnose needs `--result PATH` or `init = explicit` with a fitted θ".into()))
        }
    };
    m.check(&theta).map_err(|e| CliError::Config(format!("θ: {e}")))?;
    let d = speed_matrix(m, &theta).map_err(|e| match (e, status) {
        (emkit::EmError::Config(msg), Some(s)) if s != "converged" => CliError::Config(format!(
            "{msg}; the fit ended as {s}, so raise max_iters or lower tol_param and tol_loglik"
        )),
        (emkit::EmError::Config(msg), _) => {
            CliError::Config(format!("{msg}; lower tol_param and tol_loglik or use stop_mode = all"))
        }
        (other, _) => other.into(),
    })?;
    let doc = DiagnoseDocument {
        command: "diagnose".into(),
        config: settings.echo(None),
        names: m.layout().qualified_names(),
        theta: theta.values().to_vec(),
        free_names: d.names.clone(),
        residual: d.residual,
        speed_matrix: d.s.row_iter().map(|r| r.iter().copied().collect()).collect(),
        eigenvalues: d.eigenvalues.clone(),
        global_speed: d.global_speed,
        predicted_rate: d.predicted_rate,
        jacobian_radius: d.jacobian_radius,
        jacobian_gap: d.jacobian_gap,
        f_post_min_eigenvalue: d.f_post_min_eigenvalue,
        f_post_psd: d.f_post_is_psd(1e-6),
        identity_residual: d.identity_residual,
    };
    emit(&doc, settings.out.as_deref())
}

pub fn oracle(settings: &Settings) -> Result<(), CliError> {
    let model = Model::load(settings)?;
    let result = match &model {
        Model::Gaussian(g) => brute_force_zoom(
            g,
            &gaussian_default_grid(g, settings.grid_points),
            &gaussian_shared_sd_map(g),
            settings.zoom_stages,
        ),
        Model::Poisson(p) => {
            brute_force_zoom(p, &poisson_default_grid(p, settings.grid_points), &poisson_map(p), settings.zoom_stages)
        }
    }?;
    let mut config = settings.echo(None);
    config.insert("grid_points".into(), Value::String(settings.grid_points.to_string()));
    config.insert("zoom_stages".into(), Value::String(settings.zoom_stages.to_string()));
    let doc = OracleDocument {
        command: "oracle".into(),
        config,
        axes: result
            .grid
            .axes
            .iter()
            .map(|a| AxisDocument { name: a.name.clone(), lo: a.lo, hi: a.hi, points: a.points })
            .collect(),
        point: result.point.clone(),
        names: model.as_dyn().layout().qualified_names(),
        theta: result.theta.values().to_vec(),
        max_loglik: result.max_loglik,
        evaluated: result.evaluated,
    };
    emit(&doc, settings.out.as_deref())
}
