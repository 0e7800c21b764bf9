//! Command pipelines: build the model for a configuration, evaluate it, and
//! write records, tables and figures. Results are memoized in the cache by the
//! hash of their inputs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cfb_core::effective::{
    build_effective_model, effective_cooperativity, effective_noise_fields, effective_params, enhancement_threshold,
};
use cfb_core::entanglement::run_protocol;
use cfb_core::optimize::{trace_to_csv, Auxiliary, CoolingScenario, Knob, Objective, OptProblem};
use cfb_core::spectral::{
    lyapunov_phonon_occupation, phonon_occupation_with, spectrum, stability_check, QuadratureOptions,
};
use cfb_core::{build_bare_om, build_cavity_feedback, build_mirror_feedback, LinearDelayModel};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::cache::Cache;
use crate::config::{knob_column, knob_scale, ScenarioConfig, SchemeKind, SweepParam};
use crate::error::{CliError, Result};
use crate::export::{write_atomic, write_table, Cell, Table, SCHEMA_VERSION};
use crate::plot::{self, PlotSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where results go and whether the cache is consulted.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub cache: Option<Cache>,
}

/// What a command produced: the record file and whether it came from the cache.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: PathBuf,
    pub cache_hit: bool,
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Record(e.to_string()))
}

fn pretty(v: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Record(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn config_value(cfg: &ScenarioConfig) -> Result<Value> {
    to_value(cfg)
}

/// Cache entry of a single-scenario command: the record plus side files.
struct Entry {
    record: Value,
    files: BTreeMap<String, String>,
}

impl Context {
    /// Looks `key` up in the cache (or computes it), then writes the record as
    /// `<kind>.json` and every side file into the output directory.
    fn emit(&self, kind: &str, cfg: &ScenarioConfig, compute: impl FnOnce() -> Result<Entry>) -> Result<Outcome> {
        let key = json!({
            "kind": kind,
            "tool_version": TOOL_VERSION,
            "config": config_value(cfg)?,
        });
        let hash = crate::cache::scenario_hash(&key);
        let build = |hash: &str| -> Result<Value> {
            let start = Instant::now();
            let entry = compute()?;
            let mut record = Map::new();
            record.insert("schema_version".into(), json!(SCHEMA_VERSION));
            record.insert("tool_version".into(), json!(TOOL_VERSION));
            record.insert("kind".into(), json!(kind));
            record.insert("hash".into(), json!(hash));
            record.insert("config".into(), config_value(cfg)?);
            if let Value::Object(fields) = entry.record {
                record.extend(fields);
            }
            record.insert("timing_s".into(), json!(start.elapsed().as_secs_f64()));
            Ok(json!({ "record": record, "files": entry.files }))
        };
        let (value, hit) = match &self.cache {
            Some(cache) => {
                let (bytes, hit) = cache.get_or_insert_with(&key, build)?;
                let v = serde_json::from_slice(&bytes).map_err(|e| CliError::Record(e.to_string()))?;
                (v, hit)
            }
            None => (build(&hash)?, false),
        };
        let record = value.get("record").ok_or_else(|| CliError::Record("cache entry has no record".into()))?;
        let path = self.out.join(format!("{kind}.json"));
        write_atomic(&path, &pretty(record)?)?;
        if let Some(Value::Object(files)) = value.get("files") {
            for (name, text) in files {
                let text = text.as_str().ok_or_else(|| CliError::Record(format!("side file `{name}` is not text")))?;
                write_atomic(&self.out.join(name), text.as_bytes())?;
            }
        }
        Ok(Outcome {
            record: path,
            cache_hit: hit,
        })
    }
}

/// Linear model of the configured scheme.
pub fn build_model(cfg: &ScenarioConfig) -> Result<LinearDelayModel> {
    let r = cfg.resolve();
    let model = match cfg.scheme {
        SchemeKind::Bare => build_bare_om(&r.om)?,
        SchemeKind::CavityFeedback => build_cavity_feedback(&r.om, &r.aux, &r.path)?,
        SchemeKind::MirrorFeedback => build_mirror_feedback(&r.om, &r.mirror, &r.path)?,
        SchemeKind::Effective => build_effective_model(&r.om, &r.aux, &r.path)?,
        SchemeKind::Entangle => {
            return Err(CliError::Config(
                "the entangle scheme is a pulsed protocol; use the `entangle` command".into(),
            ))
        }
    };
    Ok(model)
}

/// Steady phonon number with the method used and, for the spectral
/// integral, its error estimate.
fn occupation(model: &LinearDelayModel) -> Result<Value> {
    if model.is_ode() {
        let n = lyapunov_phonon_occupation(model)?;
        Ok(json!({ "n_phn": n, "method": "lyapunov" }))
    } else {
        let r = phonon_occupation_with(model, &QuadratureOptions::default())?;
        Ok(json!({ "n_phn": r.n_phn, "abs_error": r.abs_error, "panels": r.panels, "method": "spectral" }))
    }
}

fn spectrum_table(cfg: &ScenarioConfig, model: &LinearDelayModel) -> Result<Table> {
    let r = &cfg.output.spectrum_hz;
    let omegas: Vec<f64> = (0..r.points)
        .map(|k| {
            let t = if r.points > 1 { k as f64 / (r.points - 1) as f64 } else { 0.0 };
            2.0 * PI * (r.start.ln() + t * (r.stop.ln() - r.start.ln())).exp()
        })
        .collect();
    let mut columns = vec!["omega_rad_s".to_owned()];
    columns.extend(model.state_labels().iter().map(|l| format!("S_{}", l.replace('_', ""))));
    let mut table = Table::new(columns);
    for (w, s) in omegas.iter().zip(spectrum(model, &omegas)?) {
        let mut row = vec![Cell::Num(*w)];
        row.extend(s.iter().map(|v| Cell::Num(*v)));
        table.push(row);
    }
    Ok(table)
}

fn model_json(model: &LinearDelayModel) -> Result<String> {
    Ok(String::from_utf8(pretty(&model.to_json())?).expect("JSON is UTF-8"))
}

pub fn steadystate(ctx: &Context, cfg: &ScenarioConfig) -> Result<Outcome> {
    ctx.emit("steadystate", cfg, || {
        let model = build_model(cfg)?;
        let stability = stability_check(&model)?;
        if !stability.stable {
            return Err(cfb_core::Error::Unstable(stability).into());
        }
        let outputs = occupation(&model)?;
        let mut files = BTreeMap::new();
        files.insert("spectrum.csv".into(), spectrum_table(cfg, &model)?.to_csv()?);
        files.insert("model.json".into(), model_json(&model)?);
        Ok(Entry {
            record: json!({
                "inputs": to_value(&cfg.resolve())?,
                "outputs": outputs,
                "stability": stability,
            }),
            files,
        })
    })
}

pub fn stability(ctx: &Context, cfg: &ScenarioConfig) -> Result<Outcome> {
    let model = build_model(cfg)?;
    let report = stability_check(&model)?;
    let outcome = ctx.emit("stability", cfg, || {
        let mut files = BTreeMap::new();
        files.insert("model.json".into(), model_json(&model)?);
        Ok(Entry {
            record: json!({
                "inputs": to_value(&cfg.resolve())?,
                "stability": report,
            }),
            files,
        })
    })?;
    if report.stable {
        Ok(outcome)
    } else {
        Err(cfb_core::Error::Unstable(report).into())
    }
}

pub fn effective(ctx: &Context, cfg: &ScenarioConfig) -> Result<Outcome> {
    ctx.emit("effective", cfg, || {
        let r = cfg.resolve();
        let params = effective_params(&r.om, &r.aux, &r.path)?;
        let coop = effective_cooperativity(&r.om, &r.aux, &r.path)?;
        let noise = effective_noise_fields(&r.om, &r.path)?;
        let threshold = enhancement_threshold(&r.om, &r.aux, &r.path);
        Ok(Entry {
            record: json!({
                "inputs": to_value(&r)?,
                "outputs": {
                    "params": params,
                    "cooperativity": coop,
                    "noise_fields": noise,
                    "enhancement_threshold_c_qu": threshold,
                },
            }),
            files: BTreeMap::new(),
        })
    })
}

pub fn entangle(ctx: &Context, cfg: &ScenarioConfig) -> Result<Outcome> {
    ctx.emit("protocol", cfg, || {
        let p = cfg.protocol();
        let result = run_protocol(&p)?;
        Ok(Entry {
            record: result.to_json(&p),
            files: BTreeMap::new(),
        })
    })
}

/// Optimization problem of the configured scheme with the configured bounds.
pub fn problem(cfg: &ScenarioConfig) -> Result<OptProblem> {
    let opt = cfg.optimize.clone().unwrap_or_default();
    let r = cfg.resolve();
    let objective = match cfg.scheme {
        SchemeKind::CavityFeedback => Objective::PhononOccupation(CoolingScenario {
            om: r.om,
            aux: Auxiliary::Cavity(r.aux),
            path: r.path,
        }),
        SchemeKind::MirrorFeedback => Objective::PhononOccupation(CoolingScenario {
            om: r.om,
            aux: Auxiliary::Mirror(r.mirror),
            path: r.path,
        }),
        SchemeKind::Entangle => Objective::DeltaEpr(cfg.protocol()),
        other => {
            return Err(CliError::Config(format!(
                "scheme `{}` has no tunable parameters",
                to_value(&other)?.as_str().unwrap_or_default()
            )))
        }
    };
    let mut p = OptProblem::new(objective, &opt.free, opt.options()).map_err(|e| CliError::Config(e.to_string()))?;
    for f in &mut p.free {
        if let Some([lo, hi]) = opt.bounds.get(&f.knob) {
            let s = knob_scale(f.knob);
            f.spec.lo = lo * s;
            f.spec.hi = hi * s;
        }
    }
    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(p)
}

fn params_in_config_units(knobs: &[Knob], x: &[f64]) -> Map<String, Value> {
    knobs
        .iter()
        .zip(x)
        .map(|(k, v)| (knob_column(*k).to_owned(), json!(v / knob_scale(*k))))
        .collect()
}

fn optimize(ctx: &Context, cfg: &ScenarioConfig, kind: &str) -> Result<Outcome> {
    let p = problem(cfg)?;
    ctx.emit(kind, cfg, || {
        let m = p.minimize(&[cfg.initial_point()])?;
        let knobs: Vec<Knob> = p.free.iter().map(|f| f.knob).collect();
        let mut files = BTreeMap::new();
        files.insert("trace.csv".into(), trace_to_csv(&m.trace, &p.names()));
        let feasible = m.trace.iter().filter(|t| t.feasible).count();
        Ok(Entry {
            record: json!({
                "inputs": to_value(&p.objective)?,
                "search": p.free,
                "options": p.options,
                "outputs": {
                    "value": m.value,
                    "params": params_in_config_units(&knobs, &m.params),
                    "converged": m.converged,
                    "best_start": m.start,
                    "evaluations": m.trace.len(),
                    "feasible_evaluations": feasible,
                },
            }),
            files,
        })
    })
}

pub fn optimize_cooling(ctx: &Context, cfg: &ScenarioConfig) -> Result<Outcome> {
    if !matches!(cfg.scheme, SchemeKind::CavityFeedback | SchemeKind::MirrorFeedback) {
        return Err(CliError::Config(
            "optimize-cooling needs scheme = \"cavity_feedback\" or \"mirror_feedback\"".into(),
        ));
    }
    optimize(ctx, cfg, "optimize_cooling")
}

pub fn optimize_entangle(ctx: &Context, cfg: &ScenarioConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    cfg.scheme = SchemeKind::Entangle;
    optimize(ctx, &cfg, "optimize_entangle")
}

/// Output columns of one sweep point, after the swept parameter.
fn output_columns(cfg: &ScenarioConfig, param: SweepParam) -> Result<Vec<String>> {
    let sweep = cfg.sweep.as_ref().expect("sweep section checked by caller");
    let mut cols: Vec<String> = Vec::new();
    let knobs = |cols: &mut Vec<String>| {
        if let Some(o) = &cfg.optimize {
            cols.extend(o.free.iter().map(|k| knob_column(*k).to_owned()));
        }
    };
    match cfg.scheme {
        SchemeKind::Effective => {
            if param != SweepParam::CQu {
                cols.push("C_qu".into());
            }
            cols.extend(["ratio".into(), "c_eff".into()]);
        }
        SchemeKind::Entangle => {
            cols.push("delta_epr".into());
            knobs(&mut cols);
        }
        _ => {
            cols.push("n_phn".into());
            knobs(&mut cols);
        }
    }
    if sweep.sideband_reference {
        cols.push("n_sideband".into());
    }
    if cfg.optimize.is_some() && matches!(cfg.scheme, SchemeKind::Bare | SchemeKind::Effective) {
        return Err(CliError::Config("optimize is not available for this scheme".into()));
    }
    Ok(cols)
}

/// Sideband-cooling reference of the effective model: no loop phase and the
/// auxiliary cavity on the red sideband.
fn sideband_reference(cfg: &ScenarioConfig) -> Result<f64> {
    let mut r = cfg.resolve();
    r.aux.delta_a = -r.om.omega_m;
    r.path.phi_s = 0.0;
    let model = build_effective_model(&r.om, &r.aux, &r.path)?;
    let v = occupation(&model)?;
    Ok(v["n_phn"].as_f64().unwrap_or(f64::NAN))
}

/// Evaluates one sweep point. Returns named values and, for optimized
/// points, the optimum in core units for warm-starting the next point.
fn evaluate_point(cfg: &ScenarioConfig, warm: Option<&Vec<f64>>) -> Result<(Vec<(String, f64)>, Option<Vec<f64>>)> {
    let mut values = Vec::new();
    let mut params = None;
    match (cfg.scheme, &cfg.optimize) {
        (SchemeKind::Effective, _) => {
            let r = cfg.resolve();
            let c = effective_cooperativity(&r.om, &r.aux, &r.path)?;
            values.extend([("C_qu".into(), c.c_qu), ("ratio".into(), c.ratio), ("c_eff".into(), c.c_eff)]);
        }
        (scheme, Some(opt)) => {
            let p = problem(cfg)?;
            let start = warm.cloned().unwrap_or_else(|| cfg.initial_point());
            let m = p.minimize(&[start])?;
            let name = if scheme == SchemeKind::Entangle { "delta_epr" } else { "n_phn" };
            values.push((name.into(), m.value));
            for (k, v) in opt.free.iter().zip(&m.params) {
                values.push((knob_column(*k).into(), v / knob_scale(*k)));
            }
            params = Some(m.params);
        }
        (SchemeKind::Entangle, None) => {
            values.push(("delta_epr".into(), run_protocol(&cfg.protocol())?.delta_epr));
        }
        (_, None) => {
            let model = build_model(cfg)?;
            let v = occupation(&model)?;
            values.push(("n_phn".into(), v["n_phn"].as_f64().unwrap_or(f64::NAN)));
        }
    }
    Ok((values, params))
}

/// Cached evaluation of one sweep point; failures become a `failed` status
/// with the error text as reason.
fn sweep_point(ctx: &Context, cfg: &ScenarioConfig, warm: Option<&Vec<f64>>) -> Result<Value> {
    let mut point = cfg.clone();
    let sideband = point.sweep.take().is_some_and(|s| s.sideband_reference);
    let key = json!({
        "kind": "sweep_point",
        "tool_version": TOOL_VERSION,
        "config": config_value(&point)?,
        "sideband_reference": sideband,
        "warm_start": warm,
    });
    let compute = |_: &str| -> Result<Value> {
        let mut values = Map::new();
        let (status, reason, params) = match evaluate_point(&point, warm) {
            Ok((v, params)) => {
                values.extend(v.into_iter().map(|(k, x)| (k, json!(x))));
                ("ok", String::new(), params)
            }
            Err(e) => ("failed", e.to_string(), None),
        };
        if sideband {
            if let Ok(n) = sideband_reference(&point) {
                values.insert("n_sideband".into(), json!(n));
            }
        }
        Ok(json!({ "values": values, "params": params, "status": status, "reason": reason }))
    };
    match &ctx.cache {
        Some(cache) => {
            let (bytes, _) = cache.get_or_insert_with(&key, compute)?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Record(e.to_string()))
        }
        None => compute(""),
    }
}

/// Runs the configured sweep and writes `sweep.csv` and `sweep.json`, plus
/// `<name>.svg` when a plot layout is given. Series run concurrently; within
/// a series, optimized points are chained so each starts from the previous
/// optimum.
pub fn sweep(ctx: &Context, cfg: &ScenarioConfig, figure: Option<(&str, &PlotSpec)>) -> Result<Table> {
    let s = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("the sweep command needs a [sweep] section".into()))?;
    let grid = s.grid()?;
    let series_cols: Vec<SweepParam> = s.series_columns().into_iter().filter(|c| *c != s.parameter).collect();
    let series: Vec<BTreeMap<SweepParam, f64>> = if s.series.is_empty() {
        vec![BTreeMap::new()]
    } else {
        s.series.clone()
    };
    let outputs = output_columns(cfg, s.parameter)?;

    let mut configs = Vec::new();
    for entry in &series {
        let mut base = cfg.clone();
        for (p, v) in entry {
            base.set(*p, *v);
        }
        let mut points = Vec::new();
        for &x in &grid {
            let mut c = base.clone();
            c.set(s.parameter, x);
            c.validate()?;
            points.push(c);
        }
        configs.push(points);
    }

    let chained = cfg.optimize.is_some();
    let results: Vec<Vec<Value>> = configs
        .par_iter()
        .map(|points| -> Result<Vec<Value>> {
            if chained {
                let mut warm: Option<Vec<f64>> = None;
                let mut out = Vec::new();
                for c in points {
                    let v = sweep_point(ctx, c, warm.as_ref())?;
                    if let Some(p) = v.get("params").and_then(|p| serde_json::from_value::<Vec<f64>>(p.clone()).ok()) {
                        warm = Some(p);
                    }
                    out.push(v);
                }
                Ok(out)
            } else {
                points.par_iter().map(|c| sweep_point(ctx, c, None)).collect()
            }
        })
        .collect::<Result<_>>()?;

    let mut columns = vec![s.parameter.column().to_owned()];
    columns.extend(outputs.iter().cloned());
    columns.extend(series_cols.iter().map(|c| c.column().to_owned()));
    columns.extend(["status".to_owned(), "reason".to_owned()]);
    let mut table = Table::new(columns);
    for (entry, rows) in series.iter().zip(&results) {
        for (&x, v) in grid.iter().zip(rows) {
            let values = v.get("values").and_then(Value::as_object);
            let mut row = vec![Cell::Num(x)];
            for col in &outputs {
                row.push(values.and_then(|m| m.get(col)).and_then(Value::as_f64).into());
            }
            for c in &series_cols {
                row.push(entry.get(c).copied().into());
            }
            row.push(v["status"].as_str().unwrap_or("failed").into());
            row.push(v["reason"].as_str().unwrap_or_default().into());
            table.push(row);
        }
    }
    write_table(&ctx.out, "sweep", &table)?;
    if let Some((name, spec)) = figure {
        let svg = plot::render(spec, &table, &ctx.out.join("sweep.csv"))?;
        write_atomic(&ctx.out.join(format!("{name}.svg")), svg.as_bytes())?;
    }
    Ok(table)
}

/// Renders a sweep table (CSV) with a preset's layout.
pub fn plot_file(input: &Path, spec: &PlotSpec, output: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let table = if text.trim().is_empty() {
        Table::default()
    } else {
        Table::from_csv(&text).map_err(|e| CliError::Schema {
            path: input.to_path_buf(),
            reason: e.to_string(),
        })?
    };
    let svg = plot::render(spec, &table, input)?;
    write_atomic(output, svg.as_bytes())
}
