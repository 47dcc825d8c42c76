use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use fgpinn::analysis::{
    amplitude_history, amplitude_history_csv, amplitude_spectrum, evaluate, field_csv, Metrics,
    SpectrumSource,
};
use fgpinn::autodiff::{Activation, Fault};
use fgpinn::exec::Execution;
use fgpinn::model::{predict, Branch, ModelKind, Surrogate};
use fgpinn::problem::{make_benchmark, ProblemSpec};
use fgpinn::sampling::{sample_conditions, PointSet};
use fgpinn::training::{history_csv, train_baseline_on, train_fg_on, TrainConfig, TrainOutcome};
use fgpinn::verify::{run_all, VerifyOptions};
use fgpinn::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{resolve, RunConfig};
use crate::{CliError, Common, SweepAxis};

/// Wavenumbers tracked in amplitude histories.
const HISTORY_KS: [usize; 3] = [1, 10, 100];

fn write(path: &Path, contents: &str) -> Result<String, CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(path.display().to_string())
}

/// Fresh directory `<out>/<stem>-<unix seconds>-<hash8>`.
fn run_dir(out: &Path, stem: &str, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let base = format!("{stem}-{ts}-{}", cfg.hash8());
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}.{n}") };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
    unreachable!()
}

#[derive(Serialize)]
struct RunReport {
    config: RunConfig,
    metrics: Option<Metrics>,
    histories: BTreeMap<String, String>,
    wall_ms: f64,
    seed: u64,
    failure: Option<String>,
}

/// Training parameters actually used: snapshots are needed for amplitude
/// histories and retained checkpoints but do not affect the numbers.
fn effective(cfg: &RunConfig, spec: &ProblemSpec, keep: bool) -> TrainConfig {
    let mut t = cfg.training.clone();
    t.snapshots |= spec.dim == 1 || keep;
    t
}

fn uniform_line(spec: &ProblemSpec) -> Vec<f64> {
    fgpinn::analysis::periodic_axis(spec.lower[0], spec.upper[0], 2048)
}

/// Dump histories, fields and (1D) spectra; returns metrics and paths.
fn artifacts<M: Surrogate + Clone>(
    dir: &Path,
    prefix: &str,
    spec: &ProblemSpec,
    out: &TrainOutcome<M>,
    exec: Execution,
    keep: bool,
    branches: impl Fn(&M, &[f64]) -> Result<(Vec<f64>, Vec<f64>), Error>,
) -> Result<(Option<Metrics>, BTreeMap<String, String>), CliError> {
    let mut paths = BTreeMap::new();
    paths.insert(
        "history".into(),
        write(&dir.join(format!("{prefix}history.csv")), &history_csv(&out.history))?,
    );
    paths.insert(
        "points".into(),
        write(&dir.join(format!("{prefix}points.csv")), &out.points.to_csv(&spec.axis_names))?,
    );
    let metrics = match evaluate(&out.model, spec, exec) {
        Ok((m, fields)) => {
            for (g, pred) in &fields {
                let name = format!("{prefix}field_{}.csv", g.label.replace('=', ""));
                paths.insert(
                    format!("field_{}", g.label),
                    write(&dir.join(name), &field_csv(g, &spec.axis_names, pred))?,
                );
            }
            Some(m)
        }
        Err(e) if e.is_numeric() => None,
        Err(e) => return Err(e.into()),
    };
    if spec.dim == 1 && metrics.is_some() {
        let xs = uniform_line(spec);
        let exact: Vec<f64> = xs.iter().map(|&x| spec.exact_solution(&[x])).collect();
        let pred = predict(&out.model, &xs, Branch::Total, exec)?;
        let (hf, lf) = branches(&out.model, &xs)?;
        let s = |v: &[f64], src| amplitude_spectrum(&xs, v, src);
        let csv = fgpinn::analysis::spectrum_csv(
            &s(&exact, SpectrumSource::Exact)?,
            &s(&pred, SpectrumSource::Total)?,
            &s(&hf, SpectrumSource::High)?,
            &s(&lf, SpectrumSource::Low)?,
        );
        paths.insert("spectrum".into(), write(&dir.join(format!("{prefix}spectrum.csv")), &csv)?);
        let rows = amplitude_history(&out.model, &out.snapshots, &xs, &HISTORY_KS, exec)?;
        paths.insert(
            "amplitudes".into(),
            write(
                &dir.join(format!("{prefix}amplitudes.csv")),
                &amplitude_history_csv(&HISTORY_KS, &rows),
            )?,
        );
    }
    if keep {
        let cdir = dir.join(format!("{prefix}checkpoints"));
        std::fs::create_dir_all(&cdir).map_err(|e| CliError::io(&cdir, e))?;
        for (iter, params) in &out.snapshots {
            let body = serde_json::to_string(&json!({ "iter": iter, "params": params }))
                .expect("plain data");
            write(&cdir.join(format!("iter_{iter:06}.json")), &body)?;
        }
        paths.insert("checkpoints".into(), cdir.display().to_string());
    }
    Ok((metrics, paths))
}

fn fg_branches(m: &fgpinn::model::FgModel, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let exec = Execution::Parallel;
    Ok((predict(m, xs, Branch::High, exec)?, predict(m, xs, Branch::Low, exec)?))
}

fn baseline_branches(m: &fgpinn::model::BaselineModel, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), Error> {
    Ok((vec![0.0; xs.len()], predict(m, xs, Branch::Total, Execution::Parallel)?))
}

struct Trained {
    metrics: Option<Metrics>,
    paths: BTreeMap<String, String>,
    wall_ms: f64,
    failure: Option<String>,
    checkpoint: String,
}

fn train_and_dump(
    cfg: &RunConfig,
    kind: ModelKind,
    spec: &ProblemSpec,
    points: PointSet,
    dir: &Path,
    prefix: &str,
    keep: bool,
) -> Result<Trained, CliError> {
    let tc = effective(cfg, spec, keep);
    let meta = serde_json::to_value(cfg).expect("plain data");
    match kind {
        ModelKind::Fg => {
            let out = train_fg_on(spec, &tc, points)?;
            let (metrics, paths) = artifacts(dir, prefix, spec, &out, tc.execution, keep, fg_branches)?;
            Ok(Trained {
                metrics,
                paths,
                wall_ms: out.wall_ms,
                failure: out.failure.as_ref().map(|e| e.to_string()),
                checkpoint: out.model.to_checkpoint(meta).to_json(),
            })
        }
        ModelKind::Baseline => {
            let out = train_baseline_on(spec, &tc, points)?;
            let (metrics, paths) =
                artifacts(dir, prefix, spec, &out, tc.execution, keep, baseline_branches)?;
            Ok(Trained {
                metrics,
                paths,
                wall_ms: out.wall_ms,
                failure: out.failure.as_ref().map(|e| e.to_string()),
                checkpoint: out.model.to_checkpoint(meta).to_json(),
            })
        }
    }
}

pub fn run(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c.config.as_deref(), &c.overrides())?;
    let spec = make_benchmark(cfg.run.benchmark);
    let points = sample_conditions(&spec, &cfg.training.counts(), cfg.training.seed)?;
    let stem = format!("{}-seed{}", spec.name, cfg.training.seed);
    let dir = run_dir(&c.out, &stem, &cfg)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let t = train_and_dump(&cfg, cfg.run.model, &spec, points, &dir, "", c.keep_checkpoints)?;
    let mut histories = t.paths;
    histories.insert("model".into(), write(&dir.join("model.json"), &t.checkpoint)?);
    let report = RunReport {
        seed: cfg.training.seed,
        config: cfg,
        metrics: t.metrics.clone(),
        histories,
        wall_ms: t.wall_ms,
        failure: t.failure.clone(),
    };
    let path = dir.join("report.json");
    write(&path, &serde_json::to_string_pretty(&report).expect("plain data"))?;
    println!("report: {}", path.display());
    if let Some(m) = &t.metrics {
        println!("rel_l2 {:.4e}  max_abs_err {:.4e}", m.rel_l2, m.max_abs_err);
    }
    match t.failure {
        Some(f) => Err(CliError::Failed(f)),
        None => Ok(()),
    }
}

fn amps(path: Option<&String>) -> Option<Value> {
    let text = std::fs::read_to_string(path?).ok()?;
    let last = text.lines().nth(1).map(|_| text.lines().last())??;
    let mut it = last.split(',');
    it.next();
    let v: Vec<f64> = it.filter_map(|s| s.parse().ok()).collect();
    Some(json!(HISTORY_KS.iter().zip(v).map(|(k, a)| (format!("k{k}"), a)).collect::<BTreeMap<_, _>>()))
}

pub fn compare(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c.config.as_deref(), &c.overrides())?;
    let spec = make_benchmark(cfg.run.benchmark);
    let points = sample_conditions(&spec, &cfg.training.counts(), cfg.training.seed)?;
    let stem = format!("{}-compare-seed{}", spec.name, cfg.training.seed);
    let dir = run_dir(&c.out, &stem, &cfg)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let fg = train_and_dump(&cfg, ModelKind::Fg, &spec, points.clone(), &dir, "fg_", c.keep_checkpoints)?;
    let base = train_and_dump(&cfg, ModelKind::Baseline, &spec, points, &dir, "baseline_", c.keep_checkpoints)?;
    let side = |t: &Trained| {
        json!({
            "metrics": t.metrics,
            "histories": t.paths,
            "wall_ms": t.wall_ms,
            "failure": t.failure,
            "final_amplitudes": amps(t.paths.get("amplitudes")),
        })
    };
    let ratio = match (&fg.metrics, &base.metrics) {
        (Some(f), Some(b)) => Some(b.rel_l2 / f.rel_l2),
        _ => None,
    };
    let report = json!({
        "config": cfg,
        "seed": cfg.training.seed,
        "fg": side(&fg),
        "baseline": side(&base),
        "baseline_over_fg_rel_l2": ratio,
    });
    let path = dir.join("compare.json");
    write(&path, &serde_json::to_string_pretty(&report).expect("plain data"))?;
    println!("report: {}", path.display());
    for (name, t) in [("fg", &fg), ("baseline", &base)] {
        if let Some(m) = &t.metrics {
            println!("{name:<9} rel_l2 {:.4e}", m.rel_l2);
        }
    }
    if let Some(r) = ratio {
        println!("baseline / fg = {r:.2}");
    }
    match fg.failure.or(base.failure) {
        Some(f) => Err(CliError::Failed(f)),
        None => Ok(()),
    }
}

pub struct SweepSpec {
    pub axis: SweepAxis,
    pub modules: Vec<usize>,
    pub interior: Vec<usize>,
    pub activations: Vec<Activation>,
    pub jobs: usize,
}

struct Cell {
    row: usize,
    col: usize,
    cfg: TrainConfig,
}

pub fn sweep(c: &Common, s: SweepSpec) -> Result<(), CliError> {
    let cfg = resolve(c.config.as_deref(), &c.overrides())?;
    let spec = make_benchmark(cfg.run.benchmark);
    let empty = match s.axis {
        SweepAxis::ModulesInterior => {
            if s.modules.is_empty() {
                Some("modules_list")
            } else if s.interior.is_empty() {
                Some("interior_list")
            } else {
                None
            }
        }
        SweepAxis::Activations => s.activations.is_empty().then_some("activations_list"),
    };
    if let Some(field) = empty {
        return Err(Error::config(field, "sweep axis has no values").into());
    }
    if s.jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1").into());
    }
    let (rows, cols): (Vec<usize>, Vec<String>) = match s.axis {
        SweepAxis::ModulesInterior => (
            s.interior.clone(),
            s.modules.iter().map(|m| format!("modules_{m}")).collect(),
        ),
        SweepAxis::Activations => (
            vec![cfg.training.n_interior],
            s.activations.iter().map(|a| a.to_string()).collect(),
        ),
    };
    let mut cells = Vec::new();
    for (r, &n) in rows.iter().enumerate() {
        for col in 0..cols.len() {
            let mut t = cfg.training.clone();
            t.n_interior = n;
            match s.axis {
                SweepAxis::ModulesInterior => t.modules = s.modules[col],
                SweepAxis::Activations => t.activation = s.activations[col],
            }
            t.validate()?;
            cells.push(Cell { row: r, col, cfg: t });
        }
    }
    // One point set per interior count, shared by every cell in the row.
    let point_sets = rows
        .iter()
        .map(|&n| {
            let mut t = cfg.training.clone();
            t.n_interior = n;
            sample_conditions(&spec, &t.counts(), t.seed)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<Mutex<f64>> = cells.iter().map(|_| Mutex::new(f64::NAN)).collect();
    let next = AtomicUsize::new(0);
    let fatal: Mutex<Option<CliError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..s.jobs.min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                match train_fg_on(&spec, &cell.cfg, point_sets[cell.row].clone()) {
                    Ok(out) => {
                        let e = if out.failure.is_some() {
                            f64::NAN
                        } else {
                            evaluate(&out.model, &spec, cell.cfg.execution)
                                .map(|(m, _)| m.rel_l2)
                                .unwrap_or(f64::NAN)
                        };
                        *results[i].lock().unwrap() = e;
                        eprintln!("cell {} {}: rel_l2 {e:.4e}", rows[cell.row], cols[cell.col]);
                    }
                    Err(e) if e.is_numeric() => {}
                    Err(e) => {
                        fatal.lock().unwrap().get_or_insert(e.into());
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    let mut table = format!("n_interior,{}\n", cols.join(","));
    for (r, n) in rows.iter().enumerate() {
        table.push_str(&n.to_string());
        for (i, cell) in cells.iter().enumerate().filter(|(_, c)| c.row == r) {
            let _ = cell;
            table.push_str(&format!(",{}", *results[i].lock().unwrap()));
        }
        table.push('\n');
    }
    let axis = match s.axis {
        SweepAxis::ModulesInterior => "modules-interior",
        SweepAxis::Activations => "activations",
    };
    let stem = format!("{}-sweep-{axis}-seed{}", spec.name, cfg.training.seed);
    let dir = run_dir(&c.out, &stem, &cfg)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let path = write(&dir.join("sweep.csv"), &table)?;
    print!("{table}");
    println!("table: {path}");
    Ok(())
}

pub fn verify(nets: usize, inject_fault: Option<f64>) -> Result<(), CliError> {
    let opts = VerifyOptions {
        nets,
        fault: inject_fault.map(|s| Fault {
            second_derivative_scale: s,
        }),
    };
    let report = run_all(&opts)?;
    print!("{}", report.summary());
    if report.passed() {
        println!("all checks passed");
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    }
}
