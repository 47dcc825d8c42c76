//! Self-checks against independent oracles: finite differences, closed-form
//! solutions, stratification counts and DFT identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{amplitude_spectrum, branch_samples, dft, periodic_axis, SpectrumSource};
use crate::autodiff::{Activation, Fault, Jet2, Layout};
use crate::error::Result;
use crate::exec::Execution;
use crate::field::Field;
use crate::model::{eval_jets, predict, BaselineModel, Branch, EmbeddingFn, FgModel, ModelKind, Surrogate};
use crate::problem::{make_benchmark, pde_residual, BenchmarkId};
use crate::sampling::{lhs_sample, locus_rng, sample_conditions, stratum_occupancy};
use crate::training::{assemble_loss, assemble_loss_with, train, TrainConfig, TrainingSet, Weighting};

pub const FD_TOLERANCE: f64 = 1e-5;

/// `|a − b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {:<24} max_err={:.3e} tol={:.1e} {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.max_error,
                    c.tolerance,
                    c.detail
                )
            })
            .collect()
    }

    fn push(&mut self, name: &str, max_error: f64, tolerance: f64, detail: String) {
        self.checks.push(CheckResult {
            name: name.into(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
            detail,
        });
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Random networks per activation and module count in the jet check.
    pub nets: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { nets: 13, fault: None }
    }
}

/// Smooth, non-polynomial prior used for random test networks.
pub fn probe_field(dim: usize) -> Field {
    Field::new("probe", move |c| {
        let mut acc = Jet2::constant(dim, 0.3);
        for (k, x) in c.iter().enumerate() {
            acc = acc + (x.scale(k as f64 + 1.5)).sin();
        }
        acc * c[0].cos()
    })
}

fn random_fg(act: Activation, modules: usize, dim: usize, width: usize, seed: u64) -> Result<FgModel> {
    let cfg = TrainConfig {
        modules,
        width,
        lf_depth: 2,
        activation: act,
        ..TrainConfig::default()
    };
    let embed = EmbeddingFn::with_norm(probe_field(dim), 2.0, 4.6)?;
    let mut m = FgModel::new(cfg.architecture(ModelKind::Fg, dim), embed, seed)?;
    perturb(m.params_mut(), seed);
    Ok(m)
}

/// Shift every parameter so biases and gates are away from their initial values.
fn perturb(params: &mut [f64], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for p in params {
        *p += rng.random_range(-0.3..0.3);
    }
}

fn richardson(d: impl Fn(f64) -> f64, h: f64) -> f64 {
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Gradient and Hessian of `f` at `x` by Richardson-extrapolated central
/// differences.
pub fn fd_jet(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = x.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in shifts {
            p[i] += s;
        }
        f(&p)
    };
    let grad = (0..d)
        .map(|i| richardson(|h| (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h), 1e-4))
        .collect();
    let f0 = f(x);
    let mut hess = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                richardson(|h| (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h), 1e-3)
            } else {
                richardson(
                    |h| {
                        (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                            + at(&[(i, -h), (j, -h)]))
                            / (4.0 * h * h)
                    },
                    1e-3,
                )
            };
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    (grad, hess)
}

/// Largest jet-vs-FD error of `model` over `points`.
pub fn jet_fd_error<M: Surrogate>(model: &M, points: &[Vec<f64>], fault: Option<Fault>) -> Result<f64> {
    let dim = model.architecture().in_dim;
    let layout = Layout::full(dim)?;
    let flat: Vec<f64> = points.concat();
    let jets = eval_jets(model, &flat, &layout, Branch::Total, Execution::Sequential, fault)?;
    let value = |p: &[f64]| predict(model, p, Branch::Total, Execution::Sequential).map(|v| v[0]).unwrap_or(f64::NAN);
    let mut worst = 0.0f64;
    for (p, jet) in points.iter().zip(&jets) {
        let (g, h) = fd_jet(&value, p);
        for i in 0..dim {
            worst = worst.max(rel_err(jet.grad(i), g[i]));
            for j in 0..dim {
                worst = worst.max(rel_err(jet.hess(i, j), h[i][j]));
            }
        }
    }
    Ok(worst)
}

pub fn check_jets(report: &mut VerifyReport, opts: &VerifyOptions) -> Result<()> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for act in Activation::ALL {
        for modules in [1, 2] {
            for n in 0..opts.nets {
                let dim = 1 + n % 3;
                let seed = 1000 + count as u64;
                let model = random_fg(act, modules, dim, 5, seed)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<Vec<f64>> = (0..2)
                    .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                worst = worst.max(jet_fd_error(&model, &pts, opts.fault)?);
                count += 1;
            }
        }
        let cfg = TrainConfig {
            width: 5,
            lf_depth: 3,
            activation: act,
            ..TrainConfig::default()
        };
        let mut base = BaselineModel::new(cfg.architecture(ModelKind::Baseline, 2), 77)?;
        perturb(base.params_mut(), 77);
        worst = worst.max(jet_fd_error(&base, &[vec![0.3, -0.4]], opts.fault)?);
    }
    report.push(
        "jet_vs_fd",
        worst,
        FD_TOLERANCE,
        format!("{count} fused networks, 4 activations, 1-2 modules"),
    );
    Ok(())
}

fn mini_config(id: BenchmarkId, act: Activation, modules: usize) -> TrainConfig {
    let mut c = TrainConfig::for_benchmark(id);
    c.n_interior = 10;
    for n in [&mut c.n_boundary, &mut c.n_initial, &mut c.n_velocity, &mut c.n_final] {
        if *n > 0 {
            *n = 4;
        }
    }
    c.width = 4;
    c.lf_depth = 2;
    c.modules = modules;
    c.activation = act;
    c.execution = Execution::Sequential;
    c
}

/// Norm-wise error of the assembled loss gradient against Richardson
/// central differences of the loss: `max|g − fd| / max(1, max|fd|)`.
///
/// Losses of the high-frequency problems reach 1e8 at initialization, where
/// per-component comparison is dominated by differencing roundoff.
pub fn loss_gradient_fd_error<M: Surrogate + Clone>(
    model: &M,
    set: &TrainingSet,
    fault: Option<Fault>,
) -> Result<f64> {
    let (_, grad) = assemble_loss_with(model, set, Execution::Sequential, true, fault)?;
    let mut probe = model.clone();
    let mut diff = 0.0f64;
    let mut scale = 1.0f64;
    for i in 0..grad.len() {
        let base = model.params()[i];
        let mut loss_at = |h: f64| -> Result<f64> {
            probe.params_mut()[i] = base + h;
            let l = assemble_loss(&probe, set, Execution::Sequential, false)?.0.total;
            probe.params_mut()[i] = base;
            Ok(l)
        };
        let h = 1e-4;
        let d1 = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
        let d2 = (loss_at(h / 2.0)? - loss_at(-h / 2.0)?) / h;
        let fd = (4.0 * d2 - d1) / 3.0;
        diff = diff.max((grad[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    Ok(diff / scale)
}

pub fn check_loss_gradient(report: &mut VerifyReport, opts: &VerifyOptions) -> Result<()> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for id in BenchmarkId::ALL {
        let spec = make_benchmark(id);
        for act in Activation::ALL {
            for modules in [1, 2] {
                let cfg = mini_config(id, act, modules);
                let pts = sample_conditions(&spec, &cfg.counts(), 31 + cases)?;
                let embed = EmbeddingFn::fit(spec.embedding_field(), cfg.k_star, &pts.interior, spec.dim)?;
                let mut model = FgModel::new(cfg.architecture(ModelKind::Fg, spec.dim), embed, 5 + cases)?;
                perturb(model.params_mut(), cases);
                let set = TrainingSet::new(&spec, &pts, Some(&model.embed), Weighting::Source, &cfg)?;
                worst = worst.max(loss_gradient_fd_error(&model, &set, opts.fault)?);
                cases += 1;
            }
        }
    }
    report.push(
        "loss_gradient_vs_fd",
        worst,
        FD_TOLERANCE,
        format!("{cases} miniature problems, 10 interior points, width 4"),
    );
    Ok(())
}

/// Residuals of the closed-form solutions on sampled points.
pub fn check_manufactured(report: &mut VerifyReport) -> Result<()> {
    let mut pde = 0.0f64;
    let mut cond = 0.0f64;
    for id in BenchmarkId::ALL {
        let spec = make_benchmark(id);
        let mut cfg = TrainConfig::for_benchmark(id);
        cfg.n_interior = 1000;
        let pts = sample_conditions(&spec, &cfg.counts(), 99)?;
        for p in pts.interior.chunks_exact(spec.dim) {
            let jet = spec.exact_jet(p)?;
            let f = spec.source.value(p);
            pde = pde.max(pde_residual(&spec, p, &jet).abs() / (1.0 + f.abs()));
        }
        for cp in &pts.conditions {
            let c = &spec.conditions[cp.condition];
            for p in cp.coords.chunks_exact(spec.dim) {
                cond = cond.max(c.residual(p, &spec.exact_jet(p)?).abs());
            }
        }
    }
    report.push("manufactured_pde", pde, 1e-6, "Γu − f over 1000 points per problem".into());
    report.push("manufactured_conditions", cond, 1e-9, "condition residuals of u".into());
    Ok(())
}

pub fn check_lhs(report: &mut VerifyReport) -> Result<()> {
    let mut bad = 0usize;
    for (n, d) in [(1, 1), (7, 2), (100, 3), (1000, 2), (2000, 1)] {
        let lo = vec![-1.0; d];
        let hi: Vec<f64> = (0..d).map(|a| 0.5 + a as f64).collect();
        let pts = lhs_sample(n, &lo, &hi, &mut locus_rng(n as u64, 0))?;
        let occ = stratum_occupancy(&pts, n, &lo, &hi);
        bad += occ.iter().flatten().filter(|&&c| c != 1).count();
    }
    report.push("lhs_stratification", bad as f64, 0.0, "strata not holding exactly one point".into());
    Ok(())
}

pub fn check_dft(report: &mut VerifyReport) -> Result<()> {
    let xs = periodic_axis(0.0, 2.0 * std::f64::consts::PI, 512);
    let tone: Vec<f64> = xs.iter().map(|x| (10.0 * x).sin()).collect();
    let s = amplitude_spectrum(&xs, &tone, SpectrumSource::Exact)?;
    let tone_err = s
        .amp
        .iter()
        .enumerate()
        .map(|(k, a)| if k == 10 { (a - 1.0).abs() } else { *a })
        .fold(0.0, f64::max);
    report.push("dft_pure_tone", tone_err, 1e-10, "sin(10x) on 512 points".into());

    let mix: Vec<f64> = xs
        .iter()
        .map(|x| 0.7 + (3.0 * x).sin() - 0.4 * (41.0 * x).cos() + 0.05 * (200.0 * x + 0.3).sin())
        .collect();
    let s = amplitude_spectrum(&xs, &mix, SpectrumSource::Exact)?;
    let energy: f64 = mix.iter().map(|v| v * v).sum::<f64>() / mix.len() as f64;
    let parseval = s.amp[0] * s.amp[0] + 0.5 * s.amp[1..].iter().map(|a| a * a).sum::<f64>();
    report.push("dft_parseval", (energy - parseval).abs(), 1e-9, "four-tone signal".into());

    let model = random_fg(Activation::Sin, 2, 1, 8, 3)?;
    let [u, h, l] = branch_samples(&model, &xs, Execution::Sequential)?;
    let (du, dh, dl) = (dft(&u), dft(&h), dft(&l));
    let lin = (0..du.len())
        .map(|k| (du[k] - dh[k] - dl[k]).norm())
        .fold(0.0, f64::max);
    report.push("dft_linearity", lin, 1e-10, "DFT(u*) − DFT(u_h) − DFT(u_l)".into());
    Ok(())
}

/// Interior weights, prior magnitude, initialization bounds and the
/// additive fusion.
pub fn check_bounds(report: &mut VerifyReport) -> Result<()> {
    let mut weight_violation = 0.0f64;
    let mut prior_violation = 0.0f64;
    for id in BenchmarkId::ALL {
        let spec = make_benchmark(id);
        let cfg = TrainConfig::for_benchmark(id);
        let pts = sample_conditions(&spec, &cfg.counts(), cfg.seed)?;
        let embed = EmbeddingFn::fit(spec.embedding_field(), cfg.k_star, &pts.interior, spec.dim)?;
        let mut max = 0.0f64;
        for p in pts.interior.chunks_exact(spec.dim) {
            max = max.max(embed.eval(p)?.value.abs());
        }
        prior_violation = prior_violation.max((max - 1.0 / cfg.k_star).abs());
        let set = TrainingSet::new(&spec, &pts, None, Weighting::Source, &cfg)?;
        let lo = (-cfg.k_tau).exp();
        for w in set.interior_weights() {
            weight_violation = weight_violation.max(lo - w).max(w - 1.0);
        }
    }
    report.push("interior_weight_bounds", weight_violation.max(0.0), 1e-15, "τ ∈ [e^−Kτ, 1]".into());
    report.push("prior_bound", prior_violation, 1e-15, "max |ħ| = 1/K* on the interior".into());

    let model = random_fg(Activation::Tanh, 3, 3, 6, 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut fusion = 0.0f64;
    for _ in 0..20 {
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let (t, h, l) = (model.fg_forward(&p)?, model.hf_forward(&p)?, model.mlp_forward(&p)?);
        for part in Layout::full(3)?.partials() {
            fusion = fusion.max((t.get(part) - h.get(part) - l.get(part)).abs());
        }
    }
    report.push("fusion_identity", fusion, 1e-12, "u* = u_h + u_l, all jet components".into());
    Ok(())
}

pub fn check_determinism(report: &mut VerifyReport) -> Result<()> {
    let spec = make_benchmark(BenchmarkId::Heat1d);
    let mut cfg = mini_config(BenchmarkId::Heat1d, Activation::Sin, 2);
    cfg.n_interior = 200;
    cfg.iters = 3;
    cfg.execution = Execution::Parallel;
    let a = train(&spec, &cfg)?;
    let b = train(&spec, &cfg)?;
    cfg.execution = Execution::Sequential;
    let c = train(&spec, &cfg)?;
    let same = |x: &crate::training::TrainOutcome<FgModel>, y: &crate::training::TrainOutcome<FgModel>| {
        x.history.iter().zip(&y.history).all(|(r, s)| r.loss == s.loss) && x.model.params() == y.model.params()
    };
    let mismatches = usize::from(!same(&a, &b)) + usize::from(!same(&a, &c));
    report.push(
        "determinism",
        mismatches as f64,
        0.0,
        "repeat and sequential runs match bit for bit".into(),
    );
    Ok(())
}

/// Run every check.
pub fn run_all(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut r = VerifyReport::default();
    check_jets(&mut r, opts)?;
    check_loss_gradient(&mut r, opts)?;
    check_manufactured(&mut r)?;
    check_lhs(&mut r)?;
    check_dft(&mut r)?;
    check_bounds(&mut r)?;
    check_determinism(&mut r)?;
    Ok(r)
}
