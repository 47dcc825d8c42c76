//! Weighted physics-informed loss and full-batch Adam training.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analysis::{headline_grid, relative_l2, EvalGrid};
use crate::autodiff::{Activation, Fault, JetBatch, Layout, Tape};
use crate::error::{Error, Result};
use crate::exec::{chunk_ranges, map_indexed, Execution, CHUNK};
use crate::model::{
    predict, Architecture, BaselineModel, Branch, EmbeddingFn, FgModel, ModelKind, Surrogate,
};
use crate::problem::{BenchmarkId, ConditionKind, DiffOperator, ProblemSpec};
use crate::sampling::{sample_conditions, PointSet, SampleCounts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_initial: usize,
    pub n_velocity: usize,
    pub n_final: usize,
    pub modules: usize,
    pub width: usize,
    pub lf_depth: usize,
    pub activation: Activation,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    pub k_star: f64,
    pub k_tau: f64,
    pub tau_b: f64,
    pub tau_0: f64,
    pub eval_every: usize,
    pub execution: Execution,
    /// Keep a parameter copy at every evaluation for amplitude histories.
    pub snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_interior: 2000,
            n_boundary: 2,
            n_initial: 0,
            n_velocity: 0,
            n_final: 0,
            modules: 4,
            width: 48,
            lf_depth: 4,
            activation: Activation::Sin,
            lr: 1e-3,
            iters: 5000,
            seed: 1234,
            k_star: 2.0,
            k_tau: 1.0,
            tau_b: 100.0,
            tau_0: 100.0,
            eval_every: 50,
            execution: Execution::Parallel,
            snapshots: false,
        }
    }
}

impl TrainConfig {
    /// Published setup of each benchmark.
    pub fn for_benchmark(id: BenchmarkId) -> Self {
        let base = TrainConfig::default();
        match id {
            BenchmarkId::Poisson1d => base,
            BenchmarkId::Heat1d => TrainConfig {
                n_interior: 5000,
                n_boundary: 2000,
                n_initial: 1000,
                modules: 3,
                iters: 3000,
                ..base
            },
            BenchmarkId::Wave3 => TrainConfig {
                n_interior: 2000,
                n_boundary: 1200,
                n_initial: 300,
                n_velocity: 300,
                modules: 3,
                activation: Activation::Cos,
                iters: 1000,
                ..base
            },
            BenchmarkId::Wave4 => TrainConfig {
                n_interior: 2000,
                n_boundary: 1200,
                n_initial: 300,
                n_velocity: 300,
                modules: 4,
                iters: 6000,
                ..base
            },
            BenchmarkId::Heat2dReversed => TrainConfig {
                n_interior: 3000,
                n_boundary: 1200,
                n_final: 300,
                modules: 3,
                width: 64,
                iters: 6000,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", format!("must be positive, got {}", self.lr)));
        }
        if !(self.k_star >= 1.0) || !self.k_star.is_finite() {
            return Err(Error::config("k_star", format!("must be >= 1, got {}", self.k_star)));
        }
        for (name, v) in [("k_tau", self.k_tau), ("tau_b", self.tau_b), ("tau_0", self.tau_0)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if self.n_interior == 0 {
            return Err(Error::config("n_interior", "must be at least 1"));
        }
        if self.width == 0 {
            return Err(Error::config("width", "must be at least 1"));
        }
        if self.lf_depth == 0 {
            return Err(Error::config("lf_depth", "must be at least 1"));
        }
        if self.modules == 0 {
            return Err(Error::config("modules", "must be at least 1"));
        }
        Ok(())
    }

    pub fn counts(&self) -> SampleCounts {
        SampleCounts {
            interior: self.n_interior,
            boundary: self.n_boundary,
            initial: self.n_initial,
            velocity: self.n_velocity,
            final_: self.n_final,
        }
    }

    pub fn architecture(&self, kind: ModelKind, in_dim: usize) -> Architecture {
        Architecture {
            kind,
            in_dim,
            width: self.width,
            lf_depth: self.lf_depth,
            modules: if kind == ModelKind::Fg { self.modules } else { 0 },
            activation: self.activation,
        }
    }
}

/// `τ = exp(−K_τ·|f / f_max|)`, and 1 when `f_max` is zero.
pub fn residual_weight(f_value: f64, f_max: f64, k_tau: f64) -> f64 {
    if f_max == 0.0 {
        1.0
    } else {
        (-k_tau * (f_value / f_max).abs()).exp()
    }
}

/// `Σ wᵢ rᵢ² / N`.
pub fn weighted_mean_sq(residuals: &[f64], weights: &[f64]) -> f64 {
    let s: f64 = residuals.iter().zip(weights).map(|(r, w)| w * r * r).sum();
    s / residuals.len() as f64
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::usage("parameter, gradient and moment lengths differ"));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            iteration: state.step as usize,
            message: format!("non-finite gradient for parameter {i}"),
        });
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
    Ok(())
}

/// Mean squared residual of each locus and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub interior: f64,
    pub boundary: f64,
    pub initial: f64,
    pub velocity: f64,
    #[serde(rename = "final")]
    pub final_: f64,
}

impl LossParts {
    fn slot(&mut self, kind: Option<ConditionKind>) -> &mut f64 {
        match kind {
            None => &mut self.interior,
            Some(ConditionKind::Boundary) => &mut self.boundary,
            Some(ConditionKind::InitialValue) => &mut self.initial,
            Some(ConditionKind::InitialVelocity) => &mut self.velocity,
            Some(ConditionKind::FinalValue) => &mut self.final_,
        }
    }

    pub fn get(&self, kind: Option<ConditionKind>) -> f64 {
        let mut c = *self;
        *c.slot(kind)
    }
}

/// Which pointwise weighting the interior term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `τᵢ = exp(−K_τ |f(xᵢ)/f_max|)`.
    Source,
    /// `τ = 1`.
    Uniform,
}

struct Chunk {
    coords: Vec<f64>,
    hbar: Option<JetBatch>,
    target: Vec<f64>,
    weight: Vec<f64>,
}

struct Group {
    kind: Option<ConditionKind>,
    layout: Layout,
    operator: DiffOperator,
    coef: f64,
    n: usize,
    chunks: Vec<Chunk>,
}

/// Collocation points with everything that does not change during training
/// evaluated once: targets, interior weights and prior batches.
pub struct TrainingSet {
    groups: Vec<Group>,
}

impl TrainingSet {
    pub fn new(
        spec: &ProblemSpec,
        points: &PointSet,
        embedding: Option<&EmbeddingFn>,
        weighting: Weighting,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let dim = spec.dim;
        let f: Vec<f64> = points
            .interior
            .chunks_exact(dim)
            .map(|p| spec.source.value(p))
            .collect();
        let f_max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let weights: Vec<f64> = match weighting {
            Weighting::Source => f.iter().map(|&v| residual_weight(v, f_max, cfg.k_tau)).collect(),
            Weighting::Uniform => vec![1.0; f.len()],
        };
        let mut groups = vec![Self::group(
            dim,
            None,
            &spec.operator,
            1.0,
            &points.interior,
            &f,
            &weights,
            embedding,
        )?];
        for cp in &points.conditions {
            let c = &spec.conditions[cp.condition];
            let target: Vec<f64> = cp.coords.chunks_exact(dim).map(|p| c.target.value(p)).collect();
            let coef = match c.kind {
                ConditionKind::Boundary => cfg.tau_b,
                _ => cfg.tau_0,
            };
            let ones = vec![1.0; target.len()];
            groups.push(Self::group(
                dim,
                Some(c.kind),
                &c.form,
                coef,
                &cp.coords,
                &target,
                &ones,
                embedding,
            )?);
        }
        Ok(TrainingSet { groups })
    }

    #[allow(clippy::too_many_arguments)]
    fn group(
        dim: usize,
        kind: Option<ConditionKind>,
        operator: &DiffOperator,
        coef: f64,
        coords: &[f64],
        target: &[f64],
        weight: &[f64],
        embedding: Option<&EmbeddingFn>,
    ) -> Result<Group> {
        let layout = Layout::with_partials(dim, &operator.partials())?;
        let n = target.len();
        let chunks = chunk_ranges(n, CHUNK)
            .into_iter()
            .map(|r| {
                let pts = coords[r.start * dim..r.end * dim].to_vec();
                let hbar = embedding.map(|e| e.batch(&layout, &pts)).transpose()?;
                Ok(Chunk {
                    coords: pts,
                    hbar,
                    target: target[r.clone()].to_vec(),
                    weight: weight[r].to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Group {
            kind,
            layout,
            operator: operator.clone(),
            coef,
            n,
            chunks,
        })
    }

    /// Interior weights in point order.
    pub fn interior_weights(&self) -> Vec<f64> {
        self.groups[0]
            .chunks
            .iter()
            .flat_map(|c| c.weight.iter().copied())
            .collect()
    }
}

/// Loss, its components and the parameter gradient.
pub fn assemble_loss<M: Surrogate + ?Sized>(
    model: &M,
    set: &TrainingSet,
    exec: Execution,
    with_grad: bool,
) -> Result<(LossParts, Vec<f64>)> {
    assemble_loss_with(model, set, exec, with_grad, None)
}

/// [`assemble_loss`] with an optional activation fault on every tape.
pub fn assemble_loss_with<M: Surrogate + ?Sized>(
    model: &M,
    set: &TrainingSet,
    exec: Execution,
    with_grad: bool,
    fault: Option<Fault>,
) -> Result<(LossParts, Vec<f64>)> {
    let work: Vec<(usize, usize)> = set
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| (0..grp.chunks.len()).map(move |c| (g, c)))
        .collect();
    let params = model.params();
    let parts = map_indexed(exec, work.len(), |w| -> Result<(f64, Option<Vec<f64>>)> {
        let (g, c) = work[w];
        let grp = &set.groups[g];
        let chunk = &grp.chunks[c];
        let m = chunk.target.len();
        let mut tape = Tape::new(grp.layout.clone(), m, params).with_fault(fault);
        let x = tape.input(&chunk.coords)?;
        let hbar = match &chunk.hbar {
            Some(b) => Some(tape.constant(b.clone())?),
            None => None,
        };
        let out = model.record(&mut tape, x, hbar)?;
        let jets = tape.output_jets(out)?;
        let mut sum = 0.0;
        let mut seed = Array2::zeros((1, grp.layout.n_comp() * m));
        let scale = 2.0 * grp.coef / grp.n as f64;
        for (p, jet) in jets.iter().enumerate() {
            let (val, sens) = grp.operator.linearize(jet);
            let r = val - chunk.target[p];
            let w = chunk.weight[p];
            sum += w * r * r;
            if with_grad {
                for (partial, d) in sens {
                    let comp = grp.layout.comp(partial).expect("layout covers operator");
                    seed[[0, comp * m + p]] += scale * w * r * d;
                }
            }
        }
        let grad = if with_grad {
            Some(tape.backward(out, &seed)?)
        } else {
            None
        };
        Ok((sum, grad))
    });
    let mut loss = LossParts::default();
    let mut grad = vec![0.0; if with_grad { params.len() } else { 0 }];
    for (w, part) in parts.into_iter().enumerate() {
        let (sum, gchunk) = part?;
        let grp = &set.groups[work[w].0];
        *loss.slot(grp.kind) += sum / grp.n as f64;
        if let Some(gc) = gchunk {
            for (a, b) in grad.iter_mut().zip(gc) {
                *a += b;
            }
        }
    }
    loss.total = set
        .groups
        .iter()
        .map(|g| g.coef * loss.get(g.kind))
        .sum();
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: LossParts,
    pub rel_l2: Option<f64>,
    pub wall_ms: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from(
        "iter,loss_total,loss_interior,loss_boundary,loss_initial,loss_velocity,loss_final,rel_l2,wall_ms\n",
    );
    for r in rows {
        let l = &r.loss;
        let e = r.rel_l2.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.iter, l.total, l.interior, l.boundary, l.initial, l.velocity, l.final_, e, r.wall_ms
        );
    }
    s
}

/// Result of a training run; `failure` is set when it stopped early.
#[derive(Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub points: PointSet,
    pub history: Vec<HistoryRow>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub failure: Option<Error>,
    pub wall_ms: f64,
}

impl<M> TrainOutcome<M> {
    pub fn final_rel_l2(&self) -> Option<f64> {
        self.history.iter().rev().find_map(|r| r.rel_l2)
    }
}

fn divergence(iteration: usize, e: Error) -> Error {
    match e {
        Error::Diverged { .. } => e,
        e if e.is_numeric() => Error::Diverged {
            iteration,
            message: e.to_string(),
        },
        e => e,
    }
}

/// Train `model` on fixed points. `grid` is used for the periodic error.
pub fn train_with_points<M: Surrogate + Clone>(
    mut model: M,
    set: &TrainingSet,
    points: PointSet,
    cfg: &TrainConfig,
    grid: Option<&EvalGrid>,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    let start = Instant::now();
    let mut adam = AdamState::new(model.params().len());
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let mut snapshots = Vec::new();
    let mut failure = None;
    for k in 0..=cfg.iters {
        let last = k == cfg.iters;
        let step = assemble_loss(&model, set, cfg.execution, !last).map_err(|e| divergence(k, e));
        let (loss, grad) = match step {
            Ok(v) => v,
            Err(e) if matches!(e, Error::Diverged { .. }) => {
                failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        if !loss.total.is_finite() {
            failure = Some(Error::Diverged {
                iteration: k,
                message: format!("loss became {}", loss.total),
            });
            break;
        }
        let rel_l2 = if k % cfg.eval_every == 0 || last {
            if cfg.snapshots {
                snapshots.push((k, model.params().to_vec()));
            }
            match grid {
                Some(g) => Some(relative_l2(
                    &g.exact,
                    &predict(&model, &g.coords, Branch::Total, cfg.execution)?,
                )?),
                None => None,
            }
        } else {
            None
        };
        history.push(HistoryRow {
            iter: k,
            loss,
            rel_l2,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if last {
            break;
        }
        let mut adam_err = None;
        {
            let params = model.params_mut();
            if let Err(e) = adam_step(params, &grad, &mut adam, cfg.lr) {
                adam_err = Some(divergence(k, e));
            }
        }
        if let Some(e) = adam_err {
            failure = Some(match e {
                Error::Diverged { message, .. } => Error::Diverged { iteration: k, message },
                e => e,
            });
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        points,
        history,
        snapshots,
        failure,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Sample points, build an FG network and train it.
pub fn train(spec: &ProblemSpec, cfg: &TrainConfig) -> Result<TrainOutcome<FgModel>> {
    cfg.validate()?;
    let points = sample_conditions(spec, &cfg.counts(), cfg.seed)?;
    train_fg_on(spec, cfg, points)
}

pub fn train_fg_on(spec: &ProblemSpec, cfg: &TrainConfig, points: PointSet) -> Result<TrainOutcome<FgModel>> {
    cfg.validate()?;
    let embed = EmbeddingFn::fit(spec.embedding_field(), cfg.k_star, &points.interior, spec.dim)?;
    let model = FgModel::new(cfg.architecture(ModelKind::Fg, spec.dim), embed, cfg.seed)?;
    let set = TrainingSet::new(spec, &points, Some(&model.embed), Weighting::Source, cfg)?;
    let grid = headline_grid(spec)?;
    train_with_points(model, &set, points, cfg, Some(&grid))
}

/// Plain PINN on the same points and budget, with `τ = 1` in the interior.
pub fn train_baseline(spec: &ProblemSpec, cfg: &TrainConfig) -> Result<TrainOutcome<BaselineModel>> {
    cfg.validate()?;
    let points = sample_conditions(spec, &cfg.counts(), cfg.seed)?;
    train_baseline_on(spec, cfg, points)
}

pub fn train_baseline_on(
    spec: &ProblemSpec,
    cfg: &TrainConfig,
    points: PointSet,
) -> Result<TrainOutcome<BaselineModel>> {
    cfg.validate()?;
    let model = BaselineModel::new(cfg.architecture(ModelKind::Baseline, spec.dim), cfg.seed)?;
    let set = TrainingSet::new(spec, &points, None, Weighting::Uniform, cfg)?;
    let grid = headline_grid(spec)?;
    train_with_points(model, &set, points, cfg, Some(&grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_benchmark;

    #[test]
    fn residual_weight_examples() {
        assert_eq!(residual_weight(0.0, 5.0, 1.0), 1.0);
        assert_eq!(residual_weight(3.0, 0.0, 1.0), 1.0);
        assert!((residual_weight(5.0, 5.0, 1.0) - 0.36788).abs() < 1e-5);
        assert!((residual_weight(2.5, 5.0, 1.0) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn two_point_weighted_loss() {
        let w = [residual_weight(0.0, 1.0, 1.0), residual_weight(1.0, 1.0, 1.0)];
        let l = weighted_mean_sq(&[1.0, 1.0], &w);
        assert!((l - 0.68394).abs() < 1e-5);
    }

    #[test]
    fn adam_fixed_point_and_first_step() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn adam_constant_gradient_steps_approach_lr() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let mut prev = 0.0;
        for _ in 0..2000 {
            adam_step(&mut p, &[0.3], &mut s, 1e-3).unwrap();
            let d = prev - p[0];
            prev = p[0];
            assert!((d - 1e-3).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN], &mut s, 1e-3),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.lr = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config { field: ref f, .. }) if f == "lr"));
        let mut c = TrainConfig::default();
        c.k_star = 0.5;
        assert!(matches!(c.validate(), Err(Error::Config { field: ref f, .. }) if f == "k_star"));
    }

    fn tiny(id: BenchmarkId) -> TrainConfig {
        let mut c = TrainConfig::for_benchmark(id);
        c.n_interior = 40;
        for n in [&mut c.n_boundary, &mut c.n_initial, &mut c.n_velocity, &mut c.n_final] {
            if *n > 0 {
                *n = (*n).min(16);
            }
        }
        c.width = 6;
        c.lf_depth = 2;
        c.modules = 2;
        c.eval_every = 2;
        c
    }

    #[test]
    fn homogeneous_problem_has_unit_weights() {
        let spec = make_benchmark(BenchmarkId::Heat1d);
        let cfg = tiny(BenchmarkId::Heat1d);
        let pts = sample_conditions(&spec, &cfg.counts(), 1).unwrap();
        let set = TrainingSet::new(&spec, &pts, None, Weighting::Source, &cfg).unwrap();
        assert!(set.interior_weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn interior_weights_are_bounded() {
        let spec = make_benchmark(BenchmarkId::Poisson1d);
        let cfg = tiny(BenchmarkId::Poisson1d);
        let pts = sample_conditions(&spec, &cfg.counts(), 1).unwrap();
        let set = TrainingSet::new(&spec, &pts, None, Weighting::Source, &cfg).unwrap();
        let lo = (-cfg.k_tau).exp();
        assert!(set.interior_weights().iter().all(|&w| (lo - 1e-15..=1.0).contains(&w)));
    }

    #[test]
    fn zero_iterations_give_only_initial_evaluation() {
        let spec = make_benchmark(BenchmarkId::Poisson1d);
        let mut cfg = tiny(BenchmarkId::Poisson1d);
        cfg.iters = 0;
        let out = train(&spec, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].iter, 0);
        assert!(out.history[0].rel_l2.is_some());
    }

    #[test]
    fn total_is_weighted_sum_of_components() {
        for id in BenchmarkId::ALL {
            let spec = make_benchmark(id);
            let mut cfg = tiny(id);
            cfg.iters = 3;
            let out = train(&spec, &cfg).unwrap();
            assert!(out.failure.is_none());
            for r in &out.history {
                let l = r.loss;
                let sum = l.interior
                    + cfg.tau_b * l.boundary
                    + cfg.tau_0 * (l.initial + l.velocity + l.final_);
                assert!((sum - l.total).abs() <= 1e-12 * l.total.abs().max(1.0));
            }
        }
    }

    #[test]
    fn modes_and_reruns_are_bit_identical() {
        let spec = make_benchmark(BenchmarkId::Wave4);
        let mut cfg = tiny(BenchmarkId::Wave4);
        cfg.iters = 3;
        cfg.n_interior = 300;
        let a = train(&spec, &cfg).unwrap();
        let b = train(&spec, &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let c = train(&spec, &cfg).unwrap();
        let losses = |o: &TrainOutcome<FgModel>| o.history.iter().map(|r| r.loss).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(losses(&a), losses(&c));
        assert_eq!(a.model.params(), c.model.params());
    }

    #[test]
    fn history_csv_header() {
        let csv = history_csv(&[]);
        assert_eq!(
            csv.trim_end(),
            "iter,loss_total,loss_interior,loss_boundary,loss_initial,loss_velocity,loss_final,rel_l2,wall_ms"
        );
    }
}
