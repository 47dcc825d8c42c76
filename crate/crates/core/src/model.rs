//! Network definitions: the low-frequency MLP, the gated high-frequency
//! module stack and their additive fusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Activation, Fault, Jet2, JetBatch, Layout, NodeId, ParamSlot, Tape};
use crate::error::{Error, Result};
use crate::exec::{chunk_ranges, map_indexed, Execution, CHUNK};
use crate::field::Field;

/// RNG stream reserved for parameter initialization.
pub const INIT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// High-frequency module stack plus low-frequency MLP.
    Fg,
    /// A single MLP trained on the unweighted loss.
    Baseline,
}

/// Shape hyperparameters of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub in_dim: usize,
    pub width: usize,
    pub lf_depth: usize,
    pub modules: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        crate::autodiff::jet_seed(&vec![0.0; self.in_dim]).map(|_| ())?;
        if self.width == 0 {
            return Err(Error::config("width", "must be at least 1"));
        }
        if self.lf_depth == 0 {
            return Err(Error::config("lf_depth", "must be at least 1"));
        }
        if self.kind == ModelKind::Fg && self.modules == 0 {
            return Err(Error::config("modules", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: ParamSlot,
    pub bias: ParamSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Vec<DenseLayer>,
    pub output: DenseLayer,
    pub activation: Activation,
}

impl Mlp {
    fn record(&self, tape: &mut Tape<'_>, x: NodeId, layer0: usize) -> Result<NodeId> {
        let mut h = x;
        for (m, layer) in self.hidden.iter().enumerate() {
            tape.set_layer(layer0 + m);
            let z = tape.affine(h, layer.weight, layer.bias)?;
            h = tape.act(z, self.activation)?;
        }
        tape.set_layer(layer0 + self.hidden.len());
        tape.affine(h, self.output.weight, self.output.bias)
    }
}

/// One gated module of the high-frequency subnetwork.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HfModule {
    pub wq: ParamSlot,
    pub wk: ParamSlot,
    pub wv: ParamSlot,
    pub mix: DenseLayer,
    /// Unconstrained; the gate weight is `sigmoid(alpha_raw)`.
    pub alpha_raw: ParamSlot,
}

impl HfModule {
    pub fn alpha(&self, params: &[f64]) -> f64 {
        sigmoid(params[self.alpha_raw.offset])
    }

    fn record(
        &self,
        tape: &mut Tape<'_>,
        h_prev: NodeId,
        hbar: NodeId,
        act: Activation,
    ) -> Result<NodeId> {
        let q = tape.linear(h_prev, self.wq)?;
        let k = tape.linear(h_prev, self.wk)?;
        let v = tape.linear(h_prev, self.wv)?;
        let qk = tape.hadamard(q, k)?;
        let s = tape.act(qk, act)?;
        let a = tape.hadamard(s, v)?;
        let h = tape.gate(a, hbar, self.alpha_raw)?;
        let z = tape.affine(h, self.mix.weight, self.mix.bias)?;
        tape.act(z, act)
    }
}

/// Normalized prior function `ħ = raw / norm_constant`.
#[derive(Debug, Clone)]
pub struct EmbeddingFn {
    raw: Field,
    norm_constant: f64,
    k_star: f64,
}

impl EmbeddingFn {
    /// Fix the normalization from the interior training set:
    /// `norm_constant = K*·max|raw|`.
    pub fn fit(raw: Field, k_star: f64, interior: &[f64], dim: usize) -> Result<Self> {
        if !(k_star >= 1.0) {
            return Err(Error::config("k_star", format!("must be >= 1, got {k_star}")));
        }
        let max = interior
            .chunks_exact(dim)
            .map(|p| raw.value(p).abs())
            .fold(0.0f64, f64::max);
        Self::with_norm(raw, k_star, k_star * max)
    }

    pub fn with_norm(raw: Field, k_star: f64, norm_constant: f64) -> Result<Self> {
        if !(norm_constant > 0.0) || !norm_constant.is_finite() {
            return Err(Error::config(
                "embedding",
                format!(
                    "embedded function `{}` vanishes on the training set; a constant source \
                     carries no frequency prior, so disable the high-frequency embedding or \
                     embed an initial/boundary function instead",
                    raw.label()
                ),
            ));
        }
        Ok(EmbeddingFn {
            raw,
            norm_constant,
            k_star,
        })
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn k_star(&self) -> f64 {
        self.k_star
    }

    pub fn raw(&self) -> &Field {
        &self.raw
    }

    pub fn eval(&self, point: &[f64]) -> Result<Jet2> {
        Ok(self.raw.jet(point)?.scale(1.0 / self.norm_constant))
    }

    /// One-row prior batch for points given row-major.
    pub fn batch(&self, layout: &Layout, coords: &[f64]) -> Result<JetBatch> {
        let jets = coords
            .chunks_exact(layout.dim())
            .map(|p| self.eval(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetBatch::from_jets(layout, &jets))
    }
}

/// Which part of the fused network to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Total,
    High,
    Low,
}

/// Anything trainable as a PDE surrogate.
pub trait Surrogate: Send + Sync {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn architecture(&self) -> &Architecture;
    fn embedding(&self) -> Option<&EmbeddingFn>;

    /// Record the network on `tape` and return the scalar output node.
    fn record_branch(
        &self,
        tape: &mut Tape<'_>,
        x: NodeId,
        hbar: Option<NodeId>,
        branch: Branch,
    ) -> Result<NodeId>;

    fn record(&self, tape: &mut Tape<'_>, x: NodeId, hbar: Option<NodeId>) -> Result<NodeId> {
        self.record_branch(tape, x, hbar, Branch::Total)
    }
}

/// Record inputs (and the prior, when the model has one) for `coords`.
pub fn record_inputs<'p, M: Surrogate + ?Sized>(
    model: &M,
    tape: &mut Tape<'p>,
    coords: &[f64],
) -> Result<(NodeId, Option<NodeId>)> {
    let x = tape.input(coords)?;
    let hbar = match model.embedding() {
        Some(e) => {
            let b = e.batch(tape.layout(), coords)?;
            Some(tape.constant(b)?)
        }
        None => None,
    };
    Ok((x, hbar))
}

/// Jets of a branch at many points, evaluated chunk by chunk.
pub fn eval_jets<M: Surrogate + ?Sized>(
    model: &M,
    coords: &[f64],
    layout: &Layout,
    branch: Branch,
    exec: Execution,
    fault: Option<Fault>,
) -> Result<Vec<Jet2>> {
    let dim = layout.dim();
    if dim != model.architecture().in_dim {
        return Err(Error::usage(format!(
            "layout dimension {dim} differs from model input dimension {}",
            model.architecture().in_dim
        )));
    }
    let n = coords.len() / dim;
    let ranges = chunk_ranges(n, CHUNK * 4);
    let parts = map_indexed(exec, ranges.len(), |c| -> Result<Vec<Jet2>> {
        let r = &ranges[c];
        let pts = &coords[r.start * dim..r.end * dim];
        let mut tape = Tape::new(layout.clone(), r.len(), model.params()).with_fault(fault);
        let (x, hbar) = record_inputs(model, &mut tape, pts)?;
        let out = model.record_branch(&mut tape, x, hbar, branch)?;
        tape.output_jets(out)
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Values of a branch at many points.
pub fn predict<M: Surrogate + ?Sized>(model: &M, coords: &[f64], branch: Branch, exec: Execution) -> Result<Vec<f64>> {
    let layout = Layout::value_only(model.architecture().in_dim)?;
    Ok(eval_jets(model, coords, &layout, branch, exec, None)?
        .into_iter()
        .map(|j| j.value)
        .collect())
}

/// Full 2-jet of the network output at one point.
pub fn network_jet<M: Surrogate + ?Sized>(model: &M, point: &[f64]) -> Result<Jet2> {
    let layout = Layout::full(point.len())?;
    Ok(eval_jets(model, point, &layout, Branch::Total, Execution::Sequential, None)?[0])
}

struct SlotAllocator {
    len: usize,
}

impl SlotAllocator {
    fn slot(&mut self, rows: usize, cols: usize) -> ParamSlot {
        let s = ParamSlot {
            offset: self.len,
            rows,
            cols,
        };
        self.len += rows * cols;
        s
    }

    fn dense(&mut self, out: usize, inp: usize) -> DenseLayer {
        DenseLayer {
            weight: self.slot(out, inp),
            bias: self.slot(out, 1),
        }
    }

    fn mlp(&mut self, in_dim: usize, width: usize, depth: usize, act: Activation) -> Mlp {
        let hidden = (0..depth)
            .map(|m| self.dense(width, if m == 0 { in_dim } else { width }))
            .collect();
        Mlp {
            hidden,
            output: self.dense(1, width),
            activation: act,
        }
    }
}

/// Glorot-uniform weights, zero biases, `alpha_raw = 0`.
fn initialize(params: &mut [f64], weights: &[ParamSlot], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    for w in weights {
        let bound = glorot_bound(w.cols, w.rows);
        for v in &mut params[w.range()] {
            *v = rng.random_range(-bound..=bound);
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Frequency-guided network: `u* = u_h + u_l`.
#[derive(Debug, Clone)]
pub struct FgModel {
    pub arch: Architecture,
    pub seed: u64,
    params: Vec<f64>,
    pub hf_modules: Vec<HfModule>,
    pub hf_output: DenseLayer,
    pub lf: Mlp,
    pub embed: EmbeddingFn,
}

impl FgModel {
    pub fn new(arch: Architecture, embed: EmbeddingFn, seed: u64) -> Result<Self> {
        if arch.kind != ModelKind::Fg {
            return Err(Error::usage("FgModel needs an Fg architecture"));
        }
        arch.validate()?;
        let mut alloc = SlotAllocator { len: 0 };
        let mut weights = Vec::new();
        let hf_modules: Vec<HfModule> = (0..arch.modules)
            .map(|n| {
                let inp = if n == 0 { arch.in_dim } else { arch.width };
                let m = HfModule {
                    wq: alloc.slot(arch.width, inp),
                    wk: alloc.slot(arch.width, inp),
                    wv: alloc.slot(arch.width, inp),
                    mix: alloc.dense(arch.width, arch.width),
                    alpha_raw: alloc.slot(1, 1),
                };
                weights.extend([m.wq, m.wk, m.wv, m.mix.weight]);
                m
            })
            .collect();
        let hf_output = alloc.dense(1, arch.width);
        weights.push(hf_output.weight);
        let lf = alloc.mlp(arch.in_dim, arch.width, arch.lf_depth, arch.activation);
        weights.extend(lf.hidden.iter().map(|l| l.weight));
        weights.push(lf.output.weight);
        let mut params = vec![0.0; alloc.len];
        initialize(&mut params, &weights, seed);
        Ok(FgModel {
            arch,
            seed,
            params,
            hf_modules,
            hf_output,
            lf,
            embed,
        })
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.hf_modules.iter().map(|m| m.alpha(&self.params)).collect()
    }

    pub fn hf_forward(&self, point: &[f64]) -> Result<Jet2> {
        self.branch_jet(point, Branch::High)
    }

    pub fn mlp_forward(&self, point: &[f64]) -> Result<Jet2> {
        self.branch_jet(point, Branch::Low)
    }

    pub fn fg_forward(&self, point: &[f64]) -> Result<Jet2> {
        self.branch_jet(point, Branch::Total)
    }

    fn branch_jet(&self, point: &[f64], branch: Branch) -> Result<Jet2> {
        let layout = Layout::full(point.len())?;
        Ok(eval_jets(self, point, &layout, branch, Execution::Sequential, None)?[0])
    }

    pub fn param_slot_names(&self) -> Vec<(String, ParamSlot)> {
        let mut out = Vec::new();
        for (n, m) in self.hf_modules.iter().enumerate() {
            out.push((format!("hf{n}.wq"), m.wq));
            out.push((format!("hf{n}.wk"), m.wk));
            out.push((format!("hf{n}.wv"), m.wv));
            out.push((format!("hf{n}.w"), m.mix.weight));
            out.push((format!("hf{n}.b"), m.mix.bias));
            out.push((format!("hf{n}.alpha_raw"), m.alpha_raw));
        }
        out.push(("hf_out.w".into(), self.hf_output.weight));
        out.push(("hf_out.b".into(), self.hf_output.bias));
        push_mlp_names(&mut out, &self.lf);
        out
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        Checkpoint::build(
            self.arch,
            self.seed,
            Some((self.embed.raw.label().to_string(), self.embed.norm_constant, self.embed.k_star)),
            &self.param_slot_names(),
            &self.params,
            meta,
        )
    }

    /// Rebuild from a checkpoint; the raw embedded function is not
    /// serializable and must be supplied again.
    pub fn from_checkpoint(ckpt: &Checkpoint, raw: Field) -> Result<Self> {
        let (_, norm, k_star) = ckpt
            .embedding
            .clone()
            .ok_or_else(|| Error::usage("checkpoint has no embedding"))?;
        let embed = EmbeddingFn::with_norm(raw, k_star, norm)?;
        let mut model = FgModel::new(ckpt.arch, embed, ckpt.seed)?;
        ckpt.restore(&model.param_slot_names(), &mut model.params)?;
        Ok(model)
    }
}

fn push_mlp_names(out: &mut Vec<(String, ParamSlot)>, mlp: &Mlp) {
    for (m, l) in mlp.hidden.iter().enumerate() {
        out.push((format!("lf{m}.w"), l.weight));
        out.push((format!("lf{m}.b"), l.bias));
    }
    out.push(("lf_out.w".into(), mlp.output.weight));
    out.push(("lf_out.b".into(), mlp.output.bias));
}

impl Surrogate for FgModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn architecture(&self) -> &Architecture {
        &self.arch
    }

    fn embedding(&self) -> Option<&EmbeddingFn> {
        Some(&self.embed)
    }

    fn record_branch(
        &self,
        tape: &mut Tape<'_>,
        x: NodeId,
        hbar: Option<NodeId>,
        branch: Branch,
    ) -> Result<NodeId> {
        let hf = |tape: &mut Tape<'_>| -> Result<NodeId> {
            let hbar = hbar.ok_or_else(|| Error::usage("high-frequency branch needs the prior"))?;
            let mut h = x;
            for (n, m) in self.hf_modules.iter().enumerate() {
                tape.set_layer(n + 1);
                h = m.record(tape, h, hbar, self.arch.activation)?;
            }
            tape.set_layer(self.hf_modules.len() + 1);
            tape.affine(h, self.hf_output.weight, self.hf_output.bias)
        };
        let lf_layer0 = self.hf_modules.len() + 2;
        match branch {
            Branch::High => hf(tape),
            Branch::Low => self.lf.record(tape, x, lf_layer0),
            Branch::Total => {
                let uh = hf(tape)?;
                let ul = self.lf.record(tape, x, lf_layer0)?;
                tape.add(uh, ul)
            }
        }
    }
}

/// Plain MLP surrogate used as the comparison baseline.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub arch: Architecture,
    pub seed: u64,
    params: Vec<f64>,
    pub mlp: Mlp,
}

impl BaselineModel {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let arch = Architecture {
            kind: ModelKind::Baseline,
            ..arch
        };
        let mut alloc = SlotAllocator { len: 0 };
        let mlp = alloc.mlp(arch.in_dim, arch.width, arch.lf_depth, arch.activation);
        let mut weights: Vec<ParamSlot> = mlp.hidden.iter().map(|l| l.weight).collect();
        weights.push(mlp.output.weight);
        let mut params = vec![0.0; alloc.len];
        initialize(&mut params, &weights, seed);
        Ok(BaselineModel {
            arch,
            seed,
            params,
            mlp,
        })
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut names = Vec::new();
        push_mlp_names(&mut names, &self.mlp);
        Checkpoint::build(self.arch, self.seed, None, &names, &self.params, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut model = BaselineModel::new(ckpt.arch, ckpt.seed)?;
        let mut names = Vec::new();
        push_mlp_names(&mut names, &model.mlp);
        ckpt.restore(&names, &mut model.params)?;
        Ok(model)
    }
}

impl Surrogate for BaselineModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn architecture(&self) -> &Architecture {
        &self.arch
    }

    fn embedding(&self) -> Option<&EmbeddingFn> {
        None
    }

    fn record_branch(
        &self,
        tape: &mut Tape<'_>,
        x: NodeId,
        _hbar: Option<NodeId>,
        branch: Branch,
    ) -> Result<NodeId> {
        match branch {
            Branch::High => Err(Error::usage("baseline model has no high-frequency branch")),
            _ => self.mlp.record(tape, x, 1),
        }
    }
}

/// One named parameter tensor with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDump {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Self-describing parameter dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub arch: Architecture,
    pub seed: u64,
    /// `(embedded function label, norm constant, K*)`
    pub embedding: Option<(String, f64, f64)>,
    pub tensors: Vec<TensorDump>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub const CHECKPOINT_FORMAT: &str = "fgpinn-checkpoint/1";

impl Checkpoint {
    fn build(
        arch: Architecture,
        seed: u64,
        embedding: Option<(String, f64, f64)>,
        names: &[(String, ParamSlot)],
        params: &[f64],
        meta: serde_json::Value,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            arch,
            seed,
            embedding,
            tensors: names
                .iter()
                .map(|(name, s)| TensorDump {
                    name: name.clone(),
                    shape: [s.rows, s.cols],
                    data: params[s.range()].to_vec(),
                })
                .collect(),
            meta,
        }
    }

    fn restore(&self, names: &[(String, ParamSlot)], params: &mut [f64]) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::usage(format!("unknown checkpoint format `{}`", self.format)));
        }
        if self.tensors.len() != names.len() {
            return Err(Error::usage("checkpoint tensor count does not match architecture"));
        }
        for (t, (name, slot)) in self.tensors.iter().zip(names) {
            if &t.name != name || t.shape != [slot.rows, slot.cols] || t.data.len() != slot.len() {
                return Err(Error::usage(format!(
                    "checkpoint tensor `{}` {:?} does not match `{name}` {:?}",
                    t.name,
                    t.shape,
                    [slot.rows, slot.cols]
                )));
            }
            params[slot.range()].copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::usage(format!("bad checkpoint: {e}")))
    }
}
