//! Batched jet evaluation with a reverse pass over parameters.
//!
//! A [`Tape`] records vector-valued operations applied to a batch of points.
//! Every intermediate is a [`JetBatch`]: for each row (neuron) and each point
//! it carries the value and the tracked first and second input partials.
//! Affine maps act on all jet components at once, so a layer is a single
//! matrix product over `rows × (components · points)` data.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use super::activation::{Activation, Fault};
use super::jet::{check_dim, tri_index, Jet2, Partial};
use crate::error::{Error, Result};

/// Which jet components a batch carries.
///
/// Component 0 is always the value. Then come the tracked first partials
/// (ascending axis) and then the tracked second partials (ascending pair).
/// A second partial `(i, j)` may only be tracked if both `∂_i` and `∂_j` are.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    dim: usize,
    grads: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    pair_comps: Vec<(usize, usize)>,
}

impl Layout {
    pub fn full(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let grads: Vec<usize> = (0..dim).collect();
        let pairs = (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .collect();
        Ok(Self::build(dim, grads, pairs))
    }

    pub fn value_only(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::build(dim, Vec::new(), Vec::new()))
    }

    /// Smallest layout able to produce every requested partial exactly.
    pub fn with_partials(dim: usize, partials: &[Partial]) -> Result<Self> {
        check_dim(dim)?;
        let mut grads = Vec::new();
        let mut pairs = Vec::new();
        for p in partials {
            match p.canonical() {
                Partial::Value => {}
                Partial::D(i) => grads.push(i),
                Partial::D2(i, j) => {
                    grads.push(i);
                    grads.push(j);
                    pairs.push((i, j));
                }
            }
        }
        if grads.iter().any(|&i| i >= dim) {
            return Err(Error::usage(format!(
                "partial references an axis outside dimension {dim}"
            )));
        }
        grads.sort_unstable();
        grads.dedup();
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::build(dim, grads, pairs))
    }

    fn build(dim: usize, grads: Vec<usize>, pairs: Vec<(usize, usize)>) -> Self {
        let pair_comps = pairs
            .iter()
            .map(|&(i, j)| {
                let ci = 1 + grads.iter().position(|&g| g == i).unwrap();
                let cj = 1 + grads.iter().position(|&g| g == j).unwrap();
                (ci, cj)
            })
            .collect();
        Layout {
            dim,
            grads,
            pairs,
            pair_comps,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_comp(&self) -> usize {
        1 + self.grads.len() + self.pairs.len()
    }

    pub fn n_grads(&self) -> usize {
        self.grads.len()
    }

    pub fn comp(&self, p: Partial) -> Option<usize> {
        match p.canonical() {
            Partial::Value => Some(0),
            Partial::D(i) => self.grads.iter().position(|&g| g == i).map(|k| 1 + k),
            Partial::D2(i, j) => self
                .pairs
                .iter()
                .position(|&q| q == (i, j))
                .map(|k| 1 + self.grads.len() + k),
        }
    }

    /// Partials in component order.
    pub fn partials(&self) -> Vec<Partial> {
        let mut out = vec![Partial::Value];
        out.extend(self.grads.iter().map(|&i| Partial::D(i)));
        out.extend(self.pairs.iter().map(|&(i, j)| Partial::D2(i, j)));
        out
    }

    pub fn is_full(&self) -> bool {
        self.grads.len() == self.dim && self.pairs.len() == self.dim * (self.dim + 1) / 2
    }

    /// Scatter a full jet into component order; untracked entries are dropped.
    pub fn pack(&self, jet: &Jet2, out: &mut [f64]) {
        out[0] = jet.value;
        for (k, &i) in self.grads.iter().enumerate() {
            out[1 + k] = jet.grad(i);
        }
        let ng = self.grads.len();
        for (q, &(i, j)) in self.pairs.iter().enumerate() {
            out[1 + ng + q] = jet.hess(i, j);
        }
    }

    /// Assemble a jet from component order; untracked entries are zero.
    pub fn unpack(&self, comps: &[f64]) -> Jet2 {
        let mut jet = Jet2::zero(self.dim);
        jet.value = comps[0];
        for (k, &i) in self.grads.iter().enumerate() {
            jet.set(Partial::D(i), comps[1 + k]);
        }
        let ng = self.grads.len();
        for (q, &(i, j)) in self.pairs.iter().enumerate() {
            jet.set(Partial::D2(i, j), comps[1 + ng + q]);
        }
        debug_assert!(tri_index(0, 0, self.dim) == 0);
        jet
    }
}

/// `rows × (n_comp · n)` block matrix of jet components.
///
/// Column `c · n + p` holds component `c` of point `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    pub n: usize,
    pub data: Array2<f64>,
}

impl JetBatch {
    pub fn zeros(layout: &Layout, rows: usize, n: usize) -> Self {
        JetBatch {
            n,
            data: Array2::zeros((rows, layout.n_comp() * n)),
        }
    }

    /// One-row batch from per-point jets.
    pub fn from_jets(layout: &Layout, jets: &[Jet2]) -> Self {
        let n = jets.len();
        let nc = layout.n_comp();
        let mut out = JetBatch::zeros(layout, 1, n);
        let mut buf = vec![0.0; nc];
        {
            let row = out.data.as_slice_mut().unwrap();
            for (p, jet) in jets.iter().enumerate() {
                layout.pack(jet, &mut buf);
                for c in 0..nc {
                    row[c * n + p] = buf[c];
                }
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn jet(&self, layout: &Layout, row: usize, p: usize) -> Jet2 {
        let nc = layout.n_comp();
        let r = self.data.row(row);
        let comps: Vec<f64> = (0..nc).map(|c| r[c * self.n + p]).collect();
        layout.unpack(&comps)
    }

    pub fn values(&self, row: usize) -> Vec<f64> {
        self.data.row(row).iter().take(self.n).copied().collect()
    }
}

/// A parameter tensor inside the flat parameter vector (row-major).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamSlot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn view<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &params[self.range()]).unwrap()
    }

    fn view_mut<'a>(&self, params: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut params[self.range()]).unwrap()
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Constant,
    Linear { x: NodeId, w: ParamSlot },
    Affine { x: NodeId, w: ParamSlot, b: ParamSlot },
    Act { x: NodeId, act: Activation },
    Hadamard { a: NodeId, b: NodeId },
    Gate { a: NodeId, hbar: NodeId, alpha: ParamSlot },
    Add { a: NodeId, b: NodeId },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Array2<f64>,
    /// Activation derivatives `σ', σ'', σ'''` as `rows × 3n`.
    aux: Option<Array2<f64>>,
    requires_grad: bool,
    layer: usize,
}

/// Append-only record of a batched jet computation.
///
/// Nodes are stored in evaluation order, so operands always precede their
/// consumers. The tape borrows the parameter vector it was recorded with.
pub struct Tape<'p> {
    layout: Layout,
    n: usize,
    params: &'p [f64],
    nodes: Vec<Node>,
    coords: Vec<f64>,
    layer: usize,
    fault: Option<Fault>,
}

impl<'p> Tape<'p> {
    pub fn new(layout: Layout, n: usize, params: &'p [f64]) -> Self {
        Tape {
            layout,
            n,
            params,
            nodes: Vec::new(),
            coords: Vec::new(),
            layer: 0,
            fault: None,
        }
    }

    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &'p [f64] {
        self.params
    }

    /// Tag subsequent nodes with a layer index for error reporting.
    pub fn set_layer(&mut self, layer: usize) {
        self.layer = layer;
    }

    /// Coordinate jets for `n` points given row-major as `n × dim`.
    pub fn input(&mut self, coords: &[f64]) -> Result<NodeId> {
        let dim = self.layout.dim();
        if coords.len() != self.n * dim {
            return Err(Error::usage(format!(
                "input has {} coordinates, expected {} points × {dim}",
                coords.len(),
                self.n
            )));
        }
        let n = self.n;
        let mut batch = JetBatch::zeros(&self.layout, dim, n);
        for a in 0..dim {
            let mut row = batch.data.row_mut(a);
            for p in 0..n {
                row[p] = coords[p * dim + a];
            }
            if let Some(c) = self.layout.comp(Partial::D(a)) {
                for p in 0..n {
                    row[c * n + p] = 1.0;
                }
            }
        }
        self.coords = coords.to_vec();
        self.push(Op::Input, batch.data, None, false)
    }

    /// Parameter-independent batch, e.g. an embedded prior function.
    pub fn constant(&mut self, batch: JetBatch) -> Result<NodeId> {
        if batch.n != self.n || batch.data.ncols() != self.layout.n_comp() * self.n {
            return Err(Error::usage("constant batch does not match tape layout"));
        }
        self.push(Op::Constant, batch.data, None, false)
    }

    pub fn linear(&mut self, x: NodeId, w: ParamSlot) -> Result<NodeId> {
        let xv = &self.node(x)?.value;
        check_shape(w.cols, xv.nrows(), "linear")?;
        let mut y = Array2::zeros((w.rows, xv.ncols()));
        general_mat_mul(1.0, &w.view(self.params), xv, 0.0, &mut y);
        let rg = true;
        self.push(Op::Linear { x, w }, y, None, rg)
    }

    pub fn affine(&mut self, x: NodeId, w: ParamSlot, b: ParamSlot) -> Result<NodeId> {
        let xv = &self.node(x)?.value;
        check_shape(w.cols, xv.nrows(), "affine")?;
        check_shape(b.len(), w.rows, "affine bias")?;
        let mut y = Array2::zeros((w.rows, xv.ncols()));
        general_mat_mul(1.0, &w.view(self.params), xv, 0.0, &mut y);
        let bias = &self.params[b.range()];
        let n = self.n;
        for (r, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
            for v in row.iter_mut().take(n) {
                *v += bias[r];
            }
        }
        self.push(Op::Affine { x, w, b }, y, None, true)
    }

    pub fn act(&mut self, x: NodeId, act: Activation) -> Result<NodeId> {
        let xnode = self.node(x)?;
        let requires_grad = xnode.requires_grad;
        let (y, aux) = act_forward(&self.layout, self.n, act, self.fault, &xnode.value);
        self.push(Op::Act { x, act }, y, Some(aux), requires_grad)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (an, bn) = (self.node(a)?, self.node(b)?);
        if an.value.dim() != bn.value.dim() {
            return Err(Error::usage("hadamard operands differ in shape"));
        }
        let rg = an.requires_grad || bn.requires_grad;
        let y = hadamard_forward(&self.layout, self.n, &an.value, &bn.value);
        self.push(Op::Hadamard { a, b }, y, None, rg)
    }

    /// `(1 − α)·a + α·ħ`, with `α = sigmoid(alpha_raw)` and the one-row `ħ`
    /// broadcast over every row of `a`.
    pub fn gate(&mut self, a: NodeId, hbar: NodeId, alpha: ParamSlot) -> Result<NodeId> {
        let (an, hn) = (self.node(a)?, self.node(hbar)?);
        if hn.value.nrows() != 1 || hn.value.ncols() != an.value.ncols() {
            return Err(Error::usage("gate prior must be a single row"));
        }
        let alpha_v = super::activation::sigmoid(self.params[alpha.offset]);
        let h = hn.value.row(0);
        let mut y = an.value.clone();
        for mut row in y.axis_iter_mut(Axis(0)) {
            for (v, &hb) in row.iter_mut().zip(h.iter()) {
                *v = (1.0 - alpha_v) * *v + alpha_v * hb;
            }
        }
        self.push(Op::Gate { a, hbar, alpha }, y, None, true)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (an, bn) = (self.node(a)?, self.node(b)?);
        if an.value.dim() != bn.value.dim() {
            return Err(Error::usage("add operands differ in shape"));
        }
        let rg = an.requires_grad || bn.requires_grad;
        let y = &an.value + &bn.value;
        self.push(Op::Add { a, b }, y, None, rg)
    }

    pub fn value(&self, id: NodeId) -> Result<&Array2<f64>> {
        Ok(&self.node(id)?.value)
    }

    /// Jets of a one-row node, one per point.
    pub fn output_jets(&self, id: NodeId) -> Result<Vec<Jet2>> {
        let node = self.node(id)?;
        if node.value.nrows() != 1 {
            return Err(Error::usage("output node must have a single row"));
        }
        let batch = JetBatch {
            n: self.n,
            data: node.value.clone(),
        };
        Ok((0..self.n).map(|p| batch.jet(&self.layout, 0, p)).collect())
    }

    /// Re-evaluate every node from the recorded operations.
    pub fn replay(&self) -> Result<Vec<Array2<f64>>> {
        let mut fresh = Tape::new(self.layout.clone(), self.n, self.params).with_fault(self.fault);
        for node in &self.nodes {
            fresh.layer = node.layer;
            match node.op {
                Op::Input => {
                    fresh.input(&self.coords)?;
                }
                Op::Constant => {
                    fresh.push(Op::Constant, node.value.clone(), None, false)?;
                }
                Op::Linear { x, w } => {
                    fresh.linear(x, w)?;
                }
                Op::Affine { x, w, b } => {
                    fresh.affine(x, w, b)?;
                }
                Op::Act { x, act } => {
                    fresh.act(x, act)?;
                }
                Op::Hadamard { a, b } => {
                    fresh.hadamard(a, b)?;
                }
                Op::Gate { a, hbar, alpha } => {
                    fresh.gate(a, hbar, alpha)?;
                }
                Op::Add { a, b } => {
                    fresh.add(a, b)?;
                }
            }
        }
        Ok(fresh.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Gradient of `Σ seed ⊙ value(root)` with respect to every parameter.
    ///
    /// `seed` holds the loss adjoint of each jet component of the root node,
    /// which is how losses depending on values, gradients and Hessian
    /// entries enter the reverse pass.
    pub fn backward(&self, root: NodeId, seed: &Array2<f64>) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(root, seed, &mut grad)?;
        Ok(grad)
    }

    /// Like [`Tape::backward`] but accumulates into `grad`.
    pub fn backward_into(&self, root: NodeId, seed: &Array2<f64>, grad: &mut [f64]) -> Result<()> {
        let rnode = self
            .nodes
            .get(root)
            .ok_or_else(|| Error::usage("tape has no terminal node to differentiate"))?;
        if rnode.value.nrows() != 1 || seed.dim() != rnode.value.dim() {
            return Err(Error::usage(format!(
                "loss seed of shape {:?} does not match scalar root of shape {:?}",
                seed.dim(),
                rnode.value.dim()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::usage("gradient buffer length differs from parameters"));
        }
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; root + 1];
        adj[root] = Some(seed.clone());
        let n = self.n;
        for id in (0..=root).rev() {
            let Some(ybar) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match node.op {
                Op::Input | Op::Constant => {}
                Op::Linear { x, w } | Op::Affine { x, w, .. } => {
                    let xnode = &self.nodes[x];
                    let xv = &xnode.value;
                    general_mat_mul(1.0, &ybar, &xv.t(), 1.0, &mut w.view_mut(grad));
                    if let Op::Affine { b, .. } = node.op {
                        let gb = &mut grad[b.range()];
                        for (r, row) in ybar.axis_iter(Axis(0)).enumerate() {
                            gb[r] += row.iter().take(n).sum::<f64>();
                        }
                    }
                    if xnode.requires_grad {
                        let mut xbar = Array2::zeros(xv.dim());
                        general_mat_mul(1.0, &w.view(self.params).t(), &ybar, 0.0, &mut xbar);
                        accumulate(&mut adj[x], xbar);
                    }
                }
                Op::Act { x, .. } => {
                    let xnode = &self.nodes[x];
                    let zbar = act_backward(
                        &self.layout,
                        n,
                        &xnode.value,
                        node.aux.as_ref().unwrap(),
                        &ybar,
                    );
                    accumulate(&mut adj[x], zbar);
                }
                Op::Hadamard { a, b } => {
                    let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
                    if self.nodes[a].requires_grad {
                        let abar = hadamard_backward(&self.layout, n, bv, &ybar);
                        accumulate(&mut adj[a], abar);
                    }
                    if self.nodes[b].requires_grad {
                        let bbar = hadamard_backward(&self.layout, n, av, &ybar);
                        accumulate(&mut adj[b], bbar);
                    }
                }
                Op::Gate { a, hbar, alpha } => {
                    let alpha_v = super::activation::sigmoid(self.params[alpha.offset]);
                    let av = &self.nodes[a].value;
                    let h = self.nodes[hbar].value.row(0);
                    let mut dalpha = 0.0;
                    for (arow, yrow) in av.axis_iter(Axis(0)).zip(ybar.axis_iter(Axis(0))) {
                        for ((&a_, &y_), &h_) in arow.iter().zip(yrow.iter()).zip(h.iter()) {
                            dalpha += y_ * (h_ - a_);
                        }
                    }
                    grad[alpha.offset] += dalpha * alpha_v * (1.0 - alpha_v);
                    if self.nodes[a].requires_grad {
                        accumulate(&mut adj[a], ybar * (1.0 - alpha_v));
                    }
                }
                Op::Add { a, b } => {
                    if self.nodes[a].requires_grad {
                        accumulate(&mut adj[a], ybar.clone());
                    }
                    if self.nodes[b].requires_grad {
                        accumulate(&mut adj[b], ybar);
                    }
                }
            }
        }
        Ok(())
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::usage(format!("node {id} is not on the tape")))
    }

    fn push(
        &mut self,
        op: Op,
        value: Array2<f64>,
        aux: Option<Array2<f64>>,
        requires_grad: bool,
    ) -> Result<NodeId> {
        if let Some(col) = first_non_finite(&value) {
            let p = col % self.n.max(1);
            let dim = self.layout.dim();
            let point = self
                .coords
                .get(p * dim..(p + 1) * dim)
                .map(|s| s.to_vec());
            return Err(Error::NonFinite {
                layer: self.layer,
                point,
            });
        }
        self.nodes.push(Node {
            op,
            value,
            aux,
            requires_grad,
            layer: self.layer,
        });
        Ok(self.nodes.len() - 1)
    }
}

fn check_shape(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::usage(format!(
            "{what}: parameter expects {expected} input rows, operand has {got}"
        )));
    }
    Ok(())
}

fn first_non_finite(a: &Array2<f64>) -> Option<usize> {
    let cols = a.ncols();
    a.as_slice()
        .and_then(|s| s.iter().position(|v| !v.is_finite()))
        .map(|i| i % cols)
}

fn accumulate(slot: &mut Option<Array2<f64>>, contrib: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &contrib,
        None => *slot = Some(contrib),
    }
}

fn act_forward(
    layout: &Layout,
    n: usize,
    act: Activation,
    fault: Option<Fault>,
    z: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let rows = z.nrows();
    let cols = z.ncols();
    let ng = layout.n_grads();
    let mut y = Array2::zeros((rows, cols));
    let mut aux = Array2::zeros((rows, 3 * n));
    let zs = z.as_slice().unwrap();
    let ys = y.as_slice_mut().unwrap();
    let auxs = aux.as_slice_mut().unwrap();
    for ((zr, yr), ar) in zs
        .chunks_exact(cols)
        .zip(ys.chunks_exact_mut(cols))
        .zip(auxs.chunks_exact_mut(3 * n))
    {
        let (d1, rest) = ar.split_at_mut(n);
        let (d2, d3) = rest.split_at_mut(n);
        for p in 0..n {
            let mut d = act.derivs(zr[p]);
            if let Some(f) = fault {
                d = f.apply(d);
            }
            yr[p] = d[0];
            d1[p] = d[1];
            d2[p] = d[2];
            d3[p] = d[3];
        }
        for c in 1..=ng {
            let zc = &zr[c * n..(c + 1) * n];
            let yc = &mut yr[c * n..(c + 1) * n];
            for p in 0..n {
                yc[p] = d1[p] * zc[p];
            }
        }
        for (q, &(ci, cj)) in layout.pair_comps.iter().enumerate() {
            let c = 1 + ng + q;
            let zi = &zr[ci * n..(ci + 1) * n];
            let zj = &zr[cj * n..(cj + 1) * n];
            let zq = &zr[c * n..(c + 1) * n];
            let yq = &mut yr[c * n..(c + 1) * n];
            for p in 0..n {
                yq[p] = d2[p] * zi[p] * zj[p] + d1[p] * zq[p];
            }
        }
    }
    (y, aux)
}

fn act_backward(
    layout: &Layout,
    n: usize,
    z: &Array2<f64>,
    aux: &Array2<f64>,
    ybar: &Array2<f64>,
) -> Array2<f64> {
    let cols = z.ncols();
    let ng = layout.n_grads();
    let mut zbar = Array2::zeros(z.dim());
    let zs = z.as_slice().unwrap();
    let ybs = ybar.as_slice().unwrap();
    let auxs = aux.as_slice().unwrap();
    let zbs = zbar.as_slice_mut().unwrap();
    for (((zr, yb), ar), zb) in zs
        .chunks_exact(cols)
        .zip(ybs.chunks_exact(cols))
        .zip(auxs.chunks_exact(3 * n))
        .zip(zbs.chunks_exact_mut(cols))
    {
        let d1 = &ar[..n];
        let d2 = &ar[n..2 * n];
        let d3 = &ar[2 * n..];
        for p in 0..n {
            zb[p] = yb[p] * d1[p];
        }
        for c in 1..=ng {
            for p in 0..n {
                let (yc, zc) = (yb[c * n + p], zr[c * n + p]);
                zb[p] += yc * d2[p] * zc;
                zb[c * n + p] = yc * d1[p];
            }
        }
        for (q, &(ci, cj)) in layout.pair_comps.iter().enumerate() {
            let c = 1 + ng + q;
            for p in 0..n {
                let yq = yb[c * n + p];
                let zi = zr[ci * n + p];
                let zj = zr[cj * n + p];
                zb[p] += yq * (d3[p] * zi * zj + d2[p] * zr[c * n + p]);
                zb[ci * n + p] += yq * d2[p] * zj;
                zb[cj * n + p] += yq * d2[p] * zi;
                zb[c * n + p] = yq * d1[p];
            }
        }
    }
    zbar
}

fn hadamard_forward(layout: &Layout, n: usize, a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let cols = a.ncols();
    let ng = layout.n_grads();
    let mut y = Array2::zeros(a.dim());
    let ys = y.as_slice_mut().unwrap();
    for ((ar, br), yr) in a
        .as_slice()
        .unwrap()
        .chunks_exact(cols)
        .zip(b.as_slice().unwrap().chunks_exact(cols))
        .zip(ys.chunks_exact_mut(cols))
    {
        for p in 0..n {
            yr[p] = ar[p] * br[p];
        }
        for c in 1..=ng {
            for p in 0..n {
                let k = c * n + p;
                yr[k] = ar[k] * br[p] + ar[p] * br[k];
            }
        }
        for (q, &(ci, cj)) in layout.pair_comps.iter().enumerate() {
            let c = 1 + ng + q;
            for p in 0..n {
                let k = c * n + p;
                let (i, j) = (ci * n + p, cj * n + p);
                yr[k] = ar[k] * br[p] + ar[i] * br[j] + ar[j] * br[i] + ar[p] * br[k];
            }
        }
    }
    y
}

/// Adjoint of one Hadamard operand given the other operand `other`.
fn hadamard_backward(
    layout: &Layout,
    n: usize,
    other: &Array2<f64>,
    ybar: &Array2<f64>,
) -> Array2<f64> {
    let cols = other.ncols();
    let ng = layout.n_grads();
    let mut out = Array2::zeros(other.dim());
    let os = out.as_slice_mut().unwrap();
    for ((br, yb), ob) in other
        .as_slice()
        .unwrap()
        .chunks_exact(cols)
        .zip(ybar.as_slice().unwrap().chunks_exact(cols))
        .zip(os.chunks_exact_mut(cols))
    {
        for p in 0..n {
            ob[p] = yb[p] * br[p];
        }
        for c in 1..=ng {
            for p in 0..n {
                let k = c * n + p;
                ob[p] += yb[k] * br[k];
                ob[k] = yb[k] * br[p];
            }
        }
        for (q, &(ci, cj)) in layout.pair_comps.iter().enumerate() {
            let c = 1 + ng + q;
            for p in 0..n {
                let k = c * n + p;
                let (i, j) = (ci * n + p, cj * n + p);
                ob[p] += yb[k] * br[k];
                ob[i] += yb[k] * br[j];
                ob[j] += yb[k] * br[i];
                ob[k] = yb[k] * br[p];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_implies_first_partials() {
        let l = Layout::with_partials(2, &[Partial::D2(1, 1), Partial::D(0)]).unwrap();
        assert_eq!(l.n_comp(), 4);
        assert_eq!(
            l.partials(),
            vec![
                Partial::Value,
                Partial::D(0),
                Partial::D(1),
                Partial::D2(1, 1)
            ]
        );
        assert_eq!(l.comp(Partial::D2(0, 1)), None);
        assert!(Layout::full(3).unwrap().is_full());
        assert_eq!(Layout::full(3).unwrap().n_comp(), 10);
    }

    #[test]
    fn input_seeds_unit_gradients() {
        let params = [];
        let layout = Layout::full(2).unwrap();
        let mut tape = Tape::new(layout.clone(), 2, &params);
        let x = tape.input(&[0.2, 0.5, 0.7, 0.9]).unwrap();
        let v = tape.value(x).unwrap();
        let b = JetBatch { n: 2, data: v.clone() };
        let j = b.jet(&layout, 1, 1);
        assert_eq!(j.value, 0.9);
        assert_eq!(j.grad_slice(), &[0.0, 1.0]);
        assert!(j.hess_upper().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let params = [1.0, 0.0, 0.0, 1.0];
        let layout = Layout::value_only(2).unwrap();
        let mut tape = Tape::new(layout, 1, &params);
        let x = tape.input(&[0.1, 0.2]).unwrap();
        let y = tape
            .linear(
                x,
                ParamSlot {
                    offset: 0,
                    rows: 2,
                    cols: 2,
                },
            )
            .unwrap();
        let seed = Array2::zeros((2, 1));
        assert!(matches!(tape.backward(y, &seed), Err(Error::Usage(_))));
        assert!(matches!(
            tape.backward(99, &Array2::zeros((1, 1))),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn non_finite_values_report_layer_and_point() {
        let params = [f64::INFINITY];
        let layout = Layout::value_only(1).unwrap();
        let mut tape = Tape::new(layout, 1, &params);
        let x = tape.input(&[0.5]).unwrap();
        tape.set_layer(3);
        let err = tape
            .linear(
                x,
                ParamSlot {
                    offset: 0,
                    rows: 1,
                    cols: 1,
                },
            )
            .unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                layer: 3,
                point: Some(vec![0.5])
            }
        );
    }
}
