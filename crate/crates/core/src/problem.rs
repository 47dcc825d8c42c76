//! PDE problems as differential operators over jets, plus the built-in
//! benchmark suite with closed-form sources and exact solutions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet2, Partial};
use crate::error::{Error, Result};
use crate::field::Field;

/// `coeff · Π component^power`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub factors: Vec<(Partial, u32)>,
}

impl Monomial {
    fn eval(&self, jet: &Jet2) -> f64 {
        self.factors
            .iter()
            .fold(self.coeff, |acc, &(p, k)| acc * jet.get(p).powi(k as i32))
    }
}

/// Polynomial in jet components, e.g. `u_tt − u_xx − u_yy + u³`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffOperator {
    pub terms: Vec<Monomial>,
}

impl DiffOperator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a linear term `coeff · component`.
    pub fn linear(mut self, coeff: f64, p: Partial) -> Self {
        self.terms.push(Monomial {
            coeff,
            factors: vec![(p.canonical(), 1)],
        });
        self
    }

    /// Add `coeff · component^power`.
    pub fn power(mut self, coeff: f64, p: Partial, power: u32) -> Self {
        self.terms.push(Monomial {
            coeff,
            factors: vec![(p.canonical(), power)],
        });
        self
    }

    pub fn value() -> Self {
        Self::new().linear(1.0, Partial::Value)
    }

    pub fn apply(&self, jet: &Jet2) -> f64 {
        self.terms.iter().map(|m| m.eval(jet)).sum()
    }

    /// Value and the partial derivative of the operator with respect to each
    /// jet component it reads.
    pub fn linearize(&self, jet: &Jet2) -> (f64, Vec<(Partial, f64)>) {
        let mut sens: Vec<(Partial, f64)> = Vec::new();
        let mut value = 0.0;
        for m in &self.terms {
            value += m.eval(jet);
            for (idx, &(p, k)) in m.factors.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let mut d = m.coeff * k as f64 * jet.get(p).powi(k as i32 - 1);
                for (other, &(q, kq)) in m.factors.iter().enumerate() {
                    if other != idx {
                        d *= jet.get(q).powi(kq as i32);
                    }
                }
                match sens.iter_mut().find(|(s, _)| *s == p) {
                    Some(entry) => entry.1 += d,
                    None => sens.push((p, d)),
                }
            }
        }
        (value, sens)
    }

    /// Every jet component the operator reads.
    pub fn partials(&self) -> Vec<Partial> {
        let mut out: Vec<Partial> = self
            .terms
            .iter()
            .flat_map(|m| m.factors.iter().map(|&(p, _)| p))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn is_linear(&self) -> bool {
        self.terms
            .iter()
            .all(|m| m.factors.iter().map(|&(_, k)| k).sum::<u32>() <= 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Boundary,
    InitialValue,
    InitialVelocity,
    FinalValue,
}

impl ConditionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Boundary => "boundary",
            ConditionKind::InitialValue => "initial",
            ConditionKind::InitialVelocity => "velocity",
            ConditionKind::FinalValue => "final",
        }
    }
}

/// Where a condition's collocation points live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Locus {
    /// Every face of the spatial box, crossed with the full time interval.
    Faces,
    /// The spatial box at a fixed time.
    TimeSlice(f64),
}

#[derive(Debug, Clone)]
pub struct ConditionSpec {
    pub kind: ConditionKind,
    pub locus: Locus,
    pub target: Field,
    /// Quantity matched against `target`: the value, or `u_t` for
    /// initial-velocity data.
    pub form: DiffOperator,
}

impl ConditionSpec {
    pub fn residual(&self, point: &[f64], jet: &Jet2) -> f64 {
        self.form.apply(jet) - self.target.value(point)
    }
}

/// Which function feeds the high-frequency prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Source,
    Condition(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkId {
    #[serde(rename = "poisson1d")]
    Poisson1d,
    #[serde(rename = "heat1d")]
    Heat1d,
    #[serde(rename = "wave3")]
    Wave3,
    #[serde(rename = "wave4")]
    Wave4,
    #[serde(rename = "heat2d_reversed")]
    Heat2dReversed,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 5] = [
        BenchmarkId::Poisson1d,
        BenchmarkId::Heat1d,
        BenchmarkId::Wave3,
        BenchmarkId::Wave4,
        BenchmarkId::Heat2dReversed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Poisson1d => "poisson1d",
            BenchmarkId::Heat1d => "heat1d",
            BenchmarkId::Wave3 => "wave3",
            BenchmarkId::Wave4 => "wave4",
            BenchmarkId::Heat2dReversed => "heat2d_reversed",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown benchmark `{s}` (expected poisson1d|heat1d|wave3|wave4|heat2d_reversed)"
                ))
            })
    }
}

/// A PDE on an axis-aligned box.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub axis_names: Vec<&'static str>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub time_axis: Option<usize>,
    /// `Γ` in `Γu = f`.
    pub operator: DiffOperator,
    pub source: Field,
    pub exact: Field,
    pub conditions: Vec<ConditionSpec>,
    pub embedding_source: EmbeddingSource,
    /// Time at which the headline error is reported, if any.
    pub report_time: Option<f64>,
}

/// `Γu − f` at an interior point.
pub fn pde_residual(spec: &ProblemSpec, point: &[f64], jet: &Jet2) -> f64 {
    spec.operator.apply(jet) - spec.source.value(point)
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.dim || self.upper.len() != self.dim || self.axis_names.len() != self.dim {
            return Err(Error::config("domain", "bounds do not match dimension"));
        }
        for (a, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::config(
                    "domain",
                    format!("axis {a} bounds [{lo}, {hi}] are not strictly ordered"),
                ));
            }
        }
        for c in &self.conditions {
            if let Locus::TimeSlice(t) = c.locus {
                let ta = self
                    .time_axis
                    .ok_or_else(|| Error::config("conditions", "time slice on a steady problem"))?;
                if t < self.lower[ta] || t > self.upper[ta] {
                    return Err(Error::config("conditions", format!("time slice t={t} outside domain")));
                }
            }
        }
        if let EmbeddingSource::Condition(i) = self.embedding_source {
            if i >= self.conditions.len() {
                return Err(Error::config("embedding", "embedding references a missing condition"));
            }
        }
        Ok(())
    }

    pub fn residual(&self, point: &[f64], jet: &Jet2) -> f64 {
        pde_residual(self, point, jet)
    }

    pub fn spatial_axes(&self) -> Vec<usize> {
        (0..self.dim).filter(|&a| Some(a) != self.time_axis).collect()
    }

    pub fn embedding_field(&self) -> Field {
        match self.embedding_source {
            EmbeddingSource::Source => self.source.clone(),
            EmbeddingSource::Condition(i) => self.conditions[i].target.clone(),
        }
    }

    pub fn condition(&self, kind: ConditionKind) -> Option<&ConditionSpec> {
        self.conditions.iter().find(|c| c.kind == kind)
    }

    pub fn exact_solution(&self, point: &[f64]) -> f64 {
        self.exact.value(point)
    }

    pub fn exact_jet(&self, point: &[f64]) -> Result<Jet2> {
        self.exact.jet(point)
    }

    /// True when `f` is identically zero on the problem (homogeneous PDE).
    pub fn is_homogeneous(&self) -> bool {
        self.source.label() == "zero"
    }
}

/// Conductivity matrix of the anisotropic heat benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conductivity {
    pub k11: f64,
    pub k12: f64,
    pub k21: f64,
    pub k22: f64,
}

impl Conductivity {
    pub fn new(k11: f64, k12: f64, k21: f64, k22: f64) -> Result<Self> {
        if k12 != k21 {
            return Err(Error::config("conductivity", "k12 must equal k21"));
        }
        if k11 * k22 - k12 * k21 <= 0.0 {
            return Err(Error::config("conductivity", "det(K) must be positive"));
        }
        Ok(Conductivity { k11, k12, k21, k22 })
    }
}

pub const HEAT2D_CONDUCTIVITY: (f64, f64, f64, f64) = (2.0, 1.0, 1.0, 2.5);

fn faces(target: Field) -> ConditionSpec {
    ConditionSpec {
        kind: ConditionKind::Boundary,
        locus: Locus::Faces,
        target,
        form: DiffOperator::value(),
    }
}

fn slice(kind: ConditionKind, t: f64, target: Field, form: DiffOperator) -> ConditionSpec {
    ConditionSpec {
        kind,
        locus: Locus::TimeSlice(t),
        target,
        form,
    }
}

/// Build one of the built-in benchmarks.
pub fn make_benchmark(id: BenchmarkId) -> ProblemSpec {
    let spec = match id {
        BenchmarkId::Poisson1d => poisson1d(),
        BenchmarkId::Heat1d => heat1d(),
        BenchmarkId::Wave3 => wave3(),
        BenchmarkId::Wave4 => wave4(),
        BenchmarkId::Heat2dReversed => heat2d_reversed(),
    };
    spec.validate().expect("built-in benchmark is well formed");
    spec
}

/// `−u'' = f` on `[0, 2π]`, `u = (sin x + sin 10x + sin 100x)/3`.
fn poisson1d() -> ProblemSpec {
    let exact = Field::new("poisson1d_exact", |c| {
        let x = c[0];
        (x.sin() + (x * 10.0).sin() + (x * 100.0).sin()) * (1.0 / 3.0)
    });
    let source = Field::new("poisson1d_source", |c| {
        let x = c[0];
        (x.sin() + (x * 10.0).sin() * 100.0 + (x * 100.0).sin() * 10_000.0) * (1.0 / 3.0)
    });
    ProblemSpec {
        name: "poisson1d".into(),
        dim: 1,
        axis_names: vec!["x"],
        lower: vec![0.0],
        upper: vec![2.0 * PI],
        time_axis: None,
        operator: DiffOperator::new().linear(-1.0, Partial::D2(0, 0)),
        source,
        conditions: vec![faces(exact.clone())],
        exact,
        embedding_source: EmbeddingSource::Source,
        report_time: None,
    }
}

/// `u_t − u_xx/(500π)² = 0`, `u = e^{−t} sin(500πx)`.
fn heat1d() -> ProblemSpec {
    let k = 500.0 * PI;
    let exact = Field::new("heat1d_exact", move |c| (-c[1]).exp() * (c[0] * k).sin());
    let initial = Field::new("heat1d_initial", move |c| (c[0] * k).sin());
    ProblemSpec {
        name: "heat1d".into(),
        dim: 2,
        axis_names: vec!["x", "t"],
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        time_axis: Some(1),
        operator: DiffOperator::new()
            .linear(1.0, Partial::D(1))
            .linear(-1.0 / (k * k), Partial::D2(0, 0)),
        source: Field::zero(2),
        conditions: vec![
            faces(exact.clone()),
            slice(ConditionKind::InitialValue, 0.0, initial, DiffOperator::value()),
        ],
        exact,
        embedding_source: EmbeddingSource::Condition(1),
        report_time: None,
    }
}

fn wave_operator() -> DiffOperator {
    DiffOperator::new()
        .linear(1.0, Partial::D2(2, 2))
        .linear(-1.0, Partial::D2(0, 0))
        .linear(-1.0, Partial::D2(1, 1))
}

/// `u_tt − Δu + u³ = f`, `u = cos(50πx) cos(100πy) sin t`.
fn wave3() -> ProblemSpec {
    let (a, b) = (50.0 * PI, 100.0 * PI);
    let exact = Field::new("wave3_exact", move |c| {
        (c[0] * a).cos() * (c[1] * b).cos() * c[2].sin()
    });
    let lam = a * a + b * b - 1.0;
    let source = Field::new("wave3_source", move |c| {
        let u = (c[0] * a).cos() * (c[1] * b).cos() * c[2].sin();
        u * lam + u * u * u
    });
    let h = Field::new("wave3_initial", |c| Jet2::zero(c.len()));
    let m = Field::new("wave3_velocity", move |c| (c[0] * a).cos() * (c[1] * b).cos());
    ProblemSpec {
        name: "wave3".into(),
        dim: 3,
        axis_names: vec!["x", "y", "t"],
        lower: vec![0.0; 3],
        upper: vec![1.0; 3],
        time_axis: Some(2),
        operator: wave_operator().power(1.0, Partial::Value, 3),
        source,
        conditions: vec![
            faces(exact.clone()),
            slice(ConditionKind::InitialValue, 0.0, h, DiffOperator::value()),
            slice(
                ConditionKind::InitialVelocity,
                0.0,
                m,
                DiffOperator::new().linear(1.0, Partial::D(2)),
            ),
        ],
        exact,
        embedding_source: EmbeddingSource::Source,
        report_time: Some(0.5),
    }
}

/// `u_tt − Δu + u_t² = f`, `u = e^{−2t} sin(πx) sin(100πy)`.
fn wave4() -> ProblemSpec {
    let b = 100.0 * PI;
    let exact = Field::new("wave4_exact", move |c| {
        (c[2] * -2.0).exp() * (c[0] * PI).sin() * (c[1] * b).sin()
    });
    let lam = 4.0 + PI * PI + b * b;
    let source = Field::new("wave4_source", move |c| {
        let u = (c[2] * -2.0).exp() * (c[0] * PI).sin() * (c[1] * b).sin();
        u * lam + u * u * 4.0
    });
    let h = Field::new("wave4_initial", move |c| (c[0] * PI).sin() * (c[1] * b).sin());
    let m = Field::new("wave4_velocity", move |c| (c[0] * PI).sin() * (c[1] * b).sin() * -2.0);
    ProblemSpec {
        name: "wave4".into(),
        dim: 3,
        axis_names: vec!["x", "y", "t"],
        lower: vec![0.0; 3],
        upper: vec![1.0; 3],
        time_axis: Some(2),
        operator: wave_operator().power(1.0, Partial::D(2), 2),
        source,
        conditions: vec![
            faces(exact.clone()),
            slice(ConditionKind::InitialValue, 0.0, h, DiffOperator::value()),
            slice(
                ConditionKind::InitialVelocity,
                0.0,
                m,
                DiffOperator::new().linear(1.0, Partial::D(2)),
            ),
        ],
        exact,
        embedding_source: EmbeddingSource::Source,
        report_time: Some(0.5),
    }
}

/// `u_t = k11 u_xx + 2 k12 u_xy + k22 u_yy + f`, reconstructed backwards from
/// `u(·, ·, 1)`; `u = e^{−2t}(cos(x + 50πy) + cos(−3x + 4y))`.
fn heat2d_reversed() -> ProblemSpec {
    let (k11, k12, k21, k22) = HEAT2D_CONDUCTIVITY;
    let k = Conductivity::new(k11, k12, k21, k22).expect("valid conductivity");
    let b = 50.0 * PI;
    let exact = Field::new("heat2d_exact", move |c| {
        (c[2] * -2.0).exp() * ((c[0] + c[1] * b).cos() + (c[0] * -3.0 + c[1] * 4.0).cos())
    });
    // Γ applied to each cosine term: e^{-2t}cos(x+50πy) picks up
    // −2 + k11 + 2·k12·50π + k22·(50π)², the smooth term −2 + 9k11 − 24k12 + 16k22.
    let c1 = -2.0 + k.k11 + 2.0 * k.k12 * b + k.k22 * b * b;
    let c2 = -2.0 + 9.0 * k.k11 - 24.0 * k.k12 + 16.0 * k.k22;
    let source = Field::new("heat2d_source", move |c| {
        let e = (c[2] * -2.0).exp();
        e * ((c[0] + c[1] * b).cos() * c1 + (c[0] * -3.0 + c[1] * 4.0).cos() * c2)
    });
    ProblemSpec {
        name: "heat2d_reversed".into(),
        dim: 3,
        axis_names: vec!["x", "y", "t"],
        lower: vec![0.0; 3],
        upper: vec![1.0; 3],
        time_axis: Some(2),
        operator: DiffOperator::new()
            .linear(1.0, Partial::D(2))
            .linear(-k.k11, Partial::D2(0, 0))
            .linear(-(k.k12 + k.k21), Partial::D2(0, 1))
            .linear(-k.k22, Partial::D2(1, 1)),
        source,
        conditions: vec![
            faces(exact.clone()),
            slice(ConditionKind::FinalValue, 1.0, exact.clone(), DiffOperator::value()),
        ],
        exact,
        embedding_source: EmbeddingSource::Source,
        report_time: Some(0.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_source_at_half_pi() {
        let p = make_benchmark(BenchmarkId::Poisson1d);
        let f = p.source.value(&[PI / 2.0]);
        assert!((f - 1.0 / 3.0).abs() < 1e-9, "{f}");
    }

    #[test]
    fn poisson_residual_vanishes_on_exact_jet() {
        let p = make_benchmark(BenchmarkId::Poisson1d);
        let x = [PI / 2.0];
        let r = p.residual(&x, &p.exact_jet(&x).unwrap());
        assert!(r.abs() <= 1e-8, "{r}");
    }

    #[test]
    fn heat1d_substitution() {
        let p = make_benchmark(BenchmarkId::Heat1d);
        let k = 500.0 * PI;
        let mut jet = Jet2::zero(2);
        jet.value = 1.0;
        jet.set(Partial::D(1), 1.0);
        jet.set(Partial::D2(0, 0), k * k);
        assert!(p.residual(&[0.3, 0.3], &jet).abs() < 1e-12);
    }

    #[test]
    fn heat1d_initial_and_exact_data() {
        let p = make_benchmark(BenchmarkId::Heat1d);
        let g = &p.condition(ConditionKind::InitialValue).unwrap().target;
        assert!(g.value(&[0.25, 0.0]).abs() < 1e-12);
        assert!(p.exact_solution(&[0.25, 1.0]).abs() < 1e-12);
        let x = 0.123;
        assert_eq!(p.exact_solution(&[x, 0.0]), (500.0 * PI * x).sin());
    }

    #[test]
    fn wave4_exact_substitution() {
        let p = make_benchmark(BenchmarkId::Wave4);
        assert!((p.exact_solution(&[0.5, 0.005, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn operator_linearization_matches_definition() {
        let op = wave_operator().power(1.0, Partial::D(2), 2).power(0.5, Partial::Value, 3);
        let mut jet = Jet2::zero(3);
        jet.value = 0.7;
        jet.set(Partial::D(2), -1.3);
        jet.set(Partial::D2(0, 0), 2.0);
        let (v, sens) = op.linearize(&jet);
        assert_eq!(v, op.apply(&jet));
        let get = |p| sens.iter().find(|(q, _)| *q == p).map(|s| s.1).unwrap();
        assert!((get(Partial::D(2)) - 2.0 * -1.3).abs() < 1e-15);
        assert!((get(Partial::Value) - 1.5 * 0.49).abs() < 1e-15);
        assert_eq!(get(Partial::D2(0, 0)), -1.0);
        assert!(!op.is_linear());
        assert!(wave_operator().is_linear());
    }

    #[test]
    fn conductivity_invariants() {
        let (a, b, c, d) = HEAT2D_CONDUCTIVITY;
        let k = Conductivity::new(a, b, c, d).unwrap();
        assert_eq!(k.k12, k.k21);
        assert!(k.k11 * k.k22 - k.k12 * k.k12 > 0.0);
        assert!(Conductivity::new(1.0, 2.0, 1.0, 1.0).is_err());
        assert!(Conductivity::new(1.0, 2.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn unknown_benchmark_is_usage_error() {
        assert!(matches!("heat3d".parse::<BenchmarkId>(), Err(Error::Usage(_))));
        assert_eq!("wave3".parse::<BenchmarkId>().unwrap(), BenchmarkId::Wave3);
    }

    #[test]
    fn reversed_problem_has_final_but_no_initial_condition() {
        let p = make_benchmark(BenchmarkId::Heat2dReversed);
        assert!(p.condition(ConditionKind::FinalValue).is_some());
        assert!(p.condition(ConditionKind::InitialValue).is_none());
    }
}
