//! Seeded Latin hypercube collocation sets.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ConditionKind, Locus, ProblemSpec};

/// `n` points in the box, row-major `n × d`.
///
/// Along every axis each of the `n` equal strata holds exactly one point;
/// strata are matched across axes by independent random permutations.
pub fn lhs_sample<R: Rng + ?Sized>(
    n: usize,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("count", "sample count must be at least 1"));
    }
    if lower.len() != upper.len() {
        return Err(Error::usage("lower and upper bounds differ in length"));
    }
    for (a, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        if !(hi - lo > 0.0) {
            return Err(Error::config(
                "domain",
                format!("axis {a} has zero extent [{lo}, {hi}]"),
            ));
        }
    }
    let d = lower.len();
    let mut out = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    for a in 0..d {
        perm.shuffle(rng);
        let (lo, hi) = (lower[a], upper[a]);
        for (i, &s) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            out[i * d + a] = lo + (s as f64 + u) / n as f64 * (hi - lo);
        }
    }
    Ok(out)
}

/// Requested sizes of every collocation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleCounts {
    pub interior: usize,
    pub boundary: usize,
    pub initial: usize,
    pub velocity: usize,
    #[serde(rename = "final")]
    pub final_: usize,
}

impl SampleCounts {
    pub fn for_kind(&self, kind: ConditionKind) -> usize {
        match kind {
            ConditionKind::Boundary => self.boundary,
            ConditionKind::InitialValue => self.initial,
            ConditionKind::InitialVelocity => self.velocity,
            ConditionKind::FinalValue => self.final_,
        }
    }
}

/// Points of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionPoints {
    pub condition: usize,
    pub kind: ConditionKind,
    pub coords: Vec<f64>,
}

impl ConditionPoints {
    pub fn len(&self, dim: usize) -> usize {
        self.coords.len() / dim
    }
}

/// Static collocation points for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub seed: u64,
    pub interior: Vec<f64>,
    pub conditions: Vec<ConditionPoints>,
}

impl PointSet {
    pub fn n_interior(&self) -> usize {
        self.interior.len() / self.dim
    }

    /// CSV with columns `locus` followed by the problem's axis names.
    pub fn to_csv(&self, axis_names: &[&str]) -> String {
        let mut s = String::from("locus");
        for a in axis_names {
            s.push(',');
            s.push_str(a);
        }
        s.push('\n');
        let mut rows = |tag: &str, coords: &[f64]| {
            for p in coords.chunks_exact(self.dim) {
                s.push_str(tag);
                for v in p {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        };
        rows("interior", &self.interior);
        for c in &self.conditions {
            rows(c.kind.name(), &c.coords);
        }
        s
    }
}

/// RNG for locus `ordinal`: 0 is the interior, `1 + i` condition `i`.
pub fn locus_rng(seed: u64, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    rng
}

/// Sample interior and condition sets for `spec`.
pub fn sample_conditions(spec: &ProblemSpec, counts: &SampleCounts, seed: u64) -> Result<PointSet> {
    let kinds = [
        (ConditionKind::Boundary, "n_boundary"),
        (ConditionKind::InitialValue, "n_initial"),
        (ConditionKind::InitialVelocity, "n_velocity"),
        (ConditionKind::FinalValue, "n_final"),
    ];
    for (kind, field) in kinds {
        let present = spec.conditions.iter().any(|c| c.kind == kind);
        let n = counts.for_kind(kind);
        if !present && n > 0 {
            return Err(Error::config(
                field,
                format!("{} has no {} condition but {n} points were requested", spec.name, kind.name()),
            ));
        }
        if present && n == 0 {
            return Err(Error::config(
                field,
                format!("{} needs {} points", spec.name, kind.name()),
            ));
        }
    }
    if counts.interior == 0 {
        return Err(Error::config("n_interior", "must be at least 1"));
    }
    let interior = lhs_sample(
        counts.interior,
        &spec.lower,
        &spec.upper,
        &mut locus_rng(seed, 0),
    )?;
    let mut conditions = Vec::new();
    for (i, c) in spec.conditions.iter().enumerate() {
        let n = counts.for_kind(c.kind);
        let mut rng = locus_rng(seed, 1 + i as u64);
        let coords = match c.locus {
            Locus::Faces => sample_faces(spec, n, &mut rng)?,
            Locus::TimeSlice(t) => sample_slice(spec, n, t, &mut rng)?,
        };
        conditions.push(ConditionPoints {
            condition: i,
            kind: c.kind,
            coords,
        });
    }
    Ok(PointSet {
        dim: spec.dim,
        seed,
        interior,
        conditions,
    })
}

/// Equal split across faces (lower then upper, by spatial axis); the
/// remainder goes to the first faces.
fn sample_faces(spec: &ProblemSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let d = spec.dim;
    let spatial = spec.spatial_axes();
    let n_faces = 2 * spatial.len();
    if n < n_faces {
        return Err(Error::config(
            "n_boundary",
            format!("need at least one point per face ({n_faces} faces)"),
        ));
    }
    let mut out = Vec::with_capacity(n * d);
    for f in 0..n_faces {
        let count = n / n_faces + usize::from(f < n % n_faces);
        let axis = spatial[f / 2];
        let fixed = if f % 2 == 0 { spec.lower[axis] } else { spec.upper[axis] };
        let free: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
        let lo: Vec<f64> = free.iter().map(|&a| spec.lower[a]).collect();
        let hi: Vec<f64> = free.iter().map(|&a| spec.upper[a]).collect();
        let sub = if free.is_empty() {
            Vec::new()
        } else {
            lhs_sample(count, &lo, &hi, rng)?
        };
        for p in 0..count {
            let mut pt = vec![0.0; d];
            pt[axis] = fixed;
            for (k, &a) in free.iter().enumerate() {
                pt[a] = sub[p * free.len() + k];
            }
            out.extend(pt);
        }
    }
    Ok(out)
}

fn sample_slice(spec: &ProblemSpec, n: usize, t: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let ta = spec
        .time_axis
        .ok_or_else(|| Error::config("conditions", "time slice on a steady problem"))?;
    let spatial = spec.spatial_axes();
    let lo: Vec<f64> = spatial.iter().map(|&a| spec.lower[a]).collect();
    let hi: Vec<f64> = spatial.iter().map(|&a| spec.upper[a]).collect();
    let sub = lhs_sample(n, &lo, &hi, rng)?;
    let mut out = Vec::with_capacity(n * spec.dim);
    for p in 0..n {
        let mut pt = vec![0.0; spec.dim];
        pt[ta] = t;
        for (k, &a) in spatial.iter().enumerate() {
            pt[a] = sub[p * spatial.len() + k];
        }
        out.extend(pt);
    }
    Ok(out)
}

/// Per-axis stratum occupancy of an LHS sample: `counts[a][s]`.
pub fn stratum_occupancy(points: &[f64], n: usize, lower: &[f64], upper: &[f64]) -> Vec<Vec<usize>> {
    let d = lower.len();
    let mut counts = vec![vec![0usize; n]; d];
    for p in points.chunks_exact(d) {
        for a in 0..d {
            let u = (p[a] - lower[a]) / (upper[a] - lower[a]);
            let s = ((u * n as f64).floor() as usize).min(n - 1);
            counts[a][s] += 1;
        }
    }
    counts
}
