//! Error metrics, evaluation grids and DFT amplitude spectra.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{predict, Branch, FgModel, Surrogate};
use crate::problem::ProblemSpec;

/// `‖exact − pred‖₂ / ‖exact‖₂`.
pub fn relative_l2(exact: &[f64], pred: &[f64]) -> Result<f64> {
    if exact.len() != pred.len() {
        return Err(Error::usage(format!(
            "metric inputs differ in length ({} vs {})",
            exact.len(),
            pred.len()
        )));
    }
    let num: f64 = exact.iter().zip(pred).map(|(u, v)| (u - v) * (u - v)).sum();
    let den: f64 = exact.iter().map(|u| u * u).sum();
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric(
            "relative L2 error of an identically zero reference".into(),
        ));
    }
    Ok((num / den).sqrt())
}

pub fn max_abs_error(exact: &[f64], pred: &[f64]) -> f64 {
    exact
        .iter()
        .zip(pred)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// Points on which a problem's error is measured.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub label: String,
    pub dim: usize,
    /// Resolution per axis, in axis order.
    pub shape: Vec<usize>,
    pub coords: Vec<f64>,
    pub exact: Vec<f64>,
}

/// `n` uniform samples of `[lo, hi)`.
pub fn periodic_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// `n` uniform samples of `[lo, hi]`.
pub fn closed_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl EvalGrid {
    /// Tensor grid over per-axis sample lists; the last axis varies fastest.
    pub fn tensor(spec: &ProblemSpec, label: impl Into<String>, axes: Vec<Vec<f64>>) -> Self {
        let dim = axes.len();
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = shape.iter().product();
        let mut coords = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for a in 0..dim {
                coords.push(axes[a][idx[a]]);
            }
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let exact = coords
            .chunks_exact(dim)
            .map(|p| spec.exact_solution(p))
            .collect();
        EvalGrid {
            label: label.into(),
            dim,
            shape,
            coords,
            exact,
        }
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    /// Spatial slice at time `t`: 2048 points in 1D, 256 × 512 in 2D.
    pub fn time_slice(spec: &ProblemSpec, t: f64) -> Result<Self> {
        let ta = spec
            .time_axis
            .ok_or_else(|| Error::usage("time slice of a steady problem"))?;
        let spatial = spec.spatial_axes();
        let res: &[usize] = if spatial.len() == 1 { &[2048] } else { &[256, 512] };
        let mut axes = Vec::new();
        let mut k = 0;
        for a in 0..spec.dim {
            if a == ta {
                axes.push(vec![t]);
            } else {
                axes.push(periodic_axis(spec.lower[a], spec.upper[a], res[k]));
                k += 1;
            }
        }
        Ok(Self::tensor(spec, format!("t={t}"), axes))
    }

    /// Space-time lattice: 2048 × 21 in 1D+t, 64 × 128 × 16 in 2D+t; plain
    /// 2048-point line for steady 1D problems.
    pub fn global(spec: &ProblemSpec) -> Self {
        let spatial = spec.spatial_axes();
        let axes = (0..spec.dim)
            .map(|a| {
                if Some(a) == spec.time_axis {
                    let nt = if spatial.len() == 1 { 21 } else { 16 };
                    closed_axis(spec.lower[a], spec.upper[a], nt)
                } else {
                    let n = match (spatial.len(), spatial.iter().position(|&s| s == a)) {
                        (1, _) => 2048,
                        (_, Some(0)) => 64,
                        _ => 128,
                    };
                    periodic_axis(spec.lower[a], spec.upper[a], n)
                }
            })
            .collect();
        Self::tensor(spec, "global", axes)
    }
}

/// The grid behind the headline error: the slice at `report_time` when the
/// problem has one, the global lattice otherwise.
pub fn headline_grid(spec: &ProblemSpec) -> Result<EvalGrid> {
    match spec.report_time {
        Some(t) => EvalGrid::time_slice(spec, t),
        None => Ok(EvalGrid::global(spec)),
    }
}

/// Headline grid, then the t ∈ {0, 0.5, 1} slices (and the global lattice
/// when the headline is a slice).
pub fn report_grids(spec: &ProblemSpec) -> Result<Vec<EvalGrid>> {
    let mut grids = vec![headline_grid(spec)?];
    if spec.time_axis.is_some() {
        for t in [0.0, 0.5, 1.0] {
            if spec.report_time != Some(t) {
                grids.push(EvalGrid::time_slice(spec, t)?);
            }
        }
        if spec.report_time.is_some() {
            grids.push(EvalGrid::global(spec));
        }
    }
    Ok(grids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rel_l2: f64,
    pub rel_l2_slices: BTreeMap<String, f64>,
    pub max_abs_err: f64,
}

/// Metrics of `model` on every report grid, with the predictions.
pub fn evaluate<M: Surrogate + ?Sized>(
    model: &M,
    spec: &ProblemSpec,
    exec: Execution,
) -> Result<(Metrics, Vec<(EvalGrid, Vec<f64>)>)> {
    let grids = report_grids(spec)?;
    let mut out = Vec::new();
    let mut slices = BTreeMap::new();
    let mut headline = None;
    for g in grids {
        let pred = predict(model, &g.coords, Branch::Total, exec)?;
        match (relative_l2(&g.exact, &pred), headline.is_none()) {
            (Ok(e), first) => {
                if first {
                    headline = Some((e, max_abs_error(&g.exact, &pred)));
                }
                slices.insert(g.label.clone(), e);
            }
            // A secondary slice where u ≡ 0 (wave3 at t = 0) has no relative
            // error; it is left out of the map but its field is still written.
            (Err(Error::UndefinedMetric(_)), false) => {}
            (Err(e), _) => return Err(e),
        }
        out.push((g, pred));
    }
    let (rel_l2, max_abs_err) = headline.expect("at least one grid");
    Ok((
        Metrics {
            rel_l2,
            rel_l2_slices: slices,
            max_abs_err,
        },
        out,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    Exact,
    Total,
    High,
    Low,
}

/// One-sided amplitude spectrum; `k` counts cycles per domain length.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub k: Vec<usize>,
    pub amp: Vec<f64>,
    pub source: SpectrumSource,
}

impl Spectrum {
    pub fn at(&self, k: usize) -> Result<f64> {
        self.amp.get(k).copied().ok_or_else(|| {
            Error::usage(format!(
                "wavenumber {k} outside 0..={}",
                self.amp.len().saturating_sub(1)
            ))
        })
    }
}

pub fn dft(samples: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn check_uniform(xs: &[f64], n: usize) -> Result<()> {
    if xs.len() != n {
        return Err(Error::usage("sample and abscissa counts differ"));
    }
    if n < 512 || !n.is_power_of_two() {
        return Err(Error::usage(format!(
            "spectra need a power-of-two grid of at least 512 samples, got {n}"
        )));
    }
    let h = xs[1] - xs[0];
    let span = (xs[n - 1] - xs[0]).abs().max(f64::MIN_POSITIVE);
    if !(h > 0.0) || xs.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * span) {
        return Err(Error::usage("spectra need a uniform grid"));
    }
    Ok(())
}

pub fn amplitude_spectrum(xs: &[f64], samples: &[f64], source: SpectrumSource) -> Result<Spectrum> {
    let n = samples.len();
    check_uniform(xs, n)?;
    let x = dft(samples);
    let nf = n as f64;
    let half = n / 2;
    let amp = (0..=half)
        .map(|k| {
            let m = x[k].norm();
            if k == 0 || k == half {
                m / nf
            } else {
                2.0 * m / nf
            }
        })
        .collect();
    Ok(Spectrum {
        k: (0..=half).collect(),
        amp,
        source,
    })
}

/// Samples of u*, u_h and u_l on the 1D grid `xs`.
pub fn branch_samples(model: &FgModel, xs: &[f64], exec: Execution) -> Result<[Vec<f64>; 3]> {
    if model.arch.in_dim != 1 {
        return Err(Error::usage("subnetwork spectra are only supported for 1D inputs"));
    }
    Ok([
        predict(model, xs, Branch::Total, exec)?,
        predict(model, xs, Branch::High, exec)?,
        predict(model, xs, Branch::Low, exec)?,
    ])
}

/// Spectra of the high- and low-frequency subnetworks.
pub fn subnetwork_spectra(model: &FgModel, xs: &[f64], exec: Execution) -> Result<(Spectrum, Spectrum)> {
    let [_, h, l] = branch_samples(model, xs, exec)?;
    Ok((
        amplitude_spectrum(xs, &h, SpectrumSource::High)?,
        amplitude_spectrum(xs, &l, SpectrumSource::Low)?,
    ))
}

/// Amplitudes at `ks` for every parameter snapshot `(iter, params)`.
pub fn amplitude_history<M: Surrogate + Clone>(
    template: &M,
    snapshots: &[(usize, Vec<f64>)],
    xs: &[f64],
    ks: &[usize],
    exec: Execution,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let half = xs.len() / 2;
    if let Some(&k) = ks.iter().find(|&&k| k > half) {
        return Err(Error::usage(format!("wavenumber {k} outside 0..={half}")));
    }
    let mut model = template.clone();
    let mut out = Vec::with_capacity(snapshots.len());
    for (iter, params) in snapshots {
        if params.len() != model.params().len() {
            return Err(Error::usage("snapshot does not match the model"));
        }
        model.params_mut().copy_from_slice(params);
        let u = predict(&model, xs, Branch::Total, exec)?;
        let s = amplitude_spectrum(xs, &u, SpectrumSource::Total)?;
        out.push((*iter, ks.iter().map(|&k| s.amp[k]).collect()));
    }
    Ok(out)
}

/// `x[,y][,t],u_exact,u_pred,abs_err`.
pub fn field_csv(grid: &EvalGrid, axis_names: &[&str], pred: &[f64]) -> String {
    let mut s = axis_names.join(",");
    s.push_str(",u_exact,u_pred,abs_err\n");
    for (p, (u, v)) in grid.coords.chunks_exact(grid.dim).zip(grid.exact.iter().zip(pred)) {
        for c in p {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{u},{v},{}", (u - v).abs());
    }
    s
}

/// `k,amp_exact,amp_pred,amp_hf,amp_lf`.
pub fn spectrum_csv(exact: &Spectrum, pred: &Spectrum, hf: &Spectrum, lf: &Spectrum) -> String {
    let mut s = String::from("k,amp_exact,amp_pred,amp_hf,amp_lf\n");
    for k in 0..exact.amp.len() {
        let _ = writeln!(
            s,
            "{k},{},{},{},{}",
            exact.amp[k], pred.amp[k], hf.amp[k], lf.amp[k]
        );
    }
    s
}

/// `iter,amp_k…` with one column per requested wavenumber.
pub fn amplitude_history_csv(ks: &[usize], rows: &[(usize, Vec<f64>)]) -> String {
    let mut s = String::from("iter");
    for k in ks {
        let _ = write!(s, ",amp_k{k}");
    }
    s.push('\n');
    for (iter, amps) in rows {
        let _ = write!(s, "{iter}");
        for a in amps {
            let _ = write!(s, ",{a}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_benchmark, BenchmarkId};
    use std::f64::consts::PI;

    #[test]
    fn relative_l2_examples() {
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_l2(&[1.0, -2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((relative_l2(&[3.0, 4.0], &[3.0, 0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            relative_l2(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn max_abs_examples() {
        assert_eq!(max_abs_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(max_abs_error(&[1.0, 2.0], &[1.0, 2.5]), 0.5);
    }

    #[test]
    fn pure_tone_spectrum() {
        let xs = periodic_axis(0.0, 2.0 * PI, 512);
        let u: Vec<f64> = xs.iter().map(|x| (10.0 * x).sin()).collect();
        let s = amplitude_spectrum(&xs, &u, SpectrumSource::Exact).unwrap();
        assert_eq!(s.amp.len(), 257);
        for (k, a) in s.amp.iter().enumerate() {
            if k == 10 {
                assert!((a - 1.0).abs() < 1e-10);
            } else {
                assert!(*a < 1e-10, "k={k} a={a}");
            }
        }
    }

    #[test]
    fn constant_spectrum() {
        let xs = periodic_axis(0.0, 1.0, 512);
        let s = amplitude_spectrum(&xs, &vec![1.0; 512], SpectrumSource::Exact).unwrap();
        assert!((s.amp[0] - 1.0).abs() < 1e-12);
        assert!(s.amp[1..].iter().all(|a| *a < 1e-12));
    }

    #[test]
    fn poisson_exact_has_three_equal_tones() {
        let spec = make_benchmark(BenchmarkId::Poisson1d);
        let g = EvalGrid::global(&spec);
        let xs: Vec<f64> = g.coords.clone();
        let s = amplitude_spectrum(&xs, &g.exact, SpectrumSource::Exact).unwrap();
        for k in 0..s.amp.len() {
            if [1, 10, 100].contains(&k) {
                assert!((s.amp[k] - 1.0 / 3.0).abs() < 1e-10);
            } else {
                assert!(s.amp[k] < 1e-10);
            }
        }
    }

    #[test]
    fn heat1d_slice_is_single_tone_at_250() {
        let spec = make_benchmark(BenchmarkId::Heat1d);
        for t in [0.0, 0.5, 1.0] {
            let g = EvalGrid::time_slice(&spec, t).unwrap();
            let xs: Vec<f64> = g.coords.chunks(2).map(|p| p[0]).collect();
            let s = amplitude_spectrum(&xs, &g.exact, SpectrumSource::Exact).unwrap();
            let expect = (-t as f64).exp();
            assert!((s.amp[250] / expect - 1.0).abs() < 1e-6);
            let others = s.amp.iter().enumerate().filter(|(k, _)| *k != 250);
            assert!(others.map(|(_, a)| *a).fold(0.0, f64::max) < 1e-9);
        }
    }

    #[test]
    fn non_uniform_or_short_grids_are_rejected() {
        let mut xs = periodic_axis(0.0, 1.0, 512);
        xs[7] += 1e-4;
        assert!(amplitude_spectrum(&xs, &vec![0.0; 512], SpectrumSource::Exact).is_err());
        let xs = periodic_axis(0.0, 1.0, 256);
        assert!(amplitude_spectrum(&xs, &vec![0.0; 256], SpectrumSource::Exact).is_err());
        let s = amplitude_spectrum(&periodic_axis(0.0, 1.0, 512), &vec![0.0; 512], SpectrumSource::Exact).unwrap();
        assert!(s.at(257).is_err());
    }

    #[test]
    fn grid_resolutions() {
        let heat = make_benchmark(BenchmarkId::Heat1d);
        assert_eq!(EvalGrid::global(&heat).shape, vec![2048, 21]);
        let wave = make_benchmark(BenchmarkId::Wave3);
        let h = headline_grid(&wave).unwrap();
        assert_eq!(h.shape, vec![256, 512, 1]);
        assert!(h.coords.chunks(3).all(|p| p[2] == 0.5));
        assert_eq!(EvalGrid::global(&wave).shape, vec![64, 128, 16]);
        let labels: Vec<String> = report_grids(&wave).unwrap().into_iter().map(|g| g.label).collect();
        assert_eq!(labels, ["t=0.5", "t=0", "t=1", "global"]);
    }

    #[test]
    fn zero_reference_slice_is_left_out() {
        use crate::model::{Architecture, BaselineModel, ModelKind};
        let wave = make_benchmark(BenchmarkId::Wave3);
        let arch = Architecture {
            kind: ModelKind::Baseline,
            in_dim: 3,
            width: 4,
            lf_depth: 1,
            modules: 0,
            activation: crate::autodiff::Activation::Tanh,
        };
        let model = BaselineModel::new(arch, 1).unwrap();
        let (m, fields) = evaluate(&model, &wave, Execution::Parallel).unwrap();
        assert_eq!(fields.len(), 4);
        let keys: Vec<&str> = m.rel_l2_slices.keys().map(String::as_str).collect();
        assert_eq!(keys, ["global", "t=0.5", "t=1"]);
        assert_eq!(m.rel_l2, m.rel_l2_slices["t=0.5"]);
    }

    #[test]
    fn csv_headers() {
        let spec = make_benchmark(BenchmarkId::Poisson1d);
        let g = EvalGrid::tensor(&spec, "g", vec![vec![0.0, 1.0]]);
        let csv = field_csv(&g, &spec.axis_names, &[0.0, 0.0]);
        assert!(csv.starts_with("x,u_exact,u_pred,abs_err\n"));
        assert_eq!(csv.lines().count(), 3);
        let h = amplitude_history_csv(&[1, 10, 100], &[(0, vec![0.0, 0.0, 0.0])]);
        assert!(h.starts_with("iter,amp_k1,amp_k10,amp_k100\n"));
    }
}
