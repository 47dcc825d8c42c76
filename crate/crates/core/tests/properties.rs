use fgpinn::analysis::{amplitude_spectrum, dft, periodic_axis, relative_l2, SpectrumSource};
use fgpinn::autodiff::{jet_seed, Activation};
use fgpinn::field::Field;
use fgpinn::model::{Architecture, EmbeddingFn, FgModel, ModelKind};
use fgpinn::sampling::{lhs_sample, locus_rng, stratum_occupancy};
use fgpinn::training::{adam_step, residual_weight, AdamState};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lhs_fills_every_stratum_once(n in 1usize..300, d in 1usize..4, seed in any::<u64>()) {
        let lower: Vec<f64> = (0..d).map(|a| -(a as f64)).collect();
        let upper: Vec<f64> = (0..d).map(|a| 1.0 + 2.0 * a as f64).collect();
        let pts = lhs_sample(n, &lower, &upper, &mut locus_rng(seed, 0)).unwrap();
        prop_assert_eq!(pts.len(), n * d);
        for (a, counts) in stratum_occupancy(&pts, n, &lower, &upper).iter().enumerate() {
            prop_assert!(counts.iter().all(|&c| c == 1), "axis {}: {:?}", a, counts);
        }
        for p in pts.chunks(d) {
            for a in 0..d {
                prop_assert!(p[a] >= lower[a] && p[a] < upper[a]);
            }
        }
    }

    #[test]
    fn relative_l2_is_scale_invariant(
        u in prop::collection::vec(-5.0f64..5.0, 1..64),
        noise in prop::collection::vec(-0.1f64..0.1, 64),
        c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        prop_assume!(u.iter().any(|v| v.abs() > 1e-3));
        let v: Vec<f64> = u.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let r = relative_l2(&u, &v).unwrap();
        let cu: Vec<f64> = u.iter().map(|a| c * a).collect();
        let cv: Vec<f64> = v.iter().map(|a| c * a).collect();
        let rc = relative_l2(&cu, &cv).unwrap();
        prop_assert!((r - rc).abs() <= 1e-12 * (1.0 + r));
        prop_assert_eq!(relative_l2(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn residual_weight_bounded_and_monotone(
        f in -10.0f64..10.0, g in -10.0f64..10.0, k in 0.0f64..5.0,
    ) {
        let fmax = f.abs().max(g.abs()).max(1e-9);
        let (wf, wg) = (residual_weight(f, fmax, k), residual_weight(g, fmax, k));
        for w in [wf, wg] {
            prop_assert!(w <= 1.0 && w >= (-k).exp() * (1.0 - 1e-12));
        }
        if f.abs() <= g.abs() {
            prop_assert!(wf >= wg);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr(g in prop::collection::vec(-1e3f64..1e3, 1..16), lr in 1e-5f64..1e-1) {
        prop_assume!(g.iter().all(|v| v.abs() > 1e-3));
        let mut p = vec![0.0; g.len()];
        let mut s = AdamState::new(g.len());
        adam_step(&mut p, &g, &mut s, lr).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            prop_assert!((pi + lr * gi.signum()).abs() <= 1e-6 * lr);
        }
    }

    #[test]
    fn jet_of_plane_wave_matches_closed_form(
        x in -3.0f64..3.0, y in -3.0f64..3.0, a in -4.0f64..4.0, b in -4.0f64..4.0,
    ) {
        let s = jet_seed(&[x, y]).unwrap();
        let u = (s[0] * a + s[1] * b).sin();
        let ph = a * x + b * y;
        let (sn, cs) = ph.sin_cos();
        let tol = 1e-12 * (1.0 + a * a + b * b);
        prop_assert!((u.value - sn).abs() <= tol);
        prop_assert!((u.grad(0) - a * cs).abs() <= tol);
        prop_assert!((u.grad(1) - b * cs).abs() <= tol);
        prop_assert!((u.hess(0, 0) + a * a * sn).abs() <= tol);
        prop_assert!((u.hess(0, 1) + a * b * sn).abs() <= tol);
        prop_assert!((u.hess(1, 1) + b * b * sn).abs() <= tol);

        // sin² + cos² is constant, so every derivative vanishes.
        let one = u * u + (s[0] * a + s[1] * b).cos() * (s[0] * a + s[1] * b).cos();
        prop_assert!((one.value - 1.0).abs() <= tol);
        for i in 0..2 {
            prop_assert!(one.grad(i).abs() <= tol);
            for j in 0..2 {
                prop_assert!(one.hess(i, j).abs() <= 10.0 * tol);
            }
        }
    }

    #[test]
    fn fusion_is_additive(x in 0.0f64..1.0, t in 0.0f64..1.0, seed in any::<u64>(), modules in 1usize..4) {
        let arch = Architecture {
            kind: ModelKind::Fg,
            in_dim: 2,
            width: 5,
            lf_depth: 2,
            modules,
            activation: Activation::Tanh,
        };
        let raw = Field::new("probe", |c| (c[0] * 7.0).sin());
        let model = FgModel::new(arch, EmbeddingFn::with_norm(raw, 2.0, 1.0).unwrap(), seed).unwrap();
        let p = [x, t];
        let (total, hf, lf) = (
            model.fg_forward(&p).unwrap(),
            model.hf_forward(&p).unwrap(),
            model.mlp_forward(&p).unwrap(),
        );
        let sum = hf + lf;
        prop_assert!((total.value - sum.value).abs() <= 1e-12);
        for i in 0..2 {
            prop_assert!((total.grad(i) - sum.grad(i)).abs() <= 1e-11);
            for j in 0..2 {
                prop_assert!((total.hess(i, j) - sum.hess(i, j)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn dft_parseval(v in prop::collection::vec(-10.0f64..10.0, 64)) {
        let x = dft(&v);
        let time: f64 = v.iter().map(|a| a * a).sum();
        let freq: f64 = x.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-10 * (1.0 + time));
    }

    #[test]
    fn pure_tone_amplitude(k in 1usize..256, amp in 0.01f64..10.0, phase in 0.0f64..6.28) {
        let xs = periodic_axis(0.0, 1.0, 512);
        let u: Vec<f64> = xs
            .iter()
            .map(|x| amp * (2.0 * std::f64::consts::PI * k as f64 * x + phase).cos())
            .collect();
        let s = amplitude_spectrum(&xs, &u, SpectrumSource::Exact).unwrap();
        prop_assert!((s.at(k).unwrap() - amp).abs() <= 1e-10 * amp);
        let leak: f64 = (0..=256).filter(|&j| j != k).map(|j| s.amp[j]).fold(0.0, f64::max);
        prop_assert!(leak <= 1e-10 * amp);
    }
}
