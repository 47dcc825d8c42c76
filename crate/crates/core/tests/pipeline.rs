use fgpinn::analysis::{evaluate, subnetwork_spectra, periodic_axis};
use fgpinn::model::{predict, Branch, Checkpoint, FgModel};
use fgpinn::problem::{make_benchmark, BenchmarkId};
use fgpinn::training::{train, TrainConfig};
use fgpinn::Execution;

fn tiny(id: BenchmarkId, iters: usize) -> TrainConfig {
    let mut cfg = TrainConfig::for_benchmark(id);
    cfg.n_interior = 96;
    cfg.width = 8;
    cfg.lf_depth = 2;
    cfg.modules = 1;
    cfg.iters = iters;
    cfg.eval_every = 10;
    cfg
}

#[test]
fn short_poisson_run_lowers_loss_and_round_trips() {
    let spec = make_benchmark(BenchmarkId::Poisson1d);
    let out = train(&spec, &tiny(BenchmarkId::Poisson1d, 30)).unwrap();
    assert!(out.failure.is_none());
    let first = out.history.first().unwrap().loss.total;
    let last = out.history.last().unwrap().loss.total;
    assert!(last < first, "{first} -> {last}");
    assert_eq!(out.history.last().unwrap().iter, 30);

    let ckpt = Checkpoint::from_json(&out.model.to_checkpoint(serde_json::Value::Null).to_json()).unwrap();
    let back = FgModel::from_checkpoint(&ckpt, spec.embedding_field()).unwrap();
    let xs = periodic_axis(spec.lower[0], spec.upper[0], 512);
    let a = predict(&out.model, &xs, Branch::Total, Execution::Sequential).unwrap();
    let b = predict(&back, &xs, Branch::Total, Execution::Sequential).unwrap();
    assert_eq!(a, b);

    let (metrics, grids) = evaluate(&out.model, &spec, Execution::Sequential).unwrap();
    assert!(metrics.rel_l2.is_finite() && metrics.rel_l2 > 0.0);
    assert_eq!(grids[0].1.len(), grids[0].0.len());
    assert_eq!(out.final_rel_l2(), Some(metrics.rel_l2));

    // The two branch spectra add up to the total spectrum's complex sum,
    // so each amplitude is bounded by the sum of the branch amplitudes.
    let (hf, lf) = subnetwork_spectra(&out.model, &xs, Execution::Sequential).unwrap();
    let total = fgpinn::analysis::amplitude_spectrum(&xs, &a, fgpinn::analysis::SpectrumSource::Total).unwrap();
    for k in 0..total.amp.len() {
        assert!(total.amp[k] <= hf.amp[k] + lf.amp[k] + 1e-12);
    }
}

#[test]
fn every_benchmark_trains_a_few_steps() {
    for id in [
        BenchmarkId::Poisson1d,
        BenchmarkId::Heat1d,
        BenchmarkId::Wave3,
        BenchmarkId::Wave4,
        BenchmarkId::Heat2dReversed,
    ] {
        let spec = make_benchmark(id);
        let mut cfg = tiny(id, 2);
        cfg.n_boundary = cfg.n_boundary.min(40);
        cfg.n_initial = cfg.n_initial.min(20);
        cfg.n_velocity = cfg.n_velocity.min(20);
        cfg.n_final = cfg.n_final.min(20);
        let out = train(&spec, &cfg).unwrap();
        assert!(out.failure.is_none(), "{id}");
        assert_eq!(out.history.len(), 3, "{id}");
        assert!(out.history.iter().all(|h| h.loss.total.is_finite()), "{id}");
    }
}
