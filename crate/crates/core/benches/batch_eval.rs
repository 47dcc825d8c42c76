use criterion::{criterion_group, criterion_main, BenchmarkId as Id, Criterion};
use fgpinn::exec::Execution;
use fgpinn::model::{predict, Branch, EmbeddingFn, FgModel, ModelKind};
use fgpinn::problem::{make_benchmark, BenchmarkId};
use fgpinn::sampling::sample_conditions;
use fgpinn::training::{assemble_loss, TrainConfig, TrainingSet, Weighting};

fn loss_and_gradient(c: &mut Criterion) {
    let spec = make_benchmark(BenchmarkId::Heat1d);
    let mut cfg = TrainConfig::for_benchmark(BenchmarkId::Heat1d);
    cfg.n_interior = 1000;
    cfg.n_boundary = 200;
    cfg.n_initial = 200;
    let pts = sample_conditions(&spec, &cfg.counts(), cfg.seed).unwrap();
    let embed = EmbeddingFn::fit(spec.embedding_field(), cfg.k_star, &pts.interior, spec.dim).unwrap();
    let model = FgModel::new(cfg.architecture(ModelKind::Fg, spec.dim), embed, cfg.seed).unwrap();
    let set = TrainingSet::new(&spec, &pts, Some(&model.embed), Weighting::Source, &cfg).unwrap();

    let mut g = c.benchmark_group("loss_and_gradient");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(Id::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| assemble_loss(&model, &set, exec, true).unwrap())
        });
    }
    g.finish();

    let grid: Vec<f64> = (0..8192).flat_map(|i| [i as f64 / 8192.0, 0.5]).collect();
    let mut g = c.benchmark_group("predict_8192");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(Id::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| predict(&model, &grid, Branch::Total, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, loss_and_gradient);
criterion_main!(benches);
