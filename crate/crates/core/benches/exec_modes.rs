//! Sequential vs rayon execution of the four data-parallel hot loops. Both
//! modes compute identical bits, so only wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use flowrl::exec::Exec;
use flowrl::flowcore::fm_loss_and_grad_with;
use flowrl::harness::pretrain_for;
use flowrl::rollout::rollout_batch;
use flowrl::trainer::{evaluate, fm_batch, surrogate_loss_and_grad, TrainConfig, Trainer};

fn modes() -> Vec<(&'static str, Exec)> {
    vec![("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn setup() -> (TrainConfig, Trainer) {
    let cfg = TrainConfig {
        pretrain_steps: 50,
        ..TrainConfig::default()
    }
    .resolve()
    .unwrap();
    let params = pretrain_for(&cfg, Exec::default()).unwrap().0;
    let trainer = Trainer::new(cfg.clone(), params, Exec::default()).unwrap();
    (cfg, trainer)
}

fn bench(c: &mut Criterion) {
    let (cfg, trainer) = setup();
    let task = trainer.task().clone();
    let sched = *trainer.schedule();
    let params = trainer.params().clone();
    let contexts = trainer.contexts_for(1);
    let opts = cfg.rollout_options();

    let mut g = c.benchmark_group("rollout_batch");
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| rollout_batch(black_box(&params), &contexts, &sched, &task, 0, 1, &opts, exec).unwrap())
        });
    }
    g.finish();

    let batch = trainer.sample_batch(1, &task).unwrap();
    let adv = batch.advantages();
    let mut g = c.benchmark_group("surrogate_grad");
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                surrogate_loss_and_grad(trainer.triplet(), &batch.groups, &adv, &sched, cfg.eps_clip, 0.01, exec).unwrap()
            })
        });
    }
    g.finish();

    let fm = fm_batch(&task, cfg.pretrain_batch, 0, 0);
    let mut g = c.benchmark_group("fm_grad");
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fm_loss_and_grad_with(black_box(&params), &fm, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(black_box(&params), &task, &sched, 256, 0.5, 0, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
