//! Sequential against rayon execution for the three heavy stages.

use std::sync::Arc;

use armub_core::armub::assemble_unchecked;
use armub_core::epsh::{best_reduction_shared, ReductionOptions};
use armub_core::hadamard::find_hadamard;
use armub_core::rbd::build_affine_rbd;
use armub_core::verify::{cross_stats_with, StatsMode};
use armub_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn reduction(c: &mut Criterion) {
    let h = Arc::new(find_hadamard(48).unwrap());
    let mut g = c.benchmark_group("best_reduction_48_t2");
    g.sample_size(10);
    for exec in MODES {
        let opts = ReductionOptions { exec, ..Default::default() };
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, o| {
            b.iter(|| best_reduction_shared(&h, 2, *o).unwrap())
        });
    }
    g.finish();
}

fn orthogonality(c: &mut Criterion) {
    let h = Arc::new(find_hadamard(80).unwrap());
    let y = best_reduction_shared(&h, 1, ReductionOptions::default()).unwrap();
    let mut g = c.benchmark_group("orthogonality_79");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| assert!(y.orthogonality_violation(e).is_none()))
        });
    }
    g.finish();
}

fn statistics(c: &mut Criterion) {
    let h = Arc::new(find_hadamard(32).unwrap());
    let y = Arc::new(best_reduction_shared(&h, 1, ReductionOptions::default()).unwrap());
    let bs = assemble_unchecked(Arc::new(build_affine_rbd(31, 31).unwrap()), y).unwrap();
    let mut g = c.benchmark_group("cross_stats_d961");
    g.sample_size(10);
    for exec in MODES {
        for (label, mode) in [("exhaustive", StatsMode::Exhaustive), ("sampled", StatsMode::Sampled { pairs: 200_000, seed: 1 })] {
            g.bench_function(BenchmarkId::new(label, format!("{exec:?}")), |b| b.iter(|| cross_stats_with(&bs, mode, exec).unwrap()));
        }
    }
    g.finish();
}

criterion_group!(benches, reduction, orthogonality, statistics);
criterion_main!(benches);
