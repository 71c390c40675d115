use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mnum_core::choice::mc_oracle;
use mnum_core::equilibrium::solve_mnum;
use mnum_core::network::{LatencyModel, NetworkBuilder, RateModel};
use mnum_core::{ChoiceModel, Execution, Instance, SolverOptions};
use std::hint::black_box;

/// Square grid with arcs in all four directions and one source per boundary node pair.
fn grid(side: usize, sources: usize) -> Instance {
    let id = |r: usize, c: usize| format!("n{r}_{c}");
    let mut b = NetworkBuilder::new().nodes((0..side * side).map(|i| id(i / side, i % side)));
    for r in 0..side {
        for c in 0..side {
            let l0 = 1.0 + 0.1 * ((r * 7 + c * 3) % 5) as f64;
            if c + 1 < side {
                b = b
                    .arc(
                        &format!("e{r}_{c}"),
                        &id(r, c),
                        &id(r, c + 1),
                        LatencyModel::mm1(20.0, l0),
                    )
                    .arc(
                        &format!("w{r}_{c}"),
                        &id(r, c + 1),
                        &id(r, c),
                        LatencyModel::mm1(20.0, l0),
                    );
            }
            if r + 1 < side {
                b = b
                    .arc(
                        &format!("s{r}_{c}"),
                        &id(r, c),
                        &id(r + 1, c),
                        LatencyModel::mm1(20.0, l0),
                    )
                    .arc(
                        &format!("n{r}_{c}"),
                        &id(r + 1, c),
                        &id(r, c),
                        LatencyModel::mm1(20.0, l0),
                    );
            }
        }
    }
    for k in 0..sources {
        let (r, c) = (k % side, (k * 3) % side);
        b = b.source(
            &format!("k{k}"),
            &id(r, c),
            &id(side - 1 - r, side - 1 - c),
            RateModel::vegas(1.0, 1.0),
        );
    }
    Instance::new(b.build().unwrap(), ChoiceModel::Logit { beta: 1.0 }).unwrap()
}

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient");
    for sources in [4, 16] {
        let base = grid(8, sources);
        let lambda: Vec<f64> = base.lower_bound().iter().map(|l| l + 0.3).collect();
        for (label, exec) in MODES {
            let inst = base.clone().with_execution(exec);
            group.bench_with_input(BenchmarkId::new(label, sources), &lambda, |b, l| {
                b.iter(|| inst.gradient(black_box(l)).unwrap())
            });
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc_oracle");
    group.sample_size(10);
    let z = [1.0, 1.3, 0.8, 2.0, 1.1];
    for (label, exec) in MODES {
        group.bench_function(label, |b| {
            b.iter(|| mc_oracle(1.5, black_box(&z), 1 << 20, 42, exec).unwrap())
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    let base = grid(6, 12);
    for (label, exec) in MODES {
        let inst = base.clone().with_execution(exec);
        group.bench_function(label, |b| {
            b.iter(|| solve_mnum(&inst, &SolverOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradient, monte_carlo, solve);
criterion_main!(benches);
