use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use levywave_core::branching::extinction_cell;
use levywave_core::fkpp::{discretize_adjoint, run_front, step_profile, Grid};
use levywave_core::paths::{first_passage_mc, yaglom_mc_tilted};
use levywave_core::{BranchingConfig, JumpDistribution, JumpSpec, LevyTriplet, PathConfig};

fn jump_model() -> LevyTriplet {
    LevyTriplet::new(
        0.0,
        1.0,
        Some(JumpSpec {
            rate: 1.0,
            dist: JumpDistribution::DoubleExponential {
                p: 0.5,
                eta_plus: 3.0,
                eta_minus: 3.0,
            },
        }),
    )
    .unwrap()
}

fn legendre(c: &mut Criterion) {
    let m = jump_model();
    c.bench_function("legendre", |b| {
        b.iter(|| m.legendre(black_box(1.3)).unwrap())
    });
    c.bench_function("gamma_inverse", |b| {
        b.iter(|| m.gamma_inverse(black_box(0.8)).unwrap())
    });
}

fn killed_paths(c: &mut Criterion) {
    let bm = LevyTriplet::brownian(0.0, 1.0).unwrap();
    let m = jump_model();
    let mut g = c.benchmark_group("first_passage_10k");
    for (name, model) in [("brownian", &bm), ("jumps", &m)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), model, |b, model| {
            let cfg = PathConfig::new(0.1, 50.0, 1).unwrap();
            b.iter(|| first_passage_mc(model, 1.0, 1.0, 10_000, &cfg).unwrap())
        });
    }
    g.finish();
    c.bench_function("yaglom_tilted_100k", |b| {
        let cfg = PathConfig::new(100.0, 15.0, 1).unwrap();
        b.iter(|| yaglom_mc_tilted(&bm, 1.0, 1.0, 15.0, 1.0, 100_000, &cfg).unwrap())
    });
}

fn branching(c: &mut Criterion) {
    let bm = LevyTriplet::brownian(0.0, 1.0).unwrap();
    let cfg = BranchingConfig::new(0.8, 2_000, 60.0, 0.25, 1).unwrap();
    c.bench_function("extinction_cell_100", |b| {
        b.iter(|| extinction_cell(&bm, 1.0, 0.8, 2.0, 100, &cfg).unwrap())
    });
}

fn front(c: &mut Criterion) {
    let mut g = c.benchmark_group("front_t5");
    for (name, model) in [
        ("brownian", LevyTriplet::brownian(0.0, 1.0).unwrap()),
        ("jumps", jump_model()),
    ] {
        let grid = Grid::spanning(-20.0, 60.0, 0.1).unwrap();
        let dt = 0.9 * discretize_adjoint(&model, 0.1).unwrap().max_stable_dt(1.0);
        let u0 = step_profile(&grid);
        g.bench_function(name, |b| {
            b.iter(|| run_front(&model, 1.0, &u0, &grid, 5.0, dt, 0.5).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = legendre, killed_paths, branching, front
}
criterion_main!(benches);
