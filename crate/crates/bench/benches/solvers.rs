use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rumheat::grid::{make_cutoff, Interval, SpatialGrid, TimeGrid};
use rumheat::rum::{solve_rum, RumOptions};
use rumheat::strategy::{run_odd_strategy, PowerSystemConfig};
use rumheat::{
    Grids, HeatSolver, ParabolicOperator, RumProblem, Scheme, SpaceTimeField, WeightSystem,
};

fn grids() -> Grids {
    Grids::new(
        SpatialGrid::unit(63).unwrap(),
        TimeGrid::new(1.0, 256).unwrap(),
    )
}

fn heat(c: &mut Criterion) {
    let g = grids();
    let solver = HeatSolver::new(&ParabolicOperator::heat(63), &g, Scheme::ImplicitEuler).unwrap();
    let y0 = g.space.sample(|x| (PI * x).sin());
    let source = SpaceTimeField::from_fn(257, 63, |j, i| ((j * 7 + i * 3) % 11) as f64 - 5.0);
    c.bench_function("forward 63x256", |b| {
        b.iter(|| solver.forward(black_box(&y0), &source).unwrap())
    });
    c.bench_function("adjoint 63x256", |b| {
        b.iter(|| solver.adjoint(black_box(&y0)).unwrap())
    });
}

fn rum(c: &mut Criterion) {
    let g = grids();
    let omega = Interval::new(0.3, 0.7);
    let omega1 = Interval::new(0.4, 0.6);
    let solver = HeatSolver::new(&ParabolicOperator::heat(63), &g, Scheme::ImplicitEuler).unwrap();
    let w = WeightSystem::build(&g, omega1, 1.0, 1.0, 1).unwrap();
    let cutoff = make_cutoff(&g.space, omega, omega1, 3).unwrap();
    let p = RumProblem::new(
        solver,
        w,
        cutoff,
        3,
        1e-6,
        g.space.sample(|x| (PI * x).sin()),
    )
    .unwrap();
    c.bench_function("solve_rum k=1", |b| {
        b.iter(|| solve_rum(black_box(&p), &RumOptions::default()).unwrap())
    });

    let u0 = g.space.sample(|x| (PI * x).sin());
    let v0 = g.space.sample(|x| x * (1.0 - x));
    let config = PowerSystemConfig::new(3, g, u0, v0).unwrap();
    let mut group = c.benchmark_group("strategy");
    group.sample_size(10);
    group.bench_function("odd k=1", |b| {
        b.iter(|| run_odd_strategy(black_box(&config)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, heat, rum);
criterion_main!(benches);
