use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dyndisc::config::preset;
use dyndisc::dataset::SimSpec;
use dyndisc::neural::{loss_and_grad, Activation, MlpParams, NeuralField, Observed};
use dyndisc::ode::integrate_rk4_substeps;
use dyndisc::symreg::{derivative_targets, mse_loss, parse_expr, search, SrConfig, VARIABLE_NAMES};
use dyndisc::systems::{BioParams, CartPole, CartPoleParams};

fn solver(c: &mut Criterion) {
    let field = CartPole(CartPoleParams::default());
    let sim = SimSpec::cartpole();
    let grid = sim.grid();
    c.bench_function("rk4 cart-pole 10 s", |b| {
        b.iter(|| integrate_rk4_substeps(&field, black_box(&[1.4, 5.0]), &grid, sim.substeps).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let cfg = preset("cartpole_modelA").unwrap();
    let clean = cfg.ground_truth().unwrap();
    let (observed, _) = cfg.observe(&clean).unwrap();
    let batch: Vec<Observed> = observed.entries.iter().take(16).map(|e| Observed::from_first(&e.traj)).collect();
    let field = NeuralField::new(MlpParams::glorot(vec![2, 20, 20, 2], Activation::Tanh, 1));
    c.bench_function("loss+grad, 16 cart-pole trajectories", |b| {
        b.iter(|| loss_and_grad(&field, black_box(&batch), 4).unwrap())
    });
}

fn regression(c: &mut Criterion) {
    let cfg = preset("bio_sr_groundtruth").unwrap();
    let clean = cfg.ground_truth().unwrap();
    let targets = derivative_targets(&clean.entries[0].traj, 10, 100, true, &BioParams::default()).unwrap();
    let eq = parse_expr("2.079 - 3.78*phi_R - lambda - lambda*psi_A", &VARIABLE_NAMES).unwrap();
    c.bench_function("mse of a 13-node expression, 691 rows", |b| b.iter(|| mse_loss(black_box(&eq), &targets[0])));
    let cfg = SrConfig {
        iterations: 5,
        ..SrConfig::default()
    };
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    group.bench_function("5 iterations on the ribosome-fraction target", |b| b.iter(|| search(&cfg, &targets[1]).unwrap()));
    group.finish();
}

criterion_group!(benches, solver, training_step, regression);
criterion_main!(benches);
