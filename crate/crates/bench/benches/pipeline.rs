use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hvac_mpc::mpc::{solve_gdm, solve_sqp, GdmConfig, Objective, SqpConfig};
use hvac_mpc::plant::{make_weather, Plant};
use hvac_mpc::{LagSpec, ModelKind, MpcConfig, PlantConfig};
use hvac_mpc_bench::{problem_at, single_zone_model};

fn plant_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("plant");
    for (name, cfg) in [("single_zone", PlantConfig::single_zone()), ("five_zone", PlantConfig::five_zone())] {
        let w = make_weather(&cfg.weather, &cfg.occupancy, 0, 1, cfg.sample_period).unwrap();
        let mut plant = Plant::new(cfg, 21.0).unwrap();
        let u = plant.control_box().midpoint();
        let mut k = 0;
        g.bench_function(name, |b| {
            b.iter(|| {
                k = (k + 1) % w.len();
                black_box(plant.apply(&u, &w[k]).unwrap())
            })
        });
    }
    g.finish();
}

fn prediction(c: &mut Criterion) {
    let mut g = c.benchmark_group("predict_windows");
    for kind in ModelKind::ALL {
        let (model, tr) = single_zone_model(kind, LagSpec::new(1, 1, 1));
        let windows: Vec<Vec<f64>> = (1..65).map(|t| hvac_mpc::dataio::window_at(&tr, model.lags, t)).collect();
        g.bench_with_input(BenchmarkId::from_parameter(kind), &windows, |b, w| {
            b.iter(|| black_box(model.predict_windows(w).unwrap()))
        });
    }
    g.finish();
}

fn cost_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("mpc_value_grad_h10");
    let cfg = MpcConfig::default();
    for kind in ModelKind::ALL {
        let (model, tr) = single_zone_model(kind, LagSpec::new(1, 1, 1));
        let p = problem_at(&model, &tr, 50, &cfg);
        let u = p.midpoint_plan().flatten();
        g.bench_function(BenchmarkId::from_parameter(kind), |b| b.iter(|| black_box(p.value_grad(&u).unwrap())));
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_h10_mlp");
    g.sample_size(10);
    let cfg = MpcConfig::default();
    let (model, tr) = single_zone_model(ModelKind::Mlp, LagSpec::new(1, 1, 1));
    let p = problem_at(&model, &tr, 50, &cfg);
    let init = p.midpoint_plan().flatten();
    g.bench_function("gdm", |b| b.iter(|| black_box(solve_gdm(&p, &init, &GdmConfig::default()).unwrap())));
    g.bench_function("sqp", |b| b.iter(|| black_box(solve_sqp(&p, &init, &SqpConfig::default()).unwrap())));
    g.finish();
}

criterion_group!(benches, plant_step, prediction, cost_gradient, solvers);
criterion_main!(benches);
