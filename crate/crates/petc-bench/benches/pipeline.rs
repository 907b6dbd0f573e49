use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use petc_core::config::consensus_eight_config;
use petc_core::design::{design_agent, EtmParams, TriggerMode};
use petc_core::sim::{run, run_scenario};
use petc_core::verify::StorageEvaluator;

fn degree_class_params(n_out: usize) -> EtmParams {
    let c = 0.95 * (1.0 - 0.1 * n_out as f64);
    EtmParams {
        gamma: (n_out as f64 / 0.1 + 0.05).sqrt(),
        lip: 0.0,
        mu: c / n_out as f64,
        eps: 0.5,
        lambda: 0.2,
        n_out,
        phi0_init: 5.0,
        phi1_init: 2.0,
        tau_masp: 5e-3,
        d_min: 1e-3,
    }
}

fn bench_timing_design(c: &mut Criterion) {
    c.bench_function("design/degree2_agent", |b| {
        let p = degree_class_params(2);
        b.iter(|| design_agent(black_box(p), 1e-5, TriggerMode::Online, 0.05, None).unwrap());
    });
}

fn bench_simulation(c: &mut Criterion) {
    let cfg = {
        let mut cfg = consensus_eight_config(7, 1.0);
        cfg.scenario.record.flow_stride = None;
        cfg.scenario.record.jumps = false;
        cfg
    };
    let model = cfg.build_model().unwrap();
    let designs = cfg.build_designs(&model).unwrap();
    c.bench_function("sim/eight_agents_1s", |b| {
        b.iter(|| run_scenario(black_box(&cfg), &model, &designs).unwrap());
    });
}

fn bench_storage_eval(c: &mut Criterion) {
    let mut cfg = consensus_eight_config(3, 0.5);
    cfg.scenario.record.flow_stride = Some(1e-2);
    let (trace, designs) = run(&cfg).unwrap();
    let model = cfg.build_model().unwrap();
    let ev = StorageEvaluator::new(&model, &designs);
    let state = trace.rows.last().unwrap().state.clone();
    c.bench_function("verify/storage_value", |b| {
        b.iter(|| ev.storage(black_box(&state)).unwrap());
    });
}

criterion_group!(benches, bench_timing_design, bench_simulation, bench_storage_eval);
criterion_main!(benches);
