//! Acceptance suite. Each test prints one pass/fail line for its criterion.
//!
//! Criterion 1 note: with the benchmark tuning the certified delay bounds are
//! 11.49 ms (degree-2 agents) and 7.05 ms (degree-3 agents). A 10 ms sampling
//! period therefore admits no network delay on degree-3 links — the published
//! parameter set is internally inconsistent under this design convention —
//! so the canonical scenario samples at 5 ms and the 10 ms variant is
//! asserted to be rejected at load time with the margin diagnostic.

mod common;

use std::sync::Mutex;
use std::time::Instant;

/// The criteria run one at a time so the wall-clock bound of criterion 1 is
/// not distorted by the other sweeps.
static GATE: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

use petc_core::config::consensus_eight_config;
use petc_core::design::{certify_timing, design_agent, integrate_phi, TriggerMode};
use petc_core::sim::{run, run_scenario, stream_rng};
use petc_core::trace::{RowKind, TraceSchema};
use petc_core::verify::{check_flow, check_jumps, metrics, phi_bar, w_tilde, StorageEvaluator};
use rand::Rng;

fn report(criterion: u32, passed: bool, details: &str) {
    println!(
        "acceptance criterion {criterion}: {} — {details}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {details}");
}

#[test]
fn criterion_1_case_study_regression() {
    let _serial = serial();
    let mut cfg = consensus_eight_config(2026, 10.0);
    cfg.scenario.record.flow_stride = Some(1e-2);

    let started = Instant::now();
    let (trace, _designs) = run(&cfg).unwrap();
    let runtime = started.elapsed();

    let spreads: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.kind == RowKind::Flow)
        .map(|r| (r.t, common::spread(&r.state.x)))
        .collect();
    let initial = spreads[0].1;
    let crossing = spreads.iter().find(|&&(_, s)| s < 0.01 * initial);

    let mut worst_v_rise = 0.0f64;
    for w in trace.rows.windows(2) {
        worst_v_rise = worst_v_rise.max(w[1].v - w[0].v);
    }

    // The 10 ms sampling variant of the published parameters leaves no
    // admissible network delay for the degree-3 class; the loader must say so.
    let mut literal = consensus_eight_config(2026, 10.0);
    literal.etm.tau_masp = 1e-2;
    let model = literal.build_model().unwrap();
    let designs = literal.build_designs(&model).unwrap();
    let rejection = literal.validate_run(&model, &designs);
    let rejected = matches!(&rejection, Err(e) if e.to_string().contains("no admissible network delay"));

    let passed = crossing.is_some() && worst_v_rise <= 1e-6 && runtime.as_secs_f64() < 10.0 && rejected;
    report(
        1,
        passed,
        &format!(
            "spread {initial:.3} -> 1% at t={:?}, worst V rise {worst_v_rise:.2e} (slack 1e-6), \
             runtime {runtime:?} (< 10 s), 10 ms-sampling variant rejected: {rejected}",
            crossing.map(|c| c.0)
        ),
    );
}

#[test]
fn criterion_2_timing_guarantees() {
    let _serial = serial();
    let base = consensus_eight_config(0, 3.0);
    let model = base.build_model().unwrap();
    let designs = base.build_designs(&model).unwrap();
    base.validate_run(&model, &designs).unwrap();

    let mut total_tx = 0usize;
    let mut total_packets = 0usize;
    let mut violations = Vec::new();
    for seed in 0..100u64 {
        let mut cfg = consensus_eight_config(seed, 3.0);
        cfg.scenario.record.flow_stride = None;
        cfg.scenario.record.jumps = false;
        let trace = run_scenario(&cfg, &model, &designs).unwrap();
        let m = metrics(&trace, &designs, &model);
        if !m.min_iet_ok {
            violations.push(format!("seed {seed}: inter-event gap below the enforced minimum"));
        }
        if !m.delay_ok {
            violations.push(format!("seed {seed}: packet exceeded the sender delay bound"));
        }
        if !m.transmissions_at_samplings {
            violations.push(format!("seed {seed}: transmission outside the sampling sequence"));
        }
        if !m.zeno_bound_ok {
            violations.push(format!("seed {seed}: transmission count above the gap bound"));
        }
        total_tx += trace.transmissions.len();
        total_packets += trace.packets.len();
    }
    let passed = violations.is_empty() && total_tx > 10_000;
    report(
        2,
        passed,
        &format!(
            "100 seeded runs, {total_tx} transmissions, {total_packets} packets, {} violations {:?}",
            violations.len(),
            violations.first()
        ),
    );
}

#[test]
fn criterion_3_storage_certificate() {
    let _serial = serial();
    let base = consensus_eight_config(0, 2.5);
    let model = base.build_model().unwrap();
    let designs = base.build_designs(&model).unwrap();
    let ev = StorageEvaluator::new(&model, &designs);

    let mut jumps_checked = 0usize;
    let mut equality_checked = 0usize;
    let mut flow_samples = 0usize;
    let mut downgraded = 0usize;
    let mut failures = Vec::new();
    for seed in 100..110u64 {
        let mut cfg = consensus_eight_config(seed, 2.5);
        cfg.scenario.record.flow_stride = Some(1e-4);
        let trace = run_scenario(&cfg, &model, &designs).unwrap();
        let jumps = check_jumps(&trace, &ev).unwrap();
        let flow = check_flow(&trace, &ev).unwrap();
        if !jumps.passed {
            failures.push(format!("seed {seed}: {:?}", jumps.violations.first()));
        }
        if !flow.passed {
            failures.push(format!("seed {seed}: {:?}", flow.hard_violations.first()));
        }
        jumps_checked += jumps.checked;
        equality_checked += jumps.equality_checked;
        flow_samples += flow.samples;
        downgraded += flow.downgraded;
    }
    let passed = failures.is_empty() && jumps_checked > 10_000;
    report(
        3,
        passed,
        &format!(
            "10 seeded runs: {jumps_checked} jumps ({equality_checked} exact-invariance), \
             {flow_samples} flow samples at stride 1e-4, {downgraded} supply-rate downgrades, \
             failures: {:?}",
            failures.first()
        ),
    );
}

#[test]
fn criterion_4_condition3_certification() {
    let _serial = serial();
    let mut details = String::new();
    let mut passed = true;
    // published constants for the two agent classes, for the comparison
    let reference = [(2usize, (0.12, 0.016)), (3usize, (0.09, 0.012))];
    for (n_out, (ref_max, ref_mad)) in reference {
        let p = common::bench_etm_params(n_out, 5e-3);
        let design = design_agent(p, 1e-5, TriggerMode::Online, 0.05, None).unwrap();

        let cert = certify_timing(&p, &design.timing, 1e-5).unwrap();
        passed &= cert.passed;

        // independent closed-form oracle for the Lipschitz-free stage
        let slice = integrate_phi(&p, 0, design.timing.tau_max, 1e-5).unwrap();
        let mut worst = 0.0f64;
        let mut tau = 0.0;
        while tau <= design.timing.tau_max {
            let diff = (slice.eval(tau).unwrap() - common::closed_form_phi(0, tau, &p)).abs();
            worst = worst.max(diff);
            tau += 1.3e-4;
        }
        passed &= worst < 1e-8;
        let tau_max_cf = common::closed_form_tau_max(&p);
        passed &= (design.timing.tau_max - tau_max_cf).abs() < 1e-7;

        let matches =
            (design.timing.tau_max - ref_max).abs() < 5e-4 && (design.timing.tau_mad - ref_mad).abs() < 5e-4;
        details.push_str(&format!(
            "degree {n_out}: certified (tau_max, tau_mad) = ({:.6}, {:.6}), margins ({:.2e}, {:.2e}), \
             closed-form dev {worst:.2e}; published ({ref_max}, {ref_mad}) -> {}; ",
            design.timing.tau_max,
            design.timing.tau_mad,
            cert.contraction_margin,
            cert.ordering_margin,
            if matches {
                "match".to_string()
            } else {
                format!(
                    "documented discrepancy (off by {:.3}, {:.3})",
                    (design.timing.tau_max - ref_max).abs(),
                    (design.timing.tau_mad - ref_mad).abs()
                )
            }
        ));
    }
    report(4, passed, &details);
}

#[test]
fn criterion_5_lemma_property_suites() {
    let _serial = serial();
    const INSTANCES: usize = 10_000;
    const SLACK: f64 = 1e-12;
    let mut rng = stream_rng(424242, 9);
    let lambda = 0.2;
    let out: Vec<usize> = vec![0, 1, 2];

    // pending-update measure relations, vector-valued blocks of width 2
    let mut fails_update = 0usize;
    let mut fails_sampling = 0usize;
    let mut fails_transmit = 0usize;
    for _ in 0..INSTANCES {
        let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let r: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let e_out: Vec<Vec<f64>> = (0..4)
            .map(|m| {
                if out.contains(&m) {
                    (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect()
                } else {
                    vec![0.0, 0.0]
                }
            })
            .collect();
        let mut ell = vec![false; 4];
        let mut buf = vec![false; 4];
        for &m in &out {
            match rng.gen_range(0..3) {
                1 => ell[m] = true,
                2 => buf[m] = true,
                _ => {}
            }
        }
        let w_base = w_tilde(lambda, &out, &ell, &buf, &y, &e_out, &r);

        // update event: one in-flight packet becomes buffered
        if let Some(&m) = out.iter().find(|&&m| ell[m]) {
            let mut ell2 = ell.clone();
            let mut buf2 = buf.clone();
            ell2[m] = false;
            buf2[m] = true;
            let w2 = w_tilde(lambda, &out, &ell2, &buf2, &y, &e_out, &r);
            if (w2 - w_base).abs() > SLACK {
                fails_update += 1;
            }
        }
        // sampling event without transmission: one buffered packet processed
        if let Some(&m) = out.iter().find(|&&m| buf[m]) {
            let mut buf2 = buf.clone();
            buf2[m] = false;
            let mut e2 = e_out.clone();
            for k in 0..2 {
                e2[m][k] = r[k] - y[k];
            }
            let w2 = w_tilde(lambda, &out, &ell, &buf2, &y, &e2, &r);
            if w2 > w_base + SLACK {
                fails_sampling += 1;
            }
        }
        // sampling event with transmission: all links raised, memory = output
        let idle = vec![false; 4];
        let mut mask = vec![false; 4];
        for &m in &out {
            mask[m] = true;
        }
        let w_idle = w_tilde(lambda, &out, &idle, &idle, &y, &e_out, &r);
        let w_tx = w_tilde(lambda, &out, &mask, &idle, &y, &e_out, &y);
        if w_tx > lambda * w_idle + SLACK {
            fails_transmit += 1;
        }
    }

    // trigger-increment bounds on admissible states, for both agent classes
    let mut fails_rho = 0usize;
    let mut fails_nu = 0usize;
    for n_out in [2usize, 3] {
        let p = common::bench_etm_params(n_out, 5e-3);
        let design = design_agent(p, 1e-5, TriggerMode::Online, 0.05, None).unwrap();
        let miet = design.trigger.miet();
        let g0 = p.gamma_tilde(0);
        let g1 = p.gamma_tilde(1);
        let outs: Vec<usize> = (0..n_out).collect();
        for _ in 0..INSTANCES / 2 {
            let y = vec![rng.gen_range(-5.0..5.0)];
            let e_out: Vec<Vec<f64>> = (0..n_out).map(|_| vec![rng.gen_range(-5.0..5.0)]).collect();
            let e_sq: f64 = e_out.iter().map(|b| b[0] * b[0]).sum();
            let sigma = rng.gen_range(0.0..p.tau_masp);
            let tau = miet + rng.gen_range(0.0..2.0 * p.tau_masp);

            // transmission bound: top-up is covered by the storage-term drop
            let idle = vec![false; n_out];
            let mut mask = vec![false; n_out];
            for &m in &outs {
                mask[m] = true;
            }
            let w_post = w_tilde(p.lambda, &outs, &mask, &idle, &y, &e_out, &y);
            let rho = design.trigger.rho(e_sq, sigma).unwrap();
            let rhs = -(g1 * p.phi1_init * w_post * w_post
                - g0 * phi_bar(&design, 0, tau, sigma).unwrap() * e_sq);
            if rho > rhs + SLACK {
                fails_rho += 1;
            }

            // sampling bound past the enforced gap (idle links: admissible)
            let tau2 = miet + rng.gen_range(1e-9..2.0 * p.tau_masp);
            let nu = design.trigger.nu(e_sq, tau2, sigma).unwrap();
            let rhs2 = -g0
                * (phi_bar(&design, 0, tau2, 0.0).unwrap() - phi_bar(&design, 0, tau2, sigma).unwrap())
                * e_sq;
            if nu > rhs2 + SLACK {
                fails_nu += 1;
            }
        }
    }

    // stage-weighted gain dominance
    let mut fails_dom = 0usize;
    for n_out in [2usize, 3] {
        let p = common::bench_etm_params(n_out, 5e-3);
        let outs: Vec<usize> = (0..n_out).collect();
        for _ in 0..INSTANCES / 2 {
            let y = vec![rng.gen_range(-5.0..5.0)];
            let r = vec![rng.gen_range(-5.0..5.0)];
            let e_out: Vec<Vec<f64>> = (0..n_out).map(|_| vec![rng.gen_range(-5.0..5.0)]).collect();
            let e_sq: f64 = e_out.iter().map(|b| b[0] * b[0]).sum();
            let mut ell = vec![false; n_out];
            let mut buf = vec![false; n_out];
            for m in 0..n_out {
                match rng.gen_range(0..3) {
                    1 => ell[m] = true,
                    2 => buf[m] = true,
                    _ => {}
                }
            }
            let pf = petc_core::verify::p_flag(&outs, &ell, &buf);
            let w = w_tilde(p.lambda, &outs, &ell, &buf, &y, &e_out, &r);
            let gt = p.gamma_tilde(pf);
            if gt * gt * w * w < p.gamma * p.gamma * e_sq - SLACK * (1.0 + e_sq) {
                fails_dom += 1;
            }
        }
    }

    let passed = fails_update + fails_sampling + fails_transmit + fails_rho + fails_nu + fails_dom == 0;
    report(
        5,
        passed,
        &format!(
            "{INSTANCES} instances per relation: update invariance {fails_update} fails, \
             sampling contraction {fails_sampling}, transmission contraction {fails_transmit}, \
             transmission bound {fails_rho}, sampling bound {fails_nu}, gain dominance {fails_dom}"
        ),
    );
}

#[test]
fn criterion_6_determinism() {
    let _serial = serial();
    let make = || {
        let mut cfg = consensus_eight_config(31415, 1.5);
        cfg.scenario.record.flow_stride = Some(1e-3);
        cfg
    };
    let cfg = make();
    let model = cfg.build_model().unwrap();
    let schema = TraceSchema::from_model(&model);
    let emit = |cfg: &petc_core::ScenarioConfig| -> Vec<u8> {
        let (trace, _) = run(cfg).unwrap();
        let mut bytes = Vec::new();
        trace.write_csv(&schema, &mut bytes).unwrap();
        bytes
    };
    let a = emit(&make());
    let b = emit(&make());
    let mut other = make();
    other.scenario.seed = 31416;
    let c = emit(&other);
    let passed = a == b && a != c;
    report(
        6,
        passed,
        &format!(
            "two runs of one seed: {} bytes, byte-identical: {}; different seed differs: {}",
            a.len(),
            a == b,
            a != c
        ),
    );
}
