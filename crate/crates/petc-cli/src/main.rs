//! Command-line front end: timing design, simulation runs, trade-off curves
//! and re-verification of recorded traces.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use petc_core::config::ScenarioConfig;
use petc_core::model::SystemModel;
use petc_core::design::{certify_timing, AgentDesign, TimingCertificate, TimingConstants, TriggerMode};
use petc_core::sim::run_scenario;
use petc_core::trace::TraceSchema;
use petc_core::verify::{check_trace, summarize, MonitorReport};

#[derive(Parser)]
#[command(name = "petc", version, about = "Design and simulate distributed periodic event-triggered control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute per-agent timing constants and decay tables, and certify them.
    Design {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for design.json and the decay tables.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run one scenario; writes trace.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Seed override (the PETC_SEED environment variable wins over this).
        #[arg(long)]
        seed: Option<u64>,
        /// Horizon override, seconds.
        #[arg(long)]
        horizon: Option<f64>,
        /// Trigger-coefficient mode override.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TriggerMode>,
        /// Run the full certificate monitor and write report.json.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sweep the contraction factor and export the timing trade-off curve.
    Curve {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated contraction factors, each in (0,1).
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-check a recorded trace against the storage-function certificate.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> std::result::Result<TriggerMode, String> {
    match s {
        "online" => Ok(TriggerMode::Online),
        "conservative" => Ok(TriggerMode::Conservative),
        other => Err(format!("unknown mode '{other}', expected online|conservative")),
    }
}

/// Writes through a temporary file in the target directory so readers never
/// observe partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Serialize)]
struct ReferenceCheck {
    published_tau_max: f64,
    published_tau_mad: f64,
    matches: bool,
    note: String,
}

#[derive(Serialize)]
struct AgentDesignReport {
    agent: usize,
    n_out: usize,
    gamma: f64,
    mu: f64,
    timing: TimingConstants,
    certificate: TimingCertificate,
    requested_miet: Option<f64>,
    effective_miet: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<ReferenceCheck>,
}

#[derive(Serialize)]
struct DesignReport {
    certified: bool,
    agents: Vec<AgentDesignReport>,
}

fn build(
    config_path: &Path,
) -> Result<(ScenarioConfig, petc_core::consensus::ConsensusModel, Vec<AgentDesign>)> {
    let cfg = ScenarioConfig::load(config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    let model = cfg.build_model()?;
    let designs = cfg.build_designs(&model)?;
    Ok((cfg, model, designs))
}

fn design_report(cfg: &ScenarioConfig, designs: &[AgentDesign]) -> Result<DesignReport> {
    let mut agents = Vec::new();
    let mut certified = true;
    for (i, d) in designs.iter().enumerate() {
        let cert = certify_timing(&d.params, &d.timing, cfg.etm.phi_step)?;
        certified &= cert.passed;
        let reference = cfg.etm.reference_constants.as_ref().map(|refs| {
            let r = refs[i];
            let matches = (d.timing.tau_max - r.tau_max).abs() < 5e-4
                && (d.timing.tau_mad - r.tau_mad).abs() < 5e-4;
            ReferenceCheck {
                published_tau_max: r.tau_max,
                published_tau_mad: r.tau_mad,
                matches,
                note: if matches {
                    "computed constants match the published values".into()
                } else {
                    format!(
                        "documented discrepancy: computed ({:.6}, {:.6}) vs published ({}, {}) under this design convention",
                        d.timing.tau_max, d.timing.tau_mad, r.tau_max, r.tau_mad
                    )
                },
            }
        });
        agents.push(AgentDesignReport {
            agent: i,
            n_out: d.params.n_out,
            gamma: d.params.gamma,
            mu: d.params.mu,
            timing: d.timing,
            certificate: cert,
            requested_miet: cfg.etm.miet_selection.as_ref().map(|s| s[i]),
            effective_miet: d.trigger.miet(),
            reference,
        });
    }
    Ok(DesignReport { certified, agents })
}

fn cmd_design(config: &Path, out: &Path) -> Result<i32> {
    let (cfg, _model, designs) = build(config)?;
    let report = design_report(&cfg, &designs)?;
    write_json(&out.join("design.json"), &report)?;

    // decay tables, one file per agent
    for (i, d) in designs.iter().enumerate() {
        let mut csv = String::from("tau,phi0,phi1\n");
        let s0 = d.table.slice(0);
        let s1 = d.table.slice(1);
        let n = s0.values().len().max(s1.values().len());
        for j in 0..n {
            let tau = j as f64 * d.table.step();
            let p0 = s0.values().get(j).map(|v| v.to_string()).unwrap_or_default();
            let p1 = s1.values().get(j).map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!("{tau},{p0},{p1}\n"));
        }
        write_atomic(&out.join(format!("phi_agent{i}.csv")), csv.as_bytes())?;
    }

    for a in &report.agents {
        println!(
            "agent {}: tau_max={:.6} tau_mad={:.6} tau_miet={:.6} miet={:.6} certificate={}",
            a.agent,
            a.timing.tau_max,
            a.timing.tau_mad,
            a.timing.tau_miet,
            a.effective_miet,
            if a.certificate.passed { "PASS" } else { "FAIL" }
        );
        if let Some(r) = &a.reference {
            println!("agent {}: {}", a.agent, r.note);
        }
    }
    println!(
        "design certification: {}",
        if report.certified { "PASS" } else { "FAIL" }
    );
    Ok(if report.certified { 0 } else { 1 })
}

fn print_report(report: &MonitorReport) {
    println!(
        "jumps: {} checked, {} exact-invariance, worst increase {:.3e}, violations {}",
        report.jumps.checked,
        report.jumps.equality_checked,
        report.jumps.max_delta_u,
        report.jumps.violations.len()
    );
    println!(
        "flow: {} samples, {} downgraded supply-rate warnings, hard violations {}",
        report.flow.samples,
        report.flow.downgraded,
        report.flow.hard_violations.len()
    );
    println!(
        "timing: min-gap ok {}, delay bound ok {}, transmissions at samplings {}, count bound ok {}",
        report.metrics.min_iet_ok,
        report.metrics.delay_ok,
        report.metrics.transmissions_at_samplings,
        report.metrics.zeno_bound_ok
    );
    println!("verdict: {}", if report.passed { "PASS" } else { "FAIL" });
}

fn cmd_simulate(
    config: &Path,
    seed: Option<u64>,
    horizon: Option<f64>,
    mode: Option<TriggerMode>,
    verify: bool,
    out: &Path,
) -> Result<i32> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(h) = horizon {
        cfg.scenario.horizon = h;
    }
    if let Some(m) = mode {
        cfg.etm.mode = m;
    }
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    if let Ok(env_seed) = std::env::var("PETC_SEED") {
        cfg.scenario.seed = env_seed
            .parse()
            .with_context(|| format!("PETC_SEED='{env_seed}' is not a u64"))?;
    }
    let model = cfg.build_model()?;
    let designs = cfg.build_designs(&model)?;
    cfg.validate_run(&model, &designs)?;
    let trace = run_scenario(&cfg, &model, &designs)?;

    let schema = TraceSchema::from_model(&model);
    let mut csv = Vec::new();
    trace.write_csv(&schema, &mut csv)?;
    write_atomic(&out.join("trace.csv"), &csv)?;
    write_json(&out.join("summary.json"), &summarize(&trace, &designs, &model))?;

    let mut code = 0;
    if verify {
        let report = check_trace(&trace, &model, &designs)?;
        write_json(&out.join("report.json"), &report)?;
        print_report(&report);
        if !report.passed {
            code = 1;
        }
    }
    println!(
        "simulated {}s, seed {}: {} transmissions, {} packets",
        trace.horizon,
        trace.seed,
        trace.transmissions.len(),
        trace.packets.len()
    );
    Ok(code)
}

fn cmd_curve(config: &Path, lambdas: &[f64], out: &Path) -> Result<i32> {
    if lambdas.is_empty() {
        bail!("--lambdas requires at least one value");
    }
    let (cfg, model, _designs) = build(config)?;
    let mut csv = String::from("agent,lambda,tau_max,tau_mad,tau_miet\n");
    for i in 0..model.topology().n_agents() {
        let base = model.etm_params(
            i,
            cfg.etm.lambda,
            cfg.etm.eps,
            cfg.etm.phi0_init,
            cfg.etm.phi1_init,
            cfg.etm.tau_masp,
            cfg.etm.d_min,
        );
        let curve = petc_core::design::tradeoff_curve(&base, lambdas, cfg.etm.phi_step)?;
        for w in &curve.warnings {
            eprintln!("agent {i}, lambda {}: skipped ({})", w.lambda, w.reason);
        }
        for p in &curve.points {
            csv.push_str(&format!(
                "{i},{},{},{},{}\n",
                p.lambda, p.tau_max, p.tau_mad, p.tau_miet
            ));
        }
    }
    write_atomic(&out.join("curve.csv"), csv.as_bytes())?;
    println!("curve written for {} contraction factors", lambdas.len());
    Ok(0)
}

fn cmd_verify(config: &Path, trace_path: &Path, out: &Path) -> Result<i32> {
    let (_cfg, model, designs) = build(config)?;
    let schema = TraceSchema::from_model(&model);
    let file =
        fs::File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
    let trace = petc_core::SimTrace::read_csv(&schema, std::io::BufReader::new(file))?;
    let report = check_trace(&trace, &model, &designs)?;
    write_json(&out.join("report.json"), &report)?;
    print_report(&report);
    Ok(if report.passed { 0 } else { 1 })
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Design { config, out } => cmd_design(config, out),
        Cmd::Simulate {
            config,
            seed,
            horizon,
            mode,
            verify,
            out,
        } => cmd_simulate(config, *seed, *horizon, *mode, *verify, out),
        Cmd::Curve { config, lambdas, out } => cmd_curve(config, lambdas, out),
        Cmd::Verify { config, trace, out } => cmd_verify(config, trace, out),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
