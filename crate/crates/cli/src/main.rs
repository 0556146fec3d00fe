mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use penfem::harness::{
    default_max_level, emit_outputs, run_cavity, run_penalty_study, run_spatial_study, run_temporal_study,
    ExperimentKind, ExperimentReport, ExperimentSpec, GhiaProfile,
};
use penfem::solver::{BoundaryKind, Convection, Discretization, Parameters, PicardConfig, SystemForm};
use penfem::stepper::{Forcing, State, Stepper};
use penfem::{ElementPair, Error, Result};

use config::{parse_levels, Settings};

#[derive(Parser)]
#[command(name = "penfem", version, about = "Penalty finite element experiments for 2D Navier-Stokes")]
struct Cli {
    /// key=value file supplying any flag; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution errors over mesh levels with k = eps = c h^(m+1).
    Spatial(Flags),
    /// Error against the time step at a fixed mesh (k = dt, dt/2, ..., dt/16).
    Temporal(Flags),
    /// Error against the penalty parameter (eps, eps/10, ..., eps/1000).
    Penalty(Flags),
    /// Lid-driven cavity compared with reference centerline profiles.
    Cavity(Flags),
    /// Quick self-checks of the solver (seconds).
    Selftest,
}

#[derive(Args, Default)]
struct Flags {
    /// Element pair: p2p1, p3p2 or crp0.
    #[arg(long)]
    pair: Option<String>,
    /// Mesh levels (h = 2^-level): `1-5`, `1,2,3` or a single level.
    #[arg(long)]
    levels: Option<String>,
    /// Coupling constant c in k = eps = c h^(m+1).
    #[arg(long = "c")]
    c: Option<f64>,
    /// Viscosity.
    #[arg(long)]
    nu: Option<f64>,
    /// Penalty parameter (largest value for the penalty sweep).
    #[arg(long)]
    eps: Option<f64>,
    /// Time step (largest value for the temporal sweep).
    #[arg(long)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    final_time: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the reference profiles ghia_re<Re>_{u_x05,v_y05}.csv.
    #[arg(long)]
    ghia: Option<PathBuf>,
    /// Allow levels above the default maximum (long runtimes).
    #[arg(long)]
    full: bool,
}

impl Flags {
    fn settings(&self) -> Result<Settings> {
        Ok(Settings {
            pair: self.pair.as_deref().map(str::parse).transpose()?,
            levels: self.levels.as_deref().map(parse_levels).transpose()?,
            c: self.c,
            nu: self.nu,
            eps: self.eps,
            dt: self.dt,
            final_time: self.final_time,
            out: self.out.clone(),
            ghia: self.ghia.clone(),
            full: self.full.then_some(true),
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse { .. } => 4,
        e if e.is_solver_failure() => 3,
        _ => 2,
    }
}

fn check_levels(pair: ElementPair, levels: &[u32], full: bool) -> Result<()> {
    let max = default_max_level(pair);
    let top = levels.iter().copied().max().unwrap_or(0);
    if top > max {
        if !full {
            return Err(Error::param(format!(
                "level {top} exceeds the default maximum {max} for {pair}; pass --full to run it"
            )));
        }
        log::warn!("level {top} for {pair} may take hours (N = T/k grows like 2^((m+1) level))");
    }
    Ok(())
}

fn build_spec(kind: ExperimentKind, s: &Settings) -> Result<ExperimentSpec> {
    let pair = s.pair.unwrap_or(ElementPair::P2P1);
    let mut spec = match kind {
        ExperimentKind::Spatial => {
            let levels = s.levels.clone().unwrap_or_else(|| (1..=default_max_level(pair)).collect());
            ExperimentSpec::spatial(pair, levels)
        }
        ExperimentKind::Temporal | ExperimentKind::Penalty | ExperimentKind::Cavity => {
            let level = match s.levels.as_deref() {
                None => 5,
                Some([l]) => *l,
                Some(other) => return Err(Error::param(format!("{} runs use a single level, got {other:?}", kind.name()))),
            };
            match kind {
                ExperimentKind::Temporal => ExperimentSpec::temporal(pair, level),
                ExperimentKind::Penalty => ExperimentSpec::penalty(pair, level),
                _ => ExperimentSpec::cavity(pair, level, 1e-2),
            }
        }
    };
    check_levels(pair, &spec.levels, s.full.unwrap_or(false))?;
    if let Some(c) = s.c {
        spec.coupling = c;
    }
    if let Some(nu) = s.nu {
        spec.nu = nu;
        if kind == ExperimentKind::Cavity && nu <= 1e-4 {
            spec.final_time = 150.0;
        }
    }
    if let Some(t) = s.final_time {
        spec.final_time = t;
    }
    match kind {
        ExperimentKind::Temporal => {
            if let Some(eps) = s.eps {
                spec.eps = eps;
            }
            let dt = s.dt.unwrap_or(spec.sweep[0]);
            spec.sweep = (0..5).map(|i| dt / f64::from(1u32 << i)).collect();
        }
        ExperimentKind::Penalty => {
            if let Some(dt) = s.dt {
                spec.dt = dt;
            }
            let eps = s.eps.unwrap_or(spec.sweep[0]);
            spec.sweep = (0..4).map(|i| eps / 10f64.powi(i)).collect();
        }
        _ => {
            if let Some(eps) = s.eps {
                spec.eps = eps;
            }
            if let Some(dt) = s.dt {
                spec.dt = dt;
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn print_report(report: &ExperimentReport) -> Result<()> {
    if let Some(c) = &report.cavity {
        println!(
            "Re = {}: stopped at t = {:.2} ({}), |dU/dt| = {:.3e}",
            c.reynolds,
            c.final_time,
            if c.steady { "steady" } else { "not steady" },
            c.rate
        );
        println!("RMS deviation from reference: u along x=0.5 {:.4e}, v along y=0.5 {:.4e}", c.rms_u, c.rms_v);
        return Ok(());
    }
    let rates = report.rates()?;
    println!(
        "{:>5} {:>11} {:>11} {:>11} {:>14} {:>7} {:>14} {:>7} {:>14} {:>7}",
        "level", "h", "k", "eps", "L2", "rate", "H1", "rate", "P", "rate"
    );
    for (row, rate) in report.rows.iter().zip(rates) {
        let r = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let e = &row.errors;
        println!(
            "{:>5} {:>11.4e} {:>11.4e} {:>11.4e} {:>14.8e} {:>7} {:>14.8e} {:>7} {:>14.8e} {:>7}",
            row.level,
            row.h,
            row.k,
            row.eps,
            e.velocity_l2,
            r(rate.map(|x| x.l2)),
            e.velocity_h1,
            r(rate.map(|x| x.h1)),
            e.pressure_l2,
            r(rate.map(|x| x.pressure)),
        );
    }
    if report.spec.kind == ExperimentKind::Temporal {
        if let Ok(orders) = report.time_error_orders() {
            let errors: Vec<String> = report.rows.iter().filter_map(|r| r.time_error).map(|e| format!("{e:.4e}")).collect();
            let orders: Vec<String> = orders.iter().map(|o| format!("{o:.4}")).collect();
            println!("L2 distance to a fine-step reference: {}", errors.join(" "));
            println!("orders: {}", orders.join(" "));
        }
    }
    if report.spec.kind == ExperimentKind::Penalty {
        let t = penfem::harness::penalty_trend(&report.rows)?;
        let slope = t.slope.map_or_else(|| "undefined".to_string(), |s| format!("{s:.4}"));
        println!("error floor {:.4e}; slope over eps-dominated runs {slope}", t.floor);
    }
    for (label, msg) in &report.failures {
        eprintln!("failed: {label}: {msg}");
    }
    Ok(())
}

fn run_experiment(kind: ExperimentKind, s: Settings) -> Result<bool> {
    let spec = build_spec(kind, &s)?;
    let report = match kind {
        ExperimentKind::Spatial => run_spatial_study(&spec)?,
        ExperimentKind::Temporal => run_temporal_study(&spec)?,
        ExperimentKind::Penalty => run_penalty_study(&spec)?,
        ExperimentKind::Cavity => {
            let dir = s.ghia.clone().unwrap_or_else(|| PathBuf::from("data/ghia"));
            let re = (1.0 / spec.nu).round() as u32;
            let reference = GhiaProfile::load(&dir, re)?;
            run_cavity(&spec, &reference)?
        }
    };
    print_report(&report)?;
    let out = s.out.unwrap_or_else(|| Path::new("out").join(kind.name()));
    for f in emit_outputs(&report, &out)? {
        log::info!("wrote {}", f.display());
    }
    Ok(!report.has_solver_failure())
}

/// Fast checks: exact skew symmetry, block/eliminated agreement and a
/// small convergence study.
fn selftest() -> Result<bool> {
    let mut ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    let disc = Discretization::new(2, ElementPair::P2P1, BoundaryKind::NoSlip)?;
    let w: Vec<f64> = (0..disc.velocity_dim()).map(|i| (i as f64 * 0.7).sin()).collect();
    let n = penfem::assembly::assemble_convection(&disc.velocity, &w)?;
    let asym = n.add_scaled(1.0, &n.transpose(), 1.0)?.max_abs();
    check("convection skew symmetry", asym < 1e-13, format!("max |N + N^T| = {asym:.2e}"));

    let disc = Arc::new(Discretization::new(2, ElementPair::CrP0, BoundaryKind::NoSlip)?);
    let params = Parameters::new(1.0, 1e-3, 0.05)?;
    let forcing = Forcing::field(|x, y, _| [y - 0.5, x * x]);
    let mut finals = Vec::new();
    for form in [SystemForm::Coupled, SystemForm::Eliminated] {
        let mut st = Stepper::new(disc.clone(), params, Convection::Skew, form, PicardConfig::default(), forcing.clone())?;
        finals.push(st.march(State::zero(&disc), 3, |_, _| Ok(()))?);
    }
    let diff = finals[0].u.iter().zip(&finals[1].u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    check("eliminated vs coupled CR-P0", diff < 1e-9, format!("max |dU| = {diff:.2e}"));

    let report = run_spatial_study(&ExperimentSpec::spatial(ElementPair::P2P1, vec![1, 2, 3]))?;
    let rate = report.finest_rates()?.l2;
    check("P2-P1 velocity L2 rate (levels 1-3)", rate > 2.5, format!("{rate:.3}"));
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = (|| -> Result<bool> {
        let file = match &cli.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        let (kind, flags) = match &cli.command {
            Command::Spatial(f) => (ExperimentKind::Spatial, f),
            Command::Temporal(f) => (ExperimentKind::Temporal, f),
            Command::Penalty(f) => (ExperimentKind::Penalty, f),
            Command::Cavity(f) => (ExperimentKind::Cavity, f),
            Command::Selftest => return selftest(),
        };
        run_experiment(kind, file.merged(flags.settings()?))
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
