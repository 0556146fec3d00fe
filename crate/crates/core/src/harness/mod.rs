//! Experiment orchestration: convergence studies, the cavity benchmark and
//! report output.

mod ghia;
mod output;

use std::sync::Arc;

use rayon::prelude::*;

pub use ghia::{parse_profile, read_profile, Centerline, GhiaProfile};
pub use output::{emit_outputs, read_errors_csv, CsvRow, ERRORS_HEADER};

use crate::analysis::{convergence_rates, divergence_l2, error_norms, ErrorTriple, ManufacturedCase};
use crate::error::{Error, Result};
use crate::fespace::ElementPair;
use crate::mesh::MAX_LEVEL;
use crate::solver::{BoundaryKind, Convection, Discretization, Parameters, PicardConfig, SystemForm};
use crate::stepper::{project_initial, step_count, Forcing, State, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Spatial,
    Temporal,
    Penalty,
    Cavity,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spatial => "spatial",
            ExperimentKind::Temporal => "temporal",
            ExperimentKind::Penalty => "penalty",
            ExperimentKind::Cavity => "cavity",
        }
    }
}

/// Largest level run without an explicit opt-in.
pub fn default_max_level(pair: ElementPair) -> u32 {
    match pair {
        ElementPair::P2P1 => 5,
        ElementPair::P3P2 => 4,
        ElementPair::CrP0 => 6,
    }
}

/// Inputs of one experiment. Fields not used by a kind are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub pair: ElementPair,
    /// Mesh levels, ascending; temporal, penalty and cavity runs use the
    /// first entry.
    pub levels: Vec<u32>,
    /// `c` in the coupling `k = eps = c h^(m+1)` of the spatial study.
    pub coupling: f64,
    pub nu: f64,
    pub final_time: f64,
    /// Fixed penalty parameter (temporal, cavity).
    pub eps: f64,
    /// Fixed time step (penalty, cavity).
    pub dt: f64,
    /// Swept values: time steps (temporal) or penalty parameters (penalty).
    pub sweep: Vec<f64>,
    pub picard: PicardConfig,
    /// Cavity: stop once `|U^n - U^{n-1}|_M / k` drops below this.
    pub steady_threshold: f64,
}

impl ExperimentSpec {
    fn base(kind: ExperimentKind, pair: ElementPair, levels: Vec<u32>) -> Self {
        Self {
            kind,
            pair,
            levels,
            coupling: 1.0,
            nu: 1.0,
            final_time: 1.0,
            eps: 1e-8,
            dt: 1e-3,
            sweep: Vec::new(),
            picard: PicardConfig::reusing(),
            steady_threshold: 1e-6,
        }
    }

    /// Manufactured-solution study with `k = eps = c h^(m+1)`, `nu = 1`, `T = 1`.
    pub fn spatial(pair: ElementPair, levels: Vec<u32>) -> Self {
        Self::base(ExperimentKind::Spatial, pair, levels)
    }

    /// Time-step sweep `1/10 .. 1/160` at fixed level and `eps = 1e-8`.
    pub fn temporal(pair: ElementPair, level: u32) -> Self {
        Self {
            sweep: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            ..Self::base(ExperimentKind::Temporal, pair, vec![level])
        }
    }

    /// Penalty sweep `1e-2 .. 1e-5` at fixed level and `k = 1e-3`.
    pub fn penalty(pair: ElementPair, level: u32) -> Self {
        Self {
            sweep: vec![1e-2, 1e-3, 1e-4, 1e-5],
            ..Self::base(ExperimentKind::Penalty, pair, vec![level])
        }
    }

    /// Lid-driven cavity with `k = 0.01`, `T = 75`.
    pub fn cavity(pair: ElementPair, level: u32, nu: f64) -> Self {
        Self {
            nu,
            dt: 0.01,
            final_time: 75.0,
            ..Self::base(ExperimentKind::Cavity, pair, vec![level])
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::param("at least one mesh level is required"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(format!("levels must ascend strictly, got {:?}", self.levels)));
        }
        if let Some(&l) = self.levels.iter().find(|&&l| l == 0 || l > MAX_LEVEL) {
            return Err(Error::param(format!("mesh level {l} outside 1..={MAX_LEVEL}")));
        }
        for (name, v) in [
            ("coupling constant c", self.coupling),
            ("viscosity", self.nu),
            ("final time", self.final_time),
            ("penalty parameter", self.eps),
            ("time step", self.dt),
            ("steady-state threshold", self.steady_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if matches!(self.kind, ExperimentKind::Temporal | ExperimentKind::Penalty) {
            if self.sweep.is_empty() {
                return Err(Error::param("the sweep needs at least one value"));
            }
            if let Some(v) = self.sweep.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::param(format!("sweep values must be positive, got {v}")));
            }
        }
        self.picard.validate()
    }
}

/// One completed run of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub level: u32,
    pub h: f64,
    pub k: f64,
    pub eps: f64,
    pub errors: ErrorTriple,
    /// `|div U_h|` in L2 at the final time.
    pub divergence: f64,
    pub steps: usize,
    pub factorizations: usize,
    /// Temporal studies: velocity L2 distance at the final time to a run on
    /// the same mesh with a much smaller step, i.e. the time
    /// discretization error alone.
    pub time_error: Option<f64>,
}

/// Observed rates between consecutive rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub l2: f64,
    pub h1: f64,
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineSample {
    pub coord: f64,
    pub reference: f64,
    pub computed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityReport {
    pub reynolds: f64,
    pub steady: bool,
    pub final_time: f64,
    /// `|U^n - U^{n-1}|_M / k` at the last step.
    pub rate: f64,
    pub u_samples: Vec<CenterlineSample>,
    pub v_samples: Vec<CenterlineSample>,
    pub rms_u: f64,
    pub rms_v: f64,
    /// Dense `(coord, u, v)` samples of both centerlines for plotting.
    pub dense: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<StudyRow>,
    /// Runs that failed, with the error message; the study went on without them.
    pub failures: Vec<(String, String)>,
    pub cavity: Option<CavityReport>,
}

impl ExperimentReport {
    /// The swept quantity the rates refer to.
    pub fn abscissa(&self, row: &StudyRow) -> f64 {
        match self.spec.kind {
            ExperimentKind::Temporal => row.k,
            ExperimentKind::Penalty => row.eps,
            _ => row.h,
        }
    }

    /// Rates between consecutive rows against [`Self::abscissa`]; the first
    /// row has none.
    pub fn rates(&self) -> Result<Vec<Option<Rates>>> {
        if self.rows.len() < 2 {
            return Ok(vec![None; self.rows.len()]);
        }
        let xs: Vec<f64> = self.rows.iter().map(|r| self.abscissa(r)).collect();
        let of = |f: fn(&ErrorTriple) -> f64| {
            let es: Vec<f64> = self.rows.iter().map(|r| f(&r.errors)).collect();
            convergence_rates(&es, &xs)
        };
        let (l2, h1, p) = (of(|e| e.velocity_l2)?, of(|e| e.velocity_h1)?, of(|e| e.pressure_l2)?);
        Ok(std::iter::once(None)
            .chain((0..l2.len()).map(|i| {
                Some(Rates {
                    l2: l2[i],
                    h1: h1[i],
                    pressure: p[i],
                })
            }))
            .collect())
    }

    /// Rates between the two last rows.
    pub fn finest_rates(&self) -> Result<Rates> {
        self.rates()?
            .last()
            .copied()
            .flatten()
            .ok_or_else(|| Error::param("rates need at least two completed runs"))
    }

    /// Temporal studies: orders of [`StudyRow::time_error`] between
    /// consecutive rows.
    pub fn time_error_orders(&self) -> Result<Vec<f64>> {
        let errors: Option<Vec<f64>> = self.rows.iter().map(|r| r.time_error).collect();
        let errors = errors.ok_or_else(|| Error::param("rows carry no time error"))?;
        let ks: Vec<f64> = self.rows.iter().map(|r| r.k).collect();
        convergence_rates(&errors, &ks)
    }

    /// Whether any run failed with a solver error (as opposed to bad input).
    pub fn has_solver_failure(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Runs the manufactured problem on one level to `T` and measures errors;
/// also returns the final velocity.
fn manufactured_run(
    pair: ElementPair,
    level: u32,
    params: Parameters,
    final_time: f64,
    picard: PicardConfig,
) -> Result<(StudyRow, Arc<Discretization>, Vec<f64>)> {
    let case = ManufacturedCase::new(params.nu)?;
    let disc = Arc::new(Discretization::new(level, pair, BoundaryKind::NoSlip)?);
    let form = match pair {
        ElementPair::CrP0 => SystemForm::Eliminated,
        _ => SystemForm::Coupled,
    };
    let forcing = Forcing::Zero
        .with_term(f64::exp, move |x, y| case.forcing_parts(x, y).0)?
        .with_term(|t| (2.0 * t).exp(), move |x, y| case.forcing_parts(x, y).1)?;
    let mut stepper = Stepper::new(disc.clone(), params, Convection::Skew, form, picard, forcing)?;
    let initial = State {
        u: project_initial(&disc, |x, y| case.velocity(x, y, 0.0))?,
        ..State::zero(&disc)
    };
    let steps = step_count(final_time, params.dt);
    let end = stepper.march(initial, steps, |_, _| Ok(()))?;
    let errors = error_norms(&disc.velocity, &disc.pressure, &end.u, &end.p, &case, end.t)?;
    log::info!(
        "{pair} level {level}: k = {:.3e}, eps = {:.3e}, {steps} steps, L2 = {:.6e}",
        params.dt,
        params.eps,
        errors.velocity_l2
    );
    let row = StudyRow {
        level,
        h: disc.mesh().grid_spacing(),
        k: params.dt,
        eps: params.eps,
        errors,
        divergence: divergence_l2(&disc.velocity, &end.u)?,
        steps,
        factorizations: stepper.stats().factorizations,
        time_error: None,
    };
    Ok((row, disc, end.u))
}

fn study_row(r: Result<(StudyRow, Arc<Discretization>, Vec<f64>)>) -> Result<StudyRow> {
    r.map(|(row, _, _)| row)
}

/// Runs `jobs` concurrently, keeping rows in job order and collecting
/// failures.
fn run_jobs<J: Sync>(jobs: &[J], label: impl Fn(&J) -> String + Sync, run: impl Fn(&J) -> Result<StudyRow> + Sync) -> (Vec<StudyRow>, Vec<(String, String)>) {
    let results: Vec<(String, Result<StudyRow>)> = jobs.par_iter().map(|j| (label(j), run(j))).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (label, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("{label} failed: {e}");
                failures.push((label, e.to_string()));
            }
        }
    }
    (rows, failures)
}

/// Errors on each level with `k = eps = c h^(m+1)`.
pub fn run_spatial_study(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let m = spec.pair.degree() as i32;
    let (rows, failures) = run_jobs(
        &spec.levels,
        |l| format!("level {l}"),
        |&level| {
            let h = 0.5f64.powi(level as i32);
            let k = spec.coupling * h.powi(m + 1);
            let params = Parameters::new(spec.nu, k, k)?;
            study_row(manufactured_run(spec.pair, level, params, spec.final_time, spec.picard))
        },
    );
    Ok(ExperimentReport {
        spec: spec.clone(),
        rows,
        failures,
        cavity: None,
    })
}

/// Smallest swept step divided by this gives the reference step of a
/// temporal study.
pub const TEMPORAL_REFERENCE_REFINEMENT: f64 = 16.0;

/// Errors at one level for each time step of the sweep. Each row also
/// records its distance to a reference run with the smallest step divided by
/// [`TEMPORAL_REFERENCE_REFINEMENT`].
pub fn run_temporal_study(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let level = spec.levels[0];
    let run = |k: f64| manufactured_run(spec.pair, level, Parameters::new(spec.nu, spec.eps, k)?, spec.final_time, spec.picard);
    let k_ref = spec.sweep.iter().copied().fold(f64::INFINITY, f64::min) / TEMPORAL_REFERENCE_REFINEMENT;
    let (_, disc, reference) = run(k_ref)?;
    let (rows, failures) = run_jobs(
        &spec.sweep,
        |k| format!("k = {k}"),
        |&k| {
            let (row, _, u) = run(k)?;
            let diff: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
            Ok(StudyRow {
                time_error: Some(disc.mass_norm(&diff)),
                ..row
            })
        },
    );
    Ok(ExperimentReport {
        spec: spec.clone(),
        rows,
        failures,
        cavity: None,
    })
}

/// Errors at one level and time step for each penalty parameter of the sweep.
pub fn run_penalty_study(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let level = spec.levels[0];
    let (rows, failures) = run_jobs(
        &spec.sweep,
        |e| format!("eps = {e}"),
        |&eps| study_row(manufactured_run(spec.pair, level, Parameters::new(spec.nu, eps, spec.dt)?, spec.final_time, spec.picard)),
    );
    Ok(ExperimentReport {
        spec: spec.clone(),
        rows,
        failures,
        cavity: None,
    })
}

/// Where the velocity error of a penalty sweep stops following `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTrend {
    /// Indices of the rows (ascending `eps` order is not assumed) whose error
    /// is dominated by the penalty term.
    pub pre_floor: Vec<usize>,
    /// Error level reached once `eps` no longer matters.
    pub floor: f64,
    /// Least-squares log-log slope over the pre-floor rows.
    pub slope: Option<f64>,
}

/// Splits a penalty sweep into the `eps`-dominated part and the floor.
///
/// The floor is the error at the smallest `eps`. A row counts as pre-floor
/// when its error exceeds twice the floor, i.e. the penalty contribution is
/// at least as large as everything else.
pub fn penalty_trend(rows: &[StudyRow]) -> Result<PenaltyTrend> {
    let smallest = rows
        .iter()
        .min_by(|a, b| a.eps.total_cmp(&b.eps))
        .ok_or_else(|| Error::param("empty penalty sweep"))?;
    let floor = smallest.errors.velocity_l2;
    let pre_floor: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].errors.velocity_l2 > 2.0 * floor)
        .collect();
    let slope = if pre_floor.len() >= 2 {
        let xs: Vec<f64> = pre_floor.iter().map(|&i| rows[i].eps).collect();
        let ys: Vec<f64> = pre_floor.iter().map(|&i| rows[i].errors.velocity_l2).collect();
        Some(crate::analysis::log_log_slope(&xs, &ys)?)
    } else {
        None
    };
    Ok(PenaltyTrend { pre_floor, floor, slope })
}

/// Root-mean-square of `computed - reference`.
pub fn rms_deviation(samples: &[CenterlineSample]) -> f64 {
    let n = samples.len().max(1) as f64;
    (samples.iter().map(|s| (s.computed - s.reference).powi(2)).sum::<f64>() / n).sqrt()
}

/// Samples one velocity component of a discrete field along a centerline.
pub fn sample_centerline(disc: &Discretization, u: &[f64], line: Centerline, coords: &[f64]) -> Result<Vec<f64>> {
    coords
        .iter()
        .map(|&s| Ok(disc.velocity.eval_at(u, line.point(s))?[line.component()]))
        .collect()
}

/// Lid-driven cavity run compared with reference centerline profiles.
pub fn run_cavity(spec: &ExperimentSpec, reference: &GhiaProfile) -> Result<ExperimentReport> {
    spec.validate()?;
    let level = spec.levels[0];
    let disc = Arc::new(Discretization::new(level, spec.pair, BoundaryKind::LidDriven)?);
    let params = Parameters::new(spec.nu, spec.eps, spec.dt)?;
    let form = match spec.pair {
        ElementPair::CrP0 => SystemForm::Eliminated,
        _ => SystemForm::Coupled,
    };
    let mut stepper = Stepper::new(disc.clone(), params, Convection::Skew, form, spec.picard, Forcing::Zero)?;
    let max_steps = step_count(spec.final_time, spec.dt);
    let outcome = stepper.run_until_steady(State::zero(&disc), max_steps, spec.steady_threshold)?;
    log::info!(
        "cavity nu = {}: t = {:.2}, steady = {}, rate = {:.3e}",
        spec.nu,
        outcome.state.t,
        outcome.steady,
        outcome.rate
    );
    let u = &outcome.state.u;
    let compare = |line: Centerline| -> Result<Vec<CenterlineSample>> {
        let data = reference.samples(line);
        let coords: Vec<f64> = data.iter().map(|s| s.0).collect();
        let computed = sample_centerline(&disc, u, line, &coords)?;
        Ok(data
            .iter()
            .zip(computed)
            .map(|(&(coord, reference), computed)| CenterlineSample {
                coord,
                reference,
                computed,
            })
            .collect())
    };
    let u_samples = compare(Centerline::HorizontalVelocity)?;
    let v_samples = compare(Centerline::VerticalVelocity)?;
    let coords: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let du = sample_centerline(&disc, u, Centerline::HorizontalVelocity, &coords)?;
    let dv = sample_centerline(&disc, u, Centerline::VerticalVelocity, &coords)?;
    let cavity = CavityReport {
        reynolds: 1.0 / spec.nu,
        steady: outcome.steady,
        final_time: outcome.state.t,
        rate: outcome.rate,
        rms_u: rms_deviation(&u_samples),
        rms_v: rms_deviation(&v_samples),
        u_samples,
        v_samples,
        dense: coords.iter().zip(du.iter().zip(&dv)).map(|(&c, (&a, &b))| (c, a, b)).collect(),
    };
    Ok(ExperimentReport {
        spec: spec.clone(),
        rows: Vec::new(),
        failures: Vec::new(),
        cavity: Some(cavity),
    })
}
