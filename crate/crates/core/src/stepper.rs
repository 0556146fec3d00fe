//! Backward Euler time marching.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::assembly::assemble_load;
use crate::error::{Error, Result};
use crate::fespace::{ElementPair, FeSpace};
use crate::solver::{
    linear_solve, BoundaryKind, Convection, Discretization, Parameters, PenalizedSolver, PicardConfig, SolverStats,
    SystemForm,
};

/// Discrete solution at `t = n k`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
    pub n: usize,
}

impl State {
    pub fn zero(disc: &Discretization) -> Self {
        Self {
            u: vec![0.0; disc.velocity_dim()],
            p: vec![0.0; disc.pressure_dim()],
            t: 0.0,
            n: 0,
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pair: ElementPair,
    pub level: u32,
    pub boundary: BoundaryKind,
    pub params: Parameters,
    pub final_time: f64,
    pub picard: PicardConfig,
    pub convection: Convection,
    pub form: SystemForm,
    /// Store every `capture_every`-th state (the final state is always kept).
    pub capture_every: usize,
}

impl RunConfig {
    pub fn new(pair: ElementPair, level: u32, params: Parameters, final_time: f64) -> Result<Self> {
        let cfg = Self {
            pair,
            level,
            boundary: BoundaryKind::NoSlip,
            params,
            final_time,
            picard: PicardConfig::default(),
            convection: Convection::Skew,
            form: SystemForm::Coupled,
            capture_every: usize::MAX,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.params.dt;
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::param(format!("time step must lie in (0, 1), got {k}")));
        }
        if !(self.final_time.is_finite() && self.final_time >= k) {
            return Err(Error::param(format!(
                "final time {} must be at least one time step {k}",
                self.final_time
            )));
        }
        if self.capture_every == 0 {
            return Err(Error::param("capture cadence must be at least 1"));
        }
        self.picard.validate()
    }

    /// `N = T / k`, rounded with a warning when `T` is not a whole number of
    /// steps.
    pub fn num_steps(&self) -> usize {
        step_count(self.final_time, self.params.dt)
    }
}

pub fn step_count(final_time: f64, dt: f64) -> usize {
    let ratio = final_time / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio {
        log::warn!("T/k = {ratio} is not an integer; marching {n} steps to t = {}", n * dt);
    }
    n.max(1.0) as usize
}

/// L2 projection of `u0` onto the velocity space, without boundary
/// conditions.
pub fn project_initial(disc: &Discretization, u0: impl Fn(f64, f64) -> [f64; 2] + Sync) -> Result<Vec<f64>> {
    let b = assemble_load(&disc.velocity, |x, y, _| u0(x, y), 0.0)?;
    linear_solve(&disc.ops.mass, &b)
}

type ForcingFn = dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync;
type TimeFactor = dyn Fn(f64) -> f64 + Send + Sync;
type SpatialField = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;

/// Body force `f(x, y, t)`.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    /// Assembled afresh every step.
    Field(Arc<ForcingFn>),
    /// `sum_j g_j(t) f_j(x, y)`; each spatial load is assembled once.
    Separable(Vec<(Arc<TimeFactor>, Arc<SpatialField>)>),
}

impl Forcing {
    pub fn field(f: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self::Field(Arc::new(f))
    }

    /// Adds the term `g(t) f(x, y)`, turning `Zero` into a separable forcing.
    pub fn with_term(
        self,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Result<Self> {
        let term: (Arc<TimeFactor>, Arc<SpatialField>) = (Arc::new(g), Arc::new(f));
        match self {
            Forcing::Zero => Ok(Forcing::Separable(vec![term])),
            Forcing::Separable(mut terms) => {
                terms.push(term);
                Ok(Forcing::Separable(terms))
            }
            Forcing::Field(_) => Err(Error::param("cannot add a separable term to a general forcing field")),
        }
    }
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Zero => f.write_str("Forcing::Zero"),
            Forcing::Field(_) => f.write_str("Forcing::Field(..)"),
            Forcing::Separable(terms) => write!(f, "Forcing::Separable({} terms)", terms.len()),
        }
    }
}

/// Forcing with the spatial loads of separable terms precomputed.
struct LoadSource {
    forcing: Forcing,
    spatial: Vec<Vec<f64>>,
}

impl LoadSource {
    fn new(forcing: Forcing, space: &FeSpace) -> Result<Self> {
        let spatial = match &forcing {
            Forcing::Separable(terms) => terms
                .iter()
                .map(|(_, f)| assemble_load(space, |x, y, _| f(x, y), 0.0))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        Ok(Self { forcing, spatial })
    }

    fn load(&self, space: &FeSpace, t: f64) -> Result<Vec<f64>> {
        match &self.forcing {
            Forcing::Zero => Ok(vec![0.0; space.dim()]),
            Forcing::Field(f) => assemble_load(space, |x, y, t| f(x, y, t), t),
            Forcing::Separable(terms) => {
                let mut b = vec![0.0; space.dim()];
                for ((g, _), v) in terms.iter().zip(&self.spatial) {
                    let s = g(t);
                    b.iter_mut().zip(v).for_each(|(b, v)| *b += s * v);
                }
                Ok(b)
            }
        }
    }
}

/// `2 a - b`, the linear extrapolation from consecutive states `b`, `a`.
fn extrapolate(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| 2.0 * a - b).collect()
}

/// Captured states of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<State>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.frames.last().expect("a trajectory holds at least the final state")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyOutcome {
    pub state: State,
    /// Whether the threshold was met before the step limit.
    pub steady: bool,
    /// `|U^n - U^{n-1}|_M / k` of the last step.
    pub rate: f64,
}

pub struct Stepper {
    disc: Arc<Discretization>,
    solver: PenalizedSolver,
    loads: LoadSource,
    /// Input state of the last step, used to extrapolate the initial
    /// iterate of the next one.
    previous: Option<State>,
}

impl Stepper {
    pub fn new(
        disc: Arc<Discretization>,
        params: Parameters,
        convection: Convection,
        form: SystemForm,
        picard: PicardConfig,
        forcing: Forcing,
    ) -> Result<Self> {
        let solver = PenalizedSolver::new(disc.clone(), params, convection, form, picard)?;
        let loads = LoadSource::new(forcing, &disc.velocity)?;
        Ok(Self {
            disc,
            solver,
            loads,
            previous: None,
        })
    }

    pub fn from_config(cfg: &RunConfig, forcing: Forcing) -> Result<Self> {
        cfg.validate()?;
        let disc = Arc::new(Discretization::new(cfg.level, cfg.pair, cfg.boundary)?);
        Self::new(disc, cfg.params, cfg.convection, cfg.form, cfg.picard, forcing)
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn params(&self) -> Parameters {
        self.solver.params()
    }

    pub fn stats(&self) -> SolverStats {
        self.solver.stats()
    }

    /// State at `t_n` from the state at `t_{n-1}`. When the previous call
    /// advanced from `t_{n-2}`, the nonlinear iteration starts from the
    /// linear extrapolation of the two states.
    pub fn advance(&mut self, state: &State) -> Result<State> {
        let n = state.n + 1;
        let t = n as f64 * self.params().dt;
        let mut step = || -> Result<State> {
            let load = self.loads.load(&self.disc.velocity, t)?;
            let sol = match &self.previous {
                Some(prev) if prev.n + 1 == state.n && prev.p.len() == state.p.len() => {
                    let (u0, p0) = (extrapolate(&state.u, &prev.u), extrapolate(&state.p, &prev.p));
                    self.solver.nonlinear_solve_from(&state.u, &u0, &p0, &load)?
                }
                _ => self.solver.nonlinear_solve(&state.u, &state.p, &load)?,
            };
            log::trace!("step {n}: {} Picard iterations", sol.iterations);
            Ok(State { u: sol.u, p: sol.p, t, n })
        };
        let next = step().map_err(|e| Error::Step {
            step: n,
            source: Box::new(e),
        })?;
        self.previous = Some(state.clone());
        Ok(next)
    }

    /// Advances `steps` times, calling `observe(previous, current)` after
    /// each step.
    pub fn march(
        &mut self,
        initial: State,
        steps: usize,
        mut observe: impl FnMut(&State, &State) -> Result<()>,
    ) -> Result<State> {
        let mut state = initial;
        for _ in 0..steps {
            let next = self.advance(&state)?;
            observe(&state, &next)?;
            state = next;
        }
        Ok(state)
    }

    /// Advances `steps` times, keeping every `capture_every`-th state and the
    /// final one.
    pub fn run(&mut self, initial: State, steps: usize, capture_every: usize) -> Result<Trajectory> {
        if capture_every == 0 {
            return Err(Error::param("capture cadence must be at least 1"));
        }
        let mut frames = Vec::new();
        let last = self.march(initial, steps, |_, s| {
            if s.n % capture_every == 0 {
                frames.push(s.clone());
            }
            Ok(())
        })?;
        if frames.last().map(|f| f.n) != Some(last.n) {
            frames.push(last);
        }
        Ok(Trajectory { frames })
    }

    /// Marches until `|U^n - U^{n-1}|_M / k < threshold` or `max_steps`.
    pub fn run_until_steady(&mut self, initial: State, max_steps: usize, threshold: f64) -> Result<SteadyOutcome> {
        let dt = self.params().dt;
        let mut state = initial;
        let mut rate = f64::INFINITY;
        for _ in 0..max_steps {
            let next = self.advance(&state)?;
            let diff: Vec<f64> = next.u.iter().zip(&state.u).map(|(a, b)| a - b).collect();
            rate = self.disc.mass_norm(&diff) / dt;
            state = next;
            if state.n % 500 == 0 {
                log::info!("t = {:.2}: |dU/dt| = {rate:.3e}", state.t);
            }
            if rate < threshold {
                return Ok(SteadyOutcome {
                    state,
                    steady: true,
                    rate,
                });
            }
        }
        Ok(SteadyOutcome {
            state,
            steady: false,
            rate,
        })
    }

    pub fn checkpoint(&self, state: &State) -> Checkpoint {
        Checkpoint {
            state: state.clone(),
            previous: self.previous.as_ref().filter(|p| p.n + 1 == state.n).cloned(),
            anchor: self.solver.anchor().map(<[f64]>::to_vec),
        }
    }

    /// Restores solver internals so that continuing from `checkpoint`
    /// reproduces an uninterrupted run; returns the saved state.
    pub fn restore(&mut self, checkpoint: &Checkpoint) -> Result<State> {
        let s = &checkpoint.state;
        for (len, expected, context) in [
            (s.u.len(), self.disc.velocity_dim(), "checkpoint velocity"),
            (s.p.len(), self.disc.pressure_dim(), "checkpoint pressure"),
        ] {
            if len != expected {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual: len,
                });
            }
        }
        if let Some(prev) = &checkpoint.previous {
            if prev.u.len() != s.u.len() || prev.p.len() != s.p.len() {
                return Err(Error::Dimension {
                    context: "checkpoint previous state",
                    expected: s.u.len() + s.p.len(),
                    actual: prev.u.len() + prev.p.len(),
                });
            }
        }
        if let Some(w) = &checkpoint.anchor {
            self.solver.set_anchor(w)?;
        }
        self.previous = checkpoint.previous.clone();
        Ok(s.clone())
    }
}

const CHECKPOINT_MAGIC: &str = "penfem-checkpoint";
const CHECKPOINT_VERSION: u32 = 2;

/// Resumable snapshot: the state, the state one step earlier (which seeds
/// the extrapolated iterate) and the velocity at which the cached
/// factorization was computed. The last two are optional.
///
/// Text layout, one token group per line:
///
/// ```text
/// penfem-checkpoint 2
/// step <n>
/// time <t>
/// previous_time <t>  (nan when absent)
/// velocity <len>
/// <value>            (len lines)
/// pressure <len>
/// previous_velocity <len>   (0 when absent)
/// previous_pressure <len>
/// anchor <len>       (0 when absent)
/// ```
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: State,
    pub previous: Option<State>,
    pub anchor: Option<Vec<f64>>,
}

const CHECKPOINT_VECTORS: [&str; 5] = ["velocity", "pressure", "previous_velocity", "previous_pressure", "anchor"];

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        writeln!(out, "step {}", self.state.n)?;
        writeln!(out, "time {:e}", self.state.t)?;
        writeln!(out, "previous_time {:e}", self.previous.as_ref().map_or(f64::NAN, |p| p.t))?;
        let empty = Vec::new();
        let vectors = [
            &self.state.u,
            &self.state.p,
            self.previous.as_ref().map_or(&empty, |p| &p.u),
            self.previous.as_ref().map_or(&empty, |p| &p.p),
            self.anchor.as_ref().unwrap_or(&empty),
        ];
        for (name, v) in CHECKPOINT_VECTORS.iter().zip(vectors) {
            writeln!(out, "{name} {}", v.len())?;
            for x in v {
                writeln!(out, "{x:e}")?;
            }
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let mut r = LineReader {
            lines: input.lines(),
            line: 0,
            path,
        };
        let header = r.next("header")?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| r.error(format!("not a checkpoint header: {header:?}")))?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error(format!("unsupported checkpoint version {version}")));
        }
        let n: usize = r.keyed("step")?;
        let t = r.keyed("time")?;
        let previous_time: f64 = r.keyed("previous_time")?;
        let mut vectors = Vec::with_capacity(CHECKPOINT_VECTORS.len());
        for key in CHECKPOINT_VECTORS {
            let len: usize = r.keyed(key)?;
            let v = (0..len)
                .map(|_| {
                    let x = r.next(key)?;
                    x.trim().parse::<f64>().map_err(|e| r.error(format!("{key} entry: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            vectors.push(v);
        }
        let mut vectors = vectors.into_iter();
        let mut take = || vectors.next().unwrap_or_default();
        let (u, p, prev_u, prev_p, anchor) = (take(), take(), take(), take(), take());
        let previous = match (prev_u.is_empty(), n.checked_sub(1)) {
            (false, Some(prev_n)) => Some(State {
                u: prev_u,
                p: prev_p,
                t: previous_time,
                n: prev_n,
            }),
            (false, None) => return Err(r.error("a checkpoint at step 0 cannot have a previous state".into())),
            (true, _) => None,
        };
        Ok(Self {
            state: State { u, p, t, n },
            previous,
            anchor: Some(anchor).filter(|a| !a.is_empty()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file), path)
    }
}

struct LineReader<'a, L> {
    lines: L,
    line: usize,
    path: &'a Path,
}

impl<L: Iterator<Item = std::io::Result<String>>> LineReader<'_, L> {
    fn error(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message,
        }
    }

    fn next(&mut self, what: &str) -> Result<String> {
        self.line += 1;
        match self.lines.next() {
            Some(line) => Ok(line?),
            None => Err(self.error(format!("unexpected end of file, expected {what}"))),
        }
    }

    /// Parses a `key value` line.
    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let line = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => v.trim().parse().map_err(|e| self.error(format!("{key}: {e}"))),
            _ => Err(self.error(format!("expected `{key} <value>`, found {line:?}"))),
        }
    }
}
