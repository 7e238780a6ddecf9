//! Staged block-coordinate descent with feasible iterates.
//!
//! Every outer iteration resets the step to `t_base` and runs exactly one of
//! three phases, in order of precedence:
//!
//! 1. `y`-phase when `m_y^{δ₁} > eps_y`: trial `Π_{C_y}(y + t·d_y; x)`;
//! 2. `x`-phase when `m_x > eps_x`: trial `Π_{C_x}(Retr(x, t·d_x); y)`;
//! 3. joint phase when `m_KKT^{δ₂} > eps_kkt`: trial `Π_C(Retr(z, t·d))`;
//!
//! otherwise the iterate is returned as a `(δ, ε)`-approximate KKT point.
//! Each phase backtracks `t ← γ·t` until the projected trial is feasible and
//! satisfies `f(trial) ≤ f(z) − α·t·m`.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::directions::{measure, DirectionResult, LicqPolicy, MeasureKind};
use crate::error::{Error, Result};
use crate::manifold::{retract_ambient, Retraction};
use crate::problem::{residuals, BlockPoint, BlockProblem};
use crate::projections::{
    alternating, penalty_project, project_y, HalfSquared, ProjectionConfig, ProjectionMethod, ProjectionReport, Scope,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eps_y: f64,
    pub eps_x: f64,
    pub eps_kkt: f64,
    /// Almost-active width for the `y` measure.
    pub delta1: f64,
    /// Almost-active width for the joint measure (also used by the `x` measure).
    pub delta2: f64,
    /// Armijo constant.
    pub alpha: f64,
    /// Backtracking factor.
    pub gamma: f64,
    pub t_base: f64,
    pub max_outer: usize,
    pub min_step: f64,
    pub tol_feas: f64,
    pub max_restore: usize,
    pub retraction: Retraction,
    /// Try penalty restoration when alternating projection fails on a trial.
    pub penalty_fallback: bool,
    pub seed: u64,
    /// Write one JSON object per accepted iteration to this file.
    pub trace_path: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_y: 1e-6,
            eps_x: 1e-6,
            eps_kkt: 1e-6,
            delta1: 1e-6,
            delta2: 1e-6,
            alpha: 1e-4,
            gamma: 0.5,
            t_base: 1.0,
            max_outer: 5000,
            min_step: 1e-14,
            tol_feas: crate::projections::TOL_FEAS,
            max_restore: crate::projections::MAX_RESTORE,
            retraction: Retraction::Qr,
            penalty_fallback: true,
            seed: 0,
            trace_path: None,
        }
    }
}

impl SolverConfig {
    /// Sets all three tolerances and both almost-active widths to `eps`.
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_y = eps;
        self.eps_x = eps;
        self.eps_kkt = eps;
        self.delta1 = eps;
        self.delta2 = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_y", self.eps_y),
            ("eps_x", self.eps_x),
            ("eps_kkt", self.eps_kkt),
            ("t_base", self.t_base),
            ("min_step", self.min_step),
            ("tol_feas", self.tol_feas),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        Ok(())
    }

    fn projection(&self) -> ProjectionConfig {
        ProjectionConfig { tol_feas: self.tol_feas, max_restore: self.max_restore }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "Y")]
    Y,
    #[serde(rename = "X")]
    X,
    #[serde(rename = "JOINT")]
    Joint,
}

impl Phase {
    fn kind(self) -> MeasureKind {
        match self {
            Phase::Y => MeasureKind::Y,
            Phase::X => MeasureKind::X,
            Phase::Joint => MeasureKind::Joint,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// All three measures below tolerance.
    Kkt,
    /// `max_outer` reached.
    Cap,
    /// A line search could not produce an acceptable feasible trial.
    Stalled,
}

/// One accepted iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub phase: Phase,
    /// Measure of the phase that ran.
    pub measure: f64,
    pub t: f64,
    pub backtracks: usize,
    pub f_prev: f64,
    pub f: f64,
    pub residual_eq: f64,
    pub residual_ineq: f64,
    /// Measures evaluated at the iterate before the step (phase precedence audit).
    pub m_y: f64,
    pub m_x: Option<f64>,
    pub m_kkt: Option<f64>,
    pub projection: ProjectionMethod,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverTrace {
    pub f0: f64,
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
}

impl SolverTrace {
    pub fn write_jsonl(&self, path: &std::path::Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for rec in &self.records {
            serde_json::to_writer(&mut file, rec)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub point: BlockPoint,
    pub f_final: f64,
    pub m_y: f64,
    pub m_x: f64,
    pub m_kkt: f64,
    pub status: SolveStatus,
    pub trace: SolverTrace,
    /// Why the run stalled, when it did.
    pub diagnostics: Option<String>,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }
}

/// Outcome of a successful line search.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub t: f64,
    pub backtracks: usize,
    pub report: ProjectionReport,
    pub f: f64,
}

/// Backtracking search along `dir` for the given phase.
pub fn armijo_search<P: BlockProblem + ?Sized>(
    problem: &P,
    phase: Phase,
    z: &BlockPoint,
    f_z: f64,
    dir: &DirectionResult,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let pcfg = cfg.projection();
    let mut t = cfg.t_base;
    let mut backtracks = 0;
    let mut last_failure = String::from("no trial evaluated");
    while t >= cfg.min_step {
        match trial(problem, phase, z, dir, t, &pcfg, cfg) {
            Ok(rep) if !rep.rejected && rep.feasible(cfg.tol_feas) => {
                let f = problem.objective(&rep.point);
                if f <= f_z - cfg.alpha * t * dir.measure {
                    return Ok(StepOutcome { t, backtracks, report: rep, f });
                }
                last_failure = format!("insufficient decrease at t = {t:e}");
            }
            Ok(rep) => {
                last_failure = if rep.rejected {
                    format!("projection rejected at t = {t:e}")
                } else {
                    format!("projection infeasible at t = {t:e}")
                };
            }
            Err(e) => last_failure = format!("projection failed at t = {t:e}: {e}"),
        }
        t *= cfg.gamma;
        backtracks += 1;
    }
    Err(Error::Numeric(format!("{phase:?}-phase line search fell below min_step ({last_failure})")))
}

fn trial<P: BlockProblem + ?Sized>(
    problem: &P,
    phase: Phase,
    z: &BlockPoint,
    dir: &DirectionResult,
    t: f64,
    pcfg: &ProjectionConfig,
    cfg: &SolverConfig,
) -> Result<ProjectionReport> {
    match phase {
        Phase::Y => {
            let query = BlockPoint::new(z.x.clone(), &z.y + &dir.direction.y * t);
            project_y(problem, &query, Some(&z.y), pcfg)
        }
        Phase::X | Phase::Joint => {
            let x = retract_ambient(&z.x, &(&dir.direction.x * t), cfg.retraction)?;
            let y = if phase == Phase::Joint { &z.y + &dir.direction.y * t } else { z.y.clone() };
            let query = BlockPoint::new(x, y);
            let scope = if phase == Phase::Joint { Scope::Joint } else { Scope::X };
            match alternating(problem, &query, scope, pcfg) {
                Ok(rep) => Ok(rep),
                Err(err) if cfg.penalty_fallback => {
                    penalty_project(problem, &query, &HalfSquared, scope, pcfg, 20 * pcfg.max_restore)
                        .map_err(|_| err)
                }
                Err(err) => Err(err),
            }
        }
    }
}

/// Runs the staged method from the feasible start `z0`.
/// Phase to run, its direction, and the measures evaluated so far.
type PhaseChoice = (Phase, DirectionResult, f64, Option<f64>, Option<f64>);

pub fn solve<P: BlockProblem + ?Sized>(problem: &P, z0: &BlockPoint, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let (residual_eq, residual_ineq) = residuals(problem, z0);
    if residual_eq > cfg.tol_feas || residual_ineq > cfg.tol_feas {
        return Err(Error::InfeasibleStart { residual_eq, residual_ineq });
    }
    let mut z = z0.clone();
    let mut f = problem.objective(&z);
    let mut trace = SolverTrace { f0: f, records: Vec::new(), status: SolveStatus::Cap };
    let mut diagnostics = None;
    let lenient = LicqPolicy::Lenient;

    let mut exit = None;
    for iteration in 0..cfg.max_outer {
        let step = (|| -> Result<Option<PhaseChoice>> {
            let my = measure(problem, &z, MeasureKind::Y, cfg.delta1, lenient)?;
            if my.measure > cfg.eps_y {
                let m = my.measure;
                return Ok(Some((Phase::Y, my, m, None, None)));
            }
            let mx = measure(problem, &z, MeasureKind::X, cfg.delta2, lenient)?;
            if mx.measure > cfg.eps_x {
                let m = mx.measure;
                return Ok(Some((Phase::X, mx, my.measure, Some(m), None)));
            }
            let mk = measure(problem, &z, MeasureKind::Joint, cfg.delta2, lenient)?;
            if mk.measure > cfg.eps_kkt {
                let m = mk.measure;
                return Ok(Some((Phase::Joint, mk, my.measure, Some(mx.measure), Some(m))));
            }
            exit = Some((my.measure, mx.measure, mk.measure));
            Ok(None)
        })();

        let (phase, dir, m_y, m_x, m_kkt) = match step {
            Ok(Some(s)) => s,
            Ok(None) => {
                trace.status = SolveStatus::Kkt;
                break;
            }
            Err(e) => {
                trace.status = SolveStatus::Stalled;
                diagnostics = Some(format!("measure evaluation failed: {e}"));
                break;
            }
        };
        debug_assert_eq!(dir.kind, phase.kind());

        match armijo_search(problem, phase, &z, f, &dir, cfg) {
            Ok(out) => {
                let rec = TraceRecord {
                    iteration,
                    phase,
                    measure: dir.measure,
                    t: out.t,
                    backtracks: out.backtracks,
                    f_prev: f,
                    f: out.f,
                    residual_eq: out.report.residual_eq,
                    residual_ineq: out.report.residual_ineq,
                    m_y: if phase == Phase::Y { dir.measure } else { m_y },
                    m_x,
                    m_kkt,
                    projection: out.report.method,
                };
                log::trace!("{rec:?}");
                trace.records.push(rec);
                z = out.report.point;
                f = out.f;
            }
            Err(e) => {
                trace.status = SolveStatus::Stalled;
                diagnostics = Some(e.to_string());
                break;
            }
        }
    }

    let (m_y, m_x, m_kkt) = match exit {
        Some(m) => m,
        None => final_measures(problem, &z, cfg),
    };
    if let Some(path) = &cfg.trace_path {
        trace.write_jsonl(path)?;
    }
    Ok(SolveResult { point: z, f_final: f, m_y, m_x, m_kkt, status: trace.status, trace, diagnostics })
}

fn final_measures<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint, cfg: &SolverConfig) -> (f64, f64, f64) {
    let get = |kind, delta| {
        measure(problem, z, kind, delta, LicqPolicy::Lenient).map(|d| d.measure).unwrap_or(f64::NAN)
    };
    (get(MeasureKind::Y, cfg.delta1), get(MeasureKind::X, cfg.delta2), get(MeasureKind::Joint, cfg.delta2))
}

/// Solves from each start and keeps the best feasible result (lowest
/// objective, earliest start on ties). Starts that fail are skipped.
pub fn solve_multistart<P: BlockProblem + ?Sized>(
    problem: &P,
    starts: &[BlockPoint],
    cfg: &SolverConfig,
) -> Result<(SolveResult, Vec<Result<SolveResult>>)> {
    let runs: Vec<Result<SolveResult>> = starts.iter().map(|z0| solve(problem, z0, cfg)).collect();
    let best = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold(None::<&SolveResult>, |best, r| match best {
            Some(b) if b.f_final <= r.f_final => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or_else(|| Error::Numeric("every start failed".into()))?;
    Ok((best, runs))
}

/// Turns an arbitrary point into a feasible start by joint restoration.
pub fn feasible_start<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    cfg: &SolverConfig,
) -> Result<BlockPoint> {
    let pcfg = ProjectionConfig { tol_feas: cfg.tol_feas, max_restore: cfg.max_restore.max(1000) };
    match alternating(problem, query, Scope::Joint, &pcfg) {
        Ok(rep) => Ok(rep.point),
        Err(err) => penalty_project(problem, query, &HalfSquared, Scope::Joint, &pcfg, 20_000)
            .map(|r| r.point)
            .map_err(|_| err),
    }
}

/// Zero vector helper for problems without a `y` block.
pub fn empty_y() -> DVector<f64> {
    DVector::zeros(0)
}
