//! Point clouds for plotting a two-dimensional QCQP: the feasible region,
//! objective level sets and the points each rounding produces.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Serialize;
use spectral_bcd::apps::qcqp::{
    project_rank1, qcqp_instance, randomize_samples, run_qcqp_comparison, ComparisonConfig, QcqpInstance,
    QcqpOutcome,
};
use spectral_bcd::SolverConfig;

use crate::output::write_csv;
use crate::CliError;

/// Point classes in the output file.
pub mod class {
    pub const FEASIBLE: &str = "F";
    pub const INFEASIBLE: &str = "I";
    pub const LEVEL: &str = "L";
    pub const RELAXATION: &str = "R";
    pub const OURS: &str = "G";
    pub const PROJECTED: &str = "P";
    pub const ORACLE: &str = "S";
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionPoint {
    pub x1: f64,
    pub x2: f64,
    pub class: &'static str,
}

#[derive(Clone, Debug)]
pub struct RegionConfig {
    pub m: usize,
    pub seed: u64,
    pub delta: f64,
    /// Points per axis of the feasibility grid.
    pub grid: usize,
    /// Points on each level circle.
    pub circle: usize,
    pub samples: usize,
    pub restarts: usize,
    pub angles: usize,
    pub solver: SolverConfig,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            m: 10,
            seed: 0,
            delta: 1e-6,
            grid: 101,
            circle: 360,
            samples: spectral_bcd::apps::qcqp::DEFAULT_SAMPLES,
            restarts: 3,
            angles: spectral_bcd::apps::qcqp::DEFAULT_ANGLES,
            solver: SolverConfig::default(),
        }
    }
}

pub fn region_points(inst: &QcqpInstance, cfg: &RegionConfig) -> Result<Vec<RegionPoint>, CliError> {
    let cmp = ComparisonConfig {
        deltas: vec![cfg.delta],
        restarts: cfg.restarts,
        samples: cfg.samples,
        angles: cfg.angles,
        solver: cfg.solver.clone(),
    };
    let outcome = run_qcqp_comparison(inst, &cmp, cfg.seed).map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(points_from_outcome(inst, &outcome, cfg))
}

fn points_from_outcome(inst: &QcqpInstance, outcome: &QcqpOutcome, cfg: &RegionConfig) -> Vec<RegionPoint> {
    let mut pts = Vec::new();
    let push = |pts: &mut Vec<RegionPoint>, x: &Vector2<f64>, class| pts.push(RegionPoint { x1: x[0], x2: x[1], class });

    let opt = outcome.oracle.value;
    let half = 2.0 * opt.sqrt();
    let g = cfg.grid.max(2);
    for i in 0..g {
        for j in 0..g {
            let x = Vector2::new(
                -half + 2.0 * half * i as f64 / (g - 1) as f64,
                -half + 2.0 * half * j as f64 / (g - 1) as f64,
            );
            let c = if inst.is_feasible(&x, 0.0) { class::FEASIBLE } else { class::INFEASIBLE };
            push(&mut pts, &x, c);
        }
    }

    // Level sets through the optimum and through the relaxation bound.
    for level in [opt, outcome.sdr_orig] {
        let r = level.max(0.0).sqrt();
        for k in 0..cfg.circle {
            let t = std::f64::consts::TAU * k as f64 / cfg.circle as f64;
            push(&mut pts, &Vector2::new(r * t.cos(), r * t.sin()), class::LEVEL);
        }
    }

    if let Ok(samples) = randomize_samples(&outcome.sdr_x, inst, cfg.samples, cfg.seed) {
        for p in samples {
            push(&mut pts, &p.x, class::RELAXATION);
        }
    }
    for band in &outcome.bands {
        for (k, x) in band.solutions.iter().enumerate() {
            if let Ok(samples) = randomize_samples(x, inst, cfg.samples, cfg.seed.wrapping_add(k as u64)) {
                for p in samples {
                    push(&mut pts, &p.x, class::OURS);
                }
            }
            if let Ok(p) = project_rank1(x, inst) {
                push(&mut pts, &p.x, class::PROJECTED);
            }
        }
    }
    push(&mut pts, &outcome.oracle.point, class::ORACLE);
    pts
}

/// Writes `region_m{m}_seed{seed}.csv` under `dir`.
pub fn write_region(dir: &Path, cfg: &RegionConfig) -> Result<PathBuf, CliError> {
    let inst = qcqp_instance(cfg.m, cfg.seed);
    let pts = region_points(&inst, cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("region_m{}_seed{}.csv", cfg.m, cfg.seed));
    write_csv(&path, &pts)?;
    Ok(path)
}
