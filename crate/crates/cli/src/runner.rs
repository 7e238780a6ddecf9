//! Batch execution. Instances run on the rayon pool; results are returned in
//! configuration order so outputs do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spectral_bcd::apps::gensdp::{gen_sdp_instance, run_gen_sdp};
use spectral_bcd::apps::qcqp::{qcqp_instance, run_qcqp_comparison, ComparisonConfig};
use spectral_bcd::solver::TraceRecord;
use spectral_bcd::{SolveStatus, SolverConfig};

use crate::config::{Experiment, ExperimentConfig};
use crate::selftest::{self, SelftestRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSdpRow {
    pub n: usize,
    pub seed: u64,
    pub f: f64,
    pub f_star: f64,
    pub dist_to_opt: f64,
    pub residual_eq: f64,
    pub residual_ineq: f64,
    pub solved: bool,
    pub status: String,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcqpRow {
    pub m: usize,
    pub seed: u64,
    pub delta: f64,
    pub oracle_opt: f64,
    pub oracle_error_bound: f64,
    pub sdr_orig: f64,
    pub sdr_random: f64,
    pub sdr_random_solved: bool,
    pub ours_orig: Option<f64>,
    pub ours_random: Option<f64>,
    pub ours_project: Option<f64>,
    pub ours_random_solved: bool,
    pub ours_project_solved: bool,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rows {
    GenSdp(Vec<GenSdpRow>),
    Qcqp(Vec<QcqpRow>),
    Selftest(Vec<SelftestRow>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::GenSdp(r) => r.len(),
            Rows::Qcqp(r) => r.len(),
            Rows::Selftest(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trace lines tagged with the run they belong to.
#[derive(Clone, Debug, Serialize)]
pub struct TaggedRecord {
    pub run: String,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Debug)]
pub struct RunOutput {
    pub rows: Rows,
    /// Instance-level failures; the batch continues past them.
    pub errors: Vec<String>,
    pub traces: Vec<TaggedRecord>,
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Kkt => "kkt",
        SolveStatus::Cap => "cap",
        SolveStatus::Stalled => "stalled",
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> RunOutput {
    let solver = cfg.solver_config();
    match cfg.experiment {
        Experiment::Gensdp => gen_sdp_batch(cfg, &solver),
        Experiment::Qcqp => qcqp_batch(cfg, &solver),
        Experiment::Selftest => {
            let jobs: Vec<(usize, u64)> =
                cfg.n.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
            let rows: Vec<Vec<SelftestRow>> = jobs.par_iter().map(|&(n, s)| selftest::run(n, s, &solver)).collect();
            let rows: Vec<SelftestRow> = rows.into_iter().flatten().collect();
            let errors = rows.iter().filter(|r| !r.passed).map(|r| format!("{} failed: {:e}", r.check, r.value)).collect();
            RunOutput { rows: Rows::Selftest(rows), errors, traces: Vec::new() }
        }
    }
}

fn gen_sdp_batch(cfg: &ExperimentConfig, solver: &SolverConfig) -> RunOutput {
    let jobs: Vec<(usize, u64)> = cfg.n.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            log::info!("gensdp n={n} seed={seed}");
            (n, seed, run_gen_sdp(&gen_sdp_instance(n, n, seed), solver))
        })
        .collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut traces = Vec::new();
    for (n, seed, res) in results {
        match res {
            Ok(o) => {
                if cfg.trace {
                    let run = format!("gensdp n={n} seed={seed}");
                    traces.extend(
                        o.result.trace.records.iter().map(|r| TaggedRecord { run: run.clone(), record: r.clone() }),
                    );
                }
                if let Some(d) = &o.result.diagnostics {
                    log::warn!("gensdp n={n} seed={seed}: {d}");
                }
                rows.push(GenSdpRow {
                    n,
                    seed,
                    f: o.f,
                    f_star: o.f_star,
                    dist_to_opt: o.dist_to_opt,
                    residual_eq: o.residual_eq,
                    residual_ineq: o.residual_ineq,
                    solved: o.solved,
                    status: status_name(o.result.status).to_string(),
                    iterations: o.result.iterations(),
                });
            }
            Err(e) => errors.push(format!("gensdp n={n} seed={seed}: {e}")),
        }
    }
    RunOutput { rows: Rows::GenSdp(rows), errors, traces }
}

fn qcqp_batch(cfg: &ExperimentConfig, solver: &SolverConfig) -> RunOutput {
    let cmp = ComparisonConfig {
        deltas: cfg.deltas.clone(),
        restarts: cfg.restarts,
        samples: cfg.samples,
        angles: cfg.angles,
        solver: solver.clone(),
    };
    let jobs: Vec<(usize, u64)> = cfg.m.iter().flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(m, seed)| {
            log::info!("qcqp m={m} seed={seed}");
            (m, seed, run_qcqp_comparison(&qcqp_instance(m, seed), &cmp, seed))
        })
        .collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut traces = Vec::new();
    for (m, seed, res) in results {
        let o = match res {
            Ok(o) => o,
            Err(e) => {
                errors.push(format!("qcqp m={m} seed={seed}: {e}"));
                continue;
            }
        };
        for band in &o.bands {
            for f in &band.failures {
                log::warn!("qcqp m={m} seed={seed} delta={}: {f}", band.delta);
            }
            if cfg.trace {
                for (k, t) in band.traces.iter().enumerate() {
                    let run = format!("qcqp m={m} seed={seed} delta={} start={k}", band.delta);
                    traces.extend(t.records.iter().map(|r| TaggedRecord { run: run.clone(), record: r.clone() }));
                }
            }
            rows.push(QcqpRow {
                m,
                seed,
                delta: band.delta,
                oracle_opt: o.oracle.value,
                oracle_error_bound: o.oracle.error_bound,
                sdr_orig: o.sdr_orig,
                sdr_random: o.sdr_random.value,
                sdr_random_solved: o.solved_sdr_random,
                ours_orig: band.ours_orig,
                ours_random: band.ours_random.map(|p| p.value),
                ours_project: band.ours_project.map(|p| p.value),
                ours_random_solved: band.solved_random,
                ours_project_solved: band.solved_project,
                status: band.status.map_or("failed", status_name).to_string(),
            });
        }
    }
    RunOutput { rows: Rows::Qcqp(rows), errors, traces }
}
