use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use spectral_bcd::{Retraction, SolverConfig};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gensdp,
    Qcqp,
    Selftest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Solver settings a run may override; unset fields keep the solver defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub eps_y: Option<f64>,
    pub eps_x: Option<f64>,
    pub eps_kkt: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub t_base: Option<f64>,
    pub max_outer: Option<usize>,
    pub min_step: Option<f64>,
    pub tol_feas: Option<f64>,
    pub max_restore: Option<usize>,
    pub retraction: Option<Retraction>,
}

/// Everything a run needs. The JSON config file has the same fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Matrix sizes for `gensdp` and `selftest`.
    pub n: Vec<usize>,
    /// Constraint counts for `qcqp`.
    pub m: Vec<usize>,
    #[serde(deserialize_with = "seeds_from_json")]
    pub seeds: Vec<u64>,
    /// Band widths for `qcqp`.
    pub deltas: Vec<f64>,
    /// Sets every tolerance and almost-active width at once.
    pub eps: Option<f64>,
    pub restarts: usize,
    pub samples: usize,
    pub angles: usize,
    pub out: PathBuf,
    pub format: Format,
    pub trace: bool,
    pub solver: SolverOverrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Gensdp,
            n: vec![5],
            m: vec![10],
            seeds: (0..10).collect(),
            deltas: vec![1e-6],
            eps: None,
            restarts: 3,
            samples: spectral_bcd::apps::qcqp::DEFAULT_SAMPLES,
            angles: spectral_bcd::apps::qcqp::DEFAULT_ANGLES,
            out: PathBuf::from("out"),
            format: Format::Csv,
            trace: false,
            solver: SolverOverrides::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        match self.experiment {
            Experiment::Gensdp | Experiment::Selftest => {
                if self.n.is_empty() {
                    return bad("size list (--n) is empty");
                }
                if self.n.iter().any(|&n| n < 2) {
                    return bad("matrix sizes must be at least 2");
                }
            }
            Experiment::Qcqp => {
                if self.m.is_empty() {
                    return bad("constraint-count list (--m) is empty");
                }
                if self.m.contains(&0) {
                    return bad("constraint counts must be at least 1");
                }
                if self.deltas.is_empty() {
                    return bad("band-width list (--delta) is empty");
                }
            }
        }
        if self.deltas.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
            return bad("band widths must be finite and nonnegative");
        }
        if self.restarts == 0 || self.samples == 0 {
            return bad("restarts and samples must be at least 1");
        }
        if self.angles < 2 {
            return bad("the grid oracle needs at least 2 angles");
        }
        self.solver_config().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(eps) = self.eps {
            cfg = cfg.with_eps(eps);
        }
        let o = &self.solver;
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { cfg.$f = v; } )* };
        }
        apply!(eps_y, eps_x, eps_kkt, delta1, delta2, alpha, gamma, t_base, max_outer, min_step, tol_feas, max_restore, retraction);
        cfg
    }
}

/// Parses `a..b` (inclusive), `a` or a comma-separated list of either.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range start in {part:?}"))?;
            let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range end in {part:?}"))?;
            if hi < lo {
                return Err(format!("empty seed range {part:?}"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?);
        }
    }
    Ok(out)
}

fn seeds_from_json<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Seeds {
        List(Vec<u64>),
        Text(String),
    }
    match Seeds::deserialize(d)? {
        Seeds::List(v) => Ok(v),
        Seeds::Text(s) => parse_seeds(&s).map_err(serde::de::Error::custom),
    }
}
