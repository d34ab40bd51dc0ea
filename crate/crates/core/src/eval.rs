//! Iteration-count evaluation of heuristic configurations on a dataset.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cegar::{self, CegarError, CegarOptions, QbfStatus, DEFAULT_N_MAX};
use crate::datagen::{self, GenError, Manifest};
use crate::formula::QbfFormula;
use crate::gnn::{GnnError, WeightBundle};
use crate::ranking::{GnnRanker, HardnessRanker, MaxSatRanker, Ranker};

/// Message-passing rounds used by GNN rankers unless configured otherwise.
pub const DEFAULT_GNN_ITERATIONS: usize = 8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Cegar(#[from] CegarError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("unknown heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error("GNN heuristic needs a weight bundle")]
    MissingBundle,
    #[error("no split named {0:?}")]
    UnknownSplit(String),
    #[error("{id} (seed {seed}): ranked solver says {ranked}, plain solver says {basic}")]
    StatusMismatch {
        id: String,
        seed: u64,
        ranked: QbfStatus,
        basic: QbfStatus,
    },
    #[error("{id}: reported witness does not refute the formula")]
    BadWitness { id: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    None,
    MaxSat,
    Hardness,
    Gnn,
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::None => "none",
            Heuristic::MaxSat => "maxsat",
            Heuristic::Hardness => "hardness",
            Heuristic::Gnn => "gnn",
        })
    }
}

impl FromStr for Heuristic {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Heuristic::None),
            "maxsat" => Ok(Heuristic::MaxSat),
            "hardness" => Ok(Heuristic::Hardness),
            "gnn" => Ok(Heuristic::Gnn),
            _ => Err(EvalError::UnknownHeuristic(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub candidate: Heuristic,
    pub counterexample: Heuristic,
    pub n_max: usize,
    /// Weight bundle shared by GNN rankers on either side.
    pub bundle: Option<PathBuf>,
    pub gnn_iterations: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            candidate: Heuristic::None,
            counterexample: Heuristic::None,
            n_max: DEFAULT_N_MAX,
            bundle: None,
            gnn_iterations: DEFAULT_GNN_ITERATIONS,
        }
    }
}

impl HeuristicConfig {
    pub fn new(candidate: Heuristic, counterexample: Heuristic) -> HeuristicConfig {
        HeuristicConfig {
            candidate,
            counterexample,
            ..HeuristicConfig::default()
        }
    }

    /// `candidate/counterexample`, e.g. `maxsat/none`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.candidate, self.counterexample)
    }

    pub fn build(&self) -> Result<Rankers, EvalError> {
        let bundle = if self.candidate == Heuristic::Gnn || self.counterexample == Heuristic::Gnn {
            let path = self.bundle.as_ref().ok_or(EvalError::MissingBundle)?;
            Some(Arc::new(WeightBundle::load(path)?))
        } else {
            None
        };
        let make = |h: Heuristic| -> Option<Box<dyn Ranker>> {
            match h {
                Heuristic::None => None,
                Heuristic::MaxSat => Some(Box::new(MaxSatRanker)),
                Heuristic::Hardness => Some(Box::new(HardnessRanker)),
                Heuristic::Gnn => Some(Box::new(GnnRanker::new(
                    bundle.clone().expect("bundle loaded"),
                    self.gnn_iterations,
                ))),
            }
        };
        Ok(Rankers {
            candidate: make(self.candidate),
            counterexample: make(self.counterexample),
            n_max: self.n_max,
        })
    }
}

/// Instantiated rankers for one configuration.
pub struct Rankers {
    pub candidate: Option<Box<dyn Ranker>>,
    pub counterexample: Option<Box<dyn Ranker>>,
    pub n_max: usize,
}

impl Rankers {
    pub fn solve(&self, f: &QbfFormula, seed: u64) -> Result<cegar::CegarResult, CegarError> {
        cegar::solve_ranked(
            f,
            self.candidate.as_deref(),
            self.counterexample.as_deref(),
            CegarOptions {
                n_max: self.n_max,
                seed,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: String,
    pub status: QbfStatus,
    /// One entry per seed.
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl Summary {
    /// Population statistics; all zero for an empty sample.
    pub fn of(values: &[f64]) -> Summary {
        let count = values.len();
        if count == 0 {
            return Summary {
                count,
                mean: 0.0,
                median: 0.0,
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if count % 2 == 1 {
            sorted[count / 2]
        } else {
            (sorted[count / 2 - 1] + sorted[count / 2]) / 2.0
        };
        Summary {
            count,
            mean,
            median,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: HeuristicConfig,
    pub split: String,
    pub seeds: Vec<u64>,
    /// Over all (instance, seed) runs.
    pub summary: Summary,
    pub wall_seconds: f64,
    pub instances: Vec<InstanceResult>,
}

impl EvalReport {
    pub fn table(reports: &[EvalReport]) -> String {
        let rows: Vec<[String; 6]> = reports
            .iter()
            .map(|r| {
                [
                    r.split.clone(),
                    r.config.label(),
                    r.summary.count.to_string(),
                    format!("{:.2}", r.summary.mean),
                    format!("{:.1}", r.summary.median),
                    format!("{:.2}", r.summary.std),
                ]
            })
            .collect();
        let header = ["split", "config", "runs", "mean", "median", "std"].map(String::from);
        let mut widths = header.clone().map(|h| h.len());
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Runs `config` on every formula for every seed. Each ranked answer is
/// checked against the plain solver and UNSAT witnesses are verified.
pub fn evaluate_formulas(
    formulas: &[(String, QbfFormula)],
    split: &str,
    config: &HeuristicConfig,
    seeds: &[u64],
) -> Result<EvalReport, EvalError> {
    let rankers = config.build()?;
    log::info!("{split}: {} on {} formulas x {} seeds", config.label(), formulas.len(), seeds.len());
    let start = Instant::now();
    let instances: Vec<InstanceResult> = formulas
        .par_iter()
        .map(|(id, f)| -> Result<InstanceResult, EvalError> {
            let basic = cegar::solve_basic(f, 0)?.status;
            let mut iterations = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let run = rankers.solve(f, seed)?;
                if run.status != basic {
                    return Err(EvalError::StatusMismatch {
                        id: id.clone(),
                        seed,
                        ranked: run.status,
                        basic,
                    });
                }
                if let Some(w) = &run.witness {
                    if !cegar::verify_witness(f, w)? {
                        return Err(EvalError::BadWitness { id: id.clone() });
                    }
                }
                iterations.push(run.iterations);
            }
            Ok(InstanceResult {
                id: id.clone(),
                status: basic,
                iterations,
            })
        })
        .collect::<Result<_, _>>()?;
    let all: Vec<f64> = instances
        .iter()
        .flat_map(|i| i.iterations.iter().map(|&n| n as f64))
        .collect();
    Ok(EvalReport {
        config: config.clone(),
        split: split.to_string(),
        seeds: seeds.to_vec(),
        summary: Summary::of(&all),
        wall_seconds: start.elapsed().as_secs_f64(),
        instances,
    })
}

/// Loads the formulas of one split of a generated dataset.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<(String, QbfFormula)>, EvalError> {
    let manifest = Manifest::load(dir)?;
    let entry = manifest
        .split(split)
        .ok_or_else(|| EvalError::UnknownSplit(split.to_string()))?;
    entry
        .instances
        .par_iter()
        .map(|i| Ok((i.id.clone(), datagen::read_formula(dir.join(i.formula_file()))?)))
        .collect()
}

/// [`evaluate_formulas`] on a dataset split, using `jobs` threads
/// (0 for the rayon default).
pub fn evaluate_split(
    dir: &Path,
    split: &str,
    config: &HeuristicConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<EvalReport, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        let formulas = load_split(dir, split)?;
        let name = Manifest::load(dir)?
            .split(split)
            .map(|s| s.name.clone())
            .unwrap_or_else(|| split.to_string());
        evaluate_formulas(&formulas, &name, config, seeds)
    })
}
