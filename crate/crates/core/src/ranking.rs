//! Ranking heuristics for the CEGAR loop.
//!
//! A [`Ranker`] scores a batch of enumerated candidates or counterexamples;
//! the loop proposes the argmax, ties going to the lowest batch index.

use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

use crate::formula::{Assignment, Block, QbfFormula, Reduced};
use crate::gnn::{self, EmbeddingState, GnnError, GraphEncoding, WeightBundle};
use crate::sat::{self, SatError};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("score list is empty")]
    EmptyList,
    #[error("core index {index} out of range for {len} scores")]
    CoreIndexOutOfRange { index: usize, len: usize },
    #[error("{ranker} ranker cannot rank {side}s")]
    WrongSide { ranker: &'static str, side: Side },
    #[error("expected {expected} assignments, got {got}")]
    WrongBlock { expected: Block, got: Block },
    #[error(transparent)]
    Formula(#[from] crate::formula::FormulaError),
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

/// Which choice of the loop a ranker is asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Candidate,
    Counterexample,
}

impl Side {
    pub fn block(self) -> Block {
        match self {
            Side::Candidate => Block::Universal,
            Side::Counterexample => Block::Existential,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Candidate => "candidate",
            Side::Counterexample => "counterexample",
        })
    }
}

/// Scores aligned with a batch of assignments. Higher is better.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the first maximal score.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.0.iter().enumerate() {
            match best {
                Some(b) if self.0[b] >= s => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(v: Vec<f64>) -> Self {
        ScoreVector(v)
    }
}

/// Hardness score of a candidate from the model count of its reduction.
pub fn score_hardness(n_models: u64) -> f64 {
    match n_models {
        0..=3 => 10.0 - n_models as f64,
        4..=5 => 6.0,
        6..=8 => 5.0,
        9..=12 => 4.0,
        13..=16 => 3.0,
        17..=21 => 2.0,
        _ => 1.0,
    }
}

/// Candidates satisfying fewer clauses score higher: `max(1, 10 − n + min)`.
pub fn score_candidates_maxsat(n_clauses: &[usize]) -> Result<Vec<f64>, RankError> {
    let min = *n_clauses.iter().min().ok_or(RankError::EmptyList)? as i64;
    Ok(n_clauses
        .iter()
        .map(|&n| (10 - n as i64 + min).max(1) as f64)
        .collect())
}

/// Counterexamples in the core score 10; the rest `max(1, 8 − max + n)`.
pub fn score_counterexamples_core(
    core: &[usize],
    n_clauses: &[usize],
) -> Result<Vec<f64>, RankError> {
    let max = *n_clauses.iter().max().ok_or(RankError::EmptyList)? as i64;
    let mut scores: Vec<f64> = n_clauses
        .iter()
        .map(|&n| (8 - max + n as i64).max(1) as f64)
        .collect();
    for &index in core {
        let len = scores.len();
        *scores
            .get_mut(index)
            .ok_or(RankError::CoreIndexOutOfRange { index, len })? = 10.0;
    }
    Ok(scores)
}

/// Counterexamples satisfying more clauses score higher: `max(1, 10 − max + n)`.
pub fn score_counterexamples_maxsat(n_clauses: &[usize]) -> Result<Vec<f64>, RankError> {
    let max = *n_clauses.iter().max().ok_or(RankError::EmptyList)? as i64;
    Ok(n_clauses
        .iter()
        .map(|&n| (10 - max + n as i64).max(1) as f64)
        .collect())
}

/// A ranking heuristic. Implementations are immutable and shareable.
pub trait Ranker: Send + Sync {
    fn name(&self) -> String;

    /// Prepares per-formula state (e.g. a GNN embedding) once, for scoring
    /// every batch the loop produces on `f`.
    fn bind<'a>(
        &'a self,
        f: &'a QbfFormula,
        side: Side,
    ) -> Result<Box<dyn BoundRanker + 'a>, RankError>;

    fn score_batch(
        &self,
        f: &QbfFormula,
        batch: &[Assignment],
        side: Side,
    ) -> Result<ScoreVector, RankError> {
        self.bind(f, side)?.score(batch)
    }
}

/// A ranker bound to one formula and one side.
pub trait BoundRanker {
    fn score(&mut self, batch: &[Assignment]) -> Result<ScoreVector, RankError>;
}

fn check_batch(batch: &[Assignment], side: Side) -> Result<(), RankError> {
    let expected = side.block();
    match batch.iter().find(|a| a.block() != expected) {
        Some(a) => Err(RankError::WrongBlock {
            expected,
            got: a.block(),
        }),
        None => Ok(()),
    }
}

/// Ranks by satisfied-clause counts: fewest for candidates, most for
/// counterexamples.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxSatRanker;

struct BoundMaxSat<'a> {
    formula: &'a QbfFormula,
    side: Side,
}

impl Ranker for MaxSatRanker {
    fn name(&self) -> String {
        "maxsat".into()
    }

    fn bind<'a>(
        &'a self,
        f: &'a QbfFormula,
        side: Side,
    ) -> Result<Box<dyn BoundRanker + 'a>, RankError> {
        Ok(Box::new(BoundMaxSat { formula: f, side }))
    }
}

impl BoundRanker for BoundMaxSat<'_> {
    fn score(&mut self, batch: &[Assignment]) -> Result<ScoreVector, RankError> {
        check_batch(batch, self.side)?;
        let counts: Vec<usize> = batch
            .iter()
            .map(|a| self.formula.satisfied_clause_count(a))
            .collect();
        let scores = match self.side {
            Side::Candidate => score_candidates_maxsat(&counts)?,
            Side::Counterexample => score_counterexamples_maxsat(&counts)?,
        };
        Ok(scores.into())
    }
}

/// Ranks candidates by the exact model count of their reduction; fewer
/// models, harder to refute, higher score.
#[derive(Debug, Clone, Copy, Default)]
pub struct HardnessRanker;

struct BoundHardness<'a> {
    formula: &'a QbfFormula,
}

/// Model count of `φ[X → cand]` over the existential block.
pub fn reduced_model_count(f: &QbfFormula, cand: &Assignment) -> Result<u64, RankError> {
    Ok(match f.reduce_by_universal(cand)? {
        Reduced::TriviallyUnsat => 0,
        Reduced::Cnf(reduced) => sat::count_models(&reduced, f.existentials())?,
    })
}

impl Ranker for HardnessRanker {
    fn name(&self) -> String {
        "hardness".into()
    }

    fn bind<'a>(
        &'a self,
        f: &'a QbfFormula,
        side: Side,
    ) -> Result<Box<dyn BoundRanker + 'a>, RankError> {
        match side {
            Side::Candidate => Ok(Box::new(BoundHardness { formula: f })),
            Side::Counterexample => Err(RankError::WrongSide {
                ranker: "hardness",
                side,
            }),
        }
    }
}

impl BoundRanker for BoundHardness<'_> {
    fn score(&mut self, batch: &[Assignment]) -> Result<ScoreVector, RankError> {
        check_batch(batch, Side::Candidate)?;
        batch
            .iter()
            .map(|a| reduced_model_count(self.formula, a).map(score_hardness))
            .collect::<Result<Vec<_>, _>>()
            .map(ScoreVector)
    }
}

/// Ranks with a GNN scoring head. The formula is embedded once per bind.
#[derive(Debug, Clone)]
pub struct GnnRanker {
    bundle: Arc<WeightBundle>,
    iterations: usize,
}

impl GnnRanker {
    pub fn new(bundle: Arc<WeightBundle>, iterations: usize) -> GnnRanker {
        GnnRanker { bundle, iterations }
    }

    pub fn bundle(&self) -> &WeightBundle {
        &self.bundle
    }
}

struct BoundGnn<'a> {
    bundle: &'a WeightBundle,
    state: EmbeddingState,
    side: Side,
}

impl Ranker for GnnRanker {
    fn name(&self) -> String {
        format!("gnn(model {})", self.bundle.architecture())
    }

    fn bind<'a>(
        &'a self,
        f: &'a QbfFormula,
        side: Side,
    ) -> Result<Box<dyn BoundRanker + 'a>, RankError> {
        self.bundle.require_score_head(side == Side::Candidate)?;
        let enc = GraphEncoding::encode(f);
        let state = gnn::run_embedding(&enc, &self.bundle, self.iterations)?;
        Ok(Box::new(BoundGnn {
            bundle: &self.bundle,
            state,
            side,
        }))
    }
}

impl BoundRanker for BoundGnn<'_> {
    fn score(&mut self, batch: &[Assignment]) -> Result<ScoreVector, RankError> {
        check_batch(batch, self.side)?;
        let width = match self.side {
            Side::Candidate => self.state.n_forall(),
            Side::Counterexample => self.state.n_exists(),
        };
        let mut matrix = Array2::<f32>::zeros((batch.len(), width));
        for (r, a) in batch.iter().enumerate() {
            for (c, &v) in a.values().iter().enumerate() {
                matrix[[r, c]] = f32::from(u8::from(v));
            }
        }
        let scores = match self.side {
            Side::Candidate => gnn::head_score_forall(&self.state, self.bundle, matrix.view())?,
            Side::Counterexample => {
                gnn::head_score_exists(&self.state, self.bundle, matrix.view())?
            }
        };
        Ok(ScoreVector(scores.into_iter().map(f64::from).collect()))
    }
}
