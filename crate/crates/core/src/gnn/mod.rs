//! Graph encoding of 2QBF formulas and forward-only message passing.
//!
//! Literal nodes are split by block. Within a block of `n` variables the
//! literal columns are `[v₁ … vₙ, ¬v₁ … ¬vₙ]`, so negation maps row `i` to
//! row `i ± n`. Embeddings are LSTM hidden states; each is paired with its
//! cell state.

mod bundle;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::formula::{Block, QbfFormula};

pub use bundle::{
    Head, WeightBundle, DEFAULT_DIM, FORMAT_VERSION, HEAD_ASN, HEAD_EXISTS_SCORING, HEAD_EXISTS_WV,
    HEAD_FORALL_SCORING, HEAD_FORALL_WV, HEAD_VOTE, MAGIC,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("unknown architecture {0} (expected 1-7)")]
    UnknownArchitecture(u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bundle has no {0} head")]
    MissingHead(Head),
    #[error("weight bundle checksum mismatch")]
    Checksum,
    #[error("malformed weight bundle: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse 0/1 clause-by-literal matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incidence {
    rows: usize,
    cols: usize,
    /// `(clause, literal column)`, in clause order.
    entries: Vec<(usize, usize)>,
}

impl Incidence {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Array2<f32> {
        let mut m = Array2::zeros((self.rows, self.cols));
        for &(r, c) in &self.entries {
            m[[r, c]] = 1.0;
        }
        m
    }

    /// `E · m` for `m` with one row per literal.
    pub fn mul(&self, m: ArrayView2<'_, f32>) -> Array2<f32> {
        let mut out = Array2::zeros((self.rows, m.ncols()));
        for &(r, c) in &self.entries {
            let mut row = out.row_mut(r);
            row += &m.row(c);
        }
        out
    }

    /// `Eᵀ · m` for `m` with one row per clause.
    pub fn mul_t(&self, m: ArrayView2<'_, f32>) -> Array2<f32> {
        let mut out = Array2::zeros((self.cols, m.ncols()));
        for &(r, c) in &self.entries {
            let mut row = out.row_mut(c);
            row += &m.row(r);
        }
        out
    }
}

/// The bipartite literal/clause graph, split into ∀ and ∃ literal groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphEncoding {
    pub n_clauses: usize,
    pub n_forall: usize,
    pub n_exists: usize,
    /// `|C| × 2|X|`
    pub e_forall: Incidence,
    /// `|C| × 2|Y|`
    pub e_exists: Incidence,
}

impl GraphEncoding {
    pub fn encode(f: &QbfFormula) -> GraphEncoding {
        let n_forall = f.universals().len();
        let n_exists = f.existentials().len();
        let mut forall = Vec::new();
        let mut exists = Vec::new();
        for (ci, c) in f.clauses().iter().enumerate() {
            for l in c.literals() {
                let (block, pos) = f.position(l.var()).expect("validated formula");
                let (entries, n) = match block {
                    Block::Universal => (&mut forall, n_forall),
                    Block::Existential => (&mut exists, n_exists),
                };
                entries.push((ci, if l.is_negated() { pos + n } else { pos }));
            }
        }
        let n_clauses = f.clauses().len();
        GraphEncoding {
            n_clauses,
            n_forall,
            n_exists,
            e_forall: Incidence {
                rows: n_clauses,
                cols: 2 * n_forall,
                entries: forall,
            },
            e_exists: Incidence {
                rows: n_clauses,
                cols: 2 * n_exists,
                entries: exists,
            },
        }
    }
}

/// Hidden (the embedding) and cell state of one node class.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array2<f32>,
    pub c: Array2<f32>,
}

impl LstmState {
    fn tiled(rows: usize, (h, c): (Array1<f32>, Array1<f32>)) -> LstmState {
        let d = h.len();
        LstmState {
            h: h.broadcast((rows, d)).expect("row broadcast").to_owned(),
            c: c.broadcast((rows, d)).expect("row broadcast").to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClauseEmbedding {
    /// Models 1–5.
    Single(LstmState),
    /// Models 6–7: one clause embedding serving each literal group.
    Dual {
        to_forall: LstmState,
        to_exists: LstmState,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub forall: LstmState,
    pub exists: LstmState,
    pub clause: ClauseEmbedding,
}

impl EmbeddingState {
    /// `Emb_∀`, one row per ∀-literal.
    pub fn emb_forall(&self) -> &Array2<f32> {
        &self.forall.h
    }

    /// `Emb_∃`, one row per ∃-literal.
    pub fn emb_exists(&self) -> &Array2<f32> {
        &self.exists.h
    }

    pub fn n_forall(&self) -> usize {
        self.forall.h.nrows() / 2
    }

    pub fn n_exists(&self) -> usize {
        self.exists.h.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.forall.h.ncols()
    }

    /// Per-variable rows `[Emb(v), Emb(¬v)]` of a literal embedding.
    pub fn variable_rows(emb: &Array2<f32>) -> Array2<f32> {
        let n = emb.nrows() / 2;
        concatenate(Axis(1), &[emb.slice(s![..n, ..]), emb.slice(s![n.., ..])])
            .expect("halves have equal shape")
    }
}

/// `Emb_¬`: the two literal half-blocks swapped.
pub fn negation_swap(emb: ArrayView2<'_, f32>) -> Array2<f32> {
    let n = emb.nrows() / 2;
    concatenate(Axis(0), &[emb.slice(s![n.., ..]), emb.slice(s![..n, ..])])
        .expect("halves have equal shape")
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// One step of the standard LSTM cell (gate order i, f, g, o) on every row.
fn lstm_step(bundle: &WeightBundle, name: &str, input: ArrayView2<'_, f32>, state: &mut LstmState) {
    let d = bundle.dim();
    let w_ih = bundle.matrix(&format!("{name}.w_ih"));
    let w_hh = bundle.matrix(&format!("{name}.w_hh"));
    let bias = bundle.vector(&format!("{name}.bias"));
    let gates = input.dot(&w_ih.t()) + state.h.dot(&w_hh.t()) + bias;
    for r in 0..gates.nrows() {
        for j in 0..d {
            let i = sigmoid(gates[[r, j]]);
            let f = sigmoid(gates[[r, d + j]]);
            let g = gates[[r, 2 * d + j]].tanh();
            let o = sigmoid(gates[[r, 3 * d + j]]);
            let c = f * state.c[[r, j]] + i * g;
            state.c[[r, j]] = c;
            state.h[[r, j]] = o * c.tanh();
        }
    }
}

fn cat(a: &Array2<f32>, b: &Array2<f32>) -> Array2<f32> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("equal row counts")
}

/// `Emb_L = 𝓛_L([Eᵀ·Msg, Emb_¬L])`
fn update_literals(
    bundle: &WeightBundle,
    lstm: &str,
    incidence: &Incidence,
    msg: &Array2<f32>,
    state: &mut LstmState,
) {
    let input = cat(&incidence.mul_t(msg.view()), &negation_swap(state.h.view()));
    lstm_step(bundle, lstm, input.view(), state);
}

/// Runs `iterations` rounds of the bundle's architecture from the tiled
/// initial embeddings.
pub fn run_embedding(
    enc: &GraphEncoding,
    bundle: &WeightBundle,
    iterations: usize,
) -> Result<EmbeddingState, GnnError> {
    let arch = bundle.architecture();
    if !(1..=7).contains(&arch) {
        return Err(GnnError::UnknownArchitecture(arch));
    }
    if enc.e_forall.cols != 2 * enc.n_forall
        || enc.e_exists.cols != 2 * enc.n_exists
        || enc.e_forall.rows != enc.n_clauses
        || enc.e_exists.rows != enc.n_clauses
    {
        return Err(GnnError::Shape("graph encoding is inconsistent".into()));
    }
    let clause_init = || LstmState::tiled(enc.n_clauses, bundle.init("clause"));
    let mut state = EmbeddingState {
        forall: LstmState::tiled(2 * enc.n_forall, bundle.init("forall")),
        exists: LstmState::tiled(2 * enc.n_exists, bundle.init("exists")),
        clause: if arch >= 6 {
            ClauseEmbedding::Dual {
                to_forall: clause_init(),
                to_exists: clause_init(),
            }
        } else {
            ClauseEmbedding::Single(clause_init())
        },
    };
    let ea = &enc.e_forall;
    let ee = &enc.e_exists;

    for _ in 0..iterations {
        let EmbeddingState {
            forall,
            exists,
            clause,
        } = &mut state;
        match (arch, clause) {
            (1..=5, ClauseEmbedding::Single(emb_c)) => {
                let msg_a = bundle.mlp("mlp.forall", forall.h.view());
                let msg_e = bundle.mlp("mlp.exists", exists.h.view());
                let from_a = ea.mul(msg_a.view());
                let from_e = ee.mul(msg_e.view());
                match arch {
                    1 => lstm_step(bundle, "lstm.clause", (&from_a + &from_e).view(), emb_c),
                    2 => {
                        lstm_step(bundle, "lstm.clause_from_forall", from_a.view(), emb_c);
                        lstm_step(bundle, "lstm.clause_from_exists", from_e.view(), emb_c);
                    }
                    3 => {
                        lstm_step(bundle, "lstm.clause_from_exists", from_e.view(), emb_c);
                        lstm_step(bundle, "lstm.clause_from_forall", from_a.view(), emb_c);
                    }
                    _ => lstm_step(bundle, "lstm.clause", cat(&from_a, &from_e).view(), emb_c),
                }
                let (to_a, to_e) = if arch == 5 {
                    (
                        bundle.mlp("mlp.clause_to_forall", emb_c.h.view()),
                        bundle.mlp("mlp.clause_to_exists", emb_c.h.view()),
                    )
                } else {
                    let m = bundle.mlp("mlp.clause", emb_c.h.view());
                    (m.clone(), m)
                };
                update_literals(bundle, "lstm.forall", ea, &to_a, forall);
                update_literals(bundle, "lstm.exists", ee, &to_e, exists);
            }
            (6, ClauseEmbedding::Dual {
                to_forall,
                to_exists,
            }) => {
                let msg_a = bundle.mlp("mlp.forall", forall.h.view());
                let msg_e = bundle.mlp("mlp.exists", exists.h.view());
                let joint = cat(&ea.mul(msg_a.view()), &ee.mul(msg_e.view()));
                lstm_step(bundle, "lstm.clause_to_forall", joint.view(), to_forall);
                lstm_step(bundle, "lstm.clause_to_exists", joint.view(), to_exists);
                let to_a = bundle.mlp("mlp.clause_to_forall", to_forall.h.view());
                let to_e = bundle.mlp("mlp.clause_to_exists", to_exists.h.view());
                update_literals(bundle, "lstm.forall", ea, &to_a, forall);
                update_literals(bundle, "lstm.exists", ee, &to_e, exists);
            }
            (7, ClauseEmbedding::Dual {
                to_forall,
                to_exists,
            }) => {
                // ∀ → C → ∃
                let msg_a = bundle.mlp("mlp.forall", forall.h.view());
                lstm_step(bundle, "lstm.clause_to_exists", ea.mul(msg_a.view()).view(), to_exists);
                let to_e = bundle.mlp("mlp.clause_to_exists", to_exists.h.view());
                update_literals(bundle, "lstm.exists", ee, &to_e, exists);
                // ∃ → C → ∀
                let msg_e = bundle.mlp("mlp.exists", exists.h.view());
                lstm_step(bundle, "lstm.clause_to_forall", ee.mul(msg_e.view()).view(), to_forall);
                let to_a = bundle.mlp("mlp.clause_to_forall", to_forall.h.view());
                update_literals(bundle, "lstm.forall", ea, &to_a, forall);
            }
            _ => unreachable!("clause embedding kind follows the architecture"),
        }
    }
    Ok(state)
}

fn check_state(state: &EmbeddingState, bundle: &WeightBundle) -> Result<(), GnnError> {
    if state.dim() != bundle.dim() {
        return Err(GnnError::Shape(format!(
            "state width {} does not match bundle width {}",
            state.dim(),
            bundle.dim()
        )));
    }
    Ok(())
}

/// SAT/UNSAT logit: mean over ∀-variables of the vote MLP.
pub fn head_vote(state: &EmbeddingState, bundle: &WeightBundle) -> Result<f32, GnnError> {
    bundle.require_head(Head::Vote)?;
    check_state(state, bundle)?;
    let votes = bundle.mlp(HEAD_VOTE, EmbeddingState::variable_rows(&state.forall.h).view());
    Ok(votes.column(0).mean().unwrap_or(0.0))
}

/// Per ∀-variable probabilities `[P(false), P(true)]`.
pub fn head_witness(state: &EmbeddingState, bundle: &WeightBundle) -> Result<Array2<f32>, GnnError> {
    bundle.require_head(Head::Witness)?;
    check_state(state, bundle)?;
    let mut logits = bundle.mlp(HEAD_ASN, EmbeddingState::variable_rows(&state.forall.h).view());
    for mut row in logits.rows_mut() {
        let m = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    Ok(logits)
}

fn head_score(
    emb: &Array2<f32>,
    bundle: &WeightBundle,
    scoring: &str,
    wv: &str,
    batch: ArrayView2<'_, f32>,
) -> Result<Vec<f32>, GnnError> {
    let n_vars = emb.nrows() / 2;
    if batch.ncols() != n_vars {
        return Err(GnnError::Shape(format!(
            "batch has {} columns, block has {n_vars} variables",
            batch.ncols()
        )));
    }
    let sm = bundle.mlp(scoring, EmbeddingState::variable_rows(emb).view());
    let hidden = batch.dot(&sm).mapv(|v| v.max(0.0));
    Ok(hidden.dot(&bundle.vector(wv)).to_vec())
}

/// `ReLU(ℂ · Sm_∀) · Wv_∀` for a `B × |X|` 0/1 candidate matrix.
pub fn head_score_forall(
    state: &EmbeddingState,
    bundle: &WeightBundle,
    batch: ArrayView2<'_, f32>,
) -> Result<Vec<f32>, GnnError> {
    bundle.require_head(Head::ScoreForall)?;
    check_state(state, bundle)?;
    head_score(&state.forall.h, bundle, HEAD_FORALL_SCORING, HEAD_FORALL_WV, batch)
}

/// `ReLU(ℂ𝔼 · Sm_∃) · Wv_∃` for a `B × |Y|` 0/1 counterexample matrix.
pub fn head_score_exists(
    state: &EmbeddingState,
    bundle: &WeightBundle,
    batch: ArrayView2<'_, f32>,
) -> Result<Vec<f32>, GnnError> {
    bundle.require_head(Head::ScoreExists)?;
    check_state(state, bundle)?;
    head_score(&state.exists.h, bundle, HEAD_EXISTS_SCORING, HEAD_EXISTS_WV, batch)
}
