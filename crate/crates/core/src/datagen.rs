//! Random 2QBF families and supervised ranking labels.
//!
//! UNSAT instances grow one random clause at a time until the formula turns
//! UNSAT; the SAT twin flips one existential literal of an UNSAT instance.
//! Every random choice derives from explicit seeds, so a dataset directory
//! can be regenerated byte for byte from its manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cegar::{self, derive_constraint, CegarError, ConstraintStore, QbfStatus};
use crate::formula::{Assignment, Block, Clause, CnfFormula, FormulaError, Literal, QbfFormula, VarId};
use crate::ranking::{
    reduced_model_count, score_candidates_maxsat, score_counterexamples_core, score_hardness,
    RankError,
};
use crate::sat::{self, SatError};

/// Clause budget of the UNSAT generator.
pub const MAX_GENERATED_CLAUSES: usize = 10_000;
/// Largest block the exhaustive labelers accept.
pub const MAX_LABEL_BLOCK: usize = 12;
/// SAT-twin attempts before giving up on a pair seed.
pub const MAX_PAIR_RESAMPLES: usize = 64;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Cegar(#[from] CegarError),
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid generator spec: {0}")]
    BadSpec(String),
    #[error("formula still satisfiable after {0} clauses")]
    ClauseBudget(usize),
    #[error("input formula is not UNSAT")]
    NotUnsat,
    #[error("no single existential flip makes the formula SAT")]
    NoSatFlip,
    #[error("block of {0} variables too large for exhaustive labels")]
    BlockTooLarge(usize),
    #[error("labels disagree with the formula's status: {0}")]
    LabelMismatch(String),
    #[error("pair seed {0}: no SAT twin after {MAX_PAIR_RESAMPLES} resamples")]
    PairResamples(u64),
}

/// Shape of generated formulas: `specs (forall_per_clause, exists_per_clause)`
/// over `sizes (n_forall, n_exists)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_forall: usize,
    pub n_exists: usize,
    pub forall_per_clause: usize,
    pub exists_per_clause: usize,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_forall: 8,
            n_exists: 10,
            forall_per_clause: 2,
            exists_per_clause: 3,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn with_seed(self, seed: u64) -> GenSpec {
        GenSpec { seed, ..self }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.forall_per_clause > self.n_forall || self.exists_per_clause > self.n_exists {
            return Err(GenError::BadSpec("more literals per clause than variables".into()));
        }
        if self.forall_per_clause + self.exists_per_clause == 0 {
            return Err(GenError::BadSpec("clauses need at least one literal".into()));
        }
        Ok(())
    }

    fn universals(&self) -> Vec<VarId> {
        (1..=self.n_forall as u32).map(VarId::new).collect()
    }

    fn existentials(&self) -> Vec<VarId> {
        let base = self.n_forall as u32;
        (1..=self.n_exists as u32).map(|i| VarId::new(base + i)).collect()
    }

    fn random_clause(&self, rng: &mut ChaCha8Rng) -> Clause {
        let mut pick = |vars: Vec<VarId>, k: usize| {
            let mut chosen: Vec<VarId> = index::sample(rng, vars.len(), k)
                .into_iter()
                .map(|i| vars[i])
                .collect();
            chosen.sort_unstable();
            chosen
                .into_iter()
                .map(|v| Literal::new(v, rng.gen()))
                .collect::<Vec<_>>()
        };
        let mut lits = pick(self.universals(), self.forall_per_clause);
        lits.extend(pick(self.existentials(), self.exists_per_clause));
        Clause::new(lits).expect("distinct variables")
    }
}

/// splitmix64 finalizer over a seed and a salt.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn status(f: &QbfFormula) -> Result<QbfStatus, GenError> {
    Ok(cegar::solve_basic(f, 0)?.status)
}

/// Appends random clauses until the formula is UNSAT; the formula without
/// its last clause is SAT.
pub fn generate_unsat(spec: &GenSpec) -> Result<QbfFormula, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let num_vars = (spec.n_forall + spec.n_exists) as u32;
    let mut clauses: Vec<Clause> = Vec::new();
    let mut keys: Vec<Vec<Literal>> = Vec::new();
    for _ in 0..MAX_GENERATED_CLAUSES {
        let clause = spec.random_clause(&mut rng);
        let key = clause.sorted_key();
        if keys.contains(&key) {
            continue;
        }
        keys.push(key);
        clauses.push(clause);
        let f = QbfFormula::new(num_vars, spec.universals(), spec.existentials(), clauses.clone())?;
        if status(&f)? == QbfStatus::Unsat {
            return Ok(f);
        }
    }
    Err(GenError::ClauseBudget(MAX_GENERATED_CLAUSES))
}

/// A SAT twin and how many flips were tried to find it.
#[derive(Debug, Clone)]
pub struct SatTwin {
    pub formula: QbfFormula,
    pub attempts: usize,
    /// `(clause index, literal index)` of the flipped occurrence.
    pub flipped: (usize, usize),
}

/// Tries existential literal occurrences in random order and keeps the
/// first flip that makes `f` SAT.
pub fn make_sat_twin(f: &QbfFormula, seed: u64) -> Result<SatTwin, GenError> {
    if status(f)? != QbfStatus::Unsat {
        return Err(GenError::NotUnsat);
    }
    let mut positions: Vec<(usize, usize)> = f
        .clauses()
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            c.literals()
                .iter()
                .enumerate()
                .filter(|(_, l)| f.block_of(l.var()) == Some(Block::Existential))
                .map(move |(li, _)| (ci, li))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positions.shuffle(&mut rng);
    for (attempt, &(ci, li)) in positions.iter().enumerate() {
        let mut clauses = f.clauses().to_vec();
        let mut lits = clauses[ci].literals().to_vec();
        lits[li] = !lits[li];
        clauses[ci] = Clause::new(lits).expect("flip keeps variables distinct");
        let twin = f.with_clauses(clauses)?;
        if status(&twin)? == QbfStatus::Sat {
            return Ok(SatTwin {
                formula: twin,
                attempts: attempt + 1,
                flipped: (ci, li),
            });
        }
    }
    Err(GenError::NoSatFlip)
}

/// An UNSAT formula and its SAT twin.
#[derive(Debug, Clone)]
pub struct Pair {
    pub unsat: QbfFormula,
    pub sat: QbfFormula,
    /// Seed the UNSAT formula was generated from.
    pub formula_seed: u64,
    pub flip_attempts: usize,
    pub resamples: usize,
}

/// Generates a pair, resampling the UNSAT formula when no flip works.
pub fn generate_pair(spec: &GenSpec, pair_seed: u64) -> Result<Pair, GenError> {
    for resample in 0..MAX_PAIR_RESAMPLES {
        let formula_seed = derive_seed(pair_seed, 2 * resample as u64);
        let unsat = generate_unsat(&spec.with_seed(formula_seed))?;
        match make_sat_twin(&unsat, derive_seed(pair_seed, 2 * resample as u64 + 1)) {
            Ok(twin) => {
                return Ok(Pair {
                    unsat,
                    sat: twin.formula,
                    formula_seed,
                    flip_attempts: twin.attempts,
                    resamples: resample,
                })
            }
            Err(GenError::NoSatFlip) => {
                log::debug!("pair seed {pair_seed}: no SAT flip, resampling");
                continue;
            }
            Err(e) => return Err(e),
        }
    }
    Err(GenError::PairResamples(pair_seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLabel {
    pub assignment: Assignment,
    pub hardness: f64,
    pub maxsat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterLabel {
    pub assignment: Assignment,
    pub core: f64,
    pub maxsat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterLabels {
    pub rows: Vec<CounterLabel>,
    /// Indices (into `rows`) of the counterexamples in the core.
    pub core: Vec<usize>,
    /// Witness-blocking rounds (UNSAT instances only).
    pub blocking_rounds: usize,
}

fn block_assignments(f: &QbfFormula, block: Block) -> Result<Vec<Assignment>, GenError> {
    let width = f.block_vars(block).len();
    if width > MAX_LABEL_BLOCK {
        return Err(GenError::BlockTooLarge(width));
    }
    Ok((0..1u64 << width)
        .map(|i| Assignment::from_index(block, width, i))
        .collect())
}

/// Hardness and MaxSAT scores for every ∀-assignment, in index order
/// (bit `i` of the index is the `i`-th universal).
pub fn label_candidates(f: &QbfFormula) -> Result<Vec<CandidateLabel>, GenError> {
    let all = block_assignments(f, Block::Universal)?;
    let counts: Vec<usize> = all.iter().map(|a| f.satisfied_clause_count(a)).collect();
    let maxsat = score_candidates_maxsat(&counts)?;
    all.into_iter()
        .zip(maxsat)
        .map(|(assignment, maxsat)| {
            let hardness = score_hardness(reduced_model_count(f, &assignment)?);
            Ok(CandidateLabel {
                assignment,
                hardness,
                maxsat,
            })
        })
        .collect()
}

/// Core-based and MaxSAT scores for every ∃-assignment.
///
/// Each assignment contributes its constraint group. For SAT formulas the
/// groups are jointly unsatisfiable as they stand; for UNSAT formulas the
/// surviving witnesses are blocked one by one (as background clauses) first.
pub fn label_counterexamples(f: &QbfFormula, label: QbfStatus) -> Result<CounterLabels, GenError> {
    let all = block_assignments(f, Block::Existential)?;
    let mut store = ConstraintStore::new(f);
    for y in &all {
        let group = derive_constraint(f, y, &mut store)?;
        store.push(group);
    }
    let omega = store.omega();

    let mut background = CnfFormula::new(store.num_vars(), Vec::new());
    let mut blocking_rounds = 0;
    match label {
        QbfStatus::Sat => {
            if !store.is_contradictory() && sat::solve(&omega, 0).is_sat() {
                return Err(GenError::LabelMismatch(
                    "SAT formula, but some candidate survives every counterexample".into(),
                ));
            }
        }
        QbfStatus::Unsat => {
            let limit = (1usize << f.universals().len()) + 1;
            let witnesses = if store.is_contradictory() {
                Vec::new()
            } else {
                sat::enumerate(&omega, f.universals(), limit, 0)?
            };
            if witnesses.is_empty() {
                return Err(GenError::LabelMismatch(
                    "UNSAT formula, but no candidate survives every counterexample".into(),
                ));
            }
            for w in &witnesses {
                let block: Vec<Literal> = f
                    .universals()
                    .iter()
                    .zip(w)
                    .map(|(&v, &val)| Literal::new(v, val))
                    .collect();
                background.clauses.push(Clause::new(block).expect("distinct variables"));
            }
            blocking_rounds = witnesses.len();
        }
    }

    let core = sat::extract_core(store.groups(), &background)?;
    let counts: Vec<usize> = all.iter().map(|a| f.satisfied_clause_count(a)).collect();
    let scores = score_counterexamples_core(&core, &counts)?;
    let maxsat = crate::ranking::score_counterexamples_maxsat(&counts)?;
    let rows = all
        .into_iter()
        .zip(scores.into_iter().zip(maxsat))
        .map(|(assignment, (core, maxsat))| CounterLabel {
            assignment,
            core,
            maxsat,
        })
        .collect();
    Ok(CounterLabels {
        rows,
        core,
        blocking_rounds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub formula: QbfFormula,
    pub label: QbfStatus,
    pub candidates: Vec<CandidateLabel>,
    pub counters: CounterLabels,
}

pub fn label_instance(f: &QbfFormula, label: QbfStatus) -> Result<LabeledInstance, GenError> {
    Ok(LabeledInstance {
        formula: f.clone(),
        label,
        candidates: label_candidates(f)?,
        counters: label_counterexamples(f, label)?,
    })
}

/// On-disk label schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub label: QbfStatus,
    /// `[bits, hardness, maxsat]`
    pub candidates: Vec<(String, f64, f64)>,
    /// `[bits, core, maxsat]`
    pub counters: Vec<(String, f64, f64)>,
}

impl From<&LabeledInstance> for LabelFile {
    fn from(inst: &LabeledInstance) -> Self {
        LabelFile {
            label: inst.label,
            candidates: inst
                .candidates
                .iter()
                .map(|c| (c.assignment.to_bits(), c.hardness, c.maxsat))
                .collect(),
            counters: inst
                .counters
                .rows
                .iter()
                .map(|c| (c.assignment.to_bits(), c.core, c.maxsat))
                .collect(),
        }
    }
}

/// Instance counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_unsat: usize,
    pub train_sat: usize,
    pub test_unsat: usize,
    pub test_sat: usize,
}

impl SplitCounts {
    /// 1000/1000 training and 600/600 test formulas.
    pub const FULL: SplitCounts = SplitCounts {
        train_unsat: 1000,
        train_sat: 1000,
        test_unsat: 600,
        test_sat: 600,
    };
}

pub const SPLIT_NAMES: [&str; 4] = ["TrainU", "TrainS", "TestU", "TestS"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: String,
    /// Index of the UNSAT/SAT pair within its partition.
    pub pair: usize,
    pub pair_seed: u64,
    pub formula_seed: u64,
    pub flip_attempts: usize,
    pub resamples: usize,
}

impl InstanceEntry {
    pub fn formula_file(&self) -> String {
        format!("{}.qdimacs", self.id)
    }

    pub fn label_file(&self) -> String {
        format!("{}.labels.json", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub name: String,
    pub label: QbfStatus,
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: GenSpec,
    pub counts: SplitCounts,
    pub splits: Vec<SplitEntry>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Manifest, GenError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|source| GenError::Json { path, source })
    }

    pub fn split(&self, name: &str) -> Option<&SplitEntry> {
        self.splits.iter().find(|s| s.name.eq_ignore_ascii_case(name))
    }
}

fn pair_seed(seed: u64, partition: u64, index: usize) -> u64 {
    derive_seed(derive_seed(seed, partition), index as u64)
}

/// Writes `NNNN.qdimacs` files and `manifest.json` (and label files when
/// `with_labels`). Pair `i` of a partition yields `TrainU[i]`/`TrainS[i]`
/// (or `TestU[i]`/`TestS[i]`), so equal counts give twin-aligned splits.
pub fn emit_dataset(
    dir: impl AsRef<Path>,
    counts: SplitCounts,
    spec: GenSpec,
    seed: u64,
    with_labels: bool,
) -> Result<Manifest, GenError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let spec = spec.with_seed(seed);
    let partitions = [
        (counts.train_unsat, counts.train_sat),
        (counts.test_unsat, counts.test_sat),
    ];
    let total: usize = partitions.iter().map(|&(u, s)| u + s).sum();
    let width = total.saturating_sub(1).to_string().len().max(4);

    let mut splits = Vec::new();
    let mut next_id = 0usize;
    for (partition, &(n_unsat, n_sat)) in partitions.iter().enumerate() {
        let n_pairs = n_unsat.max(n_sat);
        let pairs: Vec<(u64, Pair)> = (0..n_pairs)
            .into_par_iter()
            .map(|i| {
                let ps = pair_seed(seed, partition as u64, i);
                generate_pair(&spec, ps).map(|p| (ps, p))
            })
            .collect::<Result<_, _>>()?;
        for (offset, (status, n)) in [(QbfStatus::Unsat, n_unsat), (QbfStatus::Sat, n_sat)]
            .into_iter()
            .enumerate()
        {
            let mut instances = Vec::with_capacity(n);
            for (i, (ps, pair)) in pairs.iter().take(n).enumerate() {
                let id = format!("{next_id:0width$}");
                next_id += 1;
                let formula = match status {
                    QbfStatus::Unsat => &pair.unsat,
                    QbfStatus::Sat => &pair.sat,
                };
                fs::write(dir.join(format!("{id}.qdimacs")), formula.to_qdimacs_string())?;
                instances.push(InstanceEntry {
                    id,
                    pair: i,
                    pair_seed: *ps,
                    formula_seed: pair.formula_seed,
                    flip_attempts: pair.flip_attempts,
                    resamples: pair.resamples,
                });
            }
            splits.push(SplitEntry {
                name: SPLIT_NAMES[2 * partition + offset].to_string(),
                label: status,
                instances,
            });
        }
    }
    let manifest = Manifest {
        seed,
        spec,
        counts,
        splits,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    if with_labels {
        label_dataset(dir)?;
    }
    Ok(manifest)
}

pub fn read_formula(path: impl AsRef<Path>) -> Result<QbfFormula, GenError> {
    Ok(QbfFormula::parse_qdimacs(fs::File::open(path)?)?)
}

/// (Re)computes `NNNN.labels.json` for every instance in the manifest.
pub fn label_dataset(dir: impl AsRef<Path>) -> Result<usize, GenError> {
    let dir = dir.as_ref();
    let manifest = Manifest::load(dir)?;
    let jobs: Vec<(&InstanceEntry, QbfStatus)> = manifest
        .splits
        .iter()
        .flat_map(|s| s.instances.iter().map(move |i| (i, s.label)))
        .collect();
    jobs.par_iter().try_for_each(|&(entry, label)| -> Result<(), GenError> {
        let f = read_formula(dir.join(entry.formula_file()))?;
        let inst = label_instance(&f, label)?;
        let text = serde_json::to_string(&LabelFile::from(&inst)).expect("labels serialize");
        fs::write(dir.join(entry.label_file()), text + "\n")?;
        Ok(())
    })?;
    Ok(jobs.len())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelFile, GenError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| GenError::Json {
        path: path.to_path_buf(),
        source,
    })
}
