//! The CEGAR 2QBF loop.
//!
//! Candidates (∀-assignments) come from the constraint store ω; each
//! refuting counterexample (∃-assignment) adds one constraint group that
//! excludes every candidate it refutes. An unrefutable candidate is a
//! witness of UNSAT; an exhausted ω means SAT.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{
    Assignment, Block, Clause, CnfFormula, FormulaError, Literal, QbfFormula, Reduced, VarId,
};
use crate::ranking::{BoundRanker, RankError, Ranker, Side};
use crate::sat::{self, ClauseGroup, SatError};

pub const DEFAULT_N_MAX: usize = 10;

#[derive(Debug, Error)]
pub enum CegarError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("n_max must be at least 1")]
    ZeroNmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QbfStatus {
    Sat,
    Unsat,
}

impl std::fmt::Display for QbfStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QbfStatus::Sat => "sat",
            QbfStatus::Unsat => "unsat",
        })
    }
}

/// ω: CNF over the universal variables plus Tseitin auxiliaries, one group
/// per refuted counterexample.
#[derive(Debug, Clone)]
pub struct ConstraintStore {
    groups: Vec<ClauseGroup>,
    next_aux: u32,
}

impl ConstraintStore {
    pub fn new(f: &QbfFormula) -> ConstraintStore {
        ConstraintStore {
            groups: Vec::new(),
            next_aux: f.num_vars() + 1,
        }
    }

    pub fn groups(&self) -> &[ClauseGroup] {
        &self.groups
    }

    /// Highest variable index in use, auxiliaries included.
    pub fn num_vars(&self) -> u32 {
        self.next_aux - 1
    }

    fn fresh_aux(&mut self) -> VarId {
        let v = VarId::new(self.next_aux);
        self.next_aux += 1;
        v
    }

    pub fn push(&mut self, group: ClauseGroup) {
        self.groups.push(group);
    }

    /// Some group excludes every candidate.
    pub fn is_contradictory(&self) -> bool {
        self.groups.iter().any(|g| g.falsum)
    }

    pub fn omega(&self) -> CnfFormula {
        CnfFormula::new(
            self.num_vars(),
            self.groups
                .iter()
                .flat_map(|g| g.clauses.iter().cloned())
                .collect(),
        )
    }
}

/// Builds the constraint "no candidate may satisfy, through its universal
/// literals, every clause that `counter` leaves unsatisfied".
///
/// The group gets id `store.groups().len()`; auxiliaries come from `store`
/// but the group is not added to it.
pub fn derive_constraint(
    f: &QbfFormula,
    counter: &Assignment,
    store: &mut ConstraintStore,
) -> Result<ClauseGroup, CegarError> {
    if counter.block() != Block::Existential {
        return Err(FormulaError::BlockMismatch {
            expected: Block::Existential,
            got: counter.block(),
        }
        .into());
    }
    if counter.len() != f.existentials().len() {
        return Err(FormulaError::AssignmentWidth {
            expected: f.existentials().len(),
            got: counter.len(),
        }
        .into());
    }
    let id = store.groups.len();

    // Universal parts of the clauses the counterexample does not satisfy.
    let mut parts: Vec<Vec<Literal>> = Vec::new();
    for c in f.clauses() {
        if f.clause_satisfied_by(c, counter) {
            continue;
        }
        let mut part: Vec<Literal> = c
            .literals()
            .iter()
            .copied()
            .filter(|&l| f.block_of(l.var()) == Some(Block::Universal))
            .collect();
        if part.is_empty() {
            // No candidate can rescue this clause: nothing is refuted.
            return Ok(ClauseGroup::new(id, Vec::new()));
        }
        part.sort_unstable();
        if !parts.contains(&part) {
            parts.push(part);
        }
    }
    if parts.is_empty() {
        return Ok(ClauseGroup::falsum(id));
    }

    let unit = |l: Literal| Clause::new(vec![l]).expect("unit clause");
    if let [only] = parts.as_slice() {
        let clauses = only.iter().map(|&l| unit(!l)).collect();
        return Ok(ClauseGroup::new(id, clauses));
    }

    let mut clauses = Vec::new();
    let mut top: Vec<Literal> = Vec::with_capacity(parts.len());
    for part in &parts {
        let lit = if let [l] = part.as_slice() {
            !*l
        } else {
            // aux ↔ all literals of the part are false
            let aux = store.fresh_aux();
            for &l in part {
                clauses.push(Clause::new(vec![aux.negative(), !l]).expect("binary clause"));
            }
            let mut back = vec![aux.positive()];
            back.extend_from_slice(part);
            clauses.push(Clause::new(back).expect("distinct literals"));
            aux.positive()
        };
        if top.contains(&!lit) {
            return Ok(ClauseGroup::new(id, Vec::new()));
        }
        if !top.contains(&lit) {
            top.push(lit);
        }
    }
    clauses.push(Clause::new(top).expect("checked for duplicates and complements"));
    Ok(ClauseGroup::new(id, clauses))
}

/// One pass through the loop body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round {
    /// `None` in the final round of a SAT run.
    pub candidate: Option<Assignment>,
    /// `None` when the candidate is a witness.
    pub counter: Option<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CegarResult {
    pub status: QbfStatus,
    pub witness: Option<Assignment>,
    pub iterations: usize,
    pub trace: Vec<Round>,
}

#[derive(Debug, Clone, Copy)]
pub struct CegarOptions {
    pub n_max: usize,
    pub seed: u64,
}

impl Default for CegarOptions {
    fn default() -> Self {
        CegarOptions {
            n_max: DEFAULT_N_MAX,
            seed: 0,
        }
    }
}

/// Seed for one SAT call. Seed 0 keeps the deterministic decision order.
fn call_seed(seed: u64, round: usize, side: u64) -> u64 {
    if seed == 0 {
        return 0;
    }
    let mut z = seed
        .wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(side.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)).max(1)
}

/// Picks one model of `cnf` projected on `block`: the first found, or the
/// ranker's best of up to `n_max`.
fn select(
    f: &QbfFormula,
    cnf: &CnfFormula,
    block: Block,
    ranker: Option<&mut Box<dyn BoundRanker + '_>>,
    n_max: usize,
    seed: u64,
) -> Result<Option<Assignment>, CegarError> {
    let vars = f.block_vars(block);
    match ranker {
        None => Ok(sat::solve(cnf, seed).model().map(|m| {
            Assignment::new(block, vars.iter().map(|v| m[v.index()]).collect())
        })),
        Some(ranker) => {
            let batch: Vec<Assignment> = sat::enumerate(cnf, vars, n_max, seed)?
                .into_iter()
                .map(|values| Assignment::new(block, values))
                .collect();
            if batch.is_empty() {
                return Ok(None);
            }
            let scores = ranker.score(&batch)?;
            let best = scores.argmax().unwrap_or(0);
            Ok(batch.into_iter().nth(best))
        }
    }
}

/// The plain loop: first-found candidate and counterexample every round.
pub fn solve_basic(f: &QbfFormula, seed: u64) -> Result<CegarResult, CegarError> {
    solve_ranked(
        f,
        None,
        None,
        CegarOptions {
            n_max: DEFAULT_N_MAX,
            seed,
        },
    )
}

/// The loop with optional rankers choosing among up to `n_max` enumerated
/// candidates / counterexamples per round. Rankers only change the path;
/// the answer is the same as [`solve_basic`]'s.
pub fn solve_ranked(
    f: &QbfFormula,
    cand_ranker: Option<&dyn Ranker>,
    counter_ranker: Option<&dyn Ranker>,
    options: CegarOptions,
) -> Result<CegarResult, CegarError> {
    if options.n_max == 0 {
        return Err(CegarError::ZeroNmax);
    }
    let mut cand_bound = cand_ranker
        .map(|r| r.bind(f, Side::Candidate))
        .transpose()?;
    let mut counter_bound = counter_ranker
        .map(|r| r.bind(f, Side::Counterexample))
        .transpose()?;

    let mut store = ConstraintStore::new(f);
    let mut trace = Vec::new();
    loop {
        let round = trace.len();
        debug_assert!(
            f.universals().len() >= 63 || round as u64 <= (1u64 << f.universals().len()) + 1,
            "a refuted candidate came back"
        );
        let candidate = if store.is_contradictory() {
            None
        } else {
            select(
                f,
                &store.omega(),
                Block::Universal,
                cand_bound.as_mut(),
                options.n_max,
                call_seed(options.seed, round, 1),
            )?
        };
        let Some(candidate) = candidate else {
            trace.push(Round {
                candidate: None,
                counter: None,
            });
            return Ok(CegarResult {
                status: QbfStatus::Sat,
                witness: None,
                iterations: trace.len(),
                trace,
            });
        };

        let counter = match f.reduce_by_universal(&candidate)? {
            Reduced::TriviallyUnsat => None,
            Reduced::Cnf(reduced) => select(
                f,
                &reduced,
                Block::Existential,
                counter_bound.as_mut(),
                options.n_max,
                call_seed(options.seed, round, 2),
            )?,
        };
        let Some(counter) = counter else {
            trace.push(Round {
                candidate: Some(candidate.clone()),
                counter: None,
            });
            return Ok(CegarResult {
                status: QbfStatus::Unsat,
                witness: Some(candidate),
                iterations: trace.len(),
                trace,
            });
        };

        let group = derive_constraint(f, &counter, &mut store)?;
        store.push(group);
        trace.push(Round {
            candidate: Some(candidate),
            counter: Some(counter),
        });
    }
}

/// Whether `w` is a witness of UNSAT: its reduction has no model.
pub fn verify_witness(f: &QbfFormula, w: &Assignment) -> Result<bool, CegarError> {
    Ok(match f.reduce_by_universal(w)? {
        Reduced::TriviallyUnsat => true,
        Reduced::Cnf(reduced) => !sat::solve(&reduced, 0).is_sat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> QbfFormula {
        s.parse().unwrap()
    }

    fn example() -> QbfFormula {
        parse("p cnf 3 2\na 1 2 0\ne 3 0\n1 3 0\n2 -3 0\n")
    }

    fn lit(v: i64) -> Literal {
        Literal::from_dimacs(v).unwrap()
    }

    fn y(bits: &str) -> Assignment {
        Assignment::from_bits(Block::Existential, bits).unwrap()
    }

    fn x(bits: &str) -> Assignment {
        Assignment::from_bits(Block::Universal, bits).unwrap()
    }

    #[test]
    fn constraint_from_single_remaining_clause() {
        let f = example();
        let mut store = ConstraintStore::new(&f);
        let g = derive_constraint(&f, &y("0"), &mut store).unwrap();
        assert_eq!(g.clauses, vec![Clause::new(vec![lit(-1)]).unwrap()]);
        assert!(!g.falsum);
    }

    #[test]
    fn constraint_when_counter_satisfies_everything() {
        let f = parse("p cnf 3 1\na 1 2 0\ne 3 0\n1 3 0\n");
        let mut store = ConstraintStore::new(&f);
        let g = derive_constraint(&f, &y("1"), &mut store).unwrap();
        assert!(g.falsum);
    }

    #[test]
    fn constraint_single_clause_two_units() {
        let f = parse("p cnf 3 1\na 1 2 0\ne 3 0\n1 2 3 0\n");
        let mut store = ConstraintStore::new(&f);
        let g = derive_constraint(&f, &y("0"), &mut store).unwrap();
        assert_eq!(
            g.clauses,
            vec![
                Clause::new(vec![lit(-1)]).unwrap(),
                Clause::new(vec![lit(-2)]).unwrap()
            ]
        );
        assert_eq!(store.num_vars(), 3);
    }

    #[test]
    fn constraint_uses_auxiliaries_above_formula_vars() {
        let f = parse("p cnf 5 2\na 1 2 3 0\ne 4 5 0\n1 2 4 0\n-3 2 5 0\n");
        let mut store = ConstraintStore::new(&f);
        let g = derive_constraint(&f, &y("00"), &mut store).unwrap();
        assert_eq!(store.num_vars(), 7);
        assert_eq!(g.clauses.last().unwrap().literals(), &[lit(6), lit(7)]);
    }

    #[test]
    fn constraint_rejects_universal_counter() {
        let f = example();
        let mut store = ConstraintStore::new(&f);
        assert!(derive_constraint(&f, &x("00"), &mut store).is_err());
    }

    #[test]
    fn solves_intro_example() {
        let f = example();
        let r = solve_basic(&f, 0).unwrap();
        assert_eq!(r.status, QbfStatus::Unsat);
        assert_eq!(r.witness, Some(x("00")));
        assert_eq!(r.iterations, r.trace.len());
        assert!(verify_witness(&f, &x("00")).unwrap());
        assert!(!verify_witness(&f, &x("11")).unwrap());
    }

    #[test]
    fn empty_matrix_is_sat_in_two_rounds() {
        let f = parse("p cnf 2 0\na 1 0\ne 2 0\n");
        let r = solve_basic(&f, 0).unwrap();
        assert_eq!(r.status, QbfStatus::Sat);
        assert_eq!(r.iterations, 2);
        assert!(!verify_witness(&f, &x("0")).unwrap());
        assert!(!verify_witness(&f, &x("1")).unwrap());
    }

    #[test]
    fn zero_n_max_rejected() {
        let f = example();
        let opts = CegarOptions { n_max: 0, seed: 0 };
        assert!(matches!(
            solve_ranked(&f, None, None, opts),
            Err(CegarError::ZeroNmax)
        ));
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let f = parse("p cnf 6 4\na 1 2 3 0\ne 4 5 6 0\n1 2 4 0\n-1 3 -4 5 0\n-2 -3 6 0\n1 -5 -6 0\n");
        for seed in [0, 3, 17] {
            let a = solve_basic(&f, seed).unwrap();
            let b = solve_basic(&f, seed).unwrap();
            assert_eq!(a, b);
        }
    }
}
