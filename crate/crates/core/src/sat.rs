//! A small CDCL SAT engine plus the services the CEGAR loop needs on top of
//! it: bounded projected enumeration, exact projected model counting and
//! group-level unsat-core extraction.
//!
//! Decisions follow a fixed variable order (ascending index, phase false
//! first) unless a nonzero seed asks for a shuffled order with random initial
//! phases. Either way the result is a pure function of the input and seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::formula::{Clause, CnfFormula, Literal, VarId};

/// Largest projection `count_models` will enumerate.
pub const MAX_COUNT_PROJECTION: usize = 26;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SatError {
    #[error("enumeration limit must be at least 1")]
    ZeroLimit,
    #[error("projection has {0} variables, at most {MAX_COUNT_PROJECTION} supported")]
    ProjectionTooLarge(usize),
    #[error("core extraction needs an unsatisfiable input")]
    Satisfiable,
    #[error("clause group id {0} used twice")]
    DuplicateGroup(usize),
}

/// Internal literal code: `2 * var_index + negated`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Lit(u32);

impl Lit {
    fn from_literal(l: Literal) -> Lit {
        Lit(2 * l.var().index() as u32 + l.is_negated() as u32)
    }

    fn to_literal(self) -> Literal {
        Literal::new(VarId::new(self.var() as u32 + 1), self.negated())
    }

    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    fn negated(self) -> bool {
        self.0 & 1 == 1
    }

    fn code(self) -> usize {
        self.0 as usize
    }

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    True,
    False,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    /// Total model indexed by `VarId::index`.
    Sat(Vec<bool>),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn model(&self) -> Option<&[bool]> {
        match self {
            SatResult::Sat(m) => Some(m),
            SatResult::Unsat => None,
        }
    }
}

/// Outcome of a solve under assumptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssumptionOutcome {
    Sat,
    /// Subset of the assumptions that already conflicts with the clauses.
    Unsat(Vec<Literal>),
}

/// Incremental CDCL solver. Clauses may be added between solves.
#[derive(Debug, Clone)]
pub struct Solver {
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<usize>>,
    values: Vec<Value>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    phase: Vec<bool>,
    seen: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    /// Decision order and each variable's position in it.
    order: Vec<usize>,
    order_pos: Vec<usize>,
    next_decision: usize,
    rng: Option<ChaCha8Rng>,
    ok: bool,
}

impl Solver {
    pub fn new(num_vars: usize, seed: u64) -> Solver {
        let mut s = Solver {
            clauses: Vec::new(),
            watches: Vec::new(),
            values: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            phase: Vec::new(),
            seen: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            order: Vec::new(),
            order_pos: Vec::new(),
            next_decision: 0,
            rng: (seed != 0).then(|| ChaCha8Rng::seed_from_u64(seed)),
            ok: true,
        };
        s.ensure_vars(num_vars);
        if let Some(rng) = s.rng.as_mut() {
            s.order.shuffle(rng);
            for (pos, &v) in s.order.iter().enumerate() {
                s.order_pos[v] = pos;
            }
        }
        s
    }

    pub fn from_cnf(f: &CnfFormula, seed: u64) -> Solver {
        let mut s = Solver::new(f.num_vars as usize, seed);
        for c in &f.clauses {
            s.add_clause(c.literals());
        }
        s
    }

    pub fn num_vars(&self) -> usize {
        self.values.len()
    }

    /// Grows the variable table; new variables go to the end of the order.
    pub fn ensure_vars(&mut self, n: usize) {
        while self.values.len() < n {
            let v = self.values.len();
            self.values.push(Value::Unassigned);
            self.level.push(0);
            self.reason.push(None);
            let phase = match self.rng.as_mut() {
                Some(rng) => rng.gen(),
                None => false,
            };
            self.phase.push(phase);
            self.seen.push(false);
            self.watches.push(Vec::new());
            self.watches.push(Vec::new());
            self.order_pos.push(self.order.len());
            self.order.push(v);
        }
    }

    /// Adds a clause at decision level 0. Returns `false` once the clause
    /// set is known to be unsatisfiable.
    pub fn add_clause(&mut self, literals: &[Literal]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let max_var = literals.iter().map(|l| l.var().get() as usize).max().unwrap_or(0);
        self.ensure_vars(max_var);

        let mut order: Vec<Lit> = Vec::with_capacity(literals.len());
        for &l in literals {
            let l = Lit::from_literal(l);
            if order.contains(&l) {
                continue;
            }
            if order.contains(&l.not()) {
                return true; // tautology
            }
            match self.value(l) {
                Value::True => return true,
                Value::False => {}
                Value::Unassigned => order.push(l),
            }
        }
        match order.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(order[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(order);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>) -> usize {
        let idx = self.clauses.len();
        self.watches[lits[0].code()].push(idx);
        self.watches[lits[1].code()].push(idx);
        self.clauses.push(lits);
        idx
    }

    fn value(&self, l: Lit) -> Value {
        match self.values[l.var()] {
            Value::Unassigned => Value::Unassigned,
            Value::True if l.negated() => Value::False,
            Value::False if l.negated() => Value::True,
            v => v,
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, l: Lit, reason: Option<usize>) {
        debug_assert_eq!(self.value(l), Value::Unassigned);
        let v = l.var();
        self.values[v] = if l.negated() { Value::False } else { Value::True };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn cancel_until(&mut self, level: usize) {
        if self.decision_level() <= level {
            return;
        }
        let keep = self.trail_lim[level];
        for i in (keep..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var();
            self.phase[v] = !l.negated();
            self.values[v] = Value::Unassigned;
            self.reason[v] = None;
            self.next_decision = self.next_decision.min(self.order_pos[v]);
        }
        self.trail.truncate(keep);
        self.trail_lim.truncate(level);
        self.qhead = keep;
    }

    /// Unit propagation; returns the index of a conflicting clause.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p.not();
            let mut ws = std::mem::take(&mut self.watches[false_lit.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let ci = ws[i];
                i += 1;
                if self.clauses[ci][0] == false_lit {
                    self.clauses[ci].swap(0, 1);
                }
                let first = self.clauses[ci][0];
                if self.value(first) == Value::True {
                    ws[j] = ci;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..self.clauses[ci].len() {
                    let cand = self.clauses[ci][k];
                    if self.value(cand) != Value::False {
                        self.clauses[ci].swap(1, k);
                        self.watches[cand.code()].push(ci);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = ci;
                j += 1;
                if self.value(first) == Value::False {
                    conflict = Some(ci);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        i += 1;
                        j += 1;
                    }
                } else {
                    self.enqueue(first, Some(ci));
                }
            }
            ws.truncate(j);
            self.watches[false_lit.code()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first, highest remaining level second) and the backjump level.
    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, usize) {
        let current = self.decision_level() as u32;
        let mut learnt = vec![Lit(0)];
        let mut pending = 0usize;
        let mut idx = self.trail.len();
        let mut asserting: Option<Lit> = None;
        loop {
            let start = usize::from(asserting.is_some());
            for k in start..self.clauses[confl].len() {
                let q = self.clauses[confl][k];
                let v = q.var();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    if self.level[v] == current {
                        pending += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var()] {
                    break;
                }
            }
            let p = self.trail[idx];
            self.seen[p.var()] = false;
            pending -= 1;
            asserting = Some(p);
            if pending == 0 {
                break;
            }
            confl = self.reason[p.var()].expect("implied literal has a reason");
        }
        learnt[0] = asserting.expect("conflict at level > 0").not();
        for l in &learnt[1..] {
            self.seen[l.var()] = false;
        }
        let mut backjump = 0;
        if learnt.len() > 1 {
            let mut best = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var()] > self.level[learnt[best].var()] {
                    best = k;
                }
            }
            learnt.swap(1, best);
            backjump = self.level[learnt[1].var()] as usize;
        }
        (learnt, backjump)
    }

    /// Assumptions responsible for `p` being true, plus `p`'s own assumption.
    fn analyze_final(&mut self, failed: Lit) -> Vec<Literal> {
        let mut core = vec![failed.to_literal()];
        if self.decision_level() == 0 {
            return core;
        }
        let p = failed.not();
        self.seen[p.var()] = true;
        for i in (self.trail_lim[0]..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var();
            if !self.seen[v] {
                continue;
            }
            match self.reason[v] {
                None => {
                    if l != failed {
                        core.push(l.to_literal());
                    }
                }
                Some(ci) => {
                    for k in 1..self.clauses[ci].len() {
                        let q = self.clauses[ci][k];
                        if self.level[q.var()] > 0 {
                            self.seen[q.var()] = true;
                        }
                    }
                }
            }
            self.seen[v] = false;
        }
        self.seen[p.var()] = false;
        core
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while self.next_decision < self.order.len() {
            let v = self.order[self.next_decision];
            if self.values[v] == Value::Unassigned {
                return Some(Lit(2 * v as u32 + u32::from(!self.phase[v])));
            }
            self.next_decision += 1;
        }
        None
    }

    pub fn solve(&mut self) -> bool {
        matches!(self.solve_with_assumptions(&[]), AssumptionOutcome::Sat)
    }

    pub fn solve_with_assumptions(&mut self, assumptions: &[Literal]) -> AssumptionOutcome {
        if !self.ok {
            return AssumptionOutcome::Unsat(Vec::new());
        }
        let max_var = assumptions.iter().map(|l| l.var().get() as usize).max().unwrap_or(0);
        self.ensure_vars(max_var);
        let assumptions: Vec<Lit> = assumptions.iter().map(|&l| Lit::from_literal(l)).collect();
        self.cancel_until(0);
        self.next_decision = 0;
        loop {
            if let Some(confl) = self.propagate() {
                if self.decision_level() == 0 {
                    self.ok = false;
                    return AssumptionOutcome::Unsat(Vec::new());
                }
                let (learnt, backjump) = self.analyze(confl);
                self.cancel_until(backjump);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let ci = self.attach(learnt);
                    self.enqueue(asserting, Some(ci));
                }
                continue;
            }
            let mut next = None;
            while self.decision_level() < assumptions.len() {
                let a = assumptions[self.decision_level()];
                match self.value(a) {
                    Value::True => self.trail_lim.push(self.trail.len()),
                    Value::False => {
                        let core = self.analyze_final(a);
                        self.cancel_until(0);
                        return AssumptionOutcome::Unsat(core);
                    }
                    Value::Unassigned => {
                        next = Some(a);
                        break;
                    }
                }
            }
            let decision = match next.or_else(|| self.pick_branch()) {
                Some(l) => l,
                None => return AssumptionOutcome::Sat,
            };
            self.trail_lim.push(self.trail.len());
            self.enqueue(decision, None);
        }
    }

    /// Model of the last successful solve, indexed by `VarId::index`.
    pub fn model(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v == Value::True).collect()
    }

    pub fn value_of(&self, var: VarId) -> Option<bool> {
        match self.values.get(var.index())? {
            Value::True => Some(true),
            Value::False => Some(false),
            Value::Unassigned => None,
        }
    }
}

pub fn solve(f: &CnfFormula, seed: u64) -> SatResult {
    let mut s = Solver::from_cnf(f, seed);
    if s.solve() {
        let mut model = s.model();
        model.truncate(f.num_vars as usize);
        SatResult::Sat(model)
    } else {
        SatResult::Unsat
    }
}

/// Up to `limit` models of `f`, pairwise distinct on `projection`. Each
/// returned vector holds the projection's values in `projection` order.
pub fn enumerate(
    f: &CnfFormula,
    projection: &[VarId],
    limit: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>, SatError> {
    if limit == 0 {
        return Err(SatError::ZeroLimit);
    }
    let mut s = Solver::from_cnf(f, seed);
    s.ensure_vars(projection.iter().map(|v| v.get() as usize).max().unwrap_or(0));
    let mut models = Vec::new();
    while models.len() < limit && s.solve() {
        let projected: Vec<bool> = projection
            .iter()
            .map(|&v| s.value_of(v).unwrap_or(false))
            .collect();
        let blocking: Vec<Literal> = projection
            .iter()
            .zip(&projected)
            .map(|(&v, &val)| Literal::new(v, val))
            .collect();
        models.push(projected);
        if !s.add_clause(&blocking) {
            break;
        }
    }
    Ok(models)
}

/// Exact number of assignments to `projection` that extend to a model of `f`.
pub fn count_models(f: &CnfFormula, projection: &[VarId]) -> Result<u64, SatError> {
    if projection.len() > MAX_COUNT_PROJECTION {
        return Err(SatError::ProjectionTooLarge(projection.len()));
    }
    let max_var = f
        .num_vars
        .max(projection.iter().map(|v| v.get()).max().unwrap_or(0)) as usize;
    let mut slot = vec![usize::MAX; max_var];
    for (i, v) in projection.iter().enumerate() {
        slot[v.index()] = i;
    }
    // Clauses entirely over the projection are checked as soon as their
    // highest projection variable is assigned; the rest need a SAT call per
    // leaf.
    let mut buckets: Vec<Vec<Vec<(usize, bool)>>> = vec![Vec::new(); projection.len()];
    let mut needs_sat = false;
    for c in &f.clauses {
        let mapped: Option<Vec<(usize, bool)>> = c
            .literals()
            .iter()
            .map(|l| {
                let s = slot[l.var().index()];
                (s != usize::MAX).then_some((s, l.is_negated()))
            })
            .collect();
        match mapped {
            Some(lits) => {
                let top = lits.iter().map(|&(s, _)| s).max().expect("non-empty clause");
                buckets[top].push(lits);
            }
            None => needs_sat = true,
        }
    }
    let mut leaf_solver = needs_sat.then(|| Solver::from_cnf(f, 0));
    let mut values = vec![false; projection.len()];
    Ok(count_rec(0, &mut values, &buckets, projection, &mut leaf_solver))
}

fn count_rec(
    depth: usize,
    values: &mut [bool],
    buckets: &[Vec<Vec<(usize, bool)>>],
    projection: &[VarId],
    leaf_solver: &mut Option<Solver>,
) -> u64 {
    if depth == values.len() {
        return match leaf_solver {
            None => 1,
            Some(s) => {
                let assumptions: Vec<Literal> = projection
                    .iter()
                    .zip(values.iter())
                    .map(|(&v, &val)| Literal::new(v, !val))
                    .collect();
                u64::from(s.solve_with_assumptions(&assumptions) == AssumptionOutcome::Sat)
            }
        };
    }
    let mut total = 0;
    for val in [false, true] {
        values[depth] = val;
        let consistent = buckets[depth]
            .iter()
            .all(|c| c.iter().any(|&(s, neg)| values[s] != neg));
        if consistent {
            total += count_rec(depth + 1, values, buckets, projection, leaf_solver);
        }
    }
    total
}

/// A named set of clauses, the unit of core extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseGroup {
    pub id: usize,
    pub clauses: Vec<Clause>,
    /// The group also contains the empty clause.
    pub falsum: bool,
}

impl ClauseGroup {
    pub fn new(id: usize, clauses: Vec<Clause>) -> ClauseGroup {
        ClauseGroup {
            id,
            clauses,
            falsum: false,
        }
    }

    pub fn falsum(id: usize) -> ClauseGroup {
        ClauseGroup {
            id,
            clauses: Vec::new(),
            falsum: true,
        }
    }

    pub fn max_var(&self) -> u32 {
        self.clauses
            .iter()
            .flat_map(|c| c.literals())
            .map(|l| l.var().get())
            .max()
            .unwrap_or(0)
    }
}

/// Deletion-minimal set of group ids that is unsatisfiable together with
/// `background`. Candidates are tried for deletion in ascending id order;
/// every unsatisfiable check shrinks the working set to the core reported
/// by the solver.
pub fn extract_core(groups: &[ClauseGroup], background: &CnfFormula) -> Result<Vec<usize>, SatError> {
    let mut sorted: Vec<&ClauseGroup> = groups.iter().collect();
    sorted.sort_by_key(|g| g.id);
    for w in sorted.windows(2) {
        if w[0].id == w[1].id {
            return Err(SatError::DuplicateGroup(w[0].id));
        }
    }
    let base_vars = sorted
        .iter()
        .map(|g| g.max_var())
        .max()
        .unwrap_or(0)
        .max(background.num_vars);

    let mut solver = Solver::from_cnf(background, 0);
    solver.ensure_vars(base_vars as usize + sorted.len());
    let selector = |pos: usize| VarId::new(base_vars + 1 + pos as u32);
    for (pos, g) in sorted.iter().enumerate() {
        let guard = selector(pos).negative();
        if g.falsum {
            solver.add_clause(&[guard]);
        }
        for c in &g.clauses {
            let mut lits = Vec::with_capacity(c.len() + 1);
            lits.push(guard);
            lits.extend_from_slice(c.literals());
            solver.add_clause(&lits);
        }
    }

    let selector_pos = |l: Literal| (l.var().get() - base_vars - 1) as usize;
    let check = |solver: &mut Solver, members: &[usize]| -> Option<Vec<usize>> {
        let assumptions: Vec<Literal> = members.iter().map(|&p| selector(p).positive()).collect();
        match solver.solve_with_assumptions(&assumptions) {
            AssumptionOutcome::Sat => None,
            AssumptionOutcome::Unsat(core) => {
                let mut found: Vec<usize> = core.into_iter().map(selector_pos).collect();
                found.sort_unstable();
                Some(found)
            }
        }
    };

    let all: Vec<usize> = (0..sorted.len()).collect();
    let mut working = check(&mut solver, &all).ok_or(SatError::Satisfiable)?;
    let mut i = 0;
    while i < working.len() {
        let trial: Vec<usize> = working
            .iter()
            .copied()
            .filter(|&p| p != working[i])
            .collect();
        match check(&mut solver, &trial) {
            None => i += 1,
            Some(core) => {
                // Groups before `i` are necessary for a superset, hence for
                // every unsatisfiable subset, so they survive the shrink.
                working = core;
            }
        }
    }
    Ok(working.into_iter().map(|p| sorted[p].id).collect())
}
