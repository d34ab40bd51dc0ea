//! 2QBF formulas in prenex CNF: `∀X ∃Y. φ`.
//!
//! Variables keep the numbering of the QDIMACS file they came from. Clauses
//! keep their literal order; set-like comparisons ignore it.

use std::fmt;
use std::io::{self, Read, Write};
use std::ops::Not;

use thiserror::Error;

/// 1-based variable index, global across both quantifier blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(u32);

impl VarId {
    /// Panics on zero; DIMACS variables start at 1.
    pub fn new(index: u32) -> VarId {
        assert!(index > 0, "variable indices are 1-based");
        VarId(index)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based position, for indexing dense per-variable tables.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn positive(self) -> Literal {
        Literal::new(self, false)
    }

    pub fn negative(self) -> Literal {
        Literal::new(self, true)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    var: VarId,
    negated: bool,
}

impl Literal {
    pub fn new(var: VarId, negated: bool) -> Literal {
        Literal { var, negated }
    }

    /// Parses a nonzero DIMACS integer.
    pub fn from_dimacs(value: i64) -> Option<Literal> {
        if value == 0 || value.unsigned_abs() > u32::MAX as u64 {
            return None;
        }
        Some(Literal::new(
            VarId::new(value.unsigned_abs() as u32),
            value < 0,
        ))
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var.get() as i64;
        if self.negated {
            -v
        } else {
            v
        }
    }

    pub fn var(self) -> VarId {
        self.var
    }

    pub fn is_negated(self) -> bool {
        self.negated
    }

    /// Truth value of the literal when its variable takes `value`.
    pub fn eval(self, value: bool) -> bool {
        value != self.negated
    }
}

impl Not for Literal {
    type Output = Literal;

    fn not(self) -> Literal {
        Literal::new(self.var, !self.negated)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClauseError {
    #[error("empty clause")]
    Empty,
    #[error("duplicate literal {0}")]
    Duplicate(Literal),
    #[error("tautological clause (contains {0} and its negation)")]
    Tautology(Literal),
}

/// A non-empty disjunction of literals with no duplicates and no
/// complementary pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: Vec<Literal>) -> Result<Clause, ClauseError> {
        if literals.is_empty() {
            return Err(ClauseError::Empty);
        }
        for (i, &l) in literals.iter().enumerate() {
            for &m in &literals[..i] {
                if m == l {
                    return Err(ClauseError::Duplicate(l));
                }
                if m == !l {
                    return Err(ClauseError::Tautology(m));
                }
            }
        }
        Ok(Clause { literals })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    /// Order-insensitive key for duplicate detection.
    pub fn sorted_key(&self) -> Vec<Literal> {
        let mut key = self.literals.clone();
        key.sort_unstable();
        key
    }

    pub fn same_literals(&self, other: &Clause) -> bool {
        self.sorted_key() == other.sorted_key()
    }
}

/// A quantifier block of a 2QBF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Universal,
    Existential,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Universal => f.write_str("universal"),
            Block::Existential => f.write_str("existential"),
        }
    }
}

/// A total assignment over one quantifier block. `values[i]` belongs to the
/// `i`-th variable of the block in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    block: Block,
    values: Vec<bool>,
}

impl Assignment {
    pub fn new(block: Block, values: Vec<bool>) -> Assignment {
        Assignment { block, values }
    }

    /// Assignment number `index` of a block with `width` variables: bit `i`
    /// of `index` is the value of variable `i`.
    pub fn from_index(block: Block, width: usize, index: u64) -> Assignment {
        let values = (0..width).map(|i| (index >> i) & 1 == 1).collect();
        Assignment { block, values }
    }

    pub fn from_bits(block: Block, bits: &str) -> Option<Assignment> {
        let values = bits
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Assignment { block, values })
    }

    pub fn block(&self) -> Block {
        self.block
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 0/1 string in block variable order.
    pub fn to_bits(&self) -> String {
        self.values.iter().map(|&v| if v { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bits())
    }
}

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: variable {var} out of range 1..={max}")]
    VarOutOfRange { line: usize, var: i64, max: u32 },
    #[error("line {line}: quantifier prefix must be one ∀ block followed by one ∃ block")]
    QuantifierOrder { line: usize },
    #[error("variable {0} is quantified twice")]
    DoubleQuantified(VarId),
    #[error("variable {0} is not quantified")]
    Unquantified(VarId),
    #[error("clause {index}: {source}")]
    Clause {
        index: usize,
        #[source]
        source: ClauseError,
    },
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCount { declared: usize, found: usize },
    #[error("clause {index} violates the ({forall},{exists}) literal spec")]
    Spec {
        index: usize,
        forall: usize,
        exists: usize,
    },
    #[error("{expected} assignment expected, got {got}")]
    BlockMismatch { expected: Block, got: Block },
    #[error("assignment covers {got} variables, block has {expected}")]
    AssignmentWidth { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A CNF without quantifier prefix. Variables `1..=num_vars` may occur.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CnfFormula {
    pub num_vars: u32,
    pub clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(num_vars: u32, clauses: Vec<Clause>) -> CnfFormula {
        debug_assert!(clauses
            .iter()
            .all(|c| c.literals().iter().all(|l| l.var().get() <= num_vars)));
        CnfFormula { num_vars, clauses }
    }

    /// Evaluates under a full model indexed by `VarId::index`.
    pub fn is_satisfied_by(&self, model: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.literals().iter().any(|l| l.eval(model[l.var().index()])))
    }
}

/// Result of substituting a candidate into the matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reduced {
    Cnf(CnfFormula),
    /// Some clause lost all of its literals.
    TriviallyUnsat,
}

/// `∀X ∃Y. φ` with a CNF matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QbfFormula {
    num_vars: u32,
    universals: Vec<VarId>,
    existentials: Vec<VarId>,
    clauses: Vec<Clause>,
    /// Block and in-block position of each variable, by `VarId::index`.
    position: Vec<Option<(Block, usize)>>,
}

impl QbfFormula {
    pub fn new(
        num_vars: u32,
        universals: Vec<VarId>,
        existentials: Vec<VarId>,
        clauses: Vec<Clause>,
    ) -> Result<QbfFormula, FormulaError> {
        let mut position = vec![None; num_vars as usize];
        for (block, vars) in [
            (Block::Universal, &universals),
            (Block::Existential, &existentials),
        ] {
            for (i, &v) in vars.iter().enumerate() {
                let slot = position
                    .get_mut(v.index())
                    .ok_or(FormulaError::VarOutOfRange {
                        line: 0,
                        var: v.get() as i64,
                        max: num_vars,
                    })?;
                if slot.is_some() {
                    return Err(FormulaError::DoubleQuantified(v));
                }
                *slot = Some((block, i));
            }
        }
        for c in &clauses {
            for l in c.literals() {
                match position.get(l.var().index()) {
                    None => {
                        return Err(FormulaError::VarOutOfRange {
                            line: 0,
                            var: l.var().get() as i64,
                            max: num_vars,
                        })
                    }
                    Some(None) => return Err(FormulaError::Unquantified(l.var())),
                    Some(Some(_)) => {}
                }
            }
        }
        Ok(QbfFormula {
            num_vars,
            universals,
            existentials,
            clauses,
            position,
        })
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn universals(&self) -> &[VarId] {
        &self.universals
    }

    pub fn existentials(&self) -> &[VarId] {
        &self.existentials
    }

    pub fn block_vars(&self, block: Block) -> &[VarId] {
        match block {
            Block::Universal => &self.universals,
            Block::Existential => &self.existentials,
        }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Block and position within the block.
    pub fn position(&self, var: VarId) -> Option<(Block, usize)> {
        self.position.get(var.index()).copied().flatten()
    }

    pub fn block_of(&self, var: VarId) -> Option<Block> {
        self.position(var).map(|(b, _)| b)
    }

    /// Checks that every clause has exactly `forall` universal and `exists`
    /// existential literals.
    pub fn check_spec(&self, forall: usize, exists: usize) -> Result<(), FormulaError> {
        for (index, c) in self.clauses.iter().enumerate() {
            let n_forall = c
                .literals()
                .iter()
                .filter(|l| self.block_of(l.var()) == Some(Block::Universal))
                .count();
            if n_forall != forall || c.len() - n_forall != exists {
                return Err(FormulaError::Spec {
                    index,
                    forall,
                    exists,
                });
            }
        }
        Ok(())
    }

    /// Same prefix, new matrix.
    pub fn with_clauses(&self, clauses: Vec<Clause>) -> Result<QbfFormula, FormulaError> {
        QbfFormula::new(
            self.num_vars,
            self.universals.clone(),
            self.existentials.clone(),
            clauses,
        )
    }

    fn check_assignment(&self, a: &Assignment, expected: Block) -> Result<(), FormulaError> {
        if a.block() != expected {
            return Err(FormulaError::BlockMismatch {
                expected,
                got: a.block(),
            });
        }
        let width = self.block_vars(expected).len();
        if a.len() != width {
            return Err(FormulaError::AssignmentWidth {
                expected: width,
                got: a.len(),
            });
        }
        Ok(())
    }

    /// Value of `lit` under `a`, or `None` if `lit` belongs to the other block.
    pub fn literal_value(&self, lit: Literal, a: &Assignment) -> Option<bool> {
        match self.position(lit.var()) {
            Some((block, i)) if block == a.block() => Some(lit.eval(a.values()[i])),
            _ => None,
        }
    }

    /// Whether some literal of `clause` from `a`'s block is made true by `a`.
    pub fn clause_satisfied_by(&self, clause: &Clause, a: &Assignment) -> bool {
        clause
            .literals()
            .iter()
            .any(|&l| self.literal_value(l, a) == Some(true))
    }

    /// `φ[X → cand]`: drops satisfied clauses and falsified universal literals.
    pub fn reduce_by_universal(&self, cand: &Assignment) -> Result<Reduced, FormulaError> {
        self.check_assignment(cand, Block::Universal)?;
        let mut clauses = Vec::with_capacity(self.clauses.len());
        for c in &self.clauses {
            if self.clause_satisfied_by(c, cand) {
                continue;
            }
            let rest: Vec<Literal> = c
                .literals()
                .iter()
                .copied()
                .filter(|&l| self.literal_value(l, cand).is_none())
                .collect();
            if rest.is_empty() {
                return Ok(Reduced::TriviallyUnsat);
            }
            // Sub-list of a valid clause, so still valid.
            clauses.push(Clause { literals: rest });
        }
        Ok(Reduced::Cnf(CnfFormula::new(self.num_vars, clauses)))
    }

    /// Number of clauses with a literal of `a`'s block made true by `a`.
    pub fn satisfied_clause_count(&self, a: &Assignment) -> usize {
        self.clauses
            .iter()
            .filter(|c| self.clause_satisfied_by(c, a))
            .count()
    }

    /// Evaluates the matrix under a candidate and a counterexample together.
    pub fn eval_matrix(&self, forall: &Assignment, exists: &Assignment) -> bool {
        self.clauses.iter().all(|c| {
            self.clause_satisfied_by(c, forall) || self.clause_satisfied_by(c, exists)
        })
    }

    pub fn parse_qdimacs<R: Read>(mut reader: R) -> Result<QbfFormula, FormulaError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        parse_qdimacs_str(&text)
    }

    pub fn write_qdimacs<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        for (tag, vars) in [("a", &self.universals), ("e", &self.existentials)] {
            write!(out, "{tag}")?;
            for v in vars {
                write!(out, " {v}")?;
            }
            writeln!(out, " 0")?;
        }
        for c in &self.clauses {
            for l in c.literals() {
                write!(out, "{l} ")?;
            }
            writeln!(out, "0")?;
        }
        Ok(())
    }

    pub fn to_qdimacs_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_qdimacs(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("ASCII output")
    }
}

impl std::str::FromStr for QbfFormula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_qdimacs_str(s)
    }
}

fn parse_qdimacs_str(text: &str) -> Result<QbfFormula, FormulaError> {
    #[derive(PartialEq)]
    enum Stage {
        Header,
        Forall,
        Exists,
        Matrix,
    }

    let mut stage = Stage::Header;
    let mut num_vars = 0u32;
    let mut declared_clauses = 0usize;
    let mut universals = Vec::new();
    let mut existentials = Vec::new();
    let mut clauses = Vec::new();
    let mut pending: Vec<Literal> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let first = tokens.next().expect("non-empty line");
        match first {
            "p" => {
                if stage != Stage::Header {
                    return Err(FormulaError::Header {
                        line,
                        msg: "duplicate problem line".into(),
                    });
                }
                let fields: Vec<&str> = tokens.collect();
                if fields.len() != 3 || fields[0] != "cnf" {
                    return Err(FormulaError::Header {
                        line,
                        msg: "expected `p cnf <vars> <clauses>`".into(),
                    });
                }
                num_vars = fields[1].parse().map_err(|_| FormulaError::Header {
                    line,
                    msg: format!("bad variable count `{}`", fields[1]),
                })?;
                declared_clauses = fields[2].parse().map_err(|_| FormulaError::Header {
                    line,
                    msg: format!("bad clause count `{}`", fields[2]),
                })?;
                stage = Stage::Forall;
            }
            "a" | "e" => {
                let (target, next) = match (&stage, first) {
                    (Stage::Forall, "a") => (&mut universals, Stage::Exists),
                    (Stage::Exists, "e") => (&mut existentials, Stage::Matrix),
                    (Stage::Header, _) => {
                        return Err(FormulaError::Header {
                            line,
                            msg: "quantifier line before problem line".into(),
                        })
                    }
                    _ => return Err(FormulaError::QuantifierOrder { line }),
                };
                let mut terminated = false;
                for tok in tokens {
                    if terminated {
                        return Err(FormulaError::Syntax {
                            line,
                            msg: "tokens after terminating 0".into(),
                        });
                    }
                    let v = parse_int(tok, line)?;
                    if v == 0 {
                        terminated = true;
                    } else if v < 0 || v > num_vars as i64 {
                        return Err(FormulaError::VarOutOfRange {
                            line,
                            var: v,
                            max: num_vars,
                        });
                    } else {
                        target.push(VarId::new(v as u32));
                    }
                }
                if !terminated {
                    return Err(FormulaError::Syntax {
                        line,
                        msg: "quantifier line not terminated by 0".into(),
                    });
                }
                stage = next;
            }
            _ => {
                match stage {
                    Stage::Header => {
                        return Err(FormulaError::Header {
                            line,
                            msg: "clause before problem line".into(),
                        })
                    }
                    Stage::Forall | Stage::Exists => {
                        return Err(FormulaError::QuantifierOrder { line })
                    }
                    Stage::Matrix => {}
                }
                for tok in std::iter::once(first).chain(tokens) {
                    let v = parse_int(tok, line)?;
                    if v == 0 {
                        let index = clauses.len();
                        let clause = Clause::new(std::mem::take(&mut pending))
                            .map_err(|source| FormulaError::Clause { index, source })?;
                        clauses.push(clause);
                    } else if v.unsigned_abs() > num_vars as u64 {
                        return Err(FormulaError::VarOutOfRange {
                            line,
                            var: v,
                            max: num_vars,
                        });
                    } else {
                        pending.push(Literal::from_dimacs(v).expect("nonzero"));
                    }
                }
            }
        }
    }

    match stage {
        Stage::Header => {
            return Err(FormulaError::Header {
                line: 0,
                msg: "missing problem line".into(),
            })
        }
        Stage::Forall | Stage::Exists => return Err(FormulaError::QuantifierOrder { line: 0 }),
        Stage::Matrix => {}
    }
    if !pending.is_empty() {
        return Err(FormulaError::Syntax {
            line: 0,
            msg: "last clause not terminated by 0".into(),
        });
    }
    if clauses.len() != declared_clauses {
        return Err(FormulaError::ClauseCount {
            declared: declared_clauses,
            found: clauses.len(),
        });
    }
    QbfFormula::new(num_vars, universals, existentials, clauses)
}

fn parse_int(tok: &str, line: usize) -> Result<i64, FormulaError> {
    tok.parse().map_err(|_| FormulaError::Syntax {
        line,
        msg: format!("expected integer, got `{tok}`"),
    })
}
