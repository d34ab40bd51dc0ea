//! Independent oracles for integration tests: bitmask evaluation of CNFs
//! and 2QBFs, and a line-by-line transcription of the score listings.

#![allow(dead_code)]

use qbfrank::cegar::QbfStatus;
use qbfrank::formula::{Assignment, Block, Clause, CnfFormula, Literal, QbfFormula, VarId};
use rand::seq::SliceRandom;
use rand::Rng;

/// `(positive mask, negative mask)` per clause, bit `v - 1` for variable `v`.
pub fn masks(clauses: &[Clause]) -> Vec<(u64, u64)> {
    clauses
        .iter()
        .map(|c| {
            c.literals().iter().fold((0, 0), |(p, n), l| {
                let bit = 1u64 << (l.var().get() - 1);
                if l.is_negated() {
                    (p, n | bit)
                } else {
                    (p | bit, n)
                }
            })
        })
        .collect()
}

/// Whether some literal over the `domain` variables is made true by `a`.
fn clause_true(mask: (u64, u64), a: u64, domain: u64) -> bool {
    (mask.0 & a & domain) != 0 || (mask.1 & !a & domain) != 0
}

fn domain(vars: &[VarId]) -> u64 {
    vars.iter().fold(0, |acc, v| acc | 1u64 << v.index())
}

fn spread(vars: &[VarId], index: u64) -> u64 {
    vars.iter()
        .enumerate()
        .filter(|(i, _)| (index >> i) & 1 == 1)
        .fold(0, |acc, (_, v)| acc | 1u64 << v.index())
}

/// Number of assignments to `vars` that extend to a model; all other
/// variables must not occur in `f`.
pub fn truth_table_count(f: &CnfFormula, vars: &[VarId]) -> u64 {
    let m = masks(&f.clauses);
    (0..1u64 << vars.len())
        .filter(|&i| {
            let a = spread(vars, i);
            m.iter().all(|&c| clause_true(c, a, u64::MAX))
        })
        .count() as u64
}

/// Whether `f` has a model, by enumerating every assignment.
pub fn truth_table_sat(f: &CnfFormula) -> bool {
    let vars: Vec<VarId> = (1..=f.num_vars).map(VarId::new).collect();
    truth_table_count(f, &vars) > 0
}

/// Brute-force 2QBF evaluation: status and every witness index.
pub fn brute_force(f: &QbfFormula) -> (QbfStatus, Vec<u64>) {
    let m = masks(f.clauses());
    let xs = f.universals();
    let ys = f.existentials();
    let mut witnesses = Vec::new();
    for xi in 0..1u64 << xs.len() {
        let xa = spread(xs, xi);
        let open: Vec<(u64, u64)> = m
            .iter()
            .copied()
            .filter(|&c| !clause_true(c, xa, domain(xs)))
            .collect();
        let refuted = (0..1u64 << ys.len()).any(|yi| {
            let a = xa | spread(ys, yi);
            open.iter().all(|&c| clause_true(c, a, u64::MAX))
        });
        if !refuted {
            witnesses.push(xi);
        }
    }
    let status = if witnesses.is_empty() {
        QbfStatus::Sat
    } else {
        QbfStatus::Unsat
    };
    (status, witnesses)
}

pub fn assignment_index(a: &Assignment) -> u64 {
    a.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .fold(0, |acc, (i, _)| acc | 1 << i)
}

/// Random clause over `vars` with `k` distinct variables.
pub fn random_clause<R: Rng>(rng: &mut R, vars: &[VarId], k: usize) -> Clause {
    let lits = vars
        .choose_multiple(rng, k)
        .map(|&v| Literal::new(v, rng.gen()))
        .collect();
    Clause::new(lits).unwrap()
}

/// Random 2QBF: `nx` universals, `ny` existentials, `m` clauses of 1–4
/// literals.
pub fn random_qbf<R: Rng>(rng: &mut R, nx: usize, ny: usize, m: usize) -> QbfFormula {
    let xs: Vec<VarId> = (1..=nx as u32).map(VarId::new).collect();
    let ys: Vec<VarId> = (nx as u32 + 1..=(nx + ny) as u32).map(VarId::new).collect();
    let all: Vec<VarId> = xs.iter().chain(&ys).copied().collect();
    let clauses = (0..m)
        .map(|_| {
            let k = rng.gen_range(1..=4.min(all.len()));
            random_clause(rng, &all, k)
        })
        .collect();
    QbfFormula::new((nx + ny) as u32, xs, ys, clauses).unwrap()
}

/// Random 2QBF with the generator's clause shape.
pub fn random_shaped_qbf<R: Rng>(
    rng: &mut R,
    nx: usize,
    ny: usize,
    m: usize,
    kx: usize,
    ky: usize,
) -> QbfFormula {
    let xs: Vec<VarId> = (1..=nx as u32).map(VarId::new).collect();
    let ys: Vec<VarId> = (nx as u32 + 1..=(nx + ny) as u32).map(VarId::new).collect();
    let clauses = (0..m)
        .map(|_| {
            let mut lits = random_clause(rng, &xs, kx).literals().to_vec();
            lits.extend(random_clause(rng, &ys, ky).literals());
            Clause::new(lits).unwrap()
        })
        .collect();
    QbfFormula::new((nx + ny) as u32, xs, ys, clauses).unwrap()
}

pub fn block_assignment(f: &QbfFormula, block: Block, index: u64) -> Assignment {
    Assignment::from_index(block, f.block_vars(block).len(), index)
}

// Transcription of the score listings (Python semantics: ints stay ints
// until the float branch of the hardness function).

pub fn listing_n_model_2_ranking_score(n_models: i64) -> f64 {
    if n_models <= 3 {
        return 10.0 - n_models as f64;
    }
    if n_models <= 5 {
        return 6.0;
    }
    if n_models <= 8 {
        return 5.0;
    }
    if n_models <= 12 {
        return 4.0;
    }
    if n_models <= 16 {
        return 3.0;
    }
    if n_models <= 21 {
        return 2.0;
    }
    1.0
}

pub fn listing_n_clauses_2_ranking_score(n_clauses_list: &[i64]) -> Vec<f64> {
    let n_clauses_min = *n_clauses_list.iter().min().unwrap();
    n_clauses_list
        .iter()
        .map(|&n_clauses| 1.max(10 - n_clauses + n_clauses_min) as f64)
        .collect()
}

pub fn listing_unsat_core_2_ranking_score(core_index: &[usize], n_clauses_list: &[i64]) -> Vec<f64> {
    let n_clauses_max = *n_clauses_list.iter().max().unwrap();
    let mut scores: Vec<i64> = n_clauses_list
        .iter()
        .map(|&n_clauses| 1.max(8 - n_clauses_max + n_clauses))
        .collect();
    for &i in core_index {
        scores[i] = 10;
    }
    scores.into_iter().map(|s| s as f64).collect()
}

pub fn listing_n_clauses_2_ranking_score_counter(n_clauses_list: &[i64]) -> Vec<f64> {
    let n_clauses_max = *n_clauses_list.iter().max().unwrap();
    n_clauses_list
        .iter()
        .map(|&n_clauses| 1.max(10 - n_clauses_max + n_clauses) as f64)
        .collect()
}

/// Every list of length 1..=`max_len` with entries in `0..=max_entry`.
pub fn all_lists(max_len: usize, max_entry: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for list in &frontier {
            for e in 0..=max_entry {
                let mut l: Vec<i64> = list.clone();
                l.push(e);
                next.push(l);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every subset of `0..n` as a sorted index list.
pub fn all_subsets(n: usize) -> Vec<Vec<usize>> {
    (0..1u32 << n)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}
