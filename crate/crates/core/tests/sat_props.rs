mod support;

use proptest::prelude::*;
use qbfrank::formula::{Clause, CnfFormula, VarId};
use qbfrank::sat::{self, ClauseGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cnf(seed: u64, max_vars: u32, max_clauses: usize) -> CnfFormula {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_vars);
    let vars: Vec<VarId> = (1..=n).map(VarId::new).collect();
    let m = rng.gen_range(0..=max_clauses);
    let clauses = (0..m)
        .map(|_| {
            let k = rng.gen_range(1..=3.min(n as usize));
            support::random_clause(&mut rng, &vars, k)
        })
        .collect();
    CnfFormula::new(n, clauses)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn solve_matches_truth_table(seed in any::<u64>(), solver_seed in 0u64..4) {
        let f = random_cnf(seed, 16, 70);
        let result = sat::solve(&f, solver_seed);
        prop_assert_eq!(result.is_sat(), support::truth_table_sat(&f));
        if let Some(model) = result.model() {
            prop_assert!(f.is_satisfied_by(model));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn enumerate_is_bounded_count(seed in any::<u64>(), limit in 1usize..40, k in 1usize..8) {
        let f = random_cnf(seed, 10, 25);
        let k = k.min(f.num_vars as usize);
        let projection: Vec<VarId> = (1..=k as u32).map(VarId::new).collect();
        let models = sat::enumerate(&f, &projection, limit, 0).unwrap();
        let count = sat::count_models(&f, &projection).unwrap();
        prop_assert_eq!(models.len() as u64, (limit as u64).min(count));
        let mut seen = models.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), models.len());
        for m in &models {
            // Fixing the projection must leave the formula satisfiable.
            let mut clauses = f.clauses.clone();
            for (v, &val) in projection.iter().zip(m) {
                clauses.push(Clause::new(vec![qbfrank::formula::Literal::new(*v, !val)]).unwrap());
            }
            prop_assert!(support::truth_table_sat(&CnfFormula::new(f.num_vars, clauses)));
        }
    }

    #[test]
    fn full_projection_count_matches_truth_table(seed in any::<u64>()) {
        let f = random_cnf(seed, 12, 30);
        let all: Vec<VarId> = (1..=f.num_vars).map(VarId::new).collect();
        prop_assert_eq!(sat::count_models(&f, &all).unwrap(), support::truth_table_count(&f, &all));
    }

    #[test]
    fn cores_are_minimal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars: Vec<VarId> = (1..=6).map(VarId::new).collect();
        let n_groups = rng.gen_range(1..12);
        let mut groups: Vec<ClauseGroup> = (0..n_groups)
            .map(|id| {
                let clauses = (0..rng.gen_range(1..4))
                    .map(|_| {
                        let k = rng.gen_range(1..=2);
                        support::random_clause(&mut rng, &vars, k)
                    })
                    .collect();
                ClauseGroup::new(id, clauses)
            })
            .collect();
        let union = |gs: &[&ClauseGroup]| {
            CnfFormula::new(6, gs.iter().flat_map(|g| g.clauses.clone()).collect())
        };
        let all: Vec<&ClauseGroup> = groups.iter().collect();
        if support::truth_table_sat(&union(&all)) {
            // Force unsatisfiability with a complementary pair of units.
            groups.push(ClauseGroup::new(n_groups, vec![Clause::new(vec![vars[0].positive()]).unwrap()]));
            groups.push(ClauseGroup::new(n_groups + 1, vec![Clause::new(vec![vars[0].negative()]).unwrap()]));
        }
        let core = sat::extract_core(&groups, &CnfFormula::new(6, vec![])).unwrap();
        prop_assert!(core.windows(2).all(|w| w[0] < w[1]));
        let pick = |ids: &[usize]| -> Vec<&ClauseGroup> {
            groups.iter().filter(|g| ids.contains(&g.id)).collect()
        };
        prop_assert!(!support::truth_table_sat(&union(&pick(&core))));
        for skip in &core {
            let rest: Vec<usize> = core.iter().copied().filter(|i| i != skip).collect();
            prop_assert!(support::truth_table_sat(&union(&pick(&rest))));
        }
    }

    #[test]
    fn seeded_solving_is_deterministic(seed in any::<u64>(), solver_seed in any::<u64>()) {
        let f = random_cnf(seed, 16, 60);
        prop_assert_eq!(sat::solve(&f, solver_seed), sat::solve(&f, solver_seed));
        let projection: Vec<VarId> = (1..=f.num_vars.min(6)).map(VarId::new).collect();
        prop_assert_eq!(
            sat::enumerate(&f, &projection, 20, solver_seed).unwrap(),
            sat::enumerate(&f, &projection, 20, solver_seed).unwrap()
        );
    }
}
