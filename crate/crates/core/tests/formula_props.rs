mod support;

use proptest::prelude::*;
use qbfrank::formula::{Assignment, Block, Literal, QbfFormula, Reduced, VarId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_qbf(max_x: usize, max_y: usize, max_m: usize) -> impl Strategy<Value = QbfFormula> {
    (0..=max_x, 1..=max_y, 0..=max_m, any::<u64>()).prop_map(|(nx, ny, m, seed)| {
        support::random_qbf(&mut ChaCha8Rng::seed_from_u64(seed), nx, ny, m)
    })
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(f in arb_qbf(8, 10, 40)) {
        let text = f.to_qdimacs_string();
        let back: QbfFormula = text.parse().unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_qdimacs_string(), text);
    }

    #[test]
    fn reduction_models_are_joint_models(f in arb_qbf(6, 8, 30), xi in any::<u64>()) {
        let nx = f.universals().len();
        let ny = f.existentials().len();
        let cand = Assignment::from_index(Block::Universal, nx, xi & ((1 << nx) - 1));
        let reduced = f.reduce_by_universal(&cand).unwrap();
        for yi in 0..1u64 << ny {
            let y = Assignment::from_index(Block::Existential, ny, yi);
            let joint = f.eval_matrix(&cand, &y);
            let via_reduction = match &reduced {
                Reduced::TriviallyUnsat => false,
                Reduced::Cnf(cnf) => {
                    let mut model = vec![false; f.num_vars() as usize];
                    for (v, &val) in f.existentials().iter().zip(y.values()) {
                        model[v.index()] = val;
                    }
                    cnf.is_satisfied_by(&model)
                }
            };
            prop_assert_eq!(joint, via_reduction);
        }
    }

    #[test]
    fn satisfied_plus_surviving_is_all(f in arb_qbf(8, 10, 40), xi in any::<u64>()) {
        let nx = f.universals().len();
        let cand = Assignment::from_index(Block::Universal, nx, xi & ((1 << nx) - 1));
        let sat = f.satisfied_clause_count(&cand);
        match f.reduce_by_universal(&cand).unwrap() {
            Reduced::Cnf(cnf) => prop_assert_eq!(sat + cnf.clauses.len(), f.clauses().len()),
            // Some clause lost all its literals, so it survives but is not listed.
            Reduced::TriviallyUnsat => prop_assert!(sat < f.clauses().len()),
        }
    }

    #[test]
    fn negation_is_an_involution(v in 1u32..1000, neg in any::<bool>()) {
        let l = Literal::new(VarId::new(v), neg);
        prop_assert_eq!(!!l, l);
        prop_assert_ne!(!l, l);
        prop_assert_eq!(Literal::from_dimacs(l.to_dimacs()), Some(l));
    }
}

#[test]
fn full_size_header() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = support::random_shaped_qbf(&mut rng, 8, 10, 160, 2, 3);
    let text = f.to_qdimacs_string();
    assert_eq!(text.lines().next(), Some("p cnf 18 160"));
    assert!(f.check_spec(2, 3).is_ok());
}
