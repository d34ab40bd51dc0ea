mod support;

use proptest::prelude::*;
use qbfrank::formula::{Clause, Literal, QbfFormula, VarId};
use qbfrank::gnn::{self, ClauseEmbedding, EmbeddingState, GraphEncoding, WeightBundle};
use qbfrank::ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f32 = 1e-5;

fn max_diff(a: &Array2<f32>, b: &Array2<f32>) -> f32 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn select_rows(m: &Array2<f32>, rows: &[usize]) -> Array2<f32> {
    m.select(Axis(0), rows)
}

/// Literal rows `[v…, ¬v…]` of a block after `perm` (new position `i`
/// holds old variable `perm[i]`).
fn literal_rows(perm: &[usize]) -> Vec<usize> {
    let n = perm.len();
    perm.iter().copied().chain(perm.iter().map(|&p| n + p)).collect()
}

fn clause_states(state: &EmbeddingState) -> Vec<&Array2<f32>> {
    match &state.clause {
        ClauseEmbedding::Single(s) => vec![&s.h],
        ClauseEmbedding::Dual { to_forall, to_exists } => vec![&to_forall.h, &to_exists.h],
    }
}

fn embed(f: &QbfFormula, bundle: &WeightBundle, iters: usize) -> EmbeddingState {
    gnn::run_embedding(&GraphEncoding::encode(f), bundle, iters).unwrap()
}

fn setup(seed: u64, arch: u32) -> (ChaCha8Rng, QbfFormula, WeightBundle) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.gen_range(2..6);
    let ny = rng.gen_range(3..7);
    let m = rng.gen_range(4..20);
    let f = support::random_shaped_qbf(&mut rng, nx, ny, m, 2, 3);
    let bundle = WeightBundle::random(arch, 8, 6, seed ^ 0x5eed).unwrap();
    (rng, f, bundle)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clause_order_does_not_matter(seed in any::<u64>(), arch in 1u32..=7, iters in 1usize..5) {
        let (mut rng, f, bundle) = setup(seed, arch);
        let mut order: Vec<usize> = (0..f.clauses().len()).collect();
        order.shuffle(&mut rng);
        let permuted = f.with_clauses(order.iter().map(|&i| f.clauses()[i].clone()).collect()).unwrap();
        let a = embed(&f, &bundle, iters);
        let b = embed(&permuted, &bundle, iters);
        prop_assert!(max_diff(a.emb_forall(), b.emb_forall()) < TOL);
        prop_assert!(max_diff(a.emb_exists(), b.emb_exists()) < TOL);
        for (ca, cb) in clause_states(&a).into_iter().zip(clause_states(&b)) {
            prop_assert!(max_diff(&select_rows(ca, &order), cb) < TOL);
        }
    }

    #[test]
    fn variable_renaming_permutes_rows(seed in any::<u64>(), arch in 1u32..=7, iters in 1usize..5) {
        let (mut rng, f, bundle) = setup(seed, arch);
        let mut px: Vec<usize> = (0..f.universals().len()).collect();
        let mut py: Vec<usize> = (0..f.existentials().len()).collect();
        px.shuffle(&mut rng);
        py.shuffle(&mut rng);
        let renamed = QbfFormula::new(
            f.num_vars(),
            px.iter().map(|&i| f.universals()[i]).collect(),
            py.iter().map(|&i| f.existentials()[i]).collect(),
            f.clauses().to_vec(),
        )
        .unwrap();
        let a = embed(&f, &bundle, iters);
        let b = embed(&renamed, &bundle, iters);
        prop_assert!(max_diff(&select_rows(a.emb_forall(), &literal_rows(&px)), b.emb_forall()) < TOL);
        prop_assert!(max_diff(&select_rows(a.emb_exists(), &literal_rows(&py)), b.emb_exists()) < TOL);
        for (ca, cb) in clause_states(&a).into_iter().zip(clause_states(&b)) {
            prop_assert!(max_diff(ca, cb) < TOL);
        }

        let vote_a = gnn::head_vote(&a, &bundle).unwrap();
        let vote_b = gnn::head_vote(&b, &bundle).unwrap();
        prop_assert!((vote_a - vote_b).abs() < TOL);
        let wit_a = gnn::head_witness(&a, &bundle).unwrap();
        let wit_b = gnn::head_witness(&b, &bundle).unwrap();
        prop_assert!(max_diff(&select_rows(&wit_a, &px), &wit_b) < TOL);

        let nx = px.len();
        let cands = Array2::from_shape_fn((1 << nx, nx), |(r, c)| ((r >> c) & 1) as f32);
        let permuted_cols = cands.select(Axis(1), &px);
        let sa = gnn::head_score_forall(&a, &bundle, cands.view()).unwrap();
        let sb = gnn::head_score_forall(&b, &bundle, permuted_cols.view()).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!((x - y).abs() < TOL * (1.0 + x.abs()));
        }
    }

    #[test]
    fn negating_a_variable_swaps_its_literal_rows(seed in any::<u64>(), arch in 1u32..=7, iters in 1usize..5) {
        let (mut rng, f, bundle) = setup(seed, arch);
        let flipped: Vec<VarId> = f
            .universals()
            .iter()
            .chain(f.existentials())
            .copied()
            .filter(|_| rng.gen())
            .collect();
        let clauses: Vec<Clause> = f
            .clauses()
            .iter()
            .map(|c| {
                let lits: Vec<Literal> = c
                    .literals()
                    .iter()
                    .map(|&l| if flipped.contains(&l.var()) { !l } else { l })
                    .collect();
                Clause::new(lits).unwrap()
            })
            .collect();
        let g = f.with_clauses(clauses).unwrap();
        let swap = |vars: &[VarId]| -> Vec<usize> {
            let n = vars.len();
            (0..2 * n)
                .map(|r| if flipped.contains(&vars[r % n]) { (r + n) % (2 * n) } else { r })
                .collect()
        };
        let a = embed(&f, &bundle, iters);
        let b = embed(&g, &bundle, iters);
        prop_assert!(max_diff(&select_rows(a.emb_forall(), &swap(f.universals())), b.emb_forall()) < TOL);
        prop_assert!(max_diff(&select_rows(a.emb_exists(), &swap(f.existentials())), b.emb_exists()) < TOL);
        let swapped = gnn::negation_swap(a.emb_forall().view());
        prop_assert_eq!(&gnn::negation_swap(swapped.view()), a.emb_forall());
    }

    #[test]
    fn inference_is_deterministic(seed in any::<u64>(), arch in 1u32..=7) {
        let (_, f, bundle) = setup(seed, arch);
        let a = embed(&f, &bundle, 3);
        let b = embed(&f, &bundle, 3);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(
            gnn::head_vote(&a, &bundle).unwrap().to_bits(),
            gnn::head_vote(&b, &bundle).unwrap().to_bits()
        );
    }

    #[test]
    fn bundles_round_trip_bit_identically(seed in any::<u64>(), arch in 1u32..=7, dim in 1usize..10) {
        let bundle = WeightBundle::random(arch, dim, dim + 1, seed).unwrap();
        let bytes = bundle.to_bytes();
        let back = WeightBundle::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for (name, t) in bundle.tensors() {
            let u = &back.tensors()[name];
            prop_assert_eq!(t.shape(), u.shape());
            prop_assert!(t.iter().zip(u).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn states_have_the_documented_shapes() {
    for arch in 1..=7 {
        let (_, f, bundle) = setup(arch as u64, arch);
        let s = embed(&f, &bundle, 2);
        let (nc, nx, ny) = (f.clauses().len(), f.universals().len(), f.existentials().len());
        assert_eq!(s.emb_forall().dim(), (2 * nx, 8));
        assert_eq!(s.emb_exists().dim(), (2 * ny, 8));
        for c in clause_states(&s) {
            assert_eq!(c.dim(), (nc, 8));
        }
        assert_eq!(clause_states(&s).len(), if arch >= 6 { 2 } else { 1 });
        assert!(s.emb_forall().iter().all(|v| v.is_finite()));
    }
}
