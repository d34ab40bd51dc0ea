mod support;

use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use qbfrank::formula::{Assignment, Block};
use qbfrank::gnn::{self, GraphEncoding, WeightBundle};
use qbfrank::ndarray::Array2;
use qbfrank::ranking::{
    score_candidates_maxsat, score_counterexamples_core, score_counterexamples_maxsat,
    score_hardness, GnnRanker, HardnessRanker, MaxSatRanker, Ranker, Side,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn usizes(list: &[i64]) -> Vec<usize> {
    list.iter().map(|&n| n as usize).collect()
}

#[test]
fn hardness_matches_listing_exhaustively() {
    for n in 0..=64i64 {
        assert_eq!(score_hardness(n as u64), support::listing_n_model_2_ranking_score(n), "n = {n}");
    }
}

#[test]
fn list_scores_match_listings_exhaustively() {
    for list in support::all_lists(4, 16) {
        let counts = usizes(&list);
        assert_eq!(
            score_candidates_maxsat(&counts).unwrap(),
            support::listing_n_clauses_2_ranking_score(&list)
        );
        assert_eq!(
            score_counterexamples_maxsat(&counts).unwrap(),
            support::listing_n_clauses_2_ranking_score_counter(&list)
        );
        for core in support::all_subsets(list.len()) {
            assert_eq!(
                score_counterexamples_core(&core, &counts).unwrap(),
                support::listing_unsat_core_2_ranking_score(&core, &list)
            );
        }
    }
}

fn batch(block: Block, width: usize, indices: &[u64]) -> Vec<Assignment> {
    indices
        .iter()
        .map(|&i| Assignment::from_index(block, width, i & ((1 << width) - 1)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn maxsat_ranker_picks_extreme_counts(
        seed in any::<u64>(),
        xs in prop::collection::vec(any::<u64>(), 1..12),
        ys in prop::collection::vec(any::<u64>(), 1..12),
    ) {
        let f = support::random_shaped_qbf(&mut ChaCha8Rng::seed_from_u64(seed), 8, 10, 60, 2, 3);
        let cands = batch(Block::Universal, 8, &xs);
        let counts: Vec<usize> = cands.iter().map(|a| f.satisfied_clause_count(a)).collect();
        let scores = MaxSatRanker.score_batch(&f, &cands, Side::Candidate).unwrap();
        let min = *counts.iter().min().unwrap();
        prop_assert_eq!(scores.argmax(), counts.iter().position(|&c| c == min));

        let counters = batch(Block::Existential, 10, &ys);
        let counts: Vec<usize> = counters.iter().map(|a| f.satisfied_clause_count(a)).collect();
        let scores = MaxSatRanker.score_batch(&f, &counters, Side::Counterexample).unwrap();
        let max = *counts.iter().max().unwrap();
        prop_assert_eq!(scores.argmax(), counts.iter().position(|&c| c == max));
    }

    #[test]
    fn rankers_are_pure(seed in any::<u64>(), xs in prop::collection::vec(any::<u64>(), 1..8)) {
        let f = support::random_shaped_qbf(&mut ChaCha8Rng::seed_from_u64(seed), 8, 10, 50, 2, 3);
        let cands = batch(Block::Universal, 8, &xs);
        for r in [&MaxSatRanker as &dyn Ranker, &HardnessRanker] {
            prop_assert_eq!(
                r.score_batch(&f, &cands, Side::Candidate).unwrap(),
                r.score_batch(&f, &cands, Side::Candidate).unwrap()
            );
        }
    }
}

#[test]
fn gnn_ranker_matches_head_and_commutes_with_batch_order() {
    let f = support::random_shaped_qbf(&mut ChaCha8Rng::seed_from_u64(5), 8, 10, 80, 2, 3);
    let bundle = Arc::new(WeightBundle::random(5, 16, 12, 3).unwrap());
    let ranker = GnnRanker::new(bundle.clone(), 4);
    let cands = batch(Block::Universal, 8, &[3, 200, 17, 17, 0, 255]);
    let scores = ranker.score_batch(&f, &cands, Side::Candidate).unwrap();

    let state = gnn::run_embedding(&GraphEncoding::encode(&f), &bundle, 4).unwrap();
    let m = Array2::from_shape_fn((cands.len(), 8), |(r, c)| f32::from(u8::from(cands[r].values()[c])));
    let direct = gnn::head_score_forall(&state, &bundle, m.view()).unwrap();
    let direct: Vec<f64> = direct.into_iter().map(f64::from).collect();
    assert_eq!(scores.values(), &direct[..]);
    assert_eq!(scores.values()[2], scores.values()[3]);

    let reversed: Vec<Assignment> = cands.iter().rev().cloned().collect();
    let rev_scores = ranker.score_batch(&f, &reversed, Side::Candidate).unwrap();
    let mut expect = scores.values().to_vec();
    expect.reverse();
    assert_eq!(rev_scores.values(), &expect[..]);
}

#[test]
fn full_candidate_batch_scores_quickly() {
    let f = support::random_shaped_qbf(&mut ChaCha8Rng::seed_from_u64(8), 8, 10, 160, 2, 3);
    let bundle = Arc::new(WeightBundle::random(5, 64, 64, 1).unwrap());
    let ranker = GnnRanker::new(bundle, 8);
    let all = batch(Block::Universal, 8, &(0..256).collect::<Vec<_>>());
    let start = Instant::now();
    let scores = ranker.score_batch(&f, &all, Side::Candidate).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(scores.len(), 256);
    assert!(scores.values().iter().all(|v| v.is_finite()));
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
}
