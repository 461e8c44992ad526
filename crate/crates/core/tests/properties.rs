mod common;

use proptest::prelude::*;

use hypersplit::combin::binomial;
use hypersplit::hypergraph::edge_block_signature;
use hypersplit::{
    comp_decode, compute_level_stats, decode_with, evaluate_outcomes, materialize_test, DecodeOptions,
    DesignConstants, DesignParams, Hypergraph, Storage, TestDesign,
};

use common::brute_force_stats;

fn triples(n: u32, max_edges: usize) -> impl Strategy<Value = Vec<[u32; 3]>> {
    prop::collection::vec(prop::sample::subsequence((1..=n).collect::<Vec<_>>(), 3), 0..=max_edges)
        .prop_map(|es| es.into_iter().map(|e| [e[0], e[1], e[2]]).collect())
}

fn hypergraph(n: u32, max_edges: usize) -> impl Strategy<Value = Hypergraph> {
    triples(n, max_edges).prop_map(move |ts| Hypergraph::from_triples(n, &ts).unwrap())
}

fn constants() -> impl Strategy<Value = DesignConstants> {
    (1.0..8.0f64, 5.0..120.0f64, 1.0..4.0f64).prop_map(|(c1, c2, c_prime)| DesignConstants {
        c1,
        c2,
        c_prime,
        paper_faithful: false,
    })
}

fn setup(h: &Hypergraph, m_bar: f64, c: &DesignConstants, seed: u64) -> (TestDesign, hypersplit::OutcomeTable) {
    let p = DesignParams::new(h.n(), m_bar, 3, c, seed).unwrap();
    let d = TestDesign::build(&p).unwrap();
    let o = evaluate_outcomes(h, &d).unwrap();
    (d, o)
}

fn serial() -> DecodeOptions {
    DecodeOptions { parallel: false, record_pd: true, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn query_is_monotone(h in hypergraph(27, 8), a in prop::collection::vec(1..=27u32, 0..27), extra in prop::collection::vec(1..=27u32, 0..10)) {
        let mut b = a.clone();
        b.extend(extra);
        if h.query(&a) {
            prop_assert!(h.query(&b));
        }
        prop_assert!(h.query(&(1..=27).collect::<Vec<_>>()) == !h.is_empty());
    }

    #[test]
    fn outcomes_match_materialized_queries(h in hypergraph(27, 6), c in constants(), seed in any::<u64>()) {
        let (d, o) = setup(&h, 3.0, &c, seed);
        for ld in d.all_levels() {
            for it in 0..ld.iterations {
                let id = ld.slice_id(it);
                for t in 1..=ld.tests {
                    let pool = materialize_test(&d, id, t).unwrap();
                    prop_assert_eq!(h.query(&pool), o.outcome(id, t).unwrap(), "{:?} test {}", id, t);
                }
            }
        }
    }

    #[test]
    fn adding_an_edge_keeps_positives(h in hypergraph(81, 6), e in prop::sample::subsequence((1..=81u32).collect::<Vec<_>>(), 3), seed in any::<u64>()) {
        let bigger = h.with_edge(&e).unwrap();
        let (d, before) = setup(&h, 4.0, &DesignConstants::default(), seed);
        let after = evaluate_outcomes(&bigger, &d).unwrap();
        for s in 0..before.slice_count() {
            for t in 0..before.tests() {
                prop_assert!(!before.is_positive(s, t) || after.is_positive(s, t));
            }
        }
        prop_assert!(after.positive_test_count() >= before.positive_test_count());
    }

    #[test]
    fn level_stats_match_definitions(h in hypergraph(27, 12), level in 1..=3u32) {
        prop_assert_eq!(compute_level_stats(&h, level).unwrap(), brute_force_stats(&h, level));
    }

    #[test]
    fn defective_triples_decompose(h in hypergraph(243, 40), level in 1..=5u32) {
        let s = compute_level_stats(&h, level).unwrap();
        let g = s.g as u64;
        let bound = binomial(g - 1, 2) as u64 * s.nu1 + (g - 2) * s.nu2 + h.edge_count() as u64;
        prop_assert!(s.e_g <= bound, "{:?} bound {}", s, bound);
    }

    #[test]
    fn decoder_is_sandwiched(h in hypergraph(81, 8), c in constants(), seed in any::<u64>()) {
        let (d, o) = setup(&h, 5.0, &c, seed);
        let r = decode_with(&d, &o, &serial()).unwrap();
        let comp = comp_decode(&d, &o, 81).unwrap();
        for e in h.edges() {
            prop_assert!(r.estimated_edges.binary_search(&e.to_vec()).is_ok(), "missed {:?}", e);
        }
        for e in &r.estimated_edges {
            prop_assert!(comp.binary_search(e).is_ok(), "{:?} not in COMP", e);
        }
    }

    #[test]
    fn candidate_sets_cover_every_edge(h in hypergraph(243, 8), c in constants(), seed in any::<u64>()) {
        let (d, o) = setup(&h, 4.0, &c, seed);
        let r = decode_with(&d, &o, &serial()).unwrap();
        for pd in &r.pd_sets {
            for e in h.edges() {
                let sig = edge_block_signature(e, h.n(), pd.level).unwrap();
                prop_assert!(
                    pd.iter().any(|t| sig.iter().all(|b| t.contains(b))),
                    "edge {:?} uncovered at level {}", e, pd.level
                );
            }
        }
    }

    #[test]
    fn candidate_growth_and_accounting(h in hypergraph(243, 10), c in constants(), seed in any::<u64>()) {
        let (d, o) = setup(&h, 6.0, &c, seed);
        let r = decode_with(&d, &o, &serial()).unwrap();
        let levels = r.pd_sizes.len();
        prop_assert_eq!(levels as u32, d.params.depth - d.params.l_min + 1);
        prop_assert_eq!(r.eliminations_per_level.len(), levels);
        for l in 0..levels - 1 {
            let kept = r.pd_sizes[l] - r.eliminations_per_level[l];
            prop_assert!(r.pd_sizes[l + 1] <= 84 * kept);
        }
        prop_assert_eq!(r.estimated_edges.len() as u64, r.pd_sizes[levels - 1] - r.eliminations_per_level[levels - 1]);

        // every probe examines at least one and at most all iterations of the slices it scans
        let final_rounds = d.params.final_rounds as u64;
        let r_it = d.params.iterations as u64;
        let mut low = 0;
        let mut high = 0;
        for (l, &size) in r.pd_sizes.iter().enumerate() {
            let rounds = if l == levels - 1 { final_rounds } else { 1 };
            low += size;
            high += size * rounds * r_it;
        }
        prop_assert!(r.outcome_checks >= low && r.outcome_checks <= high);
        prop_assert_eq!(r.outcome_checks, r.checks_per_level.iter().sum::<u64>());
    }

    #[test]
    fn stored_and_regenerated_designs_agree(h in hypergraph(81, 6), c in constants(), seed in any::<u64>()) {
        let p = DesignParams::new(81, 3.0, 3, &c, seed).unwrap();
        let stored = TestDesign::build_with(&p, Storage::Stored, u64::MAX).unwrap();
        let regen = TestDesign::build_with(&p, Storage::Regenerate, u64::MAX).unwrap();
        for (a, b) in stored.all_levels().zip(regen.all_levels()) {
            for it in 0..a.iterations {
                for blk in 1..=a.g {
                    prop_assert_eq!(a.test_of(it, blk), b.test_of(it, blk));
                }
            }
        }
        let o1 = evaluate_outcomes(&h, &stored).unwrap();
        let o2 = evaluate_outcomes(&h, &regen).unwrap();
        prop_assert_eq!(&o1, &o2);
        let r1 = decode_with(&stored, &o1, &serial()).unwrap();
        let r2 = decode_with(&regen, &o2, &serial()).unwrap();
        prop_assert_eq!(r1.estimated_edges, r2.estimated_edges);
        prop_assert_eq!(r1.outcome_checks, r2.outcome_checks);
    }

    #[test]
    fn text_format_round_trips(h in hypergraph(81, 20)) {
        let mut buf = Vec::new();
        h.write_text(&mut buf).unwrap();
        prop_assert_eq!(Hypergraph::read_text(buf.as_slice()).unwrap(), h);
    }
}
