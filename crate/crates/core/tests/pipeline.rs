mod common;

use hypersplit::harness::{check_containment, reproduce_trial, write_sweep_csv, ModelSpec, SWEEP_COLUMNS};
use hypersplit::oracle::BINARY_MAGIC;
use hypersplit::{
    decode, evaluate_outcomes, materialize_test, run_experiment, sweep, verify_against_comp, DesignConstants,
    DesignParams, Error, ExperimentConfig, Hypergraph, OutcomeTable, SliceId, Sparsity, Storage, TestDesign,
};

use common::expected_tests;

fn config(n: u32, m_bar: f64, trials: u32, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(ModelSpec::new(n, Sparsity::MBar(m_bar)), trials, seed)
}

#[test]
fn reports_are_reproducible() {
    let cfg = config(81, 5.0, 6, 11);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.to_json_without_timing().unwrap(), b.to_json_without_timing().unwrap());
    let c = run_experiment(&ExperimentConfig { master_seed: 12, ..cfg }).unwrap();
    assert_ne!(a.to_json_without_timing().unwrap(), c.to_json_without_timing().unwrap());
}

#[test]
fn every_trial_reports_the_same_design_size() {
    let r = run_experiment(&config(243, 5.0, 5, 2)).unwrap();
    let want = expected_tests(243, 5.0, 6.0, 40.0, 5.0);
    assert_eq!(r.tests_total, want);
    assert!(r.trials.iter().all(|t| t.tests_total == want && t.false_negatives == 0));
}

#[test]
fn sweep_rows_and_columns() {
    let grid: Vec<ExperimentConfig> = [243u32, 729, 2187]
        .iter()
        .map(|&n| {
            let mut spec = ModelSpec::new(n, Sparsity::Theta(0.55));
            spec.q_multiplier = 0.0005;
            ExperimentConfig {
                storage: Storage::Regenerate,
                design: DesignConstants { c2: 216.0, ..DesignConstants::default() },
                ..ExperimentConfig::new(spec, 2, n as u64)
            }
        })
        .collect();
    let rows = sweep(&grid).unwrap();
    assert_eq!(rows.iter().filter(|r| r.is_aggregate()).count(), 3);
    assert_eq!(rows.len(), 3 * 3);

    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, SWEEP_COLUMNS.join(","));
    assert_eq!(
        header,
        "n,theta,q,m_bar,C1,C2,C_prime,trial,seed,m,tests_total,outcome_checks,pd_max,success,false_positives,typicality_pass,decode_ms,error"
    );
    for r in &rows {
        assert_eq!(r.tests_total, expected_tests(r.n, r.m_bar, r.c1, r.c2, r.c_prime));
        assert_eq!(r.theta, 0.55);
    }
}

#[test]
fn failed_grid_points_become_error_rows() {
    // q = 0 gives m_bar = 0, which cannot size a design
    let unsized_cfg = ExperimentConfig::new(ModelSpec::new(81, Sparsity::Q(0.0)), 2, 1);
    let mut capped = config(81, 5.0, 2, 1);
    capped.caps.memory_bytes = 16;
    let rows = sweep(&[unsized_cfg, capped, config(27, 2.0, 2, 1)]).unwrap();
    assert_eq!(rows.len(), 1 + 3 + 3);
    assert!(rows[0].is_aggregate() && !rows[0].error.is_empty());
    assert!(rows[1..4].iter().all(|r| !r.error.is_empty()));
    assert!(rows[4..].iter().all(|r| r.error.is_empty()));
}

#[test]
fn verify_small_instances() {
    let r = verify_against_comp(&config(81, 5.0, 100, 3)).unwrap();
    assert_eq!(r.trials.len(), 100);
    assert_eq!(r.violations, 0);
    assert!(matches!(verify_against_comp(&config(729, 5.0, 1, 3)), Err(Error::Resource { .. })));
}

#[test]
fn empty_instance_is_trivially_nested() {
    let mut cfg = ExperimentConfig::new(ModelSpec::new(27, Sparsity::Q(0.0)), 3, 1);
    cfg.design_m_bar = Some(2.0);
    let r = verify_against_comp(&cfg).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.trials.iter().all(|t| t.check.m == 0 && t.check.estimated == 0));
}

#[test]
fn corrupted_outcome_is_caught() {
    let cfg = config(81, 5.0, 1, 8);
    let mut run = reproduce_trial(&cfg, 0).unwrap();
    assert!(check_containment(&run.hypergraph, &run.design, &run.outcomes, 243).unwrap().holds());

    // flip a positive final-level test that holds a true edge
    let e = run.hypergraph.edge(0).to_vec();
    let ld = &run.design.final_rounds[0];
    let it = (0..ld.iterations)
        .find(|&it| e.iter().all(|&v| ld.test_of(it, v) == ld.test_of(it, e[0])))
        .expect("some iteration co-assigns the edge");
    let id = ld.slice_id(it);
    let t = ld.test_of(it, e[0]) + 1;
    assert!(run.outcomes.outcome(id, t).unwrap());
    run.outcomes.corrupt(id, t).unwrap();

    let c = check_containment(&run.hypergraph, &run.design, &run.outcomes, 243).unwrap();
    assert!(!c.holds());
    assert!(c.missed_edges.contains(&e));
}

#[test]
fn materialized_tests() {
    let one = DesignConstants { c1: 0.1, ..DesignConstants::default() };
    let d = TestDesign::build(&DesignParams::new(27, 2.0, 3, &one, 0).unwrap()).unwrap();
    let id = SliceId { level: 1, round: 0, iteration: 0 };
    assert_eq!(materialize_test(&d, id, 1).unwrap(), (1..=27).collect::<Vec<_>>());
    assert!(materialize_test(&d, id, 2).is_err());

    let d = TestDesign::build(&DesignParams::new(27, 2.0, 3, &DesignConstants::default(), 5).unwrap()).unwrap();
    let ld = &d.final_rounds[1];
    let mut seen = Vec::new();
    for t in 1..=ld.tests {
        let pool = materialize_test(&d, ld.slice_id(3), t).unwrap();
        assert!(pool.iter().all(|&v| ld.test_of(3, v) + 1 == t));
        seen.extend(pool);
    }
    seen.sort_unstable();
    assert_eq!(seen, (1..=27).collect::<Vec<_>>());
}

#[test]
fn single_block_edge_lights_one_test_per_iteration() {
    let h = Hypergraph::from_triples(27, &[[1, 2, 3]]).unwrap();
    let d = TestDesign::build(&DesignParams::new(27, 2.0, 3, &DesignConstants::default(), 4).unwrap()).unwrap();
    let o = evaluate_outcomes(&h, &d).unwrap();
    // vertices 1..=3 share a block at levels 1 and 2
    for ld in &d.levels {
        let base = o.slice_base(ld.level, 0).unwrap();
        for it in 0..ld.iterations {
            let hot = ld.test_of(it, 1);
            for t in 0..ld.tests {
                assert_eq!(o.is_positive(base + it as usize, t), t == hot);
            }
        }
    }
}

#[test]
fn outcome_file_round_trips() {
    let run = reproduce_trial(&config(81, 5.0, 1, 4), 0).unwrap();
    let mut buf = Vec::new();
    run.outcomes.write_binary(&mut buf).unwrap();
    assert_eq!(&buf[..4], BINARY_MAGIC);
    let header: Vec<u64> = buf[4..44].chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    let p = &run.design.params;
    let levels = (p.depth - p.l_min) as u64;
    assert_eq!(header, vec![81, p.tests as u64, p.iterations as u64, levels, p.final_rounds as u64]);
    let row = (p.tests as usize).div_ceil(8);
    assert_eq!(buf.len(), 44 + row * p.slice_count() as usize);

    let back = OutcomeTable::read_binary(buf.as_slice(), 3).unwrap();
    assert_eq!(back, run.outcomes);
    let a = decode(&run.design, &run.outcomes).unwrap();
    let b = decode(&run.design, &back).unwrap();
    assert_eq!(a.estimated_edges, b.estimated_edges);

    assert!(OutcomeTable::read_binary(&b"HSO2"[..], 3).is_err());
    assert!(OutcomeTable::read_binary(&buf[..buf.len() - 1], 3).is_err());
}

#[test]
fn design_export_omits_assignments() {
    let d = TestDesign::build(&DesignParams::new(243, 5.0, 3, &DesignConstants::default(), 77).unwrap()).unwrap();
    let v = serde_json::to_value(d.export()).unwrap();
    for key in ["params", "levels", "base_seed", "total_tests"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["base_seed"], 77);
    assert_eq!(v["total_tests"], expected_tests(243, 5.0, 6.0, 40.0, 5.0));
    let text = v.to_string();
    assert!(!text.contains("assign"));
    assert_eq!(v["levels"].as_array().unwrap().len() as u32, d.params.depth - d.params.l_min + d.params.final_rounds);
}
