//! Experiment orchestration: seeded trials, sweeps and the COMP cross-check.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::{assert_pd_bound, comp_decode, decode_with, DecodeOptions, DEFAULT_COMP_CAP, DEFAULT_PD_CAP};
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, ModelParams, Sparsity};
use crate::oracle::{evaluate_outcomes, OutcomeTable};
use crate::testdesign::{mix64, DesignConstants, DesignParams, Storage, TestDesign, DEFAULT_MEMORY_CAP};
use crate::typicality::{check_typicality, default_epsilon, e_max};

const TRIAL_DOMAIN: u64 = 0x7472_6961_6c2d_7365; // "trial-se"
const DESIGN_DOMAIN: u64 = 0x6465_7369_676e_2d73; // "design-s"

/// Seed of trial `index`; injective in `index` for a fixed master seed.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64(index ^ TRIAL_DOMAIN))
}

/// Design seed paired with a trial seed.
pub fn design_seed(trial_seed: u64) -> u64 {
    mix64(trial_seed ^ DESIGN_DOMAIN)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub n_raw: u32,
    pub k: usize,
    pub sparsity: Sparsity,
    pub q_multiplier: f64,
}

impl ModelSpec {
    pub fn new(n_raw: u32, sparsity: Sparsity) -> Self {
        ModelSpec { n_raw, k: 3, sparsity, q_multiplier: 1.0 }
    }

    pub fn params(&self, seed: u64) -> Result<ModelParams> {
        ModelParams::with_options(self.n_raw, self.k, self.sparsity, self.q_multiplier, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Caps {
    /// Bytes of explicitly stored assignments.
    pub memory_bytes: u64,
    /// Largest vertex count COMP will enumerate.
    pub comp_n: u32,
    /// Largest PD set the decoder may build.
    pub pd_tuples: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            memory_bytes: DEFAULT_MEMORY_CAP,
            comp_n: DEFAULT_COMP_CAP,
            pd_tuples: DEFAULT_PD_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub design: DesignConstants,
    /// Sizes the design with this `m_bar` instead of the model's (needed when
    /// the model's `m_bar` is 0).
    pub design_m_bar: Option<f64>,
    pub trials: u32,
    pub master_seed: u64,
    pub storage: Storage,
    pub check_typicality: bool,
    /// Defaults to `min(1/2, sqrt(6 ln n / m_bar))`.
    pub epsilon_n: Option<f64>,
    pub caps: Caps,
    /// Worker threads for trials; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Parallel probing inside each decode.
    pub parallel_decode: bool,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, trials: u32, master_seed: u64) -> Self {
        ExperimentConfig {
            model,
            design: DesignConstants::default(),
            design_m_bar: None,
            trials,
            master_seed,
            storage: Storage::Stored,
            check_typicality: false,
            epsilon_n: None,
            caps: Caps::default(),
            workers: None,
            parallel_decode: false,
        }
    }

    /// Checks everything that does not depend on a trial's randomness.
    pub fn validate(&self) -> Result<ModelParams> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        let model = self.model.params(self.master_seed).map_err(config)?;
        self.design_params(&model, 0).map_err(config)?;
        if self.check_typicality && self.model.k != 3 {
            return Err(Error::Config("typicality checks need k = 3".into()));
        }
        Ok(model)
    }

    pub fn design_params(&self, model: &ModelParams, seed: u64) -> Result<DesignParams> {
        let m_bar = self.design_m_bar.unwrap_or(model.m_bar);
        DesignParams::new(model.n, m_bar, model.k, &self.design, seed)
    }
}

fn config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub seed: u64,
    pub m: u64,
    pub tests_total: u64,
    pub success: bool,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub outcome_checks: u64,
    pub pd_sizes: Vec<u64>,
    pub pd_max: u64,
    pub e_max: Option<f64>,
    pub pd_bound_ok: Option<bool>,
    pub typicality_overall: Option<bool>,
    pub decode_ms: f64,
    pub error: Option<String>,
}

impl TrialRecord {
    fn failed(trial: u32, seed: u64, tests_total: u64, err: &Error) -> Self {
        TrialRecord {
            trial,
            seed,
            m: 0,
            tests_total,
            success: false,
            false_positives: 0,
            false_negatives: 0,
            outcome_checks: 0,
            pd_sizes: Vec::new(),
            pd_max: 0,
            e_max: None,
            pd_bound_ok: None,
            typicality_overall: None,
            decode_ms: 0.0,
            error: Some(err.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub trials: u32,
    /// Trials stopped by a resource cap; excluded from the rates.
    pub failed: u32,
    pub success_rate: f64,
    pub mean_m: f64,
    pub mean_false_positives: f64,
    pub mean_outcome_checks: f64,
    pub p50_outcome_checks: f64,
    pub p95_outcome_checks: f64,
    pub mean_pd_max: f64,
    /// Among successful trials.
    pub pd_bound_rate: Option<f64>,
    pub typicality_rate: Option<f64>,
    pub mean_decode_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub model: ModelParams,
    pub design: DesignParams,
    pub tests_total: u64,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    /// JSON with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn to_json_without_timing(&self) -> Result<String> {
        let mut r = self.clone();
        r.trials.iter_mut().for_each(|t| t.decode_ms = 0.0);
        r.aggregate.mean_decode_ms = 0.0;
        Ok(serde_json::to_string(&r)?)
    }
}

/// Outcome of one trial's pipeline, kept for callers that need more than
/// the record (COMP cross-checks, tests).
pub struct TrialRun {
    pub hypergraph: Hypergraph,
    pub design: TestDesign,
    pub outcomes: OutcomeTable,
}

fn run_pipeline(cfg: &ExperimentConfig, seed: u64) -> Result<TrialRun> {
    let model = cfg.model.params(seed)?;
    let h = Hypergraph::sample_er(&model)?;
    let dp = cfg.design_params(&model, design_seed(seed))?;
    let design = TestDesign::build_with(&dp, cfg.storage, cfg.caps.memory_bytes)?;
    let outcomes = evaluate_outcomes(&h, &design)?;
    Ok(TrialRun { hypergraph: h, design, outcomes })
}

/// Runs trial `trial` of `cfg` end to end.
pub fn run_trial(cfg: &ExperimentConfig, trial: u32) -> Result<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, trial as u64);
    let run = run_pipeline(cfg, seed)?;
    let opts = DecodeOptions {
        parallel: cfg.parallel_decode,
        record_pd: false,
        pd_cap: cfg.caps.pd_tuples,
    };
    let decoded = decode_with(&run.design, &run.outcomes, &opts)?;
    let h = &run.hypergraph;

    let truth: Vec<Vec<u32>> = h.edges().map(|e| e.to_vec()).collect();
    let false_negatives = truth
        .iter()
        .filter(|e| decoded.estimated_edges.binary_search(e).is_err())
        .count() as u64;
    let false_positives = decoded
        .estimated_edges
        .iter()
        .filter(|e| !h.contains_edge(e))
        .count() as u64;
    if false_negatives > 0 {
        return Err(Error::Invariant(format!(
            "trial {trial} (seed {seed}): {false_negatives} true edges missing from the estimate"
        )));
    }

    let model = cfg.model.params(seed)?;
    let (emax, typical) = if cfg.model.k == 3 {
        let typical = if cfg.check_typicality {
            let eps = cfg.epsilon_n.unwrap_or_else(|| default_epsilon(model.n, model.m_bar));
            Some(check_typicality(h, &model, eps)?.overall)
        } else {
            None
        };
        (Some(e_max(model.m_bar, model.theta)), typical)
    } else {
        (None, None)
    };
    Ok(TrialRecord {
        trial,
        seed,
        m: h.edge_count() as u64,
        tests_total: run.design.params.total_tests(),
        success: false_positives == 0,
        false_positives,
        false_negatives,
        outcome_checks: decoded.outcome_checks,
        pd_max: decoded.pd_max(),
        pd_bound_ok: emax.map(|e| assert_pd_bound(&decoded.pd_sizes, e)),
        pd_sizes: decoded.pd_sizes,
        e_max: emax,
        typicality_overall: typical,
        decode_ms: decoded.wall_time_ms,
        error: None,
    })
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs every trial. Resource-cap failures are recorded per trial; a false
/// negative aborts the whole run with [`Error::Invariant`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = cfg.validate()?;
    let design = cfg.design_params(&model, design_seed(cfg.master_seed))?;
    let tests_total = design.total_tests();
    let results: Vec<Result<TrialRecord>> = in_pool(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| match run_trial(cfg, t) {
                Err(e @ Error::Resource { .. }) => Ok(TrialRecord::failed(
                    t,
                    trial_seed(cfg.master_seed, t as u64),
                    tests_total,
                    &e,
                )),
                other => other,
            })
            .collect()
    })?;
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&trials);
    Ok(ExperimentReport {
        config: cfg.clone(),
        model,
        design,
        tests_total,
        trials,
        aggregate,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn rate(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (hits, n) = flags.fold((0usize, 0usize), |(h, n), f| (h + f as usize, n + 1));
    (n > 0).then(|| hits as f64 / n as f64)
}

pub fn aggregate(trials: &[TrialRecord]) -> Aggregate {
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| !t.is_failed()).collect();
    let mut checks: Vec<f64> = ok.iter().map(|t| t.outcome_checks as f64).collect();
    checks.sort_by(|a, b| a.total_cmp(b));
    Aggregate {
        trials: trials.len() as u32,
        failed: (trials.len() - ok.len()) as u32,
        success_rate: rate(ok.iter().map(|t| t.success)).unwrap_or(0.0),
        mean_m: mean(ok.iter().map(|t| t.m as f64)),
        mean_false_positives: mean(ok.iter().map(|t| t.false_positives as f64)),
        mean_outcome_checks: mean(checks.iter().copied()),
        p50_outcome_checks: percentile(&checks, 0.5),
        p95_outcome_checks: percentile(&checks, 0.95),
        mean_pd_max: mean(ok.iter().map(|t| t.pd_max as f64)),
        pd_bound_rate: rate(ok.iter().filter(|t| t.success).filter_map(|t| t.pd_bound_ok)),
        typicality_rate: rate(ok.iter().filter_map(|t| t.typicality_overall)),
        mean_decode_ms: mean(ok.iter().map(|t| t.decode_ms)),
    }
}

/// One CSV row of a sweep; `trial` is `"all"` on aggregate rows, where the
/// per-trial columns hold means (`success` and `typicality_pass` hold rates).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u32,
    pub theta: f64,
    pub q: f64,
    pub m_bar: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C_prime")]
    pub c_prime: f64,
    pub trial: String,
    pub seed: u64,
    pub m: f64,
    pub tests_total: u64,
    pub outcome_checks: f64,
    pub pd_max: f64,
    pub success: f64,
    pub false_positives: f64,
    pub typicality_pass: String,
    pub decode_ms: f64,
    pub error: String,
}

pub const SWEEP_COLUMNS: [&str; 18] = [
    "n", "theta", "q", "m_bar", "C1", "C2", "C_prime", "trial", "seed", "m", "tests_total",
    "outcome_checks", "pd_max", "success", "false_positives", "typicality_pass", "decode_ms",
    "error",
];

impl SweepRow {
    pub fn is_aggregate(&self) -> bool {
        self.trial == "all"
    }
}

fn base_row(cfg: &ExperimentConfig, model: Option<&ModelParams>) -> SweepRow {
    SweepRow {
        n: model.map_or(cfg.model.n_raw, |m| m.n),
        theta: model.map_or(f64::NAN, |m| m.theta),
        q: model.map_or(f64::NAN, |m| m.q),
        m_bar: model.map_or(f64::NAN, |m| m.m_bar),
        c1: cfg.design.c1,
        c2: cfg.design.c2,
        c_prime: cfg.design.c_prime,
        trial: String::new(),
        seed: cfg.master_seed,
        m: 0.0,
        tests_total: 0,
        outcome_checks: 0.0,
        pd_max: 0.0,
        success: 0.0,
        false_positives: 0.0,
        typicality_pass: String::new(),
        decode_ms: 0.0,
        error: String::new(),
    }
}

/// Runs every grid point; each yields one row per trial plus an aggregate
/// row. Grid points that cannot run at all yield a single error row.
pub fn sweep(grid: &[ExperimentConfig]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for cfg in grid {
        let report = match run_experiment(cfg) {
            Ok(r) => r,
            Err(e @ Error::Invariant(_)) => return Err(e),
            Err(e) => {
                let model = cfg.model.params(cfg.master_seed).ok();
                let mut row = base_row(cfg, model.as_ref());
                row.trial = "all".into();
                row.error = e.to_string();
                rows.push(row);
                continue;
            }
        };
        let base = base_row(cfg, Some(&report.model));
        for t in &report.trials {
            rows.push(SweepRow {
                trial: t.trial.to_string(),
                seed: t.seed,
                m: t.m as f64,
                tests_total: t.tests_total,
                outcome_checks: t.outcome_checks as f64,
                pd_max: t.pd_max as f64,
                success: if t.success { 1.0 } else { 0.0 },
                false_positives: t.false_positives as f64,
                typicality_pass: t.typicality_overall.map(|b| b.to_string()).unwrap_or_default(),
                decode_ms: t.decode_ms,
                error: t.error.clone().unwrap_or_default(),
                ..base.clone()
            });
        }
        let a = &report.aggregate;
        rows.push(SweepRow {
            trial: "all".into(),
            m: a.mean_m,
            tests_total: report.tests_total,
            outcome_checks: a.mean_outcome_checks,
            pd_max: a.mean_pd_max,
            success: a.success_rate,
            false_positives: a.mean_false_positives,
            typicality_pass: a.typicality_rate.map(|r| r.to_string()).unwrap_or_default(),
            decode_ms: a.mean_decode_ms,
            error: if a.failed > 0 { format!("{} trials hit a resource cap", a.failed) } else { String::new() },
            ..base
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(SWEEP_COLUMNS)?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Containment `E ⊆ Ê ⊆ COMP` on one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContainmentCheck {
    pub m: u64,
    pub estimated: u64,
    pub comp: u64,
    /// True edges missing from the hierarchical estimate.
    pub missed_edges: Vec<Vec<u32>>,
    /// Estimated tuples that COMP rules out.
    pub outside_comp: Vec<Vec<u32>>,
}

impl ContainmentCheck {
    pub fn holds(&self) -> bool {
        self.missed_edges.is_empty() && self.outside_comp.is_empty()
    }
}

pub fn check_containment(
    h: &Hypergraph,
    design: &TestDesign,
    outcomes: &OutcomeTable,
    comp_cap: u32,
) -> Result<ContainmentCheck> {
    let decoded = decode_with(design, outcomes, &DecodeOptions { parallel: false, ..Default::default() })?;
    let comp = comp_decode(design, outcomes, comp_cap)?;
    let est = &decoded.estimated_edges;
    Ok(ContainmentCheck {
        m: h.edge_count() as u64,
        estimated: est.len() as u64,
        comp: comp.len() as u64,
        missed_edges: h
            .edges()
            .filter(|e| est.binary_search(&e.to_vec()).is_err())
            .map(|e| e.to_vec())
            .collect(),
        outside_comp: est.iter().filter(|e| comp.binary_search(e).is_err()).cloned().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyTrial {
    pub trial: u32,
    pub seed: u64,
    pub check: ContainmentCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub trials: Vec<VerifyTrial>,
    pub violations: u32,
}

/// Runs `E ⊆ Ê ⊆ COMP` on every trial of `cfg`. Refuses instances above the
/// COMP cap.
pub fn verify_against_comp(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let model = cfg.validate()?;
    if model.n > cfg.caps.comp_n {
        return Err(Error::Resource {
            what: "COMP vertex count",
            estimate: model.n as u64,
            cap: cfg.caps.comp_n as u64,
        });
    }
    let trials = in_pool(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(cfg.master_seed, t as u64);
                let run = run_pipeline(cfg, seed)?;
                let check = check_containment(&run.hypergraph, &run.design, &run.outcomes, cfg.caps.comp_n)?;
                Ok(VerifyTrial { trial: t, seed, check })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let violations = trials.iter().filter(|t| !t.check.holds()).count() as u32;
    Ok(VerifyReport { trials, violations })
}

/// Rebuilds the hypergraph, design and outcomes of trial `trial`.
pub fn reproduce_trial(cfg: &ExperimentConfig, trial: u32) -> Result<TrialRun> {
    run_pipeline(cfg, trial_seed(cfg.master_seed, trial as u64))
}
