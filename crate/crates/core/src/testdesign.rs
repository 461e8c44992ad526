//! Non-adaptive hierarchical test design.
//!
//! At every level `l_min <= level < L` the `g = k^level` blocks are thrown
//! into `T` tests, independently and uniformly, once per iteration, for `R`
//! iterations. The final level (singleton blocks) repeats this for
//! `final_rounds` rounds of `R` iterations each.
//!
//! Every (level, round, iteration) slice draws from its own stream. The
//! stream seed is `mix64(key ^ mix64(master_seed ^ DOMAIN))` where
//! `key = level << 56 | round << 40 | iteration` and `mix64` is the
//! SplitMix64 finalizer; block `b` of that slice goes to test
//! `mulhi(mix64(stream_seed + b * GAMMA), T)`. Both steps are bijective in
//! their inputs, so distinct slices never share a stream and any single
//! assignment can be regenerated in O(1) from the master seed.

use rayon::prelude::*;
use serde::Serialize;

use crate::combin::exact_log;
use crate::error::{Error, Result};
use crate::hypergraph::ModelParams;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const DOMAIN: u64 = 0x6873_706c_6974_2d64; // "hsplit-d"

const LEVEL_BITS: u32 = 8;
const ROUND_BITS: u32 = 16;
const ITER_BITS: u32 = 40;

/// Default cap on explicitly stored assignments: 2 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 2 << 30;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ceiling that forgives floating-point noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

/// Identifies one random assignment of blocks to tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SliceId {
    pub level: u32,
    /// Always 0 below the final level.
    pub round: u32,
    pub iteration: u32,
}

impl SliceId {
    pub fn stream_key(&self) -> u64 {
        ((self.level as u64) << (ROUND_BITS + ITER_BITS))
            | ((self.round as u64) << ITER_BITS)
            | self.iteration as u64
    }
}

/// Seed of the stream that drives slice `id` under `master_seed`.
pub fn stream_seed(master_seed: u64, id: SliceId) -> u64 {
    mix64(id.stream_key() ^ mix64(master_seed ^ DOMAIN))
}

/// 0-based test of `block` in the slice with `stream_seed`.
#[inline]
pub fn draw_test(stream_seed: u64, block: u32, tests: u32) -> u32 {
    let x = mix64(stream_seed.wrapping_add((block as u64).wrapping_mul(GAMMA)));
    ((x as u128 * tests as u128) >> 64) as u32
}

/// The multiplicative constants of the design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DesignConstants {
    pub c1: f64,
    pub c2: f64,
    pub c_prime: f64,
    /// Enforce `C1 >= 155`, `C2 = C1^3`, `C' > 4`.
    pub paper_faithful: bool,
}

impl Default for DesignConstants {
    fn default() -> Self {
        DesignConstants {
            c1: 6.0,
            c2: 40.0,
            c_prime: 5.0,
            paper_faithful: false,
        }
    }
}

impl DesignConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C1", self.c1), ("C2", self.c2), ("C'", self.c_prime)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Constraint(format!("{name}={v} must be positive")));
            }
        }
        if self.paper_faithful {
            if self.c1 < 155.0 {
                return Err(Error::Constraint(format!("C1={} < 155", self.c1)));
            }
            let cube = self.c1.powi(3);
            if (self.c2 - cube).abs() > 1e-9 * cube {
                return Err(Error::Constraint(format!("C2={} != C1^3={cube}", self.c2)));
            }
            if self.c_prime <= 4.0 {
                return Err(Error::Constraint(format!("C'={} <= 4", self.c_prime)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignParams {
    pub n: u32,
    pub m_bar: f64,
    pub k: usize,
    pub constants: DesignConstants,
    pub seed: u64,
    pub l_min: u32,
    /// `log_k n`; the final (singleton) level.
    pub depth: u32,
    /// Tests per iteration, `ceil(C1 * m_bar^{1/k})`.
    pub tests: u32,
    /// Iterations per level (and per final round), `ceil(C2 * m_bar^{1-1/k})`.
    pub iterations: u32,
    /// `ceil(C' * log_k n)`.
    pub final_rounds: u32,
}

/// Smallest `l >= 0` with `k^l >= m_bar^{1/k}`, i.e. `k^{k l} >= m_bar`.
pub fn first_level(m_bar: f64, k: usize) -> u32 {
    let step = (k as f64).powi(k as i32);
    let mut level = 0;
    let mut reach = 1.0f64;
    while reach < m_bar * (1.0 - 1e-12) {
        reach *= step;
        level += 1;
    }
    level
}

/// Sizes the design for `model` (its padded `n`, `m_bar` and `k`).
pub fn derive_params(
    model: &ModelParams,
    constants: &DesignConstants,
    seed: u64,
) -> Result<DesignParams> {
    DesignParams::new(model.n, model.m_bar, model.k, constants, seed)
}

impl DesignParams {
    pub fn new(
        n: u32,
        m_bar: f64,
        k: usize,
        constants: &DesignConstants,
        seed: u64,
    ) -> Result<Self> {
        constants.validate()?;
        if k < 3 {
            return Err(Error::InvalidInput(format!("uniformity k={k} < 3")));
        }
        if !(m_bar.is_finite() && m_bar > 0.0) {
            return Err(Error::InvalidInput(format!("m_bar={m_bar} must be positive")));
        }
        let depth = exact_log(n as u64, k as u64)
            .ok_or_else(|| Error::InvalidInput(format!("n={n} is not a power of k={k}")))?;
        if depth == 0 {
            return Err(Error::InvalidInput(format!("n={n} needs at least one level")));
        }
        let kf = k as f64;
        let l_min = first_level(m_bar, k).clamp(1, depth);
        let tests = ceil_tol(constants.c1 * m_bar.powf(1.0 / kf)).max(1.0);
        let iterations = ceil_tol(constants.c2 * m_bar.powf(1.0 - 1.0 / kf)).max(1.0);
        let final_rounds = ceil_tol(constants.c_prime * depth as f64).max(1.0);

        if tests > u32::MAX as f64 {
            return Err(Error::Constraint(format!("{tests} tests per iteration overflow u32")));
        }
        if iterations >= (1u64 << ITER_BITS) as f64 {
            return Err(Error::Constraint(format!("{iterations} iterations exceed 2^{ITER_BITS}")));
        }
        if final_rounds >= (1u64 << ROUND_BITS) as f64 || depth >= 1 << LEVEL_BITS {
            return Err(Error::Constraint(format!(
                "{final_rounds} final rounds or depth {depth} out of range"
            )));
        }
        Ok(DesignParams {
            n,
            m_bar,
            k,
            constants: *constants,
            seed,
            l_min,
            depth,
            tests: tests as u32,
            iterations: iterations as u32,
            final_rounds: final_rounds as u32,
        })
    }

    /// Number of (level, round, iteration) slices.
    pub fn slice_count(&self) -> u64 {
        self.iterations as u64 * ((self.depth - self.l_min) as u64 + self.final_rounds as u64)
    }

    /// `T * R * ((L - l_min) + final_rounds)`.
    pub fn total_tests(&self) -> u64 {
        self.tests as u64 * self.slice_count()
    }

    pub fn blocks_at(&self, level: u32) -> u32 {
        (self.k as u32).pow(level)
    }

    /// Bytes needed to store every assignment explicitly.
    pub fn stored_bytes(&self) -> u64 {
        let per_iteration: u64 = (self.l_min..self.depth)
            .map(|l| self.blocks_at(l) as u64)
            .sum::<u64>()
            + self.final_rounds as u64 * self.n as u64;
        per_iteration * self.iterations as u64 * std::mem::size_of::<u32>() as u64
    }
}

/// How assignments are held in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Materialized arrays, subject to the memory cap.
    #[default]
    Stored,
    /// Recomputed from the master seed on every access.
    Regenerate,
}

/// Assignments of one level (or of one final round) across all iterations.
#[derive(Clone, Debug)]
pub struct LevelDesign {
    pub level: u32,
    pub round: u32,
    /// Number of blocks, `k^level`.
    pub g: u32,
    pub tests: u32,
    pub iterations: u32,
    master_seed: u64,
    /// Block-major `g x iterations`, 0-based test indices; `None` when regenerating.
    assign: Option<Vec<u32>>,
}

impl LevelDesign {
    fn new(params: &DesignParams, level: u32, round: u32, storage: Storage) -> Self {
        let g = params.blocks_at(level);
        let mut ld = LevelDesign {
            level,
            round,
            g,
            tests: params.tests,
            iterations: params.iterations,
            master_seed: params.seed,
            assign: None,
        };
        if storage == Storage::Stored {
            let r = params.iterations as usize;
            let mut cols = vec![0u32; g as usize * r];
            cols.par_chunks_mut(r)
                .enumerate()
                .for_each(|(b, col)| {
                    for (it, slot) in col.iter_mut().enumerate() {
                        *slot = draw_test(ld.stream_seed(it as u32), b as u32 + 1, ld.tests);
                    }
                });
            ld.assign = Some(cols);
        }
        ld
    }

    pub fn slice_id(&self, iteration: u32) -> SliceId {
        SliceId {
            level: self.level,
            round: self.round,
            iteration,
        }
    }

    #[inline]
    pub fn stream_seed(&self, iteration: u32) -> u64 {
        stream_seed(self.master_seed, self.slice_id(iteration))
    }

    pub fn is_stored(&self) -> bool {
        self.assign.is_some()
    }

    /// 0-based test of 1-based `block` in `iteration`. Unchecked beyond
    /// debug assertions.
    #[inline]
    pub fn test_of(&self, iteration: u32, block: u32) -> u32 {
        debug_assert!(iteration < self.iterations && block >= 1 && block <= self.g);
        match &self.assign {
            Some(a) => a[(block as usize - 1) * self.iterations as usize + iteration as usize],
            None => draw_test(self.stream_seed(iteration), block, self.tests),
        }
    }

    /// Tests of 1-based `block` across all iterations, when stored.
    pub fn column(&self, block: u32) -> Option<&[u32]> {
        let r = self.iterations as usize;
        let b = block as usize - 1;
        self.assign.as_ref().map(|a| &a[b * r..(b + 1) * r])
    }
}

/// The complete non-adaptive design. Built from parameters alone.
#[derive(Clone, Debug)]
pub struct TestDesign {
    pub params: DesignParams,
    pub storage: Storage,
    /// Levels `l_min .. L-1`.
    pub levels: Vec<LevelDesign>,
    /// `final_rounds` designs at level `L`.
    pub final_rounds: Vec<LevelDesign>,
}

impl TestDesign {
    /// Builds with stored assignments and the default memory cap.
    pub fn build(params: &DesignParams) -> Result<Self> {
        Self::build_with(params, Storage::Stored, DEFAULT_MEMORY_CAP)
    }

    pub fn build_with(params: &DesignParams, storage: Storage, memory_cap: u64) -> Result<Self> {
        if storage == Storage::Stored {
            let estimate = params.stored_bytes();
            if estimate > memory_cap {
                return Err(Error::Resource {
                    what: "stored test design (bytes)",
                    estimate,
                    cap: memory_cap,
                });
            }
        }
        let levels = (params.l_min..params.depth)
            .map(|l| LevelDesign::new(params, l, 0, storage))
            .collect();
        let final_rounds = (0..params.final_rounds)
            .map(|r| LevelDesign::new(params, params.depth, r, storage))
            .collect();
        Ok(TestDesign {
            params: params.clone(),
            storage,
            levels,
            final_rounds,
        })
    }

    /// Design of a non-final `level`.
    pub fn level(&self, level: u32) -> Option<&LevelDesign> {
        level
            .checked_sub(self.params.l_min)
            .and_then(|i| self.levels.get(i as usize))
    }

    /// All level designs in slice order: levels ascending, then final rounds.
    pub fn all_levels(&self) -> impl Iterator<Item = &LevelDesign> {
        self.levels.iter().chain(self.final_rounds.iter())
    }

    pub fn level_design(&self, level: u32, round: u32) -> Result<&LevelDesign> {
        let p = &self.params;
        let found = if level == p.depth {
            self.final_rounds.get(round as usize)
        } else if round == 0 {
            self.level(level)
        } else {
            None
        };
        found.ok_or_else(|| {
            Error::Index(format!(
                "no design for level {level} round {round} (levels {}..={}, {} final rounds)",
                p.l_min, p.depth, p.final_rounds
            ))
        })
    }

    /// 1-based test holding 1-based `block` in slice `id`.
    pub fn assignment_of(&self, id: SliceId, block: u32) -> Result<u32> {
        let ld = self.level_design(id.level, id.round)?;
        if id.iteration >= ld.iterations {
            return Err(Error::Index(format!(
                "iteration {} >= {}",
                id.iteration, ld.iterations
            )));
        }
        if block == 0 || block > ld.g {
            return Err(Error::Index(format!("block {block} outside [1, {}]", ld.g)));
        }
        Ok(ld.test_of(id.iteration, block) + 1)
    }

    /// Counts tests by walking every slice.
    pub fn count_tests(&self) -> u64 {
        self.all_levels()
            .map(|ld| ld.iterations as u64 * ld.tests as u64)
            .sum()
    }

    pub fn export(&self) -> DesignExport {
        DesignExport {
            params: self.params.clone(),
            storage: self.storage,
            total_tests: self.params.total_tests(),
            base_seed: self.params.seed,
            levels: self
                .all_levels()
                .map(|ld| LevelDims {
                    level: ld.level,
                    round: ld.round,
                    g: ld.g,
                    tests: ld.tests,
                    iterations: ld.iterations,
                })
                .collect(),
        }
    }
}

/// JSON export of a design: dimensions and seed, no assignments.
#[derive(Clone, Debug, Serialize)]
pub struct DesignExport {
    pub params: DesignParams,
    pub storage: Storage,
    pub total_tests: u64,
    pub base_seed: u64,
    pub levels: Vec<LevelDims>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelDims {
    pub level: u32,
    pub round: u32,
    pub g: u32,
    pub tests: u32,
    pub iterations: u32,
}
