//! Coarse-to-fine decoding of the hierarchical design, and the COMP baseline.
//!
//! The decoder keeps a set of possibly defective block tuples per level.
//! A tuple is eliminated when, in some iteration of its level, all of its
//! blocks land in the same test and that test is negative. Survivors are
//! refined into every k-subset of their k^2 child blocks (84 for k = 3).
//! At the singleton level, tuples that no negative final-round test rules
//! out are returned as edges.
//!
//! A tuple whose union holds an edge is never eliminated: any test holding
//! all of its blocks holds the edge and is positive. Each edge is therefore
//! covered at every level, since the tuples covering its blocks are kept
//! and their refinements include a tuple covering its children.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::combin::{binomial, next_combination};
use crate::error::{Error, Result};
use crate::oracle::OutcomeTable;
use crate::testdesign::{DesignParams, LevelDesign, TestDesign};

/// Largest admissible `C(k^2, k)`; k = 5 is the last uniformity under it.
pub const MAX_CHILD_TUPLES: u128 = 60_000;

/// Default cap on COMP's vertex count.
pub const DEFAULT_COMP_CAP: u32 = 243;

/// Default cap on any single PD set.
pub const DEFAULT_PD_CAP: u64 = 100_000_000;

/// Factor in the PD-size bound `|PD| <= 168 E_max` (twice the 84 children
/// of a 3-tuple).
pub const PD_BOUND_FACTOR: f64 = 168.0;

/// Possibly defective block tuples at one level, canonical and sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PdSet {
    pub level: u32,
    pub k: usize,
    /// Flat, stride `k`.
    tuples: Vec<u32>,
}

impl PdSet {
    fn from_arrays<const K: usize>(level: u32, tuples: &[[u32; K]]) -> Self {
        PdSet {
            level,
            k: K,
            tuples: tuples.iter().flatten().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, u32> {
        self.tuples.chunks_exact(self.k)
    }

    pub fn contains(&self, tuple: &[u32]) -> bool {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.tuples[mid * self.k..(mid + 1) * self.k].cmp(tuple) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecodeResult {
    /// Canonical, sorted.
    pub estimated_edges: Vec<Vec<u32>>,
    /// `|PD|` for `l_min ..= L`.
    pub pd_sizes: Vec<u64>,
    pub outcome_checks: u64,
    /// Tuples eliminated at each processed level, `l_min ..= L`.
    pub eliminations_per_level: Vec<u64>,
    #[serde(skip)]
    pub checks_per_level: Vec<u64>,
    pub wall_time_ms: f64,
    /// Every PD set, when requested through [`DecodeOptions::record_pd`].
    #[serde(skip)]
    pub pd_sets: Vec<PdSet>,
}

impl DecodeResult {
    pub fn pd_max(&self) -> u64 {
        self.pd_sizes.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions {
    /// Probe tuples in parallel within a level.
    pub parallel: bool,
    /// Keep every PD set in the result.
    pub record_pd: bool,
    /// Resource cap on the size of any PD set.
    pub pd_cap: u64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            parallel: true,
            record_pd: false,
            pd_cap: DEFAULT_PD_CAP,
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    let children = binomial((k * k) as u64, k as u64);
    if !(3..=5).contains(&k) || children > MAX_CHILD_TUPLES {
        return Err(Error::Constraint(format!(
            "uniformity k={k} needs C(k^2, k)={children} child tuples per refinement (cap {MAX_CHILD_TUPLES})"
        )));
    }
    Ok(())
}

fn all_tuples<const K: usize>(g: u32) -> Vec<[u32; K]> {
    let mut comb: Vec<u32> = (0..K as u32).collect();
    let mut out = Vec::with_capacity(binomial(g as u64, K as u64) as usize);
    loop {
        let mut t = [0u32; K];
        for (slot, &c) in t.iter_mut().zip(&comb) {
            *slot = c + 1;
        }
        out.push(t);
        if !next_combination(&mut comb, g) {
            break;
        }
    }
    out
}

/// The initial candidate set: every k-subset of the `k^l_min` blocks.
pub fn init_pd(params: &DesignParams) -> Result<PdSet> {
    check_k(params.k)?;
    let g = params.blocks_at(params.l_min);
    if g < params.k as u32 {
        return Err(Error::InvalidInput(format!("{g} blocks cannot hold a {}-tuple", params.k)));
    }
    Ok(match params.k {
        3 => PdSet::from_arrays(params.l_min, &all_tuples::<3>(g)),
        4 => PdSet::from_arrays(params.l_min, &all_tuples::<4>(g)),
        _ => PdSet::from_arrays(params.l_min, &all_tuples::<5>(g)),
    })
}

/// Index patterns selecting k of the k^2 children.
fn child_patterns(k: usize) -> Vec<Vec<u8>> {
    let kk = (k * k) as u32;
    let mut comb: Vec<u32> = (0..k as u32).collect();
    let mut out = Vec::new();
    loop {
        out.push(comb.iter().map(|&c| c as u8).collect());
        if !next_combination(&mut comb, kk) {
            break;
        }
    }
    out
}

/// Children of a canonical tuple at `level`: all k-subsets of the k^2
/// child blocks (block `b` splits into `k(b-1)+1 ..= kb`).
pub fn refine(tuple: &[u32], level: u32, depth: u32) -> Result<Vec<Vec<u32>>> {
    let k = tuple.len();
    check_k(k)?;
    if level >= depth {
        return Err(Error::InvalidLevel { level, max: depth.saturating_sub(1) });
    }
    if tuple.windows(2).any(|w| w[0] >= w[1]) || tuple[0] == 0 {
        return Err(Error::InvalidInput(format!("tuple {tuple:?} is not canonical")));
    }
    let kc = k as u32;
    let children: Vec<u32> = tuple
        .iter()
        .flat_map(|&b| kc * (b - 1) + 1..=kc * b)
        .collect();
    Ok(child_patterns(k)
        .iter()
        .map(|pat| pat.iter().map(|&i| children[i as usize]).collect())
        .collect())
}

/// Scans the iterations of one level design for a negative test holding
/// every block of `tuple`. Returns `(eliminated, iterations examined)`.
#[inline]
fn probe(tuple: &[u32], ld: &LevelDesign, outcomes: &OutcomeTable, base: usize) -> (bool, u64) {
    for it in 0..ld.iterations {
        let t = ld.test_of(it, tuple[0]);
        if tuple[1..].iter().all(|&b| ld.test_of(it, b) == t)
            && !outcomes.is_positive(base + it as usize, t)
        {
            return (true, it as u64 + 1);
        }
    }
    (false, ld.iterations as u64)
}

/// [`probe`] over stored columns; `None` when the design regenerates.
#[inline]
fn probe_stored<const K: usize>(
    tuple: &[u32; K],
    ld: &LevelDesign,
    outcomes: &OutcomeTable,
    base: usize,
) -> Option<(bool, u64)> {
    let mut cols = [&[][..]; K];
    for (c, &b) in cols.iter_mut().zip(tuple) {
        *c = ld.column(b)?;
    }
    for (it, &t) in cols[0].iter().enumerate() {
        if cols[1..].iter().all(|c| c[it] == t) && !outcomes.is_positive(base + it, t) {
            return Some((true, it as u64 + 1));
        }
    }
    Some((false, ld.iterations as u64))
}

/// Whether `tuple` is ruled out at `level` (all final rounds when `level`
/// is the singleton level), with the number of iterations examined.
pub fn is_eliminated(
    tuple: &[u32],
    level: u32,
    design: &TestDesign,
    outcomes: &OutcomeTable,
) -> Result<(bool, u64)> {
    let p = &design.params;
    if tuple.len() != p.k {
        return Err(Error::InvalidInput(format!("tuple {tuple:?} is not a {}-tuple", p.k)));
    }
    let rounds: Vec<&LevelDesign> = if level == p.depth {
        design.final_rounds.iter().collect()
    } else {
        vec![design.level_design(level, 0)?]
    };
    let g = p.blocks_at(level);
    if tuple.iter().any(|&b| b == 0 || b > g) {
        return Err(Error::Index(format!("tuple {tuple:?} outside [1, {g}]")));
    }
    let mut probes = 0;
    for ld in rounds {
        let (gone, used) = probe(tuple, ld, outcomes, outcomes.slice_base(ld.level, ld.round)?);
        probes += used;
        if gone {
            return Ok((true, probes));
        }
    }
    Ok((false, probes))
}

/// Runs the full decoder.
pub fn decode(design: &TestDesign, outcomes: &OutcomeTable) -> Result<DecodeResult> {
    decode_with(design, outcomes, &DecodeOptions::default())
}

pub fn decode_with(
    design: &TestDesign,
    outcomes: &OutcomeTable,
    opts: &DecodeOptions,
) -> Result<DecodeResult> {
    if !outcomes.matches(design) {
        return Err(Error::Config("outcome table does not match the design".into()));
    }
    check_k(design.params.k)?;
    match design.params.k {
        3 => Decoder::<3>::new(design, outcomes, opts).run(),
        4 => Decoder::<4>::new(design, outcomes, opts).run(),
        _ => Decoder::<5>::new(design, outcomes, opts).run(),
    }
}

struct Decoder<'a, const K: usize> {
    design: &'a TestDesign,
    outcomes: &'a OutcomeTable,
    opts: &'a DecodeOptions,
    patterns: Vec<[u8; K]>,
}

impl<'a, const K: usize> Decoder<'a, K> {
    fn new(design: &'a TestDesign, outcomes: &'a OutcomeTable, opts: &'a DecodeOptions) -> Self {
        let patterns = child_patterns(K)
            .into_iter()
            .map(|p| p.try_into().expect("pattern width is K"))
            .collect();
        Decoder { design, outcomes, opts, patterns }
    }

    fn cap(&self, len: usize) -> Result<()> {
        if len as u64 > self.opts.pd_cap {
            return Err(Error::Resource {
                what: "possibly-defective set (tuples)",
                estimate: len as u64,
                cap: self.opts.pd_cap,
            });
        }
        Ok(())
    }

    /// Splits `pd` into survivors, returning them with the probe count.
    fn filter(&self, pd: Vec<[u32; K]>, rounds: &[&LevelDesign]) -> Result<(Vec<[u32; K]>, u64)> {
        let bases = rounds
            .iter()
            .map(|ld| self.outcomes.slice_base(ld.level, ld.round))
            .collect::<Result<Vec<_>>>()?;
        let check = |t: &[u32; K]| -> (bool, u64) {
            let mut probes = 0;
            for (ld, &base) in rounds.iter().zip(&bases) {
                let (gone, used) = probe_stored(t, ld, self.outcomes, base)
                    .unwrap_or_else(|| probe(t, ld, self.outcomes, base));
                probes += used;
                if gone {
                    return (false, probes);
                }
            }
            (true, probes)
        };
        let (kept, probes): (Vec<[u32; K]>, u64) = if self.opts.parallel {
            let marks: Vec<(bool, u64)> = pd.par_iter().map(check).collect();
            let probes = marks.iter().map(|m| m.1).sum();
            let kept = pd.into_iter().zip(marks).filter(|(_, m)| m.0).map(|(t, _)| t).collect();
            (kept, probes)
        } else {
            let mut probes = 0;
            let mut kept = Vec::new();
            for t in pd {
                let (keep, used) = check(&t);
                probes += used;
                if keep {
                    kept.push(t);
                }
            }
            (kept, probes)
        };
        Ok((kept, probes))
    }

    fn refine_all(&self, kept: &[[u32; K]]) -> Result<Vec<[u32; K]>> {
        self.cap(kept.len().saturating_mul(self.patterns.len()))?;
        let kc = K as u32;
        let expand = |t: &[u32; K]| {
            let mut children = [[0u32; K]; K];
            for (slot, &b) in children.iter_mut().zip(t) {
                for (j, c) in slot.iter_mut().enumerate() {
                    *c = kc * (b - 1) + 1 + j as u32;
                }
            }
            self.patterns.iter().map(move |pat| {
                let flat: &[u32] = children.as_flattened();
                let mut child = [0u32; K];
                for (c, &i) in child.iter_mut().zip(pat) {
                    *c = flat[i as usize];
                }
                child
            })
        };
        let mut next: Vec<[u32; K]> = if self.opts.parallel {
            kept.par_iter().flat_map_iter(expand).collect()
        } else {
            kept.iter().flat_map(expand).collect()
        };
        if self.opts.parallel {
            next.par_sort_unstable();
        } else {
            next.sort_unstable();
        }
        next.dedup();
        self.cap(next.len())?;
        Ok(next)
    }

    fn run(self) -> Result<DecodeResult> {
        let start = Instant::now();
        let p = &self.design.params;
        let g0 = p.blocks_at(p.l_min);
        self.cap(binomial(g0 as u64, K as u64).min(u64::MAX as u128) as usize)?;
        let mut pd = all_tuples::<K>(g0);

        let mut pd_sizes = Vec::new();
        let mut eliminations = Vec::new();
        let mut checks = Vec::new();
        let mut pd_sets = Vec::new();

        for level in p.l_min..p.depth {
            let ld = self.design.level_design(level, 0)?;
            pd_sizes.push(pd.len() as u64);
            if self.opts.record_pd {
                pd_sets.push(PdSet::from_arrays(level, &pd));
            }
            let before = pd.len();
            let (kept, probes) = self.filter(pd, &[ld])?;
            eliminations.push((before - kept.len()) as u64);
            checks.push(probes);
            pd = self.refine_all(&kept)?;
        }

        pd_sizes.push(pd.len() as u64);
        if self.opts.record_pd {
            pd_sets.push(PdSet::from_arrays(p.depth, &pd));
        }
        let rounds: Vec<&LevelDesign> = self.design.final_rounds.iter().collect();
        let before = pd.len();
        let (edges, probes) = self.filter(pd, &rounds)?;
        eliminations.push((before - edges.len()) as u64);
        checks.push(probes);

        Ok(DecodeResult {
            estimated_edges: edges.iter().map(|e| e.to_vec()).collect(),
            pd_sizes,
            outcome_checks: checks.iter().sum(),
            eliminations_per_level: eliminations,
            checks_per_level: checks,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            pd_sets,
        })
    }
}

/// COMP over vertex tuples: a k-subset of `[1, n]` is declared an edge iff
/// no negative final-round test holds all of it.
pub fn comp_decode(design: &TestDesign, outcomes: &OutcomeTable, cap: u32) -> Result<Vec<Vec<u32>>> {
    let p = &design.params;
    if p.n > cap {
        return Err(Error::Resource {
            what: "COMP vertex count",
            estimate: p.n as u64,
            cap: cap as u64,
        });
    }
    if !outcomes.matches(design) {
        return Err(Error::Config("outcome table does not match the design".into()));
    }
    let k = p.k;
    let rounds: Vec<(&LevelDesign, usize)> = design
        .final_rounds
        .iter()
        .map(|ld| Ok((ld, outcomes.slice_base(ld.level, ld.round)?)))
        .collect::<Result<_>>()?;
    // split the enumeration by first vertex
    let found: Vec<Vec<Vec<u32>>> = (1..=p.n)
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let rest = k - 1;
            if p.n - first < rest as u32 {
                return out;
            }
            // combinations of (first+1 ..= n) of size k-1, 0-based offsets
            let span = p.n - first;
            let mut comb: Vec<u32> = (0..rest as u32).collect();
            let mut tuple = vec![0u32; k];
            tuple[0] = first;
            loop {
                for (slot, &c) in tuple[1..].iter_mut().zip(&comb) {
                    *slot = first + 1 + c;
                }
                let alive = rounds.iter().all(|(ld, base)| !probe(&tuple, ld, outcomes, *base).0);
                if alive {
                    out.push(tuple.clone());
                }
                if !next_combination(&mut comb, span) {
                    break;
                }
            }
            out
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// `max |PD| <= 168 E_max`.
pub fn assert_pd_bound(pd_sizes: &[u64], e_max: f64) -> bool {
    pd_sizes.iter().all(|&s| s as f64 <= PD_BOUND_FACTOR * e_max)
}
