//! Level statistics of a 3-uniform hypergraph and the typical-set check.
//!
//! At level `l` the vertices fall into `g = 3^l` blocks. A block, pair or
//! triple of blocks is *defective* when the union of its vertices holds an
//! edge. Everything here is derived from the edges' block supports (the set
//! of distinct blocks an edge touches), so a level costs O(m g) rather than
//! O(g^3).

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::combin::binomial;
use crate::error::{Error, Result};
use crate::hypergraph::{block_unchecked, Hypergraph, ModelParams};
use crate::testdesign::first_level;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelStats {
    pub level: u32,
    pub g: u32,
    /// Defective triples of distinct blocks.
    pub e_g: u64,
    /// Defective blocks.
    pub nu1: u64,
    /// Defective pairs whose blocks are both non-defective.
    pub nu2: u64,
    pub d11: u64,
    pub d12: u64,
    pub d21: u64,
}

type Pair = (u32, u32);
type Triple = (u32, u32, u32);

/// Distinct block supports of the edges at one level.
struct Supports {
    g: u32,
    defective: Vec<bool>,
    pairs: HashSet<Pair>,
    triples: HashSet<Triple>,
}

impl Supports {
    fn new(h: &Hypergraph, level: u32) -> Result<Self> {
        let g = level_blocks(h, level)?;
        let size = h.n() / g;
        let mut s = Supports {
            g,
            defective: vec![false; g as usize + 1],
            pairs: HashSet::new(),
            triples: HashSet::new(),
        };
        for e in h.edges() {
            let mut b = [
                block_unchecked(e[0], size),
                block_unchecked(e[1], size),
                block_unchecked(e[2], size),
            ];
            b.sort_unstable();
            match (b[0] == b[1], b[1] == b[2]) {
                (true, true) => s.defective[b[0] as usize] = true,
                (true, false) => {
                    s.pairs.insert((b[0], b[2]));
                }
                (false, true) => {
                    s.pairs.insert((b[0], b[1]));
                }
                (false, false) => {
                    s.triples.insert((b[0], b[1], b[2]));
                }
            }
        }
        Ok(s)
    }

    fn block_ok(&self, b: u32) -> bool {
        !self.defective[b as usize]
    }

    fn pair_defective(&self, x: u32, y: u32) -> bool {
        let p = if x < y { (x, y) } else { (y, x) };
        !self.block_ok(x) || !self.block_ok(y) || self.pairs.contains(&p)
    }

    /// Pair supports with both blocks non-defective.
    fn clean_pairs(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(|&&(x, y)| self.block_ok(x) && self.block_ok(y))
    }

    /// Triple supports all of whose pairs are non-defective.
    fn clean_triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter().filter(|&&(a, b, c)| {
            !self.pair_defective(a, b) && !self.pair_defective(a, c) && !self.pair_defective(b, c)
        })
    }
}

fn level_blocks(h: &Hypergraph, level: u32) -> Result<u32> {
    if h.k() != 3 {
        return Err(Error::InvalidInput(format!(
            "level statistics are defined for 3-uniform hypergraphs, got k={}",
            h.k()
        )));
    }
    let max = h.depth();
    if level == 0 || level > max {
        return Err(Error::InvalidLevel { level, max });
    }
    Ok(3u32.pow(level))
}

/// Whether block `i` at `level` holds an edge.
pub fn defective_block(h: &Hypergraph, level: u32, i: u32) -> Result<bool> {
    let max = h.depth();
    if level > max {
        return Err(Error::InvalidLevel { level, max });
    }
    let g = 3u32.pow(level);
    if i == 0 || i > g {
        return Err(Error::Index(format!("block {i} outside [1, {g}]")));
    }
    let size = h.n() / g;
    Ok(h.edges().any(|e| e.iter().all(|&v| block_unchecked(v, size) == i)))
}

/// The level block hypergraph: every defective triple `i < j < k` of
/// distinct blocks, in lexicographic order.
pub fn level_block_hypergraph(h: &Hypergraph, level: u32) -> Result<Vec<[u32; 3]>> {
    let s = Supports::new(h, level)?;
    let g = s.g;
    let mut out: HashSet<[u32; 3]> = HashSet::new();
    let mut push = |mut t: [u32; 3]| {
        t.sort_unstable();
        out.insert(t);
    };
    for d in (1..=g).filter(|&b| !s.block_ok(b)) {
        for x in 1..=g {
            for y in x + 1..=g {
                if x != d && y != d {
                    push([d, x, y]);
                }
            }
        }
    }
    for &(x, y) in &s.pairs {
        for z in (1..=g).filter(|&z| z != x && z != y) {
            push([x, y, z]);
        }
    }
    for &(a, b, c) in &s.triples {
        push([a, b, c]);
    }
    let mut out: Vec<[u32; 3]> = out.into_iter().collect();
    out.sort_unstable();
    Ok(out)
}

/// All level statistics at `level`.
pub fn compute_level_stats(h: &Hypergraph, level: u32) -> Result<LevelStats> {
    let s = Supports::new(h, level)?;
    let g = s.g;
    let nu1 = s.defective[1..].iter().filter(|&&d| d).count() as u64;

    // triples touching a defective block, then those made defective by a
    // clean pair support or a clean triple support
    let mut e_g = (binomial(g as u64, 3) - binomial(g as u64 - nu1, 3)) as u64;
    let mut extra: HashSet<Triple> = HashSet::new();
    let mut nu2 = 0u64;
    let mut degree: HashMap<u32, u64> = HashMap::new();
    for &(x, y) in s.clean_pairs() {
        nu2 += 1;
        *degree.entry(x).or_default() += 1;
        *degree.entry(y).or_default() += 1;
        for z in (1..=g).filter(|&z| z != x && z != y && s.block_ok(z)) {
            let mut t = [x, y, z];
            t.sort_unstable();
            extra.insert((t[0], t[1], t[2]));
        }
    }
    let mut through_block: HashMap<u32, u64> = HashMap::new();
    let mut through_pair: HashMap<Pair, u64> = HashMap::new();
    for &(a, b, c) in s.clean_triples() {
        extra.insert((a, b, c));
        for x in [a, b, c] {
            *through_block.entry(x).or_default() += 1;
        }
        for p in [(a, b), (a, c), (b, c)] {
            *through_pair.entry(p).or_default() += 1;
        }
    }
    // triples containing a clean pair support are disjoint from those
    // touching a defective block, since z ranges over clean blocks only
    e_g += extra.len() as u64;

    Ok(LevelStats {
        level,
        g,
        e_g,
        nu1,
        nu2,
        d11: degree.values().copied().max().unwrap_or(0),
        d12: through_block.values().copied().max().unwrap_or(0),
        d21: through_pair.values().copied().max().unwrap_or(0),
    })
}

/// `min(1/2, sqrt(6 ln n / m_bar))`.
pub fn default_epsilon(n: u32, m_bar: f64) -> f64 {
    if m_bar <= 0.0 {
        return 0.5;
    }
    (6.0 * (n as f64).ln() / m_bar).sqrt().min(0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaBranch {
    /// theta > 2/3
    Dense,
    /// theta <= 2/3
    Sparse,
}

impl ThetaBranch {
    pub fn of(theta: f64) -> Self {
        if theta > 2.0 / 3.0 {
            ThetaBranch::Dense
        } else {
            ThetaBranch::Sparse
        }
    }
}

/// Upper bound on `|E_g|`: `12 m_bar` for theta > 2/3, else
/// `2 m_bar ln^2 m_bar`.
pub fn e_max(m_bar: f64, theta: f64) -> f64 {
    if m_bar <= 0.0 {
        return 0.0;
    }
    match ThetaBranch::of(theta) {
        ThetaBranch::Dense => 12.0 * m_bar,
        ThetaBranch::Sparse => 2.0 * m_bar * m_bar.ln().powi(2),
    }
}

/// Per-level bounds of the typical set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelBounds {
    pub e_g: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
}

impl LevelBounds {
    pub fn new(m_bar: f64, theta: f64, g: u32) -> Self {
        let m = m_bar.max(0.0);
        let g = g as f64;
        let (nu1, nu2) = match ThetaBranch::of(theta) {
            ThetaBranch::Dense => (3.0 * m / (g * g), 9.0 * m / g),
            ThetaBranch::Sparse => (3.0 * m.cbrt(), 9.0 * m.powf(2.0 / 3.0)),
        };
        LevelBounds {
            e_g: e_max(m_bar, theta),
            nu1,
            nu2,
            d11: 18.0 * m.cbrt(),
            d12: 9.0 * m.powf(2.0 / 3.0),
            d21: 18.0 * m.cbrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LevelPass {
    pub e_g: bool,
    pub nu1: bool,
    pub nu2: bool,
    pub d11: bool,
    pub d12: bool,
    pub d21: bool,
}

impl LevelPass {
    pub fn all(&self) -> bool {
        self.e_g && self.nu1 && self.nu2 && self.d11 && self.d12 && self.d21
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelCheck {
    pub level: u32,
    pub g: u32,
    pub e_g: u64,
    pub nu1: u64,
    pub nu2: u64,
    pub d11: u64,
    pub d12: u64,
    pub d21: u64,
    pub bounds: LevelBounds,
    pub pass: LevelPass,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypicalityReport {
    pub epsilon_n: f64,
    pub theta: f64,
    pub branch: ThetaBranch,
    pub m: u64,
    pub m_bar: f64,
    /// `(1 - eps) m_bar <= m <= (1 + eps) m_bar`.
    pub edge_count_pass: bool,
    pub levels: Vec<LevelCheck>,
    pub overall: bool,
}

/// Levels checked for a given `m_bar`: `max(1, ceil(log3 m_bar^{1/3})) ..= L`.
pub fn checked_levels(m_bar: f64, depth: u32) -> std::ops::RangeInclusive<u32> {
    first_level(m_bar, 3).clamp(1, depth)..=depth
}

/// Checks `h` against the typical-set bounds for `params`. Failures are
/// reported, never raised.
pub fn check_typicality(
    h: &Hypergraph,
    params: &ModelParams,
    epsilon_n: f64,
) -> Result<TypicalityReport> {
    let m = h.edge_count() as u64;
    let m_bar = params.m_bar;
    let edge_count_pass =
        (1.0 - epsilon_n) * m_bar <= m as f64 && m as f64 <= (1.0 + epsilon_n) * m_bar;
    let levels: Vec<u32> = checked_levels(m_bar, h.depth()).collect();
    let levels = levels
        .par_iter()
        .map(|&level| {
            let s = compute_level_stats(h, level)?;
            let b = LevelBounds::new(m_bar, params.theta, s.g);
            let pass = LevelPass {
                e_g: s.e_g as f64 <= b.e_g,
                nu1: s.nu1 as f64 <= b.nu1,
                nu2: s.nu2 as f64 <= b.nu2,
                d11: s.d11 as f64 <= b.d11,
                d12: s.d12 as f64 <= b.d12,
                d21: s.d21 as f64 <= b.d21,
            };
            Ok(LevelCheck {
                level,
                g: s.g,
                e_g: s.e_g,
                nu1: s.nu1,
                nu2: s.nu2,
                d11: s.d11,
                d12: s.d12,
                d21: s.d21,
                bounds: b,
                pass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let overall = edge_count_pass && levels.iter().all(|l| l.pass.all());
    Ok(TypicalityReport {
        epsilon_n,
        theta: params.theta,
        branch: ThetaBranch::of(params.theta),
        m,
        m_bar,
        edge_count_pass,
        levels,
        overall,
    })
}
