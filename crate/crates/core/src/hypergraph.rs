//! Random uniform hypergraphs, balanced block partitions and the
//! edge-detecting query.
//!
//! Vertices and blocks are 1-indexed throughout. A hypergraph on `n_raw`
//! vertices is padded with isolated dummy vertices `n_raw + 1 ..= n` so that
//! `n` is a power of the uniformity `k` (3 by default).

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Geometric};
use serde::Serialize;

use crate::combin::{binomial, binomial_f64, exact_log, next_combination, unrank_lex};
use crate::error::{Error, Result};

/// Below this many expected edges the sampler skips geometrically over
/// triple ranks; at or above it every candidate is enumerated.
pub const SPARSE_SAMPLING_THRESHOLD: f64 = 1e6;

/// Smallest power of three that is at least `n_raw`.
pub fn pad_to_power_of_three(n_raw: u32) -> Result<u32> {
    pad_to_power_of(n_raw, 3)
}

/// Smallest power of `base` that is at least `n_raw` (and at least `base`).
pub fn pad_to_power_of(n_raw: u32, base: u32) -> Result<u32> {
    if base < 2 {
        return Err(Error::InvalidInput(format!("partition base {base} < 2")));
    }
    if n_raw < base {
        return Err(Error::InvalidInput(format!(
            "vertex count {n_raw} is below the minimum of {base}"
        )));
    }
    let mut n = base as u64;
    while n < n_raw as u64 {
        n *= base as u64;
    }
    u32::try_from(n).map_err(|_| Error::InvalidInput(format!("padded size {n} overflows u32")))
}

/// `log_base(n)` for `n` an exact power of `base`.
pub fn depth(n: u32, base: u32) -> Result<u32> {
    exact_log(n as u64, base as u64)
        .ok_or_else(|| Error::InvalidInput(format!("{n} is not a power of {base}")))
}

/// Block of vertex `v` at `level` in the ternary partition of `[1, n]`.
pub fn block_of(v: u32, n: u32, level: u32) -> Result<u32> {
    block_of_base(v, n, 3, level)
}

/// Block of vertex `v` at `level` in the `base`-ary partition of `[1, n]`:
/// the `i` with `(i - 1) * n / base^level < v <= i * n / base^level`.
pub fn block_of_base(v: u32, n: u32, base: u32, level: u32) -> Result<u32> {
    let max = depth(n, base)?;
    if level > max {
        return Err(Error::InvalidLevel { level, max });
    }
    if v == 0 || v > n {
        return Err(Error::InvalidInput(format!("vertex {v} outside [1, {n}]")));
    }
    let size = n / base.pow(level);
    Ok((v - 1) / size + 1)
}

/// Block index without validation. `block_size` is `n / base^level`.
#[inline]
pub(crate) fn block_unchecked(v: u32, block_size: u32) -> u32 {
    (v - 1) / block_size + 1
}

/// Sorted multiset of the blocks holding each vertex of `edge` at `level`.
pub fn edge_block_signature(edge: &[u32], n: u32, level: u32) -> Result<Vec<u32>> {
    let base = edge.len() as u32;
    let mut sig = edge
        .iter()
        .map(|&v| block_of_base(v, n, base.max(2), level))
        .collect::<Result<Vec<_>>>()?;
    sig.sort_unstable();
    Ok(sig)
}

/// How the sparsity of the random model is specified. Exactly one of the
/// three is given; the other two are derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// Edge probability `q`.
    Q(f64),
    /// Sparsity exponent: `q = c * n^{-k(1 - theta)}`.
    Theta(f64),
    /// Expected number of edges.
    MBar(f64),
}

/// Parameters of the Erdős–Rényi model `ER(n, q)` over k-subsets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub n_raw: u32,
    pub n: u32,
    pub k: usize,
    pub q: f64,
    pub m_bar: f64,
    pub theta: f64,
    /// Constant inside `q = c * n^{-k(1 - theta)}`; only used when theta is given.
    pub q_multiplier: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(n_raw: u32, sparsity: Sparsity, seed: u64) -> Result<Self> {
        Self::with_options(n_raw, 3, sparsity, 1.0, seed)
    }

    pub fn with_options(
        n_raw: u32,
        k: usize,
        sparsity: Sparsity,
        q_multiplier: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(2..=16).contains(&k) {
            return Err(Error::InvalidInput(format!("uniformity k={k} outside [2, 16]")));
        }
        let n = pad_to_power_of(n_raw, k as u32)?;
        let candidates = binomial_f64(n_raw as f64, k as u32);
        let ln_n = (n_raw as f64).ln();
        let kf = k as f64;
        let theta_of = |m_bar: f64| if m_bar > 0.0 { m_bar.ln() / (kf * ln_n) } else { 0.0 };

        let (q, m_bar, theta) = match sparsity {
            Sparsity::Q(q) => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidInput(format!("q={q} outside [0, 1]")));
                }
                let m_bar = q * candidates;
                (q, m_bar, theta_of(m_bar))
            }
            Sparsity::Theta(theta) => {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::InvalidInput(format!("theta={theta} outside (0, 1)")));
                }
                if !(q_multiplier > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "q multiplier {q_multiplier} must be positive"
                    )));
                }
                let q = q_multiplier * (n_raw as f64).powf(-kf * (1.0 - theta));
                if q > 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "theta={theta} with multiplier {q_multiplier} gives q={q} > 1"
                    )));
                }
                (q, q * candidates, theta)
            }
            Sparsity::MBar(m_bar) => {
                if !(m_bar >= 0.0 && m_bar <= candidates) {
                    return Err(Error::InvalidInput(format!(
                        "m_bar={m_bar} outside [0, {candidates}]"
                    )));
                }
                (m_bar / candidates, m_bar, theta_of(m_bar))
            }
        };
        Ok(ModelParams {
            n_raw,
            n,
            k,
            q,
            m_bar,
            theta,
            q_multiplier,
            seed,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ModelParams { seed, ..self.clone() }
    }
}

/// A k-uniform hypergraph with canonically ordered edges.
///
/// Edges are stored flat with stride `k`, ascending within each edge and
/// lexicographically across edges, without duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    n_raw: u32,
    n: u32,
    k: usize,
    edges: Vec<u32>,
}

impl Hypergraph {
    /// Builds a hypergraph from arbitrary edges: each edge is sorted, the
    /// list is sorted and deduplicated. Vertices must be distinct and lie in
    /// `[1, n_raw]`; `n` must be a power of `k` with `n >= n_raw`.
    pub fn new<I, E>(n_raw: u32, n: u32, k: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = E>,
        E: AsRef<[u32]>,
    {
        if k < 2 {
            return Err(Error::InvalidInput(format!("uniformity k={k} < 2")));
        }
        depth(n, k as u32)?;
        if n_raw > n || n_raw == 0 {
            return Err(Error::InvalidInput(format!("n_raw={n_raw} not in [1, n={n}]")));
        }
        let mut list: Vec<Vec<u32>> = Vec::new();
        for e in edges {
            let mut e = e.as_ref().to_vec();
            if e.len() != k {
                return Err(Error::InvalidInput(format!(
                    "edge {e:?} has {} vertices, expected {k}",
                    e.len()
                )));
            }
            e.sort_unstable();
            if e.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidInput(format!("edge {e:?} repeats a vertex")));
            }
            if e[0] == 0 || e[k - 1] > n_raw {
                return Err(Error::InvalidInput(format!(
                    "edge {e:?} has a vertex outside [1, {n_raw}]"
                )));
            }
            list.push(e);
        }
        list.sort_unstable();
        list.dedup();
        Ok(Hypergraph {
            n_raw,
            n,
            k,
            edges: list.into_iter().flatten().collect(),
        })
    }

    /// 3-uniform hypergraph on exactly `n` vertices (no padding).
    pub fn from_triples(n: u32, triples: &[[u32; 3]]) -> Result<Self> {
        Self::new(n, n, 3, triples)
    }

    pub fn empty(n_raw: u32, n: u32, k: usize) -> Result<Self> {
        Self::new(n_raw, n, k, std::iter::empty::<[u32; 0]>())
    }

    /// Samples `ER(n_raw, q)`: every k-subset of the first `n_raw` vertices
    /// is an edge independently with probability `q`. Deterministic in
    /// `params.seed`.
    pub fn sample_er(params: &ModelParams) -> Result<Self> {
        let ModelParams { n_raw, n, k, q, .. } = *params;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidInput(format!("q={q} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut edges: Vec<u32> = Vec::new();
        let total = binomial(n_raw as u64, k as u64);
        if q == 0.0 || total == 0 {
            return Self::empty(n_raw, n, k);
        }

        if q * (total as f64) < SPARSE_SAMPLING_THRESHOLD {
            // geometric skipping: gap to the next present rank ~ Geometric(q)
            let gap = Geometric::new(q).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut rank: u128 = 0;
            let mut comb = Vec::with_capacity(k);
            loop {
                let skip = gap.sample(&mut rng) as u128;
                rank = match rank.checked_add(skip) {
                    Some(r) if r < total => r,
                    _ => break,
                };
                unrank_lex(n_raw as u64, k, rank, &mut comb);
                edges.extend(comb.iter().map(|&x| x as u32 + 1));
                rank += 1;
            }
        } else {
            let coin = Bernoulli::new(q).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut comb: Vec<u32> = (0..k as u32).collect();
            loop {
                if coin.sample(&mut rng) {
                    edges.extend(comb.iter().map(|&x| x + 1));
                }
                if !next_combination(&mut comb, n_raw) {
                    break;
                }
            }
        }
        // lexicographic rank order is already canonical
        Ok(Hypergraph { n_raw, n, k, edges })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn n_raw(&self) -> u32 {
        self.n_raw
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> std::slice::ChunksExact<'_, u32> {
        self.edges.chunks_exact(self.k)
    }

    pub fn edge(&self, i: usize) -> &[u32] {
        &self.edges[i * self.k..(i + 1) * self.k]
    }

    /// Number of partition levels, `log_k n`.
    pub fn depth(&self) -> u32 {
        depth(self.n, self.k as u32).expect("n is a power of k by construction")
    }

    /// Whether the sorted k-subset `edge` is an edge.
    pub fn contains_edge(&self, edge: &[u32]) -> bool {
        let m = self.edge_count();
        let (mut lo, mut hi) = (0usize, m);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.edge(mid).cmp(edge) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// Copy of this hypergraph with one more edge.
    pub fn with_edge(&self, edge: &[u32]) -> Result<Self> {
        let all = self.edges().map(|e| e.to_vec()).chain(std::iter::once(edge.to_vec()));
        Self::new(self.n_raw, self.n, self.k, all)
    }

    /// The edge-detecting query: true iff some edge lies entirely inside
    /// `subset`. Vertices outside `[1, n]` are ignored.
    pub fn query(&self, subset: &[u32]) -> bool {
        let mut mask = vec![false; self.n as usize + 1];
        for &v in subset {
            if let Some(slot) = mask.get_mut(v as usize) {
                *slot = true;
            }
        }
        self.query_mask(&mask)
    }

    /// Same as [`Hypergraph::query`] with membership given as a mask
    /// indexed by vertex id (index 0 unused).
    pub fn query_mask(&self, mask: &[bool]) -> bool {
        self.edges()
            .any(|e| e.iter().all(|&v| mask.get(v as usize).copied().unwrap_or(false)))
    }

    /// Writes the text format: `n_raw n m`, then one edge per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_raw, self.n, self.edge_count())?;
        for e in self.edges() {
            let line: Vec<String> = e.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses the text format. Uniformity is the width of the edge lines
    /// (3 when there are none). Duplicate edges, out-of-range ids and
    /// non-ascending lines are rejected.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let nums = parse_ids(&header, 1)?;
        let [n_raw, n, m] = nums[..] else {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header needs 3 fields, got {}", nums.len()),
            });
        };
        let mut k: Option<usize> = None;
        let mut edges: Vec<u32> = Vec::new();
        let mut prev: Option<Vec<u32>> = None;
        let mut count = 0u32;
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let ids = parse_ids(&line, lineno)?;
            let width = *k.get_or_insert(ids.len());
            let err = |msg: String| Error::Parse { line: lineno, msg };
            if ids.len() != width || width < 2 {
                return Err(err(format!("expected {width} vertices, got {}", ids.len())));
            }
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(err("vertices not strictly ascending".into()));
            }
            if ids[0] == 0 || ids[width - 1] > n_raw {
                return Err(err(format!("vertex outside [1, {n_raw}]")));
            }
            if let Some(p) = &prev {
                match p.cmp(&ids) {
                    std::cmp::Ordering::Equal => return Err(err("duplicate edge".into())),
                    std::cmp::Ordering::Greater => {
                        return Err(err("edges not in canonical order".into()))
                    }
                    std::cmp::Ordering::Less => {}
                }
            }
            edges.extend_from_slice(&ids);
            prev = Some(ids);
            count += 1;
        }
        if count != m {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header declares {m} edges, found {count}"),
            });
        }
        let k = k.unwrap_or(3);
        depth(n, k as u32).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        if n_raw == 0 || n_raw > n {
            return Err(Error::Parse {
                line: 1,
                msg: format!("n_raw={n_raw} not in [1, n={n}]"),
            });
        }
        Ok(Hypergraph { n_raw, n, k, edges })
    }
}

fn parse_ids(line: &str, lineno: usize) -> Result<Vec<u32>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<u32>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("{tok:?}: {e}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding() {
        assert_eq!(pad_to_power_of_three(27).unwrap(), 27);
        assert_eq!(pad_to_power_of_three(10).unwrap(), 27);
        assert_eq!(pad_to_power_of_three(28).unwrap(), 81);
        assert_eq!(pad_to_power_of_three(3).unwrap(), 3);
        assert!(matches!(pad_to_power_of_three(2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn blocks() {
        assert_eq!(block_of(1, 27, 1).unwrap(), 1);
        assert_eq!(block_of(10, 27, 1).unwrap(), 2);
        assert_eq!(block_of(27, 27, 3).unwrap(), 27);
        assert_eq!(block_of(27, 27, 0).unwrap(), 1);
        assert!(matches!(
            block_of(1, 27, 4),
            Err(Error::InvalidLevel { level: 4, max: 3 })
        ));
    }

    #[test]
    fn block_partition_sizes() {
        let n = 81;
        for level in 0..=4 {
            let g = 3u32.pow(level);
            let mut counts = vec![0u32; g as usize + 1];
            for v in 1..=n {
                counts[block_of(v, n, level).unwrap() as usize] += 1;
            }
            assert_eq!(counts[0], 0);
            assert!(counts[1..].iter().all(|&c| c == n / g));
        }
    }

    #[test]
    fn signatures() {
        assert_eq!(edge_block_signature(&[1, 2, 3], 27, 1).unwrap(), vec![1, 1, 1]);
        assert_eq!(edge_block_signature(&[1, 10, 19], 27, 1).unwrap(), vec![1, 2, 3]);
        assert_eq!(edge_block_signature(&[1, 2, 10], 27, 1).unwrap(), vec![1, 1, 2]);
    }

    #[test]
    fn queries() {
        let h = Hypergraph::from_triples(27, &[[4, 9, 20]]).unwrap();
        assert!(!h.query(&[]));
        let all: Vec<u32> = (1..=27).collect();
        assert!(h.query(&all));
        assert!(h.query(&[4, 9, 20]));
        assert!(!h.query(&[4, 9, 21]));
    }

    #[test]
    fn construction_canonicalizes() {
        let h = Hypergraph::from_triples(27, &[[3, 2, 1], [1, 2, 3], [5, 1, 2]]).unwrap();
        let edges: Vec<&[u32]> = h.edges().collect();
        assert_eq!(edges, vec![&[1, 2, 3][..], &[1, 2, 5][..]]);
        assert!(h.contains_edge(&[1, 2, 5]));
        assert!(!h.contains_edge(&[1, 2, 4]));
        assert!(Hypergraph::from_triples(27, &[[1, 1, 2]]).is_err());
        assert!(Hypergraph::from_triples(27, &[[1, 2, 28]]).is_err());
        assert!(Hypergraph::from_triples(26, &[]).is_err());
    }

    #[test]
    fn er_extremes() {
        let p = ModelParams::new(27, Sparsity::Q(0.0), 1).unwrap();
        assert!(Hypergraph::sample_er(&p).unwrap().is_empty());
        let p = ModelParams::new(27, Sparsity::Q(1.0), 1).unwrap();
        assert_eq!(Hypergraph::sample_er(&p).unwrap().edge_count(), 2925);
    }

    #[test]
    fn er_dummies_isolated() {
        let p = ModelParams::new(20, Sparsity::Q(1.0), 3).unwrap();
        assert_eq!(p.n, 27);
        let h = Hypergraph::sample_er(&p).unwrap();
        assert_eq!(h.edge_count(), 1140);
        assert!(h.edges().all(|e| e.iter().all(|&v| v <= 20)));
    }

    #[test]
    fn er_dense_route_matches_count() {
        // q * C(n,3) above the sparse threshold takes the enumeration route
        let p = ModelParams::new(200, Sparsity::Q(0.9), 5).unwrap();
        assert!(p.m_bar >= SPARSE_SAMPLING_THRESHOLD);
        let h = Hypergraph::sample_er(&p).unwrap();
        let m = h.edge_count() as f64;
        let sd = (p.m_bar * 0.1).sqrt();
        assert!((m - p.m_bar).abs() < 6.0 * sd);
    }

    #[test]
    fn parameterization() {
        let p = ModelParams::new(729, Sparsity::MBar(20.0), 0).unwrap();
        let c = 729.0 * 728.0 * 727.0 / 6.0;
        assert!((p.q * c - 20.0).abs() < 1e-9);
        assert!((p.theta - 20f64.ln() / (3.0 * 729f64.ln())).abs() < 1e-12);

        let p = ModelParams::new(729, Sparsity::Theta(0.5), 0).unwrap();
        assert!((p.q - 729f64.powf(-1.5)).abs() < 1e-15);
        assert!((p.m_bar - p.q * c).abs() / p.m_bar < 1e-9);
        assert_eq!(p.theta, 0.5);

        let p = ModelParams::new(729, Sparsity::Q(1e-6), 0).unwrap();
        assert!((p.m_bar - 1e-6 * c).abs() / p.m_bar < 1e-9);

        assert!(ModelParams::new(729, Sparsity::Q(1.5), 0).is_err());
        assert!(ModelParams::new(729, Sparsity::Theta(1.0), 0).is_err());
        assert!(ModelParams::new(2, Sparsity::Q(0.5), 0).is_err());
    }

    #[test]
    fn text_roundtrip_and_rejections() {
        let h = Hypergraph::new(20, 27, 3, [[1, 2, 3], [2, 5, 19]]).unwrap();
        let mut buf = Vec::new();
        h.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "20 27 2\n1 2 3\n2 5 19\n");
        assert_eq!(Hypergraph::read_text(&buf[..]).unwrap(), h);

        let bad = [
            "20 27 2\n1 2 3\n1 2 3\n",  // duplicate
            "20 27 1\n1 2 21\n",        // beyond n_raw
            "20 27 1\n2 1 3\n",         // not ascending
            "20 27 2\n2 5 19\n1 2 3\n", // out of order
            "20 26 0\n",                // n not a power of three
            "20 27 2\n1 2 3\n",         // count mismatch
        ];
        for text in bad {
            assert!(Hypergraph::read_text(text.as_bytes()).is_err(), "{text:?}");
        }
    }
}
