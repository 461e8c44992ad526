//! Pooled-test outcomes of a hypergraph under a [`TestDesign`].
//!
//! A test at slice `(level, round, iteration)` holds the union of the
//! blocks assigned to it, so it is positive exactly when some edge has all
//! of its blocks assigned to that test. Outcomes are computed edge by edge,
//! O(m k) per slice, and stored as one packed bit row per slice.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::combin::exact_log;
use crate::error::{Error, Result};
use crate::hypergraph::{block_unchecked, Hypergraph};
use crate::testdesign::{LevelDesign, SliceId, TestDesign};

pub const BINARY_MAGIC: &[u8; 4] = b"HSO1";

/// Outcome bits for every slice of a design.
///
/// Slices are indexed levels first (`(level - l_min) * R + iteration`), then
/// final rounds (`(L - l_min) * R + round * R + iteration`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeTable {
    n: u32,
    tests: u32,
    iterations: u32,
    l_min: u32,
    depth: u32,
    final_rounds: u32,
    words: usize,
    bits: Vec<u64>,
    positive_test_count: u64,
}

impl OutcomeTable {
    fn zeroed(n: u32, tests: u32, iterations: u32, l_min: u32, depth: u32, final_rounds: u32) -> Self {
        let words = (tests as usize).div_ceil(64);
        let slices = iterations as usize * ((depth - l_min) as usize + final_rounds as usize);
        OutcomeTable {
            n,
            tests,
            iterations,
            l_min,
            depth,
            final_rounds,
            words,
            bits: vec![0; slices * words],
            positive_test_count: 0,
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn tests(&self) -> u32 {
        self.tests
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn slice_count(&self) -> usize {
        self.bits.len() / self.words.max(1)
    }

    pub fn positive_test_count(&self) -> u64 {
        self.positive_test_count
    }

    /// Whether this table was produced for `design` (dimension check).
    pub fn matches(&self, design: &TestDesign) -> bool {
        let p = &design.params;
        self.n == p.n
            && self.tests == p.tests
            && self.iterations == p.iterations
            && self.l_min == p.l_min
            && self.depth == p.depth
            && self.final_rounds == p.final_rounds
    }

    /// Index of the first slice of `(level, round)`.
    pub fn slice_base(&self, level: u32, round: u32) -> Result<usize> {
        let r = self.iterations as usize;
        if level == self.depth && round < self.final_rounds {
            Ok(((self.depth - self.l_min) as usize + round as usize) * r)
        } else if level >= self.l_min && level < self.depth && round == 0 {
            Ok((level - self.l_min) as usize * r)
        } else {
            Err(Error::Index(format!("no slices for level {level} round {round}")))
        }
    }

    pub fn slice_index(&self, id: SliceId) -> Result<usize> {
        if id.iteration >= self.iterations {
            return Err(Error::Index(format!("iteration {} >= {}", id.iteration, self.iterations)));
        }
        Ok(self.slice_base(id.level, id.round)? + id.iteration as usize)
    }

    /// Outcome of 0-based `test` in slice number `slice`.
    #[inline]
    pub fn is_positive(&self, slice: usize, test: u32) -> bool {
        let w = self.bits[slice * self.words + (test as usize >> 6)];
        (w >> (test & 63)) & 1 == 1
    }

    /// Outcome of 1-based test `t` in slice `id`.
    pub fn outcome(&self, id: SliceId, t: u32) -> Result<bool> {
        if t == 0 || t > self.tests {
            return Err(Error::Index(format!("test {t} outside [1, {}]", self.tests)));
        }
        Ok(self.is_positive(self.slice_index(id)?, t - 1))
    }

    /// Flips one stored outcome. Only meant for fault-injection tests.
    pub fn corrupt(&mut self, id: SliceId, t: u32) -> Result<()> {
        let s = self.slice_index(id)?;
        if t == 0 || t > self.tests {
            return Err(Error::Index(format!("test {t} outside [1, {}]", self.tests)));
        }
        let word = &mut self.bits[s * self.words + ((t - 1) as usize >> 6)];
        *word ^= 1 << ((t - 1) & 63);
        self.recount();
        Ok(())
    }

    fn recount(&mut self) {
        self.positive_test_count = self.bits.iter().map(|w| w.count_ones() as u64).sum();
    }

    /// Writes `HSO1`, then `n, T, R, level count, final_rounds` as u64 LE,
    /// then every slice in slice order as `ceil(T/8)` bytes, test `t`
    /// (0-based) at bit `t % 8` of byte `t / 8`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        for v in [
            self.n as u64,
            self.tests as u64,
            self.iterations as u64,
            (self.depth - self.l_min) as u64,
            self.final_rounds as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let row_bytes = (self.tests as usize).div_ceil(8);
        let mut buf = Vec::with_capacity(row_bytes);
        for slice in self.bits.chunks_exact(self.words) {
            buf.clear();
            for word in slice {
                buf.extend_from_slice(&word.to_le_bytes());
            }
            w.write_all(&buf[..row_bytes])?;
        }
        Ok(())
    }

    /// Reads the binary format. `k` fixes the partition base, from which the
    /// depth (and so `l_min`) is recovered.
    pub fn read_binary<R: Read>(mut r: R, k: usize) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse { line: 0, msg: format!("bad magic {magic:?}") });
        }
        let mut header = [0u64; 5];
        for v in header.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = u64::from_le_bytes(b);
        }
        let [n, tests, iterations, level_count, final_rounds] = header;
        let bad = |msg: String| Error::Parse { line: 0, msg };
        let n = u32::try_from(n).map_err(|_| bad(format!("n={n} overflows")))?;
        let depth = exact_log(n as u64, k as u64).ok_or_else(|| bad(format!("n={n} is not a power of {k}")))?;
        if level_count > depth as u64 || tests == 0 || tests > u32::MAX as u64 {
            return Err(bad(format!("inconsistent header {header:?}")));
        }
        let mut table = OutcomeTable::zeroed(
            n,
            tests as u32,
            u32::try_from(iterations).map_err(|_| bad("iterations overflow".into()))?,
            depth - level_count as u32,
            depth,
            u32::try_from(final_rounds).map_err(|_| bad("final rounds overflow".into()))?,
        );
        let row_bytes = (tests as usize).div_ceil(8);
        let mut buf = vec![0u8; row_bytes];
        let words = table.words;
        for slice in table.bits.chunks_exact_mut(words) {
            r.read_exact(&mut buf)?;
            for (i, word) in slice.iter_mut().enumerate() {
                let mut b = [0u8; 8];
                let lo = i * 8;
                let hi = (lo + 8).min(row_bytes);
                b[..hi - lo].copy_from_slice(&buf[lo..hi]);
                *word = u64::from_le_bytes(b);
            }
        }
        table.recount();
        Ok(table)
    }
}

/// Runs every test of `design` against `h`.
pub fn evaluate_outcomes(h: &Hypergraph, design: &TestDesign) -> Result<OutcomeTable> {
    let p = &design.params;
    if h.n() != p.n || h.k() != p.k {
        return Err(Error::Config(format!(
            "hypergraph (n={}, k={}) does not match design (n={}, k={})",
            h.n(),
            h.k(),
            p.n,
            p.k
        )));
    }
    let mut table = OutcomeTable::zeroed(p.n, p.tests, p.iterations, p.l_min, p.depth, p.final_rounds);
    let words = table.words;
    let r = p.iterations as usize;
    let k = p.k;

    // one chunk of R slices per level design
    let chunks: Vec<(&LevelDesign, &mut [u64])> = design
        .all_levels()
        .zip(table.bits.chunks_mut(r * words))
        .collect();
    chunks.into_par_iter().for_each(|(ld, bits)| {
        let block_size = p.n / ld.g;
        let sigs: Vec<u32> = h
            .edges()
            .flat_map(|e| e.iter().map(move |&v| block_unchecked(v, block_size)))
            .collect();
        for (it, row) in bits.chunks_mut(words).enumerate() {
            for sig in sigs.chunks_exact(k) {
                let t = ld.test_of(it as u32, sig[0]);
                if sig[1..].iter().all(|&b| ld.test_of(it as u32, b) == t) {
                    row[t as usize >> 6] |= 1 << (t & 63);
                }
            }
        }
    });
    table.recount();
    Ok(table)
}

/// Vertex set of 1-based test `t` in slice `id`: the union of the blocks
/// assigned to it.
pub fn materialize_test(design: &TestDesign, id: SliceId, t: u32) -> Result<Vec<u32>> {
    let ld = design.level_design(id.level, id.round)?;
    if id.iteration >= ld.iterations {
        return Err(Error::Index(format!("iteration {} >= {}", id.iteration, ld.iterations)));
    }
    if t == 0 || t > ld.tests {
        return Err(Error::Index(format!("test {t} outside [1, {}]", ld.tests)));
    }
    let size = design.params.n / ld.g;
    let mut out = Vec::new();
    for b in 1..=ld.g {
        if ld.test_of(id.iteration, b) == t - 1 {
            out.extend((b - 1) * size + 1..=b * size);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testdesign::{DesignConstants, DesignParams};

    fn design(n: u32, m_bar: f64, c: DesignConstants, seed: u64) -> TestDesign {
        TestDesign::build(&DesignParams::new(n, m_bar, 3, &c, seed).unwrap()).unwrap()
    }

    #[test]
    fn empty_hypergraph_is_all_negative() {
        let d = design(27, 3.0, DesignConstants::default(), 1);
        let h = Hypergraph::empty(27, 27, 3).unwrap();
        let t = evaluate_outcomes(&h, &d).unwrap();
        assert_eq!(t.positive_test_count(), 0);
        assert_eq!(t.slice_count() as u64, d.params.slice_count());
    }

    #[test]
    fn edge_inside_one_block_marks_its_test() {
        let d = design(27, 3.0, DesignConstants::default(), 2);
        let h = Hypergraph::from_triples(27, &[[1, 2, 3]]).unwrap();
        let t = evaluate_outcomes(&h, &d).unwrap();
        for ld in &d.levels {
            // block 1 at levels 1 and 2 contains {1,2,3}
            for it in 0..ld.iterations {
                let id = ld.slice_id(it);
                let hit = ld.test_of(it, 1) + 1;
                for test in 1..=ld.tests {
                    assert_eq!(t.outcome(id, test).unwrap(), test == hit);
                }
            }
        }
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let d = design(27, 3.0, DesignConstants::default(), 1);
        let h = Hypergraph::empty(81, 81, 3).unwrap();
        assert!(matches!(evaluate_outcomes(&h, &d), Err(Error::Config(_))));
    }

    #[test]
    fn materialize_single_test() {
        let c = DesignConstants { c1: 0.1, ..DesignConstants::default() };
        let d = design(27, 2.0, c, 3);
        let id = SliceId { level: 1, round: 0, iteration: 0 };
        assert_eq!(materialize_test(&d, id, 1).unwrap(), (1..=27).collect::<Vec<_>>());
        assert!(materialize_test(&d, id, 2).is_err());
    }

    #[test]
    fn materialize_singleton_level() {
        let d = design(27, 3.0, DesignConstants::default(), 4);
        let ld = &d.final_rounds[0];
        let id = ld.slice_id(5);
        let mut union = Vec::new();
        for t in 1..=ld.tests {
            let vs = materialize_test(&d, id, t).unwrap();
            for &v in &vs {
                assert_eq!(ld.test_of(5, v), t - 1);
            }
            union.extend(vs);
        }
        union.sort_unstable();
        assert_eq!(union, (1..=27).collect::<Vec<_>>());
    }

    #[test]
    fn binary_roundtrip() {
        let d = design(81, 5.0, DesignConstants::default(), 5);
        let h = Hypergraph::from_triples(81, &[[1, 2, 3], [4, 30, 70], [10, 11, 50]]).unwrap();
        let t = evaluate_outcomes(&h, &d).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HSO1");
        let row = (d.params.tests as usize).div_ceil(8);
        assert_eq!(buf.len(), 4 + 40 + row * t.slice_count());
        assert_eq!(OutcomeTable::read_binary(&buf[..], 3).unwrap(), t);
        assert!(OutcomeTable::read_binary(&b"HSO2"[..], 3).is_err());
    }
}
