#![allow(dead_code)]

use hypersplit::{Hypergraph, LevelStats};

/// Level statistics straight from their definitions: every block, pair and
/// triple is tested for defectivity by querying the union of its vertices.
pub fn brute_force_stats(h: &Hypergraph, level: u32) -> LevelStats {
    let g = 3u32.pow(level);
    let size = h.n() / g;
    let union = |blocks: &[u32]| -> Vec<u32> {
        blocks.iter().flat_map(|&b| (b - 1) * size + 1..=b * size).collect()
    };
    let def1 = |i: u32| h.query(&union(&[i]));
    let def2 = |i: u32, j: u32| h.query(&union(&[i, j]));
    let def3 = |i: u32, j: u32, k: u32| h.query(&union(&[i, j, k]));
    let mut s = LevelStats { level, g, e_g: 0, nu1: 0, nu2: 0, d11: 0, d12: 0, d21: 0 };
    for i in 1..=g {
        s.nu1 += def1(i) as u64;
        for j in i + 1..=g {
            if def2(i, j) && !def1(i) && !def1(j) {
                s.nu2 += 1;
            }
            for k in j + 1..=g {
                s.e_g += def3(i, j, k) as u64;
            }
        }
    }
    for i in (1..=g).filter(|&i| !def1(i)) {
        let d11 = (1..=g).filter(|&j| j != i && !def1(j) && def2(i, j)).count() as u64;
        let mut d12 = 0;
        for j1 in (1..=g).filter(|&j| j != i) {
            for j2 in (j1 + 1..=g).filter(|&j| j != i) {
                if def3(i, j1, j2) && !def2(i, j1) && !def2(i, j2) && !def2(j1, j2) {
                    d12 += 1;
                }
            }
        }
        s.d11 = s.d11.max(d11);
        s.d12 = s.d12.max(d12);
    }
    for i1 in 1..=g {
        for i2 in i1 + 1..=g {
            if def2(i1, i2) {
                continue;
            }
            let d21 = (1..=g)
                .filter(|&j| j != i1 && j != i2 && def3(i1, i2, j) && !def2(i1, j) && !def2(i2, j))
                .count() as u64;
            s.d21 = s.d21.max(d21);
        }
    }
    s
}

/// `P(Binomial(n, p) >= threshold)` by summing the pmf in log space.
pub fn exact_binomial_tail(n: u64, p: f64, threshold: f64) -> f64 {
    let start = threshold.max(0.0).ceil() as u64;
    if start > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if start == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_pmf = n as f64 * lq;
    let mut terms = Vec::new();
    for k in 0..=n {
        if k >= start {
            terms.push(log_pmf);
        }
        if k < n {
            log_pmf += ((n - k) as f64).ln() - ((k + 1) as f64).ln() + lp - lq;
        }
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()).exp().min(1.0)
}

/// `ceil(x)` that ignores float noise just above an integer.
pub fn ceil_loose(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Test count of a hierarchical design from its constants alone.
pub fn expected_tests(n: u32, m_bar: f64, c1: f64, c2: f64, c_prime: f64) -> u64 {
    let depth = (n as f64).log(3.0).round() as u64;
    assert_eq!(3u64.pow(depth as u32), n as u64);
    let tests = ceil_loose(c1 * m_bar.cbrt()).max(1);
    let iterations = ceil_loose(c2 * m_bar.cbrt().powi(2)).max(1);
    let mut l_min = 1;
    while l_min < depth && 27f64.powi(l_min as i32) < m_bar {
        l_min += 1;
    }
    let final_rounds = ceil_loose(c_prime * depth as f64).max(1);
    tests * iterations * ((depth - l_min) + final_rounds)
}
