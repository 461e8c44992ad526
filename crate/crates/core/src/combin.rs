//! Small combinatorics helpers shared by the sampler, the decoder and COMP.

/// Binomial coefficient C(n, r) in u128. Saturates at `u128::MAX`.
pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) is always divisible by (i + 1) at this point
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

/// Binomial coefficient as f64, for parameters where overflow is not a concern.
pub fn binomial_f64(n: f64, r: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..r {
        acc *= (n - i as f64) / (i as f64 + 1.0);
    }
    acc
}

/// Exact integer `base^exp`, or `None` on overflow.
pub fn checked_pow(base: u64, exp: u32) -> Option<u64> {
    base.checked_pow(exp)
}

/// Returns `p` if `n == base^p` for some `p >= 0`.
pub fn exact_log(n: u64, base: u64) -> Option<u32> {
    if n == 0 || base < 2 {
        return None;
    }
    let mut p = 0;
    let mut x = 1u64;
    while x < n {
        x = x.checked_mul(base)?;
        p += 1;
    }
    (x == n).then_some(p)
}

/// Lexicographic rank -> r-combination of `{0, .., n-1}` (ascending, 0-based).
///
/// Ranks are counted over all C(n, r) combinations in lexicographic order,
/// so rank 0 is `[0, 1, .., r-1]`.
pub fn unrank_lex(n: u64, r: usize, mut rank: u128, out: &mut Vec<u64>) {
    out.clear();
    let mut lo = 0u64;
    for pos in 0..r {
        let remaining = (r - pos) as u64;
        let total = binomial(n - lo, remaining);
        // largest x in [lo, n - remaining] with total - C(n - x, remaining) <= rank
        let (mut a, mut b) = (lo, n - remaining);
        while a < b {
            let mid = a + (b - a + 1) / 2;
            if total - binomial(n - mid, remaining) <= rank {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        rank -= total - binomial(n - a, remaining);
        out.push(a);
        lo = a + 1;
    }
}

/// Advances `comb` (ascending r-subset of `{0, .., n-1}`) to its lexicographic
/// successor. Returns false when `comb` was the last combination.
pub fn next_combination(comb: &mut [u32], n: u32) -> bool {
    let r = comb.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if comb[i] < n - (r - i) as u32 {
            comb[i] += 1;
            for j in i + 1..r {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
