//! Closed-form tail bounds and a seeded Monte Carlo check against them.
//!
//! Bounds are returned raw and may exceed 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::testdesign::mix64;

const TRIALS_PER_CHUNK: u64 = 4096;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}={v} must be > 0")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}={v} must be >= 0")))
    }
}

/// `P(X >= t) <= E[X] / t` for non-negative `X`.
pub fn markov(mean: f64, t: f64) -> Result<f64> {
    non_negative("mean", mean)?;
    positive("t", t)?;
    Ok(mean / t)
}

/// `P(|X - mu| >= t) <= Var(X) / t^2`.
pub fn chebyshev(var: f64, t: f64) -> Result<f64> {
    non_negative("var", var)?;
    positive("t", t)?;
    Ok(var / (t * t))
}

/// `P(X >= (1 + delta) mu) <= exp(-delta^2 mu / (2 + delta))` for a sum of
/// independent Bernoulli variables with mean `mu`.
pub fn chernoff_mult(mu: f64, delta: f64) -> Result<f64> {
    non_negative("mu", mu)?;
    positive("delta", delta)?;
    Ok((-delta * delta * mu / (2.0 + delta)).exp())
}

/// `P(X >= t) <= (e mu / t)^t` for `t >= mu`, evaluated as
/// `exp(t (1 + ln mu - ln t))`. Zero at `mu = 0`.
pub fn chernoff_poisson(mu: f64, t: f64) -> Result<f64> {
    non_negative("mu", mu)?;
    positive("t", t)?;
    if t < mu {
        return Err(Error::Domain(format!("t={t} < mu={mu}")));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok((t * (1.0 + mu.ln() - t.ln())).exp())
}

/// Fraction of `trials` draws of `Binomial(n, p)` that reach `threshold`.
/// Trials run in fixed-size chunks with seeds derived from `seed`, so the
/// result does not depend on the thread count.
pub fn empirical_tail(n: u64, p: f64, threshold: f64, trials: u64, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::Domain(e.to_string()))?;
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(c)));
            let len = TRIALS_PER_CHUNK.min(trials - c * TRIALS_PER_CHUNK);
            (0..len).filter(|_| dist.sample(&mut rng) as f64 >= threshold).count() as u64
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

/// Binomial standard error of an empirical frequency.
pub fn standard_error(freq: f64, trials: u64) -> f64 {
    (freq * (1.0 - freq) / trials as f64).sqrt()
}

/// Inputs of a tail-bound query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailBoundQuery {
    pub n: u64,
    pub p: f64,
    pub mu: f64,
    pub delta: f64,
    pub threshold: f64,
    pub trials: u64,
    pub seed: u64,
}

impl TailBoundQuery {
    /// Threshold `(1 + delta) n p`.
    pub fn new(n: u64, p: f64, delta: f64, trials: u64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("p={p} outside [0, 1]")));
        }
        positive("delta", delta)?;
        let mu = n as f64 * p;
        Ok(TailBoundQuery {
            n,
            p,
            mu,
            delta,
            threshold: (1.0 + delta) * mu,
            trials,
            seed,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    pub inputs: TailBoundQuery,
    /// Multiplicative Chernoff bound at `delta`.
    pub bound: f64,
    /// `(e mu / t)^t` at the same threshold.
    pub poisson_bound: f64,
    pub empirical: f64,
    pub standard_error: f64,
}

pub fn tail_report(q: &TailBoundQuery) -> Result<TailReport> {
    let empirical = empirical_tail(q.n, q.p, q.threshold, q.trials, q.seed)?;
    Ok(TailReport {
        bound: chernoff_mult(q.mu, q.delta)?,
        poisson_bound: if q.threshold > 0.0 { chernoff_poisson(q.mu, q.threshold)? } else { 1.0 },
        empirical,
        standard_error: standard_error(empirical, q.trials),
        inputs: q.clone(),
    })
}
