//! Gumbel sampling and the concrete (Gumbel-softmax) relaxation of a
//! categorical variable.
//!
//! A categorical draw with probabilities `ρ` is `argmax(ln ρ + g)` for i.i.d.
//! standard Gumbel `g`. Replacing the argmax by a softmax at temperature `τ`
//! gives a point on the simplex whose density has the closed form evaluated by
//! [`concrete_log_density`].

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;

/// Clamp applied to the uniform variate before the double logarithm.
pub const UNIFORM_CLAMP: f64 = 1e-12;

/// Entries at or below this value count as the simplex boundary.
pub const BOUNDARY: f64 = 1e-12;

/// Prior probabilities and temperature of a concrete distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteParams {
    priors: Vec<f64>,
    temperature: f64,
}

impl ConcreteParams {
    pub fn new(priors: Vec<f64>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParams(alloc::format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let sum: f64 = priors.iter().sum();
        if priors.len() < 2 || (sum - 1.0).abs() > 1e-12 || priors.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidParams(
                "priors must be positive and sum to 1".into(),
            ));
        }
        Ok(Self {
            priors,
            temperature,
        })
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

/// Standard Gumbel variate from a uniform `u`, `-ln(-ln u)`.
#[inline]
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -math::ln(-math::ln(u))
}

/// Fills `out` with i.i.d. standard Gumbel samples.
pub fn sample_gumbel_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for g in out.iter_mut() {
        *g = gumbel_from_uniform(rng.random::<f64>());
    }
}

/// `len` i.i.d. standard Gumbel samples.
pub fn sample_gumbel<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut out = alloc::vec![0.0; len];
    sample_gumbel_into(rng, &mut out);
    out
}

/// Draws a class index via the Gumbel-max trick.
pub fn gumbel_max_sample<R: Rng + ?Sized>(priors: &[f64], rng: &mut R) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &p) in priors.iter().enumerate() {
        let v = math::ln(p) + gumbel_from_uniform(rng.random::<f64>());
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Softmax of `logits / τ`, where `logits` already holds `ln ρ + g`.
pub fn tempered_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let mut z = alloc::vec![0.0; logits.len()];
    math::softmax_into(&scaled, &mut z);
    z
}

/// Log-density of the concrete distribution at an interior simplex point.
///
/// `ln[(K-1)! τ^(K-1) Π_k ρ_k z_k^(-τ-1) / (Σ_i ρ_i z_i^(-τ))^K]`, evaluated
/// in the log domain. The density is taken with respect to Lebesgue measure on
/// the first `K-1` coordinates.
pub fn concrete_log_density(z: &[f64], params: &ConcreteParams) -> Result<f64> {
    let k = params.priors.len();
    if z.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: z.len(),
        });
    }
    if let Some(&bad) = z.iter().find(|&&v| !(v > BOUNDARY)) {
        return Err(Error::SimplexBoundary(bad));
    }
    let tau = params.temperature;
    let log_z: Vec<f64> = z.iter().map(|&v| math::ln(v)).collect();
    let log_fact: f64 = (1..k).map(|i| math::ln(i as f64)).sum();
    let mut terms = Vec::with_capacity(k);
    let mut numer = 0.0;
    for (&p, &lz) in params.priors.iter().zip(&log_z) {
        let lp = math::ln(p);
        numer += lp - (tau + 1.0) * lz;
        terms.push(lp - tau * lz);
    }
    let log_denom = math::log_sum_exp(&terms);
    Ok(log_fact + (k as f64 - 1.0) * math::ln(tau) + numer - k as f64 * log_denom)
}

/// Relaxed symbol `zᵀv`.
pub fn relax_to_symbol(z: &[f64], representer: &[f64]) -> Result<f64> {
    if z.len() != representer.len() {
        return Err(Error::DimensionMismatch {
            expected: representer.len(),
            got: z.len(),
        });
    }
    Ok(z.iter().zip(representer).map(|(a, b)| a * b).sum())
}
