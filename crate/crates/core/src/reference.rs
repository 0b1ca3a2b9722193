//! Baseline detectors and exact exhaustive-search oracles.

use alloc::vec;
use alloc::vec::Vec;

use crate::cmd::DetectionResult;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::system::{Constellation, SystemInstance};

/// A detector mapping one instance to decisions and (possibly degenerate)
/// posteriors.
pub trait Detector: Send + Sync {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult>;

    /// Whether posteriors carry more than one-hot information.
    fn soft_output(&self) -> bool {
        false
    }
}

impl<D: Detector + ?Sized> Detector for &D {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        (**self).detect(inst, constellation)
    }

    fn soft_output(&self) -> bool {
        (**self).soft_output()
    }
}

impl<D: Detector + ?Sized> Detector for alloc::boxed::Box<D> {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        (**self).detect(inst, constellation)
    }

    fn soft_output(&self) -> bool {
        (**self).soft_output()
    }
}

/// Matched filter: quantizes `Hᵀy` symbol by symbol.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MatchedFilter;

impl Detector for MatchedFilter {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        let x = inst.h.tr_mul_vec(&inst.y);
        let idx = x.iter().map(|&v| constellation.quantize(v)).collect();
        Ok(DetectionResult::hard(idx, x, constellation))
    }
}

/// Linear MMSE equalizer with Gaussian soft outputs.
///
/// `x̃ = (HᵀH + αI)⁻¹Hᵀy` with `α = (σ²/2)/E_s`, `E_s` the average energy per
/// real dimension. Treating the residual of stream `n` as Gaussian gives
/// `x̃_n = μ_n x_n + η_n` with `μ_n = 1 - α[(HᵀH + αI)⁻¹]_nn` and
/// `Var η_n = E_s μ_n (1 - μ_n)`. Posteriors follow from the unbiased
/// estimate `x̂_n = x̃_n/μ_n` with noise variance `E_s (1 - μ_n)/μ_n`:
///
/// `ln q_n(k) = ln ρ_k - (x̂_n - v_k)² μ_n / (2 E_s (1 - μ_n)) + const`.
///
/// Hard decisions quantize `x̂_n`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Mmse;

impl Mmse {
    /// The regularized estimate `x̃` alone.
    pub fn estimate(inst: &SystemInstance, constellation: &Constellation) -> Result<Vec<f64>> {
        let (a, _) = Self::system(inst, constellation);
        a.solve(&inst.h.tr_mul_vec(&inst.y))
    }

    fn system(inst: &SystemInstance, constellation: &Constellation) -> (Matrix, f64) {
        let alpha = inst.real_noise_var() / constellation.real_energy();
        let mut a = inst.h.gram();
        for i in 0..a.rows() {
            a[(i, i)] += alpha;
        }
        (a, alpha)
    }
}

impl Detector for Mmse {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        let (a, alpha) = Self::system(inst, constellation);
        let inv = a.inverse()?;
        let x = inv.mul_vec(&inst.h.tr_mul_vec(&inst.y));
        let es = constellation.real_energy();
        let k = constellation.k();
        let mut log_post = vec![0.0; x.len() * k];
        let mut idx = Vec::with_capacity(x.len());
        for (n, &xn) in x.iter().enumerate() {
            let mu = (1.0 - alpha * inv[(n, n)]).clamp(1e-12, 1.0 - 1e-15);
            let unbiased = xn / mu;
            let var = es * (1.0 - mu) / mu;
            let row = &mut log_post[n * k..(n + 1) * k];
            for (j, (&v, &lp)) in constellation
                .representer()
                .iter()
                .zip(constellation.log_priors())
                .enumerate()
            {
                row[j] = lp - (unbiased - v) * (unbiased - v) / (2.0 * var);
            }
            math::log_softmax_in_place(row);
            idx.push(constellation.quantize(unbiased));
        }
        Ok(DetectionResult::from_log_posteriors(
            idx,
            x,
            &log_post,
            constellation,
        ))
    }

    fn soft_output(&self) -> bool {
        true
    }
}

/// Cap on the number of hypotheses `K^N` an exhaustive oracle may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_search_size: u128,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_search_size: 1 << 20,
        }
    }
}

impl OracleLimits {
    pub fn check(&self, k: usize, n: usize) -> Result<()> {
        let size = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if size > self.max_search_size {
            return Err(Error::SearchTooLarge {
                size,
                limit: self.max_search_size,
            });
        }
        Ok(())
    }
}

/// Visits every `x ∈ S^N` in odometer order and reports `(digits, ‖y - Hx‖²)`.
///
/// The residual is updated incrementally, so each step costs `O(M)` per
/// changed digit.
fn enumerate<F: FnMut(&[usize], f64)>(
    inst: &SystemInstance,
    constellation: &Constellation,
    mut visit: F,
) {
    let n = inst.n();
    let m = inst.m();
    let v = constellation.representer();
    let k = v.len();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| inst.h.column(j)).collect();
    let mut digits = vec![0usize; n];
    let x0 = vec![v[0]; n];
    let hx = inst.h.mul_vec(&x0);
    let mut e: Vec<f64> = inst.y.iter().zip(&hx).map(|(y, h)| y - h).collect();
    loop {
        let dist = e.iter().map(|r| r * r).sum::<f64>();
        visit(&digits, dist);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            let old = digits[pos];
            let new = if old + 1 == k { 0 } else { old + 1 };
            let d = v[new] - v[old];
            let col = &cols[pos];
            for i in 0..m {
                e[i] -= col[i] * d;
            }
            digits[pos] = new;
            if new != 0 {
                break;
            }
            pos += 1;
        }
    }
}

/// Exhaustive joint MAP detector.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MapOracle {
    pub limits: OracleLimits,
}

impl Detector for MapOracle {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        self.limits.check(constellation.k(), inst.n())?;
        let lp = constellation.log_priors();
        let mut best = f64::INFINITY;
        let mut best_digits = vec![0; inst.n()];
        enumerate(inst, constellation, |digits, dist| {
            let cost = dist / inst.sigma2 - digits.iter().map(|&d| lp[d]).sum::<f64>();
            if cost < best {
                best = cost;
                best_digits.copy_from_slice(digits);
            }
        });
        let x = best_digits
            .iter()
            .map(|&i| constellation.representer()[i])
            .collect();
        Ok(DetectionResult::hard(best_digits, x, constellation))
    }
}

/// Exhaustive individually optimal detector: exact per-symbol marginals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IoOracle {
    pub limits: OracleLimits,
}

impl IoOracle {
    /// `N × K` exact log-marginals `ln p(x_n = s_k | y)`.
    pub fn log_marginals(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<Vec<f64>> {
        self.log_marginals_shifted(inst, constellation, 0.0)
    }

    /// As [`Self::log_marginals`] with every joint log-probability offset by
    /// `shift`; the result must not depend on it.
    #[doc(hidden)]
    pub fn log_marginals_shifted(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
        shift: f64,
    ) -> Result<Vec<f64>> {
        self.limits.check(constellation.k(), inst.n())?;
        let k = constellation.k();
        let n = inst.n();
        let lp = constellation.log_priors();
        // running (max, scaled sum) per (symbol, class)
        let mut mx = vec![f64::NEG_INFINITY; n * k];
        let mut acc = vec![0.0; n * k];
        enumerate(inst, constellation, |digits, dist| {
            let lj = shift - dist / inst.sigma2 + digits.iter().map(|&d| lp[d]).sum::<f64>();
            for (i, &d) in digits.iter().enumerate() {
                let slot = i * k + d;
                if lj > mx[slot] {
                    acc[slot] = acc[slot] * math::exp(mx[slot] - lj) + 1.0;
                    mx[slot] = lj;
                } else {
                    acc[slot] += math::exp(lj - mx[slot]);
                }
            }
        });
        let mut out: Vec<f64> = mx.iter().zip(&acc).map(|(m, s)| m + math::ln(*s)).collect();
        for row in out.chunks_exact_mut(k) {
            math::log_softmax_in_place(row);
        }
        Ok(out)
    }
}

impl Detector for IoOracle {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        let k = constellation.k();
        let log_post = self.log_marginals(inst, constellation)?;
        let mut idx = Vec::with_capacity(inst.n());
        let mut x_soft = Vec::with_capacity(inst.n());
        for row in log_post.chunks_exact(k) {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            idx.push(best);
            x_soft.push(
                row.iter()
                    .zip(constellation.representer())
                    .map(|(l, v)| math::exp(*l) * v)
                    .sum(),
            );
        }
        Ok(DetectionResult::from_log_posteriors(
            idx,
            x_soft,
            &log_post,
            constellation,
        ))
    }

    fn soft_output(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Modulation;

    fn bpsk() -> Constellation {
        Constellation::new(Modulation::Bpsk)
    }

    #[test]
    fn matched_filter_scalar() {
        let c = bpsk();
        let inst =
            SystemInstance::from_parts(Matrix::from_rows(&[[2.0]]), 1e-9, vec![2.0], vec![1], &c)
                .unwrap();
        let r = MatchedFilter.detect(&inst, &c).unwrap();
        assert_eq!(r.x_soft, vec![4.0]);
        assert_eq!(r.indices, vec![1]);
    }

    #[test]
    fn mmse_scalar() {
        let c = bpsk();
        let inst =
            SystemInstance::from_parts(Matrix::from_rows(&[[1.0]]), 2.0, vec![0.5], vec![1], &c)
                .unwrap();
        let x = Mmse::estimate(&inst, &c).unwrap();
        assert!((x[0] - 0.25).abs() < 1e-15);
        let r = Mmse.detect(&inst, &c).unwrap();
        assert_eq!(r.indices, vec![1]);
        assert!((r.posterior_row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_two_by_two_enumeration() {
        let c = bpsk();
        let h = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]);
        let inst =
            SystemInstance::from_parts(h.clone(), 1.0, vec![0.1, -0.2], vec![0, 0], &c).unwrap();
        // brute force by hand over the four candidates
        let mut best = (f64::INFINITY, [0usize; 2]);
        for a in 0..2 {
            for b in 0..2 {
                let x = [c.representer()[a], c.representer()[b]];
                let hx = h.mul_vec(&x);
                let d = (0.1 - hx[0]).powi(2) + (-0.2 - hx[1]).powi(2);
                if d < best.0 {
                    best = (d, [a, b]);
                }
            }
        }
        let r = MapOracle::default().detect(&inst, &c).unwrap();
        assert_eq!(r.indices, best.1.to_vec());
    }

    #[test]
    fn oracle_limits_enforced() {
        let c = bpsk();
        let inst =
            SystemInstance::from_parts(Matrix::identity(21), 1.0, vec![0.0; 21], vec![0; 21], &c)
                .unwrap();
        assert!(matches!(
            MapOracle::default().detect(&inst, &c),
            Err(Error::SearchTooLarge { .. })
        ));
        assert!(matches!(
            IoOracle::default().detect(&inst, &c),
            Err(Error::SearchTooLarge { .. })
        ));
        let tight = OracleLimits { max_search_size: 4 };
        assert!(tight.check(2, 2).is_ok());
        assert!(tight.check(2, 3).is_err());
    }

    #[test]
    fn io_symmetric_at_zero_observation() {
        let c = Constellation::new(Modulation::Qam16);
        let h = Matrix::from_rows(&[[1.0, 0.3], [-0.2, 0.8], [0.5, 0.5]]);
        let inst = SystemInstance::from_parts(h, 0.7, vec![0.0; 3], vec![0, 0], &c).unwrap();
        let r = IoOracle::default().detect(&inst, &c).unwrap();
        for row in r.posterior_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((row[0] - row[3]).abs() < 1e-12 && (row[1] - row[2]).abs() < 1e-12);
            assert!(row[1] > row[0]);
        }
    }

    #[test]
    fn io_single_symbol_matches_bayes() {
        let c = Constellation::new(Modulation::Qam16)
            .with_priors(vec![0.1, 0.2, 0.3, 0.4])
            .unwrap();
        let (h, y, s2) = (0.8, 0.2, 0.6);
        let inst = SystemInstance::from_parts(Matrix::from_rows(&[[h]]), s2, vec![y], vec![0], &c)
            .unwrap();
        let got = IoOracle::default().detect(&inst, &c).unwrap();
        let w: Vec<f64> = c
            .representer()
            .iter()
            .zip(c.priors())
            .map(|(v, p)| p * (-(y - h * v) * (y - h * v) / (2.0 * s2 / 2.0)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        for (g, e) in got.posterior.iter().zip(&w) {
            assert!((g - e / z).abs() < 1e-12);
        }
    }

    #[test]
    fn io_is_shift_invariant() {
        let c = Constellation::new(Modulation::Qpsk);
        let h = Matrix::from_rows(&[[1.0, 0.3, -0.4], [-0.2, 0.8, 0.1], [0.5, 0.5, 0.9]]);
        let inst =
            SystemInstance::from_parts(h, 0.05, vec![0.3, -0.9, 1.1], vec![0, 1, 1], &c).unwrap();
        let io = IoOracle::default();
        let a = io.log_marginals(&inst, &c).unwrap();
        for shift in [-1e5, 1e5, 700.0] {
            let b = io.log_marginals_shifted(&inst, &c, shift).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x.exp() - y.exp()).abs() < 1e-9);
            }
        }
    }
}
