//! Error counting, calibration statistics and multiplicative operation counts.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::system::Constellation;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Normal-approximation half-width `1.96·sqrt(p(1-p)/n)`.
pub fn half_width(rate: f64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    Z95 * math::sqrt(rate * (1.0 - rate) / total as f64)
}

/// Bit, symbol and frame error tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub bit_errors: u64,
    pub bits: u64,
    pub symbol_errors: u64,
    pub symbols: u64,
    pub frame_errors: u64,
    pub frames: u64,
}

impl ErrorCounts {
    /// Adds one frame. Bit errors are counted between Gray labels of the
    /// real-domain levels.
    pub fn record(&mut self, truth: &[usize], decided: &[usize], constellation: &Constellation) {
        debug_assert_eq!(truth.len(), decided.len());
        let mut frame_bad = false;
        for (&t, &d) in truth.iter().zip(decided) {
            if t != d {
                frame_bad = true;
                self.symbol_errors += 1;
                self.bit_errors += u64::from(constellation.bit_distance(t, d));
            }
        }
        self.symbols += truth.len() as u64;
        self.bits += (truth.len() * constellation.bits_per_level()) as u64;
        self.frames += 1;
        self.frame_errors += u64::from(frame_bad);
    }

    pub fn merge(&mut self, other: &ErrorCounts) {
        self.bit_errors += other.bit_errors;
        self.bits += other.bits;
        self.symbol_errors += other.symbol_errors;
        self.symbols += other.symbols;
        self.frame_errors += other.frame_errors;
        self.frames += other.frames;
    }

    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.bits)
    }

    pub fn ser(&self) -> f64 {
        ratio(self.symbol_errors, self.symbols)
    }

    pub fn fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames)
    }

    pub fn ber_half_width(&self) -> f64 {
        half_width(self.ber(), self.bits)
    }

    pub fn ser_half_width(&self) -> f64 {
        half_width(self.ser(), self.symbols)
    }

    pub fn fer_half_width(&self) -> f64 {
        half_width(self.fer(), self.frames)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Number of equal-width confidence bins.
pub const CALIBRATION_BINS: usize = 10;

/// Floor applied to the second argument of [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-300;

/// `KL(p ‖ q) = Σ p ln(p/q)`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (math::ln(a) - math::ln(b.max(KL_FLOOR))))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    /// Mean predicted max-probability, 0 for an empty bin.
    pub confidence: f64,
    /// Fraction of correct decisions, 0 for an empty bin.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    /// Mean per-symbol `KL(IO ‖ q)`, when exact marginals were supplied.
    pub mean_kl: Option<f64>,
    pub symbols: u64,
}

/// Streaming reliability-diagram and KL accumulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationAccumulator {
    count: [u64; CALIBRATION_BINS],
    confidence: [f64; CALIBRATION_BINS],
    correct: [u64; CALIBRATION_BINS],
    kl_sum: f64,
    kl_count: u64,
}

impl CalibrationAccumulator {
    /// Bins the max-probability of one posterior row; the decision is its
    /// argmax (first on ties).
    pub fn add(&mut self, posterior: &[f64], truth: usize) {
        let (arg, conf) =
            posterior
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                    if p > best.1 {
                        (i, p)
                    } else {
                        best
                    }
                });
        let bin = bin_of(conf);
        self.count[bin] += 1;
        self.confidence[bin] += conf;
        self.correct[bin] += u64::from(arg == truth);
    }

    pub fn add_kl(&mut self, exact: &[f64], approx: &[f64]) {
        self.kl_sum += kl_divergence(exact, approx);
        self.kl_count += 1;
    }

    pub fn merge(&mut self, other: &CalibrationAccumulator) {
        for b in 0..CALIBRATION_BINS {
            self.count[b] += other.count[b];
            self.confidence[b] += other.confidence[b];
            self.correct[b] += other.correct[b];
        }
        self.kl_sum += other.kl_sum;
        self.kl_count += other.kl_count;
    }

    pub fn report(&self) -> CalibrationReport {
        let total: u64 = self.count.iter().sum();
        let mut ece = 0.0;
        let bins = (0..CALIBRATION_BINS)
            .map(|b| {
                let n = self.count[b];
                let (confidence, accuracy) = if n == 0 {
                    (0.0, 0.0)
                } else {
                    (
                        self.confidence[b] / n as f64,
                        self.correct[b] as f64 / n as f64,
                    )
                };
                if total > 0 {
                    ece += n as f64 / total as f64 * (accuracy - confidence).abs();
                }
                ReliabilityBin {
                    lower: b as f64 / CALIBRATION_BINS as f64,
                    upper: (b + 1) as f64 / CALIBRATION_BINS as f64,
                    count: n,
                    confidence,
                    accuracy,
                }
            })
            .collect();
        let mean_kl = (self.kl_count > 0).then(|| self.kl_sum / self.kl_count as f64);
        CalibrationReport {
            bins,
            ece,
            mean_kl,
            symbols: total,
        }
    }
}

fn bin_of(p: f64) -> usize {
    let b = (p * CALIBRATION_BINS as f64) as usize;
    b.min(CALIBRATION_BINS - 1)
}

/// Detector families with a closed-form operation count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MopsDetector {
    CmdMultiClass,
    CmdBinary,
    MatchedFilter,
    Mmse,
}

impl core::str::FromStr for MopsDetector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cmd" | "cmdnet" | "cmd-multiclass" => Ok(Self::CmdMultiClass),
            "cmd-binary" | "cmdnet-binary" => Ok(Self::CmdBinary),
            "mf" => Ok(Self::MatchedFilter),
            "mmse" => Ok(Self::Mmse),
            _ => Err(Error::InvalidParams(alloc::format!(
                "no operation count for detector `{s}`"
            ))),
        }
    }
}

/// Multiplications per detection for `n_tx × n_rx` complex antennas,
/// i.e. `N = 2·n_tx`, `M = 2·n_rx` real dimensions.
///
/// - CMD: `L·N(2M + 4K)`; each layer is two matrix-vector products plus
///   `O(K)` work per symbol.
/// - CMD, binary: `L·2NM`.
/// - MF: `NM`.
/// - MMSE: `MN(N+1)/2` for the symmetric Gram matrix, `NM` for `Hᵀy`, and
///   `(N³ + 3N² - N)/3` for Gaussian elimination with back substitution.
pub fn estimate_mops(
    detector: MopsDetector,
    n_tx: usize,
    n_rx: usize,
    k: usize,
    layers: usize,
) -> u64 {
    let n = 2 * n_tx as u64;
    let m = 2 * n_rx as u64;
    let (k, l) = (k as u64, layers as u64);
    match detector {
        MopsDetector::CmdMultiClass => l * n * (2 * m + 4 * k),
        MopsDetector::CmdBinary => l * 2 * n * m,
        MopsDetector::MatchedFilter => n * m,
        MopsDetector::Mmse => m * n * (n + 1) / 2 + n * m + (n * n * n + 3 * n * n - n) / 3,
    }
}
