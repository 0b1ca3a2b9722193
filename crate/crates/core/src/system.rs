//! The linear Gaussian observation model `y = Hx + n` in real-valued form.
//!
//! Complex channels are drawn with taps `CN(0, 1/Nr)` and stacked into the
//! real-valued equivalent `[[Re H, -Im H], [Im H, Re H]]`. Noise of complex
//! variance `σ²` therefore has variance `σ²/2` per real dimension, and all
//! detectors work exclusively on the real model.
//!
//! BPSK symbols are real, so their imaginary half carries no data: for BPSK
//! the real model keeps only the columns `[Re H; Im H]`, giving a
//! `2Nr × Nt` system with `Nt` binary unknowns.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

/// Supported symbol alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    /// Number of points of the complex constellation.
    pub fn complex_order(self) -> usize {
        match self {
            Modulation::Bpsk => 2,
            Modulation::Qpsk => 4,
            Modulation::Qam16 => 16,
        }
    }

    /// `log2` of the complex order.
    pub fn bits_per_symbol(self) -> usize {
        self.complex_order().trailing_zeros() as usize
    }

    /// Whether symbols occupy only the in-phase dimension.
    pub fn is_real(self) -> bool {
        matches!(self, Modulation::Bpsk)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" | "4qam" | "qam4" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            _ => Err(Error::UnsupportedModulation(s.into())),
        }
    }
}

/// Real-domain symbol alphabet: representer levels, priors and Gray labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    representer: Vec<f64>,
    priors: Vec<f64>,
    log_priors: Vec<f64>,
    bit_labels: Vec<u32>,
    bits_per_level: usize,
}

impl Constellation {
    /// Builds the real-domain alphabet of `modulation` with uniform priors.
    pub fn new(modulation: Modulation) -> Self {
        let representer: Vec<f64> = match modulation {
            Modulation::Bpsk => vec![-1.0, 1.0],
            Modulation::Qpsk => {
                let a = core::f64::consts::FRAC_1_SQRT_2;
                vec![-a, a]
            }
            Modulation::Qam16 => {
                let s = math::sqrt(10.0);
                vec![-3.0 / s, -1.0 / s, 1.0 / s, 3.0 / s]
            }
        };
        let k = representer.len();
        let bits_per_level = k.trailing_zeros() as usize;
        let bit_labels = (0..k as u32).map(|i| i ^ (i >> 1)).collect();
        let priors = vec![1.0 / k as f64; k];
        let log_priors = priors.iter().map(|&p| math::ln(p)).collect();
        Self {
            modulation,
            representer,
            priors,
            log_priors,
            bit_labels,
            bits_per_level,
        }
    }

    /// Same alphabet with non-uniform priors.
    pub fn with_priors(mut self, priors: Vec<f64>) -> Result<Self> {
        if priors.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: priors.len(),
            });
        }
        let sum: f64 = priors.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || priors.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "priors must be positive and sum to 1 (sum = {sum})"
            )));
        }
        self.log_priors = priors.iter().map(|&p| math::ln(p)).collect();
        self.priors = priors;
        Ok(self)
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    /// Number of real-domain classes `K`.
    pub fn k(&self) -> usize {
        self.representer.len()
    }

    pub fn representer(&self) -> &[f64] {
        &self.representer
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    /// Gray label of each level, least significant bit first when expanded.
    pub fn bit_labels(&self) -> &[u32] {
        &self.bit_labels
    }

    /// Bits carried by one real-domain symbol.
    pub fn bits_per_level(&self) -> usize {
        self.bits_per_level
    }

    /// `ρᵀv`, the prior mean of a real symbol.
    pub fn mean(&self) -> f64 {
        self.priors
            .iter()
            .zip(&self.representer)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// Average energy per real dimension, `Σ ρ_k v_k²`.
    pub fn real_energy(&self) -> f64 {
        self.priors
            .iter()
            .zip(&self.representer)
            .map(|(p, v)| p * v * v)
            .sum()
    }

    /// Average energy of the complex symbol.
    pub fn complex_energy(&self) -> f64 {
        if self.modulation.is_real() {
            self.real_energy()
        } else {
            2.0 * self.real_energy()
        }
    }

    /// Index of the level nearest to `x`; ties go to the smaller index.
    pub fn quantize(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &v) in self.representer.iter().enumerate() {
            let d = (x - v).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Draws a class index from the priors.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.k() - 1
    }

    /// Number of bit positions in which two level indices differ.
    pub fn bit_distance(&self, a: usize, b: usize) -> u32 {
        (self.bit_labels[a] ^ self.bit_labels[b]).count_ones()
    }
}

/// Supported names for [`Constellation`] construction.
pub fn build_constellation(name: &str) -> Result<Constellation> {
    Ok(Constellation::new(name.parse()?))
}

/// Statistical model of the complex channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    /// i.i.d. `CN(0, 1/Nr)` taps.
    IidGaussian,
    /// Each column gets receive correlation `R_ij = c^|i-j|`.
    ColumnCorrelated(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub model: ChannelModel,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn iid(n_tx: usize, n_rx: usize) -> Self {
        Self {
            n_tx,
            n_rx,
            model: ChannelModel::IidGaussian,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::InvalidChannel("n_tx and n_rx must be at least 1"));
        }
        if let ChannelModel::ColumnCorrelated(c) = self.model {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::InvalidChannel(
                    "correlation coefficient must lie in [0, 1)",
                ));
            }
        }
        Ok(())
    }

    /// Receive-correlation square root, `None` for the i.i.d. model.
    fn correlation_root(&self) -> Result<Option<Matrix>> {
        match self.model {
            ChannelModel::IidGaussian => Ok(None),
            ChannelModel::ColumnCorrelated(c) => {
                let n = self.n_rx;
                let mut r = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        r[(i, j)] = math::powf(c, (i as f64 - j as f64).abs());
                    }
                }
                r.cholesky().map(Some)
            }
        }
    }
}

/// Dense complex matrix, only used before the transformation to real form.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }
}

/// Real-valued equivalent `[[Re H, -Im H], [Im H, Re H]]` of a complex matrix.
pub fn complex_to_real(h: &ComplexMatrix) -> Matrix {
    let (nr, nt) = (h.rows, h.cols);
    let mut out = Matrix::zeros(2 * nr, 2 * nt);
    for i in 0..nr {
        for j in 0..nt {
            let c = h.get(i, j);
            out[(i, j)] = c.re;
            out[(i, j + nt)] = -c.im;
            out[(i + nr, j)] = c.im;
            out[(i + nr, j + nt)] = c.re;
        }
    }
    out
}

/// Stacks a complex vector as `[Re x; Im x]`.
pub fn stack_complex(x: &[Complex64]) -> Vec<f64> {
    x.iter()
        .map(|c| c.re)
        .chain(x.iter().map(|c| c.im))
        .collect()
}

/// Real model matrix used by detectors for `constellation`.
///
/// Complex alphabets use the full block form; BPSK keeps `[Re H; Im H]`.
pub fn real_model_matrix(h: &ComplexMatrix, constellation: &Constellation) -> Matrix {
    let full = complex_to_real(h);
    if !constellation.modulation().is_real() {
        return full;
    }
    let mut out = Matrix::zeros(full.rows(), h.cols);
    for i in 0..full.rows() {
        for j in 0..h.cols {
            out[(i, j)] = full[(i, j)];
        }
    }
    out
}

/// Draws a complex `Nr × Nt` channel realization.
pub fn sample_complex_channel<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    cfg.validate()?;
    let (nr, nt) = (cfg.n_rx, cfg.n_tx);
    let std = math::sqrt(0.5 / nr as f64);
    let mut data: Vec<Complex64> = (0..nr * nt)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(std * re, std * im)
        })
        .collect();
    if let Some(root) = cfg.correlation_root()? {
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        for j in 0..nt {
            for (i, c) in col.iter_mut().enumerate() {
                *c = (0..=i).fold(Complex64::new(0.0, 0.0), |acc, k| {
                    acc + data[k * nt + j] * root[(i, k)]
                });
            }
            for i in 0..nr {
                data[i * nt + j] = col[i];
            }
        }
    }
    ComplexMatrix::new(nr, nt, data)
}

/// Draws a channel and returns its full `2Nr × 2Nt` real equivalent.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<Matrix> {
    Ok(complex_to_real(&sample_complex_channel(cfg, rng)?))
}

/// Complex noise variance `σ²` for a given Eb/N0 in dB.
///
/// Uses `Eb/N0 = 10 log10(1/σ²) - 10 log10(log2 M)` with `M` the complex
/// constellation order.
pub fn sigma2_from_ebn0(ebn0_db: f64, constellation: &Constellation) -> f64 {
    let bits = constellation.modulation().bits_per_symbol() as f64;
    math::powf(10.0, -(ebn0_db + 10.0 * math::log10(bits)) / 10.0)
}

/// Inverse of [`sigma2_from_ebn0`].
pub fn ebn0_from_sigma2(sigma2: f64, constellation: &Constellation) -> f64 {
    let bits = constellation.modulation().bits_per_symbol() as f64;
    10.0 * math::log10(1.0 / sigma2) - 10.0 * math::log10(bits)
}

/// One realization of the real-valued model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInstance {
    /// `M × N` real model matrix.
    pub h: Matrix,
    /// Complex noise variance; each real dimension carries `σ²/2`.
    pub sigma2: f64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub x_indices: Vec<usize>,
}

impl SystemInstance {
    /// Assembles an instance from explicit parts. `x` is taken from the
    /// constellation levels at `x_indices`.
    pub fn from_parts(
        h: Matrix,
        sigma2: f64,
        y: Vec<f64>,
        x_indices: Vec<usize>,
        constellation: &Constellation,
    ) -> Result<Self> {
        if y.len() != h.rows() {
            return Err(Error::DimensionMismatch {
                expected: h.rows(),
                got: y.len(),
            });
        }
        if x_indices.len() != h.cols() {
            return Err(Error::DimensionMismatch {
                expected: h.cols(),
                got: x_indices.len(),
            });
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        let x = x_indices
            .iter()
            .map(|&i| constellation.representer()[i])
            .collect();
        Ok(Self {
            h,
            sigma2,
            y,
            x,
            x_indices,
        })
    }

    /// Real transmit dimension `N`.
    pub fn n(&self) -> usize {
        self.h.cols()
    }

    /// Real receive dimension `M`.
    pub fn m(&self) -> usize {
        self.h.rows()
    }

    /// Noise variance per real dimension.
    pub fn real_noise_var(&self) -> f64 {
        self.sigma2 / 2.0
    }

    /// `ln p(y | x)` up to the `x`-independent normalizer.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul_vec(x);
        -hx.iter()
            .zip(&self.y)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            / self.sigma2
    }
}

/// Draws symbols and noise for a fixed real model matrix.
pub fn sample_instance_for_channel<R: Rng + ?Sized>(
    h: Matrix,
    constellation: &Constellation,
    sigma2: f64,
    rng: &mut R,
) -> Result<SystemInstance> {
    let x_indices: Vec<usize> = (0..h.cols())
        .map(|_| constellation.sample_index(rng))
        .collect();
    let x: Vec<f64> = x_indices
        .iter()
        .map(|&i| constellation.representer()[i])
        .collect();
    let std = math::sqrt(sigma2 / 2.0);
    let mut y = h.mul_vec(&x);
    for yi in &mut y {
        let n: f64 = rng.sample(StandardNormal);
        *yi += std * n;
    }
    SystemInstance::from_parts(h, sigma2, y, x_indices, constellation)
}

/// Draws a full instance (channel, symbols, noise) at noise variance `sigma2`.
pub fn sample_instance_sigma2<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    constellation: &Constellation,
    sigma2: f64,
    rng: &mut R,
) -> Result<SystemInstance> {
    let hc = sample_complex_channel(cfg, rng)?;
    let h = real_model_matrix(&hc, constellation);
    sample_instance_for_channel(h, constellation, sigma2, rng)
}

/// Draws a full instance at the given Eb/N0.
pub fn sample_instance<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    constellation: &Constellation,
    ebn0_db: f64,
    rng: &mut R,
) -> Result<SystemInstance> {
    sample_instance_sigma2(
        cfg,
        constellation,
        sigma2_from_ebn0(ebn0_db, constellation),
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    #[test]
    #[allow(clippy::approx_constant)]
    fn representers() {
        let b = Constellation::new(Modulation::Bpsk);
        assert_eq!(b.representer(), &[-1.0, 1.0]);
        assert_eq!(b.k(), 2);
        let q = Constellation::new(Modulation::Qpsk);
        assert!((q.representer()[1] - 0.7071067811865476).abs() < 1e-15);
        assert!((q.complex_energy() - 1.0).abs() < 1e-12);
        let m = Constellation::new(Modulation::Qam16);
        assert_eq!(m.k(), 4);
        // (9 + 1 + 1 + 9) / (4 * 10) * 2
        assert!((m.complex_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariants_hold_for_all_alphabets() {
        for m in [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16] {
            let c = Constellation::new(m);
            assert!((c.priors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(c.representer().windows(2).all(|w| w[0] < w[1]));
            assert!((c.complex_energy() - 1.0).abs() < 1e-12);
            for i in 1..c.k() {
                assert_eq!(c.bit_distance(i - 1, i), 1, "{m}: labels not Gray");
            }
        }
    }

    #[test]
    fn unsupported_name() {
        assert!(matches!(
            build_constellation("8psk"),
            Err(Error::UnsupportedModulation(_))
        ));
        assert_eq!(build_constellation("16-QAM").unwrap().k(), 4);
    }

    #[test]
    fn invalid_priors_rejected() {
        let c = Constellation::new(Modulation::Bpsk);
        assert!(c.clone().with_priors(vec![0.5, 0.6]).is_err());
        assert!(c.clone().with_priors(vec![1.0, 0.0]).is_err());
        assert!(c.with_priors(vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn quantize_ties_go_low() {
        let c = Constellation::new(Modulation::Bpsk);
        assert_eq!(c.quantize(0.0), 0);
        assert_eq!(c.quantize(1e-9), 1);
        let q = Constellation::new(Modulation::Qam16);
        assert_eq!(q.quantize(0.0), 1);
        assert_eq!(q.quantize(1.9 / math::sqrt(10.0)), 2);
        assert_eq!(q.quantize(10.0), 3);
    }

    #[test]
    fn complex_to_real_small_cases() {
        let one = ComplexMatrix::new(1, 1, vec![Complex64::new(1.0, 0.0)]).unwrap();
        assert_eq!(
            complex_to_real(&one),
            Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])
        );
        let i = ComplexMatrix::new(1, 1, vec![Complex64::new(0.0, 1.0)]).unwrap();
        assert_eq!(
            complex_to_real(&i),
            Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]])
        );
    }

    #[test]
    fn ebn0_conversions() {
        let b = Constellation::new(Modulation::Bpsk);
        assert!((sigma2_from_ebn0(0.0, &b) - 1.0).abs() < 1e-15);
        let q = Constellation::new(Modulation::Qpsk);
        assert!((sigma2_from_ebn0(10.0, &q) - 0.05).abs() < 1e-15);
        assert!((ebn0_from_sigma2(0.05, &q) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_out_of_range() {
        let mut cfg = ChannelConfig::iid(2, 2);
        cfg.model = ChannelModel::ColumnCorrelated(1.0);
        assert!(cfg.validate().is_err());
        cfg.n_rx = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bpsk_instances_use_half_model() {
        let mut rng = stream(1, domain::EVAL, 0);
        let c = Constellation::new(Modulation::Bpsk);
        let inst = sample_instance(&ChannelConfig::iid(3, 5), &c, 10.0, &mut rng).unwrap();
        assert_eq!((inst.m(), inst.n()), (10, 3));
        let q = Constellation::new(Modulation::Qpsk);
        let inst = sample_instance(&ChannelConfig::iid(3, 5), &q, 10.0, &mut rng).unwrap();
        assert_eq!((inst.m(), inst.n()), (10, 6));
    }
}
