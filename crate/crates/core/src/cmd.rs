//! Concrete MAP detection.
//!
//! Each real symbol `x_n` is relaxed to `x̃_n = σ_τ(ln ρ + γ_n)ᵀ v`, where
//! `γ_n` is a vector of Gumbel variables. The relaxed MAP problem becomes an
//! unconstrained minimization over `Γ = [γ_1 … γ_N]`,
//!
//! ```text
//! O(Γ, τ) = -ln p(y | x̃(Γ)) + Σ γ + Σ e^(-γ),
//! ```
//!
//! solved by a fixed number of gradient steps with per-step temperature and
//! step size. Everything here works on the objective scaled by the real
//! per-dimension noise variance `σ_r² = σ²/2`, which moves the likelihood's
//! `1/σ_r²` onto the Gumbel prior term:
//!
//! ```text
//! σ_r²·O = ½‖y - H x̃‖² + σ_r² Σ_nk (γ_nk + e^(-γ_nk))
//! ```
//!
//! (the `Γ`-independent normalizer of the likelihood is dropped).
//!
//! For two-level alphabets `Γ` collapses to one logistic variable per symbol,
//! `λ_n = γ_n,+ - γ_n,-`, with `x̃ = a·tanh((ln(ρ₊/ρ₋) + λ)/(2τ))` for levels
//! `±a` and prior term `λ + 2 ln(1 + e^(-λ))`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::reference::Detector;
use crate::system::{Constellation, SystemInstance};

/// LLR magnitude limit.
pub const LLR_CLAMP: f64 = 50.0;

/// Per-layer temperatures `τ⁽⁰⁾..τ⁽ᴸ⁾` and step sizes `δ⁽⁰⁾..δ⁽ᴸ⁻¹⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdParams {
    temperatures: Vec<f64>,
    step_sizes: Vec<f64>,
}

impl CmdParams {
    pub fn new(temperatures: Vec<f64>, step_sizes: Vec<f64>) -> Result<Self> {
        if step_sizes.is_empty() {
            return Err(Error::InvalidParams(
                "at least one layer is required".into(),
            ));
        }
        if temperatures.len() != step_sizes.len() + 1 {
            return Err(Error::InvalidParams(alloc::format!(
                "{} temperatures for {} layers, expected {}",
                temperatures.len(),
                step_sizes.len(),
                step_sizes.len() + 1
            )));
        }
        if let Some(t) = temperatures.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParams(alloc::format!(
                "temperature {t} is not positive"
            )));
        }
        if let Some(d) = step_sizes.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParams(alloc::format!(
                "step size {d} is not positive"
            )));
        }
        Ok(Self {
            temperatures,
            step_sizes,
        })
    }

    /// Number of unfolded iterations `L`.
    pub fn n_layers(&self) -> usize {
        self.step_sizes.len()
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    /// Number of trainable scalars, `2L + 1`.
    pub fn len(&self) -> usize {
        self.temperatures.len() + self.step_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn from_parts_unchecked(temperatures: Vec<f64>, step_sizes: Vec<f64>) -> Self {
        Self {
            temperatures,
            step_sizes,
        }
    }
}

/// Gumbel variables `Γ`, stored symbol-major (`gamma[n * K + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelState {
    k: usize,
    gamma: Vec<f64>,
}

impl GumbelState {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            k,
            gamma: vec![0.0; n * k],
        }
    }

    pub fn from_vec(n: usize, k: usize, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                got: gamma.len(),
            });
        }
        Ok(Self { k, gamma })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.gamma.len() / self.k
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.gamma
    }

    pub fn symbol(&self, n: usize) -> &[f64] {
        &self.gamma[n * self.k..(n + 1) * self.k]
    }
}

/// Multi-class or logistic (two-level) variant of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmdMode {
    MultiClass,
    Binary,
}

impl CmdMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MultiClass => "multiclass",
            Self::Binary => "binary",
        }
    }
}

impl core::str::FromStr for CmdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multiclass" | "multi-class" => Ok(Self::MultiClass),
            "binary" => Ok(Self::Binary),
            _ => Err(Error::InvalidParams(alloc::format!(
                "unknown detector mode `{s}`"
            ))),
        }
    }
}

/// Hard decisions together with per-symbol posteriors and per-bit LLRs.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Decided class index per real symbol.
    pub indices: Vec<usize>,
    /// Decided levels.
    pub x_hard: Vec<f64>,
    /// Continuous estimate the decisions were quantized from.
    pub x_soft: Vec<f64>,
    /// `N × K` posterior rows, symbol-major.
    pub posterior: Vec<f64>,
    /// Natural logarithms of `posterior`, kept separately so that vanishing
    /// probabilities stay finite.
    pub log_posterior: Vec<f64>,
    /// `N × bits` LLRs `ln P(bit = 1) / P(bit = 0)`, clamped to `±50`.
    pub llr: Vec<f64>,
    /// Scaled objective before every iteration (diagnostics only).
    pub objective_trace: Option<Vec<f64>>,
    k: usize,
}

impl DetectionResult {
    /// Result from per-symbol log-posteriors; `log_post` is `N × K`.
    pub fn from_log_posteriors(
        indices: Vec<usize>,
        x_soft: Vec<f64>,
        log_post: &[f64],
        constellation: &Constellation,
    ) -> Self {
        let k = constellation.k();
        let bits = constellation.bits_per_level();
        let n = indices.len();
        let mut posterior = Vec::with_capacity(n * k);
        let mut llr = Vec::with_capacity(n * bits);
        let mut ones = Vec::with_capacity(k);
        let mut zeros = Vec::with_capacity(k);
        for row in log_post.chunks_exact(k) {
            posterior.extend(row.iter().map(|&l| math::exp(l)));
            for b in (0..bits).rev() {
                ones.clear();
                zeros.clear();
                for (&lp, &label) in row.iter().zip(constellation.bit_labels()) {
                    if label >> b & 1 == 1 {
                        ones.push(lp);
                    } else {
                        zeros.push(lp);
                    }
                }
                let l = math::log_sum_exp(&ones) - math::log_sum_exp(&zeros);
                llr.push(if l.is_nan() {
                    0.0
                } else {
                    l.clamp(-LLR_CLAMP, LLR_CLAMP)
                });
            }
        }
        let x_hard = indices
            .iter()
            .map(|&i| constellation.representer()[i])
            .collect();
        let log_posterior = log_post.to_vec();
        Self {
            indices,
            x_hard,
            x_soft,
            posterior,
            log_posterior,
            llr,
            objective_trace: None,
            k,
        }
    }

    /// Hard-only result with one-hot posteriors.
    pub fn hard(indices: Vec<usize>, x_soft: Vec<f64>, constellation: &Constellation) -> Self {
        let k = constellation.k();
        let mut log_post = vec![f64::NEG_INFINITY; indices.len() * k];
        for (n, &i) in indices.iter().enumerate() {
            log_post[n * k + i] = 0.0;
        }
        Self::from_log_posteriors(indices, x_soft, &log_post, constellation)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn posterior_row(&self, n: usize) -> &[f64] {
        &self.posterior[n * self.k..(n + 1) * self.k]
    }

    pub fn posterior_rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.posterior.chunks_exact(self.k)
    }

    pub fn log_posterior_rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.log_posterior.chunks_exact(self.k)
    }
}

fn validate_mode(mode: CmdMode, constellation: &Constellation) -> Result<()> {
    if mode == CmdMode::Binary && constellation.k() != 2 {
        return Err(Error::ModeMismatch(constellation.k()));
    }
    Ok(())
}

/// Symmetric half-distance `a` of a two-level alphabet `{-a, +a}`.
pub(crate) fn binary_amplitude(constellation: &Constellation) -> f64 {
    let v = constellation.representer();
    debug_assert!(
        (v[0] + v[1]).abs() < 1e-12,
        "two-level alphabets are symmetric"
    );
    0.5 * (v[1] - v[0])
}

/// `ln(ρ₊/ρ₋) = ln(1/ρ - 1)` with `ρ` the prior of the lower level.
pub(crate) fn binary_prior_logit(constellation: &Constellation) -> f64 {
    let lp = constellation.log_priors();
    lp[1] - lp[0]
}

/// `Hᵀ(y - Hx)`, i.e. `Hᵀy - HᵀHx`.
pub(crate) fn residual_correlation(
    inst: &SystemInstance,
    x: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    inst.h.mul_vec_into(x, scratch);
    for (s, y) in scratch.iter_mut().zip(&inst.y) {
        *s = y - *s;
    }
    inst.h.tr_mul_vec_into(scratch, out);
}

/// Softmax rows `σ_τ(ln ρ + γ_n)` and relaxed symbols `x̃_n`.
pub fn relaxed_symbols(
    state: &GumbelState,
    constellation: &Constellation,
    temperature: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = constellation.k();
    let n = state.n();
    let mut z = vec![0.0; n * k];
    let mut x = vec![0.0; n];
    let mut logits = vec![0.0; k];
    for i in 0..n {
        for (l, (&g, &lp)) in logits
            .iter_mut()
            .zip(state.symbol(i).iter().zip(constellation.log_priors()))
        {
            *l = (lp + g) / temperature;
        }
        let row = &mut z[i * k..(i + 1) * k];
        math::softmax_into(&logits, row);
        x[i] = row
            .iter()
            .zip(constellation.representer())
            .map(|(a, b)| a * b)
            .sum();
    }
    (z, x)
}

/// `σ_r²·O(Γ, τ)`.
pub fn objective(
    state: &GumbelState,
    inst: &SystemInstance,
    constellation: &Constellation,
    temperature: f64,
) -> f64 {
    let (_, x) = relaxed_symbols(state, constellation, temperature);
    let hx = inst.h.mul_vec(&x);
    let fit: f64 = hx.iter().zip(&inst.y).map(|(a, b)| (b - a) * (b - a)).sum();
    let prior: f64 = state.gamma.iter().map(|&g| g + math::exp(-g)).sum();
    0.5 * fit + inst.real_noise_var() * prior
}

/// `∂ ln p(y|x̃) / ∂x̃ = (2/σ²)(Hᵀy - HᵀHx̃)`.
///
/// The real-valued model has noise variance `σ²/2` per dimension, so this
/// equals `(1/σ_r²)(Hᵀy - HᵀHx̃)` with `σ_r² = σ²/2`.
pub fn likelihood_gradient(x_tilde: &[f64], inst: &SystemInstance) -> Vec<f64> {
    let mut scratch = vec![0.0; inst.m()];
    let mut r = vec![0.0; inst.n()];
    residual_correlation(inst, x_tilde, &mut scratch, &mut r);
    let s = 2.0 / inst.sigma2;
    r.iter_mut().for_each(|v| *v *= s);
    r
}

/// `∂(σ_r²·O)/∂Γ`.
pub fn objective_gradient(
    state: &GumbelState,
    inst: &SystemInstance,
    constellation: &Constellation,
    temperature: f64,
) -> GumbelState {
    let k = constellation.k();
    let (z, x) = relaxed_symbols(state, constellation, temperature);
    let mut scratch = vec![0.0; inst.m()];
    let mut r = vec![0.0; inst.n()];
    residual_correlation(inst, &x, &mut scratch, &mut r);
    let mut grad = vec![0.0; state.gamma.len()];
    fill_gradient(
        &state.gamma,
        &z,
        &x,
        &r,
        constellation.representer(),
        temperature,
        inst.real_noise_var(),
        k,
        &mut grad,
    );
    GumbelState { k, gamma: grad }
}

/// `grad_nk = -(1/τ) z_nk (v_k - x̃_n) r_n + σ_r²(1 - e^(-γ_nk))`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn fill_gradient(
    gamma: &[f64],
    z: &[f64],
    x: &[f64],
    r: &[f64],
    v: &[f64],
    tau: f64,
    noise_var: f64,
    k: usize,
    grad: &mut [f64],
) {
    for (n, ((g_row, z_row), out)) in gamma
        .chunks_exact(k)
        .zip(z.chunks_exact(k))
        .zip(grad.chunks_exact_mut(k))
        .enumerate()
    {
        let c = -r[n] / tau;
        for j in 0..k {
            out[j] = c * z_row[j] * (v[j] - x[n]) + noise_var * (1.0 - math::exp(-g_row[j]));
        }
    }
}

/// One descent step `Γ - δ·∂(σ_r²·O)/∂Γ`.
pub fn gradient_step(
    state: &GumbelState,
    inst: &SystemInstance,
    constellation: &Constellation,
    temperature: f64,
    step: f64,
) -> GumbelState {
    let grad = objective_gradient(state, inst, constellation, temperature);
    let gamma = state
        .gamma
        .iter()
        .zip(&grad.gamma)
        .map(|(g, d)| g - step * d)
        .collect();
    GumbelState { k: state.k, gamma }
}

/// Relaxed binary symbols in units of the amplitude,
/// `tanh((ln(1/ρ - 1) + λ)/(2τ))`, with `ρ` the prior of the lower level.
pub fn binary_relax(lambda: &[f64], prior_low: f64, temperature: f64) -> Vec<f64> {
    let logit = math::ln(1.0 / prior_low - 1.0);
    lambda
        .iter()
        .map(|&l| math::tanh((logit + l) / (2.0 * temperature)))
        .collect()
}

/// Diagonal of `∂x̃/∂λ`, `(1 - x̃²)/(2τ)`, for `x̃` from [`binary_relax`].
pub fn binary_relax_derivative(x_tilde: &[f64], temperature: f64) -> Vec<f64> {
    x_tilde
        .iter()
        .map(|&s| (1.0 - s * s) / (2.0 * temperature))
        .collect()
}

fn binary_soft(lambda: &[f64], constellation: &Constellation, temperature: f64) -> Vec<f64> {
    let logit = binary_prior_logit(constellation);
    lambda
        .iter()
        .map(|&l| math::tanh((logit + l) / (2.0 * temperature)))
        .collect()
}

/// `σ_r²·O(λ, τ)` of the logistic form.
pub fn binary_objective(
    lambda: &[f64],
    inst: &SystemInstance,
    constellation: &Constellation,
    temperature: f64,
) -> f64 {
    let a = binary_amplitude(constellation);
    let x: Vec<f64> = binary_soft(lambda, constellation, temperature)
        .iter()
        .map(|s| a * s)
        .collect();
    let hx = inst.h.mul_vec(&x);
    let fit: f64 = hx.iter().zip(&inst.y).map(|(p, q)| (q - p) * (q - p)).sum();
    let prior: f64 = lambda.iter().map(|&l| l + 2.0 * math::softplus(-l)).sum();
    0.5 * fit + inst.real_noise_var() * prior
}

/// `∂(σ_r²·O)/∂λ = -(a/2τ)(1 - s²)·Hᵀ(y - H a s) + σ_r² tanh(λ/2)`.
pub fn binary_gradient(
    lambda: &[f64],
    inst: &SystemInstance,
    constellation: &Constellation,
    temperature: f64,
) -> Vec<f64> {
    let a = binary_amplitude(constellation);
    let s = binary_soft(lambda, constellation, temperature);
    let x: Vec<f64> = s.iter().map(|v| a * v).collect();
    let mut scratch = vec![0.0; inst.m()];
    let mut r = vec![0.0; inst.n()];
    residual_correlation(inst, &x, &mut scratch, &mut r);
    let mut g = vec![0.0; lambda.len()];
    fill_binary_gradient(
        lambda,
        &s,
        &r,
        a,
        temperature,
        inst.real_noise_var(),
        &mut g,
    );
    g
}

#[inline]
pub(crate) fn fill_binary_gradient(
    lambda: &[f64],
    s: &[f64],
    r: &[f64],
    a: f64,
    tau: f64,
    noise_var: f64,
    grad: &mut [f64],
) {
    for n in 0..lambda.len() {
        grad[n] =
            -(0.5 * a / tau) * (1.0 - s[n] * s[n]) * r[n] + noise_var * math::tanh(0.5 * lambda[n]);
    }
}

/// One logistic descent step `λ - δ·∂(σ_r²·O)/∂λ`.
pub fn binary_step(
    lambda: &[f64],
    inst: &SystemInstance,
    constellation: &Constellation,
    temperature: f64,
    step: f64,
) -> Result<Vec<f64>> {
    validate_mode(CmdMode::Binary, constellation)?;
    let g = binary_gradient(lambda, inst, constellation, temperature);
    Ok(lambda.iter().zip(&g).map(|(l, d)| l - step * d).collect())
}

/// Runs the unfolded iteration from `Γ = 0` (or `λ = 0`).
pub fn detect(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    mode: CmdMode,
) -> Result<DetectionResult> {
    run(inst, constellation, params, mode, false)
}

fn run(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    mode: CmdMode,
    trace: bool,
) -> Result<DetectionResult> {
    validate_mode(mode, constellation)?;
    match mode {
        CmdMode::MultiClass => Ok(run_multiclass(inst, constellation, params, trace)),
        CmdMode::Binary => Ok(run_binary(inst, constellation, params, trace)),
    }
}

fn run_multiclass(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    trace: bool,
) -> DetectionResult {
    let k = constellation.k();
    let n = inst.n();
    let v = constellation.representer();
    let lp = constellation.log_priors();
    let mut state = GumbelState::zeros(n, k);
    let mut z = vec![0.0; n * k];
    let mut x = vec![0.0; n];
    let mut logits = vec![0.0; k];
    let mut scratch = vec![0.0; inst.m()];
    let mut r = vec![0.0; n];
    let mut grad = vec![0.0; n * k];
    let mut objective_trace = trace.then(Vec::new);

    let relax = |gamma: &[f64], tau: f64, z: &mut [f64], x: &mut [f64], logits: &mut [f64]| {
        for i in 0..n {
            for j in 0..k {
                logits[j] = (lp[j] + gamma[i * k + j]) / tau;
            }
            let row = &mut z[i * k..(i + 1) * k];
            math::softmax_into(logits, row);
            x[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    };

    for (&tau, &delta) in params.temperatures.iter().zip(&params.step_sizes) {
        if let Some(t) = objective_trace.as_mut() {
            t.push(objective(&state, inst, constellation, tau));
        }
        relax(&state.gamma, tau, &mut z, &mut x, &mut logits);
        residual_correlation(inst, &x, &mut scratch, &mut r);
        fill_gradient(
            &state.gamma,
            &z,
            &x,
            &r,
            v,
            tau,
            inst.real_noise_var(),
            k,
            &mut grad,
        );
        for (g, d) in state.gamma.iter_mut().zip(&grad) {
            *g -= delta * d;
        }
    }

    let tau_out = *params.temperatures.last().expect("validated");
    relax(&state.gamma, tau_out, &mut z, &mut x, &mut logits);
    let mut log_post = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut log_post[i * k..(i + 1) * k];
        for j in 0..k {
            row[j] = (lp[j] + state.gamma[i * k + j]) / tau_out;
        }
        math::log_softmax_in_place(row);
    }
    let indices = x.iter().map(|&xi| constellation.quantize(xi)).collect();
    let mut res = DetectionResult::from_log_posteriors(indices, x, &log_post, constellation);
    if let Some(mut t) = objective_trace {
        t.push(objective(&state, inst, constellation, tau_out));
        res.objective_trace = Some(t);
    }
    res
}

fn run_binary(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    trace: bool,
) -> DetectionResult {
    let n = inst.n();
    let a = binary_amplitude(constellation);
    let logit = binary_prior_logit(constellation);
    let mut lambda = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut scratch = vec![0.0; inst.m()];
    let mut r = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut objective_trace = trace.then(Vec::new);

    for (&tau, &delta) in params.temperatures.iter().zip(&params.step_sizes) {
        if let Some(t) = objective_trace.as_mut() {
            t.push(binary_objective(&lambda, inst, constellation, tau));
        }
        for i in 0..n {
            s[i] = math::tanh((logit + lambda[i]) / (2.0 * tau));
            x[i] = a * s[i];
        }
        residual_correlation(inst, &x, &mut scratch, &mut r);
        fill_binary_gradient(&lambda, &s, &r, a, tau, inst.real_noise_var(), &mut grad);
        for (l, d) in lambda.iter_mut().zip(&grad) {
            *l -= delta * d;
        }
    }

    let tau_out = *params.temperatures.last().expect("validated");
    let mut log_post = vec![0.0; 2 * n];
    let mut indices = vec![0; n];
    for i in 0..n {
        let u = (logit + lambda[i]) / tau_out;
        log_post[2 * i] = -math::softplus(u);
        log_post[2 * i + 1] = -math::softplus(-u);
        x[i] = a * math::tanh(0.5 * u);
        // sign(x̃) with ties resolved toward the lower level
        indices[i] = usize::from(x[i] > 0.0);
    }
    let mut res = DetectionResult::from_log_posteriors(indices, x, &log_post, constellation);
    if let Some(mut t) = objective_trace {
        t.push(binary_objective(&lambda, inst, constellation, tau_out));
        res.objective_trace = Some(t);
    }
    res
}

/// CMD / CMDNet with a fixed parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdDetector {
    pub params: CmdParams,
    pub mode: CmdMode,
    /// Record the scaled objective before every iteration.
    pub trace: bool,
}

impl CmdDetector {
    pub fn new(params: CmdParams, mode: CmdMode) -> Self {
        Self {
            params,
            mode,
            trace: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = true;
        self
    }
}

impl Detector for CmdDetector {
    fn detect(
        &self,
        inst: &SystemInstance,
        constellation: &Constellation,
    ) -> Result<DetectionResult> {
        run(inst, constellation, &self.params, self.mode, self.trace)
    }

    fn soft_output(&self) -> bool {
        true
    }
}
