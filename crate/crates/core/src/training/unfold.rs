//! Recorded forward pass of the unfolded iteration and its exact reverse pass.
//!
//! The trainable vector is laid out as `[ln τ⁽⁰⁾ … ln τ⁽ᴸ⁾, δ⁽⁰⁾ … δ⁽ᴸ⁻¹⁾]`.
//! Gradients are taken with respect to `ln τ` so that temperatures stay
//! positive under any additive update.

use alloc::vec;
use alloc::vec::Vec;

use crate::cmd::{
    binary_amplitude, binary_prior_logit, fill_binary_gradient, fill_gradient,
    residual_correlation, CmdMode, CmdParams,
};
use crate::math;
use crate::system::{Constellation, SystemInstance};

/// Scratch space reused across samples.
#[derive(Debug, Default)]
pub struct Workspace {
    m_buf: Vec<f64>,
    n_buf: Vec<f64>,
    state: Vec<Vec<f64>>,
    soft: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
}

impl Workspace {
    fn reset(&mut self, layers: usize, m: usize, n: usize, width: usize) {
        self.m_buf.resize(m, 0.0);
        self.n_buf.resize(n, 0.0);
        for buf in [&mut self.state, &mut self.soft, &mut self.grad] {
            buf.resize_with(layers + 1, Vec::new);
            for b in buf.iter_mut() {
                b.clear();
                b.resize(n * width, 0.0);
            }
        }
        for buf in [&mut self.x, &mut self.r] {
            buf.resize_with(layers + 1, Vec::new);
            for b in buf.iter_mut() {
                b.clear();
                b.resize(n, 0.0);
            }
        }
    }
}

/// Summed cross-entropy `Σ_n -ln q_n(x_n)` of one instance; its gradient
/// with respect to the trainable vector is added into `grad`.
pub fn sample_loss_and_gradient(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    mode: CmdMode,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(
        grad.len(),
        params.temperatures().len() + params.step_sizes().len()
    );
    match mode {
        CmdMode::MultiClass => multiclass(inst, constellation, params, ws, grad),
        CmdMode::Binary => binary(inst, constellation, params, ws, grad),
    }
}

fn multiclass(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    ws: &mut Workspace,
    grad_out: &mut [f64],
) -> f64 {
    let k = constellation.k();
    let n = inst.n();
    let layers = params.n_layers();
    let taus = params.temperatures();
    let deltas = params.step_sizes();
    let v = constellation.representer();
    let lp = constellation.log_priors();
    let s2 = inst.real_noise_var();
    ws.reset(layers, inst.m(), n, k);
    let Workspace {
        m_buf,
        n_buf,
        state,
        soft,
        x,
        r,
        grad,
    } = ws;

    let mut logits = vec![0.0; k];
    // forward
    for j in 0..=layers {
        let tau = taus[j];
        for i in 0..n {
            for c in 0..k {
                logits[c] = (lp[c] + state[j][i * k + c]) / tau;
            }
            let row = &mut soft[j][i * k..(i + 1) * k];
            math::softmax_into(&logits, row);
            x[j][i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        if j == layers {
            break;
        }
        residual_correlation(inst, &x[j], m_buf, &mut r[j]);
        fill_gradient(
            &state[j],
            &soft[j],
            &x[j],
            &r[j],
            v,
            tau,
            s2,
            k,
            &mut grad[j],
        );
        let (head, tail) = state.split_at_mut(j + 1);
        for ((next, cur), g) in tail[0].iter_mut().zip(&head[j]).zip(&grad[j]) {
            *next = cur - deltas[j] * g;
        }
    }

    // output layer: q = softmax((ln ρ + γ⁽ᴸ⁾)/τ⁽ᴸ⁾)
    let tau_out = taus[layers];
    let mut loss = 0.0;
    let mut gbar = vec![0.0; n * k];
    let mut tbar = 0.0;
    for i in 0..n {
        for c in 0..k {
            logits[c] = (lp[c] + state[layers][i * k + c]) / tau_out;
        }
        let lse = math::log_sum_exp(&logits);
        let t = inst.x_indices[i];
        loss += lse - logits[t];
        for c in 0..k {
            let abar = soft[layers][i * k + c] - if c == t { 1.0 } else { 0.0 };
            gbar[i * k + c] = abar / tau_out;
            tbar -= abar * logits[c];
        }
    }
    grad_out[layers] += tbar;

    let mut zbar = vec![0.0; n * k];
    let xbar = n_buf;
    let mut rbar = vec![0.0; n];
    for j in (0..layers).rev() {
        let tau = taus[j];
        let delta = deltas[j];
        let (gam, z, xs, rs, gr) = (&state[j], &soft[j], &x[j], &r[j], &grad[j]);
        // γ⁽ʲ⁺¹⁾ = γ⁽ʲ⁾ - δ·grad
        let mut dbar = 0.0;
        let mut tau_bar = 0.0;
        xbar.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let c_n = -rs[i] / tau;
            let mut rb = 0.0;
            let mut xb = 0.0;
            for c in 0..k {
                let idx = i * k + c;
                let u = gbar[idx];
                dbar -= u * gr[idx];
                let w = -delta * u;
                // prior term σ²(1 - e^(-γ))
                gbar[idx] = u + w * s2 * math::exp(-gam[idx]);
                let zd = z[idx] * (v[c] - xs[i]);
                zbar[idx] = w * c_n * (v[c] - xs[i]);
                xb -= w * c_n * z[idx];
                rb += w * zd;
                tau_bar -= w * c_n * zd / tau;
            }
            rbar[i] = -rb / tau;
            xbar[i] = xb;
        }
        grad_out[layers + 1 + j] += dbar;
        // r = Hᵀ(y - Hx)  ⇒  x̄ -= HᵀH r̄
        inst.h.mul_vec_into(&rbar, m_buf);
        let mut htr = vec![0.0; n];
        inst.h.tr_mul_vec_into(m_buf, &mut htr);
        for i in 0..n {
            xbar[i] -= htr[i];
        }
        for i in 0..n {
            let mut dot = 0.0;
            for c in 0..k {
                let idx = i * k + c;
                zbar[idx] += xbar[i] * v[c];
                dot += z[idx] * zbar[idx];
            }
            for c in 0..k {
                let idx = i * k + c;
                let abar = z[idx] * (zbar[idx] - dot);
                let a = (lp[c] + gam[idx]) / tau;
                gbar[idx] += abar / tau;
                tau_bar -= abar * a / tau;
            }
        }
        grad_out[j] += tau * tau_bar;
    }
    loss
}

fn binary(
    inst: &SystemInstance,
    constellation: &Constellation,
    params: &CmdParams,
    ws: &mut Workspace,
    grad_out: &mut [f64],
) -> f64 {
    let n = inst.n();
    let layers = params.n_layers();
    let taus = params.temperatures();
    let deltas = params.step_sizes();
    let amp = binary_amplitude(constellation);
    let logit = binary_prior_logit(constellation);
    let s2 = inst.real_noise_var();
    ws.reset(layers, inst.m(), n, 1);
    let Workspace {
        m_buf,
        n_buf,
        state,
        soft,
        x,
        r,
        grad,
    } = ws;

    for j in 0..layers {
        let tau = taus[j];
        for i in 0..n {
            soft[j][i] = math::tanh((logit + state[j][i]) / (2.0 * tau));
            x[j][i] = amp * soft[j][i];
        }
        residual_correlation(inst, &x[j], m_buf, &mut r[j]);
        fill_binary_gradient(&state[j], &soft[j], &r[j], amp, tau, s2, &mut grad[j]);
        let (head, tail) = state.split_at_mut(j + 1);
        for ((next, cur), g) in tail[0].iter_mut().zip(&head[j]).zip(&grad[j]) {
            *next = cur - deltas[j] * g;
        }
    }

    let tau_out = taus[layers];
    let mut loss = 0.0;
    let mut lbar = vec![0.0; n];
    let mut tbar = 0.0;
    for i in 0..n {
        let u = (logit + state[layers][i]) / tau_out;
        let plus = inst.x_indices[i] == 1;
        loss += if plus {
            math::softplus(-u)
        } else {
            math::softplus(u)
        };
        let ubar = math::sigmoid(u) - if plus { 1.0 } else { 0.0 };
        lbar[i] = ubar / tau_out;
        tbar -= ubar * u;
    }
    grad_out[layers] += tbar;

    let sbar = n_buf;
    let mut rbar = vec![0.0; n];
    let mut htr = vec![0.0; n];
    for j in (0..layers).rev() {
        let tau = taus[j];
        let delta = deltas[j];
        let (lam, s, rs, gr) = (&state[j], &soft[j], &r[j], &grad[j]);
        let mut dbar = 0.0;
        let mut tau_bar = 0.0;
        for i in 0..n {
            let w = lbar[i];
            dbar -= w * gr[i];
            let gb = -delta * w;
            let th = math::tanh(0.5 * lam[i]);
            lbar[i] = w + gb * s2 * 0.5 * (1.0 - th * th);
            let one_minus = 1.0 - s[i] * s[i];
            sbar[i] = gb * (amp / tau) * s[i] * rs[i];
            rbar[i] = -gb * (0.5 * amp / tau) * one_minus;
            tau_bar += gb * (0.5 * amp / (tau * tau)) * one_minus * rs[i];
        }
        grad_out[layers + 1 + j] += dbar;
        inst.h.mul_vec_into(&rbar, m_buf);
        inst.h.tr_mul_vec_into(m_buf, &mut htr);
        for i in 0..n {
            sbar[i] -= amp * htr[i];
            let c = (logit + lam[i]) / (2.0 * tau);
            let cbar = sbar[i] * (1.0 - s[i] * s[i]);
            lbar[i] += cbar / (2.0 * tau);
            tau_bar -= cbar * c / tau;
        }
        grad_out[j] += tau * tau_bar;
    }
    loss
}
