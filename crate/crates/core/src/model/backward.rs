//! Reverse pass over a traced window.
//!
//! ARU statistics are constants of the backward pass. The local mean
//! `m_j = theta_j . [h, 1]` still depends on the current `h`, so gradient
//! reaches the decoder through it. With [`AruGradient::ThroughSolve`] the
//! closed-form `theta_j` is also differentiated with respect to the `h` of
//! every in-window update that built it:
//!
//! ```text
//! u = (S + lambda I)^-1 dL/dtheta
//! dL/dz_s = w_s * (u * (y_s - theta . z_s) - theta * (u . z_s))
//! ```
//!
//! with `w_s` the aging weight of update `s`. Local variances always stay
//! constant.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::dot;

use super::config::Head;
use super::forward::{sigmoid, DecoderTrace, HeadTrace, PathTrace, UpdateSource, WindowTrace};
use super::params::{Ff2Path, Model, ModelParams};
use super::window::WindowSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AruGradient {
    /// Local parameters are constants; only `m`'s dependence on the current
    /// `h` is differentiated.
    StopGradient,
    /// Additionally differentiate the ridge solve with respect to the
    /// in-window updates.
    ThroughSolve,
}

impl std::str::FromStr for AruGradient {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stop-gradient" | "stop" => Ok(AruGradient::StopGradient),
            "through-solve" | "solve" => Ok(AruGradient::ThroughSolve),
            other => Err(crate::error::Error::InvalidConfig(format!(
                "unknown ARU gradient policy '{other}'"
            ))),
        }
    }
}

fn relu_mask(d: &mut [f64], out: &[f64]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Backprop one FF2 path; returns the gradient w.r.t. `[h, local]`.
fn ff2_path_backward(
    path: &Ff2Path,
    grad: &mut Ff2Path,
    trace: &PathTrace,
    h: &[f64],
    local: &[f64],
    mut d_second: Vec<f64>,
) -> Vec<f64> {
    relu_mask(&mut d_second, &trace.second);
    let mut d_first = path.second.backward(&trace.first, &d_second, &mut grad.second);
    relu_mask(&mut d_first, &trace.first);
    path.first.backward(&concat(h, local), &d_first, &mut grad.first)
}

fn decoder_backward(
    params: &ModelParams,
    grad: &mut ModelParams,
    dec: &DecoderTrace,
    g: &[f64],
    v: &[f64],
    mut dh: Vec<f64>,
    dg: &mut [f64],
    dv: &mut [f64],
) {
    let [l1, l2, l3] = &params.decoder;
    let [g1, g2, g3] = &mut grad.decoder;
    relu_mask(&mut dh, &dec.h);
    let mut da2 = l3.backward(&dec.a2, &dh, g3);
    relu_mask(&mut da2, &dec.a2);
    let dx2 = l2.backward(&concat(&dec.a1, v), &da2, g2);
    let (da1, dv2) = dx2.split_at(dec.a1.len());
    let mut da1 = da1.to_vec();
    relu_mask(&mut da1, &dec.a1);
    let dx1 = l1.backward(&concat(g, v), &da1, g1);
    let (dg1, dv1) = dx1.split_at(g.len());
    for (a, b) in dg.iter_mut().zip(dg1) {
        *a += b;
    }
    for ((a, b), c) in dv.iter_mut().zip(dv1).zip(dv2) {
        *a += b + c;
    }
}

/// Accumulate into `grad` the parameter gradient of a window given the loss
/// sensitivities `d_mu[k]`, `d_sigma[k]` of every horizon step.
pub(crate) fn backward_window(
    model: &Model,
    window: &WindowSample,
    trace: &WindowTrace,
    d_mu: &[f64],
    d_sigma: &[f64],
    policy: AruGradient,
    grad: &mut ModelParams,
) -> Result<()> {
    let cfg = &model.config;
    let params = &model.params;
    let hdim = cfg.feature_dim();
    let e = cfg.encoder_len;

    let mut dh_steps: Vec<Vec<f64>> = vec![vec![0.0; hdim]; trace.steps.len()];
    let mut dh_warm: Vec<Vec<f64>> = vec![vec![0.0; hdim]; trace.warmup.len()];

    for (k, step) in trace.steps.iter().enumerate() {
        let h = &step.dec.h;
        let (dm, dh_head): (Vec<f64>, Vec<f64>) = match (&step.head, cfg.head) {
            (HeadTrace::Baseline { raw_sigma }, Head::Baseline) => {
                let mut dh = params.mu_head.backward(h, &[d_mu[k]], &mut grad.mu_head);
                let d_raw = d_sigma[k] * sigmoid(*raw_sigma);
                let dh2 = params.sigma_head.backward(h, &[d_raw], &mut grad.sigma_head);
                for (a, b) in dh.iter_mut().zip(dh2) {
                    *a += b;
                }
                (Vec::new(), dh)
            }
            (HeadTrace::Aru(t), Head::Aru) => {
                let ff2 = params.ff2.as_ref().expect("aru head has ff2");
                let gff2 = grad.ff2.as_mut().expect("aru head has ff2");
                let local = step.local.as_ref().expect("aru step has local");
                let d_mu_second = params.mu_head.backward(&t.mu.second, &[d_mu[k]], &mut grad.mu_head);
                let dx_mu = ff2_path_backward(&ff2.mu, &mut gff2.mu, &t.mu, h, local.m.as_slice(), d_mu_second);
                let d_raw = d_sigma[k] * sigmoid(t.raw_sigma);
                let d_sig_second = params.sigma_head.backward(&t.sigma.second, &[d_raw], &mut grad.sigma_head);
                let dx_sig = ff2_path_backward(&ff2.sigma, &mut gff2.sigma, &t.sigma, h, local.a.as_slice(), d_sig_second);
                let mut dh = dx_mu[..hdim].to_vec();
                for (a, b) in dh.iter_mut().zip(&dx_sig[..hdim]) {
                    *a += b;
                }
                (dx_mu[hdim..].to_vec(), dh)
            }
            (HeadTrace::AruDirect, Head::AruDirect) => {
                let mut dm = vec![0.0; cfg.banks()];
                dm[0] = d_mu[k];
                (dm, vec![0.0; hdim])
            }
            _ => unreachable!("trace head matches config head"),
        };
        for (a, b) in dh_steps[k].iter_mut().zip(&dh_head) {
            *a += b;
        }
        if dm.is_empty() {
            continue;
        }

        let lp = &trace.local_params[step.local_params.expect("aru step has local params")];
        for (j, &dmj) in dm.iter().enumerate() {
            if dmj == 0.0 {
                continue;
            }
            let theta = lp.theta_mu[j].as_slice();
            for (a, &t) in dh_steps[k].iter_mut().zip(&theta[..hdim]) {
                *a += dmj * t;
            }
            if policy != AruGradient::ThroughSolve {
                continue;
            }
            let n = trace.updates_before[k];
            if n == 0 {
                continue;
            }
            // dL/dtheta = dm * [h, 1]
            let mut d_theta = h.clone();
            d_theta.iter_mut().for_each(|x| *x *= dmj);
            d_theta.push(dmj);
            let u = lp.solve_bank(j, &d_theta)?;
            let u = u.as_slice();
            let alpha = cfg.aru.as_ref().expect("aru config").aging[j];
            let mut w = 1.0;
            for s in (0..n).rev() {
                let (src, y) = trace.updates[s];
                let hs = trace.update_h(src);
                let theta_z = dot(&theta[..hdim], hs) + theta[hdim];
                let u_z = dot(&u[..hdim], hs) + u[hdim];
                let resid = y - theta_z;
                let target = match src {
                    UpdateSource::Warmup(i) => &mut dh_warm[i],
                    UpdateSource::Step(i) => &mut dh_steps[i],
                };
                for ((a, &ui), &ti) in target.iter_mut().zip(&u[..hdim]).zip(&theta[..hdim]) {
                    *a += w * (ui * resid - ti * u_z);
                }
                w *= alpha;
            }
        }
    }

    let g = trace.g();
    let mut dg = vec![0.0; g.len()];
    let mut dv: Vec<Vec<f64>> = trace.v.iter().map(|v| vec![0.0; v.len()]).collect();
    for (dec, dh) in trace
        .steps
        .iter()
        .map(|s| &s.dec)
        .zip(dh_steps)
        .chain(trace.warmup.iter().zip(dh_warm))
    {
        if dh.iter().all(|x| *x == 0.0) {
            continue;
        }
        decoder_backward(params, grad, dec, g, &trace.v[dec.step], dh, &mut dg, &mut dv[dec.step]);
    }

    // BPTT through the tanh encoder.
    let r = cfg.rnn_units;
    for t in (1..=e).rev() {
        let out = &trace.enc_states[t];
        let dpre: Vec<f64> = dg.iter().zip(out).map(|(d, o)| d * (1.0 - o * o)).collect();
        let y_prev = if t >= 2 { window.y_encoder[t - 2] } else { 0.0 };
        let mut x = Vec::with_capacity(params.encoder.inp);
        x.extend_from_slice(&trace.enc_states[t - 1]);
        x.push(y_prev);
        x.extend_from_slice(&trace.v[t - 1]);
        let dx = params.encoder.backward(&x, &dpre, &mut grad.encoder);
        dg = dx[..r].to_vec();
        for (a, b) in dv[t - 1].iter_mut().zip(&dx[r + 1..]) {
            *a += b;
        }
    }

    for (t, dvt) in dv.iter().enumerate() {
        let mut off = 0;
        for (f, &idx) in window.step_cat(t).iter().enumerate() {
            let table = &mut grad.embeddings[f];
            let dim = table.dim;
            let row = &mut table.table[idx as usize * dim..(idx as usize + 1) * dim];
            for (a, b) in row.iter_mut().zip(&dvt[off..off + dim]) {
                *a += b;
            }
            off += dim;
        }
    }
    Ok(())
}
