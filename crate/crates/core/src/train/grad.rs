use rayon::prelude::*;

use super::loss::{nll_grads, nll_parts};
use crate::aru::AruState;
use crate::error::{Error, Result};
use crate::model::{backward_window, trace_window, AruGradient, Mode, Model, ModelParams, WindowSample};

/// Mean per-step NLL of one window and its gradient, accumulated into `grad`
/// with weight `weight`.
pub fn window_loss_and_grad(
    model: &Model,
    window: &WindowSample,
    state: Option<&AruState>,
    policy: AruGradient,
    weight: f64,
    grad: &mut ModelParams,
) -> Result<f64> {
    let trace = trace_window(model, window, state, Mode::Train, None)?;
    let y = window.y_decoder.as_deref().ok_or(Error::MissingTargets)?;
    let loss = nll_parts(&trace.forecast.mu, &trace.forecast.sigma, y)?;
    let (d_mu, d_sigma) = nll_grads(&trace.forecast.mu, &trace.forecast.sigma, y, weight);
    backward_window(model, window, &trace, &d_mu, &d_sigma, policy, grad)?;
    Ok(loss)
}

/// Mean loss over a batch and the gradient of that mean. Windows run in
/// parallel; per-window gradients are summed in batch order so the result
/// does not depend on the thread count.
pub fn batch_loss_and_grad(
    model: &Model,
    windows: &[WindowSample],
    policy: AruGradient,
) -> Result<(f64, ModelParams)> {
    if windows.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let weight = 1.0 / windows.len() as f64;
    let parts: Vec<Result<(f64, ModelParams)>> = windows
        .par_iter()
        .map(|w| {
            let mut g = model.params.zeros_like();
            let loss = window_loss_and_grad(model, w, None, policy, weight, &mut g)?;
            Ok((loss, g))
        })
        .collect();
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss * weight, total))
}

/// Mean per-step NLL of forecasts without targets fed back (validation).
pub fn batch_loss(model: &Model, windows: &[WindowSample]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let losses: Vec<Result<f64>> = windows
        .par_iter()
        .map(|w| {
            let y = w.y_decoder.as_deref().ok_or(Error::MissingTargets)?;
            let trace = trace_window(model, w, None, Mode::Infer, None)?;
            nll_parts(&trace.forecast.mu, &trace.forecast.sigma, y)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / windows.len() as f64)
}

/// Rescale `grad` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSchema, Head, Linear, ModelConfig, Preset};
    use crate::train::windows::make_windows;

    fn model(head: Head, seed: u64) -> Model {
        let cfg = ModelConfig::from_preset(Preset::Small, 4, 3, FeatureSchema::default(), head, vec![1.0, 0.9], 0.5)
            .unwrap();
        Model::new(cfg, seed).unwrap()
    }

    fn windows() -> Vec<WindowSample> {
        let y: Vec<f64> = (0..30).map(|t| (t as f64 * 0.7).sin()).collect();
        make_windows(&y, 4, 3, 2)
    }

    #[test]
    fn batch_gradient_is_mean_of_window_gradients() {
        let m = model(Head::Aru, 3);
        let ws = windows();
        let (loss, g) = batch_loss_and_grad(&m, &ws, AruGradient::StopGradient).unwrap();
        let mut manual = m.params.zeros_like();
        let mut manual_loss = 0.0;
        for w in &ws {
            let mut gw = m.params.zeros_like();
            manual_loss += window_loss_and_grad(&m, w, None, AruGradient::StopGradient, 1.0, &mut gw).unwrap();
            gw.scale(1.0 / ws.len() as f64);
            manual.add_assign(&gw);
        }
        assert!((loss - manual_loss / ws.len() as f64).abs() < 1e-12);
        for ((_, a), (_, b)) in g.blocks().into_iter().zip(manual.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn batch_gradient_is_thread_count_invariant() {
        let m = model(Head::Aru, 5);
        let ws = windows();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| batch_loss_and_grad(&m, &ws, AruGradient::StopGradient).unwrap())
        };
        let (l1, g1) = run(1);
        let (l4, g4) = run(4);
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert_eq!(g1, g4);
    }

    #[test]
    fn zero_residual_gives_zero_mean_path_gradient() {
        // Zero network, targets equal to the (zero) mean: only sigma moves.
        let mut m = model(Head::Baseline, 1);
        for (_, b) in m.params.blocks_mut() {
            b.fill(0.0);
        }
        let mut ws = windows();
        for w in &mut ws {
            w.y_decoder = Some(vec![0.0; 3]);
        }
        let (_, g) = batch_loss_and_grad(&m, &ws, AruGradient::StopGradient).unwrap();
        assert!(g.mu_head.weight.iter().chain(&g.mu_head.bias).all(|v| *v == 0.0));
        assert!(g.sigma_head.bias[0] != 0.0);
    }

    #[test]
    fn single_affine_layer_gradient_is_outer_product() {
        let layer = Linear {
            inp: 3,
            out: 2,
            weight: vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6],
            bias: vec![0.01, 0.02],
        };
        let x = [1.0, 2.0, -1.0];
        let delta = [0.5, -1.5];
        let mut g = Linear::zeros(3, 2);
        let dx = layer.backward(&x, &delta, &mut g);
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.weight[o * 3 + i], delta[o] * x[i]);
            }
            assert_eq!(g.bias[o], delta[o]);
        }
        for i in 0..3 {
            assert_eq!(dx[i], delta[0] * layer.weight[i] + delta[1] * layer.weight[3 + i]);
        }
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let m = model(Head::Baseline, 2);
        let mut g = m.params.zeros_like();
        for (_, b) in g.blocks_mut() {
            b.fill(3.0);
        }
        let before = clip_global_norm(&mut g, 10.0);
        assert!(before > 10.0);
        assert!((g.global_norm() - 10.0).abs() < 1e-9);
        let mut small = m.params.zeros_like();
        small.mu_head.bias[0] = 1.0;
        assert_eq!(clip_global_norm(&mut small, 10.0), 1.0);
        assert_eq!(small.mu_head.bias[0], 1.0);
    }
}
