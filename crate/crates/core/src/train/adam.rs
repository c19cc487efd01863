use crate::model::ModelParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, adam: &mut AdamState, lr: f64) {
    adam.step += 1;
    let (b1, b2) = (adam.beta1, adam.beta2);
    let c1 = 1.0 - b1.powi(adam.step as i32);
    let c2 = 1.0 - b2.powi(adam.step as i32);
    let eps = adam.eps;
    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(adam.m.blocks_mut())
        .zip(adam.v.blocks_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in blocks {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSchema, Head, Model, ModelConfig, Preset};

    fn params() -> ModelParams {
        let cfg = ModelConfig::from_preset(Preset::Small, 3, 2, FeatureSchema::default(), Head::Baseline, vec![1.0], 1.0)
            .unwrap();
        Model::new(cfg, 1).unwrap().params
    }

    fn filled(p: &ModelParams, value: f64) -> ModelParams {
        let mut g = p.zeros_like();
        for (_, b) in g.blocks_mut() {
            b.fill(value);
        }
        g
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        adam_step(&mut p, &filled(&before, 1.0), &mut adam, 1e-4);
        for ((_, a), (_, b)) in p.blocks().into_iter().zip(before.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!(((x - y) + 1e-4).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        adam_step(&mut p, &filled(&before, 0.5), &mut adam, 0.0);
        let m1 = adam.m.blocks()[0].1[0];
        let p1 = p.clone();
        adam_step(&mut p, &before.zeros_like(), &mut adam, 1e-3);
        assert_eq!(adam.m.blocks()[0].1[0], 0.9 * m1);
        // m_hat != 0 still moves params after a zero gradient; with lr 0 it does not.
        let mut q = p1.clone();
        let mut adam2 = adam.clone();
        adam_step(&mut q, &before.zeros_like(), &mut adam2, 0.0);
        assert_eq!(q, p1);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &filled(&before, -2.0), &mut adam, 0.0);
        }
        assert_eq!(p, before);
        assert_eq!(adam.step, 3);
    }

    #[test]
    fn scalar_quadratic_trace_matches_reference() {
        // f(x) = (x - 3)^2 from x = 0, lr = 0.1; reference computed step by
        // step with the textbook update.
        let mut p = params();
        for (_, b) in p.blocks_mut() {
            b.fill(0.0);
        }
        let mut adam = AdamState::new(&p);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let gx = 2.0 * (x - 3.0);
            m = 0.9 * m + 0.1 * gx;
            v = 0.999 * v + 0.001 * gx * gx;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let cur = p.blocks()[0].1[0];
            let g = filled(&p, 2.0 * (cur - 3.0));
            adam_step(&mut p, &g, &mut adam, 0.1);
        }
        assert!((p.blocks()[0].1[0] - x).abs() < 1e-14);
        // ten steps of ~lr each from 0 toward 3
        assert!((x - 1.0).abs() < 0.05, "{x}");
    }
}
