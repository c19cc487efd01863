//! Forward passes of the encoder-decoder forecaster.
//!
//! Per window: every step's raw features are embedded into `v_t`; a tanh
//! recurrence over `[g_{t-1}, y_{t-1}, v_t]` produces the context `g`; each
//! horizon step is decoded independently from `[g, v_t]` into `h_t`; a head
//! turns `h_t` (and, for ARU heads, the local prediction) into `(mu, sigma)`.
//!
//! The traced variants keep every intermediate needed by the reverse pass.

use crate::aru::{AruState, LocalParams, LocalPrediction};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;

use super::config::{FeatureSchema, Head, ModelConfig};
use super::params::{Ff2Path, Model, ModelParams};
use super::window::WindowSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Targets known: ARU heads predict, then adapt, at every horizon step.
    Train,
    /// Targets unknown: ARU heads only predict across the horizon.
    Infer,
}

/// Gaussian forecast over the horizon, in scaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub local: Option<Vec<LocalPrediction>>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.mu.len()
    }
}

pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Concatenate the embedding rows of the categorical features with the
/// continuous features.
pub fn embed_inputs(
    params: &ModelParams,
    schema: &FeatureSchema,
    cat: &[u32],
    cont: &[f64],
) -> Result<Vec<f64>> {
    if cat.len() != schema.categorical.len() {
        return Err(Error::shape(
            format!("{} categorical features", schema.categorical.len()),
            cat.len(),
        ));
    }
    if cont.len() != schema.continuous.len() {
        return Err(Error::shape(
            format!("{} continuous features", schema.continuous.len()),
            cont.len(),
        ));
    }
    let mut v = Vec::with_capacity(schema.input_width());
    for ((&idx, table), spec) in cat.iter().zip(&params.embeddings).zip(&schema.categorical) {
        let idx = idx as usize;
        if idx >= spec.cardinality {
            return Err(Error::CategoryOutOfRange {
                feature: spec.name.clone(),
                index: idx,
                cardinality: spec.cardinality,
            });
        }
        v.extend_from_slice(table.row(idx));
    }
    v.extend_from_slice(cont);
    Ok(v)
}

/// Embedded inputs of every step of a window.
pub(crate) fn embed_window(model: &Model, window: &WindowSample) -> Result<Vec<Vec<f64>>> {
    (0..window.len())
        .map(|t| {
            embed_inputs(
                &model.params,
                &model.config.schema,
                window.step_cat(t),
                window.step_cont(t),
            )
        })
        .collect()
}

/// Encoder states `g_0 = 0, g_1, .., g_E`.
pub(crate) fn encode_traced(
    params: &ModelParams,
    rnn_units: usize,
    y_encoder: &[f64],
    v: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if v.len() < y_encoder.len() {
        return Err(Error::shape(y_encoder.len(), v.len()));
    }
    let mut states = Vec::with_capacity(y_encoder.len() + 1);
    states.push(vec![0.0; rnn_units]);
    let mut y_prev = 0.0;
    for (t, &y) in y_encoder.iter().enumerate() {
        let prev = states.last().unwrap();
        let mut g = params.encoder.forward_parts(&[prev, &[y_prev], &v[t]]);
        for x in &mut g {
            *x = x.tanh();
        }
        states.push(g);
        y_prev = y;
    }
    Ok(states)
}

/// Final encoder state for `E` conditioning steps; the `y` fed at the first
/// step is 0.
pub fn encode(model: &Model, y_encoder: &[f64], v: &[Vec<f64>]) -> Result<Vec<f64>> {
    if y_encoder.len() != model.config.encoder_len || v.len() != y_encoder.len() {
        return Err(Error::shape(
            format!("{} encoder steps", model.config.encoder_len),
            format!("{} targets / {} inputs", y_encoder.len(), v.len()),
        ));
    }
    Ok(encode_traced(&model.params, model.config.rnn_units, y_encoder, v)?
        .pop()
        .unwrap())
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderTrace {
    /// Index into the window's embedded inputs.
    pub step: usize,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn decode_traced(params: &ModelParams, g: &[f64], v: &[f64], step: usize) -> DecoderTrace {
    let [l1, l2, l3] = &params.decoder;
    let mut a1 = l1.forward_parts(&[g, v]);
    relu_in_place(&mut a1);
    let mut a2 = l2.forward_parts(&[&a1, v]);
    relu_in_place(&mut a2);
    let mut h = l3.forward(&a2);
    relu_in_place(&mut h);
    DecoderTrace { step, a1, a2, h }
}

/// Three ReLU layers on `[g, v_t]`, with `v_t` also fed to the second layer.
pub fn decode_step(params: &ModelParams, g: &[f64], v: &[f64]) -> Vec<f64> {
    decode_traced(params, g, v, 0).h
}

/// `mu = theta_mu . [h, 1]`, `sigma = softplus(theta_sigma . [h, 1])`.
pub fn gaussian_head(params: &ModelParams, h: &[f64]) -> (f64, f64) {
    let mu = params.mu_head.forward(h)[0];
    let raw = params.sigma_head.forward(h)[0];
    (mu, softplus(raw))
}

#[derive(Debug, Clone)]
pub(crate) struct PathTrace {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

fn ff2_path(path: &Ff2Path, h: &[f64], local: &[f64]) -> PathTrace {
    let mut first = path.first.forward_parts(&[h, local]);
    relu_in_place(&mut first);
    let mut second = path.second.forward(&first);
    relu_in_place(&mut second);
    PathTrace { first, second }
}

#[derive(Debug, Clone)]
pub(crate) struct Ff2Trace {
    pub mu: PathTrace,
    pub sigma: PathTrace,
    pub raw_sigma: f64,
}

fn ff2_traced(params: &ModelParams, h: &[f64], local: &LocalPrediction) -> Result<(f64, f64, Ff2Trace)> {
    let ff2 = params
        .ff2
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("model has no FF2 combiner".into()))?;
    if ff2.mu.first.inp != h.len() + local.m.len() {
        return Err(Error::shape(ff2.mu.first.inp, h.len() + local.m.len()));
    }
    let mu_path = ff2_path(&ff2.mu, h, local.m.as_slice());
    let sigma_path = ff2_path(&ff2.sigma, h, local.a.as_slice());
    let mu = params.mu_head.forward(&mu_path.second)[0];
    let raw_sigma = params.sigma_head.forward(&sigma_path.second)[0];
    Ok((
        mu,
        softplus(raw_sigma),
        Ff2Trace {
            mu: mu_path,
            sigma: sigma_path,
            raw_sigma,
        },
    ))
}

/// Fuse decoder output with local predictions: two ReLU layers on `[h, m]`
/// feed the mean head, two on `[h, a]` feed the softplus scale head.
pub fn ff2_combine(params: &ModelParams, h: &[f64], local: &LocalPrediction) -> Result<(f64, f64)> {
    ff2_traced(params, h, local).map(|(mu, sigma, _)| (mu, sigma))
}

#[derive(Debug, Clone)]
pub(crate) enum HeadTrace {
    Baseline { raw_sigma: f64 },
    Aru(Ff2Trace),
    AruDirect,
}

#[derive(Debug, Clone)]
pub(crate) struct StepTrace {
    pub dec: DecoderTrace,
    pub head: HeadTrace,
    /// Local parameters that produced this step's prediction.
    pub local_params: Option<usize>,
    pub local: Option<LocalPrediction>,
}

/// Where an in-window ARU update's input came from.
#[derive(Debug, Clone, Copy)]
pub(crate) enum UpdateSource {
    Warmup(usize),
    Step(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct WindowTrace {
    pub v: Vec<Vec<f64>>,
    pub enc_states: Vec<Vec<f64>>,
    pub warmup: Vec<DecoderTrace>,
    pub steps: Vec<StepTrace>,
    pub local_params: Vec<LocalParams>,
    /// In-window updates in order, with their targets.
    pub updates: Vec<(UpdateSource, f64)>,
    /// Number of in-window updates applied before each horizon step's
    /// prediction.
    pub updates_before: Vec<usize>,
    pub forecast: Forecast,
    pub state: Option<AruState>,
}

impl WindowTrace {
    pub fn g(&self) -> &[f64] {
        self.enc_states.last().unwrap()
    }

    pub fn update_h(&self, src: UpdateSource) -> &[f64] {
        match src {
            UpdateSource::Warmup(s) => &self.warmup[s].h,
            UpdateSource::Step(k) => &self.steps[k].dec.h,
        }
    }
}

/// Recorded local parameters replayed in place of the live ones. Used to
/// evaluate the loss with ARU statistics held constant.
#[derive(Debug, Clone)]
pub(crate) struct FrozenLocal {
    pub theta_mu: Vec<Vec<DenseVector>>,
    pub theta_sigma: Vec<Vec<f64>>,
    /// Freeze only the variances; means use the live closed-form fit.
    pub variance_only: bool,
}

impl FrozenLocal {
    pub fn record(trace: &WindowTrace, variance_only: bool) -> Self {
        let (theta_mu, theta_sigma) = trace
            .steps
            .iter()
            .filter_map(|s| s.local_params)
            .map(|i| {
                let lp = &trace.local_params[i];
                (lp.theta_mu.clone(), lp.theta_sigma.clone())
            })
            .unzip();
        FrozenLocal {
            theta_mu,
            theta_sigma,
            variance_only,
        }
    }

    fn apply(&self, k: usize, h: &[f64], live: LocalPrediction) -> LocalPrediction {
        let a = DenseVector::from_vec(self.theta_sigma[k].clone());
        if self.variance_only {
            return LocalPrediction { m: live.m, a };
        }
        let m = self.theta_mu[k]
            .iter()
            .map(|t| {
                let (w, b) = t.as_slice().split_at(h.len());
                crate::linalg::dot(w, h) + b[0]
            })
            .collect();
        LocalPrediction {
            m: DenseVector::from_vec(m),
            a,
        }
    }
}

fn check_state(cfg: &ModelConfig, state: &AruState) -> Result<()> {
    let aru = cfg.aru.as_ref().expect("validated");
    if state.config().feature_dim != aru.feature_dim || state.config().banks() != aru.banks() {
        return Err(Error::shape(
            format!("ARU state H={} J={}", aru.feature_dim, aru.banks()),
            format!(
                "H={} J={}",
                state.config().feature_dim,
                state.config().banks()
            ),
        ));
    }
    Ok(())
}

pub(crate) fn trace_window(
    model: &Model,
    window: &WindowSample,
    state: Option<&AruState>,
    mode: Mode,
    freeze: Option<&FrozenLocal>,
) -> Result<WindowTrace> {
    let cfg = &model.config;
    let params = &model.params;
    if window.encoder_len != cfg.encoder_len || window.horizon != cfg.horizon {
        return Err(Error::shape(
            format!("window E={} K={}", cfg.encoder_len, cfg.horizon),
            format!("E={} K={}", window.encoder_len, window.horizon),
        ));
    }
    let targets = match (mode, &window.y_decoder) {
        (Mode::Train, None) => return Err(Error::MissingTargets),
        (Mode::Train, Some(y)) => Some(y.as_slice()),
        (Mode::Infer, _) => None,
    };

    let v = embed_window(model, window)?;
    let enc_states = encode_traced(params, cfg.rnn_units, &window.y_encoder, &v)?;
    let g = enc_states.last().unwrap().clone();
    let e = cfg.encoder_len;
    let k_max = cfg.horizon;

    let mut warmup = Vec::new();
    let mut updates = Vec::new();
    let mut aru_state = match (cfg.head.uses_aru(), state) {
        (false, _) => None,
        (true, Some(s)) => {
            check_state(cfg, s)?;
            Some(s.clone())
        }
        (true, None) => {
            let mut s = AruState::new(cfg.aru.clone().expect("validated"))?;
            if cfg.encoder_adapt {
                for t in 0..e {
                    let dec = decode_traced(params, &g, &v[t], t);
                    s.update(&dec.h, window.y_encoder[t])?;
                    updates.push((UpdateSource::Warmup(warmup.len()), window.y_encoder[t]));
                    warmup.push(dec);
                }
            }
            Some(s)
        }
    };

    let mut local_params = Vec::new();
    if mode == Mode::Infer {
        if let Some(s) = &aru_state {
            local_params.push(s.local_params()?);
        }
    }

    let mut steps = Vec::with_capacity(k_max);
    let mut updates_before = Vec::with_capacity(k_max);
    let mut mu = Vec::with_capacity(k_max);
    let mut sigma = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let dec = decode_traced(params, &g, &v[e + k], e + k);
        updates_before.push(updates.len());
        let (local, lp_index) = match &aru_state {
            None => (None, None),
            Some(s) => {
                if mode == Mode::Train {
                    local_params.push(s.local_params()?);
                }
                let idx = local_params.len() - 1;
                let live = local_params[idx].predict(&dec.h)?;
                (Some(live), Some(idx))
            }
        };
        let used = match (&local, freeze) {
            (Some(live), Some(f)) => Some(f.apply(k, &dec.h, live.clone())),
            _ => local.clone(),
        };
        let (m, s, head) = match cfg.head {
            Head::Baseline => {
                let raw = params.sigma_head.forward(&dec.h)[0];
                (
                    params.mu_head.forward(&dec.h)[0],
                    softplus(raw),
                    HeadTrace::Baseline { raw_sigma: raw },
                )
            }
            Head::Aru => {
                let (m, s, t) = ff2_traced(params, &dec.h, used.as_ref().unwrap())?;
                (m, s, HeadTrace::Aru(t))
            }
            Head::AruDirect => {
                let l = used.as_ref().unwrap();
                (l.m[0], l.a[0].max(cfg.sigma_floor).sqrt(), HeadTrace::AruDirect)
            }
        };
        mu.push(m);
        sigma.push(s);
        if let (Some(st), Some(y), Some(live)) = (aru_state.as_mut(), targets, local.as_ref()) {
            st.update_with_prediction(&dec.h, y[k], live)?;
            updates.push((UpdateSource::Step(k), y[k]));
        }
        steps.push(StepTrace {
            dec,
            head,
            local_params: lp_index,
            local: used,
        });
    }

    let local = cfg
        .head
        .uses_aru()
        .then(|| steps.iter().map(|s| s.local.clone().unwrap()).collect());
    Ok(WindowTrace {
        v,
        enc_states,
        warmup,
        steps,
        local_params,
        updates,
        updates_before,
        forecast: Forecast { mu, sigma, local },
        state: aru_state,
    })
}

/// Forecast one window.
///
/// For ARU heads, `state` is the series state at the window origin. With
/// `None` the window starts from a zero state, adapted over the encoder range
/// first when `encoder_adapt` is set. In `Train` mode every horizon step
/// predicts from the current state and then adapts on its target; in `Infer`
/// mode the state is only read. The returned state is the state after the
/// window (`None` for the baseline head).
pub fn forward_window(
    model: &Model,
    window: &WindowSample,
    state: Option<&AruState>,
    mode: Mode,
) -> Result<(Forecast, Option<AruState>)> {
    let trace = trace_window(model, window, state, mode, None)?;
    Ok((trace.forecast, trace.state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aru::AruConfig;
    use crate::model::config::{CategoricalFeature, Preset};
    use crate::model::params::Linear;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema(n_cont: usize) -> FeatureSchema {
        FeatureSchema {
            categorical: vec![],
            continuous: (0..n_cont).map(|i| format!("x{i}")).collect(),
        }
    }

    fn model(preset: Preset, head: Head, e: usize, k: usize, n_cont: usize, seed: u64) -> Model {
        let cfg = ModelConfig::from_preset(preset, e, k, schema(n_cont), head, vec![1.0, 0.9], 0.5).unwrap();
        Model::new(cfg, seed).unwrap()
    }

    fn window(rng: &mut impl Rng, e: usize, k: usize, n_cont: usize) -> WindowSample {
        WindowSample {
            series: 0,
            start: 0,
            encoder_len: e,
            horizon: k,
            n_cat: 0,
            n_cont,
            cat: vec![],
            cont: (0..(e + k) * n_cont).map(|_| rng.random_range(0.0..1.0)).collect(),
            y_encoder: (0..e).map(|_| rng.random_range(-1.0..1.0)).collect(),
            y_decoder: Some((0..k).map(|_| rng.random_range(-1.0..1.0)).collect()),
            scale: 1.0,
        }
    }

    fn naive_affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let inp = x.len();
        (0..b.len())
            .map(|o| {
                let mut s = b[o];
                for i in 0..inp {
                    s += w[o * inp + i] * x[i];
                }
                s
            })
            .collect()
    }

    fn relu(x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| v.max(0.0)).collect()
    }

    #[test]
    fn embed_examples() {
        let mut cfg = ModelConfig::from_preset(Preset::Small, 2, 1, schema(2), Head::Baseline, vec![1.0], 1.0).unwrap();
        let m = Model::new(cfg.clone(), 0).unwrap();
        assert_eq!(embed_inputs(&m.params, &cfg.schema, &[], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);

        cfg.schema = FeatureSchema {
            categorical: vec![CategoricalFeature { name: "c".into(), cardinality: 1, embed_dim: 2 }],
            continuous: vec![],
        };
        let mut m = Model::new(cfg.clone(), 0).unwrap();
        m.params.embeddings[0].table = vec![0.5, 0.5];
        assert_eq!(embed_inputs(&m.params, &cfg.schema, &[0], &[]).unwrap(), vec![0.5, 0.5]);
        let err = embed_inputs(&m.params, &cfg.schema, &[1], &[]);
        assert!(matches!(err, Err(Error::CategoryOutOfRange { index: 1, .. })));

        cfg.schema = FeatureSchema {
            categorical: vec![
                CategoricalFeature { name: "hour".into(), cardinality: 24, embed_dim: 4 },
                CategoricalFeature { name: "dow".into(), cardinality: 7, embed_dim: 3 },
            ],
            continuous: vec![],
        };
        let m = Model::new(cfg.clone(), 3).unwrap();
        let v = embed_inputs(&m.params, &cfg.schema, &[13, 2], &[]).unwrap();
        let mut expected = m.params.embeddings[0].table[13 * 4..14 * 4].to_vec();
        expected.extend_from_slice(&m.params.embeddings[1].table[2 * 3..3 * 3]);
        assert_eq!(v, expected);
    }

    #[test]
    fn zero_encoder_gives_zero_context() {
        let mut m = model(Preset::Small, Head::Baseline, 5, 2, 3, 1);
        m.params.encoder = Linear::zeros(m.params.encoder.inp, m.params.encoder.out);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = window(&mut rng, 5, 2, 3);
        let v = embed_window(&m, &w).unwrap();
        let g = encode(&m, &w.y_encoder, &v[..5]).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_step_encoder_is_hand_checkable() {
        let cfg = ModelConfig {
            rnn_units: 1,
            hidden_sizes: [1, 1, 1],
            ff2_sizes: [1, 1],
            encoder_len: 1,
            horizon: 1,
            schema: schema(1),
            head: Head::Baseline,
            aru: None,
            encoder_adapt: true,
            sigma_floor: 1e-3,
        };
        let mut m = Model::new(cfg, 0).unwrap();
        // inputs [g_prev, y_prev, v]
        m.params.encoder.weight = vec![1.0, 0.7, -0.4];
        m.params.encoder.bias = vec![0.1];
        let g = encode(&m, &[5.0], &[vec![0.5]]).unwrap();
        assert_eq!(g, vec![(0.0 * 0.7 + 0.5 * -0.4 + 0.1f64).tanh()]);
    }

    #[test]
    fn encoder_matches_unrolled_recurrence() {
        let m = model(Preset::Medium, Head::Baseline, 8, 2, 3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = window(&mut rng, 8, 2, 3);
        let v = embed_window(&m, &w).unwrap();
        let g = encode(&m, &w.y_encoder, &v[..8]).unwrap();

        let r = m.config.rnn_units;
        let enc = &m.params.encoder;
        let mut state = vec![0.0; r];
        for t in 0..8 {
            let y_prev = if t == 0 { 0.0 } else { w.y_encoder[t - 1] };
            let mut x = state.clone();
            x.push(y_prev);
            x.extend_from_slice(&v[t]);
            state = naive_affine(&enc.weight, &enc.bias, &x).into_iter().map(f64::tanh).collect();
        }
        for (a, b) in g.iter().zip(&state) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_decoder_outputs_zero() {
        let mut m = model(Preset::Small, Head::Baseline, 3, 2, 2, 0);
        for l in &mut m.params.decoder {
            *l = Linear::zeros(l.inp, l.out);
        }
        let h = decode_step(&m.params, &[0.3; 8], &[0.2, 0.9]);
        assert_eq!(h, vec![0.0; 6]);
    }

    #[test]
    fn identity_decoder_passes_relu_of_inputs() {
        // g width 2, v width 1, all layers width 3.
        let cfg = ModelConfig {
            rnn_units: 2,
            hidden_sizes: [3, 3, 3],
            ff2_sizes: [1, 1],
            encoder_len: 1,
            horizon: 1,
            schema: schema(1),
            head: Head::Baseline,
            aru: None,
            encoder_adapt: true,
            sigma_floor: 1e-3,
        };
        let mut m = Model::new(cfg, 0).unwrap();
        let eye = |inp: usize| {
            let mut l = Linear::zeros(inp, 3);
            for i in 0..3 {
                l.weight[i * inp + i] = 1.0;
            }
            l
        };
        m.params.decoder = [eye(3), eye(4), eye(3)];
        let h = decode_step(&m.params, &[0.5, -2.0], &[1.5]);
        assert_eq!(h, vec![0.5, 0.0, 1.5]);
    }

    #[test]
    fn decoder_matches_layer_by_layer_oracle() {
        let m = model(Preset::Medium, Head::Baseline, 4, 2, 5, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let h = decode_step(&m.params, &g, &v);

        let [l1, l2, l3] = &m.params.decoder;
        let x1: Vec<f64> = g.iter().chain(&v).copied().collect();
        let a1 = relu(naive_affine(&l1.weight, &l1.bias, &x1));
        let x2: Vec<f64> = a1.iter().chain(&v).copied().collect();
        let a2 = relu(naive_affine(&l2.weight, &l2.bias, &x2));
        let expected = relu(naive_affine(&l3.weight, &l3.bias, &a2));
        assert_eq!(h.len(), 10);
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_head_examples() {
        let mut m = model(Preset::Small, Head::Baseline, 2, 1, 1, 0);
        m.params.mu_head = Linear::zeros(6, 1);
        m.params.sigma_head = Linear::zeros(6, 1);
        let (mu, sigma) = gaussian_head(&m.params, &[1.0; 6]);
        assert_eq!(mu, 0.0);
        assert!((sigma - std::f64::consts::LN_2).abs() < 1e-15);

        m.params.sigma_head.bias = vec![30.0];
        let (_, sigma) = gaussian_head(&m.params, &[1.0; 6]);
        assert!((sigma - 30.0).abs() < 1e-9);

        assert!(softplus(800.0).is_finite());
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn ff2_with_zero_weights_uses_biases_only() {
        let mut m = model(Preset::Small, Head::Aru, 2, 1, 1, 0);
        let ff2 = m.params.ff2.as_mut().unwrap();
        for path in [&mut ff2.mu, &mut ff2.sigma] {
            path.first.weight.fill(0.0);
            path.second.weight.fill(0.0);
        }
        m.params.mu_head.weight.fill(0.0);
        m.params.sigma_head.weight.fill(0.0);
        let local = LocalPrediction {
            m: DenseVector::from_vec(vec![3.0, -1.0]),
            a: DenseVector::from_vec(vec![0.5, 0.2]),
        };
        let (mu, sigma) = ff2_combine(&m.params, &[0.7; 6], &local).unwrap();
        assert_eq!(mu, m.params.mu_head.bias[0]);
        assert_eq!(sigma, softplus(m.params.sigma_head.bias[0]));
    }

    #[test]
    fn ff2_can_pass_local_mean_through() {
        let cfg = ModelConfig::from_preset(Preset::Small, 2, 1, schema(1), Head::Aru, vec![1.0], 1.0).unwrap();
        let mut m = Model::new(cfg, 0).unwrap();
        let ff2 = m.params.ff2.as_mut().unwrap();
        let inp = ff2.mu.first.inp; // 6 + 1
        ff2.mu.first.weight.fill(0.0);
        ff2.mu.first.bias.fill(0.0);
        ff2.mu.first.weight[inp - 1] = 1.0; // unit 0 <- m
        ff2.mu.first.weight[inp + inp - 1] = -1.0; // unit 1 <- -m
        ff2.mu.second.weight.fill(0.0);
        ff2.mu.second.bias.fill(0.0);
        ff2.mu.second.weight[0] = 1.0;
        ff2.mu.second.weight[6 + 1] = 1.0;
        m.params.mu_head.weight.fill(0.0);
        m.params.mu_head.bias = vec![0.0];
        m.params.mu_head.weight[0] = 1.0;
        m.params.mu_head.weight[1] = -1.0;
        for m1 in [2.5, -4.0] {
            let local = LocalPrediction {
                m: DenseVector::from_vec(vec![m1]),
                a: DenseVector::from_vec(vec![1.0]),
            };
            let (mu, _) = ff2_combine(&m.params, &[0.3; 6], &local).unwrap();
            assert_eq!(mu, m1);
        }
    }

    #[test]
    fn ff2_matches_layer_by_layer_oracle() {
        let m = model(Preset::Medium, Head::Aru, 4, 2, 3, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
        let local = LocalPrediction {
            m: DenseVector::from_vec(vec![0.4, -0.2]),
            a: DenseVector::from_vec(vec![0.3, 0.1]),
        };
        let (mu, sigma) = ff2_combine(&m.params, &h, &local).unwrap();
        let ff2 = m.params.ff2.as_ref().unwrap();
        let path = |p: &Ff2Path, extra: &[f64]| {
            let x: Vec<f64> = h.iter().chain(extra).copied().collect();
            let a = relu(naive_affine(&p.first.weight, &p.first.bias, &x));
            relu(naive_affine(&p.second.weight, &p.second.bias, &a))
        };
        let mu_ref = naive_affine(&m.params.mu_head.weight, &m.params.mu_head.bias, &path(&ff2.mu, local.m.as_slice()))[0];
        let raw = naive_affine(&m.params.sigma_head.weight, &m.params.sigma_head.bias, &path(&ff2.sigma, local.a.as_slice()))[0];
        assert!((mu - mu_ref).abs() < 1e-12);
        assert!((sigma - (1.0 + raw.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_baseline_forecasts_zero_mean_ln2_scale() {
        let mut m = model(Preset::Small, Head::Baseline, 4, 3, 2, 0);
        m.params = ModelParams::zeros(&m.config);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = window(&mut rng, 4, 3, 2);
        let (f, state) = forward_window(&m, &w, None, Mode::Infer).unwrap();
        assert!(state.is_none());
        assert_eq!(f.mu, vec![0.0; 3]);
        for s in f.sigma {
            assert!((s - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_state_infer_matches_ff2_on_zero_local() {
        let mut m = model(Preset::Small, Head::Aru, 4, 3, 2, 5);
        m.config.encoder_adapt = false;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = window(&mut rng, 4, 3, 2);
        let (f, _) = forward_window(&m, &w, None, Mode::Infer).unwrap();
        let v = embed_window(&m, &w).unwrap();
        let g = encode(&m, &w.y_encoder, &v[..4]).unwrap();
        for k in 0..3 {
            let h = decode_step(&m.params, &g, &v[4 + k]);
            let (mu, sigma) = ff2_combine(&m.params, &h, &LocalPrediction::zeros(2)).unwrap();
            assert_eq!((f.mu[k], f.sigma[k]), (mu, sigma));
            assert_eq!(f.local.as_ref().unwrap()[k], LocalPrediction::zeros(2));
        }
    }

    #[test]
    fn train_mode_state_equals_sequential_updates() {
        let mut m = model(Preset::Small, Head::Aru, 4, 3, 2, 9);
        m.config.encoder_adapt = false;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut w = window(&mut rng, 4, 3, 2);
        let v = embed_window(&m, &w).unwrap();
        let g = encode(&m, &w.y_encoder, &v[..4]).unwrap();
        let hs: Vec<Vec<f64>> = (0..3).map(|k| decode_step(&m.params, &g, &v[4 + k])).collect();
        // targets linear in h
        w.y_decoder = Some(hs.iter().map(|h| 1.5 * h.iter().sum::<f64>()).collect());
        let (_, state) = forward_window(&m, &w, None, Mode::Train).unwrap();

        let mut expected = AruState::new(m.config.aru.clone().unwrap()).unwrap();
        for (h, y) in hs.iter().zip(w.y_decoder.as_ref().unwrap()) {
            expected.update(h, *y).unwrap();
        }
        assert_eq!(state.unwrap(), expected);
    }

    #[test]
    fn encoder_adapt_runs_over_encoder_range() {
        let m = model(Preset::Small, Head::Aru, 5, 2, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = window(&mut rng, 5, 2, 2);
        let (_, state) = forward_window(&m, &w, None, Mode::Infer).unwrap();
        let v = embed_window(&m, &w).unwrap();
        let g = encode(&m, &w.y_encoder, &v[..5]).unwrap();
        let mut expected = AruState::new(m.config.aru.clone().unwrap()).unwrap();
        for t in 0..5 {
            expected.update(&decode_step(&m.params, &g, &v[t]), w.y_encoder[t]).unwrap();
        }
        assert_eq!(state.unwrap(), expected);
    }

    #[test]
    fn infer_mode_leaves_given_state_unchanged() {
        let m = model(Preset::Small, Head::Aru, 4, 3, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = AruState::new(m.config.aru.clone().unwrap()).unwrap();
        for _ in 0..20 {
            let h: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            s.update(&h, rng.random_range(-1.0..1.0)).unwrap();
        }
        let before = s.clone();
        let w = window(&mut rng, 4, 3, 2);
        let (_, out) = forward_window(&m, &w, Some(&s), Mode::Infer).unwrap();
        assert_eq!(s, before);
        assert_eq!(out.unwrap(), before);
    }

    #[test]
    fn aru_direct_emits_first_bank() {
        let m = model(Preset::Small, Head::AruDirect, 4, 3, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = window(&mut rng, 4, 3, 2);
        let (f, _) = forward_window(&m, &w, None, Mode::Infer).unwrap();
        for (k, l) in f.local.as_ref().unwrap().iter().enumerate() {
            assert_eq!(f.mu[k], l.m[0]);
            assert_eq!(f.sigma[k], l.a[0].max(1e-3).sqrt());
        }
    }

    #[test]
    fn train_mode_requires_targets() {
        let m = model(Preset::Small, Head::Baseline, 4, 3, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = window(&mut rng, 4, 3, 2).without_targets();
        assert!(matches!(forward_window(&m, &w, None, Mode::Train), Err(Error::MissingTargets)));
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let m = model(Preset::Small, Head::Aru, 4, 3, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = window(&mut rng, 4, 3, 2);
        let s = AruState::new(AruConfig::new(5, vec![1.0, 0.9], 1.0).unwrap()).unwrap();
        assert!(matches!(forward_window(&m, &w, Some(&s), Mode::Infer), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn baseline_horizon_steps_are_independent() {
        let m = model(Preset::Small, Head::Baseline, 4, 3, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = window(&mut rng, 4, 3, 2);
        let (f, _) = forward_window(&m, &w, None, Mode::Infer).unwrap();
        // reverse the decoder steps' inputs
        let mut r = w.clone();
        for k in 0..3 {
            let src = 4 + (2 - k);
            r.cont[(4 + k) * 2..(5 + k) * 2].copy_from_slice(&w.cont[src * 2..(src + 1) * 2]);
        }
        let (fr, _) = forward_window(&m, &r, None, Mode::Infer).unwrap();
        for k in 0..3 {
            assert_eq!(f.mu[k], fr.mu[2 - k]);
            assert_eq!(f.sigma[k], fr.sigma[2 - k]);
        }
    }
}
