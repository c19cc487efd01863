use rand::Rng;

use super::config::{Head, ModelConfig};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng;

/// Affine layer `y = W x + b`, `W` row-major `out x inp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inp: usize,
    pub out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Linear {
            inp,
            out,
            weight: vec![0.0; inp * out],
            bias: vec![0.0; out],
        }
    }

    fn uniform(inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let mut l = Linear::zeros(inp, out);
        for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        l
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.inp..(o + 1) * self.inp]
    }

    /// `W x + b`. `x` may be given in concatenated parts; rows are summed part
    /// by part in order.
    pub fn forward_parts(&self, parts: &[&[f64]]) -> Vec<f64> {
        debug_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), self.inp);
        (0..self.out)
            .map(|o| {
                let row = self.row(o);
                let mut acc = 0.0;
                let mut off = 0;
                for p in parts {
                    acc += dot(&row[off..off + p.len()], p);
                    off += p.len();
                }
                acc + self.bias[o]
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_parts(&[x])
    }

    /// Accumulate `dW += dy x^T`, `db += dy` into `grad`; return `W^T dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let g_row = &mut grad.weight[o * self.inp..(o + 1) * self.inp];
            for (g, &xi) in g_row.iter_mut().zip(x) {
                *g += d * xi;
            }
            for (dxi, &w) in dx.iter_mut().zip(self.row(o)) {
                *dxi += d * w;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub cardinality: usize,
    pub dim: usize,
    pub table: Vec<f64>,
}

impl Embedding {
    pub fn row(&self, index: usize) -> &[f64] {
        &self.table[index * self.dim..(index + 1) * self.dim]
    }
}

/// The two ReLU layers of one FF2 path.
#[derive(Debug, Clone, PartialEq)]
pub struct Ff2Path {
    pub first: Linear,
    pub second: Linear,
}

/// Separate FF2 networks for the mean path (`[h, m]`) and the scale path
/// (`[h, a]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Ff2 {
    pub mu: Ff2Path,
    pub sigma: Ff2Path,
}

/// Every trainable parameter. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embeddings: Vec<Embedding>,
    /// `[g_prev, y_prev, v] -> g`
    pub encoder: Linear,
    /// `[g, v] -> a1`, `[a1, v] -> a2`, `a2 -> h`
    pub decoder: [Linear; 3],
    pub ff2: Option<Ff2>,
    pub mu_head: Linear,
    pub sigma_head: Linear,
}

impl ModelParams {
    fn build(cfg: &ModelConfig, mut make: impl FnMut(usize, usize) -> Linear, mut embed: impl FnMut(usize, usize) -> Embedding) -> Self {
        let v = cfg.input_width();
        let r = cfg.rnn_units;
        let [h1, h2, h3] = cfg.hidden_sizes;
        let embeddings = cfg
            .schema
            .categorical
            .iter()
            .map(|c| embed(c.cardinality, c.embed_dim))
            .collect();
        let encoder = make(r + 1 + v, r);
        let decoder = [make(r + v, h1), make(h1 + v, h2), make(h2, h3)];
        let (ff2, head_in) = match cfg.head {
            Head::Aru => {
                let j = cfg.banks();
                let [f1, f2] = cfg.ff2_sizes;
                let mu = Ff2Path {
                    first: make(h3 + j, f1),
                    second: make(f1, f2),
                };
                let sigma = Ff2Path {
                    first: make(h3 + j, f1),
                    second: make(f1, f2),
                };
                (Some(Ff2 { mu, sigma }), f2)
            }
            Head::Baseline | Head::AruDirect => (None, h3),
        };
        ModelParams {
            embeddings,
            encoder,
            decoder,
            ff2,
            mu_head: make(head_in, 1),
            sigma_head: make(head_in, 1),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::build(cfg, Linear::zeros, |card, dim| Embedding {
            cardinality: card,
            dim,
            table: vec![0.0; card * dim],
        })
    }

    /// Weights and biases uniform in `+-1/sqrt(fan_in)`, embeddings uniform in
    /// `+-0.05`, drawn from the `"init"` stream of `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut layer_rng = rng::stream(seed, "init/layers");
        let mut embed_rng = rng::stream(seed, "init/embeddings");
        Self::build(
            cfg,
            |i, o| Linear::uniform(i, o, &mut layer_rng),
            |card, dim| Embedding {
                cardinality: card,
                dim,
                table: (0..card * dim)
                    .map(|_| embed_rng.random_range(-0.05..0.05))
                    .collect(),
            },
        )
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, b) in z.blocks_mut() {
            b.fill(0.0);
        }
        z
    }

    /// Named parameter blocks in declaration order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, e) in self.embeddings.iter().enumerate() {
            out.push((format!("embedding.{i}"), &e.table));
        }
        fn linear<'a>(name: &str, l: &'a Linear, out: &mut Vec<(String, &'a [f64])>) {
            out.push((format!("{name}.weight"), &l.weight));
            out.push((format!("{name}.bias"), &l.bias));
        }
        linear("encoder", &self.encoder, &mut out);
        for (i, l) in self.decoder.iter().enumerate() {
            linear(&format!("decoder.{i}"), l, &mut out);
        }
        if let Some(ff2) = &self.ff2 {
            linear("ff2.mu.0", &ff2.mu.first, &mut out);
            linear("ff2.mu.1", &ff2.mu.second, &mut out);
            linear("ff2.sigma.0", &ff2.sigma.first, &mut out);
            linear("ff2.sigma.1", &ff2.sigma.second, &mut out);
        }
        linear("head.mu", &self.mu_head, &mut out);
        linear("head.sigma", &self.sigma_head, &mut out);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, e) in self.embeddings.iter_mut().enumerate() {
            out.push((format!("embedding.{i}"), &mut e.table));
        }
        fn linear<'a>(name: &str, l: &'a mut Linear, out: &mut Vec<(String, &'a mut [f64])>) {
            out.push((format!("{name}.weight"), &mut l.weight));
            out.push((format!("{name}.bias"), &mut l.bias));
        }
        linear("encoder", &mut self.encoder, &mut out);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            linear(&format!("decoder.{i}"), l, &mut out);
        }
        if let Some(ff2) = &mut self.ff2 {
            linear("ff2.mu.0", &mut ff2.mu.first, &mut out);
            linear("ff2.mu.1", &mut ff2.mu.second, &mut out);
            linear("ff2.sigma.0", &mut ff2.sigma.first, &mut out);
            linear("ff2.sigma.1", &mut ff2.sigma.second, &mut out);
        }
        linear("head.mu", &mut self.mu_head, &mut out);
        linear("head.sigma", &mut self.sigma_head, &mut out);
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, b) in self.blocks_mut() {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// `self += other`, block by block. Shapes must match.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Check that every block has the length `cfg` implies.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zeros(cfg);
        let got = self.blocks();
        let want = expected.blocks();
        if got.len() != want.len() {
            return Err(Error::shape(format!("{} blocks", want.len()), got.len()));
        }
        for ((gn, gb), (wn, wb)) in got.iter().zip(&want) {
            if gn != wn || gb.len() != wb.len() {
                return Err(Error::shape(format!("{wn}[{}]", wb.len()), format!("{gn}[{}]", gb.len())));
            }
        }
        Ok(())
    }
}

/// Config plus parameters: everything a forward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Model { config, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{FeatureSchema, Preset};

    #[test]
    fn linear_backward_is_outer_product() {
        let l = Linear {
            inp: 2,
            out: 1,
            weight: vec![0.5, -1.0],
            bias: vec![0.25],
        };
        let x = [2.0, 3.0];
        assert_eq!(l.forward(&x), vec![0.5 * 2.0 - 3.0 + 0.25]);
        let mut g = Linear::zeros(2, 1);
        let dx = l.backward(&x, &[1.5], &mut g);
        assert_eq!(g.weight, vec![3.0, 4.5]);
        assert_eq!(g.bias, vec![1.5]);
        assert_eq!(dx, vec![0.75, -1.5]);
    }

    #[test]
    fn init_is_bounded_and_deterministic() {
        let cfg = ModelConfig::from_preset(
            Preset::Medium,
            8,
            4,
            FeatureSchema::default(),
            Head::Aru,
            vec![1.0],
            1.0,
        )
        .unwrap();
        let a = ModelParams::init(&cfg, 5);
        assert_eq!(a, ModelParams::init(&cfg, 5));
        assert_ne!(a, ModelParams::init(&cfg, 6));
        let bound = 1.0 / (cfg.rnn_units as f64 + 1.0).sqrt();
        assert!(a.encoder.weight.iter().all(|w| w.abs() <= bound));
        assert!(a.ff2.is_some());
        a.check_shapes(&cfg).unwrap();
    }

    #[test]
    fn block_names_are_unique() {
        let cfg = ModelConfig::from_preset(
            Preset::Small,
            8,
            4,
            FeatureSchema::default(),
            Head::Aru,
            vec![1.0, 0.9],
            1.0,
        )
        .unwrap();
        let p = ModelParams::zeros(&cfg);
        let names: Vec<String> = p.blocks().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(names.len(), dedup.len());
        assert_eq!(
            names,
            p.clone().blocks_mut().into_iter().map(|(n, _)| n).collect::<Vec<_>>()
        );
    }
}
