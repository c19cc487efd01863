//! The Adaptive Recurrent Unit.
//!
//! Each series owns an [`AruState`]: for every aging factor `alpha_j` a bank of
//! aged sufficient statistics `(sxx, sxy, sn, ss)` over bias-augmented inputs
//! `z = [h, 1]`. The state has constant size regardless of stream length.
//! Local ridge parameters are recovered in closed form at predict time:
//!
//! ```text
//! theta_mu_j    = (sxx_j + lambda I)^-1 sxy_j
//! theta_sigma_j = ss_j / sn_j            (0 while sn_j = 0)
//! m_j = theta_mu_j . [h, 1]     a_j = theta_sigma_j
//! ```
//!
//! `lambda` is added at solve time only, so it never decays with aging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix, DenseVector};

/// Number of updates between re-symmetrizations of `sxx`.
pub const RESYMMETRIZE_EVERY: u64 = 1000;

const STATE_MAGIC: &[u8; 4] = b"ARUS";
const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AruConfig {
    /// Width `H` of the decoder output fed to the unit.
    pub feature_dim: usize,
    /// One aging factor per statistics bank, each in (0, 1].
    pub aging: Vec<f64>,
    /// Ridge `lambda > 0`.
    pub ridge: f64,
}

impl AruConfig {
    pub fn new(feature_dim: usize, aging: Vec<f64>, ridge: f64) -> Result<Self> {
        let cfg = AruConfig {
            feature_dim,
            aging,
            ridge,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("ARU feature_dim must be >= 1".into()));
        }
        if self.aging.is_empty() {
            return Err(Error::InvalidConfig(
                "ARU needs at least one aging factor".into(),
            ));
        }
        if let Some(a) = self.aging.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "aging factor {a} outside (0, 1]"
            )));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ridge must be positive, got {}",
                self.ridge
            )));
        }
        Ok(())
    }

    pub fn banks(&self) -> usize {
        self.aging.len()
    }

    /// Augmented dimension `H + 1`.
    pub fn aug_dim(&self) -> usize {
        self.feature_dim + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBank {
    pub sxx: DenseMatrix,
    pub sxy: DenseVector,
    pub sn: f64,
    pub ss: f64,
}

impl StatsBank {
    fn zeros(d: usize) -> Self {
        StatsBank {
            sxx: DenseMatrix::zeros(d),
            sxy: DenseVector::zeros(d),
            sn: 0.0,
            ss: 0.0,
        }
    }
}

/// Local prediction from every bank: means `m` (target units) and variances
/// `a` (squared target units).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPrediction {
    pub m: DenseVector,
    pub a: DenseVector,
}

impl LocalPrediction {
    pub fn zeros(banks: usize) -> Self {
        LocalPrediction {
            m: DenseVector::zeros(banks),
            a: DenseVector::zeros(banks),
        }
    }
}

/// Closed-form local parameters of every bank.
#[derive(Debug, Clone)]
pub struct LocalParams {
    pub theta_mu: Vec<DenseVector>,
    pub theta_sigma: Vec<f64>,
    pub(crate) factors: Vec<Cholesky>,
}

impl LocalParams {
    pub fn banks(&self) -> usize {
        self.theta_sigma.len()
    }

    pub fn predict(&self, h: &[f64]) -> Result<LocalPrediction> {
        let d = self.theta_mu.first().map_or(0, |t| t.len());
        if h.len() + 1 != d {
            return Err(Error::shape(d - 1, h.len()));
        }
        let m = self.theta_mu.iter().map(|t| mean_at(t, h)).collect();
        Ok(LocalPrediction {
            m: DenseVector::from_vec(m),
            a: DenseVector::from_vec(self.theta_sigma.clone()),
        })
    }

    /// Solve against the regularized system of bank `j` (used to backpropagate
    /// through the closed-form solve).
    pub(crate) fn solve_bank(&self, j: usize, rhs: &[f64]) -> Result<DenseVector> {
        self.factors[j].solve(rhs)
    }
}

/// `theta . [h, 1]` without materializing the augmented vector.
fn mean_at(theta: &DenseVector, h: &[f64]) -> f64 {
    let t = theta.as_slice();
    let (w, bias) = t.split_at(h.len());
    crate::linalg::dot(w, h) + bias[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AruState {
    config: AruConfig,
    banks: Vec<StatsBank>,
    step_count: u64,
}

impl AruState {
    /// All-zero state.
    pub fn new(config: AruConfig) -> Result<Self> {
        config.validate()?;
        let d = config.aug_dim();
        let banks = (0..config.banks()).map(|_| StatsBank::zeros(d)).collect();
        Ok(AruState {
            config,
            banks,
            step_count: 0,
        })
    }

    pub fn config(&self) -> &AruConfig {
        &self.config
    }

    pub fn banks(&self) -> &[StatsBank] {
        &self.banks
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Number of reals held, `J * ((H+1)^2 + (H+1) + 2)`.
    pub fn num_reals(&self) -> usize {
        self.banks
            .iter()
            .map(|b| b.sxx.as_slice().len() + b.sxy.len() + 2)
            .sum()
    }

    fn check_h(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.config.feature_dim {
            return Err(Error::shape(self.config.feature_dim, h.len()));
        }
        Ok(())
    }

    pub fn local_params(&self) -> Result<LocalParams> {
        let lambda = self.config.ridge;
        let mut theta_mu = Vec::with_capacity(self.banks.len());
        let mut theta_sigma = Vec::with_capacity(self.banks.len());
        let mut factors = Vec::with_capacity(self.banks.len());
        for bank in &self.banks {
            let chol = Cholesky::factor(&bank.sxx.add_diagonal(lambda))?;
            theta_mu.push(chol.solve(bank.sxy.as_slice())?);
            theta_sigma.push(if bank.sn > 0.0 { bank.ss / bank.sn } else { 0.0 });
            factors.push(chol);
        }
        Ok(LocalParams {
            theta_mu,
            theta_sigma,
            factors,
        })
    }

    /// Predict mode. Leaves the state untouched.
    pub fn predict(&self, h: &[f64]) -> Result<LocalPrediction> {
        self.check_h(h)?;
        self.local_params()?.predict(h)
    }

    /// Adapt mode: fold in one realized `(h, y)` pair. The residual added to
    /// `ss` uses the prediction of the state before this update.
    pub fn update(&mut self, h: &[f64], y: f64) -> Result<()> {
        self.check_h(h)?;
        let pre = self.predict(h)?;
        self.update_with_prediction(h, y, &pre)
    }

    /// As [`update`](Self::update), reusing a pre-update prediction the caller
    /// already computed for the same `h`.
    pub fn update_with_prediction(
        &mut self,
        h: &[f64],
        y: f64,
        pre: &LocalPrediction,
    ) -> Result<()> {
        self.check_h(h)?;
        if pre.m.len() != self.banks.len() {
            return Err(Error::shape(self.banks.len(), pre.m.len()));
        }
        if !y.is_finite() || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ARU update input".into()));
        }
        let z = DenseVector::augmented(h);
        let z = z.as_slice();
        for (j, (bank, &alpha)) in self.banks.iter_mut().zip(&self.config.aging).enumerate() {
            bank.sxx.age_and_add_outer(alpha, z);
            for (s, &zi) in bank.sxy.as_mut_slice().iter_mut().zip(z) {
                *s = alpha * *s + zi * y;
            }
            bank.sn = alpha * bank.sn + 1.0;
            let r = y - pre.m[j];
            bank.ss = alpha * bank.ss + r * r;
        }
        self.step_count += 1;
        if self.step_count % RESYMMETRIZE_EVERY == 0 {
            for bank in &mut self.banks {
                bank.sxx.symmetrize();
            }
        }
        Ok(())
    }

    /// Flat little-endian record: magic, version, H, J, lambda, alphas,
    /// step count, then per bank `sxx` (row-major), `sxy`, `sn`, `ss`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.num_reals());
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.feature_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.banks() as u32).to_le_bytes());
        out.extend_from_slice(&self.config.ridge.to_le_bytes());
        for a in &self.config.aging {
            out.extend_from_slice(&a.to_le_bytes());
        }
        out.extend_from_slice(&self.step_count.to_le_bytes());
        for bank in &self.banks {
            for v in bank.sxx.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in bank.sxy.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&bank.sn.to_le_bytes());
            out.extend_from_slice(&bank.ss.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != STATE_MAGIC {
            return Err(Error::Checkpoint("not an ARU state record".into()));
        }
        let version = r.u32()?;
        if version != STATE_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported ARU state version {version}"
            )));
        }
        let h = r.u32()? as usize;
        let j = r.u32()? as usize;
        let ridge = r.f64()?;
        let aging = (0..j).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let config = AruConfig::new(h, aging, ridge)?;
        let step_count = r.u64()?;
        let d = h + 1;
        let mut banks = Vec::with_capacity(j);
        for _ in 0..j {
            let sxx = DenseMatrix::from_row_major(d, r.f64s(d * d)?)?;
            let sxy = DenseVector::from_vec(r.f64s(d)?);
            let sn = r.f64()?;
            let ss = r.f64()?;
            banks.push(StatsBank { sxx, sxy, sn, ss });
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes in ARU state".into()));
        }
        Ok(AruState {
            config,
            banks,
            step_count,
        })
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}
