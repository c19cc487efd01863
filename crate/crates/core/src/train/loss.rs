use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Forecast;

/// Mean per-step Gaussian negative log-likelihood
/// `1/2 log(2 pi sigma^2) + (y - mu)^2 / (2 sigma^2)`.
pub fn nll_loss(forecast: &Forecast, targets: &[f64]) -> Result<f64> {
    nll_parts(&forecast.mu, &forecast.sigma, targets)
}

pub(crate) fn nll_parts(mu: &[f64], sigma: &[f64], targets: &[f64]) -> Result<f64> {
    if mu.len() != targets.len() || sigma.len() != targets.len() {
        return Err(Error::shape(targets.len(), mu.len()));
    }
    if targets.is_empty() {
        return Err(Error::Empty("no targets for NLL".into()));
    }
    let mut total = 0.0;
    for ((&m, &s), &y) in mu.iter().zip(sigma).zip(targets) {
        if !(m.is_finite() && s.is_finite() && y.is_finite()) || s <= 0.0 {
            return Err(Error::NonFinite(format!("NLL input (mu={m}, sigma={s}, y={y})")));
        }
        let r = y - m;
        total += 0.5 * (2.0 * PI * s * s).ln() + r * r / (2.0 * s * s);
    }
    Ok(total / targets.len() as f64)
}

/// `(dL/dmu, dL/dsigma)` per step of [`nll_loss`], each multiplied by
/// `weight / K`.
pub(crate) fn nll_grads(mu: &[f64], sigma: &[f64], targets: &[f64], weight: f64) -> (Vec<f64>, Vec<f64>) {
    let scale = weight / targets.len() as f64;
    mu.iter()
        .zip(sigma)
        .zip(targets)
        .map(|((&m, &s), &y)| {
            let r = y - m;
            let s2 = s * s;
            (scale * -r / s2, scale * (1.0 / s - r * r / (s2 * s)))
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc(mu: Vec<f64>, sigma: Vec<f64>) -> Forecast {
        Forecast { mu, sigma, local: None }
    }

    #[test]
    fn perfect_unit_forecast() {
        let l = nll_loss(&fc(vec![1.0, -2.0], vec![1.0, 1.0]), &[1.0, -2.0]).unwrap();
        assert!((l - 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn one_sigma_residual() {
        let s = 2.5;
        let l = nll_loss(&fc(vec![0.0], vec![s]), &[s]).unwrap();
        assert!((l - (0.5 * (2.0 * PI * s * s).ln() + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn matches_density_formula() {
        let mu = [0.3, -1.2, 4.0];
        let sigma = [0.7, 2.0, 0.05];
        let y = [1.0, -1.0, 4.01];
        // -log of the normal density evaluated directly.
        let expected: f64 = mu
            .iter()
            .zip(&sigma)
            .zip(&y)
            .map(|((m, s), y)| {
                let density = (-(y - m) * (y - m) / (2.0 * s * s) as f64).exp() / (s * (2.0 * PI).sqrt());
                -density.ln()
            })
            .sum::<f64>()
            / 3.0;
        let l = nll_loss(&fc(mu.to_vec(), sigma.to_vec()), &y).unwrap();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_bad_sigma() {
        assert!(nll_loss(&fc(vec![f64::NAN], vec![1.0]), &[0.0]).is_err());
        assert!(nll_loss(&fc(vec![0.0], vec![0.0]), &[0.0]).is_err());
        assert!(nll_loss(&fc(vec![0.0], vec![1.0]), &[f64::INFINITY]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mu, sigma, y) = ([0.4, -0.3], [0.8, 1.7], [1.1, -0.9]);
        let (dmu, dsig) = nll_grads(&mu, &sigma, &y, 1.0);
        let eps = 1e-6;
        for k in 0..2 {
            let mut up = mu;
            up[k] += eps;
            let mut dn = mu;
            dn[k] -= eps;
            let fd = (nll_parts(&up, &sigma, &y).unwrap() - nll_parts(&dn, &sigma, &y).unwrap()) / (2.0 * eps);
            assert!((fd - dmu[k]).abs() < 1e-8);
            let mut up = sigma;
            up[k] += eps;
            let mut dn = sigma;
            dn[k] -= eps;
            let fd = (nll_parts(&mu, &up, &y).unwrap() - nll_parts(&mu, &dn, &y).unwrap()) / (2.0 * eps);
            assert!((fd - dsig[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_residual_gives_zero_mean_gradient() {
        let (dmu, _) = nll_grads(&[1.0, 2.0], &[0.5, 0.5], &[1.0, 2.0], 1.0);
        assert_eq!(dmu, vec![0.0, 0.0]);
    }
}
