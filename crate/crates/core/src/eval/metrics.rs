use crate::error::{Error, Result};

fn check(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no values to score".into()));
    }
    Ok(())
}

/// Normalized deviation `sum |y - yhat| / sum |y|`.
pub fn nd_metric(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    let denom: f64 = truth.iter().map(|y| y.abs()).sum();
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let num: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum();
    Ok(num / denom)
}

/// Root mean squared error.
pub fn rmse_metric(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    let sse: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nd_examples() {
        assert_eq!(nd_metric(&[1.0, 1.0], &[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(nd_metric(&[3.0, -2.0], &[3.0, -2.0]).unwrap(), 0.0);
        assert_eq!(nd_metric(&[2.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0 / 6.0);
        assert!(matches!(nd_metric(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroTruth)));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_metric(&[1.0, 1.0], &[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse_metric(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(rmse_metric(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), (12.5f64).sqrt());
        assert!(rmse_metric(&[], &[]).is_err());
        assert!(rmse_metric(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn zero_predictor_has_unit_nd(y in prop::collection::vec(1e-6f64..1e6, 1..100)) {
            prop_assert_eq!(nd_metric(&y, &vec![0.0; y.len()]).unwrap(), 1.0);
        }

        #[test]
        fn metrics_are_permutation_invariant(
            pairs in prop::collection::vec((0.1f64..100.0, -100.0f64..100.0), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (ys, ps): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
            let tol = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
            prop_assert!(tol(nd_metric(&y, &p).unwrap(), nd_metric(&ys, &ps).unwrap()));
            prop_assert!(tol(rmse_metric(&y, &p).unwrap(), rmse_metric(&ys, &ps).unwrap()));
        }

        #[test]
        fn nd_is_scale_invariant(
            pairs in prop::collection::vec((0.1f64..100.0, -100.0f64..100.0), 1..60),
            c in 0.5f64..20.0,
        ) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
            let pc: Vec<f64> = p.iter().map(|v| v * c).collect();
            let a = nd_metric(&y, &p).unwrap();
            let b = nd_metric(&yc, &pc).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
