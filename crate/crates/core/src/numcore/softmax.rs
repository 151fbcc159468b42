use crate::error::{Error, Result};

/// Numerically stable log-softmax (max subtraction).
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("log_softmax input"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|z| z - lse).collect())
}

/// Log-softmax restricted to `legal` indices; every other entry is `-inf`.
pub fn masked_log_softmax(logits: &[f64], legal: &[usize]) -> Result<Vec<f64>> {
    if legal.is_empty() {
        return Err(Error::Empty("legal action set"));
    }
    let mut out = vec![f64::NEG_INFINITY; logits.len()];
    let sub: Vec<f64> = legal.iter().map(|&a| logits[a]).collect();
    for (&a, lp) in legal.iter().zip(log_softmax(&sub)?) {
        out[a] = lp;
    }
    Ok(out)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_pair() {
        let out = log_softmax(&[0.0, 0.0]).unwrap();
        assert!((out[0] - 0.5f64.ln()).abs() < 1e-15);
        assert!((out[1] - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_to_one_odds() {
        let out = log_softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((out[0].exp() - 2.0 / 3.0).abs() < 1e-15);
        assert!((out[1].exp() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn large_logits_stay_finite() {
        let out = log_softmax(&[1000.0, 0.0]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        assert!((out[0].exp() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(log_softmax(&[]), Err(Error::Empty(_))));
        assert!(masked_log_softmax(&[1.0], &[]).is_err());
    }

    #[test]
    fn masking_renormalizes_over_legal_entries() {
        // logits (1,2,3) with the middle action illegal.
        let out = masked_log_softmax(&[1.0, 2.0, 3.0], &[0, 2]).unwrap();
        assert_eq!(out[1], f64::NEG_INFINITY);
        let z = 1f64.exp() + 3f64.exp();
        assert!((out[0].exp() - 1f64.exp() / z).abs() < 1e-15);
        assert!((out[2].exp() - 3f64.exp() / z).abs() < 1e-15);
    }

    #[test]
    fn softplus_and_sigmoid_extremes() {
        assert!((softplus(-2.0) - 0.126_928_011_042_972_6).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(log_sigmoid(-1000.0).is_finite());
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(xs in proptest::collection::vec(-1e6f64..1e6, 1..12)) {
            let out = log_softmax(&xs).unwrap();
            let s: f64 = out.iter().map(|v| v.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
