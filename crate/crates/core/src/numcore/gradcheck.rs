use crate::error::Result;

use super::{GradResult, ParamVector};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

pub fn numeric_gradient<F>(loss_fn: &F, params: &ParamVector) -> Result<Vec<f64>>
where
    F: Fn(&ParamVector) -> Result<GradResult>,
{
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let x = params.values()[i];
        probe.values_mut()[i] = x + FD_STEP;
        let up = loss_fn(&probe)?.loss;
        probe.values_mut()[i] = x - FD_STEP;
        let down = loss_fn(&probe)?.loss;
        probe.values_mut()[i] = x;
        out.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(out)
}

/// Maximum relative error between the analytic gradient returned by `loss_fn` and
/// central finite differences.
pub fn grad_check<F>(loss_fn: F, params: &ParamVector) -> Result<f64>
where
    F: Fn(&ParamVector) -> Result<GradResult>,
{
    let analytic = loss_fn(params)?.grad;
    let numeric = numeric_gradient(&loss_fn, params)?;
    Ok(analytic
        .values()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{backward, forward, NetSpec, Segment};
    use proptest::prelude::*;

    fn scalar(v: f64) -> ParamVector {
        ParamVector::new(vec![v], vec![Segment::new("x", vec![1])]).unwrap()
    }

    #[test]
    fn square_at_three() {
        let f = |p: &ParamVector| {
            let x = p.values()[0];
            Ok(GradResult {
                loss: x * x,
                grad: scalar(2.0 * x),
            })
        };
        assert!(grad_check(f, &scalar(3.0)).unwrap() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |_: &ParamVector| {
            Ok(GradResult {
                loss: 4.0,
                grad: scalar(0.0),
            })
        };
        assert_eq!(grad_check(f, &scalar(-1.0)).unwrap(), 0.0);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |p: &ParamVector| {
            let x = p.values()[0];
            Ok(GradResult {
                loss: x * x,
                grad: scalar(3.0 * x),
            })
        };
        assert!(grad_check(f, &scalar(1.0)).unwrap() > 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]
        #[test]
        fn backward_matches_finite_differences(seed in 0u64..1_000_000, h1 in 1usize..6, h2 in 1usize..5, out in 1usize..4) {
            let spec = NetSpec::new(3, vec![h1, h2], out).unwrap();
            let params = spec.init_params(seed);
            let mut r = crate::rng::rng_from(seed, &[9]);
            use rand::Rng;
            let x: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..out).map(|_| r.gen_range(-1.0..1.0)).collect();
            let f = |p: &ParamVector| {
                let y = forward(&spec, p, &x)?;
                Ok(GradResult {
                    loss: y.iter().zip(&c).map(|(a, b)| a * b).sum(),
                    grad: backward(&spec, p, &x, &c)?,
                })
            };
            prop_assert!(grad_check(f, &params).unwrap() < 1e-4);
        }
    }
}
