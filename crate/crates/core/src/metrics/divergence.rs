use crate::envs::TabularMdp;
use crate::error::Result;
use crate::numcore::sigmoid;

use super::occupancy::{discounted_visitation, OccupancyTable, TabularPolicy};

/// `sum p ln(p / q)` in nats with `0 ln 0 = 0`; `f64::INFINITY` when `p` puts mass
/// where `q` has none.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            total += pi * (pi / qi).ln();
        }
    }
    total.max(0.0)
}

/// Jensen-Shannon divergence in nats, bounded by `ln 2`.
pub fn js(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, std::f64::consts::LN_2)
}

pub fn kl_divergence(p: &OccupancyTable, q: &OccupancyTable) -> f64 {
    kl(&p.weights, &q.weights)
}

pub fn js_divergence(p: &OccupancyTable, q: &OccupancyTable) -> f64 {
    js(&p.weights, &q.weights)
}

/// Discounted causal entropy `sum_s d(s) sum_a pi(a|s) (-ln pi(a|s))`, with `d` the
/// unnormalized discounted state visitation.
pub fn causal_entropy(mdp: &TabularMdp, policy: &TabularPolicy, gamma: f64) -> Result<f64> {
    let visit = discounted_visitation(mdp, policy, gamma)?;
    Ok(visit
        .iter()
        .zip(&policy.probs)
        .map(|(d, row)| {
            d * row
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| -p * p.ln())
                .sum::<f64>()
        })
        .sum())
}

/// Probability that the first option is preferred under a Bradley-Terry model.
pub fn bradley_terry_prob(r1: f64, r2: f64) -> f64 {
    sigmoid(r1 - r2)
}
