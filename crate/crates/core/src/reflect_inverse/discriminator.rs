use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::envs::{AgentAction, Env};
use crate::error::{Error, Result};
use crate::numcore::{
    backward_tape, forward_tape, sigmoid, Adam, Checkpoint, GradResult, NetSpec, ParamVector,
};
use crate::policy::{HistoryEncoder, HistoryState, ENCODER_VERSION};
use crate::rng::rng_from;

/// Scores are clamped to `[CLAMP, 1 - CLAMP]` before any logarithm.
pub const CLAMP: f64 = 1e-6;
pub const DEFAULT_DISC_HIDDEN: [usize; 1] = [32];

pub fn clamp_score(d: f64) -> f64 {
    d.clamp(CLAMP, 1.0 - CLAMP)
}

/// `-ln clamp(D)`: large when the pair looks expert-like (D near 0).
pub fn reward_from_score(d: f64) -> f64 {
    -clamp_score(d).ln()
}

/// Weighted discriminator objective on feature vectors:
/// `-(sum_i w_agent[i] ln D(x_i) + w_expert[i] ln(1 - D(x_i)))` with clamped scores.
/// A clamped score contributes no gradient.
pub fn weighted_disc_loss(
    spec: &NetSpec,
    params: &ParamVector,
    inputs: &[Vec<f64>],
    w_agent: &[f64],
    w_expert: &[f64],
) -> Result<GradResult> {
    if inputs.len() != w_agent.len() || inputs.len() != w_expert.len() {
        return Err(Error::Dimension {
            context: "discriminator weights",
            expected: inputs.len(),
            actual: w_agent.len().min(w_expert.len()),
        });
    }
    let parts = inputs
        .par_iter()
        .zip(w_agent.par_iter().zip(w_expert.par_iter()))
        .map(|(x, (&wa, &we))| {
            let tape = forward_tape(spec, params, x)?;
            let d = sigmoid(tape.output()[0]);
            let c = clamp_score(d);
            let loss = -(wa * c.ln() + we * (1.0 - c).ln());
            let mut g = vec![0.0; params.len()];
            if c == d {
                // d/dz ln sigmoid(z) = 1 - D, d/dz ln(1 - sigmoid(z)) = -D.
                let dz = -(wa * (1.0 - d) - we * d);
                backward_tape(spec, params, &tape, &[dz], &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = ParamVector::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.values_mut()
            .iter_mut()
            .zip(g)
            .for_each(|(a, b)| *a += b);
    }
    Ok(GradResult { loss, grad })
}

/// `D(s, a) = sigmoid(net(encode(s) ++ onehot(a)))`, trained to score agent pairs
/// high and expert pairs low.
#[derive(Clone, Debug)]
pub struct Discriminator {
    encoder: HistoryEncoder,
    num_actions: usize,
    spec: NetSpec,
    params: ParamVector,
}

impl Discriminator {
    pub fn new(env: &Env, hidden: &[usize], seed: u64) -> Result<Self> {
        let encoder = HistoryEncoder::for_env(env);
        let spec = NetSpec::new(encoder.dim() + env.num_actions(), hidden.to_vec(), 1)?;
        let mut params = spec.init_params(seed);
        // Zero output layer: the untrained score is 0.5 on every pair.
        let out_len: usize = params.layout().iter().rev().take(2).map(|s| s.len()).sum();
        let n = params.len();
        params.values_mut()[n - out_len..].fill(0.0);
        Ok(Discriminator {
            encoder,
            num_actions: env.num_actions(),
            spec,
            params,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        if params.layout() != self.spec.layout().as_slice() {
            return Err(Error::InvalidArgument(
                "parameter layout does not match the discriminator".into(),
            ));
        }
        Ok(Discriminator {
            params,
            ..self.clone()
        })
    }

    pub fn features(&self, h: &HistoryState, a: AgentAction) -> Result<Vec<f64>> {
        if a.0 >= self.num_actions {
            return Err(Error::IllegalAction { action: a.0 });
        }
        let mut x = self.encoder.encode(h)?;
        let base = x.len();
        x.resize(base + self.num_actions, 0.0);
        x[base + a.0] = 1.0;
        Ok(x)
    }

    /// Raw score in (0, 1) (before clamping).
    pub fn score(&self, h: &HistoryState, a: AgentAction) -> Result<f64> {
        let x = self.features(h, a)?;
        Ok(sigmoid(
            forward_tape(&self.spec, &self.params, &x)?.output()[0],
        ))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.spec, &self.params)
            .with_tag("kind", "discriminator")
            .with_tag("encoder", ENCODER_VERSION)
    }
}

/// Step-level reward `-ln clamp(D(s, a))`.
pub fn gail_reward(disc: &Discriminator, h: &HistoryState, a: AgentAction) -> Result<f64> {
    Ok(reward_from_score(disc.score(h, a)?))
}

/// `-(mean_agent ln D + mean_expert ln(1 - D))` over state-action samples.
pub fn disc_loss(
    disc: &Discriminator,
    agent: &[(HistoryState, AgentAction)],
    expert: &[(HistoryState, AgentAction)],
) -> Result<GradResult> {
    if agent.is_empty() || expert.is_empty() {
        return Err(Error::Empty("discriminator samples"));
    }
    let mut inputs = Vec::with_capacity(agent.len() + expert.len());
    let mut wa = Vec::with_capacity(inputs.capacity());
    let mut we = Vec::with_capacity(inputs.capacity());
    for (h, a) in agent {
        inputs.push(disc.features(h, *a)?);
        wa.push(1.0 / agent.len() as f64);
        we.push(0.0);
    }
    for (h, a) in expert {
        inputs.push(disc.features(h, *a)?);
        wa.push(0.0);
        we.push(1.0 / expert.len() as f64);
    }
    weighted_disc_loss(&disc.spec, &disc.params, &inputs, &wa, &we)
}

/// One epoch of minibatch Adam on [`disc_loss`]. Both sample sets are shuffled and
/// split into the same number of batches. Returns the mean minibatch loss.
pub fn train_discriminator(
    disc: &mut Discriminator,
    agent: &[(HistoryState, AgentAction)],
    expert: &[(HistoryState, AgentAction)],
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<f64> {
    let mut adam = Adam::new(disc.params.len());
    train_discriminator_with(disc, agent, expert, batch_size, lr, seed, &mut adam)
}

/// [`train_discriminator`] with caller-owned optimizer state.
pub fn train_discriminator_with(
    disc: &mut Discriminator,
    agent: &[(HistoryState, AgentAction)],
    expert: &[(HistoryState, AgentAction)],
    batch_size: usize,
    lr: f64,
    seed: u64,
    adam: &mut Adam,
) -> Result<f64> {
    if agent.is_empty() || expert.is_empty() {
        return Err(Error::Empty("discriminator samples"));
    }
    let mut rng = rng_from(seed, &[0xD15C]);
    let mut ia: Vec<usize> = (0..agent.len()).collect();
    let mut ie: Vec<usize> = (0..expert.len()).collect();
    ia.shuffle(&mut rng);
    ie.shuffle(&mut rng);
    let batches = expert.len().div_ceil(batch_size.max(1)).max(1);
    let mut total = 0.0;
    for b in 0..batches {
        let pick = |idx: &[usize],
                    src: &[(HistoryState, AgentAction)]|
         -> Vec<(HistoryState, AgentAction)> {
            let (lo, hi) = (b * idx.len() / batches, (b + 1) * idx.len() / batches);
            if hi > lo {
                idx[lo..hi].iter().map(|&i| src[i].clone()).collect()
            } else {
                vec![src[idx[b % idx.len()]].clone()]
            }
        };
        let g = disc_loss(disc, &pick(&ia, agent), &pick(&ie, expert))?;
        adam.step(&mut disc.params, &g.grad, lr)?;
        total += g.loss;
    }
    Ok(total / batches as f64)
}

/// `D* = rho_agent / (rho_agent + rho_expert)`, 0.5 where both vanish.
pub fn optimal_discriminator_tabular(rho_agent: &[f64], rho_expert: &[f64]) -> Vec<f64> {
    rho_agent
        .iter()
        .zip(rho_expert)
        .map(|(&a, &e)| if a + e > 0.0 { a / (a + e) } else { 0.5 })
        .collect()
}

/// `sum rho_agent ln D + rho_expert ln(1 - D)` without clamping (`0 ln 0 = 0`).
pub fn discriminator_objective(d: &[f64], rho_agent: &[f64], rho_expert: &[f64]) -> f64 {
    let term = |w: f64, p: f64| if w > 0.0 { w * p.ln() } else { 0.0 };
    d.iter()
        .zip(rho_agent.iter().zip(rho_expert))
        .map(|(&di, (&a, &e))| term(a, di) + term(e, 1.0 - di))
        .sum()
}
