use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::envs::{AgentAction, Env};
use crate::error::{Error, Result};
use crate::numcore::{
    backward_tape, forward, forward_tape, Adam, GradResult, NetSpec, Optimizer, ParamVector,
};
use crate::policy::{HistoryEncoder, HistoryState, PolicyModel};
use crate::rng::rng_from;

pub const DEFAULT_CLIP: f64 = 0.2;
pub const DEFAULT_ENTROPY: f64 = 0.01;
pub const DEFAULT_GAE_LAMBDA: f64 = 0.95;
pub const DEFAULT_POLICY_EPOCHS: usize = 4;

/// One policy-gradient sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoSample {
    pub prefix: HistoryState,
    pub action: AgentAction,
    pub advantage: f64,
    /// Log-probability of `action` under the policy that generated the sample.
    pub behavior_log_prob: f64,
}

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Mean over samples of `-clipped_objective - entropy_coeff * H(pi(.|s))`.
pub fn ppo_surrogate(
    policy: &PolicyModel,
    batch: &[PpoSample],
    clip_eps: f64,
    entropy_coeff: f64,
) -> Result<GradResult> {
    if !(clip_eps > 0.0 && clip_eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "clip_eps must be in (0, 1), got {clip_eps}"
        )));
    }
    if batch.is_empty() {
        return Err(Error::Empty("policy-gradient batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts = batch
        .par_iter()
        .map(|smp| {
            let s = policy.score(&smp.prefix)?;
            let a = smp.action.0;
            if !s.log_probs[a].is_finite() {
                return Err(Error::IllegalAction { action: a });
            }
            let ratio = (s.log_probs[a] - smp.behavior_log_prob).exp();
            let adv = smp.advantage;
            let surrogate = clipped_objective(ratio, adv, clip_eps);
            let ent = s.entropy();
            let mut d = vec![0.0; s.log_probs.len()];
            // The unclipped branch carries the gradient; the clipped one is constant.
            if ratio * adv <= surrogate {
                for (x, g) in d.iter_mut().zip(s.dlogp_dlogits(a)) {
                    *x -= ratio * adv * g;
                }
            }
            if entropy_coeff != 0.0 {
                for (x, g) in d.iter_mut().zip(s.dentropy_dlogits()) {
                    *x -= entropy_coeff * g;
                }
            }
            d.iter_mut().for_each(|x| *x *= scale);
            let mut grad = vec![0.0; policy.params().len()];
            policy.backprop(&s, &d, &mut grad)?;
            Ok((-surrogate - entropy_coeff * ent, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = ParamVector::zeros_like(policy.params());
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.values_mut()
            .iter_mut()
            .zip(g)
            .for_each(|(a, b)| *a += b);
    }
    Ok(GradResult {
        loss: loss * scale,
        grad,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub entropy_coeff: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: DEFAULT_CLIP,
            entropy_coeff: DEFAULT_ENTROPY,
            epochs: DEFAULT_POLICY_EPOCHS,
            lr: 3e-4,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Several epochs of minibatch Adam (fresh state) on [`ppo_surrogate`]. Returns the mean
/// minibatch loss.
pub fn ppo_update(
    policy: &mut PolicyModel,
    batch: &[PpoSample],
    config: &PpoConfig,
) -> Result<f64> {
    let mut opt = Optimizer::adam(policy.params().len());
    ppo_update_with(policy, batch, config, &mut opt)
}

/// [`ppo_update`] with caller-owned optimizer state.
pub fn ppo_update_with(
    policy: &mut PolicyModel,
    batch: &[PpoSample],
    config: &PpoConfig,
    opt: &mut Optimizer,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let (mut total, mut count) = (0.0, 0);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_from(config.seed, &[0x990, epoch as u64]));
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mb: Vec<PpoSample> = chunk.iter().map(|&i| batch[i].clone()).collect();
            let g = ppo_surrogate(policy, &mb, config.clip_eps, config.entropy_coeff)?;
            opt.step(policy.params_mut(), &g.grad, config.lr)?;
            total += g.loss;
            count += 1;
        }
    }
    Ok(if count == 0 {
        0.0
    } else {
        total / count as f64
    })
}

/// Generalized advantage estimates and discounted reward-to-go for one episode
/// that ends after its last reward.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut ret = vec![0.0; n];
    let (mut next_adv, mut next_ret) = (0.0, 0.0);
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        next_ret = rewards[t] + gamma * next_ret;
        adv[t] = next_adv;
        ret[t] = next_ret;
    }
    (adv, ret)
}

/// An on-policy episode with a reward attached to every step.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardedEpisode {
    pub prefixes: Vec<HistoryState>,
    pub actions: Vec<AgentAction>,
    pub rewards: Vec<f64>,
    pub behavior_log_probs: Vec<f64>,
}

/// GAE over each episode using `value` as the baseline. Returns the samples and
/// the reward-to-go regression targets aligned with them.
pub fn compute_advantages(
    episodes: &[RewardedEpisode],
    value: &ValueModel,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<PpoSample>, Vec<f64>)> {
    let mut samples = Vec::new();
    let mut targets = Vec::new();
    for ep in episodes {
        let values = ep
            .prefixes
            .iter()
            .map(|h| value.predict(h))
            .collect::<Result<Vec<_>>>()?;
        let (adv, ret) = gae(&ep.rewards, &values, gamma, lambda);
        for (i, h) in ep.prefixes.iter().enumerate() {
            if !adv[i].is_finite() {
                return Err(Error::InvalidArgument("non-finite advantage".into()));
            }
            samples.push(PpoSample {
                prefix: h.clone(),
                action: ep.actions[i],
                advantage: adv[i],
                behavior_log_prob: ep.behavior_log_probs[i],
            });
        }
        targets.extend(ret);
    }
    Ok((samples, targets))
}

/// State-value regressor on encoded histories.
#[derive(Clone, Debug)]
pub struct ValueModel {
    encoder: HistoryEncoder,
    spec: NetSpec,
    params: ParamVector,
}

impl ValueModel {
    pub fn new(env: &Env, hidden: &[usize], seed: u64) -> Result<Self> {
        let encoder = HistoryEncoder::for_env(env);
        let spec = NetSpec::new(encoder.dim(), hidden.to_vec(), 1)?;
        let params = spec.init_params(seed);
        Ok(ValueModel {
            encoder,
            spec,
            params,
        })
    }

    pub fn predict(&self, h: &HistoryState) -> Result<f64> {
        Ok(forward(&self.spec, &self.params, &self.encoder.encode(h)?)?[0])
    }

    /// Mean squared error against `targets` and its gradient.
    pub fn mse(&self, inputs: &[HistoryState], targets: &[f64]) -> Result<GradResult> {
        let scale = 1.0 / inputs.len().max(1) as f64;
        let mut grad = ParamVector::zeros_like(&self.params);
        let mut loss = 0.0;
        for (h, &y) in inputs.iter().zip(targets) {
            let tape = forward_tape(&self.spec, &self.params, &self.encoder.encode(h)?)?;
            let err = tape.output()[0] - y;
            loss += err * err * scale;
            backward_tape(
                &self.spec,
                &self.params,
                &tape,
                &[2.0 * err * scale],
                grad.values_mut(),
            )?;
        }
        Ok(GradResult { loss, grad })
    }

    /// Minibatch Adam regression; returns the final full-batch MSE.
    pub fn fit(
        &mut self,
        inputs: &[HistoryState],
        targets: &[f64],
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> Result<f64> {
        if inputs.is_empty() {
            return Ok(0.0);
        }
        let mut adam = Adam::new(self.params.len());
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut rng_from(seed, &[0x7A1, epoch as u64]));
            for chunk in order.chunks(64) {
                let xs: Vec<HistoryState> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
                let g = self.mse(&xs, &ys)?;
                adam.step(&mut self.params, &g.grad, lr)?;
            }
        }
        Ok(self.mse(inputs, targets)?.loss)
    }
}
