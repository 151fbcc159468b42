//! Implicit-reward reflection: preference optimization of the policy against a
//! frozen reference on step-level (expert action, practiced action) pairs, plus a
//! trajectory-level variant used as a baseline.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expert::Trajectory;
use crate::numcore::{log_sigmoid, sigmoid, Adam, GradResult, ParamVector};
use crate::policy::{HistoryState, PolicyModel, ScoredState};
use crate::rng::rng_from;

pub use crate::inspection::PreferencePair;

pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_BATCH: usize = 16;
pub const DEFAULT_IMPLICIT_ITERATIONS: usize = 3;

/// Frozen copy of a policy.
#[derive(Clone, Debug)]
pub struct ReferencePolicy {
    model: PolicyModel,
}

impl ReferencePolicy {
    pub fn snapshot(policy: &PolicyModel) -> Self {
        ReferencePolicy {
            model: policy.clone(),
        }
    }

    pub fn model(&self) -> &PolicyModel {
        &self.model
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )))
    }
}

/// `beta * (log pi(a|s) - log pi_ref(a|s))`, the log-partition term omitted.
pub fn implicit_reward(
    policy: &PolicyModel,
    reference: &ReferencePolicy,
    state: &HistoryState,
    action: crate::envs::AgentAction,
    beta: f64,
) -> Result<f64> {
    Ok(beta * (policy.log_prob(state, action)? - reference.model.log_prob(state, action)?))
}

fn sum_grads(parts: Vec<(f64, Vec<f64>)>, like: &ParamVector, scale: f64) -> GradResult {
    let mut grad = ParamVector::zeros_like(like);
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.values_mut()
            .iter_mut()
            .zip(g)
            .for_each(|(a, b)| *a += b);
    }
    GradResult {
        loss: loss * scale,
        grad,
    }
}

/// `log p_w - log p_l` taken as a logit difference, so the softmax normalizer
/// cancels exactly rather than up to rounding.
fn log_ratio(s: &ScoredState, w: usize, l: usize) -> f64 {
    let z = s.logits();
    z[w] - z[l]
}

/// Margin `beta * [(lp_w - lpref_w) - (lp_l - lpref_l)]` of one pair.
pub fn pair_margin(
    policy: &PolicyModel,
    reference: &ReferencePolicy,
    pair: &PreferencePair,
    beta: f64,
) -> Result<f64> {
    let s = policy.score(&pair.prefix)?;
    let r = reference.model.score(&pair.prefix)?;
    let (w, l) = (pair.winner.0, pair.loser.0);
    if !s.log_probs[w].is_finite() || !s.log_probs[l].is_finite() {
        return Err(Error::IllegalAction {
            action: if s.log_probs[w].is_finite() { l } else { w },
        });
    }
    Ok(beta * (log_ratio(&s, w, l) - log_ratio(&r, w, l)))
}

/// Mean over pairs of `-log sigmoid(margin)`, differentiated through the policy only.
pub fn dpo_loss(
    policy: &PolicyModel,
    reference: &ReferencePolicy,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<GradResult> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return Err(Error::Empty("preference pairs"));
    }
    let scale = 1.0 / pairs.len() as f64;
    let parts = pairs
        .par_iter()
        .map(|pair| {
            let s = policy.score(&pair.prefix)?;
            let r = reference.model.score(&pair.prefix)?;
            let (w, l) = (pair.winner.0, pair.loser.0);
            if !s.log_probs[w].is_finite() || !s.log_probs[l].is_finite() {
                return Err(Error::IllegalAction {
                    action: if s.log_probs[w].is_finite() { l } else { w },
                });
            }
            let margin = beta * (log_ratio(&s, w, l) - log_ratio(&r, w, l));
            // d/dz [log p_w - log p_l] = e_w - e_l: the softmax terms cancel.
            let coeff = -sigmoid(-margin) * beta * scale;
            let mut d = vec![0.0; s.log_probs.len()];
            d[w] += coeff;
            d[l] -= coeff;
            let mut g = vec![0.0; policy.params().len()];
            policy.backprop(&s, &d, &mut g)?;
            Ok((-log_sigmoid(margin), g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_grads(parts, policy.params(), scale))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitConfig {
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        ImplicitConfig {
            beta: DEFAULT_BETA,
            lr: 3e-4,
            batch_size: DEFAULT_BATCH,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitMetrics {
    pub pairs: usize,
    /// Mean minibatch loss over the epoch (before each step).
    pub mean_loss: f64,
    pub margin_before: f64,
    pub margin_after: f64,
    /// True when there was nothing to learn from (no contrasting pairs).
    pub converged: bool,
}

/// One epoch of minibatch Adam over shuffled items.
fn run_epoch<F>(
    policy: &mut PolicyModel,
    n: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    loss: F,
) -> Result<f64>
where
    F: Fn(&PolicyModel, &[usize]) -> Result<GradResult>,
{
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, &[0xD90]));
    let mut adam = Adam::new(policy.params().len());
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(batch_size) {
        let g = loss(policy, chunk)?;
        adam.step(policy.params_mut(), &g.grad, lr)?;
        total += g.loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

fn mean_margin(
    policy: &PolicyModel,
    reference: &ReferencePolicy,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<f64> {
    let margins = pairs
        .par_iter()
        .map(|p| pair_margin(policy, reference, p, beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(margins.iter().sum::<f64>() / margins.len() as f64)
}

/// One reflection iteration: a single epoch of [`dpo_loss`] descent. The reference
/// is a snapshot of the incoming policy unless `fixed_reference` is given.
pub fn train_implicit_iteration(
    policy: &mut PolicyModel,
    pairs: &[PreferencePair],
    config: &ImplicitConfig,
    fixed_reference: Option<&ReferencePolicy>,
) -> Result<ImplicitMetrics> {
    check_beta(config.beta)?;
    if pairs.is_empty() {
        return Ok(ImplicitMetrics {
            pairs: 0,
            mean_loss: 0.0,
            margin_before: 0.0,
            margin_after: 0.0,
            converged: true,
        });
    }
    let snapshot;
    let reference = match fixed_reference {
        Some(r) => r,
        None => {
            snapshot = ReferencePolicy::snapshot(policy);
            &snapshot
        }
    };
    let margin_before = mean_margin(policy, reference, pairs, config.beta)?;
    let mean_loss = run_epoch(
        policy,
        pairs.len(),
        config.batch_size,
        config.lr,
        config.seed,
        |p, idx| {
            let batch: Vec<PreferencePair> = idx.iter().map(|&i| pairs[i].clone()).collect();
            dpo_loss(p, reference, &batch, config.beta)
        },
    )?;
    Ok(ImplicitMetrics {
        pairs: pairs.len(),
        mean_loss,
        margin_before,
        margin_after: mean_margin(policy, reference, pairs, config.beta)?,
        converged: false,
    })
}

/// Whole-trajectory preference: the expert's episode over the agent's.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPair {
    pub winner: Trajectory,
    pub loser: Trajectory,
}

/// Pairs every expert trajectory with the agent rollouts started from the same
/// reset seed; rollouts identical to the expert's actions are skipped.
pub fn trajectory_pairs(expert: &[Trajectory], agent: &[Trajectory]) -> Vec<TrajectoryPair> {
    expert
        .iter()
        .flat_map(|e| {
            agent
                .iter()
                .filter(move |a| a.episode_id == e.episode_id && a.steps != e.steps)
                .map(move |a| TrajectoryPair {
                    winner: e.clone(),
                    loser: a.clone(),
                })
        })
        .collect()
}

struct ScoredTrajectory {
    log_ratio: f64,
    scored: Vec<(crate::policy::ScoredState, usize)>,
}

fn score_trajectory(
    policy: &PolicyModel,
    reference: &ReferencePolicy,
    t: &Trajectory,
) -> Result<ScoredTrajectory> {
    let mut log_ratio = 0.0;
    let mut scored = Vec::with_capacity(t.len());
    for (h, step) in HistoryState::prefixes(t).iter().zip(&t.steps) {
        let s = policy.score(h)?;
        let a = step.action_id.0;
        let lr = reference.model.action_log_probs(h)?[a];
        if !s.log_probs[a].is_finite() || !lr.is_finite() {
            return Err(Error::IllegalAction { action: a });
        }
        log_ratio += s.log_probs[a] - lr;
        scored.push((s, a));
    }
    Ok(ScoredTrajectory { log_ratio, scored })
}

/// Trajectory-level preference loss: per-action log-ratios are summed over each
/// whole trajectory before forming the margin.
pub fn traj_dpo_loss(
    policy: &PolicyModel,
    reference: &ReferencePolicy,
    pairs: &[TrajectoryPair],
    beta: f64,
) -> Result<GradResult> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return Err(Error::Empty("trajectory pairs"));
    }
    let scale = 1.0 / pairs.len() as f64;
    let parts = pairs
        .par_iter()
        .map(|pair| {
            let w = score_trajectory(policy, reference, &pair.winner)?;
            let l = score_trajectory(policy, reference, &pair.loser)?;
            let margin = beta * (w.log_ratio - l.log_ratio);
            let coeff = -sigmoid(-margin) * beta * scale;
            let mut g = vec![0.0; policy.params().len()];
            for (side, sign) in [(&w, 1.0), (&l, -1.0)] {
                for (s, a) in &side.scored {
                    let mut d = s.dlogp_dlogits(*a);
                    d.iter_mut().for_each(|x| *x *= sign * coeff);
                    policy.backprop(s, &d, &mut g)?;
                }
            }
            Ok((-log_sigmoid(margin), g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_grads(parts, policy.params(), scale))
}

/// Trajectory-level baseline iteration: one epoch of [`traj_dpo_loss`] against a
/// snapshot of the incoming policy.
pub fn train_traj_dpo_iteration(
    policy: &mut PolicyModel,
    pairs: &[TrajectoryPair],
    config: &ImplicitConfig,
) -> Result<ImplicitMetrics> {
    check_beta(config.beta)?;
    if pairs.is_empty() {
        return Ok(ImplicitMetrics {
            pairs: 0,
            mean_loss: 0.0,
            margin_before: 0.0,
            margin_after: 0.0,
            converged: true,
        });
    }
    let reference = ReferencePolicy::snapshot(policy);
    let margin = |p: &PolicyModel| -> Result<f64> {
        let mut total = 0.0;
        for pair in pairs {
            let w = score_trajectory(p, &reference, &pair.winner)?.log_ratio;
            let l = score_trajectory(p, &reference, &pair.loser)?.log_ratio;
            total += config.beta * (w - l);
        }
        Ok(total / pairs.len() as f64)
    };
    let margin_before = margin(policy)?;
    let mean_loss = run_epoch(
        policy,
        pairs.len(),
        config.batch_size,
        config.lr,
        config.seed,
        |p, idx| {
            let batch: Vec<TrajectoryPair> = idx.iter().map(|&i| pairs[i].clone()).collect();
            traj_dpo_loss(p, &reference, &batch, config.beta)
        },
    )?;
    Ok(ImplicitMetrics {
        pairs: pairs.len(),
        mean_loss,
        margin_before,
        margin_after: margin(policy)?,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{AgentAction, Env, EnvId, Observation};
    use crate::expert::{sample_expert_trajectories, Source, Step};
    use crate::inspection::{build_pair_dataset, practice, segment_all};
    use crate::numcore::{grad_check, softplus};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn setup(seed: u64) -> (Env, PolicyModel, Vec<PreferencePair>) {
        let env = Env::builtin(EnvId::Grid);
        let data = sample_expert_trajectories(&env, 6, seed).unwrap();
        let model = PolicyModel::new(&env, &[8], seed).unwrap();
        let samples = practice(&model, &segment_all(&data), 3, seed).unwrap();
        let pairs = build_pair_dataset(&samples);
        assert!(!pairs.is_empty());
        (env, model, pairs)
    }

    fn perturbed(env: &Env, model: &PolicyModel, seed: u64) -> PolicyModel {
        let mut params = model.params().clone();
        let noise = model.spec().init_params(seed + 100);
        params.add_assign(&noise);
        PolicyModel::with_params(env, model.spec().clone(), params).unwrap()
    }

    #[test]
    fn equal_policies_give_ln2() {
        let (_, model, pairs) = setup(1);
        let r = ReferencePolicy::snapshot(&model);
        let loss = dpo_loss(&model, &r, &pairs, 0.1).unwrap().loss;
        assert!((loss - LN2).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        let (_, model, pairs) = setup(1);
        let r = ReferencePolicy::snapshot(&model);
        assert!(dpo_loss(&model, &r, &pairs, 0.0).is_err());
        assert!(dpo_loss(&model, &r, &pairs, -1.0).is_err());
        assert!(dpo_loss(&model, &r, &[], 0.1).is_err());
    }

    #[test]
    fn loss_is_softplus_of_negative_margin_and_antisymmetric() {
        let (env, model, pairs) = setup(2);
        let r = ReferencePolicy::snapshot(&model);
        let p = perturbed(&env, &model, 2);
        for pair in pairs.iter().take(5) {
            let m = pair_margin(&p, &r, pair, 0.5).unwrap();
            let loss = dpo_loss(&p, &r, std::slice::from_ref(pair), 0.5)
                .unwrap()
                .loss;
            assert!((loss - softplus(-m)).abs() < 1e-12);
            let swapped = PreferencePair {
                prefix: pair.prefix.clone(),
                winner: pair.loser,
                loser: pair.winner,
            };
            let loss_sw = dpo_loss(&p, &r, &[swapped], 0.5).unwrap().loss;
            assert!((loss_sw - softplus(m)).abs() < 1e-12);
        }
        assert!((softplus(-2.0) - 0.1269280110429726).abs() < 1e-15);
    }

    #[test]
    fn implicit_reward_properties() {
        let (env, model, pairs) = setup(3);
        let r = ReferencePolicy::snapshot(&model);
        let pair = &pairs[0];
        assert_eq!(
            implicit_reward(&model, &r, &pair.prefix, pair.winner, 0.1).unwrap(),
            0.0
        );
        let p = perturbed(&env, &model, 3);
        let r1 = implicit_reward(&p, &r, &pair.prefix, pair.winner, 0.1).unwrap();
        let r2 = implicit_reward(&p, &r, &pair.prefix, pair.winner, 0.2).unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-12);
        // Bradley-Terry: sigma(r_w - r_l) is exactly the probability inside the loss.
        let rl = implicit_reward(&p, &r, &pair.prefix, pair.loser, 0.1).unwrap();
        let m = pair_margin(&p, &r, pair, 0.1).unwrap();
        assert!((sigmoid(r1 - rl) - sigmoid(m)).abs() < 1e-12);
    }

    #[test]
    fn gradient_passes_finite_difference_check() {
        let (env, model, pairs) = setup(4);
        let r = ReferencePolicy::snapshot(&model);
        let p = perturbed(&env, &model, 4);
        let spec = p.spec().clone();
        let err = grad_check(
            |params: &ParamVector| {
                let m = PolicyModel::with_params(&env, spec.clone(), params.clone())?;
                dpo_loss(&m, &r, &pairs, 0.7)
            },
            p.params(),
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn iteration_raises_margin_and_empty_set_converges() {
        let (_, mut model, pairs) = setup(5);
        let before = model.params().clone();
        let m =
            train_implicit_iteration(&mut model, &[], &ImplicitConfig::default(), None).unwrap();
        assert!(m.converged);
        assert_eq!(model.params(), &before);
        let cfg = ImplicitConfig {
            lr: 1e-2,
            ..ImplicitConfig::default()
        };
        let m = train_implicit_iteration(&mut model, &pairs, &cfg, None).unwrap();
        assert_eq!(m.margin_before, 0.0);
        assert!(m.margin_after > m.margin_before);
        assert!(!m.converged);
    }

    fn single_step(obs: usize, a: usize, id: u64, source: Source) -> Trajectory {
        Trajectory {
            episode_id: id,
            source,
            steps: vec![Step {
                obs_id: Observation(obs),
                action_id: AgentAction(a),
            }],
            final_reward: 1.0,
        }
    }

    #[test]
    fn trajectory_loss_collapses_to_step_loss_on_single_steps() {
        let env = Env::builtin(EnvId::Grid);
        let model = PolicyModel::new(&env, &[8], 0).unwrap();
        let r = ReferencePolicy::snapshot(&model);
        let p = perturbed(&env, &model, 0);
        let obs = [6, 13, 17];
        let tp: Vec<TrajectoryPair> = obs
            .iter()
            .map(|&o| TrajectoryPair {
                winner: single_step(o, 0, 0, Source::Expert),
                loser: single_step(o, 1, 0, Source::Agent),
            })
            .collect();
        let sp: Vec<PreferencePair> = obs
            .iter()
            .map(|&o| PreferencePair {
                prefix: HistoryState::initial(Observation(o)),
                winner: AgentAction(0),
                loser: AgentAction(1),
            })
            .collect();
        let a = traj_dpo_loss(&p, &r, &tp, 0.3).unwrap();
        let b = dpo_loss(&p, &r, &sp, 0.3).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        assert!(a.grad.max_abs_diff(&b.grad) < 1e-12);
        let same = TrajectoryPair {
            winner: tp[0].winner.clone(),
            loser: tp[0].winner.clone(),
        };
        assert!((traj_dpo_loss(&p, &r, &[same], 0.3).unwrap().loss - LN2).abs() < 1e-12);
    }

    #[test]
    fn trajectory_gradient_passes_check() {
        let env = Env::builtin(EnvId::ChainKey);
        let expert = sample_expert_trajectories(&env, 1, 0).unwrap();
        let mut agent = expert[0].clone();
        agent.source = Source::Agent;
        agent.steps[2].action_id = AgentAction(0);
        agent.steps.truncate(3);
        let pairs = trajectory_pairs(&expert, &[agent]);
        assert_eq!(pairs.len(), 1);
        let model = PolicyModel::new(&env, &[6], 0).unwrap();
        let r = ReferencePolicy::snapshot(&model);
        let p = perturbed(&env, &model, 7);
        let spec = p.spec().clone();
        let err = grad_check(
            |params: &ParamVector| {
                let m = PolicyModel::with_params(&env, spec.clone(), params.clone())?;
                traj_dpo_loss(&m, &r, &pairs, 0.5)
            },
            p.params(),
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn equal_policies_give_ln2_for_any_pairs(seed in 0u64..500, beta in 0.01f64..5.0) {
            let (env, model, pairs) = setup(seed % 7);
            let p = perturbed(&env, &model, seed);
            let r = ReferencePolicy::snapshot(&p);
            let loss = dpo_loss(&p, &r, &pairs, beta).unwrap().loss;
            prop_assert!((loss - LN2).abs() < 1e-9);
        }

        #[test]
        fn small_step_decreases_single_pair_loss(seed in 0u64..500) {
            let (env, model, pairs) = setup(seed % 5);
            let p = perturbed(&env, &model, seed);
            let r = ReferencePolicy::snapshot(&model);
            let pair = &pairs[(seed as usize) % pairs.len()];
            let g = dpo_loss(&p, &r, std::slice::from_ref(pair), 0.1).unwrap();
            let mut params = p.params().clone();
            let mut step = g.grad.clone();
            step.scale(-1e-3);
            params.add_assign(&step);
            let q = PolicyModel::with_params(&env, p.spec().clone(), params).unwrap();
            let after = dpo_loss(&q, &r, std::slice::from_ref(pair), 0.1).unwrap().loss;
            prop_assert!(after < g.loss);
        }

        #[test]
        fn per_state_shift_of_log_ratios_cancels(seed in 0u64..200, shift in -20.0f64..20.0) {
            // Adding a constant to every logit of the output layer shifts nothing in
            // log-probabilities; shifting both log-ratios equally leaves the margin.
            let (env, model, pairs) = setup(seed % 3);
            let p = perturbed(&env, &model, seed);
            let r = ReferencePolicy::snapshot(&model);
            let m = pair_margin(&p, &r, &pairs[0], 0.2).unwrap();
            let lp = p.action_log_probs(&pairs[0].prefix).unwrap();
            let lr = r.model().action_log_probs(&pairs[0].prefix).unwrap();
            let (w, l) = (pairs[0].winner.0, pairs[0].loser.0);
            let shifted = 0.2 * (((lp[w] + shift) - lr[w]) - ((lp[l] + shift) - lr[l]));
            prop_assert!((m - shifted).abs() < 1e-9);
        }
    }
}
