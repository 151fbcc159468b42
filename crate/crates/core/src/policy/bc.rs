use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expert::Trajectory;
use crate::numcore::{Adam, GradResult, ParamVector};
use crate::rng::rng_from;

use super::history::HistoryState;
use super::model::PolicyModel;

#[derive(Clone, Debug, PartialEq)]
pub struct BcConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Trajectories per minibatch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            epochs: 4,
            lr: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcReport {
    /// Full-dataset loss before training followed by the loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn trajectory_loss(model: &PolicyModel, traj: &Trajectory, scale: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.params().len()];
    let mut loss = 0.0;
    for (h, step) in HistoryState::prefixes(traj).iter().zip(&traj.steps) {
        let s = model.score(h)?;
        let a = step.action_id.0;
        if !s.legal.contains(&a) {
            return Err(Error::IllegalAction { action: a });
        }
        loss -= s.log_probs[a];
        let mut d = s.dlogp_dlogits(a);
        d.iter_mut().for_each(|x| *x *= -scale);
        model.backprop(&s, &d, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Mean over trajectories of the summed negative log-likelihood of the expert's
/// actions. Observations only condition the policy; they are never scored.
pub fn bc_loss(model: &PolicyModel, batch: &[Trajectory]) -> Result<GradResult> {
    if batch.is_empty() {
        return Err(Error::Empty("behavioral cloning batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|t| trajectory_loss(model, t, scale))
        .collect::<Result<_>>()?;
    let mut grad = ParamVector::zeros_like(model.params());
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

/// Minibatch Adam on [`bc_loss`]; trajectories are reshuffled every epoch from
/// `config.seed`.
pub fn train_bc(
    model: &mut PolicyModel,
    dataset: &[Trajectory],
    config: &BcConfig,
) -> Result<BcReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("behavioral cloning dataset"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut adam = Adam::new(model.params().len());
    let mut epoch_losses = vec![bc_loss(model, dataset)?.loss];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_from(config.seed, &[0xBC, epoch as u64]));
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Trajectory> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let g = bc_loss(model, &batch)?;
            adam.step(model.params_mut(), &g.grad, config.lr)?;
        }
        epoch_losses.push(bc_loss(model, dataset)?.loss);
    }
    Ok(BcReport { epoch_losses })
}
