use rand::Rng as _;

use crate::envs::{AgentAction, Env, EnvId, Observation};
use crate::error::{Error, Result};
use crate::numcore::{
    backward_tape, forward_tape, masked_log_softmax, Checkpoint, NetSpec, ParamVector, Tape,
};
use crate::rng::Rng;

use super::history::{HistoryEncoder, HistoryState, ENCODER_VERSION};

pub const DEFAULT_POLICY_HIDDEN: [usize; 1] = [64];

/// Shannon entropy of a distribution given as log-probabilities (`-inf` entries
/// contribute nothing).
pub fn entropy(log_probs: &[f64]) -> f64 {
    log_probs
        .iter()
        .filter(|lp| lp.is_finite())
        .map(|&lp| -lp.exp() * lp)
        .sum()
}

/// A forward pass through the policy at one history, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ScoredState {
    pub input: Vec<f64>,
    pub legal: Vec<usize>,
    /// Over the full action vocabulary; `-inf` for illegal actions.
    pub log_probs: Vec<f64>,
    tape: Tape,
}

impl ScoredState {
    pub fn prob(&self, a: usize) -> f64 {
        self.log_probs[a].exp()
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.log_probs)
    }

    /// Raw scores over the full action vocabulary, before masking.
    pub fn logits(&self) -> &[f64] {
        self.tape.output()
    }

    /// Gradient of `log pi(a)` with respect to the logits.
    pub fn dlogp_dlogits(&self, a: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.log_probs.len()];
        for &j in &self.legal {
            d[j] = -self.prob(j);
        }
        d[a] += 1.0;
        d
    }

    /// Gradient of the entropy with respect to the logits:
    /// `dH/dz_j = -p_j (log p_j + H)` on legal entries.
    pub fn dentropy_dlogits(&self) -> Vec<f64> {
        let h = self.entropy();
        let mut d = vec![0.0; self.log_probs.len()];
        for &j in &self.legal {
            d[j] = -self.prob(j) * (self.log_probs[j] + h);
        }
        d
    }

    pub fn sample(&self, rng: &mut Rng) -> AgentAction {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        for &a in &self.legal {
            cum += self.prob(a);
            if u < cum {
                return AgentAction(a);
            }
        }
        AgentAction(*self.legal.last().expect("scored states have legal actions"))
    }

    /// Most likely legal action; ties go to the lowest id.
    pub fn greedy(&self) -> AgentAction {
        let mut best = self.legal[0];
        for &a in &self.legal[1..] {
            if self.log_probs[a] > self.log_probs[best] {
                best = a;
            }
        }
        AgentAction(best)
    }
}

/// Softmax policy `pi(a | history)` restricted to the actions legal under the
/// latest observation.
#[derive(Clone, Debug)]
pub struct PolicyModel {
    env: EnvId,
    encoder: HistoryEncoder,
    spec: NetSpec,
    params: ParamVector,
    legal_by_obs: Vec<Vec<usize>>,
}

impl PolicyModel {
    pub fn new(env: &Env, hidden: &[usize], seed: u64) -> Result<Self> {
        let encoder = HistoryEncoder::for_env(env);
        let spec = NetSpec::new(encoder.dim(), hidden.to_vec(), env.num_actions())?;
        let params = spec.init_params(seed);
        Self::with_params(env, spec, params)
    }

    /// A model with all weights zero, i.e. uniform over legal actions everywhere.
    pub fn uniform(env: &Env, hidden: &[usize]) -> Result<Self> {
        let encoder = HistoryEncoder::for_env(env);
        let spec = NetSpec::new(encoder.dim(), hidden.to_vec(), env.num_actions())?;
        let params = spec.zero_params();
        Self::with_params(env, spec, params)
    }

    pub fn with_params(env: &Env, spec: NetSpec, params: ParamVector) -> Result<Self> {
        let encoder = HistoryEncoder::for_env(env);
        if spec.input_dim != encoder.dim() {
            return Err(Error::Dimension {
                context: "policy input",
                expected: encoder.dim(),
                actual: spec.input_dim,
            });
        }
        if spec.output_dim != env.num_actions() {
            return Err(Error::Dimension {
                context: "policy output",
                expected: env.num_actions(),
                actual: spec.output_dim,
            });
        }
        if params.layout() != spec.layout().as_slice() {
            return Err(Error::InvalidArgument(
                "parameter layout does not match the policy network".into(),
            ));
        }
        let legal_by_obs = (0..env.num_observations())
            .map(|o| {
                env.legal_for_observation(Observation(o))
                    .into_iter()
                    .map(|a| a.0)
                    .collect()
            })
            .collect();
        Ok(PolicyModel {
            env: env.id(),
            encoder,
            spec,
            params,
            legal_by_obs,
        })
    }

    pub fn env_id(&self) -> EnvId {
        self.env
    }

    pub fn encoder(&self) -> &HistoryEncoder {
        &self.encoder
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

    pub fn num_actions(&self) -> usize {
        self.spec.output_dim
    }

    pub fn legal(&self, obs: Observation) -> &[usize] {
        &self.legal_by_obs[obs.0]
    }

    pub fn score(&self, h: &HistoryState) -> Result<ScoredState> {
        self.score_with(&self.params, h)
    }

    /// Scores `h` under alternative parameters of the same layout.
    pub fn score_with(&self, params: &ParamVector, h: &HistoryState) -> Result<ScoredState> {
        let input = self.encoder.encode(h)?;
        let legal = self.legal_by_obs[h.latest().0].clone();
        let tape = forward_tape(&self.spec, params, &input)?;
        let log_probs = masked_log_softmax(tape.output(), &legal)?;
        Ok(ScoredState {
            input,
            legal,
            log_probs,
            tape,
        })
    }

    /// Log-probabilities over the full action vocabulary (`-inf` for illegal actions).
    pub fn action_log_probs(&self, h: &HistoryState) -> Result<Vec<f64>> {
        Ok(self.score(h)?.log_probs)
    }

    pub fn log_prob(&self, h: &HistoryState, a: AgentAction) -> Result<f64> {
        let lp = self.action_log_probs(h)?;
        match lp.get(a.0) {
            Some(v) if v.is_finite() => Ok(*v),
            _ => Err(Error::IllegalAction { action: a.0 }),
        }
    }

    pub fn sample_action(&self, h: &HistoryState, rng: &mut Rng) -> Result<AgentAction> {
        Ok(self.score(h)?.sample(rng))
    }

    pub fn greedy_action(&self, h: &HistoryState) -> Result<AgentAction> {
        Ok(self.score(h)?.greedy())
    }

    /// Accumulates `d(dlogits · logits)/d params` into `grad`.
    pub fn backprop(&self, scored: &ScoredState, dlogits: &[f64], grad: &mut [f64]) -> Result<()> {
        backward_tape(&self.spec, &self.params, &scored.tape, dlogits, grad)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.spec, &self.params)
            .with_tag("kind", "policy")
            .with_tag("encoder", ENCODER_VERSION)
            .with_tag("env", self.env.as_str())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, env: &Env) -> Result<Self> {
        let encoder = ckpt.tag("encoder").unwrap_or("<missing>");
        if encoder != ENCODER_VERSION {
            return Err(Error::Checkpoint {
                field: "tags.encoder".into(),
                message: format!("encoder version `{encoder}` does not match `{ENCODER_VERSION}`"),
            });
        }
        if let Some(tag) = ckpt.tag("env") {
            if tag != env.id().as_str() {
                return Err(Error::Checkpoint {
                    field: "tags.env".into(),
                    message: format!("checkpoint was trained on `{tag}`, not `{}`", env.id()),
                });
            }
        }
        let (spec, params) = ckpt.params()?;
        Self::with_params(env, spec, params).map_err(|e| Error::Checkpoint {
            field: "net".into(),
            message: e.to_string(),
        })
    }
}
