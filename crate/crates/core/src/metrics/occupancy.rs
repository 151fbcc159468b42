use std::collections::VecDeque;

use rand::Rng as _;
use rayon::prelude::*;

use crate::envs::{AgentAction, Env, EnvState, TabularMdp};
use crate::error::{Error, Result};
use crate::expert::ExpertPolicy;
use crate::policy::{HistoryState, PolicyModel};
use crate::rng::{derive_seed, rng_from, Rng};

/// Anything that can choose actions during an episode. Tabular policies read the
/// hidden state; history-conditioned models read the interaction prefix.
pub trait RolloutPolicy: Sync {
    /// Action probabilities over the full action vocabulary.
    fn distribution(&self, hidden: usize, history: &HistoryState) -> Result<Vec<f64>>;

    /// Most probable action; ties go to the lowest id.
    fn greedy(&self, hidden: usize, history: &HistoryState) -> Result<AgentAction> {
        let p = self.distribution(hidden, history)?;
        let mut best = None::<(usize, f64)>;
        for (a, &pa) in p.iter().enumerate() {
            if pa > 0.0 && best.is_none_or(|(_, b)| pa > b) {
                best = Some((a, pa));
            }
        }
        best.map(|(a, _)| AgentAction(a))
            .ok_or(Error::Empty("policy distribution"))
    }

    fn sample(&self, hidden: usize, history: &HistoryState, rng: &mut Rng) -> Result<AgentAction> {
        let p = self.distribution(hidden, history)?;
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut last = None;
        for (a, &pa) in p.iter().enumerate() {
            if pa > 0.0 {
                cum += pa;
                last = Some(a);
                if u < cum {
                    return Ok(AgentAction(a));
                }
            }
        }
        last.map(AgentAction)
            .ok_or(Error::Empty("policy distribution"))
    }
}

impl RolloutPolicy for PolicyModel {
    fn distribution(&self, _hidden: usize, history: &HistoryState) -> Result<Vec<f64>> {
        Ok(self
            .action_log_probs(history)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    fn greedy(&self, _hidden: usize, history: &HistoryState) -> Result<AgentAction> {
        self.greedy_action(history)
    }

    fn sample(&self, _hidden: usize, history: &HistoryState, rng: &mut Rng) -> Result<AgentAction> {
        self.sample_action(history, rng)
    }
}

/// A stochastic policy on hidden states: `probs[s][a]`. Terminal rows are all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn uniform(mdp: &TabularMdp) -> Self {
        let probs = (0..mdp.num_states)
            .map(|s| {
                let mut row = vec![0.0; mdp.num_actions];
                for &a in &mdp.legal[s] {
                    row[a] = 1.0 / mdp.legal[s].len() as f64;
                }
                row
            })
            .collect();
        TabularPolicy { probs }
    }

    pub fn from_expert(mdp: &TabularMdp, expert: &ExpertPolicy) -> Self {
        let probs = (0..mdp.num_states)
            .map(|s| {
                let mut row = vec![0.0; mdp.num_actions];
                if let Some(a) = expert.action(s) {
                    row[a.0] = 1.0;
                }
                row
            })
            .collect();
        TabularPolicy { probs }
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.probs.len() != mdp.num_states {
            return Err(Error::Dimension {
                context: "tabular policy states",
                expected: mdp.num_states,
                actual: self.probs.len(),
            });
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != mdp.num_actions || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "bad policy row for state {s}"
                )));
            }
            let off_support: f64 = row
                .iter()
                .enumerate()
                .filter(|(a, _)| !mdp.legal[s].contains(a))
                .map(|(_, p)| p)
                .sum();
            let total: f64 = row.iter().sum();
            let expect = if mdp.terminal[s] { 0.0 } else { 1.0 };
            if off_support > 0.0 || (total - expect).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "policy row for state {s} is not a distribution over legal actions"
                )));
            }
        }
        Ok(())
    }
}

impl RolloutPolicy for TabularPolicy {
    fn distribution(&self, hidden: usize, _history: &HistoryState) -> Result<Vec<f64>> {
        Ok(self.probs[hidden].clone())
    }
}

/// Projects a history-conditioned model onto hidden states by querying it at each
/// state's canonical history: the first shortest path found by breadth-first
/// search from the initial states (states, then actions, in index order).
/// States unreachable from the start distribution get the uniform policy.
pub fn project_policy(env: &Env, model: &PolicyModel) -> Result<TabularPolicy> {
    let mdp = env.underlying_mdp();
    let mut canonical: Vec<Option<HistoryState>> = vec![None; mdp.num_states];
    let mut queue = VecDeque::new();
    for s in (0..mdp.num_states).filter(|&s| mdp.initial[s] > 0.0) {
        canonical[s] = Some(HistoryState::initial(env.initial_observation(s)));
        queue.push_back(s);
    }
    while let Some(s) = queue.pop_front() {
        if mdp.terminal[s] {
            continue;
        }
        let state = EnvState {
            hidden: s,
            step_count: 0,
            done: false,
        };
        for &a in &mdp.legal[s] {
            let (next, res) = env.step(&state, AgentAction(a))?;
            if canonical[next.hidden].is_none() {
                let mut h = canonical[s].clone().expect("queued states have histories");
                h.push(AgentAction(a), res.observation);
                canonical[next.hidden] = Some(h);
                queue.push_back(next.hidden);
            }
        }
    }
    let uniform = TabularPolicy::uniform(&mdp);
    let probs = (0..mdp.num_states)
        .map(|s| match &canonical[s] {
            Some(h) if !mdp.terminal[s] => model.distribution(s, h),
            _ => Ok(uniform.probs[s].clone()),
        })
        .collect::<Result<_>>()?;
    Ok(TabularPolicy { probs })
}

/// Normalized discounted state-action visitation, dense over `s * num_actions + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyTable {
    pub weights: Vec<f64>,
    pub num_actions: usize,
    pub gamma: f64,
    /// Total unnormalized discounted mass before normalization.
    pub normalization: f64,
}

impl OccupancyTable {
    fn from_unnormalized(raw: Vec<f64>, num_actions: usize, gamma: f64) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty("occupancy support"));
        }
        Ok(OccupancyTable {
            weights: raw.into_iter().map(|w| w / total).collect(),
            num_actions,
            gamma,
            normalization: total,
        })
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.weights[s * self.num_actions + a]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Marginal over states.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.weights
            .chunks(self.num_actions)
            .map(|c| c.iter().sum())
            .collect()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "gamma must be in (0, 1], got {gamma}"
        )))
    }
}

/// Unnormalized discounted visitation `sum_t gamma^t P(s_t = s)` of non-terminal
/// states. With a horizon the sum stops after `horizon` decisions; without one the
/// linear system `(I - gamma P_pi^T) d = mu_0` is solved directly.
pub fn discounted_visitation(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    policy.validate(mdp)?;
    let n = mdp.num_states;
    let step = |d: &[f64]| {
        let mut next = vec![0.0; n];
        for s in (0..n).filter(|&s| d[s] > 0.0 && !mdp.terminal[s]) {
            for &a in &mdp.legal[s] {
                let w = d[s] * policy.probs[s][a];
                for t in &mdp.transitions[s][a] {
                    if !mdp.terminal[t.next] {
                        next[t.next] += w * t.prob;
                    }
                }
            }
        }
        next
    };
    let mu: Vec<f64> = (0..n)
        .map(|s| if mdp.terminal[s] { 0.0 } else { mdp.initial[s] })
        .collect();
    match mdp.horizon {
        Some(h) => {
            let mut visit = vec![0.0; n];
            let mut d = mu;
            let mut disc = 1.0;
            for _ in 0..h {
                visit.iter_mut().zip(&d).for_each(|(v, x)| *v += disc * x);
                d = step(&d);
                disc *= gamma;
            }
            Ok(visit)
        }
        None => solve_visitation(mdp, policy, gamma, &mu),
    }
}

fn solve_visitation(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
    mu: &[f64],
) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..mdp.num_states).filter(|&s| !mdp.terminal[s]).collect();
    let mut pos = vec![usize::MAX; mdp.num_states];
    for (i, &s) in idx.iter().enumerate() {
        pos[s] = i;
    }
    let m = idx.len();
    // Row i: d_i - gamma * sum_j P(j -> i) d_j = mu_i.
    let mut a = vec![vec![0.0; m + 1]; m];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        row[m] = mu[idx[i]];
    }
    for (j, &s) in idx.iter().enumerate() {
        for &act in &mdp.legal[s] {
            for t in &mdp.transitions[s][act] {
                if !mdp.terminal[t.next] {
                    a[pos[t.next]][j] -= gamma * policy.probs[s][act] * t.prob;
                }
            }
        }
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::Singular);
        }
        a.swap(col, piv);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && row[col] != 0.0 {
                let f = row[col] / pivot_row[col];
                row.iter_mut()
                    .zip(&pivot_row)
                    .for_each(|(x, p)| *x -= f * p);
            }
        }
    }
    let mut d = vec![0.0; mdp.num_states];
    for (i, &s) in idx.iter().enumerate() {
        d[s] = (a[i][m] / a[i][i]).max(0.0);
    }
    Ok(d)
}

/// Exact normalized occupancy `rho(s, a) ∝ sum_t gamma^t P(s_t = s) pi(a | s)`
/// over non-terminal states.
pub fn occupancy_analytic(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<OccupancyTable> {
    let visit = discounted_visitation(mdp, policy, gamma)?;
    let na = mdp.num_actions;
    let mut raw = vec![0.0; mdp.num_states * na];
    for s in 0..mdp.num_states {
        for a in 0..na {
            raw[s * na + a] = visit[s] * policy.probs[s][a];
        }
    }
    OccupancyTable::from_unnormalized(raw, na, gamma)
}

/// Monte-Carlo occupancy from `episodes` rollouts. Episode `i` resets with seed
/// `derive_seed(seed, [i])` and samples actions from its own stream.
pub fn occupancy_mc<P: RolloutPolicy + ?Sized>(
    env: &Env,
    policy: &P,
    gamma: f64,
    episodes: usize,
    seed: u64,
) -> Result<OccupancyTable> {
    check_gamma(gamma)?;
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    let na = env.num_actions();
    let size = env.num_states() * na;
    let parts = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(seed, &[i, 0x0CC]);
            let (mut state, obs) = env.reset(derive_seed(seed, &[i]));
            let mut h = HistoryState::initial(obs);
            let mut visits = Vec::new();
            let mut disc = 1.0;
            while !state.done {
                let a = policy.sample(state.hidden, &h, &mut rng)?;
                visits.push((state.hidden * na + a.0, disc));
                let (next, res) = env.step(&state, a)?;
                h.push(a, res.observation);
                state = next;
                disc *= gamma;
            }
            Ok(visits)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut raw = vec![0.0; size];
    for visits in parts {
        for (k, w) in visits {
            raw[k] += w;
        }
    }
    OccupancyTable::from_unnormalized(raw, na, gamma)
}

/// Per-entry comparison of a sampled occupancy against the exact one using
/// binomial standard errors `sqrt(rho (1 - rho) / n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinomialCheck {
    pub entries: usize,
    pub violations: usize,
    /// Largest |estimate - exact| / sigma over entries with positive sigma.
    pub max_z: f64,
    /// Entries where the exact value is 0 but the estimate is not (or vice versa
    /// with zero variance).
    pub support_mismatches: usize,
}

pub fn binomial_check(
    exact: &OccupancyTable,
    estimate: &OccupancyTable,
    n: usize,
    k_sigma: f64,
) -> BinomialCheck {
    let mut out = BinomialCheck {
        entries: 0,
        violations: 0,
        max_z: 0.0,
        support_mismatches: 0,
    };
    for (&p, &q) in exact.weights.iter().zip(&estimate.weights) {
        if p == 0.0 && q == 0.0 {
            continue;
        }
        out.entries += 1;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        if sigma == 0.0 {
            if (p - q).abs() > 1e-12 {
                out.support_mismatches += 1;
                out.violations += 1;
            }
            continue;
        }
        let z = (q - p).abs() / sigma;
        out.max_z = out.max_z.max(z);
        if z > k_sigma {
            out.violations += 1;
        }
    }
    out
}
