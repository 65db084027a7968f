//! Hybrid actor-critic with multiplicative softmax policy updates.
//!
//! Each round evaluates the current policy with hybrid fitted policy
//! evaluation, then reweights: `pi'(a|s) proportional to pi(a|s) exp(eta f(s,a))`.
//! The returned policy is the uniform mixture of all iterates.

use ndarray::{Array1, Array2};

use crate::env::{DiscretePolicy, Policy, SampleBudget, TabularEnv};
use crate::error::Result;
use crate::func::{FunctionClass, StateActionValue};
use crate::hpe::{hpe, HpeConfig, HpeLoss, OfflineSource};
use crate::rng::Prng;

/// Tabular softmax policy: `pi(a|s) = exp(L(s,a)) / sum_a' exp(L(s,a'))`.
/// Logits are max-shifted per state before exponentiation.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    logits: Array2<f64>,
}

impl SoftmaxPolicy {
    pub fn new(logits: Array2<f64>) -> Self {
        Self { logits }
    }

    /// The uniform policy (all-zero logits), the standard initialization.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { logits: Array2::zeros((n_states, n_actions)) }
    }

    pub fn n_states(&self) -> usize {
        self.logits.nrows()
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    fn probs_row(&self, state: usize) -> Array1<f64> {
        let row = self.logits.row(state);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut exp: Array1<f64> = row.mapv(|l| (l - max).exp());
        let z = exp.sum();
        exp.mapv_inplace(|e| e / z);
        exp
    }

    /// Multiplicative update `L' = L + eta * f`; the receiver is unchanged.
    pub fn updated(&self, f: &dyn StateActionValue<usize, usize>, eta: f64) -> Self {
        let mut logits = self.logits.clone();
        for ((s, a), l) in logits.indexed_iter_mut() {
            *l += eta * f.value(&s, &a);
        }
        Self { logits }
    }
}

/// Functional form of [`SoftmaxPolicy::updated`].
pub fn softmax_update(
    policy: &SoftmaxPolicy,
    f: &dyn StateActionValue<usize, usize>,
    eta: f64,
) -> SoftmaxPolicy {
    policy.updated(f, eta)
}

impl Policy<usize, usize> for SoftmaxPolicy {
    fn sample_action(&self, state: &usize, rng: &mut Prng) -> usize {
        let probs = self.probs_row(*state);
        crate::env::sample_categorical(probs.as_slice().unwrap(), rng)
    }

    fn expected_value(&self, state: &usize, f: &dyn Fn(&usize) -> f64, _rng: &mut Prng) -> f64 {
        self.probs_row(*state)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| p * f(&a))
            .sum()
    }

    fn td_value(&self, state: &usize, f: &dyn Fn(&usize) -> f64, rng: &mut Prng) -> f64 {
        self.expected_value(state, f, rng)
    }
}

impl DiscretePolicy for SoftmaxPolicy {
    fn n_actions(&self) -> usize {
        self.logits.ncols()
    }

    fn action_probs(&self, state: usize) -> Array1<f64> {
        self.probs_row(state)
    }
}

/// Uniform mixture over policy iterates; a component is drawn once per
/// episode, so the mixture's value is the mean of the component values.
pub struct PolicyMixture<P> {
    components: Vec<P>,
}

impl<P> PolicyMixture<P> {
    pub fn new(components: Vec<P>) -> Self {
        assert!(!components.is_empty());
        Self { components }
    }

    pub fn components(&self) -> &[P] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn choose(&self, rng: &mut Prng) -> &P {
        use rand::Rng;
        &self.components[rng.random_range(0..self.components.len())]
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HacConfig {
    /// Number of policy-gradient rounds.
    pub t_rounds: usize,
    /// Softmax step size; `None` uses `(1 - gamma) sqrt(ln(A) / T)`.
    pub eta: Option<f64>,
    pub hpe: HpeConfig,
}

impl HacConfig {
    pub fn effective_eta(&self, gamma: f64, n_actions: usize) -> f64 {
        self.eta.unwrap_or_else(|| {
            (1.0 - gamma) * ((n_actions as f64).ln() / self.t_rounds as f64).sqrt()
        })
    }
}

/// Provides the per-round critic `f_t ~ Q_{pi_t}`.
pub trait HacCritic {
    fn evaluate(
        &mut self,
        policy: &SoftmaxPolicy,
        rng: &mut Prng,
    ) -> Result<(Box<dyn StateActionValue<usize, usize>>, Vec<HpeLoss>)>;
}

/// The hybrid critic: runs [`hpe`] against the environment per round.
pub struct HpeCritic<'a> {
    pub env: &'a TabularEnv,
    pub gamma: f64,
    pub class: &'a FunctionClass<usize, usize>,
    pub offline: Option<&'a dyn OfflineSource<usize, usize>>,
    pub cfg: HpeConfig,
    pub budget: Option<&'a SampleBudget>,
}

impl HacCritic for HpeCritic<'_> {
    fn evaluate(
        &mut self,
        policy: &SoftmaxPolicy,
        rng: &mut Prng,
    ) -> Result<(Box<dyn StateActionValue<usize, usize>>, Vec<HpeLoss>)> {
        let result = hpe(
            self.env,
            self.gamma,
            policy,
            self.class,
            self.offline,
            &self.cfg,
            self.budget,
            rng,
        )?;
        Ok((Box::new(result.fbar), result.loss_trace))
    }
}

/// An exact critic computed from the tabular oracle, for reference runs.
pub struct OracleCritic<'a> {
    pub mdp: &'a crate::mdp::TabularMdp,
}

impl HacCritic for OracleCritic<'_> {
    fn evaluate(
        &mut self,
        policy: &SoftmaxPolicy,
        _rng: &mut Prng,
    ) -> Result<(Box<dyn StateActionValue<usize, usize>>, Vec<HpeLoss>)> {
        let q = crate::oracle::tabular_q_exact(self.mdp, policy);
        Ok((Box::new(move |s: &usize, a: &usize| q[[*s, *a]]), Vec::new()))
    }
}

pub struct HacRound {
    pub round: usize,
    pub hpe_losses: Vec<HpeLoss>,
}

pub struct HacRun {
    /// All `T + 1` policy iterates, `pi_1 .. pi_{T+1}`.
    pub iterates: Vec<SoftmaxPolicy>,
    /// Uniform mixture of the iterates.
    pub mixture: PolicyMixture<SoftmaxPolicy>,
    pub rounds: Vec<HacRound>,
}

/// Runs `T` rounds of critic evaluation + softmax update from the uniform
/// policy, returning all iterates and their uniform mixture.
pub fn run_hac<C: HacCritic>(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    critic: &mut C,
    cfg: &HacConfig,
    rng: &mut Prng,
) -> Result<HacRun> {
    let eta = cfg.effective_eta(gamma, n_actions);
    let mut iterates = vec![SoftmaxPolicy::uniform(n_states, n_actions)];
    let mut rounds = Vec::with_capacity(cfg.t_rounds);
    for t in 1..=cfg.t_rounds {
        let current = iterates.last().unwrap();
        let (f, hpe_losses) = critic.evaluate(current, rng)?;
        iterates.push(current.updated(f.as_ref(), eta));
        rounds.push(HacRound { round: t, hpe_losses });
    }
    let mixture = PolicyMixture::new(iterates.clone());
    Ok(HacRun { iterates, mixture, rounds })
}
