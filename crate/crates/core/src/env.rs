//! Environment and policy interfaces.
//!
//! [`Environment`] is the black-box sampling substrate: `reset_pair` draws a
//! `(state, action)` pair from the joint reset distribution `mu0` and `step`
//! executes one transition. `step` is a pure function of
//! `(state, action, rng stream)`: replaying a seed replays the trajectory.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::mdp::TabularMdp;
use crate::rng::Prng;

pub trait Environment {
    type State: Clone;
    type Action: Clone;

    /// Draws `(state, action)` from the joint reset distribution `mu0`.
    fn reset_pair(&self, rng: &mut Prng) -> (Self::State, Self::Action);

    /// Draws the state marginal of `mu0` (for finite-horizon rollouts, where
    /// the first action comes from the policy rather than the reset).
    fn reset_state(&self, rng: &mut Prng) -> Self::State;

    /// Executes `action` in `state`, returning `(reward, next state)`.
    fn step(&self, state: &Self::State, action: &Self::Action, rng: &mut Prng) -> (f64, Self::State);
}

impl<E: Environment> Environment for &E {
    type State = E::State;
    type Action = E::Action;

    fn reset_pair(&self, rng: &mut Prng) -> (Self::State, Self::Action) {
        (*self).reset_pair(rng)
    }

    fn reset_state(&self, rng: &mut Prng) -> Self::State {
        (*self).reset_state(rng)
    }

    fn step(&self, state: &Self::State, action: &Self::Action, rng: &mut Prng) -> (f64, Self::State) {
        (*self).step(state, action, rng)
    }
}

/// A (possibly stochastic) decision rule.
pub trait Policy<S, A> {
    fn sample_action(&self, state: &S, rng: &mut Prng) -> A;

    /// `E_{a ~ pi(state)}[f(a)]`. The default is a single-sample estimate;
    /// finite-action policies override it with the exact enumeration and the
    /// Gaussian policy with a 32-sample Monte-Carlo average.
    fn expected_value(&self, state: &S, f: &dyn Fn(&A) -> f64, rng: &mut Prng) -> f64 {
        f(&self.sample_action(state, rng))
    }

    /// Next-state value used in TD regression targets: the exact expectation
    /// for finite action sets, otherwise a single sampled action.
    fn td_value(&self, state: &S, f: &dyn Fn(&A) -> f64, rng: &mut Prng) -> f64 {
        f(&self.sample_action(state, rng))
    }
}

impl<S, A, P: Policy<S, A>> Policy<S, A> for &P {
    fn sample_action(&self, state: &S, rng: &mut Prng) -> A {
        (*self).sample_action(state, rng)
    }

    fn expected_value(&self, state: &S, f: &dyn Fn(&A) -> f64, rng: &mut Prng) -> f64 {
        (*self).expected_value(state, f, rng)
    }

    fn td_value(&self, state: &S, f: &dyn Fn(&A) -> f64, rng: &mut Prng) -> f64 {
        (*self).td_value(state, f, rng)
    }
}

/// Policies over a finite action set with enumerable per-state probabilities.
/// The exact probabilities drive the tabular oracle computations.
pub trait DiscretePolicy: Policy<usize, usize> {
    fn n_actions(&self) -> usize;

    /// `pi(. | state)`; must sum to 1.
    fn action_probs(&self, state: usize) -> Array1<f64>;
}

/// Samples an index from a (normalized) probability slice.
pub fn sample_categorical(probs: &[f64], rng: &mut Prng) -> usize {
    use rand::Rng;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// An explicit stochastic tabular policy: `probs[s][a] = pi(a | s)`.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    probs: Array2<f64>,
}

impl TabularPolicy {
    pub fn new(probs: Array2<f64>) -> Self {
        for row in probs.rows() {
            debug_assert!((row.sum() - 1.0).abs() < 1e-9, "policy rows must sum to 1");
        }
        Self { probs }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64) }
    }

    /// Deterministic policy taking `actions[s]` at state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            probs[[s, a]] = 1.0;
        }
        Self { probs }
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }
}

impl Policy<usize, usize> for TabularPolicy {
    fn sample_action(&self, state: &usize, rng: &mut Prng) -> usize {
        sample_categorical(self.probs.row(*state).as_slice().unwrap(), rng)
    }

    fn expected_value(&self, state: &usize, f: &dyn Fn(&usize) -> f64, _rng: &mut Prng) -> f64 {
        self.probs
            .row(*state)
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

impl DiscretePolicy for TabularPolicy {
    fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    fn action_probs(&self, state: usize) -> Array1<f64> {
        self.probs.row(state).to_owned()
    }
}

/// Black-box view of a [`TabularMdp`]: categorical reset and transitions.
#[derive(Clone)]
pub struct TabularEnv {
    mdp: Arc<TabularMdp>,
}

impl TabularEnv {
    pub fn new(mdp: Arc<TabularMdp>) -> Self {
        Self { mdp }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Environment for TabularEnv {
    type State = usize;
    type Action = usize;

    fn reset_pair(&self, rng: &mut Prng) -> (usize, usize) {
        let idx = sample_categorical(self.mdp.init_dist().as_slice().unwrap(), rng);
        self.mdp.pair_of(idx)
    }

    fn reset_state(&self, rng: &mut Prng) -> usize {
        self.reset_pair(rng).0
    }

    fn step(&self, state: &usize, action: &usize, rng: &mut Prng) -> (f64, usize) {
        let reward = self.mdp.reward()[[*state, *action]];
        let row = self.mdp.transition().slice(ndarray::s![*state, *action, ..]);
        let next = sample_categorical(row.as_slice().unwrap(), rng);
        (reward, next)
    }
}

/// Counts every `step` call through a shared counter. The harness wraps all
/// environments in one of these so that each environment step increments the
/// cumulative online-sample counter exactly once.
#[derive(Clone)]
pub struct CountingEnv<E> {
    inner: E,
    steps: Arc<AtomicU64>,
}

impl<E> CountingEnv<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, steps: Arc::new(AtomicU64::new(0)) }
    }

    pub fn counter(&self) -> Arc<AtomicU64> {
        Arc::clone(&self.steps)
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for CountingEnv<E> {
    type State = E::State;
    type Action = E::Action;

    fn reset_pair(&self, rng: &mut Prng) -> (Self::State, Self::Action) {
        self.inner.reset_pair(rng)
    }

    fn reset_state(&self, rng: &mut Prng) -> Self::State {
        self.inner.reset_state(rng)
    }

    fn step(&self, state: &Self::State, action: &Self::Action, rng: &mut Prng) -> (f64, Self::State) {
        self.steps.fetch_add(1, Ordering::Relaxed);
        self.inner.step(state, action, rng)
    }
}

/// A cap on cumulative environment steps, shared with a [`CountingEnv`]
/// counter. Data-collection loops check it between episodes and abort with
/// `Error::SampleBudgetExceeded` once the cap is hit.
#[derive(Clone)]
pub struct SampleBudget {
    counter: Arc<AtomicU64>,
    cap: u64,
}

impl SampleBudget {
    pub fn new(counter: Arc<AtomicU64>, cap: u64) -> Self {
        Self { counter, cap }
    }

    pub fn used(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn exceeded(&self) -> bool {
        self.used() >= self.cap
    }
}

/// A per-step decision rule for finite-horizon rollouts.
pub trait StepPolicy<S, A> {
    fn action_at(&self, step: usize, state: &S, rng: &mut Prng) -> A;
}

/// A stationary policy used at every step.
pub struct Stationary<P>(pub P);

impl<S, A, P: Policy<S, A>> StepPolicy<S, A> for Stationary<P> {
    fn action_at(&self, _step: usize, state: &S, rng: &mut Prng) -> A {
        self.0.sample_action(state, rng)
    }
}

impl<S, A, P: Policy<S, A>> StepPolicy<S, A> for [P] {
    fn action_at(&self, step: usize, state: &S, rng: &mut Prng) -> A {
        self[step].sample_action(state, rng)
    }
}

impl<S, A, P: Policy<S, A>> StepPolicy<S, A> for Vec<P> {
    fn action_at(&self, step: usize, state: &S, rng: &mut Prng) -> A {
        self[step].sample_action(state, rng)
    }
}

/// One finite-horizon episode: `states` has length `H + 1` (terminal state
/// included), `actions` and `rewards` have length `H`.
#[derive(Debug, Clone)]
pub struct FhTrajectory<S, A> {
    pub states: Vec<S>,
    pub actions: Vec<A>,
    pub rewards: Vec<f64>,
}

impl<S, A> FhTrajectory<S, A> {
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Undiscounted reward-to-go from step `h`.
    pub fn return_from(&self, h: usize) -> f64 {
        self.rewards[h..].iter().sum()
    }
}

/// Fixes a base environment to episodes of exactly `horizon` steps.
#[derive(Clone)]
pub struct FiniteHorizonAdapter<E> {
    env: E,
    horizon: usize,
}

impl<E: Environment> FiniteHorizonAdapter<E> {
    pub fn new(env: E, horizon: usize) -> Self {
        assert!(horizon >= 1, "horizon must be at least 1");
        Self { env, horizon }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    /// Rolls one episode of exactly `horizon` steps under `policies`.
    pub fn rollout<P>(&self, policies: &P, rng: &mut Prng) -> FhTrajectory<E::State, E::Action>
    where
        P: StepPolicy<E::State, E::Action> + ?Sized,
    {
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut actions = Vec::with_capacity(self.horizon);
        let mut rewards = Vec::with_capacity(self.horizon);
        let mut state = self.env.reset_state(rng);
        for h in 0..self.horizon {
            let action = policies.action_at(h, &state, rng);
            let (reward, next) = self.env.step(&state, &action, rng);
            states.push(state);
            actions.push(action);
            rewards.push(reward);
            state = next;
        }
        states.push(state);
        FhTrajectory { states, actions, rewards }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::child_rng;
    use ndarray::{arr1, arr2, arr3};

    fn two_state() -> TabularEnv {
        let p = arr3(&[[[0.0, 1.0]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        let mdp = TabularMdp::new(p, r, arr1(&[1.0, 0.0]), 0.5).unwrap();
        TabularEnv::new(Arc::new(mdp))
    }

    #[test]
    fn step_is_reproducible_under_seed_replay() {
        let env = two_state();
        let run = |seed| {
            let mut rng = child_rng(seed, 0);
            let (mut s, a) = env.reset_pair(&mut rng);
            let mut trace = vec![s];
            let mut action = a;
            for _ in 0..16 {
                let (_, next) = env.step(&s, &action, &mut rng);
                s = next;
                action = 0;
                trace.push(s);
            }
            trace
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn counting_env_counts_each_step_once() {
        let env = CountingEnv::new(two_state());
        let mut rng = child_rng(0, 0);
        let (s, a) = env.reset_pair(&mut rng);
        assert_eq!(env.steps_taken(), 0);
        let _ = env.step(&s, &a, &mut rng);
        let _ = env.step(&s, &a, &mut rng);
        assert_eq!(env.steps_taken(), 2);
    }

    #[test]
    fn finite_horizon_rollout_is_exactly_h_steps() {
        let env = two_state();
        let fh = FiniteHorizonAdapter::new(env, 4);
        let policy = TabularPolicy::uniform(2, 1);
        let mut rng = child_rng(1, 0);
        let traj = fh.rollout(&Stationary(policy), &mut rng);
        assert_eq!(traj.actions.len(), 4);
        assert_eq!(traj.rewards.len(), 4);
        assert_eq!(traj.states.len(), 5);
        // Chain gives reward 1 on the first step only.
        assert_eq!(traj.total_reward(), 1.0);
        assert_eq!(traj.return_from(1), 0.0);
    }

    #[test]
    fn tabular_expected_value_is_exact() {
        let policy = TabularPolicy::new(arr2(&[[0.25, 0.75]]));
        let mut rng = child_rng(0, 0);
        let v = policy.expected_value(&0, &|a: &usize| if *a == 0 { 4.0 } else { 8.0 }, &mut rng);
        assert!((v - 7.0).abs() < 1e-12);
    }
}
