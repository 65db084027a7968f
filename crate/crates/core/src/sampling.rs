//! Geometric-law sampling of occupancies and reward-to-go estimates.
//!
//! With discount `gamma`, the average occupancy of a policy is
//! `d_pi(s, a) = (1 - gamma) * (mu0(s, a) + sum_{t >= 1} gamma^t Pr(s_t, a_t))`.
//! Drawing `h` with `P(h) = (1 - gamma) * gamma^h` and rolling the policy for
//! `h` steps from a `mu0` reset therefore returns a pair distributed as
//! `d_pi`. The reward-to-go estimator rolls from `(s, a)`, continuing with
//! probability `gamma` at each step, and returns the undiscounted reward sum:
//! the reach probability of step `t` is `gamma^t`, so the expectation is
//! `sum_t gamma^t r_t = Q_pi(s, a)`. (Terminating, rather than continuing,
//! with probability `gamma` would instead estimate `sum_t (1-gamma)^t r_t`.)

use rand::Rng;

use crate::env::{Environment, Policy};
use crate::rng::Prng;

/// A sample from the average occupancy `d_pi`, optionally paired with the
/// Monte-Carlo reward-to-go estimate `y` with `E[y | s, a] = Q_pi(s, a)`.
#[derive(Debug, Clone)]
pub struct OccupancySample<S, A> {
    pub state: S,
    pub action: A,
    pub mc_return: Option<f64>,
}

/// Geometric-length sampler with a deterministic truncation cap.
///
/// Rollouts are truncated at `h_max = ceil(ln(1e-6) / ln(gamma))` so the
/// leftover geometric mass is at most `1e-6`; truncation events are counted
/// so the harness can surface them in metrics. The induced bias on a
/// reward-to-go estimate is at most `1e-6 / (1 - gamma)`.
#[derive(Debug, Clone)]
pub struct OccupancySampler {
    gamma: f64,
    max_len: usize,
    truncations: u64,
    episodes: u64,
}

const TAIL_MASS: f64 = 1e-6;

impl OccupancySampler {
    pub fn new(gamma: f64) -> Self {
        assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
        let max_len = if gamma == 0.0 {
            0
        } else {
            (TAIL_MASS.ln() / gamma.ln()).ceil() as usize
        };
        Self { gamma, max_len, truncations: 0, episodes: 0 }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Rollout-length cap `h_max`.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn truncations(&self) -> u64 {
        self.truncations
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Draws `(s, a) ~ d_pi`: samples `h` geometrically, resets from `mu0`,
    /// and rolls `policy` for `h` steps.
    pub fn sample_occupancy<E, P>(
        &mut self,
        env: &E,
        policy: &P,
        rng: &mut Prng,
    ) -> (E::State, E::Action)
    where
        E: Environment,
        P: Policy<E::State, E::Action>,
    {
        self.episodes += 1;
        let (mut state, mut action) = env.reset_pair(rng);
        let mut len = 0;
        loop {
            if !(rng.random::<f64>() < self.gamma) {
                return (state, action);
            }
            if len == self.max_len {
                self.truncations += 1;
                return (state, action);
            }
            let (_, next) = env.step(&state, &action, rng);
            action = policy.sample_action(&next, rng);
            state = next;
            len += 1;
        }
    }

    /// Unbiased reward-to-go estimate from `(state, action)`: executes the
    /// pair, then follows `policy`, continuing with probability `gamma`;
    /// returns the undiscounted reward sum.
    pub fn estimate_q<E, P>(
        &mut self,
        env: &E,
        policy: &P,
        state: &E::State,
        action: &E::Action,
        rng: &mut Prng,
    ) -> f64
    where
        E: Environment,
        P: Policy<E::State, E::Action>,
    {
        self.episodes += 1;
        let mut state = state.clone();
        let mut action = action.clone();
        let mut total = 0.0;
        let mut len = 0;
        loop {
            let (reward, next) = env.step(&state, &action, rng);
            total += reward;
            if !(rng.random::<f64>() < self.gamma) {
                return total;
            }
            if len == self.max_len {
                self.truncations += 1;
                return total;
            }
            action = policy.sample_action(&next, rng);
            state = next;
            len += 1;
        }
    }

    /// Draws a full occupancy sample with its Monte-Carlo return.
    pub fn sample_with_return<E, P>(
        &mut self,
        env: &E,
        policy: &P,
        rng: &mut Prng,
    ) -> OccupancySample<E::State, E::Action>
    where
        E: Environment,
        P: Policy<E::State, E::Action>,
    {
        let (state, action) = self.sample_occupancy(env, policy, rng);
        let y = self.estimate_q(env, policy, &state, &action, rng);
        OccupancySample { state, action, mc_return: Some(y) }
    }
}

/// One-shot convenience wrapper around [`OccupancySampler::sample_occupancy`].
pub fn sample_occupancy<E, P>(
    env: &E,
    policy: &P,
    gamma: f64,
    rng: &mut Prng,
) -> (E::State, E::Action)
where
    E: Environment,
    P: Policy<E::State, E::Action>,
{
    OccupancySampler::new(gamma).sample_occupancy(env, policy, rng)
}

/// One-shot convenience wrapper around [`OccupancySampler::estimate_q`].
pub fn estimate_q_rollout<E, P>(
    env: &E,
    policy: &P,
    gamma: f64,
    state: &E::State,
    action: &E::Action,
    rng: &mut Prng,
) -> f64
where
    E: Environment,
    P: Policy<E::State, E::Action>,
{
    OccupancySampler::new(gamma).estimate_q(env, policy, state, action, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{TabularEnv, TabularPolicy};
    use crate::mdp::TabularMdp;
    use crate::rng::child_rng;
    use ndarray::{arr1, arr2, arr3};
    use std::sync::Arc;

    fn single_pair_env(gamma: f64) -> TabularEnv {
        let mdp =
            TabularMdp::new(arr3(&[[[1.0]]]), arr2(&[[1.0]]), arr1(&[1.0]), gamma).unwrap();
        TabularEnv::new(Arc::new(mdp))
    }

    #[test]
    fn gamma_zero_returns_reset_pair_law() {
        // All geometric mass at h = 0: the sample is exactly a mu0 draw.
        let p = arr3(&[[[0.0, 1.0]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        let mdp = TabularMdp::new(p, r, arr1(&[0.25, 0.75]), 0.0).unwrap();
        let env = TabularEnv::new(Arc::new(mdp));
        let policy = TabularPolicy::uniform(2, 1);
        let mut rng = child_rng(11, 0);
        let mut counts = [0u32; 2];
        for _ in 0..20_000 {
            let (s, _) = sample_occupancy(&env, &policy, 0.0, &mut rng);
            counts[s] += 1;
        }
        let frac = counts[0] as f64 / 20_000.0;
        assert!((frac - 0.25).abs() < 0.01, "frac = {frac}");
    }

    #[test]
    fn degenerate_single_pair_always_returned() {
        let env = single_pair_env(0.7);
        let policy = TabularPolicy::uniform(1, 1);
        let mut rng = child_rng(5, 0);
        for _ in 0..100 {
            let (s, a) = sample_occupancy(&env, &policy, 0.7, &mut rng);
            assert_eq!((s, a), (0, 0));
        }
    }

    #[test]
    fn chain_occupancy_matches_closed_form() {
        // s0 -> s1, s1 absorbing, mu0 = delta(s0, a); d_pi = (1/2, 1/2) at
        // gamma = 1/2: (1-g) on s0 at t=0 plus (1-g)(g + g^2 + ...) = g on s1.
        let p = arr3(&[[[0.0, 1.0]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        let mdp = TabularMdp::new(p, r, arr1(&[1.0, 0.0]), 0.5).unwrap();
        let env = TabularEnv::new(Arc::new(mdp));
        let policy = TabularPolicy::uniform(2, 1);
        let mut rng = child_rng(17, 0);
        let n = 100_000;
        let mut s0 = 0u32;
        for _ in 0..n {
            let (s, _) = sample_occupancy(&env, &policy, 0.5, &mut rng);
            if s == 0 {
                s0 += 1;
            }
        }
        let frac = s0 as f64 / n as f64;
        // 3 standard errors of a Bernoulli(1/2) over 1e5 draws ~ 0.0047.
        assert!((frac - 0.5).abs() < 0.005, "frac = {frac}");
    }

    #[test]
    fn rollout_gamma_zero_returns_immediate_reward() {
        let env = single_pair_env(0.0);
        let policy = TabularPolicy::uniform(1, 1);
        let mut rng = child_rng(2, 0);
        let y = estimate_q_rollout(&env, &policy, 0.0, &0, &0, &mut rng);
        assert_eq!(y, 1.0);
    }

    #[test]
    fn rollout_zero_rewards_gives_zero() {
        let mdp =
            TabularMdp::new(arr3(&[[[1.0]]]), arr2(&[[0.0]]), arr1(&[1.0]), 0.8).unwrap();
        let env = TabularEnv::new(Arc::new(mdp));
        let policy = TabularPolicy::uniform(1, 1);
        let mut rng = child_rng(2, 0);
        for _ in 0..50 {
            assert_eq!(estimate_q_rollout(&env, &policy, 0.8, &0, &0, &mut rng), 0.0);
        }
    }

    #[test]
    fn rollout_mean_matches_geometric_series() {
        // Q = 1 / (1 - gamma) = 2 for the self-loop with r = 1, gamma = 1/2.
        let env = single_pair_env(0.5);
        let policy = TabularPolicy::uniform(1, 1);
        let mut rng = child_rng(23, 0);
        let n = 100_000usize;
        let mut sampler = OccupancySampler::new(0.5);
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let y = sampler.estimate_q(&env, &policy, &0, &0, &mut rng);
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean = {mean}, se = {se}");
    }

    #[test]
    fn truncation_cap_matches_tail_mass() {
        let sampler = OccupancySampler::new(0.5);
        // ceil(ln 1e-6 / ln 0.5) = ceil(19.93) = 20.
        assert_eq!(sampler.max_len(), 20);
        let env = single_pair_env(0.5);
        let policy = TabularPolicy::uniform(1, 1);
        let mut rng = child_rng(3, 0);
        let mut sampler = OccupancySampler::new(0.5);
        for _ in 0..200_000 {
            let _ = sampler.sample_occupancy(&env, &policy, &mut rng);
        }
        // Expected truncation rate = gamma^(h_max + 1) ~ 4.8e-7 per episode.
        assert!(sampler.truncations() <= 3, "truncations = {}", sampler.truncations());
    }

    #[test]
    fn identical_seeds_reproduce_samples_bitwise() {
        let env = single_pair_env(0.9);
        let policy = TabularPolicy::uniform(1, 1);
        let draw = || {
            let mut rng = child_rng(42, 9);
            let mut sampler = OccupancySampler::new(0.9);
            (0..200)
                .map(|_| sampler.estimate_q(&env, &policy, &0, &0, &mut rng))
                .collect::<Vec<f64>>()
        };
        assert_eq!(draw(), draw());
    }
}
