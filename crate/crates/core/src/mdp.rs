//! Exact tabular MDP specification.
//!
//! A [`TabularMdp`] is the ground-truth object behind the oracle solvers in
//! [`crate::oracle`] and the black-box [`crate::env::TabularEnv`]. The reset
//! distribution `mu0` is a joint distribution over `(state, action)` pairs:
//! a new episode starts by executing the sampled action.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// A finite discounted MDP: `S` states, `A` actions, transition tensor
/// `P[s][a][s']`, reward `r[s][a]` in `[0, 1]`, joint reset distribution
/// `mu0` over `(s, a)` pairs (indexed `s * A + a`), and discount `gamma`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Array3<f64>,
    reward: Array2<f64>,
    init_dist: Array1<f64>,
    discount: f64,
}

/// Wire form of [`TabularMdp`]; nested arrays keep the JSON self-describing.
#[derive(Serialize, Deserialize)]
struct TabularMdpJson {
    n_states: usize,
    n_actions: usize,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
    r: Vec<Vec<f64>>,
    mu0: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    /// Validates and builds an MDP. `transition` has shape `(S, A, S)`,
    /// `reward` shape `(S, A)`, `init_dist` length `S * A`.
    pub fn new(
        transition: Array3<f64>,
        reward: Array2<f64>,
        init_dist: Array1<f64>,
        discount: f64,
    ) -> Result<Self> {
        let (s, a, s2) = transition.dim();
        if s == 0 || a == 0 {
            return Err(Error::InvalidMdp("state and action sets must be nonempty".into()));
        }
        if s2 != s {
            return Err(Error::InvalidMdp(format!(
                "transition tensor is {s}x{a}x{s2}, expected {s}x{a}x{s}"
            )));
        }
        if reward.dim() != (s, a) {
            return Err(Error::InvalidMdp("reward table shape does not match transitions".into()));
        }
        if init_dist.len() != s * a {
            return Err(Error::InvalidMdp(format!(
                "mu0 has length {}, expected S*A = {}",
                init_dist.len(),
                s * a
            )));
        }
        // Spec examples exercise gamma = 0 (all geometric mass at h = 0), so
        // the lower bound is inclusive here.
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!("gamma = {discount} outside [0, 1)")));
        }
        for si in 0..s {
            for ai in 0..a {
                let row = transition.slice(ndarray::s![si, ai, ..]);
                if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return Err(Error::InvalidMdp(format!("P[{si}][{ai}] has a negative entry")));
                }
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "P[{si}][{ai}] sums to {sum}, expected 1"
                    )));
                }
                let r = reward[[si, ai]];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InvalidMdp(format!("r[{si}][{ai}] = {r} outside [0, 1]")));
                }
            }
        }
        if init_dist.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidMdp("mu0 has a negative entry".into()));
        }
        let mu_sum: f64 = init_dist.sum();
        if (mu_sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidMdp(format!("mu0 sums to {mu_sum}, expected 1")));
        }
        Ok(Self { n_states: s, n_actions: a, transition, reward, init_dist, discount })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    /// Joint reset distribution over `(s, a)`, indexed `s * n_actions + a`.
    pub fn init_dist(&self) -> &Array1<f64> {
        &self.init_dist
    }

    /// Flat pair index for `(s, a)`.
    pub fn pair_index(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    /// Inverse of [`Self::pair_index`].
    pub fn pair_of(&self, index: usize) -> (usize, usize) {
        (index / self.n_actions, index % self.n_actions)
    }

    /// Convenience constructor: `mu0` given over states only; the reset
    /// action is drawn uniformly (the default reset policy for environments
    /// that naturally reset to states).
    pub fn with_state_init(
        transition: Array3<f64>,
        reward: Array2<f64>,
        state_init: Array1<f64>,
        discount: f64,
    ) -> Result<Self> {
        let (s, a, _) = transition.dim();
        if state_init.len() != s {
            return Err(Error::InvalidMdp("state-level mu0 length must equal S".into()));
        }
        let mut joint = Array1::zeros(s * a);
        for si in 0..s {
            for ai in 0..a {
                joint[si * a + ai] = state_init[si] / a as f64;
            }
        }
        Self::new(transition, reward, joint, discount)
    }

    pub fn to_json(&self) -> String {
        let doc = TabularMdpJson {
            n_states: self.n_states,
            n_actions: self.n_actions,
            p: (0..self.n_states)
                .map(|s| {
                    (0..self.n_actions)
                        .map(|a| self.transition.slice(ndarray::s![s, a, ..]).to_vec())
                        .collect()
                })
                .collect(),
            r: (0..self.n_states)
                .map(|s| self.reward.slice(ndarray::s![s, ..]).to_vec())
                .collect(),
            mu0: self.init_dist.to_vec(),
            gamma: self.discount,
        };
        serde_json::to_string(&doc).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TabularMdpJson = serde_json::from_str(text)?;
        let (s, a) = (doc.n_states, doc.n_actions);
        if doc.p.len() != s || doc.p.iter().any(|m| m.len() != a || m.iter().any(|row| row.len() != s)) {
            return Err(Error::InvalidMdp("P shape does not match n_states/n_actions".into()));
        }
        if doc.r.len() != s || doc.r.iter().any(|row| row.len() != a) {
            return Err(Error::InvalidMdp("r shape does not match n_states/n_actions".into()));
        }
        let mut transition = Array3::zeros((s, a, s));
        let mut reward = Array2::zeros((s, a));
        for si in 0..s {
            for ai in 0..a {
                reward[[si, ai]] = doc.r[si][ai];
                for sj in 0..s {
                    transition[[si, ai, sj]] = doc.p[si][ai][sj];
                }
            }
        }
        Self::new(transition, reward, Array1::from_vec(doc.mu0), doc.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, arr3};

    /// Two-state chain used across the oracle tests: s0 -> s1 under the only
    /// action, s1 absorbing, reward 1 at s0 and 0 at s1.
    pub fn chain(gamma: f64) -> TabularMdp {
        let p = arr3(&[[[0.0, 1.0]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        let mu0 = arr1(&[1.0, 0.0]);
        TabularMdp::new(p, r, mu0, gamma).unwrap()
    }

    #[test]
    fn validates_row_sums() {
        let p = arr3(&[[[0.5, 0.4]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        let mu0 = arr1(&[1.0, 0.0]);
        assert!(matches!(TabularMdp::new(p, r, mu0, 0.9), Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn validates_reward_range() {
        let p = arr3(&[[[1.0]]]);
        let r = arr2(&[[1.5]]);
        let mu0 = arr1(&[1.0]);
        assert!(matches!(TabularMdp::new(p, r, mu0, 0.9), Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn validates_discount() {
        let p = arr3(&[[[1.0]]]);
        let r = arr2(&[[1.0]]);
        assert!(TabularMdp::new(p.clone(), r.clone(), arr1(&[1.0]), 1.0).is_err());
        assert!(TabularMdp::new(p.clone(), r.clone(), arr1(&[1.0]), -0.1).is_err());
        // gamma = 0 is allowed: occupancy collapses to mu0.
        assert!(TabularMdp::new(p, r, arr1(&[1.0]), 0.0).is_ok());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mdp = chain(0.9375);
        let back = TabularMdp::from_json(&mdp.to_json()).unwrap();
        assert_eq!(back.n_states(), 2);
        assert_eq!(back.n_actions(), 1);
        // serde_json emits shortest round-trip floats, so equality is exact.
        assert_eq!(back.discount(), mdp.discount());
        assert_eq!(back.transition(), mdp.transition());
        assert_eq!(back.reward(), mdp.reward());
        assert_eq!(back.init_dist(), mdp.init_dist());
    }

    #[test]
    fn with_state_init_spreads_actions_uniformly() {
        let p = arr3(&[[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]);
        let r = arr2(&[[0.0, 0.0], [0.0, 0.0]]);
        let mdp = TabularMdp::with_state_init(p, r, arr1(&[0.6, 0.4]), 0.5).unwrap();
        assert_eq!(mdp.init_dist().to_vec(), vec![0.3, 0.3, 0.2, 0.2]);
    }
}
