//! Exact dynamic-programming oracles for tabular MDPs.
//!
//! These solvers are the ground truth the sampling-based components are
//! tested against. Dense direct factorization is used throughout and is
//! intended for |S||A| up to a few thousand.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::env::DiscretePolicy;
use crate::mdp::TabularMdp;

/// Pair-to-pair transition matrix `M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s')`.
fn pair_transition<P: DiscretePolicy>(mdp: &TabularMdp, policy: &P) -> DMatrix<f64> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let n = s_n * a_n;
    let mut m = DMatrix::zeros(n, n);
    for s in 0..s_n {
        for a in 0..a_n {
            let row = s * a_n + a;
            for s2 in 0..s_n {
                let p = mdp.transition()[[s, a, s2]];
                if p == 0.0 {
                    continue;
                }
                let probs = policy.action_probs(s2);
                for a2 in 0..a_n {
                    m[(row, s2 * a_n + a2)] += p * probs[a2];
                }
            }
        }
    }
    m
}

/// Exact `Q_pi` as an `(S, A)` table, from the linear system
/// `(I - gamma * M) Q = r`. The solve residual is checked against 1e-10.
pub fn tabular_q_exact<P: DiscretePolicy>(mdp: &TabularMdp, policy: &P) -> Array2<f64> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let n = s_n * a_n;
    let m = pair_transition(mdp, policy);
    let system = DMatrix::identity(n, n) - &m * mdp.discount();
    let r = DVector::from_fn(n, |i, _| {
        let (s, a) = mdp.pair_of(i);
        mdp.reward()[[s, a]]
    });
    let q = system
        .clone()
        .lu()
        .solve(&r)
        .expect("(I - gamma M) is nonsingular for gamma < 1");
    let residual = (&system * &q - &r).amax();
    assert!(residual <= 1e-10, "Bellman linear solve residual {residual} too large");
    Array2::from_shape_fn((s_n, a_n), |(s, a)| q[s * a_n + a])
}

/// Exact average occupancy `d_pi` over `(s, a)` pairs (flat, summing to 1):
/// `d = (1 - gamma) * (I - gamma * M^T)^{-1} mu0`.
pub fn tabular_occupancy_exact<P: DiscretePolicy>(mdp: &TabularMdp, policy: &P) -> Array1<f64> {
    let n = mdp.n_pairs();
    let m = pair_transition(mdp, policy);
    let system = DMatrix::identity(n, n) - m.transpose() * mdp.discount();
    let mu = DVector::from_fn(n, |i, _| mdp.init_dist()[i] * (1.0 - mdp.discount()));
    let d = system.lu().solve(&mu).expect("occupancy system is nonsingular");
    let occ = Array1::from_iter(d.iter().copied());
    debug_assert!((occ.sum() - 1.0).abs() <= 1e-10);
    occ
}

/// One exact Bellman backup: `(T_pi f)(s,a) = r(s,a) + gamma * E[f(s', a')]`.
pub fn bellman_backup<P: DiscretePolicy>(
    mdp: &TabularMdp,
    policy: &P,
    f: &Array2<f64>,
) -> Array2<f64> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut out = Array2::zeros((s_n, a_n));
    for s in 0..s_n {
        for a in 0..a_n {
            let mut next = 0.0;
            for s2 in 0..s_n {
                let p = mdp.transition()[[s, a, s2]];
                if p == 0.0 {
                    continue;
                }
                let probs = policy.action_probs(s2);
                let mut v = 0.0;
                for a2 in 0..a_n {
                    v += probs[a2] * f[[s2, a2]];
                }
                next += p * v;
            }
            out[[s, a]] = mdp.reward()[[s, a]] + mdp.discount() * next;
        }
    }
    out
}

/// Expected value of a policy from the reset distribution:
/// `V = E_{(s,a) ~ mu0}[Q_pi(s, a)]`.
pub fn tabular_policy_value<P: DiscretePolicy>(mdp: &TabularMdp, policy: &P) -> f64 {
    let q = tabular_q_exact(mdp, policy);
    mdp.init_dist()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let (s, a) = mdp.pair_of(i);
            w * q[[s, a]]
        })
        .sum()
}

/// Optimal deterministic policy (greedy w.r.t. `Q*` from value iteration,
/// run to an l-inf fixed-point gap below `1e-12`).
pub fn tabular_optimal_policy(mdp: &TabularMdp) -> crate::env::TabularPolicy {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut q = Array2::<f64>::zeros((s_n, a_n));
    loop {
        let mut next = Array2::<f64>::zeros((s_n, a_n));
        let mut gap = 0.0f64;
        for s in 0..s_n {
            for a in 0..a_n {
                let mut backup = 0.0;
                for s2 in 0..s_n {
                    let p = mdp.transition()[[s, a, s2]];
                    if p == 0.0 {
                        continue;
                    }
                    let best = (0..a_n).map(|a2| q[[s2, a2]]).fold(f64::NEG_INFINITY, f64::max);
                    backup += p * best;
                }
                next[[s, a]] = mdp.reward()[[s, a]] + mdp.discount() * backup;
                gap = gap.max((next[[s, a]] - q[[s, a]]).abs());
            }
        }
        q = next;
        if gap < 1e-12 {
            break;
        }
    }
    let actions: Vec<usize> = (0..s_n)
        .map(|s| {
            (0..a_n)
                .max_by(|&a, &b| q[[s, a]].partial_cmp(&q[[s, b]]).unwrap())
                .unwrap()
        })
        .collect();
    crate::env::TabularPolicy::deterministic(&actions, a_n)
}

/// Exact finite-horizon, undiscounted Q tables `Q_0 .. Q_{H-1}` by backward
/// induction with `Q_H = 0`, under per-step policies.
pub fn finite_horizon_q_exact<P: DiscretePolicy>(
    mdp: &TabularMdp,
    step_policies: &[P],
) -> Vec<Array2<f64>> {
    let horizon = step_policies.len();
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut tables = vec![Array2::<f64>::zeros((s_n, a_n)); horizon];
    let mut next_v = Array1::<f64>::zeros(s_n);
    for h in (0..horizon).rev() {
        let mut v = Array1::<f64>::zeros(s_n);
        for s in 0..s_n {
            for a in 0..a_n {
                let mut backup = 0.0;
                for s2 in 0..s_n {
                    backup += mdp.transition()[[s, a, s2]] * next_v[s2];
                }
                tables[h][[s, a]] = mdp.reward()[[s, a]] + backup;
            }
            let probs = step_policies[h].action_probs(s);
            v[s] = (0..a_n).map(|a| probs[a] * tables[h][[s, a]]).sum();
        }
        next_v = v;
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TabularPolicy;
    use ndarray::{arr1, arr2, arr3};

    fn chain(gamma: f64) -> TabularMdp {
        let p = arr3(&[[[0.0, 1.0]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        TabularMdp::new(p, r, arr1(&[1.0, 0.0]), gamma).unwrap()
    }

    #[test]
    fn q_exact_zero_rewards() {
        let p = arr3(&[[[1.0]]]);
        let mdp = TabularMdp::new(p, arr2(&[[0.0]]), arr1(&[1.0]), 0.9).unwrap();
        let q = tabular_q_exact(&mdp, &TabularPolicy::uniform(1, 1));
        assert_eq!(q[[0, 0]], 0.0);
    }

    #[test]
    fn q_exact_geometric_series() {
        let p = arr3(&[[[1.0]]]);
        let mdp = TabularMdp::new(p, arr2(&[[1.0]]), arr1(&[1.0]), 0.5).unwrap();
        let q = tabular_q_exact(&mdp, &TabularPolicy::uniform(1, 1));
        assert!((q[[0, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn q_exact_chain_hand_solved() {
        // (I - gamma P) Q = r with gamma = 0.9: Q(s1) = 0, Q(s0) = 1.
        let mdp = chain(0.9);
        let q = tabular_q_exact(&mdp, &TabularPolicy::uniform(2, 1));
        assert!((q[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(q[[1, 0]].abs() < 1e-12);
    }

    #[test]
    fn occupancy_gamma_zero_is_mu0() {
        let p = arr3(&[[[0.0, 1.0]], [[0.0, 1.0]]]);
        let r = arr2(&[[1.0], [0.0]]);
        let mdp = TabularMdp::new(p, r, arr1(&[0.3, 0.7]), 0.0).unwrap();
        let d = tabular_occupancy_exact(&mdp, &TabularPolicy::uniform(2, 1));
        assert!((d[0] - 0.3).abs() < 1e-12);
        assert!((d[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn occupancy_single_pair_is_one() {
        let p = arr3(&[[[1.0]]]);
        let mdp = TabularMdp::new(p, arr2(&[[1.0]]), arr1(&[1.0]), 0.8).unwrap();
        let d = tabular_occupancy_exact(&mdp, &TabularPolicy::uniform(1, 1));
        assert!((d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_chain_geometric_split() {
        let mdp = chain(0.5);
        let d = tabular_occupancy_exact(&mdp, &TabularPolicy::uniform(2, 1));
        assert!((d[0] - 0.5).abs() < 1e-10);
        assert!((d[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn backup_of_zero_is_reward() {
        let mdp = chain(0.9);
        let policy = TabularPolicy::uniform(2, 1);
        let backed = bellman_backup(&mdp, &policy, &Array2::zeros((2, 1)));
        assert_eq!(backed, mdp.reward().clone());
    }

    #[test]
    fn backup_fixed_point_is_q() {
        let mdp = chain(0.9);
        let policy = TabularPolicy::uniform(2, 1);
        let q = tabular_q_exact(&mdp, &policy);
        let backed = bellman_backup(&mdp, &policy, &q);
        for (x, y) in backed.iter().zip(q.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn backup_hand_evaluated_on_constant_function() {
        let mdp = chain(0.9);
        let policy = TabularPolicy::uniform(2, 1);
        let f = Array2::from_elem((2, 1), 1.0);
        let backed = bellman_backup(&mdp, &policy, &f);
        assert!((backed[[0, 0]] - 1.9).abs() < 1e-12);
        assert!((backed[[1, 0]] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_picks_rewarding_arm() {
        // Two actions at a single state: r = (0.2, 0.8).
        let p = arr3(&[[[1.0], [1.0]]]);
        let r = arr2(&[[0.2, 0.8]]);
        let mdp = TabularMdp::new(p, r, arr1(&[0.5, 0.5]), 0.5).unwrap();
        let pi = tabular_optimal_policy(&mdp);
        assert_eq!(pi.probs()[[0, 1]], 1.0);
    }

    #[test]
    fn finite_horizon_backward_induction_chain() {
        // Undiscounted H = 3 on the chain: Q_2(s0) = 1, Q_1(s0) = 1 (next
        // state is s1 which earns nothing), Q_0(s0) = 1.
        let mdp = chain(0.9);
        let policies = vec![TabularPolicy::uniform(2, 1); 3];
        let q = finite_horizon_q_exact(&mdp, &policies);
        assert_eq!(q.len(), 3);
        assert!((q[2][[0, 0]] - 1.0).abs() < 1e-12);
        assert!((q[0][[0, 0]] - 1.0).abs() < 1e-12);
        assert!(q[0][[1, 0]].abs() < 1e-12);
    }

    #[test]
    fn policy_value_is_mu0_weighted_q() {
        let mdp = chain(0.9);
        let policy = TabularPolicy::uniform(2, 1);
        let v = tabular_policy_value(&mdp, &policy);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
