//! Distribution-shift diagnostics for tabular problems.
//!
//! These quantify how well an offline distribution or the reset distribution
//! covers a comparator policy's occupancy. They are exact (built on the
//! oracle occupancy solver) and intended for small MDPs.

use ndarray::Array1;

use crate::env::{DiscretePolicy, TabularPolicy};
use crate::mdp::TabularMdp;
use crate::oracle::tabular_occupancy_exact;
use crate::rng::Prng;

/// Concentrability coefficient `sup_{s,a} d_pie(s, a) / nu(s, a)`.
///
/// Returns `f64::INFINITY` when `nu` lacks support somewhere `d_pie` is
/// positive. `nu` is a flat distribution over `(s, a)` pairs.
pub fn concentrability<P: DiscretePolicy>(
    mdp: &TabularMdp,
    nu: &Array1<f64>,
    pi_e: &P,
) -> f64 {
    assert_eq!(nu.len(), mdp.n_pairs(), "nu must be a distribution over (s, a) pairs");
    let d = tabular_occupancy_exact(mdp, pi_e);
    let mut sup = 0.0f64;
    for (i, &de) in d.iter().enumerate() {
        if de <= 0.0 {
            continue;
        }
        if nu[i] <= 0.0 {
            return f64::INFINITY;
        }
        sup = sup.max(de / nu[i]);
    }
    sup
}

/// Lower bound on the NPG coverage constant
/// `C_npg = max_pi || d_pie / d_pi ||_inf`.
///
/// The max over all stationary policies is replaced by a max over a probe
/// set: all `|A|^|S|` deterministic policies when that count is at most
/// `n_probe_policies`, otherwise `n_probe_policies` random stochastic
/// policies. Whether deterministic policies attain the true max is unproven,
/// so the result is documented as a lower bound only.
pub fn npg_coverage_estimate<P: DiscretePolicy>(
    mdp: &TabularMdp,
    pi_e: &P,
    n_probe_policies: usize,
    rng: &mut Prng,
) -> f64 {
    use rand::Rng;
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let d_e = tabular_occupancy_exact(mdp, pi_e);

    let ratio_for = |probe: &TabularPolicy| -> f64 {
        let d = tabular_occupancy_exact(mdp, probe);
        let mut sup = 0.0f64;
        for (i, &de) in d_e.iter().enumerate() {
            if de <= 0.0 {
                continue;
            }
            if d[i] <= 0.0 {
                return f64::INFINITY;
            }
            sup = sup.max(de / d[i]);
        }
        sup
    };

    let n_deterministic = (a_n as f64).powi(s_n as i32);
    let mut best = 0.0f64;
    if n_deterministic <= n_probe_policies as f64 {
        let total = n_deterministic as usize;
        for code in 0..total {
            let mut c = code;
            let actions: Vec<usize> = (0..s_n)
                .map(|_| {
                    let a = c % a_n;
                    c /= a_n;
                    a
                })
                .collect();
            best = best.max(ratio_for(&TabularPolicy::deterministic(&actions, a_n)));
        }
    } else {
        for _ in 0..n_probe_policies {
            // Dirichlet(1) rows via normalized exponentials.
            let mut probs = ndarray::Array2::<f64>::zeros((s_n, a_n));
            for s in 0..s_n {
                let mut row: Vec<f64> =
                    (0..a_n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= sum);
                for (a, &v) in row.iter().enumerate() {
                    probs[[s, a]] = v;
                }
            }
            best = best.max(ratio_for(&TabularPolicy::new(probs)));
        }
    }
    best
}

/// Exact Bellman-error transfer coefficient for the full tabular function
/// class: `max_g E_{d_pie}[g] / sqrt(E_nu[g^2]) = sqrt(sum d_pie^2 / nu)`
/// (Cauchy-Schwarz in the `nu`-weighted inner product; the maximizing
/// direction is `g = d_pie / nu`). Infinite when `nu` misses support.
pub fn transfer_coefficient<P: DiscretePolicy>(
    mdp: &TabularMdp,
    nu: &Array1<f64>,
    pi_e: &P,
) -> f64 {
    assert_eq!(nu.len(), mdp.n_pairs());
    let d = tabular_occupancy_exact(mdp, pi_e);
    let mut total = 0.0f64;
    for (i, &de) in d.iter().enumerate() {
        if de <= 0.0 {
            continue;
        }
        if nu[i] <= 0.0 {
            return f64::INFINITY;
        }
        total += de * de / nu[i];
    }
    total.sqrt()
}
