//! Hybrid fitted policy evaluation.
//!
//! [`hpe`] approximates `Q_pi` by iterating the hybrid regression: at each
//! iteration it fits against offline TD targets built from the previous
//! iterate plus on-policy Monte-Carlo targets, redrawing both datasets every
//! iteration and returning the average of the post-burn-in iterates (or the
//! last iterate, the mode used in benchmark runs).
//!
//! [`fhpe`] is the finite-horizon variant: a single backward pass
//! `h = H-1 .. 0` with undiscounted targets `r + f_{h+1}(s', pi_{h+1}(s'))`
//! over step-stratified data.

use ndarray::{Array1, Array2};

use crate::env::{
    DiscretePolicy, Environment, FhTrajectory, FiniteHorizonAdapter, Policy, SampleBudget,
};
use crate::error::{Error, Result};
use crate::func::{
    solve_hybrid_regression, FunctionClass, HybridBatch, OfflineRow, RegRow, StateActionValue,
    ValueModel,
};
use crate::mdp::TabularMdp;
use crate::oracle::bellman_backup;
use crate::rng::Prng;
use crate::sampling::OccupancySampler;

/// Iteration counts and batch sizes for [`hpe`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HpeConfig {
    /// Burn-in iterations excluded from the returned average.
    pub k1: usize,
    /// Total iterations; must exceed `k1`.
    pub k2: usize,
    /// On-policy samples per iteration.
    pub m_on: usize,
    /// Offline samples per iteration.
    pub m_off: usize,
    /// Weight of the online Monte-Carlo term.
    pub lambda: f64,
    /// Average iterates `k1+1 ..= k2` when set; otherwise return the last.
    pub average_iterates: bool,
}

impl HpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k2 <= self.k1 {
            return Err(Error::InvalidConfig(format!(
                "K2 = {} must exceed K1 = {}",
                self.k2, self.k1
            )));
        }
        if self.m_on + self.m_off == 0 {
            return Err(Error::InvalidConfig("m_on + m_off must be positive".into()));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Theory-shaped defaults: `K1 = 4 * ceil(ln(1/gamma))`, `K2 = K1 + t`.
    pub fn theory_defaults(gamma: f64, t: usize, m: usize, lambda: f64) -> Self {
        let k1 = 4 * (1.0 / gamma).ln().ceil().max(1.0) as usize;
        Self { k1, k2: k1 + t, m_on: m, m_off: m, lambda, average_iterates: true }
    }
}

/// The evaluated value function: a single iterate or a uniform average of
/// stored iterates (predictions are averaged pointwise).
#[derive(Clone)]
pub enum EvalFn<S, A> {
    Single(ValueModel<S, A>),
    Average(Vec<ValueModel<S, A>>),
}

impl<S, A> EvalFn<S, A> {
    pub fn predict_features(&self, x: &Array2<f64>) -> Array1<f64> {
        match self {
            EvalFn::Single(m) => m.predict_features(x),
            EvalFn::Average(models) => {
                let mut acc = models[0].predict_features(x);
                for m in &models[1..] {
                    acc = acc + m.predict_features(x);
                }
                acc / models.len() as f64
            }
        }
    }
}

impl<S, A> StateActionValue<S, A> for EvalFn<S, A> {
    fn value(&self, state: &S, action: &A) -> f64 {
        match self {
            EvalFn::Single(m) => m.value(state, action),
            EvalFn::Average(models) => {
                models.iter().map(|m| m.value(state, action)).sum::<f64>() / models.len() as f64
            }
        }
    }
}

/// Per-iteration fit losses, forwarded into the harness metrics stream.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HpeLoss {
    pub iter: usize,
    pub offline_td_loss: f64,
    pub online_mc_loss: f64,
}

pub struct PolicyEvalResult<S, A> {
    pub fbar: EvalFn<S, A>,
    /// Fresh offline draw made after the last fit (never used for fitting).
    pub offline_batch: Vec<OfflineRow<S, A>>,
    /// Fresh on-policy draw made after the last fit.
    pub online_batch: Vec<RegRow<S, A>>,
    pub loss_trace: Vec<HpeLoss>,
    /// Fraction of geometric rollouts cut at the length cap.
    pub truncation_fraction: f64,
}

/// A source of i.i.d. offline transitions `(s, a, r, s')` from `nu`.
pub trait OfflineSource<S, A> {
    fn draw(&self, rng: &mut Prng) -> OfflineRow<S, A>;

    fn draw_batch(&self, n: usize, rng: &mut Prng) -> Vec<OfflineRow<S, A>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Offline distribution for a tabular MDP: `(s, a) ~ nu`, `r = r(s, a)`,
/// `s' ~ P(s, a)`.
pub struct TabularNuSource {
    mdp: std::sync::Arc<TabularMdp>,
    nu: Array1<f64>,
}

impl TabularNuSource {
    pub fn new(mdp: std::sync::Arc<TabularMdp>, nu: Array1<f64>) -> Self {
        assert_eq!(nu.len(), mdp.n_pairs());
        Self { mdp, nu }
    }

    pub fn uniform(mdp: std::sync::Arc<TabularMdp>) -> Self {
        let n = mdp.n_pairs();
        Self::new(mdp, Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }
}

impl OfflineSource<usize, usize> for TabularNuSource {
    fn draw(&self, rng: &mut Prng) -> OfflineRow<usize, usize> {
        let idx = crate::env::sample_categorical(self.nu.as_slice().unwrap(), rng);
        let (s, a) = self.mdp.pair_of(idx);
        let row = self.mdp.transition().slice(ndarray::s![s, a, ..]);
        let next = crate::env::sample_categorical(row.as_slice().unwrap(), rng);
        OfflineRow {
            state: s,
            action: a,
            reward: self.mdp.reward()[[s, a]],
            next_state: Some(next),
        }
    }
}

fn check_budget(budget: Option<&SampleBudget>) -> Result<()> {
    match budget {
        Some(b) if b.exceeded() => Err(Error::SampleBudgetExceeded),
        _ => Ok(()),
    }
}

/// Hybrid fitted policy evaluation of `policy` under discount `gamma`.
#[allow(clippy::too_many_arguments)]
pub fn hpe<E, P>(
    env: &E,
    gamma: f64,
    policy: &P,
    class: &FunctionClass<E::State, E::Action>,
    offline: Option<&dyn OfflineSource<E::State, E::Action>>,
    cfg: &HpeConfig,
    budget: Option<&SampleBudget>,
    rng: &mut Prng,
) -> Result<PolicyEvalResult<E::State, E::Action>>
where
    E: Environment,
    E::State: Clone,
    E::Action: Clone,
    P: Policy<E::State, E::Action>,
{
    cfg.validate()?;
    let mut sampler = OccupancySampler::new(gamma);
    let m_off = if offline.is_some() { cfg.m_off } else { 0 };

    let draw_online =
        |sampler: &mut OccupancySampler, rng: &mut Prng| -> Vec<RegRow<E::State, E::Action>> {
            (0..cfg.m_on)
                .map(|_| {
                    let sample = sampler.sample_with_return(env, policy, rng);
                    RegRow {
                        state: sample.state,
                        action: sample.action,
                        target: sample.mc_return.unwrap(),
                    }
                })
                .collect()
        };
    let draw_offline = |rng: &mut Prng| -> Vec<OfflineRow<E::State, E::Action>> {
        offline.map(|src| src.draw_batch(m_off, rng)).unwrap_or_default()
    };

    check_budget(budget)?;
    let mut d_on = draw_online(&mut sampler, rng);
    let mut d_off = draw_offline(rng);

    let mut iterates: Vec<ValueModel<E::State, E::Action>> = Vec::with_capacity(cfg.k2);
    let mut loss_trace = Vec::with_capacity(cfg.k2);
    for k in 1..=cfg.k2 {
        let f_prev = iterates.last();
        let batch =
            HybridBatch::build(&d_off, f_prev, policy, gamma, d_on.clone(), cfg.lambda, rng)?;
        let fit = solve_hybrid_regression(&batch, class, f_prev, rng)?;
        loss_trace.push(HpeLoss {
            iter: k,
            offline_td_loss: fit.offline_loss,
            online_mc_loss: fit.online_loss,
        });
        iterates.push(fit.model);
        check_budget(budget)?;
        d_on = draw_online(&mut sampler, rng);
        d_off = draw_offline(rng);
    }

    let fbar = if cfg.average_iterates {
        EvalFn::Average(iterates[cfg.k1..].to_vec())
    } else {
        EvalFn::Single(iterates.pop().unwrap())
    };
    let truncation_fraction = if sampler.episodes() == 0 {
        0.0
    } else {
        sampler.truncations() as f64 / sampler.episodes() as f64
    };
    Ok(PolicyEvalResult {
        fbar,
        offline_batch: d_off,
        online_batch: d_on,
        loss_trace,
        truncation_fraction,
    })
}

/// Step-stratified offline pools for finite-horizon evaluation; minibatches
/// are resampled with replacement from each step's pool.
pub struct FhOfflinePools<S, A> {
    pools: Vec<Vec<OfflineRow<S, A>>>,
}

impl<S: Clone, A: Clone> FhOfflinePools<S, A> {
    pub fn new(pools: Vec<Vec<OfflineRow<S, A>>>) -> Self {
        Self { pools }
    }

    pub fn horizon(&self) -> usize {
        self.pools.len()
    }

    pub fn pool(&self, h: usize) -> &[OfflineRow<S, A>] {
        &self.pools[h]
    }

    pub fn sample_rows(&self, h: usize, m: usize, rng: &mut Prng) -> Vec<OfflineRow<S, A>> {
        use rand::Rng;
        let pool = &self.pools[h];
        if pool.is_empty() {
            return Vec::new();
        }
        (0..m.min(pool.len()))
            .map(|_| pool[rng.random_range(0..pool.len())].clone())
            .collect()
    }
}

pub struct FhpeOutput<S, A> {
    /// Fitted per-step value functions `f_0 .. f_{H-1}`.
    pub fits: Vec<ValueModel<S, A>>,
    /// The on-policy trajectories collected for the online term.
    pub trajectories: Vec<FhTrajectory<S, A>>,
    /// The offline minibatches actually used, indexed by step.
    pub offline_rows: Vec<Vec<OfflineRow<S, A>>>,
    /// Per-step fit losses, indexed by step.
    pub losses: Vec<HpeLoss>,
}

/// Finite-horizon hybrid fitted policy evaluation: one backward pass with
/// `f_H = 0` and targets `r + f_{h+1}(s', pi_{h+1}(s'))` on step-`h` rows.
#[allow(clippy::too_many_arguments)]
pub fn fhpe<E, P>(
    fh: &FiniteHorizonAdapter<E>,
    policies: &[P],
    classes: &[FunctionClass<E::State, E::Action>],
    offline: Option<&FhOfflinePools<E::State, E::Action>>,
    m_off: usize,
    n_trajectories: usize,
    lambda: f64,
    warm_start: Option<&[ValueModel<E::State, E::Action>]>,
    budget: Option<&SampleBudget>,
    rng: &mut Prng,
) -> Result<FhpeOutput<E::State, E::Action>>
where
    E: Environment,
    E::State: Clone,
    E::Action: Clone,
    P: Policy<E::State, E::Action>,
{
    let horizon = fh.horizon();
    assert_eq!(policies.len(), horizon, "one policy per step");
    assert_eq!(classes.len(), horizon, "one function class per step");
    if let Some(pools) = offline {
        assert_eq!(pools.horizon(), horizon, "offline pools must be stratified by step");
    }

    check_budget(budget)?;
    let trajectories: Vec<FhTrajectory<E::State, E::Action>> =
        (0..n_trajectories).map(|_| fh.rollout(policies, rng)).collect();

    let mut fits: Vec<Option<ValueModel<E::State, E::Action>>> = vec![None; horizon];
    let mut offline_rows = vec![Vec::new(); horizon];
    let mut losses = vec![None; horizon];
    for h in (0..horizon).rev() {
        let online: Vec<RegRow<E::State, E::Action>> = trajectories
            .iter()
            .map(|t| RegRow {
                state: t.states[h].clone(),
                action: t.actions[h].clone(),
                target: t.return_from(h),
            })
            .collect();
        let rows = offline.map(|p| p.sample_rows(h, m_off, rng)).unwrap_or_default();
        let f_next = if h + 1 < horizon { fits[h + 1].as_ref() } else { None };
        let offline_reg: Vec<RegRow<E::State, E::Action>> = rows
            .iter()
            .map(|row| {
                let bootstrap = match (&row.next_state, f_next) {
                    (Some(next), Some(f)) => {
                        policies[h + 1].td_value(next, &|a: &E::Action| f.value(next, a), rng)
                    }
                    _ => 0.0,
                };
                RegRow {
                    state: row.state.clone(),
                    action: row.action.clone(),
                    target: row.reward + bootstrap,
                }
            })
            .collect();
        let batch = HybridBatch::new(offline_reg, online, lambda)?;
        let warm = warm_start.map(|w| &w[h]);
        let fit = solve_hybrid_regression(&batch, &classes[h], warm, rng)?;
        losses[h] = Some(HpeLoss {
            iter: h,
            offline_td_loss: fit.offline_loss,
            online_mc_loss: fit.online_loss,
        });
        fits[h] = Some(fit.model);
        offline_rows[h] = rows;
    }

    Ok(FhpeOutput {
        fits: fits.into_iter().map(Option::unwrap).collect(),
        trajectories,
        offline_rows,
        losses: losses.into_iter().map(Option::unwrap).collect(),
    })
}

/// Exact offline Bellman residual `E_nu[(f - T_pi f)^2]` on a tabular MDP.
pub fn offline_bellman_residual<P: DiscretePolicy>(
    f: &dyn StateActionValue<usize, usize>,
    policy: &P,
    mdp: &TabularMdp,
    nu: &Array1<f64>,
) -> f64 {
    assert_eq!(nu.len(), mdp.n_pairs());
    let table =
        Array2::from_shape_fn((mdp.n_states(), mdp.n_actions()), |(s, a)| f.value(&s, &a));
    let backed = bellman_backup(mdp, policy, &table);
    nu.iter()
        .enumerate()
        .map(|(i, &w)| {
            let (s, a) = mdp.pair_of(i);
            let delta = table[[s, a]] - backed[[s, a]];
            w * delta * delta
        })
        .sum()
}

/// Random dense-transition, sparse-reward MDP used by the evaluation suites:
/// Dirichlet(1) transition rows; each `(s, a)` carries a nonzero reward
/// (uniform on [0.2, 0.7]) with probability 0.2; uniform joint reset.
pub fn random_sparse_mdp(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rng: &mut Prng,
) -> TabularMdp {
    use rand::Rng;
    let mut p = ndarray::Array3::<f64>::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut row: Vec<f64> =
                (0..n_states).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
            for (s2, &v) in row.iter().enumerate() {
                p[[s, a, s2]] = v;
            }
        }
    }
    let r = Array2::from_shape_fn((n_states, n_actions), |_| {
        if rng.random::<f64>() < 0.2 {
            rng.random_range(0.2..0.7)
        } else {
            0.0
        }
    });
    let n = n_states * n_actions;
    let mu0 = Array1::from_elem(n, 1.0 / n as f64);
    TabularMdp::new(p, r, mu0, gamma).unwrap()
}
