//! The hybrid two-term square-loss regression solve.
//!
//! Minimizes
//!
//! ```text
//! mean_off (f(s,a) - target)^2 + lambda * mean_on (f(s,a) - y)^2
//! ```
//!
//! where offline targets are TD backups `r + gamma * f_prev(s', pi(s'))`
//! (with `f_prev` frozen during the solve) and online targets are
//! Monte-Carlo reward-to-go estimates. Both terms are empirical means, so
//! `lambda` is batch-size independent. Linear classes solve regularized
//! normal equations directly; MLP classes run adaptive-moment gradient
//! descent for a configured number of epochs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng;

use super::adam::{Adam, AdamConfig};
use super::features::{feature_matrix, FeatureMap};
use super::linear::LinearFn;
use super::mlp::{Mlp, MlpValueFn};
use super::{StateActionValue, ValueModel};
use crate::env::Policy;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// One offline transition drawn from the offline distribution `nu`.
/// `next_state` is absent on horizon-final rows, where the bootstrap term
/// is identically zero.
#[derive(Debug, Clone)]
pub struct OfflineRow<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
    pub next_state: Option<S>,
}

/// A regression row with its materialized target.
#[derive(Debug, Clone)]
pub struct RegRow<S, A> {
    pub state: S,
    pub action: A,
    pub target: f64,
}

/// The two-term batch of Eq.-style hybrid regression.
#[derive(Debug, Clone)]
pub struct HybridBatch<S, A> {
    pub offline: Vec<RegRow<S, A>>,
    pub online: Vec<RegRow<S, A>>,
    pub lambda: f64,
}

impl<S: Clone, A: Clone> HybridBatch<S, A> {
    pub fn new(
        offline: Vec<RegRow<S, A>>,
        online: Vec<RegRow<S, A>>,
        lambda: f64,
    ) -> Result<Self> {
        if offline.is_empty() && online.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda = {lambda} must be finite and >= 0")));
        }
        Ok(Self { offline, online, lambda })
    }

    /// Builds offline targets `r + gamma * f_prev(s', pi(s'))`, freezing
    /// `f_prev` at construction. Finite-action policies evaluate the next
    /// value exactly; others draw a single action.
    pub fn build<P>(
        transitions: &[OfflineRow<S, A>],
        f_prev: Option<&ValueModel<S, A>>,
        policy: &P,
        gamma: f64,
        online: Vec<RegRow<S, A>>,
        lambda: f64,
        rng: &mut Prng,
    ) -> Result<Self>
    where
        P: Policy<S, A>,
    {
        let offline = transitions
            .iter()
            .map(|row| {
                let bootstrap = match (&row.next_state, f_prev) {
                    (Some(next), Some(f)) if gamma != 0.0 => {
                        policy.td_value(next, &|a: &A| f.value(next, a), rng)
                    }
                    _ => 0.0,
                };
                RegRow {
                    state: row.state.clone(),
                    action: row.action.clone(),
                    target: row.reward + gamma * bootstrap,
                }
            })
            .collect();
        Self::new(offline, online, lambda)
    }
}

#[derive(Debug, Clone)]
pub struct LinearConfig {
    /// Tikhonov term added to the normal equations; guarantees uniqueness
    /// under rank deficiency.
    pub ridge: f64,
    pub clip: Option<(f64, f64)>,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self { ridge: 1e-8, clip: None }
    }
}

#[derive(Debug, Clone)]
pub struct MlpConfig {
    pub hidden: (usize, usize),
    pub adam: AdamConfig,
    pub epochs: usize,
    pub minibatch: usize,
    pub clip: Option<(f64, f64)>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: (64, 64),
            adam: AdamConfig::default(),
            epochs: 50,
            minibatch: 64,
            clip: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ClassKind {
    Linear(LinearConfig),
    Mlp(MlpConfig),
}

/// A function-class descriptor: which features to regress over and how.
#[derive(Clone)]
pub struct FunctionClass<S, A> {
    pub features: Arc<dyn FeatureMap<S, A>>,
    pub kind: ClassKind,
}

impl<S, A> FunctionClass<S, A> {
    pub fn linear(features: Arc<dyn FeatureMap<S, A>>) -> Self {
        Self { features, kind: ClassKind::Linear(LinearConfig::default()) }
    }

    pub fn mlp(features: Arc<dyn FeatureMap<S, A>>, cfg: MlpConfig) -> Self {
        Self { features, kind: ClassKind::Mlp(cfg) }
    }
}

/// A fitted model together with the final per-term training losses.
pub struct RegressionFit<S, A> {
    pub model: ValueModel<S, A>,
    pub offline_loss: f64,
    pub online_loss: f64,
}

fn design<S, A>(
    features: &dyn FeatureMap<S, A>,
    rows: &[RegRow<S, A>],
) -> (Array2<f64>, Array1<f64>) {
    let x = feature_matrix(features, rows.iter().map(|r| (&r.state, &r.action)));
    let t = Array1::from_iter(rows.iter().map(|r| r.target));
    (x, t)
}

fn mean_sq(pred: &Array1<f64>, target: &Array1<f64>) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        / pred.len() as f64
}

/// Solves the hybrid regression over the given class. `warm_start` seeds the
/// MLP path with a previous fit (the linear path always solves exactly).
pub fn solve_hybrid_regression<S: Clone, A: Clone>(
    batch: &HybridBatch<S, A>,
    class: &FunctionClass<S, A>,
    warm_start: Option<&ValueModel<S, A>>,
    rng: &mut Prng,
) -> Result<RegressionFit<S, A>> {
    if batch.offline.is_empty() && batch.online.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (x_off, t_off) = design(class.features.as_ref(), &batch.offline);
    let (x_on, t_on) = design(class.features.as_ref(), &batch.online);
    let model = match &class.kind {
        ClassKind::Linear(cfg) => solve_linear(class, cfg, &x_off, &t_off, &x_on, &t_on, batch.lambda)?,
        ClassKind::Mlp(cfg) => solve_mlp(
            class,
            cfg,
            &x_off,
            &t_off,
            &x_on,
            &t_on,
            batch.lambda,
            warm_start,
            rng,
        )?,
    };
    let offline_loss = mean_sq(&model.predict_features(&x_off), &t_off);
    let online_loss = mean_sq(&model.predict_features(&x_on), &t_on);
    Ok(RegressionFit { model, offline_loss, online_loss })
}

fn solve_linear<S: Clone, A: Clone>(
    class: &FunctionClass<S, A>,
    cfg: &LinearConfig,
    x_off: &Array2<f64>,
    t_off: &Array1<f64>,
    x_on: &Array2<f64>,
    t_on: &Array1<f64>,
    lambda: f64,
) -> Result<ValueModel<S, A>> {
    let d = class.features.dim();
    let mut a = Array2::<f64>::eye(d) * cfg.ridge;
    let mut b = Array1::<f64>::zeros(d);
    let mut accumulate = |x: &Array2<f64>, t: &Array1<f64>, weight: f64| {
        if x.nrows() == 0 || weight == 0.0 {
            return;
        }
        let scale = weight / x.nrows() as f64;
        a = &a + &(x.t().dot(x) * scale);
        b = &b + &(x.t().dot(t) * scale);
    };
    accumulate(x_off, t_off, 1.0);
    accumulate(x_on, t_on, lambda);
    let na = DMatrix::from_fn(d, d, |i, j| a[[i, j]]);
    let nb = DVector::from_fn(d, |i, _| b[i]);
    let w = na
        .clone()
        .cholesky()
        .map(|c| c.solve(&nb))
        .or_else(|| na.clone().lu().solve(&nb))
        .ok_or(Error::NonFiniteLoss)?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    let residual = (&na * &w - &nb).amax() / nb.amax().max(1.0);
    debug_assert!(residual <= 1e-8, "normal-equation stationarity residual {residual}");
    let weights = Array1::from_iter(w.iter().copied());
    Ok(ValueModel::Linear(
        LinearFn::new(Arc::clone(&class.features), weights).with_clip(cfg.clip),
    ))
}

#[allow(clippy::too_many_arguments)]
fn solve_mlp<S: Clone, A: Clone>(
    class: &FunctionClass<S, A>,
    cfg: &MlpConfig,
    x_off: &Array2<f64>,
    t_off: &Array1<f64>,
    x_on: &Array2<f64>,
    t_on: &Array1<f64>,
    lambda: f64,
    warm_start: Option<&ValueModel<S, A>>,
    rng: &mut Prng,
) -> Result<ValueModel<S, A>> {
    let d = class.features.dim();
    let mut net = match warm_start {
        Some(ValueModel::Mlp(prev)) if prev.net().shape() == &[d, cfg.hidden.0, cfg.hidden.1, 1] => {
            prev.net().clone()
        }
        _ => Mlp::new(d, cfg.hidden.0, cfg.hidden.1, 1, rng),
    };
    let (n_off, n_on) = (x_off.nrows(), x_on.nrows());
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), cfg.adam);
    let steps_per_epoch = n_off.max(n_on).div_ceil(cfg.minibatch).max(1);
    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            // Gradient of mean_off + lambda * mean_on via one combined
            // minibatch with per-row cotangent weights.
            let b_off = cfg.minibatch.min(n_off);
            let b_on = cfg.minibatch.min(n_on);
            let mut x = Array2::zeros((b_off + b_on, d));
            let mut cot_scale = Vec::with_capacity(b_off + b_on);
            let mut targets = Vec::with_capacity(b_off + b_on);
            for i in 0..b_off {
                let j = rng.random_range(0..n_off);
                x.row_mut(i).assign(&x_off.row(j));
                targets.push(t_off[j]);
                cot_scale.push(2.0 / b_off as f64);
            }
            for i in 0..b_on {
                let j = rng.random_range(0..n_on);
                x.row_mut(b_off + i).assign(&x_on.row(j));
                targets.push(t_on[j]);
                cot_scale.push(2.0 * lambda / b_on as f64);
            }
            let cache = net.forward_cached(x);
            let mut cot = cache.out.clone();
            for (i, mut row) in cot.rows_mut().into_iter().enumerate() {
                row[0] = cot_scale[i] * (row[0] - targets[i]);
            }
            let grad = net.backward_total(&cache, &cot);
            adam.step(&mut params, &grad);
            net.set_params(&params);
        }
        let loss = mean_sq(&net.forward(x_off).column(0).to_owned(), t_off)
            + lambda * mean_sq(&net.forward(x_on).column(0).to_owned(), t_on);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
    }
    Ok(ValueModel::Mlp(
        MlpValueFn::new(Arc::clone(&class.features), net).with_clip(cfg.clip),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TabularPolicy;
    use crate::func::features::TabularFeatures;
    use crate::rng::child_rng;

    fn tabular_class(n_states: usize, n_actions: usize) -> FunctionClass<usize, usize> {
        FunctionClass::linear(Arc::new(TabularFeatures::new(n_states, n_actions)))
    }

    #[test]
    fn online_mean_is_recovered() {
        let rows = vec![RegRow { state: 0usize, action: 0usize, target: 3.0 }; 10];
        let batch = HybridBatch::new(vec![], rows, 1.0).unwrap();
        let class = tabular_class(1, 1);
        let mut rng = child_rng(0, 0);
        let fit = solve_hybrid_regression(&batch, &class, None, &mut rng).unwrap();
        assert!((fit.model.value(&0, &0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn online_mixed_targets_average() {
        let mut rows = vec![RegRow { state: 0usize, action: 0usize, target: 2.0 }; 5];
        rows.extend(vec![RegRow { state: 0, action: 0, target: 4.0 }; 5]);
        let batch = HybridBatch::new(vec![], rows, 1.0).unwrap();
        let class = tabular_class(1, 1);
        let mut rng = child_rng(0, 0);
        let fit = solve_hybrid_regression(&batch, &class, None, &mut rng).unwrap();
        assert!((fit.model.value(&0, &0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn offline_td_target_with_zero_prev() {
        let transitions = vec![OfflineRow { state: 0usize, action: 0usize, reward: 1.0, next_state: Some(0) }];
        let policy = TabularPolicy::uniform(1, 1);
        let mut rng = child_rng(0, 0);
        let batch =
            HybridBatch::build(&transitions, None, &policy, 0.5, vec![], 1.0, &mut rng).unwrap();
        assert_eq!(batch.offline[0].target, 1.0);
        let class = tabular_class(1, 1);
        let fit = solve_hybrid_regression(&batch, &class, None, &mut rng).unwrap();
        assert!((fit.model.value(&0, &0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            HybridBatch::<usize, usize>::new(vec![], vec![], 1.0),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn lambda_zero_reproduces_fitted_q_step() {
        // With one-hot features and lambda = 0, each cell's fit is the mean
        // of its TD targets.
        let policy = TabularPolicy::uniform(1, 2);
        let fm = Arc::new(TabularFeatures::new(1, 2));
        let prev = ValueModel::Linear(LinearFn::new(
            Arc::clone(&fm) as Arc<dyn FeatureMap<usize, usize>>,
            ndarray::arr1(&[4.0, 2.0]),
        ));
        let transitions = vec![
            OfflineRow { state: 0usize, action: 0usize, reward: 1.0, next_state: Some(0) },
            OfflineRow { state: 0, action: 0, reward: 0.0, next_state: Some(0) },
            OfflineRow { state: 0, action: 1, reward: 0.5, next_state: Some(0) },
        ];
        let mut rng = child_rng(0, 0);
        let batch =
            HybridBatch::build(&transitions, Some(&prev), &policy, 0.5, vec![], 0.0, &mut rng)
                .unwrap();
        // E_pi f_prev(0, .) = 3; targets: 1 + 1.5 = 2.5, 0 + 1.5, 0.5 + 1.5.
        let class = tabular_class(1, 2);
        let fit = solve_hybrid_regression(&batch, &class, None, &mut rng).unwrap();
        assert!((fit.model.value(&0, &0) - 2.0).abs() < 1e-6, "cell mean of 2.5 and 1.5");
        assert!((fit.model.value(&0, &1) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn huge_lambda_matches_online_only_solution() {
        let offline = vec![RegRow { state: 0usize, action: 0usize, target: 10.0 }; 8];
        let online = vec![RegRow { state: 0usize, action: 0usize, target: 1.0 }; 8];
        let class = tabular_class(1, 1);
        let mut rng = child_rng(0, 0);
        let online_only = solve_hybrid_regression(
            &HybridBatch::new(vec![], online.clone(), 1.0).unwrap(),
            &class,
            None,
            &mut rng,
        )
        .unwrap();
        let huge = solve_hybrid_regression(
            &HybridBatch::new(offline, online, 1e9).unwrap(),
            &class,
            None,
            &mut rng,
        )
        .unwrap();
        assert!((huge.model.value(&0, &0) - online_only.model.value(&0, &0)).abs() < 1e-4);
    }

    #[test]
    fn mlp_fits_a_small_regression() {
        let fm = Arc::new(TabularFeatures::new(2, 2));
        let class = FunctionClass::mlp(
            fm,
            MlpConfig { hidden: (16, 16), epochs: 400, ..Default::default() },
        );
        let online = vec![
            RegRow { state: 0usize, action: 0usize, target: 1.0 },
            RegRow { state: 0, action: 1, target: -1.0 },
            RegRow { state: 1, action: 0, target: 0.5 },
            RegRow { state: 1, action: 1, target: 0.0 },
        ];
        let batch = HybridBatch::new(vec![], online, 1.0).unwrap();
        let mut rng = child_rng(7, 0);
        let fit = solve_hybrid_regression(&batch, &class, None, &mut rng).unwrap();
        assert!((fit.model.value(&0, &0) - 1.0).abs() < 0.05);
        assert!((fit.model.value(&0, &1) + 1.0).abs() < 0.05);
        assert!(fit.online_loss < 0.01);
    }
}
