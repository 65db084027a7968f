//! Function classes and fitting machinery: feature maps, linear and MLP
//! value functions, the two-term hybrid square-loss regression solver, and
//! the conjugate-gradient linear solver.

pub mod adam;
pub mod cg;
pub mod features;
pub mod linear;
pub mod mlp;
pub mod regression;

pub use adam::{Adam, AdamConfig};
pub use cg::{conjugate_gradient, CgResult};
pub use features::{feature_matrix, FeatureMap, TabularFeatures, VectorConcatFeatures};
pub use linear::LinearFn;
pub use mlp::{mlp_gradient, Mlp, MlpValueFn};
pub use regression::{
    solve_hybrid_regression, ClassKind, FunctionClass, HybridBatch, LinearConfig, MlpConfig,
    OfflineRow, RegRow,
};

/// A state-action value function `f(s, a)`.
pub trait StateActionValue<S, A> {
    fn value(&self, state: &S, action: &A) -> f64;
}

impl<S, A, F: Fn(&S, &A) -> f64> StateActionValue<S, A> for F {
    fn value(&self, state: &S, action: &A) -> f64 {
        self(state, action)
    }
}

impl<S, A> StateActionValue<S, A> for Box<dyn StateActionValue<S, A> + '_> {
    fn value(&self, state: &S, action: &A) -> f64 {
        (**self).value(state, action)
    }
}

/// A fitted member of a function class.
#[derive(Clone)]
pub enum ValueModel<S, A> {
    Linear(LinearFn<S, A>),
    Mlp(MlpValueFn<S, A>),
}

impl<S, A> ValueModel<S, A> {
    pub fn features(&self) -> &std::sync::Arc<dyn FeatureMap<S, A>> {
        match self {
            ValueModel::Linear(f) => f.features(),
            ValueModel::Mlp(f) => f.features(),
        }
    }

    /// Predictions for a prebuilt feature matrix (one row per sample).
    pub fn predict_features(&self, x: &ndarray::Array2<f64>) -> ndarray::Array1<f64> {
        match self {
            ValueModel::Linear(f) => f.predict_features(x),
            ValueModel::Mlp(f) => f.predict_features(x),
        }
    }

    /// Serializes as `{class, shape, weights}`.
    pub fn to_json(&self) -> String {
        let (class, shape, weights) = match self {
            ValueModel::Linear(f) => ("linear", vec![f.weights().len()], f.weights().to_vec()),
            ValueModel::Mlp(f) => ("mlp", f.net().shape().to_vec(), f.net().params().to_vec()),
        };
        serde_json::json!({ "class": class, "shape": shape, "weights": weights }).to_string()
    }
}

impl<S, A> StateActionValue<S, A> for ValueModel<S, A> {
    fn value(&self, state: &S, action: &A) -> f64 {
        match self {
            ValueModel::Linear(f) => f.value(state, action),
            ValueModel::Mlp(f) => f.value(state, action),
        }
    }
}
