//! Linear-in-features value functions.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use super::features::FeatureMap;
use super::StateActionValue;

/// `f(s, a) = w . phi(s, a)`, optionally clipped to a value range such as
/// `[0, 1/(1-gamma)]`.
#[derive(Clone)]
pub struct LinearFn<S, A> {
    features: Arc<dyn FeatureMap<S, A>>,
    weights: Array1<f64>,
    clip: Option<(f64, f64)>,
}

impl<S, A> LinearFn<S, A> {
    pub fn new(features: Arc<dyn FeatureMap<S, A>>, weights: Array1<f64>) -> Self {
        assert_eq!(features.dim(), weights.len());
        Self { features, weights, clip: None }
    }

    pub fn zero(features: Arc<dyn FeatureMap<S, A>>) -> Self {
        let dim = features.dim();
        Self::new(features, Array1::zeros(dim))
    }

    pub fn with_clip(mut self, clip: Option<(f64, f64)>) -> Self {
        self.clip = clip;
        self
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn features(&self) -> &Arc<dyn FeatureMap<S, A>> {
        &self.features
    }

    fn apply_clip(&self, v: f64) -> f64 {
        match self.clip {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    pub fn predict_features(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.weights).mapv(|v| self.apply_clip(v))
    }
}

impl<S, A> StateActionValue<S, A> for LinearFn<S, A> {
    fn value(&self, state: &S, action: &A) -> f64 {
        self.apply_clip(self.features.eval(state, action).dot(&self.weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::features::TabularFeatures;
    use ndarray::arr1;

    #[test]
    fn prediction_is_dot_product() {
        let fm = Arc::new(TabularFeatures::new(1, 2));
        let f = LinearFn::new(fm, arr1(&[3.0, -1.0]));
        assert_eq!(f.value(&0, &0), 3.0);
        assert_eq!(f.value(&0, &1), -1.0);
    }

    #[test]
    fn clip_bounds_predictions() {
        let fm = Arc::new(TabularFeatures::new(1, 2));
        let f = LinearFn::new(fm, arr1(&[3.0, -1.0])).with_clip(Some((0.0, 2.0)));
        assert_eq!(f.value(&0, &0), 2.0);
        assert_eq!(f.value(&0, &1), 0.0);
    }
}
