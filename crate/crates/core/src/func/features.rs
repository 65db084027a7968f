//! Feature maps from `(state, action)` pairs to real vectors.

use ndarray::{Array1, Array2};

/// Maps `(state, action)` to a fixed-length feature vector.
pub trait FeatureMap<S, A>: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the features into `out`, which has length [`Self::dim`].
    fn write(&self, state: &S, action: &A, out: &mut [f64]);

    fn eval(&self, state: &S, action: &A) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.write(state, action, out.as_slice_mut().unwrap());
        out
    }
}

/// Builds the feature matrix for a batch of rows (one row per pair).
pub fn feature_matrix<'a, S: 'a, A: 'a, I>(map: &dyn FeatureMap<S, A>, rows: I) -> Array2<f64>
where
    I: IntoIterator<Item = (&'a S, &'a A)>,
    I::IntoIter: ExactSizeIterator,
{
    let iter = rows.into_iter();
    let mut x = Array2::zeros((iter.len(), map.dim()));
    for (mut row, (s, a)) in x.rows_mut().into_iter().zip(iter) {
        map.write(s, a, row.as_slice_mut().unwrap());
    }
    x
}

/// One-hot features over the `(s, a)` pairs of a finite MDP; the function
/// class they span is the full tabular class (zero inherent Bellman error).
#[derive(Debug, Clone)]
pub struct TabularFeatures {
    n_states: usize,
    n_actions: usize,
}

impl TabularFeatures {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions }
    }
}

impl FeatureMap<usize, usize> for TabularFeatures {
    fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn write(&self, state: &usize, action: &usize, out: &mut [f64]) {
        out.fill(0.0);
        out[state * self.n_actions + action] = 1.0;
    }
}

/// Concatenation `[state, action]` for vector-valued states and actions,
/// the input encoding for MLP critics over continuous actions.
#[derive(Debug, Clone)]
pub struct VectorConcatFeatures {
    state_dim: usize,
    action_dim: usize,
}

impl VectorConcatFeatures {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self { state_dim, action_dim }
    }
}

impl FeatureMap<Array1<f64>, Array1<f64>> for VectorConcatFeatures {
    fn dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    fn write(&self, state: &Array1<f64>, action: &Array1<f64>, out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.state_dim);
        debug_assert_eq!(action.len(), self.action_dim);
        out[..self.state_dim].copy_from_slice(state.as_slice().unwrap());
        out[self.state_dim..].copy_from_slice(action.as_slice().unwrap());
    }
}
