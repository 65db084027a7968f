//! A small two-hidden-layer perceptron with tanh activations and hand-rolled
//! batched backpropagation.
//!
//! Everything is expressed over row-major batches so forward and backward
//! passes reduce to a handful of matrix products. `backward_rows` produces
//! per-sample parameter gradients, which the natural-gradient machinery uses
//! to assemble score matrices.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::features::FeatureMap;
use super::StateActionValue;
use crate::rng::Prng;

#[derive(Debug, Clone)]
pub struct Mlp {
    dims: [usize; 4],
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

/// Cached activations of one batched forward pass.
pub struct MlpCache {
    pub x: Array2<f64>,
    z1: Array2<f64>,
    z2: Array2<f64>,
    pub out: Array2<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut Prng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl Mlp {
    pub fn new(input: usize, hidden1: usize, hidden2: usize, output: usize, rng: &mut Prng) -> Self {
        Self {
            dims: [input, hidden1, hidden2, output],
            w1: glorot(input, hidden1, rng),
            b1: Array1::zeros(hidden1),
            w2: glorot(hidden1, hidden2, rng),
            b2: Array1::zeros(hidden2),
            w3: glorot(hidden2, output, rng),
            b3: Array1::zeros(output),
        }
    }

    /// Layer sizes `[input, hidden1, hidden2, output]`.
    pub fn shape(&self) -> &[usize; 4] {
        &self.dims
    }

    pub fn n_params(&self) -> usize {
        let [i, h1, h2, o] = self.dims;
        i * h1 + h1 + h1 * h2 + h2 + h2 * o + o
    }

    /// Flattened parameters, ordered `w1, b1, w2, b2, w3, b3` (row-major).
    pub fn params(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.extend(self.b3.iter());
        Array1::from_vec(out)
    }

    pub fn set_params(&mut self, flat: &Array1<f64>) {
        assert_eq!(flat.len(), self.n_params());
        let slice = flat.as_slice().unwrap();
        let mut off = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&slice[off..off + dst.len()]);
            off += dst.len();
        };
        take(self.w1.as_slice_mut().unwrap());
        take(self.b1.as_slice_mut().unwrap());
        take(self.w2.as_slice_mut().unwrap());
        take(self.b2.as_slice_mut().unwrap());
        take(self.w3.as_slice_mut().unwrap());
        take(self.b3.as_slice_mut().unwrap());
        debug_assert_eq!(off, flat.len());
    }

    /// Batched forward pass; `x` is `(n, input)`, output is `(n, output)`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x.clone()).out
    }

    pub fn forward_cached(&self, x: Array2<f64>) -> MlpCache {
        let z1 = (x.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let z2 = (z1.dot(&self.w2) + &self.b2).mapv(f64::tanh);
        let out = z2.dot(&self.w3) + &self.b3;
        MlpCache { x, z1, z2, out }
    }

    pub fn forward_one(&self, x: &Array1<f64>) -> Array1<f64> {
        let z1 = (x.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let z2 = (z1.dot(&self.w2) + &self.b2).mapv(f64::tanh);
        z2.dot(&self.w3) + &self.b3
    }

    fn deltas(&self, cache: &MlpCache, cotangent: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let d2 = cotangent.dot(&self.w3.t()) * cache.z2.mapv(|z| 1.0 - z * z);
        let d1 = d2.dot(&self.w2.t()) * cache.z1.mapv(|z| 1.0 - z * z);
        (d2, d1)
    }

    /// Total parameter gradient for output cotangents `cotangent = dL/dout`
    /// (summed over the batch), flattened in [`Self::params`] order.
    pub fn backward_total(&self, cache: &MlpCache, cotangent: &Array2<f64>) -> Array1<f64> {
        let (d2, d1) = self.deltas(cache, cotangent);
        let gw1 = cache.x.t().dot(&d1);
        let gb1 = d1.sum_axis(Axis(0));
        let gw2 = cache.z1.t().dot(&d2);
        let gb2 = d2.sum_axis(Axis(0));
        let gw3 = cache.z2.t().dot(cotangent);
        let gb3 = cotangent.sum_axis(Axis(0));
        let mut out = Vec::with_capacity(self.n_params());
        out.extend(gw1.iter());
        out.extend(gb1.iter());
        out.extend(gw2.iter());
        out.extend(gb2.iter());
        out.extend(gw3.iter());
        out.extend(gb3.iter());
        Array1::from_vec(out)
    }

    /// Per-sample parameter gradients: row `i` is the flattened gradient of
    /// `sum_j cotangent[i][j] * out[i][j]` with respect to the parameters.
    pub fn backward_rows(&self, cache: &MlpCache, cotangent: &Array2<f64>) -> Array2<f64> {
        let (d2, d1) = self.deltas(cache, cotangent);
        let n = cache.x.nrows();
        let [i_n, h1, h2, o] = self.dims;
        let mut rows = Array2::zeros((n, self.n_params()));
        for r in 0..n {
            let out = rows.row_mut(r);
            let out = out.into_slice().unwrap();
            let x = cache.x.row(r);
            let z1 = cache.z1.row(r);
            let z2 = cache.z2.row(r);
            let g = cotangent.row(r);
            let d1r = d1.row(r);
            let d2r = d2.row(r);
            let mut off = 0;
            for xi in x.iter() {
                for dj in d1r.iter() {
                    out[off] = xi * dj;
                    off += 1;
                }
            }
            out[off..off + h1].copy_from_slice(d1r.as_slice().unwrap());
            off += h1;
            for zi in z1.iter() {
                for dj in d2r.iter() {
                    out[off] = zi * dj;
                    off += 1;
                }
            }
            out[off..off + h2].copy_from_slice(d2r.as_slice().unwrap());
            off += h2;
            for zi in z2.iter() {
                for gj in g.iter() {
                    out[off] = zi * gj;
                    off += 1;
                }
            }
            out[off..off + o].copy_from_slice(g.as_slice().unwrap());
            off += o;
            debug_assert_eq!(off, i_n * h1 + h1 + h1 * h2 + h2 + h2 * o + o);
        }
        rows
    }
}

/// Gradient of the mean squared loss `mean_i (f(x_i) - t_i)^2` with respect
/// to all parameters of a scalar-output network.
pub fn mlp_gradient(net: &Mlp, xs: &Array2<f64>, targets: &Array1<f64>) -> Array1<f64> {
    assert_eq!(net.shape()[3], 1, "mlp_gradient expects a scalar output head");
    assert_eq!(xs.nrows(), targets.len());
    let n = xs.nrows() as f64;
    let cache = net.forward_cached(xs.clone());
    let mut cot = cache.out.clone();
    for (mut row, &t) in cot.rows_mut().into_iter().zip(targets.iter()) {
        row[0] = 2.0 * (row[0] - t) / n;
    }
    net.backward_total(&cache, &cot)
}

/// An MLP value function over `(state, action)` features.
#[derive(Clone)]
pub struct MlpValueFn<S, A> {
    features: Arc<dyn FeatureMap<S, A>>,
    net: Mlp,
    clip: Option<(f64, f64)>,
}

impl<S, A> MlpValueFn<S, A> {
    pub fn new(features: Arc<dyn FeatureMap<S, A>>, net: Mlp) -> Self {
        assert_eq!(features.dim(), net.shape()[0]);
        assert_eq!(net.shape()[3], 1);
        Self { features, net, clip: None }
    }

    pub fn with_clip(mut self, clip: Option<(f64, f64)>) -> Self {
        self.clip = clip;
        self
    }

    pub fn features(&self) -> &Arc<dyn FeatureMap<S, A>> {
        &self.features
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn apply_clip(&self, v: f64) -> f64 {
        match self.clip {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    pub fn predict_features(&self, x: &Array2<f64>) -> Array1<f64> {
        let out = self.net.forward(x);
        out.column(0).mapv(|v| self.apply_clip(v))
    }
}

impl<S, A> StateActionValue<S, A> for MlpValueFn<S, A> {
    fn value(&self, state: &S, action: &A) -> f64 {
        let x = self.features.eval(state, action);
        self.apply_clip(self.net.forward_one(&x)[0])
    }
}
