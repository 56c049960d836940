//! Dense layers with hand-written backward passes. Row-major activations:
//! one row per sequence position.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const LN_EPS: f64 = 1e-5;

/// Borrowed view of one named parameter tensor.
pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// in × out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        let std = (2.0 / (inputs + outputs) as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        Linear {
            w: Array2::from_shape_fn((inputs, outputs), |_| normal.sample(rng)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `grad`, returns d/dx.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push(Tensor {
            name: format!("{prefix}.weight"),
            shape: self.w.shape().to_vec(),
            data: self.w.as_slice().expect("standard layout"),
        });
        out.push(Tensor {
            name: format!("{prefix}.bias"),
            shape: self.b.shape().to_vec(),
            data: self.b.as_slice().expect("standard layout"),
        });
    }

    pub fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w.as_slice_mut().expect("standard layout"));
        out.push(self.b.as_slice_mut().expect("standard layout"));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

pub struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNorm {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let n = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / n;
        let centered = x - &mean.insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gamma + &self.beta;
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LnCache, dy: &Array2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let n = dy.ncols() as f64;
        let dxhat = dy * &self.gamma;
        let mean_d = dxhat.sum_axis(Axis(1)) / n;
        let mean_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / n;
        let mut dx = dxhat;
        for (i, mut row) in dx.axis_iter_mut(Axis(0)).enumerate() {
            let xh = cache.xhat.row(i);
            let s = cache.inv_std[i];
            for (d, x) in row.iter_mut().zip(xh) {
                *d = s * (*d - mean_d[i] - x * mean_dx[i]);
            }
        }
        dx
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push(Tensor {
            name: format!("{prefix}.gamma"),
            shape: self.gamma.shape().to_vec(),
            data: self.gamma.as_slice().unwrap(),
        });
        out.push(Tensor {
            name: format!("{prefix}.beta"),
            shape: self.beta.shape().to_vec(),
            data: self.beta.as_slice().unwrap(),
        });
    }

    pub fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.gamma.as_slice_mut().unwrap());
        out.push(self.beta.as_slice_mut().unwrap());
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Tanh approximation of GELU (smooth everywhere, which keeps finite
/// difference checks well-conditioned).
pub fn gelu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
}

pub fn gelu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut out = dy.clone();
    out.zip_mut_with(x, |d, &v| {
        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
        *d *= 0.5 * (1.0 + t) + 0.5 * v * dt;
    });
    out
}

/// Row-wise softmax.
pub fn softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut out = s.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Given `a = softmax(s)` row-wise and d/da, returns d/ds.
pub fn softmax_rows_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let dot = (a * da).sum_axis(Axis(1));
    let mut ds = da - &dot.insert_axis(Axis(1));
    ds *= a;
    ds
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric<F: Fn(&Array2<f64>) -> f64>(f: F, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (i, j) = (idx / x.ncols(), idx % x.ncols());
            let mut p = x.clone();
            p[[i, j]] += h;
            let mut m = x.clone();
            m[[i, j]] -= h;
            g[[i, j]] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gelu_derivative() {
        let x = array![[-3.0, -0.5, 0.0], [0.3, 1.2, 4.0]];
        let w = array![[0.2, -1.0, 0.7], [1.5, 0.1, -0.4]];
        let analytic = gelu_backward(&x, &w);
        let num = numeric(|x| (gelu(x) * &w).sum(), &x);
        assert!((analytic - num).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)) < 1e-8);
    }

    #[test]
    fn layernorm_backward() {
        let mut ln = LayerNorm::new(4);
        ln.gamma = array![1.0, 0.5, -2.0, 1.5];
        ln.beta = array![0.1, 0.0, 0.3, -0.2];
        let x = array![[0.3, -1.0, 2.0, 0.5], [1.0, 1.1, -0.7, 0.0]];
        let w = array![[0.2, -1.0, 0.7, 0.3], [1.5, 0.1, -0.4, 2.0]];
        let (_, cache) = ln.forward(&x);
        let mut g = ln.zeros_like();
        let dx = ln.backward(&cache, &w, &mut g);
        let num = numeric(|x| (ln.forward(x).0 * &w).sum(), &x);
        assert!((dx - num).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)) < 1e-7);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backprop() {
        let s = array![[1.0, 2.0, 3.0], [-5.0, 0.0, 100.0]];
        let a = softmax_rows(&s);
        for row in a.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let w = array![[0.2, -1.0, 0.7], [1.5, 0.1, -0.4]];
        let s2 = array![[0.1, 0.4, -0.3], [1.0, 0.0, 0.5]];
        let ds = softmax_rows_backward(&softmax_rows(&s2), &w);
        let num = numeric(|s| (softmax_rows(s) * &w).sum(), &s2);
        assert!((ds - num).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)) < 1e-8);
    }
}
