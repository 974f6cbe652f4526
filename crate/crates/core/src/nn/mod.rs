//! Small dense-math toolkit shared by the tokenizer and the reasoner:
//! parameter traversal, activations, normalization, initializers,
//! optimizers and a finite-difference gradient checker.

pub mod gradcheck;
pub mod optim;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A bundle of named 2-D parameter arrays visited in a fixed order.
///
/// Gradients are stored in a value of the same type, so every traversal of a
/// parameter set and of its gradient yields identical name sequences.
pub trait Params {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Array2<f64>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Array2<f64>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, a| n += a.len());
        n
    }

    fn fill_zero(&mut self) {
        self.visit_mut(&mut |_, a| a.fill(0.0));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, a| ok &= a.iter().all(|v| v.is_finite()));
        ok
    }
}

/// `dst[name] += scale * src[name]` for every parameter.
pub fn accumulate<P: Params + ?Sized>(dst: &mut P, src: &P, scale: f64) {
    let mut arrays = Vec::new();
    src.visit(&mut |_, a| arrays.push(a));
    let mut i = 0;
    dst.visit_mut(&mut |_, d| {
        d.scaled_add(scale, arrays[i]);
        i += 1;
    });
}

pub fn scale_all<P: Params + ?Sized>(p: &mut P, s: f64) {
    p.visit_mut(&mut |_, a| a.mapv_inplace(|v| v * s));
}

pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("std must be positive");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Gaussian init with std `1/sqrt(fan_in)`.
pub fn init_linear(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    randn(fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub const RMS_EPS: f64 = 1e-6;

/// Row-wise RMS normalization with a learned gain (`gain` is `1 x width`).
/// Returns the output and each row's reciprocal RMS for the backward pass.
pub fn rmsnorm(x: &Array2<f64>, gain: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let width = x.ncols() as f64;
    let mut out = x.clone();
    let mut inv = Vec::with_capacity(x.nrows());
    for mut row in out.axis_iter_mut(Axis(0)) {
        let ms = row.iter().map(|v| v * v).sum::<f64>() / width;
        let r = 1.0 / (ms + RMS_EPS).sqrt();
        inv.push(r);
        row.iter_mut()
            .zip(gain.row(0))
            .for_each(|(v, g)| *v *= r * g);
    }
    (out, inv)
}

/// Backward of [`rmsnorm`]: returns `dx` and accumulates into `dgain`.
pub fn rmsnorm_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    gain: &Array2<f64>,
    inv: &[f64],
    dgain: &mut Array2<f64>,
) -> Array2<f64> {
    let width = x.ncols() as f64;
    let mut dx = Array2::zeros(x.raw_dim());
    for (i, r) in inv.iter().enumerate() {
        let xr = x.row(i);
        let dyr = dy.row(i);
        let mut dot = 0.0;
        for k in 0..x.ncols() {
            let xhat = xr[k] * r;
            let dxhat = dyr[k] * gain[[0, k]];
            dgain[[0, k]] += dyr[k] * xhat;
            dot += dxhat * xhat;
        }
        let mean = dot / width;
        let mut dxr = dx.row_mut(i);
        for k in 0..x.ncols() {
            let xhat = xr[k] * r;
            let dxhat = dyr[k] * gain[[0, k]];
            dxr[k] = (dxhat - xhat * mean) * r;
        }
    }
    dx
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Mean softmax cross-entropy over rows of `logits` with the given target columns.
/// Returns the loss and `d loss / d logits`.
pub fn cross_entropy(logits: ArrayView2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let n = targets.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).to_vec();
        let ls = log_softmax(&row);
        loss -= ls[t];
        let mut g = grad.row_mut(i);
        for (k, l) in ls.iter().enumerate() {
            g[k] = l.exp() / n;
        }
        g[t] -= 1.0 / n;
    }
    (loss / n, grad)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cross_entropy_uniform_is_log_k() {
        let logits = Array2::<f64>::zeros((3, 256));
        let (loss, _) = cross_entropy(logits.view(), &[0, 5, 255]);
        assert!((loss - (256f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn rmsnorm_unit_gain_has_unit_rms() {
        let x = array![[3.0, -4.0, 0.0, 1.0]];
        let g = Array2::ones((1, 4));
        let (y, _) = rmsnorm(&x, &g);
        let ms = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((ms - 1.0).abs() < 1e-5);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
