//! One-hidden-layer ReLU network with softmax cross-entropy and exact
//! reverse-mode gradients with respect to both parameters and input.
//!
//! Parameters live in one flat buffer in the order W1, b1, W2, b2 (row-major
//! weights, `W1` is `hidden × d_in`, `W2` is `n_classes × hidden`). Class ids
//! passed in and returned are 1-based.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::ClassId;
use crate::linalg::{axpy, dot};

pub const DEFAULT_HIDDEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpDims {
    pub d_in: usize,
    pub hidden: usize,
    pub n_classes: usize,
}

impl MlpDims {
    pub fn new(d_in: usize, hidden: usize, n_classes: usize) -> Result<Self> {
        if d_in == 0 || hidden == 0 || n_classes < 2 {
            return Err(Error::invalid("network needs d_in >= 1, hidden >= 1 and at least 2 classes"));
        }
        Ok(MlpDims { d_in, hidden, n_classes })
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.d_in + self.hidden + self.n_classes * self.hidden + self.n_classes
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.d_in;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        [w1, b1, w2, b2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: MlpDims,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrads {
    pub loss: f64,
    /// Gradient with respect to the flat parameter buffer.
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Cached forward pass.
struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(dims: MlpDims) -> Self {
        MlpModel { dims, params: vec![0.0; dims.n_params()] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: MlpDims, rng: &mut R) -> Self {
        let mut m = Self::zeros(dims);
        let l1 = libm::sqrt(6.0 / (dims.d_in + dims.hidden) as f64);
        let l2 = libm::sqrt(6.0 / (dims.hidden + dims.n_classes) as f64);
        m.w1_mut().iter_mut().for_each(|w| *w = rng.random_range(-l1..l1));
        m.w2_mut().iter_mut().for_each(|w| *w = rng.random_range(-l2..l2));
        m
    }

    pub fn from_params(dims: MlpDims, params: Vec<f64>) -> Result<Self> {
        check_dim(dims.n_params(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(MlpModel { dims, params })
    }

    pub fn dims(&self) -> MlpDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        let [w1, b1, _, _] = self.dims.offsets();
        &self.params[w1..b1]
    }

    pub fn b1(&self) -> &[f64] {
        let [_, b1, w2, _] = self.dims.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let [_, _, w2, b2] = self.dims.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let [_, _, _, b2] = self.dims.offsets();
        &self.params[b2..]
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        let [w1, b1, _, _] = self.dims.offsets();
        &mut self.params[w1..b1]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let [_, b1, w2, _] = self.dims.offsets();
        &mut self.params[b1..w2]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let [_, _, w2, b2] = self.dims.offsets();
        &mut self.params[w2..b2]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let [_, _, _, b2] = self.dims.offsets();
        &mut self.params[b2..]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dims.d_in, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    fn class_index(&self, y: ClassId) -> Result<usize> {
        if y == 0 || y as usize > self.dims.n_classes {
            return Err(Error::invalid(format!("class {y} outside 1..={}", self.dims.n_classes)));
        }
        Ok(y as usize - 1)
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let MlpDims { d_in, hidden, n_classes } = self.dims;
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let pre: Vec<f64> = (0..hidden).map(|j| dot(&w1[j * d_in..(j + 1) * d_in], x) + b1[j]).collect();
        let h: Vec<f64> = pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let logits = (0..n_classes).map(|c| dot(&w2[c * hidden..(c + 1) * hidden], &h) + b2[c]).collect();
        Activations { pre, hidden: h, logits }
    }

    /// `W2 · relu(W1 · x + b1) + b2`
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).logits)
    }

    /// Hidden-layer pre-activations, exposed for kink-aware gradient checks.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).pre)
    }

    /// Arg-max class; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        let z = self.forward(x)?;
        let mut best = 0;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        Ok(best as ClassId + 1)
    }

    pub fn loss(&self, x: &[f64], y: ClassId) -> Result<f64> {
        let yi = self.class_index(y)?;
        let z = self.forward(x)?;
        Ok(log_sum_exp(&z) - z[yi])
    }

    /// Cross-entropy and the gradient with respect to the input only.
    pub fn loss_and_input_grad(&self, x: &[f64], y: ClassId) -> Result<(f64, Vec<f64>)> {
        let yi = self.class_index(y)?;
        self.check_input(x)?;
        let act = self.activations(x);
        let (loss, dpre) = self.backward_hidden(&act, yi);
        let d_in = self.dims.d_in;
        let w1 = self.w1();
        let mut gx = vec![0.0; d_in];
        for (j, &g) in dpre.iter().enumerate() {
            if g != 0.0 {
                axpy(g, &w1[j * d_in..(j + 1) * d_in], &mut gx);
            }
        }
        Ok((loss, gx))
    }

    pub fn loss_and_grads(&self, x: &[f64], y: ClassId) -> Result<LossAndGrads> {
        let mut params = vec![0.0; self.dims.n_params()];
        let yi = self.class_index(y)?;
        self.check_input(x)?;
        let (loss, input) = self.accumulate(x, yi, 1.0, &mut params, true);
        Ok(LossAndGrads { loss, params, input })
    }

    /// Adds `scale ·` parameter gradient of one example into `grads` and
    /// returns the example's loss.
    pub fn accumulate_param_grads(&self, x: &[f64], y: ClassId, scale: f64, grads: &mut [f64]) -> Result<f64> {
        check_dim(self.dims.n_params(), grads.len())?;
        let yi = self.class_index(y)?;
        self.check_input(x)?;
        Ok(self.accumulate(x, yi, scale, grads, false).0)
    }

    /// Mean loss and mean parameter gradient over a batch.
    pub fn batch_loss_and_grads<'a, I>(&self, batch: I) -> Result<(f64, Vec<f64>)>
    where
        I: IntoIterator<Item = (&'a [f64], ClassId)>,
    {
        let items: Vec<(&[f64], ClassId)> = batch.into_iter().collect();
        if items.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / items.len() as f64;
        let mut grads = vec![0.0; self.dims.n_params()];
        let mut loss = 0.0;
        for (x, y) in items {
            loss += self.accumulate_param_grads(x, y, scale, &mut grads)?;
        }
        Ok((loss * scale, grads))
    }

    /// Softmax cross-entropy loss and its gradient at the hidden
    /// pre-activations. ReLU'(0) is taken as 0.
    fn backward_hidden(&self, act: &Activations, yi: usize) -> (f64, Vec<f64>) {
        let MlpDims { hidden, .. } = self.dims;
        let lse = log_sum_exp(&act.logits);
        let loss = lse - act.logits[yi];
        let mut dz: Vec<f64> = act.logits.iter().map(|&z| libm::exp(z - lse)).collect();
        dz[yi] -= 1.0;
        let w2 = self.w2();
        let mut dpre = vec![0.0; hidden];
        for (c, &g) in dz.iter().enumerate() {
            axpy(g, &w2[c * hidden..(c + 1) * hidden], &mut dpre);
        }
        for (d, &p) in dpre.iter_mut().zip(&act.pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        (loss, dpre)
    }

    fn accumulate(&self, x: &[f64], yi: usize, scale: f64, grads: &mut [f64], want_input: bool) -> (f64, Vec<f64>) {
        let MlpDims { d_in, hidden, .. } = self.dims;
        let act = self.activations(x);
        let lse = log_sum_exp(&act.logits);
        let loss = lse - act.logits[yi];
        let mut dz: Vec<f64> = act.logits.iter().map(|&z| libm::exp(z - lse)).collect();
        dz[yi] -= 1.0;

        let [o_w1, o_b1, o_w2, o_b2] = self.dims.offsets();
        let w2 = self.w2();
        let mut dpre = vec![0.0; hidden];
        for (c, &g) in dz.iter().enumerate() {
            axpy(g, &w2[c * hidden..(c + 1) * hidden], &mut dpre);
            axpy(scale * g, &act.hidden, &mut grads[o_w2 + c * hidden..o_w2 + (c + 1) * hidden]);
            grads[o_b2 + c] += scale * g;
        }
        for (d, &p) in dpre.iter_mut().zip(&act.pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        let w1 = self.w1();
        let mut gx = if want_input { vec![0.0; d_in] } else { Vec::new() };
        for (j, &g) in dpre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(scale * g, x, &mut grads[o_w1 + j * d_in..o_w1 + (j + 1) * d_in]);
            grads[o_b1 + j] += scale * g;
            if want_input {
                axpy(g, &w1[j * d_in..(j + 1) * d_in], &mut gx);
            }
        }
        (loss, gx)
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + libm::log(z.iter().map(|&v| libm::exp(v - m)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, INIT};

    fn identity_model(n: usize) -> MlpModel {
        let dims = MlpDims::new(n, n, n).unwrap();
        let mut m = MlpModel::zeros(dims);
        for i in 0..n {
            m.w1_mut()[i * n + i] = 1.0;
            m.w2_mut()[i * n + i] = 1.0;
        }
        m
    }

    #[test]
    fn zero_model_gives_zero_logits_and_log_c_loss() {
        let m = MlpModel::zeros(MlpDims::new(4, 10, 3).unwrap());
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
        let l = m.loss(&[1.0, -2.0, 3.0, 0.5], 2).unwrap();
        assert!((l - libm::log(3.0)).abs() < 1e-15);
    }

    #[test]
    fn identity_passes_nonnegative_input() {
        let m = identity_model(3);
        assert_eq!(m.forward(&[0.5, 0.0, 2.0]).unwrap(), vec![0.5, 0.0, 2.0]);
        assert_eq!(m.predict(&[0.5, 0.0, 2.0]).unwrap(), 3);
    }

    #[test]
    fn saturated_softmax_has_tiny_input_gradient() {
        let m = identity_model(2);
        let (loss, g) = m.loss_and_input_grad(&[60.0, 0.0], 1).unwrap();
        assert!(loss < 1e-20);
        assert!(crate::linalg::Norm::L2.norm(&g) < 1e-20);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MlpModel::zeros(MlpDims::new(2, 3, 2).unwrap());
        assert!(matches!(m.forward(&[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert!(matches!(m.forward(&[0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(m.loss(&[0.0, 0.0], 3).is_err());
        assert!(m.loss(&[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn input_gradient_paths_agree() {
        let mut rng = substream(1, INIT);
        let m = MlpModel::init(MlpDims::new(7, 20, 3).unwrap(), &mut rng);
        let x: Vec<f64> = (0..7).map(|i| i as f64 * 0.3 - 1.0).collect();
        let full = m.loss_and_grads(&x, 2).unwrap();
        let (l, g) = m.loss_and_input_grad(&x, 2).unwrap();
        assert_eq!(full.loss, l);
        assert_eq!(full.input, g);
    }

    #[test]
    fn batch_gradient_is_mean_of_singles() {
        let mut rng = substream(2, INIT);
        let m = MlpModel::init(MlpDims::new(3, 8, 2).unwrap(), &mut rng);
        let xs = [[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]];
        let (loss, g) = m.batch_loss_and_grads([(&xs[0][..], 1), (&xs[1][..], 2)]).unwrap();
        let a = m.loss_and_grads(&xs[0], 1).unwrap();
        let b = m.loss_and_grads(&xs[1], 2).unwrap();
        assert!((loss - 0.5 * (a.loss + b.loss)).abs() < 1e-15);
        for i in 0..g.len() {
            assert!((g[i] - 0.5 * (a.params[i] + b.params[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let dims = MlpDims::new(12, 100, 2).unwrap();
        let a = MlpModel::init(dims, &mut substream(5, INIT));
        let b = MlpModel::init(dims, &mut substream(5, INIT));
        assert_eq!(a, b);
        let l1 = libm::sqrt(6.0 / 112.0);
        assert!(a.w1().iter().all(|w| w.abs() <= l1));
        assert!(a.b1().iter().all(|&b| b == 0.0));
    }
}
