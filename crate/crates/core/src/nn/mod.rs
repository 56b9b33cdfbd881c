//! From-scratch MLP binary classifier with hand-derived gradients.
//!
//! The network is `[d, hidden.., 1]` with ReLU hidden activations, inverted
//! dropout after each hidden layer, and a sigmoid output head trained on
//! mean binary cross-entropy. An optional diagonal affine *input scaling*
//! layer (`out = w ⊙ x + b`) can be attached; its parameters join the same
//! flat parameter vector as the dense layers and receive exact gradients, so
//! optimizer steps, gradient projection, and quadratic penalties treat them
//! like any other weight.
//!
//! Mode selection is by method: [`MlpModel::forward`] is the pure evaluation
//! pass (dropout disabled), while [`MlpModel::backward`] and
//! [`MlpModel::training_loss`] run in training mode and draw one fresh
//! dropout mask per call from the model's seeded generator (the mask is
//! reused by the backward pass of the same call).
//!
//! Flat parameter order, stable across the crate: scaling weights then
//! scaling biases (when attached), then for each dense layer its weight
//! matrix (row-major, output-major) followed by its bias vector.

mod adam;

pub use adam::AdamState;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` inside the loss so a
/// fully saturated sigmoid cannot produce an infinite cross-entropy.
const CLAMP: f64 = 1e-7;

/// Flat gradient over every trainable parameter, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGradient {
    values: Vec<f64>,
}

impl FlatGradient {
    pub fn from_vec(values: Vec<f64>) -> Self {
        FlatGradient { values }
    }

    pub fn zeros(len: usize) -> Self {
        FlatGradient {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// Diagonal affine layer: `out_j = w_j * x_j + b_j`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingLayer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ScalingLayer {
    /// Identity scaling (`w = 1`, `b = 0`) over `dim` features.
    pub fn identity(dim: usize) -> Self {
        ScalingLayer {
            weights: vec![1.0; dim],
            biases: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Applies the layer elementwise to every row of `x`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "scaling layer over {} features applied to {} columns",
                self.dim(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.weights[j] * *v + self.biases[j];
            }
        }
        Ok(out)
    }
}

/// Binary decision rule: class 1 exactly when the score strictly exceeds
/// the threshold, so a probability equal to `kappa` maps to class 0.
pub fn threshold(prob: f64, kappa: f64) -> u8 {
    u8::from(prob > kappa)
}

/// Mean binary cross-entropy with probability clamping.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::empty("bce_loss over zero predictions"));
    }
    if probs.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        total += if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
    }
    Ok(total / probs.len() as f64)
}

/// Multi-layer perceptron for binary classification.
#[derive(Debug, Clone)]
pub struct MlpModel {
    dims: Vec<usize>,
    /// Per dense layer: `out x in`, row-major (one contiguous row per output).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    scaling: Option<ScalingLayer>,
    dropout: f64,
    rng: ChaCha8Rng,
    rng_seed: u64,
}

impl MlpModel {
    /// Builds a network with He-uniform weights, zero biases, and no input
    /// scaling. `dims` is `[input, hidden.., 1]`; the final layer must be a
    /// single sigmoid unit.
    pub fn new(dims: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::contract(
                "a model needs an input and an output layer",
            ));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::contract(format!(
                "output layer must have exactly 1 unit, got {}",
                dims.last().unwrap()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::contract("layer sizes must be positive"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::contract(format!(
                "dropout rate {dropout} outside [0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 1..dims.len() {
            let (fan_in, fan_out) = (dims[l - 1], dims[l]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights,
            biases,
            scaling: None,
            dropout,
            rng,
            rng_seed: seed,
        })
    }

    /// Attaches an identity input-scaling layer whose parameters prepend the
    /// flat parameter vector and train jointly with the dense layers.
    pub fn attach_input_scaling(&mut self) {
        self.scaling = Some(ScalingLayer::identity(self.dims[0]));
    }

    pub fn has_scaling(&self) -> bool {
        self.scaling.is_some()
    }

    pub fn scaling(&self) -> Option<&ScalingLayer> {
        self.scaling.as_ref()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn param_count(&self) -> usize {
        let dense: usize = (1..self.dims.len())
            .map(|l| self.dims[l - 1] * self.dims[l] + self.dims[l])
            .sum();
        dense + self.scaling.as_ref().map_or(0, |s| 2 * s.dim())
    }

    /// Extracts every trainable parameter in canonical order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        if let Some(s) = &self.scaling {
            out.extend_from_slice(&s.weights);
            out.extend_from_slice(&s.biases);
        }
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Injects a flat parameter vector produced by [`MlpModel::flat_params`].
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, model expects {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &params[at..at + n];
            at += n;
            s
        };
        if let Some(s) = &mut self.scaling {
            let d = s.dim();
            s.weights.copy_from_slice(take(d));
            s.biases.copy_from_slice(take(d));
        }
        for l in 0..self.weights.len() {
            let wlen = self.weights[l].len();
            self.weights[l].copy_from_slice(take(wlen));
            let blen = self.biases[l].len();
            self.biases[l].copy_from_slice(take(blen));
        }
        Ok(())
    }

    /// Generator position, paired with the construction seed, pins down the
    /// dropout stream for exact snapshot/restore.
    pub fn rng_state(&self) -> (u64, u128) {
        (self.rng_seed, self.rng.get_word_pos())
    }

    pub fn set_rng_word_pos(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }

    /// Evaluation-mode forward pass: pure, dropout disabled. Returns the
    /// positive-class probability per row.
    pub fn forward(&self, batch: &Matrix) -> Result<Vec<f64>> {
        self.check_input(batch)?;
        let mut z = match &self.scaling {
            Some(s) => s.apply(batch)?,
            None => batch.clone(),
        };
        let last = self.weights.len() - 1;
        for l in 0..=last {
            let mut a = self.dense_forward(&z, l);
            if l < last {
                relu_inplace(a.data_mut());
                z = a;
            } else {
                return Ok(a.data().iter().map(|&t| sigmoid(t)).collect());
            }
        }
        unreachable!()
    }

    /// Convenience: evaluation forward followed by thresholding at `kappa`.
    pub fn predict(&self, batch: &Matrix, kappa: f64) -> Result<Vec<u8>> {
        Ok(self
            .forward(batch)?
            .into_iter()
            .map(|p| threshold(p, kappa))
            .collect())
    }

    /// Training-mode loss: draws one dropout mask (advancing the model's
    /// generator) and returns the mean clamped BCE. Cloning the model before
    /// each call replays the identical mask, which is what the
    /// finite-difference oracle relies on.
    pub fn training_loss(&mut self, batch: &Matrix, labels: &[u8]) -> Result<f64> {
        let trace = self.forward_training(batch)?;
        bce_loss(&trace.probs, labels)
    }

    /// Training-mode forward + exact analytic backward pass.
    ///
    /// Returns the mean BCE and its gradient with respect to every parameter
    /// in canonical flat order, including attached scaling parameters. One
    /// dropout mask is drawn per call and shared by both passes.
    pub fn backward(&mut self, batch: &Matrix, labels: &[u8]) -> Result<(f64, FlatGradient)> {
        if labels.len() != batch.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                labels.len(),
                batch.rows()
            )));
        }
        let trace = self.forward_training(batch)?;
        let loss = bce_loss(&trace.probs, labels)?;
        let n = batch.rows();
        let last = self.weights.len() - 1;

        // Gradient of mean BCE w.r.t. the logit: (p - y) / n per row.
        let mut delta = Matrix::zeros(n, 1);
        for i in 0..n {
            delta.row_mut(i)[0] = (trace.probs[i] - f64::from(labels[i])) / n as f64;
        }

        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();

        for l in (0..=last).rev() {
            // activations feeding layer l
            let z_prev = if l == 0 { &trace.input } else { &trace.z[l - 1] };
            let inn = self.dims[l];
            let out = self.dims[l + 1];
            for i in 0..n {
                let drow = delta.row(i);
                let zrow = z_prev.row(i);
                for o in 0..out {
                    let c = drow[o];
                    axpy(&mut grad_w[l][o * inn..(o + 1) * inn], c, zrow);
                    grad_b[l][o] += c;
                }
            }
            if l == 0 {
                // propagate into the scaling layer if present
                if self.scaling.is_some() {
                    let mut dz = Matrix::zeros(n, inn);
                    self.backprop_delta(&delta, l, &mut dz);
                    let mut gw = vec![0.0; inn];
                    let mut gb = vec![0.0; inn];
                    for i in 0..n {
                        let dzrow = dz.row(i);
                        let xrow = trace.raw_input.row(i);
                        for j in 0..inn {
                            gw[j] += dzrow[j] * xrow[j];
                            gb[j] += dzrow[j];
                        }
                    }
                    let mut flat = Vec::with_capacity(self.param_count());
                    flat.extend_from_slice(&gw);
                    flat.extend_from_slice(&gb);
                    for ll in 0..=last {
                        flat.extend_from_slice(&grad_w[ll]);
                        flat.extend_from_slice(&grad_b[ll]);
                    }
                    return Ok((loss, FlatGradient::from_vec(flat)));
                }
                break;
            }
            // delta for the previous hidden layer: through W, dropout, ReLU
            let mut dprev = Matrix::zeros(n, inn);
            self.backprop_delta(&delta, l, &mut dprev);
            let keep = 1.0 - self.dropout;
            for i in 0..n {
                let drow = dprev.row_mut(i);
                let arow = trace.a[l - 1].row(i);
                if let Some(masks) = &trace.masks {
                    let mrow = masks[l - 1].row(i);
                    for j in 0..inn {
                        drow[j] *= mrow[j] / keep * f64::from(arow[j] > 0.0);
                    }
                } else {
                    for j in 0..inn {
                        drow[j] *= f64::from(arow[j] > 0.0);
                    }
                }
            }
            delta = dprev;
        }

        let mut flat = Vec::with_capacity(self.param_count());
        for ll in 0..=last {
            flat.extend_from_slice(&grad_w[ll]);
            flat.extend_from_slice(&grad_b[ll]);
        }
        Ok((loss, FlatGradient::from_vec(flat)))
    }

    /// `dprev = delta @ W_l` (gradient w.r.t. the inputs of layer `l`).
    fn backprop_delta(&self, delta: &Matrix, l: usize, dprev: &mut Matrix) {
        let inn = self.dims[l];
        let out = self.dims[l + 1];
        let w = &self.weights[l];
        for i in 0..delta.rows() {
            let drow = delta.row(i);
            let prow = dprev.row_mut(i);
            for o in 0..out {
                axpy(prow, drow[o], &w[o * inn..(o + 1) * inn]);
            }
        }
    }

    fn dense_forward(&self, z: &Matrix, l: usize) -> Matrix {
        let inn = self.dims[l];
        let out = self.dims[l + 1];
        let w = &self.weights[l];
        let b = &self.biases[l];
        let mut a = Matrix::zeros(z.rows(), out);
        for i in 0..z.rows() {
            let zrow = z.row(i);
            let arow = a.row_mut(i);
            for o in 0..out {
                arow[o] = dot(zrow, &w[o * inn..(o + 1) * inn]) + b[o];
            }
        }
        a
    }

    fn forward_training(&mut self, batch: &Matrix) -> Result<Trace> {
        self.check_input(batch)?;
        let raw_input = batch.clone();
        let input = match &self.scaling {
            Some(s) => s.apply(batch)?,
            None => batch.clone(),
        };
        let last = self.weights.len() - 1;
        let n = batch.rows();
        let mut a_list = Vec::with_capacity(last);
        let mut z_list = Vec::with_capacity(last);
        let mut masks = if self.dropout > 0.0 {
            Some(Vec::with_capacity(last))
        } else {
            None
        };
        let mut z = input.clone();
        let probs;
        let mut l = 0;
        loop {
            let a = self.dense_forward(&z, l);
            if l == last {
                probs = a.data().iter().map(|&t| sigmoid(t)).collect();
                break;
            }
            let mut h = a.clone();
            relu_inplace(h.data_mut());
            if let Some(masks) = &mut masks {
                let keep = 1.0 - self.dropout;
                let mut mask = Matrix::zeros(n, self.dims[l + 1]);
                for i in 0..n {
                    let mrow = mask.row_mut(i);
                    let hrow = h.row_mut(i);
                    for j in 0..mrow.len() {
                        let keep_unit = self.rng.random::<f64>() >= self.dropout;
                        mrow[j] = f64::from(keep_unit);
                        hrow[j] *= mrow[j] / keep;
                    }
                }
                masks.push(mask);
            }
            a_list.push(a);
            z_list.push(h.clone());
            z = h;
            l += 1;
        }
        Ok(Trace {
            raw_input,
            input,
            a: a_list,
            z: z_list,
            masks,
            probs,
        })
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() == 0 {
            return Err(Error::empty("forward pass over an empty batch"));
        }
        if batch.cols() != self.dims[0] {
            return Err(Error::shape(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.dims[0]
            )));
        }
        Ok(())
    }
}

/// Intermediate activations of one training-mode forward pass.
struct Trace {
    raw_input: Matrix,
    /// Input after the scaling layer (equals `raw_input` when none attached).
    input: Matrix,
    /// Pre-activation per hidden layer.
    a: Vec<Matrix>,
    /// Post-ReLU, post-dropout output per hidden layer.
    z: Vec<Matrix>,
    /// Dropout masks per hidden layer (`None` when dropout is 0).
    masks: Option<Vec<Matrix>>,
    probs: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Four-accumulator dot product: fixed summation order, vectorizer-friendly.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `out += c * x`, elementwise.
fn axpy(out: &mut [f64], c: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += c * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn toy_labels(rows: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..rows).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect()
    }

    /// Central finite differences over the flat parameter vector; clones the
    /// model per evaluation so every pass replays the same dropout mask.
    fn fd_gradient(model: &MlpModel, batch: &Matrix, labels: &[u8], h: f64) -> Vec<f64> {
        let base = model.flat_params();
        (0..base.len())
            .map(|i| {
                let mut plus = base.clone();
                plus[i] += h;
                let mut m = model.clone();
                m.set_flat_params(&plus).unwrap();
                let lp = m.training_loss(batch, labels).unwrap();
                let mut minus = base.clone();
                minus[i] -= h;
                let mut m = model.clone();
                m.set_flat_params(&minus).unwrap();
                let lm = m.training_loss(batch, labels).unwrap();
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    /// Jitters every parameter (biases included) so no preactivation sits on
    /// the ReLU kink, where the loss is non-differentiable and central
    /// differences measure the kink average instead of either one-sided
    /// slope. Freshly built models have all-zero biases, which makes exact
    /// kink hits common: a fully-dead row zeroes the next preactivation.
    fn jitter_params(m: &mut MlpModel, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = m.flat_params();
        for v in &mut p {
            *v += rng.random_range(-0.3..0.3);
        }
        m.set_flat_params(&p).unwrap();
    }

    #[test]
    fn zero_parameters_output_one_half() {
        let mut m = MlpModel::new(&[3, 4, 1], 0.0, 0).unwrap();
        m.set_flat_params(&vec![0.0; m.param_count()]).unwrap();
        let probs = m.forward(&toy_batch(5, 3, 1)).unwrap();
        assert!(probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn evaluation_forward_is_pure() {
        let m = MlpModel::new(&[4, 8, 8, 1], 0.5, 3).unwrap();
        let batch = toy_batch(6, 4, 2);
        assert_eq!(m.forward(&batch).unwrap(), m.forward(&batch).unwrap());
    }

    #[test]
    fn hand_computed_two_layer_network() {
        let mut m = MlpModel::new(&[2, 2, 1], 0.0, 0).unwrap();
        // layer 1: W = [[1,0],[0,-1]], b = [0.5, 0.5]; layer 2: W = [[2,1]], b = [-1]
        m.set_flat_params(&[1.0, 0.0, 0.0, -1.0, 0.5, 0.5, 2.0, 1.0, -1.0])
            .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        // a1 = [1.5, -1.5] -> relu [1.5, 0] -> logit 2*1.5 - 1 = 2
        let p = m.forward(&x).unwrap()[0];
        assert!((p - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn bce_hand_values_and_clamping() {
        assert!((bce_loss(&[0.5], &[1]).unwrap() - 2.0f64.ln()).abs() < 1e-15);
        assert!((bce_loss(&[0.25], &[1]).unwrap() - 4.0f64.ln()).abs() < 1e-12);
        // saturated wrong prediction stays finite thanks to the clamp
        let l = bce_loss(&[0.0], &[1]).unwrap();
        assert!((l - (-(1e-7f64).ln())).abs() < 1e-9);
        assert!(l.is_finite());
        assert!(bce_loss(&[], &[]).is_err());
        assert!(bce_loss(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences_without_dropout() {
        for seed in 0..5u64 {
            let mut m = MlpModel::new(&[3, 4, 2, 1], 0.0, seed).unwrap();
            m.attach_input_scaling();
            jitter_params(&mut m, seed + 50);
            let batch = toy_batch(7, 3, seed + 100);
            let labels = toy_labels(7, seed + 200);
            let (_, grad) = m.clone().backward(&batch, &labels).unwrap();
            let fd = fd_gradient(&m, &batch, &labels, 1e-5);
            let err = max_rel_err(grad.as_slice(), &fd);
            assert!(err < 1e-6, "seed {seed}: max rel err {err}");
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences_with_dropout_active() {
        for seed in 0..3u64 {
            let mut m = MlpModel::new(&[3, 4, 4, 1], 0.5, seed).unwrap();
            jitter_params(&mut m, seed + 30);
            let batch = toy_batch(6, 3, seed + 10);
            let labels = toy_labels(6, seed + 20);
            // clones replay the same mask: analytic and FD see one function
            let (_, grad) = m.clone().backward(&batch, &labels).unwrap();
            let fd = fd_gradient(&m, &batch, &labels, 1e-5);
            let err = max_rel_err(grad.as_slice(), &fd);
            assert!(err < 1e-6, "seed {seed}: max rel err {err}");
        }
    }

    #[test]
    fn balanced_batch_with_zero_params_has_zero_output_bias_gradient() {
        let mut m = MlpModel::new(&[2, 3, 1], 0.0, 0).unwrap();
        m.set_flat_params(&vec![0.0; m.param_count()]).unwrap();
        let batch = toy_batch(8, 2, 5);
        let labels = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let (_, grad) = m.backward(&batch, &labels).unwrap();
        // all probs are exactly 0.5, so sum(p - y) = 0 at the output bias
        assert_eq!(*grad.as_slice().last().unwrap(), 0.0);
    }

    #[test]
    fn duplicated_batch_leaves_mean_gradient_unchanged() {
        let mut m = MlpModel::new(&[3, 5, 1], 0.0, 9).unwrap();
        let batch = toy_batch(4, 3, 1);
        let labels = toy_labels(4, 2);
        let (_, g1) = m.backward(&batch, &labels).unwrap();
        let mut doubled_rows: Vec<Vec<f64>> = Vec::new();
        for _ in 0..2 {
            for i in 0..batch.rows() {
                doubled_rows.push(batch.row(i).to_vec());
            }
        }
        let doubled = Matrix::from_rows(&doubled_rows).unwrap();
        let mut labels2 = labels.clone();
        labels2.extend_from_slice(&labels);
        let (_, g2) = m.backward(&doubled, &labels2).unwrap();
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn flat_params_roundtrip_is_identity() {
        let mut m = MlpModel::new(&[4, 6, 3, 1], 0.2, 7).unwrap();
        m.attach_input_scaling();
        let before = m.flat_params();
        assert_eq!(before.len(), m.param_count());
        m.set_flat_params(&before).unwrap();
        assert_eq!(m.flat_params(), before);
        assert!(m.set_flat_params(&before[1..]).is_err());
    }

    #[test]
    fn scaling_layer_prepends_parameters_and_starts_as_identity() {
        let mut m = MlpModel::new(&[3, 4, 1], 0.0, 1).unwrap();
        let without = m.param_count();
        let batch = toy_batch(5, 3, 3);
        let probs_before = m.forward(&batch).unwrap();
        m.attach_input_scaling();
        assert_eq!(m.param_count(), without + 6);
        assert_eq!(&m.flat_params()[..6], &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        // identity scaling leaves the function unchanged
        assert_eq!(m.forward(&batch).unwrap(), probs_before);
    }

    #[test]
    fn zero_dropout_training_loss_equals_evaluation_loss() {
        let mut m = MlpModel::new(&[3, 4, 1], 0.0, 2).unwrap();
        let batch = toy_batch(6, 3, 4);
        let labels = toy_labels(6, 5);
        let eval = bce_loss(&m.forward(&batch).unwrap(), &labels).unwrap();
        assert_eq!(m.training_loss(&batch, &labels).unwrap(), eval);
    }

    #[test]
    fn dropout_masks_change_the_training_pass() {
        let mut m = MlpModel::new(&[3, 16, 1], 0.5, 2).unwrap();
        let batch = toy_batch(4, 3, 4);
        let labels = toy_labels(4, 5);
        let eval = bce_loss(&m.forward(&batch).unwrap(), &labels).unwrap();
        let train = m.training_loss(&batch, &labels).unwrap();
        assert_ne!(eval, train);
        // successive calls draw fresh masks
        let train2 = m.training_loss(&batch, &labels).unwrap();
        assert_ne!(train, train2);
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(threshold(0.5, 0.5), 0);
        assert_eq!(threshold(0.5 + 1e-12, 0.5), 1);
        assert_eq!(threshold(0.49, 0.5), 0);
        assert_eq!(threshold(0.99, 0.5), 1);
    }

    #[test]
    fn input_shape_errors() {
        let m = MlpModel::new(&[3, 4, 1], 0.0, 0).unwrap();
        assert!(m.forward(&Matrix::with_cols(3)).is_err());
        assert!(m.forward(&toy_batch(2, 4, 0)).is_err());
        assert!(MlpModel::new(&[3, 4, 2], 0.0, 0).is_err());
        assert!(MlpModel::new(&[3], 0.0, 0).is_err());
        assert!(MlpModel::new(&[3, 4, 1], 1.0, 0).is_err());
    }
}
