//! Plain MLP binary classifier with deterministic SGD training.
//!
//! Models are immutable values holding a flat `f64` parameter vector
//! (layer-major, row-major within each weight matrix, biases after weights).
//! The flat view is the unit of exchange between clients and server: a client
//! update is `trained - base`, and aggregation applies `base + eta * update`.
//! All arithmetic is 64-bit and single-threaded, so a fixed seed pins the
//! result bit-for-bit.

use ndarray::Array2;
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat parameter-difference (or gradient) vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateVector {
    pub values: Vec<f64>,
}

impl UpdateVector {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Local-training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Multi-layer perceptron: ReLU hidden layers, 2-way softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    dims: Vec<usize>,
    params: Vec<f64>,
}

fn param_count_for(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpModel {
    /// Xavier-uniform initialization, deterministic in `seed`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "need at least input and output dims, got {:?}",
                dims
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("zero-width layer in {:?}", dims)));
        }
        if *dims.last().unwrap() != 2 {
            return Err(Error::Config(format!(
                "output layer must have width 2 (binary softmax), got {:?}",
                dims
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count_for(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let u: f64 = rng.random();
                params.push((2.0 * u - 1.0) * bound);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out)); // biases
        }
        Ok(Self { dims: dims.to_vec(), params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Flat parameter vector, layer-major (weights row-major, then biases).
    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn from_flat(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        if params.len() != param_count_for(dims) {
            return Err(Error::Config(format!(
                "parameter length {} does not match dims {:?} (expect {})",
                params.len(),
                dims,
                param_count_for(dims)
            )));
        }
        Ok(Self { dims: dims.to_vec(), params })
    }

    pub fn checkpoint_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            version: 1,
            dims: self.dims.clone(),
            params: self.params.clone(),
        })
        .expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad checkpoint: {e}")))?;
        if ck.version != 1 {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        Self::from_flat(&ck.dims, ck.params)
    }

    fn same_arch(&self, other: &Self) -> bool {
        self.dims == other.dims
    }

    /// Forward pass over a batch; rows of the result are softmax probabilities.
    pub fn forward(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.dims[0] {
            return Err(Error::Config(format!(
                "input width {} != model input dim {}",
                inputs.ncols(),
                self.dims[0]
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in forward input".into()));
        }
        let n = inputs.nrows();
        let out_dim = *self.dims.last().unwrap();
        let mut out = Array2::zeros((n, out_dim));
        let mut scratch = Scratch::new(&self.dims);
        for i in 0..n {
            let row: Vec<f64> = inputs.row(i).iter().copied().collect();
            self.forward_row(&row, &mut scratch);
            let probs = &scratch.acts[self.dims.len() - 1];
            for (j, &p) in probs.iter().enumerate() {
                out[[i, j]] = p;
            }
        }
        Ok(out)
    }

    /// Hard predictions: argmax with ties broken toward class 0.
    pub fn predict(&self, inputs: &Array2<f64>) -> Result<Vec<u8>> {
        let probs = self.forward(inputs)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| u8::from(r[1] > r[0]))
            .collect())
    }

    fn forward_row(&self, input: &[f64], scratch: &mut Scratch) {
        scratch.acts[0].copy_from_slice(input);
        let n_layers = self.dims.len() - 1;
        let mut off = 0usize;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let (prev, next) = scratch.acts_pair(l);
            for o in 0..fan_out {
                let mut z = b[o];
                let wrow = &w[o * fan_in..(o + 1) * fan_in];
                for (wi, xi) in wrow.iter().zip(prev.iter()) {
                    z += wi * xi;
                }
                next[o] = z;
            }
            if l != n_layers - 1 {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            } else {
                softmax_in_place(next);
            }
        }
    }

    /// `new - base` in flat order.
    pub fn compute_update(new: &Self, base: &Self) -> Result<UpdateVector> {
        if !new.same_arch(base) {
            return Err(Error::Aggregation(format!(
                "architecture mismatch: {:?} vs {:?}",
                new.dims, base.dims
            )));
        }
        Ok(UpdateVector {
            values: new
                .params
                .iter()
                .zip(&base.params)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `base + eta * update`.
    pub fn apply_update(base: &Self, update: &UpdateVector, eta: f64) -> Result<Self> {
        if update.len() != base.params.len() {
            return Err(Error::Aggregation(format!(
                "update length {} != parameter count {}",
                update.len(),
                base.params.len()
            )));
        }
        let params = base
            .params
            .iter()
            .zip(&update.values)
            .map(|(p, g)| p + eta * g)
            .collect();
        Ok(Self { dims: base.dims.clone(), params })
    }
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(dims: &[usize]) -> Self {
        Self {
            acts: dims.iter().map(|&d| vec![0.0; d]).collect(),
            deltas: dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    /// Split borrow: activations of layer `l` (read) and `l + 1` (write).
    fn acts_pair(&mut self, l: usize) -> (&[f64], &mut [f64]) {
        let (a, b) = self.acts.split_at_mut(l + 1);
        (&a[l], &mut b[0])
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Gradient of the weighted cross-entropy over the given rows, plus the loss.
///
/// Weighted mean semantics: grad and loss are divided by the total weight, so
/// giving a row weight k is exactly equivalent to duplicating it k times. A
/// zero total weight yields a zero gradient and zero loss.
fn grad_on_rows(
    model: &MlpModel,
    inputs: &Array2<f64>,
    labels: &[u8],
    weights: Option<&[f64]>,
    rows: &[usize],
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    let dims = &model.dims;
    let n_layers = dims.len() - 1;
    grad.fill(0.0);
    let mut loss = 0.0;
    let mut total_w = 0.0;

    for &r in rows {
        let w_r = weights.map_or(1.0, |w| w[r]);
        if w_r == 0.0 {
            continue;
        }
        total_w += w_r;
        let row: Vec<f64> = inputs.row(r).iter().copied().collect();
        model.forward_row(&row, scratch);
        let y = labels[r] as usize;
        let p = scratch.acts[n_layers][y];
        loss -= w_r * p.ln();

        // Output delta: softmax + cross-entropy.
        for (j, d) in scratch.deltas[n_layers].iter_mut().enumerate() {
            *d = scratch.acts[n_layers][j] - if j == y { 1.0 } else { 0.0 };
        }

        let mut off_end = model.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let w_off = off_end - fan_in * fan_out - fan_out;
            let b_off = w_off + fan_in * fan_out;
            off_end = w_off;
            // Split so we can read deltas[l+1] while writing deltas[l].
            let (lower, upper) = scratch.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let prev_act = &scratch.acts[l];
            for o in 0..fan_out {
                let d = delta[o] * w_r;
                let grow = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (g, a) in grow.iter_mut().zip(prev_act.iter()) {
                    *g += d * a;
                }
                grad[b_off + o] += d;
            }
            if l > 0 {
                let dprev = &mut lower[l];
                let wmat = &model.params[w_off..w_off + fan_in * fan_out];
                for i in 0..fan_in {
                    // ReLU derivative: active iff the activation is positive.
                    // Deltas stay unweighted; w_r enters only at accumulation.
                    if prev_act[i] > 0.0 {
                        let mut s = 0.0;
                        for o in 0..fan_out {
                            s += wmat[o * fan_in + i] * delta[o];
                        }
                        dprev[i] = s;
                    } else {
                        dprev[i] = 0.0;
                    }
                }
            }
        }
    }

    if total_w > 0.0 {
        for g in grad.iter_mut() {
            *g /= total_w;
        }
        loss /= total_w;
    }
    loss
}

/// Analytic gradient of the (weighted) cross-entropy over a full batch.
pub fn gradient(
    model: &MlpModel,
    inputs: &Array2<f64>,
    labels: &[u8],
    weights: Option<&[f64]>,
) -> Result<UpdateVector> {
    check_training_inputs(model, inputs, labels, weights)?;
    let rows: Vec<usize> = (0..inputs.nrows()).collect();
    let mut grad = vec![0.0; model.param_count()];
    let mut scratch = Scratch::new(&model.dims);
    grad_on_rows(model, inputs, labels, weights, &rows, &mut grad, &mut scratch);
    Ok(UpdateVector { values: grad })
}

fn check_training_inputs(
    model: &MlpModel,
    inputs: &Array2<f64>,
    labels: &[u8],
    weights: Option<&[f64]>,
) -> Result<()> {
    if inputs.nrows() == 0 {
        return Err(Error::Data("empty training data".into()));
    }
    if inputs.ncols() != model.input_dim() {
        return Err(Error::Config(format!(
            "input width {} != model input dim {}",
            inputs.ncols(),
            model.input_dim()
        )));
    }
    if labels.len() != inputs.nrows() {
        return Err(Error::Data(format!(
            "label count {} != row count {}",
            labels.len(),
            inputs.nrows()
        )));
    }
    if let Some(w) = weights {
        if w.len() != inputs.nrows() {
            return Err(Error::Data(format!(
                "weight count {} != row count {}",
                w.len(),
                inputs.nrows()
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data("sample weights must be finite and >= 0".into()));
        }
    }
    Ok(())
}

/// Mini-batch SGD on (weighted) cross-entropy for `cfg.epochs` epochs.
///
/// The starting model is untouched; the shuffle order is fixed by `cfg.seed`.
pub fn train_local(
    start: &MlpModel,
    inputs: &Array2<f64>,
    labels: &[u8],
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
) -> Result<MlpModel> {
    cfg.validate()?;
    check_training_inputs(start, inputs, labels, weights)?;

    let mut model = start.clone();
    let n = inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad = vec![0.0; model.param_count()];
    let mut scratch = Scratch::new(&model.dims);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let loss =
                grad_on_rows(&model, inputs, labels, weights, batch, &mut grad, &mut scratch);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_inputs(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpModel::init(&[10, 64, 2], 7).unwrap();
        let b = MlpModel::init(&[10, 64, 2], 7).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        let c = MlpModel::init(&[10, 64, 2], 8).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn param_count_matches_arithmetic() {
        let m = MlpModel::init(&[10, 64, 2], 0).unwrap();
        assert_eq!(m.param_count(), 10 * 64 + 64 + 64 * 2 + 2); // 834
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(MlpModel::init(&[3], 0).is_err());
        assert!(MlpModel::init(&[3, 4, 3], 0).is_err()); // output must be 2
        assert!(MlpModel::init(&[0, 2], 0).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let m = MlpModel::from_flat(&[4, 2], vec![0.0; 4 * 2 + 2]).unwrap();
        let out = m.forward(&toy_inputs(5, 4, 1)).unwrap();
        for row in out.rows() {
            assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(row[1], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rows_are_probabilities() {
        let m = MlpModel::init(&[6, 8, 2], 3).unwrap();
        let out = m.forward(&toy_inputs(40, 6, 2)).unwrap();
        for row in out.rows() {
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn forward_rejects_non_finite() {
        let m = MlpModel::init(&[2, 2], 0).unwrap();
        let bad = array![[f64::NAN, 0.0]];
        assert!(matches!(m.forward(&bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn logistic_toy_matches_sigmoid() {
        // One input, two outputs with first logit pinned at zero reduces the
        // softmax to a plain sigmoid of (w x + b).
        let (w, b) = (1.7, -0.3);
        let m = MlpModel::from_flat(&[1, 2], vec![0.0, w, 0.0, b]).unwrap();
        for i in -20..=20 {
            let x = i as f64 / 4.0;
            let out = m.forward(&array![[x]]).unwrap();
            let sig = 1.0 / (1.0 + (-(w * x + b)).exp());
            assert_abs_diff_eq!(out[[0, 1]], sig, epsilon = 1e-9);
        }
    }

    fn separable_toy(n: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = u8::from(i % 2 == 0);
            let cx = if label == 1 { 1.5 } else { -1.5 };
            x[[i, 0]] = cx + rng.random::<f64>() - 0.5;
            x[[i, 1]] = rng.random::<f64>() - 0.5;
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn trains_separable_toy() {
        let (x, y) = separable_toy(200, 11);
        let m0 = MlpModel::init(&[2, 8, 2], 5).unwrap();
        let cfg = TrainConfig { epochs: 30, batch_size: 16, learning_rate: 0.2, seed: 9 };
        let m = train_local(&m0, &x, &y, None, &cfg).unwrap();
        let preds = m.predict(&x).unwrap();
        let acc = preds.iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64;
        assert!(acc >= 0.95, "train accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic_and_pure() {
        let (x, y) = separable_toy(64, 2);
        let m0 = MlpModel::init(&[2, 4, 2], 1).unwrap();
        let before = m0.flatten();
        let cfg = TrainConfig { epochs: 3, batch_size: 8, learning_rate: 0.1, seed: 4 };
        let a = train_local(&m0, &x, &y, None, &cfg).unwrap();
        let b = train_local(&m0, &x, &y, None, &cfg).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(m0.flatten(), before); // start model unmodified
    }

    #[test]
    fn uniform_weights_match_unweighted() {
        let (x, y) = separable_toy(48, 3);
        let m0 = MlpModel::init(&[2, 4, 2], 1).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 8, learning_rate: 0.1, seed: 4 };
        let unweighted = train_local(&m0, &x, &y, None, &cfg).unwrap();
        let ones = vec![1.0; y.len()];
        let twos = vec![2.0; y.len()];
        let w1 = train_local(&m0, &x, &y, Some(&ones), &cfg).unwrap();
        let w2 = train_local(&m0, &x, &y, Some(&twos), &cfg).unwrap();
        assert_eq!(unweighted.flatten(), w1.flatten());
        assert_eq!(unweighted.flatten(), w2.flatten());
    }

    #[test]
    fn full_batch_matches_direct_gradient_descent() {
        let (x, y) = separable_toy(32, 6);
        let m0 = MlpModel::init(&[2, 4, 2], 2).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 1000, learning_rate: 0.3, seed: 0 };
        let sgd = train_local(&m0, &x, &y, None, &cfg).unwrap();

        let mut direct = m0.clone();
        for _ in 0..cfg.epochs {
            let g = gradient(&direct, &x, &y, None).unwrap();
            direct = MlpModel::apply_update(&direct, &g, -cfg.learning_rate).unwrap();
        }
        for (a, b) in sgd.flatten().iter().zip(direct.flatten()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = toy_inputs(16, 4, 8);
        let y: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let m = MlpModel::init(&[4, 8, 2], 3).unwrap();
        let analytic = gradient(&m, &x, &y, None).unwrap();

        let loss_of = |params: Vec<f64>| -> f64 {
            let mm = MlpModel::from_flat(&[4, 8, 2], params).unwrap();
            let probs = mm.forward(&x).unwrap();
            let mut l = 0.0;
            for (i, &yi) in y.iter().enumerate() {
                l -= probs[[i, yi as usize]].ln();
            }
            l / y.len() as f64
        };

        let h = 1e-4;
        let base = m.flatten();
        let mut worst = 0.0f64;
        for k in 0..base.len() {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (loss_of(up) - loss_of(dn)) / (2.0 * h);
            let an = analytic.values[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_weight_batch_gives_zero_gradient() {
        let x = toy_inputs(4, 3, 1);
        let y = vec![0, 1, 0, 1];
        let m = MlpModel::init(&[3, 2], 0).unwrap();
        let g = gradient(&m, &x, &y, Some(&[0.0; 4])).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_two_equals_duplication() {
        let x = array![[0.3, -0.2], [0.9, 0.1]];
        let y = vec![1u8, 0u8];
        let m = MlpModel::init(&[2, 3, 2], 5).unwrap();
        let weighted = gradient(&m, &x, &y, Some(&[2.0, 1.0])).unwrap();

        let xdup = array![[0.3, -0.2], [0.3, -0.2], [0.9, 0.1]];
        let ydup = vec![1u8, 1u8, 0u8];
        let dup = gradient(&m, &xdup, &ydup, None).unwrap();
        for (a, b) in weighted.values.iter().zip(&dup.values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn update_roundtrip() {
        let base = MlpModel::init(&[3, 4, 2], 1).unwrap();
        let new = MlpModel::init(&[3, 4, 2], 2).unwrap();
        let g = MlpModel::compute_update(&new, &base).unwrap();
        let rebuilt = MlpModel::apply_update(&base, &g, 1.0).unwrap();
        for (a, b) in rebuilt.flatten().iter().zip(new.flatten()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let zero = MlpModel::compute_update(&base, &base).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_built_difference() {
        let a = MlpModel::from_flat(&[1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = MlpModel::from_flat(&[1, 2], vec![0.5, 1.0, 1.5, 2.0]).unwrap();
        let g = MlpModel::compute_update(&a, &b).unwrap();
        assert_eq!(g.values, vec![0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn update_rejects_arch_mismatch() {
        let a = MlpModel::init(&[3, 4, 2], 1).unwrap();
        let b = MlpModel::init(&[3, 5, 2], 1).unwrap();
        assert!(MlpModel::compute_update(&a, &b).is_err());
        let g = UpdateVector::zeros(7);
        assert!(MlpModel::apply_update(&a, &g, 1.0).is_err());
    }

    #[test]
    fn flatten_unflatten_roundtrip() {
        for dims in [vec![2, 2], vec![5, 3, 2], vec![4, 8, 8, 2]] {
            let m = MlpModel::init(&dims, 42).unwrap();
            let rt = MlpModel::from_flat(&dims, m.flatten()).unwrap();
            assert_eq!(m, rt);
        }
        assert!(MlpModel::from_flat(&[2, 2], vec![0.0; 5]).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = MlpModel::init(&[4, 6, 2], 9).unwrap();
        let text = m.checkpoint_json();
        let rt = MlpModel::from_checkpoint_json(&text).unwrap();
        assert_eq!(m, rt);
    }
}
