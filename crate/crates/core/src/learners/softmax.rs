//! Softmax base learner trained by mini-batch gradient descent on
//! cross-entropy.
//!
//! The model is `softmax(A h(x) + b)`. Without a hidden layer `h(x) = x`,
//! which is the plain linear classifier; with one, `h(x) = relu(W x + c)`.
//! Training is bitwise deterministic for a given seed: initialisation and
//! shuffling draw from two separate ChaCha streams.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const HEAD_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
    /// Width of the ReLU hidden layer; 0 trains a linear softmax.
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 40,
            batch_size: 128,
            seed: 0,
            l2: 0.0,
            hidden: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("l2 coefficient must be non-negative"));
        }
        Ok(())
    }
}

/// ReLU layer feeding the softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    /// `width x d`, row-major.
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    #[serde(rename = "c")]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    #[serde(rename = "C")]
    pub classes: usize,
    /// Input dimension.
    #[serde(rename = "d")]
    pub dim: usize,
    /// `C x head_dim`, row-major.
    #[serde(rename = "A")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<HiddenLayer>,
}

/// Numerically stable softmax in place; returns log-sum-exp of the input.
pub fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

impl SoftmaxModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        SoftmaxModel {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            hidden: None,
        }
    }

    /// Head weights uniform in `(-0.01, 0.01)`, biases zero; hidden weights
    /// He-uniform.
    pub fn init(classes: usize, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let hidden_layer = (hidden > 0).then(|| {
            let limit = (6.0 / dim.max(1) as f64).sqrt();
            HiddenLayer {
                width: hidden,
                weights: (0..hidden * dim)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
                bias: vec![0.0; hidden],
            }
        });
        let head_dim = if hidden > 0 { hidden } else { dim };
        SoftmaxModel {
            classes,
            dim,
            weights: (0..classes * head_dim)
                .map(|_| rng.random_range(-HEAD_INIT_SCALE..HEAD_INIT_SCALE))
                .collect(),
            bias: vec![0.0; classes],
            hidden: hidden_layer,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden.as_ref().map_or(self.dim, |h| h.width)
    }

    pub fn parameter_count(&self) -> usize {
        let hidden = self
            .hidden
            .as_ref()
            .map_or(0, |h| h.weights.len() + h.bias.len());
        hidden + self.weights.len() + self.bias.len()
    }

    /// Checks shapes and finiteness, e.g. after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let hd = self.head_dim();
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::invalid("model needs at least one class and one input"));
        }
        if self.weights.len() != self.classes * hd || self.bias.len() != self.classes {
            return Err(Error::invalid("softmax head has inconsistent shape"));
        }
        if let Some(h) = &self.hidden {
            if h.width == 0 || h.weights.len() != h.width * self.dim || h.bias.len() != h.width {
                return Err(Error::invalid("hidden layer has inconsistent shape"));
            }
        }
        if !self.flat_params().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("model has non-finite parameters"));
        }
        Ok(())
    }

    /// Hidden pre-activations (if any) and the head input for `x`.
    fn forward_features(&self, x: &[f64], pre: &mut Vec<f64>, feat: &mut Vec<f64>) {
        match &self.hidden {
            None => {
                pre.clear();
                feat.clear();
                feat.extend_from_slice(x);
            }
            Some(h) => {
                pre.clear();
                for r in 0..h.width {
                    let w = &h.weights[r * self.dim..(r + 1) * self.dim];
                    pre.push(h.bias[r] + dot(w, x));
                }
                feat.clear();
                feat.extend(pre.iter().map(|&v| v.max(0.0)));
            }
        }
    }

    fn head_logits(&self, feat: &[f64], out: &mut Vec<f64>) {
        let hd = feat.len();
        out.clear();
        for c in 0..self.classes {
            out.push(self.bias[c] + dot(&self.weights[c * hd..(c + 1) * hd], feat));
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let (mut pre, mut feat, mut z) = (Vec::new(), Vec::new(), Vec::new());
        self.forward_features(x, &mut pre, &mut feat);
        self.head_logits(&feat, &mut z);
        Ok(z)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Class distribution `softmax(A h(x) + b)`.
    pub fn predict_dist(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// All parameters in a fixed order: hidden weights, hidden bias, head
    /// weights, head bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.parameter_count());
        if let Some(h) = &self.hidden {
            v.extend_from_slice(&h.weights);
            v.extend_from_slice(&h.bias);
        }
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.bias);
        v
    }

    /// Inverse of [`flat_params`](Self::flat_params). Panics on a length mismatch.
    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut rest = params;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        if let Some(h) = &mut self.hidden {
            take(&mut h.weights);
            take(&mut h.bias);
        }
        take(&mut self.weights);
        take(&mut self.bias);
    }

    fn zeros_like(&self) -> SoftmaxModel {
        let mut g = self.clone();
        g.fill_zero();
        g
    }

    fn fill_zero(&mut self) {
        self.weights.fill(0.0);
        self.bias.fill(0.0);
        if let Some(h) = &mut self.hidden {
            h.weights.fill(0.0);
            h.bias.fill(0.0);
        }
    }

    /// `self += alpha * other`; shapes must match.
    fn add_scaled(&mut self, other: &SoftmaxModel, alpha: f64) {
        fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
        axpy(&mut self.weights, &other.weights, alpha);
        axpy(&mut self.bias, &other.bias, alpha);
        if let (Some(h), Some(o)) = (self.hidden.as_mut(), other.hidden.as_ref()) {
            axpy(&mut h.weights, &o.weights, alpha);
            axpy(&mut h.bias, &o.bias, alpha);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scratch buffers reused across samples.
#[derive(Default)]
struct Workspace {
    pre: Vec<f64>,
    feat: Vec<f64>,
    z: Vec<f64>,
    dfeat: Vec<f64>,
}

/// Mean cross-entropy over `rows` plus `l2/2 * (|A|^2 + |W|^2)`, and its
/// gradient with the same shape as the model. Accumulates into `grad`.
fn accumulate(
    model: &SoftmaxModel,
    features: &Matrix,
    labels: &[usize],
    rows: &[usize],
    l2: f64,
    grad: &mut SoftmaxModel,
    ws: &mut Workspace,
) -> f64 {
    let scale = 1.0 / rows.len() as f64;
    let hd = model.head_dim();
    let mut loss = 0.0;
    for &r in rows {
        let x = features.row(r);
        let y = labels[r];
        model.forward_features(x, &mut ws.pre, &mut ws.feat);
        model.head_logits(&ws.feat, &mut ws.z);
        let z_true = ws.z[y];
        let lse = softmax_in_place(&mut ws.z);
        loss += (lse - z_true) * scale;
        ws.z[y] -= 1.0;

        if model.hidden.is_some() {
            ws.dfeat.clear();
            ws.dfeat.resize(hd, 0.0);
        }
        for c in 0..model.classes {
            let dz = ws.z[c] * scale;
            if dz == 0.0 {
                continue;
            }
            grad.bias[c] += dz;
            let gw = &mut grad.weights[c * hd..(c + 1) * hd];
            for (g, &f) in gw.iter_mut().zip(&ws.feat) {
                *g += dz * f;
            }
            if model.hidden.is_some() {
                let w = &model.weights[c * hd..(c + 1) * hd];
                for (d, &wv) in ws.dfeat.iter_mut().zip(w) {
                    *d += dz * wv;
                }
            }
        }
        if let (Some(gh), Some(_)) = (grad.hidden.as_mut(), model.hidden.as_ref()) {
            let dim = model.dim;
            for (u, (&d, &pre)) in ws.dfeat.iter().zip(&ws.pre).enumerate() {
                if pre <= 0.0 || d == 0.0 {
                    continue;
                }
                gh.bias[u] += d;
                for (g, &xv) in gh.weights[u * dim..(u + 1) * dim].iter_mut().zip(x) {
                    *g += d * xv;
                }
            }
        }
    }
    if l2 > 0.0 {
        let mut penalty = 0.0;
        for (g, &w) in grad.weights.iter_mut().zip(&model.weights) {
            *g += l2 * w;
            penalty += w * w;
        }
        if let (Some(gh), Some(h)) = (grad.hidden.as_mut(), model.hidden.as_ref()) {
            for (g, &w) in gh.weights.iter_mut().zip(&h.weights) {
                *g += l2 * w;
                penalty += w * w;
            }
        }
        loss += 0.5 * l2 * penalty;
    }
    loss
}

/// Loss and gradient over the rows `rows` of `features`.
pub fn loss_and_gradient(
    model: &SoftmaxModel,
    features: &Matrix,
    labels: &[usize],
    rows: &[usize],
    l2: f64,
) -> (f64, SoftmaxModel) {
    let mut grad = model.zeros_like();
    let loss = accumulate(
        model,
        features,
        labels,
        rows,
        l2,
        &mut grad,
        &mut Workspace::default(),
    );
    (loss, grad)
}

/// Loss alone, evaluated without touching any gradient buffers.
pub fn loss(model: &SoftmaxModel, features: &Matrix, labels: &[usize], rows: &[usize], l2: f64) -> f64 {
    loss_and_gradient(model, features, labels, rows, l2).0
}

fn check_training_data(features: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if features.rows() == 0 || features.cols() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if features.rows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if classes == 0 {
        return Err(Error::invalid("class count must be positive"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {y} out of range for {classes} classes")));
    }
    if !features.all_finite() {
        return Err(Error::invalid("features contain non-finite values"));
    }
    Ok(())
}

/// Epoch-at-a-time trainer, so callers can snapshot the model mid-run.
pub struct SoftmaxTrainer<'a> {
    model: SoftmaxModel,
    grad: SoftmaxModel,
    cfg: TrainConfig,
    features: &'a Matrix,
    labels: &'a [usize],
    order: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    workspace: Workspace,
    epochs_done: usize,
}

impl<'a> SoftmaxTrainer<'a> {
    pub fn new(
        features: &'a Matrix,
        labels: &'a [usize],
        classes: usize,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_training_data(features, labels, classes)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(1);
        let model = SoftmaxModel::init(classes, features.cols(), cfg.hidden, &mut init_rng);
        Ok(SoftmaxTrainer {
            grad: model.zeros_like(),
            model,
            cfg: cfg.clone(),
            features,
            labels,
            order: (0..labels.len()).collect(),
            shuffle_rng,
            workspace: Workspace::default(),
            epochs_done: 0,
        })
    }

    /// One shuffled pass over the data; returns the mean batch loss.
    pub fn run_epoch(&mut self) -> f64 {
        self.order.shuffle(&mut self.shuffle_rng);
        let lr = self.cfg.learning_rate;
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in self.order.chunks(self.cfg.batch_size) {
            self.grad.fill_zero();
            total += accumulate(
                &self.model,
                self.features,
                self.labels,
                chunk,
                self.cfg.l2,
                &mut self.grad,
                &mut self.workspace,
            );
            batches += 1;
            self.model.add_scaled(&self.grad, -lr);
        }
        self.epochs_done += 1;
        total / batches as f64
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn model(&self) -> &SoftmaxModel {
        &self.model
    }

    pub fn into_model(self) -> SoftmaxModel {
        self.model
    }
}

/// Trains for `cfg.epochs` full passes.
pub fn train_softmax(
    features: &Matrix,
    labels: &[usize],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<SoftmaxModel> {
    let mut trainer = SoftmaxTrainer::new(features, labels, classes, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch();
    }
    Ok(trainer.into_model())
}
