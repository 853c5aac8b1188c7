use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ablation, Encoded, HotspotClass, NetError, NetParams, NetShape, RegionSample, N_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden width of both recurrent layers.
    pub cell_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loc_dim: usize,
    pub time_dim: usize,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cell_size: 64,
            batch_size: 10,
            epochs: 100,
            seed: 0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loc_dim: 8,
            time_dim: 8,
            ablation: Ablation::full(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.cell_size == 0 || self.batch_size == 0 || self.loc_dim == 0 || self.time_dim == 0 {
            return Err(NetError::Config("cell_size, batch_size, loc_dim and time_dim must be positive".into()));
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.learning_rate) || !ok(self.epsilon) {
            return Err(NetError::Config("learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NetError::Config("moment decays must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `w` given the gradient of the loss.
    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..w.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            w[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: NetParams,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Mean cross-entropy of predicted distributions against true classes, with
/// probabilities floored at 1e-12.
pub fn cross_entropy_loss(pred: &[Vec<f64>], truth: &[HotspotClass]) -> Result<f64, NetError> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(NetError::Shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut total = 0.0;
    for (p, y) in pred.iter().zip(truth) {
        if p.len() != N_CLASSES {
            return Err(NetError::Shape(format!("prediction has {} classes", p.len())));
        }
        total -= p[y.index()].max(1e-12).ln();
    }
    Ok(total / pred.len() as f64)
}

pub fn accuracy(pred: &[HotspotClass], truth: &[HotspotClass]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

fn argmax(p: &[f64]) -> HotspotClass {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    HotspotClass::from_index(best).expect("class index")
}

/// Most likely class and the full distribution, using the flags the params
/// were trained with.
pub fn predict(params: &NetParams, sample: &RegionSample) -> Result<(HotspotClass, Vec<f64>), NetError> {
    let enc = params.encode(sample)?;
    let tr = params.forward(&enc, &params.flags)?;
    Ok((argmax(&tr.probs), tr.probs))
}

/// Held-out accuracy and mean loss.
pub fn evaluate(params: &NetParams, samples: &[RegionSample]) -> Result<(f64, f64), NetError> {
    let mut pred = Vec::with_capacity(samples.len());
    let mut probs = Vec::with_capacity(samples.len());
    for s in samples {
        let (c, p) = predict(params, s)?;
        pred.push(c);
        probs.push(p);
    }
    let truth: Vec<HotspotClass> = samples.iter().map(|s| s.label).collect();
    Ok((accuracy(&pred, &truth), cross_entropy_loss(&probs, &truth)?))
}

impl NetParams {
    /// Forward passes over a batch; each output depends only on its own sample.
    pub fn forward_batch(&self, batch: &[Encoded], ab: &Ablation) -> Result<Vec<Vec<f64>>, NetError> {
        batch.iter().map(|s| self.forward(s, ab).map(|t| t.probs)).collect()
    }

    /// Mean loss over `batch` and its gradient, laid out like `data`.
    pub fn loss_and_gradient(&self, batch: &[Encoded], ab: &Ablation) -> Result<(f64, Vec<f64>), NetError> {
        let mut grad = vec![0.0; self.data.len()];
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut loss = 0.0;
        for s in batch {
            let tr = self.forward(s, ab)?;
            loss += self.backward(s, &tr, &mut grad, scale);
        }
        Ok((loss * scale, grad))
    }

    fn mean_loss(&self, batch: &[Encoded], ab: &Ablation) -> Result<f64, NetError> {
        let mut loss = 0.0;
        for s in batch {
            let tr = self.forward(s, ab)?;
            loss -= tr.probs[s.label].max(1e-12).ln();
        }
        Ok(loss / batch.len().max(1) as f64)
    }
}

/// Maximum relative error between backprop and central finite differences
/// over every parameter, `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(params: &NetParams, samples: &[RegionSample], eps: f64, ab: &Ablation) -> Result<f64, NetError> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(NetError::Config(format!("epsilon {eps} outside [1e-7, 1e-4]")));
    }
    let enc = params.encode_all(samples)?;
    if enc.is_empty() {
        return Err(NetError::Dataset("no samples".into()));
    }
    let (_, analytic) = params.loss_and_gradient(&enc, ab)?;
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..p.data.len() {
        let w0 = p.data[i];
        p.data[i] = w0 + eps;
        let up = p.mean_loss(&enc, ab)?;
        p.data[i] = w0 - eps;
        let down = p.mean_loss(&enc, ab)?;
        p.data[i] = w0;
        let num = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn check_dataset(dataset: &[RegionSample]) -> Result<(), NetError> {
    if dataset.is_empty() {
        return Err(NetError::Dataset("empty dataset".into()));
    }
    let classes: BTreeSet<usize> = dataset.iter().map(|s| s.label.index()).collect();
    if classes.len() < 2 {
        return Err(NetError::Dataset("labels cover a single class".into()));
    }
    Ok(())
}

/// Trains a freshly initialised network on `dataset`.
pub fn train(dataset: &[RegionSample], cfg: &TrainConfig) -> Result<TrainResult, NetError> {
    cfg.validate()?;
    check_dataset(dataset)?;
    let ids: BTreeSet<&str> = dataset.iter().flat_map(|s| s.steps.iter().map(|x| x.location.as_str())).collect();
    let shape = NetShape::new(ids.len(), cfg.loc_dim, cfg.time_dim, cfg.cell_size);
    let params = NetParams::init(shape, ids.into_iter().map(str::to_string).collect(), cfg.seed)?;
    train_from(params, dataset, cfg)
}

/// Continues training from existing params (for example with a pre-trained
/// location table loaded).
pub fn train_from(mut params: NetParams, dataset: &[RegionSample], cfg: &TrainConfig) -> Result<TrainResult, NetError> {
    cfg.validate()?;
    check_dataset(dataset)?;
    if params.shape.hidden != cfg.cell_size {
        return Err(NetError::Config(format!("params hidden {} != cell_size {}", params.shape.hidden, cfg.cell_size)));
    }
    params.flags = cfg.ablation;
    let enc = params.encode_all(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut adam = Adam::new(params.data.len(), cfg);
    let mut order: Vec<usize> = (0..enc.len()).collect();
    let mut grad = vec![0.0; params.data.len()];
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let tr = params.forward(&enc[i], &cfg.ablation)?;
                total += params.backward(&enc[i], &tr, &mut grad, scale);
            }
            adam.step(&mut params.data, &grad);
        }
        let mean = total / enc.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        if !mean.is_finite() || !params.is_finite() {
            return Err(NetError::Config(format!("training diverged at epoch {epoch}")));
        }
        curve.push(mean);
    }
    Ok(TrainResult { params, loss_curve: curve })
}
