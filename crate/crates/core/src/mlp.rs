//! One-hidden-layer ReLU MLP with a 4-way softmax head.
//!
//! Inputs are sparse [`FeatureVector`]s, so the first layer is stored
//! input-major (`w1t[j * hidden + h]` is W1[h][j]) and only the non-zero
//! input columns are touched in forward and backward passes. The model file
//! still carries W1 row-major (hidden x input).

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Stance;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Layout};

pub const OUTPUT_DIM: usize = 4;

const MAGIC: &[u8; 8] = b"STNCMLP\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden_dim: usize,
    pub l2_lambda: f64,
    pub dropout_keep: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 100,
            l2_lambda: 1e-4,
            dropout_keep: 0.6,
            batch_size: 500,
            epochs: 90,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be finite and non-negative");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad("dropout_keep must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Four class probabilities in canonical stance order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityVector([f64; OUTPUT_DIM]);

impl ProbabilityVector {
    pub fn new(p: [f64; OUTPUT_DIM]) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("{p:?} is not a probability vector")));
        }
        Ok(Self(p))
    }

    pub fn uniform() -> Self {
        Self([0.25; OUTPUT_DIM])
    }

    pub fn values(&self) -> &[f64; OUTPUT_DIM] {
        &self.0
    }

    /// Argmax; ties go to the lowest canonical index.
    pub fn decide(&self) -> Stance {
        Stance::from_index(argmax(&self.0)).unwrap()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64; OUTPUT_DIM]) -> [f64; OUTPUT_DIM] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|z| (z - max).exp());
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_dim: usize,
    /// input-major W1
    w1t: Vec<f64>,
    b1: Vec<f64>,
    /// row-major output_dim x hidden_dim
    w2: Vec<f64>,
    b2: [f64; OUTPUT_DIM],
    layout: Arc<Layout>,
}

/// Dropout mask for one example: `mask[h]` keeps hidden unit h.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    pub keep: f64,
    pub mask: Vec<bool>,
}

impl DropoutMask {
    pub fn sample<R: Rng>(rng: &mut R, hidden: usize, keep: f64) -> Self {
        Self {
            keep,
            mask: (0..hidden).map(|_| rng.gen::<f64>() < keep).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden_pre: Vec<f64>,
    /// post-ReLU, post-dropout
    pub hidden: Vec<f64>,
    pub logits: [f64; OUTPUT_DIM],
    pub prob: ProbabilityVector,
}

enum Slot {
    W1(usize),
    B1(usize),
    W2(usize),
    B2(usize),
}

/// Maps a flat parameter index (W1 row-major, b1, W2 row-major, b2) to
/// storage, where W1 is held input-major.
fn locate(hidden: usize, input: usize, idx: usize) -> Slot {
    let n_w1 = hidden * input;
    if idx < n_w1 {
        Slot::W1((idx % input) * hidden + idx / input)
    } else if idx < n_w1 + hidden {
        Slot::B1(idx - n_w1)
    } else if idx < n_w1 + hidden + OUTPUT_DIM * hidden {
        Slot::W2(idx - n_w1 - hidden)
    } else {
        Slot::B2(idx - n_w1 - hidden - OUTPUT_DIM * hidden)
    }
}

/// Gradients in the flattened parameter order of [`MlpModel::param`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    hidden_dim: usize,
    input_dim: usize,
    /// input-major, like the model
    w1t: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: [f64; OUTPUT_DIM],
}

impl Gradients {
    fn zeros(m: &MlpModel) -> Self {
        Self {
            hidden_dim: m.hidden_dim,
            input_dim: m.input_dim,
            w1t: vec![0.0; m.w1t.len()],
            b1: vec![0.0; m.hidden_dim],
            w2: vec![0.0; m.w2.len()],
            b2: [0.0; OUTPUT_DIM],
        }
    }

    fn reset(&mut self) {
        self.w1t.iter_mut().for_each(|g| *g = 0.0);
        self.b1.iter_mut().for_each(|g| *g = 0.0);
        self.w2.iter_mut().for_each(|g| *g = 0.0);
        self.b2 = [0.0; OUTPUT_DIM];
    }

    fn slot(&mut self, idx: usize) -> &mut f64 {
        match locate(self.hidden_dim, self.input_dim, idx) {
            Slot::W1(i) => &mut self.w1t[i],
            Slot::B1(i) => &mut self.b1[i],
            Slot::W2(i) => &mut self.w2[i],
            Slot::B2(i) => &mut self.b2[i],
        }
    }

    pub fn get(&self, idx: usize) -> f64 {
        match locate(self.hidden_dim, self.input_dim, idx) {
            Slot::W1(i) => self.w1t[i],
            Slot::B1(i) => self.b1[i],
            Slot::W2(i) => self.w2[i],
            Slot::B2(i) => self.b2[i],
        }
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        *self.slot(idx) = value;
    }
}

impl MlpModel {
    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn init(layout: Arc<Layout>, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(layout, hidden_dim, &mut rng)
    }

    fn init_with<R: Rng>(layout: Arc<Layout>, hidden_dim: usize, rng: &mut R) -> Self {
        let input_dim = layout.len();
        let r1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let r2 = (6.0 / (hidden_dim + OUTPUT_DIM) as f64).sqrt();
        // draw W1 row-major so the stream does not depend on storage order
        let mut w1t = vec![0.0; input_dim * hidden_dim];
        for h in 0..hidden_dim {
            for j in 0..input_dim {
                w1t[j * hidden_dim + h] = rng.gen_range(-r1..=r1);
            }
        }
        let w2 = (0..OUTPUT_DIM * hidden_dim)
            .map(|_| rng.gen_range(-r2..=r2))
            .collect();
        Self {
            input_dim,
            hidden_dim,
            w1t,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: [0.0; OUTPUT_DIM],
            layout,
        }
    }

    /// All-zero weights and biases.
    pub fn zeros(layout: Arc<Layout>, hidden_dim: usize) -> Self {
        let input_dim = layout.len();
        Self {
            input_dim,
            hidden_dim,
            w1t: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; OUTPUT_DIM * hidden_dim],
            b2: [0.0; OUTPUT_DIM],
            layout,
        }
    }

    /// Builds a model from explicit row-major W1 (hidden x input) and W2.
    pub fn from_weights(
        layout: Arc<Layout>,
        w1: &[Vec<f64>],
        b1: &[f64],
        w2: &[Vec<f64>],
        b2: [f64; OUTPUT_DIM],
    ) -> Result<Self> {
        let input_dim = layout.len();
        let hidden_dim = w1.len();
        if b1.len() != hidden_dim
            || w1.iter().any(|r| r.len() != input_dim)
            || w2.len() != OUTPUT_DIM
            || w2.iter().any(|r| r.len() != hidden_dim)
        {
            return Err(Error::Argument("weight shapes do not match".into()));
        }
        let mut m = Self::zeros(layout, hidden_dim);
        for (h, row) in w1.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                m.w1t[j * hidden_dim + h] = *w;
            }
        }
        m.b1.copy_from_slice(b1);
        m.w2 = w2.concat();
        m.b2 = b2;
        m.check_finite()?;
        Ok(m)
    }

    fn check_finite(&self) -> Result<()> {
        let all = self
            .w1t
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2);
        if all.clone().any(|w| !w.is_finite()) {
            return Err(Error::Argument("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        OUTPUT_DIM
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.w1t.len() + self.hidden_dim + self.w2.len() + OUTPUT_DIM
    }

    fn param_slot(&mut self, idx: usize) -> &mut f64 {
        match locate(self.hidden_dim, self.input_dim, idx) {
            Slot::W1(i) => &mut self.w1t[i],
            Slot::B1(i) => &mut self.b1[i],
            Slot::W2(i) => &mut self.w2[i],
            Slot::B2(i) => &mut self.b2[i],
        }
    }

    /// Parameter by flat index: W1 row-major, b1, W2 row-major, b2.
    pub fn param(&self, idx: usize) -> f64 {
        match locate(self.hidden_dim, self.input_dim, idx) {
            Slot::W1(i) => self.w1t[i],
            Slot::B1(i) => self.b1[i],
            Slot::W2(i) => self.w2[i],
            Slot::B2(i) => self.b2[i],
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        *self.param_slot(idx) = value;
    }

    /// Sum of squared W1 and W2 entries (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.w1t.iter().chain(&self.w2).map(|w| w * w).sum()
    }

    fn check_input(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Argument(format!(
                "feature length {} does not match model input {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &FeatureVector, dropout: Option<&DropoutMask>) -> Result<Forward> {
        self.check_input(x)?;
        if let Some(d) = dropout {
            if d.mask.len() != self.hidden_dim {
                return Err(Error::Argument("dropout mask length != hidden_dim".into()));
            }
        }
        let h = self.hidden_dim;
        let mut pre = self.b1.clone();
        for &(j, v) in x.nonzeros() {
            let col = &self.w1t[j as usize * h..(j as usize + 1) * h];
            pre.iter_mut().zip(col).for_each(|(p, w)| *p += w * v);
        }
        let mut hidden: Vec<f64> = pre.iter().map(|p| p.max(0.0)).collect();
        if let Some(d) = dropout {
            for (a, keep) in hidden.iter_mut().zip(&d.mask) {
                *a = if *keep { *a / d.keep } else { 0.0 };
            }
        }
        let mut logits = self.b2;
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &self.w2[k * h..(k + 1) * h];
            *z += row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>();
        }
        let prob = ProbabilityVector(softmax(&logits));
        Ok(Forward {
            hidden_pre: pre,
            hidden,
            logits,
            prob,
        })
    }

    /// Inference: argmax stance and probabilities, dropout off.
    pub fn predict(&self, x: &FeatureVector) -> Result<(Stance, ProbabilityVector)> {
        if **x.layout() != *self.layout {
            return Err(Error::Argument(format!(
                "feature layout {} does not match model layout {}",
                x.layout(),
                self.layout
            )));
        }
        let f = self.forward(x, None)?;
        Ok((f.prob.decide(), f.prob))
    }

    /// Adds the cross-entropy gradient of one example (scaled by `scale`)
    /// into `g`; returns -ln p[label].
    fn accumulate(
        &self,
        x: &FeatureVector,
        label: Stance,
        dropout: Option<&DropoutMask>,
        scale: f64,
        g: &mut Gradients,
    ) -> Result<f64> {
        let f = self.forward(x, dropout)?;
        let h = self.hidden_dim;
        let p = f.prob.values();
        let y = label.index();
        let mut dz = *p;
        dz[y] -= 1.0;
        dz.iter_mut().for_each(|d| *d *= scale);
        let mut dhidden = vec![0.0; h];
        for k in 0..OUTPUT_DIM {
            g.b2[k] += dz[k];
            let row = &self.w2[k * h..(k + 1) * h];
            let grow = &mut g.w2[k * h..(k + 1) * h];
            for u in 0..h {
                grow[u] += dz[k] * f.hidden[u];
                dhidden[u] += dz[k] * row[u];
            }
        }
        for u in 0..h {
            let mut d = if f.hidden_pre[u] > 0.0 { dhidden[u] } else { 0.0 };
            if let Some(m) = dropout {
                d = if m.mask[u] { d / m.keep } else { 0.0 };
            }
            dhidden[u] = d;
            g.b1[u] += d;
        }
        for &(j, v) in x.nonzeros() {
            let col = &mut g.w1t[j as usize * h..(j as usize + 1) * h];
            col.iter_mut().zip(&dhidden).for_each(|(gw, d)| *gw += d * v);
        }
        Ok(-p[y].ln())
    }

    fn add_l2_gradient(&self, lambda: f64, g: &mut Gradients) {
        if lambda == 0.0 {
            return;
        }
        g.w1t
            .iter_mut()
            .zip(&self.w1t)
            .for_each(|(gw, w)| *gw += 2.0 * lambda * w);
        g.w2
            .iter_mut()
            .zip(&self.w2)
            .for_each(|(gw, w)| *gw += 2.0 * lambda * w);
    }
}

pub type Example<'a> = (&'a FeatureVector, Stance);

/// Mean cross-entropy plus `l2_lambda * (|W1|^2 + |W2|^2)`, dropout off.
pub fn loss(model: &MlpModel, batch: &[Example], config: &TrainingConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("loss of an empty batch".into()));
    }
    let mut ce = 0.0;
    for (x, y) in batch {
        let f = model.forward(x, None)?;
        ce -= f.prob.values()[y.index()].ln();
    }
    Ok(ce / batch.len() as f64 + config.l2_lambda * model.weight_norm_sq())
}

/// Analytic gradient of [`loss`] with dropout off.
pub fn gradients(model: &MlpModel, batch: &[Example], config: &TrainingConfig) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Argument("gradient of an empty batch".into()));
    }
    let mut g = Gradients::zeros(model);
    let scale = 1.0 / batch.len() as f64;
    for (x, y) in batch {
        model.accumulate(x, *y, None, scale, &mut g)?;
    }
    model.add_l2_gradient(config.l2_lambda, &mut g);
    Ok(g)
}

/// Trains a fresh model by seeded mini-batch SGD. `on_epoch` receives the
/// epoch number (1-based) and the mean training loss of that epoch.
pub fn train_logged(
    examples: &[Example],
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<MlpModel> {
    config.validate()?;
    let Some((first, _)) = examples.first() else {
        return Err(Error::Argument("training needs at least one example".into()));
    };
    let layout = Arc::clone(first.layout());
    if examples.iter().any(|(x, _)| **x.layout() != *layout) {
        return Err(Error::Argument("training examples have mixed feature layouts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init_with(layout, config.hidden_dim, &mut rng);
    let mut g = Gradients::zeros(&model);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let lr = config.learning_rate;
    let keep = config.dropout_keep;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut ce_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            g.reset();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = examples[i];
                let mask = (keep < 1.0).then(|| DropoutMask::sample(&mut rng, model.hidden_dim, keep));
                ce_sum += model.accumulate(x, y, mask.as_ref(), scale, &mut g)?;
            }
            model.add_l2_gradient(config.l2_lambda, &mut g);
            for (w, d) in model.w1t.iter_mut().zip(&g.w1t) {
                *w -= lr * d;
            }
            for (w, d) in model.b1.iter_mut().zip(&g.b1) {
                *w -= lr * d;
            }
            for (w, d) in model.w2.iter_mut().zip(&g.w2) {
                *w -= lr * d;
            }
            for (w, d) in model.b2.iter_mut().zip(&g.b2) {
                *w -= lr * d;
            }
        }
        let epoch_loss =
            ce_sum / examples.len() as f64 + config.l2_lambda * model.weight_norm_sq();
        if !epoch_loss.is_finite() || model.check_finite().is_err() {
            return Err(Error::Diverged { epoch });
        }
        on_epoch(epoch, epoch_loss);
    }
    Ok(model)
}

pub fn train(examples: &[Example], config: &TrainingConfig) -> Result<MlpModel> {
    train_logged(examples, config, |_, _| {})
}

/// Deterministic sample of `n` distinct parameter indices (all when fewer).
pub fn sample_parameters(model: &MlpModel, n: usize, seed: u64) -> Vec<usize> {
    let total = model.param_count();
    if total <= n {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Max relative error between `grads` and central differences (h = 1e-5)
/// of [`loss`] at the given parameters. Pairs where both magnitudes are
/// below 1e-8 are compared absolutely.
pub fn check_gradients(
    model: &MlpModel,
    batch: &[Example],
    config: &TrainingConfig,
    grads: &Gradients,
    params: &[usize],
) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &p in params {
        let orig = probe.param(p);
        probe.set_param(p, orig + H);
        let up = loss(&probe, batch, config)?;
        probe.set_param(p, orig - H);
        let down = loss(&probe, batch, config)?;
        probe.set_param(p, orig);
        let numeric = (up - down) / (2.0 * H);
        let analytic = grads.get(p);
        let scale = analytic.abs().max(numeric.abs());
        let err = if scale < 1e-8 {
            (analytic - numeric).abs()
        } else {
            (analytic - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Backprop vs finite differences over >= 50 sampled parameters.
pub fn gradient_check(model: &MlpModel, batch: &[Example], config: &TrainingConfig) -> Result<f64> {
    if config.dropout_keep != 1.0 {
        return Err(Error::Argument("gradient check requires dropout_keep = 1".into()));
    }
    let grads = gradients(model, batch, config)?;
    let params = sample_parameters(model, 64, config.seed);
    check_gradients(model, batch, config, &grads, &params)
}

fn put_f64s<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

impl MlpModel {
    /// Versioned little-endian binary: magic, version, dims, W1 row-major,
    /// b1, W2 row-major, b2, then the layout as length-prefixed block names.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for d in [self.input_dim, self.hidden_dim, OUTPUT_DIM] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let (h, i) = (self.hidden_dim, self.input_dim);
        put_f64s(&mut w, (0..h).flat_map(|r| (0..i).map(move |c| (r, c))).map(|(r, c)| self.w1t[c * h + r]))?;
        put_f64s(&mut w, self.b1.iter().copied())?;
        put_f64s(&mut w, self.w2.iter().copied())?;
        put_f64s(&mut w, self.b2.iter().copied())?;
        let blocks = self.layout.blocks();
        w.write_all(&(blocks.len() as u32).to_le_bytes())?;
        for b in blocks {
            w.write_all(&(b.name.len() as u32).to_le_bytes())?;
            w.write_all(b.name.as_bytes())?;
            w.write_all(&(b.len as u64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let truncated = |_| Error::Format("truncated model file".into());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(truncated)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b8).map_err(truncated)?;
            *d = usize::try_from(u64::from_le_bytes(b8))
                .map_err(|_| Error::Format("dimension overflow".into()))?;
        }
        let [input_dim, hidden_dim, output_dim] = dims;
        if output_dim != OUTPUT_DIM {
            return Err(Error::Format(format!("output dimension {output_dim} != 4")));
        }
        if input_dim.checked_mul(hidden_dim).is_none_or(|n| n > (1 << 34)) {
            return Err(Error::Format("implausible model dimensions".into()));
        }
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf).map_err(truncated)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let w1 = read_f64s(hidden_dim * input_dim)?;
        let b1 = read_f64s(hidden_dim)?;
        let w2 = read_f64s(OUTPUT_DIM * hidden_dim)?;
        let b2: [f64; OUTPUT_DIM] = read_f64s(OUTPUT_DIM)?.try_into().unwrap();

        r.read_exact(&mut b4).map_err(truncated)?;
        let n_blocks = u32::from_le_bytes(b4) as usize;
        let mut blocks = Vec::with_capacity(n_blocks.min(1024));
        for _ in 0..n_blocks {
            r.read_exact(&mut b4).map_err(truncated)?;
            let len = u32::from_le_bytes(b4) as usize;
            if len > 4096 {
                return Err(Error::Format("implausible block name length".into()));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(truncated)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("block name is not UTF-8".into()))?;
            r.read_exact(&mut b8).map_err(truncated)?;
            blocks.push((name, u64::from_le_bytes(b8) as usize));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)
            .map_err(|e| Error::Format(e.to_string()))?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let layout = Layout::from_blocks(blocks);
        if layout.len() != input_dim {
            return Err(Error::Format(format!(
                "layout length {} does not match input dimension {input_dim}",
                layout.len()
            )));
        }
        let mut w1t = vec![0.0; w1.len()];
        for h in 0..hidden_dim {
            for j in 0..input_dim {
                w1t[j * hidden_dim + h] = w1[h * input_dim + j];
            }
        }
        let model = Self {
            input_dim,
            hidden_dim,
            w1t,
            b1,
            w2,
            b2,
            layout: Arc::new(layout),
        };
        model
            .check_finite()
            .map_err(|_| Error::Format("model file holds non-finite weights".into()))?;
        Ok(model)
    }
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    model
        .write_to(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    MlpModel::read_from(std::io::BufReader::new(file))
}
