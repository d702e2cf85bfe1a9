//! Emotion-intensity vectors and the out-of-vocabulary regressor.
//!
//! Intensities come from a word/emotion/score lexicon file. Words missing from
//! the lexicon can optionally be mapped through [`OovModel`], a small
//! feed-forward network trained on word embeddings.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::EmbeddingProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Anticipation,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Trust,
}

impl Emotion {
    /// Fixed component order of [`EmotionVector`].
    pub const ALL: [Emotion; 8] = [
        Emotion::Anger,
        Emotion::Anticipation,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Trust,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Anticipation => "anticipation",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Trust => "trust",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown emotion {s:?}")))
    }
}

/// Eight intensities in [0, 1], ordered as [`Emotion::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct EmotionVector([f64; 8]);

impl EmotionVector {
    pub fn new(values: [f64; 8]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("intensity {v} outside [0, 1]")));
        }
        Ok(EmotionVector(values))
    }

    pub fn zero() -> Self {
        EmotionVector([0.0; 8])
    }

    pub fn values(&self) -> &[f64; 8] {
        &self.0
    }

    pub fn get(&self, e: Emotion) -> f64 {
        self.0[e.index()]
    }

    fn clamped(raw: &[f64]) -> Self {
        let mut v = [0.0; 8];
        for (o, r) in v.iter_mut().zip(raw) {
            *o = if r.is_nan() { 0.0 } else { r.clamp(0.0, 1.0) };
        }
        EmotionVector(v)
    }
}

impl TryFrom<[f64; 8]> for EmotionVector {
    type Error = Error;
    fn try_from(v: [f64; 8]) -> Result<Self> {
        EmotionVector::new(v)
    }
}

impl From<EmotionVector> for [f64; 8] {
    fn from(v: EmotionVector) -> Self {
        v.0
    }
}

/// Lowercased word to intensity vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    words: HashMap<String, EmotionVector>,
}

impl Lexicon {
    /// Loads tab-separated `word emotion score` lines. Blank lines, `#`
    /// comments and a leading `word emotion score` header are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut raw: HashMap<String, [f64; 8]> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, line_no, "expected word<TAB>emotion<TAB>score"));
            }
            if raw.is_empty() && cols[0] == "word" && cols[1] == "emotion" {
                continue;
            }
            let emotion: Emotion = cols[1]
                .parse()
                .map_err(|e: Error| Error::parse(origin, line_no, e.to_string()))?;
            let score: f64 = cols[2]
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad score {:?}", cols[2])))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Validation(format!(
                    "{} line {line_no}: score {score} outside [0, 1]",
                    origin.display()
                )));
            }
            raw.entry(cols[0].to_lowercase()).or_insert([0.0; 8])[emotion.index()] = score;
        }
        Ok(Lexicon {
            words: raw
                .into_iter()
                .map(|(w, v)| (w, EmotionVector(v)))
                .collect(),
        })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, EmotionVector)>) -> Self {
        Lexicon {
            words: entries
                .into_iter()
                .map(|(w, v)| (w.to_lowercase(), v))
                .collect(),
        }
    }

    pub fn get(&self, word: &str) -> Option<&EmotionVector> {
        self.words.get(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Entries sorted by word.
    pub fn entries(&self) -> Vec<(&str, &EmotionVector)> {
        let mut v: Vec<_> = self.words.iter().map(|(w, e)| (w.as_str(), e)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Lexicon lookup, falling back to the regressor when one is given.
    pub fn intensity(&self, word: &str, fallback: Option<&Fallback<'_>>) -> Result<EmotionVector> {
        let word = word.trim();
        if word.is_empty() {
            return Err(Error::Argument("empty emotion word".into()));
        }
        if let Some(v) = self.get(word) {
            return Ok(*v);
        }
        match fallback {
            None => Err(Error::OutOfVocabulary(word.to_lowercase())),
            Some(fb) => {
                let emb = crate::gateway::embed_direct(&[word.to_lowercase()], fb.embedder)?;
                fb.model.predict(&emb[0])
            }
        }
    }
}

/// Regressor plus the embedder whose vectors it was trained on.
pub struct Fallback<'a> {
    pub model: &'a OovModel,
    pub embedder: &'a dyn EmbeddingProvider,
}

pub const HIST_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionHistogram {
    pub emotion: Emotion,
    /// Counts of nonzero intensities in bins of width 0.05; 1.0 lands in the last bin.
    pub counts: [usize; HIST_BINS],
    pub nonzero: usize,
    /// Share of nonzero intensities at or below 0.2.
    pub fraction_low: f64,
}

pub fn lexicon_distribution(lexicon: &Lexicon) -> Vec<EmotionHistogram> {
    Emotion::ALL
        .iter()
        .map(|&emotion| {
            let mut counts = [0usize; HIST_BINS];
            let mut low = 0usize;
            let mut nonzero = 0usize;
            for v in lexicon.words.values() {
                let x = v.get(emotion);
                if x <= 0.0 {
                    continue;
                }
                nonzero += 1;
                if x <= 0.2 {
                    low += 1;
                }
                // small epsilon keeps 3-decimal boundaries such as 0.35 in the upper bin
                let bin = ((x * HIST_BINS as f64) + 1e-9).floor() as usize;
                counts[bin.min(HIST_BINS - 1)] += 1;
            }
            EmotionHistogram {
                emotion,
                counts,
                nonzero,
                fraction_low: if nonzero == 0 { 0.0 } else { low as f64 / nonzero as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// L2 penalty on weights.
    pub alpha: f64,
    /// Minimum loss improvement that counts as progress.
    pub tol: f64,
    /// Stalled epochs tolerated before the step size is divided by 5.
    pub patience: usize,
    pub min_learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![512, 256, 128],
            learning_rate: 0.001,
            batch_size: 100,
            max_epochs: 1000,
            alpha: 1e-4,
            tol: 1e-4,
            patience: 10,
            min_learning_rate: 1e-6,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionMetrics {
    pub emotion: Emotion,
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

#[derive(Debug, Clone)]
struct Layer {
    w: Array2<f64>,
    b: Array1<f64>,
}

/// Feed-forward ReLU regressor from an embedding to 8 intensities.
#[derive(Debug, Clone)]
pub struct OovModel {
    config: TrainConfig,
    layers: Vec<Layer>,
    pub meta: TrainingMeta,
}

const MAGIC: &[u8; 4] = b"OOVM";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    meta: TrainingMeta,
    shapes: Vec<(usize, usize)>,
}

impl OovModel {
    pub fn input_width(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.w.dim()).collect()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn forward_raw(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = a.dot(&l.w) + &l.b;
            if i != last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    pub fn predict(&self, embedding: &[f64]) -> Result<EmotionVector> {
        Ok(self.predict_batch(&[embedding.to_vec()])?.remove(0))
    }

    pub fn predict_batch(&self, embeddings: &[Vec<f64>]) -> Result<Vec<EmotionVector>> {
        let x = to_matrix(embeddings, self.input_width())?;
        let out = self.forward_raw(&x);
        Ok(out
            .rows()
            .into_iter()
            .map(|r| EmotionVector::clamped(r.as_slice().expect("standard layout")))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        OovModel::read_from(&mut bytes.as_slice())
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            meta: self.meta.clone(),
            shapes: self.shapes(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Computation(e.to_string()))?;
        let mut out = Vec::with_capacity(json.len() + 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for l in &self.layers {
            for v in l.w.iter().chain(l.b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&out)
            .map_err(|e| Error::Computation(format!("writing model: {e}")))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |m: &str| Error::Validation(format!("model file: {m}"));
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| bad(&e.to_string()))?;
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
        let mut floats = bytes[16 + len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut layers = Vec::new();
        for &(rows, cols) in &header.shapes {
            let w: Vec<f64> = floats.by_ref().take(rows * cols).collect();
            let b: Vec<f64> = floats.by_ref().take(cols).collect();
            if w.len() != rows * cols || b.len() != cols {
                return Err(bad("truncated weights"));
            }
            layers.push(Layer {
                w: Array2::from_shape_vec((rows, cols), w).map_err(|e| bad(&e.to_string()))?,
                b: Array1::from(b),
            });
        }
        if floats.next().is_some() {
            return Err(bad("trailing bytes"));
        }
        if layers.is_empty() || layers.last().map(|l| l.w.ncols()) != Some(8) {
            return Err(bad("output layer must have width 8"));
        }
        Ok(OovModel {
            config: header.config,
            layers,
            meta: header.meta,
        })
    }
}

fn to_matrix(rows: &[Vec<f64>], width: usize) -> Result<Array2<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::Argument(format!(
            "embedding width {} does not match model input {width}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| Error::Computation(e.to_string()))
}

struct Adam {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(layers: &[Layer]) -> Self {
        let zeros = || {
            layers
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [Layer], grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
        self.t += 1;
        let lr_t = lr * (1.0 - Self::B2.powi(self.t)).sqrt() / (1.0 - Self::B1.powi(self.t));
        for (i, (gw, gb)) in grads.iter().enumerate() {
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            mw.zip_mut_with(gw, |m, g| *m = Self::B1 * *m + (1.0 - Self::B1) * g);
            mb.zip_mut_with(gb, |m, g| *m = Self::B1 * *m + (1.0 - Self::B1) * g);
            vw.zip_mut_with(gw, |v, g| *v = Self::B2 * *v + (1.0 - Self::B2) * g * g);
            vb.zip_mut_with(gb, |v, g| *v = Self::B2 * *v + (1.0 - Self::B2) * g * g);
            let layer = &mut layers[i];
            ndarray::Zip::from(&mut layer.w)
                .and(&*mw)
                .and(&*vw)
                .for_each(|w, m, v| *w -= lr_t * m / (v.sqrt() + Self::EPS));
            ndarray::Zip::from(&mut layer.b)
                .and(&*mb)
                .and(&*vb)
                .for_each(|b, m, v| *b -= lr_t * m / (v.sqrt() + Self::EPS));
        }
    }
}

fn init_layers(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    sizes
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
            let b = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound));
            Layer { w, b }
        })
        .collect()
}

/// Loss and gradients for one minibatch: squared error / (2·batch) plus L2.
fn batch_gradients(layers: &[Layer], x: &Array2<f64>, y: &Array2<f64>, alpha: f64) -> (f64, Vec<(Array2<f64>, Array1<f64>)>) {
    let n = x.nrows() as f64;
    let last = layers.len() - 1;
    let mut acts = vec![x.clone()];
    for (i, l) in layers.iter().enumerate() {
        let mut z = acts[i].dot(&l.w) + &l.b;
        if i != last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    let out = &acts[layers.len()];
    let mut delta = out - y;
    let penalty: f64 = layers.iter().map(|l| l.w.iter().map(|w| w * w).sum::<f64>()).sum();
    let loss = delta.iter().map(|d| d * d).sum::<f64>() / (2.0 * n) + alpha * penalty / (2.0 * n);

    let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); layers.len()];
    for i in (0..layers.len()).rev() {
        let gw = acts[i].t().dot(&delta) / n + &(&layers[i].w * (alpha / n));
        let gb = delta.sum_axis(Axis(0)) / n;
        if i > 0 {
            let mut next = delta.dot(&layers[i].w.t());
            next.zip_mut_with(&acts[i], |d, a| {
                if *a <= 0.0 {
                    *d = 0.0
                }
            });
            delta = next;
        }
        grads[i] = (gw, gb);
    }
    (loss, grads)
}

/// Seeded shuffle split into (train, held-out) index lists.
pub fn split_indices(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = ((n as f64) * holdout_fraction).round() as usize;
    let held = held.min(n.saturating_sub(1));
    let train = idx.split_off(held);
    (train, idx)
}

/// Fits the regressor on `(features, targets)` rows with the configured
/// architecture and step schedule.
pub fn fit(features: &[Vec<f64>], targets: &[EmotionVector], config: &TrainConfig) -> Result<OovModel> {
    if features.is_empty() || features.len() != targets.len() {
        return Err(Error::Argument(format!(
            "{} feature rows for {} targets",
            features.len(),
            targets.len()
        )));
    }
    if config.batch_size == 0 || config.learning_rate <= 0.0 {
        return Err(Error::Argument("batch_size and learning_rate must be positive".into()));
    }
    let width = features[0].len();
    let x = to_matrix(features, width)?;
    let y = Array2::from_shape_vec(
        (targets.len(), 8),
        targets.iter().flat_map(|t| t.0).collect(),
    )
    .map_err(|e| Error::Computation(e.to_string()))?;

    let mut sizes = vec![width];
    sizes.extend(&config.hidden);
    sizes.push(8);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = init_layers(&sizes, &mut rng);
    let mut adam = Adam::new(&layers);
    let mut lr = config.learning_rate;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..x.nrows()).collect();

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (loss, grads) = batch_gradients(&layers, &xb, &yb, config.alpha);
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut layers, &grads, lr);
        }
        epoch_loss /= x.nrows() as f64;
        trace.push(epoch_loss);
        if epoch_loss > best - config.tol {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best = best.min(epoch_loss);
        if stalled > config.patience {
            lr /= 5.0;
            stalled = 0;
            if lr < config.min_learning_rate {
                break;
            }
        }
    }

    Ok(OovModel {
        config: config.clone(),
        layers,
        meta: TrainingMeta {
            epochs: trace.len(),
            final_loss: *trace.last().unwrap_or(&f64::NAN),
            loss_trace: trace,
        },
    })
}

/// Per-emotion regression quality. R² of a constant target is 1 when the
/// fit is exact and 0 otherwise.
pub fn regression_metrics(pred: &[EmotionVector], truth: &[EmotionVector]) -> Vec<EmotionMetrics> {
    let n = truth.len().max(1) as f64;
    Emotion::ALL
        .iter()
        .map(|&e| {
            let t: Vec<f64> = truth.iter().map(|v| v.get(e)).collect();
            let p: Vec<f64> = pred.iter().map(|v| v.get(e)).collect();
            let mean = t.iter().sum::<f64>() / n;
            let ss_res: f64 = t.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
            let ss_tot: f64 = t.iter().map(|a| (a - mean) * (a - mean)).sum();
            let r2 = if ss_tot > 0.0 {
                1.0 - ss_res / ss_tot
            } else if ss_res == 0.0 {
                1.0
            } else {
                0.0
            };
            EmotionMetrics {
                emotion: e,
                mse: ss_res / n,
                mae: t.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
                r2,
            }
        })
        .collect()
}

/// Splits rows, fits on the training part and scores the held-out part.
pub fn train_on_features(
    features: &[Vec<f64>],
    targets: &[EmotionVector],
    config: &TrainConfig,
    split_seed: u64,
) -> Result<(OovModel, Vec<EmotionMetrics>)> {
    let (train, held) = split_indices(features.len(), config.holdout_fraction, split_seed);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<EmotionVector>) {
        (
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| targets[i]).collect(),
        )
    };
    let (tx, ty) = pick(&train);
    let model = fit(&tx, &ty, config)?;
    let (hx, hy) = pick(&held);
    let metrics = if hx.is_empty() {
        Vec::new()
    } else {
        regression_metrics(&model.predict_batch(&hx)?, &hy)
    };
    Ok((model, metrics))
}

/// Trains the regressor on every lexicon word's embedding.
pub fn train_oov(
    lexicon: &Lexicon,
    embedder: &dyn EmbeddingProvider,
    config: &TrainConfig,
    split_seed: u64,
) -> Result<(OovModel, Vec<EmotionMetrics>)> {
    if lexicon.is_empty() {
        return Err(Error::Argument("cannot train on an empty lexicon".into()));
    }
    let entries = lexicon.entries();
    let words: Vec<String> = entries.iter().map(|(w, _)| w.to_string()).collect();
    let targets: Vec<EmotionVector> = entries.iter().map(|(_, v)| **v).collect();
    let features = crate::gateway::embed_direct(&words, embedder)?;
    train_on_features(&features, &targets, config, split_seed)
}
