//! A small task-conditioned query segmenter.
//!
//! Encoder: a 4×4 stride-4 patch convolution then a 2×2 stride-2
//! convolution, both followed by SiLU, giving features at 1/4 and 1/8 of the
//! input. A hashed bag-of-tokens embedding of the task text seeds N queries
//! (N−1 offset copies plus the plain task row). L decoder layers each run
//! single-head cross-attention to the 1/8 level, then the 1/4 level, then a
//! SiLU feed-forward block, all residual. Query n predicts class logits and
//! a mask logit map: its embedding dotted with per-pixel projections of the
//! 1/4 features, bilinearly upsampled to the input size.
//!
//! All parameters live in one flat `Vec<f64>`; [`ParamLayout`] names the
//! slices. Gradients are derived by hand in [`ToyModel::backward`].

mod checkpoint;
mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::imageio::RgbImage;
use crate::layout::{Grid, LayoutMask, NUM_CLASSES};
use crate::rng::{Purpose, Stream};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    batch_loss, epoch_items, infer, train, AdamW, BatchLoss, EpochLog, OptimizerConfig, TrainConfig, TrainItem, TrainOutcome,
    TrainSetup,
};

/// Logit used for a class that no query is responsible for.
pub const NO_QUERY_LOGIT: f64 = -8.0;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("image is {got_w}x{got_h}, model expects {want_w}x{want_h}")]
    ImageSize { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("task text is empty")]
    EmptyTask,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
    #[error(transparent)]
    Degen(#[from] crate::degen::DegenError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub height: usize,
    /// Encoder channels C.
    pub channels: usize,
    /// Query and token embedding width d.
    pub dim: usize,
    /// Query count N.
    pub queries: usize,
    /// Decoder layers L.
    pub layers: usize,
    pub ffn_dim: usize,
    /// Rows in the hashed token table.
    pub vocab: usize,
    pub task: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            channels: 32,
            dim: 16,
            queries: 6,
            layers: 2,
            ffn_dim: 32,
            vocab: 256,
            task: "the task is semantic".into(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.width == 0 || self.height == 0 || self.width % 8 != 0 || self.height % 8 != 0 {
            return Err(ModelError::Config(format!(
                "image size {}x{} must be positive multiples of 8",
                self.width, self.height
            )));
        }
        if self.queries < 2 {
            return Err(ModelError::Config(format!("need at least 2 queries, got {}", self.queries)));
        }
        for (name, v) in [
            ("channels", self.channels),
            ("dim", self.dim),
            ("layers", self.layers),
            ("ffn_dim", self.ffn_dim),
            ("vocab", self.vocab),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.task.split_whitespace().next().is_none() {
            return Err(ModelError::EmptyTask);
        }
        Ok(())
    }
}

/// Named slices of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    entries: Vec<(String, Range<usize>)>,
    total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, len: usize) -> Range<usize> {
        let r = self.total..self.total + len;
        self.entries.push((name, r.clone()));
        self.total += len;
        r
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn entries(&self) -> &[(String, Range<usize>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }
}

#[derive(Debug, Clone)]
struct AttnSlots {
    wq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
}

#[derive(Debug, Clone)]
struct LayerSlots {
    attn: [AttnSlots; 2],
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

#[derive(Debug, Clone)]
struct Slots {
    embed: Range<usize>,
    offsets: Range<usize>,
    enc_w1: Range<usize>,
    enc_b1: Range<usize>,
    enc_w2: Range<usize>,
    enc_b2: Range<usize>,
    layers: Vec<LayerSlots>,
    cls_w: Range<usize>,
    cls_b: Range<usize>,
    mask_w: Range<usize>,
    mask_b: Range<usize>,
    pix_w: Range<usize>,
    pix_b: Range<usize>,
    tau: usize,
}

/// Two-tap linear interpolation weights for one output index.
#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    w0: f64,
    w1: f64,
}

/// Half-pixel-centered linear resampling taps (the align_corners=False rule).
fn resample_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let l = src - i0 as f64;
            Tap { i0, i1, w0: 1.0 - l, w1: l }
        })
        .collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// y[rows×out] = x[rows×inp] · Wᵀ (+ b), W is out×inp row-major.
fn linear(x: &[f64], w: &[f64], b: Option<&[f64]>, rows: usize, inp: usize, out: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * out];
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        let yr = &mut y[r * out..(r + 1) * out];
        for (o, yo) in yr.iter_mut().enumerate() {
            let wo = &w[o * inp..(o + 1) * inp];
            let mut acc = b.map_or(0.0, |b| b[o]);
            for (a, c) in xr.iter().zip(wo) {
                acc += a * c;
            }
            *yo = acc;
        }
    }
    y
}

/// Backward of [`linear`]: accumulates dW (and db), returns dx when asked.
#[allow(clippy::too_many_arguments)]
fn linear_back(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: Option<&mut [f64]>,
    rows: usize,
    inp: usize,
    out: usize,
    want_dx: bool,
) -> Option<Vec<f64>> {
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..out {
            let g = dy[r * out + o];
            if g == 0.0 {
                continue;
            }
            for (d, a) in dw[o * inp..(o + 1) * inp].iter_mut().zip(xr) {
                *d += g * a;
            }
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            for o in 0..out {
                db[o] += dy[r * out + o];
            }
        }
    }
    if !want_dx {
        return None;
    }
    let mut dx = vec![0.0; rows * inp];
    for r in 0..rows {
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for o in 0..out {
            let g = dy[r * out + o];
            if g == 0.0 {
                continue;
            }
            for (d, c) in dxr.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                *d += g * c;
            }
        }
    }
    Some(dx)
}

/// FNV-1a, 64 bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Table rows for the whitespace tokens of `text`. Each token is hashed
/// together with its position (`"{pos}:{token}"`), so word order matters.
pub fn token_rows(text: &str, vocab: usize) -> Vec<usize> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, t)| (fnv1a(format!("{i}:{t}").as_bytes()) % vocab as u64) as usize)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskToken {
    pub text: String,
    pub rows: Vec<usize>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub n: usize,
    pub dim: usize,
    /// N×d row-major; the last row is the task embedding.
    pub q: Vec<f64>,
}

/// Encoder output: C×h×w grids stored position-major (`[pos][channel]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub channels: usize,
    pub quarter: (usize, usize),
    pub eighth: (usize, usize),
    pub f4: Vec<f64>,
    pub f8: Vec<f64>,
}

#[derive(Debug, Clone)]
struct EncoderCache {
    patches: Vec<f64>,
    a1: Vec<f64>,
    in2: Vec<f64>,
    a2: Vec<f64>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    x_in: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    attn: [AttnCache; 2],
    ffn_in: Vec<f64>,
    h: Vec<f64>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    enc: EncoderCache,
    pyramid: FeaturePyramid,
    task_rows: Vec<usize>,
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    mask_embed: Vec<f64>,
    pix: Vec<f64>,
}

/// Decoder outputs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub queries: usize,
    pub dim: usize,
    pub width: usize,
    pub height: usize,
    /// N×d final query embeddings.
    pub query_embed: Vec<f64>,
    /// N×(K+1) class logits.
    pub class_logits: Vec<f64>,
    /// N×H×W mask logits.
    pub mask_logits: Vec<f64>,
}

impl Prediction {
    pub fn mask_logit_map(&self, n: usize) -> &[f64] {
        let hw = self.width * self.height;
        &self.mask_logits[n * hw..(n + 1) * hw]
    }

    /// Mean of the final query embeddings.
    pub fn pooled(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for n in 0..self.queries {
            for (o, v) in out.iter_mut().zip(&self.query_embed[n * self.dim..(n + 1) * self.dim]) {
                *o += v / self.queries as f64;
            }
        }
        out
    }

    /// Class of each query by class-logit argmax, ties to the lower id.
    pub fn query_classes(&self) -> Vec<usize> {
        (0..self.queries)
            .map(|n| argmax_first(&self.class_logits[n * NUM_CLASSES..(n + 1) * NUM_CLASSES]))
            .collect()
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Fixed training slot of query `n`.
pub fn slot_class(n: usize) -> usize {
    n % NUM_CLASSES
}

/// Per-class logit maps from a query→class assignment: the pixelwise max
/// over the class's queries, [`NO_QUERY_LOGIT`] where it has none. The
/// second return holds the winning query per class and pixel.
pub fn class_logit_maps(pred: &Prediction, assign: &[usize]) -> (Vec<Grid>, Vec<Vec<Option<usize>>>) {
    let (w, h) = (pred.width, pred.height);
    let mut maps = Vec::with_capacity(NUM_CLASSES);
    let mut owners = Vec::with_capacity(NUM_CLASSES);
    for k in 0..NUM_CLASSES {
        let qs: Vec<usize> = (0..pred.queries).filter(|&n| assign[n] == k).collect();
        let mut g = Grid::filled(w, h, NO_QUERY_LOGIT);
        let mut own = vec![None; w * h];
        if !qs.is_empty() {
            for i in 0..w * h {
                let mut best = qs[0];
                for &n in &qs[1..] {
                    if pred.mask_logit_map(n)[i] > pred.mask_logit_map(best)[i] {
                        best = n;
                    }
                }
                g.data_mut()[i] = pred.mask_logit_map(best)[i];
                own[i] = Some(best);
            }
        }
        maps.push(g);
        owners.push(own);
    }
    (maps, owners)
}

/// Per-pixel softmax across a stack of maps.
pub fn softmax_stack(maps: &[Grid]) -> Vec<Grid> {
    let (w, h) = (maps[0].width(), maps[0].height());
    let mut out: Vec<Grid> = maps.iter().map(|_| Grid::zeros(w, h)).collect();
    for i in 0..w * h {
        let m = maps.iter().map(|g| g.data()[i]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = maps.iter().map(|g| (g.data()[i] - m).exp()).sum();
        for (o, g) in out.iter_mut().zip(maps) {
            o.data_mut()[i] = (g.data()[i] - m).exp() / z;
        }
    }
    out
}

/// Class maps at inference: queries go to their argmax class, a class map
/// is the sigmoid of its queries' max mask logit (a constant prior when no
/// query claims the class).
pub fn class_maps(pred: &Prediction) -> Vec<Grid> {
    let (logits, _) = class_logit_maps(pred, &pred.query_classes());
    logits
        .into_iter()
        .map(|g| {
            let (w, h) = (g.width(), g.height());
            Grid::new(w, h, g.into_data().into_iter().map(sigmoid).collect()).expect("same size")
        })
        .collect()
}

/// Per-pixel class distribution: softmax over [`class_maps`].
pub fn predict_masks(pred: &Prediction) -> Vec<Grid> {
    softmax_stack(&class_maps(pred))
}

/// Per-pixel argmax, ties to the lower class id.
pub fn assign_labels(probs: &[Grid]) -> LayoutMask {
    let (w, h) = (probs[0].width(), probs[0].height());
    LayoutMask::from_fn(w, h, |r, c| {
        let mut best = 0;
        for k in 1..probs.len() {
            if probs[k].get(r, c) > probs[best].get(r, c) {
                best = k;
            }
        }
        best as u8
    })
}

/// Model structure: config, parameter layout and resampling tables.
/// Parameters are passed separately so optimizers and checkers can own them.
#[derive(Debug, Clone)]
pub struct ToyModel {
    cfg: ModelConfig,
    layout: ParamLayout,
    slots: Slots,
    taps_x: Vec<Tap>,
    taps_y: Vec<Tap>,
}

const PATCH: usize = 4;

impl ToyModel {
    pub fn new(cfg: ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let (c, d, f) = (cfg.channels, cfg.dim, cfg.ffn_dim);
        let mut l = ParamLayout { entries: Vec::new(), total: 0 };
        let embed = l.push("embed".into(), cfg.vocab * d);
        let offsets = l.push("offsets".into(), (cfg.queries - 1) * d);
        let enc_w1 = l.push("enc.w1".into(), c * 3 * PATCH * PATCH);
        let enc_b1 = l.push("enc.b1".into(), c);
        let enc_w2 = l.push("enc.w2".into(), c * c * 4);
        let enc_b2 = l.push("enc.b2".into(), c);
        let mut layers = Vec::new();
        for i in 0..cfg.layers {
            let mut attn = |lvl: &str| AttnSlots {
                wq: l.push(format!("dec.{i}.{lvl}.wq"), d * d),
                wk: l.push(format!("dec.{i}.{lvl}.wk"), d * c),
                wv: l.push(format!("dec.{i}.{lvl}.wv"), d * c),
            };
            let attn = [attn("s8"), attn("s4")];
            layers.push(LayerSlots {
                attn,
                w1: l.push(format!("dec.{i}.ffn.w1"), f * d),
                b1: l.push(format!("dec.{i}.ffn.b1"), f),
                w2: l.push(format!("dec.{i}.ffn.w2"), d * f),
                b2: l.push(format!("dec.{i}.ffn.b2"), d),
            });
        }
        let cls_w = l.push("head.class.w".into(), NUM_CLASSES * d);
        let cls_b = l.push("head.class.b".into(), NUM_CLASSES);
        let mask_w = l.push("head.mask.w".into(), d * d);
        let mask_b = l.push("head.mask.b".into(), d);
        let pix_w = l.push("head.pix.w".into(), d * c);
        let pix_b = l.push("head.pix.b".into(), d);
        let tau = l.push("tau".into(), 1).start;
        let slots = Slots {
            embed,
            offsets,
            enc_w1,
            enc_b1,
            enc_w2,
            enc_b2,
            layers,
            cls_w,
            cls_b,
            mask_w,
            mask_b,
            pix_w,
            pix_b,
            tau,
        };
        let taps_x = resample_taps(cfg.width / 4, cfg.width);
        let taps_y = resample_taps(cfg.height / 4, cfg.height);
        Ok(Self { cfg, layout: l, slots, taps_x, taps_y })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    pub fn tau_index(&self) -> usize {
        self.slots.tau
    }

    /// LeCun-normal weights, zero biases, N(0, 1) token rows, N(0, 0.25)
    /// query offsets and temperature `tau`.
    pub fn init_params(&self, seed: u64, tau: f64) -> Vec<f64> {
        let (c, d) = (self.cfg.channels, self.cfg.dim);
        let mut p = vec![0.0; self.layout.len()];
        let mut rng = Stream::new(seed, Purpose::Init, 0);
        for (name, r) in &self.layout.entries {
            let last = name.rsplit('.').next().unwrap_or(name);
            let std = match name.as_str() {
                "tau" => {
                    p[r.start] = tau;
                    continue;
                }
                "embed" => 1.0,
                "offsets" => 0.5,
                "enc.w1" => 1.0 / ((3 * PATCH * PATCH) as f64).sqrt(),
                "enc.w2" => 1.0 / ((4 * c) as f64).sqrt(),
                _ if last.starts_with('b') => continue,
                _ if last == "wk" || last == "wv" || name == "head.pix.w" => 1.0 / (c as f64).sqrt(),
                _ if name.ends_with("ffn.w2") => 1.0 / (self.cfg.ffn_dim as f64).sqrt(),
                _ => 1.0 / (d as f64).sqrt(),
            };
            for v in &mut p[r.clone()] {
                *v = std * rng.gaussian();
            }
        }
        p
    }

    fn check_image(&self, img: &RgbImage) -> Result<(), ModelError> {
        if img.width() != self.cfg.width || img.height() != self.cfg.height {
            return Err(ModelError::ImageSize {
                got_w: img.width(),
                got_h: img.height(),
                want_w: self.cfg.width,
                want_h: self.cfg.height,
            });
        }
        Ok(())
    }

    pub fn embed_task(&self, params: &[f64], text: &str) -> Result<TaskToken, ModelError> {
        let rows = token_rows(text, self.cfg.vocab);
        if rows.is_empty() {
            return Err(ModelError::EmptyTask);
        }
        let embedding = self.embed_rows(params, &rows);
        Ok(TaskToken { text: text.to_string(), rows, embedding })
    }

    fn embed_rows(&self, params: &[f64], rows: &[usize]) -> Vec<f64> {
        let d = self.cfg.dim;
        let table = &params[self.slots.embed.clone()];
        let mut out = vec![0.0; d];
        for &r in rows {
            for (o, v) in out.iter_mut().zip(&table[r * d..(r + 1) * d]) {
                *o += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }

    /// Q' rows are the task embedding plus learned offsets; the last row is
    /// the task embedding itself.
    pub fn init_queries(&self, params: &[f64], task: &TaskToken) -> QuerySet {
        let (n, d) = (self.cfg.queries, self.cfg.dim);
        let off = &params[self.slots.offsets.clone()];
        let mut q = Vec::with_capacity(n * d);
        for i in 0..n - 1 {
            q.extend(task.embedding.iter().zip(&off[i * d..(i + 1) * d]).map(|(a, b)| a + b));
        }
        q.extend_from_slice(&task.embedding);
        QuerySet { n, dim: d, q }
    }

    fn encode_cached(&self, params: &[f64], img: &RgbImage) -> (FeaturePyramid, EncoderCache) {
        let c = self.cfg.channels;
        let (w4, h4) = (self.cfg.width / 4, self.cfg.height / 4);
        let (w8, h8) = (w4 / 2, h4 / 2);
        let pin = 3 * PATCH * PATCH;
        let mut patches = vec![0.0; w4 * h4 * pin];
        for i in 0..h4 {
            for j in 0..w4 {
                let dst = &mut patches[(i * w4 + j) * pin..(i * w4 + j + 1) * pin];
                for dy in 0..PATCH {
                    for dx in 0..PATCH {
                        let px = img.get(i * PATCH + dy, j * PATCH + dx);
                        for ch in 0..3 {
                            dst[ch * PATCH * PATCH + dy * PATCH + dx] = px[ch] - 0.5;
                        }
                    }
                }
            }
        }
        let p = params;
        let a1 = linear(&patches, &p[self.slots.enc_w1.clone()], Some(&p[self.slots.enc_b1.clone()]), w4 * h4, pin, c);
        let f4: Vec<f64> = a1.iter().map(|&v| silu(v)).collect();
        let in_c = 4 * c;
        let mut in2 = vec![0.0; w8 * h8 * in_c];
        for i in 0..h8 {
            for j in 0..w8 {
                let dst = &mut in2[(i * w8 + j) * in_c..(i * w8 + j + 1) * in_c];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let src = ((2 * i + dy) * w4 + 2 * j + dx) * c;
                        for ch in 0..c {
                            dst[ch * 4 + dy * 2 + dx] = f4[src + ch];
                        }
                    }
                }
            }
        }
        let a2 = linear(&in2, &p[self.slots.enc_w2.clone()], Some(&p[self.slots.enc_b2.clone()]), w8 * h8, in_c, c);
        let f8: Vec<f64> = a2.iter().map(|&v| silu(v)).collect();
        let fp = FeaturePyramid { channels: c, quarter: (w4, h4), eighth: (w8, h8), f4, f8 };
        (fp, EncoderCache { patches, a1, in2, a2 })
    }

    pub fn encode(&self, params: &[f64], img: &RgbImage) -> Result<FeaturePyramid, ModelError> {
        self.check_image(img)?;
        Ok(self.encode_cached(params, img).0)
    }

    pub fn forward(&self, params: &[f64], img: &RgbImage) -> Result<(Prediction, ForwardCache), ModelError> {
        self.check_image(img)?;
        let (fp, enc) = self.encode_cached(params, img);
        let task = self.embed_task(params, &self.cfg.task)?;
        let qs = self.init_queries(params, &task);
        self.decode_cached(params, qs, fp, enc, task.rows)
    }

    /// Decoder and heads on given queries and features.
    pub fn decode(&self, params: &[f64], q: &QuerySet, fp: &FeaturePyramid) -> Prediction {
        let enc = EncoderCache { patches: Vec::new(), a1: Vec::new(), in2: Vec::new(), a2: Vec::new() };
        self.decode_cached(params, q.clone(), fp.clone(), enc, Vec::new()).expect("decode").0
    }

    /// Attention weights of every layer and level, N×P each, in execution order.
    pub fn attention_maps(&self, params: &[f64], img: &RgbImage) -> Result<Vec<Vec<f64>>, ModelError> {
        let (_, cache) = self.forward(params, img)?;
        Ok(cache.layers.iter().flat_map(|l| l.attn.iter().map(|a| a.a.clone())).collect())
    }

    fn decode_cached(
        &self,
        params: &[f64],
        qs: QuerySet,
        fp: FeaturePyramid,
        enc: EncoderCache,
        task_rows: Vec<usize>,
    ) -> Result<(Prediction, ForwardCache), ModelError> {
        let (n, d, c, fdim) = (self.cfg.queries, self.cfg.dim, self.cfg.channels, self.cfg.ffn_dim);
        let p = params;
        let scale = 1.0 / (d as f64).sqrt();
        let mut x = qs.q;
        let mut layers = Vec::with_capacity(self.cfg.layers);
        let (p4, p8) = (fp.quarter.0 * fp.quarter.1, fp.eighth.0 * fp.eighth.1);
        for ls in &self.slots.layers {
            let mut caches = Vec::with_capacity(2);
            for (lvl, feats, np) in [(0, &fp.f8, p8), (1, &fp.f4, p4)] {
                let s = &ls.attn[lvl];
                let q = linear(&x, &p[s.wq.clone()], None, n, d, d);
                let k = linear(feats, &p[s.wk.clone()], None, np, c, d);
                let v = linear(feats, &p[s.wv.clone()], None, np, c, d);
                let mut a = vec![0.0; n * np];
                for i in 0..n {
                    let qi = &q[i * d..(i + 1) * d];
                    let row = &mut a[i * np..(i + 1) * np];
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = scale * qi.iter().zip(&k[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum::<f64>();
                    }
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for r in row.iter_mut() {
                        *r = (*r - m).exp();
                        z += *r;
                    }
                    row.iter_mut().for_each(|r| *r /= z);
                }
                let x_in = x.clone();
                for i in 0..n {
                    for j in 0..np {
                        let aij = a[i * np + j];
                        for t in 0..d {
                            x[i * d + t] += aij * v[j * d + t];
                        }
                    }
                }
                caches.push(AttnCache { x_in, q, k, v, a });
            }
            let ffn_in = x.clone();
            let h = linear(&x, &p[ls.w1.clone()], Some(&p[ls.b1.clone()]), n, d, fdim);
            let sh: Vec<f64> = h.iter().map(|&v| silu(v)).collect();
            let y = linear(&sh, &p[ls.w2.clone()], Some(&p[ls.b2.clone()]), n, fdim, d);
            x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
            let attn: [AttnCache; 2] = caches.try_into().expect("two levels");
            layers.push(LayerCache { attn, ffn_in, h });
        }
        let class_logits = linear(&x, &p[self.slots.cls_w.clone()], Some(&p[self.slots.cls_b.clone()]), n, d, NUM_CLASSES);
        let mask_embed = linear(&x, &p[self.slots.mask_w.clone()], Some(&p[self.slots.mask_b.clone()]), n, d, d);
        let pix = linear(&fp.f4, &p[self.slots.pix_w.clone()], Some(&p[self.slots.pix_b.clone()]), p4, c, d);
        let h4 = fp.quarter.1;
        let (w, h) = (self.cfg.width, self.cfg.height);
        let mut mask_logits = vec![0.0; n * w * h];
        let mut low = vec![0.0; p4];
        let mut tmp = vec![0.0; h4 * w];
        for q in 0..n {
            let e = &mask_embed[q * d..(q + 1) * d];
            for (pos, l) in low.iter_mut().enumerate() {
                *l = e.iter().zip(&pix[pos * d..(pos + 1) * d]).map(|(a, b)| a * b).sum();
            }
            self.upsample(&low, &mut tmp, &mut mask_logits[q * w * h..(q + 1) * w * h]);
        }
        let pred = Prediction { queries: n, dim: d, width: w, height: h, query_embed: x.clone(), class_logits, mask_logits };
        let cache = ForwardCache { enc, pyramid: fp, task_rows, layers, x_final: x, mask_embed, pix };
        Ok((pred, cache))
    }

    fn upsample(&self, low: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        let w4 = self.cfg.width / 4;
        let w = self.cfg.width;
        for a in 0..self.cfg.height / 4 {
            for (x, t) in self.taps_x.iter().enumerate() {
                tmp[a * w + x] = t.w0 * low[a * w4 + t.i0] + t.w1 * low[a * w4 + t.i1];
            }
        }
        for (y, t) in self.taps_y.iter().enumerate() {
            for x in 0..w {
                out[y * w + x] = t.w0 * tmp[t.i0 * w + x] + t.w1 * tmp[t.i1 * w + x];
            }
        }
    }

    fn upsample_back(&self, dout: &[f64], dlow: &mut [f64]) {
        let w4 = self.cfg.width / 4;
        let w = self.cfg.width;
        let mut dtmp = vec![0.0; self.cfg.height / 4 * w];
        for (y, t) in self.taps_y.iter().enumerate() {
            for x in 0..w {
                let g = dout[y * w + x];
                dtmp[t.i0 * w + x] += t.w0 * g;
                dtmp[t.i1 * w + x] += t.w1 * g;
            }
        }
        for a in 0..self.cfg.height / 4 {
            for (x, t) in self.taps_x.iter().enumerate() {
                let g = dtmp[a * w + x];
                dlow[a * w4 + t.i0] += t.w0 * g;
                dlow[a * w4 + t.i1] += t.w1 * g;
            }
        }
    }

    /// Accumulates parameter gradients into `grad` given upstream gradients
    /// of the mask logits (N×H×W), class logits (N×(K+1)) and final query
    /// embeddings (N×d).
    pub fn backward(
        &self,
        params: &[f64],
        cache: &ForwardCache,
        d_mask_logits: &[f64],
        d_class_logits: &[f64],
        d_query_embed: &[f64],
        grad: &mut [f64],
    ) {
        let (n, d, c, fdim) = (self.cfg.queries, self.cfg.dim, self.cfg.channels, self.cfg.ffn_dim);
        let (w, h) = (self.cfg.width, self.cfg.height);
        let p = params;
        let s = &self.slots;
        let fp = &cache.pyramid;
        let (p4, p8) = (fp.quarter.0 * fp.quarter.1, fp.eighth.0 * fp.eighth.1);
        let scale = 1.0 / (d as f64).sqrt();

        // mask logits -> mask embeddings and pixel projections
        let mut d_embed = vec![0.0; n * d];
        let mut d_pix = vec![0.0; p4 * d];
        let mut dlow = vec![0.0; p4];
        for q in 0..n {
            let dm = &d_mask_logits[q * w * h..(q + 1) * w * h];
            if dm.iter().all(|&g| g == 0.0) {
                continue;
            }
            dlow.iter_mut().for_each(|v| *v = 0.0);
            self.upsample_back(dm, &mut dlow);
            let e = &cache.mask_embed[q * d..(q + 1) * d];
            for (pos, &g) in dlow.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let pr = &cache.pix[pos * d..(pos + 1) * d];
                for t in 0..d {
                    d_embed[q * d + t] += g * pr[t];
                    d_pix[pos * d + t] += g * e[t];
                }
            }
        }
        let mut d_f4 = {
            let (gw, rest) = grad.split_at_mut(s.pix_b.start);
            linear_back(&fp.f4, &p[s.pix_w.clone()], &d_pix, &mut gw[s.pix_w.clone()], Some(&mut rest[..d]), p4, c, d, true)
                .expect("dx")
        };
        let x = &cache.x_final;
        let mut dx = d_query_embed.to_vec();
        {
            let (gw, rest) = grad.split_at_mut(s.mask_b.start);
            let dxm = linear_back(x, &p[s.mask_w.clone()], &d_embed, &mut gw[s.mask_w.clone()], Some(&mut rest[..d]), n, d, d, true)
                .expect("dx");
            dx.iter_mut().zip(&dxm).for_each(|(a, b)| *a += b);
        }
        {
            let (gw, rest) = grad.split_at_mut(s.cls_b.start);
            let dxc = linear_back(
                x,
                &p[s.cls_w.clone()],
                d_class_logits,
                &mut gw[s.cls_w.clone()],
                Some(&mut rest[..NUM_CLASSES]),
                n,
                d,
                NUM_CLASSES,
                true,
            )
            .expect("dx");
            dx.iter_mut().zip(&dxc).for_each(|(a, b)| *a += b);
        }

        let mut d_f8 = vec![0.0; p8 * c];
        for (ls, lc) in s.layers.iter().zip(&cache.layers).rev() {
            // feed-forward block
            let sh: Vec<f64> = lc.h.iter().map(|&v| silu(v)).collect();
            let dsh = {
                let (gw, rest) = grad.split_at_mut(ls.b2.start);
                linear_back(&sh, &p[ls.w2.clone()], &dx, &mut gw[ls.w2.clone()], Some(&mut rest[..d]), n, fdim, d, true)
                    .expect("dx")
            };
            let dh: Vec<f64> = dsh.iter().zip(&lc.h).map(|(g, &v)| g * silu_grad(v)).collect();
            {
                let (gw, rest) = grad.split_at_mut(ls.b1.start);
                let dxf = linear_back(&lc.ffn_in, &p[ls.w1.clone()], &dh, &mut gw[ls.w1.clone()], Some(&mut rest[..fdim]), n, d, fdim, true)
                    .expect("dx");
                dx.iter_mut().zip(&dxf).for_each(|(a, b)| *a += b);
            }
            // cross-attention, fine level first on the way back
            for lvl in [1, 0] {
                let ac = &lc.attn[lvl];
                let sl = &ls.attn[lvl];
                let (feats, np, dfeat) = if lvl == 0 { (&fp.f8, p8, &mut d_f8) } else { (&fp.f4, p4, &mut d_f4) };
                let mut ds = vec![0.0; n * np];
                let mut dv = vec![0.0; np * d];
                for i in 0..n {
                    let dxi = &dx[i * d..(i + 1) * d];
                    let arow = &ac.a[i * np..(i + 1) * np];
                    let mut dot = 0.0;
                    for j in 0..np {
                        let vj = &ac.v[j * d..(j + 1) * d];
                        let da: f64 = dxi.iter().zip(vj).map(|(a, b)| a * b).sum();
                        ds[i * np + j] = da;
                        dot += da * arow[j];
                        let aij = arow[j];
                        for t in 0..d {
                            dv[j * d + t] += aij * dxi[t];
                        }
                    }
                    for j in 0..np {
                        ds[i * np + j] = arow[j] * (ds[i * np + j] - dot) * scale;
                    }
                }
                let mut dq = vec![0.0; n * d];
                let mut dk = vec![0.0; np * d];
                for i in 0..n {
                    for j in 0..np {
                        let g = ds[i * np + j];
                        for t in 0..d {
                            dq[i * d + t] += g * ac.k[j * d + t];
                            dk[j * d + t] += g * ac.q[i * d + t];
                        }
                    }
                }
                let dfk = linear_back(feats, &p[sl.wk.clone()], &dk, &mut grad[sl.wk.clone()], None, np, c, d, true).expect("dx");
                let dfv = linear_back(feats, &p[sl.wv.clone()], &dv, &mut grad[sl.wv.clone()], None, np, c, d, true).expect("dx");
                for ((a, b), e) in dfeat.iter_mut().zip(&dfk).zip(&dfv) {
                    *a += b + e;
                }
                let dxq = linear_back(&ac.x_in, &p[sl.wq.clone()], &dq, &mut grad[sl.wq.clone()], None, n, d, d, true).expect("dx");
                dx.iter_mut().zip(&dxq).for_each(|(a, b)| *a += b);
            }
        }

        // queries -> offsets and token rows
        let mut d_task = vec![0.0; d];
        for i in 0..n {
            for t in 0..d {
                d_task[t] += dx[i * d + t];
                if i < n - 1 {
                    grad[s.offsets.start + i * d + t] += dx[i * d + t];
                }
            }
        }
        self.embed_rows_back(&cache.task_rows, &d_task, grad);

        // encoder
        if cache.enc.a2.is_empty() {
            return;
        }
        let da2: Vec<f64> = d_f8.iter().zip(&cache.enc.a2).map(|(g, &a)| g * silu_grad(a)).collect();
        let din2 = {
            let (gw, rest) = grad.split_at_mut(s.enc_b2.start);
            linear_back(&cache.enc.in2, &p[s.enc_w2.clone()], &da2, &mut gw[s.enc_w2.clone()], Some(&mut rest[..c]), p8, 4 * c, c, true)
                .expect("dx")
        };
        let (w4, _) = fp.quarter;
        let (w8, h8) = fp.eighth;
        for i in 0..h8 {
            for j in 0..w8 {
                let src = &din2[(i * w8 + j) * 4 * c..(i * w8 + j + 1) * 4 * c];
                for dy in 0..2 {
                    for dx_ in 0..2 {
                        let dst = ((2 * i + dy) * w4 + 2 * j + dx_) * c;
                        for ch in 0..c {
                            d_f4[dst + ch] += src[ch * 4 + dy * 2 + dx_];
                        }
                    }
                }
            }
        }
        let da1: Vec<f64> = d_f4.iter().zip(&cache.enc.a1).map(|(g, &a)| g * silu_grad(a)).collect();
        let (gw, rest) = grad.split_at_mut(s.enc_b1.start);
        linear_back(&cache.enc.patches, &p[s.enc_w1.clone()], &da1, &mut gw[s.enc_w1.clone()], Some(&mut rest[..c]), p4, 3 * PATCH * PATCH, c, false);
    }

    /// Gradient of an averaged token embedding back into the table.
    pub fn embed_rows_back(&self, rows: &[usize], d_out: &[f64], grad: &mut [f64]) {
        if rows.is_empty() {
            return;
        }
        let d = self.cfg.dim;
        let inv = 1.0 / rows.len() as f64;
        for &r in rows {
            let base = self.slots.embed.start + r * d;
            for t in 0..d {
                grad[base + t] += inv * d_out[t];
            }
        }
    }

    pub fn embed_text(&self, params: &[f64], text: &str) -> (Vec<usize>, Vec<f64>) {
        let rows = token_rows(text, self.cfg.vocab);
        let e = if rows.is_empty() { vec![0.0; self.cfg.dim] } else { self.embed_rows(params, &rows) };
        (rows, e)
    }

    pub fn predict(&self, params: &[f64], img: &RgbImage) -> Result<Prediction, ModelError> {
        Ok(self.forward(params, img)?.0)
    }
}

#[cfg(test)]
mod tests;
