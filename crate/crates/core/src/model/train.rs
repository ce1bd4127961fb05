use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{class_logit_maps, slot_class, softmax_stack, sigmoid, ModelConfig, ModelError, ToyModel};
use super::{assign_labels, predict_masks};
use crate::degen::{augment_sample, augment_stream, AugmentConfig};
use crate::imageio::RgbImage;
use crate::layout::{build_dag, Grid, LayoutMask, RoomTaxonomy, SurfaceSet, NUM_CLASSES, NUM_SURFACES};
use crate::losses::{
    contrastive_loss, edge_loss, geo_loss, gt_edge_map, one_hot, smoothness_loss, surface_loss, ContrastiveConfig,
    EdgeLossConfig, LossWeights,
};
use crate::metrics::pixel_error;
use crate::rng::{Purpose, Stream};
use crate::synth::{Sample, SynthConfig};

/// Bounds applied to the learnable temperature after every step.
const TAU_RANGE: (f64, f64) = (0.01, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { lr: 3e-3, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(ModelError::Config(format!("bad optimizer settings {self:?}")));
        }
        Ok(())
    }

    /// Cosine decay from `lr` to 0 over training progress in [0, 1].
    pub fn lr_at(&self, progress: f64) -> f64 {
        0.5 * self.lr * (1.0 + (PI * progress.clamp(0.0, 1.0)).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Samples used for the per-epoch pixel error when no validation set is given.
    pub monitor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 4, seed: 0, monitor: 32 }
    }
}

/// Everything `train` needs besides data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub optimizer: OptimizerConfig,
    pub weights: LossWeights,
    pub edge: EdgeLossConfig,
    pub contrastive: ContrastiveConfig,
    pub augment: AugmentConfig,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.weights.validate()?;
        self.edge.validate()?;
        self.contrastive.validate()?;
        self.augment.validate()?;
        if self.train.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One supervised example with its precomputed targets.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub id: u64,
    pub image: RgbImage,
    pub mask: LayoutMask,
    pub surfaces: SurfaceSet,
    pub edges: Grid,
    pub one_hot: Vec<Grid>,
}

impl TrainItem {
    pub fn new(id: u64, image: RgbImage, mask: LayoutMask, surfaces: SurfaceSet, edge: &EdgeLossConfig) -> Self {
        let edges = gt_edge_map(&mask, edge);
        let one_hot = one_hot(&mask, NUM_CLASSES);
        Self { id, image, mask, surfaces, edges, one_hot }
    }

    pub fn from_sample(s: &Sample, edge: &EdgeLossConfig) -> Self {
        Self::new(s.id, s.image.clone(), s.mask.clone(), s.poly.surface_set(), edge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub grad: Vec<f64>,
    pub terms: BTreeMap<String, f64>,
}

struct SampleGrad {
    value: f64,
    grad: Vec<f64>,
    terms: Vec<(&'static str, f64)>,
}

/// Per-sample loss (surface, query classification, geometry) and its
/// gradient with respect to mask and class logits.
fn sample_objective(
    pred: &super::Prediction,
    item: &TrainItem,
    weights: &LossWeights,
    edge_cfg: &EdgeLossConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<(&'static str, f64)>), ModelError> {
    let (w, h) = (pred.width, pred.height);
    let hw = w * h;
    let n = pred.queries;
    let slots: Vec<usize> = (0..n).map(slot_class).collect();
    let (z, owners) = class_logit_maps(pred, &slots);
    let probs = softmax_stack(&z);
    let masks: Vec<Grid> = z[1..]
        .iter()
        .map(|g| Grid::new(w, h, g.data().iter().map(|&v| sigmoid(v)).collect()).expect("size"))
        .collect();
    debug_assert_eq!(masks.len(), NUM_SURFACES);
    let surf = surface_loss(&probs, &masks, &item.mask, weights)?;
    let mut d_probs = surf.grads[0].clone();
    let d_masks = &surf.grads[1];
    let mut terms: Vec<(&'static str, f64)> = surf.terms.clone();
    let mut value = surf.value;
    if weights.lambda4 > 0.0 || weights.lambda5 > 0.0 {
        let e = edge_loss(&probs, &item.edges, edge_cfg)?;
        let s = smoothness_loss(&probs, &item.one_hot)?;
        let geo = geo_loss(&e, &s, weights)?;
        value += geo.value;
        d_probs.iter_mut().zip(&geo.grads[0]).for_each(|(a, b)| *a += b);
        terms.extend(geo.terms.iter().copied());
    }
    // query classification toward the fixed slots, weighted like pixel CE
    let mut d_class = vec![0.0; n * NUM_CLASSES];
    let mut qce = 0.0;
    for q in 0..n {
        let row = &pred.class_logits[q * NUM_CLASSES..(q + 1) * NUM_CLASSES];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let zsum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for k in 0..NUM_CLASSES {
            let p = (row[k] - m).exp() / zsum;
            let t = if k == slots[q] { 1.0 } else { 0.0 };
            d_class[q * NUM_CLASSES + k] = weights.lambda1 * (p - t) / n as f64;
        }
        qce -= row[slots[q]] - m - zsum.ln();
    }
    qce /= n as f64;
    value += weights.lambda1 * qce;
    terms.push(("query", qce));

    let mut d_mask = vec![0.0; n * hw];
    for i in 0..hw {
        let dot: f64 = (0..NUM_CLASSES).map(|k| d_probs[k * hw + i] * probs[k].data()[i]).sum();
        for k in 0..NUM_CLASSES {
            let Some(owner) = owners[k][i] else { continue };
            let p = probs[k].data()[i];
            let mut dz = p * (d_probs[k * hw + i] - dot);
            if k >= 1 {
                let s = masks[k - 1].data()[i];
                dz += d_masks[(k - 1) * hw + i] * s * (1.0 - s);
            }
            d_mask[owner * hw + i] += dz;
        }
    }
    Ok((value, d_mask, d_class, terms))
}

/// Mean per-sample objective plus the batch contrastive term, with the
/// gradient over all parameters. Per-sample work runs on the rayon pool;
/// gradients are reduced in sample order, so the result does not depend on
/// the thread count.
pub fn batch_loss(
    model: &ToyModel,
    params: &[f64],
    items: &[TrainItem],
    weights: &LossWeights,
    edge_cfg: &EdgeLossConfig,
) -> Result<BatchLoss, ModelError> {
    let b = items.len();
    if b == 0 {
        return Err(ModelError::Loss(crate::losses::LossError::EmptyBatch));
    }
    let d = model.config().dim;
    let n = model.config().queries;
    let fwd: Vec<_> = items
        .par_iter()
        .map(|it| model.forward(params, &it.image))
        .collect::<Result<Vec<_>, _>>()?;
    let mut q_obj = Vec::with_capacity(b * d);
    let mut q_txt = Vec::with_capacity(b * d);
    let mut txt_rows = Vec::with_capacity(b);
    for ((pred, _), it) in fwd.iter().zip(items) {
        q_obj.extend(pred.pooled());
        let (rows, e) = model.embed_text(params, &it.surfaces.describe());
        q_txt.extend(e);
        txt_rows.push(rows);
    }
    let tau = params[model.tau_index()];
    let con = contrastive_loss(&q_obj, &q_txt, d, &ContrastiveConfig { tau })?;
    let inv_b = 1.0 / b as f64;
    let per: Vec<SampleGrad> = fwd
        .par_iter()
        .zip(items.par_iter())
        .enumerate()
        .map(|(i, ((pred, cache), it))| {
            let (value, mut dm, mut dc, terms) = sample_objective(pred, it, weights, edge_cfg)?;
            dm.iter_mut().for_each(|v| *v *= inv_b);
            dc.iter_mut().for_each(|v| *v *= inv_b);
            let mut dq = vec![0.0; n * d];
            for q in 0..n {
                for t in 0..d {
                    dq[q * d + t] = con.grads[0][i * d + t] / n as f64;
                }
            }
            let mut grad = vec![0.0; model.num_params()];
            model.backward(params, cache, &dm, &dc, &dq, &mut grad);
            Ok(SampleGrad { value, grad, terms })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;

    let mut grad = vec![0.0; model.num_params()];
    let mut value = con.value;
    let mut terms: BTreeMap<String, f64> = BTreeMap::new();
    for s in &per {
        value += inv_b * s.value;
        grad.iter_mut().zip(&s.grad).for_each(|(a, g)| *a += g);
        for (k, v) in &s.terms {
            *terms.entry((*k).to_string()).or_insert(0.0) += inv_b * v;
        }
    }
    for (i, rows) in txt_rows.iter().enumerate() {
        model.embed_rows_back(rows, &con.grads[1][i * d..(i + 1) * d], &mut grad);
    }
    grad[model.tau_index()] += con.grads[2][0];
    terms.insert("contrastive".into(), con.value);
    Ok(BatchLoss { value, grad, terms })
}

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    /// Coordinates excluded from weight decay.
    no_decay: Vec<usize>,
}

impl AdamW {
    pub fn new(cfg: OptimizerConfig, n: usize, no_decay: Vec<usize>) -> Self {
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0, no_decay }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let decay = if self.no_decay.contains(&i) { 0.0 } else { c.weight_decay * params[i] };
            params[i] -= lr * (mhat / (vhat.sqrt() + c.eps) + decay);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub items: usize,
    pub lr: f64,
    pub loss: f64,
    pub terms: BTreeMap<String, f64>,
    /// Mean pixel error (percent) on the monitor set after the epoch.
    pub pe: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub params: Vec<f64>,
    pub log: Vec<EpochLog>,
}

/// Predicted label mask for one image.
pub fn infer(model: &ToyModel, params: &[f64], image: &RgbImage) -> Result<LayoutMask, ModelError> {
    let pred = model.predict(params, image)?;
    Ok(assign_labels(&predict_masks(&pred)))
}

fn mean_pe(model: &ToyModel, params: &[f64], samples: &[Sample]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let pes = samples
        .par_iter()
        .map(|s| {
            let m = infer(model, params, &s.image)?;
            Ok(pixel_error(&m, &s.mask).expect("same size"))
        })
        .collect::<Result<Vec<f64>, ModelError>>()?;
    Ok(pes.iter().sum::<f64>() / pes.len() as f64)
}

/// The epoch's training items: every sample once (flipped and jittered per
/// the augment config, never degenerated), plus a degenerated copy of each
/// sample with probability `degen_prob`.
pub fn epoch_items(
    samples: &[Sample],
    taxonomy: &RoomTaxonomy,
    setup: &TrainSetup,
    render: &SynthConfig,
    epoch: usize,
) -> Result<Vec<TrainItem>, ModelError> {
    let dag = build_dag(taxonomy)?;
    let aug = &setup.augment;
    let plain = AugmentConfig { degen_prob: 0.0, ..*aug };
    let forced = AugmentConfig { degen_prob: 1.0, ..*aug };
    let mut items = Vec::with_capacity(samples.len() * 2);
    for (i, s) in samples.iter().enumerate() {
        let mut rng = augment_stream(aug, epoch as u64, i as u64);
        let (a, _) = augment_sample(s, &dag, taxonomy, &plain, render, &mut rng)?;
        items.push(TrainItem::from_sample(&a, &setup.edge));
        if aug.degen_prob > 0.0 && rng.bernoulli(aug.degen_prob) {
            let (a, log) = augment_sample(s, &dag, taxonomy, &forced, render, &mut rng)?;
            if log.degenerated.is_some() {
                items.push(TrainItem::from_sample(&a, &setup.edge));
            }
        }
    }
    Ok(items)
}

#[derive(Serialize)]
struct DivergenceDump<'a> {
    epoch: usize,
    step: usize,
    lr: f64,
    sample_ids: Vec<u64>,
    value: f64,
    terms: &'a BTreeMap<String, f64>,
    param_norm: f64,
    non_finite_params: usize,
}

/// Trains from scratch. `render` must be the config that produced the
/// samples; augmentation re-renders geometry-changed samples with it.
/// On a non-finite loss a `divergence.json` is written to `dump_dir` (when
/// given) and training aborts.
pub fn train(
    setup: &TrainSetup,
    samples: &[Sample],
    taxonomy: &RoomTaxonomy,
    render: &SynthConfig,
    validation: Option<&[Sample]>,
    dump_dir: Option<&Path>,
) -> Result<TrainOutcome, ModelError> {
    setup.validate()?;
    let model = ToyModel::new(setup.model.clone())?;
    let mut params = model.init_params(setup.train.seed, setup.contrastive.tau);
    let mut opt = AdamW::new(setup.optimizer, params.len(), vec![model.tau_index()]);
    let monitor = validation.unwrap_or(&samples[..setup.train.monitor.min(samples.len())]);
    let mut log = Vec::with_capacity(setup.train.epochs);
    for epoch in 0..setup.train.epochs {
        let mut items = epoch_items(samples, taxonomy, setup, render, epoch)?;
        Stream::new(setup.train.seed, Purpose::Shuffle, epoch as u64).shuffle(&mut items);
        let steps = items.len().div_ceil(setup.train.batch_size);
        let mut sum = 0.0;
        let mut terms: BTreeMap<String, f64> = BTreeMap::new();
        let mut lr = 0.0;
        for (step, batch) in items.chunks(setup.train.batch_size).enumerate() {
            lr = setup.optimizer.lr_at((epoch as f64 + step as f64 / steps as f64) / setup.train.epochs as f64);
            let bl = batch_loss(&model, &params, batch, &setup.weights, &setup.edge)?;
            if !bl.value.is_finite() || bl.grad.iter().any(|g| !g.is_finite()) {
                let detail = format!("loss {}", bl.value);
                if let Some(dir) = dump_dir {
                    let dump = DivergenceDump {
                        epoch,
                        step,
                        lr,
                        sample_ids: batch.iter().map(|it| it.id).collect(),
                        value: bl.value,
                        terms: &bl.terms,
                        param_norm: params.iter().map(|p| p * p).sum::<f64>().sqrt(),
                        non_finite_params: params.iter().filter(|p| !p.is_finite()).count(),
                    };
                    std::fs::create_dir_all(dir)?;
                    let text = serde_json::to_string_pretty(&dump).expect("serializable");
                    std::fs::write(dir.join("divergence.json"), text)?;
                }
                return Err(ModelError::Divergence { epoch, step, detail });
            }
            opt.step(&mut params, &bl.grad, lr);
            let t = &mut params[model.tau_index()];
            *t = t.clamp(TAU_RANGE.0, TAU_RANGE.1);
            sum += bl.value;
            for (k, v) in &bl.terms {
                *terms.entry(k.clone()).or_insert(0.0) += v / steps as f64;
            }
        }
        let pe = mean_pe(&model, &params, monitor)?;
        let entry = EpochLog { epoch, items: items.len(), lr, loss: sum / steps.max(1) as f64, terms, pe };
        log::info!("epoch {epoch}: loss {:.4} pe {:.2}% ({} items)", entry.loss, entry.pe, entry.items);
        log.push(entry);
    }
    Ok(TrainOutcome { model, params, log })
}
