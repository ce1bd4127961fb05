//! Training losses as value-and-gradient kernels, plus a central-difference
//! gradient checker.
//!
//! Every pixel loss is mean-reduced. Kernels return a [`LossBundle`] whose
//! `grads` hold one flat gradient per prediction input, in argument order;
//! stacks of grids are flattened class-major.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::layout::{Grid, LayoutMask, NUM_CLASSES, NUM_SURFACES};
use crate::rng::{Purpose, Stream};

/// Probabilities are clamped to `[CLAMP_EPS, 1 - CLAMP_EPS]` before any log.
pub const CLAMP_EPS: f64 = 1e-7;
/// Dice denominator stabilizer.
pub const DICE_EPS: f64 = 1e-6;
/// Smoothing inside the gradient magnitude, sqrt(gx² + gy² + η²) − η.
pub const GRAD_ETA: f64 = 1.0 / 16384.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 2.0, lambda2: 5.0, lambda3: 5.0, lambda4: 1.0, lambda5: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LossError::Config(format!("loss weights must be finite and >= 0, got {all:?}")));
        }
        Ok(())
    }

    /// Weights with the edge and smoothness terms switched off.
    pub fn without_geo(self) -> Self {
        Self { lambda4: 0.0, lambda5: 0.0, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeLossConfig {
    pub sigma: f64,
    pub gt_dilation: usize,
    pub clamp_eps: f64,
}

impl Default for EdgeLossConfig {
    fn default() -> Self {
        Self { sigma: 1.0, gt_dilation: 0, clamp_eps: CLAMP_EPS }
    }
}

impl EdgeLossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LossError::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps <= 1e-3) {
            return Err(LossError::Config(format!("clamp_eps must be in (0, 1e-3], got {}", self.clamp_eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub tau: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { tau: 0.07 }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(LossError::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBundle {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
    /// Named unweighted component values, for logging.
    pub terms: Vec<(&'static str, f64)>,
}

impl LossBundle {
    pub fn new(value: f64, grads: Vec<Vec<f64>>) -> Self {
        Self { value, grads, terms: Vec::new() }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn grads_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }
}

/// Weighted sum of bundles over the same inputs. Gradients add elementwise.
pub fn combine(parts: &[(f64, &LossBundle)]) -> Result<LossBundle, LossError> {
    let Some((_, first)) = parts.first() else {
        return Ok(LossBundle::new(0.0, Vec::new()));
    };
    let shape: Vec<usize> = first.grads.iter().map(Vec::len).collect();
    let mut out = LossBundle::new(0.0, shape.iter().map(|&n| vec![0.0; n]).collect());
    for (w, b) in parts {
        if b.grads.iter().map(Vec::len).ne(shape.iter().copied()) {
            return Err(LossError::Shape("combined bundles have different inputs".into()));
        }
        out.value += w * b.value;
        for (acc, g) in out.grads.iter_mut().zip(&b.grads) {
            for (a, x) in acc.iter_mut().zip(g) {
                *a += w * x;
            }
        }
        out.terms.extend(b.terms.iter().copied());
    }
    Ok(out)
}

fn check_stack(stack: &[Grid], width: usize, height: usize, what: &str) -> Result<(), LossError> {
    if stack.is_empty() {
        return Err(LossError::Shape(format!("{what}: empty stack")));
    }
    for g in stack {
        if g.width() != width || g.height() != height {
            return Err(LossError::Shape(format!(
                "{what}: {}x{} grid in a {width}x{height} stack",
                g.width(),
                g.height()
            )));
        }
    }
    Ok(())
}

fn check_same(a: &Grid, b: &Grid) -> Result<(), LossError> {
    if !a.same_shape(b) {
        return Err(LossError::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Binary indicator grid of one label.
pub fn class_target(mask: &LayoutMask, label: u8) -> Grid {
    Grid::from_fn(mask.width(), mask.height(), |r, c| if mask.get(r, c) == label { 1.0 } else { 0.0 })
}

/// One indicator grid per class 0..classes.
pub fn one_hot(mask: &LayoutMask, classes: usize) -> Vec<Grid> {
    (0..classes).map(|k| class_target(mask, k as u8)).collect()
}

/// Mean pixel cross-entropy of a class-probability stack against labels.
pub fn ce_loss(probs: &[Grid], labels: &LayoutMask) -> Result<LossBundle, LossError> {
    let (w, h) = (labels.width(), labels.height());
    check_stack(probs, w, h, "ce probs")?;
    let n = (w * h) as f64;
    let mut grad = vec![0.0; probs.len() * w * h];
    let mut value = 0.0;
    for (i, &y) in labels.labels().iter().enumerate() {
        let y = y as usize;
        if y >= probs.len() {
            return Err(LossError::Shape(format!("label {y} with {} classes", probs.len())));
        }
        let p = probs[y].data()[i];
        let pc = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        value -= pc.ln();
        if pc == p {
            grad[y * w * h + i] = -1.0 / (n * p);
        }
    }
    Ok(LossBundle::new(value / n, vec![grad]))
}

/// 1 − 2Σpg / (Σp² + Σg² + ε).
pub fn dice_loss(pred: &Grid, gt: &Grid, eps: f64) -> Result<LossBundle, LossError> {
    check_same(pred, gt)?;
    if !(eps > 0.0) {
        return Err(LossError::Config(format!("dice eps must be > 0, got {eps}")));
    }
    let (p, g) = (pred.data(), gt.data());
    let inter: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let denom: f64 = p.iter().map(|a| a * a).sum::<f64>() + g.iter().map(|b| b * b).sum::<f64>() + eps;
    let value = 1.0 - 2.0 * inter / denom;
    let d2 = denom * denom;
    let grad = p.iter().zip(g).map(|(a, b)| -2.0 * (b * denom - 2.0 * a * inter) / d2).collect();
    Ok(LossBundle::new(value, vec![grad]))
}

/// Mean binary cross-entropy, `gt` as the target.
pub fn bce_mask_loss(pred: &Grid, gt: &Grid) -> Result<LossBundle, LossError> {
    bce_clamped(pred, gt, CLAMP_EPS)
}

fn bce_clamped(pred: &Grid, gt: &Grid, eps: f64) -> Result<LossBundle, LossError> {
    check_same(pred, gt)?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &t)| {
            let pc = p.clamp(eps, 1.0 - eps);
            value -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
            if pc == p {
                -(t / p - (1.0 - t) / (1.0 - p)) / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(LossBundle::new(value / n, vec![grad]))
}

/// λ1·CE + λ2·mean dice + λ3·mean BCE.
///
/// `probs` is the full class stack (background included) and feeds CE;
/// `masks` holds one map per surface class 1..=5 and feeds dice and BCE.
/// Gradients: `[d probs, d masks]`.
pub fn surface_loss(
    probs: &[Grid],
    masks: &[Grid],
    gt: &LayoutMask,
    weights: &LossWeights,
) -> Result<LossBundle, LossError> {
    let (w, h) = (gt.width(), gt.height());
    check_stack(masks, w, h, "surface masks")?;
    if masks.len() != NUM_SURFACES {
        return Err(LossError::Shape(format!("expected {NUM_SURFACES} surface masks, got {}", masks.len())));
    }
    let ce = ce_loss(probs, gt)?;
    let np = ce.grads[0].len();
    let nm = masks.len() * w * h;
    let mut dice = LossBundle::new(0.0, vec![vec![0.0; np], vec![0.0; nm]]);
    let mut bce = dice.clone();
    let inv_k = 1.0 / masks.len() as f64;
    for (k, m) in masks.iter().enumerate() {
        let target = class_target(gt, k as u8 + 1);
        let d = dice_loss(m, &target, DICE_EPS)?;
        let b = bce_mask_loss(m, &target)?;
        dice.value += inv_k * d.value;
        bce.value += inv_k * b.value;
        let slot = k * w * h..(k + 1) * w * h;
        for (acc, g) in dice.grads[1][slot.clone()].iter_mut().zip(&d.grads[0]) {
            *acc = inv_k * g;
        }
        for (acc, g) in bce.grads[1][slot].iter_mut().zip(&b.grads[0]) {
            *acc = inv_k * g;
        }
    }
    let ce = LossBundle::new(ce.value, vec![ce.grads[0].clone(), vec![0.0; nm]]);
    let mut out = combine(&[(weights.lambda1, &ce), (weights.lambda2, &dice), (weights.lambda3, &bce)])?;
    out.terms = vec![("ce", ce.value), ("dice", dice.value), ("bce", bce.value)];
    Ok(out)
}

/// 1 where any 4-neighbor carries a different label, then a square
/// dilation of radius `cfg.gt_dilation`.
pub fn gt_edge_map(mask: &LayoutMask, cfg: &EdgeLossConfig) -> Grid {
    let (w, h) = (mask.width(), mask.height());
    let mut edge = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let l = mask.get(r, c);
            edge[r * w + c] = (r > 0 && mask.get(r - 1, c) != l)
                || (r + 1 < h && mask.get(r + 1, c) != l)
                || (c > 0 && mask.get(r, c - 1) != l)
                || (c + 1 < w && mask.get(r, c + 1) != l);
        }
    }
    let d = cfg.gt_dilation;
    Grid::from_fn(w, h, |r, c| {
        let hit = (r.saturating_sub(d)..=(r + d).min(h - 1))
            .any(|rr| (c.saturating_sub(d)..=(c + d).min(w - 1)).any(|cc| edge[rr * w + cc]));
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Mean over classes of the smoothed central-difference gradient magnitude.
pub fn gradient_magnitude(pred: &[Grid]) -> Grid {
    let (w, h) = (pred[0].width(), pred[0].height());
    let inv_c = 1.0 / pred.len() as f64;
    let mut g = Grid::zeros(w, h);
    for p in pred {
        for r in 0..h {
            for c in 0..w {
                let (gx, gy) = central_diff(p, r, c);
                let m = (gx * gx + gy * gy + GRAD_ETA * GRAD_ETA).sqrt() - GRAD_ETA;
                g.data_mut()[r * w + c] += inv_c * m;
            }
        }
    }
    g
}

#[inline]
fn central_diff(p: &Grid, r: usize, c: usize) -> (f64, f64) {
    let (w, h) = (p.width(), p.height());
    let gx = 0.5 * (p.get(r, (c + 1).min(w - 1)) - p.get(r, c.saturating_sub(1)));
    let gy = 0.5 * (p.get((r + 1).min(h - 1), c) - p.get(r.saturating_sub(1), c));
    (gx, gy)
}

/// BCE between the target edge map and 1 − exp(−g/σ), where g is
/// [`gradient_magnitude`] of the prediction stack. Gradients: `[d pred]`.
pub fn edge_loss(pred: &[Grid], e_gt: &Grid, cfg: &EdgeLossConfig) -> Result<LossBundle, LossError> {
    cfg.validate()?;
    let (w, h) = (e_gt.width(), e_gt.height());
    check_stack(pred, w, h, "edge pred")?;
    let g = gradient_magnitude(pred);
    let e_pred = Grid::from_fn(w, h, |r, c| 1.0 - (-g.get(r, c) / cfg.sigma).exp());
    let bce = bce_clamped(&e_pred, e_gt, cfg.clamp_eps)?;
    let inv_c = 1.0 / pred.len() as f64;
    // dL/dg per pixel, through the exponential
    let dg: Vec<f64> = bce.grads[0]
        .iter()
        .zip(e_pred.data())
        .map(|(d, e)| d * (1.0 - e) / cfg.sigma * inv_c)
        .collect();
    let mut grad = vec![0.0; pred.len() * w * h];
    for (k, p) in pred.iter().enumerate() {
        let out = &mut grad[k * w * h..(k + 1) * w * h];
        for r in 0..h {
            for c in 0..w {
                let d = dg[r * w + c];
                if d == 0.0 {
                    continue;
                }
                let (gx, gy) = central_diff(p, r, c);
                let norm = (gx * gx + gy * gy + GRAD_ETA * GRAD_ETA).sqrt();
                let (ax, ay) = (0.5 * d * gx / norm, 0.5 * d * gy / norm);
                out[r * w + (c + 1).min(w - 1)] += ax;
                out[r * w + c.saturating_sub(1)] -= ax;
                out[(r + 1).min(h - 1) * w + c] += ay;
                out[r.saturating_sub(1) * w + c] -= ay;
            }
        }
    }
    Ok(LossBundle::new(bce.value, vec![grad]))
}

/// ‖pred − gt‖₂ / sqrt(#elements) over the whole stack. Gradients: `[d pred]`.
pub fn smoothness_loss(pred: &[Grid], gt: &[Grid]) -> Result<LossBundle, LossError> {
    if pred.len() != gt.len() {
        return Err(LossError::Shape(format!("{} pred classes vs {} gt classes", pred.len(), gt.len())));
    }
    let Some(first) = pred.first() else {
        return Err(LossError::Shape("empty stack".into()));
    };
    check_stack(pred, first.width(), first.height(), "smoothness pred")?;
    check_stack(gt, first.width(), first.height(), "smoothness gt")?;
    let diff: Vec<f64> =
        pred.iter().zip(gt).flat_map(|(p, g)| p.data().iter().zip(g.data()).map(|(a, b)| a - b)).collect();
    let root_n = (diff.len() as f64).sqrt();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let grad = if norm > 0.0 {
        diff.iter().map(|d| d / (norm * root_n)).collect()
    } else {
        vec![0.0; diff.len()]
    };
    Ok(LossBundle::new(norm / root_n, vec![grad]))
}

/// λ4·edge + λ5·smooth.
pub fn geo_loss(edge: &LossBundle, smooth: &LossBundle, weights: &LossWeights) -> Result<LossBundle, LossError> {
    let mut out = combine(&[(weights.lambda4, edge), (weights.lambda5, smooth)])?;
    out.terms = vec![("edge", edge.value), ("smooth", smooth.value)];
    Ok(out)
}

/// Bidirectional query-text InfoNCE with dot-product similarity over
/// row-major B×d matrices. Gradients: `[d q_obj, d q_txt, [d tau]]`.
pub fn contrastive_loss(
    q_obj: &[f64],
    q_txt: &[f64],
    dim: usize,
    cfg: &ContrastiveConfig,
) -> Result<LossBundle, LossError> {
    cfg.validate()?;
    if dim == 0 || q_obj.len() % dim != 0 || q_obj.len() != q_txt.len() {
        return Err(LossError::Shape(format!(
            "q_obj {} and q_txt {} values for d = {dim}",
            q_obj.len(),
            q_txt.len()
        )));
    }
    let b = q_obj.len() / dim;
    if b == 0 {
        return Err(LossError::EmptyBatch);
    }
    let tau = cfg.tau;
    let row = |m: &'_ [f64], i: usize| -> Vec<f64> { m[i * dim..(i + 1) * dim].to_vec() };
    let mut s = vec![0.0; b * b];
    for i in 0..b {
        let o = row(q_obj, i);
        for j in 0..b {
            let t = &q_txt[j * dim..(j + 1) * dim];
            s[i * b + j] = o.iter().zip(t).map(|(x, y)| x * y).sum::<f64>() / tau;
        }
    }
    // row softmax of S (obj -> txt) and column softmax (txt -> obj)
    let mut p_row = vec![0.0; b * b];
    let mut p_col = vec![0.0; b * b];
    let mut value = 0.0;
    for i in 0..b {
        let lse = log_sum_exp((0..b).map(|j| s[i * b + j]));
        value -= s[i * b + i] - lse;
        for j in 0..b {
            p_row[i * b + j] = (s[i * b + j] - lse).exp();
        }
        let lse = log_sum_exp((0..b).map(|j| s[j * b + i]));
        value -= s[i * b + i] - lse;
        for j in 0..b {
            p_col[j * b + i] = (s[j * b + i] - lse).exp();
        }
    }
    let inv_b = 1.0 / b as f64;
    value *= inv_b;
    let mut d_obj = vec![0.0; b * dim];
    let mut d_txt = vec![0.0; b * dim];
    let mut d_tau = 0.0;
    for i in 0..b {
        for j in 0..b {
            let delta = if i == j { 2.0 } else { 0.0 };
            let gs = inv_b * (p_row[i * b + j] + p_col[i * b + j] - delta);
            if gs == 0.0 {
                continue;
            }
            d_tau -= gs * s[i * b + j] / tau;
            for k in 0..dim {
                d_obj[i * dim + k] += gs * q_txt[j * dim + k] / tau;
                d_txt[j * dim + k] += gs * q_obj[i * dim + k] / tau;
            }
        }
    }
    Ok(LossBundle::new(value, vec![d_obj, d_txt, vec![d_tau]]))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Unweighted sum of the three objective groups; gradients are concatenated
/// in argument order since the groups act on different inputs.
pub fn total_loss(surface: &LossBundle, contrastive: &LossBundle, geo: &LossBundle) -> LossBundle {
    let mut out = LossBundle::new(
        surface.value + contrastive.value + geo.value,
        surface.grads.iter().chain(&contrastive.grads).chain(&geo.grads).cloned().collect(),
    );
    out.terms = vec![("surface", surface.value), ("contrastive", contrastive.value), ("geo", geo.value)];
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub h: f64,
    pub tolerance: f64,
    /// Coordinates to check; all of them when the point is smaller.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { h: 1e-5, tolerance: 1e-4, samples: 128, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when the evaluator produced a non-finite value or gradient.
    pub non_finite: Option<String>,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "status: {}", if self.passed { "pass" } else { "fail" })?;
        writeln!(f, "checked: {}", self.checked)?;
        writeln!(f, "max_rel_error: {:.3e}", self.max_rel_error)?;
        writeln!(f, "tolerance: {:.1e}", self.tolerance)?;
        if let Some(i) = self.worst_index {
            writeln!(f, "worst_index: {i}")?;
            writeln!(f, "worst_analytic: {:.9e}", self.worst_analytic)?;
            writeln!(f, "worst_numeric: {:.9e}", self.worst_numeric)?;
        }
        if let Some(msg) = &self.non_finite {
            writeln!(f, "non_finite: {msg}")?;
        }
        Ok(())
    }
}

/// Compares the analytic gradient of `f` at `x` to central differences on a
/// random subset of `cfg.samples` coordinates.
pub fn gradcheck<F>(f: F, x: &[f64], cfg: &CheckConfig) -> CheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut idx: Vec<usize> = (0..x.len()).collect();
    if x.len() > cfg.samples {
        Stream::new(cfg.seed, Purpose::Check, 0).shuffle(&mut idx);
        idx.truncate(cfg.samples);
        idx.sort_unstable();
    }
    gradcheck_at(f, x, &idx, cfg.h, cfg.tolerance)
}

/// [`gradcheck`] on explicit coordinates.
pub fn gradcheck_at<F>(mut f: F, x: &[f64], coords: &[usize], h: f64, tolerance: f64) -> CheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut report = CheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_index: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tolerance,
        passed: false,
        non_finite: None,
    };
    let (v0, grad) = f(x);
    if !v0.is_finite() {
        report.non_finite = Some(format!("value {v0} at the base point"));
        return report;
    }
    if grad.len() != x.len() {
        report.non_finite = Some(format!("gradient has {} entries for {} coordinates", grad.len(), x.len()));
        return report;
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        report.non_finite = Some(format!("analytic gradient at coordinate {i}"));
        return report;
    }
    let mut xp = x.to_vec();
    for &i in coords {
        xp[i] = x[i] + h;
        let fp = f(&xp).0;
        xp[i] = x[i] - h;
        let fm = f(&xp).0;
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            report.non_finite = Some(format!("value at coordinate {i} ± h"));
            return report;
        }
        let num = (fp - fm) / (2.0 * h);
        let a = grad[i];
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-8);
        report.checked += 1;
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
            report.worst_analytic = a;
            report.worst_numeric = num;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    report
}

/// Splits a flat class-major vector back into grids.
pub fn unflatten(data: &[f64], width: usize, height: usize) -> Vec<Grid> {
    data.chunks(width * height).map(|c| Grid::new(width, height, c.to_vec()).expect("chunk size")).collect()
}

pub fn flatten(stack: &[Grid]) -> Vec<f64> {
    stack.iter().flat_map(|g| g.data().iter().copied()).collect()
}

/// Number of classes expected in a probability stack.
pub const STACK_CLASSES: usize = NUM_CLASSES;
