//! Finite-difference checks of every loss kernel and the full model.
//!
//! Each check draws random input points and compares the analytic gradient
//! with central differences at random coordinates of every point.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::layout::{Grid, LayoutMask, RoomTaxonomy, NUM_CLASSES};
use crate::losses::{
    bce_mask_loss, ce_loss, contrastive_loss, dice_loss, edge_loss, flatten, geo_loss, gradcheck_at, one_hot,
    smoothness_loss, surface_loss, total_loss, unflatten, CheckReport, ContrastiveConfig, EdgeLossConfig,
    LossWeights, DICE_EPS,
};
use crate::model::{batch_loss, ModelConfig, TrainItem, ToyModel};
use crate::rng::{Purpose, Stream};
use crate::synth::{generate_sample, SynthConfig};

pub const KERNELS: [&str; 10] =
    ["ce", "dice", "bce", "surface", "edge", "smoothness", "geo", "contrastive", "total", "model"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub points: usize,
    pub h: f64,
    pub kernel_tolerance: f64,
    pub model_tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: 0, points: 100, h: 1e-5, kernel_tolerance: 1e-4, model_tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheck {
    pub name: String,
    pub points: usize,
    pub coords: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Report of the worst point.
    pub worst: CheckReport,
    pub seconds: f64,
}

impl fmt::Display for KernelCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} {:<4} points={:<4} coords={:<6} max_rel_error={:.3e} tol={:.0e}",
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.points,
            self.coords,
            self.max_rel_error,
            self.tolerance
        )?;
        if !self.passed {
            if let Some(i) = self.worst.worst_index {
                write!(
                    f,
                    " worst_coord={i} analytic={:.6e} numeric={:.6e}",
                    self.worst.worst_analytic, self.worst.worst_numeric
                )?;
            }
            if let Some(m) = &self.worst.non_finite {
                write!(f, " non_finite={m}")?;
            }
        }
        Ok(())
    }
}

type Eval = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>;

/// One random point: the input vector, its evaluator and coordinates to probe.
struct Point {
    x: Vec<f64>,
    f: Eval,
    coords: Vec<usize>,
}

fn rand_probs(rng: &mut Stream, w: usize, h: usize) -> Vec<Grid> {
    let logits: Vec<Vec<f64>> = (0..NUM_CLASSES).map(|_| (0..w * h).map(|_| rng.range(-1.5, 1.5)).collect()).collect();
    let mut out: Vec<Grid> = (0..NUM_CLASSES).map(|_| Grid::zeros(w, h)).collect();
    for i in 0..w * h {
        let z: f64 = logits.iter().map(|l| l[i].exp()).sum();
        for k in 0..NUM_CLASSES {
            out[k].data_mut()[i] = logits[k][i].exp() / z;
        }
    }
    out
}

fn rand_grid(rng: &mut Stream, w: usize, h: usize, lo: f64, hi: f64) -> Grid {
    Grid::from_fn(w, h, |_, _| rng.range(lo, hi))
}

fn rand_mask(rng: &mut Stream, w: usize, h: usize) -> LayoutMask {
    LayoutMask::from_fn(w, h, |_, _| rng.below(NUM_CLASSES as u64) as u8)
}

fn rand_binary(rng: &mut Stream, w: usize, h: usize) -> Grid {
    Grid::from_fn(w, h, |_, _| if rng.bernoulli(0.4) { 1.0 } else { 0.0 })
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn kernel_point(name: &str, rng: &mut Stream) -> Point {
    let (w, h) = (4 + rng.below(3) as usize, 4 + rng.below(3) as usize);
    let hw = w * h;
    match name {
        "ce" => {
            let labels = rand_mask(rng, w, h);
            let x = flatten(&rand_probs(rng, w, h));
            let f: Eval = Box::new(move |x| {
                let b = ce_loss(&unflatten(x, w, h), &labels).expect("ce");
                (b.value, b.grads[0].clone())
            });
            Point { coords: all(x.len()), x, f }
        }
        "dice" | "bce" => {
            let gt = rand_binary(rng, w, h);
            let x = rand_grid(rng, w, h, 0.05, 0.95).into_data();
            let dice = name == "dice";
            let f: Eval = Box::new(move |x| {
                let p = Grid::new(w, h, x.to_vec()).expect("size");
                let b = if dice { dice_loss(&p, &gt, DICE_EPS) } else { bce_mask_loss(&p, &gt) }.expect("kernel");
                (b.value, b.grads[0].clone())
            });
            Point { coords: all(x.len()), x, f }
        }
        "surface" => {
            let gt = rand_mask(rng, w, h);
            let mut x = flatten(&rand_probs(rng, w, h));
            x.extend((0..5 * hw).map(|_| rng.range(0.05, 0.95)));
            let weights = LossWeights::default();
            let f: Eval = Box::new(move |x| {
                let (p, m) = x.split_at(NUM_CLASSES * hw);
                let b = surface_loss(&unflatten(p, w, h), &unflatten(m, w, h), &gt, &weights).expect("surface");
                (b.value, b.grads.concat())
            });
            Point { coords: all(x.len()), x, f }
        }
        "edge" | "smoothness" | "geo" => {
            let e_gt = rand_binary(rng, w, h);
            let target = one_hot(&rand_mask(rng, w, h), NUM_CLASSES);
            let x = flatten(&rand_probs(rng, w, h));
            let cfg = EdgeLossConfig::default();
            let weights = LossWeights { lambda4: rng.range(0.5, 2.0), lambda5: rng.range(0.5, 2.0), ..Default::default() };
            let which = name.to_string();
            let f: Eval = Box::new(move |x| {
                let p = unflatten(x, w, h);
                let b = match which.as_str() {
                    "edge" => edge_loss(&p, &e_gt, &cfg).expect("edge"),
                    "smoothness" => smoothness_loss(&p, &target).expect("smooth"),
                    _ => {
                        let e = edge_loss(&p, &e_gt, &cfg).expect("edge");
                        let s = smoothness_loss(&p, &target).expect("smooth");
                        geo_loss(&e, &s, &weights).expect("geo")
                    }
                };
                (b.value, b.grads[0].clone())
            });
            Point { coords: all(x.len()), x, f }
        }
        "contrastive" => {
            let (b, d) = (2 + rng.below(4) as usize, 3 + rng.below(5) as usize);
            let mut x: Vec<f64> = (0..2 * b * d).map(|_| rng.range(-0.4, 0.4)).collect();
            x.push(rng.range(0.05, 0.5));
            let f: Eval = Box::new(move |x| {
                let (o, rest) = x.split_at(b * d);
                let (t, tau) = rest.split_at(b * d);
                let l = contrastive_loss(o, t, d, &ContrastiveConfig { tau: tau[0] }).expect("contrastive");
                (l.value, l.grads.concat())
            });
            Point { coords: all(x.len()), x, f }
        }
        "total" => {
            let gt = rand_mask(rng, w, h);
            let target = one_hot(&gt, NUM_CLASSES);
            let e_gt = rand_binary(rng, w, h);
            let (b, d) = (3, 4);
            let mut x = flatten(&rand_probs(rng, w, h));
            x.extend((0..5 * hw).map(|_| rng.range(0.05, 0.95)));
            x.extend((0..2 * b * d).map(|_| rng.range(-0.4, 0.4)));
            x.push(rng.range(0.05, 0.5));
            let weights = LossWeights::default();
            let cfg = EdgeLossConfig::default();
            let f: Eval = Box::new(move |x| {
                let (p, rest) = x.split_at(NUM_CLASSES * hw);
                let (m, rest) = rest.split_at(5 * hw);
                let (o, rest) = rest.split_at(b * d);
                let (t, tau) = rest.split_at(b * d);
                let probs = unflatten(p, w, h);
                let s = surface_loss(&probs, &unflatten(m, w, h), &gt, &weights).expect("surface");
                let c = contrastive_loss(o, t, d, &ContrastiveConfig { tau: tau[0] }).expect("contrastive");
                let e = edge_loss(&probs, &e_gt, &cfg).expect("edge");
                let sm = smoothness_loss(&probs, &target).expect("smooth");
                let g = geo_loss(&e, &sm, &weights).expect("geo");
                let tot = total_loss(&s, &c, &g);
                // surface and geo both read the probability stack
                let mut grad = tot.grads[0].clone();
                grad.iter_mut().zip(&tot.grads[5]).for_each(|(a, b)| *a += b);
                grad.extend_from_slice(&tot.grads[1]);
                grad.extend_from_slice(&tot.grads[2]);
                grad.extend_from_slice(&tot.grads[3]);
                grad.extend_from_slice(&tot.grads[4]);
                (tot.value, grad)
            });
            Point { coords: all(x.len()), x, f }
        }
        other => panic!("unknown kernel {other}"),
    }
}

/// A random model point: fresh parameters and a two-sample 16×16 batch.
/// Probes one random coordinate of every parameter group; for the token
/// table, only rows the batch actually reads.
fn model_point(rng: &mut Stream, index: u64) -> Point {
    let tax = RoomTaxonomy::default_lsun();
    let cfg = ModelConfig { width: 16, height: 16, ..Default::default() };
    let model = ToyModel::new(cfg.clone()).expect("model config");
    let sc = SynthConfig { width: 16, height: 16, seed: rng.next_u64(), ..Default::default() }
        .resolved(&tax)
        .expect("synth config");
    let edge = EdgeLossConfig::default();
    // Two samples with different surface sets; with identical descriptions
    // the contrastive term is constant in τ and its gradient is exactly zero.
    let item = |i: u64| TrainItem::from_sample(&generate_sample(&sc, &tax, index * 64 + i).expect("sample"), &edge);
    let first = item(0);
    let second = (1..64).map(item).find(|s| s.surfaces != first.surfaces).expect("a second surface set");
    let items = vec![first, second];
    let x = model.init_params(rng.next_u64(), rng.range(0.05, 0.5));
    let mut coords = Vec::new();
    let embed = model.layout().get("embed").expect("embed slot");
    let mut rows: Vec<usize> = crate::model::token_rows(&cfg.task, cfg.vocab);
    for it in &items {
        rows.extend(crate::model::token_rows(&it.surfaces.describe(), cfg.vocab));
    }
    for (name, r) in model.layout().entries() {
        if name == "embed" {
            let row = rows[rng.below(rows.len() as u64) as usize];
            coords.push(embed.start + row * cfg.dim + rng.below(cfg.dim as u64) as usize);
        } else {
            coords.push(r.start + rng.below(r.len() as u64) as usize);
        }
    }
    let weights = LossWeights::default();
    let f: Eval = Box::new(move |x| {
        let b = batch_loss(&model, x, &items, &weights, &edge).expect("batch loss");
        (b.value, b.grad)
    });
    Point { x, f, coords }
}

/// Runs one named check. `inject_bug` doubles the analytic gradient, as a
/// negative control.
pub fn check_kernel(name: &str, cfg: &SuiteConfig, inject_bug: bool) -> KernelCheck {
    let t0 = Instant::now();
    let kernel_index = KERNELS.iter().position(|k| *k == name).expect("known kernel") as u64;
    let mut rng = Stream::new(cfg.seed, Purpose::Check, 1 + kernel_index);
    let tol = if name == "model" { cfg.model_tolerance } else { cfg.kernel_tolerance };
    let mut worst: Option<CheckReport> = None;
    let mut coords = 0;
    for p in 0..cfg.points {
        let point = if name == "model" { model_point(&mut rng, p as u64) } else { kernel_point(name, &mut rng) };
        let f = &point.f;
        let eval = |x: &[f64]| {
            let (v, mut g) = f(x);
            if inject_bug {
                g.iter_mut().for_each(|v| *v *= 2.0);
            }
            (v, g)
        };
        let rep = gradcheck_at(eval, &point.x, &point.coords, cfg.h, tol);
        coords += rep.checked;
        let bad = rep.non_finite.is_some();
        if worst.as_ref().is_none_or(|w| bad || rep.max_rel_error > w.max_rel_error) {
            worst = Some(rep);
        }
        if bad {
            break;
        }
    }
    let worst = worst.expect("at least one point");
    KernelCheck {
        name: name.to_string(),
        points: cfg.points,
        coords,
        max_rel_error: worst.max_rel_error,
        tolerance: tol,
        passed: worst.non_finite.is_none() && worst.max_rel_error < tol,
        worst,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Every kernel in [`KERNELS`] order; `inject_bug` names one to sabotage.
pub fn gradcheck_suite(cfg: &SuiteConfig, inject_bug: Option<&str>) -> Vec<KernelCheck> {
    KERNELS.iter().map(|k| check_kernel(k, cfg, inject_bug == Some(*k))).collect()
}
