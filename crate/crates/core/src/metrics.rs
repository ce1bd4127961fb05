//! Pixel error and corner error.
//!
//! Corner error matches predicted to ground-truth corners with an exact
//! minimum-cost assignment. Unmatched corners on either side cost one
//! image diagonal; the total is averaged over the larger set and
//! normalized by the diagonal, in percent.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::layout::LayoutMask;
use crate::synth::{DatasetManifest, Sample};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("mask sizes differ: {0}x{1} vs {2}x{3}")]
    Shape(usize, usize, usize, usize),
    #[error("frame dimensions must be positive")]
    EmptyFrame,
}

/// Percentage of pixels whose labels differ.
pub fn pixel_error(pred: &LayoutMask, gt: &LayoutMask) -> Result<f64, MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::Shape(pred.width(), pred.height(), gt.width(), gt.height()));
    }
    let wrong = pred.labels().iter().zip(gt.labels()).filter(|(a, b)| a != b).count();
    Ok(100.0 * wrong as f64 / gt.len() as f64)
}

pub type CornerSet = Vec<(f64, f64)>;

/// Junction points of a label mask, in pixel coordinates.
///
/// A 2×2 window holding three or more labels marks an interior junction
/// at the window center; two differing neighbors along the frame border
/// mark a boundary junction on the frame edge between them. Marks live on
/// the (W+1)×(H+1) lattice of pixel-corner points, are grouped by
/// 8-connectivity, and each group yields its centroid.
pub fn extract_corners(mask: &LayoutMask) -> CornerSet {
    let (w, h) = (mask.width(), mask.height());
    let (lw, lh) = (w + 1, h + 1);
    let mut marked = vec![false; lw * lh];
    for r in 0..h.saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            let mut ls = [mask.get(r, c), mask.get(r, c + 1), mask.get(r + 1, c), mask.get(r + 1, c + 1)];
            ls.sort_unstable();
            let distinct = 1 + ls.windows(2).filter(|p| p[0] != p[1]).count();
            if distinct >= 3 {
                marked[(r + 1) * lw + c + 1] = true;
            }
        }
    }
    for c in 0..w.saturating_sub(1) {
        if mask.get(0, c) != mask.get(0, c + 1) {
            marked[c + 1] = true;
        }
        if mask.get(h - 1, c) != mask.get(h - 1, c + 1) {
            marked[h * lw + c + 1] = true;
        }
    }
    for r in 0..h.saturating_sub(1) {
        if mask.get(r, 0) != mask.get(r + 1, 0) {
            marked[(r + 1) * lw] = true;
        }
        if mask.get(r, w - 1) != mask.get(r + 1, w - 1) {
            marked[(r + 1) * lw + w] = true;
        }
    }
    let mut seen = vec![false; lw * lh];
    let mut out = Vec::new();
    for start in 0..lw * lh {
        if !marked[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        while let Some(i) = queue.pop_front() {
            let (u, v) = (i % lw, i / lw);
            su += u as f64;
            sv += v as f64;
            n += 1.0;
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nv < 0 || nu >= lw as i64 || nv >= lh as i64 {
                        continue;
                    }
                    let j = nv as usize * lw + nu as usize;
                    if marked[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push((su / n - 0.5, sv / n - 0.5));
    }
    out
}

/// Minimum-cost perfect assignment on a square cost matrix (row-major).
/// Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n×n");
    if n == 0 {
        return Vec::new();
    }
    // shortest augmenting paths with row/column potentials, 1-based
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0; n];
    for j in 1..=n {
        rows[p[j] - 1] = j - 1;
    }
    rows
}

/// Square cost matrix between two corner sets, padded with diagonal costs.
fn padded_costs(pred: &[(f64, f64)], gt: &[(f64, f64)], diag: f64) -> (Vec<f64>, usize) {
    let n = pred.len().max(gt.len());
    let mut cost = vec![diag; n * n];
    for (i, a) in pred.iter().enumerate() {
        for (j, b) in gt.iter().enumerate() {
            cost[i * n + j] = (a.0 - b.0).hypot(a.1 - b.1);
        }
    }
    (cost, n)
}

/// Corner error in percent of the image diagonal.
pub fn corner_error(pred: &[(f64, f64)], gt: &[(f64, f64)], width: usize, height: usize) -> Result<f64, MetricsError> {
    if width == 0 || height == 0 {
        return Err(MetricsError::EmptyFrame);
    }
    if pred.is_empty() && gt.is_empty() {
        return Ok(0.0);
    }
    let diag = (width as f64).hypot(height as f64);
    let (cost, n) = padded_costs(pred, gt, diag);
    let assign = min_cost_assignment(&cost, n);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(100.0 * total / n as f64 / diag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub pe: Option<f64>,
    pub e_cor: Option<f64>,
    pub pred_corners: usize,
    pub gt_corners: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub samples: usize,
    pub failed: usize,
    pub pa: f64,
    pub pe: f64,
    pub e_cor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregate: EvalAggregate,
    pub per_sample: Vec<SampleRecord>,
}

impl EvalReport {
    /// Means over the records that evaluated successfully.
    pub fn from_records(per_sample: Vec<SampleRecord>) -> Self {
        let ok: Vec<&SampleRecord> = per_sample.iter().filter(|r| r.error.is_none()).collect();
        let n = ok.len();
        let mean = |f: fn(&SampleRecord) -> f64| if n == 0 { 0.0 } else { ok.iter().map(|r| f(r)).sum::<f64>() / n as f64 };
        let pe = mean(|r| r.pe.unwrap_or(0.0));
        let e_cor = mean(|r| r.e_cor.unwrap_or(0.0));
        let aggregate = EvalAggregate { samples: n, failed: per_sample.len() - n, pa: 100.0 - pe, pe, e_cor };
        Self { aggregate, per_sample }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Fixed-width summary table.
    pub fn summary(&self) -> String {
        let a = &self.aggregate;
        format!(
            "{:<10}{:>10}{:>10}{:>10}{:>8}\n{:<10}{:>10.4}{:>10.4}{:>10.4}{:>8}\n",
            "", "PA%", "PE%", "e_cor%", "failed", "mean", a.pa, a.pe, a.e_cor, a.failed
        )
    }
}

/// Scores one prediction against its sample. Ground-truth corners come
/// from the polygon layout.
pub fn score_sample(sample: &Sample, pred: &LayoutMask) -> SampleRecord {
    let gt_c = sample.poly.corner_points();
    let pc = extract_corners(pred);
    let (w, h) = (sample.mask.width(), sample.mask.height());
    match (pixel_error(pred, &sample.mask), corner_error(&pc, &gt_c, w, h)) {
        (Ok(pe), Ok(ec)) => SampleRecord {
            id: sample.id,
            pe: Some(pe),
            e_cor: Some(ec),
            pred_corners: pc.len(),
            gt_corners: gt_c.len(),
            error: None,
        },
        (Err(e), _) | (_, Err(e)) => SampleRecord {
            id: sample.id,
            pe: None,
            e_cor: None,
            pred_corners: pc.len(),
            gt_corners: gt_c.len(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs `predict` on every manifest sample. Samples that fail to load or
/// predict become error records and are left out of the aggregate.
pub fn evaluate<F, E>(manifest: &DatasetManifest, predict: F) -> EvalReport
where
    F: Fn(&Sample) -> Result<LayoutMask, E> + Sync,
    E: std::fmt::Display,
{
    let records: Vec<SampleRecord> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let fail = |msg: String| SampleRecord {
                id: rec.id,
                pe: None,
                e_cor: None,
                pred_corners: 0,
                gt_corners: 0,
                error: Some(msg),
            };
            match manifest.load_sample(rec) {
                Err(e) => fail(e.to_string()),
                Ok(s) => match predict(&s) {
                    Ok(m) => score_sample(&s, &m),
                    Err(e) => fail(e.to_string()),
                },
            }
        })
        .collect();
    EvalReport::from_records(records)
}

/// [`evaluate`] over in-memory samples.
pub fn evaluate_samples<F, E>(samples: &[Sample], predict: F) -> EvalReport
where
    F: Fn(&Sample) -> Result<LayoutMask, E> + Sync,
    E: std::fmt::Display,
{
    let records = samples
        .par_iter()
        .map(|s| match predict(s) {
            Ok(m) => score_sample(s, &m),
            Err(e) => SampleRecord {
                id: s.id,
                pe: None,
                e_cor: None,
                pred_corners: 0,
                gt_corners: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    EvalReport::from_records(records)
}
