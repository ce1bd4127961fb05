//! Reference implementations used as test oracles. Each one is written the
//! slow, obvious way and shares no code with the library routine it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use layoutforge::layout::{LayoutMask, RoomTaxonomy};
use layoutforge::rng::{Purpose, Stream};
use layoutforge::synth::{generate_sample, Sample, SynthConfig, TypeDistribution};
use sha2::{Digest, Sha256};

/// Percentage of differing pixels, by explicit row/column loops.
pub fn brute_pixel_error(a: &LayoutMask, b: &LayoutMask) -> f64 {
    let mut wrong = 0usize;
    for r in 0..a.height() {
        for c in 0..a.width() {
            if a.get(r, c) != b.get(r, c) {
                wrong += 1;
            }
        }
    }
    wrong as f64 * 100.0 / (a.width() * a.height()) as f64
}

fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
}

/// Best total over every injective matching of the smaller set into the
/// larger one; each unmatched point of the larger set costs one diagonal.
pub fn brute_corner_error(pred: &[(f64, f64)], gt: &[(f64, f64)], width: usize, height: usize) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 0.0;
    }
    let diag = ((width * width + height * height) as f64).sqrt();
    let (small, large) = if pred.len() <= gt.len() { (pred, gt) } else { (gt, pred) };
    fn go(i: usize, small: &[(f64, f64)], large: &[(f64, f64)], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if i == small.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..large.len() {
            if !used[j] {
                used[j] = true;
                go(i + 1, small, large, used, acc + dist(small[i], large[j]), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let unmatched = (large.len() - small.len()) as f64 * diag;
    go(0, small, large, &mut vec![false; large.len()], unmatched, &mut best);
    100.0 * best / large.len() as f64 / diag
}

/// Minimum over all permutations of an n×n cost matrix.
pub fn brute_assignment_cost(cost: &[f64], n: usize) -> f64 {
    fn go(row: usize, n: usize, cost: &[f64], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                go(row + 1, n, cost, used, acc + cost[row * n + c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, n, cost, &mut vec![false; n], 0.0, &mut best);
    if n == 0 {
        0.0
    } else {
        best
    }
}

/// Nearest-retained-label fill computed pixel by pixel: from each removed
/// pixel, a BFS that only walks through removed pixels finds the closest
/// retained pixels; the lowest of their labels wins. Unreachable pixels
/// keep their label. `None` when removed pixels exist but nothing is kept.
pub fn bfs_fill_oracle(mask: &LayoutMask, keep: &[u8]) -> Option<LayoutMask> {
    let (w, h) = (mask.width(), mask.height());
    let removed = |l: u8| l != 0 && !keep.contains(&l);
    let any_removed = mask.labels().iter().any(|&l| removed(l));
    if !any_removed {
        return Some(mask.clone());
    }
    if !mask.labels().iter().any(|l| keep.contains(l)) {
        return None;
    }
    let mut out = mask.clone();
    for r0 in 0..h {
        for c0 in 0..w {
            if !removed(mask.get(r0, c0)) {
                continue;
            }
            let mut seen = vec![vec![false; w]; h];
            let mut queue = VecDeque::from([(r0, c0, 0usize)]);
            seen[r0][c0] = true;
            let mut found: Option<(usize, u8)> = None;
            while let Some((r, c, d)) = queue.pop_front() {
                if found.is_some_and(|(fd, _)| d >= fd) {
                    break;
                }
                let mut nbrs = Vec::new();
                if r > 0 {
                    nbrs.push((r - 1, c));
                }
                if r + 1 < h {
                    nbrs.push((r + 1, c));
                }
                if c > 0 {
                    nbrs.push((r, c - 1));
                }
                if c + 1 < w {
                    nbrs.push((r, c + 1));
                }
                for (nr, nc) in nbrs {
                    let l = mask.get(nr, nc);
                    if keep.contains(&l) {
                        found = Some(match found {
                            Some((fd, fl)) if fd == d + 1 => (fd, fl.min(l)),
                            Some(f) => f,
                            None => (d + 1, l),
                        });
                    } else if removed(l) && !seen[nr][nc] {
                        seen[nr][nc] = true;
                        queue.push_back((nr, nc, d + 1));
                    }
                }
            }
            if let Some((_, l)) = found {
                out.set(r0, c0, l);
            }
        }
    }
    Some(out)
}

pub fn random_mask(rng: &mut Stream, w: usize, h: usize, labels: u64) -> LayoutMask {
    LayoutMask::from_fn(w, h, |_, _| rng.below(labels) as u8)
}

pub fn random_points(rng: &mut Stream, n: usize, w: usize, h: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.range(-0.5, w as f64 - 0.5), rng.range(-0.5, h as f64 - 0.5))).collect()
}

/// Samples of one room type at a small resolution.
pub fn samples_of_type(tax: &RoomTaxonomy, type_id: u32, n: usize, seed: u64) -> Vec<Sample> {
    let cfg = SynthConfig {
        width: 64,
        height: 64,
        seed,
        type_distribution: TypeDistribution(BTreeMap::from([(type_id, 1.0)])),
        ..Default::default()
    };
    (0..n as u64).map(|i| generate_sample(&cfg, tax, i).expect("sample")).collect()
}

pub fn uniform_samples(n: usize, seed: u64) -> Vec<Sample> {
    let tax = RoomTaxonomy::default_lsun();
    let cfg = SynthConfig { width: 64, height: 64, seed, ..Default::default() }.resolved(&tax).unwrap();
    (0..n as u64).map(|i| generate_sample(&cfg, &tax, i).expect("sample")).collect()
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn tree_digest(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                let bytes = std::fs::read(&p).expect("readable file");
                let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
                out.insert(rel, hex);
            }
        }
    }
    out
}

pub fn stream(seed: u64) -> Stream {
    Stream::new(seed, Purpose::Misc, 0)
}
