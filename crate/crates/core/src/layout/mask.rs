use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::surface::{Surface, SurfaceSet, NUM_CLASSES};
use super::taxonomy::RoomTaxonomy;
use super::LayoutError;

/// Dense per-pixel surface labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LayoutMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, LayoutError> {
        if width == 0 || height == 0 {
            return Err(LayoutError::EmptyFrame);
        }
        if labels.len() != width * height {
            return Err(LayoutError::ShapeMismatch {
                expected: width * height,
                got: labels.len(),
            });
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, labels: vec![label; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut labels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                labels.push(f(r, c));
            }
        }
        Self { width, height, labels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: u8) {
        self.labels[row * self.width + col] = label;
    }

    pub fn same_dims(&self, other: &LayoutMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixel count for each label 0..=255.
    pub fn histogram(&self) -> [usize; 256] {
        let mut h = [0usize; 256];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Column-reversed copy with left/right wall labels swapped.
    pub fn mirrored(&self) -> LayoutMask {
        LayoutMask::from_fn(self.width, self.height, |r, c| {
            let l = self.get(r, self.width - 1 - c);
            match Surface::from_id(l) {
                Some(s) => s.mirrored().id(),
                None => l,
            }
        })
    }

    /// Number of 4-connected components formed by pixels of `label`.
    pub fn component_count(&self, label: u8) -> usize {
        let mut seen = vec![false; self.labels.len()];
        let mut queue = VecDeque::new();
        let mut components = 0;
        for start in 0..self.labels.len() {
            if seen[start] || self.labels[start] != label {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for n in self.neighbors4(i) {
                    if !seen[n] && self.labels[n] == label {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        components
    }

    pub(crate) fn neighbors4(&self, i: usize) -> impl Iterator<Item = usize> {
        let (w, h) = (self.width, self.height);
        let (r, c) = (i / w, i % w);
        let up = (r > 0).then(|| i - w);
        let down = (r + 1 < h).then(|| i + w);
        let left = (c > 0).then(|| i - 1);
        let right = (c + 1 < w).then(|| i + 1);
        [up, down, left, right].into_iter().flatten()
    }
}

/// Set of nonzero labels that occur in the mask. Out-of-range labels are
/// ignored; `validate_layout` reports them.
pub fn surfaces_of(mask: &LayoutMask) -> SurfaceSet {
    let h = mask.histogram();
    Surface::ALL.into_iter().filter(|s| h[s.id() as usize] > 0).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutOfRange {
    pub label: u8,
    pub pixels: usize,
    /// First offending pixel as (row, col).
    pub first: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disconnected {
    pub surface: Surface,
    pub components: usize,
}

/// Result of [`validate_layout`]. Never an error: every problem is listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub out_of_range: Vec<OutOfRange>,
    pub disconnected: Vec<Disconnected>,
    pub surfaces: SurfaceSet,
    pub matched_type: Option<u32>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.out_of_range.is_empty() && self.disconnected.is_empty() && self.matched_type.is_some()
    }
}

/// Check label range, per-surface 4-connectivity and that the present
/// surface set names a room type.
pub fn validate_layout(mask: &LayoutMask, taxonomy: &RoomTaxonomy) -> ValidationReport {
    let hist = mask.histogram();
    let mut out_of_range = Vec::new();
    for label in NUM_CLASSES..256 {
        if hist[label] > 0 {
            let idx = mask.labels().iter().position(|&l| l as usize == label).unwrap();
            out_of_range.push(OutOfRange {
                label: label as u8,
                pixels: hist[label],
                first: (idx / mask.width(), idx % mask.width()),
            });
        }
    }
    let surfaces = surfaces_of(mask);
    let disconnected = surfaces
        .iter()
        .filter_map(|s| {
            let n = mask.component_count(s.id());
            (n > 1).then_some(Disconnected { surface: s, components: n })
        })
        .collect();
    let matched_type = taxonomy.type_for(surfaces).map(|t| t.id);
    ValidationReport { out_of_range, disconnected, surfaces, matched_type }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stripes(w: usize, h: usize, labels: &[u8]) -> LayoutMask {
        LayoutMask::from_fn(w, h, |_, c| labels[c * labels.len() / w])
    }

    #[test]
    fn surfaces_of_basic() {
        assert_eq!(surfaces_of(&LayoutMask::filled(4, 4, 2)), [Surface::Floor].into_iter().collect());
        assert!(surfaces_of(&LayoutMask::filled(4, 4, 0)).is_empty());
        let m = stripes(10, 3, &[1, 2, 3, 4, 5]);
        assert_eq!(surfaces_of(&m), SurfaceSet::all());
    }

    #[test]
    fn out_of_range_is_reported() {
        let tax = RoomTaxonomy::default_lsun();
        let mut m = stripes(10, 4, &[1, 2, 3, 4, 5]);
        m.set(2, 3, 7);
        let r = validate_layout(&m, &tax);
        assert!(!r.is_valid());
        assert_eq!(r.out_of_range.len(), 1);
        assert_eq!(r.out_of_range[0].label, 7);
        assert_eq!(r.out_of_range[0].first, (2, 3));
    }

    #[test]
    fn split_floor_is_disconnected() {
        let tax = RoomTaxonomy::default_lsun();
        // front wall everywhere, two disjoint floor rectangles stamped in
        let mut m = LayoutMask::filled(8, 8, 5);
        for r in 5..8 {
            for c in 0..3 {
                m.set(r, c, 2);
            }
            for c in 5..8 {
                m.set(r, c, 2);
            }
        }
        assert_eq!(m.component_count(2), 2);
        let r = validate_layout(&m, &tax);
        assert!(!r.is_valid());
        assert_eq!(r.disconnected, vec![Disconnected { surface: Surface::Floor, components: 2 }]);
        // type {floor, front-wall} exists, so only connectivity fails
        assert!(r.matched_type.is_some());
    }

    #[test]
    fn diagonal_touch_is_not_connected() {
        let m = LayoutMask::from_fn(2, 2, |r, c| if r == c { 2 } else { 5 });
        assert_eq!(m.component_count(2), 2);
    }

    #[test]
    fn mirror_swaps_walls() {
        let m = stripes(10, 2, &[3, 5, 4]);
        let f = m.mirrored();
        assert_eq!(f.get(0, 0), 3);
        assert_eq!(f.mirrored(), m);
        let m2 = stripes(9, 2, &[3, 3, 5]);
        assert_eq!(m2.count(3), m2.mirrored().count(4));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LayoutMask::new(0, 3, vec![]).is_err());
        assert!(LayoutMask::new(2, 2, vec![0; 3]).is_err());
    }
}
