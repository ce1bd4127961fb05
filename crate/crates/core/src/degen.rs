//! Topology-preserving degeneration and the training augmentations.
//!
//! Vector layouts degenerate geometrically: the back-wall side bounding the
//! removed surface is translated outside the frame and the neighbouring
//! surfaces grow to cover the freed area, giving a complete layout of the
//! child room type. [`degenerate_mask`] is the raster counterpart for data
//! that only has label masks: removed pixels are refilled with the nearest
//! retained surface.

use serde::{Deserialize, Serialize};

use crate::imageio::RgbImage;
use crate::layout::{
    rasterize, CuboidView, DagEdge, DegenerationDag, LayoutError, LayoutMask, PolyLayout, RoomTaxonomy,
    Surface, SurfaceSet,
};
use crate::rng::{Purpose, Stream};
use crate::synth::{render_mask_image, Sample, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum DegenError {
    #[error("edge {0:?} does not start at the layout's room type {1}")]
    EdgeNotApplicable(DagEdge, u32),
    #[error("edge {0:?} is not in the degeneration graph")]
    UnknownEdge(DagEdge),
    #[error("retain set is empty")]
    EmptyRetain,
    #[error("no retained surface is present in the mask")]
    NothingRetained,
    #[error("image is {0}x{1} but layout is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid augment config: {0}")]
    Config(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Surfaces kept by a degeneration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetainMask {
    retain: SurfaceSet,
}

impl RetainMask {
    pub fn new(retain: SurfaceSet) -> Result<Self, DegenError> {
        if retain.is_empty() {
            return Err(DegenError::EmptyRetain);
        }
        Ok(Self { retain })
    }

    pub fn all() -> Self {
        Self { retain: SurfaceSet::all() }
    }

    pub fn surfaces(&self) -> SurfaceSet {
        self.retain
    }

    pub fn keeps(&self, label: u8) -> bool {
        Surface::from_id(label).is_some_and(|s| self.retain.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub hflip_prob: f64,
    pub degen_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { brightness: 0.2, contrast: 0.1, hflip_prob: 0.5, degen_prob: 0.5, seed: 0 }
    }
}

impl AugmentConfig {
    /// No geometric change and no jitter.
    pub fn identity() -> Self {
        Self { brightness: 0.0, contrast: 0.0, hflip_prob: 0.0, degen_prob: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), DegenError> {
        for (name, p) in [("hflip_prob", self.hflip_prob), ("degen_prob", self.degen_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DegenError::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, v) in [("brightness", self.brightness), ("contrast", self.contrast)] {
            if !v.is_finite() || v < 0.0 {
                return Err(DegenError::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Apply one degeneration edge to a vector layout. The identity edge
/// returns the layout unchanged.
pub fn degenerate(poly: &PolyLayout, edge: DagEdge, dag: &DegenerationDag) -> Result<PolyLayout, DegenError> {
    if edge.parent != poly.room_type {
        return Err(DegenError::EdgeNotApplicable(edge, poly.room_type));
    }
    if edge.is_identity() {
        return Ok(poly.clone());
    }
    let removed = dag.removed_surface(edge).ok_or(DegenError::UnknownEdge(edge))?;
    let mut view = CuboidView::from_poly(poly)?;
    view.remove(removed)?;
    Ok(view.to_poly(edge.child)?)
}

/// Reassign pixels of removed surfaces to the geodesically nearest retained
/// surface (4-connected BFS distance; ties go to the lower label).
/// Background pixels and retained pixels are left as they are.
pub fn degenerate_mask(mask: &LayoutMask, retain: &RetainMask) -> Result<LayoutMask, DegenError> {
    if retain.surfaces().is_empty() {
        return Err(DegenError::EmptyRetain);
    }
    let n = mask.len();
    let labels = mask.labels();
    let removed = |l: u8| l != 0 && !retain.keeps(l);
    let mut out = labels.to_vec();
    if !labels.iter().any(|&l| removed(l)) {
        return Ok(mask.clone());
    }
    let mut assigned: Vec<bool> = labels.iter().map(|&l| !removed(l)).collect();
    let mut frontier: Vec<usize> = (0..n).filter(|&i| retain.keeps(labels[i])).collect();
    if frontier.is_empty() {
        return Err(DegenError::NothingRetained);
    }
    let mut candidate = vec![u8::MAX; n];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            for j in mask.neighbors4(i) {
                if assigned[j] {
                    continue;
                }
                if candidate[j] == u8::MAX {
                    next.push(j);
                }
                candidate[j] = candidate[j].min(out[i]);
            }
        }
        for &j in &next {
            out[j] = candidate[j];
            assigned[j] = true;
        }
        frontier = next;
    }
    Ok(LayoutMask::new(mask.width(), mask.height(), out)?)
}

/// Mirror image and layout about the vertical axis; left and right wall
/// labels swap and the room type follows the swapped surface set.
pub fn hflip(
    image: &RgbImage,
    poly: &PolyLayout,
    taxonomy: &RoomTaxonomy,
) -> Result<(RgbImage, PolyLayout), DegenError> {
    if image.width() != poly.width || image.height() != poly.height {
        return Err(DegenError::DimensionMismatch(image.width(), image.height(), poly.width, poly.height));
    }
    Ok((image.mirrored(), poly.mirrored(taxonomy)?))
}

/// `clamp((x - 0.5) * contrast + 0.5 + brightness)` on every channel,
/// evaluated as `x * contrast + offset` so zero jitter is exact.
pub fn apply_jitter(image: &RgbImage, brightness: f64, contrast: f64) -> RgbImage {
    let mut out = image.clone();
    let offset = 0.5 - 0.5 * contrast + brightness;
    for v in out.data_mut() {
        *v = (*v * contrast + offset).clamp(0.0, 1.0);
    }
    out
}

/// Random brightness/contrast jitter; returns the image and the drawn
/// `(brightness offset, contrast factor)`.
pub fn photometric_jitter(image: &RgbImage, cfg: &AugmentConfig, rng: &mut Stream) -> (RgbImage, f64, f64) {
    let c = rng.range(1.0 - cfg.contrast, 1.0 + cfg.contrast);
    let b = rng.range(-cfg.brightness, cfg.brightness);
    if cfg.brightness == 0.0 && cfg.contrast == 0.0 {
        return (image.clone(), 0.0, 1.0);
    }
    (apply_jitter(image, b, c), b, c)
}

/// What [`augment_sample`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentLog {
    pub degenerated: Option<DagEdge>,
    pub flipped: bool,
    pub brightness: f64,
    pub contrast: f64,
}

/// Degenerate (probability `degen_prob`, uniform over applicable edges),
/// flip (probability `hflip_prob`), then jitter. After a geometric change
/// the mask is re-rasterized and the image re-rendered with `render`, so
/// image, mask and layout always agree.
pub fn augment_sample(
    sample: &Sample,
    dag: &DegenerationDag,
    taxonomy: &RoomTaxonomy,
    cfg: &AugmentConfig,
    render: &SynthConfig,
    rng: &mut Stream,
) -> Result<(Sample, AugmentLog), DegenError> {
    let mut poly = sample.poly.clone();
    let mut log = AugmentLog { degenerated: None, flipped: false, brightness: 0.0, contrast: 1.0 };
    let do_degen = rng.bernoulli(cfg.degen_prob);
    let edge_pick = rng.next_u64();
    let do_flip = rng.bernoulli(cfg.hflip_prob);
    let render_index = rng.next_u64();
    if do_degen {
        let edges: Vec<DagEdge> = dag.children(poly.room_type).collect();
        if !edges.is_empty() {
            let e = edges[(edge_pick % edges.len() as u64) as usize];
            poly = degenerate(&poly, e, dag)?;
            log.degenerated = Some(e);
        }
    }
    if do_flip {
        poly = poly.mirrored(taxonomy)?;
        log.flipped = true;
    }
    let (mask, image) = if log.degenerated.is_some() || log.flipped {
        let mask = rasterize(&poly)?;
        let image = render_mask_image(&mask, render, render_index).quantized();
        (mask, image)
    } else {
        (sample.mask.clone(), sample.image.clone())
    };
    let (image, b, c) = photometric_jitter(&image, cfg, rng);
    log.brightness = b;
    log.contrast = c;
    Ok((Sample { id: sample.id, image, mask, poly }, log))
}

/// Seeded stream for augmenting `sample_index` in `epoch`.
pub fn augment_stream(cfg: &AugmentConfig, epoch: u64, sample_index: u64) -> Stream {
    Stream::new(cfg.seed, Purpose::Augment, (epoch << 32) | (sample_index & 0xFFFF_FFFF))
}
