//! Deterministic synthetic cuboid rooms: layouts, rendered images and
//! on-disk datasets.
//!
//! Every sample is a pure function of `(config, index)`. Layout geometry
//! draws from the [`Purpose::Layout`] substream of the index and pixel noise
//! from [`Purpose::Render`], so changing noise settings never moves corners.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::imageio::{load_mask, palette, save_mask, RgbImage};
use crate::layout::{
    quantize, ray_exit, rasterize, CuboidView, LayoutError, LayoutMask, PolyLayout, RoomTaxonomy,
    Surface, WallCorner,
};
use crate::rng::{Purpose, Stream};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

/// Probability per room-type id. Serialized as a map with string keys so it
/// fits both JSON and TOML.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypeDistribution(pub BTreeMap<u32, f64>);

impl TypeDistribution {
    pub fn uniform(taxonomy: &RoomTaxonomy) -> Self {
        let p = 1.0 / taxonomy.len() as f64;
        Self(taxonomy.types().iter().map(|t| (t.id, p)).collect())
    }

    /// `head_mass` on `head`, the rest spread evenly over the other types.
    pub fn long_tail(taxonomy: &RoomTaxonomy, head: u32, head_mass: f64) -> Self {
        let rest = (1.0 - head_mass) / (taxonomy.len() - 1) as f64;
        Self(
            taxonomy
                .types()
                .iter()
                .map(|t| (t.id, if t.id == head { head_mass } else { rest }))
                .collect(),
        )
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// Inverse-CDF draw over ids in ascending order.
    pub fn sample(&self, u: f64) -> u32 {
        let mut acc = 0.0;
        let mut last = 0;
        for (&id, &p) in &self.0 {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = id;
            if u < acc {
                return id;
            }
        }
        last
    }
}

impl Serialize for TypeDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, f64> = self.0.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TypeDistribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        m.into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<u32>()
                    .map(|id| (id, v))
                    .map_err(|_| serde::de::Error::custom(format!("bad room type id `{k}`")))
            })
            .collect::<Result<_, _>>()
            .map(TypeDistribution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Empty means uniform over the taxonomy.
    pub type_distribution: TypeDistribution,
    pub noise_std: f64,
    pub shading_strength: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            seed: 0,
            type_distribution: TypeDistribution::default(),
            noise_std: 0.03,
            shading_strength: 0.15,
        }
    }
}

impl SynthConfig {
    /// Fill an empty distribution with the uniform one and check invariants.
    pub fn resolved(&self, taxonomy: &RoomTaxonomy) -> Result<SynthConfig, SynthError> {
        let mut cfg = self.clone();
        if cfg.type_distribution.0.is_empty() {
            cfg.type_distribution = TypeDistribution::uniform(taxonomy);
        }
        cfg.validate(taxonomy)?;
        Ok(cfg)
    }

    pub fn validate(&self, taxonomy: &RoomTaxonomy) -> Result<(), SynthError> {
        if self.width < 16 || self.height < 16 {
            return Err(SynthError::Config(format!(
                "dimensions must be >= 16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_std) {
            return Err(SynthError::Config(format!("noise_std {} outside [0, 1]", self.noise_std)));
        }
        if !self.shading_strength.is_finite() || self.shading_strength < 0.0 {
            return Err(SynthError::Config("shading_strength must be finite and >= 0".into()));
        }
        let total = self.type_distribution.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config(format!("type probabilities sum to {total}, not 1")));
        }
        for (&id, &p) in &self.type_distribution.0 {
            if p < 0.0 {
                return Err(SynthError::Config(format!("negative probability for type {id}")));
            }
            let t = taxonomy
                .get(id)
                .ok_or_else(|| SynthError::Config(format!("type {id} not in taxonomy")))?;
            if p > 0.0 && !t.surfaces.contains(Surface::FrontWall) {
                return Err(SynthError::Config(format!(
                    "type {id} has no front wall and cannot be generated as a cuboid view"
                )));
            }
        }
        Ok(())
    }
}

/// Draw the layout for sample `index`. The full five-surface view comes
/// from a back-wall rectangle with at least 10% frame margin on each side
/// and a vanishing point in its central half; surfaces missing from the
/// drawn room type are removed by pushing their back-wall side outside the
/// frame.
pub fn sample_layout(cfg: &SynthConfig, taxonomy: &RoomTaxonomy, index: u64) -> Result<PolyLayout, SynthError> {
    let mut rng = Stream::new(cfg.seed, Purpose::Layout, index);
    let type_id = cfg.type_distribution.sample(rng.uniform());
    let ty = taxonomy
        .get(type_id)
        .ok_or_else(|| SynthError::Config(format!("type {type_id} not in taxonomy")))?;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let left = quantize(-0.5 + w * rng.range(0.1, 0.4));
    let right = quantize(-0.5 + w * rng.range(0.6, 0.9));
    let top = quantize(-0.5 + h * rng.range(0.1, 0.4));
    let bottom = quantize(-0.5 + h * rng.range(0.6, 0.9));
    let vp = (
        quantize(left + (right - left) * rng.range(0.25, 0.75)),
        quantize(top + (bottom - top) * rng.range(0.25, 0.75)),
    );
    let mut rays = [None; 4];
    for c in WallCorner::ALL {
        let p = match c {
            WallCorner::TopLeft => (left, top),
            WallCorner::TopRight => (right, top),
            WallCorner::BottomRight => (right, bottom),
            WallCorner::BottomLeft => (left, bottom),
        };
        rays[c as usize] = Some(ray_exit(cfg.width, cfg.height, vp, p));
    }
    let mut view = CuboidView {
        width: cfg.width,
        height: cfg.height,
        left: Some(left),
        right: Some(right),
        top: Some(top),
        bottom: Some(bottom),
        rays,
    };
    for s in [Surface::Ceiling, Surface::Floor, Surface::LeftWall, Surface::RightWall] {
        if !ty.surfaces.contains(s) {
            view.remove(s)?;
        }
    }
    if view.surfaces() != ty.surfaces {
        return Err(SynthError::Config(format!("type {type_id} is not a cuboid view")));
    }
    Ok(view.to_poly(type_id)?)
}

/// Palette color per surface, a linear shading ramp and i.i.d. Gaussian
/// noise, clamped to [0, 1].
///
/// The ramp runs top-to-bottom for ceiling and front wall, bottom-to-top
/// for the floor and toward the back wall for side walls; it adds
/// `shading_strength * (t - 0.5)` to every channel.
pub fn render_image(poly: &PolyLayout, cfg: &SynthConfig, index: u64) -> Result<RgbImage, SynthError> {
    let mask = rasterize(poly)?;
    Ok(render_mask_image(&mask, cfg, index))
}

pub(crate) fn render_mask_image(mask: &LayoutMask, cfg: &SynthConfig, index: u64) -> RgbImage {
    let mut rng = Stream::new(cfg.seed, Purpose::Render, index);
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    RgbImage::from_fn(mask.width(), mask.height(), |r, c| {
        let label = mask.get(r, c);
        let base = palette(label);
        let u = (c as f64 + 0.5) / w;
        let v = (r as f64 + 0.5) / h;
        let t = match Surface::from_id(label) {
            Some(Surface::Ceiling) | Some(Surface::FrontWall) => v,
            Some(Surface::Floor) => 1.0 - v,
            Some(Surface::LeftWall) => u,
            Some(Surface::RightWall) => 1.0 - u,
            None => 0.5,
        };
        let shade = cfg.shading_strength * (t - 0.5);
        let mut px = [0.0; 3];
        for (k, out) in px.iter_mut().enumerate() {
            let noise = if cfg.noise_std > 0.0 { cfg.noise_std * rng.gaussian() } else { 0.0 };
            *out = (base[k] + shade + noise).clamp(0.0, 1.0);
        }
        px
    })
}

/// One training/evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub image: RgbImage,
    pub mask: LayoutMask,
    pub poly: PolyLayout,
}

/// Generate sample `index` in memory. The image is quantized to 8 bits so
/// it equals what [`gen_dataset`] writes and [`load_dataset`] reads back.
pub fn generate_sample(cfg: &SynthConfig, taxonomy: &RoomTaxonomy, index: u64) -> Result<Sample, SynthError> {
    let poly = sample_layout(cfg, taxonomy, index)?;
    let mask = rasterize(&poly)?;
    let image = render_mask_image(&mask, cfg, index).quantized();
    Ok(Sample { id: index, image, mask, poly })
}

pub fn generate_samples(
    cfg: &SynthConfig,
    taxonomy: &RoomTaxonomy,
    range: std::ops::Range<u64>,
) -> Result<Vec<Sample>, SynthError> {
    let cfg = cfg.resolved(taxonomy)?;
    range.into_par_iter().map(|i| generate_sample(&cfg, taxonomy, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: u64,
    pub image: String,
    pub mask: String,
    pub poly: String,
    pub room_type: u32,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Directory that record paths are relative to.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl DatasetManifest {
    pub fn path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    /// Load `manifest.jsonl`, given either the file or its directory.
    pub fn load(path: &Path) -> Result<DatasetManifest, SynthError> {
        let (root, file) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
        };
        let reader = BufReader::new(fs::File::open(&file)?);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| SynthError::Manifest { line: i + 1, msg: e.to_string() })?;
            records.push(rec);
        }
        Ok(DatasetManifest { root, records })
    }

    pub fn write(&self) -> Result<(), SynthError> {
        let mut f = fs::File::create(self.path())?;
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
        Ok(())
    }

    pub fn load_sample(&self, rec: &ManifestRecord) -> Result<Sample, SynthError> {
        let image = RgbImage::load_png(&self.root.join(&rec.image))?;
        let mask = load_mask(&self.root.join(&rec.mask))?;
        let poly = PolyLayout::load(&self.root.join(&rec.poly))?;
        let dims = [
            (image.width(), image.height()),
            (mask.width(), mask.height()),
            (poly.width, poly.height),
        ];
        if dims.iter().any(|&d| d != (rec.width, rec.height)) {
            return Err(SynthError::Manifest {
                line: 0,
                msg: format!("sample {} files disagree on dimensions: {dims:?}", rec.id),
            });
        }
        Ok(Sample { id: rec.id, image, mask, poly })
    }
}

/// Write `n` samples plus `manifest.jsonl` under `out_dir`.
pub fn gen_dataset(
    cfg: &SynthConfig,
    taxonomy: &RoomTaxonomy,
    n: usize,
    out_dir: &Path,
) -> Result<DatasetManifest, SynthError> {
    let cfg = cfg.resolved(taxonomy)?;
    fs::create_dir_all(out_dir)?;
    if n > 0 {
        for sub in ["images", "masks", "polys"] {
            fs::create_dir_all(out_dir.join(sub))?;
        }
    }
    let records = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = generate_sample(&cfg, taxonomy, i)?;
            let rec = ManifestRecord {
                id: i,
                image: format!("images/{i:06}.png"),
                mask: format!("masks/{i:06}.png"),
                poly: format!("polys/{i:06}.json"),
                room_type: s.poly.room_type,
                width: cfg.width,
                height: cfg.height,
            };
            s.image.save_png(&out_dir.join(&rec.image))?;
            save_mask(&s.mask, &out_dir.join(&rec.mask))?;
            s.poly.save(&out_dir.join(&rec.poly))?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let manifest = DatasetManifest { root: out_dir.to_path_buf(), records };
    manifest.write()?;
    Ok(manifest)
}

/// Load every sample of a manifest in record order.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<Sample>, SynthError> {
    manifest.records.par_iter().map(|r| manifest.load_sample(r)).collect()
}
