//! Images, the label palette and PNG I/O.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Rgb};

use crate::layout::{LayoutError, LayoutMask};

/// Label colors, indexed by label id: background, ceiling, floor, left wall,
/// right wall, front wall. Corners of the RGB cube pulled in to 38/217 so
/// shading and noise have headroom before clamping.
pub const PALETTE_RGB8: [[u8; 3]; 6] = [
    [0, 0, 0],
    [217, 217, 38],
    [217, 38, 38],
    [38, 217, 38],
    [38, 38, 217],
    [217, 217, 217],
];

/// Overlay color for edge pixels in rendered masks.
pub const EDGE_RGB8: [u8; 3] = [255, 0, 255];

/// Palette color as floats in [0, 1].
pub fn palette(label: u8) -> [f64; 3] {
    let c = PALETTE_RGB8[label as usize % PALETTE_RGB8.len()];
    [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]
}

/// Row-major RGB image with channel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&v);
    }

    pub fn mirrored(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |r, c| self.get(r, self.width - 1 - c))
    }

    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        let bytes = self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer size")
    }

    pub fn from_rgb8(img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> RgbImage {
        RgbImage {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    /// Round-trip through 8 bits, matching what a saved PNG reloads as.
    pub fn quantized(&self) -> RgbImage {
        RgbImage::from_rgb8(&self.to_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), LayoutError> {
        self.to_rgb8().save(path).map_err(image_err)
    }

    pub fn load_png(path: &Path) -> Result<RgbImage, LayoutError> {
        let img = image::open(path).map_err(image_err)?.to_rgb8();
        Ok(RgbImage::from_rgb8(&img))
    }
}

fn image_err(e: image::ImageError) -> LayoutError {
    match e {
        image::ImageError::IoError(io) => LayoutError::Io(io),
        other => LayoutError::Parse(other.to_string()),
    }
}

/// Save a mask as an 8-bit single-channel PNG, pixel value = label id.
pub fn save_mask(mask: &LayoutMask, path: &Path) -> Result<(), LayoutError> {
    let img: GrayImage =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, mask.labels().to_vec())
            .expect("buffer size");
    img.save(path).map_err(image_err)
}

pub fn load_mask(path: &Path) -> Result<LayoutMask, LayoutError> {
    let img = image::open(path).map_err(image_err)?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(LayoutError::Parse(format!(
                "mask must be 8-bit single channel, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    LayoutMask::new(w, h, gray.into_raw())
}

/// Palette rendering of a mask; `edges` (same size, nonzero = edge) are
/// drawn on top in [`EDGE_RGB8`].
pub fn render_mask(mask: &LayoutMask, edges: Option<&[bool]>) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let mut bytes = Vec::with_capacity(mask.len() * 3);
    for (i, &l) in mask.labels().iter().enumerate() {
        let c = if edges.is_some_and(|e| e[i]) { EDGE_RGB8 } else { PALETTE_RGB8[l as usize % 6] };
        bytes.extend_from_slice(&c);
    }
    ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, bytes).expect("buffer size")
}
