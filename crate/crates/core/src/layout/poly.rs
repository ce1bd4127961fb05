//! Vector layouts: corners plus one polygon per visible surface.
//!
//! Coordinates are f64 pixels with the origin at the top-left, x to the
//! right and y downward. Pixel `(row, col)` has its center at `(col, row)`,
//! so the frame spans `[-0.5, W - 0.5] x [-0.5, H - 0.5]` and a horizontal
//! mirror maps `x` to `W - 1 - x`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mask::LayoutMask;
use super::surface::{Surface, SurfaceSet};
use super::taxonomy::RoomTaxonomy;
use super::LayoutError;

const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CornerKind {
    Interior,
    FrameBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub kind: CornerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameCorner {
    TopLeft,
    TopRight,
    BottomRight,
    BottomLeft,
}

impl FrameCorner {
    pub fn mirrored(self) -> FrameCorner {
        match self {
            FrameCorner::TopLeft => FrameCorner::TopRight,
            FrameCorner::TopRight => FrameCorner::TopLeft,
            FrameCorner::BottomRight => FrameCorner::BottomLeft,
            FrameCorner::BottomLeft => FrameCorner::BottomRight,
        }
    }
}

/// Polygon vertex: a layout corner by index, or a frame corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexRef {
    Corner(usize),
    Frame(FrameCorner),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePolygon {
    pub surface: Surface,
    pub vertices: Vec<VertexRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyLayout {
    pub width: usize,
    pub height: usize,
    pub corners: Vec<Corner>,
    pub surfaces: Vec<SurfacePolygon>,
    pub room_type: u32,
}

impl PolyLayout {
    pub fn from_json(text: &str) -> Result<Self, LayoutError> {
        serde_json::from_str(text).map_err(|e| LayoutError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn load(path: &Path) -> Result<Self, LayoutError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), LayoutError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn surface_set(&self) -> SurfaceSet {
        self.surfaces.iter().map(|p| p.surface).collect()
    }

    pub fn polygon(&self, s: Surface) -> Option<&SurfacePolygon> {
        self.surfaces.iter().find(|p| p.surface == s)
    }

    pub fn frame_point(&self, f: FrameCorner) -> (f64, f64) {
        let (x1, y1) = (self.width as f64 - 0.5, self.height as f64 - 0.5);
        match f {
            FrameCorner::TopLeft => (-0.5, -0.5),
            FrameCorner::TopRight => (x1, -0.5),
            FrameCorner::BottomRight => (x1, y1),
            FrameCorner::BottomLeft => (-0.5, y1),
        }
    }

    pub fn resolve(&self, v: VertexRef) -> Result<(f64, f64), LayoutError> {
        match v {
            VertexRef::Corner(i) => self
                .corners
                .get(i)
                .map(|c| (c.x, c.y))
                .ok_or(LayoutError::BadVertex(i)),
            VertexRef::Frame(f) => Ok(self.frame_point(f)),
        }
    }

    pub fn polygon_points(&self, poly: &SurfacePolygon) -> Result<Vec<(f64, f64)>, LayoutError> {
        poly.vertices.iter().map(|&v| self.resolve(v)).collect()
    }

    pub fn on_frame(&self, x: f64, y: f64) -> bool {
        let (x1, y1) = (self.width as f64 - 0.5, self.height as f64 - 0.5);
        let inside = (-0.5 - GEOM_EPS..=x1 + GEOM_EPS).contains(&x)
            && (-0.5 - GEOM_EPS..=y1 + GEOM_EPS).contains(&y);
        inside
            && ((x + 0.5).abs() < GEOM_EPS
                || (x - x1).abs() < GEOM_EPS
                || (y + 0.5).abs() < GEOM_EPS
                || (y - y1).abs() < GEOM_EPS)
    }

    /// Check structural invariants: simple polygons with positive area whose
    /// areas sum to the frame, corners inside the frame, interior corners
    /// shared by at least three polygons and frame-boundary corners lying on
    /// the frame and shared by at least two.
    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.width == 0 || self.height == 0 {
            return Err(LayoutError::EmptyFrame);
        }
        let mut seen = SurfaceSet::EMPTY;
        let mut total_area = 0.0;
        for poly in &self.surfaces {
            if seen.contains(poly.surface) {
                return Err(LayoutError::InvalidPolygon(format!("duplicate {}", poly.surface)));
            }
            seen.insert(poly.surface);
            let pts = self.polygon_points(poly)?;
            if pts.len() < 3 {
                return Err(LayoutError::InvalidPolygon(format!("{} has < 3 vertices", poly.surface)));
            }
            if !is_simple(&pts) {
                return Err(LayoutError::InvalidPolygon(format!("{} self-intersects", poly.surface)));
            }
            let a = signed_area(&pts).abs();
            if a <= GEOM_EPS {
                return Err(LayoutError::InvalidPolygon(format!("{} has zero area", poly.surface)));
            }
            total_area += a;
        }
        let frame_area = (self.width * self.height) as f64;
        if (total_area - frame_area).abs() > 1e-6 * frame_area {
            return Err(LayoutError::InvalidPolygon(format!(
                "polygon areas sum to {total_area}, frame is {frame_area}"
            )));
        }
        let (x1, y1) = (self.width as f64 - 0.5, self.height as f64 - 0.5);
        for (i, c) in self.corners.iter().enumerate() {
            if !(c.x >= -0.5 - GEOM_EPS && c.x <= x1 + GEOM_EPS && c.y >= -0.5 - GEOM_EPS && c.y <= y1 + GEOM_EPS) {
                return Err(LayoutError::InvalidCorner(i, "outside frame"));
            }
            let uses = self
                .surfaces
                .iter()
                .filter(|p| p.vertices.contains(&VertexRef::Corner(i)))
                .count();
            match c.kind {
                CornerKind::Interior if uses < 3 => {
                    return Err(LayoutError::InvalidCorner(i, "interior corner shared by < 3 surfaces"))
                }
                CornerKind::FrameBoundary if !self.on_frame(c.x, c.y) => {
                    return Err(LayoutError::InvalidCorner(i, "boundary corner off the frame"))
                }
                CornerKind::FrameBoundary if uses < 2 => {
                    return Err(LayoutError::InvalidCorner(i, "boundary corner shared by < 2 surfaces"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Mirror about the vertical axis: `x -> W - 1 - x`, left and right walls
    /// swapped, room type looked up from the swapped surface set.
    pub fn mirrored(&self, taxonomy: &RoomTaxonomy) -> Result<PolyLayout, LayoutError> {
        let w1 = self.width as f64 - 1.0;
        let set = self.surface_set().mirrored();
        let room_type = taxonomy.type_for(set).ok_or(LayoutError::UnknownSurfaceSet(set))?.id;
        let corners = self
            .corners
            .iter()
            .map(|c| Corner { x: w1 - c.x, ..*c })
            .collect();
        let surfaces = self
            .surfaces
            .iter()
            .map(|p| SurfacePolygon {
                surface: p.surface.mirrored(),
                vertices: p
                    .vertices
                    .iter()
                    .rev()
                    .map(|v| match *v {
                        VertexRef::Frame(f) => VertexRef::Frame(f.mirrored()),
                        other => other,
                    })
                    .collect(),
            })
            .collect();
        Ok(PolyLayout { width: self.width, height: self.height, corners, surfaces, room_type })
    }

    pub fn corner_points(&self) -> Vec<(f64, f64)> {
        self.corners.iter().map(|c| (c.x, c.y)).collect()
    }
}

/// Label each pixel by the polygon containing its center; centers on a
/// shared edge go to the lowest surface id.
pub fn rasterize(poly: &PolyLayout) -> Result<LayoutMask, LayoutError> {
    if poly.width == 0 || poly.height == 0 {
        return Err(LayoutError::EmptyFrame);
    }
    let mut order: Vec<(Surface, Vec<(f64, f64)>, [f64; 4])> = poly
        .surfaces
        .iter()
        .map(|p| {
            let pts = poly.polygon_points(p)?;
            let bbox = bounds(&pts);
            Ok((p.surface, pts, bbox))
        })
        .collect::<Result<_, LayoutError>>()?;
    order.sort_by_key(|(s, _, _)| *s);
    let mut labels = Vec::with_capacity(poly.width * poly.height);
    for r in 0..poly.height {
        for c in 0..poly.width {
            let p = (c as f64, r as f64);
            let hit = order.iter().find(|(_, pts, b)| {
                p.0 >= b[0] - GEOM_EPS
                    && p.0 <= b[2] + GEOM_EPS
                    && p.1 >= b[1] - GEOM_EPS
                    && p.1 <= b[3] + GEOM_EPS
                    && contains_closed(pts, p)
            });
            match hit {
                Some((s, _, _)) => labels.push(s.id()),
                None => return Err(LayoutError::NotCovered { row: r, col: c }),
            }
        }
    }
    LayoutMask::new(poly.width, poly.height, labels)
}

fn bounds(pts: &[(f64, f64)]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for &(x, y) in pts {
        b[0] = b[0].min(x);
        b[1] = b[1].min(y);
        b[2] = b[2].max(x);
        b[3] = b[3].max(y);
    }
    b
}

pub(crate) fn signed_area(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt().max(1.0);
    cross.abs() <= GEOM_EPS * len
        && p.0 >= a.0.min(b.0) - GEOM_EPS
        && p.0 <= a.0.max(b.0) + GEOM_EPS
        && p.1 >= a.1.min(b.1) - GEOM_EPS
        && p.1 <= a.1.max(b.1) + GEOM_EPS
}

/// Point-in-polygon including the boundary (crossing-number test).
pub(crate) fn contains_closed(pts: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = pts.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        if on_segment(a, b, p) {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        let v = (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
        if v.abs() <= GEOM_EPS {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

/// No two non-adjacent edges touch.
pub(crate) fn is_simple(pts: &[(f64, f64)]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}
