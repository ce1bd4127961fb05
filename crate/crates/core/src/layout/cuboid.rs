//! Cuboid room views in edge form.
//!
//! A view is described by the back (front-facing) wall rectangle and, for
//! each back-wall corner, the point where the receding wall edge leaves the
//! frame. A back-wall side that lies outside the frame is `None`; the surface
//! it bounds (ceiling for the top side, left wall for the left side, ...) is
//! then not visible. Pushing one side outside is exactly the one-surface
//! degeneration of a layout.

use std::collections::BTreeMap;

use super::poly::{Corner, CornerKind, FrameCorner, PolyLayout, SurfacePolygon, VertexRef};
use super::surface::{Surface, SurfaceSet};
use super::LayoutError;

const EPS: f64 = 1e-9;
/// Corner coordinates are snapped to this dyadic grid so that mirroring and
/// re-serialization are exact.
pub const COORD_QUANTUM: f64 = 1.0 / 256.0;

pub fn quantize(v: f64) -> f64 {
    (v / COORD_QUANTUM).round() * COORD_QUANTUM
}

/// Back-wall corners in clockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WallCorner {
    TopLeft = 0,
    TopRight = 1,
    BottomRight = 2,
    BottomLeft = 3,
}

impl WallCorner {
    pub const ALL: [WallCorner; 4] =
        [WallCorner::TopLeft, WallCorner::TopRight, WallCorner::BottomRight, WallCorner::BottomLeft];

    /// The two surfaces that meet along the receding edge from this corner.
    fn ray_surfaces(self) -> (Surface, Surface) {
        match self {
            WallCorner::TopLeft => (Surface::Ceiling, Surface::LeftWall),
            WallCorner::TopRight => (Surface::Ceiling, Surface::RightWall),
            WallCorner::BottomRight => (Surface::Floor, Surface::RightWall),
            WallCorner::BottomLeft => (Surface::Floor, Surface::LeftWall),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuboidView {
    pub width: usize,
    pub height: usize,
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub top: Option<f64>,
    pub bottom: Option<f64>,
    /// Frame exit of the receding edge through each back-wall corner; only
    /// meaningful when both sides meeting at that corner are present.
    pub rays: [Option<(f64, f64)>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PointKey {
    Wall(WallCorner),
    Ray(WallCorner),
    /// Where a back-wall side meets the frame: side surface id and end (0 =
    /// top/left end, 1 = bottom/right end).
    SideEnd(u8, u8),
}

impl CuboidView {
    fn x1(&self) -> f64 {
        self.width as f64 - 0.5
    }

    fn y1(&self) -> f64 {
        self.height as f64 - 0.5
    }

    /// Visible surfaces: front wall always, plus the surface beyond each
    /// back-wall side that lies inside the frame.
    pub fn surfaces(&self) -> SurfaceSet {
        let mut s = SurfaceSet::EMPTY;
        s.insert(Surface::FrontWall);
        if self.top.is_some() {
            s.insert(Surface::Ceiling);
        }
        if self.bottom.is_some() {
            s.insert(Surface::Floor);
        }
        if self.left.is_some() {
            s.insert(Surface::LeftWall);
        }
        if self.right.is_some() {
            s.insert(Surface::RightWall);
        }
        s
    }

    fn corner_present(&self, c: WallCorner) -> bool {
        match c {
            WallCorner::TopLeft => self.top.is_some() && self.left.is_some(),
            WallCorner::TopRight => self.top.is_some() && self.right.is_some(),
            WallCorner::BottomRight => self.bottom.is_some() && self.right.is_some(),
            WallCorner::BottomLeft => self.bottom.is_some() && self.left.is_some(),
        }
    }

    fn wall_point(&self, c: WallCorner) -> (f64, f64) {
        let x = match c {
            WallCorner::TopLeft | WallCorner::BottomLeft => self.left,
            _ => self.right,
        };
        let y = match c {
            WallCorner::TopLeft | WallCorner::TopRight => self.top,
            _ => self.bottom,
        };
        (x.unwrap(), y.unwrap())
    }

    /// Translate the side bounding `surface` outside the frame.
    pub fn remove(&mut self, surface: Surface) -> Result<(), LayoutError> {
        let slot = match surface {
            Surface::Ceiling => &mut self.top,
            Surface::Floor => &mut self.bottom,
            Surface::LeftWall => &mut self.left,
            Surface::RightWall => &mut self.right,
            Surface::FrontWall => return Err(LayoutError::NotRemovable(surface)),
        };
        if slot.is_none() {
            return Err(LayoutError::NotRemovable(surface));
        }
        *slot = None;
        for c in WallCorner::ALL {
            if !self.corner_present(c) {
                self.rays[c as usize] = None;
            }
        }
        Ok(())
    }

    /// Build the polygon layout. Corner order: present back-wall corners
    /// clockwise from top-left, then frame crossings by perimeter position.
    pub fn to_poly(&self, room_type: u32) -> Result<PolyLayout, LayoutError> {
        let (x1, y1) = (self.x1(), self.y1());
        for c in WallCorner::ALL {
            if self.corner_present(c) && self.rays[c as usize].is_none() {
                return Err(LayoutError::InvalidPolygon(format!("missing ray for {c:?}")));
            }
        }
        let mut points: BTreeMap<PointKey, (f64, f64)> = BTreeMap::new();
        for c in WallCorner::ALL {
            if self.corner_present(c) {
                points.insert(PointKey::Wall(c), self.wall_point(c));
                points.insert(PointKey::Ray(c), self.rays[c as usize].unwrap());
            }
        }
        // Sides meeting the frame where the perpendicular side is absent.
        if let Some(x) = self.left {
            if self.top.is_none() {
                points.insert(PointKey::SideEnd(3, 0), (x, -0.5));
            }
            if self.bottom.is_none() {
                points.insert(PointKey::SideEnd(3, 1), (x, y1));
            }
        }
        if let Some(x) = self.right {
            if self.top.is_none() {
                points.insert(PointKey::SideEnd(4, 0), (x, -0.5));
            }
            if self.bottom.is_none() {
                points.insert(PointKey::SideEnd(4, 1), (x, y1));
            }
        }
        if let Some(y) = self.top {
            if self.left.is_none() {
                points.insert(PointKey::SideEnd(1, 0), (-0.5, y));
            }
            if self.right.is_none() {
                points.insert(PointKey::SideEnd(1, 1), (x1, y));
            }
        }
        if let Some(y) = self.bottom {
            if self.left.is_none() {
                points.insert(PointKey::SideEnd(2, 0), (-0.5, y));
            }
            if self.right.is_none() {
                points.insert(PointKey::SideEnd(2, 1), (x1, y));
            }
        }

        let mut corners = Vec::new();
        let mut index: BTreeMap<PointKey, usize> = BTreeMap::new();
        for c in WallCorner::ALL {
            if let Some(&(x, y)) = points.get(&PointKey::Wall(c)) {
                index.insert(PointKey::Wall(c), corners.len());
                corners.push(Corner { x, y, kind: CornerKind::Interior });
            }
        }
        let mut boundary: Vec<(PointKey, (f64, f64))> = points
            .iter()
            .filter(|(k, _)| !matches!(k, PointKey::Wall(_)))
            .map(|(k, v)| (*k, *v))
            .collect();
        boundary.sort_by(|a, b| {
            self.perimeter_pos(a.1).partial_cmp(&self.perimeter_pos(b.1)).unwrap().then(a.0.cmp(&b.0))
        });
        for (k, (x, y)) in boundary {
            index.insert(k, corners.len());
            corners.push(Corner { x, y, kind: CornerKind::FrameBoundary });
        }
        let v = |k: PointKey| VertexRef::Corner(index[&k]);

        let mut surfaces = Vec::new();
        if self.top.is_some() {
            let (l, r) = (self.left.is_some(), self.right.is_some());
            let mut chain = vec![];
            chain.push(if r { v(PointKey::Ray(WallCorner::TopRight)) } else { v(PointKey::SideEnd(1, 1)) });
            if r {
                chain.push(v(PointKey::Wall(WallCorner::TopRight)));
            }
            if l {
                chain.push(v(PointKey::Wall(WallCorner::TopLeft)));
            }
            chain.push(if l { v(PointKey::Ray(WallCorner::TopLeft)) } else { v(PointKey::SideEnd(1, 0)) });
            surfaces.push(self.close_chain(Surface::Ceiling, chain, &corners));
        }
        if self.bottom.is_some() {
            let (l, r) = (self.left.is_some(), self.right.is_some());
            let mut chain = vec![];
            chain.push(if l { v(PointKey::Ray(WallCorner::BottomLeft)) } else { v(PointKey::SideEnd(2, 0)) });
            if l {
                chain.push(v(PointKey::Wall(WallCorner::BottomLeft)));
            }
            if r {
                chain.push(v(PointKey::Wall(WallCorner::BottomRight)));
            }
            chain.push(if r { v(PointKey::Ray(WallCorner::BottomRight)) } else { v(PointKey::SideEnd(2, 1)) });
            surfaces.push(self.close_chain(Surface::Floor, chain, &corners));
        }
        if self.left.is_some() {
            let (t, b) = (self.top.is_some(), self.bottom.is_some());
            let mut chain = vec![];
            chain.push(if t { v(PointKey::Ray(WallCorner::TopLeft)) } else { v(PointKey::SideEnd(3, 0)) });
            if t {
                chain.push(v(PointKey::Wall(WallCorner::TopLeft)));
            }
            if b {
                chain.push(v(PointKey::Wall(WallCorner::BottomLeft)));
            }
            chain.push(if b { v(PointKey::Ray(WallCorner::BottomLeft)) } else { v(PointKey::SideEnd(3, 1)) });
            surfaces.push(self.close_chain(Surface::LeftWall, chain, &corners));
        }
        if self.right.is_some() {
            let (t, b) = (self.top.is_some(), self.bottom.is_some());
            let mut chain = vec![];
            chain.push(if b { v(PointKey::Ray(WallCorner::BottomRight)) } else { v(PointKey::SideEnd(4, 1)) });
            if b {
                chain.push(v(PointKey::Wall(WallCorner::BottomRight)));
            }
            if t {
                chain.push(v(PointKey::Wall(WallCorner::TopRight)));
            }
            chain.push(if t { v(PointKey::Ray(WallCorner::TopRight)) } else { v(PointKey::SideEnd(4, 0)) });
            surfaces.push(self.close_chain(Surface::RightWall, chain, &corners));
        }
        // Front wall: the back-wall rectangle clipped to the frame.
        let rect_corner = |c: WallCorner| -> VertexRef {
            let (h, vside) = match c {
                WallCorner::TopLeft => (self.left.is_some(), self.top.is_some()),
                WallCorner::TopRight => (self.right.is_some(), self.top.is_some()),
                WallCorner::BottomRight => (self.right.is_some(), self.bottom.is_some()),
                WallCorner::BottomLeft => (self.left.is_some(), self.bottom.is_some()),
            };
            let vert_side = match c {
                WallCorner::TopLeft | WallCorner::BottomLeft => 3u8,
                _ => 4,
            };
            let horiz_side = match c {
                WallCorner::TopLeft | WallCorner::TopRight => 1u8,
                _ => 2,
            };
            let end_v = match c {
                WallCorner::TopLeft | WallCorner::TopRight => 0u8,
                _ => 1,
            };
            let end_h = match c {
                WallCorner::TopLeft | WallCorner::BottomLeft => 0u8,
                _ => 1,
            };
            match (h, vside) {
                (true, true) => v(PointKey::Wall(c)),
                (true, false) => v(PointKey::SideEnd(vert_side, end_v)),
                (false, true) => v(PointKey::SideEnd(horiz_side, end_h)),
                (false, false) => VertexRef::Frame(match c {
                    WallCorner::TopLeft => FrameCorner::TopLeft,
                    WallCorner::TopRight => FrameCorner::TopRight,
                    WallCorner::BottomRight => FrameCorner::BottomRight,
                    WallCorner::BottomLeft => FrameCorner::BottomLeft,
                }),
            }
        };
        surfaces.push(SurfacePolygon {
            surface: Surface::FrontWall,
            vertices: WallCorner::ALL.into_iter().map(rect_corner).collect(),
        });
        surfaces.sort_by_key(|p| p.surface);
        Ok(PolyLayout { width: self.width, height: self.height, corners, surfaces, room_type })
    }

    /// Clockwise perimeter coordinate starting at the top-left frame corner.
    fn perimeter_pos(&self, (x, y): (f64, f64)) -> f64 {
        let (w, h) = (self.width as f64, self.height as f64);
        let (x1, y1) = (self.x1(), self.y1());
        if (y + 0.5).abs() < EPS && x < x1 - EPS {
            x + 0.5
        } else if (x - x1).abs() < EPS && y < y1 - EPS {
            w + y + 0.5
        } else if (y - y1).abs() < EPS && x > -0.5 + EPS {
            w + h + (x1 - x)
        } else {
            2.0 * w + h + (y1 - y)
        }
    }

    /// Close a chain that starts and ends on the frame by walking the frame
    /// clockwise from its last vertex back to its first.
    fn close_chain(&self, surface: Surface, chain: Vec<VertexRef>, corners: &[Corner]) -> SurfacePolygon {
        let pos = |v: &VertexRef| match v {
            VertexRef::Corner(i) => self.perimeter_pos((corners[*i].x, corners[*i].y)),
            VertexRef::Frame(_) => unreachable!("chains end on layout corners"),
        };
        let (w, h) = (self.width as f64, self.height as f64);
        let per = 2.0 * (w + h);
        let start = pos(chain.last().unwrap());
        let end = pos(chain.first().unwrap());
        let span = (end - start).rem_euclid(per);
        let frame = [
            (0.0, FrameCorner::TopLeft),
            (w, FrameCorner::TopRight),
            (w + h, FrameCorner::BottomRight),
            (2.0 * w + h, FrameCorner::BottomLeft),
        ];
        let mut arc: Vec<(f64, FrameCorner)> = frame
            .iter()
            .map(|&(s, f)| ((s - start).rem_euclid(per), f))
            .filter(|&(d, _)| d > EPS && d < span - EPS)
            .collect();
        arc.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut vertices = chain;
        vertices.extend(arc.into_iter().map(|(_, f)| VertexRef::Frame(f)));
        SurfacePolygon { surface, vertices }
    }

    /// Recover the edge form from a layout produced by [`CuboidView::to_poly`]
    /// (or any layout with the same structure).
    pub fn from_poly(poly: &PolyLayout) -> Result<CuboidView, LayoutError> {
        let front = poly
            .polygon(Surface::FrontWall)
            .ok_or_else(|| LayoutError::NotCuboid("no front wall".into()))?;
        let pts = poly.polygon_points(front)?;
        let (x1, y1) = (poly.width as f64 - 0.5, poly.height as f64 - 0.5);
        let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let side = |v: f64, frame: f64| ((v - frame).abs() > EPS).then_some(v);
        let mut view = CuboidView {
            width: poly.width,
            height: poly.height,
            left: side(min_x, -0.5),
            right: side(max_x, x1),
            top: side(min_y, -0.5),
            bottom: side(max_y, y1),
            rays: [None; 4],
        };
        if view.surfaces() != poly.surface_set() {
            return Err(LayoutError::NotCuboid(format!(
                "front wall extent implies {}, layout has {}",
                view.surfaces(),
                poly.surface_set()
            )));
        }
        for c in WallCorner::ALL {
            if !view.corner_present(c) {
                continue;
            }
            let (a, b) = c.ray_surfaces();
            let (pa, pb) = match (poly.polygon(a), poly.polygon(b)) {
                (Some(pa), Some(pb)) => (pa, pb),
                _ => return Err(LayoutError::NotCuboid(format!("missing surfaces at {c:?}"))),
            };
            let exit = pa.vertices.iter().find_map(|v| match v {
                VertexRef::Corner(i)
                    if poly.corners[*i].kind == CornerKind::FrameBoundary && pb.vertices.contains(v) =>
                {
                    Some((poly.corners[*i].x, poly.corners[*i].y))
                }
                _ => None,
            });
            view.rays[c as usize] =
                Some(exit.ok_or_else(|| LayoutError::NotCuboid(format!("no frame exit at {c:?}")))?);
        }
        Ok(view)
    }
}

/// Frame exit of the ray from `from` through `through`, snapped to the
/// coordinate grid and exactly onto the frame line it hits.
pub fn ray_exit(width: usize, height: usize, from: (f64, f64), through: (f64, f64)) -> (f64, f64) {
    let (x1, y1) = (width as f64 - 0.5, height as f64 - 0.5);
    let (dx, dy) = (through.0 - from.0, through.1 - from.1);
    let tx = if dx < 0.0 {
        (-0.5 - from.0) / dx
    } else if dx > 0.0 {
        (x1 - from.0) / dx
    } else {
        f64::INFINITY
    };
    let ty = if dy < 0.0 {
        (-0.5 - from.1) / dy
    } else if dy > 0.0 {
        (y1 - from.1) / dy
    } else {
        f64::INFINITY
    };
    if tx < ty {
        let x = if dx < 0.0 { -0.5 } else { x1 };
        (x, quantize(from.1 + tx * dy).clamp(-0.5, y1))
    } else {
        let y = if dy < 0.0 { -0.5 } else { y1 };
        (quantize(from.0 + ty * dx).clamp(-0.5, x1), y)
    }
}
