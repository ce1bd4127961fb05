//! Manhattan layout domain: surfaces, label masks, polygon layouts, the
//! room-type table and its degeneration graph.

mod cuboid;
mod grid;
mod mask;
mod poly;
mod surface;
mod taxonomy;

pub use cuboid::{quantize, ray_exit, CuboidView, WallCorner, COORD_QUANTUM};
pub use grid::Grid;
pub use mask::{surfaces_of, validate_layout, Disconnected, LayoutMask, OutOfRange, ValidationReport};
pub use poly::{rasterize, Corner, CornerKind, FrameCorner, PolyLayout, SurfacePolygon, VertexRef};
pub use surface::{Surface, SurfaceSet, BACKGROUND, NUM_CLASSES, NUM_SURFACES};
pub use taxonomy::{build_dag, DagEdge, DegenerationDag, RoomTaxonomy, RoomType};

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("frame dimensions must be positive")]
    EmptyFrame,
    #[error("expected {expected} labels, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("unknown surface `{0}`")]
    UnknownSurface(String),
    #[error("duplicate room type id {0}")]
    DuplicateTypeId(u32),
    #[error("room type {0} has an empty surface set")]
    EmptySurfaceSet(u32),
    #[error("room type {0} repeats another type's surface set")]
    DuplicateSurfaceSet(u32),
    #[error("no room type has surfaces {0}")]
    UnknownSurfaceSet(SurfaceSet),
    #[error("vertex references missing corner {0}")]
    BadVertex(usize),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("corner {0}: {1}")]
    InvalidCorner(usize, &'static str),
    #[error("pixel ({row}, {col}) is not covered by any surface")]
    NotCovered { row: usize, col: usize },
    #[error("layout is not a cuboid view: {0}")]
    NotCuboid(String),
    #[error("surface {0} cannot be removed from this view")]
    NotRemovable(Surface),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
