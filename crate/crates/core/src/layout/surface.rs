use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LayoutError;

/// Number of layout surfaces; label 0 is background / no-object.
pub const NUM_SURFACES: usize = 5;
/// Surfaces plus the background class.
pub const NUM_CLASSES: usize = NUM_SURFACES + 1;
pub const BACKGROUND: u8 = 0;

/// One of the five planar surfaces of a Manhattan room view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Surface {
    Ceiling = 1,
    Floor = 2,
    LeftWall = 3,
    RightWall = 4,
    FrontWall = 5,
}

impl Surface {
    pub const ALL: [Surface; NUM_SURFACES] = [
        Surface::Ceiling,
        Surface::Floor,
        Surface::LeftWall,
        Surface::RightWall,
        Surface::FrontWall,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Surface> {
        match id {
            1 => Some(Surface::Ceiling),
            2 => Some(Surface::Floor),
            3 => Some(Surface::LeftWall),
            4 => Some(Surface::RightWall),
            5 => Some(Surface::FrontWall),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Surface::Ceiling => "ceiling",
            Surface::Floor => "floor",
            Surface::LeftWall => "left-wall",
            Surface::RightWall => "right-wall",
            Surface::FrontWall => "front-wall",
        }
    }

    /// Label after a horizontal mirror.
    pub fn mirrored(self) -> Surface {
        match self {
            Surface::LeftWall => Surface::RightWall,
            Surface::RightWall => Surface::LeftWall,
            s => s,
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Surface {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Surface::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| LayoutError::UnknownSurface(s.to_string()))
    }
}

impl Serialize for Surface {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Surface {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Set of surfaces, stored as a bitmask over surface ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SurfaceSet(u8);

impl SurfaceSet {
    pub const EMPTY: SurfaceSet = SurfaceSet(0);

    pub fn all() -> Self {
        Surface::ALL.into_iter().collect()
    }

    pub fn contains(self, s: Surface) -> bool {
        self.0 & (1 << s.id()) != 0
    }

    pub fn insert(&mut self, s: Surface) {
        self.0 |= 1 << s.id();
    }

    pub fn remove(&mut self, s: Surface) {
        self.0 &= !(1 << s.id());
    }

    pub fn without(mut self, s: Surface) -> Self {
        self.remove(s);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: SurfaceSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: SurfaceSet) -> SurfaceSet {
        SurfaceSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Surface> {
        Surface::ALL.into_iter().filter(move |s| self.contains(*s))
    }

    /// Left/right walls swapped.
    pub fn mirrored(self) -> SurfaceSet {
        self.iter().map(Surface::mirrored).collect()
    }

    /// Space-separated surface names in id order, used as the text side of
    /// the contrastive pairing.
    pub fn describe(self) -> String {
        self.iter().map(Surface::name).collect::<Vec<_>>().join(" ")
    }
}

impl FromIterator<Surface> for SurfaceSet {
    fn from_iter<I: IntoIterator<Item = Surface>>(iter: I) -> Self {
        let mut set = SurfaceSet::EMPTY;
        for s in iter {
            set.insert(s);
        }
        set
    }
}

impl Serialize for SurfaceSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let names: Vec<&str> = self.iter().map(Surface::name).collect();
        names.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SurfaceSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<Surface>::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

impl fmt::Display for SurfaceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.iter().map(Surface::name).collect::<Vec<_>>().join(", "))
    }
}
