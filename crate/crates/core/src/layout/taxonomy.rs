use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::surface::{Surface, SurfaceSet};
use super::LayoutError;

const DEFAULT_TAXONOMY: &str = include_str!("../../data/taxonomy.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomType {
    pub id: u32,
    #[serde(default)]
    pub name: String,
    pub surfaces: SurfaceSet,
    /// Canonical corner count (interior junctions plus frame crossings).
    pub corners: usize,
}

/// The set of room types, keyed by id and by visible-surface set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoomTaxonomy {
    types: Vec<RoomType>,
}

#[derive(Deserialize)]
struct TaxonomyFile {
    types: Vec<RoomType>,
}

impl<'de> Deserialize<'de> for RoomTaxonomy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = TaxonomyFile::deserialize(d)?;
        RoomTaxonomy::new(f.types).map_err(serde::de::Error::custom)
    }
}

impl RoomTaxonomy {
    pub fn new(types: Vec<RoomType>) -> Result<Self, LayoutError> {
        let mut ids = HashSet::new();
        let mut sets = HashSet::new();
        for t in &types {
            if !ids.insert(t.id) {
                return Err(LayoutError::DuplicateTypeId(t.id));
            }
            if t.surfaces.is_empty() {
                return Err(LayoutError::EmptySurfaceSet(t.id));
            }
            if !sets.insert(t.surfaces) {
                return Err(LayoutError::DuplicateSurfaceSet(t.id));
            }
        }
        Ok(Self { types })
    }

    /// The shipped 11-type table.
    pub fn default_lsun() -> Self {
        Self::from_json(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LayoutError> {
        serde_json::from_str(text).map_err(|e| LayoutError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LayoutError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({ "types": self.types })).unwrap()
    }

    pub fn types(&self) -> &[RoomType] {
        &self.types
    }

    pub fn get(&self, id: u32) -> Option<&RoomType> {
        self.types.iter().find(|t| t.id == id)
    }

    pub fn type_for(&self, surfaces: SurfaceSet) -> Option<&RoomType> {
        self.types.iter().find(|t| t.surfaces == surfaces)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// A one-surface removal from `parent` to `child`. `parent == child` is the
/// identity edge (retain everything).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DagEdge {
    pub parent: u32,
    pub child: u32,
}

impl DagEdge {
    pub fn identity(id: u32) -> Self {
        Self { parent: id, child: id }
    }

    pub fn is_identity(&self) -> bool {
        self.parent == self.child
    }
}

impl std::str::FromStr for DagEdge {
    type Err = LayoutError;

    /// Parses `parent->child` or `parent:child`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once(':'))
            .ok_or_else(|| LayoutError::Parse(format!("bad edge `{s}`, expected `parent->child`")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| LayoutError::Parse(format!("bad type id `{x}`")))
        };
        Ok(DagEdge { parent: parse(a)?, child: parse(b)? })
    }
}

/// Degeneration relation over room types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegenerationDag {
    nodes: Vec<u32>,
    edges: Vec<DagEdge>,
    removed: BTreeMap<DagEdge, Surface>,
}

impl DegenerationDag {
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn edges(&self) -> &[DagEdge] {
        &self.edges
    }

    pub fn children(&self, id: u32) -> impl Iterator<Item = DagEdge> + '_ {
        self.edges.iter().copied().filter(move |e| e.parent == id)
    }

    pub fn contains(&self, edge: DagEdge) -> bool {
        self.removed.contains_key(&edge)
    }

    /// Surface removed along `edge`, `None` for the identity edge or an edge
    /// that is not in the graph.
    pub fn removed_surface(&self, edge: DagEdge) -> Option<Surface> {
        self.removed.get(&edge).copied()
    }

    /// Kahn topological order; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<u32>> {
        let mut indeg: BTreeMap<u32, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        for e in &self.edges {
            *indeg.get_mut(&e.child)? += 1;
        }
        let mut ready: Vec<u32> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for e in self.children(n) {
                let d = indeg.get_mut(&e.child).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(e.child);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

/// Connect every type to each type whose surface set is its own minus
/// exactly one surface.
pub fn build_dag(taxonomy: &RoomTaxonomy) -> Result<DegenerationDag, LayoutError> {
    // Re-check ids: a taxonomy can be built field-by-field in tests.
    let mut seen = HashSet::new();
    for t in taxonomy.types() {
        if !seen.insert(t.id) {
            return Err(LayoutError::DuplicateTypeId(t.id));
        }
    }
    let mut edges = Vec::new();
    let mut removed = BTreeMap::new();
    for parent in taxonomy.types() {
        for s in parent.surfaces.iter() {
            if let Some(child) = taxonomy.type_for(parent.surfaces.without(s)) {
                let e = DagEdge { parent: parent.id, child: child.id };
                edges.push(e);
                removed.insert(e, s);
            }
        }
    }
    edges.sort();
    let mut nodes: Vec<u32> = taxonomy.types().iter().map(|t| t.id).collect();
    nodes.sort();
    Ok(DegenerationDag { nodes, edges, removed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[Surface]) -> SurfaceSet {
        names.iter().copied().collect()
    }

    #[test]
    fn default_table_loads() {
        let t = RoomTaxonomy::default_lsun();
        assert_eq!(t.len(), 11);
        assert_eq!(t.type_for(SurfaceSet::all()).unwrap().corners, 8);
        // closed under left/right mirroring
        for ty in t.types() {
            assert!(t.type_for(ty.surfaces.mirrored()).is_some(), "{}", ty.name);
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let json = r#"{"types":[
            {"id":0,"surfaces":["floor"],"corners":0},
            {"id":0,"surfaces":["ceiling"],"corners":0}]}"#;
        assert!(matches!(RoomTaxonomy::from_json(json), Err(LayoutError::Parse(_))));
        let types = vec![
            RoomType { id: 1, name: String::new(), surfaces: set(&[Surface::Floor]), corners: 0 },
            RoomType { id: 1, name: String::new(), surfaces: set(&[Surface::Ceiling]), corners: 0 },
        ];
        assert!(matches!(RoomTaxonomy::new(types), Err(LayoutError::DuplicateTypeId(1))));
    }

    #[test]
    fn full_box_links_to_no_ceiling() {
        let t = RoomTaxonomy::default_lsun();
        let dag = build_dag(&t).unwrap();
        let e = DagEdge { parent: 0, child: 1 };
        assert!(dag.contains(e));
        assert_eq!(dag.removed_surface(e), Some(Surface::Ceiling));
    }

    #[test]
    fn single_surface_type_has_no_children() {
        let types = vec![
            RoomType { id: 0, name: "front".into(), surfaces: set(&[Surface::FrontWall]), corners: 0 },
            RoomType {
                id: 1,
                name: "floor-front".into(),
                surfaces: set(&[Surface::Floor, Surface::FrontWall]),
                corners: 2,
            },
        ];
        let dag = build_dag(&RoomTaxonomy::new(types).unwrap()).unwrap();
        assert_eq!(dag.children(0).count(), 0);
        assert_eq!(dag.children(1).collect::<Vec<_>>(), vec![DagEdge { parent: 1, child: 0 }]);
    }

    #[test]
    fn edge_count_matches_pairwise_enumeration() {
        let t = RoomTaxonomy::default_lsun();
        let dag = build_dag(&t).unwrap();
        let mut brute = 0;
        for a in t.types() {
            for b in t.types() {
                if b.surfaces.is_subset(a.surfaces) && a.surfaces.len() == b.surfaces.len() + 1 {
                    brute += 1;
                }
            }
        }
        assert_eq!(dag.edges().len(), brute);
        assert_eq!(brute, 17);
        assert!(dag.topological_order().is_some());
    }

    #[test]
    fn partition_wall_extension() {
        // A larger living room degenerates to a bedroom view by dropping the
        // partition wall, here standing in as the left wall.
        let types = vec![
            RoomType { id: 20, name: "l-shaped-living-room".into(), surfaces: SurfaceSet::all(), corners: 8 },
            RoomType {
                id: 21,
                name: "standard-bedroom".into(),
                surfaces: SurfaceSet::all().without(Surface::LeftWall),
                corners: 6,
            },
        ];
        let dag = build_dag(&RoomTaxonomy::new(types).unwrap()).unwrap();
        assert_eq!(dag.edges(), &[DagEdge { parent: 20, child: 21 }]);
    }

    #[test]
    fn edge_parsing() {
        assert_eq!("0->1".parse::<DagEdge>().unwrap(), DagEdge { parent: 0, child: 1 });
        assert_eq!("3:9".parse::<DagEdge>().unwrap(), DagEdge { parent: 3, child: 9 });
        assert!("x".parse::<DagEdge>().is_err());
    }
}
