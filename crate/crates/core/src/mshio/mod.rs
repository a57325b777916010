//! Gmsh MSH 2.2 ASCII reader and writer, physical-tag sidecar maps, and
//! construction of mixed-dimensional grids from conforming tetrahedral meshes.

mod build;
mod parse;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::mdgrid::GridError;

pub use build::build_from_msh;
pub use parse::{parse_msh, write_msh};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MshError {
    #[error("line {line}: unsupported mesh format {version}")]
    UnsupportedVersion { line: usize, version: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: file ends inside section ${section}")]
    Truncated { line: usize, section: String },
    #[error("element {element} references missing node {node}")]
    UnresolvedNode { element: usize, node: usize },
    #[error("element {element} has physical tag {tag} with no role in the tag map")]
    UnmappedTag { element: usize, tag: i32 },
    #[error("fracture triangle {element} does not coincide with a facet shared by two tetrahedra")]
    NonConforming { element: usize },
    #[error("intersection element {element} does not coincide with a fracture triangle edge")]
    OrphanIntersection { element: usize },
    #[error("mesh contains no tetrahedra")]
    NoVolume,
    #[error("invalid tag map: {0}")]
    TagMap(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Point,
    Line,
    Triangle,
    Tetrahedron,
    /// Any other element type, kept verbatim by the writer.
    Other(u32),
}

impl ElementKind {
    pub fn from_code(code: u32) -> Self {
        match code {
            15 => Self::Point,
            1 => Self::Line,
            2 => Self::Triangle,
            4 => Self::Tetrahedron,
            other => Self::Other(other),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Self::Point => 15,
            Self::Line => 1,
            Self::Triangle => 2,
            Self::Tetrahedron => 4,
            Self::Other(c) => c,
        }
    }

    pub fn dim(self) -> Option<usize> {
        match self {
            Self::Point => Some(0),
            Self::Line => Some(1),
            Self::Triangle => Some(2),
            Self::Tetrahedron => Some(3),
            Self::Other(_) => None,
        }
    }

    /// Node count of the supported linear element types.
    pub fn node_count(self) -> Option<usize> {
        self.dim().map(|d| d + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MshNode<T> {
    pub id: usize,
    pub point: Point3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MshElement {
    pub id: usize,
    pub kind: ElementKind,
    /// All integer tags as listed in the file; the first is the physical tag.
    pub tags: Vec<i32>,
    pub nodes: Vec<usize>,
}

impl MshElement {
    pub fn physical(&self) -> i32 {
        self.tags.first().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalName {
    pub dim: usize,
    pub tag: i32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MshDocument<T> {
    pub version: String,
    pub file_type: u32,
    pub data_size: u32,
    pub physical_names: Vec<PhysicalName>,
    pub nodes: Vec<MshNode<T>>,
    pub elements: Vec<MshElement>,
    /// Non-fatal findings such as skipped sections.
    pub warnings: Vec<String>,
}

impl<T> MshDocument<T> {
    pub fn count(&self, kind: ElementKind) -> usize {
        self.elements.iter().filter(|e| e.kind == kind).count()
    }
}

/// Role of a physical tag: JSON keys are tags, values are ids or names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagMap {
    /// Physical tags of matrix tetrahedra; list order defines region order.
    pub matrix: Vec<i32>,
    #[serde(default)]
    pub fractures: BTreeMap<String, Label>,
    #[serde(default)]
    pub boundaries: BTreeMap<String, Label>,
    #[serde(default)]
    pub intersections: BTreeMap<String, Label>,
}

/// Identifier given either as a JSON string or an integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Number(i64),
    Text(String),
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Number(n) => write!(f, "{n}"),
            Label::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Role {
    Matrix(usize),
    Fracture(usize),
    Boundary,
    Intersection,
}

impl TagMap {
    pub fn from_json(text: &str) -> Result<Self, MshError> {
        let map: TagMap =
            serde_json::from_str(text).map_err(|e| MshError::TagMap(e.to_string()))?;
        map.resolved()?;
        Ok(map)
    }

    /// Fracture names in order of first appearance by ascending tag.
    pub fn fracture_names(&self) -> Result<Vec<String>, MshError> {
        Ok(self.resolved()?.1)
    }

    /// Tag to role table plus the fracture names.
    pub(crate) fn resolved(&self) -> Result<(BTreeMap<i32, Role>, Vec<String>), MshError> {
        let mut roles = BTreeMap::new();
        let mut insert = |tag: i32, role: Role| {
            if roles.insert(tag, role).is_some() {
                return Err(MshError::TagMap(format!(
                    "tag {tag} has more than one role"
                )));
            }
            Ok(())
        };
        for (i, &t) in self.matrix.iter().enumerate() {
            insert(t, Role::Matrix(i))?;
        }
        let parse_tag = |s: &str| {
            s.trim()
                .parse::<i32>()
                .map_err(|_| MshError::TagMap(format!("'{s}' is not an integer tag")))
        };
        let mut fractures: Vec<(i32, String)> = Vec::new();
        for (k, v) in &self.fractures {
            fractures.push((parse_tag(k)?, v.to_string()));
        }
        fractures.sort();
        let mut names: Vec<String> = Vec::new();
        for (tag, name) in fractures {
            if names.contains(&name) {
                return Err(MshError::TagMap(format!(
                    "fracture id '{name}' used by more than one tag"
                )));
            }
            names.push(name);
            insert(tag, Role::Fracture(names.len() - 1))?;
        }
        for k in self.boundaries.keys() {
            insert(parse_tag(k)?, Role::Boundary)?;
        }
        for k in self.intersections.keys() {
            insert(parse_tag(k)?, Role::Intersection)?;
        }
        if self.matrix.is_empty() {
            return Err(MshError::TagMap("no matrix tags".into()));
        }
        Ok((roles, names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_map_json() {
        let m = TagMap::from_json(
            r#"{"matrix": [1], "fractures": {"10": 0, "11": "f1"}, "boundaries": {"20": "out"}}"#,
        )
        .unwrap();
        assert_eq!(
            m.fracture_names().unwrap(),
            vec!["0".to_string(), "f1".to_string()]
        );
        let (roles, _) = m.resolved().unwrap();
        assert_eq!(roles[&11], Role::Fracture(1));
        assert_eq!(roles[&20], Role::Boundary);
    }

    #[test]
    fn tag_map_conflicts() {
        assert!(TagMap::from_json(r#"{"matrix": [1], "fractures": {"1": 0}}"#).is_err());
        assert!(
            TagMap::from_json(r#"{"matrix": [1], "fractures": {"2": "a", "3": "a"}}"#).is_err()
        );
        assert!(TagMap::from_json(r#"{"matrix": [], "fractures": {}}"#).is_err());
        assert!(TagMap::from_json(r#"{"matrix": [1], "fractures": {"x": 0}}"#).is_err());
    }
}
