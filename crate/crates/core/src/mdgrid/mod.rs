//! Mixed-dimensional grid: one subdomain per dimension (3 matrix, 2 fractures,
//! 1 intersection lines, 0 intersection points) plus the mortar couplings
//! that connect each subdomain to the one of dimension one higher.

mod structured;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Point3};
use crate::scalar::Scalar;

pub use structured::{
    build_cartesian_grid, build_sheared_grid, CartesianSpec, FractureRect, InclinedPlane,
    RegionBoxes, ShearedSpec,
};

/// Grid dump schema identifier.
pub const GRID_SCHEMA: &str = "dfmbench-grid/1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("cell count must be positive in every direction, got {0:?}")]
    ZeroCellCount([usize; 3]),
    #[error("fracture '{name}' at {coord} is not on a grid plane of axis {axis}")]
    MisalignedFracture {
        name: String,
        axis: usize,
        coord: f64,
    },
    #[error("fracture '{name}' lies on the domain boundary")]
    FractureOnBoundary { name: String },
    #[error("fracture '{name}' covers no grid face")]
    EmptyFracture { name: String },
    #[error("fractures '{first}' and '{second}' overlap")]
    OverlappingFractures { first: String, second: String },
    #[error("inclined plane leaves the domain through the top or bottom (z = {z} at x = {x})")]
    PlaneExitsDomain { x: f64, z: f64 },
    #[error("layer surfaces cross or touch inside the domain")]
    CrossingLayers,
    #[error("{layers} layers cannot resolve {intervals} layer intervals")]
    TooFewLayers { layers: usize, intervals: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid invariant violated: {0}")]
    Invariant(String),
}

/// Cross-sectional measures of the lower-dimensional features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Epsilons<T> {
    /// Fracture aperture (m).
    pub fracture: T,
    /// Intersection-line cross-sectional area (m^2).
    pub line: T,
    /// Intersection-point volume (m^3).
    pub point: T,
}

impl<T: Scalar> Epsilons<T> {
    pub fn for_dim(&self, dim: usize) -> T {
        match dim {
            3 => T::one(),
            2 => self.fracture,
            1 => self.line,
            _ => self.point,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        for (name, v) in [
            ("fracture", self.fracture),
            ("line", self.line),
            ("point", self.point),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(GridError::InvalidParameter(format!(
                    "epsilon.{name} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Cell<T> {
    pub center: Point3<T>,
    /// d-dimensional measure; 1 for point cells.
    pub measure: T,
    /// Matrix region index (dim 3) or fracture index (dim 2); 0 otherwise.
    pub tag: u32,
}

/// A face of a subdomain. Interior faces join `owner` and `neighbor`;
/// boundary faces have no neighbor and belong to a patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Face<T> {
    pub owner: usize,
    pub neighbor: Option<usize>,
    /// (d-1)-measure; 1 for the point faces of line subdomains.
    pub area: T,
    pub center: Point3<T>,
    /// Unit normal pointing from owner to neighbor (outward on the boundary).
    pub normal: Point3<T>,
    pub owner_dist: T,
    pub neighbor_dist: T,
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Subdomain<T> {
    pub dim: usize,
    pub epsilon: T,
    pub cells: Vec<Cell<T>>,
    pub faces: Vec<Face<T>>,
    /// Node indices of every cell (8 for hexahedra, 4 for tetrahedra, the
    /// polygon loop for fracture cells, 2 for segments, 1 for points).
    pub cell_nodes: Vec<Vec<usize>>,
}

impl<T: Scalar> Subdomain<T> {
    pub fn empty(dim: usize, epsilon: T) -> Self {
        Self {
            dim,
            epsilon,
            cells: Vec::new(),
            faces: Vec::new(),
            cell_nodes: Vec::new(),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// `a_d = eps_d^(1/(3-d))`; 1 for the matrix.
    pub fn aperture(&self) -> T {
        if self.dim >= 3 {
            T::one()
        } else {
            self.epsilon.powf(T::one() / T::from_count(3 - self.dim))
        }
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &Face<T>)> {
        self.faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.neighbor.is_none())
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = (usize, &Face<T>)> {
        self.faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.neighbor.is_some())
    }
}

/// Coupling between a face of a (d+1)-cell and a coincident d-cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MortarCoupling<T> {
    pub low_dim: usize,
    pub high_cell: usize,
    pub low_cell: usize,
    /// d-measure of the interface (1 when d = 0).
    pub area: T,
    pub center: Point3<T>,
    /// Unit normal pointing out of the high-dimensional cell.
    pub normal: Point3<T>,
    pub high_half_distance: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum BoundaryCondition<T> {
    /// Prescribed hydraulic head (m).
    Dirichlet(T),
    /// Prescribed outward normal velocity `u · n` (m/s), scaled by the
    /// cross-sectional measure on lower-dimensional boundaries.
    Neumann(T),
    NoFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct BoundaryPatch<T> {
    pub name: String,
    pub condition: BoundaryCondition<T>,
}

/// Geometric selector for a boundary patch. A boundary face belongs to the
/// first spec whose (closed, slightly inflated) box contains its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatchSpec<T> {
    pub name: String,
    pub region: Aabb<T>,
    pub condition: BoundaryCondition<T>,
}

/// Name of the catch-all patch holding every unselected boundary face.
pub const DEFAULT_PATCH: &str = "no_flow";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridStats {
    pub cells_0d: usize,
    pub cells_1d: usize,
    pub cells_2d: usize,
    pub cells_3d: usize,
}

impl GridStats {
    pub fn by_dim(&self) -> [usize; 4] {
        [self.cells_0d, self.cells_1d, self.cells_2d, self.cells_3d]
    }

    pub fn total(&self) -> usize {
        self.by_dim().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MixedDimGrid<T> {
    pub bbox: Aabb<T>,
    pub nodes: Vec<Point3<T>>,
    /// Indexed by dimension.
    pub subdomains: [Subdomain<T>; 4],
    /// Indexed by the lower dimension of the coupling.
    pub mortars: [Vec<MortarCoupling<T>>; 3],
    pub patches: Vec<BoundaryPatch<T>>,
    pub matrix_regions: Vec<String>,
    pub fractures: Vec<String>,
}

impl<T: Scalar> MixedDimGrid<T> {
    pub fn subdomain(&self, dim: usize) -> &Subdomain<T> {
        &self.subdomains[dim]
    }

    pub fn num_cells(&self, dim: usize) -> usize {
        self.subdomains[dim].cells.len()
    }

    pub fn num_dofs(&self) -> usize {
        (0..4).map(|d| self.num_cells(d)).sum()
    }

    /// Global dof offset of each subdomain; dofs are ordered 3, 2, 1, 0.
    pub fn dof_offsets(&self) -> [usize; 4] {
        let mut off = [0usize; 4];
        let mut next = 0;
        for d in (0..4).rev() {
            off[d] = next;
            next += self.num_cells(d);
        }
        off
    }

    pub fn stats(&self) -> GridStats {
        grid_stats(self)
    }

    /// Geometric tolerance for coincidence tests.
    pub fn tolerance(&self) -> T {
        T::of(1e-8) * self.bbox.diagonal()
    }

    pub fn patch_index(&self, name: &str) -> Option<usize> {
        self.patches.iter().position(|p| p.name == name)
    }

    pub fn fracture_index(&self, name: &str) -> Option<usize> {
        self.fractures.iter().position(|p| p == name)
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.matrix_regions.iter().position(|p| p == name)
    }

    /// Every boundary face of the given patch as `(dim, face index)`.
    pub fn patch_faces(&self, patch: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for sd in self.subdomains.iter().rev() {
            for (fi, f) in sd.boundary_faces() {
                if f.patch == Some(patch) {
                    out.push((sd.dim, fi));
                }
            }
        }
        out
    }

    pub fn has_dirichlet(&self) -> bool {
        self.subdomains.iter().any(|sd| {
            sd.boundary_faces().any(|(_, f)| {
                matches!(
                    f.patch.map(|p| &self.patches[p].condition),
                    Some(BoundaryCondition::Dirichlet(_))
                )
            })
        })
    }

    /// Checks the structural invariants every builder must produce.
    pub fn validate(&self) -> Result<(), GridError> {
        for sd in &self.subdomains {
            if !(sd.epsilon > T::zero()) {
                return Err(GridError::Invariant(format!(
                    "epsilon of dim {} not positive",
                    sd.dim
                )));
            }
            if sd.dim == 3 && sd.epsilon != T::one() {
                return Err(GridError::Invariant("matrix epsilon must be 1".into()));
            }
            for (ci, c) in sd.cells.iter().enumerate() {
                if !(c.measure > T::zero()) || !c.center.is_finite() {
                    return Err(GridError::Invariant(format!(
                        "dim {} cell {ci} has invalid geometry",
                        sd.dim
                    )));
                }
            }
            for (fi, f) in sd.faces.iter().enumerate() {
                if (f.normal.norm() - T::one()).abs() > T::of(1e-6) {
                    return Err(GridError::Invariant(format!(
                        "dim {} face {fi} normal not unit",
                        sd.dim
                    )));
                }
                match (f.neighbor, f.patch) {
                    (None, Some(p)) if p < self.patches.len() => {}
                    (Some(_), None) => {}
                    _ => {
                        return Err(GridError::Invariant(format!(
                            "dim {} face {fi}: boundary faces need exactly one patch",
                            sd.dim
                        )))
                    }
                }
            }
        }
        for (d, ms) in self.mortars.iter().enumerate() {
            for m in ms {
                if !(m.area > T::zero()) || !(m.high_half_distance > T::zero()) {
                    return Err(GridError::Invariant(format!(
                        "mortar at dim {d} has invalid geometry"
                    )));
                }
                if m.high_cell >= self.num_cells(d + 1) || m.low_cell >= self.num_cells(d) {
                    return Err(GridError::Invariant(format!(
                        "mortar at dim {d} references a missing cell"
                    )));
                }
            }
        }
        Ok(())
    }

    /// JSON topology dump for debugging.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("grid serializes");
        if let serde_json::Value::Object(ref mut map) = v {
            map.insert(
                "schema".into(),
                serde_json::Value::String(GRID_SCHEMA.into()),
            );
        }
        v
    }
}

/// Exact cell counts per dimension.
pub fn grid_stats<T: Scalar>(grid: &MixedDimGrid<T>) -> GridStats {
    GridStats {
        cells_0d: grid.num_cells(0),
        cells_1d: grid.num_cells(1),
        cells_2d: grid.num_cells(2),
        cells_3d: grid.num_cells(3),
    }
}

/// Resolves the patch of a boundary face; falls back to the default patch,
/// which is always the last entry of `patches`.
pub(crate) fn assign_patch<T: Scalar>(specs: &[PatchSpec<T>], center: Point3<T>, tol: T) -> usize {
    specs
        .iter()
        .position(|s| s.region.contains(center, tol))
        .unwrap_or(specs.len())
}

pub(crate) fn patches_from_specs<T: Scalar>(specs: &[PatchSpec<T>]) -> Vec<BoundaryPatch<T>> {
    let mut patches: Vec<BoundaryPatch<T>> = specs
        .iter()
        .map(|s| BoundaryPatch {
            name: s.name.clone(),
            condition: s.condition,
        })
        .collect();
    patches.push(BoundaryPatch {
        name: DEFAULT_PATCH.into(),
        condition: BoundaryCondition::NoFlow,
    });
    patches
}

/// Region index of a matrix cell center: first named box set containing it.
pub(crate) fn region_of<T: Scalar>(
    regions: &[RegionBoxes<T>],
    p: Point3<T>,
    tol: T,
) -> Option<usize> {
    regions
        .iter()
        .position(|r| r.boxes.iter().any(|b| b.contains(p, tol)))
}

/// Distance from `from` to the plane through `face_center` with normal `normal`.
pub(crate) fn normal_distance<T: Scalar>(
    from: Point3<T>,
    face_center: Point3<T>,
    normal: Point3<T>,
) -> T {
    (face_center - from).dot(normal).abs()
}
