//! Benchmark case registry: JSON case files describing geometry, parameters,
//! boundary patches and probes, and the loader turning them into a grid with
//! flow and transport parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::flow::FlowParams;
use crate::geometry::{Aabb, Point3};
use crate::mdgrid::{
    build_cartesian_grid, build_sheared_grid, BoundaryCondition, CartesianSpec, Epsilons,
    FractureRect, GridError, InclinedPlane, MixedDimGrid, PatchSpec, RegionBoxes, ShearedSpec,
};
use crate::mshio::{build_from_msh, parse_msh, MshError, TagMap};
use crate::scalar::Scalar;
use crate::transport::TransportParams;

/// Schema tag every case file must carry.
pub const CASE_SCHEMA: &str = "dfmbench-case/1";

/// Identifiers of the built-in cases.
pub const CASE_IDS: [&str; 5] = ["1", "2.1", "2.2", "3", "4"];

/// Key of the fallback entry in per-region and per-fracture parameter maps.
pub const DEFAULT_KEY: &str = "default";

/// Relative deviation of the 3d-cell count from its target that still counts
/// as the requested refinement level.
pub const TARGET_TOLERANCE: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("unknown case id '{0}' (expected one of 1, 2.1, 2.2, 3, 4)")]
    UnknownCase(String),
    #[error("case {case}: refinement {level} is not available (levels 0..={max})")]
    Refinement {
        case: String,
        level: usize,
        max: usize,
    },
    #[error("case {0} has no built-in grid; supply a mesh file and a tag map")]
    MissingMesh(String),
    #[error("case file: {0}")]
    Format(String),
    #[error("case file: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Msh(#[from] MshError),
}

/// Axis-aligned box given by two corner arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoxDef {
    pub fn to_aabb<T: Scalar>(&self) -> Aabb<T> {
        Aabb::from_f64(self.min, self.max)
    }

    fn is_ordered(&self) -> bool {
        (0..3).all(|a| {
            self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] <= self.max[a]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDef {
    pub name: String,
    pub boxes: Vec<BoxDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractureDef {
    pub name: String,
    pub axis: usize,
    pub coord: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneDef {
    pub z0: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryDef {
    /// Axis-aligned fracture rectangles on a Cartesian grid.
    Cartesian {
        refinements: Vec<[usize; 3]>,
        fractures: Vec<FractureDef>,
        regions: Vec<RegionDef>,
        default_region: String,
    },
    /// One inclined fracture plane on a layered grid.
    Sheared {
        refinements: Vec<[usize; 3]>,
        plane: PlaneDef,
        flat_levels: Vec<f64>,
        fracture: String,
        regions: Vec<RegionDef>,
        above_region: String,
        below_region: String,
    },
    /// Externally supplied conforming tetrahedral mesh.
    Mesh { levels: usize },
}

impl GeometryDef {
    pub fn levels(&self) -> usize {
        match self {
            GeometryDef::Cartesian { refinements, .. }
            | GeometryDef::Sheared { refinements, .. } => refinements.len(),
            GeometryDef::Mesh { levels } => *levels,
        }
    }

    pub fn needs_mesh(&self) -> bool {
        matches!(self, GeometryDef::Mesh { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchDef {
    pub name: String,
    pub region: BoxDef,
    pub condition: BoundaryCondition<f64>,
}

/// Effective conductivities; maps are keyed by region or fracture name with
/// an optional `default` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDef {
    pub matrix_conductivity: BTreeMap<String, f64>,
    pub fracture_conductivity: BTreeMap<String, f64>,
    pub fracture_normal: BTreeMap<String, f64>,
    pub line_conductivity: f64,
    pub line_normal: f64,
    pub point_normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportDef {
    pub matrix_porosity: BTreeMap<String, f64>,
    pub fracture_porosity: BTreeMap<String, f64>,
    pub line_porosity: f64,
    pub point_porosity: f64,
    pub inflow_concentration: BTreeMap<String, f64>,
    pub total_time: f64,
    pub dt: f64,
}

impl TransportDef {
    /// Number of steps covering the total time exactly.
    pub fn steps(&self) -> Result<usize, CaseError> {
        if !(self.dt > 0.0
            && self.total_time >= 0.0
            && self.dt.is_finite()
            && self.total_time.is_finite())
        {
            return Err(CaseError::Invalid(
                "time step and total time must be positive".into(),
            ));
        }
        let n = (self.total_time / self.dt).round();
        if (n * self.dt - self.total_time).abs() > 1e-12 * self.total_time {
            return Err(CaseError::Invalid(format!(
                "total time {} is not a whole number of steps of {}",
                self.total_time, self.dt
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Head,
    Concentration,
}

fn default_samples() -> usize {
    1000
}

/// Field sampled at evenly spaced points of a segment, both ends included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineProbe {
    pub name: String,
    pub from: [f64; 3],
    pub to: [f64; 3],
    /// Subdomain dimension whose cells are sampled.
    pub dim: usize,
    pub field: Field,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Matrix cells of a named region.
    Region(String),
    /// Cells of one dimension whose centers lie in any of the boxes.
    Boxes { dim: usize, boxes: Vec<BoxDef> },
    /// Cells of a named fracture.
    Fracture(String),
    /// All cells of one dimension.
    Subdomain(usize),
    /// One probe per fracture, named `<probe>_<fracture>`.
    EachFracture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Sum of cross-section times porosity times measure times concentration.
    Weighted,
    /// Measure-weighted average concentration.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionProbe {
    pub name: String,
    pub select: Selection,
    pub mode: Weighting,
}

/// Advective concentration flux leaving through a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutletProbe {
    pub name: String,
    pub patch: String,
}

/// Share of the outflow leaving through one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxRatio {
    pub name: String,
    pub numerator: String,
    pub outlets: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probes {
    #[serde(default)]
    pub lines: Vec<LineProbe>,
    #[serde(default)]
    pub regions: Vec<RegionProbe>,
    #[serde(default)]
    pub outlets: Vec<OutletProbe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux_ratio: Option<FluxRatio>,
}

/// A complete case description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema: String,
    pub id: String,
    pub title: String,
    pub domain: BoxDef,
    pub geometry: GeometryDef,
    pub epsilon: Epsilons<f64>,
    pub patches: Vec<PatchDef>,
    pub flow: FlowDef,
    pub transport: TransportDef,
    /// Approximate 3d-cell count per refinement level.
    pub targets: Vec<usize>,
    pub probes: Probes,
}

const CASE1: &str = include_str!("../cases/case1.json");
const CASE2_1: &str = include_str!("../cases/case2_1.json");
const CASE2_2: &str = include_str!("../cases/case2_2.json");
const CASE3: &str = include_str!("../cases/case3.json");
const CASE4: &str = include_str!("../cases/case4.json");

impl CaseFile {
    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let file: CaseFile =
            serde_json::from_str(text).map_err(|e| CaseError::Format(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case files serialize")
    }

    /// The embedded case file for a built-in id.
    pub fn builtin(id: &str) -> Result<Self, CaseError> {
        let text = match id {
            "1" => CASE1,
            "2.1" => CASE2_1,
            "2.2" => CASE2_2,
            "3" => CASE3,
            "4" => CASE4,
            other => return Err(CaseError::UnknownCase(other.to_string())),
        };
        Self::from_json(text)
    }

    pub fn builtin_text(id: &str) -> Option<&'static str> {
        Some(match id {
            "1" => CASE1,
            "2.1" => CASE2_1,
            "2.2" => CASE2_2,
            "3" => CASE3,
            "4" => CASE4,
            _ => return None,
        })
    }

    /// Structural checks that do not need a grid.
    pub fn check(&self) -> Result<(), CaseError> {
        let bad = |m: String| Err(CaseError::Invalid(m));
        if self.schema != CASE_SCHEMA {
            return bad(format!("schema '{}' is not {CASE_SCHEMA}", self.schema));
        }
        if !self.domain.is_ordered() || (0..3).any(|a| self.domain.min[a] >= self.domain.max[a]) {
            return bad("domain box has no volume".into());
        }
        if self.targets.len() != self.geometry.levels() || self.targets.is_empty() {
            return bad("one 3d-cell target per refinement level required".into());
        }
        self.transport.steps()?;
        let domain: Aabb<f64> = self.domain.to_aabb();
        let tol = 1e-12 * domain.diagonal();
        for p in &self.patches {
            if !p.region.is_ordered() {
                return bad(format!("patch '{}' has an inverted box", p.name));
            }
        }
        for l in &self.probes.lines {
            let inside = [l.from, l.to]
                .iter()
                .all(|&q| domain.contains(Point3::from_f64(q), tol));
            if !inside {
                return bad(format!("line probe '{}' leaves the domain", l.name));
            }
            if l.dim > 3 || l.samples < 2 {
                return bad(format!(
                    "line probe '{}' needs a dimension up to 3 and at least 2 samples",
                    l.name
                ));
            }
        }
        Ok(())
    }

    pub fn patch_specs<T: Scalar>(&self) -> Vec<PatchSpec<T>> {
        self.patches
            .iter()
            .map(|p| PatchSpec {
                name: p.name.clone(),
                region: p.region.to_aabb(),
                condition: match p.condition {
                    BoundaryCondition::Dirichlet(v) => BoundaryCondition::Dirichlet(T::of(v)),
                    BoundaryCondition::Neumann(v) => BoundaryCondition::Neumann(T::of(v)),
                    BoundaryCondition::NoFlow => BoundaryCondition::NoFlow,
                },
            })
            .collect()
    }

    fn eps<T: Scalar>(&self) -> Epsilons<T> {
        Epsilons {
            fracture: T::of(self.epsilon.fracture),
            line: T::of(self.epsilon.line),
            point: T::of(self.epsilon.point),
        }
    }

    fn check_level(&self, level: usize) -> Result<(), CaseError> {
        let max = self.geometry.levels();
        if level >= max {
            return Err(CaseError::Refinement {
                case: self.id.clone(),
                level,
                max: max.saturating_sub(1),
            });
        }
        Ok(())
    }

    /// Builds the grid of a built-in geometry.
    pub fn build_grid<T: Scalar>(&self, level: usize) -> Result<MixedDimGrid<T>, CaseError> {
        self.check_level(level)?;
        let regions = |defs: &[RegionDef]| -> Vec<RegionBoxes<T>> {
            defs.iter()
                .map(|r| RegionBoxes {
                    name: r.name.clone(),
                    boxes: r.boxes.iter().map(BoxDef::to_aabb).collect(),
                })
                .collect()
        };
        let grid = match &self.geometry {
            GeometryDef::Cartesian {
                refinements,
                fractures,
                regions: defs,
                default_region,
            } => build_cartesian_grid(&CartesianSpec {
                domain: self.domain.to_aabb(),
                n: refinements[level],
                fractures: fractures
                    .iter()
                    .map(|f| FractureRect {
                        name: f.name.clone(),
                        axis: f.axis,
                        coord: T::of(f.coord),
                        lo: [T::of(f.lo[0]), T::of(f.lo[1])],
                        hi: [T::of(f.hi[0]), T::of(f.hi[1])],
                    })
                    .collect(),
                regions: regions(defs),
                default_region: default_region.clone(),
                eps: self.eps(),
                patches: self.patch_specs(),
            })?,
            GeometryDef::Sheared {
                refinements,
                plane,
                flat_levels,
                fracture,
                regions: defs,
                above_region,
                below_region,
            } => build_sheared_grid(&ShearedSpec {
                domain: self.domain.to_aabb(),
                n: refinements[level],
                plane: InclinedPlane {
                    z0: T::of(plane.z0),
                    slope: T::of(plane.slope),
                },
                flat_levels: flat_levels.iter().map(|&z| T::of(z)).collect(),
                fracture_name: fracture.clone(),
                regions: regions(defs),
                above_region: above_region.clone(),
                below_region: below_region.clone(),
                eps: self.eps(),
                patches: self.patch_specs(),
            })?,
            GeometryDef::Mesh { .. } => return Err(CaseError::MissingMesh(self.id.clone())),
        };
        Ok(grid)
    }

    /// Builds the grid from a conforming tetrahedral mesh.
    pub fn grid_from_mesh<T: Scalar>(
        &self,
        level: usize,
        mesh: &MeshInput,
    ) -> Result<MixedDimGrid<T>, CaseError> {
        self.check_level(level)?;
        let doc = parse_msh::<T>(&mesh.msh)?;
        Ok(build_from_msh(
            &doc,
            &mesh.tags,
            self.eps(),
            &self.patch_specs(),
        )?)
    }

    /// Flow parameters resolved against the region and fracture names of a grid.
    pub fn flow_params<T: Scalar>(
        &self,
        grid: &MixedDimGrid<T>,
    ) -> Result<FlowParams<T>, CaseError> {
        let f = &self.flow;
        let params = FlowParams {
            matrix_conductivity: lookup_all(
                &f.matrix_conductivity,
                &grid.matrix_regions,
                "matrix_conductivity",
            )?,
            fracture_conductivity: lookup_all(
                &f.fracture_conductivity,
                &grid.fractures,
                "fracture_conductivity",
            )?,
            fracture_normal: lookup_all(&f.fracture_normal, &grid.fractures, "fracture_normal")?,
            line_conductivity: T::of(f.line_conductivity),
            line_normal: T::of(f.line_normal),
            point_normal: T::of(f.point_normal),
            sources: Vec::new(),
        };
        params
            .validate(grid)
            .map_err(|e| CaseError::Invalid(e.to_string()))?;
        Ok(params)
    }

    pub fn transport_params<T: Scalar>(
        &self,
        grid: &MixedDimGrid<T>,
    ) -> Result<TransportParams<T>, CaseError> {
        let t = &self.transport;
        let params = TransportParams {
            matrix_porosity: lookup_all(
                &t.matrix_porosity,
                &grid.matrix_regions,
                "matrix_porosity",
            )?,
            fracture_porosity: lookup_all(
                &t.fracture_porosity,
                &grid.fractures,
                "fracture_porosity",
            )?,
            line_porosity: T::of(t.line_porosity),
            point_porosity: T::of(t.point_porosity),
            inflow_concentration: t
                .inflow_concentration
                .iter()
                .map(|(k, &v)| (k.clone(), T::of(v)))
                .collect(),
            dt: T::of(t.dt),
            steps: t.steps()?,
        };
        params
            .validate(grid)
            .map_err(|e| CaseError::Invalid(e.to_string()))?;
        Ok(params)
    }

    /// Probes with per-fracture selections expanded and names checked
    /// against the grid.
    pub fn resolve_probes<T: Scalar>(&self, grid: &MixedDimGrid<T>) -> Result<Probes, CaseError> {
        let mut out = self.probes.clone();
        let mut regions = Vec::new();
        for r in &self.probes.regions {
            match &r.select {
                Selection::EachFracture => {
                    for f in &grid.fractures {
                        regions.push(RegionProbe {
                            name: format!("{}_{}", r.name, f),
                            select: Selection::Fracture(f.clone()),
                            mode: r.mode,
                        });
                    }
                }
                Selection::Region(name) if grid.region_index(name).is_none() => {
                    return Err(CaseError::Invalid(format!(
                        "probe '{}': unknown matrix region '{name}'",
                        r.name
                    )))
                }
                Selection::Fracture(name) if grid.fracture_index(name).is_none() => {
                    return Err(CaseError::Invalid(format!(
                        "probe '{}': unknown fracture '{name}'",
                        r.name
                    )))
                }
                Selection::Subdomain(d) | Selection::Boxes { dim: d, .. } if *d > 3 => {
                    return Err(CaseError::Invalid(format!(
                        "probe '{}': dimension {d} out of range",
                        r.name
                    )))
                }
                _ => regions.push(r.clone()),
            }
        }
        out.regions = regions;
        let known = |p: &str| grid.patch_index(p).is_some();
        for o in &out.outlets {
            if !known(&o.patch) {
                return Err(CaseError::Invalid(format!(
                    "probe '{}': unknown patch '{}'",
                    o.name, o.patch
                )));
            }
        }
        if let Some(r) = &out.flux_ratio {
            if let Some(p) = std::iter::once(&r.numerator)
                .chain(&r.outlets)
                .find(|p| !known(p))
            {
                return Err(CaseError::Invalid(format!(
                    "probe '{}': unknown patch '{p}'",
                    r.name
                )));
            }
        }
        Ok(out)
    }
}

fn lookup_all<T: Scalar>(
    map: &BTreeMap<String, f64>,
    names: &[String],
    what: &str,
) -> Result<Vec<T>, CaseError> {
    names
        .iter()
        .map(|n| {
            map.get(n)
                .or_else(|| map.get(DEFAULT_KEY))
                .map(|&v| T::of(v))
                .ok_or_else(|| {
                    CaseError::Invalid(format!("{what}: no entry for '{n}' and no default"))
                })
        })
        .collect()
}

/// Mesh text plus the tag map describing its physical groups.
#[derive(Debug, Clone)]
pub struct MeshInput {
    pub msh: String,
    pub tags: TagMap,
    pub path: Option<String>,
}

impl MeshInput {
    pub fn read(msh: &std::path::Path, tags: &std::path::Path) -> Result<Self, CaseError> {
        let read = |p: &std::path::Path| {
            std::fs::read_to_string(p).map_err(|e| CaseError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let tag_text = read(tags)?;
        Ok(Self {
            msh: read(msh)?,
            tags: TagMap::from_json(&tag_text)?,
            path: Some(msh.display().to_string()),
        })
    }
}

/// Everything needed to run one case at one refinement level.
#[derive(Debug, Clone)]
pub struct LoadedCase<T> {
    pub file: CaseFile,
    pub refinement: usize,
    pub grid: MixedDimGrid<T>,
    pub flow: FlowParams<T>,
    pub transport: TransportParams<T>,
    pub probes: Probes,
    pub target_cells: usize,
    /// Non-fatal remarks, such as a cell count far from the target.
    pub warnings: Vec<String>,
}

impl<T> LoadedCase<T> {
    /// Relative deviation of the 3d-cell count from the target.
    pub fn target_deviation(&self) -> f64 {
        let n = self.grid_cells3() as f64;
        (n - self.target_cells as f64).abs() / self.target_cells as f64
    }

    fn grid_cells3(&self) -> usize {
        self.grid.subdomains[3].cells.len()
    }
}

/// Loads a case description at one refinement level. A mesh, when given,
/// replaces the built-in grid; mesh-only cases require one.
pub fn load_case_file<T: Scalar>(
    file: CaseFile,
    refinement: usize,
    mesh: Option<&MeshInput>,
) -> Result<LoadedCase<T>, CaseError> {
    file.check()?;
    let grid = match (mesh, file.geometry.needs_mesh()) {
        (Some(m), _) => file.grid_from_mesh(refinement, m)?,
        (None, true) => {
            file.check_level(refinement)?;
            return Err(CaseError::MissingMesh(file.id.clone()));
        }
        (None, false) => file.build_grid(refinement)?,
    };
    let flow = file.flow_params(&grid)?;
    let transport = file.transport_params(&grid)?;
    let probes = file.resolve_probes(&grid)?;
    let mut case = LoadedCase {
        target_cells: file.targets[refinement],
        file,
        refinement,
        grid,
        flow,
        transport,
        probes,
        warnings: Vec::new(),
    };
    let dev = case.target_deviation();
    if dev > TARGET_TOLERANCE {
        case.warnings.push(format!(
            "grid has {} 3d cells, {:.0}% away from the target {}",
            case.grid_cells3(),
            100.0 * dev,
            case.target_cells
        ));
    }
    Ok(case)
}

/// Loads a built-in case.
pub fn load_case<T: Scalar>(
    id: &str,
    refinement: usize,
    mesh: Option<&MeshInput>,
) -> Result<LoadedCase<T>, CaseError> {
    load_case_file(CaseFile::builtin(id)?, refinement, mesh)
}

/// The three boxes whose union is the low-conductivity matrix region of the
/// regular-network cases.
pub fn case2_region_boxes() -> [Aabb<f64>; 3] {
    [
        Aabb::from_f64([0.5, 0.0, 0.0], [1.0, 0.5, 1.0]),
        Aabb::from_f64([0.75, 0.5, 0.5], [1.0, 0.75, 1.0]),
        Aabb::from_f64([0.625, 0.5, 0.5], [0.75, 0.625, 0.75]),
    ]
}

/// Matrix region name of a point in the regular-network cases.
pub fn case2_region_of(p: Point3<f64>) -> &'static str {
    if case2_region_boxes().iter().any(|b| b.contains_open(p)) {
        "omega_3_1"
    } else {
        "omega_3_0"
    }
}
