//! Builders for logically Cartesian hexahedral grids with fractures on grid
//! planes: plain Cartesian boxes and layered grids whose layer interfaces
//! follow an inclined fracture plane.

use std::collections::BTreeSet;

use crate::geometry::{polygon_area_centroid, polyhedron_volume_centroid, Aabb, Point3};
use crate::scalar::Scalar;

use super::{
    assign_patch, normal_distance, patches_from_specs, region_of, Cell, Epsilons, Face, GridError,
    MixedDimGrid, MortarCoupling, PatchSpec, Subdomain,
};

/// Axis-aligned fracture rectangle: the plane `x[axis] = coord`, spanning
/// `lo..hi` in the two remaining axes (in increasing axis order).
#[derive(Debug, Clone, PartialEq)]
pub struct FractureRect<T> {
    pub name: String,
    pub axis: usize,
    pub coord: T,
    pub lo: [T; 2],
    pub hi: [T; 2],
}

/// Named matrix region as a union of boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBoxes<T> {
    pub name: String,
    pub boxes: Vec<Aabb<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianSpec<T> {
    pub domain: Aabb<T>,
    pub n: [usize; 3],
    pub fractures: Vec<FractureRect<T>>,
    pub regions: Vec<RegionBoxes<T>>,
    /// Region of cells outside every region box.
    pub default_region: String,
    pub eps: Epsilons<T>,
    pub patches: Vec<PatchSpec<T>>,
}

/// The plane `z = z0 + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclinedPlane<T> {
    pub z0: T,
    pub slope: T,
}

impl<T: Scalar> InclinedPlane<T> {
    pub fn z_at(&self, x: T) -> T {
        self.z0 + self.slope * x
    }

    /// Unit normal with positive z component.
    pub fn normal(&self) -> Point3<T> {
        Point3::new(-self.slope, T::zero(), T::one())
            .normalized()
            .expect("finite slope")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShearedSpec<T> {
    pub domain: Aabb<T>,
    pub n: [usize; 3],
    pub plane: InclinedPlane<T>,
    /// Horizontal levels that must coincide with layer interfaces, e.g. the
    /// edges of boundary bands.
    pub flat_levels: Vec<T>,
    pub fracture_name: String,
    pub regions: Vec<RegionBoxes<T>>,
    pub above_region: String,
    pub below_region: String,
    pub eps: Epsilons<T>,
    pub patches: Vec<PatchSpec<T>>,
}

/// Fracture in logical lattice coordinates.
#[derive(Debug, Clone)]
struct LogicalFracture {
    name: String,
    axis: usize,
    plane: usize,
    lo: [usize; 2],
    hi: [usize; 2],
}

struct Lattice<T> {
    n: [usize; 3],
    nodes: Vec<Point3<T>>,
}

impl<T: Scalar> Lattice<T> {
    fn node_id(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + (self.n[0] + 1) * (ijk[1] + (self.n[1] + 1) * ijk[2])
    }

    fn cell_id(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.n[0] * (ijk[1] + self.n[1] * ijk[2])
    }

    fn on_boundary(&self, ijk: [usize; 3]) -> bool {
        (0..3).any(|a| ijk[a] == 0 || ijk[a] == self.n[a])
    }
}

fn other_axes(a: usize) -> (usize, usize) {
    match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Grid faces normal to one axis, indexed by plane and in-plane cell indices.
struct FaceSlots {
    n: [usize; 3],
    axis: usize,
}

impl FaceSlots {
    fn len(&self) -> usize {
        let (b, c) = other_axes(self.axis);
        (self.n[self.axis] + 1) * self.n[b] * self.n[c]
    }

    /// `cells` holds in-plane cell indices at positions `b` and `c`; the entry
    /// at `axis` is ignored.
    fn index(&self, plane: usize, cells: [isize; 3]) -> Option<usize> {
        let (b, c) = other_axes(self.axis);
        let (q, r) = (cells[b], cells[c]);
        if q < 0
            || r < 0
            || q as usize >= self.n[b]
            || r as usize >= self.n[c]
            || plane > self.n[self.axis]
        {
            return None;
        }
        Some(plane + (self.n[self.axis] + 1) * (q as usize + self.n[b] * r as usize))
    }
}

const HEX_FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 3, 7, 4],
    [1, 2, 6, 5],
];

fn check_n(n: [usize; 3]) -> Result<(), GridError> {
    if n.contains(&0) {
        return Err(GridError::ZeroCellCount(n));
    }
    Ok(())
}

/// Cartesian grid of `n` cells with fractures on grid planes.
pub fn build_cartesian_grid<T: Scalar>(
    spec: &CartesianSpec<T>,
) -> Result<MixedDimGrid<T>, GridError> {
    check_n(spec.n)?;
    spec.eps.validate()?;
    let domain = spec.domain;
    let ext = domain.extent();
    if (0..3).any(|a| !(ext[a] > T::zero())) {
        return Err(GridError::InvalidParameter(
            "domain box has no volume".into(),
        ));
    }
    let h: [T; 3] = std::array::from_fn(|a| ext[a] / T::from_count(spec.n[a]));
    let n = spec.n;
    let mut nodes = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                nodes.push(Point3::new(
                    domain.min.x + h[0] * T::from_count(i),
                    domain.min.y + h[1] * T::from_count(j),
                    domain.min.z + h[2] * T::from_count(k),
                ));
            }
        }
    }
    let lattice = Lattice { n, nodes };

    let rel = T::of(1e-8);
    let mut logical = Vec::with_capacity(spec.fractures.len());
    for f in &spec.fractures {
        if f.axis > 2 {
            return Err(GridError::InvalidParameter(format!(
                "fracture '{}' axis {}",
                f.name, f.axis
            )));
        }
        let a = f.axis;
        let pos = (f.coord - domain.min[a]) / h[a];
        let plane = pos.round();
        if (pos - plane).abs() > rel * T::from_count(n[a]).max(T::one()) {
            return Err(GridError::MisalignedFracture {
                name: f.name.clone(),
                axis: a,
                coord: f.coord.to_f64_lossy(),
            });
        }
        let plane = plane.to_f64_lossy().max(0.0) as usize;
        if plane == 0 || plane >= n[a] {
            return Err(GridError::FractureOnBoundary {
                name: f.name.clone(),
            });
        }
        let (b, c) = other_axes(a);
        // Cells whose centers lie strictly inside the rectangle.
        let range = |axis: usize, lo: T, hi: T| {
            let mut first = usize::MAX;
            let mut last = 0usize;
            for q in 0..n[axis] {
                let center = domain.min[axis] + h[axis] * (T::from_count(q) + T::of(0.5));
                if center > lo && center < hi {
                    first = first.min(q);
                    last = q + 1;
                }
            }
            (first, last)
        };
        let (qb0, qb1) = range(b, f.lo[0], f.hi[0]);
        let (qc0, qc1) = range(c, f.lo[1], f.hi[1]);
        if qb0 >= qb1 || qc0 >= qc1 {
            return Err(GridError::EmptyFracture {
                name: f.name.clone(),
            });
        }
        logical.push(LogicalFracture {
            name: f.name.clone(),
            axis: a,
            plane,
            lo: [qb0, qc0],
            hi: [qb1, qc1],
        });
    }

    let tol = T::of(1e-8) * domain.diagonal();
    let mut matrix_regions = vec![spec.default_region.clone()];
    matrix_regions.extend(spec.regions.iter().map(|r| r.name.clone()));
    let regions = spec.regions.clone();
    let tag_of = move |p: Point3<T>| region_of(&regions, p, T::zero()).map_or(0, |r| r as u32 + 1);
    build_structured(
        lattice,
        &logical,
        domain,
        spec.eps,
        &spec.patches,
        matrix_regions,
        tag_of,
        tol,
    )
}

/// Layered hexahedral grid whose layer interfaces interpolate linearly
/// between the box bottom, the requested flat levels, the inclined fracture
/// plane and the box top. All faces stay planar; the fracture coincides
/// with one layer interface over the whole box footprint.
pub fn build_sheared_grid<T: Scalar>(spec: &ShearedSpec<T>) -> Result<MixedDimGrid<T>, GridError> {
    check_n(spec.n)?;
    spec.eps.validate()?;
    let domain = spec.domain;
    let ext = domain.extent();
    if (0..3).any(|a| !(ext[a] > T::zero())) {
        return Err(GridError::InvalidParameter(
            "domain box has no volume".into(),
        ));
    }
    let n = spec.n;
    let (x0, x1) = (domain.min.x, domain.max.x);
    let (zb, zt) = (domain.min.z, domain.max.z);
    for x in [x0, x1] {
        let z = spec.plane.z_at(x);
        if !(z > zb && z < zt) {
            return Err(GridError::PlaneExitsDomain {
                x: x.to_f64_lossy(),
                z: z.to_f64_lossy(),
            });
        }
    }
    // Layer surfaces z = a + b x, ordered bottom to top.
    let mut surfaces: Vec<(T, T, bool)> = vec![(zb, T::zero(), false), (zt, T::zero(), false)];
    for &lvl in &spec.flat_levels {
        if !(lvl > zb && lvl < zt) {
            return Err(GridError::InvalidParameter(format!(
                "flat level {} outside the box",
                lvl
            )));
        }
        surfaces.push((lvl, T::zero(), false));
    }
    surfaces.push((spec.plane.z0, spec.plane.slope, true));
    let at = |s: &(T, T, bool), x: T| s.0 + s.1 * x;
    surfaces.sort_by(|a, b| at(a, x0).total_cmp_scalar(&at(b, x0)));
    for w in surfaces.windows(2) {
        if !(at(&w[1], x0) > at(&w[0], x0) && at(&w[1], x1) > at(&w[0], x1)) {
            return Err(GridError::CrossingLayers);
        }
    }
    let intervals = surfaces.len() - 1;
    if n[2] < intervals {
        return Err(GridError::TooFewLayers {
            layers: n[2],
            intervals,
        });
    }
    let height = zt - zb;
    let share: Vec<f64> = surfaces
        .windows(2)
        .map(|w| {
            let mean =
                ((at(&w[1], x0) - at(&w[0], x0)) + (at(&w[1], x1) - at(&w[0], x1))) * T::of(0.5);
            (mean / height).to_f64_lossy() * n[2] as f64
        })
        .collect();
    let layers = allocate_layers(&share, n[2]);
    let mut layer_start = vec![0usize; intervals + 1];
    for m in 0..intervals {
        layer_start[m + 1] = layer_start[m] + layers[m];
    }
    let plane_pos = surfaces
        .iter()
        .position(|s| s.2)
        .expect("plane surface present");
    let k_frac = layer_start[plane_pos];

    let hx = ext.x / T::from_count(n[0]);
    let hy = ext.y / T::from_count(n[1]);
    let mut nodes = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        let m = (0..intervals)
            .rev()
            .find(|&m| layer_start[m] <= k)
            .expect("k >= 0");
        let m = m.min(intervals - 1);
        let t = T::from_count(k - layer_start[m]) / T::from_count(layers[m]);
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let x = x0 + hx * T::from_count(i);
                let y = domain.min.y + hy * T::from_count(j);
                let z = if k == n[2] {
                    zt
                } else {
                    let lo = at(&surfaces[m], x);
                    let hi = at(&surfaces[m + 1], x);
                    lo + t * (hi - lo)
                };
                nodes.push(Point3::new(x, y, z));
            }
        }
    }
    let lattice = Lattice { n, nodes };
    let fracture = LogicalFracture {
        name: spec.fracture_name.clone(),
        axis: 2,
        plane: k_frac,
        lo: [0, 0],
        hi: [n[0], n[1]],
    };
    let tol = T::of(1e-8) * domain.diagonal();
    let mut matrix_regions = vec![spec.above_region.clone(), spec.below_region.clone()];
    matrix_regions.extend(spec.regions.iter().map(|r| r.name.clone()));
    let regions = spec.regions.clone();
    let plane = spec.plane;
    let tag_of = move |p: Point3<T>| match region_of(&regions, p, T::zero()) {
        Some(r) => r as u32 + 2,
        None if p.z > plane.z_at(p.x) => 0,
        None => 1,
    };
    build_structured(
        lattice,
        &[fracture],
        domain,
        spec.eps,
        &spec.patches,
        matrix_regions,
        tag_of,
        tol,
    )
}

/// Distributes `total` layers over intervals proportionally to `share`
/// (largest remainder), at least one per interval.
fn allocate_layers(share: &[f64], total: usize) -> Vec<usize> {
    let mut base: Vec<usize> = share.iter().map(|s| (s.floor() as usize).max(1)).collect();
    while base.iter().sum::<usize>() > total {
        let (idx, _) = base
            .iter()
            .enumerate()
            .filter(|(_, &b)| b > 1)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("some interval has more than one layer");
        base[idx] -= 1;
    }
    while base.iter().sum::<usize>() < total {
        let idx = (0..share.len())
            .max_by(|&a, &b| {
                let ra = share[a] - base[a] as f64;
                let rb = share[b] - base[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            })
            .expect("non-empty");
        base[idx] += 1;
    }
    base
}

#[allow(clippy::too_many_arguments)]
fn build_structured<T: Scalar>(
    lattice: Lattice<T>,
    fractures: &[LogicalFracture],
    bbox: Aabb<T>,
    eps: Epsilons<T>,
    patch_specs: &[PatchSpec<T>],
    matrix_regions: Vec<String>,
    tag_of: impl Fn(Point3<T>) -> u32,
    tol: T,
) -> Result<MixedDimGrid<T>, GridError> {
    let n = lattice.n;
    let half = T::of(0.5);

    // Matrix cells.
    let mut matrix = Subdomain::empty(3, T::one());
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let ids: Vec<usize> = [
                    [i, j, k],
                    [i + 1, j, k],
                    [i + 1, j + 1, k],
                    [i, j + 1, k],
                    [i, j, k + 1],
                    [i + 1, j, k + 1],
                    [i + 1, j + 1, k + 1],
                    [i, j + 1, k + 1],
                ]
                .iter()
                .map(|&c| lattice.node_id(c))
                .collect();
                let verts: Vec<Point3<T>> = ids.iter().map(|&v| lattice.nodes[v]).collect();
                let faces: Vec<&[usize]> = HEX_FACES.iter().map(|f| &f[..]).collect();
                let (vol, center) = polyhedron_volume_centroid(&verts, &faces);
                matrix.cells.push(Cell {
                    center,
                    measure: vol,
                    tag: tag_of(center),
                });
                matrix.cell_nodes.push(ids);
            }
        }
    }

    // Fracture coverage of grid faces.
    let slots: [FaceSlots; 3] = std::array::from_fn(|a| FaceSlots { n, axis: a });
    let mut covered: [Vec<Option<usize>>; 3] = std::array::from_fn(|a| vec![None; slots[a].len()]);
    let mut owner_name: Vec<usize> = Vec::new();
    let mut frac_axis: Vec<usize> = Vec::new();
    let mut fracture = Subdomain::empty(2, eps.fracture);
    for (fi, f) in fractures.iter().enumerate() {
        let a = f.axis;
        let (b, c) = other_axes(a);
        for r in f.lo[1]..f.hi[1] {
            for q in f.lo[0]..f.hi[0] {
                let mut cells = [0isize; 3];
                cells[b] = q as isize;
                cells[c] = r as isize;
                let slot = slots[a].index(f.plane, cells).expect("in range");
                if let Some(prev) = covered[a][slot] {
                    return Err(GridError::OverlappingFractures {
                        first: fractures[owner_name[prev]].name.clone(),
                        second: f.name.clone(),
                    });
                }
                let loop_ids = face_loop(&lattice, a, f.plane, q, r);
                let verts: Vec<Point3<T>> = loop_ids.iter().map(|&v| lattice.nodes[v]).collect();
                let (area_vec, center) = polygon_area_centroid(&verts);
                covered[a][slot] = Some(fracture.cells.len());
                fracture.cells.push(Cell {
                    center,
                    measure: area_vec.norm(),
                    tag: fi as u32,
                });
                fracture.cell_nodes.push(loop_ids);
                owner_name.push(fi);
                frac_axis.push(a);
            }
        }
    }

    let mut mortars2: Vec<MortarCoupling<T>> = Vec::new();
    // Matrix faces.
    for a in 0..3 {
        let (b, c) = other_axes(a);
        for r in 0..n[c] {
            for q in 0..n[b] {
                for p in 0..=n[a] {
                    let loop_ids = face_loop(&lattice, a, p, q, r);
                    let verts: Vec<Point3<T>> =
                        loop_ids.iter().map(|&v| lattice.nodes[v]).collect();
                    let (area_vec, center) = polygon_area_centroid(&verts);
                    let area = area_vec.norm();
                    let mut normal = area_vec * (T::one() / area);
                    if normal[a] < T::zero() {
                        normal = -normal;
                    }
                    let cell_at = |pa: usize| {
                        let mut ijk = [0usize; 3];
                        ijk[a] = pa;
                        ijk[b] = q;
                        ijk[c] = r;
                        lattice.cell_id(ijk)
                    };
                    if p == 0 || p == n[a] {
                        let (owner, outward) = if p == 0 {
                            (cell_at(0), -normal)
                        } else {
                            (cell_at(p - 1), normal)
                        };
                        let dist = normal_distance(matrix.cells[owner].center, center, outward);
                        matrix.faces.push(Face {
                            owner,
                            neighbor: None,
                            area,
                            center,
                            normal: outward,
                            owner_dist: dist,
                            neighbor_dist: T::zero(),
                            patch: Some(assign_patch(patch_specs, center, tol)),
                        });
                        continue;
                    }
                    let lower = cell_at(p - 1);
                    let upper = cell_at(p);
                    let dl = normal_distance(matrix.cells[lower].center, center, normal);
                    let du = normal_distance(matrix.cells[upper].center, center, normal);
                    let mut cells = [0isize; 3];
                    cells[b] = q as isize;
                    cells[c] = r as isize;
                    let slot = slots[a].index(p, cells).expect("in range");
                    match covered[a][slot] {
                        Some(fc) => {
                            mortars2.push(MortarCoupling {
                                low_dim: 2,
                                high_cell: lower,
                                low_cell: fc,
                                area,
                                center,
                                normal,
                                high_half_distance: dl,
                            });
                            mortars2.push(MortarCoupling {
                                low_dim: 2,
                                high_cell: upper,
                                low_cell: fc,
                                area,
                                center,
                                normal: -normal,
                                high_half_distance: du,
                            });
                        }
                        None => matrix.faces.push(Face {
                            owner: lower,
                            neighbor: Some(upper),
                            area,
                            center,
                            normal,
                            owner_dist: dl,
                            neighbor_dist: du,
                            patch: None,
                        }),
                    }
                }
            }
        }
    }
    mortars2.sort_by_key(|m| (m.low_cell, m.high_cell));

    // Grid edges: fracture faces, intersection lines, fracture boundaries.
    let mut line = Subdomain::empty(1, eps.line);
    let mut mortars1: Vec<MortarCoupling<T>> = Vec::new();
    // Line cell incident to each lattice edge, keyed per axis.
    let edge_slot = |e: usize, s: usize, u: usize, v: usize| {
        let (f, _) = other_axes(e);
        s + n[e] * (u + (n[f] + 1) * v)
    };
    let mut edge_line: [Vec<Option<usize>>; 3] = std::array::from_fn(|e| {
        let (f, g) = other_axes(e);
        vec![None; n[e] * (n[f] + 1) * (n[g] + 1)]
    });
    for e in 0..3 {
        let (f, g) = other_axes(e);
        for v in 0..=n[g] {
            for u in 0..=n[f] {
                for s in 0..n[e] {
                    // Covered faces adjacent to this edge.
                    let mut adj: Vec<(usize, usize)> = Vec::new(); // (fracture cell, normal axis)
                    for side in [-1isize, 0] {
                        let mut cells = [0isize; 3];
                        cells[e] = s as isize;
                        cells[g] = v as isize + side;
                        if let Some(slot) = slots[f].index(u, cells) {
                            if let Some(fc) = covered[f][slot] {
                                adj.push((fc, f));
                            }
                        }
                        let mut cells = [0isize; 3];
                        cells[e] = s as isize;
                        cells[f] = u as isize + side;
                        if let Some(slot) = slots[g].index(v, cells) {
                            if let Some(fc) = covered[g][slot] {
                                adj.push((fc, g));
                            }
                        }
                    }
                    if adj.is_empty() {
                        continue;
                    }
                    let mut a_ijk = [0usize; 3];
                    a_ijk[e] = s;
                    a_ijk[f] = u;
                    a_ijk[g] = v;
                    let mut b_ijk = a_ijk;
                    b_ijk[e] = s + 1;
                    let (na, nb) = (lattice.node_id(a_ijk), lattice.node_id(b_ijk));
                    let (pa, pb) = (lattice.nodes[na], lattice.nodes[nb]);
                    let center = (pa + pb) * half;
                    let length = pa.distance(pb);
                    let dir = (pb - pa) * (T::one() / length);
                    let in_plane_normal = |fc: usize| {
                        let fnormal = Point3::axis(frac_axis[fc]);
                        let mut nrm = dir
                            .cross(fnormal)
                            .normalized()
                            .expect("edge not parallel to normal");
                        if (center - fracture.cells[fc].center).dot(nrm) < T::zero() {
                            nrm = -nrm;
                        }
                        nrm
                    };
                    let normal_axes: BTreeSet<usize> = adj.iter().map(|&(_, ax)| ax).collect();
                    if normal_axes.len() >= 2 {
                        let lc = line.cells.len();
                        line.cells.push(Cell {
                            center,
                            measure: length,
                            tag: 0,
                        });
                        line.cell_nodes.push(vec![na, nb]);
                        edge_line[e][edge_slot(e, s, u, v)] = Some(lc);
                        for &(fc, _) in &adj {
                            let nrm = in_plane_normal(fc);
                            mortars1.push(MortarCoupling {
                                low_dim: 1,
                                high_cell: fc,
                                low_cell: lc,
                                area: length,
                                center,
                                normal: nrm,
                                high_half_distance: normal_distance(
                                    fracture.cells[fc].center,
                                    center,
                                    nrm,
                                ),
                            });
                        }
                    } else if adj.len() == 2 {
                        let (o, nb_cell) = (adj[0].0.min(adj[1].0), adj[0].0.max(adj[1].0));
                        let nrm = in_plane_normal(o);
                        fracture.faces.push(Face {
                            owner: o,
                            neighbor: Some(nb_cell),
                            area: length,
                            center,
                            normal: nrm,
                            owner_dist: normal_distance(fracture.cells[o].center, center, nrm),
                            neighbor_dist: normal_distance(
                                fracture.cells[nb_cell].center,
                                center,
                                nrm,
                            ),
                            patch: None,
                        });
                    } else {
                        let on_boundary = u == 0 || u == n[f] || v == 0 || v == n[g];
                        if on_boundary {
                            let o = adj[0].0;
                            let nrm = in_plane_normal(o);
                            fracture.faces.push(Face {
                                owner: o,
                                neighbor: None,
                                area: length,
                                center,
                                normal: nrm,
                                owner_dist: normal_distance(fracture.cells[o].center, center, nrm),
                                neighbor_dist: T::zero(),
                                patch: Some(assign_patch(patch_specs, center, tol)),
                            });
                        }
                        // Otherwise an immersed tip: no face, hence no flux.
                    }
                }
            }
        }
    }

    // Lattice vertices touched by intersection lines.
    let mut point = Subdomain::empty(0, eps.point);
    let mut mortars0: Vec<MortarCoupling<T>> = Vec::new();
    let mut touched: BTreeSet<usize> = BTreeSet::new();
    for nodes in &line.cell_nodes {
        touched.extend(nodes.iter().copied());
    }
    let stride = [1usize, n[0] + 1, (n[0] + 1) * (n[1] + 1)];
    for &node in &touched {
        let ijk = [
            node % stride[1],
            (node / stride[1]) % (n[1] + 1),
            node / stride[2],
        ];
        let mut incident: Vec<(usize, usize)> = Vec::new(); // (line cell, axis)
        for e in 0..3 {
            let (f, g) = other_axes(e);
            for s in [ijk[e] as isize - 1, ijk[e] as isize] {
                if s < 0 || s as usize >= n[e] {
                    continue;
                }
                if let Some(lc) = edge_line[e][edge_slot(e, s as usize, ijk[f], ijk[g])] {
                    incident.push((lc, e));
                }
            }
        }
        let p = lattice.nodes[node];
        let collinear_pair = incident.len() == 2 && incident[0].1 == incident[1].1;
        if incident.len() == 1 {
            if lattice.on_boundary(ijk) {
                let lc = incident[0].0;
                let nrm = (p - line.cells[lc].center)
                    .normalized()
                    .expect("distinct points");
                line.faces.push(Face {
                    owner: lc,
                    neighbor: None,
                    area: T::one(),
                    center: p,
                    normal: nrm,
                    owner_dist: normal_distance(line.cells[lc].center, p, nrm),
                    neighbor_dist: T::zero(),
                    patch: Some(assign_patch(patch_specs, p, tol)),
                });
            }
        } else if collinear_pair {
            let (o, nb) = (
                incident[0].0.min(incident[1].0),
                incident[0].0.max(incident[1].0),
            );
            let nrm = (p - line.cells[o].center)
                .normalized()
                .expect("distinct points");
            line.faces.push(Face {
                owner: o,
                neighbor: Some(nb),
                area: T::one(),
                center: p,
                normal: nrm,
                owner_dist: normal_distance(line.cells[o].center, p, nrm),
                neighbor_dist: normal_distance(line.cells[nb].center, p, nrm),
                patch: None,
            });
        } else {
            let pc = point.cells.len();
            point.cells.push(Cell {
                center: p,
                measure: T::one(),
                tag: 0,
            });
            point.cell_nodes.push(vec![node]);
            for &(lc, _) in &incident {
                let nrm = (p - line.cells[lc].center)
                    .normalized()
                    .expect("distinct points");
                mortars0.push(MortarCoupling {
                    low_dim: 0,
                    high_cell: lc,
                    low_cell: pc,
                    area: T::one(),
                    center: p,
                    normal: nrm,
                    high_half_distance: normal_distance(line.cells[lc].center, p, nrm),
                });
            }
        }
    }

    let fracture_names: Vec<String> = fractures.iter().map(|f| f.name.clone()).collect();
    let grid = MixedDimGrid {
        bbox,
        nodes: lattice.nodes,
        subdomains: [point, line, fracture, matrix],
        mortars: [mortars0, mortars1, mortars2],
        patches: patches_from_specs(patch_specs),
        matrix_regions,
        fractures: fracture_names,
    };
    grid.validate()?;
    Ok(grid)
}

/// Node loop of the grid face normal to `a` at plane `p`, in-plane cell (q, r).
fn face_loop<T: Scalar>(
    lattice: &Lattice<T>,
    a: usize,
    p: usize,
    q: usize,
    r: usize,
) -> Vec<usize> {
    let (b, c) = other_axes(a);
    [(q, r), (q + 1, r), (q + 1, r + 1), (q, r + 1)]
        .iter()
        .map(|&(qq, rr)| {
            let mut ijk = [0usize; 3];
            ijk[a] = p;
            ijk[b] = qq;
            ijk[c] = rr;
            lattice.node_id(ijk)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdgrid::{BoundaryCondition, DEFAULT_PATCH};

    fn eps() -> Epsilons<f64> {
        Epsilons {
            fracture: 1e-2,
            line: 1e-4,
            point: 1e-6,
        }
    }

    fn unit_box() -> Aabb<f64> {
        Aabb::from_f64([0.0; 3], [1.0; 3])
    }

    fn full_plane(name: &str, axis: usize, coord: f64) -> FractureRect<f64> {
        FractureRect {
            name: name.into(),
            axis,
            coord,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        }
    }

    fn cartesian(n: [usize; 3], fractures: Vec<FractureRect<f64>>) -> CartesianSpec<f64> {
        CartesianSpec {
            domain: unit_box(),
            n,
            fractures,
            regions: vec![],
            default_region: "matrix".into(),
            eps: eps(),
            patches: vec![],
        }
    }

    #[test]
    fn minimal_split() {
        let g = build_cartesian_grid(&cartesian([2, 1, 1], vec![full_plane("f", 0, 0.5)])).unwrap();
        let s = g.stats();
        assert_eq!(s.by_dim(), [0, 0, 1, 2]);
        assert_eq!(g.mortars[2].len(), 2);
        assert!((g.subdomains[2].cells[0].measure - 1.0).abs() < 1e-14);
        assert_eq!(g.subdomains[3].interior_faces().count(), 0);
        for m in &g.mortars[2] {
            assert!((m.high_half_distance - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn three_full_planes() {
        let g = build_cartesian_grid(&cartesian(
            [4, 4, 4],
            vec![
                full_plane("x", 0, 0.5),
                full_plane("y", 1, 0.5),
                full_plane("z", 2, 0.5),
            ],
        ))
        .unwrap();
        assert_eq!(g.stats().by_dim(), [1, 12, 48, 64]);
        // Each line cell couples to four fracture half-planes, the point to six line cells.
        assert_eq!(g.mortars[1].len(), 12 * 4);
        assert_eq!(g.mortars[0].len(), 6);
        assert_eq!(g.mortars[2].len(), 2 * 48);
    }

    #[test]
    fn misaligned_fracture_is_rejected() {
        let r = build_cartesian_grid(&cartesian([4, 4, 4], vec![full_plane("f", 0, 0.3)]));
        assert!(matches!(r, Err(GridError::MisalignedFracture { .. })));
    }

    #[test]
    fn zero_cells_rejected() {
        let r = build_cartesian_grid(&cartesian([0, 4, 4], vec![]));
        assert!(matches!(r, Err(GridError::ZeroCellCount(_))));
    }

    #[test]
    fn boundary_plane_rejected() {
        let r = build_cartesian_grid(&cartesian([4, 4, 4], vec![full_plane("f", 2, 1.0)]));
        assert!(matches!(r, Err(GridError::FractureOnBoundary { .. })));
    }

    #[test]
    fn overlap_rejected() {
        let r = build_cartesian_grid(&cartesian(
            [4, 4, 4],
            vec![full_plane("a", 1, 0.5), full_plane("b", 1, 0.5)],
        ));
        assert!(matches!(r, Err(GridError::OverlappingFractures { .. })));
    }

    #[test]
    fn immersed_fracture_has_no_tip_faces() {
        let f = FractureRect {
            name: "f".into(),
            axis: 0,
            coord: 0.5,
            lo: [0.25, 0.25],
            hi: [0.75, 0.75],
        };
        let g = build_cartesian_grid(&cartesian([4, 4, 4], vec![f])).unwrap();
        assert_eq!(g.num_cells(2), 4);
        // Four interior edges between the 2x2 fracture cells, no boundary faces.
        assert_eq!(g.subdomains[2].faces.len(), 4);
        assert!(g.subdomains[2].faces.iter().all(|f| f.neighbor.is_some()));
    }

    #[test]
    fn patches_partition_boundary() {
        let mut spec = cartesian([4, 4, 4], vec![full_plane("f", 0, 0.5)]);
        spec.patches.push(PatchSpec {
            name: "left".into(),
            region: Aabb::from_f64([0.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
            condition: BoundaryCondition::Dirichlet(1.0),
        });
        let g = build_cartesian_grid(&spec).unwrap();
        assert_eq!(g.patches.last().unwrap().name, DEFAULT_PATCH);
        let left: f64 = g
            .patch_faces(0)
            .iter()
            .map(|&(d, f)| g.subdomains[d].faces[f].area)
            .sum();
        assert!((left - 1.0).abs() < 1e-12);
        let total: f64 = g.subdomains[3].boundary_faces().map(|(_, f)| f.area).sum();
        assert!((total - 6.0).abs() < 1e-12);
        // Fracture edges on the box boundary are boundary faces of the fracture.
        assert_eq!(g.subdomains[2].boundary_faces().count(), 16);
    }

    #[test]
    fn layer_allocation() {
        assert_eq!(allocate_layers(&[1.0, 4.0, 4.0, 1.0], 10), vec![1, 4, 4, 1]);
        assert_eq!(allocate_layers(&[2.2, 8.8, 8.8, 2.2], 22), vec![2, 9, 9, 2]);
        assert_eq!(allocate_layers(&[0.2, 1.8], 2), vec![1, 1]);
    }

    fn sheared(n: [usize; 3], plane: InclinedPlane<f64>, flat: Vec<f64>) -> ShearedSpec<f64> {
        ShearedSpec {
            domain: unit_box(),
            n,
            plane,
            flat_levels: flat,
            fracture_name: "f".into(),
            regions: vec![],
            above_region: "above".into(),
            below_region: "below".into(),
            eps: eps(),
            patches: vec![],
        }
    }

    #[test]
    fn zero_shear_matches_cartesian() {
        let s = build_sheared_grid(&sheared(
            [2, 2, 2],
            InclinedPlane {
                z0: 0.5,
                slope: 0.0,
            },
            vec![],
        ))
        .unwrap();
        let c = build_cartesian_grid(&cartesian([2, 2, 2], vec![full_plane("f", 2, 0.5)])).unwrap();
        assert_eq!(s.stats(), c.stats());
        assert_eq!(s.mortars[2].len(), c.mortars[2].len());
        for (a, b) in s.subdomains[3].cells.iter().zip(&c.subdomains[3].cells) {
            assert!(a.center.distance(b.center) < 1e-14);
            assert!((a.measure - b.measure).abs() < 1e-14);
        }
    }

    #[test]
    fn inclined_plane_geometry() {
        let plane = InclinedPlane {
            z0: 0.7,
            slope: -0.4,
        };
        let g = build_sheared_grid(&sheared([4, 3, 6], plane, vec![])).unwrap();
        assert_eq!(g.stats().by_dim(), [0, 0, 12, 72]);
        let vol: f64 = g.subdomains[3].cells.iter().map(|c| c.measure).sum();
        assert!((vol - 1.0).abs() < 1e-12);
        let area: f64 = g.subdomains[2].cells.iter().map(|c| c.measure).sum();
        assert!((area - (1.0f64 + 0.16).sqrt()).abs() < 1e-12);
        for c in &g.subdomains[2].cells {
            assert!((c.center.z - plane.z_at(c.center.x)).abs() < 1e-12);
        }
        // Cells above the plane are tagged 0, below 1.
        for c in &g.subdomains[3].cells {
            let above = c.center.z > plane.z_at(c.center.x);
            assert_eq!(c.tag, if above { 0 } else { 1 });
        }
        for m in &g.mortars[2] {
            assert!((m.normal.norm() - 1.0).abs() < 1e-12);
            assert!(m.normal.x.abs() > 0.0);
        }
    }

    #[test]
    fn plane_leaving_domain_is_rejected() {
        let r = build_sheared_grid(&sheared(
            [2, 2, 4],
            InclinedPlane {
                z0: 0.5,
                slope: 0.8,
            },
            vec![],
        ));
        assert!(matches!(r, Err(GridError::PlaneExitsDomain { .. })));
    }

    #[test]
    fn flat_levels_are_honoured() {
        let g = build_sheared_grid(&sheared(
            [4, 1, 10],
            InclinedPlane {
                z0: 0.8,
                slope: -0.6,
            },
            vec![0.1, 0.9],
        ))
        .unwrap();
        let zs: BTreeSet<i64> = g
            .nodes
            .iter()
            .filter(|p| p.x == 0.0)
            .map(|p| (p.z * 1e9).round() as i64)
            .collect();
        assert!(zs.contains(&100_000_000));
        assert!(zs.contains(&900_000_000));
        assert!(zs.contains(&800_000_000));
    }

    fn nested_planes() -> Vec<FractureRect<f64>> {
        let mut out = Vec::new();
        for (level, lo, hi) in [(0.5, 0.0, 1.0), (0.75, 0.5, 1.0), (0.625, 0.5, 0.75)] {
            for axis in 0..3 {
                out.push(FractureRect {
                    name: format!("f{axis}_{level}"),
                    axis,
                    coord: level,
                    lo: [lo; 2],
                    hi: [hi; 2],
                });
            }
        }
        out
    }

    #[test]
    fn nested_planes_counts() {
        let g = build_cartesian_grid(&cartesian([8, 8, 8], nested_planes())).unwrap();
        eprintln!("{:?}", g.stats());
        assert_eq!(g.stats().by_dim(), [27, 90, 252, 512]);
    }
}
