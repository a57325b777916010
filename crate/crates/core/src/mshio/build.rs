use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::geometry::{tetrahedron_volume, Aabb, Point3};
use crate::mdgrid::{
    assign_patch, patches_from_specs, Cell, Epsilons, Face, MixedDimGrid, MortarCoupling,
    PatchSpec, Subdomain,
};
use crate::scalar::Scalar;

use super::{ElementKind, MshDocument, MshError, Role, TagMap};

const TET_FACETS: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

fn sorted3(mut k: [usize; 3]) -> [usize; 3] {
    k.sort_unstable();
    k
}

fn sorted2(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Builds a mixed-dimensional grid from a conforming tetrahedral mesh.
///
/// Fracture triangles must coincide (as vertex sets) with facets shared by two
/// tetrahedra. Intersection lines are taken from line elements tagged as
/// intersections and completed by every edge shared by fracture triangles of
/// non-coplanar fractures. Boundary faces are assigned to patches by centroid.
pub fn build_from_msh<T: Scalar>(
    doc: &MshDocument<T>,
    tags: &TagMap,
    eps: Epsilons<T>,
    patch_specs: &[PatchSpec<T>],
) -> Result<MixedDimGrid<T>, MshError> {
    eps.validate()?;
    let (roles, fracture_names) = tags.resolved()?;
    let index: HashMap<usize, usize> = doc
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i))
        .collect();
    let nodes: Vec<Point3<T>> = doc.nodes.iter().map(|n| n.point).collect();
    let local = |ids: &[usize]| -> Vec<usize> { ids.iter().map(|id| index[id]).collect() };

    let mut tets: Vec<([usize; 4], usize)> = Vec::new();
    let mut triangles: Vec<(usize, [usize; 3], usize)> = Vec::new(); // (element id, nodes, fracture)
    let mut lines: Vec<(usize, [usize; 2])> = Vec::new();
    let mut points: Vec<usize> = Vec::new();
    for e in &doc.elements {
        if e.kind.dim().is_none() {
            continue;
        }
        let role = roles.get(&e.physical()).ok_or(MshError::UnmappedTag {
            element: e.id,
            tag: e.physical(),
        })?;
        let v = local(&e.nodes);
        match (e.kind, role) {
            (ElementKind::Tetrahedron, Role::Matrix(r)) => {
                tets.push(([v[0], v[1], v[2], v[3]], *r))
            }
            (ElementKind::Triangle, Role::Fracture(f)) => {
                triangles.push((e.id, [v[0], v[1], v[2]], *f))
            }
            (ElementKind::Line, Role::Intersection) => lines.push((e.id, sorted2(v[0], v[1]))),
            (ElementKind::Point, Role::Intersection) => points.push(v[0]),
            (_, Role::Boundary) => {}
            _ => {
                return Err(MshError::UnmappedTag {
                    element: e.id,
                    tag: e.physical(),
                })
            }
        }
    }
    if tets.is_empty() {
        return Err(MshError::NoVolume);
    }
    let used: BTreeSet<usize> = tets.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    let bbox = Aabb::bounding(used.iter().map(|&i| nodes[i])).expect("non-empty");
    let tol = T::of(1e-8) * bbox.diagonal();
    let third = T::one() / T::of(3.0);
    let half = T::of(0.5);

    // Matrix cells.
    let mut matrix = Subdomain::empty(3, T::one());
    for (t, region) in &tets {
        let p = t.map(|i| nodes[i]);
        let center = Point3::mean(&p);
        matrix.cells.push(Cell {
            center,
            measure: tetrahedron_volume(p),
            tag: *region as u32,
        });
        matrix.cell_nodes.push(t.to_vec());
    }

    let mut facets: BTreeMap<[usize; 3], Vec<usize>> = BTreeMap::new();
    for (c, (t, _)) in tets.iter().enumerate() {
        for f in TET_FACETS {
            facets.entry(sorted3(f.map(|k| t[k]))).or_default().push(c);
        }
    }

    // Fracture cells.
    let mut fracture = Subdomain::empty(2, eps.fracture);
    let mut frac_of_facet: BTreeMap<[usize; 3], usize> = BTreeMap::new();
    let mut frac_normal: Vec<Point3<T>> = Vec::new();
    for &(id, tri, f) in &triangles {
        let key = sorted3(tri);
        if facets.get(&key).is_none_or(|cs| cs.len() != 2) || frac_of_facet.contains_key(&key) {
            return Err(MshError::NonConforming { element: id });
        }
        let p = tri.map(|i| nodes[i]);
        let area_vec = (p[1] - p[0]).cross(p[2] - p[0]) * half;
        let area = area_vec.norm();
        if !(area > T::zero()) {
            return Err(MshError::NonConforming { element: id });
        }
        frac_of_facet.insert(key, fracture.cells.len());
        frac_normal.push(area_vec * (T::one() / area));
        fracture.cells.push(Cell {
            center: Point3::mean(&p),
            measure: area,
            tag: f as u32,
        });
        fracture.cell_nodes.push(tri.to_vec());
    }

    // Matrix faces and fracture mortars.
    let mut mortars2 = Vec::new();
    for (key, cells) in &facets {
        let p = key.map(|i| nodes[i]);
        let area_vec = (p[1] - p[0]).cross(p[2] - p[0]) * half;
        let area = area_vec.norm();
        let unit = area_vec * (T::one() / area);
        let center = (p[0] + p[1] + p[2]) * third;
        let outward = |c: usize| {
            if (center - matrix.cells[c].center).dot(unit) >= T::zero() {
                unit
            } else {
                -unit
            }
        };
        let dist = |c: usize| matrix.cells[c].center.distance(center);
        match cells.as_slice() {
            [c] => matrix.faces.push(Face {
                owner: *c,
                neighbor: None,
                area,
                center,
                normal: outward(*c),
                owner_dist: dist(*c),
                neighbor_dist: T::zero(),
                patch: Some(assign_patch(patch_specs, center, tol)),
            }),
            [a, b] => match frac_of_facet.get(key) {
                Some(&fc) => {
                    for c in [*a, *b] {
                        mortars2.push(MortarCoupling {
                            low_dim: 2,
                            high_cell: c,
                            low_cell: fc,
                            area,
                            center,
                            normal: outward(c),
                            high_half_distance: dist(c),
                        });
                    }
                }
                None => matrix.faces.push(Face {
                    owner: *a,
                    neighbor: Some(*b),
                    area,
                    center,
                    normal: outward(*a),
                    owner_dist: dist(*a),
                    neighbor_dist: dist(*b),
                    patch: None,
                }),
            },
            _ => {
                return Err(MshError::Malformed {
                    line: 0,
                    message: format!("facet {key:?} is shared by {} tetrahedra", cells.len()),
                })
            }
        }
    }
    mortars2.sort_by_key(|m| (m.low_cell, m.high_cell));

    // Fracture edges.
    let mut edges: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (fc, nodes_fc) in fracture.cell_nodes.iter().enumerate() {
        for k in 0..3 {
            edges
                .entry(sorted2(nodes_fc[k], nodes_fc[(k + 1) % 3]))
                .or_default()
                .push(fc);
        }
    }
    let parallel = |a: Point3<T>, b: Point3<T>| a.cross(b).norm() <= T::of(1e-8);
    let mut line_keys: Vec<[usize; 2]> = Vec::new();
    let mut line_of_edge: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for &(id, key) in &lines {
        if !edges.contains_key(&key) {
            return Err(MshError::OrphanIntersection { element: id });
        }
        if let std::collections::btree_map::Entry::Vacant(e) = line_of_edge.entry(key) {
            e.insert(line_keys.len());
            line_keys.push(key);
        }
    }
    for (key, cells) in &edges {
        if line_of_edge.contains_key(key) {
            continue;
        }
        let crossing = cells.iter().any(|&a| {
            cells.iter().any(|&b| {
                fracture.cells[a].tag != fracture.cells[b].tag
                    && !parallel(frac_normal[a], frac_normal[b])
            })
        });
        if crossing {
            line_of_edge.insert(*key, line_keys.len());
            line_keys.push(*key);
        }
    }

    let mut line = Subdomain::empty(1, eps.line);
    for key in &line_keys {
        let (a, b) = (nodes[key[0]], nodes[key[1]]);
        line.cells.push(Cell {
            center: (a + b) * half,
            measure: a.distance(b),
            tag: 0,
        });
        line.cell_nodes.push(key.to_vec());
    }
    let mut mortars1 = Vec::new();
    for (key, cells) in &edges {
        let (a, b) = (nodes[key[0]], nodes[key[1]]);
        let center = (a + b) * half;
        let length = a.distance(b);
        let dir = (b - a) * (T::one() / length);
        let in_plane = |fc: usize| {
            let mut n = dir
                .cross(frac_normal[fc])
                .normalized()
                .expect("non-degenerate triangle");
            if (center - fracture.cells[fc].center).dot(n) < T::zero() {
                n = -n;
            }
            n
        };
        let dist = |fc: usize| fracture.cells[fc].center.distance(center);
        if let Some(&lc) = line_of_edge.get(key) {
            for &fc in cells {
                mortars1.push(MortarCoupling {
                    low_dim: 1,
                    high_cell: fc,
                    low_cell: lc,
                    area: length,
                    center,
                    normal: in_plane(fc),
                    high_half_distance: dist(fc),
                });
            }
            continue;
        }
        match cells.as_slice() {
            [o, nb] => fracture.faces.push(Face {
                owner: *o,
                neighbor: Some(*nb),
                area: length,
                center,
                normal: in_plane(*o),
                owner_dist: dist(*o),
                neighbor_dist: dist(*nb),
                patch: None,
            }),
            [o] if bbox.on_boundary(a, tol) && bbox.on_boundary(b, tol) => {
                fracture.faces.push(Face {
                    owner: *o,
                    neighbor: None,
                    area: length,
                    center,
                    normal: in_plane(*o),
                    owner_dist: dist(*o),
                    neighbor_dist: T::zero(),
                    patch: Some(assign_patch(patch_specs, center, tol)),
                })
            }
            // Immersed tip, or several coplanar triangles without a line.
            _ => {}
        }
    }
    mortars1.sort_by_key(|m| (m.low_cell, m.high_cell));

    // Line end points.
    let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (lc, key) in line_keys.iter().enumerate() {
        for &v in key {
            incident.entry(v).or_default().push(lc);
        }
    }
    let forced: BTreeSet<usize> = points.into_iter().collect();
    let mut point = Subdomain::empty(0, eps.point);
    let mut mortars0 = Vec::new();
    for (&v, lcs) in &incident {
        let p = nodes[v];
        let toward = |lc: usize| {
            (p - line.cells[lc].center)
                .normalized()
                .expect("distinct points")
        };
        let dist = |lc: usize| line.cells[lc].center.distance(p);
        let collinear = lcs.len() == 2 && parallel(toward(lcs[0]), toward(lcs[1]));
        if forced.contains(&v) || (lcs.len() >= 2 && !collinear) {
            let pc = point.cells.len();
            point.cells.push(Cell {
                center: p,
                measure: T::one(),
                tag: 0,
            });
            point.cell_nodes.push(vec![v]);
            for &lc in lcs {
                mortars0.push(MortarCoupling {
                    low_dim: 0,
                    high_cell: lc,
                    low_cell: pc,
                    area: T::one(),
                    center: p,
                    normal: toward(lc),
                    high_half_distance: dist(lc),
                });
            }
        } else if collinear {
            line.faces.push(Face {
                owner: lcs[0],
                neighbor: Some(lcs[1]),
                area: T::one(),
                center: p,
                normal: toward(lcs[0]),
                owner_dist: dist(lcs[0]),
                neighbor_dist: dist(lcs[1]),
                patch: None,
            });
        } else if bbox.on_boundary(p, tol) {
            line.faces.push(Face {
                owner: lcs[0],
                neighbor: None,
                area: T::one(),
                center: p,
                normal: toward(lcs[0]),
                owner_dist: dist(lcs[0]),
                neighbor_dist: T::zero(),
                patch: Some(assign_patch(patch_specs, p, tol)),
            });
        }
    }

    let grid = MixedDimGrid {
        bbox,
        nodes,
        subdomains: [point, line, fracture, matrix],
        mortars: [mortars0, mortars1, mortars2],
        patches: patches_from_specs(patch_specs),
        matrix_regions: tags.matrix.iter().map(|t| t.to_string()).collect(),
        fractures: fracture_names,
    };
    grid.validate()?;
    Ok(grid)
}
