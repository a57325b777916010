use dfm::geometry::Aabb;
use dfm::mdgrid::{BoundaryCondition, Epsilons, PatchSpec, DEFAULT_PATCH};
use dfm::mshio::{build_from_msh, parse_msh, write_msh, ElementKind, MshError, TagMap};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap()
}

fn eps() -> Epsilons<f64> {
    Epsilons {
        fracture: 1e-2,
        line: 1e-4,
        point: 1e-6,
    }
}

#[test]
fn two_tet_fixture_parses_with_tags() {
    let doc = parse_msh::<f64>(&fixture("two_tet_fracture.msh")).unwrap();
    assert_eq!(doc.count(ElementKind::Tetrahedron), 2);
    assert_eq!(doc.count(ElementKind::Triangle), 1);
    let tri = doc
        .elements
        .iter()
        .find(|e| e.kind == ElementKind::Triangle)
        .unwrap();
    assert_eq!(tri.tags, vec![10, 5]);
    assert_eq!(tri.nodes, vec![2, 3, 4]);
    assert_eq!(doc.physical_names.len(), 2);
}

#[test]
fn two_tet_fixture_builds_coupled_grid() {
    let doc = parse_msh::<f64>(&fixture("two_tet_fracture.msh")).unwrap();
    let tags = TagMap::from_json(&fixture("two_tet_fracture.json")).unwrap();
    let g = build_from_msh(&doc, &tags, eps(), &[]).unwrap();
    assert_eq!(g.stats().by_dim(), [0, 0, 1, 2]);
    assert_eq!(g.mortars[2].len(), 2);
    assert_eq!(g.subdomains[3].interior_faces().count(), 0);
    assert_eq!(g.subdomains[3].boundary_faces().count(), 6);
    let area = 3f64.sqrt() / 2.0;
    assert!((g.subdomains[2].cells[0].measure - area).abs() < 1e-14);
    let vol: f64 = g.subdomains[3].cells.iter().map(|c| c.measure).sum();
    assert!((vol - 0.5).abs() < 1e-14);
    // Triangle edges run along the box faces, so they are fracture boundary faces.
    assert_eq!(g.subdomains[2].faces.len(), 3);
    for m in &g.mortars[2] {
        let c = g.subdomains[3].cells[m.high_cell].center;
        assert!((c.distance(m.center) - m.high_half_distance).abs() < 1e-14);
        assert!((m.center - c).dot(m.normal) > 0.0);
    }
}

#[test]
fn triangle_node_order_does_not_matter() {
    let base = fixture("two_tet_fracture.msh");
    let tags = TagMap::from_json(&fixture("two_tet_fracture.json")).unwrap();
    let a = build_from_msh(&parse_msh::<f64>(&base).unwrap(), &tags, eps(), &[]).unwrap();
    for perm in ["4 2 3", "3 4 2", "4 3 2"] {
        let text = base.replace("3 2 2 10 5 2 3 4", &format!("3 2 2 10 5 {perm}"));
        let b = build_from_msh(&parse_msh::<f64>(&text).unwrap(), &tags, eps(), &[]).unwrap();
        assert_eq!(a.stats(), b.stats());
        assert_eq!(a.subdomains[3], b.subdomains[3]);
        assert_eq!(a.mortars, b.mortars);
        assert_eq!(
            a.subdomains[2].cells[0].center,
            b.subdomains[2].cells[0].center
        );
    }
}

#[test]
fn six_tet_cube() {
    let doc = parse_msh::<f64>(&fixture("cube_six_tets.msh")).unwrap();
    let tags = TagMap::from_json(&fixture("cube_six_tets.json")).unwrap();
    let patches = vec![PatchSpec {
        name: "bottom".to_string(),
        region: Aabb::from_f64([0.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
        condition: BoundaryCondition::Dirichlet(0.0),
    }];
    let g = build_from_msh(&doc, &tags, eps(), &patches).unwrap();
    assert_eq!(g.stats().by_dim(), [0, 0, 0, 6]);
    assert_eq!(g.subdomains[3].boundary_faces().count(), 12);
    assert_eq!(g.subdomains[3].interior_faces().count(), 6);
    let vol: f64 = g.subdomains[3].cells.iter().map(|c| c.measure).sum();
    assert!((vol - 1.0).abs() < 1e-10);
    assert_eq!(g.patch_faces(0).len(), 2);
    assert_eq!(g.patches[1].name, DEFAULT_PATCH);
    assert_eq!(g.patch_faces(1).len(), 10);
    let boundary: f64 = g.subdomains[3].boundary_faces().map(|(_, f)| f.area).sum();
    assert!((boundary - 6.0).abs() < 1e-12);
}

#[test]
fn malformed_fixtures() {
    assert!(matches!(
        parse_msh::<f64>(&fixture("bad_version.msh")),
        Err(MshError::UnsupportedVersion { line: 2, .. })
    ));
    assert!(matches!(
        parse_msh::<f64>(&fixture("truncated.msh")),
        Err(MshError::Truncated { line: 12, .. })
    ));
    let doc = parse_msh::<f64>(&fixture("nonconforming.msh")).unwrap();
    let tags = TagMap::from_json(&fixture("two_tet_fracture.json")).unwrap();
    assert_eq!(
        build_from_msh(&doc, &tags, eps(), &[]).unwrap_err(),
        MshError::NonConforming { element: 3 }
    );
}

#[test]
fn unmapped_tag_is_reported() {
    let doc = parse_msh::<f64>(&fixture("two_tet_fracture.msh")).unwrap();
    let tags = TagMap::from_json(r#"{"matrix": [1]}"#).unwrap();
    assert_eq!(
        build_from_msh(&doc, &tags, eps(), &[]).unwrap_err(),
        MshError::UnmappedTag {
            element: 3,
            tag: 10
        }
    );
}

#[test]
fn orphan_intersection() {
    let text = fixture("two_tet_fracture.msh")
        .replace("$Elements\n3\n", "$Elements\n4\n")
        .replace("$EndElements", "4 1 2 20 6 1 5\n$EndElements");
    let doc = parse_msh::<f64>(&text).unwrap();
    let tags =
        TagMap::from_json(r#"{"matrix": [1], "fractures": {"10": 0}, "intersections": {"20": 0}}"#)
            .unwrap();
    assert_eq!(
        build_from_msh(&doc, &tags, eps(), &[]).unwrap_err(),
        MshError::OrphanIntersection { element: 4 }
    );
}

#[test]
fn fixtures_round_trip_through_writer() {
    for name in ["two_tet_fracture.msh", "cube_six_tets.msh"] {
        let doc = parse_msh::<f64>(&fixture(name)).unwrap();
        let again = parse_msh::<f64>(&write_msh(&doc)).unwrap();
        assert_eq!(doc, again, "{name}");
    }
}

/// Two crossing fractures x = 0.5 and y = 0.5 through a tetrahedralized
/// 2x2x1 brick: the shared edges become intersection cells.
#[test]
fn intersections_are_synthesized() {
    let mut nodes = Vec::new();
    for k in 0..2 {
        for j in 0..3 {
            for i in 0..3 {
                nodes.push([i as f64 * 0.5, j as f64 * 0.5, k as f64]);
            }
        }
    }
    let id = |i: usize, j: usize, k: usize| 1 + i + 3 * j + 9 * k;
    let mut elements = Vec::new();
    for j in 0..2 {
        for i in 0..2 {
            let v = [
                id(i, j, 0),
                id(i + 1, j, 0),
                id(i, j + 1, 0),
                id(i + 1, j + 1, 0),
                id(i, j, 1),
                id(i + 1, j, 1),
                id(i, j + 1, 1),
                id(i + 1, j + 1, 1),
            ];
            for t in [
                [0, 1, 3, 7],
                [0, 1, 5, 7],
                [0, 2, 3, 7],
                [0, 2, 6, 7],
                [0, 4, 5, 7],
                [0, 4, 6, 7],
            ] {
                elements.push(format!(
                    "4 2 1 1 {} {} {} {}",
                    v[t[0]], v[t[1]], v[t[2]], v[t[3]]
                ));
            }
        }
    }
    // Fracture x = 0.5 split into its triangles, matching the cell diagonals.
    for j in 0..2 {
        let (a, b, c, d) = (id(1, j, 0), id(1, j + 1, 0), id(1, j, 1), id(1, j + 1, 1));
        elements.push(format!("2 2 10 10 {a} {b} {d}"));
        elements.push(format!("2 2 10 10 {a} {c} {d}"));
    }
    for i in 0..2 {
        let (a, b, c, d) = (id(i, 1, 0), id(i + 1, 1, 0), id(i, 1, 1), id(i + 1, 1, 1));
        elements.push(format!("2 2 11 11 {a} {b} {d}"));
        elements.push(format!("2 2 11 11 {a} {c} {d}"));
    }
    let mut text = String::from("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    text += &format!("{}\n", nodes.len());
    for (n, p) in nodes.iter().enumerate() {
        text += &format!("{} {} {} {}\n", n + 1, p[0], p[1], p[2]);
    }
    text += &format!("$EndNodes\n$Elements\n{}\n", elements.len());
    for (e, body) in elements.iter().enumerate() {
        text += &format!("{} {}\n", e + 1, body);
    }
    text += "$EndElements\n";
    let doc = parse_msh::<f64>(&text).unwrap();
    let tags =
        TagMap::from_json(r#"{"matrix": [1], "fractures": {"10": "x", "11": "y"}}"#).unwrap();
    let g = build_from_msh(&doc, &tags, eps(), &[]).unwrap();
    assert_eq!(g.num_cells(3), 24);
    assert_eq!(g.num_cells(2), 8);
    assert_eq!(g.num_cells(1), 1);
    assert_eq!(g.mortars[1].len(), 4);
    assert_eq!(g.mortars[2].len(), 16);
    let total: f64 = g.mortars[2].iter().map(|m| m.area).sum();
    assert!((total - 4.0).abs() < 1e-12);
    // The line ends on the top and bottom faces.
    assert_eq!(g.subdomains[1].boundary_faces().count(), 2);
}
