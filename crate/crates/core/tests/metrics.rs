use dfm::cases::{load_case, Field, LineProbe, RegionProbe, Selection, Weighting};
use dfm::geometry::Point3;
use dfm::mdgrid::Epsilons;
use dfm::metrics::{integrate_concentration, sample_over_line, select_cells, CellLocator};
use dfm::mshio::{build_from_msh, parse_msh, TagMap};
use dfm::transport::TransportState;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn read(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap()
}

/// Barycentric coordinates of `p` in a tetrahedron.
fn barycentric(t: [Point3<f64>; 4], p: Point3<f64>) -> [f64; 4] {
    let vol = |a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, d: Point3<f64>| {
        (b - a).dot((c - a).cross(d - a))
    };
    let v = vol(t[0], t[1], t[2], t[3]);
    [
        vol(p, t[1], t[2], t[3]) / v,
        vol(t[0], p, t[2], t[3]) / v,
        vol(t[0], t[1], p, t[3]) / v,
        vol(t[0], t[1], t[2], p) / v,
    ]
}

#[test]
fn tetrahedral_sampling_agrees_with_barycentric_test() {
    let g = build_from_msh(
        &parse_msh::<f64>(&read("cube_six_tets.msh")).unwrap(),
        &TagMap::from_json(&read("cube_six_tets.json")).unwrap(),
        Epsilons {
            fracture: 1e-2,
            line: 1e-4,
            point: 1e-6,
        },
        &[],
    )
    .unwrap();
    let field: Vec<f64> = (0..6).map(|c| c as f64).collect();
    let probe = LineProbe {
        name: "l".into(),
        from: [0.05, 0.9, 0.2],
        to: [0.95, 0.15, 0.7],
        dim: 3,
        field: Field::Head,
        samples: 1000,
    };
    let s = sample_over_line(&g, &field, &probe).unwrap();
    assert_eq!(s.missed, 0);
    let a = Point3::from_f64(probe.from);
    let b = Point3::from_f64(probe.to);
    for (t, v) in s.curve.x.iter().zip(&s.curve.y) {
        let p = a.lerp(b, *t);
        let cell = *v as usize;
        let nodes: [Point3<f64>; 4] =
            std::array::from_fn(|k| g.nodes[g.subdomains[3].cell_nodes[cell][k]]);
        assert!(
            barycentric(nodes, p).iter().all(|&l| l >= -1e-10),
            "sample {t} assigned to cell {cell}"
        );
    }
    let locator = CellLocator::new(&g, 3);
    assert_eq!(locator.locate(Point3::new(2.0, 2.0, 2.0)), None);
}

#[test]
fn saturated_case1_fracture_integral() {
    let case = load_case::<f64>("1", 0, None).unwrap();
    let g = &case.grid;
    let c_in = 1e-2;
    let state = TransportState {
        values: vec![c_in; g.num_dofs()],
        ..TransportState::zeros(g)
    };
    let probe = RegionProbe {
        name: "fracture".into(),
        select: Selection::Subdomain(2),
        mode: Weighting::Weighted,
    };
    let cells = select_cells(g, &probe).unwrap();
    let area: f64 = g.subdomains[2].cells.iter().map(|c| c.measure).sum();
    let expected = area * 1e-2 * 0.4 * c_in;
    let got = integrate_concentration(g, &case.transport, &state, &cells, Weighting::Weighted);
    assert!((got - expected).abs() <= 1e-12 * expected);
    // The fracture spans the cube diagonally along x: 100 m by 100·sqrt(1 + 0.6²) m.
    assert!((area - 100.0 * 100.0 * (1.0f64 + 0.36).sqrt()).abs() < 1e-8 * area);
}

#[test]
fn case1_fracture_line_stays_in_the_fracture() {
    let case = load_case::<f64>("1", 1, None).unwrap();
    let probe = case.probes.lines.iter().find(|p| p.dim == 2).unwrap();
    let ids: Vec<f64> = (0..case.grid.num_cells(2)).map(|c| c as f64).collect();
    let s = sample_over_line(&case.grid, &ids, probe).unwrap();
    assert_eq!(s.missed, 0);
    let distinct: std::collections::BTreeSet<u64> = s.curve.y.iter().map(|v| *v as u64).collect();
    assert!(
        distinct.len() >= 22,
        "line crosses {} fracture cells",
        distinct.len()
    );
}
