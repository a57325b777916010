//! Self-verification suite: analytic and brute-force oracles that exercise
//! the grid builders, the flow and transport discretizations and the solvers
//! end to end.

use std::collections::{BTreeMap, HashMap};

use crate::cases::load_case;
use crate::flow::{assemble_flow, check_conservation, solve_flow, FlowParams, FlowSolution};
use crate::geometry::Aabb;
use crate::mdgrid::{
    build_cartesian_grid, BoundaryCondition, CartesianSpec, Epsilons, FractureRect, GridError,
    MixedDimGrid, PatchSpec,
};
use crate::sparsela::solve_dense_lu;
use crate::transport::{run_transport, TransportParams, TransportState};

/// Deliberate corruption applied before the checks run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negates every fracture normal conductivity.
    KappaSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(Fault) -> Result<String, String>;

const CHECKS: [(&str, CheckFn); 7] = [
    ("series_resistance_conductive", |f| {
        series_resistance(2e6, f)
    }),
    ("series_resistance_blocking", |f| series_resistance(2.0, f)),
    ("dense_flow", dense_flow),
    ("dense_transport", dense_transport),
    ("conservation", conservation),
    ("bounds", bounds),
    ("symmetry", symmetry),
];

pub fn check_names() -> impl Iterator<Item = &'static str> {
    CHECKS.iter().map(|c| c.0)
}

/// Runs every check whose name contains `filter` (all when `None`).
pub fn run_checks(filter: Option<&str>, fault: Fault) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .filter(|(name, _)| filter.is_none_or(|f| name.contains(f)))
        .map(|(name, check)| {
            let (passed, detail) = match check(fault) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

fn apply(fault: Fault, p: &mut FlowParams<f64>) {
    if fault == Fault::KappaSign {
        for k in &mut p.fracture_normal {
            *k = -*k;
        }
    }
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Unit cube split by the fracture x = 0.5 into `nx` matrix layers, head 1
/// at x = 0 and 0 at x = 1.
pub fn series_grid(nx: usize) -> Result<MixedDimGrid<f64>, GridError> {
    build_cartesian_grid(&CartesianSpec {
        domain: Aabb::from_f64([0.0; 3], [1.0; 3]),
        n: [nx, 1, 1],
        fractures: vec![FractureRect {
            name: "f".into(),
            axis: 0,
            coord: 0.5,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        }],
        regions: vec![],
        default_region: "matrix".into(),
        eps: Epsilons {
            fracture: 1e-2,
            line: 1e-4,
            point: 1e-6,
        },
        patches: vec![
            PatchSpec {
                name: "left".into(),
                region: Aabb::from_f64([0.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
                condition: BoundaryCondition::Dirichlet(1.0),
            },
            PatchSpec {
                name: "right".into(),
                region: Aabb::from_f64([1.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
                condition: BoundaryCondition::Dirichlet(0.0),
            },
        ],
    })
}

/// Flux per unit area and fracture head jump of the series configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    pub flux: f64,
    pub jump: f64,
}

/// Solves the series configuration with matrix conductivity 1 and the given
/// fracture normal conductivity. The jump is the difference of the matrix
/// head traces on both fracture faces.
pub fn series_resistance_solve(
    nx: usize,
    kappa: f64,
    fault: Fault,
) -> Result<SeriesResult, String> {
    let g = series_grid(nx).map_err(|e| e.to_string())?;
    let mut p = FlowParams::uniform(&g, 1.0, 1.0, kappa, 1.0, 1.0, 1.0);
    apply(fault, &mut p);
    let sol = solve_flow(&g, &p, 1e-13).map_err(|e| e.to_string())?;
    let flux = sol.patch_flux[g.patch_index("right").expect("right patch")];
    let mut trace = [0.0; 2];
    for m in &g.mortars[2] {
        // Flow runs in +x: the trace lies below the cell head upstream of
        // the fracture and above it downstream.
        let (side, sign) = if m.normal.x > 0.0 {
            (0, -1.0)
        } else {
            (1, 1.0)
        };
        trace[side] = sol.heads[3][m.high_cell] + sign * flux * m.high_half_distance;
    }
    Ok(SeriesResult {
        flux,
        jump: trace[0] - trace[1],
    })
}

fn series_resistance(kappa: f64, fault: Fault) -> Result<String, String> {
    let expect_flux = 1.0 / (1.0 + 2.0 / kappa);
    let tol = if kappa > 1e3 { 1e-8 } else { 1e-10 };
    let mut worst = 0.0f64;
    for nx in [2, 4, 8] {
        let r = series_resistance_solve(nx, kappa, fault)?;
        let expect_jump = r.flux * 2.0 / kappa;
        let ef = rel(r.flux, expect_flux);
        let ej = rel(r.jump, expect_jump);
        ensure(
            ef <= tol && ej <= tol,
            format!(
                "nx={nx}: flux {} (want {expect_flux}), jump {} (want {expect_jump})",
                r.flux, r.jump
            ),
        )?;
        worst = worst.max(ef).max(ej);
    }
    Ok(format!("kappa={kappa}: max relative error {worst:.1e}"))
}

/// Parameters of a small synthetic instance on a Cartesian box with up to
/// three mid-plane fractures.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: [usize; 3],
    /// Fracture on the plane x[axis] = 0.5 for each flagged axis.
    pub fractures: [bool; 3],
    pub matrix_k: f64,
    pub fracture_k: f64,
    pub kappa: f64,
    pub porosity: [f64; 4],
    /// Inlet head at x = 0; `None` switches the inlet to unit Neumann inflow.
    pub inlet_head: Option<f64>,
    pub dt: f64,
}

impl SyntheticSpec {
    pub fn grid(&self) -> Result<MixedDimGrid<f64>, GridError> {
        let fractures = (0..3)
            .filter(|&a| self.fractures[a])
            .map(|axis| FractureRect {
                name: format!("f{axis}"),
                axis,
                coord: 0.5,
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
            })
            .collect();
        build_cartesian_grid(&CartesianSpec {
            domain: Aabb::from_f64([0.0; 3], [1.0; 3]),
            n: self.n,
            fractures,
            regions: vec![],
            default_region: "matrix".into(),
            eps: Epsilons {
                fracture: 1e-2,
                line: 1e-4,
                point: 1e-6,
            },
            patches: vec![
                PatchSpec {
                    name: "inlet".into(),
                    region: Aabb::from_f64([0.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
                    condition: self.inlet_head.map_or(
                        BoundaryCondition::Neumann(-1.0),
                        BoundaryCondition::Dirichlet,
                    ),
                },
                PatchSpec {
                    name: "outlet".into(),
                    region: Aabb::from_f64([1.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(0.0),
                },
            ],
        })
    }

    pub fn flow(&self, g: &MixedDimGrid<f64>) -> FlowParams<f64> {
        FlowParams::uniform(
            g,
            self.matrix_k,
            self.fracture_k,
            self.kappa,
            self.fracture_k * 1e-2,
            self.kappa * 1e2,
            self.kappa,
        )
    }

    pub fn transport(&self, g: &MixedDimGrid<f64>, steps: usize) -> TransportParams<f64> {
        TransportParams {
            matrix_porosity: vec![self.porosity[3]; g.matrix_regions.len()],
            fracture_porosity: vec![self.porosity[2]; g.fractures.len()],
            line_porosity: self.porosity[1],
            point_porosity: self.porosity[0],
            inflow_concentration: BTreeMap::from([("inlet".to_string(), 1.0)]),
            dt: self.dt,
            steps,
        }
    }
}

/// Fixed instances used by the self-verification command.
pub fn reference_instances() -> Vec<SyntheticSpec> {
    vec![
        SyntheticSpec {
            n: [2, 2, 2],
            fractures: [true, true, true],
            matrix_k: 1.0,
            fracture_k: 10.0,
            kappa: 5.0,
            porosity: [0.5, 0.5, 0.4, 0.2],
            inlet_head: Some(2.0),
            dt: 0.01,
        },
        SyntheticSpec {
            n: [4, 3, 2],
            fractures: [true, false, true],
            matrix_k: 0.3,
            fracture_k: 1e-3,
            kappa: 0.2,
            porosity: [0.3, 0.3, 0.9, 0.1],
            inlet_head: None,
            dt: 0.05,
        },
        SyntheticSpec {
            n: [3, 2, 2],
            fractures: [false, true, false],
            matrix_k: 2.0,
            fracture_k: 1e2,
            kappa: 1e3,
            porosity: [0.5, 0.5, 0.5, 0.25],
            inlet_head: Some(1.0),
            dt: 0.02,
        },
    ]
}

/// Brute-force implicit upwind recurrence built from a flux field on a dense
/// matrix. Returns the concentration after each step.
pub fn dense_upwind_reference(
    g: &MixedDimGrid<f64>,
    flow: &FlowSolution<f64>,
    params: &TransportParams<f64>,
) -> Result<Vec<Vec<f64>>, String> {
    let n = g.num_dofs();
    let off = g.dof_offsets();
    // Directed connections (from, to, rate) with rate > 0; `None` is the
    // exterior.
    let mut links: Vec<(Option<usize>, Option<usize>, f64, f64)> = Vec::new();
    for sd in &g.subdomains {
        for (f, &q) in sd.faces.iter().zip(&flow.face_flux[sd.dim]) {
            let a = Some(off[sd.dim] + f.owner);
            let (b, cin) = match (f.neighbor, f.patch) {
                (Some(nb), _) => (Some(off[sd.dim] + nb), 0.0),
                (None, Some(p)) => (
                    None,
                    params
                        .inflow_concentration
                        .get(&g.patches[p].name)
                        .copied()
                        .unwrap_or(0.0),
                ),
                (None, None) => return Err("boundary face without patch".into()),
            };
            if q > 0.0 {
                links.push((a, b, q, cin));
            } else if q < 0.0 {
                links.push((b, a, -q, cin));
            }
        }
    }
    for (low, ms) in g.mortars.iter().enumerate() {
        for (m, &q) in ms.iter().zip(&flow.mortar_flux[low]) {
            let (h, l) = (off[low + 1] + m.high_cell, off[low] + m.low_cell);
            if q > 0.0 {
                links.push((Some(h), Some(l), q, 0.0));
            } else if q < 0.0 {
                links.push((Some(l), Some(h), -q, 0.0));
            }
        }
    }
    let mut pore = vec![0.0; n];
    for sd in &g.subdomains {
        for (c, cell) in sd.cells.iter().enumerate() {
            pore[off[sd.dim] + c] = sd.epsilon * params.porosity(g, sd.dim, c) * cell.measure;
        }
    }
    let mut a = vec![vec![0.0; n]; n];
    let mut src = vec![0.0; n];
    for i in 0..n {
        a[i][i] = pore[i] / params.dt;
    }
    for &(from, to, q, cin) in &links {
        match (from, to) {
            (Some(i), Some(j)) => {
                a[i][i] += q;
                a[j][i] -= q;
            }
            (Some(i), None) => a[i][i] += q,
            (None, Some(j)) => src[j] += q * cin,
            (None, None) => {}
        }
    }
    let mut c = vec![0.0; n];
    let mut out = Vec::with_capacity(params.steps);
    for _ in 0..params.steps {
        let rhs: Vec<f64> = (0..n)
            .map(|i| pore[i] / params.dt * c[i] + src[i])
            .collect();
        c = solve_dense_lu(&a, &rhs).map_err(|e| e.to_string())?;
        out.push(c.clone());
    }
    Ok(out)
}

fn dense_flow(fault: Fault) -> Result<String, String> {
    let mut worst = 0.0f64;
    for spec in reference_instances() {
        let g = spec.grid().map_err(|e| e.to_string())?;
        let mut p = spec.flow(&g);
        apply(fault, &mut p);
        let sys = assemble_flow(&g, &p).map_err(|e| e.to_string())?;
        let dense = solve_dense_lu(&sys.matrix.to_dense(), &sys.rhs).map_err(|e| e.to_string())?;
        let sol = solve_flow(&g, &p, 1e-12).map_err(|e| e.to_string())?;
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for d in 0..4 {
            for (c, h) in sol.heads[d].iter().enumerate() {
                worst = worst.max((h - dense[sys.dof(d, c)]).abs() / scale);
            }
        }
    }
    ensure(
        worst <= 1e-9,
        format!("iterative and dense heads differ by {worst:.1e}"),
    )?;
    Ok(format!("max relative head difference {worst:.1e}"))
}

fn dense_transport(fault: Fault) -> Result<String, String> {
    let mut worst = 0.0f64;
    for spec in reference_instances() {
        let g = spec.grid().map_err(|e| e.to_string())?;
        let mut p = spec.flow(&g);
        apply(fault, &mut p);
        let sol = solve_flow(&g, &p, 1e-12).map_err(|e| e.to_string())?;
        let tp = spec.transport(&g, 100);
        let reference = dense_upwind_reference(&g, &sol, &tp)?;
        worst = worst.max(compare_transport(&g, &sol, &tp, &reference)?);
    }
    ensure(
        worst <= 1e-12,
        format!("transport differs from the dense recurrence by {worst:.1e}"),
    )?;
    Ok(format!("max difference over 100 steps {worst:.1e}"))
}

/// Largest absolute difference between the transport module and a dense
/// reference over all steps.
pub fn compare_transport(
    g: &MixedDimGrid<f64>,
    sol: &FlowSolution<f64>,
    tp: &TransportParams<f64>,
    reference: &[Vec<f64>],
) -> Result<f64, String> {
    let sys = crate::transport::assemble_transport(g, sol, tp, 1e-14).map_err(|e| e.to_string())?;
    let mut state = TransportState::zeros(g);
    let mut worst = 0.0f64;
    for r in reference {
        state = sys.step(&state).map_err(|e| e.to_string())?;
        for (a, b) in state.values.iter().zip(r) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn conservation(fault: Fault) -> Result<String, String> {
    let case = load_case::<f64>("2.1", 0, None).map_err(|e| e.to_string())?;
    let mut p = case.flow.clone();
    apply(fault, &mut p);
    let sol = solve_flow(&case.grid, &p, 1e-10).map_err(|e| e.to_string())?;
    let report = check_conservation(&case.grid, &p, &sol);
    let worst = report.max_relative().into_iter().fold(0.0f64, f64::max);
    ensure(
        worst <= 1e-9,
        format!("per-cell residual {worst:.1e} of the largest incident flux"),
    )?;
    let (i, o) = (sol.boundary_inflow(), sol.boundary_outflow());
    ensure(
        (i - 0.1875).abs() <= 1e-9 && (o - 0.1875).abs() <= 1e-9,
        format!("inflow {i}, outflow {o}, expected 0.1875"),
    )?;
    Ok(format!(
        "max per-cell residual {worst:.1e}, inflow {i}, outflow {o}"
    ))
}

/// Heads bounded below by the smallest Dirichlet value and above by the
/// largest head of a cell next to the boundary; concentrations within the
/// prescribed range.
fn bounds(fault: Fault) -> Result<String, String> {
    let case = load_case::<f64>("2.1", 0, None).map_err(|e| e.to_string())?;
    let g = &case.grid;
    let mut p = case.flow.clone();
    apply(fault, &mut p);
    let sol = solve_flow(g, &p, 1e-10).map_err(|e| e.to_string())?;
    let dirichlet_min = g
        .patches
        .iter()
        .filter_map(|p| match p.condition {
            BoundaryCondition::Dirichlet(h) => Some(h),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let all = sol.heads.iter().flatten().copied();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
        (l.min(v), h.max(v))
    });
    let boundary_hi = g.subdomains[3]
        .boundary_faces()
        .filter(|(_, f)| {
            f.patch
                .is_some_and(|p| g.patches[p].condition != BoundaryCondition::NoFlow)
        })
        .map(|(_, f)| sol.heads[3][f.owner])
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * hi.abs().max(1.0);
    ensure(
        lo >= dirichlet_min - slack,
        format!("head {lo} below the Dirichlet minimum {dirichlet_min}"),
    )?;
    ensure(
        hi <= boundary_hi + slack,
        format!("interior head {hi} above the boundary maximum {boundary_hi}"),
    )?;
    let run = run_transport(g, &sol, &case.transport, &[], 1e-12).map_err(|e| e.to_string())?;
    let cmax = case.transport.max_inflow_concentration();
    let cslack = 1e-9 * cmax.max(1.0);
    ensure(
        run.min_concentration >= -cslack && run.max_concentration <= cmax + cslack,
        format!(
            "concentration range [{}, {}] outside [0, {cmax}]",
            run.min_concentration, run.max_concentration
        ),
    )?;
    Ok(format!(
        "heads in [{lo:.6}, {hi:.6}], concentration in [{:.3e}, {:.12}] over {} steps",
        run.min_concentration, run.max_concentration, case.transport.steps
    ))
}

/// Largest head difference between each matrix cell and its image under the
/// cyclic permutation (x, y, z) -> (y, z, x). Fails if a cell has no image.
pub fn cyclic_asymmetry(g: &MixedDimGrid<f64>, heads: &[f64]) -> Result<f64, String> {
    let key = |p: [f64; 3]| p.map(|v| (v * 1e9).round() as i64);
    let index: HashMap<[i64; 3], usize> = g.subdomains[3]
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| (key(c.center.to_f64()), i))
        .collect();
    let mut worst = 0.0f64;
    for (i, c) in g.subdomains[3].cells.iter().enumerate() {
        let [x, y, z] = c.center.to_f64();
        let j = *index
            .get(&key([y, z, x]))
            .ok_or_else(|| format!("cell {i} has no cyclic image"))?;
        worst = worst.max((heads[i] - heads[j]).abs());
    }
    Ok(worst)
}

/// Case 2 geometry with a homogeneous matrix: the configuration is invariant
/// under cyclic axis permutation, so the heads must be too.
fn symmetry(fault: Fault) -> Result<String, String> {
    let case = load_case::<f64>("2.1", 0, None).map_err(|e| e.to_string())?;
    let mut p = case.flow.clone();
    let k = p.matrix_conductivity[0];
    p.matrix_conductivity.iter_mut().for_each(|v| *v = k);
    apply(fault, &mut p);
    let sol = solve_flow(&case.grid, &p, 1e-10).map_err(|e| e.to_string())?;
    let worst = cyclic_asymmetry(&case.grid, &sol.heads[3])?;
    ensure(
        worst <= 1e-9,
        format!("head changes by {worst:.1e} under cyclic permutation"),
    )?;
    Ok(format!(
        "max head change under cyclic permutation {worst:.1e}"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_checks(None, Fault::None) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn kappa_fault_breaks_series_resistance() {
        let r = run_checks(Some("series_resistance"), Fault::KappaSign);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|c| !c.passed));
    }

    #[test]
    fn filter_selects_subset() {
        let r = run_checks(Some("conservation"), Fault::None);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].name, "conservation");
        assert!(run_checks(Some("nothing"), Fault::None).is_empty());
    }

    #[test]
    fn reference_instances_are_small() {
        for s in reference_instances() {
            assert!(s.grid().unwrap().num_dofs() <= 50);
        }
    }
}
