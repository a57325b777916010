//! Implicit Euler, donor-cell upwind transport of a passive tracer through a
//! frozen mixed-dimensional flux field.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::flow::FlowSolution;
use crate::mdgrid::MixedDimGrid;
use crate::scalar::Scalar;
use crate::sparsela::{
    solve_bicgstab_from, CsrMatrix, OrderedSubstitution, SolveOptions, SparseError, TripletBuffer,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("invalid transport parameters: {0}")]
    InvalidParameter(String),
    #[error("flux field does not match the grid: {0}")]
    MissingFlux(String),
    #[error(transparent)]
    Solver(#[from] SparseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransportParams<T> {
    /// phi_3 per matrix region.
    pub matrix_porosity: Vec<T>,
    /// phi_2 per fracture.
    pub fracture_porosity: Vec<T>,
    pub line_porosity: T,
    pub point_porosity: T,
    /// Concentration carried by inflow through each named patch; inflow
    /// through other patches carries none.
    pub inflow_concentration: BTreeMap<String, T>,
    pub dt: T,
    pub steps: usize,
}

impl<T: Scalar> TransportParams<T> {
    pub fn validate(&self, grid: &MixedDimGrid<T>) -> Result<(), TransportError> {
        let bad = |what: String| Err(TransportError::InvalidParameter(what));
        if self.matrix_porosity.len() != grid.matrix_regions.len() {
            return bad("one porosity per matrix region required".into());
        }
        if self.fracture_porosity.len() != grid.fractures.len() {
            return bad("one porosity per fracture required".into());
        }
        let scalars = [self.line_porosity, self.point_porosity];
        let mut all = self
            .matrix_porosity
            .iter()
            .chain(&self.fracture_porosity)
            .chain(&scalars);
        if all.any(|&p| !(p > T::zero() && p <= T::one())) {
            return bad("porosities must lie in (0, 1]".into());
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return bad("time step must be positive".into());
        }
        for (name, c) in &self.inflow_concentration {
            if grid.patch_index(name).is_none() {
                return bad(format!("unknown inflow patch '{name}'"));
            }
            if !c.is_finite() || *c < T::zero() {
                return bad(format!(
                    "inflow concentration of '{name}' must be nonnegative"
                ));
            }
        }
        Ok(())
    }

    pub fn porosity(&self, grid: &MixedDimGrid<T>, dim: usize, cell: usize) -> T {
        match dim {
            3 => self.matrix_porosity[grid.subdomains[3].cells[cell].tag as usize],
            2 => self.fracture_porosity[grid.subdomains[2].cells[cell].tag as usize],
            1 => self.line_porosity,
            _ => self.point_porosity,
        }
    }

    /// Largest prescribed inflow concentration (zero if none).
    pub fn max_inflow_concentration(&self) -> T {
        self.inflow_concentration
            .values()
            .fold(T::zero(), |a, &c| a.max(c))
    }
}

enum Solver<T> {
    Ordered(OrderedSubstitution<T>),
    Krylov(SolveOptions<T>),
}

/// Transport system `(Acc + U) c^{n+1} = Acc c^n + b`, assembled once.
pub struct TransportSystem<T> {
    pub matrix: CsrMatrix<T>,
    /// Pore volume over time step per dof.
    pub accumulation: Vec<T>,
    /// Inflow concentration flux per dof.
    pub inflow: Vec<T>,
    /// Boundary outflow rate per dof.
    pub outflow: Vec<T>,
    pub offsets: [usize; 4],
    pub dt: T,
    solver: Solver<T>,
}

impl<T: Scalar> TransportSystem<T> {
    /// Whether the system is solved by a single ordered substitution sweep.
    pub fn is_direct(&self) -> bool {
        matches!(self.solver, Solver::Ordered(_))
    }

    /// Tracer mass of a state.
    pub fn mass(&self, c: &[T]) -> T {
        self.accumulation
            .iter()
            .zip(c)
            .fold(T::zero(), |a, (&v, &ci)| a + v * self.dt * ci)
    }

    /// Relative mismatch of the discrete budget over one step.
    pub fn budget_error(&self, old: &[T], new: &[T]) -> T {
        let change = (self.mass(new) - self.mass(old)) / self.dt;
        let inflow: T = self.inflow.iter().copied().sum();
        let outflow: T = self.outflow.iter().zip(new).map(|(&q, &c)| q * c).sum();
        let scale = inflow.abs().max(outflow.abs()).max(change.abs());
        if scale == T::zero() {
            return T::zero();
        }
        (change - inflow + outflow).abs() / scale
    }

    pub fn step(&self, state: &TransportState<T>) -> Result<TransportState<T>, TransportError> {
        let rhs: Vec<T> = self
            .accumulation
            .iter()
            .zip(&state.values)
            .zip(&self.inflow)
            .map(|((&a, &c), &b)| a * c + b)
            .collect();
        let values = match &self.solver {
            Solver::Ordered(s) => s.solve(&rhs),
            Solver::Krylov(opts) => {
                solve_bicgstab_from(&self.matrix, &rhs, state.values.clone(), opts)?.0
            }
        };
        Ok(TransportState {
            values,
            offsets: self.offsets,
            step: state.step + 1,
            time: self.dt * T::from_count(state.step + 1),
        })
    }
}

pub fn assemble_transport<T: Scalar>(
    grid: &MixedDimGrid<T>,
    flow: &FlowSolution<T>,
    params: &TransportParams<T>,
    tol: T,
) -> Result<TransportSystem<T>, TransportError> {
    params.validate(grid)?;
    for d in 0..4 {
        if flow.face_flux[d].len() != grid.subdomains[d].faces.len()
            || flow.heads[d].len() != grid.num_cells(d)
        {
            return Err(TransportError::MissingFlux(format!("dimension {d}")));
        }
    }
    for d in 0..3 {
        if flow.mortar_flux[d].len() != grid.mortars[d].len() {
            return Err(TransportError::MissingFlux(format!(
                "mortars onto dimension {d}"
            )));
        }
    }
    let n = grid.num_dofs();
    let off = grid.dof_offsets();
    let mut buf = TripletBuffer::with_capacity(n, 6 * n);
    let mut accumulation = vec![T::zero(); n];
    let mut inflow = vec![T::zero(); n];
    let mut outflow = vec![T::zero(); n];
    let cbar: Vec<T> = grid
        .patches
        .iter()
        .map(|p| {
            params
                .inflow_concentration
                .get(&p.name)
                .copied()
                .unwrap_or(T::zero())
        })
        .collect();
    // Donor-cell entry for a flux q from cell a to cell b.
    let donor = |buf: &mut TripletBuffer<T>, a: usize, b: usize, q: T| {
        if q > T::zero() {
            buf.push(a, a, q);
            buf.push(b, a, -q);
        } else if q < T::zero() {
            buf.push(b, b, -q);
            buf.push(a, b, q);
        }
    };
    for sd in &grid.subdomains {
        let d = sd.dim;
        for (c, cell) in sd.cells.iter().enumerate() {
            let i = off[d] + c;
            accumulation[i] = sd.epsilon * params.porosity(grid, d, c) * cell.measure / params.dt;
            buf.push(i, i, accumulation[i]);
        }
        for (f, &q) in sd.faces.iter().zip(&flow.face_flux[d]) {
            let o = off[d] + f.owner;
            match f.neighbor {
                Some(nb) => donor(&mut buf, o, off[d] + nb, q),
                None => {
                    if q > T::zero() {
                        buf.push(o, o, q);
                        outflow[o] += q;
                    } else if q < T::zero() {
                        inflow[o] -= q * cbar[f.patch.expect("boundary face has a patch")];
                    }
                }
            }
        }
    }
    for (low, ms) in grid.mortars.iter().enumerate() {
        for (m, &q) in ms.iter().zip(&flow.mortar_flux[low]) {
            donor(
                &mut buf,
                off[low + 1] + m.high_cell,
                off[low] + m.low_cell,
                q,
            );
        }
    }
    let matrix = buf.to_csr()?;
    let solver = match OrderedSubstitution::new(&matrix)? {
        Some(s) => Solver::Ordered(s),
        None => Solver::Krylov(SolveOptions::with_tol(tol)),
    };
    Ok(TransportSystem {
        matrix,
        accumulation,
        inflow,
        outflow,
        offsets: off,
        dt: params.dt,
        solver,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportState<T> {
    /// Concentration per dof (dimension 3 first).
    pub values: Vec<T>,
    pub offsets: [usize; 4],
    pub step: usize,
    pub time: T,
}

impl<T: Scalar> TransportState<T> {
    pub fn zeros(grid: &MixedDimGrid<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.num_dofs()],
            offsets: grid.dof_offsets(),
            step: 0,
            time: T::zero(),
        }
    }

    pub fn cells(&self, dim: usize) -> &[T] {
        let start = self.offsets[dim];
        let end = if dim == 0 {
            self.values.len()
        } else {
            self.offsets[dim - 1]
        };
        &self.values[start..end]
    }
}

pub type Eval<'a, T> = Box<dyn Fn(&TransportState<T>) -> T + 'a>;

/// Scalar evaluated after every step.
pub struct Observer<'a, T> {
    pub name: String,
    pub eval: Eval<'a, T>,
}

impl<'a, T> Observer<'a, T> {
    pub fn new(name: impl Into<String>, eval: impl Fn(&TransportState<T>) -> T + 'a) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(eval),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    pub name: String,
    pub times: Vec<T>,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportRun<T> {
    /// One series per observer, each including the initial state.
    pub series: Vec<Series<T>>,
    pub final_state: TransportState<T>,
    /// Largest per-step relative budget mismatch.
    pub max_budget_error: T,
    /// Extremes of the concentration over all steps.
    pub min_concentration: T,
    pub max_concentration: T,
    pub direct_solve: bool,
}

/// Runs `params.steps` steps from a zero initial state.
pub fn run_transport<T: Scalar>(
    grid: &MixedDimGrid<T>,
    flow: &FlowSolution<T>,
    params: &TransportParams<T>,
    observers: &[Observer<'_, T>],
    tol: T,
) -> Result<TransportRun<T>, TransportError> {
    let system = assemble_transport(grid, flow, params, tol)?;
    let mut state = TransportState::zeros(grid);
    let mut series: Vec<Series<T>> = observers
        .iter()
        .map(|o| Series {
            name: o.name.clone(),
            times: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    let record = |series: &mut Vec<Series<T>>, state: &TransportState<T>| {
        for (s, o) in series.iter_mut().zip(observers) {
            s.times.push(state.time);
            s.values.push((o.eval)(state));
        }
    };
    record(&mut series, &state);
    let mut max_budget_error = T::zero();
    let mut lo = T::zero();
    let mut hi = T::zero();
    for _ in 0..params.steps {
        let next = system.step(&state)?;
        max_budget_error = max_budget_error.max(system.budget_error(&state.values, &next.values));
        for &c in &next.values {
            lo = lo.min(c);
            hi = hi.max(c);
        }
        state = next;
        record(&mut series, &state);
    }
    Ok(TransportRun {
        series,
        final_state: state,
        max_budget_error,
        min_concentration: lo,
        max_concentration: hi,
        direct_solve: system.is_direct(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{solve_flow, FlowParams};
    use crate::geometry::Aabb;
    use crate::mdgrid::{
        build_cartesian_grid, BoundaryCondition, CartesianSpec, Epsilons, PatchSpec,
    };

    fn chain(n: usize) -> (MixedDimGrid<f64>, FlowSolution<f64>) {
        let g = build_cartesian_grid(&CartesianSpec {
            domain: Aabb::from_f64([0.0; 3], [n as f64, 1.0, 1.0]),
            n: [n, 1, 1],
            fractures: vec![],
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
                    region: Aabb::from_f64([0.0; 3], [0.0, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(n as f64),
                },
                PatchSpec {
                    name: "outlet".into(),
                    region: Aabb::from_f64([n as f64, 0.0, 0.0], [n as f64, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(0.0),
                },
            ],
        })
        .unwrap();
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let flow = solve_flow(&g, &p, 1e-14).unwrap();
        (g, flow)
    }

    fn params(dt: f64, steps: usize, phi: f64) -> TransportParams<f64> {
        TransportParams {
            matrix_porosity: vec![phi],
            fracture_porosity: vec![],
            line_porosity: 1.0,
            point_porosity: 1.0,
            inflow_concentration: [("inlet".to_string(), 1.0)].into_iter().collect(),
            dt,
            steps,
        }
    }

    #[test]
    fn no_flow_is_identity() {
        let (g, mut flow) = chain(1);
        for q in flow.face_flux.iter_mut().flatten() {
            *q = 0.0;
        }
        let sys = assemble_transport(&g, &flow, &params(3.0, 1, 0.5), 1e-12).unwrap();
        let s0 = TransportState {
            values: vec![0.3],
            offsets: g.dof_offsets(),
            step: 0,
            time: 0.0,
        };
        assert_eq!(sys.step(&s0).unwrap().values, vec![0.3]);
    }

    #[test]
    fn five_cell_chain_matches_recurrence() {
        let (g, flow) = chain(5);
        // Unit flux, unit cells, porosity 1, dt 1: CFL number 1.
        let q = flow.patch_flux[1];
        assert!((q - 1.0).abs() < 1e-12);
        let sys = assemble_transport(&g, &flow, &params(1.0, 3, 1.0), 1e-14).unwrap();
        assert!(sys.is_direct());
        let mut state = TransportState::zeros(&g);
        let mut c = [0.0f64; 5];
        for _ in 0..3 {
            state = sys.step(&state).unwrap();
            let mut upstream = 1.0;
            for ci in c.iter_mut() {
                *ci = (*ci + q * upstream) / (1.0 + q);
                upstream = *ci;
            }
            for (a, b) in state.values.iter().zip(&c) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steady_advection_saturates() {
        let (g, flow) = chain(10);
        let run = run_transport(&g, &flow, &params(1.0, 400, 1.0), &[], 1e-12).unwrap();
        for c in &run.final_state.values {
            assert!((c - 1.0).abs() < 1e-10);
        }
        assert!(run.max_budget_error < 1e-12);
        assert!(run.max_concentration <= 1.0 + 1e-12);
        assert!(run.min_concentration >= 0.0);
    }

    #[test]
    fn constant_state_is_stationary() {
        let (g, flow) = chain(4);
        let sys = assemble_transport(&g, &flow, &params(0.7, 1, 0.3), 1e-14).unwrap();
        let s = TransportState {
            values: vec![1.0; 4],
            offsets: g.dof_offsets(),
            step: 0,
            time: 0.0,
        };
        for c in sys.step(&s).unwrap().values {
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn observers_include_initial_state() {
        let (g, flow) = chain(3);
        let obs = [Observer::new("last", |s: &TransportState<f64>| s.values[2])];
        let run = run_transport(&g, &flow, &params(1.0, 0, 1.0), &obs, 1e-12).unwrap();
        assert_eq!(run.series[0].values, vec![0.0]);
        assert_eq!(run.series[0].times, vec![0.0]);
    }
}
