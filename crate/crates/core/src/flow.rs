//! Cell-centered two-point flux discretization of mixed-dimensional Darcy
//! flow. Each subdomain is discretized separately; neighboring dimensions are
//! coupled through mortar transmissibilities that put the high-side half cell
//! and the normal resistance of the low-dimensional feature in series.

use serde::{Deserialize, Serialize};

use crate::mdgrid::{BoundaryCondition, MixedDimGrid};
use crate::scalar::Scalar;
use crate::sparsela::{
    solve_cg_refined, CsrMatrix, SolveOptions, SolveReport, SparseError, TripletBuffer,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("invalid flow parameters: {0}")]
    InvalidParameter(String),
    #[error(
        "dim {dim} cell {cell} is not connected to any Dirichlet boundary; the system is singular"
    )]
    Floating { dim: usize, cell: usize },
    #[error(transparent)]
    Solver(#[from] SparseError),
}

/// Point source: volumetric rate into one cell (m^3/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Source<T> {
    pub dim: usize,
    pub cell: usize,
    pub rate: T,
}

/// Effective conductivities, already scaled by the cross-sectional measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FlowParams<T> {
    /// K_3 per matrix region (m/s), in grid region order.
    pub matrix_conductivity: Vec<T>,
    /// K_2 per fracture (m^2/s), in grid fracture order.
    pub fracture_conductivity: Vec<T>,
    /// kappa_2 per fracture (1/s).
    pub fracture_normal: Vec<T>,
    /// K_1 (m^3/s).
    pub line_conductivity: T,
    /// kappa_1 (m/s).
    pub line_normal: T,
    /// kappa_0 (m^2/s).
    pub point_normal: T,
    #[serde(default)]
    pub sources: Vec<Source<T>>,
}

impl<T: Scalar> FlowParams<T> {
    /// Same conductivities everywhere in each dimension.
    pub fn uniform(
        grid: &MixedDimGrid<T>,
        k3: T,
        k2: T,
        kappa2: T,
        k1: T,
        kappa1: T,
        kappa0: T,
    ) -> Self {
        Self {
            matrix_conductivity: vec![k3; grid.matrix_regions.len()],
            fracture_conductivity: vec![k2; grid.fractures.len()],
            fracture_normal: vec![kappa2; grid.fractures.len()],
            line_conductivity: k1,
            line_normal: kappa1,
            point_normal: kappa0,
            sources: Vec::new(),
        }
    }

    pub fn validate(&self, grid: &MixedDimGrid<T>) -> Result<(), FlowError> {
        let bad = |what: &str| Err(FlowError::InvalidParameter(what.to_string()));
        if self.matrix_conductivity.len() != grid.matrix_regions.len() {
            return bad("one matrix conductivity per region required");
        }
        if self.fracture_conductivity.len() != grid.fractures.len()
            || self.fracture_normal.len() != grid.fractures.len()
        {
            return bad("one tangential and one normal conductivity per fracture required");
        }
        let scalars = [self.line_conductivity, self.line_normal, self.point_normal];
        let mut all = self
            .matrix_conductivity
            .iter()
            .chain(&self.fracture_conductivity)
            .chain(&self.fracture_normal)
            .chain(&scalars);
        if all.any(|&k| !(k > T::zero() && k.is_finite())) {
            return bad("conductivities must be positive and finite");
        }
        for s in &self.sources {
            if s.dim > 3 || s.cell >= grid.num_cells(s.dim) || !s.rate.is_finite() {
                return bad("source references a missing cell");
            }
        }
        Ok(())
    }

    /// Tangential conductivity of a cell (unused for points).
    pub fn conductivity(&self, grid: &MixedDimGrid<T>, dim: usize, cell: usize) -> T {
        match dim {
            3 => self.matrix_conductivity[grid.subdomains[3].cells[cell].tag as usize],
            2 => self.fracture_conductivity[grid.subdomains[2].cells[cell].tag as usize],
            1 => self.line_conductivity,
            _ => T::zero(),
        }
    }

    /// Normal conductivity of the low-dimensional cell of a mortar.
    pub fn normal_conductivity(
        &self,
        grid: &MixedDimGrid<T>,
        low_dim: usize,
        low_cell: usize,
    ) -> T {
        match low_dim {
            2 => self.fracture_normal[grid.subdomains[2].cells[low_cell].tag as usize],
            1 => self.line_normal,
            _ => self.point_normal,
        }
    }
}

/// Reduction of equidimensional conductivities to the effective ones used by
/// the mixed-dimensional model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveFromEquiDim<T> {
    pub dim: usize,
    pub k_eq: T,
    pub kappa_eq: T,
    /// Cross-sectional measure of the feature.
    pub epsilon: T,
    /// Cross-sectional measure of the neighboring higher-dimensional feature.
    pub epsilon_higher: T,
}

impl<T: Scalar> EffectiveFromEquiDim<T> {
    pub fn aperture(&self) -> T {
        self.epsilon.powf(T::one() / T::from_count(3 - self.dim))
    }

    pub fn tangential(&self) -> T {
        self.epsilon * self.k_eq
    }

    pub fn normal(&self) -> T {
        self.epsilon_higher * T::of(2.0) / self.aperture() * self.kappa_eq
    }
}

/// Assembled flow system with the transmissibilities kept for flux recovery.
#[derive(Debug, Clone)]
pub struct FlowSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub offsets: [usize; 4],
    /// Per subdomain and face: transmissibility (zero on Neumann and no-flow faces).
    pub face_trans: [Vec<T>; 4],
    /// Per mortar dimension and coupling.
    pub mortar_trans: [Vec<T>; 3],
}

impl<T: Scalar> FlowSystem<T> {
    pub fn dof(&self, dim: usize, cell: usize) -> usize {
        self.offsets[dim] + cell
    }
}

pub fn assemble_flow<T: Scalar>(
    grid: &MixedDimGrid<T>,
    params: &FlowParams<T>,
) -> Result<FlowSystem<T>, FlowError> {
    params.validate(grid)?;
    check_connectivity(grid)?;
    let n = grid.num_dofs();
    let offsets = grid.dof_offsets();
    let mut buf = TripletBuffer::with_capacity(n, 8 * n);
    let mut rhs = vec![T::zero(); n];
    let mut face_trans: [Vec<T>; 4] = Default::default();
    for d in (1..4).rev() {
        let sd = &grid.subdomains[d];
        let mut trans = Vec::with_capacity(sd.faces.len());
        for f in &sd.faces {
            let ko = params.conductivity(grid, d, f.owner);
            let to = ko * f.area / f.owner_dist;
            let io = offsets[d] + f.owner;
            match f.neighbor {
                Some(nb) => {
                    let tn = params.conductivity(grid, d, nb) * f.area / f.neighbor_dist;
                    let t = to * tn / (to + tn);
                    buf.push_pair(io, offsets[d] + nb, t);
                    trans.push(t);
                }
                None => match grid.patches[f.patch.expect("boundary face has a patch")].condition {
                    BoundaryCondition::Dirichlet(h) => {
                        buf.push(io, io, to);
                        rhs[io] += to * h;
                        trans.push(to);
                    }
                    BoundaryCondition::Neumann(u) => {
                        rhs[io] -= sd.epsilon * u * f.area;
                        trans.push(T::zero());
                    }
                    BoundaryCondition::NoFlow => trans.push(T::zero()),
                },
            }
        }
        face_trans[d] = trans;
    }
    let mut mortar_trans: [Vec<T>; 3] = Default::default();
    for (low, ms) in grid.mortars.iter().enumerate() {
        let high = low + 1;
        mortar_trans[low] = ms
            .iter()
            .map(|m| {
                let kh = params.conductivity(grid, high, m.high_cell);
                let kappa = params.normal_conductivity(grid, low, m.low_cell);
                let t = m.area / (m.high_half_distance / kh + T::one() / kappa);
                buf.push_pair(offsets[high] + m.high_cell, offsets[low] + m.low_cell, t);
                t
            })
            .collect();
    }
    for s in &params.sources {
        rhs[offsets[s.dim] + s.cell] += s.rate;
    }
    let matrix = buf.to_csr()?;
    Ok(FlowSystem {
        matrix,
        rhs,
        offsets,
        face_trans,
        mortar_trans,
    })
}

/// Fails when some cell cannot reach a Dirichlet face through faces and mortars.
fn check_connectivity<T: Scalar>(grid: &MixedDimGrid<T>) -> Result<(), FlowError> {
    let n = grid.num_dofs();
    let off = grid.dof_offsets();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut anchored = vec![false; n];
    for sd in &grid.subdomains {
        for f in &sd.faces {
            let i = off[sd.dim] + f.owner;
            match f.neighbor {
                Some(nb) => {
                    adj[i].push(off[sd.dim] + nb);
                    adj[off[sd.dim] + nb].push(i);
                }
                None => {
                    if let Some(BoundaryCondition::Dirichlet(_)) =
                        f.patch.map(|p| grid.patches[p].condition)
                    {
                        anchored[i] = true;
                    }
                }
            }
        }
    }
    for (low, ms) in grid.mortars.iter().enumerate() {
        for m in ms {
            let (a, b) = (off[low + 1] + m.high_cell, off[low] + m.low_cell);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut reached = anchored.clone();
    let mut stack: Vec<usize> = (0..n).filter(|&i| anchored[i]).collect();
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !reached[j] {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    if let Some(i) = reached.iter().position(|r| !r) {
        let dim = (0..4)
            .find(|&d| i >= off[d] && i < off[d] + grid.num_cells(d))
            .expect("dof in range");
        return Err(FlowError::Floating {
            dim,
            cell: i - off[dim],
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution<T> {
    /// Hydraulic head per cell, indexed by dimension.
    pub heads: [Vec<T>; 4],
    /// Per subdomain and face: flux from owner to neighbor, or outward on
    /// the boundary (m^3/s).
    pub face_flux: [Vec<T>; 4],
    /// Per mortar: flux from the high-dimensional cell into the low one.
    pub mortar_flux: [Vec<T>; 3],
    /// Signed outward flux per boundary patch.
    pub patch_flux: Vec<T>,
    pub report: SolveReport<T>,
    pub dofs: usize,
    pub nnz: usize,
}

impl<T: Scalar> FlowSolution<T> {
    /// Total flux entering through the boundary (positive).
    pub fn boundary_inflow(&self) -> T {
        self.patch_flux
            .iter()
            .filter(|&&q| q < T::zero())
            .fold(T::zero(), |a, &q| a - q)
    }

    /// Total flux leaving through the boundary (positive).
    pub fn boundary_outflow(&self) -> T {
        self.patch_flux
            .iter()
            .filter(|&&q| q > T::zero())
            .fold(T::zero(), |a, &q| a + q)
    }

    pub fn max_abs_flux(&self) -> T {
        let faces = self.face_flux.iter().flatten();
        let mortars = self.mortar_flux.iter().flatten();
        faces.chain(mortars).fold(T::zero(), |a, q| a.max(q.abs()))
    }
}

/// Heads from a solution vector in dof order, with fluxes recovered from the
/// assembled transmissibilities.
pub fn recover_fluxes<T: Scalar>(
    grid: &MixedDimGrid<T>,
    sys: &FlowSystem<T>,
    x: &[T],
    report: SolveReport<T>,
) -> FlowSolution<T> {
    let off = sys.offsets;
    let heads: [Vec<T>; 4] =
        std::array::from_fn(|d| x[off[d]..off[d] + grid.num_cells(d)].to_vec());
    let mut patch_flux = vec![T::zero(); grid.patches.len()];
    let face_flux: [Vec<T>; 4] = std::array::from_fn(|d| {
        let sd = &grid.subdomains[d];
        sd.faces
            .iter()
            .zip(&sys.face_trans[d])
            .map(|(f, &t)| match f.neighbor {
                Some(nb) => t * (heads[d][f.owner] - heads[d][nb]),
                None => {
                    let p = f.patch.expect("boundary face has a patch");
                    let q = match grid.patches[p].condition {
                        BoundaryCondition::Dirichlet(h) => t * (heads[d][f.owner] - h),
                        BoundaryCondition::Neumann(u) => sd.epsilon * u * f.area,
                        BoundaryCondition::NoFlow => T::zero(),
                    };
                    patch_flux[p] += q;
                    q
                }
            })
            .collect()
    });
    let mortar_flux: [Vec<T>; 3] = std::array::from_fn(|low| {
        grid.mortars[low]
            .iter()
            .zip(&sys.mortar_trans[low])
            .map(|(m, &t)| t * (heads[low + 1][m.high_cell] - heads[low][m.low_cell]))
            .collect()
    });
    FlowSolution {
        heads,
        face_flux,
        mortar_flux,
        patch_flux,
        report,
        dofs: sys.matrix.dim(),
        nnz: sys.matrix.nnz(),
    }
}

/// Residual-correction rounds applied after the first conjugate-gradient solve.
pub const REFINEMENT_ROUNDS: usize = 2;

pub fn solve_flow<T: Scalar>(
    grid: &MixedDimGrid<T>,
    params: &FlowParams<T>,
    tol: T,
) -> Result<FlowSolution<T>, FlowError> {
    let sys = assemble_flow(grid, params)?;
    let (x, report) = solve_cg_refined(
        &sys.matrix,
        &sys.rhs,
        &SolveOptions::with_tol(tol),
        REFINEMENT_ROUNDS,
    )?;
    Ok(recover_fluxes(grid, &sys, &x, report))
}

/// Per-cell balance of a solved flow field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport<T> {
    /// Per dimension and cell: net outflow minus source.
    pub residuals: [Vec<T>; 4],
    /// Per dimension and cell: largest incident flux magnitude.
    pub max_incident: [Vec<T>; 4],
}

impl<T: Scalar> ConservationReport<T> {
    /// Largest absolute residual per dimension.
    pub fn max_residual(&self) -> [T; 4] {
        std::array::from_fn(|d| {
            self.residuals[d]
                .iter()
                .fold(T::zero(), |a, r| a.max(r.abs()))
        })
    }

    /// Largest residual relative to the cell's largest incident flux, per
    /// dimension. Cells without flux report their absolute residual.
    pub fn max_relative(&self) -> [T; 4] {
        std::array::from_fn(|d| {
            self.residuals[d]
                .iter()
                .zip(&self.max_incident[d])
                .fold(T::zero(), |a, (r, m)| {
                    let scale = if *m > T::zero() { *m } else { T::one() };
                    a.max(r.abs() / scale)
                })
        })
    }
}

/// Discrete mass balance of every cell, including the exchange with the
/// neighboring dimensions.
pub fn check_conservation<T: Scalar>(
    grid: &MixedDimGrid<T>,
    params: &FlowParams<T>,
    sol: &FlowSolution<T>,
) -> ConservationReport<T> {
    let mut residuals: [Vec<T>; 4] = std::array::from_fn(|d| vec![T::zero(); grid.num_cells(d)]);
    let mut max_incident: [Vec<T>; 4] = std::array::from_fn(|d| vec![T::zero(); grid.num_cells(d)]);
    let mut touch = |d: usize, c: usize, q: T, sign: T, res: &mut [Vec<T>; 4]| {
        res[d][c] += sign * q;
        max_incident[d][c] = max_incident[d][c].max(q.abs());
    };
    for sd in &grid.subdomains {
        let d = sd.dim;
        for (f, &q) in sd.faces.iter().zip(&sol.face_flux[d]) {
            touch(d, f.owner, q, T::one(), &mut residuals);
            if let Some(nb) = f.neighbor {
                touch(d, nb, q, -T::one(), &mut residuals);
            }
        }
    }
    for (low, ms) in grid.mortars.iter().enumerate() {
        for (m, &q) in ms.iter().zip(&sol.mortar_flux[low]) {
            touch(low + 1, m.high_cell, q, T::one(), &mut residuals);
            touch(low, m.low_cell, q, -T::one(), &mut residuals);
        }
    }
    for s in &params.sources {
        residuals[s.dim][s.cell] -= s.rate;
    }
    ConservationReport {
        residuals,
        max_incident,
    }
}
