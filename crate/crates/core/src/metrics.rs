//! Comparison quantities: line samples, region integrals, boundary fluxes,
//! percentile spreads across curve sets, cost indicators, and their CSV
//! representations.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cases::{LineProbe, RegionProbe, Selection, Weighting};
use crate::flow::FlowSolution;
use crate::geometry::{Aabb, Point3};
use crate::mdgrid::MixedDimGrid;
use crate::scalar::Scalar;
use crate::transport::{Series, TransportParams, TransportState};

/// Containment slack for point location, relative to the grid diagonal.
pub const LOCATE_SLACK: f64 = 1e-10;

/// Largest distance, relative to the grid diagonal, over which a sample
/// point outside every cell snaps to the closest one.
pub const SNAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("line probe '{0}' has zero length")]
    DegenerateProbe(String),
    #[error("probe '{name}': {message}")]
    InvalidProbe { name: String, message: String },
    #[error("selection '{0}' contains no cells")]
    EmptySelection(String),
    #[error("field has {found} values, subdomain {dim} has {expected} cells")]
    FieldLength {
        dim: usize,
        expected: usize,
        found: usize,
    },
    #[error("at least two curves are required, got {0}")]
    TooFewCurves(usize),
    #[error("curve '{0}' does not share the abscissa of the first curve")]
    AbscissaMismatch(String),
    #[error("curve '{label}': {message}")]
    InvalidCurve { label: String, message: String },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Ordinates over a strictly increasing abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Curve {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self, MetricsError> {
        let c = Self {
            label: label.into(),
            x,
            y,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: &str| {
            Err(MetricsError::InvalidCurve {
                label: self.label.clone(),
                message: m.into(),
            })
        };
        if self.x.len() != self.y.len() {
            return bad("abscissa and ordinate lengths differ");
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("abscissa is not strictly increasing");
        }
        Ok(())
    }

    /// Trapezoid-rule integral over the abscissa.
    pub fn area(&self) -> f64 {
        trapezoid(&self.x, &self.y)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// A sampled line: curve over the arclength fraction plus the line length.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSample {
    pub curve: Curve,
    pub length: f64,
    /// Sample points that were outside every cell beyond the snap tolerance
    /// (their value is NaN).
    pub missed: usize,
}

/// Point locator over the cells of one subdomain. Cells are convex; a point
/// belongs to every cell whose bounding half-spaces it satisfies up to the
/// slack, and ties go to the lowest cell index.
pub struct CellLocator<'g, T> {
    grid: &'g MixedDimGrid<T>,
    dim: usize,
    /// Per cell: outward unit normals and plane points (3d) or the polygon
    /// loop (2d) or the segment (1d).
    planes: Vec<Vec<(Point3<f64>, Point3<f64>)>>,
    bins: Bins,
    slack: f64,
    snap: f64,
}

struct Bins {
    lo: Point3<f64>,
    size: Point3<f64>,
    n: [usize; 3],
    cells: Vec<Vec<usize>>,
}

impl Bins {
    fn new(bbox: Aabb<f64>, boxes: &[Aabb<f64>]) -> Self {
        let per_axis = ((boxes.len() as f64).cbrt().ceil() as usize).clamp(1, 128);
        let ext = bbox.extent();
        let n: [usize; 3] = std::array::from_fn(|a| if ext[a] > 0.0 { per_axis } else { 1 });
        let size = Point3::new(
            (ext.x / n[0] as f64).max(f64::MIN_POSITIVE),
            (ext.y / n[1] as f64).max(f64::MIN_POSITIVE),
            (ext.z / n[2] as f64).max(f64::MIN_POSITIVE),
        );
        let mut bins = Self {
            lo: bbox.min,
            size,
            n,
            cells: vec![Vec::new(); n[0] * n[1] * n[2]],
        };
        for (c, b) in boxes.iter().enumerate() {
            let lo = bins.index_of(b.min);
            let hi = bins.index_of(b.max);
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let slot = bins.slot([i, j, k]);
                        bins.cells[slot].push(c);
                    }
                }
            }
        }
        bins
    }

    fn index_of(&self, p: Point3<f64>) -> [usize; 3] {
        std::array::from_fn(|a| {
            let t = ((p[a] - self.lo[a]) / self.size[a]).floor();
            if t.is_finite() {
                (t.max(0.0) as usize).min(self.n[a] - 1)
            } else {
                0
            }
        })
    }

    fn slot(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.n[0] * (ijk[1] + self.n[1] * ijk[2])
    }

    fn candidates(&self, p: Point3<f64>) -> &[usize] {
        &self.cells[self.slot(self.index_of(p))]
    }
}

fn pt<T: Scalar>(p: Point3<T>) -> Point3<f64> {
    Point3::from_f64(p.to_f64())
}

impl<'g, T: Scalar> CellLocator<'g, T> {
    pub fn new(grid: &'g MixedDimGrid<T>, dim: usize) -> Self {
        let diag = grid.bbox.diagonal().to_f64_lossy();
        let slack = LOCATE_SLACK * diag;
        let snap = SNAP_TOLERANCE * diag;
        let sd = &grid.subdomains[dim];
        let nodes: Vec<Point3<f64>> = grid.nodes.iter().map(|&p| pt(p)).collect();
        let mut planes: Vec<Vec<(Point3<f64>, Point3<f64>)>> = vec![Vec::new(); sd.cells.len()];
        match dim {
            3 => {
                for f in &sd.faces {
                    let (n, c) = (pt(f.normal), pt(f.center));
                    planes[f.owner].push((n, c));
                    if let Some(nb) = f.neighbor {
                        planes[nb].push((-n, c));
                    }
                }
                for m in &grid.mortars[2] {
                    planes[m.high_cell].push((pt(m.normal), pt(m.center)));
                }
            }
            _ => {
                for (c, ids) in sd.cell_nodes.iter().enumerate() {
                    planes[c] = ids.iter().map(|&i| (nodes[i], Point3::zero())).collect();
                }
            }
        }
        let boxes: Vec<Aabb<f64>> = sd
            .cell_nodes
            .iter()
            .map(|ids| {
                let b = Aabb::bounding(ids.iter().map(|&i| nodes[i]))
                    .unwrap_or(Aabb::new(Point3::zero(), Point3::zero()));
                let pad = Point3::new(snap, snap, snap);
                Aabb::new(b.min - pad, b.max + pad)
            })
            .collect();
        let bbox = Aabb::new(pt(grid.bbox.min), pt(grid.bbox.max));
        let bins = Bins::new(bbox, &boxes);
        Self {
            grid,
            dim,
            planes,
            bins,
            slack,
            snap,
        }
    }

    /// Distance-like measure of how far `p` lies outside cell `c` (zero or
    /// negative inside).
    fn violation(&self, c: usize, p: Point3<f64>) -> f64 {
        let data = &self.planes[c];
        match self.dim {
            3 => data
                .iter()
                .map(|(n, q)| (p - *q).dot(*n))
                .fold(f64::NEG_INFINITY, f64::max),
            2 => {
                let pts: Vec<Point3<f64>> = data.iter().map(|d| d.0).collect();
                let mut normal = Point3::zero();
                for i in 0..pts.len() {
                    normal = normal + pts[i].cross(pts[(i + 1) % pts.len()]);
                }
                let Some(normal) = normal.normalized() else {
                    return f64::INFINITY;
                };
                let mut worst = (p - pts[0]).dot(normal).abs();
                for i in 0..pts.len() {
                    let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                    let edge = b - a;
                    let len = edge.norm();
                    if len > 0.0 {
                        // Positive inside the loop.
                        let inward = normal.cross(edge) * (1.0 / len);
                        worst = worst.max(-(p - a).dot(inward));
                    }
                }
                worst
            }
            1 => {
                let (a, b) = (data[0].0, data[1].0);
                let e = b - a;
                let len2 = e.dot(e);
                let t = if len2 > 0.0 {
                    (p - a).dot(e) / len2
                } else {
                    0.0
                };
                let proj = a + e * t.clamp(0.0, 1.0);
                p.distance(proj)
            }
            _ => p.distance(data[0].0),
        }
    }

    /// Cell containing `p`, or the closest cell within the snap tolerance.
    pub fn locate(&self, p: Point3<f64>) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        let mut inside: Option<usize> = None;
        for &c in self.bins.candidates(p) {
            let v = self.violation(c, p);
            if v <= self.slack {
                inside = Some(inside.map_or(c, |i: usize| i.min(c)));
            } else if best.is_none_or(|(bv, bc)| v < bv || (v == bv && c < bc)) {
                best = Some((v, c));
            }
        }
        inside.or_else(|| best.filter(|&(v, _)| v <= self.snap).map(|(_, c)| c))
    }

    pub fn grid(&self) -> &MixedDimGrid<T> {
        self.grid
    }
}

/// Samples a cell field at evenly spaced points along the probe segment,
/// both ends included.
pub fn sample_over_line<T: Scalar>(
    grid: &MixedDimGrid<T>,
    field: &[T],
    probe: &LineProbe,
) -> Result<LineSample, MetricsError> {
    let locator = CellLocator::new(grid, probe.dim);
    sample_with(&locator, field, probe)
}

/// Same as [`sample_over_line`] with a prebuilt locator.
pub fn sample_with<T: Scalar>(
    locator: &CellLocator<'_, T>,
    field: &[T],
    probe: &LineProbe,
) -> Result<LineSample, MetricsError> {
    let grid = locator.grid;
    let dim = locator.dim;
    if field.len() != grid.num_cells(dim) {
        return Err(MetricsError::FieldLength {
            dim,
            expected: grid.num_cells(dim),
            found: field.len(),
        });
    }
    if probe.dim != dim {
        return Err(MetricsError::InvalidProbe {
            name: probe.name.clone(),
            message: format!(
                "probe targets dimension {}, locator dimension {dim}",
                probe.dim
            ),
        });
    }
    if probe.samples < 2 {
        return Err(MetricsError::InvalidProbe {
            name: probe.name.clone(),
            message: "at least 2 samples required".into(),
        });
    }
    let a = Point3::from_f64(probe.from);
    let b = Point3::from_f64(probe.to);
    let length = a.distance(b);
    if !(length > 0.0) {
        return Err(MetricsError::DegenerateProbe(probe.name.clone()));
    }
    let n = probe.samples;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut missed = 0;
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        x.push(t);
        match locator.locate(a.lerp(b, t)) {
            Some(c) => y.push(field[c].to_f64_lossy()),
            None => {
                missed += 1;
                y.push(f64::NAN);
            }
        }
    }
    Ok(LineSample {
        curve: Curve {
            label: probe.name.clone(),
            x,
            y,
        },
        length,
        missed,
    })
}

/// Pointwise statistics of a curve ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
    /// Area between the 10th and 90th percentile curves.
    pub spread_area: f64,
    /// Area under the mean curve.
    pub mean_area: f64,
    /// `spread_area / mean_area` (zero when the spread vanishes).
    pub ratio: f64,
}

/// Percentile of sorted samples: rank `p (n - 1)`, linear interpolation
/// between neighbouring order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let r = p * (sorted.len() - 1) as f64;
    let lo = r.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = r - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn percentile_spread(curves: &[Curve]) -> Result<SpreadReport, MetricsError> {
    if curves.len() < 2 {
        return Err(MetricsError::TooFewCurves(curves.len()));
    }
    for c in curves {
        c.validate()?;
        if c.x != curves[0].x {
            return Err(MetricsError::AbscissaMismatch(c.label.clone()));
        }
    }
    let x = curves[0].x.clone();
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(x.len());
    let mut p10 = Vec::with_capacity(x.len());
    let mut p90 = Vec::with_capacity(x.len());
    let mut column = vec![0.0; curves.len()];
    for i in 0..x.len() {
        for (slot, c) in column.iter_mut().zip(curves) {
            *slot = c.y[i];
        }
        mean.push(column.iter().sum::<f64>() / k);
        column.sort_by(f64::total_cmp);
        p10.push(percentile(&column, 0.1));
        p90.push(percentile(&column, 0.9));
    }
    let gap: Vec<f64> = p90.iter().zip(&p10).map(|(h, l)| h - l).collect();
    let spread_area = trapezoid(&x, &gap);
    let mean_area = trapezoid(&x, &mean);
    let ratio = if spread_area == 0.0 {
        0.0
    } else {
        spread_area / mean_area
    };
    Ok(SpreadReport {
        x,
        mean,
        p10,
        p90,
        spread_area,
        mean_area,
        ratio,
    })
}

/// Cells selected by a region probe, as (dimension, cell) pairs.
pub fn select_cells<T: Scalar>(
    grid: &MixedDimGrid<T>,
    probe: &RegionProbe,
) -> Result<Vec<(usize, usize)>, MetricsError> {
    let invalid = |m: String| MetricsError::InvalidProbe {
        name: probe.name.clone(),
        message: m,
    };
    let picked: Vec<(usize, usize)> = match &probe.select {
        Selection::Region(name) => {
            let r = grid
                .region_index(name)
                .ok_or_else(|| invalid(format!("unknown region '{name}'")))?;
            let cells = &grid.subdomains[3].cells;
            (0..cells.len())
                .filter(|&c| cells[c].tag as usize == r)
                .map(|c| (3, c))
                .collect()
        }
        Selection::Fracture(name) => {
            let f = grid
                .fracture_index(name)
                .ok_or_else(|| invalid(format!("unknown fracture '{name}'")))?;
            let cells = &grid.subdomains[2].cells;
            (0..cells.len())
                .filter(|&c| cells[c].tag as usize == f)
                .map(|c| (2, c))
                .collect()
        }
        Selection::Boxes { dim, boxes } => {
            if *dim > 3 {
                return Err(invalid(format!("dimension {dim} out of range")));
            }
            let boxes: Vec<Aabb<T>> = boxes.iter().map(|b| b.to_aabb()).collect();
            let cells = &grid.subdomains[*dim].cells;
            (0..cells.len())
                .filter(|&c| boxes.iter().any(|b| b.contains(cells[c].center, T::zero())))
                .map(|c| (*dim, c))
                .collect()
        }
        Selection::Subdomain(dim) => {
            if *dim > 3 {
                return Err(invalid(format!("dimension {dim} out of range")));
            }
            (0..grid.num_cells(*dim)).map(|c| (*dim, c)).collect()
        }
        Selection::EachFracture => {
            return Err(invalid(
                "per-fracture selections must be expanded first".into(),
            ))
        }
    };
    if picked.is_empty() {
        return Err(MetricsError::EmptySelection(probe.name.clone()));
    }
    Ok(picked)
}

/// Weighted mode: sum of ε φ measure c. Mean mode: measure-weighted mean of c.
pub fn integrate_concentration<T: Scalar>(
    grid: &MixedDimGrid<T>,
    params: &TransportParams<T>,
    state: &TransportState<T>,
    cells: &[(usize, usize)],
    mode: Weighting,
) -> T {
    let mut total = T::zero();
    let mut measure = T::zero();
    for &(d, c) in cells {
        let sd = &grid.subdomains[d];
        let m = sd.cells[c].measure;
        let v = state.cells(d)[c];
        match mode {
            Weighting::Weighted => total += sd.epsilon * params.porosity(grid, d, c) * m * v,
            Weighting::Mean => {
                total += m * v;
                measure += m;
            }
        }
    }
    match mode {
        Weighting::Weighted => total,
        Weighting::Mean => total / measure,
    }
}

/// Signed boundary flux per patch (positive leaving the domain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub patches: BTreeMap<String, f64>,
    pub inflow: f64,
    pub outflow: f64,
}

impl FluxReport {
    /// Flux through `numerator` divided by the summed flux of `outlets`.
    pub fn ratio(&self, numerator: &str, outlets: &[String]) -> Option<f64> {
        let num = *self.patches.get(numerator)?;
        let mut den = 0.0;
        for o in outlets {
            den += *self.patches.get(o)?;
        }
        Some(num / den)
    }
}

pub fn boundary_flux_report<T: Scalar>(
    grid: &MixedDimGrid<T>,
    flow: &FlowSolution<T>,
) -> FluxReport {
    let patches = grid
        .patches
        .iter()
        .zip(&flow.patch_flux)
        .map(|(p, q)| (p.name.clone(), q.to_f64_lossy()))
        .collect();
    FluxReport {
        patches,
        inflow: flow.boundary_inflow().to_f64_lossy(),
        outflow: flow.boundary_outflow().to_f64_lossy(),
    }
}

/// Net advective concentration flux leaving through a patch: outflow faces
/// carry the cell concentration, inflow faces the prescribed one.
pub fn outlet_concentration_flux<T: Scalar>(
    grid: &MixedDimGrid<T>,
    flow: &FlowSolution<T>,
    params: &TransportParams<T>,
    state: &TransportState<T>,
    patch: usize,
) -> T {
    let name = &grid.patches[patch].name;
    let inflow_c = params
        .inflow_concentration
        .get(name)
        .copied()
        .unwrap_or(T::zero());
    grid.patch_faces(patch)
        .into_iter()
        .map(|(d, f)| {
            let q = flow.face_flux[d][f];
            let owner = grid.subdomains[d].faces[f].owner;
            if q > T::zero() {
                q * state.cells(d)[owner]
            } else {
                q * inflow_c
            }
        })
        .sum()
}

/// Cost indicators: cells per dimension, degrees of freedom and nonzeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub cells_0d: usize,
    pub cells_1d: usize,
    pub cells_2d: usize,
    pub cells_3d: usize,
    pub dofs: usize,
    /// Nonzeros of the flow matrix.
    pub nnz: usize,
    /// Nonzeros of the transport matrix.
    pub nnz_transport: usize,
}

pub fn cost_report<T: Scalar>(
    grid: &MixedDimGrid<T>,
    flow_nnz: usize,
    transport_nnz: usize,
) -> CostReport {
    let s = grid.stats();
    CostReport {
        cells_0d: s.cells_0d,
        cells_1d: s.cells_1d,
        cells_2d: s.cells_2d,
        cells_3d: s.cells_3d,
        dofs: s.total(),
        nnz: flow_nnz,
        nnz_transport: transport_nnz,
    }
}

/// Structural nonzero count of the two-point flow matrix derived from grid
/// connectivity alone: one diagonal entry per cell plus a symmetric pair per
/// distinct connected cell pair.
pub fn structural_flow_nnz<T: Scalar>(grid: &MixedDimGrid<T>) -> usize {
    let off = grid.dof_offsets();
    let mut pairs = HashSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };
    for sd in &grid.subdomains {
        for f in &sd.faces {
            if let Some(nb) = f.neighbor {
                add(off[sd.dim] + f.owner, off[sd.dim] + nb);
            }
        }
    }
    for (low, ms) in grid.mortars.iter().enumerate() {
        for m in ms {
            add(off[low + 1] + m.high_cell, off[low] + m.low_cell);
        }
    }
    grid.num_dofs() + 2 * pairs.len()
}

/// Transport series as a curve over time.
pub fn series_curve<T: Scalar>(s: &Series<T>) -> Result<Curve, MetricsError> {
    Curve::new(
        s.name.clone(),
        s.times.iter().map(|t| t.to_f64_lossy()).collect(),
        s.values.iter().map(|v| v.to_f64_lossy()).collect(),
    )
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub const DOL_HEADER: &str = "fraction,arclength_m,value";
pub const DOT_HEADER: &str = "time_s,value";

pub fn dol_csv(sample: &LineSample) -> String {
    let mut s = String::from(DOL_HEADER);
    s.push('\n');
    for (x, y) in sample.curve.x.iter().zip(&sample.curve.y) {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_f64(*x),
            fmt_f64(x * sample.length),
            fmt_f64(*y)
        );
    }
    s
}

pub fn dot_csv(curve: &Curve) -> String {
    let mut s = String::from(DOT_HEADER);
    s.push('\n');
    for (x, y) in curve.x.iter().zip(&curve.y) {
        let _ = writeln!(s, "{},{}", fmt_f64(*x), fmt_f64(*y));
    }
    s
}

/// Percentile band with the abscissa column named after the curve kind.
pub fn spread_csv(r: &SpreadReport, kind: CurveKind) -> String {
    let x = match kind {
        CurveKind::Dol => "fraction",
        CurveKind::Dot => "time_s",
    };
    let mut s = format!("{x},p10,mean,p90\n");
    for i in 0..r.x.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(r.x[i]),
            fmt_f64(r.p10[i]),
            fmt_f64(r.mean[i]),
            fmt_f64(r.p90[i])
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// Data over a line (abscissa: arclength fraction).
    Dol,
    /// Data over time (abscissa: seconds).
    Dot,
}

/// Reads a dol or dot CSV back into a curve.
pub fn parse_curve_csv(label: &str, text: &str) -> Result<(CurveKind, Curve), MetricsError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(MetricsError::Csv {
        line: 1,
        message: "empty file".into(),
    })?;
    let kind = match header.trim() {
        DOL_HEADER => CurveKind::Dol,
        DOT_HEADER => CurveKind::Dot,
        other => {
            return Err(MetricsError::Csv {
                line: 1,
                message: format!("unknown header '{other}'"),
            })
        }
    };
    let width = if kind == CurveKind::Dol { 3 } else { 2 };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, l) in lines {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(MetricsError::Csv {
                line: i + 1,
                message: format!("expected {width} columns"),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| MetricsError::Csv {
                line: i + 1,
                message: format!("invalid number '{s}'"),
            })
        };
        x.push(parse(fields[0])?);
        y.push(parse(fields[width - 1])?);
    }
    Ok((kind, Curve::new(label, x, y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::Field;
    use crate::flow::{solve_flow, FlowParams};
    use crate::mdgrid::{
        build_cartesian_grid, BoundaryCondition, CartesianSpec, Epsilons, FractureRect, PatchSpec,
    };
    use crate::transport::assemble_transport;

    fn bar(nx: usize, fracture: bool) -> MixedDimGrid<f64> {
        build_cartesian_grid(&CartesianSpec {
            domain: Aabb::from_f64([0.0; 3], [1.0, 1.0, 1.0]),
            n: [nx, 1, 1],
            fractures: if fracture {
                vec![FractureRect {
                    name: "f".into(),
                    axis: 0,
                    coord: 0.5,
                    lo: [0.0, 0.0],
                    hi: [1.0, 1.0],
                }]
            } else {
                vec![]
            },
            regions: vec![],
            default_region: "m".into(),
            eps: Epsilons {
                fracture: 1e-2,
                line: 1e-4,
                point: 1e-6,
            },
            patches: vec![
                PatchSpec {
                    name: "left".into(),
                    region: Aabb::from_f64([0.0; 3], [0.0, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(1.0),
                },
                PatchSpec {
                    name: "right".into(),
                    region: Aabb::from_f64([1.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(0.0),
                },
            ],
        })
        .unwrap()
    }

    fn probe(dim: usize, from: [f64; 3], to: [f64; 3]) -> LineProbe {
        LineProbe {
            name: "p".into(),
            from,
            to,
            dim,
            field: Field::Head,
            samples: 1000,
        }
    }

    #[test]
    fn constant_field_samples() {
        let g = bar(4, false);
        let s =
            sample_over_line(&g, &[7.0; 4], &probe(3, [0.0, 0.5, 0.5], [1.0, 0.5, 0.5])).unwrap();
        assert_eq!(s.curve.y.len(), 1000);
        assert!(s.curve.y.iter().all(|&v| v == 7.0));
        assert_eq!(s.curve.x[0], 0.0);
        assert_eq!(s.curve.x[999], 1.0);
        assert_eq!(s.missed, 0);
    }

    #[test]
    fn two_cells_split_at_midpoint() {
        let g = bar(2, false);
        let s =
            sample_over_line(&g, &[1.0, 2.0], &probe(3, [0.0, 0.3, 0.3], [1.0, 0.3, 0.3])).unwrap();
        assert!(s.curve.y[..500].iter().all(|&v| v == 1.0));
        assert!(s.curve.y[500..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn ties_go_to_lower_index() {
        let g = bar(2, false);
        let s = sample_over_line(
            &g,
            &[1.0, 2.0],
            &LineProbe {
                samples: 3,
                ..probe(3, [0.0, 0.5, 0.5], [1.0, 0.5, 0.5])
            },
        )
        .unwrap();
        assert_eq!(s.curve.y, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn staircase_matches_linear_profile() {
        let g = bar(10, false);
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_flow(&g, &p, 1e-13).unwrap();
        let s = sample_over_line(
            &g,
            &sol.heads[3],
            &probe(3, [0.0, 0.5, 0.5], [1.0, 0.5, 0.5]),
        )
        .unwrap();
        for (x, h) in s.curve.x.iter().zip(&s.curve.y) {
            assert!((h - (1.0 - x)).abs() <= 0.05 + 1e-9);
        }
    }

    #[test]
    fn fracture_line_samples_fracture_cells() {
        let g = bar(2, true);
        let s = sample_over_line(&g, &[3.0], &probe(2, [0.5, 0.0, 0.0], [0.5, 1.0, 1.0])).unwrap();
        assert!(s.curve.y.iter().all(|&v| v == 3.0));
        let off =
            sample_over_line(&g, &[3.0], &probe(2, [0.6, 0.0, 0.0], [0.6, 1.0, 1.0])).unwrap();
        assert_eq!(off.missed, 1000);
    }

    #[test]
    fn degenerate_probe_rejected() {
        let g = bar(2, false);
        let r = sample_over_line(&g, &[1.0, 2.0], &probe(3, [0.5; 3], [0.5; 3]));
        assert_eq!(r.unwrap_err(), MetricsError::DegenerateProbe("p".into()));
    }

    fn flat(label: &str, v: f64) -> Curve {
        Curve::new(label, vec![0.0, 0.5, 1.0], vec![v; 3]).unwrap()
    }

    #[test]
    fn spread_of_two_constants() {
        let r = percentile_spread(&[flat("a", 0.0), flat("b", 1.0)]).unwrap();
        assert!(r.p10.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        assert!(r.p90.iter().all(|&v| (v - 0.9).abs() < 1e-15));
        assert!((r.spread_area - 0.8).abs() < 1e-15);
        assert!((r.mean_area - 0.5).abs() < 1e-15);
        assert!((r.ratio - 1.6).abs() < 1e-14);
    }

    #[test]
    fn identical_curves_have_no_spread() {
        let r = percentile_spread(&[flat("a", 3.0), flat("b", 3.0), flat("c", 3.0)]).unwrap();
        assert_eq!((r.spread_area, r.ratio), (0.0, 0.0));
    }

    #[test]
    fn spread_errors() {
        assert_eq!(
            percentile_spread(&[flat("a", 1.0)]).unwrap_err(),
            MetricsError::TooFewCurves(1)
        );
        let other = Curve::new("b", vec![0.0, 0.4, 1.0], vec![1.0; 3]).unwrap();
        assert_eq!(
            percentile_spread(&[flat("a", 1.0), other]).unwrap_err(),
            MetricsError::AbscissaMismatch("b".into())
        );
        assert!(Curve::new("c", vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn structural_nnz_of_two_cells_and_a_fracture() {
        let g = bar(2, true);
        assert_eq!(g.num_dofs(), 3);
        assert_eq!(structural_flow_nnz(&g), 7);
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_flow(&g, &p, 1e-12).unwrap();
        assert_eq!(sol.nnz, 7);
        let c = cost_report(&g, sol.nnz, 0);
        assert_eq!((c.dofs, c.cells_3d, c.cells_2d), (3, 2, 1));
    }

    #[test]
    fn weighted_integral_matches_transport_mass() {
        let g = bar(4, true);
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_flow(&g, &p, 1e-12).unwrap();
        let tp = TransportParams {
            matrix_porosity: vec![0.3],
            fracture_porosity: vec![0.6],
            line_porosity: 0.5,
            point_porosity: 0.5,
            inflow_concentration: BTreeMap::from([("left".to_string(), 1.0)]),
            dt: 0.1,
            steps: 1,
        };
        let sys = assemble_transport(&g, &sol, &tp, 1e-12).unwrap();
        let mut state = TransportState::zeros(&g);
        for (i, v) in state.values.iter_mut().enumerate() {
            *v = 0.1 + i as f64 * 0.07;
        }
        let all: Vec<(usize, usize)> = (0..4)
            .flat_map(|d| (0..g.num_cells(d)).map(move |c| (d, c)))
            .collect();
        let w = integrate_concentration(&g, &tp, &state, &all, Weighting::Weighted);
        let mass = sys.mass(&state.values);
        assert!((w - mass).abs() <= 1e-12 * mass.abs(), "{w} vs {mass}");
        let constant = TransportState {
            values: vec![2.5; g.num_dofs()],
            ..state.clone()
        };
        let m = integrate_concentration(&g, &tp, &constant, &all[..4], Weighting::Mean);
        assert_eq!(m, 2.5);
    }

    #[test]
    fn symmetric_outlets_split_evenly() {
        let g = build_cartesian_grid(&CartesianSpec {
            domain: Aabb::from_f64([0.0; 3], [2.0, 1.0, 1.0]),
            n: [4, 2, 2],
            fractures: vec![],
            regions: vec![],
            default_region: "m".into(),
            eps: Epsilons {
                fracture: 1e-2,
                line: 1e-4,
                point: 1e-6,
            },
            patches: vec![
                PatchSpec {
                    name: "in".into(),
                    region: Aabb::from_f64([0.5, 1.0, 0.0], [1.5, 1.0, 1.0]),
                    condition: BoundaryCondition::Neumann(-1.0),
                },
                PatchSpec {
                    name: "out_0".into(),
                    region: Aabb::from_f64([0.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(0.0),
                },
                PatchSpec {
                    name: "out_1".into(),
                    region: Aabb::from_f64([2.0, 0.0, 0.0], [2.0, 1.0, 1.0]),
                    condition: BoundaryCondition::Dirichlet(0.0),
                },
            ],
        })
        .unwrap();
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_flow(&g, &p, 1e-13).unwrap();
        let r = boundary_flux_report(&g, &sol);
        assert!((r.inflow - 1.0).abs() < 1e-12);
        let ratio = r.ratio("out_0", &["out_0".into(), "out_1".into()]).unwrap();
        assert!((ratio - 0.5).abs() < 1e-9);
    }

    #[test]
    fn no_flow_grid_has_zero_fluxes() {
        let mut g = bar(3, false);
        for p in &mut g.patches {
            if p.name == "left" {
                p.condition = BoundaryCondition::Dirichlet(0.0);
            }
        }
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_flow(&g, &p, 1e-12).unwrap();
        let r = boundary_flux_report(&g, &sol);
        assert!(r.patches.values().all(|&q| q == 0.0));
        assert_eq!((r.inflow, r.outflow), (0.0, 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let c = Curve::new(
            "t",
            vec![0.0, 0.1, 0.30000000000000004],
            vec![1e-300, -2.5, f64::MAX],
        )
        .unwrap();
        let (kind, back) = parse_curve_csv("t", &dot_csv(&c)).unwrap();
        assert_eq!(kind, CurveKind::Dot);
        assert_eq!(back, c);
        let s = LineSample {
            curve: c.clone(),
            length: 3.0,
            missed: 0,
        };
        let (kind, back) = parse_curve_csv("t", &dol_csv(&s)).unwrap();
        assert_eq!(kind, CurveKind::Dol);
        assert_eq!(back, c);
        assert!(parse_curve_csv("t", "a,b\n1,2\n").is_err());
    }

    #[test]
    fn outlet_flux_saturates_at_inflow_concentration() {
        let g = bar(5, false);
        let p = FlowParams::uniform(&g, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_flow(&g, &p, 1e-13).unwrap();
        let tp = TransportParams {
            matrix_porosity: vec![1.0],
            fracture_porosity: vec![],
            line_porosity: 1.0,
            point_porosity: 1.0,
            inflow_concentration: BTreeMap::from([("left".to_string(), 0.5)]),
            dt: 1.0,
            steps: 1,
        };
        let state = TransportState {
            values: vec![0.5; 5],
            ..TransportState::zeros(&g)
        };
        let right = g.patch_index("right").unwrap();
        let q = outlet_concentration_flux(&g, &sol, &tp, &state, right);
        assert!((q - 0.5 * sol.patch_flux[right]).abs() < 1e-14);
        let zero = outlet_concentration_flux(&g, &sol, &tp, &TransportState::zeros(&g), right);
        assert_eq!(zero, 0.0);
    }
}
