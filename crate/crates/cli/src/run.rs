use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use dfm::cases::{load_case, load_case_file, CaseFile, Field, LoadedCase, MeshInput};
use dfm::flow::{check_conservation, solve_flow, FlowError, FlowSolution};
use dfm::metrics::{
    boundary_flux_report, cost_report, dol_csv, dot_csv, fmt_f64, integrate_concentration,
    outlet_concentration_flux, sample_over_line, select_cells, series_curve, CostReport,
    FluxReport,
};
use dfm::transport::{assemble_transport, run_transport, Observer, TransportRun};

use crate::failure::{Failure, Stage};
use crate::RunArgs;

pub const MANIFEST_SCHEMA: &str = "dfmbench/1";

#[derive(Serialize, Default)]
struct Timings {
    load: f64,
    flow: f64,
    transport: f64,
    metrics: f64,
    write: f64,
}

fn load(args: &RunArgs) -> Result<LoadedCase<f64>, Failure> {
    let mesh = match (&args.mesh, &args.tagmap) {
        (Some(m), Some(t)) => Some(MeshInput::read(m, t).input("mesh")?),
        _ => None,
    };
    match (&args.case_file, &args.case) {
        (Some(path), id) => {
            let text = fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
                .input("case file")?;
            let file = CaseFile::from_json(&text).input("case file")?;
            if let Some(id) = id.as_ref().filter(|id| **id != file.id) {
                return Err(Failure::input(
                    "case file",
                    anyhow::anyhow!("--case {id} does not match the case file id {}", file.id),
                ));
            }
            load_case_file(file, args.refinement, mesh.as_ref()).input("case")
        }
        (None, Some(id)) => load_case(id, args.refinement, mesh.as_ref()).input("case"),
        (None, None) => Err(Failure::input(
            "arguments",
            anyhow::anyhow!("either --case or --case-file is required"),
        )),
    }
}

fn flow_failure(e: FlowError) -> Failure {
    match e {
        FlowError::Solver(_) => Failure::solver("flow", e),
        _ => Failure::input("flow", e),
    }
}

/// Per-cell table of one field over every dimension.
fn cell_csv(case: &LoadedCase<f64>, name: &str, field: impl Fn(usize, usize) -> f64) -> String {
    let mut s = format!("dim,cell,x,y,z,{name}\n");
    for d in (0..4).rev() {
        for (c, cell) in case.grid.subdomains[d].cells.iter().enumerate() {
            let [x, y, z] = cell.center.to_f64();
            let _ = writeln!(
                s,
                "{d},{c},{},{},{},{}",
                fmt_f64(x),
                fmt_f64(y),
                fmt_f64(z),
                fmt_f64(field(d, c))
            );
        }
    }
    s
}

struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: String, text: String) {
        self.files.push((name, text));
    }

    fn write(&self, dir: &Path) -> Result<Vec<String>, Failure> {
        fs::create_dir_all(dir)
            .map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))
            .input("output")?;
        for (name, text) in &self.files {
            let path = dir.join(name);
            fs::write(&path, text)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
                .input("output")?;
        }
        Ok(self.files.iter().map(|(n, _)| n.clone()).collect())
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    if !(args.tol > 0.0 && args.tol < 1.0) {
        return Err(Failure::input(
            "arguments",
            anyhow::anyhow!("--tol must lie in (0, 1), got {}", args.tol),
        ));
    }
    let mut t = Timings::default();
    let clock = Instant::now();
    let case = load(args)?;
    for w in &case.warnings {
        eprintln!("warning: {w}");
    }
    t.load = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let flow = solve_flow(&case.grid, &case.flow, args.tol).map_err(flow_failure)?;
    let conservation = check_conservation(&case.grid, &case.flow, &flow);
    t.flow = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let g = &case.grid;
    let tp = &case.transport;
    let mut observers = Vec::new();
    for p in &case.probes.regions {
        let cells = select_cells(g, p).input("probes")?;
        let mode = p.mode;
        observers.push(Observer::new(p.name.clone(), move |s| {
            integrate_concentration(g, tp, s, &cells, mode)
        }));
    }
    let flow_ref = &flow;
    for o in &case.probes.outlets {
        let patch = g.patch_index(&o.patch).expect("patches resolved at load");
        observers.push(Observer::new(o.name.clone(), move |s| {
            outlet_concentration_flux(g, flow_ref, tp, s, patch)
        }));
    }
    let run = run_transport(g, &flow, tp, &observers, args.tol).solver("transport")?;
    let transport_nnz = assemble_transport(g, &flow, tp, args.tol)
        .solver("transport")?
        .matrix
        .nnz();
    t.transport = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut out = Artifacts { files: Vec::new() };
    for p in &case.probes.lines {
        let values = match p.field {
            Field::Head => &flow.heads[p.dim],
            Field::Concentration => run.final_state.cells(p.dim),
        };
        let sample = sample_over_line(g, values, p).input("probes")?;
        if sample.missed > 0 {
            eprintln!(
                "warning: probe '{}': {} sample points lie outside the grid",
                p.name, sample.missed
            );
        }
        out.add(format!("dol_{}.csv", p.name), dol_csv(&sample));
    }
    for s in &run.series {
        out.add(
            format!("dot_{}.csv", s.name),
            dot_csv(&series_curve(s).solver("metrics")?),
        );
    }
    let fluxes = boundary_flux_report(g, &flow);
    let ratio = case
        .probes
        .flux_ratio
        .as_ref()
        .map(|r| (r.name.clone(), fluxes.ratio(&r.numerator, &r.outlets)));
    let cost = cost_report(g, flow.nnz, transport_nnz);
    t.metrics = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    out.add(
        "heads.csv".into(),
        cell_csv(&case, "head", |d, c| flow.heads[d][c]),
    );
    out.add(
        "concentration.csv".into(),
        cell_csv(&case, "concentration", |d, c| run.final_state.cells(d)[c]),
    );
    out.add("fluxes.json".into(), pretty(&flux_json(&fluxes, ratio)));
    out.add("cost.json".into(), pretty(&cost));
    let files = out.write(&args.out)?;
    t.write = clock.elapsed().as_secs_f64();

    let manifest = manifest(
        args,
        &case,
        &flow,
        &conservation.max_relative(),
        &run,
        &cost,
        &t,
        files,
    );
    let path = args.out.join("manifest.json");
    fs::write(&path, pretty(&manifest))
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
        .input("output")?;
    eprintln!(
        "case {} refinement {}: {} dofs, flow {:.2}s, transport {:.2}s, wrote {}",
        case.file.id,
        case.refinement,
        cost.dofs,
        t.flow,
        t.transport,
        args.out.display()
    );
    Ok(())
}

fn flux_json(f: &FluxReport, ratio: Option<(String, Option<f64>)>) -> Value {
    let mut v = json!({ "patches": f.patches, "inflow": f.inflow, "outflow": f.outflow });
    if let Some((name, r)) = ratio {
        v[name] = json!(r);
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn manifest(
    args: &RunArgs,
    case: &LoadedCase<f64>,
    flow: &FlowSolution<f64>,
    conservation: &[f64; 4],
    run: &TransportRun<f64>,
    cost: &CostReport,
    timings: &Timings,
    files: Vec<String>,
) -> Value {
    let path = |p: &Option<std::path::PathBuf>| p.as_ref().map(|p| p.display().to_string());
    json!({
        "schema": MANIFEST_SCHEMA,
        "case": case.file.id,
        "title": case.file.title,
        "refinement": case.refinement,
        "case_file": path(&args.case_file),
        "mesh": path(&args.mesh),
        "tagmap": path(&args.tagmap),
        "tolerances": { "solver": args.tol },
        "timings_s": timings,
        "cost": cost,
        "target_3d_cells": case.target_cells,
        "flow": {
            "iterations": flow.report.iterations,
            "relative_residual": flow.report.residual,
            "max_relative_cell_residual": conservation.iter().fold(0.0f64, |a, &b| a.max(b)),
            "inflow": flow.boundary_inflow(),
            "outflow": flow.boundary_outflow(),
        },
        "transport": {
            "steps": case.transport.steps,
            "dt": case.transport.dt,
            "max_budget_error": run.max_budget_error,
            "min_concentration": run.min_concentration,
            "max_concentration": run.max_concentration,
            "direct_solve": run.direct_solve,
        },
        "warnings": case.warnings,
        "files": files,
    })
}
