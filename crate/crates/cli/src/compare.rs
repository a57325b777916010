use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use dfm::metrics::{parse_curve_csv, percentile_spread, spread_csv, Curve, CurveKind};

use crate::failure::{Failure, Stage};
use crate::run::MANIFEST_SCHEMA;
use crate::CompareArgs;

fn read_curve(path: &Path) -> Result<(CurveKind, Curve), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
        .input("compare")?;
    parse_curve_csv(&path.display().to_string(), &text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
        .input("compare")
}

fn curve_files(dir: &Path) -> Result<BTreeSet<String>, Failure> {
    let entries = fs::read_dir(dir)
        .map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))
        .input("compare")?;
    let mut names = BTreeSet::new();
    for e in entries {
        let name = e
            .map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))
            .input("compare")?
            .file_name();
        let name = name.to_string_lossy();
        if (name.starts_with("dol_") || name.starts_with("dot_")) && name.ends_with(".csv") {
            names.insert(name.into_owned());
        }
    }
    Ok(names)
}

/// Groups of files to compare, keyed by output stem.
fn groups(inputs: &[PathBuf]) -> Result<Vec<(String, Vec<PathBuf>)>, Failure> {
    let dirs = inputs.iter().filter(|p| p.is_dir()).count();
    if dirs == inputs.len() {
        let mut common: Option<BTreeSet<String>> = None;
        for d in inputs {
            let names = curve_files(d)?;
            common = Some(match common {
                None => names,
                Some(c) => c.intersection(&names).cloned().collect(),
            });
        }
        let common = common.unwrap_or_default();
        if common.is_empty() {
            return Err(Failure::input(
                "compare",
                anyhow::anyhow!("the directories share no dol_/dot_ files"),
            ));
        }
        Ok(common
            .into_iter()
            .map(|name| {
                let stem = name.trim_end_matches(".csv").to_string();
                (stem, inputs.iter().map(|d| d.join(&name)).collect())
            })
            .collect())
    } else if dirs == 0 {
        Ok(vec![("curves".to_string(), inputs.to_vec())])
    } else {
        Err(Failure::input(
            "compare",
            anyhow::anyhow!("inputs must be all directories or all files"),
        ))
    }
}

pub fn compare(args: &CompareArgs) -> Result<(), Failure> {
    let mut summary = Map::new();
    let mut outputs = Vec::new();
    for (stem, paths) in groups(&args.inputs)? {
        let mut kind = None;
        let mut curves = Vec::new();
        for p in &paths {
            let (k, c) = read_curve(p)?;
            if kind.is_some_and(|prev| prev != k) {
                return Err(Failure::input(
                    "compare",
                    anyhow::anyhow!("{stem}: line and time curves cannot be mixed"),
                ));
            }
            kind = Some(k);
            curves.push(c);
        }
        let kind = kind.expect("at least two inputs");
        let report = percentile_spread(&curves)
            .map_err(|e| anyhow::anyhow!("{stem}: {e}"))
            .input("compare")?;
        outputs.push((format!("spread_{stem}.csv"), spread_csv(&report, kind)));
        summary.insert(
            stem,
            json!({
                "kind": kind,
                "inputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "spread_area": report.spread_area,
                "mean_area": report.mean_area,
                "ratio": report.ratio,
            }),
        );
    }
    let out = &args.out;
    fs::create_dir_all(out)
        .map_err(|e| anyhow::anyhow!("{}: {e}", out.display()))
        .input("output")?;
    for (name, text) in &outputs {
        let path = out.join(name);
        fs::write(&path, text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
            .input("output")?;
    }
    let doc = json!({ "schema": MANIFEST_SCHEMA, "spreads": Value::Object(summary) });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    let path = out.join("spread.json");
    fs::write(&path, text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
        .input("output")?;
    for (stem, v) in doc["spreads"].as_object().expect("object") {
        println!("{stem}: ratio {}", v["ratio"]);
    }
    Ok(())
}
