use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vasq_core::io::{read_mask, read_volume};
use vasq_core::metrics::{conventions, evaluate, EvalOptions, MetricsReport};
use vasq_core::skeleton::BranchLevels;
use vasq_core::volume::{LabelMask, ProbabilityMap, VesselClass, Volume};

use crate::error::{CliError, CliResult};
use crate::manifest::{beside, Manifest};
use crate::util::{require_dir, require_file, write_json};
use crate::EvaluateArgs;

struct CasePaths {
    pred: PathBuf,
    truth: PathBuf,
    levels: PathBuf,
    prob: Option<[PathBuf; 2]>,
}

impl CasePaths {
    fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.pred.as_path(), &self.truth, &self.levels];
        if let Some([a, b]) = &self.prob {
            v.extend([a.as_path(), b.as_path()]);
        }
        v
    }
}

/// Level codes restricted to one truth class.
fn class_levels(codes: &LabelMask, truth: &LabelMask, class: VesselClass) -> CliResult<BranchLevels> {
    let masked = Volume {
        geom: codes.geom,
        data: codes.data.iter().zip(&truth.data).map(|(&c, &t)| if t == class.code() { c } else { 0 }).collect(),
    };
    Ok(BranchLevels::from_codes(&masked)?)
}

fn evaluate_case(paths: &CasePaths, opts: EvalOptions) -> CliResult<MetricsReport> {
    for p in paths.all() {
        require_file(p)?;
    }
    let pred = read_mask(&paths.pred)?;
    let truth = read_mask(&paths.truth)?;
    pred.geom.ensure_same(&truth.geom)?;
    let codes = read_mask(&paths.levels)?;
    truth.geom.ensure_same(&codes.geom)?;
    if codes.data.iter().zip(&truth.data).any(|(&c, &t)| (c == 0) != (t == 0)) {
        return Err(CliError::invalid("level codes must be non-zero exactly on truth vessel voxels"));
    }
    let la = class_levels(&codes, &truth, VesselClass::Artery)?;
    let lv = class_levels(&codes, &truth, VesselClass::Vein)?;
    let prob = match &paths.prob {
        Some([a, v]) => {
            let (a, v) = (read_volume(a)?, read_volume(v)?);
            truth.geom.ensure_same(&a.geom)?;
            truth.geom.ensure_same(&v.geom)?;
            Some(ProbabilityMap::new(a.geom, a.data, v.data)?)
        }
        None => None,
    };
    Ok(evaluate(&pred, prob.as_ref(), &truth, [&la, &lv], opts)?)
}

#[derive(Serialize)]
struct CaseEntry {
    case: String,
    report: Option<MetricsReport>,
    error: Option<String>,
}

#[derive(Serialize)]
struct BatchReport {
    n_cases: usize,
    n_failed: usize,
    cases: Vec<CaseEntry>,
}

fn case_dirs(root: &Path) -> CliResult<Vec<(String, CasePaths)>> {
    require_dir(root)?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| CliError::runtime(format!("cannot list {}: {e}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::invalid(format!("{} holds no case directories", root.display())));
    }
    Ok(dirs
        .into_iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let (a, v) = (d.join("prob_a.mhd"), d.join("prob_v.mhd"));
            let prob = (a.is_file() && v.is_file()).then_some([a, v]);
            (
                name,
                CasePaths { pred: d.join("pred.mhd"), truth: d.join("truth.mhd"), levels: d.join("levels.mhd"), prob },
            )
        })
        .collect())
}

pub fn run(args: EvaluateArgs) -> CliResult<()> {
    let opts = EvalOptions { abundance: !args.no_abundance };
    let config = serde_json::json!({ "options": opts, "batch": args.cases.is_some() });
    let mut m = Manifest::new("evaluate", config)?.conventions(conventions());

    let Some(root) = &args.cases else {
        let prob = args.prob.as_ref().map(|v| [v[0].clone(), v[1].clone()]);
        let paths = CasePaths {
            pred: args.pred.clone().ok_or_else(|| CliError::invalid("--pred is required"))?,
            truth: args.truth.clone().ok_or_else(|| CliError::invalid("--truth is required"))?,
            levels: args.levels.clone().ok_or_else(|| CliError::invalid("--levels is required"))?,
            prob,
        };
        let report = evaluate_case(&paths, opts)?;
        write_json(&args.report, &report)?;
        m.flags.extend(report.flags.iter().cloned());
        for p in paths.all() {
            m.input(p)?;
        }
        m.output(&args.report)?;
        return m.write(&beside(&args.report));
    };

    let cases = case_dirs(root)?;
    let results: Vec<CliResult<MetricsReport>> = cases.par_iter().map(|(_, p)| evaluate_case(p, opts)).collect();
    let mut worst: Option<CliError> = None;
    let mut entries = Vec::with_capacity(cases.len());
    for ((name, paths), r) in cases.iter().zip(results) {
        match r {
            Ok(report) => {
                for p in paths.all() {
                    m.input(p)?;
                }
                entries.push(CaseEntry { case: name.clone(), report: Some(report), error: None });
            }
            Err(e) => {
                m.flags.push(format!("case {name} failed: {e}"));
                entries.push(CaseEntry { case: name.clone(), report: None, error: Some(e.to_string()) });
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    let n_failed = entries.iter().filter(|e| e.error.is_some()).count();
    write_json(&args.report, &BatchReport { n_cases: entries.len(), n_failed, cases: entries })?;
    m.output(&args.report)?;
    m.write(&beside(&args.report))?;
    match worst {
        None => Ok(()),
        Some(e) => {
            let msg = format!("{n_failed} of {} cases failed; first worst: {e}", cases.len());
            Err(match e {
                CliError::Validation(_) => CliError::Validation(msg),
                CliError::Runtime(_) => CliError::Runtime(msg),
            })
        }
    }
}
