use std::path::Path;

use serde::Serialize;
use vasq_core::cascade::CardinalSeeds;
use vasq_core::io::{write_mask, ElementType};
use vasq_core::phantom::{build_phantom, ctpa_to_ncct, generate_cohort, CohortModel, PhantomSpec};
use vasq_core::volume::VesselClass;

use crate::error::{CliError, CliResult};
use crate::manifest::{beside, inside, Manifest};
use crate::util::{create_dir, read_json, read_toml, write_json};
use crate::{CohortArgs, PhantomArgs, PhantomSub};

#[derive(Serialize)]
struct PhantomRun<'a> {
    spec: &'a PhantomSpec,
    ncct: bool,
}

/// Files of a phantom case directory, in write order.
pub const CASE_FILES: [&str; 10] = [
    "image.mhd",
    "truth.mhd",
    "levels.mhd",
    "levels_a.mhd",
    "levels_v.mhd",
    "lung.mhd",
    "heart.mhd",
    "clutter.mhd",
    "analytic.json",
    "seeds.json",
];

pub fn run(args: PhantomArgs) -> CliResult<()> {
    if let Some(PhantomSub::Cohort(c)) = args.sub {
        return cohort(c);
    }
    let out = args.out.ok_or_else(|| CliError::invalid("--out is required"))?;
    let mut spec: PhantomSpec = match &args.config {
        Some(p) => read_toml(p)?,
        None => PhantomSpec::default(),
    };
    if let Some(g) = args.generations {
        spec.depth = g;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(s) = args.spacing {
        spec.spacing = s;
    }
    if let Some(j) = args.jitter {
        spec.jitter = j;
    }
    if let Some(c) = args.clutter {
        spec.clutter.count = c;
    }
    spec.validate()?;

    let mut case = build_phantom(&spec)?;
    if args.ncct {
        case = ctpa_to_ncct(&case);
    }
    create_dir(&out)?;
    let path = |name: &str| out.join(name);
    vasq_core::io::write_volume(path("image.mhd"), &case.image, ElementType::Short)?;
    write_mask(path("truth.mhd"), &case.truth)?;
    write_mask(path("levels.mhd"), &case.level_codes())?;
    write_mask(path("levels_a.mhd"), &case.levels_a.to_codes())?;
    write_mask(path("levels_v.mhd"), &case.levels_v.to_codes())?;
    write_mask(path("lung.mhd"), &case.lung.to_labels(1))?;
    write_mask(path("heart.mhd"), &case.heart.to_labels(1))?;
    write_mask(path("clutter.mhd"), &case.clutter.to_labels(1))?;
    write_json(&path("analytic.json"), &case.analytic)?;
    let seeds =
        CardinalSeeds { artery: case.root_voxel(VesselClass::Artery), vein: case.root_voxel(VesselClass::Vein) };
    write_json(&path("seeds.json"), &seeds)?;

    let mut m = Manifest::new("phantom", PhantomRun { spec: &spec, ncct: args.ncct })?
        .seed("phantom", spec.seed)
        .conventions(case.analytic.conventions.clone())
        .conventions(["levels.mhd holds 0 for background and 1 + level for vessel voxels of either class".into()]);
    if let Some(c) = &args.config {
        m.input(c)?;
    }
    for name in CASE_FILES {
        m.output(Path::new(&path(name)))?;
    }
    m.write(&inside(&out))
}

fn cohort(args: CohortArgs) -> CliResult<()> {
    let mut model: CohortModel = match &args.betas {
        Some(p) => read_json(p)?,
        None => CohortModel::default(),
    };
    if let Some(s) = args.seed {
        model.seed = s;
    }
    let records = generate_cohort(args.n, &model)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", args.out.display())))?;
    for r in &records {
        w.serialize(r).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)?;
    drop(w);

    let mut m = Manifest::new("phantom cohort", serde_json::json!({ "n": args.n, "model": model }))?
        .seed("cohort", model.seed)
        .conventions(["sex coded male = 1, female = 0; lung volume in liters; slpa/slpv in cm".into()]);
    if let Some(b) = &args.betas {
        m.input(b)?;
    }
    m.output(&args.out)?;
    m.write(&beside(&args.out))
}
