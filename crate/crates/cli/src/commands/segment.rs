use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vasq_core::cascade::{run_cascade, CardinalSeeds, ClassicalParams, StageSummary, TransmissionKernel};
use vasq_core::enhance::{frangi_vesselness, VesselnessParams};
use vasq_core::io::{read_volume, write_mask, write_volume, ElementType};
use vasq_core::volume::{window_hu, ProbabilityMap, Volume, VoxelGrid, HU_WINDOW};

use crate::error::{CliError, CliResult};
use crate::manifest::{beside, Manifest};
use crate::util::{create_dir, read_json, read_toml, require_file, write_json};
use crate::{Backend, SegmentArgs};

/// Contents of the `--config` TOML file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// HU window mapped to [0, 1].
    pub window: [f32; 2],
    /// Probability at or above which a voxel is labelled.
    pub threshold: f32,
    pub vesselness: VesselnessParams,
    pub cascade: ClassicalParams,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            window: [HU_WINDOW.0, HU_WINDOW.1],
            threshold: 0.5,
            vesselness: VesselnessParams::default(),
            cascade: ClassicalParams::default(),
        }
    }
}

fn channel(map: &ProbabilityMap, data: &[f32]) -> VoxelGrid {
    Volume { geom: map.geom, data: data.to_vec() }
}

fn write_maps(map: &ProbabilityMap, a: &Path, v: &Path) -> CliResult<()> {
    write_volume(a, &channel(map, &map.artery), ElementType::Float)?;
    write_volume(v, &channel(map, &map.vein), ElementType::Float)?;
    Ok(())
}

pub fn run(args: SegmentArgs) -> CliResult<()> {
    let Backend::Classical = args.backend;
    require_file(&args.input)?;
    let mut config: SegmentConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => SegmentConfig::default(),
    };
    if let Some(p) = &args.seeds {
        config.cascade.seeds = Some(read_json::<CardinalSeeds>(p)?);
    }
    if config.cascade.seeds.is_none() {
        return Err(CliError::invalid("cardinal seeds are required: pass --seeds or set [cascade.seeds]"));
    }
    config.cascade.validate()?;
    config.vesselness.validate()?;
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(CliError::invalid("threshold must lie in [0, 1]"));
    }
    if let Some(p) = &args.vesselness {
        require_file(p)?;
    }
    let (out_a, out_v) = (&args.out[0], &args.out[1]);

    let ct = window_hu(&read_volume(&args.input)?, config.window[0], config.window[1])?;
    let (vesselness, c_used) = match &args.vesselness {
        Some(p) => {
            let v = read_volume(p)?;
            ct.geom.ensure_same(&v.geom)?;
            (v, None)
        }
        None => {
            let v = frangi_vesselness(&ct, &config.vesselness)?;
            (v.response, Some(v.c))
        }
    };
    let segmenters = config.cascade.segmenters()?;
    let kernel = TransmissionKernel::new(config.cascade.kernel_sigma)?;
    let result = run_cascade(&ct, &vesselness, segmenters.each_ref().map(|s| s as _), &kernel)?;

    let mut outputs: Vec<PathBuf> = vec![out_a.clone(), out_v.clone()];
    write_maps(result.final_map(), out_a, out_v)?;
    if let Some(p) = &args.labels {
        write_mask(p, &result.final_map().to_labels(config.threshold))?;
        outputs.push(p.clone());
    }
    let summaries: Vec<StageSummary> = result.stages.iter().map(|s| s.summary()).collect();
    if let Some(dir) = &args.audit {
        create_dir(dir)?;
        for s in &result.stages {
            let (a, v) =
                (dir.join(format!("stage{}_prob_a.mhd", s.stage)), dir.join(format!("stage{}_prob_v.mhd", s.stage)));
            write_maps(&s.output.probabilities, &a, &v)?;
            outputs.extend([a, v]);
            if let Some(acc) = &s.output.accepted {
                let p = dir.join(format!("stage{}_accepted.mhd", s.stage));
                write_mask(&p, acc)?;
                outputs.push(p);
            }
        }
        let p = dir.join("stages.json");
        write_json(&p, &summaries)?;
        outputs.push(p);
    }

    #[derive(Serialize)]
    struct Run<'a> {
        backend: &'static str,
        config: &'a SegmentConfig,
        c_used: Option<f64>,
    }
    let mut m = Manifest::new("segment", Run { backend: "classical", config: &config, c_used })?.conventions([
        "channels: windowed CT, vesselness, transmitted artery prior, transmitted vein prior; stage 0 priors are zero".into(),
        "transmission: separable Gaussian, clamp-to-edge, output clamped to [0, 1]".into(),
        "stage region: intensity band around the median CT of the 3x3x3 seed neighbourhoods, gated by the transmitted priors".into(),
        "class split: breadth-first search from the cardinal seeds; later stages give unreached components the class with the larger prior mass".into(),
        format!("labels: a class where its probability is at least {}; where both pass the larger wins, ties to artery", config.threshold),
    ]);
    for s in &summaries {
        for f in &s.flags {
            m.flags.push(format!("stage {}: {f}", s.stage));
        }
    }
    m.input(&args.input)?;
    for p in [&args.config, &args.seeds, &args.vesselness].into_iter().flatten() {
        m.input(p)?;
    }
    for p in &outputs {
        m.output(p)?;
    }
    m.write(&beside(out_a))
}
