use serde::Serialize;
use vasq_core::enhance::{add_poisson_noise, frangi_vesselness, NoiseParams, VesselnessParams};
use vasq_core::io::{read_volume, ElementType};
use vasq_core::volume::{normalize_to_standard_space, window_hu, HU_WINDOW, STANDARD_DIMS, STANDARD_SPACING};

use crate::error::{CliError, CliResult};
use crate::manifest::{beside, Manifest};
use crate::util::{require_file, write_grid, OutType};
use crate::{EnhanceArgs, NoiseArgs, NormalizeArgs};

pub fn normalize(args: NormalizeArgs) -> CliResult<()> {
    require_file(&args.input)?;
    let grid = read_volume(&args.input)?;
    let std = normalize_to_standard_space(&grid, args.air)?;
    write_grid(&args.out, &std.grid, args.ty)?;

    #[derive(Serialize)]
    struct Config {
        air: f32,
        element_type: OutType,
        dims: [usize; 3],
        spacing: [f64; 3],
    }
    let config = Config { air: args.air, element_type: args.ty, dims: STANDARD_DIMS, spacing: STANDARD_SPACING };
    let mut m = Manifest::new("normalize", config)?.conventions([
        "centered on the input volume; trilinear interpolation; voxels outside the input take the air value".into(),
        format!("mapping: {:?}", std.mapping).to_lowercase(),
    ]);
    for (a, &c) in std.cropped_axes.iter().enumerate() {
        if c {
            m.flags.push(format!("axis {a} extent exceeds the standard box and was cropped"));
        }
    }
    m.input(&args.input)?;
    m.output(&args.out)?;
    m.write(&beside(&args.out))
}

pub fn enhance(args: EnhanceArgs) -> CliResult<()> {
    require_file(&args.input)?;
    let defaults = VesselnessParams::default();
    let c = match args.c.trim() {
        "auto" => None,
        s => Some(
            s.parse::<f64>().map_err(|_| CliError::invalid(format!("--c must be `auto` or a number, got `{s}`")))?,
        ),
    };
    let params = VesselnessParams {
        scales: args.scales.unwrap_or(defaults.scales),
        alpha: args.alpha.unwrap_or(defaults.alpha),
        beta: args.beta.unwrap_or(defaults.beta),
        c,
    };
    params.validate()?;
    let window = if args.no_window { None } else { Some(args.window.unwrap_or([HU_WINDOW.0, HU_WINDOW.1])) };
    let grid = read_volume(&args.input)?;
    let grid = match window {
        Some([lo, hi]) => window_hu(&grid, lo, hi)?,
        None => grid,
    };
    let v = frangi_vesselness(&grid, &params)?;
    vasq_core::io::write_volume(&args.out, &v.response, ElementType::Float)?;

    #[derive(Serialize)]
    struct Config {
        vesselness: VesselnessParams,
        window: Option<[f32; 2]>,
        c_used: f64,
    }
    let mut m = Manifest::new("enhance", Config { vesselness: params, window, c_used: v.c })?.conventions([
        "bright-vessel Frangi response, maximum over scales, in [0, 1]".into(),
        "c = auto takes half the largest Hessian Frobenius norm over all scales".into(),
    ]);
    m.input(&args.input)?;
    m.output(&args.out)?;
    m.write(&beside(&args.out))
}

pub fn noise(args: NoiseArgs) -> CliResult<()> {
    require_file(&args.input)?;
    let params = NoiseParams { n0: args.n0, seed: args.seed };
    let grid = read_volume(&args.input)?;
    let noisy = add_poisson_noise(&grid, &params)?;
    write_grid(&args.out, &noisy, args.ty)?;

    #[derive(Serialize)]
    struct Config {
        noise: NoiseParams,
        element_type: OutType,
        mu_water_per_mm: f64,
        path_length_mm: f64,
    }
    let config = Config {
        noise: params,
        element_type: args.ty,
        mu_water_per_mm: vasq_core::enhance::MU_WATER_PER_MM,
        path_length_mm: vasq_core::enhance::PATH_LENGTH_MM,
    };
    let mut m = Manifest::new("noise", config)?
        .seed("noise", args.seed)
        .conventions(["one Poisson ray per voxel through a uniform medium of that voxel's attenuation".into()]);
    m.input(&args.input)?;
    m.output(&args.out)?;
    m.write(&beside(&args.out))
}
