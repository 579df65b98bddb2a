use std::path::PathBuf;

use clap::Args;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::output::{to_json_text, InputDigest, Provenance};
use super::{merge_config, require_file, thread_pool, CliError, CliResult, Phase};
use crate::io::{load_intrinsics, write_atomic};
use crate::synth::{
    default_intrinsics, generate_benchmark, generate_scene_benchmark, BenchmarkConfig, DiameterSpec, NoiseSpec,
    SceneBenchmarkConfig, SensorPreset, ShapeMix, SurfaceRegion, DEFAULT_SCENE_DISTANCE_MM,
};

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; every fruit derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// clouds (surface samples) or scenes (rendered depth + mask).
    #[arg(long)]
    pub mode: Option<String>,
    /// Number of fruit.
    #[arg(long)]
    pub fruit: Option<usize>,
    #[arg(long)]
    pub dmin: Option<f64>,
    #[arg(long)]
    pub dmax: Option<f64>,
    /// Explicit diameters, cycled over the fruit (overrides --dmin/--dmax).
    #[arg(long, value_delimiter = ',')]
    pub diameters: Vec<f64>,
    /// azure-like or realsense-like depth noise.
    #[arg(long)]
    pub preset: Option<String>,
    /// Gaussian noise sigma in mm (overrides --preset).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub outlier_box: Option<f64>,
    /// Points per cloud.
    #[arg(long)]
    pub points: Option<usize>,
    /// Camera-facing fraction of each surface to sample; whole surface if absent.
    #[arg(long)]
    pub visible_fraction: Option<f64>,
    #[arg(long)]
    pub ellipsoid_fraction: Option<f64>,
    #[arg(long)]
    pub max_axis_ratio: Option<f64>,
    /// Scene mode: fruit distance from the camera in mm.
    #[arg(long)]
    pub distance_mm: Option<f64>,
    /// Scene mode: intrinsics JSON (default 640x480, f = 600 px).
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
}

pub const DEFAULT_FRUIT: usize = 10;
pub const DEFAULT_POINTS: usize = 2000;

pub fn run(flags: SynthArgs) -> CliResult<()> {
    let a = merge_config(&flags, flags.config.as_deref())?;
    let out = a
        .out
        .clone()
        .ok_or_else(|| CliError::validation("--out: output directory is required"))?;
    let seed = a.seed.unwrap_or(0);
    let diameters = if a.diameters.is_empty() {
        DiameterSpec::Uniform {
            lo: a.dmin.unwrap_or(20.0),
            hi: a.dmax.unwrap_or(75.0),
        }
    } else {
        DiameterSpec::Fixed(a.diameters.clone())
    };
    let preset = a
        .preset
        .as_deref()
        .map(|p| {
            p.parse::<SensorPreset>()
                .map_err(|_| CliError::validation(format!("--preset: unknown preset '{p}'")))
        })
        .transpose()?;
    let sigma = a.sigma.or(preset.map(|p| p.sigma_mm())).unwrap_or(0.0);
    let noise = NoiseSpec {
        gaussian_sigma: sigma,
        outlier_fraction: a.outlier_fraction.unwrap_or(0.0),
        outlier_box_halfwidth: a.outlier_box.unwrap_or(50.0),
        rng_seed: seed,
    };
    let mix = ShapeMix {
        ellipsoid_fraction: a
            .ellipsoid_fraction
            .unwrap_or(ShapeMix::<f64>::default().ellipsoid_fraction),
        max_axis_ratio: a.max_axis_ratio.unwrap_or(ShapeMix::<f64>::default().max_axis_ratio),
    };
    if !(0.0..=1.0).contains(&mix.ellipsoid_fraction) || !(mix.max_axis_ratio >= 1.0) {
        return Err(CliError::validation(
            "--ellipsoid-fraction must lie in [0, 1] and --max-axis-ratio be >= 1",
        ));
    }
    let n_fruit = a.fruit.unwrap_or(DEFAULT_FRUIT);
    let pool = thread_pool(a.jobs)?;
    let mut inputs = Vec::new();

    let mode = a.mode.as_deref().unwrap_or("clouds");
    let manifest = match mode {
        "clouds" => {
            let region = match a.visible_fraction {
                None => SurfaceRegion::Full,
                Some(f) => SurfaceRegion::facing(Vector3::z(), f),
            };
            let cfg = BenchmarkConfig {
                n_fruit,
                diameters,
                shape_mix: mix,
                noise,
                points_per_fruit: a.points.unwrap_or(DEFAULT_POINTS),
                region,
            };
            cfg.validate().validation()?;
            pool.install(|| generate_benchmark(&cfg, &out)).runtime()?
        }
        "scenes" => {
            let intrinsics = match &a.intrinsics {
                Some(p) => {
                    require_file("--intrinsics", p)?;
                    inputs.push(InputDigest::of(p)?);
                    load_intrinsics(p).validation()?
                }
                None => default_intrinsics(),
            };
            let distance = a.distance_mm.unwrap_or(DEFAULT_SCENE_DISTANCE_MM);
            let cfg = SceneBenchmarkConfig::at_distance(n_fruit, diameters, mix, noise, intrinsics, distance);
            validate_scene(&cfg)?;
            pool.install(|| generate_scene_benchmark(&cfg, &out)).runtime()?
        }
        other => return Err(CliError::validation(format!("--mode: unknown mode '{other}'"))),
    };

    let mut params = serde_json::to_value(&a).map_err(CliError::runtime)?;
    if let Some(m) = params.as_object_mut() {
        m.remove("out");
        m.remove("jobs");
    }
    let prov = Provenance::new("synth", Some(seed), &params, inputs);
    let doc = json!({ "provenance": prov, "n_fruit": manifest.entries.len() });
    write_atomic(&out.join("synth.json"), to_json_text(&doc).as_bytes()).runtime()
}

fn validate_scene(cfg: &SceneBenchmarkConfig<f64>) -> CliResult<()> {
    cfg.noise.validate().validation()?;
    if !(cfg.distance_mm > 0.0 && cfg.distance_mm.is_finite()) {
        return Err(CliError::validation("--distance-mm must be positive"));
    }
    let largest = match &cfg.diameters {
        DiameterSpec::Uniform { lo, hi } => {
            if !(*lo > 0.0 && lo < hi) {
                return Err(CliError::validation("--dmin/--dmax must satisfy 0 < dmin < dmax"));
            }
            *hi
        }
        DiameterSpec::Fixed(d) => d.iter().cloned().fold(0.0, f64::max),
    };
    if largest / 2.0 >= cfg.distance_mm - cfg.depth_jitter_mm {
        return Err(CliError::validation("--distance-mm too small for the largest fruit"));
    }
    Ok(())
}
