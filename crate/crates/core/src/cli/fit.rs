use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::output::{emit, field, sig, sig_json, InputDigest, Provenance};
use super::{merge_config, require_file, resolve, thread_pool, CliError, CliResult, Phase};
use crate::io::{load_depth_png, load_intrinsics, load_mask_png, load_point_cloud, CloudFileFormat};
use crate::pipeline::{extract_cloud, fit_cloud, ExtractParams, FitOptions};
use crate::synth::{mask_path_for, Manifest};
use crate::types::{FitMethod, FitReport, PointCloud};

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Output path; `.json` and `.csv` reports are written side by side.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RANSAC sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// lsq-sphere, ransac-sphere, ellipsoid or all.
    #[arg(long)]
    pub method: Option<String>,
    /// Point cloud file (.csv or .ply); repeatable.
    #[arg(long)]
    pub cloud: Vec<PathBuf>,
    /// Benchmark manifest; every listed cloud or depth scene is fitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// 16-bit depth PNG in millimetres.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Instance mask PNG (nonzero = fruit).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Pinhole intrinsics JSON.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Mask erosion radius in pixels before back-projection [1].
    #[arg(long)]
    pub erode_px: Option<usize>,
    /// Depth gate in mm.
    #[arg(long)]
    pub min_depth: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<f64>,
    /// Fewest points a fit accepts (>= 4) [10].
    #[arg(long)]
    pub min_points: Option<usize>,
    /// RANSAC inlier distance to the surface in mm [1].
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
    /// RANSAC success probability for the adaptive iteration count [0.99].
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub ransac_max_iterations: Option<usize>,
    /// MVEE optimality-gap bound [1e-6].
    #[arg(long)]
    pub mvee_tolerance: Option<f64>,
    #[arg(long)]
    pub mvee_max_iterations: Option<usize>,
    #[arg(long)]
    pub lsq_max_iterations: Option<usize>,
    /// Record failed fits as rows instead of aborting the run.
    #[arg(long)]
    pub keep_going: bool,
}

enum Source {
    Cloud(PathBuf),
    Scene {
        depth: PathBuf,
        mask: PathBuf,
        intrinsics: PathBuf,
    },
}

struct Object {
    id: String,
    source: Source,
}

struct Row {
    id: String,
    method: FitMethod,
    n_points: usize,
    input_sha256: String,
    outcome: Result<FitReport<f64>, String>,
}

fn methods(spec: Option<&str>) -> CliResult<Vec<FitMethod>> {
    match spec.unwrap_or("ellipsoid") {
        "all" => Ok(FitMethod::ALL.to_vec()),
        m => m
            .parse::<FitMethod>()
            .map(|m| vec![m])
            .map_err(|_| CliError::validation(format!("--method: unknown method '{m}'"))),
    }
}

fn options(a: &FitArgs) -> CliResult<(FitOptions<f64>, ExtractParams<f64>)> {
    let mut o = FitOptions::<f64>::default();
    if let Some(n) = a.min_points {
        if n < 4 {
            return Err(CliError::validation("--min-points must be at least 4"));
        }
        o.lsq.min_points = n;
        o.ransac.min_points = n;
        o.mvee.min_points = n;
    }
    if let Some(v) = a.lsq_max_iterations {
        o.lsq.max_iterations = v;
    }
    if let Some(v) = a.inlier_threshold {
        o.ransac.inlier_threshold = v;
    }
    if let Some(v) = a.confidence {
        o.ransac.confidence = v;
    }
    if let Some(v) = a.ransac_max_iterations {
        o.ransac.max_iterations = v;
    }
    o.ransac.rng_seed = a.seed.unwrap_or(0);
    if let Some(v) = a.mvee_tolerance {
        o.mvee.tolerance = v;
    }
    if let Some(v) = a.mvee_max_iterations {
        o.mvee.max_iterations = v;
    }
    o.ransac.validate().validation()?;
    o.mvee.validate().validation()?;
    if o.lsq.max_iterations < 1 {
        return Err(CliError::validation("--lsq-max-iterations must be at least 1"));
    }
    let mut e = ExtractParams::<f64>::default();
    if let Some(v) = a.erode_px {
        e.erode_px = v;
    }
    if let Some(v) = a.min_depth {
        e.min_depth_mm = v;
    }
    if let Some(v) = a.max_depth {
        e.max_depth_mm = v;
    }
    if !(e.min_depth_mm > 0.0 && e.min_depth_mm < e.max_depth_mm) {
        return Err(CliError::validation(
            "--min-depth/--max-depth must satisfy 0 < min < max",
        ));
    }
    Ok((o, e))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn objects(a: &FitArgs) -> CliResult<Vec<Object>> {
    let mut out = Vec::new();
    for c in &a.cloud {
        require_file("--cloud", c)?;
        out.push(Object {
            id: stem(c),
            source: Source::Cloud(c.clone()),
        });
    }
    match (&a.depth, &a.mask) {
        (Some(d), Some(m)) => {
            let i = a
                .intrinsics
                .as_ref()
                .ok_or_else(|| CliError::validation("--depth and --mask need --intrinsics"))?;
            require_file("--depth", d)?;
            require_file("--mask", m)?;
            require_file("--intrinsics", i)?;
            out.push(Object {
                id: stem(d),
                source: Source::Scene {
                    depth: d.clone(),
                    mask: m.clone(),
                    intrinsics: i.clone(),
                },
            });
        }
        (None, None) => {}
        _ => return Err(CliError::validation("--depth and --mask must be given together")),
    }
    if let Some(m) = &a.manifest {
        require_file("--manifest", m)?;
        let manifest = Manifest::<f64>::load(m).validation()?;
        let dir = m.parent().unwrap_or(Path::new("."));
        for e in &manifest.entries {
            let path = resolve(dir, &e.path);
            let is_png = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"));
            let source = if is_png {
                let mask = mask_path_for(&path);
                let intrinsics = a.intrinsics.clone().unwrap_or_else(|| dir.join("intrinsics.json"));
                require_file("manifest depth", &path)?;
                require_file("manifest mask", &mask)?;
                require_file("--intrinsics", &intrinsics)?;
                Source::Scene {
                    depth: path,
                    mask,
                    intrinsics,
                }
            } else {
                require_file("manifest cloud", &path)?;
                Source::Cloud(path)
            };
            out.push(Object {
                id: e.id.to_string(),
                source,
            });
        }
    }
    if out.is_empty() {
        return Err(CliError::validation(
            "no input: give --cloud, --manifest or --depth/--mask/--intrinsics",
        ));
    }
    Ok(out)
}

fn load(obj: &Object, extract: &ExtractParams<f64>) -> CliResult<(PointCloud<f64>, Vec<InputDigest>)> {
    match &obj.source {
        Source::Cloud(p) => {
            let fmt = CloudFileFormat::from_path(p);
            Ok((load_point_cloud(p, fmt).validation()?, vec![InputDigest::of(p)?]))
        }
        Source::Scene {
            depth,
            mask,
            intrinsics,
        } => {
            let d = load_depth_png(depth).validation()?;
            let m = load_mask_png(mask).validation()?;
            let i = load_intrinsics(intrinsics).validation()?;
            let cloud = extract_cloud(&d, &m, &i, extract).validation()?;
            Ok((
                cloud,
                vec![
                    InputDigest::of(depth)?,
                    InputDigest::of(mask)?,
                    InputDigest::of(intrinsics)?,
                ],
            ))
        }
    }
}

pub fn run(flags: FitArgs) -> CliResult<()> {
    let a = merge_config(&flags, flags.config.as_deref())?;
    let methods = methods(a.method.as_deref())?;
    let (opts, extract) = options(&a)?;
    let objs = objects(&a)?;
    let pool = thread_pool(a.jobs)?;

    let loaded: Vec<(PointCloud<f64>, Vec<InputDigest>)> = pool.install(|| {
        objs.par_iter()
            .map(|o| load(o, &extract))
            .collect::<CliResult<Vec<_>>>()
    })?;

    let rows: Vec<Row> = pool.install(|| {
        objs.par_iter()
            .zip(&loaded)
            .flat_map_iter(|(o, (cloud, digests))| {
                methods.iter().map(move |&m| Row {
                    id: o.id.clone(),
                    method: m,
                    n_points: cloud.len(),
                    input_sha256: digests[0].sha256.clone(),
                    outcome: fit_cloud(cloud, m, &opts).map_err(|e| e.to_string()),
                })
            })
            .collect()
    });
    if !a.keep_going {
        if let Some(r) = rows.iter().find(|r| r.outcome.is_err()) {
            let msg = r.outcome.as_ref().err().cloned().unwrap_or_default();
            return Err(CliError::runtime(format!("{} ({}): {msg}", r.id, r.method)));
        }
    }

    let inputs = loaded.iter().flat_map(|(_, d)| d.iter().cloned()).collect();
    let params = json!({
        "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "lsq": { "min_points": opts.lsq.min_points, "step_tolerance": opts.lsq.step_tolerance, "max_iterations": opts.lsq.max_iterations },
        "ransac": {
            "inlier_threshold": opts.ransac.inlier_threshold, "confidence": opts.ransac.confidence,
            "max_iterations": opts.ransac.max_iterations, "min_points": opts.ransac.min_points, "rng_seed": opts.ransac.rng_seed,
        },
        "mvee": { "tolerance": opts.mvee.tolerance, "max_iterations": opts.mvee.max_iterations, "min_points": opts.mvee.min_points },
        "extract": { "erode_px": extract.erode_px, "min_depth_mm": extract.min_depth_mm, "max_depth_mm": extract.max_depth_mm },
    });
    let prov = Provenance::new("fit", Some(opts.ransac.rng_seed), &params, inputs);
    let json = json!({
        "provenance": prov,
        "records": rows.iter().map(|r| record_json(r, opts.ransac.rng_seed)).collect::<Vec<Value>>(),
    });
    emit(a.out.as_deref(), &records_csv(&rows, opts.ransac.rng_seed), &json)
}

pub const FIT_CSV_HEADER: &str = "id,method,diameter_mm,a_mm,b_mm,c_mm,center_x_mm,center_y_mm,center_z_mm,\
rms_residual_mm,inlier_count,inlier_fraction,iterations,status,n_points,seed,input_sha256,error";

fn records_csv(rows: &[Row], seed: u64) -> String {
    let mut s = String::from(FIT_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},", field(&r.id), r.method);
        match &r.outcome {
            Ok(f) => {
                let ax = f.semi_axes();
                let c = f.center();
                let _ = write!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},",
                    sig(f.diameter_mm),
                    sig(ax[0]),
                    sig(ax[1]),
                    sig(ax[2]),
                    sig(c.x),
                    sig(c.y),
                    sig(c.z),
                    sig(f.rms_residual_mm),
                    f.inlier_count.map(|n| n.to_string()).unwrap_or_default(),
                    f.inlier_fraction.map(sig).unwrap_or_default(),
                    f.iterations,
                    f.status.as_str()
                );
            }
            Err(_) => s.push_str(",,,,,,,,,,,failed,"),
        }
        let err = r.outcome.as_ref().err().map(|e| field(e)).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.n_points, seed, r.input_sha256, err);
    }
    s
}

fn record_json(r: &Row, seed: u64) -> Value {
    let mut v = json!({
        "id": r.id,
        "method": r.method.as_str(),
        "n_points": r.n_points,
        "seed": seed,
        "input_sha256": r.input_sha256,
    });
    let m = v.as_object_mut().expect("object");
    match &r.outcome {
        Ok(f) => {
            let c = f.center();
            m.insert("diameter_mm".into(), sig_json(f.diameter_mm));
            m.insert(
                "semi_axes_mm".into(),
                Value::Array(f.semi_axes().iter().map(|&x| sig_json(x)).collect()),
            );
            m.insert(
                "center_mm".into(),
                Value::Array([c.x, c.y, c.z].iter().map(|&x| sig_json(x)).collect()),
            );
            m.insert("rms_residual_mm".into(), sig_json(f.rms_residual_mm));
            m.insert("inlier_count".into(), json!(f.inlier_count));
            m.insert(
                "inlier_fraction".into(),
                f.inlier_fraction.map(sig_json).unwrap_or(Value::Null),
            );
            m.insert("iterations".into(), json!(f.iterations));
            m.insert("status".into(), json!(f.status.as_str()));
            if let Some(e) = f.ellipsoid() {
                let rot = e.orientation();
                let cols: Vec<Value> = (0..3)
                    .map(|j| Value::Array((0..3).map(|i| sig_json(rot[(i, j)])).collect()))
                    .collect();
                m.insert("axis_directions".into(), Value::Array(cols));
            }
        }
        Err(e) => {
            m.insert("status".into(), json!("failed"));
            m.insert("error".into(), json!(e));
        }
    }
    v
}
