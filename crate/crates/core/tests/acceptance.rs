//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fruitsize::ellipsoid_fit::{fit_ellipsoid_mvee, MveeParams};
use fruitsize::io::{
    encode_depth_png, encode_point_cloud, format_sig, load_depth_png, load_point_cloud, save_depth_png,
    save_point_cloud, CloudFileFormat, CLOUD_SIG_DIGITS,
};
use fruitsize::metrics::{
    average_precision, mae, mape, mask_iou, precision_recall_f1, r_squared, rmse, GroundTruthMask, MatchCounts,
    ScoredDetection, SizeSeries,
};
use fruitsize::pipeline::{extract_cloud, fit_cloud, ExtractParams, FitOptions};
use fruitsize::sphere_fit::{fit_sphere_lsq, fit_sphere_ransac, RansacParams};
use fruitsize::synth::{
    benchmark_scene, default_intrinsics, derive_seed, generate_benchmark, random_fruit, random_rotation,
    render_depth_scene, sample_surface_cloud, BenchmarkConfig, DiameterSpec, FruitSpec, NoiseSpec,
    SceneBenchmarkConfig, SensorPreset, ShapeMix, SurfaceRegion, DEFAULT_SCENE_DISTANCE_MM,
};
use fruitsize::types::{transform_cloud, DepthFrame, FitMethod, FitStatus, MaskRegion, Point3, PointCloud};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn at(x: f64, y: f64, z: f64) -> Point3<f64> {
    Point3::new(x, y, z).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_lsq: f64 = 0.0;
    let mut worst_mvee: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let spheres = ShapeMix {
        ellipsoid_fraction: 0.0,
        max_axis_ratio: 1.0,
    };
    let ellipsoids = ShapeMix {
        ellipsoid_fraction: 1.0,
        max_axis_ratio: 1.3,
    };
    for (mix, lsq) in [(spheres, true), (ellipsoids, false)] {
        for i in 0..50 {
            let d = rng.random_range(20.0..75.0);
            let c = at(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                rng.random_range(300.0..900.0),
            );
            let fruit = random_fruit(&mut rng, c, d, &mix, i).unwrap();
            let (cloud, truth) =
                sample_surface_cloud(&fruit, 1000, SurfaceRegion::Full, &NoiseSpec::noiseless(rng.random())).unwrap();
            if lsq {
                let f = fit_sphere_lsq(&cloud).map_err(|e| e.to_string())?;
                worst_lsq = worst_lsq.max((f.diameter_mm - truth.diameter_mm).abs());
            }
            let f = fit_ellipsoid_mvee(&cloud, &MveeParams::default()).map_err(|e| e.to_string())?;
            worst_mvee = worst_mvee.max((f.diameter_mm - truth.diameter_mm).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_lsq <= 1e-3 && worst_mvee <= 1e-3 && secs < 10.0,
        format!("max |error| lsq {worst_lsq:.2e} mm, mvee {worst_mvee:.2e} mm (limit 1e-3); {secs:.2} s (limit 10)"),
    )
}

fn criterion_2() -> Outcome {
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for run in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(202, run));
        let d = rng.random_range(20.0..75.0);
        let fruit = FruitSpec::sphere(at(0.0, 0.0, 500.0), d, 0).unwrap();
        let noise = NoiseSpec {
            gaussian_sigma: 0.3,
            outlier_fraction: 0.3,
            outlier_box_halfwidth: 50.0,
            rng_seed: rng.random(),
        };
        let (cloud, _) = sample_surface_cloud(&fruit, 500, SurfaceRegion::Full, &noise).unwrap();
        let params = RansacParams {
            rng_seed: run,
            ..RansacParams::default()
        };
        let fit = fit_sphere_ransac(&cloud, &params).map_err(|e| e.to_string())?;
        let rel = (fit.result.model.radius() - d / 2.0).abs() / (d / 2.0);
        worst = worst.max(rel);
        if rel <= 0.02 {
            good += 1;
        }
    }
    check(
        good >= 95,
        format!(
            "{good}/100 within 2% of the radius (need 95); worst {:.3}%",
            worst * 100.0
        ),
    )
}

/// Random test clouds of assorted shapes.
fn random_cloud(rng: &mut ChaCha8Rng, n: usize, kind: usize) -> PointCloud<f64> {
    let axes = Vector3::new(
        rng.random_range(5.0..60.0),
        rng.random_range(5.0..60.0),
        rng.random_range(5.0..60.0),
    );
    let rot: Matrix3<f64> = random_rotation(rng);
    let shift = Vector3::new(
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
    );
    (0..n)
        .map(|_| {
            let g = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
            let local = match kind % 4 {
                0 => g,
                1 => Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                2 => g.normalize() * (1.0 + 0.01 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)),
                _ => {
                    let s = g.normalize();
                    Vector3::new(s.x, s.y, -s.z.abs())
                }
            };
            Point3::from_vector(rot * local.component_mul(&axes) + shift).unwrap()
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let params = MveeParams::<f64>::default();
    let upper = 1.0 + 10.0 * params.tolerance;
    let lower = 1.0 - 10.0 * params.tolerance;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_residual: f64 = 0.0;
    let mut fewest_support = usize::MAX;
    let mut worst_equiv: f64 = 0.0;
    let mut unconverged = 0;
    for k in 0..200 {
        let n = (10.0 * 500f64.powf(rng.random::<f64>())).round() as usize;
        let cloud = random_cloud(&mut rng, n.clamp(10, 5000), k);
        let fit = fit_ellipsoid_mvee(&cloud, &params).map_err(|e| format!("cloud {k}: {e}"))?;
        if fit.status != FitStatus::Converged {
            unconverged += 1;
        }
        let model = fit.ellipsoid().unwrap();
        let res: Vec<f64> = cloud.iter().map(|p| model.residual(p)).collect();
        worst_residual = worst_residual.max(res.iter().cloned().fold(0.0, f64::max));
        fewest_support = fewest_support.min(res.iter().filter(|&&r| r >= lower).count());

        let rot: Matrix3<f64> = random_rotation(&mut rng);
        let t = Vector3::new(
            rng.random_range(-1e3..1e3),
            rng.random_range(-1e3..1e3),
            rng.random_range(-1e3..1e3),
        );
        let moved = transform_cloud(&cloud, &rot, &t).unwrap();
        let refit = fit_ellipsoid_mvee(&moved, &params).map_err(|e| e.to_string())?;
        for (a, b) in fit.semi_axes().iter().zip(refit.semi_axes()) {
            worst_equiv = worst_equiv.max((a - b).abs() / a);
        }
    }
    check(
        worst_residual <= upper && fewest_support >= 4 && worst_equiv <= 1e-6,
        format!(
            "max residual {worst_residual:.9} (limit {upper}); min support count {fewest_support} (need 4); \
             axis equivariance {worst_equiv:.1e} (limit 1e-6); {unconverged} unconverged"
        ),
    )
}

struct SceneStats {
    rmse: f64,
    r2: f64,
    mae: f64,
}

fn scene_run(
    preset: SensorPreset,
    diameters: DiameterSpec<f64>,
    mix: ShapeMix<f64>,
    n: usize,
) -> Result<(SceneStats, Vec<(f64, f64)>), String> {
    let cfg = SceneBenchmarkConfig::at_distance(
        n,
        diameters,
        mix,
        NoiseSpec::preset(preset, 404),
        default_intrinsics(),
        DEFAULT_SCENE_DISTANCE_MM,
    );
    let ex = ExtractParams::default();
    let mut pairs = Vec::new();
    for i in 0..n {
        let (fruit, scene) = benchmark_scene(&cfg, i).map_err(|e| e.to_string())?;
        let cloud = extract_cloud(&scene.depth, &scene.masks[0], &cfg.intrinsics, &ex).map_err(|e| e.to_string())?;
        let fit =
            fit_cloud(&cloud, FitMethod::Ellipsoid, &FitOptions::default()).map_err(|e| format!("fruit {i}: {e}"))?;
        pairs.push((fruit.diameter_mm(), fit.diameter_mm));
    }
    let s = SizeSeries::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect()).unwrap();
    let stats = SceneStats {
        rmse: rmse(&s),
        r2: r_squared(&s).unwrap_or(f64::NAN),
        mae: mae(&s),
    };
    Ok((stats, pairs))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let uniform = DiameterSpec::Uniform { lo: 20.0, hi: 75.0 };
    let (azure, _) = scene_run(SensorPreset::AzureLike, uniform.clone(), ShapeMix::default(), 102)?;
    let (rs, _) = scene_run(SensorPreset::RealsenseLike, uniform, ShapeMix::default(), 102)?;
    let secs = start.elapsed().as_secs_f64();
    check(
        azure.rmse <= 2.5 && azure.r2 >= 0.9 && rs.rmse > azure.rmse && rs.r2 < azure.r2 && secs < 60.0,
        format!(
            "azure-like RMSE {:.3} mm MAE {:.3} R² {:.4} (need <= 2.5, >= 0.9); realsense-like RMSE {:.3} MAE {:.3} R² {:.4} \
             (need worse); {secs:.1} s (limit 60)",
            azure.rmse, azure.mae, azure.r2, rs.rmse, rs.mae, rs.r2
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut sse_e, mut sse_s) = (0.0, 0.0);
    for i in 0..100 {
        let d: f64 = rng.random_range(20.0..75.0);
        let a = d / 2.0;
        let rot: Matrix3<f64> = random_rotation(&mut rng);
        let fruit = FruitSpec::ellipsoid(at(0.0, 0.0, 500.0), [a, a / 1.2, a / 1.2], rot, i).unwrap();
        // Half the fruit surface: the whole camera-facing hemisphere.
        let region = SurfaceRegion::facing(Vector3::z(), 1.0);
        let (cloud, _) = sample_surface_cloud(&fruit, 1000, region, &NoiseSpec::gaussian(0.5, rng.random())).unwrap();
        let e = fit_ellipsoid_mvee(&cloud, &MveeParams::default()).map_err(|e| e.to_string())?;
        let s = fit_sphere_lsq(&cloud).map_err(|e| e.to_string())?;
        sse_e += (e.diameter_mm - d).powi(2);
        sse_s += (s.diameter_mm - d).powi(2);
    }
    let (re, rs) = ((sse_e / 100.0).sqrt(), (sse_s / 100.0).sqrt());
    check(
        re < rs,
        format!("ellipsoid RMSE {re:.3} mm vs LSQ sphere RMSE {rs:.3} mm (need ellipsoid lower)"),
    )
}

fn criterion_6() -> Outcome {
    let spheres = ShapeMix {
        ellipsoid_fraction: 0.0,
        max_axis_ratio: 1.0,
    };
    let sizes = vec![24.0, 27.0, 30.0, 70.0];
    let (_, pairs) = scene_run(SensorPreset::AzureLike, DiameterSpec::Fixed(sizes), spheres, 4)?;
    let errs: Vec<String> = pairs.iter().map(|(t, p)| format!("{t}: {:+.3}", p - t)).collect();
    check(
        pairs.iter().all(|(t, p)| (p - t).abs() <= 2.0),
        format!("per-fruit error mm [{}] (limit ±2)", errs.join(", ")),
    )
}

fn rows(w: usize, h: usize, r0: usize, r1: usize) -> MaskRegion {
    MaskRegion::from_fn(w, h, |_, v| (r0..=r1).contains(&v))
}

fn criterion_7() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let s = |a: &[f64], p: &[f64]| SizeSeries::new(a.to_vec(), p.to_vec()).unwrap();
    let mut failures = Vec::new();
    let mut expect = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_owned());
        }
    };
    let same = s(&[3.0, 5.0, 8.0], &[3.0, 5.0, 8.0]);
    expect("rmse identity", close(rmse(&same), 0.0));
    expect("rmse offset", close(rmse(&s(&[1.0, 3.0], &[2.0, 4.0])), 1.0));
    expect("mae identity", close(mae(&same), 0.0));
    expect("mae single", close(mae(&s(&[10.0], &[13.0])), 3.0));
    expect("mape 10%", close(mape(&s(&[100.0], &[90.0])).unwrap(), 10.0));
    expect("mape identity", close(mape(&same).unwrap(), 0.0));
    expect("r2 identity", close(r_squared(&same).unwrap(), 1.0));
    expect(
        "r2 mean",
        close(r_squared(&s(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0])).unwrap(), 0.0),
    );
    expect(
        "r2 half",
        close(r_squared(&s(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0])).unwrap(), 0.5),
    );
    let (p, r, f) = precision_recall_f1(MatchCounts { tp: 9, fp: 1, fn_: 1 });
    expect("prf 9/1/1", close(p, 0.9) && close(r, 0.9) && close(f, 0.9));
    expect(
        "prf zero",
        precision_recall_f1(MatchCounts::default()) == (0.0, 0.0, 0.0),
    );
    let a = rows(10, 15, 0, 9);
    expect("iou 1/3", close(mask_iou(&a, &rows(10, 15, 5, 14)).unwrap(), 1.0 / 3.0));
    expect("iou identical", close(mask_iou(&a, &a).unwrap(), 1.0));
    expect(
        "iou disjoint",
        close(mask_iou(&rows(10, 15, 0, 4), &rows(10, 15, 5, 9)).unwrap(), 0.0),
    );

    let gt = rows(10, 10, 0, 4);
    let gts = [GroundTruthMask {
        mask: gt.clone(),
        image_id: 0,
    }];
    let tp = |c| ScoredDetection::new(gt.clone(), c, 0).unwrap();
    let fp = ScoredDetection::new(rows(10, 10, 6, 9), 0.9, 0).unwrap();
    expect("ap perfect", average_precision(&[tp(0.9)], &gts, 0.5).unwrap() == 1.0);
    expect("ap fp,tp", average_precision(&[fp, tp(0.5)], &gts, 0.5).unwrap() == 0.5);
    expect(
        "ap duplicate",
        average_precision(&[tp(0.9), tp(0.3)], &gts, 0.5).unwrap() == 1.0,
    );
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "17 fixtures exact".into()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;

    // Library determinism.
    let cfg = BenchmarkConfig {
        n_fruit: 12,
        diameters: DiameterSpec::Uniform { lo: 20.0, hi: 75.0 },
        shape_mix: ShapeMix::default(),
        noise: NoiseSpec {
            gaussian_sigma: 0.5,
            outlier_fraction: 0.1,
            outlier_box_halfwidth: 50.0,
            rng_seed: 7,
        },
        points_per_fruit: 300,
        region: SurfaceRegion::facing(Vector3::z(), 0.8),
    };
    let (a, b) = (tmp.path().join("lib_a"), tmp.path().join("lib_b"));
    generate_benchmark(&cfg, &a).map_err(|e| e.to_string())?;
    generate_benchmark(&cfg, &b).map_err(|e| e.to_string())?;
    let same_lib = tree_bytes(&a) == tree_bytes(&b);
    ok &= same_lib;
    let intr = default_intrinsics::<f64>();
    let fruit = FruitSpec::sphere(at(5.0, -3.0, 480.0), 40.0, 0).unwrap();
    let r1 = render_depth_scene(&[fruit], &intr, &NoiseSpec::gaussian(2.0, 9)).unwrap();
    let r2 = render_depth_scene(&[fruit], &intr, &NoiseSpec::gaussian(2.0, 9)).unwrap();
    let same_render = r1 == r2 && encode_depth_png(&r1.depth).unwrap() == encode_depth_png(&r2.depth).unwrap();
    ok &= same_render;
    notes.push(format!(
        "library reruns identical: benchmark {same_lib}, render {same_render}"
    ));

    // Format round-trips.
    let cloud =
        load_point_cloud::<f64>(&a.join("fruit_0000.csv"), CloudFileFormat::CsvXyz).map_err(|e| e.to_string())?;
    let mut lossless = true;
    for fmt in [CloudFileFormat::CsvXyz, CloudFileFormat::PlyAscii] {
        let p = tmp.path().join(format!(
            "rt.{}",
            if fmt == CloudFileFormat::CsvXyz { "csv" } else { "ply" }
        ));
        save_point_cloud(&cloud, &p, fmt).map_err(|e| e.to_string())?;
        let back = load_point_cloud::<f64>(&p, fmt).map_err(|e| e.to_string())?;
        lossless &=
            back.points() == cloud.points() && encode_point_cloud(&back, fmt) == encode_point_cloud(&cloud, fmt);
    }
    let reparsed_ok = cloud.iter().all(|p| {
        p.to_array()
            .iter()
            .all(|&v| format_sig(v, CLOUD_SIG_DIGITS).parse::<f64>().unwrap() == v)
    });
    let depth = DepthFrame::new(3, 2, vec![0.0, 1.0, 500.0, 1234.0, 65535.0, 7.0]).unwrap();
    let dp = tmp.path().join("d.png");
    save_depth_png(&depth, &dp).map_err(|e| e.to_string())?;
    let depth_ok = load_depth_png::<f64>(&dp).map_err(|e| e.to_string())? == depth;
    ok &= lossless && reparsed_ok && depth_ok;
    notes.push(format!(
        "round-trips lossless: csv+ply {lossless}, depth png {depth_ok}"
    ));

    // CLI determinism and exit codes.
    let exe = env!("CARGO_BIN_EXE_fruitsize");
    let run = |args: &[&str]| Command::new(exe).args(args).current_dir(tmp.path()).output().unwrap();
    let s1 = run(&[
        "synth", "--fruit", "102", "--dmin", "20", "--dmax", "75", "--seed", "7", "--out", "cli_a",
    ]);
    let s2 = run(&[
        "synth", "--fruit", "102", "--dmin", "20", "--dmax", "75", "--seed", "7", "--out", "cli_b",
    ]);
    let same_cli = s1.status.code() == Some(0)
        && s2.status.code() == Some(0)
        && tree_bytes(&tmp.path().join("cli_a")) == tree_bytes(&tmp.path().join("cli_b"));
    let missing = run(&["fit", "--cloud", "does_not_exist.csv"]).status.code();
    let bad_flag = run(&["fit", "--no-such-flag"]).status.code();
    let bad_method = run(&["fit", "--method", "cube", "--cloud", "cli_a/fruit_0000.csv"])
        .status
        .code();
    let good = run(&[
        "fit",
        "--method",
        "all",
        "--manifest",
        "cli_a/manifest.csv",
        "--out",
        "fit.json",
    ])
    .status
    .code();
    let exit_ok = missing == Some(1) && bad_flag == Some(1) && bad_method == Some(1) && good == Some(0);
    ok &= same_cli && exit_ok;
    notes.push(format!(
        "cli synth reruns identical {same_cli}; exit codes missing-file {missing:?}, bad-flag {bad_flag:?}, bad-method {bad_method:?}, success {good:?}"
    ));
    check(ok, notes.join("; "))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("exact recovery", criterion_1),
        ("RANSAC robustness", criterion_2),
        ("MVEE enclosure and tightness", criterion_3),
        ("synthetic sensor comparison", criterion_4),
        ("technique ordering on prolate fruit", criterion_5),
        ("indoor size set", criterion_6),
        ("metric exactness", criterion_7),
        ("determinism and formats", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let tag = format!("criterion {}", i + 1);
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|x| tag.contains(x.as_str()) || name.contains(x.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {tag} ({name}): {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {tag} ({name}): {d} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
