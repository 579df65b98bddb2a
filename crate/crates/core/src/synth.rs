//! Ground-truthed synthetic data: surface-sampled clouds, ray-cast depth
//! scenes and on-disk benchmarks.
//!
//! Randomness is drawn from ChaCha streams derived from the master seed per
//! fruit (and per image row for rendering), so serial and parallel runs
//! produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{csv_error, format_sig, save_point_cloud, write_atomic, CloudFileFormat};
use crate::scalar::{lit, to_f64, Real};
use crate::types::{check_orthonormal, CameraIntrinsics, DepthFrame, EllipsoidModel, MaskRegion, Point3, PointCloud};

/// Rays whose normalized discriminant falls below this count as misses.
pub const GRAZING_DISCRIMINANT: f64 = 1e-12;

/// Outliers are kept at least this many noise sigmas off the surface.
pub const OUTLIER_MIN_SIGMAS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FruitShape {
    Sphere,
    Ellipsoid,
}

impl FruitShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            FruitShape::Sphere => "sphere",
            FruitShape::Ellipsoid => "ellipsoid",
        }
    }
}

impl std::str::FromStr for FruitShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(FruitShape::Sphere),
            "ellipsoid" => Ok(FruitShape::Ellipsoid),
            other => Err(Error::invalid(format!("unknown fruit shape '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FruitSpec<T: Real> {
    shape: FruitShape,
    center: Point3<T>,
    semi_axes: [T; 3],
    orientation: Matrix3<T>,
    label: u32,
}

impl<T: Real> FruitSpec<T> {
    pub fn sphere(center: Point3<T>, diameter_mm: T, label: u32) -> Result<Self> {
        let r = diameter_mm / lit(2.0);
        if !(r.is_finite() && r > T::zero()) {
            return Err(Error::invalid(format!("fruit diameter {diameter_mm} must be positive")));
        }
        Ok(Self {
            shape: FruitShape::Sphere,
            center,
            semi_axes: [r; 3],
            orientation: Matrix3::identity(),
            label,
        })
    }

    /// Semi-axes are re-sorted descending; `orientation` columns follow them.
    pub fn ellipsoid(center: Point3<T>, semi_axes: [T; 3], orientation: Matrix3<T>, label: u32) -> Result<Self> {
        if semi_axes.iter().any(|a| !(a.is_finite() && *a > T::zero())) {
            return Err(Error::invalid("fruit semi-axes must be positive"));
        }
        check_orthonormal(&orientation)?;
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| semi_axes[j].partial_cmp(&semi_axes[i]).unwrap());
        let axes = order.map(|i| semi_axes[i]);
        let cols = order.map(|i| orientation.column(i).into_owned());
        Ok(Self {
            shape: FruitShape::Ellipsoid,
            center,
            semi_axes: axes,
            orientation: Matrix3::from_columns(&cols),
            label,
        })
    }

    pub fn shape(&self) -> FruitShape {
        self.shape
    }

    pub fn center(&self) -> &Point3<T> {
        &self.center
    }

    pub fn semi_axes(&self) -> [T; 3] {
        self.semi_axes
    }

    pub fn orientation(&self) -> &Matrix3<T> {
        &self.orientation
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    /// Caliper diameter: the widest extent, twice the major semi-axis.
    pub fn diameter_mm(&self) -> T {
        self.semi_axes[0] * lit(2.0)
    }

    pub fn to_model(&self) -> Result<EllipsoidModel<T>> {
        EllipsoidModel::from_axes(*self.center.coords(), self.semi_axes, self.orientation)
    }

    fn ground_truth(&self) -> GroundTruth<T> {
        GroundTruth {
            label: self.label,
            shape: self.shape,
            center: self.center,
            semi_axes: self.semi_axes,
            orientation: self.orientation,
            diameter_mm: self.diameter_mm(),
            outlier_indices: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec<T: Real> {
    /// Standard deviation of surface-normal (clouds) or depth (scenes) noise, mm.
    pub gaussian_sigma: T,
    pub outlier_fraction: T,
    pub outlier_box_halfwidth: T,
    pub rng_seed: u64,
}

impl<T: Real> NoiseSpec<T> {
    pub fn noiseless(rng_seed: u64) -> Self {
        Self {
            gaussian_sigma: T::zero(),
            outlier_fraction: T::zero(),
            outlier_box_halfwidth: lit(50.0),
            rng_seed,
        }
    }

    pub fn gaussian(sigma: T, rng_seed: u64) -> Self {
        Self {
            gaussian_sigma: sigma,
            ..Self::noiseless(rng_seed)
        }
    }

    pub fn preset(preset: SensorPreset, rng_seed: u64) -> Self {
        Self::gaussian(lit(preset.sigma_mm()), rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma.is_finite() && self.gaussian_sigma >= T::zero()) {
            return Err(Error::invalid("gaussian_sigma must be non-negative"));
        }
        if !(self.outlier_fraction >= T::zero() && self.outlier_fraction <= T::one()) {
            return Err(Error::invalid("outlier_fraction must lie in [0, 1]"));
        }
        if !(self.outlier_box_halfwidth.is_finite() && self.outlier_box_halfwidth >= T::zero()) {
            return Err(Error::invalid("outlier_box_halfwidth must be non-negative"));
        }
        Ok(())
    }
}

/// Depth-noise profiles for sensor comparison studies. These are artifact
/// constants, not measured sensor characteristics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorPreset {
    AzureLike,
    RealsenseLike,
}

impl SensorPreset {
    pub fn sigma_mm(&self) -> f64 {
        match self {
            SensorPreset::AzureLike => 0.5,
            SensorPreset::RealsenseLike => 2.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SensorPreset::AzureLike => "azure-like",
            SensorPreset::RealsenseLike => "realsense-like",
        }
    }
}

impl std::str::FromStr for SensorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "azure-like" => Ok(SensorPreset::AzureLike),
            "realsense-like" => Ok(SensorPreset::RealsenseLike),
            other => Err(Error::invalid(format!("unknown sensor preset '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub label: u32,
    pub shape: FruitShape,
    pub center: Point3<T>,
    pub semi_axes: [T; 3],
    pub orientation: Matrix3<T>,
    pub diameter_mm: T,
    /// Ascending indices of points replaced by outliers (clouds only).
    pub outlier_indices: Vec<usize>,
}

/// Which part of the surface is sampled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfaceRegion<T: Real> {
    Full,
    /// Points whose outward normal makes an angle of at most
    /// `acos(1 - visible_fraction)` with `-view_direction`: the whole
    /// camera-facing hemisphere at fraction 1, a shrinking cap below that.
    Facing {
        view_direction: Vector3<T>,
        visible_fraction: T,
    },
}

impl<T: Real> SurfaceRegion<T> {
    pub fn facing(view_direction: Vector3<T>, visible_fraction: T) -> Self {
        SurfaceRegion::Facing {
            view_direction,
            visible_fraction,
        }
    }

    fn visible_fraction(&self) -> Option<T> {
        match self {
            SurfaceRegion::Full => None,
            SurfaceRegion::Facing { visible_fraction, .. } => Some(*visible_fraction),
        }
    }
}

/// splitmix64 step; derives independent stream seeds from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_vector<T: Real>(rng: &mut ChaCha8Rng) -> Vector3<T> {
    loop {
        let v = Vector3::<f64>::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return (v / n).map(lit);
        }
    }
}

/// Uniform random rotation.
pub fn random_rotation<T: Real>(rng: &mut ChaCha8Rng) -> Matrix3<T> {
    // A normalized 4-d Gaussian is a uniform unit quaternion.
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(g(), g(), g(), g()));
    let r: Rotation3<f64> = q.to_rotation_matrix();
    r.matrix().map(lit)
}

/// Samples `n_points` area-uniformly on the visible part of the fruit
/// surface, then applies radial noise and outlier replacement.
pub fn sample_surface_cloud<T: Real>(
    spec: &FruitSpec<T>,
    n_points: usize,
    region: SurfaceRegion<T>,
    noise: &NoiseSpec<T>,
) -> Result<(PointCloud<T>, GroundTruth<T>)> {
    noise.validate()?;
    if n_points < 1 {
        return Err(Error::invalid("n_points must be at least 1"));
    }
    let (toward_camera, min_cos) = match region {
        SurfaceRegion::Full => (Vector3::zeros(), -2.0),
        SurfaceRegion::Facing {
            view_direction,
            visible_fraction,
        } => {
            if !(visible_fraction > T::zero() && visible_fraction <= T::one()) {
                return Err(Error::invalid(format!(
                    "visible_fraction {visible_fraction} must lie in (0, 1]"
                )));
            }
            let norm = view_direction.norm();
            if !(norm > T::zero() && norm.is_finite()) {
                return Err(Error::invalid("view_direction must be a non-zero vector"));
            }
            let vf = to_f64(visible_fraction);
            // Fraction 1 keeps the full open hemisphere (cos > 0).
            let min_cos = if vf >= 1.0 { 0.0 } else { 1.0 - vf };
            ((-view_direction / norm).map(|c| to_f64(c)), min_cos)
        }
    };

    let axes = spec.semi_axes.map(to_f64);
    let rot = spec.orientation.map(to_f64);
    let center = spec.center.coords().map(to_f64);
    let inv_sq = Vector3::new(
        1.0 / (axes[0] * axes[0]),
        1.0 / (axes[1] * axes[1]),
        1.0 / (axes[2] * axes[2]),
    );
    let g_max = 1.0 / axes[2];

    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    let sigma = to_f64(noise.gaussian_sigma);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(n_points);
    let mut normals: Vec<Vector3<f64>> = Vec::with_capacity(n_points);
    let mut attempts: u64 = 0;
    while points.len() < n_points {
        attempts += 1;
        if attempts > 10_000_000 + 1000 * n_points as u64 {
            return Err(Error::invalid("visible region too small to sample"));
        }
        let s = unit_vector::<f64>(&mut rng);
        // Area element of the sphere -> ellipsoid map is proportional to |diag(1/a) s|.
        let g = Vector3::new(s.x / axes[0], s.y / axes[1], s.z / axes[2]).norm();
        if rng.random::<f64>() * g_max > g {
            continue;
        }
        let local = Vector3::new(s.x * axes[0], s.y * axes[1], s.z * axes[2]);
        let n_local = local.component_mul(&inv_sq).normalize();
        let n_world = rot * n_local;
        if n_world.dot(&toward_camera) <= min_cos {
            continue;
        }
        points.push(center + rot * local);
        normals.push(n_world);
    }

    if sigma > 0.0 {
        for (p, n) in points.iter_mut().zip(&normals) {
            *p += n * normal.sample(&mut rng);
        }
    }

    let n_out = (to_f64(noise.outlier_fraction) * n_points as f64).floor() as usize;
    let mut outliers: Vec<usize> = rand::seq::index::sample(&mut rng, n_points, n_out.min(n_points)).into_vec();
    outliers.sort_unstable();
    if !outliers.is_empty() {
        let h = to_f64(noise.outlier_box_halfwidth);
        let model = spec.to_model()?;
        let clearance = OUTLIER_MIN_SIGMAS * sigma;
        for &i in &outliers {
            let mut tries = 0;
            points[i] = loop {
                tries += 1;
                let q = center
                    + Vector3::new(
                        rng.random_range(-h..=h),
                        rng.random_range(-h..=h),
                        rng.random_range(-h..=h),
                    );
                if tries > 10_000 || radial_distance(&model, &q) > clearance {
                    break q;
                }
            };
        }
    }

    let cloud = points
        .into_iter()
        .map(|p| Point3::from_vector(p.map(lit)))
        .collect::<Result<PointCloud<T>>>()?;
    let mut truth = spec.ground_truth();
    truth.outlier_indices = outliers;
    Ok((cloud, truth))
}

fn radial_distance<T: Real>(model: &EllipsoidModel<T>, q: &Vector3<f64>) -> f64 {
    let p = Point3::from_vector_unchecked(q.map(lit::<T>));
    let r = to_f64(model.residual(&p));
    let d = (q - model.center().map(to_f64)).norm();
    if r > 0.0 {
        (d * (1.0 - 1.0 / r.sqrt())).abs()
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedScene<T: Real> {
    pub depth: DepthFrame<T>,
    /// One mask per fruit, in input order.
    pub masks: Vec<MaskRegion>,
    pub truths: Vec<GroundTruth<T>>,
}

struct CanonicalFruit {
    origin: Vector3<f64>,
    to_local: Matrix3<f64>,
}

/// Ray-casts the fruits through a pinhole camera at the origin looking
/// down `+z`. The nearest intersection wins each pixel.
pub fn render_depth_scene<T: Real>(
    fruits: &[FruitSpec<T>],
    intr: &CameraIntrinsics<T>,
    noise: &NoiseSpec<T>,
) -> Result<RenderedScene<T>> {
    noise.validate()?;
    for f in fruits {
        if !(f.center.z() > f.semi_axes[0]) {
            return Err(Error::invalid(format!(
                "fruit {} is not fully in front of the camera (center z {} <= semi-axis {})",
                f.label,
                f.center.z(),
                f.semi_axes[0]
            )));
        }
    }
    let (w, h) = (intr.width(), intr.height());
    let canon: Vec<CanonicalFruit> = fruits
        .iter()
        .map(|f| {
            let rt = f.orientation.map(to_f64).transpose();
            let inv_axes = Matrix3::from_diagonal(&Vector3::from(f.semi_axes.map(|a| 1.0 / to_f64(a))));
            let to_local = inv_axes * rt;
            CanonicalFruit {
                origin: to_local * (-f.center.coords().map(to_f64)),
                to_local,
            }
        })
        .collect();
    let fx = to_f64(intr.fx());
    let fy = to_f64(intr.fy());
    let cx = to_f64(intr.cx());
    let cy = to_f64(intr.cy());
    let sigma = to_f64(noise.gaussian_sigma);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let out_frac = to_f64(noise.outlier_fraction);
    let out_h = to_f64(noise.outlier_box_halfwidth);

    let rows: Vec<(Vec<f64>, Vec<u32>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.rng_seed, v as u64));
            let mut depth = vec![0.0; w];
            let mut owner = vec![u32::MAX; w];
            for u in 0..w {
                let dir = Vector3::new((u as f64 - cx) / fx, (v as f64 - cy) / fy, 1.0);
                let mut best = f64::INFINITY;
                let mut who = u32::MAX;
                for (k, c) in canon.iter().enumerate() {
                    let d = c.to_local * dir;
                    let a = d.norm_squared();
                    let b = 2.0 * c.origin.dot(&d);
                    let cc = c.origin.norm_squared() - 1.0;
                    let disc = b * b - 4.0 * a * cc;
                    if disc < GRAZING_DISCRIMINANT {
                        continue;
                    }
                    let t = (-b - disc.sqrt()) / (2.0 * a);
                    if t > 0.0 && t < best {
                        best = t;
                        who = k as u32;
                    }
                }
                if who != u32::MAX {
                    let mut z = best;
                    if sigma > 0.0 {
                        z += normal.sample(&mut rng);
                    }
                    if out_frac > 0.0 && rng.random::<f64>() < out_frac {
                        z = best + rng.random_range(-out_h..=out_h);
                    }
                    depth[u] = z.max(0.0);
                    owner[u] = who;
                }
            }
            (depth, owner)
        })
        .collect();

    let mut depth = Vec::with_capacity(w * h);
    let mut owner = Vec::with_capacity(w * h);
    for (d, o) in rows {
        depth.extend(d);
        owner.extend(o);
    }
    let masks = (0..fruits.len())
        .map(|k| MaskRegion::new(w, h, owner.iter().map(|&o| o == k as u32).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RenderedScene {
        depth: DepthFrame::new(w, h, depth.into_iter().map(lit).collect())?,
        masks,
        truths: fruits.iter().map(FruitSpec::ground_truth).collect(),
    })
}

/// Diameters for generated fruit.
#[derive(Clone, Debug, PartialEq)]
pub enum DiameterSpec<T: Real> {
    /// Uniform in `[lo, hi)`.
    Uniform { lo: T, hi: T },
    /// Cycles through the listed diameters.
    Fixed(Vec<T>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeMix<T: Real> {
    /// Probability that a fruit is an ellipsoid rather than a sphere.
    pub ellipsoid_fraction: T,
    /// Ellipsoid minor semi-axes are `major / r` with `r` uniform in `[1, max_axis_ratio]`.
    pub max_axis_ratio: T,
}

impl<T: Real> Default for ShapeMix<T> {
    fn default() -> Self {
        Self {
            ellipsoid_fraction: lit(0.5),
            max_axis_ratio: lit(1.3),
        }
    }
}

/// Draws one fruit with the given mix; used by benchmarks and tests.
pub fn random_fruit<T: Real>(
    rng: &mut ChaCha8Rng,
    center: Point3<T>,
    diameter_mm: T,
    mix: &ShapeMix<T>,
    label: u32,
) -> Result<FruitSpec<T>> {
    let is_ellipsoid = rng.random::<f64>() < to_f64(mix.ellipsoid_fraction);
    if !is_ellipsoid {
        return FruitSpec::sphere(center, diameter_mm, label);
    }
    let max_ratio = to_f64(mix.max_axis_ratio).max(1.0);
    let a = to_f64(diameter_mm) / 2.0;
    let b = a / rng.random_range(1.0..=max_ratio);
    let c = a / rng.random_range(1.0..=max_ratio);
    let rot = random_rotation::<T>(rng);
    FruitSpec::ellipsoid(center, [lit(a), lit(b), lit(c)], rot, label)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig<T: Real> {
    pub n_fruit: usize,
    pub diameters: DiameterSpec<T>,
    pub shape_mix: ShapeMix<T>,
    pub noise: NoiseSpec<T>,
    pub points_per_fruit: usize,
    pub region: SurfaceRegion<T>,
}

impl<T: Real> BenchmarkConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        match &self.diameters {
            DiameterSpec::Uniform { lo, hi } => {
                if !(*lo > T::zero() && lo < hi && hi.is_finite()) {
                    return Err(Error::invalid(format!(
                        "diameter range ({lo}, {hi}) must satisfy 0 < lo < hi"
                    )));
                }
            }
            DiameterSpec::Fixed(list) => {
                if list.is_empty() && self.n_fruit > 0 {
                    return Err(Error::invalid("fixed diameter list is empty"));
                }
                if list.iter().any(|d| !(*d > T::zero() && d.is_finite())) {
                    return Err(Error::invalid("fixed diameters must be positive"));
                }
            }
        }
        if self.points_per_fruit < 1 {
            return Err(Error::invalid("points_per_fruit must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry<T: Real> {
    pub id: usize,
    pub shape: FruitShape,
    pub diameter_mm: T,
    pub semi_axes: [T; 3],
    pub noise_sigma_mm: T,
    pub outlier_fraction: T,
    /// `None` (written `full`) when the whole surface was sampled or a depth scene was rendered.
    pub visible_fraction: Option<T>,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Manifest<T: Real> {
    pub entries: Vec<ManifestEntry<T>>,
}

pub const MANIFEST_HEADER: &str =
    "id,shape,diameter_mm,ax_mm,bx_mm,cx_mm,noise_sigma_mm,outlier_fraction,visible_fraction,path";

impl<T: Real> Manifest<T> {
    pub fn to_csv(&self) -> String {
        let g = |v: T| format_sig(to_f64(v), 6);
        let mut out = String::new();
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.id,
                e.shape.as_str(),
                g(e.diameter_mm),
                g(e.semi_axes[0]),
                g(e.semi_axes[1]),
                g(e.semi_axes[2]),
                g(e.noise_sigma_mm),
                g(e.outlier_fraction),
                e.visible_fraction.map(g).unwrap_or_else(|| "full".into()),
                e.path.display()
            );
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>().join(",") != MANIFEST_HEADER {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 1,
                message: format!("manifest header must be '{MANIFEST_HEADER}'"),
            });
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let perr = |m: String| Error::Parse {
                path: path.to_owned(),
                line,
                message: m,
            };
            let num = |k: usize| -> Result<T> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(lit)
                    .ok_or_else(|| perr(format!("column {} is not a number: '{}'", k + 1, &rec[k])))
            };
            let id = rec[0]
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad id '{}'", &rec[0])))?;
            let shape = rec[1].trim().parse().map_err(|e: Error| perr(e.to_string()))?;
            entries.push(ManifestEntry {
                id,
                shape,
                diameter_mm: num(2)?,
                semi_axes: [num(3)?, num(4)?, num(5)?],
                noise_sigma_mm: num(6)?,
                outlier_fraction: num(7)?,
                visible_fraction: if rec[8].trim() == "full" { None } else { Some(num(8)?) },
                path: PathBuf::from(rec[9].trim()),
            });
        }
        Ok(Self { entries })
    }
}

/// Fruit `i` of a benchmark: its spec and the RNG seed for its surface sampling.
pub fn benchmark_fruit<T: Real>(config: &BenchmarkConfig<T>, i: usize) -> Result<(FruitSpec<T>, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.noise.rng_seed, i as u64));
    let diameter = match &config.diameters {
        DiameterSpec::Uniform { lo, hi } => lit::<T>(rng.random_range(to_f64(*lo)..to_f64(*hi))),
        DiameterSpec::Fixed(list) => list[i % list.len()],
    };
    let center = Point3::new(
        lit(rng.random_range(-50.0..50.0)),
        lit(rng.random_range(-50.0..50.0)),
        lit(rng.random_range(400.0..600.0)),
    )?;
    let fruit = random_fruit(&mut rng, center, diameter, &config.shape_mix, i as u32)?;
    Ok((fruit, rng.random()))
}

/// Generates `n_fruit` csv-xyz clouds plus `manifest.csv` in `out_dir`.
pub fn generate_benchmark<T: Real>(config: &BenchmarkConfig<T>, out_dir: &Path) -> Result<Manifest<T>> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries = (0..config.n_fruit)
        .into_par_iter()
        .map(|i| {
            let (fruit, seed) = benchmark_fruit(config, i)?;
            let noise = NoiseSpec {
                rng_seed: seed,
                ..config.noise
            };
            let (cloud, truth) = sample_surface_cloud(&fruit, config.points_per_fruit, config.region, &noise)?;
            let rel = PathBuf::from(format!("fruit_{i:04}.csv"));
            save_point_cloud(&cloud, &out_dir.join(&rel), CloudFileFormat::CsvXyz)?;
            Ok(ManifestEntry {
                id: i,
                shape: truth.shape,
                diameter_mm: truth.diameter_mm,
                semi_axes: truth.semi_axes,
                noise_sigma_mm: config.noise.gaussian_sigma,
                outlier_fraction: config.noise.outlier_fraction,
                visible_fraction: config.region.visible_fraction(),
                path: rel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { entries };
    write_atomic(&out_dir.join("manifest.csv"), manifest.to_csv().as_bytes())?;
    Ok(manifest)
}

/// Scene geometry for single-fruit depth benchmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBenchmarkConfig<T: Real> {
    pub n_fruit: usize,
    pub diameters: DiameterSpec<T>,
    pub shape_mix: ShapeMix<T>,
    pub noise: NoiseSpec<T>,
    pub intrinsics: CameraIntrinsics<T>,
    /// Fruit centers are placed at this depth (± `depth_jitter_mm`) near the optical axis.
    pub distance_mm: T,
    pub depth_jitter_mm: T,
    pub lateral_jitter_mm: T,
}

impl<T: Real> SceneBenchmarkConfig<T> {
    /// Fruit near the optical axis at `distance_mm`, jittered by 10% in depth
    /// and 8% of the distance laterally.
    pub fn at_distance(
        n_fruit: usize,
        diameters: DiameterSpec<T>,
        shape_mix: ShapeMix<T>,
        noise: NoiseSpec<T>,
        intrinsics: CameraIntrinsics<T>,
        distance_mm: T,
    ) -> Self {
        Self {
            n_fruit,
            diameters,
            shape_mix,
            noise,
            intrinsics,
            distance_mm,
            depth_jitter_mm: distance_mm * lit(0.1),
            lateral_jitter_mm: distance_mm * lit(0.08),
        }
    }
}

/// 640x480 pinhole with a 600 px focal length, principal point at the center.
pub fn default_intrinsics<T: Real>() -> CameraIntrinsics<T> {
    CameraIntrinsics::new(lit(600.0), lit(600.0), lit(320.0), lit(240.0), 640, 480).expect("valid default intrinsics")
}

/// Default fruit distance for scene benchmarks, mm.
pub const DEFAULT_SCENE_DISTANCE_MM: f64 = 500.0;

/// One rendered single-fruit scene of a depth benchmark.
pub fn benchmark_scene<T: Real>(
    config: &SceneBenchmarkConfig<T>,
    i: usize,
) -> Result<(FruitSpec<T>, RenderedScene<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.noise.rng_seed, i as u64));
    let diameter = match &config.diameters {
        DiameterSpec::Uniform { lo, hi } => lit::<T>(rng.random_range(to_f64(*lo)..to_f64(*hi))),
        DiameterSpec::Fixed(list) => list[i % list.len()],
    };
    let jit = |rng: &mut ChaCha8Rng, h: T| {
        let h = to_f64(h);
        if h > 0.0 {
            rng.random_range(-h..=h)
        } else {
            0.0
        }
    };
    let lx = jit(&mut rng, config.lateral_jitter_mm);
    let ly = jit(&mut rng, config.lateral_jitter_mm);
    let dz = jit(&mut rng, config.depth_jitter_mm);
    let center = Point3::new(lit(lx), lit(ly), config.distance_mm + lit(dz))?;
    let fruit = random_fruit(&mut rng, center, diameter, &config.shape_mix, i as u32)?;
    let noise = NoiseSpec {
        rng_seed: rng.random(),
        ..config.noise
    };
    let scene = render_depth_scene(std::slice::from_ref(&fruit), &config.intrinsics, &noise)?;
    Ok((fruit, scene))
}

/// Writes `scene_NNNN_depth.png` / `scene_NNNN_mask.png`, a shared
/// `intrinsics.json` and `manifest.csv` (paths point at the depth images).
pub fn generate_scene_benchmark<T: Real>(config: &SceneBenchmarkConfig<T>, out_dir: &Path) -> Result<Manifest<T>> {
    config.noise.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    crate::io::save_intrinsics(&config.intrinsics, &out_dir.join("intrinsics.json"))?;
    let entries = (0..config.n_fruit)
        .into_par_iter()
        .map(|i| {
            let (fruit, scene) = benchmark_scene(config, i)?;
            let depth_rel = PathBuf::from(format!("scene_{i:04}_depth.png"));
            crate::io::save_depth_png(&scene.depth, &out_dir.join(&depth_rel))?;
            crate::io::save_mask_png(&scene.masks[0], &out_dir.join(mask_path_for(&depth_rel)))?;
            Ok(ManifestEntry {
                id: i,
                shape: fruit.shape(),
                diameter_mm: fruit.diameter_mm(),
                semi_axes: fruit.semi_axes(),
                noise_sigma_mm: config.noise.gaussian_sigma,
                outlier_fraction: config.noise.outlier_fraction,
                visible_fraction: None,
                path: depth_rel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { entries };
    write_atomic(&out_dir.join("manifest.csv"), manifest.to_csv().as_bytes())?;
    Ok(manifest)
}

/// `scene_0003_depth.png` -> `scene_0003_mask.png`.
pub fn mask_path_for(depth_path: &Path) -> PathBuf {
    let name = depth_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let mask = match name.strip_suffix("_depth.png") {
        Some(stem) => format!("{stem}_mask.png"),
        None => format!("{name}.mask.png"),
    };
    depth_path.with_file_name(mask)
}
