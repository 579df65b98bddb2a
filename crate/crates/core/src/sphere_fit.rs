//! Sphere fitting: least squares (algebraic start + Gauss–Newton on the
//! geometric residual) and RANSAC over four-point minimal samples.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};
use crate::types::{is_flat, FitMethod, FitReport, FitStatus, FittedModel, Point3, PointCloud, SphereModel};

/// Smallest tetrahedron volume (mm³) accepted as a minimal sample.
pub const MIN_SAMPLE_VOLUME_MM3: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsqParams<T: Real> {
    /// Fewest points accepted. Never below 4.
    pub min_points: usize,
    /// Gauss–Newton stops once the parameter step is shorter than this (mm).
    pub step_tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for LsqParams<T> {
    fn default() -> Self {
        Self {
            min_points: 10,
            step_tolerance: lit(1e-9),
            max_iterations: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams<T: Real> {
    /// Max distance to the sphere surface for a point to count as an inlier (mm).
    pub inlier_threshold: T,
    pub confidence: T,
    pub max_iterations: usize,
    pub min_points: usize,
    pub rng_seed: u64,
}

impl<T: Real> Default for RansacParams<T> {
    fn default() -> Self {
        Self {
            inlier_threshold: T::one(),
            confidence: lit(0.99),
            max_iterations: 10_000,
            min_points: 10,
            rng_seed: 0,
        }
    }
}

impl<T: Real> RansacParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > T::zero()) {
            return Err(Error::invalid("inlier_threshold must be positive"));
        }
        if !(self.confidence > T::zero() && self.confidence < T::one()) {
            return Err(Error::invalid("confidence must lie in (0, 1)"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.min_points < 4 {
            return Err(Error::invalid("min_points must be at least 4"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult<T: Real> {
    pub model: SphereModel<T>,
    /// Ascending indices into the input cloud.
    pub inlier_indices: Vec<usize>,
    pub iterations_run: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacFit<T: Real> {
    pub report: FitReport<T>,
    pub result: RansacResult<T>,
}

/// Circumsphere of a non-degenerate tetrahedron.
pub fn sphere_from_four_points<T: Real>(points: [&Point3<T>; 4]) -> Result<SphereModel<T>> {
    let a = points[0].coords();
    let e1 = points[1].coords() - a;
    let e2 = points[2].coords() - a;
    let e3 = points[3].coords() - a;
    let m = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    let det = m.determinant();
    let volume = det.abs() / lit::<T>(6.0);
    if !(volume > lit::<T>(MIN_SAMPLE_VOLUME_MM3)) {
        return Err(Error::DegenerateSample(format!("tetrahedron volume {volume} mm³")));
    }
    // |x - a|² = |x - p_k|²  =>  2 e_kᵀ (x - a) = |e_k|²
    let half = lit::<T>(0.5);
    let rhs = Vector3::new(
        e1.norm_squared() * half,
        e2.norm_squared() * half,
        e3.norm_squared() * half,
    );
    let offset = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateSample("singular minimal sample".into()))?;
    let center = Point3::from_vector(a + offset)?;
    SphereModel::new(center, offset.norm())
}

/// Least-squares sphere with default parameters (at least 10 points).
pub fn fit_sphere_lsq<T: Real>(cloud: &PointCloud<T>) -> Result<FitReport<T>> {
    fit_sphere_lsq_with(cloud, &LsqParams::default())
}

/// Solves `2aᵀp + k = |p|²` in the least-squares sense, then refines the
/// geometric objective `Σ(|p_i - C| - R)²` by damped Gauss–Newton.
pub fn fit_sphere_lsq_with<T: Real>(cloud: &PointCloud<T>, params: &LsqParams<T>) -> Result<FitReport<T>> {
    let needed = params.min_points.max(4);
    if cloud.len() < needed {
        return Err(Error::InsufficientPoints {
            needed,
            got: cloud.len(),
        });
    }
    if is_flat(cloud)? {
        return Err(Error::DegenerateGeometry("points are coplanar".into()));
    }

    let frame = Frame::of(cloud);
    let local: Vec<Vector3<T>> = cloud.iter().map(|p| frame.to_local(p.coords())).collect();

    let (c0, r0) = algebraic_sphere(&local)?;
    let s0 = objective(&local, &c0, r0);
    let refined = gauss_newton(&local, c0, r0, s0, params, frame.scale);

    let (center, radius, iterations, status, s) = match refined {
        Some((c, r, it, s)) => (c, r, it, FitStatus::Converged, s),
        None => (c0, r0, 0, FitStatus::Unrefined, s0),
    };

    let center = Point3::from_vector(frame.to_world(&center))?;
    let model = SphereModel::new(center, radius * frame.scale)?;
    let rms = (s / from_usize::<T>(cloud.len())).sqrt() * frame.scale;
    Ok(FitReport {
        method: FitMethod::SphereLsq,
        diameter_mm: model.diameter(),
        model: FittedModel::Sphere(model),
        rms_residual_mm: rms,
        inlier_count: None,
        inlier_fraction: None,
        iterations,
        status,
    })
}

/// Centering and isotropic scaling used to condition the normal equations.
#[derive(Clone, Copy)]
struct Frame<T: Real> {
    origin: Vector3<T>,
    scale: T,
}

impl<T: Real> Frame<T> {
    fn of(cloud: &PointCloud<T>) -> Self {
        let n = from_usize::<T>(cloud.len());
        let origin = cloud.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords()) / n;
        let ms = cloud
            .iter()
            .fold(T::zero(), |acc, p| acc + (p.coords() - origin).norm_squared())
            / n;
        let scale = if ms > T::zero() { ms.sqrt() } else { T::one() };
        Self { origin, scale }
    }

    fn to_local(self, p: &Vector3<T>) -> Vector3<T> {
        (p - self.origin) / self.scale
    }

    fn to_world(self, p: &Vector3<T>) -> Vector3<T> {
        p * self.scale + self.origin
    }
}

fn algebraic_sphere<T: Real>(pts: &[Vector3<T>]) -> Result<(Vector3<T>, T)> {
    let two = lit::<T>(2.0);
    let mut ata = Matrix4::<T>::zeros();
    let mut atb = Vector4::<T>::zeros();
    for p in pts {
        let row = Vector4::new(two * p.x, two * p.y, two * p.z, T::one());
        let b = p.norm_squared();
        ata += row * row.transpose();
        atb += row * b;
    }
    let sol = ata
        .cholesky()
        .map(|c| c.solve(&atb))
        .or_else(|| ata.lu().solve(&atb))
        .ok_or_else(|| Error::DegenerateGeometry("singular algebraic sphere system".into()))?;
    let center = Vector3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + center.norm_squared();
    if !(r2 > T::zero()) {
        return Err(Error::DegenerateGeometry(
            "algebraic fit produced imaginary radius".into(),
        ));
    }
    Ok((center, r2.sqrt()))
}

fn objective<T: Real>(pts: &[Vector3<T>], center: &Vector3<T>, radius: T) -> T {
    pts.iter().fold(T::zero(), |acc, p| {
        let r = (p - center).norm() - radius;
        acc + r * r
    })
}

/// Returns `None` when refinement breaks down or the budget runs out; the
/// objective never increases across accepted steps.
fn gauss_newton<T: Real>(
    pts: &[Vector3<T>],
    mut center: Vector3<T>,
    mut radius: T,
    mut s: T,
    params: &LsqParams<T>,
    scale: T,
) -> Option<(Vector3<T>, T, usize, T)> {
    // Step tolerance is given in mm; the working frame is scaled.
    let tol = params.step_tolerance / scale;
    let ulp = T::default_epsilon() * lit(16.0);
    for it in 1..=params.max_iterations {
        let mut jtj = Matrix4::<T>::zeros();
        let mut jtr = Vector4::<T>::zeros();
        for p in pts {
            let d = p - center;
            let dist = d.norm();
            if !(dist > T::zero()) {
                return None;
            }
            let u = d / dist;
            let jrow = Vector4::new(-u.x, -u.y, -u.z, -T::one());
            let r = dist - radius;
            jtj += jrow * jrow.transpose();
            jtr += jrow * r;
        }
        let step = jtj.cholesky()?.solve(&(-jtr));
        let step_len = step.norm();
        let floor = tol + ulp * (center.norm() + radius.abs());

        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let c = center + Vector3::new(step[0], step[1], step[2]) * t;
            let r = radius + step[3] * t;
            let s_new = objective(pts, &c, r);
            // A full step may keep the objective level; a shortened one must
            // strictly decrease it, or it is only shuffling round-off.
            if r > T::zero() && (s_new < s || (s_new <= s && t == T::one())) {
                center = c;
                radius = r;
                s = s_new;
                accepted = true;
                break;
            }
            t *= lit(0.5);
        }
        if step_len <= floor || ((!accepted || t < T::one()) && step_len <= floor * lit(1e3)) {
            return Some((center, radius, it, s));
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// `⌈log(1 - confidence) / log(1 - w⁴)⌉`, clamped to `[1, cap]`.
pub fn ransac_iteration_bound<T: Real>(confidence: T, inlier_ratio: T, cap: usize) -> usize {
    let w4 = inlier_ratio.powi(4);
    if w4 >= T::one() {
        return 1;
    }
    if w4 <= T::zero() {
        return cap;
    }
    let n = (T::one() - confidence).ln() / (T::one() - w4).ln();
    let n = crate::scalar::to_f64(n.ceil());
    if n.is_finite() && n < cap as f64 {
        (n as usize).max(1)
    } else {
        cap
    }
}

struct Hypothesis<T: Real> {
    inliers: Vec<usize>,
    rms: T,
}

fn score<T: Real>(cloud: &PointCloud<T>, model: &SphereModel<T>, threshold: T) -> Hypothesis<T> {
    let mut inliers = Vec::new();
    let mut sq = T::zero();
    for (i, p) in cloud.iter().enumerate() {
        let r = model.signed_distance(p);
        if r.abs() <= threshold {
            inliers.push(i);
            sq += r * r;
        }
    }
    let rms = if inliers.is_empty() {
        T::zero()
    } else {
        (sq / from_usize::<T>(inliers.len())).sqrt()
    };
    Hypothesis { inliers, rms }
}

/// RANSAC over four-point circumspheres, refit by least squares on the
/// consensus set. Deterministic for a given seed.
pub fn fit_sphere_ransac<T: Real>(cloud: &PointCloud<T>, params: &RansacParams<T>) -> Result<RansacFit<T>> {
    params.validate()?;
    let n = cloud.len();
    if n < params.min_points {
        return Err(Error::InsufficientPoints {
            needed: params.min_points,
            got: n,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<(SphereModel<T>, Hypothesis<T>)> = None;
    let mut bound = params.max_iterations;
    let mut iterations = 0;
    let pts = cloud.points();

    while iterations < bound {
        iterations += 1;
        let idx = sample(&mut rng, n, 4);
        let quad = [
            &pts[idx.index(0)],
            &pts[idx.index(1)],
            &pts[idx.index(2)],
            &pts[idx.index(3)],
        ];
        let Ok(model) = sphere_from_four_points(quad) else {
            continue;
        };
        let hyp = score(cloud, &model, params.inlier_threshold);
        let better = match &best {
            None => true,
            Some((_, b)) => {
                hyp.inliers.len() > b.inliers.len() || (hyp.inliers.len() == b.inliers.len() && hyp.rms < b.rms)
            }
        };
        if better {
            let ratio = from_usize::<T>(hyp.inliers.len()) / from_usize::<T>(n);
            bound = bound.min(ransac_iteration_bound(params.confidence, ratio, params.max_iterations));
            best = Some((model, hyp));
        }
    }

    let (hyp_model, hyp) = best.ok_or(Error::NoConsensus {
        best: 0,
        needed: params.min_points,
    })?;
    if hyp.inliers.len() < params.min_points {
        return Err(Error::NoConsensus {
            best: hyp.inliers.len(),
            needed: params.min_points,
        });
    }

    let lsq = LsqParams {
        min_points: 4,
        ..LsqParams::default()
    };
    let refit = fit_sphere_lsq_with(&cloud.select(&hyp.inliers), &lsq)
        .ok()
        .and_then(|r| r.sphere().copied().map(|s| (s, r.status)));

    // Inliers are re-scored against the refit so the reported set matches the model.
    let (model, inliers, rms, status) = match refit {
        Some((s, status)) => {
            let h = score(cloud, &s, params.inlier_threshold);
            if h.inliers.len() >= params.min_points {
                (s, h.inliers, h.rms, status)
            } else {
                (hyp_model, hyp.inliers, hyp.rms, FitStatus::Unrefined)
            }
        }
        None => (hyp_model, hyp.inliers, hyp.rms, FitStatus::Unrefined),
    };

    let count = inliers.len();
    Ok(RansacFit {
        report: FitReport {
            method: FitMethod::SphereRansac,
            diameter_mm: model.diameter(),
            model: FittedModel::Sphere(model),
            rms_residual_mm: rms,
            inlier_count: Some(count),
            inlier_fraction: Some(from_usize::<T>(count) / from_usize::<T>(n)),
            iterations,
            status,
        },
        result: RansacResult {
            model,
            inlier_indices: inliers,
            iterations_run: iterations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z).unwrap()
    }

    #[test]
    fn circumsphere_of_unit_points() {
        let (a, b, c, d) = (p(1.0, 0.0, 0.0), p(-1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 1.0));
        let s = sphere_from_four_points([&a, &b, &c, &d]).unwrap();
        assert!(s.center().coords().norm() < 1e-12);
        assert_relative_eq!(s.radius(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coplanar_quadruple_is_degenerate() {
        let (a, b, c, d) = (p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(1.0, 1.0, 0.0));
        assert!(matches!(
            sphere_from_four_points([&a, &b, &c, &d]),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn axis_points_need_lowered_minimum() {
        let c = PointCloud::from_xyz(&[
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ])
        .unwrap();
        assert!(matches!(
            fit_sphere_lsq(&c),
            Err(Error::InsufficientPoints { needed: 10, got: 6 })
        ));
        let params = LsqParams {
            min_points: 4,
            ..LsqParams::default()
        };
        let r = fit_sphere_lsq_with(&c, &params).unwrap();
        let s = r.sphere().unwrap();
        assert!(s.center().coords().norm() < 1e-12);
        assert_relative_eq!(s.radius(), 1.0, epsilon = 1e-12);
        assert!(r.rms_residual_mm < 1e-12);
        assert_eq!(r.status, FitStatus::Converged);
    }

    #[test]
    fn coplanar_cloud_rejected() {
        let xyz: Vec<[f64; 3]> = (0..20).map(|i| [i as f64, (i * i % 7) as f64, 5.0]).collect();
        let c = PointCloud::from_xyz(&xyz).unwrap();
        assert!(matches!(fit_sphere_lsq(&c), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn iteration_bound_formula() {
        assert_eq!(ransac_iteration_bound(0.99, 1.0, 10_000), 1);
        assert_eq!(ransac_iteration_bound(0.99, 0.0, 10_000), 10_000);
        // log(0.01)/log(1 - 0.5^4) = 71.35...
        assert_eq!(ransac_iteration_bound(0.99, 0.5, 10_000), 72);
        assert_eq!(ransac_iteration_bound(0.99, 0.5, 50), 50);
    }

    #[test]
    fn ransac_rejects_tiny_cloud() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let params = RansacParams {
            min_points: 4,
            ..RansacParams::default()
        };
        assert!(matches!(
            fit_sphere_ransac(&c, &params),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn ransac_param_validation() {
        let bad = RansacParams::<f64> {
            confidence: 1.0,
            ..RansacParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = RansacParams::<f64> {
            min_points: 3,
            ..RansacParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
