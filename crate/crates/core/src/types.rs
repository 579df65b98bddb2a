//! Shared domain types and elementary rigid transforms.
//!
//! All lengths are millimeters. Every type validates finiteness at
//! construction and is immutable afterwards.

use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, rel_tol, Real};

/// A point in camera or world space, millimeters.
#[derive(Clone, Copy, PartialEq)]
pub struct Point3<T: Real> {
    coords: Vector3<T>,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(coords: Vector3<T>) -> Result<Self> {
        if coords.iter().all(|c| c.is_finite()) {
            Ok(Self { coords })
        } else {
            Err(Error::invalid(format!("non-finite point {coords:?}")))
        }
    }

    /// Caller guarantees finiteness.
    pub(crate) fn from_vector_unchecked(coords: Vector3<T>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self { coords }
    }

    pub fn origin() -> Self {
        Self {
            coords: Vector3::zeros(),
        }
    }

    pub fn x(&self) -> T {
        self.coords.x
    }

    pub fn y(&self) -> T {
        self.coords.y
    }

    pub fn z(&self) -> T {
        self.coords.z
    }

    pub fn coords(&self) -> &Vector3<T> {
        &self.coords
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.coords.x, self.coords.y, self.coords.z]
    }

    pub fn distance(&self, other: &Point3<T>) -> T {
        (self.coords - other.coords).norm()
    }

    /// Converts between scalar types (e.g. `f64` -> `f32`).
    pub fn cast<U: Real>(&self) -> Point3<U> {
        Point3 {
            coords: self.coords.map(|c| lit::<U>(crate::scalar::to_f64(c))),
        }
    }
}

impl<T: Real> fmt::Debug for Point3<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.coords.x, self.coords.y, self.coords.z)
    }
}

/// Ordered point set. Indices are stable and are what inlier sets refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T: Real> {
    points: Vec<Point3<T>>,
    source: Option<String>,
}

impl<T: Real> Default for PointCloud<T> {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Point3<T>>) -> Self {
        Self { points, source: None }
    }

    pub fn from_xyz(xyz: &[[T; 3]]) -> Result<Self> {
        xyz.iter()
            .map(|p| Point3::new(p[0], p[1], p[2]))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3<T>> {
        self.points.iter()
    }

    /// Points at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            source: self.source.clone(),
        }
    }

    pub fn into_points(self) -> Vec<Point3<T>> {
        self.points
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud {
            points: self.points.iter().map(Point3::cast).collect(),
            source: self.source.clone(),
        }
    }
}

impl<T: Real> FromIterator<Point3<T>> for PointCloud<T> {
    fn from_iter<I: IntoIterator<Item = Point3<T>>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl<'a, T: Real> IntoIterator for &'a PointCloud<T> {
    type Item = &'a Point3<T>;
    type IntoIter = std::slice::Iter<'a, Point3<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereModel<T: Real> {
    center: Point3<T>,
    radius: T,
}

impl<T: Real> SphereModel<T> {
    pub fn new(center: Point3<T>, radius: T) -> Result<Self> {
        if radius.is_finite() && radius > T::zero() {
            Ok(Self { center, radius })
        } else {
            Err(Error::InvalidModel(format!("sphere radius {radius} must be positive")))
        }
    }

    pub fn center(&self) -> &Point3<T> {
        &self.center
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn diameter(&self) -> T {
        self.radius + self.radius
    }

    /// Signed distance from `p` to the sphere surface (positive outside).
    pub fn signed_distance(&self, p: &Point3<T>) -> T {
        p.distance(&self.center) - self.radius
    }
}

/// Ellipsoid `{p : (p - c)ᵀ A (p - c) <= 1}` with its principal frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipsoidModel<T: Real> {
    center: Vector3<T>,
    shape_matrix: Matrix3<T>,
    semi_axes: [T; 3],
    orientation: Matrix3<T>,
}

impl<T: Real> EllipsoidModel<T> {
    /// Builds the model from a symmetric positive-definite shape matrix.
    pub fn from_shape_matrix(center: Vector3<T>, shape_matrix: Matrix3<T>) -> Result<Self> {
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidModel("non-finite ellipsoid center".into()));
        }
        let asym = (shape_matrix - shape_matrix.transpose()).norm();
        if !(asym <= rel_tol::<T>(1e-9) * shape_matrix.norm()) {
            return Err(Error::InvalidModel("shape matrix is not symmetric".into()));
        }
        let (semi_axes, orientation) = principal_axes(&shape_matrix)?;
        Ok(Self {
            center,
            shape_matrix: symmetrize(&shape_matrix),
            semi_axes,
            orientation,
        })
    }

    /// Builds the model from semi-axis lengths and a matching orthonormal frame.
    pub fn from_axes(center: Vector3<T>, semi_axes: [T; 3], orientation: Matrix3<T>) -> Result<Self> {
        if semi_axes.iter().any(|a| !(a.is_finite() && *a > T::zero())) {
            return Err(Error::InvalidModel("semi-axes must be positive".into()));
        }
        check_orthonormal(&orientation)?;
        let inv_sq = Vector3::new(
            T::one() / (semi_axes[0] * semi_axes[0]),
            T::one() / (semi_axes[1] * semi_axes[1]),
            T::one() / (semi_axes[2] * semi_axes[2]),
        );
        let a = orientation * Matrix3::from_diagonal(&inv_sq) * orientation.transpose();
        Self::from_shape_matrix(center, symmetrize(&a))
    }

    pub fn center(&self) -> &Vector3<T> {
        &self.center
    }

    pub fn shape_matrix(&self) -> &Matrix3<T> {
        &self.shape_matrix
    }

    /// Semi-axis lengths in millimeters, descending.
    pub fn semi_axes(&self) -> [T; 3] {
        self.semi_axes
    }

    /// Columns are the principal directions matching `semi_axes`.
    pub fn orientation(&self) -> &Matrix3<T> {
        &self.orientation
    }

    pub fn volume(&self) -> T {
        lit::<T>(4.0 / 3.0) * T::pi() * self.semi_axes[0] * self.semi_axes[1] * self.semi_axes[2]
    }

    /// `(p - c)ᵀ A (p - c)`; 1 on the surface.
    pub fn residual(&self, p: &Point3<T>) -> T {
        let d = p.coords() - self.center;
        d.dot(&(self.shape_matrix * d))
    }
}

/// Which fitter produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitMethod {
    SphereLsq,
    SphereRansac,
    Ellipsoid,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::SphereLsq, FitMethod::SphereRansac, FitMethod::Ellipsoid];

    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::SphereLsq => "lsq-sphere",
            FitMethod::SphereRansac => "ransac-sphere",
            FitMethod::Ellipsoid => "ellipsoid",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsq-sphere" | "sphere-lsq" => Ok(FitMethod::SphereLsq),
            "ransac-sphere" | "sphere-ransac" => Ok(FitMethod::SphereRansac),
            "ellipsoid" => Ok(FitMethod::Ellipsoid),
            other => Err(Error::invalid(format!("unknown fit method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FittedModel<T: Real> {
    Sphere(SphereModel<T>),
    Ellipsoid(EllipsoidModel<T>),
}

/// Whether the iterative stage of a fit finished cleanly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    /// Geometric refinement failed; the algebraic sphere was returned.
    Unrefined,
    /// Iteration budget exhausted; the last iterate was returned.
    Unconverged,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::Unrefined => "unrefined",
            FitStatus::Unconverged => "unconverged",
        }
    }
}

/// Per-object fit output.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport<T: Real> {
    pub method: FitMethod,
    pub model: FittedModel<T>,
    /// Reported scalar size: 2R for spheres, twice the major semi-axis for ellipsoids.
    pub diameter_mm: T,
    pub rms_residual_mm: T,
    pub inlier_count: Option<usize>,
    pub inlier_fraction: Option<T>,
    pub iterations: usize,
    pub status: FitStatus,
}

impl<T: Real> FitReport<T> {
    pub fn sphere(&self) -> Option<&SphereModel<T>> {
        match &self.model {
            FittedModel::Sphere(s) => Some(s),
            FittedModel::Ellipsoid(_) => None,
        }
    }

    pub fn ellipsoid(&self) -> Option<&EllipsoidModel<T>> {
        match &self.model {
            FittedModel::Ellipsoid(e) => Some(e),
            FittedModel::Sphere(_) => None,
        }
    }

    /// Three semi-axes, descending. Spheres repeat the radius.
    pub fn semi_axes(&self) -> [T; 3] {
        match &self.model {
            FittedModel::Sphere(s) => [s.radius(); 3],
            FittedModel::Ellipsoid(e) => e.semi_axes(),
        }
    }

    pub fn center(&self) -> Vector3<T> {
        match &self.model {
            FittedModel::Sphere(s) => *s.center().coords(),
            FittedModel::Ellipsoid(e) => *e.center(),
        }
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    fx: T,
    fy: T,
    cx: T,
    cy: T,
    width: usize,
    height: usize,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let ok = fx.is_finite()
            && fy.is_finite()
            && fx > T::zero()
            && fy > T::zero()
            && cx >= T::zero()
            && cy >= T::zero()
            && cx < from_usize(width)
            && cy < from_usize(height);
        if ok {
            Ok(Self {
                fx,
                fy,
                cx,
                cy,
                width,
                height,
            })
        } else {
            Err(Error::invalid(format!(
                "camera intrinsics fx={fx} fy={fy} cx={cx} cy={cy} for {width}x{height}"
            )))
        }
    }

    pub fn fx(&self) -> T {
        self.fx
    }

    pub fn fy(&self) -> T {
        self.fy
    }

    pub fn cx(&self) -> T {
        self.cx
    }

    pub fn cy(&self) -> T {
        self.cy
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Unit-depth ray through pixel `(u, v)`: `((u - cx)/fx, (v - cy)/fy, 1)`.
    pub fn ray(&self, u: usize, v: usize) -> Vector3<T> {
        Vector3::new(
            (from_usize::<T>(u) - self.cx) / self.fx,
            (from_usize::<T>(v) - self.cy) / self.fy,
            T::one(),
        )
    }
}

/// Metric depth image, row-major, 0 = invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame<T: Real> {
    width: usize,
    height: usize,
    depth: Vec<T>,
}

impl<T: Real> DepthFrame<T> {
    pub fn new(width: usize, height: usize, depth: Vec<T>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::invalid(format!(
                "depth grid has {} values, expected {width}x{height}",
                depth.len()
            )));
        }
        if let Some(bad) = depth.iter().find(|d| !(d.is_finite() && **d >= T::zero())) {
            return Err(Error::invalid(format!(
                "depth value {bad} is not a finite non-negative number"
            )));
        }
        Ok(Self { width, height, depth })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![T::zero(); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> T {
        self.depth[v * self.width + u]
    }

    pub fn values(&self) -> &[T] {
        &self.depth
    }
}

/// Binary object mask, row-major, `true` = object pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskRegion {
    width: usize,
    height: usize,
    bitmap: Vec<bool>,
}

impl MaskRegion {
    pub fn new(width: usize, height: usize, bitmap: Vec<bool>) -> Result<Self> {
        if bitmap.len() != width * height {
            return Err(Error::invalid(format!(
                "mask has {} pixels, expected {width}x{height}",
                bitmap.len()
            )));
        }
        Ok(Self { width, height, bitmap })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bitmap: vec![false; width * height],
        }
    }

    /// Mask with pixel `(u, v)` set iff `f(u, v)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bitmap = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bitmap.push(f(u, v));
            }
        }
        Self { width, height, bitmap }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bitmap[v * self.width + u]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bitmap
    }

    pub fn count(&self) -> usize {
        self.bitmap.iter().filter(|b| **b).count()
    }

    pub fn same_shape(&self, other: &MaskRegion) -> bool {
        self.width == other.width && self.height == other.height
    }
}

pub(crate) fn symmetrize<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub(crate) fn check_orthonormal<T: Real>(r: &Matrix3<T>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite rotation matrix"));
    }
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if err <= rel_tol::<T>(1e-9) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "matrix is not orthonormal (max |RᵀR - I| = {err})"
        )))
    }
}

/// Semi-axis lengths (descending) and principal frame of an SPD shape matrix.
///
/// Each of the first two columns is signed so that its first non-negligible
/// component is positive; the third is their cross product, so the frame is a
/// proper rotation. Equal lengths are ordered lexicographically by direction.
pub fn principal_axes<T: Real>(shape_matrix: &Matrix3<T>) -> Result<([T; 3], Matrix3<T>)> {
    if !shape_matrix.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidModel("non-finite shape matrix".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(shape_matrix));
    let mut axes: Vec<(T, Vector3<T>)> = Vec::with_capacity(3);
    for k in 0..3 {
        let lambda = eig.eigenvalues[k];
        if !(lambda > T::zero()) {
            return Err(Error::InvalidModel(format!(
                "shape matrix is not positive definite (eigenvalue {lambda})"
            )));
        }
        let dir = positive_leading(eig.eigenvectors.column(k).normalize());
        axes.push((T::one() / lambda.sqrt(), dir));
    }
    let tie = rel_tol::<T>(1e-12);
    axes.sort_by(|a, b| {
        let scale = if a.0 > b.0 { a.0 } else { b.0 };
        if (a.0 - b.0).abs() <= tie * scale {
            lex_cmp(&a.1, &b.1)
        } else {
            b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal)
        }
    });
    let c0 = axes[0].1;
    let c1 = axes[1].1;
    let c2 = c0.cross(&c1).normalize();
    Ok(([axes[0].0, axes[1].0, axes[2].0], Matrix3::from_columns(&[c0, c1, c2])))
}

fn positive_leading<T: Real>(v: Vector3<T>) -> Vector3<T> {
    let eps = lit::<T>(1e-12);
    for c in v.iter() {
        if c.abs() > eps {
            return if *c < T::zero() { -v } else { v };
        }
    }
    v
}

fn lex_cmp<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> std::cmp::Ordering {
    for k in 0..3 {
        match a[k].partial_cmp(&b[k]) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o.reverse(),
        }
    }
    std::cmp::Ordering::Equal
}

/// Applies `p -> R p + t` to every point, preserving order.
pub fn transform_cloud<T: Real>(
    cloud: &PointCloud<T>,
    rotation: &Matrix3<T>,
    translation: &Vector3<T>,
) -> Result<PointCloud<T>> {
    check_orthonormal(rotation)?;
    if !translation.iter().all(|t| t.is_finite()) {
        return Err(Error::invalid("non-finite translation"));
    }
    let points = cloud
        .iter()
        .map(|p| Point3::from_vector(rotation * p.coords() + translation))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud {
        points,
        source: cloud.source.clone(),
    })
}

/// Arithmetic mean of the cloud's coordinates.
pub fn centroid<T: Real>(cloud: &PointCloud<T>) -> Result<Point3<T>> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum = cloud.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords());
    Ok(Point3::from_vector_unchecked(sum / from_usize::<T>(cloud.len())))
}

/// Eigenvalues (ascending) of the population covariance of the cloud.
pub(crate) fn covariance_eigenvalues<T: Real>(cloud: &PointCloud<T>) -> Result<[T; 3]> {
    let c = centroid(cloud)?;
    let mut cov = Matrix3::zeros();
    for p in cloud {
        let d = p.coords() - c.coords();
        cov += d * d.transpose();
    }
    cov /= from_usize::<T>(cloud.len());
    let mut ev: Vec<T> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok([ev[0], ev[1], ev[2]])
}

/// True when the cloud's spread collapses onto a plane, line or point.
pub(crate) fn is_flat<T: Real>(cloud: &PointCloud<T>) -> Result<bool> {
    let ev = covariance_eigenvalues(cloud)?;
    Ok(!(ev[0] > lit::<T>(1e-12) * ev[2]) || ev[2] <= T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(xyz: &[[f64; 3]]) -> PointCloud<f64> {
        PointCloud::from_xyz(xyz).unwrap()
    }

    #[test]
    fn rejects_non_finite_points() {
        assert!(Point3::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(Point3::new(0.0, f64::INFINITY, 0.0).is_err());
        assert!(PointCloud::from_xyz(&[[0.0, 0.0, f64::NEG_INFINITY]]).is_err());
        assert!(SphereModel::new(Point3::origin(), f64::NAN).is_err());
        assert!(SphereModel::new(Point3::origin(), 0.0).is_err());
        assert!(DepthFrame::new(1, 1, vec![f64::NAN]).is_err());
        assert!(DepthFrame::new(1, 1, vec![-1.0]).is_err());
    }

    #[test]
    fn identity_transform_is_noop() {
        let c = cloud(&[[1.0, 2.0, 3.0], [-4.0, 5.5, 0.25]]);
        let out = transform_cloud(&c, &Matrix3::identity(), &Vector3::zeros()).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn pure_translation() {
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        let out = transform_cloud(&c, &Matrix3::identity(), &Vector3::new(5.0, 0.0, 0.0)).unwrap();
        assert_eq!(out.points()[0].to_array(), [5.0, 0.0, 0.0]);
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        let scale = Matrix3::identity() * 2.0;
        assert!(matches!(
            transform_cloud(&c, &scale, &Vector3::zeros()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn transform_then_inverse_restores_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xyz: Vec<[f64; 3]> = (0..100)
            .map(|_| {
                [
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(0.0..900.0),
                ]
            })
            .collect();
        let c = cloud(&xyz);
        let r = *Rotation3::new(Vector3::new(0.3, -1.1, 2.0)).matrix();
        let t = Vector3::new(12.0, -7.5, 300.0);
        let moved = transform_cloud(&c, &r, &t).unwrap();
        let back = transform_cloud(&moved, &r.transpose(), &(-(r.transpose() * t))).unwrap();
        for (a, b) in c.iter().zip(back.iter()) {
            assert!((a.coords() - b.coords()).amax() <= 1e-9);
        }
    }

    #[test]
    fn centroid_cases() {
        let mid = centroid(&cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])).unwrap();
        assert_eq!(mid.to_array(), [1.0, 0.0, 0.0]);
        let single = centroid(&cloud(&[[3.5, -1.0, 8.0]])).unwrap();
        assert_eq!(single.to_array(), [3.5, -1.0, 8.0]);
        assert!(matches!(
            centroid(&PointCloud::<f64>::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn centroid_of_uniform_sphere_samples() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let center = Vector3::new(10.0, 20.0, 30.0);
        let pts: Vec<Point3<f64>> = (0..10_000)
            .map(|_| {
                let d = Vector3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
                .normalize();
                Point3::from_vector(center + d * 15.0).unwrap()
            })
            .collect();
        let c = centroid(&PointCloud::new(pts)).unwrap();
        assert!((c.coords() - center).norm() < 0.5);
    }

    #[test]
    fn principal_axes_isotropic_and_diagonal() {
        let (ax, _) = principal_axes(&(Matrix3::<f64>::identity() / 9.0)).unwrap();
        for a in ax {
            assert_relative_eq!(a, 3.0, epsilon = 1e-12);
        }
        let diag = Matrix3::from_diagonal(&Vector3::new(1.0 / 25.0, 1.0 / 16.0, 1.0 / 9.0));
        let (ax, r) = principal_axes(&diag).unwrap();
        assert_relative_eq!(ax[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(ax[1], 4.0, epsilon = 1e-12);
        assert_relative_eq!(ax[2], 3.0, epsilon = 1e-12);
        assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn principal_axes_rejects_indefinite() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert!(matches!(principal_axes(&m), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn ellipsoid_round_trip_from_axes() {
        let r = *Rotation3::new(Vector3::new(0.4, 0.2, -0.7)).matrix();
        let e = EllipsoidModel::from_axes(Vector3::new(1.0, 2.0, 3.0), [15.0, 12.0, 10.0], r).unwrap();
        assert_relative_eq!(e.semi_axes()[0], 15.0, epsilon = 1e-12);
        assert_relative_eq!(e.semi_axes()[2], 10.0, epsilon = 1e-12);
        let rebuilt = EllipsoidModel::from_axes(*e.center(), e.semi_axes(), *e.orientation()).unwrap();
        let rel = (rebuilt.shape_matrix() - e.shape_matrix()).norm() / e.shape_matrix().norm();
        assert!(rel <= 1e-9, "relative Frobenius error {rel}");
        let o = e.orientation();
        assert!((o.transpose() * o - Matrix3::identity()).amax() <= 1e-9);
        assert_relative_eq!(o.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipsoid_rejects_asymmetric_matrix() {
        let mut m = Matrix3::<f64>::identity();
        m[(0, 1)] = 0.1;
        assert!(EllipsoidModel::from_shape_matrix(Vector3::zeros(), m).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(CameraIntrinsics::new(0.0, 600.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(600.0, 600.0, 640.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn flatness_detection() {
        let plane = cloud(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.5, 0.3, 0.0],
        ]);
        assert!(is_flat(&plane).unwrap());
        let solid = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(!is_flat(&solid).unwrap());
    }
}
