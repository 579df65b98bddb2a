//! Depth + mask to fitted size, shared by the CLI and the benchmarks.

use crate::ellipsoid_fit::{fit_ellipsoid_mvee, MveeParams};
use crate::error::Result;
use crate::io::{back_project, erode_mask, DEFAULT_MAX_DEPTH_MM, DEFAULT_MIN_DEPTH_MM};
use crate::scalar::{lit, Real};
use crate::sphere_fit::{fit_sphere_lsq_with, fit_sphere_ransac, LsqParams, RansacParams};
use crate::types::{CameraIntrinsics, DepthFrame, FitMethod, FitReport, MaskRegion, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FitOptions<T: Real> {
    pub lsq: LsqParams<T>,
    pub ransac: RansacParams<T>,
    pub mvee: MveeParams<T>,
}

pub fn fit_cloud<T: Real>(cloud: &PointCloud<T>, method: FitMethod, opts: &FitOptions<T>) -> Result<FitReport<T>> {
    match method {
        FitMethod::SphereLsq => fit_sphere_lsq_with(cloud, &opts.lsq),
        FitMethod::SphereRansac => fit_sphere_ransac(cloud, &opts.ransac).map(|f| f.report),
        FitMethod::Ellipsoid => fit_ellipsoid_mvee(cloud, &opts.mvee),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractParams<T: Real> {
    /// Mask erosion radius applied before back-projection, to drop mixed
    /// depth at object boundaries.
    pub erode_px: usize,
    pub min_depth_mm: T,
    pub max_depth_mm: T,
}

impl<T: Real> Default for ExtractParams<T> {
    fn default() -> Self {
        Self {
            erode_px: 1,
            min_depth_mm: lit(DEFAULT_MIN_DEPTH_MM),
            max_depth_mm: lit(DEFAULT_MAX_DEPTH_MM),
        }
    }
}

pub fn extract_cloud<T: Real>(
    depth: &DepthFrame<T>,
    mask: &MaskRegion,
    intr: &CameraIntrinsics<T>,
    params: &ExtractParams<T>,
) -> Result<PointCloud<T>> {
    let mask = erode_mask(mask, params.erode_px);
    back_project(depth, &mask, intr, params.min_depth_mm, params.max_depth_mm)
}
