//! Fruit sizing from 3D point clouds.
//!
//! Fits least-squares and RANSAC spheres and minimum-volume enclosing
//! ellipsoids to segmented clouds, back-projects masked depth images, and
//! ships a ray-casting depth simulator plus sizing and detection metrics for
//! evaluation. Everything numeric is generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix the scalar for the common cases.

// `!(x > 0)` is used on purpose: unlike `x <= 0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ellipsoid_fit;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod sphere_fit;
pub mod synth;
pub mod types;

pub use ellipsoid_fit::{fit_ellipsoid_mvee, MveeParams};
pub use error::{Error, Result};
pub use pipeline::{extract_cloud, fit_cloud, ExtractParams, FitOptions};
pub use scalar::Real;
pub use sphere_fit::{fit_sphere_lsq, fit_sphere_lsq_with, fit_sphere_ransac, LsqParams, RansacParams};
pub use types::{
    CameraIntrinsics, DepthFrame, EllipsoidModel, FitMethod, FitReport, FitStatus, FittedModel, MaskRegion, Point3,
    PointCloud, SphereModel,
};

pub type Point3f64 = Point3<f64>;
pub type Point3f32 = Point3<f32>;
pub type PointCloud64 = PointCloud<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type SphereModel64 = SphereModel<f64>;
pub type SphereModel32 = SphereModel<f32>;
pub type EllipsoidModel64 = EllipsoidModel<f64>;
pub type EllipsoidModel32 = EllipsoidModel<f32>;
pub type FitReport64 = FitReport<f64>;
pub type FitReport32 = FitReport<f32>;
pub type CameraIntrinsics64 = CameraIntrinsics<f64>;
pub type DepthFrame64 = DepthFrame<f64>;
