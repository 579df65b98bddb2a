//! Minimum-volume enclosing (Löwner-John) ellipsoid by Khachiyan's weight
//! iteration, with Todd–Yildirim away steps so the weights of interior points
//! can drop back to zero.
//!
//! Points are lifted to `q_i = (p_i, 1)`. For weights `u` on the simplex,
//! `X(u) = Σ u_i q_i q_iᵀ` and `M_i = q_iᵀ X⁻¹ q_i`. Since `Σ u_i M_i = 4`
//! always holds, `max M_i <= 4 (1 + tol)` certifies that the ellipsoid built
//! from `u` encloses every point up to a residual of `1 + 4 tol / 3`. The
//! iteration also waits for `M_i >= 4 (1 - tol)` on every point with positive
//! weight, so the support points lie within `4 tol / 3` of the surface.
//!
//! The weights start on a small core set of extreme points. First-order steps
//! settle the support fast but then close the gap only linearly, so every few
//! dozen steps a Newton solve of `M_i = 4` on the support is tried and kept
//! when it passes the stopping test.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};
use crate::types::{
    is_flat, principal_axes, EllipsoidModel, FitMethod, FitReport, FitStatus, FittedModel, Point3, PointCloud,
};

/// Recompute `X` from the weights this often to shed rank-one update drift.
const REFRESH_EVERY: usize = 64;
/// Attempt a Newton polish of the current support this often.
const POLISH_EVERY: usize = 50;
/// Supports larger than this are left to the first-order steps.
const POLISH_MAX_SUPPORT: usize = 64;
const POLISH_STEPS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MveeParams<T: Real> {
    /// Bound on the relative optimality gap `max M_i / 4 - 1`.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Fewest points accepted. Never below 4.
    pub min_points: usize,
}

impl<T: Real> Default for MveeParams<T> {
    fn default() -> Self {
        Self {
            tolerance: lit(1e-6),
            max_iterations: 5000,
            min_points: 10,
        }
    }
}

impl<T: Real> MveeParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > T::zero()) {
            return Err(Error::invalid("MVEE tolerance must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("MVEE max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Fits the minimum-volume ellipsoid enclosing `cloud`.
pub fn fit_ellipsoid_mvee<T: Real>(cloud: &PointCloud<T>, params: &MveeParams<T>) -> Result<FitReport<T>> {
    params.validate()?;
    let n = cloud.len();
    let needed = params.min_points.max(4);
    if n < needed {
        return Err(Error::InsufficientPoints { needed, got: n });
    }
    if is_flat(cloud)? {
        return Err(Error::DegenerateGeometry("points do not span three dimensions".into()));
    }

    // Affine invariance lets us work in a centered, unit-RMS frame.
    let nf = from_usize::<T>(n);
    let origin = cloud.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords()) / nf;
    let ms = cloud
        .iter()
        .fold(T::zero(), |acc, p| acc + (p.coords() - origin).norm_squared())
        / nf;
    let scale = ms.sqrt();
    let lifted: Vec<Vector4<T>> = cloud
        .iter()
        .map(|p| {
            let y = (p.coords() - origin) / scale;
            Vector4::new(y.x, y.y, y.z, T::one())
        })
        .collect();

    let (weights, iterations, status) = khachiyan(&lifted, params)?;

    let mut c = Vector3::zeros();
    let mut second = Matrix3::zeros();
    for (q, &w) in lifted.iter().zip(&weights) {
        let y = Vector3::new(q.x, q.y, q.z);
        c += y * w;
        second += y * y.transpose() * w;
    }
    let spread = second - c * c.transpose();
    let spread_inv = spread
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("singular weighted scatter".into()))?;
    let a_local = spread_inv / lit::<T>(3.0);

    let center = c * scale + origin;
    let shape = crate::types::symmetrize(&(a_local / (scale * scale)));
    let model = EllipsoidModel::from_shape_matrix(center, shape)?;

    Ok(FitReport {
        method: FitMethod::Ellipsoid,
        diameter_mm: model.semi_axes()[0] * lit(2.0),
        rms_residual_mm: radial_rms(&model, cloud),
        model: FittedModel::Ellipsoid(model),
        inlier_count: None,
        inlier_fraction: None,
        iterations,
        status,
    })
}

fn weighted_scatter<T: Real>(lifted: &[Vector4<T>], u: &[T]) -> Matrix4<T> {
    let mut x = Matrix4::zeros();
    for (q, &w) in lifted.iter().zip(u) {
        if w > T::zero() {
            x += q * q.transpose() * w;
        }
    }
    x
}

/// Uniform weight on the extreme points along each principal axis of the
/// (centered) cloud. Starting from this small core set instead of all points
/// spares the away steps that would otherwise have to zero every interior
/// weight one at a time.
fn initial_weights<T: Real>(lifted: &[Vector4<T>]) -> Vec<T> {
    let n = lifted.len();
    let mut cov = Matrix3::zeros();
    for q in lifted {
        let y = Vector3::new(q.x, q.y, q.z);
        cov += y * y.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut chosen: Vec<usize> = Vec::with_capacity(6);
    for axis in eig.eigenvectors.column_iter() {
        let proj = |i: usize| Vector3::new(lifted[i].x, lifted[i].y, lifted[i].z).dot(&axis);
        let (mut lo, mut hi) = (0, 0);
        for i in 1..n {
            if proj(i) < proj(lo) {
                lo = i;
            }
            if proj(i) > proj(hi) {
                hi = i;
            }
        }
        chosen.extend([lo, hi]);
    }
    chosen.sort_unstable();
    chosen.dedup();
    let mut u = vec![T::zero(); n];
    let w = T::one() / from_usize::<T>(chosen.len());
    for i in chosen {
        u[i] = w;
    }
    u
}

fn khachiyan<T: Real>(lifted: &[Vector4<T>], params: &MveeParams<T>) -> Result<(Vec<T>, usize, FitStatus)> {
    let n = lifted.len();
    let d1 = lit::<T>(4.0);
    let one = T::one();
    let bound = d1 * (one + params.tolerance);
    let floor_m = d1 * (one - params.tolerance);

    let mut u = initial_weights(lifted);
    let mut x = weighted_scatter(lifted, &u);
    if x.cholesky().is_none() {
        u = vec![one / from_usize::<T>(n); n];
        x = weighted_scatter(lifted, &u);
    }
    let mut best: Option<(T, Vec<T>)> = None;

    for it in 0..params.max_iterations {
        if it > 0 && it % REFRESH_EVERY == 0 {
            x = weighted_scatter(lifted, &u);
        }
        let x_inv = x
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::DegenerateGeometry("lifted scatter lost positive definiteness".into()))?;

        let (mut j, mut m_max) = (0, -one);
        let (mut k, mut m_min) = (usize::MAX, T::zero());
        for (i, q) in lifted.iter().enumerate() {
            let mi = q.dot(&(x_inv * q));
            if mi > m_max {
                m_max = mi;
                j = i;
            }
            if u[i] > T::zero() && (k == usize::MAX || mi < m_min) {
                m_min = mi;
                k = i;
            }
        }

        // Every support point must also sit on the boundary to within the
        // tolerance, which is what makes the fit tight and not only enclosing.
        if m_max <= bound && m_min >= floor_m {
            return Ok((u, it, FitStatus::Converged));
        }
        if it > 0 && it % POLISH_EVERY == 0 {
            if let Some((polished, steps)) = polish(lifted, &u, bound, floor_m) {
                return Ok((polished, (it + steps).min(params.max_iterations), FitStatus::Converged));
            }
        }
        let gap_up = m_max / d1 - one;
        let gap_down = one - m_min / d1;
        if best.as_ref().is_none_or(|(b, _)| m_max < *b) {
            best = Some((m_max, u.clone()));
        }
        let (idx, tau, drop) = if gap_up >= gap_down || k == usize::MAX {
            (j, (m_max - d1) / (d1 * (m_max - one)), false)
        } else {
            // Away step, clipped so the weight stays non-negative.
            let floor = -u[k] / (one - u[k]);
            let tau = (m_min - d1) / (d1 * (m_min - one));
            if tau > floor {
                (k, tau, false)
            } else {
                (k, floor, true)
            }
        };

        let keep = one - tau;
        for w in u.iter_mut() {
            *w *= keep;
        }
        u[idx] += tau;
        if drop || u[idx] < T::zero() {
            u[idx] = T::zero();
        }
        let q = &lifted[idx];
        x = x * keep + q * q.transpose() * tau;
    }

    // Budget exhausted: return the iterate with the smallest optimality gap seen,
    // or the final one if it is better still.
    let x_inv = weighted_scatter(lifted, &u)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::DegenerateGeometry("lifted scatter lost positive definiteness".into()))?;
    let last = lifted
        .iter()
        .map(|q| q.dot(&(x_inv * q)))
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let weights = match best {
        Some((b, w)) if b < last => w,
        _ => u,
    };
    Ok((weights, params.max_iterations, FitStatus::Unconverged))
}

fn lifted_inverse<T: Real>(lifted: &[Vector4<T>], u: &[T]) -> Option<Matrix4<T>> {
    weighted_scatter(lifted, u).cholesky().map(|c| c.inverse())
}

/// Newton's method on `M_i(u) = 4` over the current support, where
/// `∂M_i/∂u_j = -(q_iᵀ X⁻¹ q_j)²`. The first-order steps find the support
/// quickly but then close the gap only linearly; this finishes in a few
/// quadratically convergent steps. Weights driven to zero leave the support.
/// Returns the weights only if they pass the full stopping test.
fn polish<T: Real>(lifted: &[Vector4<T>], u: &[T], bound: T, floor_m: T) -> Option<(Vec<T>, usize)> {
    let mut support: Vec<usize> = (0..lifted.len()).filter(|&i| u[i] > T::zero()).collect();
    if support.len() > POLISH_MAX_SUPPORT {
        return None;
    }
    let d1 = lit::<T>(4.0);
    let mut w = u.to_vec();
    let residual = |x_inv: &Matrix4<T>, s: &[usize]| -> DVector<T> {
        DVector::from_iterator(s.len(), s.iter().map(|&i| lifted[i].dot(&(x_inv * lifted[i])) - d1))
    };
    let mut x_inv = lifted_inverse(lifted, &w)?;
    let mut f = residual(&x_inv, &support);
    for step in 1..=POLISH_STEPS {
        let k = support.len();
        let g = DMatrix::from_fn(k, k, |a, b| {
            let v = lifted[support[a]].dot(&(x_inv * lifted[support[b]]));
            -(v * v)
        });
        let delta = g.svd(true, true).solve(&(-&f), lit(1e-14)).ok()?;

        // Longest step in (0, 1] that keeps every weight non-negative.
        let mut t = T::one();
        for (a, &i) in support.iter().enumerate() {
            if delta[a] < T::zero() {
                t = t.min(-w[i] / delta[a]);
            }
        }
        let norm = f.norm();
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = w.clone();
            for (a, &i) in support.iter().enumerate() {
                trial[i] = (w[i] + delta[a] * t).max(T::zero());
            }
            if let Some(inv) = lifted_inverse(lifted, &trial) {
                let kept: Vec<usize> = support.iter().copied().filter(|&i| trial[i] > T::zero()).collect();
                let fr = residual(&inv, &kept);
                if kept.len() < support.len() || fr.norm() < norm {
                    accepted = Some((trial, inv, kept, fr));
                    break;
                }
            }
            t /= lit(2.0);
        }
        let (trial, inv, kept, fr) = accepted?;
        w = trial;
        x_inv = inv;
        support = kept;
        f = fr;

        let (mut worst, mut m_worst, mut ok) = (0, T::zero(), true);
        for (i, q) in lifted.iter().enumerate() {
            let mi = q.dot(&(x_inv * q));
            if mi > m_worst {
                (worst, m_worst) = (i, mi);
            }
            if mi > bound || (w[i] > T::zero() && mi < floor_m) {
                ok = false;
            }
        }
        if ok {
            // At the solution the weights sum to one only within the tolerance.
            let total = w.iter().fold(T::zero(), |a, &b| a + b);
            let w: Vec<T> = w.iter().map(|&v| v / total).collect();
            let x_inv = lifted_inverse(lifted, &w)?;
            let certified = lifted.iter().zip(&w).all(|(q, &wi)| {
                let mi = q.dot(&(x_inv * q));
                mi <= bound && (wi == T::zero() || mi >= floor_m)
            });
            return certified.then_some((w, step));
        }
        // Solved on the support but some point is left outside: it joins.
        if m_worst > bound && f.amax() < lit(1e-9) && !support.contains(&worst) {
            support.push(worst);
            f = residual(&x_inv, &support);
        }
    }
    None
}

/// RMS of the distance from each point to the surface along the ray from the center.
fn radial_rms<T: Real>(model: &EllipsoidModel<T>, cloud: &PointCloud<T>) -> T {
    let minor = model.semi_axes()[2];
    let sq = cloud.iter().fold(T::zero(), |acc, p| {
        let q = model.residual(p);
        let dist = (p.coords() - model.center()).norm();
        let r = if q > T::zero() {
            dist * (one_minus_inv_sqrt(q))
        } else {
            minor
        };
        acc + r * r
    });
    (sq / from_usize::<T>(cloud.len())).sqrt()
}

fn one_minus_inv_sqrt<T: Real>(q: T) -> T {
    T::one() - T::one() / q.sqrt()
}

/// Semi-axis lengths (descending) and principal frame of `model`'s shape matrix.
pub fn ellipsoid_axes<T: Real>(model: &EllipsoidModel<T>) -> Result<([T; 3], Matrix3<T>)> {
    principal_axes(model.shape_matrix())
}

/// `(p - c)ᵀ A (p - c)`: below 1 inside, 1 on the surface.
pub fn point_ellipsoid_residual<T: Real>(model: &EllipsoidModel<T>, p: &Point3<T>) -> T {
    model.residual(p)
}
