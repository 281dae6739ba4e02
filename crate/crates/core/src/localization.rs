//! Least-squares intersection of subarray rays.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DirectionVector, Point3};

/// Reciprocal condition number below which the normal matrix is treated as
/// singular.
pub const RCOND_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ray {
    pub origin: Point3,
    pub direction: DirectionVector,
}

impl Ray {
    pub fn new(origin: Point3, direction: DirectionVector) -> Self {
        Self { origin, direction }
    }

    /// Squared distance from `p` to the line through this ray.
    pub fn distance_sq(&self, p: &Point3) -> f64 {
        let d = p - self.origin;
        let k = self.direction.as_vector();
        (d - k * k.dot(&d)).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocationEstimate {
    pub point: Point3,
    /// `Σ_i dist²(p̂, ray_i)`.
    pub residual: f64,
    /// 2-norm condition number of `Σ_i B_i`.
    pub condition: f64,
}

/// Sum of squared point-to-line distances.
pub fn ray_cost(rays: &[Ray], p: &Point3) -> f64 {
    rays.iter().map(|r| r.distance_sq(p)).sum()
}

/// `p̂ = (Σ B_i)^{-1} Σ B_i o_i` with `B_i = I - k_i k_i^T`.
pub fn ls_intersect(rays: &[Ray]) -> Result<LocationEstimate> {
    if rays.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rays, got {}", rays.len())));
    }
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Point3::zeros();
    for r in rays {
        let k = r.direction.as_vector();
        let proj = Matrix3::identity() - k * k.transpose();
        b += proj * r.origin;
        a += proj;
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(rcond >= RCOND_TOL) {
        return Err(Error::DegenerateGeometry { rcond });
    }
    let point = a
        .cholesky()
        .map(|c| c.solve(&b))
        .ok_or(Error::DegenerateGeometry { rcond })?;
    Ok(LocationEstimate {
        point,
        residual: ray_cost(rays, &point),
        condition: smax / smin,
    })
}
