//! 3D angle primitives. All outputs are in degrees.

use thiserror::Error;

use crate::pose::Vec3;

/// Rays shorter than this are treated as degenerate.
const MIN_RAY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate ray at vertex ({:.6}, {:.6}, {:.6})", .vertex[0], .vertex[1], .vertex[2])]
    DegenerateRay { vertex: [f64; 3] },
    #[error("zero-length vector")]
    ZeroVector,
    #[error("vector ({x:.6}, {y:.6}) has no horizontal direction")]
    ZeroHorizontal { x: f64, y: f64 },
}

/// Angle at vertex `b` between rays `b -> a` and `b -> c`, in [0, 180].
pub fn interior_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> Result<f64, GeometryError> {
    let u = a - b;
    let v = c - b;
    let nu = u.norm();
    let nv = v.norm();
    if nu < MIN_RAY || nv < MIN_RAY {
        return Err(GeometryError::DegenerateRay {
            vertex: [b.x, b.y, b.z],
        });
    }
    let cos = (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Unsigned angle between two vectors, in [0, 180].
pub fn angle_between(u: &Vec3, v: &Vec3) -> Result<f64, GeometryError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu < MIN_RAY || nv < MIN_RAY {
        return Err(GeometryError::ZeroVector);
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Direction of the horizontal projection of `v`: `atan2(v_y, v_x)`.
pub fn heading_xy(v: &Vec3) -> Result<f64, GeometryError> {
    if v.x == 0.0 && v.y == 0.0 {
        return Err(GeometryError::ZeroHorizontal { x: v.x, y: v.y });
    }
    Ok(v.y.atan2(v.x).to_degrees())
}

/// Wraps an angle to (-180, 180].
pub fn wrap_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}
