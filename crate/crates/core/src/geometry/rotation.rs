use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Below this angle Rodrigues' formula is replaced by its second-order expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' rotation formula for an axis-angle vector (radians times unit axis).
pub fn axis_angle_to_matrix(v: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "axis-angle vector must be finite, got {v:?}"
        )));
    }
    let theta = v.norm();
    if theta < SMALL_ANGLE {
        let k = skew(v);
        return Ok(Matrix3::identity() + k + 0.5 * k * k);
    }
    let k = skew(&(v / theta));
    Ok(Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k))
}

/// Rewrites `v` so that its angle lies in `[0, π]` while describing the same rotation.
pub fn canonicalize(v: &Vector3<f64>) -> Vector3<f64> {
    let theta = v.norm();
    if theta < SMALL_ANGLE {
        return *v;
    }
    let axis = v / theta;
    let wrapped = theta.rem_euclid(2.0 * PI);
    if wrapped > PI {
        -axis * (2.0 * PI - wrapped)
    } else {
        axis * wrapped
    }
}

/// Rotation angle in `[0, π]`.
pub fn rotation_angle(v: &Vector3<f64>) -> f64 {
    canonicalize(v).norm()
}
