use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use super::BodyError;

/// Norm below which a Gram–Schmidt step is considered degenerate.
pub const DEGENERATE_NORM: f64 = 1e-8;

/// Margin keeping the arccos argument inside (-1, 1) so its derivative
/// stays finite.
pub const GEODESIC_CLAMP: f64 = 1e-7;

pub const IDENTITY_6D: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Gram–Schmidt recovery of a rotation from its first two (unnormalized)
/// columns.
pub fn rot6d_to_matrix(r6: &[f64; 6]) -> Result<Matrix3<f64>, BodyError> {
    let a1 = Vector3::new(r6[0], r6[1], r6[2]);
    let a2 = Vector3::new(r6[3], r6[4], r6[5]);
    let n1 = a1.norm();
    if n1 < DEGENERATE_NORM {
        return Err(BodyError::DegenerateRotation { norm: n1 });
    }
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let n2 = u2.norm();
    if n2 < DEGENERATE_NORM {
        return Err(BodyError::DegenerateRotation { norm: n2 });
    }
    let b2 = u2 / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// The 6D representation of a rotation matrix: its first two columns.
pub fn matrix_to_rot6d(r: &Matrix3<f64>) -> [f64; 6] {
    [
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]
}

/// Angle of the relative rotation `r1 · r2ᵀ`, radians in `[0, π]`.
pub fn geodesic_distance(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let trace = r1.component_mul(r2).sum();
    ((trace - 1.0) / 2.0)
        .clamp(-1.0 + GEODESIC_CLAMP, 1.0 - GEODESIC_CLAMP)
        .acos()
}

pub fn axis_angle(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vector3::from(axis));
    *Rotation3::from_axis_angle(&axis, angle).matrix()
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    axis_angle([1.0, 0.0, 0.0], a)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    axis_angle([0.0, 1.0, 0.0], a)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    axis_angle([0.0, 0.0, 1.0], a)
}
