//! Small dense helpers on top of nalgebra. Dimensions here are tiny (d is 2
//! or 3 in practice), so clarity wins over blocking or BLAS.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result, Vector};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularHessian(format!("matrix not positive definite: {m}")))
}

/// Solves `m x = b` for symmetric positive-definite `m`.
pub fn spd_solve(m: &Matrix, b: &Vector) -> Result<Vector> {
    m.clone()
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::SingularHessian(format!("matrix not positive definite: {m}")))
}

/// True when every component is strictly positive.
pub fn in_open_orthant(v: &[f64]) -> bool {
    v.iter().all(|&x| x > 0.0)
}

/// True when every component is non-negative.
pub fn in_closed_orthant(v: &[f64]) -> bool {
    v.iter().all(|&x| x >= 0.0)
}

/// Step for central differences: `ε^{1/3}·(1+‖x‖)`.
pub fn fd_step(x: &Vector) -> f64 {
    libm::cbrt(f64::EPSILON) * (1.0 + x.norm())
}

/// Orthonormal rows spanning the complement of the unit vector `zeta`.
///
/// Gram–Schmidt over the standard basis in index order, skipping the basis
/// vector most aligned with `zeta`, so the frame is deterministic.
pub fn tangent_frame(zeta: &Vector) -> Result<Matrix> {
    let d = zeta.len();
    if d < 2 {
        return Ok(Matrix::zeros(0, d));
    }
    let skip = zeta.iamax();
    let mut rows: Vec<Vector> = Vec::with_capacity(d - 1);
    for k in (0..d).filter(|&k| k != skip) {
        let mut v = Vector::zeros(d);
        v[k] = 1.0;
        let p = v.dot(zeta);
        v -= zeta * p;
        for r in &rows {
            let p = v.dot(r);
            v -= r * p;
        }
        let n = v.norm();
        if n < 1e-10 {
            return Err(Error::SingularFrame(format!("basis vector {k} collapsed")));
        }
        rows.push(v / n);
    }
    let mut j = Matrix::zeros(d - 1, d);
    for (i, r) in rows.iter().enumerate() {
        j.set_row(i, &r.transpose());
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal_and_tangent() {
        let z = Vector::from_vec(alloc::vec![1.0, 2.0, 2.0]) / 3.0;
        let j = tangent_frame(&z).unwrap();
        let jjt = &j * j.transpose();
        assert!((jjt - Matrix::identity(2, 2)).abs().max() < 1e-12);
        assert!((&j * &z).abs().max() < 1e-12);
    }

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_inverse(&m), Err(Error::SingularHessian(_))));
    }
}
