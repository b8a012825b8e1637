//! Dense linear-algebra helpers shared by the analytic modules.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `max|a - b| / max(max|a|, max|b|, floor)`.
pub fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    let scale = max_abs(a).max(max_abs(b)).max(1e-300);
    max_abs(&(a - b)) / scale
}

pub fn rel_diff_real(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = max_abs_real(a).max(max_abs_real(b)).max(1e-300);
    max_abs_real(&(a - b)) / scale
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

pub fn cdiag(v: &[f64]) -> CMatrix {
    complexify(&diag(v))
}

/// Drops imaginary parts after checking they are negligible relative to the
/// matrix scale.
pub fn real_part(m: &CMatrix, tol: f64, what: &str) -> Result<DMatrix<f64>> {
    let scale = max_abs(m).max(1.0);
    let worst = m.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if worst > tol * scale {
        return Err(Error::Singular(format!(
            "{what} has imaginary residue {worst:.3e}"
        )));
    }
    Ok(m.map(|z| z.re))
}

pub fn inverse(m: &CMatrix, what: &str) -> Result<CMatrix> {
    let n = m.nrows();
    let lu = m.clone().lu();
    lu.try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or_else(|| Error::Singular(format!("{what} ({n}x{n}) is not invertible")))
}

pub fn inverse_real(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    m.clone()
        .lu()
        .try_inverse()
        .filter(|inv| inv.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Singular(format!("{what} ({n}x{n}) is not invertible")))
}

/// 2-norm condition number.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Right null direction of a (numerically) singular square matrix from the
/// smallest singular triplet. Returns `(u, sigma_min)` with `A u ≈ 0`.
pub fn null_vector(a: &CMatrix) -> (CVector, f64) {
    let n = a.nrows();
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("V^H requested");
    let (k, smin) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty matrix");
    debug_assert!(k < n);
    // Rows of v_t are conjugated right singular vectors.
    (v_t.row(k).transpose().map(|z| z.conj()), smin)
}

/// Right and left null directions: `A u ≈ 0` and `wᵀ A ≈ 0`.
pub fn null_directions(a: &CMatrix) -> (CVector, CVector) {
    (null_vector(a).0, null_vector(&a.transpose()).0)
}

/// Unit 2-norm with the first non-negligible entry made positive real.
pub fn normalize_phase(v: &CVector) -> CVector {
    let norm = v.norm();
    let mut out = v / C64::new(norm, 0.0);
    let pivot = out
        .iter()
        .copied()
        .find(|z| z.norm() > 1e-8)
        .unwrap_or(C64::new(1.0, 0.0));
    let rot = pivot.conj() / pivot.norm();
    out *= rot;
    out
}

/// Matrix exponential of a real matrix.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.exp()
}

/// Solves `x A = b` for the row vector `x` (given as a column vector).
pub fn solve_left_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.transpose()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("left solve".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_directions_of_rank_one_defect() {
        let a =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        let (u, w) = null_directions(&a);
        assert!(null_vector(&a).1 < 1e-14);
        assert!((&a * &u).norm() < 1e-14);
        assert!((w.transpose() * &a).norm() < 1e-14);
    }

    #[test]
    fn normalization_fixes_phase() {
        let v = CVector::from_vec(vec![c(0.0, 2.0), c(1.0, 1.0)]);
        let n = normalize_phase(&v);
        assert!((n.norm() - 1.0).abs() < 1e-15);
        assert!(n[0].im.abs() < 1e-15 && n[0].re > 0.0);
    }

    #[test]
    fn real_part_rejects_complex_residue() {
        let m = CMatrix::from_element(1, 1, c(1.0, 1e-3));
        assert!(real_part(&m, 1e-10, "m").is_err());
        assert_eq!(
            real_part(&m.map(|z| c(z.re, 1e-14)), 1e-10, "m").unwrap()[(0, 0)],
            1.0
        );
    }
}
