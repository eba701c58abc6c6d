//! Dense least squares: Householder QR, then the SVD of the small `R`
//! factor for rank and conditioning decisions.

use nalgebra::{ComplexField, DMatrix, DVector};

/// Condition number above which the solve is regularized.
pub(crate) const COND_LIMIT: f64 = 1e8;
/// Tikhonov floor, relative to the largest squared singular value.
pub(crate) const TIKHONOV_FLOOR: f64 = 1e-12;

#[derive(Debug)]
pub(crate) struct LstsqSolution<T: ComplexField> {
    pub x: DVector<T>,
    /// Set when the condition number exceeded [`COND_LIMIT`].
    pub regularized: bool,
}

/// Minimum-norm least-squares solve of `a x ≈ b`. Returns `None` when `a`
/// loses column rank.
pub(crate) fn lstsq<T>(a: DMatrix<T>, b: &DVector<T>) -> Option<LstsqSolution<T>>
where
    T: ComplexField<RealField = f64>,
{
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Some(LstsqSolution {
            x: DVector::zeros(0),
            regularized: false,
        });
    }
    if rows < cols {
        return None;
    }
    // `a = Q R` shares its singular values with `R`, and `Q^H b` carries
    // everything of `b` the solve can see.
    let qr = a.qr();
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let b = qtb.rows(0, cols).into_owned();
    let svd = qr.r().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let tol = smax * f64::EPSILON * rows.max(cols) as f64;
    if !(smax > 0.0) || smin <= tol {
        return None;
    }
    let regularized = smax / smin > COND_LIMIT;
    let lambda = TIKHONOV_FLOOR * smax * smax;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut coeffs = u.adjoint() * &b;
    for (c, &sv) in coeffs.iter_mut().zip(s.iter()) {
        let g = if regularized { sv / (sv * sv + lambda) } else { 1.0 / sv };
        *c = c.clone().scale(g);
    }
    Some(LstsqSolution {
        x: v_t.adjoint() * coeffs,
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn solves_consistent_system() {
        let a = DMatrix::from_fn(6, 2, |i, j| Complex64::new((i * i + j) as f64, (i * j) as f64 - 1.0));
        let x = DVector::from_vec(alloc::vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)]);
        let b = &a * &x;
        let sol = lstsq(a, &b).unwrap();
        assert!(!sol.regularized);
        assert!((sol.x - x).norm() < 1e-12);
    }

    #[test]
    fn detects_rank_loss() {
        let a = DMatrix::from_fn(5, 2, |i, _| i as f64 + 1.0);
        let b = DVector::from_element(5, 1.0);
        assert!(lstsq(a, &b).is_none());
    }

    #[test]
    fn flags_ill_conditioning() {
        let a = DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { 1.0 + 1e-10 * i as f64 });
        let b = DVector::from_element(4, 1.0);
        assert!(lstsq(a, &b).unwrap().regularized);
    }
}
