//! Complex linear-algebra helpers shared across the library.
//!
//! Everything here works on dynamically sized `nalgebra` matrices over
//! `Complex<f64>`. The helpers exist to keep numerically delicate steps
//! (null spaces, Hermitian factorizations, matrix square roots) in one
//! place with consistent tolerances.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RVec = DVector<f64>;

/// Relative singular-value threshold below which a direction is considered
/// part of the null space.
pub const RANK_TOL: f64 = 1e-10;

pub fn cplx(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Symmetrizes a nominally Hermitian matrix, removing rounding noise that
/// would otherwise leak into eigensolvers.
pub fn hermitize(a: &CMat) -> CMat {
    let ah = a.adjoint();
    (a + ah).map(|z| z * 0.5)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Returns `(eigenvalues, eigenvectors)` with eigenvectors
/// in matching columns.
pub fn herm_eigen_desc(a: &CMat) -> (RVec, CMat) {
    let n = a.nrows();
    let se = hermitize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let vals = RVec::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Inverse square root of a Hermitian positive-definite matrix.
pub fn inv_sqrt_pd(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = herm_eigen_desc(a);
    let floor = vals[0].max(1.0) * 1e-14;
    if vals.iter().any(|&v| v <= floor) {
        return Err(Error::DegenerateChannel(
            "matrix is not positive definite, cannot take inverse square root".into(),
        ));
    }
    let scaled = scale_columns(&vecs, &vals.map(|v| v.sqrt().recip()));
    Ok(&scaled * vecs.adjoint())
}

/// Multiplies column `i` of `a` by `d[i]`.
pub fn scale_columns(a: &CMat, d: &RVec) -> CMat {
    let mut out = a.clone();
    for (i, &s) in d.iter().enumerate() {
        out.column_mut(i).scale_mut(s);
    }
    out
}

/// Orthonormal basis of the null space of `a`, together with the numerical
/// rank of `a`. The matrix is zero-padded to square so that the SVD exposes
/// the full set of right singular vectors even when `a` is wide.
pub fn null_space(a: &CMat) -> Result<(CMat, usize)> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return Ok((CMat::identity(cols, cols), 0));
    }
    let mut padded = CMat::zeros(a.nrows().max(cols), cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateChannel("SVD failed to produce right vectors".into()))?;
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let sigma_max = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > RANK_TOL * sigma_max)
        .count();
    let mut basis = CMat::zeros(cols, cols - rank);
    for (dst, &src) in order[rank..].iter().enumerate() {
        basis.set_column(dst, &v_t.row(src).adjoint());
    }
    Ok((basis, rank))
}

/// log det(I + X Xᴴ) computed through the eigenvalues of the Gram matrix,
/// in nats. Safe for any X because the Gram eigenvalues are nonnegative.
pub fn logdet_i_plus_gram(x: &CMat) -> f64 {
    let gram = x * x.adjoint();
    let (vals, _) = herm_eigen_desc(&gram);
    vals.iter().map(|&v| v.max(0.0).ln_1p()).sum()
}

/// Hermitian positive-semidefinite square root via eigendecomposition.
/// Slightly negative eigenvalues (rounding noise) are clipped to zero;
/// eigenvalues below `-fail` relative to the largest magnitude are reported
/// as a quality failure because they indicate a genuinely indefinite input.
pub fn psd_sqrt(a: &CMat, fail: f64) -> Result<CMat> {
    let (vals, vecs) = herm_eigen_desc(a);
    let scale = vals[0].abs().max(1.0);
    let mut roots = RVec::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        if v < -fail * scale {
            return Err(Error::ConvergenceQuality(format!(
                "covariance eigenvalue {v:.3e} below tolerance -{:.1e}",
                fail * scale
            )));
        }
        roots[i] = v.max(0.0).sqrt();
    }
    let scaled = scale_columns(&vecs, &roots);
    Ok(&scaled * vecs.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Complex;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn herm_eigen_reconstructs_and_sorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_cmat(5, 5, &mut rng);
        let a = hermitize(&(&x * x.adjoint()));
        let (vals, vecs) = herm_eigen_desc(&a);
        for i in 1..vals.len() {
            assert!(vals[i - 1] >= vals[i]);
        }
        let recon = &scale_columns(&vecs, &vals) * vecs.adjoint();
        assert_abs_diff_eq!((recon - &a).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inv_sqrt_pd_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_cmat(4, 4, &mut rng);
        let a = &x * x.adjoint() + CMat::identity(4, 4);
        let s = inv_sqrt_pd(&a).unwrap();
        let should_be_eye = &s * &a * &s;
        assert_abs_diff_eq!((should_be_eye - CMat::identity(4, 4)).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 6 rows, 12 columns: expect a 6-dimensional null space.
        let a = random_cmat(6, 12, &mut rng);
        let (basis, rank) = null_space(&a).unwrap();
        assert_eq!(rank, 6);
        assert_eq!(basis.ncols(), 6);
        assert_abs_diff_eq!((&a * &basis).norm(), 0.0, epsilon = 1e-12);
        let gram = basis.adjoint() * &basis;
        assert_abs_diff_eq!((gram - CMat::identity(6, 6)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn null_space_detects_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_cmat(4, 8, &mut rng);
        let mut stacked = CMat::zeros(8, 8);
        stacked.view_mut((0, 0), (4, 8)).copy_from(&a);
        stacked.view_mut((4, 0), (4, 8)).copy_from(&a);
        let (_, rank) = null_space(&stacked).unwrap();
        assert_eq!(rank, 4);
    }

    #[test]
    fn null_space_of_empty_matrix_is_identity() {
        let a = CMat::zeros(0, 5);
        let (basis, rank) = null_space(&a).unwrap();
        assert_eq!(rank, 0);
        assert_eq!(basis, CMat::identity(5, 5));
    }

    #[test]
    fn logdet_matches_direct_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_cmat(3, 5, &mut rng);
        let m = CMat::identity(3, 3) + &x * x.adjoint();
        let direct = m.determinant().re.ln();
        assert_abs_diff_eq!(logdet_i_plus_gram(&x), direct, epsilon = 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_cmat(4, 2, &mut rng);
        let a = &x * x.adjoint();
        let r = psd_sqrt(&a, 1e-6).unwrap();
        assert_abs_diff_eq!((&r * &r - &a).norm(), 0.0, epsilon = 1e-10);
        let herm_err = (&r - r.adjoint()).norm();
        assert_abs_diff_eq!(herm_err, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite_input() {
        let mut a = CMat::identity(3, 3);
        a[(2, 2)] = cplx(-0.5);
        assert!(psd_sqrt(&a, 1e-6).is_err());
    }
}
