//! Dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Builds a matrix from row-major nested vectors of finite doubles.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid("matrix rows have unequal lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serde adapter: a matrix as a row-major array of arrays.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Checks symmetry within `rel_tol` relative to the largest entry.
pub fn ensure_symmetric(m: &DMatrix<f64>, rel_tol: f64, what: &str) -> Result<()> {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let asym = max_abs(&(m - m.transpose()));
    if asym > rel_tol * scale {
        return Err(Error::invalid(format!(
            "{what} is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

/// Checks symmetry and that no eigenvalue is below `-rel_tol·‖m‖`.
pub fn ensure_psd(m: &DMatrix<f64>, rel_tol: f64, what: &str) -> Result<()> {
    ensure_symmetric(m, 1e-12, what)?;
    let (vals, _) = sym_eigen(m);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if vals[0] < -rel_tol * top {
        return Err(Error::invalid(format!(
            "{what} is not positive semidefinite (eigenvalue {:.3e})",
            vals[0]
        )));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0[0]
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    *sym_eigen(m).0.last().expect("non-empty matrix")
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let fv = DVector::from_iterator(vals.len(), vals.into_iter().map(f));
    &vecs * DMatrix::from_diagonal(&fv) * vecs.transpose()
}

/// Symmetric square root; eigenvalues down to `-clip_rel·λ_max` are clipped
/// to zero, anything more negative is rejected.
pub fn sym_sqrt(m: &DMatrix<f64>, clip_rel: f64) -> Result<DMatrix<f64>> {
    let (vals, _) = sym_eigen(m);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    if vals[0] < -clip_rel * top {
        return Err(Error::invalid(format!(
            "matrix square root of an indefinite matrix (eigenvalue {:.3e})",
            vals[0]
        )));
    }
    Ok(sym_apply(m, |v| v.max(0.0).sqrt()))
}

/// Symmetric inverse square root. Eigenvalues at or below `floor_rel·λ_max`
/// are rejected rather than regularised.
pub fn sym_inv_sqrt(m: &DMatrix<f64>, floor_rel: f64) -> Result<DMatrix<f64>> {
    let (vals, _) = sym_eigen(m);
    let top = *vals.last().expect("non-empty matrix");
    if top <= 0.0 || vals[0] <= floor_rel * top {
        return Err(Error::invalid(format!(
            "matrix is not positive definite (eigenvalues {:.3e}..{:.3e})",
            vals[0], top
        )));
    }
    Ok(sym_apply(m, |v| 1.0 / v.sqrt()))
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Full singular value decomposition `m = U diag(s) Vᴴ`, values in
/// decreasing order.
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

fn to_faer(m: &CMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

// nalgebra's SVD loses accuracy on rank-deficient input, which is exactly
// the regime of the rank staircase, so decompositions go through faer.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    ensure_finite_c(m)?;
    let f = to_faer(m);
    let dec = f
        .svd()
        .map_err(|_| Error::numerical("singular value decomposition did not converge"))?;
    let diag = dec.S().column_vector();
    Ok(Svd {
        u: from_faer(dec.U()),
        s: (0..diag.nrows()).map(|i| diag[i].re).collect(),
        v: from_faer(dec.V()),
    })
}

fn ensure_finite_c(m: &CMatrix) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("matrix has non-finite entries"));
    }
    Ok(())
}

/// Singular values sorted in decreasing order.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    ensure_finite_c(m)?;
    let mut s = to_faer(m)
        .singular_values()
        .map_err(|_| Error::numerical("singular value decomposition did not converge"))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Orthonormal basis of the numerical null space of `m`: right singular
/// vectors whose singular value is at most `threshold`, plus the trailing
/// directions of a wide matrix.
pub fn null_space(m: &CMatrix, threshold: f64) -> Result<CMatrix> {
    let n = m.ncols();
    let dec = svd(m)?;
    let cols: Vec<DVector<Complex64>> = (0..n)
        .filter(|&i| dec.s.get(i).is_none_or(|&sv| sv <= threshold))
        .map(|i| dec.v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return Ok(CMatrix::zeros(n, 0));
    }
    Ok(CMatrix::from_columns(&cols))
}

/// Spectral norm ‖m‖₂ of a real matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(&to_complex(m))
        .map(|s| s[0])
        .unwrap_or(f64::NAN)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_rejected() {
        assert!(from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(from_rows(&[vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn sqrt_and_inverse_sqrt() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_sqrt(&m, 1e-12).unwrap();
        assert!((&r * &r - &m).norm() < 1e-12);
        let ri = sym_inv_sqrt(&m, 1e-14).unwrap();
        assert!((&ri * &m * &ri - DMatrix::identity(2, 2)).norm() < 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(sym_inv_sqrt(&singular, 1e-14).is_err());
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        let ns = null_space(&m, 1e-10).unwrap();
        assert_eq!(ns.ncols(), 1);
        assert!((&m * &ns).norm() < 1e-12);
    }

    #[test]
    fn svd_of_rank_deficient_matrix_reconstructs() {
        // Rank 2: every entry is a combination of sin(i)·cos(1.3j) terms.
        for n in [4, 6, 8] {
            let m = to_complex(&DMatrix::from_fn(n, n, |i, j| {
                (i as f64 + 1.3 * j as f64).sin()
            }));
            let dec = svd(&m).unwrap();
            let s = CMatrix::from_diagonal(&DVector::from_iterator(
                n,
                dec.s.iter().map(|&v| Complex64::new(v, 0.0)),
            ));
            assert!((&dec.u * s * dec.v.adjoint() - &m).norm() < 1e-13, "n={n}");
            assert!(dec.s[2] < 1e-14 * dec.s[0]);
            let ns = null_space(&m, 1e-12).unwrap();
            assert_eq!(ns.ncols(), n - 2);
        }
        let wide = to_complex(&DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]));
        let ns = null_space(&wide, 1e-12).unwrap();
        assert_eq!(ns.ncols(), 2);
        assert!((&wide * &ns).norm() < 1e-14);
    }

    #[test]
    fn kron_shape() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let i = DMatrix::<f64>::identity(2, 2);
        let k = kron(&a, &i);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(2, 0)], 3.0);
        assert_eq!(k[(3, 1)], 3.0);
        assert_eq!(k[(3, 0)], 0.0);
    }
}
