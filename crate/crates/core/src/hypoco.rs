//! Distorted-norm certificates for `ẋ = −Bx` and the rate formulas of the
//! hypocoercive estimates.
//!
//! A distortion is a symmetric positive definite `P` with
//! `PB + BᵀP ≥ 2κP`, so that `|e^{−tB}x|_P ≤ e^{−κt}|x|_P`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix};
use crate::spectra::{self, DEFAULT_TOL};
use crate::{Error, Result};

/// Beyond this `log10` the constant `c*` is reported as overflowed.
pub const OVERFLOW_LOG10: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionCertificate {
    #[serde(with = "linalg::serde_matrix")]
    pub p: DMatrix<f64>,
    pub kappa: f64,
    pub cond_p: f64,
    pub epsilon: f64,
}

/// Right singular vectors of `m` belonging to its `count` smallest singular
/// values.
fn trailing_right_singular(m: &CMatrix, count: usize) -> Result<CMatrix> {
    let n = m.ncols();
    let dec = linalg::svd(m)?;
    Ok(dec.v.columns(n - count, count).into_owned())
}

/// Leading `count` left singular vectors of `m`.
fn leading_left_singular(m: &CMatrix, count: usize) -> Result<Vec<DVector<Complex64>>> {
    let dec = linalg::svd(m)?;
    Ok((0..count).map(|i| dec.u.column(i).into_owned()).collect())
}

/// Orthonormal flag `ker C ⊂ ker C² ⊂ …` of one eigenvalue cluster, returned
/// as `(vector, depth)` pairs.
fn cluster_flag(
    b: &DMatrix<f64>,
    lambda: Complex64,
    kernel_dims: &[usize],
) -> Result<Vec<(DVector<Complex64>, usize)>> {
    let dim = b.nrows();
    let c = linalg::to_complex(b) - CMatrix::identity(dim, dim) * lambda;
    let mut power = CMatrix::identity(dim, dim);
    let mut flag: Vec<(DVector<Complex64>, usize)> = Vec::new();
    let mut prev = 0;
    for (depth, &kd) in kernel_dims.iter().enumerate() {
        power = &power * &c;
        if kd <= prev {
            break;
        }
        let kernel = trailing_right_singular(&power, kd)?;
        let mut residual = kernel.clone();
        for (q, _) in &flag {
            let coeffs = q.adjoint() * &kernel;
            residual -= q * coeffs;
        }
        for v in leading_left_singular(&residual, kd - prev)? {
            flag.push((v, depth));
        }
        prev = kd;
    }
    Ok(flag)
}

/// Builds a distortion from an orthonormal Jordan flag of `b`, scaling
/// vectors of depth `k` by `ε^k`.
///
/// With `W` the scaled basis, `P = W^{−H}W^{−1}` and `κ` is the smallest
/// eigenvalue of the Hermitian part of `W^{−1}BW`.
pub fn build_distortion(b: &DMatrix<f64>, epsilon: f64) -> Result<DistortionCertificate> {
    let dim = linalg::ensure_square(b, "drift")?;
    linalg::ensure_finite(b, "drift")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let rho = spectra::spectral_abscissa_of(b)?;
    if !(rho > 0.0) {
        return Err(Error::invalid(format!(
            "drift is not stable: spectral abscissa {rho} is not positive"
        )));
    }
    let structure = spectra::jordan_structure(b, DEFAULT_TOL)?;
    let split = 1e-9 * (1.0 + linalg::spectral_norm(b));
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(dim);
    for (cluster, staircase) in &structure {
        if cluster.value.im < -split {
            continue;
        }
        let flag = cluster_flag(b, cluster.value, &staircase.kernel_dims)?;
        for (v, depth) in &flag {
            columns.push(v * Complex64::new(epsilon.powi(*depth as i32), 0.0));
        }
        if cluster.value.im > split {
            for (v, depth) in &flag {
                columns.push(v.conjugate() * Complex64::new(epsilon.powi(*depth as i32), 0.0));
            }
        }
    }
    if columns.len() != dim {
        return Err(Error::numerical(format!(
            "Jordan flag has {} vectors for dimension {dim}",
            columns.len()
        )));
    }
    let w = CMatrix::from_columns(&columns);
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("Jordan basis is singular"))?;
    let p = linalg::symmetrize(&(w_inv.adjoint() * &w_inv).map(|z| z.re));
    let k = &w_inv * linalg::to_complex(b) * &w;
    let herm = (&k + k.adjoint()) * Complex64::new(0.5, 0.0);
    let kappa = herm
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    let (vals, _) = linalg::sym_eigen(&p);
    let cond_p = vals[dim - 1] / vals[0];
    if !(vals[0] > 0.0) || !cond_p.is_finite() || !kappa.is_finite() {
        return Err(Error::numerical(
            "distortion matrix is not positive definite",
        ));
    }
    Ok(DistortionCertificate {
        p,
        kappa,
        cond_p,
        epsilon,
    })
}

/// Largest `κ` with `PB + BᵀP ≥ 2κP`, computed through a Cholesky factor of `P`.
pub fn verify_lmi(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let dim = linalg::ensure_square(p, "P")?;
    if linalg::ensure_square(b, "drift")? != dim {
        return Err(Error::invalid("P and drift have different dimensions"));
    }
    linalg::ensure_finite(p, "P")?;
    linalg::ensure_finite(b, "drift")?;
    linalg::ensure_symmetric(p, 1e-10, "P")?;
    let l = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("P is not positive definite"))?
        .unpack();
    let a = (p * b + b.transpose() * p) * 0.5;
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| Error::invalid("P is not positive definite"))?;
    Ok(linalg::lambda_min(&linalg::symmetrize(
        &(&l_inv * a * l_inv.transpose()),
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypocoerciveRate {
    pub rate: f64,
    pub prefactor: f64,
}

/// `(1+βc)e^{−2ρt/(1+βc)}` as a rate and prefactor.
pub fn hypocoercive_rate(rho: f64, beta: f64, c: f64) -> Result<HypocoerciveRate> {
    for (name, v) in [("rho", rho), ("beta", beta), ("c", c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let prefactor = 1.0 + beta * c;
    Ok(HypocoerciveRate {
        rate: 2.0 * rho / prefactor,
        prefactor,
    })
}

/// Constants of the general hypocoercive theorems, evaluated verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplicitConstants {
    /// `None` when `c*` exceeds `10^300`.
    pub c_star: Option<f64>,
    pub c_star_log10: f64,
    pub c_star_overflow: bool,
    pub kappa_star: f64,
    pub kappa_star_log10: f64,
    pub eps_star: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// Evaluates `c* = (100/λ (Nc² + Λ²/λ + m))^{20Nc²}`, `κ* = ρ/(c*K)`,
/// `ε* = λ/(10mNc)` and the Γ-calculus constants `b1, b2, b3`, under the
/// normalisation `ρ, λ ≤ 1 ≤ Λ, K, m`.
pub fn explicit_constants(
    nc: u32,
    lambda: f64,
    big_lambda: f64,
    m: f64,
    rho: f64,
    k: f64,
) -> Result<ExplicitConstants> {
    if nc < 1 {
        return Err(Error::invalid("Nc must be at least 1"));
    }
    for (name, v) in [
        ("lambda", lambda),
        ("Lambda", big_lambda),
        ("m", m),
        ("rho", rho),
        ("K", k),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if rho > 1.0 || lambda > 1.0 {
        return Err(Error::invalid(
            "normalisation requires rho <= 1 and lambda <= 1",
        ));
    }
    if big_lambda < 1.0 || k < 1.0 || m < 1.0 {
        return Err(Error::invalid("normalisation requires Lambda, K, m >= 1"));
    }
    let ncf = nc as f64;
    let base = 100.0 / lambda * (ncf * ncf + big_lambda * big_lambda / lambda + m);
    let c_star_log10 = 20.0 * ncf * ncf * base.log10();
    let c_star_overflow = c_star_log10 > OVERFLOW_LOG10;
    let kappa_star_log10 = rho.log10() - c_star_log10 - k.log10();
    Ok(ExplicitConstants {
        c_star: (!c_star_overflow).then(|| 10f64.powf(c_star_log10)),
        c_star_log10,
        c_star_overflow,
        kappa_star: 10f64.powf(kappa_star_log10),
        kappa_star_log10,
        eps_star: lambda / (10.0 * m * ncf),
        b1: 7.0 * (ncf * ncf + big_lambda * big_lambda / lambda + m),
        b2: lambda / 2.0,
        b3: 3.0 * big_lambda * big_lambda / lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::matrix_exponential;

    fn mat(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    fn kinetic() -> DMatrix<f64> {
        mat(2, &[0.0, -1.0, 0.25, 1.0])
    }

    #[test]
    fn normal_drifts_are_undistorted() {
        let c = build_distortion(&DMatrix::identity(2, 2), 0.3).unwrap();
        assert!((&c.p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!((c.kappa - 1.0).abs() < 1e-12);
        assert!((c.cond_p - 1.0).abs() < 1e-12);
        let c = build_distortion(&mat(2, &[1.0, 0.0, 0.0, 2.0]), 0.5).unwrap();
        assert!((c.kappa - 1.0).abs() < 1e-12);
        assert!(c.p[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn defective_drift_certificate() {
        let b = kinetic();
        let c = build_distortion(&b, 0.1).unwrap();
        assert!(c.kappa >= 0.4 && c.kappa <= 0.5 + 1e-8);
        assert!(c.cond_p.is_finite());
        assert!((verify_lmi(&c.p, &b).unwrap() - c.kappa).abs() < 1e-10);
    }

    #[test]
    fn rotation_drift_uses_conjugate_vectors() {
        let b = mat(3, &[1.0, -3.0, 0.5, 3.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let c = build_distortion(&b, 0.2).unwrap();
        assert!((c.kappa - 1.0).abs() < 1e-10);
        assert!((verify_lmi(&c.p, &b).unwrap() - c.kappa).abs() < 1e-10);
    }

    #[test]
    fn contraction_in_distorted_norm() {
        let b = kinetic();
        let c = build_distortion(&b, 0.1).unwrap();
        let half = linalg::sym_sqrt(&c.p, 0.0).unwrap();
        let inv_half = linalg::sym_inv_sqrt(&c.p, 0.0).unwrap();
        for i in 0..30 {
            let t = 0.25 * i as f64;
            let e = matrix_exponential(&(-&b * t)).unwrap();
            let norm = linalg::spectral_norm(&(&half * e * &inv_half));
            assert!(norm <= (-c.kappa * t).exp() + 1e-9, "t={t}");
        }
    }

    #[test]
    fn lmi_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert!((verify_lmi(&i2, &i2).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            verify_lmi(&i2, &mat(2, &[0.0, -1.0, 1.0, 0.0]))
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(verify_lmi(&mat(2, &[1.0, 0.0, 0.0, -1.0]), &i2).is_err());
    }

    #[test]
    fn unstable_or_bad_epsilon_rejected() {
        assert!(build_distortion(&mat(2, &[0.0, -1.0, 1.0, 0.0]), 0.1).is_err());
        assert!(build_distortion(&DMatrix::identity(2, 2), 1.0).is_err());
        assert!(build_distortion(&DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn rate_examples() {
        let r = hypocoercive_rate(1.0, 2.0, 3.0).unwrap();
        assert!((r.rate - 2.0 / 7.0).abs() < 1e-15);
        assert_eq!(r.prefactor, 7.0);
        let r = hypocoercive_rate(1.0, 1e-12, 1.0).unwrap();
        assert!((r.rate - 2.0).abs() < 1e-11 && (r.prefactor - 1.0).abs() < 1e-11);
        let r = hypocoercive_rate(0.5, 1.0, 1.0).unwrap();
        assert_eq!((r.rate, r.prefactor), (0.5, 2.0));
        assert!(hypocoercive_rate(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_examples() {
        let c = explicit_constants(1, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((c.c_star_log10 - 20.0 * 300f64.log10()).abs() < 1e-12);
        assert!((c.c_star_log10 - 49.542).abs() < 1e-3);
        assert!((c.c_star.unwrap() / 300f64.powi(20) - 1.0).abs() < 1e-12);
        assert!((c.kappa_star * 300f64.powi(20) - 1.0).abs() < 1e-12);
        assert_eq!((c.eps_star, c.b1, c.b2, c.b3), (0.1, 21.0, 0.5, 3.0));
        assert!(!c.c_star_overflow);
        let c = explicit_constants(2, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.eps_star, 0.05);
        let c = explicit_constants(5, 0.5, 2.0, 1.0, 0.5, 1.0).unwrap();
        assert!(c.c_star_overflow && c.c_star.is_none());
        assert!(c.kappa_star_log10 < -OVERFLOW_LOG10);
        assert!(explicit_constants(1, 2.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(explicit_constants(1, 1.0, 0.5, 1.0, 1.0, 1.0).is_err());
        assert!(explicit_constants(0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }
}
