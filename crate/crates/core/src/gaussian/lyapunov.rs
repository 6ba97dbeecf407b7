//! Continuous Lyapunov equation `B X + X Bᵀ = Q` by the complex Schur
//! (Bartels-Stewart) method.

use nalgebra::{linalg::Schur, DMatrix};
use num_complex::Complex64;

use crate::linalg::{self, CMatrix};
use crate::{Error, Result};

struct SchurForm {
    q: CMatrix,
    t: CMatrix,
}

impl SchurForm {
    fn new(b: &DMatrix<f64>) -> Result<Self> {
        let schur = Schur::try_new(linalg::to_complex(b), f64::EPSILON, 100_000)
            .ok_or_else(|| Error::numerical("complex Schur decomposition did not converge"))?;
        let (q, t) = schur.unpack();
        Ok(SchurForm { q, t })
    }

    /// Solves `T Y + Y Tᴴ = C` for upper-triangular `T`.
    fn solve_triangular(&self, c: &CMatrix) -> Result<CMatrix> {
        let n = self.t.nrows();
        let t = &self.t;
        let mut y = CMatrix::zeros(n, n);
        for i in (0..n).rev() {
            for j in (0..n).rev() {
                let mut acc = c[(i, j)];
                for k in (i + 1)..n {
                    acc -= t[(i, k)] * y[(k, j)];
                }
                for k in (j + 1)..n {
                    acc -= y[(i, k)] * t[(j, k)].conj();
                }
                let den = t[(i, i)] + t[(j, j)].conj();
                if den.norm() < f64::EPSILON * (1.0 + t[(i, i)].norm()) {
                    return Err(Error::numerical(
                        "Lyapunov operator is singular (eigenvalues λ, μ with λ + μ̄ = 0)",
                    ));
                }
                y[(i, j)] = acc / den;
            }
        }
        Ok(y)
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let c = self.q.adjoint() * linalg::to_complex(rhs) * &self.q;
        let y = self.solve_triangular(&c)?;
        let x = &self.q * y * self.q.adjoint();
        Ok(x.map(|v: Complex64| v.re))
    }
}

/// Relative residual `‖B X + X Bᵀ − Q‖_F / ‖Q‖_F`.
pub fn lyapunov_residual(b: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let r = b * x + x * b.transpose() - q;
    r.norm() / q.norm().max(f64::MIN_POSITIVE)
}

/// Solves `B X + X Bᵀ = Q`. Symmetric `Q` gives symmetric `X`.
pub fn solve_continuous_lyapunov(b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = linalg::ensure_square(b, "B")?;
    if q.shape() != (n, n) {
        return Err(Error::invalid("right-hand side has the wrong shape"));
    }
    let form = SchurForm::new(b)?;
    let symmetric = linalg::max_abs(&(q - q.transpose())) <= 1e-14 * linalg::max_abs(q);
    let fix = |x: DMatrix<f64>| if symmetric { linalg::symmetrize(&x) } else { x };
    let mut x = fix(form.solve(q)?);
    // Two rounds of iterative refinement on the residual.
    for _ in 0..2 {
        if q.norm() == 0.0 || lyapunov_residual(b, &x, q) < 1e-14 {
            break;
        }
        let r = q - (b * &x + &x * b.transpose());
        x += fix(form.solve(&r)?);
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("Lyapunov solution is not finite"));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: vectorised `(I ⊗ B + B ⊗ I) vec X = vec Q` dense solve.
    fn kronecker_oracle(b: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = b.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let op = linalg::kron(&id, b) + linalg::kron(b, &id);
        let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
        let v = op.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(n, n, v.as_slice())
    }

    #[test]
    fn shear_example_matches_hand_solution() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let q = DMatrix::<f64>::identity(2, 2) * 2.0;
        let x = solve_continuous_lyapunov(&b, &q).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.0]);
        assert!((&x - &expect).amax() < 1e-14);
        assert!((kronecker_oracle(&b, &q) - expect).amax() < 1e-14);
    }

    #[test]
    fn complex_spectrum_agrees_with_oracle() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, -3.0, 0.2, 3.0, 1.0, 0.0, 0.5, 0.1, 2.0]);
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 0.5]);
        let x = solve_continuous_lyapunov(&b, &q).unwrap();
        assert!((&x - kronecker_oracle(&b, &q)).amax() < 1e-12);
        assert!(lyapunov_residual(&b, &x, &q) < 1e-13);
    }

    #[test]
    fn singular_operator_is_reported() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let q = DMatrix::<f64>::identity(2, 2);
        assert!(solve_continuous_lyapunov(&b, &q).is_err());
    }
}
