//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3, 5, 7, 9 or 13 (Higham 2005).

use nalgebra::DMatrix;

use crate::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Odd/even parts `(U, V)` of the degree-m Padé numerator, m ≤ 9.
fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut even_pow = id.clone();
    let mut u_inner = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    for k in (0..coeffs.len()).step_by(2) {
        if k > 0 {
            even_pow = &even_pow * &a2;
        }
        v += &even_pow * coeffs[k];
        if k + 1 < coeffs.len() {
            u_inner += &even_pow * coeffs[k + 1];
        }
    }
    (a * u_inner, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &B13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::numerical("Padé denominator is singular"))
}

/// `exp(A)` for a square real matrix.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    crate::linalg::ensure_square(a, "matrix")?;
    crate::linalg::ensure_finite(a, "matrix")?;
    let nrm = norm1(a);
    for (m, theta) in THETA {
        if nrm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, coeffs);
            return finite(solve_pade(u, v)?);
        }
    }
    let s = ((nrm / THETA_13).log2().ceil()).max(0.0) as i32;
    if s > 1000 {
        return Err(Error::numerical("matrix exponential overflow"));
    }
    let scaled = a / 2f64.powi(s);
    let (u, v) = pade13(&scaled);
    let mut x = solve_pade(u, v)?;
    for _ in 0..s {
        x = &x * &x;
    }
    finite(x)
}

fn finite(x: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::numerical("matrix exponential overflow"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Taylor series with enough terms for ‖A‖ ≲ 5.
    fn series(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..80 {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    fn rel_err(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        (x - y).norm() / y.norm()
    }

    #[test]
    fn zero_gives_identity() {
        let e = matrix_exponential(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let e = matrix_exponential(&a).unwrap();
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-14 * 1f64.exp());
        assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-14 * 2f64.exp());
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn quarter_rotation() {
        let th = std::f64::consts::FRAC_PI_2;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let e = matrix_exponential(&a).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((e - r).amax() < 1e-12);
    }

    #[test]
    fn matches_series_across_degrees() {
        // Norms chosen to hit every Padé degree and the scaled branch.
        let base =
            DMatrix::from_row_slice(3, 3, &[0.1, -0.4, 0.2, 0.3, -0.2, 0.5, -0.1, 0.25, 0.05]);
        for scale in [0.01, 0.2, 0.9, 2.0, 4.0, 8.0] {
            let a = &base * scale;
            let err = rel_err(&matrix_exponential(&a).unwrap(), &series(&a));
            assert!(err < 1e-12, "scale {scale}: {err:e}");
        }
    }

    #[test]
    fn jordan_block_decay_is_relatively_accurate() {
        // exp(-tB) for B = [[0,-1],[1/4,1]] is e^{-t/2}(I - t(B - I/2)).
        let b = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.25, 1.0]);
        let half = DMatrix::<f64>::identity(2, 2) * 0.5;
        for t in [0.5, 5.0, 20.0, 60.0] {
            let exact = (DMatrix::<f64>::identity(2, 2) - (&b - &half) * t) * (-t / 2.0).exp();
            let got = matrix_exponential(&(&b * -t)).unwrap();
            assert!(rel_err(&got, &exact) < 1e-12, "t={t}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        let a = DMatrix::from_row_slice(1, 1, &[1000.0]);
        assert!(matches!(
            matrix_exponential(&a),
            Err(Error::NumericalFailure(_))
        ));
    }
}
