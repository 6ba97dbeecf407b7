//! Exact Gaussian computations for OU semigroups.
//!
//! Everything here is closed form up to dense linear algebra: the invariant
//! covariance solves `BΣ + ΣBᵀ = 2D`, the transient law follows the Mehler
//! formula, and distances/entropies use the Gaussian closed forms.
//!
//! The L²(μ) operator norm of `P_t − μ` is computed on the linear sector
//! `f(x) = uᵀx`, where `P_t f(x) = (e^{-tBᵀ}u)ᵀx`:
//! `γ²(t) = λ_max(Σ^{-1/2} e^{-tB} Σ e^{-tBᵀ} Σ^{-1/2})`.
//! For Gaussian Mehler semigroups this sector carries the full norm, which
//! the tests check against a published closed form rather than assume.
//!
//! A note on exponents: the long-time lower bound on `‖P_t − μ‖²` is
//! `c⁻¹(1 + t^{2(N−1)})e^{−2ρt}`; an intermediate step of its usual proof is
//! sometimes written with `t^{2N}`, which is not what the bound states and
//! not what is implemented here.

mod expm;
mod lyapunov;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use expm::matrix_exponential;
pub use lyapunov::{lyapunov_residual, solve_continuous_lyapunov};

use crate::fit::{self, LineFit};
use crate::linalg::{self, serde_matrix};
use crate::spectra::{self, DriftSpec};
use crate::{Error, Result};

/// Floor (relative to `λ_max`) below which `Σ` counts as singular.
const INV_SQRT_FLOOR: f64 = 1e-14;
/// Negative eigenvalues down to `-CLIP·λ_max` are clipped in square roots.
const SQRT_CLIP: f64 = 1e-12;

/// A Gaussian law `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    #[serde(with = "serde_matrix")]
    cov: DMatrix<f64>,
}

impl TryFrom<RawGaussian> for GaussianState {
    type Error = Error;
    fn try_from(raw: RawGaussian) -> Result<Self> {
        GaussianState::new(DVector::from_vec(raw.mean), raw.cov)
    }
}

impl From<GaussianState> for RawGaussian {
    fn from(g: GaussianState) -> Self {
        RawGaussian {
            mean: g.mean.iter().copied().collect(),
            cov: g.cov,
        }
    }
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("Gaussian state has dimension 0"));
        }
        if cov.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "covariance must be {d}x{d}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("mean has non-finite entries"));
        }
        linalg::ensure_finite(&cov, "covariance")?;
        linalg::ensure_psd(&cov, 1e-12, "covariance")?;
        Ok(GaussianState {
            mean,
            cov: linalg::symmetrize(&cov),
        })
    }

    /// Point mass at `mean`.
    pub fn dirac(mean: DVector<f64>) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Sampled decay curve `t ↦ value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl DecayCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid(
                "decay curve: times and values differ in length",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::invalid(
                "decay curve: times must be increasing and >= 0",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("decay curve: non-finite value"));
        }
        Ok(DecayCurve {
            times,
            values,
            label: label.into(),
        })
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "time must be finite and >= 0, got {t}"
        )))
    }
}

/// Invariant law `N(0, Σ)` with `BΣ + ΣBᵀ = 2D`.
pub fn solve_lyapunov(spec: &DriftSpec) -> Result<GaussianState> {
    let rho = spectra::spectral_abscissa(spec)?;
    if !(rho > 0.0) {
        return Err(Error::UnstableDrift(rho));
    }
    let q = spec.diffusion() * 2.0;
    let sigma = solve_continuous_lyapunov(spec.drift(), &q)?;
    let res = lyapunov_residual(spec.drift(), &sigma, &q);
    if q.norm() > 0.0 && res > 1e-10 {
        return Err(Error::numerical(format!(
            "Lyapunov residual {res:.3e} exceeds 1e-10"
        )));
    }
    // Clip round-off negativity; genuine indefiniteness is a solver failure.
    let (vals, _) = linalg::sym_eigen(&sigma);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    if vals[0] < -1e-10 * top.max(f64::MIN_POSITIVE) {
        return Err(Error::numerical("invariant covariance is indefinite"));
    }
    let sigma = if vals[0] < 0.0 {
        linalg::sym_apply(&sigma, |v| v.max(0.0))
    } else {
        sigma
    };
    GaussianState::new(DVector::zeros(spec.dim()), sigma)
}

/// `(e^{-tB}, ∫₀ᵗ e^{-sB} 2D e^{-sBᵀ} ds)`.
///
/// The integral comes from the augmented block exponential
/// `exp(h[[-B, 2D], [0, Bᵀ]]) = [[e^{-hB}, F], [0, e^{hBᵀ}]]` with
/// `Q(h) = F e^{-hBᵀ}`, evaluated on a step `h` small enough that the block
/// exponential is well conditioned, then doubled with
/// `Q(2h) = Q(h) + e^{-hB} Q(h) e^{-hBᵀ}`.
pub fn mehler_factors(spec: &DriftSpec, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_time(t)?;
    let d = spec.dim();
    let b = spec.drift();
    if t == 0.0 {
        return Ok((DMatrix::identity(d, d), DMatrix::zeros(d, d)));
    }
    let bn = b.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let mut doublings = 0u32;
    let mut h = t;
    while bn * h > 0.5 && doublings < 200 {
        h *= 0.5;
        doublings += 1;
    }
    let mut block = DMatrix::<f64>::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&(b * -h));
    block
        .view_mut((0, d), (d, d))
        .copy_from(&(spec.diffusion() * (2.0 * h)));
    block
        .view_mut((d, d), (d, d))
        .copy_from(&(b.transpose() * h));
    let f = matrix_exponential(&block)?;
    let mut e = f.view((0, 0), (d, d)).into_owned();
    let mut q = f.view((0, d), (d, d)) * e.transpose();
    q = linalg::symmetrize(&q);
    for _ in 0..doublings {
        q = &q + &e * &q * e.transpose();
        q = linalg::symmetrize(&q);
        e = &e * &e;
    }
    if !e.iter().chain(q.iter()).all(|v| v.is_finite()) {
        return Err(Error::numerical("transient covariance overflow"));
    }
    Ok((e, q))
}

/// Law at time `t` of the OU process started from `init`.
pub fn propagate(spec: &DriftSpec, init: &GaussianState, t: f64) -> Result<GaussianState> {
    check_time(t)?;
    if init.dim() != spec.dim() {
        return Err(Error::invalid(format!(
            "initial law has dimension {}, drift has {}",
            init.dim(),
            spec.dim()
        )));
    }
    if t == 0.0 {
        return Ok(init.clone());
    }
    let (e, q) = mehler_factors(spec, t)?;
    let mean = &e * init.mean();
    let cov = linalg::symmetrize(&(&e * init.cov() * e.transpose() + q));
    GaussianState::new(mean, cov)
}

fn same_dim(a: &GaussianState, b: &GaussianState) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "Gaussian dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )))
    }
}

/// Wasserstein-2 distance between two Gaussian laws (Bures formula).
pub fn w2_gaussian(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    same_dim(a, b)?;
    let sb = linalg::sym_sqrt(b.cov(), SQRT_CLIP)?;
    let inner = linalg::symmetrize(&(&sb * a.cov() * &sb));
    let cross = linalg::sym_sqrt(&inner, SQRT_CLIP)?;
    let shift = (a.mean() - b.mean()).norm_squared();
    let bures = a.cov().trace() + b.cov().trace() - 2.0 * cross.trace();
    Ok((shift + bures).max(0.0).sqrt())
}

/// Relative entropy `KL(a ‖ b)`; infinite when `a` is degenerate.
pub fn kl_gaussian(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    same_dim(a, b)?;
    let (bvals, _) = linalg::sym_eigen(b.cov());
    let top = *bvals.last().expect("non-empty");
    if !(bvals[0] > INV_SQRT_FLOOR * top) {
        return Err(Error::invalid("reference covariance is singular"));
    }
    let chol = b
        .cov()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("reference covariance is not positive definite"))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("reference covariance is singular"))?;
    let whitened = linalg::symmetrize(&(&l_inv * a.cov() * l_inv.transpose()));
    let (xs, _) = linalg::sym_eigen(&whitened);
    let mut cov_term = 0.0;
    for x in xs {
        if x <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let dlt = x - 1.0;
        cov_term += dlt - dlt.ln_1p();
    }
    let z = &l_inv * (b.mean() - a.mean());
    Ok(0.5 * (cov_term + z.norm_squared()).max(0.0))
}

/// The invariant covariance with its inverse square root, reused across
/// evaluations of `γ²(t)`.
#[derive(Debug, Clone)]
pub struct LinearSector {
    spec: DriftSpec,
    sigma: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl LinearSector {
    pub fn new(spec: &DriftSpec) -> Result<Self> {
        let inv = solve_lyapunov(spec)?;
        let inv_sqrt = linalg::sym_inv_sqrt(inv.cov(), INV_SQRT_FLOOR).map_err(|_| {
            Error::invalid(
                "invariant covariance is singular: the drift and diffusion are not hypoelliptic",
            )
        })?;
        Ok(LinearSector {
            spec: spec.clone(),
            sigma: inv.cov().clone(),
            inv_sqrt,
        })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `γ²(t) = λ_max(Σ^{-1/2} e^{-tB} Σ e^{-tBᵀ} Σ^{-1/2})`.
    pub fn norm_sq(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let e = matrix_exponential(&(self.spec.drift() * -t))?;
        let m = &self.inv_sqrt * &e * &self.sigma * e.transpose() * &self.inv_sqrt;
        Ok(linalg::lambda_max(&m))
    }

    /// `1 − γ²(t)`, computed without cancellation as
    /// `λ_min(Σ^{-1/2} Q(t) Σ^{-1/2})` using `Σ − e^{-tB}Σe^{-tBᵀ} = Q(t)`.
    pub fn gap(&self, t: f64) -> Result<f64> {
        let (_, q) = mehler_factors(&self.spec, t)?;
        Ok(linalg::lambda_min(&(&self.inv_sqrt * q * &self.inv_sqrt)))
    }
}

/// Squared L²(μ) operator norm of `P_t − μ`.
pub fn operator_norm_sq(spec: &DriftSpec, t: f64) -> Result<f64> {
    check_time(t)?;
    LinearSector::new(spec)?.norm_sq(t)
}

/// `1 − ‖P_t − μ‖²`, accurate at short times.
pub fn operator_norm_gap(spec: &DriftSpec, t: f64) -> Result<f64> {
    check_time(t)?;
    LinearSector::new(spec)?.gap(t)
}

/// Operator-norm decay on a time grid with fitted asymptotic exponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayStudy {
    /// `γ²(t)` on the grid.
    pub curve: DecayCurve,
    /// `1 − γ²(t)` on the grid.
    pub gaps: Vec<f64>,
    pub rho: f64,
    pub big_n: usize,
    pub bracket_count: usize,
    /// Slope of `ln(γ² e^{2ρt})` against `ln t` on the larger-time half;
    /// tends to `2(N−1)`.
    pub long_time_slope: f64,
    /// Slope of `ln(1 − γ²)` against `ln t` on the smaller-time half;
    /// tends to `2M+1`.
    pub short_time_slope: f64,
    pub long_time_points: usize,
    pub short_time_points: usize,
}

/// Evaluates `γ²` on `times` (at least 8 increasing points) and fits the
/// long-time polynomial exponent and the short-time smoothing order.
pub fn decay_study(spec: &DriftSpec, times: &[f64]) -> Result<DecayStudy> {
    if times.len() < 8 {
        return Err(Error::invalid(format!(
            "decay study needs at least 8 time points, got {}",
            times.len()
        )));
    }
    let cert = spectra::spectral_certificate(spec, spectra::DEFAULT_TOL)?;
    let sector = LinearSector::new(spec)?;
    let values = times
        .iter()
        .map(|&t| sector.norm_sq(t))
        .collect::<Result<Vec<_>>>()?;
    let gaps = times
        .iter()
        .map(|&t| sector.gap(t))
        .collect::<Result<Vec<_>>>()?;
    let curve = DecayCurve::new(times.to_vec(), values, "operator_norm_sq")?;

    let half = times.len() / 2;
    let long = fit_half(&times[half..], |i| {
        let v = curve.values[half + i];
        if v > 0.0 {
            v.ln() + 2.0 * cert.rho * times[half + i]
        } else {
            f64::NAN
        }
    })?;
    let short = fit_half(&times[..half], |i| {
        if gaps[i] > 0.0 {
            gaps[i].ln()
        } else {
            f64::NAN
        }
    })?;
    Ok(DecayStudy {
        curve,
        gaps,
        rho: cert.rho,
        big_n: cert.big_n,
        bracket_count: cert.bracket_count,
        long_time_slope: long.slope,
        short_time_slope: short.slope,
        long_time_points: long.points,
        short_time_points: short.points,
    })
}

fn fit_half(times: &[f64], y: impl Fn(usize) -> f64) -> Result<LineFit> {
    let x: Vec<f64> = times
        .iter()
        .map(|&t| if t > 0.0 { t.ln() } else { f64::NAN })
        .collect();
    let ys: Vec<f64> = (0..times.len()).map(y).collect();
    fit::fit_line(&x, &ys, 4)
}
