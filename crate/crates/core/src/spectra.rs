//! Spectral certification of drift matrices.
//!
//! For the OU generator `Lf = -(Bx)·∇f + div(D∇f)` the long-time decay is
//! governed by the spectral abscissa `ρ` of `B` and the size `N` of the
//! largest Jordan block sitting on the line `Re λ = ρ`; the short-time
//! smoothing is governed by the number `M` of Kalman terms needed before
//! `Σ_{k≤M} B^k D (Bᵀ)^k` becomes positive definite.
//!
//! Jordan structure is numerically fragile. Eigenvalues are first grouped
//! into clusters whose mean is well conditioned even when the individual
//! eigenvalues of a defective block scatter; each cluster is validated by its
//! rank staircase `dim ker (B - λ̄I)^k` and split further when the staircase
//! does not account for its algebraic multiplicity.

use nalgebra::{linalg::Schur, DMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, serde_matrix, CMatrix};
use crate::{Error, Result};

/// Default relative tolerance for rank decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Largest clustering radius, relative to `1 + ‖B‖₂`.
const CLUSTER_RADIUS: f64 = 1e-3;

/// Drift/diffusion pair of `dX = -BX dt + √(2D) dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDriftSpec", into = "RawDriftSpec")]
pub struct DriftSpec {
    drift: DMatrix<f64>,
    diffusion: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDriftSpec {
    #[serde(with = "serde_matrix", alias = "B")]
    drift: DMatrix<f64>,
    #[serde(with = "serde_matrix", alias = "D")]
    diffusion: DMatrix<f64>,
}

impl TryFrom<RawDriftSpec> for DriftSpec {
    type Error = Error;
    fn try_from(raw: RawDriftSpec) -> Result<Self> {
        DriftSpec::new(raw.drift, raw.diffusion)
    }
}

impl From<DriftSpec> for RawDriftSpec {
    fn from(s: DriftSpec) -> Self {
        RawDriftSpec {
            drift: s.drift,
            diffusion: s.diffusion,
        }
    }
}

impl DriftSpec {
    /// Validates shapes, finiteness, and symmetry/PSD of the diffusion.
    pub fn new(drift: DMatrix<f64>, diffusion: DMatrix<f64>) -> Result<Self> {
        let d = linalg::ensure_square(&drift, "drift matrix B")?;
        linalg::ensure_finite(&drift, "drift matrix B")?;
        if diffusion.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "diffusion matrix D must be {d}x{d}, got {}x{}",
                diffusion.nrows(),
                diffusion.ncols()
            )));
        }
        linalg::ensure_finite(&diffusion, "diffusion matrix D")?;
        linalg::ensure_psd(&diffusion, 1e-12, "diffusion matrix D")?;
        Ok(DriftSpec {
            drift,
            diffusion: linalg::symmetrize(&diffusion),
        })
    }

    /// Convenience constructor from row-major slices.
    pub fn from_rows(drift: &[Vec<f64>], diffusion: &[Vec<f64>]) -> Result<Self> {
        Self::new(linalg::from_rows(drift)?, linalg::from_rows(diffusion)?)
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenCluster {
    /// Mean of the member eigenvalues.
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Rank staircase `dim ker (B - λI)^k`, `k = 1, 2, …` for one eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JordanStaircase {
    pub eigenvalue_re: f64,
    pub eigenvalue_im: f64,
    pub multiplicity: usize,
    /// `kernel_dims[k-1] = dim ker (B - λI)^k`, up to the first repeat.
    pub kernel_dims: Vec<usize>,
    /// Per-power separation of the rank decision from its threshold:
    /// `min(σ_kept / thr, thr / σ_dropped)`; values near 1 flag fragile calls.
    pub margins: Vec<f64>,
}

impl JordanStaircase {
    /// Largest power at which the kernel still grows (the Jordan index).
    pub fn index(&self) -> usize {
        let mut prev = 0;
        let mut idx = 0;
        for (k, &d) in self.kernel_dims.iter().enumerate() {
            if d > prev {
                idx = k + 1;
            }
            prev = d;
        }
        idx
    }

    pub fn final_dim(&self) -> usize {
        self.kernel_dims.last().copied().unwrap_or(0)
    }
}

/// Summary of the decay structure of a drift spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralCertificate {
    pub rho: f64,
    pub big_n: usize,
    pub hypoelliptic: bool,
    pub bracket_count: usize,
    pub reach: f64,
    /// Staircases of the critical eigenvalues (those with `Re λ ≈ ρ`).
    pub critical: Vec<JordanStaircase>,
}

/// Kalman-type hypoellipticity certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KalmanCertificate {
    pub hypoelliptic: bool,
    pub bracket_count: usize,
    /// Smallest eigenvalue of `Σ_{k≤M} B^k D (Bᵀ)^k`.
    pub reach: f64,
}

/// Raw eigenvalues of a real square matrix.
pub fn eigenvalues(b: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    linalg::ensure_square(b, "matrix")?;
    linalg::ensure_finite(b, "matrix")?;
    let schur = Schur::try_new(b.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn singular_threshold(c_norm: f64, power: usize, dim: usize, tol: f64) -> f64 {
    tol * dim as f64 * c_norm.max(f64::MIN_POSITIVE).powi(power as i32)
}

/// Computes the rank staircase of `B - λI` over the complex field, stopping
/// when the kernel stops growing or `max_power` is reached.
pub fn rank_staircase(
    b: &DMatrix<f64>,
    lambda: Complex64,
    tol: f64,
    max_power: usize,
) -> Result<JordanStaircase> {
    let dim = linalg::ensure_square(b, "matrix")?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let c = linalg::to_complex(b) - CMatrix::identity(dim, dim) * lambda;
    let c_norm = linalg::singular_values(&c)?[0];
    let mut power = c.clone();
    let mut dims = Vec::new();
    let mut margins = Vec::new();
    for k in 1..=max_power.max(1) {
        if k > 1 {
            power = &power * &c;
        }
        let sv = linalg::singular_values(&power)?;
        let thr = singular_threshold(c_norm, k, dim, tol);
        let rank = sv.iter().filter(|&&s| s > thr).count();
        let kept = if rank > 0 {
            sv[rank - 1] / thr
        } else {
            f64::INFINITY
        };
        let dropped = if rank < dim {
            thr / sv[rank].max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        margins.push(kept.min(dropped).min(1e300));
        let kd = dim - rank;
        let stalled = dims.last().is_some_and(|&p| p == kd);
        dims.push(kd);
        if stalled || kd == dim {
            break;
        }
    }
    Ok(JordanStaircase {
        eigenvalue_re: lambda.re,
        eigenvalue_im: lambda.im,
        multiplicity: 0,
        kernel_dims: dims,
        margins,
    })
}

fn mean(values: &[Complex64]) -> Complex64 {
    values.iter().sum::<Complex64>() / values.len() as f64
}

/// Single-linkage grouping of `values` with the given radius.
fn link(values: &[Complex64], radius: f64) -> Vec<Vec<Complex64>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= radius {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let r = root(&mut label, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => g.1.push(v),
            None => groups.push((r, vec![v])),
        }
    }
    groups.into_iter().map(|g| g.1).collect()
}

fn resolve_cluster(
    b: &DMatrix<f64>,
    members: Vec<Complex64>,
    radius: f64,
    tol: f64,
    out: &mut Vec<(EigenCluster, JordanStaircase)>,
) -> Result<()> {
    let m = members.len();
    let value = mean(&members);
    let mut st = rank_staircase(b, value, tol, m + 1)?;
    st.multiplicity = m;
    let consistent = st.kernel_dims.first().copied().unwrap_or(0) >= 1 && st.final_dim() == m;
    if consistent || m == 1 || radius <= tol {
        out.push((
            EigenCluster {
                value,
                multiplicity: m,
            },
            st,
        ));
        return Ok(());
    }
    for sub in link(&members, radius * 0.1) {
        resolve_cluster(b, sub, radius * 0.1, tol, out)?;
    }
    Ok(())
}

/// Eigenvalue clusters of `b` together with their rank staircases.
pub fn jordan_structure(
    b: &DMatrix<f64>,
    tol: f64,
) -> Result<Vec<(EigenCluster, JordanStaircase)>> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let values = eigenvalues(b)?;
    let radius = CLUSTER_RADIUS * (1.0 + linalg::spectral_norm(b));
    let mut out = Vec::new();
    for group in link(&values, radius) {
        resolve_cluster(b, group, radius, tol, &mut out)?;
    }
    Ok(out)
}

/// Eigenvalue clusters of `b` (cluster means with algebraic multiplicity).
pub fn eigen_clusters(b: &DMatrix<f64>, tol: f64) -> Result<Vec<EigenCluster>> {
    Ok(jordan_structure(b, tol)?.into_iter().map(|c| c.0).collect())
}

fn abscissa_of(clusters: &[EigenCluster]) -> f64 {
    clusters
        .iter()
        .map(|c| c.value.re)
        .fold(f64::INFINITY, f64::min)
}

/// Smallest real part over the spectrum of the drift matrix.
///
/// Defective eigenvalues are replaced by the mean of their cluster, which is
/// far better conditioned than the scattered individual eigenvalues.
pub fn spectral_abscissa(spec: &DriftSpec) -> Result<f64> {
    spectral_abscissa_of(spec.drift())
}

pub fn spectral_abscissa_of(b: &DMatrix<f64>) -> Result<f64> {
    Ok(abscissa_of(&eigen_clusters(b, DEFAULT_TOL)?))
}

fn critical_staircases(
    structure: Vec<(EigenCluster, JordanStaircase)>,
    tol: f64,
) -> (f64, Vec<JordanStaircase>) {
    let clusters: Vec<EigenCluster> = structure.iter().map(|c| c.0).collect();
    let rho = abscissa_of(&clusters);
    let window = tol * (1.0 + rho.abs());
    let critical = structure
        .into_iter()
        .filter(|(c, _)| (c.value.re - rho).abs() <= window)
        .map(|(_, s)| s)
        .collect();
    (rho, critical)
}

/// Largest Jordan block among eigenvalues whose real part equals the
/// spectral abscissa (within `tol·(1+|ρ|)`).
pub fn critical_jordan_index(spec: &DriftSpec, tol: f64) -> Result<usize> {
    let (_, critical) = critical_staircases(jordan_structure(spec.drift(), tol)?, tol);
    Ok(critical
        .iter()
        .map(JordanStaircase::index)
        .max()
        .unwrap_or(1)
        .max(1))
}

/// Smallest `M ≤ max_brackets` such that `Σ_{k=0}^{M} B^k D (Bᵀ)^k` is
/// positive definite.
///
/// The positivity decision is made on `B/‖B‖₂`, which leaves `M` unchanged
/// while keeping the partial sums bounded by `(M+1)‖D‖`; the reported
/// `reach` is the smallest eigenvalue of the unscaled sum.
pub fn kalman_certificate(spec: &DriftSpec, max_brackets: usize) -> Result<KalmanCertificate> {
    kalman_certificate_with_tol(spec, max_brackets, DEFAULT_TOL)
}

pub fn kalman_certificate_with_tol(
    spec: &DriftSpec,
    max_brackets: usize,
    tol: f64,
) -> Result<KalmanCertificate> {
    let b = spec.drift();
    let d = spec.diffusion();
    let scale = linalg::spectral_norm(b);
    if !scale.is_finite() {
        return Err(Error::numerical("spectral norm of B did not converge"));
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let bn = b / scale;

    let mut term = d.clone();
    let mut raw_term = d.clone();
    let mut sum = d.clone();
    let mut raw_sum = d.clone();
    for m in 0..=max_brackets {
        if m > 0 {
            term = &bn * &term * bn.transpose();
            raw_term = b * &raw_term * b.transpose();
            sum += &term;
            raw_sum += &raw_term;
        }
        let (vals, _) = linalg::sym_eigen(&sum);
        let top = *vals.last().expect("non-empty");
        if top > 0.0 && vals[0] > tol * top {
            return Ok(KalmanCertificate {
                hypoelliptic: true,
                bracket_count: m,
                reach: linalg::lambda_min(&raw_sum),
            });
        }
    }
    Ok(KalmanCertificate {
        hypoelliptic: false,
        bracket_count: max_brackets,
        reach: linalg::lambda_min(&raw_sum),
    })
}

/// Full certificate `(ρ, N, hypoelliptic, M, r)` with `max_brackets = dim-1`.
pub fn spectral_certificate(spec: &DriftSpec, tol: f64) -> Result<SpectralCertificate> {
    let (rho, critical) = critical_staircases(jordan_structure(spec.drift(), tol)?, tol);
    let big_n = critical
        .iter()
        .map(JordanStaircase::index)
        .max()
        .unwrap_or(1)
        .max(1);
    let kalman = kalman_certificate(spec, spec.dim() - 1)?;
    Ok(SpectralCertificate {
        rho,
        big_n,
        hypoelliptic: kalman.hypoelliptic,
        bracket_count: kalman.bracket_count,
        reach: kalman.reach,
        critical,
    })
}

/// `(1 + t^{2(N-1)}) e^{-2ρt}`, the long-time envelope with unit constant.
///
/// For `N = 1` the power term is the constant `t⁰ = 1` (also at `t = 0`),
/// so the envelope is `2e^{-2ρt}`.
pub fn decay_envelope(rho: f64, big_n: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    if big_n == 0 {
        return Err(Error::invalid("Jordan index must be >= 1"));
    }
    if !rho.is_finite() {
        return Err(Error::invalid("rho must be finite"));
    }
    let poly = 1.0 + t.powi(2 * (big_n as i32 - 1));
    Ok(poly * (-2.0 * rho * t).exp())
}

/// `exp(-κ t (1-e^{-t})^{2M})`, the short-time-aware coercive profile.
pub fn coercivity_profile(kappa: f64, m: usize, t: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let damp = (-(-t).exp_m1()).powi(2 * m as i32);
    Ok((-kappa * t * damp).exp())
}
