//! Overdamped chain of `N+1` interacting particles in `ℝ^d`:
//!
//! ```text
//! dX_i = −Σ_{j∼i} ∇W(X_i − X_j) dt + noise on the end particles,
//! ```
//!
//! with nearest-neighbour adjacency on the path `0 − 1 − … − N`. In the
//! fixed problem particle 0 is pinned at the origin and only particle `N`
//! is forced (`σ_N dB`). In the centered problem both ends are forced and
//! observables are taken on `X̂ = X − X̄`.
//!
//! Ensembles use Euler-Maruyama. Trajectory `k` draws from the ChaCha8
//! stream `k` of the configured seed, and all ensemble sums use a fixed
//! pairwise tree, so results do not depend on the number of threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian::solve_lyapunov;
use crate::graphs::{self, InteractionGraph};
use crate::linalg;
use crate::spectra::DriftSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Quadratic,
    Quartic,
}

/// `W(z) = (λ/2)|z|²`, or `(λ/2)|z|² + (α/4)|z|⁴` for the quartic kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub lambda: f64,
    #[serde(default)]
    pub alpha: f64,
}

impl PotentialSpec {
    pub fn quadratic(lambda: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Quadratic,
            lambda,
            alpha: 0.0,
        }
    }

    pub fn quartic(lambda: f64, alpha: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Quartic,
            lambda,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!(
                "potential.lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "potential.alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Scalar `s` with `∇W(z) = s·z`.
    #[inline]
    fn gradient_factor(&self, z_sq: f64) -> f64 {
        match self.kind {
            PotentialKind::Quadratic => self.lambda,
            PotentialKind::Quartic => self.lambda + self.alpha * z_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainMode {
    Fixed,
    Centered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChainConfig")]
pub struct ChainConfig {
    pub n: usize,
    pub dim: usize,
    pub potential: PotentialSpec,
    pub sigma0: f64,
    pub sigma_n: f64,
    pub dt: f64,
    pub seed: u64,
    pub mode: ChainMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChainConfig {
    n: usize,
    #[serde(default = "one", alias = "d")]
    dim: usize,
    potential: PotentialSpec,
    #[serde(default)]
    sigma0: f64,
    sigma_n: f64,
    dt: Option<f64>,
    #[serde(default)]
    seed: u64,
    mode: ChainMode,
}

fn one() -> usize {
    1
}

impl TryFrom<RawChainConfig> for ChainConfig {
    type Error = Error;
    fn try_from(r: RawChainConfig) -> Result<Self> {
        let mut c = ChainConfig::new(r.n, r.dim, r.potential, r.sigma0, r.sigma_n, r.mode, r.seed)?;
        if let Some(dt) = r.dt {
            c = c.with_dt(dt)?;
        }
        Ok(c)
    }
}

/// `0.01/λ · min(1, 1/(4N))`: the stiffest chain mode has rate `4λ`.
pub fn default_dt(n: usize, lambda: f64) -> f64 {
    0.01 / lambda * (1.0f64).min(1.0 / (4.0 * n as f64))
}

impl ChainConfig {
    pub fn new(
        n: usize,
        dim: usize,
        potential: PotentialSpec,
        sigma0: f64,
        sigma_n: f64,
        mode: ChainMode,
        seed: u64,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if dim < 1 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        potential.validate()?;
        for (name, v) in [("sigma0", sigma0), ("sigma_n", sigma_n)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(ChainConfig {
            n,
            dim,
            potential,
            sigma0,
            sigma_n,
            dt: default_dt(n, potential.lambda),
            seed,
            mode,
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Length `(N+1)·d` of a full state vector.
    pub fn state_len(&self) -> usize {
        (self.n + 1) * self.dim
    }

    /// Coordinates reported in ensemble statistics: particles `1..=N` in
    /// the fixed problem, all of `X̂` in the centered one.
    pub fn active_len(&self) -> usize {
        match self.mode {
            ChainMode::Fixed => self.n * self.dim,
            ChainMode::Centered => self.state_len(),
        }
    }

    fn check_state(&self, x: &[f64], what: &str) -> Result<()> {
        if x.len() != self.state_len() {
            return Err(Error::invalid(format!(
                "{what} has length {}, expected (N+1)*d = {}",
                x.len(),
                self.state_len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{what} has non-finite entries")));
        }
        if self.mode == ChainMode::Fixed && x[..self.dim].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid(format!(
                "{what}: particle 0 is pinned at the origin in fixed mode"
            )));
        }
        Ok(())
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.fill(0.0);
        for k in 0..self.n {
            let (a, b) = (k * d, (k + 1) * d);
            let z_sq: f64 = (0..d).map(|c| (x[a + c] - x[b + c]).powi(2)).sum();
            let s = self.potential.gradient_factor(z_sq);
            for c in 0..d {
                let g = s * (x[a + c] - x[b + c]);
                out[a + c] -= g;
                out[b + c] += g;
            }
        }
    }

    /// Active coordinates of `x` (centered in centered mode).
    fn active_into(&self, x: &[f64], out: &mut Vec<f64>) {
        match self.mode {
            ChainMode::Fixed => out.extend_from_slice(&x[self.dim..]),
            ChainMode::Centered => {
                let d = self.dim;
                let mut bar = vec![0.0; d];
                for (i, v) in x.iter().enumerate() {
                    bar[i % d] += v;
                }
                for b in bar.iter_mut() {
                    *b /= (self.n + 1) as f64;
                }
                out.extend(x.iter().enumerate().map(|(i, v)| v - bar[i % d]));
            }
        }
    }
}

/// Trajectories integrated together, one per lane.
const LANES: usize = 8;
type Lane = [f64; LANES];

/// Euler-Maruyama integrator acting on `LANES` independent trajectories
/// stored coordinate-major, with the per-step constants precomputed.
struct Stepper {
    n: usize,
    d: usize,
    kind: PotentialKind,
    lambda: f64,
    alpha: f64,
    dt: f64,
    /// First updated flat index (particle 0 is frozen in fixed mode).
    start: usize,
    centered: bool,
    amp0: f64,
    amp_n: f64,
}

impl Stepper {
    fn new(c: &ChainConfig) -> Self {
        let sq = c.dt.sqrt();
        let centered = c.mode == ChainMode::Centered;
        Stepper {
            n: c.n,
            d: c.dim,
            kind: c.potential.kind,
            lambda: c.potential.lambda,
            alpha: c.potential.alpha,
            dt: c.dt,
            start: if centered { 0 } else { c.dim },
            centered,
            amp0: c.sigma0 * sq,
            amp_n: c.sigma_n * sq,
        }
    }

    fn force_buffer(&self) -> Vec<Lane> {
        vec![[0.0; LANES]; (self.n + 2) * self.d]
    }

    fn noise_buffer(&self) -> Vec<Lane> {
        vec![[0.0; LANES]; if self.centered { 2 * self.d } else { self.d }]
    }

    /// One ChaCha8 stream per trajectory `first..first + count`.
    fn streams(seed: u64, first: usize, count: usize) -> Vec<ChaCha8Rng> {
        (first..first + count)
            .map(|traj| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(traj as u64);
                rng
            })
            .collect()
    }

    /// Draws the standard normals of one step for each live lane: block 0
    /// (centered mode only) followed by block `N`. Idle lanes get zeros.
    #[inline]
    fn draw_noise(&self, rngs: &mut [ChaCha8Rng], xi: &mut [Lane]) {
        for (l, rng) in rngs.iter_mut().enumerate() {
            for v in xi.iter_mut() {
                v[l] = rng.sample(StandardNormal);
            }
        }
    }

    /// Edge forces `∇W(x_k − x_{k+1})` written to `g[(k+1)d..(k+2)d]`, with
    /// zero padding in the first and last blocks, so that the drift at flat
    /// index `j` is `g[j] − g[j+d]`.
    #[inline]
    fn edge_forces(&self, x: &[Lane], g: &mut [Lane]) {
        let (n, d) = (self.n, self.d);
        let (lambda, alpha) = (self.lambda, self.alpha);
        match (self.kind, d) {
            (PotentialKind::Quadratic, _) => {
                for ((gj, a), b) in g[d..d + n * d].iter_mut().zip(&x[..n * d]).zip(&x[d..]) {
                    for l in 0..LANES {
                        gj[l] = lambda * (a[l] - b[l]);
                    }
                }
            }
            (PotentialKind::Quartic, 1) => {
                for ((gj, a), b) in g[1..1 + n].iter_mut().zip(&x[..n]).zip(&x[1..]) {
                    for l in 0..LANES {
                        let z = a[l] - b[l];
                        gj[l] = (lambda + alpha * z * z) * z;
                    }
                }
            }
            (PotentialKind::Quartic, _) => {
                for k in 0..n {
                    let (a, b) = (k * d, (k + 1) * d);
                    let mut z_sq = [0.0; LANES];
                    for c in 0..d {
                        for l in 0..LANES {
                            let z = x[a + c][l] - x[b + c][l];
                            z_sq[l] += z * z;
                        }
                    }
                    for c in 0..d {
                        for l in 0..LANES {
                            g[b + c][l] = (lambda + alpha * z_sq[l]) * (x[a + c][l] - x[b + c][l]);
                        }
                    }
                }
            }
        }
    }

    /// One step driven by the normals `xi`. Returns the per-lane sum of
    /// the new state, which is non-finite on blowup.
    #[inline]
    fn step(&self, x: &mut [Lane], g: &mut [Lane], xi: &[Lane]) -> Lane {
        let d = self.d;
        self.edge_forces(x, g);
        let dt = self.dt;
        let len = x.len();
        let mut sum = [0.0; LANES];
        for ((xj, ga), gb) in x[self.start..]
            .iter_mut()
            .zip(&g[self.start..len])
            .zip(&g[self.start + d..len + d])
        {
            for l in 0..LANES {
                xj[l] += dt * (ga[l] - gb[l]);
                sum[l] += xj[l];
            }
        }
        let last = self.n * d;
        for c in 0..d {
            for l in 0..LANES {
                let v = self.amp_n * xi[if self.centered { d + c } else { c }][l];
                x[last + c][l] += v;
                sum[l] += v;
            }
            if self.centered {
                for l in 0..LANES {
                    let u = self.amp0 * xi[c][l];
                    x[c][l] += u;
                    sum[l] += u;
                }
            }
        }
        sum
    }
}

fn broadcast(x: &[f64]) -> Vec<Lane> {
    x.iter().map(|&v| [v; LANES]).collect()
}

fn lane_of(x: &[Lane], l: usize, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = v[l];
    }
}

fn first_blowup(sum: &Lane, count: usize) -> Option<usize> {
    (0..count).find(|&l| !sum[l].is_finite())
}

/// Drift of the full chain: block `i` is `−Σ_{j∼i} ∇W(x_i − x_j)`.
pub fn drift(config: &ChainConfig, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != config.state_len() {
        return Err(Error::invalid(format!(
            "state has length {}, expected {}",
            x.len(),
            config.state_len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    config.drift_into(x, &mut out);
    Ok(out)
}

/// Scalar functional of the recorded (active) state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// Component `component` of particle `particle` (of `X̂` when centered).
    Coordinate { particle: usize, component: usize },
    /// Squared Euclidean norm of the active state.
    SquaredNorm,
    /// `|X_N − X_0|²`.
    EndToEnd,
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Coordinate {
                particle,
                component,
            } => format!("x_{particle}_{component}"),
            Observable::SquaredNorm => "squared_norm".into(),
            Observable::EndToEnd => "end_to_end".into(),
        }
    }

    fn validate(&self, config: &ChainConfig) -> Result<()> {
        if let Observable::Coordinate {
            particle,
            component,
        } = *self
        {
            if particle > config.n || component >= config.dim {
                return Err(Error::invalid(format!(
                    "observable {} is outside the chain",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    fn eval(&self, config: &ChainConfig, full: &[f64], active: &[f64]) -> f64 {
        let d = config.dim;
        match *self {
            Observable::Coordinate {
                particle,
                component,
            } => match config.mode {
                ChainMode::Fixed => full[particle * d + component],
                ChainMode::Centered => active[particle * d + component],
            },
            Observable::SquaredNorm => active.iter().map(|v| v * v).sum(),
            Observable::EndToEnd => (0..d)
                .map(|c| (full[config.n * d + c] - full[c]).powi(2))
                .sum(),
        }
    }
}

/// Ensemble statistics on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `mean[o][k]` for observable `o` at time `times[k]`.
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    /// `1.96·sqrt(variance/n)`.
    pub ci_halfwidth: Vec<Vec<f64>>,
    /// Ensemble mean of the active coordinates at each time.
    pub state_mean: Vec<DVector<f64>>,
    /// Unbiased ensemble covariance of the active coordinates at each time.
    pub state_cov: Vec<DMatrix<f64>>,
    pub n_traj: usize,
}

/// One CSV row `(time, observable, mean, variance, ci_halfwidth)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub time: f64,
    pub observable: String,
    pub mean: f64,
    pub variance: f64,
    pub ci_halfwidth: f64,
}

impl TrajectoryStats {
    pub fn rows(&self) -> Vec<StatsRow> {
        let mut rows = Vec::new();
        for (k, &time) in self.times.iter().enumerate() {
            for (o, obs) in self.observables.iter().enumerate() {
                rows.push(StatsRow {
                    time,
                    observable: obs.name(),
                    mean: self.mean[o][k],
                    variance: self.variance[o][k],
                    ci_halfwidth: self.ci_halfwidth[o][k],
                });
            }
        }
        rows
    }
}

/// Sum of `f(i)` over `lo..hi` along a fixed binary tree.
fn tree_sum(lo: usize, hi: usize, len: usize, f: &(impl Fn(usize, &mut [f64]) + Sync)) -> Vec<f64> {
    if hi - lo <= 32 {
        let mut acc = vec![0.0; len];
        for i in lo..hi {
            f(i, &mut acc);
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let (mut a, b) = rayon::join(|| tree_sum(lo, mid, len, f), || tree_sum(mid, hi, len, f));
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Number of steps to reach `t_end`, requiring it to be a multiple of
/// `dt` and of the output grid.
fn step_count(dt: f64, t_end: f64, checkpoints: usize) -> Result<u64> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if checkpoints < 1 {
        return Err(Error::invalid("checkpoints must be at least 1"));
    }
    let steps = (t_end / dt).round();
    if steps < 1.0 || (steps * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::invalid(format!(
            "dt = {dt} does not divide t_end = {t_end}"
        )));
    }
    let steps = steps as u64;
    if !steps.is_multiple_of(checkpoints as u64) {
        return Err(Error::invalid(format!(
            "dt = {dt} does not divide the output spacing {}",
            t_end / checkpoints as f64
        )));
    }
    Ok(steps)
}

/// First error in trajectory order, so failures are reproducible too.
fn collect_ordered<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Runs `n_traj` Euler-Maruyama trajectories from `x0` up to `t_end` and
/// records statistics at `checkpoints + 1` equally spaced times (from 0).
pub fn simulate(
    config: &ChainConfig,
    x0: &[f64],
    t_end: f64,
    n_traj: usize,
    checkpoints: usize,
    observables: &[Observable],
) -> Result<TrajectoryStats> {
    config.check_state(x0, "x0")?;
    if n_traj < 2 {
        return Err(Error::invalid("n_traj must be at least 2"));
    }
    for o in observables {
        o.validate(config)?;
    }
    let steps = step_count(config.dt, t_end, checkpoints)?;
    let every = steps / checkpoints as u64;
    let a = config.active_len();
    let width = a + observables.len();
    let record_len = (checkpoints + 1) * width;

    let record = |x: &[f64], out: &mut Vec<f64>| {
        let start = out.len();
        config.active_into(x, out);
        for o in observables {
            let v = o.eval(config, x, &out[start..start + a]);
            out.push(v);
        }
    };

    let batches = n_traj.div_ceil(LANES);
    let results: Vec<Result<Vec<Vec<f64>>>> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let first = batch * LANES;
            let count = LANES.min(n_traj - first);
            let stepper = Stepper::new(config);
            let mut rngs = Stepper::streams(config.seed, first, count);
            let mut x = broadcast(x0);
            let mut g = stepper.force_buffer();
            let mut xi = stepper.noise_buffer();
            let mut scratch = x0.to_vec();
            let mut recs = vec![Vec::with_capacity(record_len); count];
            for rec in recs.iter_mut() {
                record(x0, rec);
            }
            for s in 1..=steps {
                stepper.draw_noise(&mut rngs, &mut xi);
                let sum = stepper.step(&mut x, &mut g, &xi);
                if let Some(l) = first_blowup(&sum, count) {
                    return Err(Error::Diverged {
                        step: s,
                        trajectory: first + l,
                    });
                }
                if s % every == 0 {
                    for (l, rec) in recs.iter_mut().enumerate() {
                        lane_of(&x, l, &mut scratch);
                        record(&scratch, rec);
                    }
                }
            }
            Ok(recs)
        })
        .collect();
    let records: Vec<Vec<f64>> = collect_ordered(results)?.into_iter().flatten().collect();

    let nf = n_traj as f64;
    let mean: Vec<f64> = tree_sum(0, n_traj, record_len, &|i, acc: &mut [f64]| {
        for (s, v) in acc.iter_mut().zip(&records[i]) {
            *s += v;
        }
    })
    .into_iter()
    .map(|s| s / nf)
    .collect();
    // Second central moments: state covariances then observable variances.
    let cov_len = (checkpoints + 1) * (a * a + observables.len());
    let second: Vec<f64> = tree_sum(0, n_traj, cov_len, &|i, acc: &mut [f64]| {
        let r = &records[i];
        let mut off = 0;
        for k in 0..=checkpoints {
            let base = k * width;
            for p in 0..a {
                let dp = r[base + p] - mean[base + p];
                for q in 0..a {
                    acc[off + p * a + q] += dp * (r[base + q] - mean[base + q]);
                }
            }
            off += a * a;
            for o in 0..observables.len() {
                let dv = r[base + a + o] - mean[base + a + o];
                acc[off + o] += dv * dv;
            }
            off += observables.len();
        }
    });

    let mut stats = TrajectoryStats {
        times: (0..=checkpoints)
            .map(|k| t_end * k as f64 / checkpoints as f64)
            .collect(),
        observables: observables.to_vec(),
        mean: vec![Vec::new(); observables.len()],
        variance: vec![Vec::new(); observables.len()],
        ci_halfwidth: vec![Vec::new(); observables.len()],
        state_mean: Vec::new(),
        state_cov: Vec::new(),
        n_traj,
    };
    let mut off = 0;
    for k in 0..=checkpoints {
        let base = k * width;
        stats
            .state_mean
            .push(DVector::from_column_slice(&mean[base..base + a]));
        let cov = DMatrix::from_row_slice(a, a, &second[off..off + a * a]) / (nf - 1.0);
        stats.state_cov.push(cov);
        off += a * a;
        for o in 0..observables.len() {
            let var = second[off + o] / (nf - 1.0);
            stats.mean[o].push(mean[base + a + o]);
            stats.variance[o].push(var);
            stats.ci_halfwidth[o].push(1.96 * (var / nf).sqrt());
        }
        off += observables.len();
    }
    Ok(stats)
}

/// Synchronous-coupling estimate of the contraction rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingEstimate {
    /// Mean over pairs of `−(1/T) ln(|X_T − Y_T| / |X_0 − Y_0|)`.
    pub rate: f64,
    pub std: f64,
    pub ci_halfwidth: f64,
    pub n_pairs: usize,
    pub t_end: f64,
    /// True when `|X_t − Y_t|` never increased between output times along
    /// any pair, up to round-off.
    pub monotone: bool,
    pub times: Vec<f64>,
    /// Ensemble mean of `ln(|X_t − Y_t| / |X_0 − Y_0|)` on the output grid.
    pub mean_log_distance: Vec<f64>,
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Log-distances at the output steps and the pathwise monotonicity flag.
type PairLog = (Vec<f64>, bool);

/// Runs `n_pairs` coupled pairs driven by identical Brownian increments.
pub fn couple(
    config: &ChainConfig,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    n_pairs: usize,
    checkpoints: usize,
) -> Result<CouplingEstimate> {
    config.check_state(x0, "x0")?;
    config.check_state(y0, "y0")?;
    if n_pairs < 2 {
        return Err(Error::invalid("n_pairs must be at least 2"));
    }
    let d0 = distance(x0, y0);
    if d0 == 0.0 {
        return Err(Error::invalid("x0 and y0 coincide"));
    }
    if config.mode == ChainMode::Centered {
        let d = config.dim;
        for c in 0..d {
            let shift: f64 = (0..=config.n).map(|i| x0[i * d + c] - y0[i * d + c]).sum();
            if shift.abs() > 1e-12 * d0 * (config.n + 1) as f64 {
                return Err(Error::invalid(
                    "in centered mode x0 - y0 must have zero mean block",
                ));
            }
        }
    }
    let steps = step_count(config.dt, t_end, checkpoints)?;
    let every = steps / checkpoints as u64;

    let batches = n_pairs.div_ceil(LANES);
    let results: Vec<Result<Vec<PairLog>>> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let first = batch * LANES;
            let count = LANES.min(n_pairs - first);
            let stepper = Stepper::new(config);
            let mut rngs = Stepper::streams(config.seed, first, count);
            let (mut x, mut y) = (broadcast(x0), broadcast(y0));
            let mut g = stepper.force_buffer();
            let mut xi = stepper.noise_buffer();
            let (mut xs, mut ys) = (x0.to_vec(), y0.to_vec());
            let mut out: Vec<PairLog> = (0..count)
                .map(|_| {
                    let mut logs = Vec::with_capacity(checkpoints + 1);
                    logs.push(0.0);
                    (logs, true)
                })
                .collect();
            let mut prev = vec![d0; count];
            for s in 1..=steps {
                stepper.draw_noise(&mut rngs, &mut xi);
                let fx = stepper.step(&mut x, &mut g, &xi);
                let fy = stepper.step(&mut y, &mut g, &xi);
                if let Some(l) = first_blowup(&fx, count).or(first_blowup(&fy, count)) {
                    return Err(Error::Diverged {
                        step: s,
                        trajectory: first + l,
                    });
                }
                if s % every != 0 {
                    continue;
                }
                for (l, (logs, monotone)) in out.iter_mut().enumerate() {
                    lane_of(&x, l, &mut xs);
                    lane_of(&y, l, &mut ys);
                    let dist = distance(&xs, &ys);
                    // Slack for the round-off of subtracting shared noise.
                    let scale = xs.iter().chain(&ys).fold(0.0f64, |m, v| m.max(v.abs()));
                    if dist > prev[l] + 1e-12 * (1.0 + scale) * (xs.len() as f64).sqrt() {
                        *monotone = false;
                    }
                    prev[l] = dist;
                    if dist == 0.0 {
                        return Err(Error::numerical(format!(
                            "pair {} coalesced exactly",
                            first + l
                        )));
                    }
                    logs.push((dist / d0).ln());
                }
            }
            Ok(out)
        })
        .collect();
    let pairs: Vec<(Vec<f64>, bool)> = collect_ordered(results)?.into_iter().flatten().collect();

    let nf = n_pairs as f64;
    let len = checkpoints + 1;
    let mean_log: Vec<f64> = tree_sum(0, n_pairs, len, &|i, acc: &mut [f64]| {
        for (s, v) in acc.iter_mut().zip(&pairs[i].0) {
            *s += v;
        }
    })
    .into_iter()
    .map(|s| s / nf)
    .collect();
    let rate = -mean_log[checkpoints] / t_end;
    let sq = tree_sum(0, n_pairs, 1, &|i, acc: &mut [f64]| {
        let r = -pairs[i].0[checkpoints] / t_end;
        acc[0] += (r - rate) * (r - rate);
    })[0];
    let std = (sq / (nf - 1.0)).sqrt();
    Ok(CouplingEstimate {
        rate,
        std,
        ci_halfwidth: 1.96 * std / nf.sqrt(),
        n_pairs,
        t_end,
        monotone: pairs.iter().all(|p| p.1),
        times: (0..=checkpoints)
            .map(|k| t_end * k as f64 / checkpoints as f64)
            .collect(),
        mean_log_distance: mean_log,
    })
}

fn require_quadratic(config: &ChainConfig) -> Result<()> {
    if config.potential.kind != PotentialKind::Quadratic {
        return Err(Error::invalid(
            "exact OU reduction needs a quadratic potential",
        ));
    }
    Ok(())
}

fn noise_diag(config: &ChainConfig, len: usize, first: Option<usize>, last: usize) -> DMatrix<f64> {
    let mut diag = vec![0.0; len];
    if let Some(f) = first {
        diag[f] = 0.5 * config.sigma0 * config.sigma0;
    }
    diag[last] = 0.5 * config.sigma_n * config.sigma_n;
    linalg::kron(
        &DMatrix::from_diagonal(&DVector::from_vec(diag)),
        &DMatrix::identity(config.dim, config.dim),
    )
}

/// Exact OU form `dY = −BY dt + √(2D) dW` of a quadratic chain.
///
/// Fixed mode acts on particles `1..=N` with the pinned Laplacian; centered
/// mode acts on all `N+1` particles with the full (singular) Laplacian.
pub fn quadratic_reduction(config: &ChainConfig) -> Result<DriftSpec> {
    require_quadratic(config)?;
    let lambda = config.potential.lambda;
    let g = InteractionGraph::chain(config.n, 1.0)?;
    let eye = DMatrix::identity(config.dim, config.dim);
    let n = config.n;
    let (lap, diff) = match config.mode {
        ChainMode::Fixed => (
            graphs::pinned_laplacian(&g, 0)?,
            noise_diag(config, n, None, n - 1),
        ),
        ChainMode::Centered => (
            -graphs::laplacian(&g),
            noise_diag(config, n + 1, Some(0), n),
        ),
    };
    DriftSpec::new(linalg::kron(&(lap * lambda), &eye), diff)
}

/// Orthonormal basis of the mean-zero subspace of `ℝ^{N+1}` (Helmert
/// contrasts), one column per direction.
pub fn mean_zero_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n, |i, k| {
        let kf = (k + 1) as f64;
        let norm = (kf * (kf + 1.0)).sqrt();
        if i <= k {
            1.0 / norm
        } else if i == k + 1 {
            -kf / norm
        } else {
            0.0
        }
    })
}

/// Centered OU reduction restricted to mean-zero configurations, in the
/// coordinates `y = (Uᵀ ⊗ I)x̂` with `U = mean_zero_basis(N)`.
pub fn centered_projection(config: &ChainConfig) -> Result<DriftSpec> {
    require_quadratic(config)?;
    let full = quadratic_reduction(&ChainConfig {
        mode: ChainMode::Centered,
        ..config.clone()
    })?;
    let u = linalg::kron(
        &mean_zero_basis(config.n),
        &DMatrix::identity(config.dim, config.dim),
    );
    let ut = u.transpose();
    DriftSpec::new(
        linalg::symmetrize(&(&ut * full.drift() * &u)),
        linalg::symmetrize(&(&ut * full.diffusion() * &u)),
    )
}

/// Optimal and bounding log-Sobolev constants of the stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LsiConstants {
    /// `λ_max(Σ)/2` for the invariant covariance `Σ`.
    pub exact: f64,
    /// `λ_max(S̃)/(2ρ)` with `S̃` the noise matrix and `ρ` the relevant gap.
    pub bound: f64,
    pub gap: f64,
}

pub fn lsi_constant_quadratic(config: &ChainConfig) -> Result<LsiConstants> {
    require_quadratic(config)?;
    let lambda = config.potential.lambda;
    let g = InteractionGraph::chain(config.n, 1.0)?;
    let (spec, gap, noise) = match config.mode {
        ChainMode::Fixed => {
            if !(config.sigma_n > 0.0) {
                return Err(Error::invalid(
                    "sigma_n must be positive for the fixed chain",
                ));
            }
            (
                quadratic_reduction(config)?,
                lambda * graphs::dirichlet_eigenvalue(&g, 0)?,
                0.5 * config.sigma_n * config.sigma_n,
            )
        }
        ChainMode::Centered => {
            if !(config.sigma0 > 0.0 || config.sigma_n > 0.0) {
                return Err(Error::invalid(
                    "centered chain needs sigma0 > 0 or sigma_n > 0",
                ));
            }
            (
                centered_projection(config)?,
                lambda * graphs::spectral_gap(&g),
                0.5 * config.sigma0.max(config.sigma_n).powi(2),
            )
        }
    };
    let sigma = solve_lyapunov(&spec)?;
    Ok(LsiConstants {
        exact: linalg::lambda_max(sigma.cov()) / 2.0,
        bound: noise / (2.0 * gap),
        gap,
    })
}
