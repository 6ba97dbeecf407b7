use hypoco_core::chains::{self, ChainConfig, ChainMode, Observable, PotentialSpec};
use hypoco_core::gaussian::{self, GaussianState};
use hypoco_core::graphs::{self, InteractionGraph};
use hypoco_core::linalg;
use nalgebra::DVector;

fn quadratic(n: usize, mode: ChainMode, sigma0: f64, sigma_n: f64, seed: u64) -> ChainConfig {
    ChainConfig::new(
        n,
        1,
        PotentialSpec::quadratic(1.0),
        sigma0,
        sigma_n,
        mode,
        seed,
    )
    .unwrap()
}

/// Largest multiple of `dt·checkpoints` not exceeding `t`.
fn grid_time(t: f64, dt: f64, checkpoints: usize) -> f64 {
    let block = dt * checkpoints as f64;
    (t / block).floor() * block
}

#[test]
fn centered_mean_stays_at_zero() {
    let c = quadratic(3, ChainMode::Centered, 1.0, 1.0, 3);
    let obs: Vec<Observable> = (0..=3)
        .map(|p| Observable::Coordinate {
            particle: p,
            component: 0,
        })
        .collect();
    let t = grid_time(4.0, c.dt, 4);
    let stats = chains::simulate(&c, &[0.0; 4], t, 4000, 4, &obs).unwrap();
    for o in 0..obs.len() {
        for k in 0..stats.times.len() {
            let tol = 4.0 / 1.96 * stats.ci_halfwidth[o][k] + 1e-15;
            assert!(
                stats.mean[o][k].abs() <= tol,
                "obs {o} at t={}",
                stats.times[k]
            );
        }
    }
    for m in &stats.state_mean {
        assert!(m.sum().abs() < 1e-12);
    }
}

#[test]
fn noiseless_chain_is_a_contracting_gradient_flow() {
    let c = ChainConfig::new(
        4,
        2,
        PotentialSpec::quartic(1.0, 0.5),
        0.0,
        0.0,
        ChainMode::Centered,
        0,
    )
    .unwrap();
    let x0 = [1.0, -2.0, 0.5, 0.3, -1.2, 2.2, 0.0, 0.0, 3.0, -1.0];
    let stats = chains::simulate(
        &c,
        &x0,
        grid_time(3.0, c.dt, 100),
        2,
        100,
        &[Observable::SquaredNorm],
    )
    .unwrap();
    let norms = &stats.mean[0];
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    assert!(norms.last().unwrap() < &(0.5 * norms[0]));
    assert!(stats.variance[0].iter().all(|&v| v == 0.0));
}

#[test]
fn stationary_covariance_matches_lyapunov() {
    let c = quadratic(2, ChainMode::Fixed, 0.0, 1.0, 21);
    let rho_d = graphs::dirichlet_eigenvalue(&InteractionGraph::chain(2, 1.0).unwrap(), 0).unwrap();
    let t = grid_time(20.0 / rho_d, c.dt, 1);
    let stats = chains::simulate(&c, &[0.0, 0.5, -0.5], t, 4000, 1, &[]).unwrap();
    let sigma = gaussian::solve_lyapunov(&chains::quadratic_reduction(&c).unwrap()).unwrap();
    let s = sigma.cov();
    let n = stats.n_traj as f64;
    let emp = &stats.state_cov[1];
    for i in 0..2 {
        for j in 0..2 {
            let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)] * s[(i, j)]) / n).sqrt();
            assert!(
                (emp[(i, j)] - s[(i, j)]).abs() <= 3.0 * se,
                "({i},{j}): {} vs {}",
                emp[(i, j)],
                s[(i, j)]
            );
        }
    }
}

#[test]
fn ensemble_law_tracks_exact_propagation() {
    let c = quadratic(3, ChainMode::Fixed, 0.0, 1.2, 5);
    let spec = chains::quadratic_reduction(&c).unwrap();
    let x0 = [0.0, 1.0, 2.0, -1.0];
    let t = grid_time(5.0, c.dt, 5);
    let stats = chains::simulate(&c, &x0, t, 4000, 5, &[]).unwrap();
    let init = GaussianState::dirac(DVector::from_column_slice(&x0[1..])).unwrap();
    let b_norm = linalg::spectral_norm(spec.drift());
    let n = stats.n_traj as f64;
    for k in 1..=5 {
        let exact = gaussian::propagate(&spec, &init, stats.times[k]).unwrap();
        let emp =
            GaussianState::new(stats.state_mean[k].clone(), stats.state_cov[k].clone()).unwrap();
        let w = gaussian::w2_gaussian(&emp, &exact).unwrap();
        let spread = exact.cov().trace().sqrt();
        let mc = 2.0 * spread / n.sqrt();
        let disc = c.dt * b_norm * (exact.mean().norm() + spread);
        assert!(
            w <= 3.0 * (mc + disc),
            "t={}: W2 {w} vs budget {}",
            stats.times[k],
            3.0 * (mc + disc)
        );
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let c = ChainConfig::new(
        3,
        2,
        PotentialSpec::quartic(1.0, 0.3),
        0.7,
        1.0,
        ChainMode::Centered,
        99,
    )
    .unwrap();
    let x0 = [0.0, 0.1, 1.0, -1.0, 0.5, 0.5, -0.2, 0.3];
    let obs = [
        Observable::SquaredNorm,
        Observable::EndToEnd,
        Observable::Coordinate {
            particle: 2,
            component: 1,
        },
    ];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let stats = chains::simulate(&c, &x0, grid_time(1.0, c.dt, 4), 301, 4, &obs).unwrap();
            let y0: Vec<f64> = x0.iter().map(|v| v + 0.25 * v.signum()).collect();
            let shift = [mean_component(&y0, &x0, 0), mean_component(&y0, &x0, 1)];
            let shifted: Vec<f64> = y0
                .iter()
                .enumerate()
                .map(|(i, v)| v - shift[i % 2])
                .collect();
            let coupling =
                chains::couple(&c, &x0, &shifted, grid_time(1.0, c.dt, 4), 77, 4).unwrap();
            (stats, coupling)
        })
    };
    let (a, ca) = run(1);
    let (b, cb) = run(4);
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert!(a.mean[0].iter().all(|v| v.is_finite()));
}

/// Mean of `y − x` over particles in one component.
fn mean_component(y: &[f64], x: &[f64], comp: usize) -> f64 {
    let vals: Vec<f64> = y
        .iter()
        .zip(x)
        .skip(comp)
        .step_by(2)
        .map(|(a, b)| a - b)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn weak_error_is_first_order() {
    let obs = [
        Observable::Coordinate {
            particle: 2,
            component: 0,
        },
        Observable::SquaredNorm,
    ];
    let x0 = [0.0, 1.5, -1.0];
    let means: Vec<Vec<f64>> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| {
            let c = ChainConfig::new(
                2,
                1,
                PotentialSpec::quartic(1.0, 0.5),
                0.0,
                0.05,
                ChainMode::Fixed,
                19,
            )
            .unwrap()
            .with_dt(dt)
            .unwrap();
            let stats = chains::simulate(&c, &x0, 1.0, 20_000, 1, &obs).unwrap();
            stats.mean.iter().map(|m| m[1]).collect()
        })
        .collect();
    for (o, _) in obs.iter().enumerate() {
        let d1 = (means[0][o] - means[1][o]).abs();
        let d2 = (means[1][o] - means[2][o]).abs();
        let slope = (d1 / d2).log2();
        assert!(
            (slope - 1.0).abs() <= 0.3,
            "observable {o}: slope {slope} ({d1}, {d2})"
        );
    }
}

#[test]
fn coupling_along_ground_mode_contracts_at_dirichlet_rate() {
    let n = 4;
    let dt = 1e-3;
    let c = quadratic(n, ChainMode::Fixed, 0.0, 1.0, 8)
        .with_dt(dt)
        .unwrap();
    let g = InteractionGraph::chain(n, 1.0).unwrap();
    let (vals, vecs) = linalg::sym_eigen(&graphs::pinned_laplacian(&g, 0).unwrap());
    let rho_d = vals[0];
    let x0 = vec![0.0; n + 1];
    let mut y0 = vec![0.0];
    y0.extend(vecs.column(0).iter());
    let t = grid_time(5.0 / rho_d, dt, 10);
    let est = chains::couple(&c, &x0, &y0, t, 64, 10).unwrap();
    assert!(
        (est.rate - rho_d).abs() <= dt * rho_d * rho_d + 1e-9,
        "{} vs {rho_d}",
        est.rate
    );
    assert!(est.std < 1e-9);
    assert!(est.monotone);
    let quartic = ChainConfig {
        potential: PotentialSpec::quartic(1.0, 0.5),
        ..c
    };
    let q = chains::couple(&quartic, &x0, &y0, t, 256, 10).unwrap();
    assert!(
        q.rate >= rho_d - 3.0 * q.ci_halfwidth - dt,
        "{} vs {rho_d}",
        q.rate
    );
    assert!(q.monotone);
}
