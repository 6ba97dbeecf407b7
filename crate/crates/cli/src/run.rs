//! `hypoco run`: validate a scenario, compute, evaluate checks, write outputs.

use std::fs;
use std::path::{Path, PathBuf};

use hypoco_core::chains::{self, ChainConfig, ChainMode, PotentialKind, PotentialSpec};
use hypoco_core::gaussian::{self, GaussianState, LinearSector};
use hypoco_core::graphs::{self, InteractionGraph};
use hypoco_core::hypoco::{self, ExplicitConstants, HypocoerciveRate};
use hypoco_core::{linalg, spectra, DMatrix, DriftSpec};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};
use crate::scenario::{
    CertifyParams, Check, CoupleParams, DecayParams, GraphParams, OuParams, Parameters, Scenario,
    SimulateParams, TimeGrid,
};
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub gnuplot_script: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv: PathBuf,
    pub report: PathBuf,
    pub gnuplot: Option<PathBuf>,
}

/// How the CSV should be drawn by the optional gnuplot script.
#[derive(Debug, Clone)]
enum Plot {
    /// Column 1 against every other column.
    Wide { logx: bool, logy: bool },
    /// Long format: one curve per name in the `observable` column.
    Long {
        names: Vec<String>,
        value_col: usize,
    },
}

struct Output {
    table: Table,
    report: Map<String, Value>,
    plot: Plot,
}

/// Names the parameter a core error is about, falling back to `default`.
fn field_of(e: &hypoco_core::Error, candidates: &[&str], default: &str) -> String {
    let msg = e.to_string();
    candidates
        .iter()
        .find(|c| msg.contains(**c))
        .map_or_else(|| default.to_string(), |c| format!("parameters.{c}"))
}

fn core_err(e: hypoco_core::Error, candidates: &[&str], default: &str) -> CliError {
    let field = field_of(&e, candidates, default);
    CliError::core(&field, e)
}

fn drift_spec(drift: &[Vec<f64>], diffusion: &[Vec<f64>]) -> CliResult<DriftSpec> {
    DriftSpec::from_rows(drift, diffusion)
        .map_err(|e| core_err(e, &["drift", "diffusion"], "parameters.drift"))
}

fn rows(m: &DMatrix<f64>) -> Value {
    json!(linalg::to_rows(m))
}

enum Prepared {
    AnalyzeOu {
        spec: DriftSpec,
        tol: f64,
        times: Vec<f64>,
    },
    GraphBounds {
        graph: InteractionGraph,
        chain: Option<(usize, f64)>,
        pinned: usize,
        lsi: Option<ChainConfig>,
    },
    SimulateChain {
        p: SimulateParams,
        x0: Vec<f64>,
    },
    Couple {
        p: CoupleParams,
        x0: Vec<f64>,
    },
    Certify {
        b: DMatrix<f64>,
        epsilon: f64,
        times: Vec<f64>,
        rate: Option<HypocoerciveRate>,
        explicit: Option<ExplicitConstants>,
    },
    DecayStudy {
        spec: DriftSpec,
        times: Vec<f64>,
        initial: Option<GaussianState>,
    },
}

fn initial_state(config: &ChainConfig, x0: Option<&Vec<f64>>) -> CliResult<Vec<f64>> {
    let len = config.state_len();
    match x0 {
        None => Ok(vec![0.0; len]),
        Some(x) if x.len() == len => Ok(x.clone()),
        Some(x) => Err(CliError::Config(format!(
            "parameters.x0: expected {len} entries ((n+1)·dim), got {}",
            x.len()
        ))),
    }
}

/// Checks module preconditions before any heavy computation starts.
fn prepare(parameters: Parameters, seed: Option<u64>) -> CliResult<Prepared> {
    Ok(match parameters {
        Parameters::AnalyzeOu(OuParams {
            drift,
            diffusion,
            tol,
            times,
        }) => {
            let spec = drift_spec(&drift, &diffusion)?;
            if !(tol > 0.0 && tol < 1.0) {
                return Err(CliError::Config(format!(
                    "parameters.tol: must lie in (0, 1), got {tol}"
                )));
            }
            let grid = times.unwrap_or(TimeGrid::Range {
                start: 0.25,
                stop: 10.0,
                points: 40,
                log: false,
            });
            Prepared::AnalyzeOu {
                spec,
                tol,
                times: grid.resolve("parameters.times", true)?,
            }
        }
        Parameters::GraphBounds(GraphParams {
            chain,
            graph,
            pinned,
            lsi,
        }) => {
            let (graph, shape) = match (chain, graph) {
                (Some(c), None) => {
                    let g = InteractionGraph::chain(c.n, c.lambda)
                        .map_err(|e| CliError::core("parameters.chain", e))?;
                    (g, Some((c.n, c.lambda)))
                }
                (None, Some(g)) => (g, None),
                _ => {
                    return Err(CliError::Config(
                        "parameters: give exactly one of chain, graph".into(),
                    ))
                }
            };
            if pinned >= graph.vertex_count() {
                return Err(CliError::Config(format!(
                    "parameters.pinned: vertex {pinned} does not exist ({} vertices)",
                    graph.vertex_count()
                )));
            }
            let lsi = match (lsi, shape) {
                (None, _) => None,
                (Some(_), None) => {
                    return Err(CliError::Config(
                        "parameters.lsi: only available for a chain".into(),
                    ))
                }
                (Some(l), Some((n, lambda))) => Some(
                    ChainConfig::new(
                        n,
                        1,
                        PotentialSpec::quadratic(lambda),
                        l.sigma0,
                        l.sigma_n,
                        l.mode,
                        0,
                    )
                    .map_err(|e| CliError::core("parameters.lsi", e))?,
                ),
            };
            Prepared::GraphBounds {
                graph,
                chain: shape,
                pinned,
                lsi,
            }
        }
        Parameters::SimulateChain(mut p) => {
            if let Some(s) = seed {
                p.chain.seed = s;
            }
            let x0 = initial_state(&p.chain, p.x0.as_ref())?;
            Prepared::SimulateChain { p, x0 }
        }
        Parameters::Couple(mut p) => {
            if let Some(s) = seed {
                p.chain.seed = s;
            }
            let x0 = initial_state(&p.chain, p.x0.as_ref())?;
            if p.y0.len() != x0.len() {
                return Err(CliError::Config(format!(
                    "parameters.y0: expected {} entries, got {}",
                    x0.len(),
                    p.y0.len()
                )));
            }
            Prepared::Couple { p, x0 }
        }
        Parameters::Certify(CertifyParams {
            drift,
            epsilon,
            times,
            rate,
            explicit,
        }) => {
            let b = linalg::from_rows(&drift).map_err(|e| CliError::core("parameters.drift", e))?;
            linalg::ensure_square(&b, "drift")
                .map_err(|e| CliError::core("parameters.drift", e))?;
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(CliError::Config(format!(
                    "parameters.epsilon: must lie in (0, 1), got {epsilon}"
                )));
            }
            let grid = times.unwrap_or(TimeGrid::Range {
                start: 0.0,
                stop: 10.0,
                points: 41,
                log: false,
            });
            let rate = rate
                .map(|r| hypoco::hypocoercive_rate(r.rho, r.beta, r.c))
                .transpose()
                .map_err(|e| CliError::core("parameters.rate", e))?;
            let explicit = explicit
                .map(|x| hypoco::explicit_constants(x.nc, x.lambda, x.big_lambda, x.m, x.rho, x.k))
                .transpose()
                .map_err(|e| CliError::core("parameters.explicit", e))?;
            Prepared::Certify {
                b,
                epsilon,
                times: grid.resolve("parameters.times", true)?,
                rate,
                explicit,
            }
        }
        Parameters::DecayStudy(DecayParams {
            drift,
            diffusion,
            times,
            initial,
        }) => {
            let spec = drift_spec(&drift, &diffusion)?;
            let times = times.resolve("parameters.times", false)?;
            if times.len() < 8 {
                return Err(CliError::Config(format!(
                    "parameters.times: need at least 8 points, got {}",
                    times.len()
                )));
            }
            let initial = match initial {
                None => None,
                Some(x) if x.len() == spec.dim() => Some(
                    GaussianState::dirac(DVector::from_vec(x))
                        .map_err(|e| CliError::core("parameters.initial", e))?,
                ),
                Some(x) => {
                    return Err(CliError::Config(format!(
                        "parameters.initial: expected {} entries, got {}",
                        spec.dim(),
                        x.len()
                    )))
                }
            };
            Prepared::DecayStudy {
                spec,
                times,
                initial,
            }
        }
    })
}

fn analyze_ou(spec: &DriftSpec, tol: f64, times: &[f64]) -> CliResult<Output> {
    let cert = spectra::spectral_certificate(spec, tol)
        .map_err(|e| core_err(e, &["drift"], "parameters.drift"))?;
    let mut report = Map::new();
    report.insert("rho".into(), json!(cert.rho));
    report.insert("bigN".into(), json!(cert.big_n));
    report.insert("M".into(), json!(cert.bracket_count));
    report.insert("hypoelliptic".into(), json!(cert.hypoelliptic));
    report.insert("reach".into(), json!(cert.reach));
    report.insert("critical".into(), json!(cert.critical));
    let envelope = |t: f64| {
        spectra::decay_envelope(cert.rho, cert.big_n, t)
            .map_err(|e| CliError::core("parameters.times", e))
    };
    if !(cert.rho > 0.0) {
        let mut table = Table::new(&["time", "envelope"]);
        for &t in times {
            table.push(vec![t.into(), envelope(t)?.into()]);
        }
        return Ok(Output {
            table,
            report,
            plot: Plot::Wide {
                logx: false,
                logy: true,
            },
        });
    }
    let sigma =
        gaussian::solve_lyapunov(spec).map_err(|e| CliError::core("parameters.drift", e))?;
    let q = spec.diffusion() * 2.0;
    let residual = gaussian::lyapunov_residual(spec.drift(), sigma.cov(), &q);
    report.insert("sigma".into(), rows(sigma.cov()));
    report.insert("lyapunov_residual".into(), json!(residual));
    if !cert.hypoelliptic {
        let mut table = Table::new(&["time", "envelope"]);
        for &t in times {
            table.push(vec![t.into(), envelope(t)?.into()]);
        }
        return Ok(Output {
            table,
            report,
            plot: Plot::Wide {
                logx: false,
                logy: true,
            },
        });
    }
    let sector = LinearSector::new(spec).map_err(|e| CliError::core("parameters.drift", e))?;
    let mut table = Table::new(&["time", "operator_norm_sq", "gap", "envelope", "ratio"]);
    let mut max_ratio = 0.0f64;
    for &t in times {
        let g2 = sector
            .norm_sq(t)
            .map_err(|e| CliError::core("parameters.times", e))?;
        let gap = sector
            .gap(t)
            .map_err(|e| CliError::core("parameters.times", e))?;
        let env = envelope(t)?;
        let ratio = g2 / env;
        max_ratio = max_ratio.max(ratio);
        table.push(vec![
            t.into(),
            g2.into(),
            gap.into(),
            env.into(),
            ratio.into(),
        ]);
    }
    report.insert("max_envelope_ratio".into(), json!(max_ratio));
    Ok(Output {
        table,
        report,
        plot: Plot::Wide {
            logx: false,
            logy: true,
        },
    })
}

fn graph_bounds(
    graph: &InteractionGraph,
    chain: Option<(usize, f64)>,
    pinned: usize,
    lsi: Option<&ChainConfig>,
) -> CliResult<Output> {
    let gr = graphs::gap_report(graph, pinned).map_err(|e| CliError::core("parameters", e))?;
    let lsi = lsi
        .map(chains::lsi_constant_quadratic)
        .transpose()
        .map_err(|e| CliError::core("parameters.lsi", e))?;
    let mut report = Map::new();
    report.insert("vertices".into(), json!(graph.vertex_count()));
    report.insert("edges".into(), json!(graph.edges().len()));
    report.insert("pinned".into(), json!(pinned));
    report.insert("gap".into(), json!(gr.rho));
    report.insert("dirichlet".into(), json!(gr.rho_d));
    report.insert("cheeger".into(), json!(gr.cheeger));
    let mut header = vec!["vertices", "edges", "gap", "dirichlet", "cheeger"];
    let mut row: Vec<Cell> = vec![
        graph.vertex_count().into(),
        graph.edges().len().into(),
        gr.rho.into(),
        gr.rho_d.into(),
        gr.cheeger.into(),
    ];
    if let Some((n, lambda)) = chain {
        report.insert("n".into(), json!(n));
        report.insert("lambda".into(), json!(lambda));
        report.insert("bound".into(), json!(gr.chain_lower_rho));
        report.insert("bound_d".into(), json!(gr.chain_lower_rho_d));
        header = vec![
            "n",
            "lambda",
            "vertices",
            "gap",
            "dirichlet",
            "cheeger",
            "bound",
            "bound_d",
        ];
        row = vec![
            n.into(),
            lambda.into(),
            graph.vertex_count().into(),
            gr.rho.into(),
            gr.rho_d.into(),
            gr.cheeger.into(),
            gr.chain_lower_rho.into(),
            gr.chain_lower_rho_d.into(),
        ];
    }
    if let Some(l) = lsi {
        report.insert("lsi_exact".into(), json!(l.exact));
        report.insert("lsi_bound".into(), json!(l.bound));
        report.insert("lsi_gap".into(), json!(l.gap));
        header.extend(["lsi_exact", "lsi_bound"]);
        row.extend([l.exact.into(), l.bound.into()]);
    }
    let mut table = Table::new(&header);
    table.push(row);
    Ok(Output {
        table,
        report,
        plot: Plot::Wide {
            logx: true,
            logy: true,
        },
    })
}

fn chain_summary(c: &ChainConfig) -> Value {
    json!({
        "n": c.n,
        "dim": c.dim,
        "potential": c.potential,
        "sigma0": c.sigma0,
        "sigma_n": c.sigma_n,
        "dt": c.dt,
        "seed": c.seed,
        "mode": c.mode,
    })
}

fn simulate_chain(p: &SimulateParams, x0: &[f64]) -> CliResult<Output> {
    let c = &p.chain;
    let stats =
        chains::simulate(c, x0, p.t_end, p.n_traj, p.checkpoints, &p.observables).map_err(|e| {
            core_err(
                e,
                &["x0", "t_end", "n_traj", "checkpoints", "observable"],
                "parameters",
            )
        })?;
    let mut table = Table::new(&["time", "observable", "mean", "variance", "ci_halfwidth"]);
    for r in stats.rows() {
        table.push(vec![
            r.time.into(),
            r.observable.into(),
            r.mean.into(),
            r.variance.into(),
            r.ci_halfwidth.into(),
        ]);
    }
    let mut report = Map::new();
    report.insert("chain".into(), chain_summary(c));
    report.insert("n_traj".into(), json!(stats.n_traj));
    report.insert("t_end".into(), json!(p.t_end));
    report.insert("steps".into(), json!((p.t_end / c.dt).round() as u64));
    report.insert("checkpoints".into(), json!(p.checkpoints));
    let last = stats.times.len() - 1;
    let mut fin = Map::new();
    for (o, obs) in stats.observables.iter().enumerate() {
        fin.insert(
            obs.name(),
            json!({
                "mean": stats.mean[o][last],
                "variance": stats.variance[o][last],
                "ci_halfwidth": stats.ci_halfwidth[o][last],
            }),
        );
    }
    report.insert("final".into(), Value::Object(fin));
    if c.potential.kind == PotentialKind::Quadratic && c.mode == ChainMode::Fixed {
        let spec =
            chains::quadratic_reduction(c).map_err(|e| CliError::core("parameters.chain", e))?;
        let init = GaussianState::dirac(DVector::from_column_slice(&x0[c.dim..]))
            .map_err(|e| CliError::core("parameters.x0", e))?;
        let mut w2 = Vec::with_capacity(last);
        for k in 1..=last {
            let exact = gaussian::propagate(&spec, &init, stats.times[k])
                .map_err(|e| CliError::core("propagate", e))?;
            let emp = GaussianState::new(stats.state_mean[k].clone(), stats.state_cov[k].clone())
                .map_err(|e| CliError::Numerical(format!("empirical law: {e}")))?;
            w2.push(gaussian::w2_gaussian(&emp, &exact).map_err(|e| CliError::core("w2", e))?);
        }
        report.insert(
            "max_w2_to_exact".into(),
            json!(w2.iter().copied().fold(0.0, f64::max)),
        );
        report.insert("w2_to_exact".into(), json!(w2));
    }
    let names = stats.observables.iter().map(|o| o.name()).collect();
    Ok(Output {
        table,
        report,
        plot: Plot::Long {
            names,
            value_col: 3,
        },
    })
}

fn couple(p: &CoupleParams, x0: &[f64]) -> CliResult<Output> {
    let c = &p.chain;
    let est = chains::couple(c, x0, &p.y0, p.t_end, p.n_pairs, p.checkpoints).map_err(|e| {
        core_err(
            e,
            &["y0", "x0", "t_end", "n_pairs", "checkpoints"],
            "parameters",
        )
    })?;
    let g = InteractionGraph::chain(c.n, 1.0).map_err(|e| CliError::core("parameters.chain", e))?;
    let base = match c.mode {
        ChainMode::Fixed => graphs::dirichlet_eigenvalue(&g, 0)
            .map_err(|e| CliError::core("parameters.chain", e))?,
        ChainMode::Centered => graphs::spectral_gap(&g),
    };
    let reference = c.potential.lambda * base;
    let mut table = Table::new(&["time", "mean_log_distance"]);
    for (t, v) in est.times.iter().zip(&est.mean_log_distance) {
        table.push(vec![(*t).into(), (*v).into()]);
    }
    let mut report = Map::new();
    report.insert("chain".into(), chain_summary(c));
    report.insert("rate".into(), json!(est.rate));
    report.insert("std".into(), json!(est.std));
    report.insert("ci_halfwidth".into(), json!(est.ci_halfwidth));
    report.insert("monotone".into(), json!(est.monotone));
    report.insert("n_pairs".into(), json!(est.n_pairs));
    report.insert("t_end".into(), json!(est.t_end));
    report.insert("reference_rate".into(), json!(reference));
    report.insert("rate_minus_reference".into(), json!(est.rate - reference));
    Ok(Output {
        table,
        report,
        plot: Plot::Wide {
            logx: false,
            logy: false,
        },
    })
}

fn certify(
    b: &DMatrix<f64>,
    epsilon: f64,
    times: &[f64],
    rate: Option<&HypocoerciveRate>,
    explicit: Option<&ExplicitConstants>,
) -> CliResult<Output> {
    let cert = hypoco::build_distortion(b, epsilon)
        .map_err(|e| core_err(e, &["epsilon"], "parameters.drift"))?;
    let lmi = hypoco::verify_lmi(&cert.p, b).map_err(|e| CliError::core("certificate", e))?;
    let rho =
        spectra::spectral_abscissa_of(b).map_err(|e| CliError::core("parameters.drift", e))?;
    let s = linalg::sym_sqrt(&cert.p, 1e-12).map_err(|e| CliError::core("certificate", e))?;
    let s_inv =
        linalg::sym_inv_sqrt(&cert.p, 1e-15).map_err(|e| CliError::core("certificate", e))?;
    let mut table = Table::new(&["time", "distorted_norm", "bound", "euclidean_norm"]);
    let mut excess = f64::NEG_INFINITY;
    for &t in times {
        let e = gaussian::matrix_exponential(&(b * -t))
            .map_err(|e| CliError::core("parameters.times", e))?;
        let distorted = linalg::spectral_norm(&(&s * &e * &s_inv));
        let bound = (-cert.kappa * t).exp();
        excess = excess.max(distorted / bound - 1.0);
        table.push(vec![
            t.into(),
            distorted.into(),
            bound.into(),
            linalg::spectral_norm(&e).into(),
        ]);
    }
    let mut report = Map::new();
    report.insert("epsilon".into(), json!(cert.epsilon));
    report.insert("kappa".into(), json!(cert.kappa));
    report.insert("lmi_kappa".into(), json!(lmi));
    report.insert("lmi_residual".into(), json!((lmi - cert.kappa).abs()));
    report.insert("rho".into(), json!(rho));
    report.insert("rho_minus_kappa".into(), json!(rho - cert.kappa));
    report.insert("cond_p".into(), json!(cert.cond_p));
    report.insert("p".into(), rows(&cert.p));
    report.insert("contraction_excess".into(), json!(excess));
    if let Some(r) = rate {
        report.insert("rate".into(), json!(r));
    }
    if let Some(x) = explicit {
        report.insert("explicit".into(), json!(x));
    }
    Ok(Output {
        table,
        report,
        plot: Plot::Wide {
            logx: false,
            logy: true,
        },
    })
}

fn decay_study(
    spec: &DriftSpec,
    times: &[f64],
    initial: Option<&GaussianState>,
) -> CliResult<Output> {
    let study = gaussian::decay_study(spec, times)
        .map_err(|e| core_err(e, &["drift", "times"], "parameters.drift"))?;
    let kl = match initial {
        None => None,
        Some(init) => {
            let inv = gaussian::solve_lyapunov(spec)
                .map_err(|e| CliError::core("parameters.drift", e))?;
            let values = times
                .iter()
                .map(|&t| {
                    let s = gaussian::propagate(spec, init, t)?;
                    gaussian::kl_gaussian(&s, &inv)
                })
                .collect::<hypoco_core::Result<Vec<f64>>>()
                .map_err(|e| CliError::core("relative entropy", e))?;
            Some(values)
        }
    };
    let mut header = vec!["time", "operator_norm_sq", "gap", "envelope"];
    if kl.is_some() {
        header.push("kl");
    }
    let mut table = Table::new(&header);
    for (i, &t) in times.iter().enumerate() {
        let env = spectra::decay_envelope(study.rho, study.big_n, t)
            .map_err(|e| CliError::core("parameters.times", e))?;
        let mut row: Vec<Cell> = vec![
            t.into(),
            study.curve.values[i].into(),
            study.gaps[i].into(),
            env.into(),
        ];
        if let Some(k) = &kl {
            row.push(k[i].into());
        }
        table.push(row);
    }
    let mut report = Map::new();
    report.insert("rho".into(), json!(study.rho));
    report.insert("bigN".into(), json!(study.big_n));
    report.insert("M".into(), json!(study.bracket_count));
    report.insert("long_time_slope".into(), json!(study.long_time_slope));
    report.insert(
        "expected_long_time_slope".into(),
        json!(2 * (study.big_n as i64 - 1)),
    );
    report.insert("long_time_points".into(), json!(study.long_time_points));
    report.insert("short_time_slope".into(), json!(study.short_time_slope));
    report.insert(
        "expected_short_time_slope".into(),
        json!(2 * study.bracket_count + 1),
    );
    report.insert("short_time_points".into(), json!(study.short_time_points));
    Ok(Output {
        table,
        report,
        plot: Plot::Wide {
            logx: true,
            logy: true,
        },
    })
}

fn execute(p: &Prepared) -> CliResult<Output> {
    match p {
        Prepared::AnalyzeOu { spec, tol, times } => analyze_ou(spec, *tol, times),
        Prepared::GraphBounds {
            graph,
            chain,
            pinned,
            lsi,
        } => graph_bounds(graph, *chain, *pinned, lsi.as_ref()),
        Prepared::SimulateChain { p, x0 } => simulate_chain(p, x0),
        Prepared::Couple { p, x0 } => couple(p, x0),
        Prepared::Certify {
            b,
            epsilon,
            times,
            rate,
            explicit,
        } => certify(b, *epsilon, times, rate.as_ref(), explicit.as_ref()),
        Prepared::DecayStudy {
            spec,
            times,
            initial,
        } => decay_study(spec, times, initial.as_ref()),
    }
}

fn numeric(v: Option<&Value>) -> f64 {
    match v {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        Some(Value::Bool(b)) => f64::from(u8::from(*b)),
        _ => f64::NAN,
    }
}

/// Evaluates declared checks against the report; returns the failing fields.
fn apply_checks(
    checks: &std::collections::BTreeMap<String, Check>,
    report: &mut Map<String, Value>,
) -> Vec<String> {
    let mut failed = Vec::new();
    let mut out = Map::new();
    for (field, check) in checks {
        let value = numeric(report.get(field));
        let pass = check.passes(value);
        if !pass {
            failed.push(field.clone());
        }
        let mut entry = serde_json::to_value(check).expect("check serializes");
        entry["value"] = json!(value);
        entry["pass"] = json!(pass);
        out.insert(field.clone(), entry);
    }
    report.insert("checks".into(), Value::Object(out));
    report.insert("pass".into(), json!(failed.is_empty()));
    failed
}

fn gnuplot_script(csv: &str, table: &Table, plot: &Plot) -> String {
    let mut s = String::from("set datafile separator ','\nset datafile missing 'NA'\n");
    s.push_str(&format!("set xlabel '{}'\n", table.header[0]));
    match plot {
        Plot::Wide { logx, logy } => {
            if *logx {
                s.push_str("set logscale x\n");
            }
            if *logy {
                s.push_str("set logscale y\n");
            }
            s.push_str("set key autotitle columnhead\n");
            s.push_str(&format!(
                "plot for [c=2:{}] '{csv}' using 1:c with linespoints\n",
                table.header.len()
            ));
        }
        Plot::Long { names, value_col } => {
            s.push_str(&format!("set ylabel '{}'\n", table.header[value_col - 1]));
            s.push_str(&format!(
                "plot for [i=0:{}] '{csv}' skip 1 every {}::i using 1:{value_col} with lines title word('{}', i+1)\n",
                names.len() - 1,
                names.len(),
                names.join(" ")
            ));
        }
    }
    s
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs a scenario already loaded into memory. Nothing is written unless the
/// computation succeeds; failed checks still write both files.
pub fn run_scenario(scenario: Scenario, opts: &RunOptions) -> CliResult<RunOutcome> {
    let kind = scenario.kind;
    let prepared = prepare(scenario.parameters, opts.seed)?;
    let output = match opts.threads {
        None => execute(&prepared)?,
        Some(0) => return Err(CliError::Config("--threads: must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?
            .install(|| execute(&prepared))?,
    };
    let Output {
        table,
        mut report,
        plot,
    } = output;
    report.insert("kind".into(), json!(kind.name()));
    let failed = apply_checks(&scenario.checks, &mut report);

    let csv_name = format!("{}.csv", scenario.output);
    let csv_text = table.to_csv()?;
    let report_text = serde_json::to_string_pretty(&Value::Object(report))
        .map_err(|e| CliError::Io(e.to_string()))?
        + "\n";
    let csv = PathBuf::from(&csv_name);
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let report_path = PathBuf::from(format!("{}.report.json", scenario.output));
    write(&csv, &csv_text)?;
    write(&report_path, &report_text)?;
    let gnuplot = if opts.gnuplot_script {
        let p = PathBuf::from(format!("{}.gp", scenario.output));
        write(&p, &gnuplot_script(&csv_name, &table, &plot))?;
        Some(p)
    } else {
        None
    };
    if !failed.is_empty() {
        return Err(CliError::Tolerance(format!(
            "{} ({} written)",
            failed.join(", "),
            report_path.display()
        )));
    }
    Ok(RunOutcome {
        csv,
        report: report_path,
        gnuplot,
    })
}

pub fn run_file(path: &Path, opts: &RunOptions) -> CliResult<RunOutcome> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("scenario: cannot read {}: {e}", path.display())))?;
    run_scenario(Scenario::parse(&text)?, opts)
}
