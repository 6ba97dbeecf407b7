//! Scenario files: `{"kind", "output", "parameters", "checks"}`.

use std::collections::BTreeMap;

use hypoco_core::chains::{ChainConfig, ChainMode, Observable};
use hypoco_core::InteractionGraph;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    AnalyzeOu,
    GraphBounds,
    SimulateChain,
    Couple,
    Certify,
    DecayStudy,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::AnalyzeOu => "analyze-ou",
            Kind::GraphBounds => "graph-bounds",
            Kind::SimulateChain => "simulate-chain",
            Kind::Couple => "couple",
            Kind::Certify => "certify",
            Kind::DecayStudy => "decay-study",
        }
    }

    /// Report fields a check may refer to.
    pub fn checkable(self) -> &'static [&'static str] {
        match self {
            Kind::AnalyzeOu => &[
                "rho",
                "bigN",
                "M",
                "hypoelliptic",
                "lyapunov_residual",
                "max_envelope_ratio",
            ],
            Kind::GraphBounds => &[
                "gap",
                "dirichlet",
                "cheeger",
                "bound",
                "bound_d",
                "lsi_exact",
                "lsi_bound",
            ],
            Kind::SimulateChain => &["n_traj", "steps", "max_w2_to_exact"],
            Kind::Couple => &[
                "rate",
                "std",
                "ci_halfwidth",
                "monotone",
                "reference_rate",
                "rate_minus_reference",
            ],
            Kind::Certify => &[
                "kappa",
                "lmi_kappa",
                "lmi_residual",
                "rho",
                "rho_minus_kappa",
                "cond_p",
                "contraction_excess",
            ],
            Kind::DecayStudy => &["rho", "bigN", "M", "long_time_slope", "short_time_slope"],
        }
    }
}

/// Bound on one numeric (or boolean, read as 0/1) report field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equals: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Check {
    fn validate(&self, field: &str) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::Config(format!("checks.{field}: {msg}")));
        if self.equals.is_none() && self.min.is_none() && self.max.is_none() {
            return bad("needs at least one of equals, min, max");
        }
        if self.tol.is_some() && self.equals.is_none() {
            return bad("tol only applies to equals");
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) || !t.is_finite() {
                return bad("tol must be finite and >= 0");
            }
        }
        for v in [self.equals, self.min, self.max].into_iter().flatten() {
            if !v.is_finite() {
                return bad("bounds must be finite");
            }
        }
        if let (Some(lo), Some(hi)) = (self.min, self.max) {
            if lo > hi {
                return bad("min exceeds max");
            }
        }
        Ok(())
    }

    pub fn passes(&self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        let eq = self
            .equals
            .is_none_or(|e| (value - e).abs() <= self.tol.unwrap_or(0.0));
        eq && self.min.is_none_or(|m| value >= m) && self.max.is_none_or(|m| value <= m)
    }
}

/// Explicit list of times or an evenly (optionally log-) spaced range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        points: usize,
        #[serde(default)]
        log: bool,
    },
}

impl TimeGrid {
    pub fn resolve(&self, field: &str, allow_zero: bool) -> CliResult<Vec<f64>> {
        let bad = |msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        let times = match *self {
            TimeGrid::List(ref v) => v.clone(),
            TimeGrid::Range {
                start,
                stop,
                points,
                log,
            } => {
                if points < 2 {
                    return bad("a range needs at least 2 points".into());
                }
                if !(start < stop) {
                    return bad(format!("start {start} must be below stop {stop}"));
                }
                if log && !(start > 0.0) {
                    return bad("a log range needs start > 0".into());
                }
                let k = (points - 1) as f64;
                (0..points)
                    .map(|i| {
                        let s = i as f64 / k;
                        if log {
                            (start.ln() + s * (stop.ln() - start.ln())).exp()
                        } else {
                            start + s * (stop - start)
                        }
                    })
                    .collect()
            }
        };
        if times.is_empty() {
            return bad("no times given".into());
        }
        for (i, &t) in times.iter().enumerate() {
            let ok = t.is_finite() && if allow_zero { t >= 0.0 } else { t > 0.0 };
            if !ok {
                return bad(format!("entry {i} ({t}) is out of range"));
            }
            if i > 0 && t <= times[i - 1] {
                return bad("times must be strictly increasing".into());
            }
        }
        Ok(times)
    }
}

fn default_tol() -> f64 {
    hypoco_core::spectra::DEFAULT_TOL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuParams {
    pub drift: Vec<Vec<f64>>,
    pub diffusion: Vec<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub times: Option<TimeGrid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainShape {
    pub n: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsiParams {
    pub sigma_n: f64,
    #[serde(default)]
    pub sigma0: f64,
    pub mode: ChainMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphParams {
    pub chain: Option<ChainShape>,
    pub graph: Option<InteractionGraph>,
    #[serde(default)]
    pub pinned: usize,
    pub lsi: Option<LsiParams>,
}

fn default_observables() -> Vec<Observable> {
    vec![Observable::SquaredNorm]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub chain: ChainConfig,
    pub x0: Option<Vec<f64>>,
    pub t_end: f64,
    pub n_traj: usize,
    pub checkpoints: usize,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleParams {
    pub chain: ChainConfig,
    pub x0: Option<Vec<f64>>,
    pub y0: Vec<f64>,
    pub t_end: f64,
    pub n_pairs: usize,
    pub checkpoints: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    pub rho: f64,
    pub beta: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    pub nc: u32,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub m: f64,
    pub rho: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    pub drift: Vec<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub times: Option<TimeGrid>,
    pub rate: Option<RateParams>,
    pub explicit: Option<ExplicitParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub drift: Vec<Vec<f64>>,
    pub diffusion: Vec<Vec<f64>>,
    pub times: TimeGrid,
    /// Starting point of a Dirac initial law whose relative entropy to the
    /// invariant law is tabulated.
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Parameters {
    AnalyzeOu(OuParams),
    GraphBounds(GraphParams),
    SimulateChain(SimulateParams),
    Couple(CoupleParams),
    Certify(CertifyParams),
    DecayStudy(DecayParams),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: Kind,
    pub output: String,
    pub parameters: Parameters,
    pub checks: BTreeMap<String, Check>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    kind: Kind,
    output: String,
    parameters: serde_json::Value,
    #[serde(default)]
    checks: BTreeMap<String, Check>,
}

fn typed<T: DeserializeOwned>(value: serde_json::Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "parameters".to_string()
        } else {
            format!("parameters.{path}")
        };
        CliError::Config(format!("{field}: {}", e.inner()))
    })
}

impl Scenario {
    /// Parses and type-checks a scenario; module-level validation happens
    /// in [`crate::run::prepare`].
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let raw: RawScenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() || path == "." {
                CliError::Config(format!("scenario: {inner}"))
            } else {
                CliError::Config(format!("{path}: {inner}"))
            }
        })?;
        de.end()
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        if raw.output.trim().is_empty() {
            return Err(CliError::Config(
                "output: must be a non-empty path prefix".into(),
            ));
        }
        for (field, check) in &raw.checks {
            if !raw.kind.checkable().contains(&field.as_str()) {
                return Err(CliError::Config(format!(
                    "checks.{field}: not a report field of {} (expected one of {})",
                    raw.kind.name(),
                    raw.kind.checkable().join(", ")
                )));
            }
            check.validate(field)?;
        }
        if raw.kind == Kind::Certify && raw.checks.is_empty() {
            return Err(CliError::Config(
                "checks: a certify scenario must declare at least one check".into(),
            ));
        }
        let p = raw.parameters;
        let parameters = match raw.kind {
            Kind::AnalyzeOu => Parameters::AnalyzeOu(typed(p)?),
            Kind::GraphBounds => Parameters::GraphBounds(typed(p)?),
            Kind::SimulateChain => Parameters::SimulateChain(typed(p)?),
            Kind::Couple => Parameters::Couple(typed(p)?),
            Kind::Certify => Parameters::Certify(typed(p)?),
            Kind::DecayStudy => Parameters::DecayStudy(typed(p)?),
        };
        Ok(Scenario {
            kind: raw.kind,
            output: raw.output,
            parameters,
            checks: raw.checks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> String {
        match Scenario::parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert!(err("{").starts_with("scenario:"));
        assert!(err(r#"{"kind":"nope","output":"x","parameters":{}}"#).starts_with("kind:"));
        let m = err(
            r#"{"kind":"couple","output":"x","parameters":{"chain":{"n":2,"potential":{"kind":"quadratic","lambda":-1},"sigma_n":1,"mode":"fixed"},"y0":[0,1,1],"t_end":1,"n_pairs":2,"checkpoints":1}}"#,
        );
        assert!(m.starts_with("parameters.chain"), "{m}");
        assert!(m.contains("lambda"), "{m}");
        let m = err(r#"{"kind":"analyze-ou","output":"x","parameters":{"drift":[[1]]}}"#);
        assert!(m.contains("diffusion"), "{m}");
        let m = err(r#"{"kind":"certify","output":"x","parameters":{"drift":[[1]]}}"#);
        assert!(m.starts_with("checks"), "{m}");
        let m = err(
            r#"{"kind":"certify","output":"x","parameters":{"drift":[[1]]},"checks":{"kapa":{"min":0}}}"#,
        );
        assert!(m.starts_with("checks.kapa"), "{m}");
    }

    #[test]
    fn check_semantics() {
        let c = Check {
            equals: Some(0.5),
            tol: Some(1e-3),
            min: None,
            max: None,
        };
        assert!(c.passes(0.5005) && !c.passes(0.502) && !c.passes(f64::NAN));
        let c = Check {
            equals: None,
            tol: None,
            min: Some(0.0),
            max: Some(1.0),
        };
        assert!(c.passes(0.0) && c.passes(1.0) && !c.passes(1.0 + 1e-12));
    }

    #[test]
    fn time_ranges() {
        let g = TimeGrid::Range {
            start: 1.0,
            stop: 100.0,
            points: 3,
            log: true,
        };
        let t = g.resolve("times", false).unwrap();
        assert!((t[1] - 10.0).abs() < 1e-12 && (t[2] - 100.0).abs() < 1e-12);
        assert!(TimeGrid::List(vec![1.0, 1.0])
            .resolve("times", true)
            .is_err());
        assert!(TimeGrid::List(vec![0.0, 1.0])
            .resolve("times", false)
            .is_err());
    }
}
