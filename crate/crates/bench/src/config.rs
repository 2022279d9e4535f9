//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use raresim_core::estimators::{BssConfig, Method, SubsimConfig};
use raresim_core::expr::Expr;
use raresim_core::{InputDistribution, Performance, ReliabilityProblem};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

pub const PAPER_PROFILE: &str = "paper-cantilever";
/// Reference failure probability of the cantilever problem.
pub const CANTILEVER_REFERENCE: f64 = 3.85e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub m: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { m: 10_000_000 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: Option<String>,
    expression: Option<String>,
    means: Option<Vec<f64>>,
    sds: Option<Vec<f64>>,
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    profile: Option<String>,
    method: Option<Method>,
    replications: Option<usize>,
    seed: Option<u64>,
    reference: Option<f64>,
    output: Option<PathBuf>,
    problem: Option<RawProblem>,
    mc: Option<McConfig>,
    subsim: Option<SubsimConfig>,
    bss: Option<BssConfig>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ReliabilityProblem,
    pub method: Method,
    pub replications: usize,
    pub seed: u64,
    pub reference: Option<f64>,
    pub output: Option<PathBuf>,
    pub mc: McConfig,
    pub subsim: SubsimConfig,
    pub bss: BssConfig,
}

impl ExperimentConfig {
    /// Paper-scale cantilever experiment for `method`.
    pub fn paper_cantilever(method: Method) -> Self {
        ExperimentConfig {
            problem: ReliabilityProblem::cantilever(),
            method,
            replications: if method == Method::Mc { 1 } else { 50 },
            seed: 0,
            reference: Some(CANTILEVER_REFERENCE),
            output: None,
            mc: McConfig::default(),
            subsim: SubsimConfig::default(),
            bss: BssConfig::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(BenchError::Config("replications must be at least 1".into()));
        }
        if let Some(r) = self.reference {
            if !(r.is_finite() && r > 0.0) {
                return Err(BenchError::Config("reference must be a positive probability".into()));
            }
        }
        match self.method {
            Method::Mc if self.mc.m == 0 => Err(BenchError::Config("mc.m must be positive".into())),
            Method::Subsim => Ok(self.subsim.validate()?),
            Method::Bss => Ok(self.bss.validate(self.problem.dims())?),
            Method::Mc => Ok(()),
        }
    }
}

impl std::str::FromStr for ExperimentConfig {
    type Err = BenchError;

    fn from_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let paper = match raw.profile.as_deref() {
            None => false,
            Some(PAPER_PROFILE) => true,
            Some(other) => return Err(BenchError::Config(format!("unknown profile `{other}`"))),
        };
        let method = raw
            .method
            .ok_or_else(|| BenchError::Config("`method` is required (mc, subsim or bss)".into()))?;
        let mut config = if paper {
            ExperimentConfig::paper_cantilever(method)
        } else {
            let problem = raw
                .problem
                .as_ref()
                .ok_or_else(|| BenchError::Config("a [problem] section or a profile is required".into()))?;
            ExperimentConfig {
                problem: resolve_problem(problem)?,
                method,
                replications: 1,
                seed: 0,
                reference: None,
                output: None,
                mc: McConfig::default(),
                subsim: SubsimConfig::default(),
                bss: BssConfig::default(),
            }
        };
        if paper {
            if let Some(problem) = &raw.problem {
                config.problem = resolve_problem(problem)?;
            }
        }
        config.replications = raw.replications.unwrap_or(config.replications);
        config.seed = raw.seed.unwrap_or(config.seed);
        config.reference = raw.reference.or(config.reference);
        config.output = raw.output;
        config.mc = raw.mc.unwrap_or(config.mc);
        config.subsim = raw.subsim.unwrap_or(config.subsim);
        config.bss = raw.bss.unwrap_or(config.bss);
        config.validate()?;
        Ok(config)
    }
}

fn resolve_problem(raw: &RawProblem) -> Result<ReliabilityProblem> {
    let problem = match (&raw.name, &raw.expression) {
        (Some(_), Some(_)) => {
            return Err(BenchError::Config("give either problem.name or problem.expression".into()));
        }
        (Some(name), None) => {
            if raw.means.is_some() || raw.sds.is_some() {
                return Err(BenchError::Config("named problems fix their own input distribution".into()));
            }
            ReliabilityProblem::by_name(name).ok_or_else(|| BenchError::Config(format!("unknown problem `{name}`")))?
        }
        (None, Some(source)) => {
            let (means, sds, threshold) = match (&raw.means, &raw.sds, raw.threshold) {
                (Some(m), Some(s), Some(u)) => (m.clone(), s.clone(), u),
                _ => {
                    return Err(BenchError::Config(
                        "inline problems need expression, means, sds and threshold".into(),
                    ))
                }
            };
            let input = InputDistribution::new(means, sds)?;
            let expr = Expr::parse(source)?;
            return Ok(ReliabilityProblem::new("inline", input, Performance::Expression(expr), threshold)?);
        }
        (None, None) => return Err(BenchError::Config("problem.name or problem.expression is required".into())),
    };
    match raw.threshold {
        Some(u) => Ok(problem.with_threshold(u)?),
        None => Ok(problem),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_profile_defaults() {
        let c: ExperimentConfig = "profile = \"paper-cantilever\"\nmethod = \"bss\"".parse().unwrap();
        assert_eq!(c.replications, 50);
        assert_eq!(c.reference, Some(3.85e-5));
        assert_eq!(c.problem.failure_threshold, 17.8);
        assert_eq!((c.bss.m, c.bss.n0, c.bss.p0), (1000, 10, 0.1));
        assert_eq!((c.bss.eta_intermediate, c.bss.eta_final), (1e-6, 1e-7));
    }

    #[test]
    fn overrides_and_inline_problem() {
        let text = r#"
method = "subsim"
replications = 7
seed = 99

[problem]
expression = "x1"
means = [0.0]
sds = [1.0]
threshold = 2.3263

[subsim]
m = 500
scheme = "resample-move"
sweeps = 3
"#;
        let c: ExperimentConfig = text.parse().unwrap();
        assert_eq!((c.replications, c.seed), (7, 99));
        assert_eq!(c.subsim.m, 500);
        assert_eq!(c.subsim.sweeps, 3);
        assert_eq!(c.problem.eval_performance(&[1.5]).unwrap(), 1.5);
        assert_eq!(c.reference, None);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "method = \"bss\"",
            "profile = \"nope\"\nmethod = \"mc\"",
            "profile = \"paper-cantilever\"",
            "profile = \"paper-cantilever\"\nmethod = \"mc\"\nreplications = 0",
            "profile = \"paper-cantilever\"\nmethod = \"mc\"\nreference = -1.0",
            "profile = \"paper-cantilever\"\nmethod = \"bss\"\n[bss]\nn0 = 1",
            "profile = \"paper-cantilever\"\nmethod = \"bss\"\n[bss]\nbogus = 1",
            "method = \"mc\"\n[problem]\nname = \"unknown\"",
            "method = \"mc\"\n[problem]\nexpression = \"x3\"\nmeans = [0.0]\nsds = [1.0]\nthreshold = 1.0",
            "method = \"mc\"\n[problem]\nexpression = \"x1 +\"\nmeans = [0.0]\nsds = [1.0]\nthreshold = 1.0",
            "method = \"mc\"\n[problem]\nexpression = \"x1\"\nmeans = [0.0]\nsds = [0.0]\nthreshold = 1.0",
            "method = = 1",
        ] {
            assert!(text.parse::<ExperimentConfig>().is_err(), "{text}");
        }
    }

    #[test]
    fn named_problem_threshold_override() {
        let c: ExperimentConfig = "method = \"mc\"\n[problem]\nname = \"cantilever\"\nthreshold = 16.0".parse().unwrap();
        assert_eq!(c.problem.failure_threshold, 16.0);
    }
}
