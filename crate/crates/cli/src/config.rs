//! Experiment configuration files.
//!
//! A config is TOML: top-level keys plus dotted sections `dist`, `budget`,
//! `params` and `output`. Unknown keys are rejected and every error carries
//! the line it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use ergwalk_core::{LeftFactor, RadialMeasure, StepDistribution};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.msg),
            None => write!(f, "config: {}", self.msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Walk,
    Drift,
    Spectral,
    Tailbound,
    ThreeModes,
    Stationarity,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Walk => "walk",
            ExperimentKind::Drift => "drift",
            ExperimentKind::Spectral => "spectral",
            ExperimentKind::Tailbound => "tailbound",
            ExperimentKind::ThreeModes => "three_modes",
            ExperimentKind::Stationarity => "stationarity",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: ExperimentKind,
    pub space: Spanned<String>,
    pub surface_file: Option<String>,
    pub seed: u64,
    pub dist: Spanned<RawDist>,
    pub budget: RawBudget,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDist {
    pub radial: RawRadial,
    #[serde(default)]
    pub left_factor: Option<RawLeft>,
    #[serde(default)]
    pub moment_exponent: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRadial {
    pub kind: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RawLeft {
    Name(String),
    Angles(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBudget {
    pub n: Spanned<i64>,
    pub walkers: Option<Spanned<i64>>,
    pub inner: Option<Spanned<i64>>,
    pub points: Option<Spanned<i64>>,
}

/// Experiment-specific settings; each experiment reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Drift exponent `s` of `systole^{−s}`.
    pub s: Option<f64>,
    /// Largest drift value the regression points reach.
    pub f_max: Option<f64>,
    pub steps: Option<usize>,
    pub alpha_target: Option<f64>,
    pub m_max: Option<usize>,
    pub t0: Option<f64>,
    pub delta: Option<f64>,
    pub compose: Option<bool>,
    /// Dictionary member used by the spectral experiments.
    pub observable: Option<String>,
    /// Reference sample size.
    pub reference: Option<usize>,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub ns: Option<Vec<usize>>,
    pub look_ahead: Option<usize>,
    pub path_steps: Option<usize>,
    pub burn_in: Option<usize>,
    pub chains: Option<usize>,
    pub chain_steps: Option<usize>,
    /// Drift exponents whose values are added as trajectory columns.
    pub v_exponents: Option<Vec<f64>>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<String>,
    pub report: Option<String>,
    pub csv: Option<String>,
}

/// Where a space comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Torus,
    Builtin { name: String },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Budget {
    pub n: usize,
    pub walkers: Option<usize>,
    pub inner: Option<usize>,
    pub points: Option<usize>,
}

/// A validated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub space: SpaceSpec,
    pub seed: u64,
    pub dist: StepDistribution,
    pub budget: Budget,
    pub params: Params,
    pub output: Output,
    /// The file as read, echoed into reports.
    #[serde(skip)]
    pub text: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn spanned_err<T>(text: &str, s: &Spanned<T>, msg: String) -> ConfigError {
    ConfigError {
        line: Some(line_of(text, s.span().start)),
        msg,
    }
}

fn positive(text: &str, key: &str, v: &Spanned<i64>) -> Result<usize, ConfigError> {
    let x = *v.get_ref();
    if x <= 0 {
        return Err(spanned_err(text, v, format!("budget.{key} must be positive, got {x}")));
    }
    Ok(x as usize)
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            msg: e.message().trim().to_string(),
        })?;
        let space = match raw.space.get_ref().as_str() {
            "torus" => SpaceSpec::Torus,
            "surface:file" => match &raw.surface_file {
                Some(p) => SpaceSpec::File {
                    path: base_dir.join(p),
                },
                None => {
                    return Err(spanned_err(
                        text,
                        &raw.space,
                        "space `surface:file` requires key `surface_file`".into(),
                    ))
                }
            },
            other => match other.strip_prefix("surface:") {
                Some(name) if ergwalk_core::surface::BUILTIN_NAMES.contains(&name) => {
                    SpaceSpec::Builtin { name: name.into() }
                }
                _ => {
                    return Err(spanned_err(
                        text,
                        &raw.space,
                        format!(
                            "unknown space `{other}`; expected torus, surface:file or surface:<{}>",
                            ergwalk_core::surface::BUILTIN_NAMES.join("|")
                        ),
                    ))
                }
            },
        };
        if raw.surface_file.is_some() && !matches!(space, SpaceSpec::File { .. }) {
            return Err(spanned_err(
                text,
                &raw.space,
                "`surface_file` is only used with space = \"surface:file\"".into(),
            ));
        }
        let d = raw.dist.get_ref();
        let dist_err = |msg: String| spanned_err(text, &raw.dist, msg);
        let radial = RadialMeasure::from_params(&d.radial.kind, &d.radial.params)
            .map_err(|e| dist_err(format!("dist.radial: {e}")))?;
        let left = match &d.left_factor {
            None => LeftFactor::Haar,
            Some(RawLeft::Name(n)) if n == "haar" => LeftFactor::Haar,
            Some(RawLeft::Name(n)) => {
                return Err(dist_err(format!(
                    "dist.left_factor must be \"haar\" or a list of angles, got `{n}`"
                )))
            }
            Some(RawLeft::Angles(a)) => LeftFactor::Fixed { angles: a.clone() },
        };
        let dist = StepDistribution::new(radial, left, d.moment_exponent.unwrap_or(0.5))
            .map_err(|e| dist_err(format!("dist: {e}")))?;
        let b = &raw.budget;
        let opt = |key: &str, v: &Option<Spanned<i64>>| -> Result<Option<usize>, ConfigError> {
            v.as_ref().map(|v| positive(text, key, v)).transpose()
        };
        let budget = Budget {
            n: positive(text, "n", &b.n)?,
            walkers: opt("walkers", &b.walkers)?,
            inner: opt("inner", &b.inner)?,
            points: opt("points", &b.points)?,
        };
        Ok(Self {
            experiment: raw.experiment,
            space,
            seed: raw.seed,
            dist,
            budget,
            params: raw.params,
            output: raw.output,
            text: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Required budget entry.
    pub fn need(&self, key: &str, v: Option<usize>) -> Result<usize, ConfigError> {
        v.ok_or_else(|| ConfigError {
            line: None,
            msg: format!("experiment `{}` requires budget.{key}", self.experiment.name()),
        })
    }
}
