//! Run and study configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    #[serde(rename = "linear-stochastic")]
    LinearStochastic,
    #[serde(rename = "nonlinear-stochastic")]
    NonlinearStochastic,
    #[serde(rename = "linear-deterministic")]
    LinearDeterministic,
    #[serde(rename = "nonlinear-deterministic")]
    NonlinearDeterministic,
}

impl Problem {
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Problem::LinearStochastic | Problem::NonlinearStochastic
        )
    }

    pub fn is_nonlinear(self) -> bool {
        matches!(
            self,
            Problem::NonlinearStochastic | Problem::NonlinearDeterministic
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreconditionerKind {
    /// One-level restricted additive Schwarz.
    #[serde(rename = "ras1")]
    Ras1,
    /// Two-grid with exact coarse LU.
    #[serde(rename = "2glu")]
    TwoGridLu,
    /// Two-grid with GMRES + one-level RAS on the coarse problem.
    #[serde(rename = "2gv2")]
    TwoGridV2,
    /// Two-grid with GMRES + AMG on the coarse problem.
    #[serde(rename = "2gv3")]
    TwoGridV3,
}

impl PreconditionerKind {
    pub fn label(self) -> &'static str {
        match self {
            PreconditionerKind::Ras1 => "ras1",
            PreconditionerKind::TwoGridLu => "2glu",
            PreconditionerKind::TwoGridV2 => "2gv2",
            PreconditionerKind::TwoGridV3 => "2gv3",
        }
    }

    pub fn is_two_grid(self) -> bool {
        self != PreconditionerKind::Ras1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Outer FGMRES relative residual.
    pub outer: f64,
    /// Inner GMRES relative residual of the AMG-preconditioned coarse solve.
    pub coarse: f64,
    /// Picard relative update norm.
    pub picard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            outer: 1e-5,
            coarse: 1e-5,
            picard: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: Problem,
    /// Elements per side of the fine mesh.
    pub mesh_n: usize,
    /// Number of random variables.
    #[serde(rename = "M")]
    pub nvars: usize,
    pub p_in: usize,
    pub p_out: usize,
    pub sigma: f64,
    pub bx: f64,
    pub by: f64,
    pub g0: f64,
    pub nsub: usize,
    pub overlap: usize,
    pub preconditioner: PreconditionerKind,
    /// Fine-to-coarse vertex ratio; must be the square of an integer
    /// refinement factor dividing `mesh_n`.
    pub coarse_ratio: usize,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub output: PathBuf,
    /// Exponent `m` of `q(u) = (1 + u)^m` for the deterministic nonlinear problem.
    pub m_nonlin: usize,
    pub mcs_samples: usize,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: Problem::LinearStochastic,
            mesh_n: 32,
            nvars: 3,
            p_in: 2,
            p_out: 3,
            sigma: 0.3,
            bx: 1.0,
            by: 1.0,
            g0: 0.0,
            nsub: 4,
            overlap: 1,
            preconditioner: PreconditionerKind::TwoGridV3,
            coarse_ratio: 4,
            tolerances: Tolerances::default(),
            seed: 0,
            output: PathBuf::from("out"),
            m_nonlin: 1,
            mcs_samples: 1000,
            threads: 0,
        }
    }
}

fn unit_interval(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in (0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)
            .map_err(|e| Error::config(parse_field(s, &e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes")
    }

    /// Refinement factor between the fine and coarse meshes.
    pub fn refinement_factor(&self) -> usize {
        (self.coarse_ratio as f64).sqrt().round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_n == 0 {
            return Err(Error::config("mesh_n", "must be >= 1"));
        }
        if self.problem.is_stochastic() && self.nvars == 0 {
            return Err(Error::config("M", "must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(
                "sigma",
                format!("must be finite and >= 0, got {}", self.sigma),
            ));
        }
        if !(self.bx > 0.0 && self.bx.is_finite()) {
            return Err(Error::config("bx", format!("must be > 0, got {}", self.bx)));
        }
        if !(self.by > 0.0 && self.by.is_finite()) {
            return Err(Error::config("by", format!("must be > 0, got {}", self.by)));
        }
        if !self.g0.is_finite() {
            return Err(Error::config("g0", "must be finite"));
        }
        if self.nsub == 0 {
            return Err(Error::config("nsub", "must be >= 1"));
        }
        if self.overlap == 0 {
            return Err(Error::config("overlap", "must be >= 1"));
        }
        let r = self.refinement_factor();
        if r == 0 || r * r != self.coarse_ratio {
            return Err(Error::config(
                "coarse_ratio",
                format!("must be a perfect square >= 1, got {}", self.coarse_ratio),
            ));
        }
        if self.preconditioner.is_two_grid() && !self.mesh_n.is_multiple_of(r) {
            return Err(Error::config(
                "coarse_ratio",
                format!(
                    "refinement factor {r} does not divide mesh_n = {}",
                    self.mesh_n
                ),
            ));
        }
        unit_interval("tolerances.outer", self.tolerances.outer)?;
        unit_interval("tolerances.coarse", self.tolerances.coarse)?;
        unit_interval("tolerances.picard", self.tolerances.picard)?;
        if self.problem == Problem::NonlinearDeterministic && self.m_nonlin == 0 {
            return Err(Error::config(
                "m_nonlin",
                "must be >= 1 for the nonlinear problem",
            ));
        }
        if self.mcs_samples == 0 {
            return Err(Error::config("mcs_samples", "must be >= 1"));
        }
        Ok(())
    }
}

/// Dotted key of the line a parse error points at, falling back to the
/// first backquoted name in the message.
fn parse_field(src: &str, e: &toml::de::Error) -> String {
    if let Some(span) = e.span() {
        let start = span.start.min(src.len());
        let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
        let line = src[line_start..].lines().next().unwrap_or("");
        if let Some((key, _)) = line.split_once('=') {
            let key = key.trim().trim_matches('"');
            let section = src[..line_start]
                .lines()
                .rev()
                .find_map(|l| l.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')));
            return match section {
                Some(sec) => format!("{}.{key}", sec.trim()),
                None => key.to_string(),
            };
        }
    }
    e.message()
        .split('`')
        .nth(1)
        .unwrap_or("config")
        .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Strong,
    Weak,
    RandomVars,
    Order,
    CoarseRatio,
    CondRatio,
}

/// One sweep over a single parameter with everything else fixed by `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub study: StudyKind,
    /// Sweep values; their meaning depends on `study` (subdomain counts,
    /// `[mesh_n, nsub]` pairs, M, p_out, coarse ratios, or M).
    pub sweep: Vec<Vec<usize>>,
    /// Preconditioners compared at each sweep point.
    #[serde(default = "default_study_preconditioners")]
    pub preconditioners: Vec<PreconditionerKind>,
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default = "default_study_output")]
    pub output: PathBuf,
}

fn default_study_preconditioners() -> Vec<PreconditionerKind> {
    vec![PreconditionerKind::TwoGridV2, PreconditionerKind::TwoGridV3]
}

fn default_study_output() -> PathBuf {
    PathBuf::from("study")
}

impl StudySpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: StudySpec = toml::from_str(s)
            .map_err(|e| Error::config(parse_field(s, &e), e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::config("sweep", "must not be empty"));
        }
        let arity = if self.study == StudyKind::Weak { 2 } else { 1 };
        if let Some(p) = self.sweep.iter().find(|p| p.len() != arity) {
            return Err(Error::config(
                "sweep",
                format!("each point needs {arity} value(s), got {p:?}"),
            ));
        }
        if self.preconditioners.is_empty() && self.study != StudyKind::CondRatio {
            return Err(Error::config("preconditioners", "must not be empty"));
        }
        self.base.validate()
    }
}
