//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [instance]
//! rho = 1.2
//! t_end = 1.0
//! modes = [10]            # λ_k = k²π²; or `lambdas = [...]`
//! mus = [1.0]
//! u0 = [0.0]              # optional, zero by default
//! nonlinearity = { kind = "sin" }   # zero | sin | rational (scale, default 5)
//!
//! [study]
//! methods = ["mlei"]
//! dt_levels = [16, 32, 64, 128, 256, 512]
//! ref_level = 8192
//! n_paths = 100
//! master_seed = 1
//! error_metric = "final_time"       # or sup_over_grid
//! sampler_mode = "exact_cholesky"   # or ito_sum; default depends on methods
//! reference = "self"                # or "mlei" (every method against MLEI)
//!
//! [check]                           # used by `volterra run --check`
//! slope = { mlei = [0.85, 1.15] }
//! ```
//!
//! Without a `[check]` table, `--check` uses the windows from
//! [`ExperimentConfig::effective_checks`].
//!
//! Unknown keys anywhere are an error.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{KernelSpec, Nonlinearity, ProblemInstance, Spectrum};
use crate::noise::{SamplerMode, DEFAULT_QUAD_TOL};
use crate::resolvent::TimeGrid;
use crate::solvers::Method;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    FinalTime,
    SupOverGrid,
}

impl ErrorMetric {
    pub const ALL: [ErrorMetric; 2] = [ErrorMetric::FinalTime, ErrorMetric::SupOverGrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorMetric::FinalTime => "final_time",
            ErrorMetric::SupOverGrid => "sup_over_grid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Each method against itself at the reference level.
    #[serde(rename = "self")]
    SelfReference,
    /// Every method against MLEI at the reference level.
    Mlei,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityConfig {
    Zero,
    Sin,
    Rational {
        #[serde(default = "default_rational_scale")]
        scale: f64,
    },
}

fn default_rational_scale() -> f64 {
    5.0
}

impl NonlinearityConfig {
    pub fn build(&self) -> Nonlinearity {
        match self {
            NonlinearityConfig::Zero => Nonlinearity::Zero,
            NonlinearityConfig::Sin => Nonlinearity::Sine,
            NonlinearityConfig::Rational { scale } => Nonlinearity::Rational { scale: *scale },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub rho: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Dirichlet-Laplacian mode numbers k ≥ 1 (λ_k = k²π²).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<usize>>,
    /// Explicit eigenvalues, instead of `modes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    pub mus: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    pub nonlinearity: NonlinearityConfig,
}

fn default_t_end() -> f64 {
    1.0
}

impl InstanceConfig {
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        match (&self.modes, &self.lambdas) {
            (Some(_), Some(_)) => Err(Error::Config("give either `modes` or `lambdas`, not both".into())),
            (None, None) => Err(Error::Config("instance needs `modes` or `lambdas`".into())),
            (Some(modes), None) => {
                if modes.contains(&0) {
                    return Err(Error::Config("mode numbers start at 1".into()));
                }
                Ok(modes.iter().map(|&k| (k * k) as f64 * PI * PI).collect())
            }
            (None, Some(l)) => Ok(l.clone()),
        }
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        let as_config = |e: Error| Error::Config(e.to_string());
        let spectrum = Spectrum::new(self.lambdas()?, Some(self.mus.clone())).map_err(as_config)?;
        let kernel = KernelSpec::new(self.rho).map_err(as_config)?;
        ProblemInstance::new(spectrum, kernel, self.nonlinearity.build(), self.u0.clone(), self.t_end)
            .map_err(as_config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub dt_levels: Vec<usize>,
    #[serde(default = "default_ref_level")]
    pub ref_level: usize,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_metric")]
    pub error_metric: ErrorMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler_mode: Option<SamplerMode>,
    #[serde(default = "default_reference")]
    pub reference: Reference,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_samples: usize,
    /// Threads for the path loop; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    /// Directory for cached resolvent tables and covariance factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<String>,
}

fn default_ref_level() -> usize {
    8192
}
fn default_n_paths() -> usize {
    100
}
fn default_metric() -> ErrorMetric {
    ErrorMetric::FinalTime
}
fn default_reference() -> Reference {
    Reference::SelfReference
}
fn default_quad_tol() -> f64 {
    DEFAULT_QUAD_TOL
}
fn default_bootstrap() -> usize {
    1000
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Admissible fitted slope per method.
    #[serde(default)]
    pub slope: BTreeMap<Method, [f64; 2]>,
    /// Minimum BE-CQ / MLEI error ratio at the finest level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_becq_over_mlei: Option<f64>,
    /// Largest admissible strong error at any level (e.g. 1e-12 for exactness checks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub study: StudyConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

impl ExperimentConfig {
    /// The `[check]` table, or the default thresholds when it is empty:
    /// MLEI slope in [0.85, 1.15] ([0.9, 1.1] without noise), BE-CQ slope in
    /// [0.35, 0.75] and BE-CQ at least 3x MLEI at the finest level.
    pub fn effective_checks(&self) -> CheckConfig {
        if self.check != CheckConfig::default() {
            return self.check.clone();
        }
        let deterministic = self.instance.mus.iter().all(|&m| m == 0.0);
        let mut check = CheckConfig::default();
        for &m in &self.study.methods {
            let window = match (m, deterministic) {
                (Method::Mlei, false) => [0.85, 1.15],
                (Method::Mlei, true) => [0.9, 1.1],
                (Method::Becq, _) => [0.35, 0.75],
            };
            check.slope.insert(m, window);
        }
        if self.study.methods.contains(&Method::Mlei) && self.study.methods.contains(&Method::Becq) {
            check.min_becq_over_mlei = Some(3.0);
        }
        check
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    /// Sampler actually used: explicit setting, else exact unless BE-CQ runs.
    pub fn sampler(&self) -> SamplerMode {
        self.study.sampler_mode.unwrap_or(if self.study.methods.contains(&Method::Becq) {
            SamplerMode::ItoSum
        } else {
            SamplerMode::ExactCholesky
        })
    }

    /// Checks everything that does not need a study run.
    pub fn validate(&self) -> Result<()> {
        self.instance.build()?;
        let s = &self.study;
        if s.methods.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        let mut seen = s.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != s.methods.len() {
            return Err(Error::Config("methods listed twice".into()));
        }
        if s.dt_levels.is_empty() || s.dt_levels.contains(&0) {
            return Err(Error::Config("dt_levels must be positive step counts".into()));
        }
        if s.dt_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("dt_levels must be strictly increasing".into()));
        }
        if let Some(l) = s.dt_levels.iter().find(|&&l| s.ref_level % l != 0) {
            return Err(Error::Config(format!("ref_level {} is not divisible by {l}", s.ref_level)));
        }
        if s.n_paths < 2 {
            return Err(Error::Config(format!("n_paths = {} (need at least 2)", s.n_paths)));
        }
        if !(s.quad_tol > 0.0) {
            return Err(Error::Config("quad_tol must be positive".into()));
        }
        if self.sampler() == SamplerMode::ExactCholesky && s.methods.contains(&Method::Becq) {
            return Err(Error::Config(
                "becq needs the Brownian path; use sampler_mode = \"ito_sum\"".into(),
            ));
        }
        for (m, r) in &self.check.slope {
            if !(r[0] <= r[1]) {
                return Err(Error::Config(format!("check.slope.{m} must be [lo, hi]")));
            }
        }
        Ok(())
    }

    /// Extra checks for a convergence study (the demo needs only one level).
    pub fn validate_study(&self) -> Result<()> {
        let s = &self.study;
        if s.dt_levels.len() < 3 {
            return Err(Error::InsufficientLevels(format!(
                "{} dt levels given, a slope needs at least 3",
                s.dt_levels.len()
            )));
        }
        let finest = *s.dt_levels.last().expect("levels checked non-empty");
        if s.ref_level < 8 * finest {
            return Err(Error::Config(format!(
                "ref_level {} must be at least 8x the finest level {finest}",
                s.ref_level
            )));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        self.instance.build()
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.instance.t_end, steps)
    }

    /// SHA-256 of the canonical TOML form, ignoring `workers` and `cache_dir`
    /// (they do not change results).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.study.workers = 0;
        c.study.cache_dir = None;
        let text = toml::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// SHA-256 of the instance section only.
    pub fn instance_hash(&self) -> String {
        let text = toml::to_string(&self.instance).expect("instance serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[instance]
rho = 1.2
modes = [10]
mus = [1.0]
nonlinearity = { kind = "sin" }

[study]
methods = ["mlei"]
dt_levels = [16, 32, 64]
ref_level = 1024
n_paths = 10
master_seed = 3
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.study.error_metric, ErrorMetric::FinalTime);
        assert_eq!(c.sampler(), SamplerMode::ExactCholesky);
        assert_eq!(c.instance.t_end, 1.0);
        let inst = c.instance().unwrap();
        assert!((inst.spectrum.lambdas()[0] - 100.0 * PI * PI).abs() < 1e-12);
        c.validate_study().unwrap();
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_combinations() {
        let unknown = BASE.replace("n_paths = 10", "n_paths = 10\npaths = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&unknown), Err(Error::Config(_))));
        let becq = BASE.replace(r#"methods = ["mlei"]"#, r#"methods = ["mlei", "becq"]"#);
        assert_eq!(ExperimentConfig::from_toml_str(&becq).unwrap().sampler(), SamplerMode::ItoSum);
        let forced = format!("{becq}sampler_mode = \"exact_cholesky\"\n");
        assert!(ExperimentConfig::from_toml_str(&forced).is_err());
        let coarse_ref = BASE.replace("ref_level = 1024", "ref_level = 256");
        let c = ExperimentConfig::from_toml_str(&coarse_ref).unwrap();
        assert!(c.validate_study().is_err());
        let two = BASE.replace("[16, 32, 64]", "[16, 32]");
        let c = ExperimentConfig::from_toml_str(&two).unwrap();
        assert!(matches!(c.validate_study(), Err(Error::InsufficientLevels(_))));
    }

    #[test]
    fn hash_ignores_workers() {
        let a = ExperimentConfig::from_toml_str(BASE).unwrap();
        let b = ExperimentConfig::from_toml_str(&format!("{BASE}workers = 4\n")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml_str(&BASE.replace("master_seed = 3", "master_seed = 4")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
