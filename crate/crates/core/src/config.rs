//! Run configuration, read from a TOML file.
//!
//! ```toml
//! output_dir = "runs/demo"
//!
//! [suite]
//! vocabulary = ["cat", "dog", "apple", "banana", "cow"]
//! seed = 7
//!
//! [[generation]]
//! name = "mock"
//! kind = "mock"
//! failures = { p_omit = 0.2 }
//!
//! [[generation]]
//! name = "dalle"
//! kind = "http"
//! api = "openai"
//! endpoint = "https://api.openai.com/v1/images/generations"
//! credential_env = "OPENAI_API_KEY"
//! model = "dall-e-3"
//! rate_limit_per_minute = 5
//!
//! [detection]
//! kind = "mock"
//! score_threshold = 0.3
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    FailureConfig, GenerationApi, HttpDetector, HttpGenerator, HttpGeneratorConfig, ImageGenerator, MockDetector,
    MockGenerator, ObjectDetector, RateLimiter, RetryPolicy, DEFAULT_SCORE_THRESHOLD,
};
use crate::classifier::ClassifierConfig;
use crate::comparator::ComparatorConfig;
use crate::suite::SuiteConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("generation profile {name}: {message}")]
    Backend { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationProfile {
    /// Model name used in verdicts, reports and artifact paths.
    pub name: String,
    pub kind: BackendKind,
    #[serde(default = "yes")]
    pub literal_prefix: bool,
    /// Send the per-side case seed with each request.
    #[serde(default = "yes")]
    pub send_seed: bool,
    #[serde(default)]
    pub rate_limit_per_minute: Option<u32>,
    /// Mock only.
    #[serde(default)]
    pub failures: Option<FailureConfig>,
    /// HTTP only.
    #[serde(default)]
    pub api: Option<GenerationApi>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub size: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn yes() -> bool {
    true
}

fn default_timeout_s() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionProfile {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_threshold")]
    pub score_threshold: f64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_threshold() -> f64 {
    DEFAULT_SCORE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcurrencyConfig {
    /// Upper bound on in-flight backend requests.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        ConcurrencyConfig {
            max_in_flight: default_in_flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub suite: SuiteConfig,
    pub generation: Vec<GenerationProfile>,
    pub detection: DetectionProfile,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub concurrency: ConcurrencyConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn is_path_safe(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_toml(&text, path)
    }

    /// A mock-only configuration.
    pub fn mock(output_dir: impl Into<PathBuf>, suite: SuiteConfig, failures: FailureConfig) -> Self {
        RunConfig {
            output_dir: output_dir.into(),
            suite,
            generation: vec![GenerationProfile::mock("mock", failures)],
            detection: DetectionProfile {
                kind: BackendKind::Mock,
                endpoint: None,
                score_threshold: DEFAULT_SCORE_THRESHOLD,
                timeout_s: default_timeout_s(),
            },
            comparator: ComparatorConfig::default(),
            classifier: ClassifierConfig::default(),
            concurrency: ConcurrencyConfig::default(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = self.suite.violations("suite.");
        if self.generation.is_empty() {
            v.push("generation: at least one generation profile is required".into());
        }
        let mut names = HashSet::new();
        for (i, g) in self.generation.iter().enumerate() {
            let p = format!("generation[{i}].");
            if !is_path_safe(&g.name) {
                v.push(format!("{p}name: {:?} must be non-empty ASCII letters, digits, '-', '_' or '.'", g.name));
            }
            if !names.insert(&g.name) {
                v.push(format!("{p}name: duplicate profile name {:?}", g.name));
            }
            if g.rate_limit_per_minute == Some(0) {
                v.push(format!("{p}rate_limit_per_minute: must be at least 1"));
            }
            match g.kind {
                BackendKind::Mock => {
                    if let Some(f) = &g.failures {
                        v.extend(f.violations(&format!("{p}failures.")));
                    }
                    for (key, set) in [
                        ("api", g.api.is_some()),
                        ("endpoint", g.endpoint.is_some()),
                        ("credential_env", g.credential_env.is_some()),
                    ] {
                        if set {
                            v.push(format!("{p}{key}: only valid for kind = \"http\""));
                        }
                    }
                }
                BackendKind::Http => {
                    if g.api.is_none() {
                        v.push(format!("{p}api: required for kind = \"http\" (\"openai\" or \"sd\")"));
                    }
                    check_endpoint(g.endpoint.as_deref(), &format!("{p}endpoint"), &mut v);
                    if g.failures.is_some() {
                        v.push(format!("{p}failures: only valid for kind = \"mock\""));
                    }
                    if g.credential_env.as_deref() == Some("") {
                        v.push(format!("{p}credential_env: empty variable name"));
                    }
                }
            }
        }
        let d = &self.detection;
        if !(0.0..=1.0).contains(&d.score_threshold) {
            v.push(format!("detection.score_threshold: {} is outside [0, 1]", d.score_threshold));
        }
        match d.kind {
            BackendKind::Http => check_endpoint(d.endpoint.as_deref(), "detection.endpoint", &mut v),
            BackendKind::Mock if d.endpoint.is_some() => {
                v.push("detection.endpoint: only valid for kind = \"http\"".into());
            }
            BackendKind::Mock => {}
        }
        v.extend(self.comparator.violations("comparator."));
        v.extend(self.classifier.violations("classifier."));
        if self.concurrency.max_in_flight == 0 {
            v.push("concurrency.max_in_flight: must be at least 1".into());
        }
        if self.retry.max_attempts == 0 {
            v.push("retry.max_attempts: must be at least 1".into());
        }
        if self.retry.multiplier.is_nan() || self.retry.multiplier < 1.0 {
            v.push(format!("retry.multiplier: {} must be at least 1", self.retry.multiplier));
        }
        if self.output_dir.as_os_str().is_empty() {
            v.push("output_dir: must not be empty".into());
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

fn check_endpoint(endpoint: Option<&str>, path: &str, out: &mut Vec<String>) {
    match endpoint {
        None => out.push(format!("{path}: required for kind = \"http\"")),
        Some(e) if !(e.starts_with("http://") || e.starts_with("https://")) => {
            out.push(format!("{path}: {e:?} is not an http(s) URL"));
        }
        Some(_) => {}
    }
}

/// A generation backend ready to serve requests.
pub struct Generator {
    pub profile: GenerationProfile,
    pub backend: Box<dyn ImageGenerator>,
    pub limiter: Option<RateLimiter>,
}

impl GenerationProfile {
    pub fn mock(name: &str, failures: FailureConfig) -> Self {
        GenerationProfile {
            name: name.to_string(),
            kind: BackendKind::Mock,
            literal_prefix: true,
            send_seed: true,
            rate_limit_per_minute: None,
            failures: Some(failures),
            api: None,
            endpoint: None,
            credential_env: None,
            model: None,
            size: None,
            timeout_s: default_timeout_s(),
        }
    }

    /// Resolves credentials and builds the backend.
    pub fn build(&self) -> Result<Generator, ConfigError> {
        let backend: Box<dyn ImageGenerator> = match self.kind {
            BackendKind::Mock => Box::new(MockGenerator::new(&self.name, self.failures.clone().unwrap_or_default())),
            BackendKind::Http => {
                let cfg = HttpGeneratorConfig {
                    name: self.name.clone(),
                    api: self.api.expect("validated"),
                    endpoint: self.endpoint.clone().expect("validated"),
                    credential_env: self.credential_env.clone(),
                    model: self.model.clone(),
                    size: self.size.clone(),
                    timeout_s: self.timeout_s,
                };
                Box::new(HttpGenerator::new(cfg).map_err(|e| ConfigError::Backend {
                    name: self.name.clone(),
                    message: e.to_string(),
                })?)
            }
        };
        Ok(Generator {
            profile: self.clone(),
            backend,
            limiter: self.rate_limit_per_minute.map(RateLimiter::per_minute),
        })
    }
}

impl DetectionProfile {
    pub fn build(&self) -> Box<dyn ObjectDetector> {
        match self.kind {
            BackendKind::Mock => Box::new(MockDetector),
            BackendKind::Http => Box::new(HttpDetector::new(
                self.endpoint.as_deref().expect("validated"),
                self.timeout_s,
            )),
        }
    }
}
