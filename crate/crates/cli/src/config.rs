//! Settings resolution: flag, then environment, then config file, then default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use formopt_agent::eval::ToleranceSpec;
use formopt_agent::pipeline::{PipelineConfig, DEFAULT_CAP};

pub const ENV_ENDPOINT: &str = "FORMOPT_ENDPOINT";
pub const ENV_API_KEY: &str = "FORMOPT_API_KEY";
pub const ENV_MODEL: &str = "FORMOPT_MODEL";
pub const ENV_CONFIG: &str = "FORMOPT_CONFIG";
pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub endpoint: EndpointSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub mock_script: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub requests_per_minute: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub cap: Option<usize>,
    pub skip_five_element: Option<bool>,
    pub no_self_correction: Option<bool>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub workers: Option<usize>,
    pub best_of: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
}

impl FileConfig {
    /// Reads a TOML config. A relative `mock_script` is taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        if let (Some(mock), Some(dir)) = (&cfg.mock_script, path.parent()) {
            if mock.is_relative() {
                cfg.mock_script = Some(dir.join(mock));
            }
        }
        Ok(cfg)
    }
}

/// Values from flags, with environment fallbacks already applied by the
/// argument parser.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub cap: Option<usize>,
    pub skip_five_element: bool,
    pub no_self_correction: bool,
    pub temperature: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub workers: Option<usize>,
    pub best_of: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Http {
        url: String,
        api_key: Option<String>,
        model: String,
        timeout_secs: u64,
        requests_per_minute: Option<usize>,
    },
    Mock(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub backend: Backend,
    pub pipeline: PipelineConfig,
    pub tolerance: ToleranceSpec,
    pub workers: usize,
    pub best_of: Option<usize>,
}

pub fn resolve(flags: &Overrides, file: &FileConfig) -> Result<Settings, String> {
    let cap = flags.cap.or(file.pipeline.cap).unwrap_or(DEFAULT_CAP);
    if cap == 0 {
        return Err("cap must be at least 1".into());
    }
    let temperature = flags.temperature.or(file.pipeline.temperature).unwrap_or(0.0);
    if !(0.0..=2.0).contains(&temperature) {
        return Err(format!("temperature must be within 0 and 2, got {temperature}"));
    }
    let pipeline = PipelineConfig {
        cap,
        skip_five_element: flags.skip_five_element || file.pipeline.skip_five_element.unwrap_or(false),
        no_self_correction: flags.no_self_correction || file.pipeline.no_self_correction.unwrap_or(false),
        temperature,
    };
    let defaults = ToleranceSpec::default();
    let tolerance = ToleranceSpec {
        abs: flags.abs_tol.or(file.eval.abs_tol).unwrap_or(defaults.abs),
        rel: flags.rel_tol.or(file.eval.rel_tol).unwrap_or(defaults.rel),
    };
    if !(tolerance.abs >= 0.0 && tolerance.rel >= 0.0) {
        return Err("tolerances must be non-negative".into());
    }
    let workers = flags.workers.or(file.eval.workers).unwrap_or(1);
    if workers == 0 {
        return Err("workers must be at least 1".into());
    }
    let best_of = flags.best_of.or(file.eval.best_of);
    if best_of == Some(0) {
        return Err("best-of must be at least 1".into());
    }

    let url = flags.endpoint.clone().or_else(|| file.endpoint.url.clone()).filter(|u| !u.trim().is_empty());
    let mock = flags.mock_script.clone().or_else(|| file.mock_script.clone());
    let backend = match (url, mock) {
        (Some(_), Some(_)) => return Err("both an endpoint and a mock script are configured; choose one".into()),
        (None, None) => {
            return Err(format!("no model backend: set --endpoint (or {ENV_ENDPOINT}) or --mock"));
        }
        (None, Some(path)) => Backend::Mock(path),
        (Some(url), None) => Backend::Http {
            url,
            api_key: flags.api_key.clone().or_else(|| file.endpoint.api_key.clone()),
            model: flags.model.clone().or_else(|| file.endpoint.model.clone()).unwrap_or_else(|| DEFAULT_MODEL.into()),
            timeout_secs: flags.timeout_secs.or(file.endpoint.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS),
            requests_per_minute: file.endpoint.requests_per_minute,
        },
    };
    Ok(Settings { backend, pipeline, tolerance, workers, best_of })
}
