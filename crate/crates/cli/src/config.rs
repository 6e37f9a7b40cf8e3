//! Configuration resolution: built-in defaults, then a commented key=value
//! config file, then command-line flags (flags win).

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendKind {
    Http,
    Scripted,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    pub prompts_dir: PathBuf,
    pub variant: String,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key_env: String,
    pub script: Option<PathBuf>,
    pub handlers: Option<PathBuf>,
    pub max_steps: usize,
    pub workers: usize,
    pub out_dir: PathBuf,
}

/// Values that may arrive from the config file or from flags; `None` means
/// "not set at this layer".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    pub variant: Option<String>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub script: Option<PathBuf>,
    pub handlers: Option<PathBuf>,
    pub max_steps: Option<usize>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    fn layered_over(self, base: Overrides) -> Overrides {
        Overrides {
            data_dir: self.data_dir.or(base.data_dir),
            prompts_dir: self.prompts_dir.or(base.prompts_dir),
            variant: self.variant.or(base.variant),
            backend: self.backend.or(base.backend),
            endpoint: self.endpoint.or(base.endpoint),
            model: self.model.or(base.model),
            api_key_env: self.api_key_env.or(base.api_key_env),
            script: self.script.or(base.script),
            handlers: self.handlers.or(base.handlers),
            max_steps: self.max_steps.or(base.max_steps),
            workers: self.workers.or(base.workers),
            out_dir: self.out_dir.or(base.out_dir),
        }
    }
}

/// Parse the plain-text config format: one `key = value` per line, `#`
/// comments, blank lines ignored. Keys match the flag names without the
/// leading dashes.
pub fn parse_config_file(text: &str) -> Result<Overrides> {
    let mut values: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("config line {}: expected `key = value`", lineno + 1))?;
        values.insert(key.trim().to_string(), value.trim().to_string());
    }
    let mut overrides = Overrides::default();
    for (key, value) in values {
        match key.as_str() {
            "data-dir" => overrides.data_dir = Some(PathBuf::from(value)),
            "prompts-dir" => overrides.prompts_dir = Some(PathBuf::from(value)),
            "variant" => overrides.variant = Some(value),
            "backend" => overrides.backend = Some(value),
            "endpoint" => overrides.endpoint = Some(value),
            "model" => overrides.model = Some(value),
            "api-key-env" => overrides.api_key_env = Some(value),
            "script" => overrides.script = Some(PathBuf::from(value)),
            "handlers" => overrides.handlers = Some(PathBuf::from(value)),
            "max-steps" => {
                overrides.max_steps =
                    Some(value.parse().with_context(|| format!("bad max-steps {value:?}"))?)
            }
            "workers" => {
                overrides.workers =
                    Some(value.parse().with_context(|| format!("bad workers {value:?}"))?)
            }
            "out" => overrides.out_dir = Some(PathBuf::from(value)),
            other => bail!("unknown config key {other:?}"),
        }
    }
    Ok(overrides)
}

fn looks_like_env_var_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !name.chars().next().unwrap().is_ascii_digit()
}

/// Merge flag overrides on top of an optional config file on top of the
/// defaults, then validate.
pub fn resolve(config_file: Option<&Path>, flags: Overrides) -> Result<CliConfig> {
    let from_file = match config_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            parse_config_file(&text)?
        }
        None => Overrides::default(),
    };
    let merged = flags.layered_over(from_file);

    let backend = match merged.backend.as_deref().unwrap_or("http") {
        "http" => BackendKind::Http,
        "scripted" => BackendKind::Scripted,
        other => bail!("unknown backend {other:?} (expected http or scripted)"),
    };
    let api_key_env = merged
        .api_key_env
        .unwrap_or_else(|| "TUMS_API_KEY".to_string());
    // names only, never secrets, on the command line or in config files
    if !looks_like_env_var_name(&api_key_env) {
        bail!(
            "api-key-env must be the NAME of an environment variable, got {api_key_env:?}; \
             put the key itself in that variable"
        );
    }

    let config = CliConfig {
        data_dir: merged.data_dir.unwrap_or_else(|| PathBuf::from("data")),
        prompts_dir: merged.prompts_dir.unwrap_or_else(|| PathBuf::from("prompts")),
        variant: merged.variant.unwrap_or_else(|| "tums".to_string()),
        backend,
        endpoint: merged.endpoint,
        model: merged.model.unwrap_or_else(|| "default".to_string()),
        api_key_env,
        script: merged.script,
        handlers: merged.handlers,
        max_steps: merged.max_steps.unwrap_or(tums::types::DEFAULT_MAX_STEPS),
        workers: merged.workers.unwrap_or(1),
        out_dir: merged.out_dir.unwrap_or_else(|| PathBuf::from("runs")),
    };

    if config.max_steps < 1 {
        bail!("max-steps must be at least 1");
    }
    if config.workers < 1 {
        bail!("workers must be at least 1");
    }
    if !config.data_dir.is_dir() {
        bail!("data directory {} does not exist", config.data_dir.display());
    }
    if !config.prompts_dir.is_dir() {
        bail!(
            "prompts directory {} does not exist",
            config.prompts_dir.display()
        );
    }
    match config.backend {
        BackendKind::Scripted => {
            let script = config
                .script
                .as_ref()
                .context("backend scripted needs --script <path>")?;
            if !script.is_file() {
                bail!("script file {} does not exist", script.display());
            }
        }
        BackendKind::Http => {}
    }
    if let Some(handlers) = &config.handlers {
        if !handlers.is_file() {
            bail!("handlers override {} does not exist", handlers.display());
        }
    }
    Ok(config)
}
