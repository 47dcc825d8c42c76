use std::path::Path;

use fgpinn::autodiff::Activation;
use fgpinn::model::ModelKind;
use fgpinn::problem::BenchmarkId;
use fgpinn::training::TrainConfig;
use fgpinn::Error;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub benchmark: BenchmarkId,
    #[serde(default = "default_model")]
    pub model: ModelKind,
}

fn default_model() -> ModelKind {
    ModelKind::Fg
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub training: TrainConfig,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub benchmark: Option<BenchmarkId>,
    pub modules: Option<usize>,
    pub interior: Option<usize>,
    pub activation: Option<Activation>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
}

fn field_error(e: impl std::fmt::Display) -> CliError {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".into());
    CliError::Core(Error::config(field, msg.lines().next().unwrap_or("").to_string()))
}

/// Parse a TOML config or a report JSON (its `config` member).
fn read_tables(path: &Path) -> Result<(Option<serde_json::Value>, Option<serde_json::Value>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(field_error)?;
        v.get("config").cloned().unwrap_or(v)
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(field_error)?;
        serde_json::to_value(t).map_err(field_error)?
    };
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Core(Error::config("config", "expected a table")))?;
    if let Some(k) = obj.keys().find(|k| *k != "run" && *k != "training") {
        return Err(CliError::Core(Error::config(
            k.clone(),
            format!("unknown section `{k}` (expected `run` or `training`)"),
        )));
    }
    Ok((obj.get("run").cloned(), obj.get("training").cloned()))
}

/// Load, overlay onto the benchmark defaults and validate.
pub fn resolve(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let (run, training) = match path {
        Some(p) => read_tables(p)?,
        None => (None, None),
    };
    let mut run_val = run.unwrap_or_else(|| serde_json::json!({}));
    if let Some(b) = ov.benchmark {
        run_val["benchmark"] = serde_json::to_value(b).map_err(field_error)?;
    }
    if run_val.get("benchmark").is_none() {
        return Err(CliError::Core(Error::config(
            "benchmark",
            "no benchmark given (use --benchmark or `run.benchmark`)",
        )));
    }
    let run: RunSection = serde_json::from_value(run_val).map_err(field_error)?;

    let mut merged = serde_json::to_value(TrainConfig::for_benchmark(run.benchmark)).map_err(field_error)?;
    if let Some(serde_json::Value::Object(t)) = training {
        for (k, v) in t {
            merged[k] = v;
        }
    }
    let mut training: TrainConfig = serde_json::from_value(merged).map_err(field_error)?;
    if let Some(v) = ov.modules {
        training.modules = v;
    }
    if let Some(v) = ov.interior {
        training.n_interior = v;
    }
    if let Some(v) = ov.activation {
        training.activation = v;
    }
    if let Some(v) = ov.iters {
        training.iters = v;
    }
    if let Some(v) = ov.seed {
        training.seed = v;
    }
    training.validate()?;
    Ok(RunConfig { run, training })
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    /// First eight hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash8(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config is plain data");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }
}
