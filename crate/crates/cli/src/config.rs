use std::collections::BTreeSet;
use std::path::Path;

use clap::{Args, Command};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use rcm_core::{ModelSpec, RcmModel};

use crate::CliError;

/// Model flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Spatial dimension d (N = 2^d children per node)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<u32>,
    /// Interaction exponent α (default d/2 + 1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Forcing f (default 1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    /// Comma-separated δ_1..δ_N; omitted means the flat model
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// λ-family parameter, δ_k = 2^{λ(k−1)} (d = 3)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl ModelArgs {
    pub fn is_empty(&self) -> bool {
        self.dim.is_none()
            && self.alpha.is_none()
            && self.f.is_none()
            && self.deltas.is_none()
            && self.lambda.is_none()
    }

    pub fn spec(&self) -> ModelSpec {
        let d = self.dim.unwrap_or(if self.lambda.is_some() { 3 } else { 1 });
        ModelSpec {
            d,
            alpha: self.alpha.unwrap_or(d as f64 / 2.0 + 1.0),
            f: self.f.unwrap_or(1.0),
            deltas: self.deltas.clone(),
            lambda: self.lambda,
        }
    }

    pub fn build(&self) -> Result<RcmModel, CliError> {
        self.spec().build().map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Keys accepted in a `--config` file besides the subcommand's own flags.
const SHARED_KEYS: [&str; 2] = ["seed", "format"];

/// Overlay the flags given on the command line onto the config file, then
/// read the result back as `T`. Also returns the merged map for echoing.
pub fn merge<T: Args + Serialize + DeserializeOwned>(
    cli: &T,
    config: Option<&Path>,
) -> Result<(T, Map<String, Value>), CliError> {
    let mut merged = match config {
        Some(path) => read_config(path)?,
        None => Map::new(),
    };
    let known: BTreeSet<String> = T::augment_args(Command::new("config"))
        .get_arguments()
        .map(|a| a.get_id().as_str().to_string())
        .chain(SHARED_KEYS.iter().map(|s| s.to_string()))
        .collect();
    if let Some(unknown) = merged.keys().find(|k| !known.contains(*k)) {
        return Err(CliError::Config(format!("unknown config key '{unknown}'")));
    }
    let shared: Map<String, Value> = SHARED_KEYS
        .iter()
        .filter_map(|k| merged.remove(*k).map(|v| (k.to_string(), v)))
        .collect();
    match serde_json::to_value(cli).map_err(|e| CliError::Config(e.to_string()))? {
        Value::Object(flags) => merged.extend(flags),
        _ => unreachable!("argument structs serialize to objects"),
    }
    let args: T = serde_json::from_value(Value::Object(merged.clone()))
        .map_err(|e| CliError::Config(format!("config: {e}")))?;
    merged.extend(shared);
    Ok((args, merged))
}

fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Config("config file must hold a JSON object".into())),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}
