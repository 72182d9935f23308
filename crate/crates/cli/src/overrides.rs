//! Configuration layering: defaults <- config file <- `--set` flags.
//!
//! Every scenario ships a complete default configuration as JSON. A
//! config file may override any subset of it, and `--set key=value`
//! flags patch individual leaves with dotted paths. Keys that do not
//! exist in the defaults are rejected rather than silently ignored so
//! typos surface as errors.

use serde_json::Value;

use crate::CliError;

/// Merge `patch` onto `base` in place. Objects merge recursively; any
/// other value replaces the default wholesale. Unknown keys error.
pub fn merge_config(base: &mut Value, patch: &Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(base_map), Value::Object(patch_map)) => {
            for (key, patch_val) in patch_map {
                let child_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match base_map.get_mut(key) {
                    Some(base_val) => merge_config(base_val, patch_val, &child_path)?,
                    None => {
                        return Err(CliError::Config(format!(
                            "unknown config key '{child_path}'"
                        )))
                    }
                }
            }
            Ok(())
        }
        (base_slot, patch_val) => {
            *base_slot = patch_val.clone();
            Ok(())
        }
    }
}

/// Apply one `key=value` override. The dotted path must lead to an
/// existing entry; the value is parsed as JSON first and falls back to
/// a plain string so `--set topology.kind=chain` works unquoted.
pub fn apply_set(config: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw_value) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!("--set '{spec}' is not of the form key=value"))
    })?;
    if key.is_empty() {
        return Err(CliError::Config(format!("--set '{spec}' has an empty key")));
    }
    let value: Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| Value::String(raw_value.to_string()));

    let mut slot = config;
    let mut walked = String::new();
    for part in key.split('.') {
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(part);
        slot = match slot {
            Value::Object(map) => map.get_mut(part).ok_or_else(|| {
                CliError::Config(format!("unknown config key '{walked}'"))
            })?,
            Value::Array(items) => {
                let index: usize = part.parse().map_err(|_| {
                    CliError::Config(format!(
                        "config key '{walked}' indexes an array but is not a number"
                    ))
                })?;
                items.get_mut(index).ok_or_else(|| {
                    CliError::Config(format!("config index '{walked}' is out of range"))
                })?
            }
            _ => {
                return Err(CliError::Config(format!(
                    "config key '{walked}' does not address an object or array"
                )))
            }
        };
    }
    *slot = value;
    Ok(())
}
