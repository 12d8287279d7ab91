//! Experiment configuration files.
//!
//! A config is a TOML document with three top-level keys:
//!
//! ```toml
//! experiment = "free-gaussian"
//! seed = 1
//!
//! [params]
//! ensemble_size = 10000
//! ```
//!
//! `params` is merged over the experiment's defaults, so a file only needs the
//! values it changes. Keys that the experiment does not define are rejected.
//! Overrides of the form `key=value` address either `seed` or a (dotted)
//! parameter path such as `pointer_width` or `setup.up_probability`.

use serde::Serialize;
use toml::{Table, Value};

use crate::catalog::ExperimentKind;
use crate::error::RunnerError;
use crate::experiments::Params;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: kind,
            seed: 1,
            params: Params::defaults(kind),
        }
    }

    /// Parses `text`, merges it over the defaults, applies `overrides` and
    /// `seed`, then validates the result.
    pub fn load(text: &str, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self, RunnerError> {
        let doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| RunnerError::ConfigParse(e.to_string()))?;
        for key in doc.keys() {
            if !matches!(key.as_str(), "experiment" | "seed" | "params") {
                return Err(RunnerError::ConfigParse(format!("unknown key `{key}`")));
            }
        }
        let kind: ExperimentKind = match doc.get("experiment") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| RunnerError::ConfigParse(format!("experiment: {}", e.message())))?,
            None => return Err(RunnerError::ConfigParse("missing key `experiment`".into())),
        };
        let mut resolved = ExperimentConfig::defaults(kind).to_table()?;
        if let Some(s) = doc.get("seed") {
            merge_value(&mut resolved, "seed", s.clone())?;
        }
        if let Some(p) = doc.get("params") {
            merge_value(&mut resolved, "params", p.clone())?;
        }
        for (key, raw) in overrides {
            let path = if key == "seed" || key.starts_with("params.") {
                key.clone()
            } else {
                format!("params.{key}")
            };
            merge_value(&mut resolved, &path, parse_literal(raw))?;
        }
        if let Some(s) = seed {
            resolved.insert("seed".into(), Value::Integer(s as i64));
        }
        let cfg = Self::from_table(kind, resolved)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        self.params.validate()
    }

    /// Full resolved configuration as TOML text.
    pub fn to_toml(&self) -> Result<String, RunnerError> {
        toml::to_string(self).map_err(|e| RunnerError::ConfigParse(e.to_string()))
    }

    fn to_table(&self) -> Result<Table, RunnerError> {
        Table::try_from(self).map_err(|e| RunnerError::ConfigParse(e.to_string()))
    }

    fn from_table(kind: ExperimentKind, mut t: Table) -> Result<Self, RunnerError> {
        let seed = match t.remove("seed") {
            Some(Value::Integer(s)) if s >= 0 => s as u64,
            other => {
                return Err(RunnerError::ConfigParse(format!(
                    "seed: expected a non-negative integer, found {other:?}"
                )))
            }
        };
        let params = t.remove("params").unwrap_or_else(|| Value::Table(Table::new()));
        Ok(ExperimentConfig {
            experiment: kind,
            seed,
            params: Params::from_value(kind, params)?,
        })
    }
}

/// `value` as a TOML literal when it parses as one, otherwise as a string.
fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Writes `value` at the dotted `path` of `base`; every segment must already
/// exist. Tables merge key by key, and an integer may stand in for a float.
fn merge_value(base: &mut Table, path: &str, value: Value) -> Result<(), RunnerError> {
    let mut segments = path.split('.').peekable();
    let mut table = base;
    let mut walked = String::new();
    while let Some(seg) = segments.next() {
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(seg);
        let Some(slot) = table.get_mut(seg) else {
            return Err(RunnerError::ConfigParse(format!("unknown key `{walked}`")));
        };
        if segments.peek().is_none() {
            return merge_into(slot, value, &walked);
        }
        match slot {
            Value::Table(t) => table = t,
            _ => return Err(RunnerError::ConfigParse(format!("`{walked}` is not a table"))),
        }
    }
    Ok(())
}

fn merge_into(slot: &mut Value, value: Value, path: &str) -> Result<(), RunnerError> {
    match (slot, value) {
        (Value::Table(dst), Value::Table(src)) => {
            for (k, v) in src {
                let sub = format!("{path}.{k}");
                let Some(d) = dst.get_mut(&k) else {
                    return Err(RunnerError::ConfigParse(format!("unknown key `{sub}`")));
                };
                merge_into(d, v, &sub)?;
            }
            Ok(())
        }
        (Value::Table(_), _) => Err(RunnerError::ConfigParse(format!("`{path}` must be a table"))),
        (Value::Array(dst), Value::Array(src)) => {
            let template = dst.first().cloned();
            *dst = src
                .into_iter()
                .map(|v| match (&template, v) {
                    (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(i as f64),
                    (_, v) => v,
                })
                .collect();
            Ok(())
        }
        (d @ Value::Float(_), Value::Integer(i)) => {
            *d = Value::Float(i as f64);
            Ok(())
        }
        (d, v) => {
            *d = v;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::load(
            "experiment = \"free-gaussian\"\n[params]\nensemble_size = 500\n",
            &[],
            None,
        )
        .unwrap();
        let Params::FreeGaussian(p) = &cfg.params else { panic!() };
        assert_eq!(p.ensemble_size, 500);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::load(
            "experiment = \"free-gaussian\"\n[params]\nensemble_sise = 5\n",
            &[],
            None,
        )
        .unwrap_err();
        assert!(e.to_string().contains("params.ensemble_sise"), "{e}");
        let e = ExperimentConfig::load("experiment = \"relaxation\"\nextra = 1\n", &[], None).unwrap_err();
        assert!(e.to_string().contains("extra"));
        let e =
            ExperimentConfig::load("experiment = \"free-gaussian\"", &[("nope".into(), "1".into())], None).unwrap_err();
        assert!(e.to_string().contains("params.nope"));
    }

    #[test]
    fn overrides_and_seed() {
        let o = vec![
            ("dt".to_string(), "1".to_string()),
            ("seed".to_string(), "9".to_string()),
        ];
        let cfg = ExperimentConfig::load("experiment = \"free-gaussian\"", &o, None).unwrap();
        let Params::FreeGaussian(p) = &cfg.params else { panic!() };
        assert_eq!(p.dt, 1.0);
        assert_eq!(cfg.seed, 9);
        let cfg = ExperimentConfig::load("experiment = \"free-gaussian\"", &o, Some(4)).unwrap();
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn nonpositive_dt_names_the_field() {
        let e = ExperimentConfig::load("experiment = \"free-gaussian\"\n[params]\ndt = -0.1\n", &[], None).unwrap_err();
        assert!(matches!(e, RunnerError::Validation(_)));
        assert!(e.to_string().contains("dt"));
    }

    #[test]
    fn resolved_config_round_trips() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::defaults(kind);
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::load(&text, &[], None).unwrap(), cfg, "{kind:?}");
        }
    }

    #[test]
    fn bad_syntax_is_a_parse_error() {
        assert!(matches!(
            ExperimentConfig::load("experiment = ", &[], None),
            Err(RunnerError::ConfigParse(_))
        ));
        assert!(matches!(
            ExperimentConfig::load("experiment = \"warp-drive\"", &[], None),
            Err(RunnerError::ConfigParse(_))
        ));
    }
}
