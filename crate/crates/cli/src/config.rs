//! JSON run configuration with command-line overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use weylab::models::{FlowModel, ModelDescriptor};
use weylab::weyl::geometric_grid;

use crate::error::{CliError, Result};

/// Required ordering of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    root: Map<String, Value>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        match serde_json::from_str(text).map_err(|e| e.to_string())? {
            Value::Object(root) => Ok(Self { root }),
            _ => Err("top level must be a JSON object".into()),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.root.insert(key.to_string(), value);
    }

    pub fn value(&self) -> Value {
        Value::Object(self.root.clone())
    }

    /// SHA-256 of the key-sorted compact JSON, so field order is irrelevant.
    pub fn hash(&self) -> String {
        sha256_hex(self.value().to_string().as_bytes())
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.root.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::field(key, e)),
        }
    }

    pub fn require<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| CliError::field(key, "missing"))
    }

    pub fn get_or<T: DeserializeOwned>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Deserializes the whole object, e.g. for internally tagged enums.
    pub fn whole<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.value()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<FlowModel> {
        let d: ModelDescriptor = self.require("model")?;
        FlowModel::from_descriptor(&d).map_err(|e| CliError::field("model", e))
    }

    pub fn seed(&self) -> Result<u64> {
        self.require("seed")
    }

    pub fn has(&self, key: &str) -> bool {
        self.root.get(key).is_some_and(|v| !v.is_null())
    }

    /// A grid given as a number, an array of numbers, or a string: a single
    /// number, a comma-separated list, or `start:stop:geom:count` /
    /// `start:stop:lin:count`.
    pub fn grid(&self, key: &str, order: Order) -> Result<Vec<f64>> {
        let v = self.root.get(key).ok_or_else(|| CliError::field(key, "missing"))?;
        let values = parse_grid(v).map_err(|e| CliError::field(key, e))?;
        check_grid(&values, order).map_err(|e| CliError::field(key, e))?;
        Ok(values)
    }
}

fn parse_grid(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Number(n) => Ok(vec![n.as_f64().ok_or("not a number")?]),
        Value::Array(a) => a
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| format!("non-numeric entry {x}")))
            .collect(),
        Value::String(s) => parse_grid_str(s),
        other => Err(format!("expected a grid, got {other}")),
    }
}

fn parse_grid_str(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, kind, count] => {
            let (start, stop) = (num(start)?, num(stop)?);
            let count: usize = count.trim().parse().map_err(|_| format!("bad count `{count}`"))?;
            if count == 0 {
                return Err("grid is empty".into());
            }
            match kind.trim() {
                "geom" => geometric_grid(start, stop, count).map_err(|e| e.to_string()),
                "lin" if count == 1 => Ok(vec![start]),
                "lin" => Ok((0..count)
                    .map(|i| {
                        if i == count - 1 {
                            stop
                        } else {
                            start + (stop - start) * i as f64 / (count - 1) as f64
                        }
                    })
                    .collect()),
                other => Err(format!("unknown spacing `{other}` (use geom or lin)")),
            }
        }
        [single] if single.trim().is_empty() => Err("grid is empty".into()),
        [single] => single.split(',').map(num).collect(),
        _ => Err(format!("cannot parse grid `{s}`")),
    }
}

fn check_grid(values: &[f64], order: Order) -> Result<(), String> {
    if values.is_empty() {
        return Err("grid is empty".into());
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err("grid has non-finite entries".into());
    }
    let sorted = values.windows(2).all(|w| match order {
        Order::Increasing => w[0] < w[1],
        Order::Decreasing => w[0] > w[1],
    });
    if !sorted {
        return Err(match order {
            Order::Increasing => "grid must be strictly increasing".into(),
            Order::Decreasing => "grid must be strictly decreasing".into(),
        });
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        let geom = parse_grid_str("1:100:geom:3").unwrap();
        assert_eq!(geom.len(), 3);
        for (g, want) in geom.iter().zip([1.0, 10.0, 100.0]) {
            assert!((g / want - 1.0).abs() < 1e-14);
        }
        assert_eq!(parse_grid_str("0:1:lin:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid_str("0.1,0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_grid_str("1e-4").unwrap(), vec![1e-4]);
        assert!(parse_grid_str("1:2:geom:0").is_err());
        assert!(parse_grid_str("1:2:log:3").is_err());
        assert!(parse_grid_str("").is_err());
        assert!(check_grid(&[2.0, 1.0], Order::Increasing).is_err());
        assert!(check_grid(&[2.0, 1.0], Order::Decreasing).is_ok());
        assert!(check_grid(&[], Order::Increasing).is_err());
    }

    #[test]
    fn hash_ignores_field_order() {
        let a = Config::parse(r#"{"a": 1, "b": {"x": [1, 2], "y": 0.0001}}"#).unwrap();
        let b = Config::parse(r#"{"b": {"y": 1e-4, "x": [1, 2]}, "a": 1}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Config::parse(r#"{"a": 2, "b": {"x": [1, 2], "y": 0.0001}}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
