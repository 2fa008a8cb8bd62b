use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_expr, MatrixField, ModelError, ModelSpec, VectorField};

/// Scenario-file model section: either a built-in
/// `{"builtin": name, "params": {...}}` or explicit expressions
/// `{"drift": [...], "diffusion": [[...], ...], "d": int, "m": int}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

pub const BUILTINS: [&str; 4] = ["ou", "double_well", "example22", "brownian"];

struct Params<'a> {
    map: &'a BTreeMap<String, Value>,
}

impl Params<'_> {
    fn number(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ModelError::config(format!("/params/{key}"), "expected a number")),
        }
    }

    fn dim(&self, default: usize) -> Result<usize, ModelError> {
        match self.map.get("d") {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .filter(|&d| d >= 1)
                .map(|d| d as usize)
                .ok_or_else(|| ModelError::config("/params/d", "expected a positive integer")),
        }
    }

    /// `sigma` is a scalar (s·I) or a d×m matrix.
    fn sigma(&self, d: usize, default: f64) -> Result<(usize, MatrixField), ModelError> {
        match self.map.get("sigma") {
            None => Ok((d, MatrixField::scaled_identity(d, default))),
            Some(Value::Number(n)) => {
                let s = n.as_f64().unwrap_or(f64::NAN);
                if !s.is_finite() {
                    return Err(ModelError::config("/params/sigma", "expected a finite number"));
                }
                Ok((d, MatrixField::scaled_identity(d, s)))
            }
            Some(Value::Array(rows)) => {
                if rows.len() != d {
                    return Err(ModelError::config(
                        "/params/sigma",
                        format!("expected {d} rows, got {}", rows.len()),
                    ));
                }
                let mut m = None;
                let mut data = Vec::new();
                for (i, row) in rows.iter().enumerate() {
                    let row = row.as_array().ok_or_else(|| {
                        ModelError::config(format!("/params/sigma/{i}"), "expected an array")
                    })?;
                    if *m.get_or_insert(row.len()) != row.len() || row.is_empty() {
                        return Err(ModelError::config(
                            format!("/params/sigma/{i}"),
                            "rows must be non-empty and of equal length",
                        ));
                    }
                    for (j, v) in row.iter().enumerate() {
                        data.push(v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                            ModelError::config(format!("/params/sigma/{i}/{j}"), "expected a number")
                        })?);
                    }
                }
                Ok((m.unwrap_or(d), MatrixField::Constant { data }))
            }
            Some(_) => Err(ModelError::config(
                "/params/sigma",
                "expected a number or a matrix",
            )),
        }
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), ModelError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ModelError::config(
                format!("/params/{k}"),
                format!("unknown parameter; allowed: {}", allowed.join(", ")),
            )),
            None => Ok(()),
        }
    }
}

impl ModelConfig {
    pub fn builtin(name: &str, params: Value) -> ModelConfig {
        let params = match params {
            Value::Object(m) => Some(m.into_iter().collect()),
            _ => None,
        };
        ModelConfig {
            builtin: Some(name.to_string()),
            params,
            ..Default::default()
        }
    }

    /// Builds the model. Error pointers are relative to this object.
    pub fn build(&self) -> Result<ModelSpec, ModelError> {
        match &self.builtin {
            Some(name) => {
                for (set, key) in [
                    (self.drift.is_some(), "/drift"),
                    (self.diffusion.is_some(), "/diffusion"),
                    (self.d.is_some(), "/d"),
                    (self.m.is_some(), "/m"),
                ] {
                    if set {
                        return Err(ModelError::config(
                            key,
                            "not allowed together with `builtin` (use params)",
                        ));
                    }
                }
                let empty = BTreeMap::new();
                let p = Params {
                    map: self.params.as_ref().unwrap_or(&empty),
                };
                let (d, drift, sigma_default, allowed): (usize, VectorField, f64, &[&str]) =
                    match name.as_str() {
                        "ou" => (p.dim(1)?, VectorField::Ou { k: p.number("K", 1.0)? }, 1.0, &["d", "K", "sigma"]),
                        "double_well" => (p.dim(1)?, VectorField::DoubleWell, 2f64.sqrt(), &["d", "sigma"]),
                        "example22" => (
                            p.dim(2)?,
                            VectorField::Example22 {
                                c0: p.number("c0", 1.0)?,
                                theta: p.number("theta", 1.0)?,
                                delta: p.number("delta", 0.0)?,
                            },
                            1.0,
                            &["d", "c0", "theta", "delta", "sigma"],
                        ),
                        "brownian" => (p.dim(1)?, VectorField::Zero, 1.0, &["d", "sigma"]),
                        other => {
                            return Err(ModelError::config(
                                "/builtin",
                                format!("unknown builtin `{other}`; known: {}", BUILTINS.join(", ")),
                            ))
                        }
                    };
                p.reject_unknown(allowed)?;
                let (m, sigma) = p.sigma(d, sigma_default)?;
                let label = self.name.clone().unwrap_or_else(|| name.clone());
                ModelSpec::new(label, d, m, drift, sigma)
            }
            None => {
                if self.params.is_some() {
                    return Err(ModelError::config("/params", "only allowed with `builtin`"));
                }
                let d = self.d.ok_or_else(|| ModelError::config("/d", "missing field"))?;
                let m = self.m.ok_or_else(|| ModelError::config("/m", "missing field"))?;
                let drift_src = self
                    .drift
                    .as_ref()
                    .ok_or_else(|| ModelError::config("/drift", "missing field (or `builtin`)"))?;
                let diff_src = self
                    .diffusion
                    .as_ref()
                    .ok_or_else(|| ModelError::config("/diffusion", "missing field"))?;
                if drift_src.len() != d {
                    return Err(ModelError::config(
                        "/drift",
                        format!("expected {d} components, got {}", drift_src.len()),
                    ));
                }
                let mut drift = Vec::with_capacity(d);
                for (i, s) in drift_src.iter().enumerate() {
                    drift.push(parse_expr(s, d).map_err(|e| {
                        ModelError::config(format!("/drift/{i}"), e.to_string())
                    })?);
                }
                if diff_src.len() != d {
                    return Err(ModelError::config(
                        "/diffusion",
                        format!("expected {d} rows, got {}", diff_src.len()),
                    ));
                }
                let mut entries = Vec::with_capacity(d * m);
                for (i, row) in diff_src.iter().enumerate() {
                    if row.len() != m {
                        return Err(ModelError::config(
                            format!("/diffusion/{i}"),
                            format!("expected {m} entries, got {}", row.len()),
                        ));
                    }
                    for (j, s) in row.iter().enumerate() {
                        entries.push(parse_expr(s, d).map_err(|e| {
                            ModelError::config(format!("/diffusion/{i}/{j}"), e.to_string())
                        })?);
                    }
                }
                let label = self.name.clone().unwrap_or_else(|| "custom".to_string());
                ModelSpec::new(label, d, m, VectorField::Expr(drift), MatrixField::Expr { entries })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(v: Value) -> Result<ModelSpec, ModelError> {
        serde_json::from_value::<ModelConfig>(v).unwrap().build()
    }

    #[test]
    fn builtin_scenarios() {
        let m = parse(json!({"builtin": "ou", "params": {"K": 2.0, "d": 3}})).unwrap();
        assert_eq!((m.d(), m.m()), (3, 3));
        assert_eq!(m.drift(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -0.0, 2.0]);
        let m = parse(json!({"builtin": "double_well"})).unwrap();
        assert_eq!(m.diffusion(&[0.3]).unwrap(), vec![2f64.sqrt()]);
        let m = parse(json!({"builtin": "example22", "params": {"sigma": [[1, 0, 0], [0, 1, 0]]}})).unwrap();
        assert_eq!((m.d(), m.m()), (2, 3));
    }

    #[test]
    fn expression_scenario() {
        let m = parse(json!({
            "drift": ["-(norm(x)^0.5)*x1", "-(norm(x)^0.5)*x2"],
            "diffusion": [["1", "0"], ["0", "1"]],
            "d": 2, "m": 2
        }))
        .unwrap();
        assert_eq!(m.drift(&[1.0, 0.0]).unwrap(), vec![-1.0, -0.0]);
    }

    fn pointer(r: Result<ModelSpec, ModelError>) -> String {
        match r {
            Err(ModelError::Config { pointer, .. }) => pointer,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_pointers() {
        assert_eq!(pointer(parse(json!({"builtin": "ou", "params": {"k": 1}}))), "/params/k");
        assert_eq!(pointer(parse(json!({"builtin": "nope"}))), "/builtin");
        assert_eq!(
            pointer(parse(json!({"drift": ["x1", "x3"], "diffusion": [["1"], ["1"]], "d": 2, "m": 1}))),
            "/drift/1"
        );
        assert_eq!(
            pointer(parse(json!({"drift": ["x1"], "diffusion": [["1", "2"]], "d": 1, "m": 1}))),
            "/diffusion/0"
        );
        assert_eq!(pointer(parse(json!({"drift": ["x1"], "d": 1, "m": 1}))), "/diffusion");
        assert!(serde_json::from_value::<ModelConfig>(json!({"builtin": "ou", "extra": 1})).is_err());
    }
}
