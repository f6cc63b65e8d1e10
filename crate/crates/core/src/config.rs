//! Flat sectioned text configuration.
//!
//! ```text
//! # comment
//! [model]
//! alpha = 2
//! beta = 3
//! mu = 1
//! nu = 1
//! gamma = 1
//! rho_bar = 1
//! pressure = power:1,1
//! ```
//!
//! Pressure values: `power:c,g`, `affine:c[,offset]`,
//! `table:rho1:p1;rho2:p2;...`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelParams, PressureLaw};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

const MODEL_KEYS: [&str; 7] = ["alpha", "beta", "mu", "nu", "gamma", "rho_bar", "pressure"];

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    message: format!("unterminated section header `{content}`"),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::Config { line, message: "empty section name".into() });
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config { line, message: "empty key".into() });
            }
            let section = current.as_ref().ok_or_else(|| Error::Config {
                line,
                message: format!("key `{key}` appears before any [section]"),
            })?;
            if section == "model" && !MODEL_KEYS.contains(&key) {
                return Err(Error::Config { line, message: format!("unknown model key `{key}`") });
            }
            let entries = sections.get_mut(section).expect("section inserted on header");
            if let Some(prev) = entries.get(key) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
            entries.insert(key.to_string(), Entry { value: value.to_string(), line });
        }
        Ok(Self { sections })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|e| e.value.as_str())
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        let Some(entry) = self.sections.get(section).and_then(|s| s.get(key)) else {
            return Ok(None);
        };
        entry.value.parse::<f64>().map(Some).map_err(|_| Error::Config {
            line: entry.line,
            message: format!("`{key}` expects a number, found `{}`", entry.value),
        })
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        let Some(entry) = self.sections.get(section).and_then(|s| s.get(key)) else {
            return Ok(None);
        };
        entry.value.parse::<usize>().map(Some).map_err(|_| Error::Config {
            line: entry.line,
            message: format!("`{key}` expects a non-negative integer, found `{}`", entry.value),
        })
    }

    /// Builds [`ModelParams`] from the `[model]` section. Every numeric key is
    /// required; `pressure` defaults to `power:1,1`.
    pub fn model_params(&self) -> Result<ModelParams> {
        let section = self.sections.get("model").ok_or(Error::Config {
            line: 0,
            message: "missing [model] section".into(),
        })?;
        let required = |key: &'static str| -> Result<f64> {
            match self.get_f64("model", key)? {
                Some(v) => Ok(v),
                None => Err(Error::Config { line: 0, message: format!("[model] is missing `{key}`") }),
            }
        };
        let pressure = match section.get("pressure") {
            Some(entry) => parse_pressure(&entry.value).map_err(|e| Error::Config {
                line: entry.line,
                message: e.to_string(),
            })?,
            None => PressureLaw::default(),
        };
        let params = ModelParams {
            alpha: required("alpha")?,
            beta: required("beta")?,
            mu: required("mu")?,
            nu: required("nu")?,
            gamma: required("gamma")?,
            rho_bar: required("rho_bar")?,
            pressure,
        };
        params.validate().map_err(|e| {
            let line = match &e {
                Error::InvalidParameter { name, .. } => section.get(*name).map_or(0, |x| x.line),
                _ => section.get("pressure").map_or(0, |x| x.line),
            };
            Error::Config { line, message: e.to_string() }
        })?;
        Ok(params)
    }
}

pub fn parse_pressure(spec: &str) -> Result<PressureLaw> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidPressure(format!("expected `kind:args`, found `{spec}`")))?;
    let numbers = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidPressure(format!("bad number `{t}`")))
            })
            .collect()
    };
    match kind.trim() {
        "power" => match numbers(rest)?.as_slice() {
            [c, g] => PressureLaw::power(*c, *g),
            _ => Err(Error::InvalidPressure("power expects `power:c,g`".into())),
        },
        "affine" => match numbers(rest)?.as_slice() {
            [c] => PressureLaw::affine(*c, 0.0),
            [c, off] => PressureLaw::affine(*c, *off),
            _ => Err(Error::InvalidPressure("affine expects `affine:c[,offset]`".into())),
        },
        "table" => {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for pair in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                let (x, y) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidPressure(format!("bad table pair `{pair}`")))?;
                let parse = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidPressure(format!("bad number `{t}`")))
                };
                xs.push(parse(x)?);
                ys.push(parse(y)?);
            }
            PressureLaw::table(xs, ys)
        }
        other => Err(Error::InvalidPressure(format!("unknown pressure kind `{other}`"))),
    }
}
