//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, lists are comma separated and
//! numbers may be written as powers such as `2^-11`. A run manifest
//! (`meta.json`) is accepted in place of a config file.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let mut entries = BTreeMap::new();
        let mut problems = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`, got `{line}`", lineno + 1));
                continue;
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                problems.push(format!("line {}: empty key", lineno + 1));
            } else if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                problems.push(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }
        if problems.is_empty() {
            Ok(Self { entries })
        } else {
            Err(problems)
        }
    }

    /// The `config` object of a run manifest.
    pub fn from_manifest(json: &str) -> Result<Self, Vec<String>> {
        let value: serde_json::Value = serde_json::from_str(json).map_err(|e| vec![format!("manifest: {e}")])?;
        let Some(config) = value.get("config").and_then(|c| c.as_object()) else {
            return Err(vec!["manifest has no `config` object".into()]);
        };
        let mut entries = BTreeMap::new();
        for (k, v) in config {
            match v.as_str() {
                Some(s) => {
                    entries.insert(k.clone(), s.to_string());
                }
                None => return Err(vec![format!("manifest entry `{k}` is not a string")]),
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_manifest(&text)
        } else {
            Self::parse(&text)
        }
    }
}

/// Parses a real number, accepting `a^b` powers.
pub fn parse_number(token: &str) -> Result<f64, String> {
    let token = token.trim();
    let parsed = match token.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| format!("invalid number `{token}`"))?;
            let exp: f64 = exp.trim().parse().map_err(|_| format!("invalid number `{token}`"))?;
            base.powf(exp)
        }
        None => token.parse().map_err(|_| format!("invalid number `{token}`"))?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(format!("invalid number `{token}`"))
    }
}

pub fn parse_list(value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(parse_number).collect()
}

/// Typed access to a [`ConfigFile`] that collects every problem and records
/// which keys were consumed.
pub struct Reader<'a> {
    file: &'a ConfigFile,
    used: RefCell<BTreeSet<String>>,
    problems: RefCell<Vec<String>>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl<'a> Reader<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            used: RefCell::default(),
            problems: RefCell::default(),
            resolved: RefCell::default(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().insert(key.to_string());
        self.file.entries.get(key).map(String::as_str)
    }

    pub fn problem(&self, message: impl Into<String>) {
        self.problems.borrow_mut().push(message.into());
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn typed<T>(&self, key: &str, default: Option<T>, parse: impl Fn(&str) -> Result<T, String>, show: impl Fn(&T) -> String) -> Option<T> {
        let value = match self.raw(key) {
            Some(text) => match parse(text) {
                Ok(v) => Some(v),
                Err(e) => {
                    self.problem(format!("{key}: {e}"));
                    return None;
                }
            },
            None if default.is_none() => {
                self.problem(format!("missing required key `{key}`"));
                None
            }
            None => default,
        };
        if let Some(v) = &value {
            self.record(key, show(v));
        }
        value
    }

    pub fn number(&self, key: &str, default: Option<f64>) -> Option<f64> {
        self.typed(key, default, parse_number, |v| format!("{v:?}"))
    }

    pub fn numbers(&self, key: &str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        self.typed(key, default, parse_list, |v| join(v))
    }

    pub fn count(&self, key: &str, default: Option<u64>) -> Option<u64> {
        let parse = |s: &str| {
            let x = parse_number(s)?;
            if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
                Ok(x as u64)
            } else {
                Err(format!("expected a non-negative integer, got `{s}`"))
            }
        };
        self.typed(key, default, parse, |v| v.to_string())
    }

    pub fn counts(&self, key: &str, default: Option<Vec<u64>>) -> Option<Vec<u64>> {
        let parse = |s: &str| {
            s.split(',')
                .map(|t| {
                    let x = parse_number(t)?;
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as u64)
                    } else {
                        Err(format!("expected non-negative integers, got `{t}`"))
                    }
                })
                .collect::<Result<Vec<u64>, String>>()
        };
        self.typed(key, default, parse, |v| v.iter().map(u64::to_string).collect::<Vec<_>>().join(", "))
    }

    pub fn flag(&self, key: &str, default: bool) -> bool {
        let parse = |s: &str| match s {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("expected true or false, got `{s}`")),
        };
        self.typed(key, Some(default), parse, |v| v.to_string()).unwrap_or(default)
    }

    pub fn text(&self, key: &str, default: Option<&str>) -> Option<String> {
        self.typed(key, default.map(str::to_string), |s| Ok(s.to_string()), Clone::clone)
    }

    /// Present keys only; absent ones are not recorded.
    pub fn optional_text(&self, key: &str) -> Option<String> {
        let value = self.raw(key).map(str::to_string);
        if let Some(v) = &value {
            self.record(key, v.clone());
        }
        value
    }

    /// Key-value pairs as resolved, defaults included.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }

    /// All problems, including keys that no accessor asked for.
    pub fn finish(&self) -> Result<(), Vec<String>> {
        let used = self.used.borrow();
        let mut problems = self.problems.borrow().clone();
        for key in self.file.entries.keys() {
            if !used.contains(key) {
                problems.push(format!("unknown key `{key}`"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// Comma-separated list in round-trip form.
pub fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_powers() {
        let file = ConfigFile::parse("# header\ndrift = example2  # trailing\nmeshes = 2^-5, 2^-6,0.25\n\nmc_paths = 10\n").unwrap();
        let r = Reader::new(&file);
        assert_eq!(r.text("drift", None).unwrap(), "example2");
        assert_eq!(r.numbers("meshes", None).unwrap(), vec![1.0 / 32.0, 1.0 / 64.0, 0.25]);
        assert_eq!(r.count("mc_paths", None), Some(10));
        assert_eq!(r.count("seed", Some(0)), Some(0));
        assert!(r.finish().is_ok());
        assert_eq!(r.resolved()["seed"], "0");
        assert_eq!(r.resolved()["meshes"], "0.03125, 0.015625, 0.25");
    }

    #[test]
    fn problems_are_collected() {
        let file = ConfigFile::parse("a = 1\nb = x\nc = 2\n").unwrap();
        let r = Reader::new(&file);
        r.number("a", None);
        r.number("b", None);
        r.number("missing", None);
        let problems = r.finish().unwrap_err();
        assert_eq!(problems.len(), 3, "{problems:?}");
    }

    #[test]
    fn malformed_lines_and_duplicates() {
        assert_eq!(ConfigFile::parse("just words\na = 1\na = 2\n").unwrap_err().len(), 2);
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("2^-11").unwrap(), 2f64.powi(-11));
        assert_eq!(parse_number(" 1e-3 ").unwrap(), 1e-3);
        assert!(parse_number("2^x").is_err());
        assert!(parse_number("inf").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let file = ConfigFile::from_manifest(r#"{"config": {"drift": "example2", "seed": "4"}}"#).unwrap();
        let r = Reader::new(&file);
        assert_eq!(r.count("seed", None), Some(4));
        assert!(ConfigFile::from_manifest(r#"{"config": {"seed": 4}}"#).is_err());
    }
}
