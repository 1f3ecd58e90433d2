//! Flat `key=value` documents (a JSON object is accepted too).

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use modsel_core::{Method, TieBreaker};

/// Bad input: config, data files or schemas. Exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self { line: None, msg: msg.into() }
    }

    pub fn at(line: usize, msg: impl Into<String>) -> Self {
        Self { line: Some(line), msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.msg),
            None => f.write_str(&self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Broken internal invariant. Exit code 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantError(pub String);

impl fmt::Display for InvariantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantError {}

pub type CfgResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug)]
pub struct ConfigDoc {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> CfgResult<Self> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_flat(text)
        }
    }

    fn insert(entries: &mut BTreeMap<String, Entry>, key: String, value: String, line: usize) -> CfgResult<()> {
        if key.is_empty() {
            return Err(ConfigError::at(line, "empty key"));
        }
        if entries.contains_key(&key) {
            return Err(ConfigError::at(line, format!("duplicate key {key:?}")));
        }
        entries.insert(key, Entry { value, line });
        Ok(())
    }

    fn parse_flat(text: &str) -> CfgResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected key=value, got {t:?}")))?;
            Self::insert(&mut entries, k.trim().to_string(), v.trim().to_string(), line)?;
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    fn parse_json(text: &str) -> CfgResult<Self> {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ConfigError::at(e.line(), format!("invalid JSON: {e}")))?;
        let obj = v.as_object().ok_or_else(|| ConfigError::at(1, "expected a JSON object"))?;
        let mut entries = BTreeMap::new();
        for (k, val) in obj {
            let needle = format!("\"{k}\"");
            let line = text
                .lines()
                .position(|l| l.contains(&needle))
                .map_or(1, |p| p + 1);
            let s = match val {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Array(a) => a
                    .iter()
                    .map(|x| x.as_str().map_or_else(|| x.to_string(), str::to_string))
                    .collect::<Vec<_>>()
                    .join(","),
                other => return Err(ConfigError::at(line, format!("unsupported value for {k:?}: {other}"))),
            };
            Self::insert(&mut entries, k.clone(), s, line)?;
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    pub fn raw(&self, key: &str) -> Option<(&str, usize)> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some((e.value.as_str(), e.line))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CfgResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError::at(line, format!("bad value {v:?} for {key}: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CfgResult<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CfgResult<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::new(format!("missing required key {key:?}")))
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    /// Rejects keys nobody asked for.
    pub fn finish(&self) -> CfgResult<()> {
        let used = self.used.borrow();
        match self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            Some((k, e)) => Err(ConfigError::at(e.line, format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err("expected csv or json".into()),
        }
    }
}

/// Settings shared by `simulate` and `predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub tie_break: TieBreaker,
    pub n1: Option<usize>,
    pub split_model: usize,
    pub format: OutputFormat,
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    if s.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let ms = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    if ms.is_empty() {
        return Err("empty method list".into());
    }
    Ok(ms)
}

impl RunConfig {
    pub fn from_doc(doc: &ConfigDoc) -> CfgResult<Self> {
        let methods = match doc.raw("methods") {
            None => Method::ALL.to_vec(),
            Some((v, line)) => parse_methods(v).map_err(|e| ConfigError::at(line, e))?,
        };
        let alpha: f64 = doc.get_or("alpha", 0.1)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConfigError::at(doc.line_of("alpha").unwrap_or(1), format!("alpha {alpha} outside (0,1)")));
        }
        Ok(Self {
            methods,
            alpha,
            tie_break: doc.get_or("tie_break", TieBreaker::MinIndex)?,
            n1: doc.get("n1")?,
            split_model: doc.get_or("split_model", 0)?,
            format: doc.get_or("format", OutputFormat::Csv)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_agree() {
        let a = ConfigDoc::parse("# comment\nalpha = 0.2\nmethods=split,modsel_cp\n").unwrap();
        let b = ConfigDoc::parse("{\"alpha\": 0.2, \"methods\": [\"split\", \"modsel_cp\"]}").unwrap();
        let ra = RunConfig::from_doc(&a).unwrap();
        let rb = RunConfig::from_doc(&b).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.methods, vec![Method::Split, Method::ModselCp]);
    }

    #[test]
    fn errors_carry_lines() {
        let e = ConfigDoc::parse("alpha=0.1\nbogus line\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let d = ConfigDoc::parse("alpha=0.1\n\nmethods=split,nope\n").unwrap();
        assert_eq!(RunConfig::from_doc(&d).unwrap_err().line, Some(3));
        let d = ConfigDoc::parse("alpha=0.1\nextra=1\n").unwrap();
        RunConfig::from_doc(&d).unwrap();
        assert_eq!(d.finish().unwrap_err().line, Some(2));
        assert!(ConfigDoc::parse("a=1\na=2").is_err());
    }

    #[test]
    fn alpha_range() {
        let d = ConfigDoc::parse("alpha=1.5").unwrap();
        assert!(RunConfig::from_doc(&d).is_err());
    }
}
