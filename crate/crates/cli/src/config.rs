use gwprune::{Mechanism, OffspringLaw};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("bad override '{0}': expected key=value")]
    Override(String),
    #[error("missing key '{0}'")]
    Missing(String),
    #[error("key '{key}': {msg}")]
    Invalid { key: String, msg: String },
    #[error(transparent)]
    Library(#[from] gwprune::Error),
}

type Result<T> = std::result::Result<T, ConfigError>;

fn invalid<T>(key: &str, msg: impl Into<String>) -> Result<T> {
    Err(ConfigError::Invalid { key: key.into(), msg: msg.into() })
}

/// Merged run configuration: the `--config` document with `key=value`
/// overrides applied on top.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    table: Table,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read { path: p.display().to_string(), source: e })?;
                parse_table(&text)?
            }
            None => Table::new(),
        };
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Override(o.clone()));
            }
            table.insert(k.to_string(), parse_value(v.trim()));
        }
        Ok(RunConfig { table })
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.table.insert(key.into(), v);
    }

    /// SHA-256 of the canonical (sorted-key) rendering of the configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(&self.table).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn str(&self, key: &str) -> Result<Option<String>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Ok(Some(v.to_string())),
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> Result<String> {
        Ok(self.str(key)?.unwrap_or_else(|| default.to_string()))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => invalid(key, "expected a number"),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn req_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => invalid(key, "expected a non-negative integer"),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.u64(key)?.unwrap_or(default))
    }

    pub fn req_u64(&self, key: &str) -> Result<u64> {
        self.u64(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    /// A number or a list of numbers.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => invalid(key, "expected a list of numbers"),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Ok(self.f64(key)?.map(|x| vec![x])),
        }
    }

    pub fn u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        match self.f64_list(key)? {
            None => Ok(None),
            Some(v) if v.iter().all(|x| *x >= 0.0 && x.fract() == 0.0) => Ok(Some(v.into_iter().map(|x| x as u64).collect())),
            Some(_) => invalid(key, "expected non-negative integers"),
        }
    }

    /// `mechanism` is a shortcut string (`u^2`, `u^1.5`, `u+u^2`, ...), an
    /// inline table of the mechanism file fields, or `mechanism_file`.
    pub fn mechanism(&self) -> Result<Mechanism> {
        if let Some(path) = self.str("mechanism_file")? {
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Read { path, source: e })?;
            return Ok(Mechanism::from_toml_str(&text)?);
        }
        match self.table.get("mechanism") {
            None => Err(ConfigError::Missing("mechanism".into())),
            Some(Value::String(s)) => mechanism_shortcut(s),
            Some(Value::Table(t)) => Ok(Mechanism::from_toml_str(&toml::to_string(t).unwrap_or_default())?),
            Some(_) => invalid("mechanism", "expected a string or a table"),
        }
    }

    /// Offspring law under `key`: `binary`, `dirac:<k>`, `poisson:<λ>`, a
    /// list of masses, or `<key>_file`.
    pub fn law(&self, key: &str) -> Result<Option<OffspringLaw>> {
        let file_key = format!("{key}_file");
        if let Some(path) = self.str(&file_key)? {
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Read { path, source: e })?;
            return Ok(Some(OffspringLaw::from_text(&text)?));
        }
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => law_shortcut(key, s).map(Some),
            Some(Value::Array(_)) => {
                let masses = self.f64_list(key)?.unwrap_or_default();
                Ok(Some(OffspringLaw::new(masses, "custom")?))
            }
            Some(_) => invalid(key, "expected a law name or a list of masses"),
        }
    }

    pub fn req_law(&self, key: &str) -> Result<OffspringLaw> {
        self.law(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }
}

fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| ConfigError::Syntax {
        line: e.span().map(|sp| text[..sp.start].lines().count().max(1)).unwrap_or(0),
        msg: e.message().to_string(),
    })
}

/// TOML value when `v` parses as one, otherwise the raw string.
fn parse_value(v: &str) -> Value {
    match format!("v = {v}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(v.into())),
        Err(_) => Value::String(v.into()),
    }
}

fn mechanism_shortcut(s: &str) -> Result<Mechanism> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let m = match compact.as_str() {
        "u^2" | "u²" => Mechanism::quadratic(0.0, 1.0)?,
        "u+u^2" | "u+u²" => Mechanism::quadratic(1.0, 1.0)?,
        "u^1.5" | "u^3/2" | "u^{3/2}" => Mechanism::stable(1.5, 1.0)?,
        other => match other.strip_prefix("u^").and_then(|a| a.parse::<f64>().ok()) {
            Some(a) => Mechanism::stable(a, 1.0)?,
            None => return invalid("mechanism", format!("unknown mechanism '{s}'")),
        },
    };
    Ok(m.with_label(compact))
}

fn law_shortcut(key: &str, s: &str) -> Result<OffspringLaw> {
    if s == "binary" {
        return Ok(OffspringLaw::binary());
    }
    if let Some(k) = s.strip_prefix("dirac:") {
        return match k.parse() {
            Ok(k) => Ok(OffspringLaw::dirac(k)),
            Err(_) => invalid(key, format!("bad dirac index '{k}'")),
        };
    }
    if let Some(l) = s.strip_prefix("poisson:") {
        return match l.parse() {
            Ok(l) => Ok(OffspringLaw::poisson(l)?),
            Err(_) => invalid(key, format!("bad poisson mean '{l}'")),
        };
    }
    invalid(key, format!("unknown law '{s}'"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win() {
        let c = RunConfig::load(None, &["n=100".into(), "mechanism=u^2".into(), "grid=[1, 2.5]".into()]).unwrap();
        assert_eq!(c.req_u64("n").unwrap(), 100);
        assert_eq!(c.f64_list("grid").unwrap().unwrap(), vec![1.0, 2.5]);
        assert_eq!(c.mechanism().unwrap().psi_eval(3.0).unwrap(), 9.0);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = parse_table("a = 1\nb = = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e}");
    }

    #[test]
    fn hash_is_order_independent() {
        let a = RunConfig::load(None, &["a=1".into(), "b=2".into()]).unwrap();
        let b = RunConfig::load(None, &["b=2".into(), "a=1".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn laws() {
        let c = RunConfig::load(None, &["xi=[0.5, 0, 0.5]".into(), "mu=\"dirac:2\"".into()]).unwrap();
        assert_eq!(c.req_law("xi").unwrap().p(2), 0.5);
        assert_eq!(c.req_law("mu").unwrap().p(2), 1.0);
        assert!(c.law("eta").unwrap().is_none());
    }
}
