use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Flat `key=value` overrides with typed lookups. Every key must be read by
/// the experiment; leftovers are reported by [`Overrides::finish`].
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Overrides {
    pub fn new(values: BTreeMap<String, String>) -> Self {
        Overrides {
            values,
            used: BTreeSet::new(),
        }
    }

    /// Parses `key=value` pairs; a repeated key keeps the last value.
    pub fn parse<S: AsRef<str>>(pairs: &[S]) -> CliResult<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("override '{p}' is not of the form key=value")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CliError::Validation(format!("override '{p}' has an empty key")));
            }
            out.insert(k.to_string(), v.trim().to_string());
        }
        Ok(out)
    }

    fn raw(&mut self, key: &str) -> Option<&str> {
        self.used.insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&mut self, key: &str, default: T) -> CliResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Validation(format!("cannot parse {key}={v}"))),
        }
    }

    pub fn get_f64(&mut self, key: &str, default: f64) -> CliResult<f64> {
        let v: f64 = self.get(key, default)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Validation(format!("{key} must be finite")))
        }
    }

    pub fn get_positive(&mut self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.get_f64(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(CliError::Validation(format!("{key} must be positive, got {v}")))
        }
    }

    pub fn get_nonnegative(&mut self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.get_f64(key, default)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(CliError::Validation(format!("{key} must be non-negative, got {v}")))
        }
    }

    /// Comma-separated list, e.g. `steps=20,40,80`.
    pub fn get_list<T: FromStr + Clone>(&mut self, key: &str, default: &[T]) -> CliResult<Vec<T>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Validation(format!("cannot parse '{s}' in {key}={v}")))
                })
                .collect(),
        }
    }

    /// Fails on keys that no lookup asked for.
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("unknown override(s): {}", unknown.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_lookups_and_leftovers() {
        let map = Overrides::parse(&["steps=10,20", "lambda=0.5", "bogus=1"]).unwrap();
        let mut o = Overrides::new(map);
        assert_eq!(o.get_list::<usize>("steps", &[1]).unwrap(), vec![10, 20]);
        assert_eq!(o.get_positive("lambda", 1.0).unwrap(), 0.5);
        assert_eq!(o.get_f64("r", 3.0).unwrap(), 3.0);
        assert!(o.finish().is_err());
        o.get::<u32>("bogus", 0).unwrap();
        assert!(o.finish().is_ok());
    }

    #[test]
    fn malformed_pairs_are_rejected() {
        assert!(Overrides::parse(&["novalue"]).is_err());
        assert!(Overrides::parse(&["=3"]).is_err());
        let mut o = Overrides::new(Overrides::parse(&["lambda=-1"]).unwrap());
        assert!(o.get_positive("lambda", 1.0).is_err());
        let mut o = Overrides::new(Overrides::parse(&["lambda=abc"]).unwrap());
        assert!(o.get_f64("lambda", 1.0).is_err());
    }
}
