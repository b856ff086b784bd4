//! Experiment configuration files.
//!
//! ```text
//! # comment
//! experiment = mckean-agreement
//! model = ../models/model_a.model
//! seed = 1
//! reps = 100000
//! xs = 0 1 2 3 4
//! ```
//!
//! One `key = value` per line; lists are whitespace separated. `model`,
//! `models` and `typed_model` paths are relative to the config file. `out`
//! is relative to the working directory. Every other key is an experiment
//! parameter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub out: PathBuf,
    /// Directory that relative model paths are resolved against.
    pub base_dir: PathBuf,
    pub params: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            out: PathBuf::from("out"),
            base_dir: PathBuf::from("."),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut experiment = None;
        let mut seed = None;
        let mut out = None;
        let mut params = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(err("empty key or value".into()));
            }
            match key {
                "experiment" => experiment = Some(value.to_string()),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| err(format!("bad seed '{value}'")))?),
                "out" => out = Some(PathBuf::from(value)),
                _ => {
                    if params.insert(key.to_string(), value.to_string()).is_some() {
                        return Err(err(format!("duplicate key '{key}'")));
                    }
                }
            }
        }
        Ok(Self {
            experiment: experiment.ok_or_else(|| Error::Config("missing 'experiment'".into()))?,
            seed: seed.ok_or_else(|| Error::Config("missing 'seed'".into()))?,
            out: out.unwrap_or_else(|| PathBuf::from("out")),
            base_dir: base_dir.into(),
            params,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Canonical text; parsing it back yields the same config.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "experiment = {}\nseed = {}\nout = {}\n",
            self.experiment,
            self.seed,
            self.out.display()
        );
        for (k, v) in &self.params {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    fn bad(&self, key: &str, what: &str) -> Error {
        Error::Config(format!(
            "parameter '{key}' of {}: expected {what}, got '{}'",
            self.experiment,
            self.raw(key).unwrap_or_default()
        ))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, "a number")),
        }
    }

    /// Accepts integral values written in float notation, such as `3e5`.
    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .ok()
                .or_else(|| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| *x >= 0.0 && x.fract() == 0.0 && *x < 1e15)
                        .map(|x| x as usize)
                })
                .ok_or_else(|| self.bad(key, "a nonnegative integer")),
        }
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| self.bad(key, "a list of numbers")))
                .collect(),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(_) => Err(self.bad(key, "true or false")),
        }
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Model named by `key`, read from disk.
    pub fn model(&self, key: &str) -> Result<ModelSpec> {
        let path = self
            .raw(key)
            .ok_or_else(|| Error::Config(format!("{} needs '{key}'", self.experiment)))?;
        ModelSpec::load(self.resolve(path))
    }

    /// Models listed under `models`, or the single `model`.
    pub fn models(&self) -> Result<Vec<ModelSpec>> {
        match self.raw("models") {
            Some(list) => list.split_whitespace().map(|p| ModelSpec::load(self.resolve(p))).collect(),
            None => Ok(vec![self.model("model")?]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = "# x\nexperiment = front-speed\nseed = 7\nreps = 3e5 # trailing\nxs = 0 1 2\n";
        let cfg = ExperimentConfig::parse(text, "/tmp").unwrap();
        assert_eq!(cfg.usize_or("reps", 0).unwrap(), 300_000);
        assert_eq!(cfg.list_or("xs", &[]).unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(cfg.f64_or("t", 3.0).unwrap(), 3.0);
        let again = ExperimentConfig::parse(&cfg.to_text(), "/tmp").unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ExperimentConfig::parse("experiment = x\nseed = 1\nbroken", "."),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(ExperimentConfig::parse("seed = 1", "."), Err(Error::Config(_))));
        let cfg = ExperimentConfig::parse("experiment = x\nseed = 1\nreps = 1.5\nmodel = nowhere.model", ".").unwrap();
        assert!(cfg.usize_or("reps", 0).is_err());
        match cfg.model("model") {
            Err(e) => assert!(e.to_string().contains("nowhere.model")),
            Ok(_) => panic!("missing model loaded"),
        }
    }
}
