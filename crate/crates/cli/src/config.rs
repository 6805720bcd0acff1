//! Experiment configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Every knob an experiment reads. Unset fields fall back to per-command
/// defaults; the canonical JSON echo heads every output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: String,
    pub graph: Option<String>,
    pub mu: Option<f64>,
    pub mus: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub v: Option<usize>,
    pub vs: Option<Vec<usize>>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub ls: Option<Vec<usize>>,
    pub ns: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub cap: Option<u64>,
    pub output: Option<PathBuf>,
    /// Settling set `A` as site ids.
    pub a: Option<Vec<u32>>,
    /// Comparison set `B` as site ids.
    pub b: Option<Vec<u32>>,
    /// Particle counts for every site.
    pub eta: Option<Vec<u32>>,
    /// Doubled odometers for every site.
    pub h2: Option<Vec<u64>>,
    /// Probe site by coordinates.
    pub site: Option<Vec<i32>>,
    /// Ghost-probe interior margin.
    pub r: Option<usize>,
    pub steps: Option<usize>,
    /// Constant in the lower bound on the two-dimensional escape probability.
    pub k_upsilon: Option<f64>,
    pub pbar: Option<f64>,
    pub fast: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("parsing experiment config")
    }

    /// Canonical single-line JSON; parsing it gives back the same config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Overlays every field set in `other`.
    pub fn overlay(&mut self, other: Overrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(graph, mu, mus, lambda, v, vs, beta, alpha, ls, ns, trials, cap, output, r, steps);
        if let Some(seed) = other.seed {
            self.seed = seed;
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub graph: Option<String>,
    pub mu: Option<f64>,
    pub mus: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub v: Option<usize>,
    pub vs: Option<Vec<usize>>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub ls: Option<Vec<usize>>,
    pub ns: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub cap: Option<u64>,
    pub output: Option<PathBuf>,
    pub r: Option<usize>,
    pub steps: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_echo_round_trips() {
        let cfg = ExperimentConfig {
            subcommand: "weak-probe".into(),
            graph: Some("box:L=8,d=1".into()),
            mus: Some(vec![0.1, 0.5]),
            seed: 7,
            ..Default::default()
        };
        let again = ExperimentConfig::from_json(&cfg.canonical_json()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical_json(), cfg.canonical_json());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::from_json(r#"{"subcommand":"x","mu":0.5,"seed":3}"#).unwrap();
        cfg.overlay(Overrides { mu: Some(0.9), ..Default::default() });
        assert_eq!((cfg.mu, cfg.seed), (Some(0.9), 3));
        assert!(ExperimentConfig::from_json(r#"{"bogus":1}"#).is_err());
    }
}
