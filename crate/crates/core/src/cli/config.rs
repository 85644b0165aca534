//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//!
//! | key                  | default  | meaning                                        |
//! |----------------------|----------|------------------------------------------------|
//! | `duration`           | 9000     | simulated seconds                              |
//! | `nodes`              | 10000    | initial network size `N`                       |
//! | `initial_clique`     | 5        | `N0`                                           |
//! | `links_per_node`     | 3        | `m`                                            |
//! | `churn_rate`         | 0.14     | join and leave rate each, 1/s                  |
//! | `query_rate`         | 36       | queries per second                             |
//! | `scale_rates`        | false    | rates are quoted for 10000 nodes, scale to `N` |
//! | `load`               | static   | `static` or `changing`                         |
//! | `switch_time`        | 3000     | load switch instant for `changing`, s          |
//! | `mix`                | 0.9      | share of phase-dominant requests               |
//! | `sample_period`      | 60       | seconds between metric samples                 |
//! | `adaptation_period`  | 7        | `Ta`, s                                        |
//! | `fitness`            | F4       | F1..F4                                         |
//! | `variants`           | F2,F4    | fitness functions compared by `run`            |
//! | `runs`               | 25       | seeds per variant                              |
//! | `seed`               | 1        | base seed                                      |
//! | `beta`               | 0.8      | hit-ratio threshold                            |
//! | `delta`              | 0.01     | F3 division guard                              |
//! | `phi0` `phi1` `phi2` | 100 10 5 | phenotype weights                              |
//! | `alphabet`           | 6        | gene alphabet size `n`                         |
//! | `window`             | 1        | genotype window `W`                            |
//! | `qhr_window`         | 50       | hit-ratio window `K`                           |
//! | `hop_latency`        | 0.1      | per-message latency, s                         |
//! | `query_timeout`      | 5        | s                                              |
//! | `duplicate_ttl`      | 60       | s                                              |
//! | `mean_hold_time`     | 280      | mean reservation length, s                     |

use std::path::Path;

use crate::adaptation::AdaptationParams;
use crate::engine::{LoadProfile, ScenarioConfig, REFERENCE_NODES};
use crate::error::{Error, Result};
use crate::genome::{FitnessKind, FitnessParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub variants: Vec<FitnessKind>,
    pub runs: usize,
    pub base_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            variants: vec![FitnessKind::F2, FitnessKind::F4],
            runs: 25,
            base_seed: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(crate::error::invalid("runs must be >= 1"));
        }
        if self.variants.is_empty() {
            return Err(crate::error::invalid("at least one fitness variant is required"));
        }
        self.scenario.validate()
    }

    /// Seeds used by the runs of every variant.
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(|i| self.base_seed + i)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse(&text)
    }
}

pub fn parse_variants(s: &str) -> Result<Vec<FitnessKind>> {
    s.split(',').filter(|v| !v.trim().is_empty()).map(str::parse).collect()
}

/// Parses a configuration file body.
pub fn parse(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let sc = &mut spec.scenario;
    let mut load_changing = false;
    let mut switch_time = 3000.0;
    let mut scale_rates = false;
    let (mut phi0, mut phi1, mut phi2, mut beta, mut delta, mut alphabet) = (100.0, 10.0, 5.0, 0.8, 0.01, 6u32);
    let mut period = 7.0;
    let mut fitness = FitnessKind::F4;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Config { line, msg };
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let float = || value.parse::<f64>().map_err(|_| err(format!("{key}: '{value}' is not a number")));
        let int = || value.parse::<u64>().map_err(|_| err(format!("{key}: '{value}' is not an integer")));
        match key {
            "duration" => sc.duration = float()?,
            "nodes" => sc.topology.nodes = int()? as usize,
            "initial_clique" => sc.topology.initial_clique = int()? as usize,
            "links_per_node" => sc.topology.links_per_node = int()? as usize,
            "churn_rate" => sc.churn_rate = float()?,
            "query_rate" => sc.query_rate = float()?,
            "scale_rates" => {
                scale_rates = value.parse::<bool>().map_err(|_| err(format!("{key}: expected true or false")))?
            }
            "load" => {
                load_changing = match value {
                    "static" => false,
                    "changing" => true,
                    other => return Err(err(format!("load: expected static or changing, got '{other}'"))),
                }
            }
            "switch_time" => switch_time = float()?,
            "mix" => sc.mix = float()?,
            "sample_period" => sc.sample_period = float()?,
            "adaptation_period" => period = float()?,
            "fitness" => fitness = value.parse().map_err(|e: Error| err(e.to_string()))?,
            "variants" => spec.variants = parse_variants(value).map_err(|e| err(e.to_string()))?,
            "runs" => spec.runs = int()? as usize,
            "seed" => spec.base_seed = int()?,
            "beta" => beta = float()?,
            "delta" => delta = float()?,
            "phi0" => phi0 = float()?,
            "phi1" => phi1 = float()?,
            "phi2" => phi2 = float()?,
            "alphabet" => alphabet = int()? as u32,
            "window" => sc.window = int()? as usize,
            "qhr_window" => sc.qhr_window = int()? as usize,
            "hop_latency" => sc.hop_latency = float()?,
            "query_timeout" => sc.query_timeout = float()?,
            "duplicate_ttl" => sc.duplicate_ttl = float()?,
            "mean_hold_time" => sc.mean_hold_time = float()?,
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }

    if load_changing {
        sc.load_profile = LoadProfile::ChangingAt(switch_time);
    }
    if scale_rates {
        let factor = sc.topology.nodes as f64 / REFERENCE_NODES as f64;
        sc.query_rate *= factor;
        sc.churn_rate *= factor;
    }
    let fp = FitnessParams::new(phi0, phi1, phi2, beta, delta, alphabet)?;
    sc.adaptation = AdaptationParams::new(period, fitness, fp)?;
    sc.seed = spec.base_seed;
    spec.validate()?;
    Ok(spec)
}
