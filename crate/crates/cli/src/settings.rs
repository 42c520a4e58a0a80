//! Resolution of run settings: command-line flags override the config file,
//! which overrides the built-in defaults. `POWERFARM_SEED` stands in for a
//! missing `--seed` flag.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use powerfarm::policies::TieBreak;
use powerfarm::sim::{SimConfig, SizeDistribution};

/// Config file layout; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimFile,
    #[serde(default)]
    pub indices: IndexFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub horizon: Option<f64>,
    pub warmup: Option<f64>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub max_replications: Option<usize>,
    pub ci_target: Option<f64>,
    pub tiebreak: Option<String>,
    pub sizes: Option<Vec<String>>,
    pub bin_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexFile {
    pub epsilon: Option<f64>,
    pub limit_scaling: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    /// Simulated time per replication.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Start of the measured window (default: 10% of the horizon).
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long, env = "POWERFARM_SEED")]
    pub seed: Option<u64>,
    /// Minimum number of replications.
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub max_replications: Option<usize>,
    /// Target relative 95% half-width of efficiency.
    #[arg(long)]
    pub ci_target: Option<f64>,
    /// lltb or sqtb.
    #[arg(long)]
    pub tiebreak: Option<String>,
    /// Job sizes: one distribution for all classes or a comma-separated list per class
    /// (exponential, deterministic, pareto-f, pareto-inf, pareto:<shape>, mixed).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<String>>,
    /// Width of the plot-data time bins.
    #[arg(long)]
    pub bin_width: Option<f64>,
}

/// Defaults of one command, before file and flags are applied.
#[derive(Debug, Clone, Copy)]
pub struct SimDefaults {
    pub horizon: f64,
    pub replications: usize,
    pub max_replications: usize,
    pub bin_width: Option<f64>,
}

/// Fully resolved simulation settings, stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
    pub max_replications: usize,
    pub ci_target: f64,
    pub tiebreak: String,
    pub sizes: Vec<String>,
    pub bin_width: Option<f64>,
}

impl SimSettings {
    pub fn resolve(flags: &SimFlags, file: &SimFile, defaults: SimDefaults) -> Result<SimSettings> {
        let horizon = flags.horizon.or(file.horizon).unwrap_or(defaults.horizon);
        let settings = SimSettings {
            horizon,
            warmup: flags.warmup.or(file.warmup).unwrap_or(0.1 * horizon),
            seed: flags.seed.or(file.seed).unwrap_or(1),
            replications: flags.replications.or(file.replications).unwrap_or(defaults.replications),
            max_replications: flags
                .max_replications
                .or(file.max_replications)
                .unwrap_or(defaults.max_replications),
            ci_target: flags.ci_target.or(file.ci_target).unwrap_or(0.03),
            tiebreak: flags
                .tiebreak
                .clone()
                .or_else(|| file.tiebreak.clone())
                .unwrap_or_else(|| "lltb".into()),
            sizes: flags
                .sizes
                .clone()
                .or_else(|| file.sizes.clone())
                .unwrap_or_else(|| vec!["exponential".into()]),
            bin_width: flags.bin_width.or(file.bin_width).or(defaults.bin_width),
        };
        settings.tiebreak()?;
        settings.size_list(1)?;
        Ok(settings)
    }

    pub fn tiebreak(&self) -> Result<TieBreak> {
        self.tiebreak.parse().map_err(anyhow::Error::msg)
    }

    fn size_list(&self, num_classes: usize) -> Result<Vec<SizeDistribution>> {
        if let [only] = self.sizes.as_slice() {
            if only == "mixed" {
                return Ok(SizeDistribution::mixed(num_classes));
            }
        }
        self.sizes
            .iter()
            .map(|s| s.parse::<SizeDistribution>().map_err(anyhow::Error::msg))
            .collect()
    }

    pub fn to_config(&self, num_classes: usize) -> Result<SimConfig> {
        let sizes = self.size_list(num_classes)?;
        if sizes.len() != 1 && sizes.len() != num_classes {
            bail!("{} size distributions given for {num_classes} classes", sizes.len());
        }
        Ok(SimConfig {
            warmup: self.warmup,
            sizes,
            tiebreak: self.tiebreak()?,
            replications: self.replications,
            max_replications: self.max_replications,
            ci_target: self.ci_target,
            bin_width: self.bin_width,
            ..SimConfig::new(self.horizon, self.seed)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: SimDefaults = SimDefaults {
        horizon: 1000.0,
        replications: 5,
        max_replications: 50,
        bin_width: None,
    };

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: ConfigFile = toml::from_str("[simulation]\nhorizon = 50.0\nseed = 7\ntiebreak = \"sqtb\"\n").unwrap();
        let flags = SimFlags {
            seed: Some(9),
            ..SimFlags::default()
        };
        let s = SimSettings::resolve(&flags, &file.simulation, DEFAULTS).unwrap();
        assert_eq!((s.horizon, s.warmup, s.seed), (50.0, 5.0, 9));
        assert_eq!(s.tiebreak, "sqtb");
        assert_eq!(s.replications, 5);
        let none = SimSettings::resolve(&SimFlags::default(), &SimFile::default(), DEFAULTS).unwrap();
        assert_eq!((none.horizon, none.seed), (1000.0, 1));
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(toml::from_str::<ConfigFile>("[simulation]\nhorizn = 5.0\n").is_err());
        let flags = SimFlags {
            tiebreak: Some("random".into()),
            ..SimFlags::default()
        };
        assert!(SimSettings::resolve(&flags, &SimFile::default(), DEFAULTS).is_err());
    }

    #[test]
    fn mixed_sizes_expand_per_class() {
        let flags = SimFlags {
            sizes: Some(vec!["mixed".into()]),
            ..SimFlags::default()
        };
        let s = SimSettings::resolve(&flags, &SimFile::default(), DEFAULTS).unwrap();
        assert_eq!(s.to_config(4).unwrap().sizes, SizeDistribution::mixed(4));
        let bad = SimSettings {
            sizes: vec!["exp".into(), "det".into()],
            ..s
        };
        assert!(bad.to_config(3).is_err());
    }
}
