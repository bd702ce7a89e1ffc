//! Command settings. Each struct is both the clap flag set and the TOML
//! schema of its config file; flags given on the command line win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Multinomial,
    Gaussian,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Multinomial => "multinomial",
            KernelKind::Gaussian => "gaussian",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenerateSettings {
    /// TOML file with any of these settings
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of groups J
    #[arg(long)]
    pub groups: Option<usize>,
    /// Observations per group n
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    /// Vocabulary size W (multinomial)
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Dimension d (gaussian)
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Dirichlet pseudo-count per word, default 1/W
    #[arg(long)]
    pub alpha_w: Option<f64>,
    #[arg(long)]
    pub tau_phi2: Option<f64>,
    #[arg(long)]
    pub tau_y2: Option<f64>,
    /// Output dataset file
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output truth-label file
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitSettings {
    /// TOML file with any of these settings
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input dataset file
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Reference labels; adds NMI to every trace row
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output trace CSV
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Output file for the final labels
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Checkpoint file, written at the end and every `checkpoint-every` iterations
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue the chain stored in this checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Total number of iterations, counted from the start of the chain
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub initial_t_cap: Option<usize>,
    #[arg(long)]
    pub initial_k_cap: Option<usize>,
    #[arg(long)]
    pub growth_factor: Option<f64>,
    #[arg(long)]
    pub max_restarts: Option<usize>,
    /// Emission kernel; inferred from the dataset header when absent
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub alpha_w: Option<f64>,
    #[arg(long)]
    pub tau_phi2: Option<f64>,
    #[arg(long)]
    pub tau_y2: Option<f64>,
    /// Worker threads; 0 or 1 runs sequentially
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write labels every this many iterations into `dump-dir`
    #[arg(long)]
    pub dump_every: Option<u64>,
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalSettings {
    /// TOML file with any of these settings
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Estimated labels
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Reference labels
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also report document NMI after a majority vote within each group
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub majority_vote: bool,
    /// One label per document; defaults to the majority of the truth labels
    #[arg(long)]
    pub doc_truth: Option<PathBuf>,
}

/// Overlay the command-line settings on the config file named by `config`.
pub fn resolve<S>(cli: S, config: Option<&Path>) -> Result<S, CliError>
where
    S: Serialize + DeserializeOwned,
{
    let Some(path) = config else { return Ok(cli) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let flags = toml::Table::try_from(&cli).map_err(|e| CliError::config(e.to_string()))?;
    table.extend(flags);
    table.try_into().map_err(|e: toml::de::Error| CliError::config(format!("config {}: {e}", path.display())))
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::config(format!("--{flag} is required")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_the_file() {
        let f = write_config("seed = 4\nmax-iterations = 20\nkernel = \"gaussian\"\n");
        let cli = FitSettings { max_iterations: Some(7), ..Default::default() };
        let s = resolve(cli, Some(f.path())).unwrap();
        assert_eq!(s.seed, Some(4));
        assert_eq!(s.max_iterations, Some(7));
        assert_eq!(s.kernel, Some(KernelKind::Gaussian));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write_config("seed = 4\nburn-in = 10\n");
        let err = resolve(FitSettings::default(), Some(f.path())).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("burn-in"), "{err}");
    }

    #[test]
    fn config_cannot_smuggle_itself() {
        let f = write_config("config = \"other.toml\"\n");
        assert!(resolve(EvalSettings::default(), Some(f.path())).is_err());
    }

    #[test]
    fn boolean_flag_only_overrides_when_set() {
        let f = write_config("majority-vote = true\n");
        let s = resolve(EvalSettings::default(), Some(f.path())).unwrap();
        assert!(s.majority_vote);
    }

    #[test]
    fn missing_required_flag() {
        let err = required::<u64>(None, "seed").unwrap_err();
        assert_eq!(err.code(), 2);
        assert_eq!(err.to_string(), "--seed is required");
    }
}
