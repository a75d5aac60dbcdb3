use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use atp_core::pipeline::{parse_config_text, PipelineConfig};
use clap::Args;

/// Pipeline settings shared by every subcommand that trains a model.
/// Precedence: flags, then `--config`, then built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct PipelineArgs {
    /// Flat `key = value` file; `#` starts a comment
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Proximity transform: constant, linear, harmonic or log
    #[arg(long)]
    pub variant: Option<String>,
    /// Offset added to every proximity value
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// Embedding dimension
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Maximum coordinate-descent sweeps
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Weight of the squared predictions outside the support
    #[arg(long)]
    pub zero_weight: Option<f64>,
    /// Stop when the relative objective decrease falls below this
    #[arg(long)]
    pub tol: Option<f64>,
    /// Link threshold on the sigmoid score
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Master seed; every stage derives its own seed from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated cycle-breaking rankers: trueskill, agony
    #[arg(long)]
    pub rankers: Option<String>,
    /// auto, exact or heuristic
    #[arg(long)]
    pub agony_mode: Option<String>,
    /// Largest component (in edges) solved exactly in auto mode
    #[arg(long)]
    pub agony_exact_cap: Option<usize>,
    #[arg(long)]
    pub trueskill_epochs: Option<usize>,
    /// Re-rank the pieces of a component after it splits
    #[arg(long)]
    pub rerank_on_split: Option<bool>,
    /// Abort when the reachability closure exceeds this many pairs
    #[arg(long)]
    pub closure_max_nnz: Option<u64>,
}

impl PipelineArgs {
    fn flag_values(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("variant", self.variant.clone());
        put("c", self.c.map(|x| x.to_string()));
        put("k", self.k.map(|x| x.to_string()));
        put("lambda", self.lambda.map(|x| x.to_string()));
        put("sweeps", self.sweeps.map(|x| x.to_string()));
        put("zero_weight", self.zero_weight.map(|x| x.to_string()));
        put("tol", self.tol.map(|x| x.to_string()));
        put("alpha", self.alpha.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("rankers", self.rankers.clone());
        put("agony_mode", self.agony_mode.clone());
        put("agony_exact_cap", self.agony_exact_cap.map(|x| x.to_string()));
        put("trueskill_epochs", self.trueskill_epochs.map(|x| x.to_string()));
        put("rerank_on_split", self.rerank_on_split.map(|x| x.to_string()));
        put("closure_max_nnz", self.closure_max_nnz.map(|x| x.to_string()));
        out
    }

    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let mut from_file = BTreeMap::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            for (k, v) in parse_config_text(&text).with_context(|| format!("in {}", path.display()))? {
                cfg.set(&k, &v).with_context(|| format!("in {}", path.display()))?;
                from_file.insert(k, v);
            }
        }
        for (k, v) in self.flag_values() {
            if let Some(old) = from_file.get(k) {
                log::info!("--{} = {v} overrides `{k} = {old}` from the config file", k.replace('_', "-"));
            }
            cfg.set(k, &v).with_context(|| format!("invalid --{}", k.replace('_', "-")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atp.conf");
        std::fs::write(&path, "k = 8\nsweeps = 7 # few\n").unwrap();
        let args = PipelineArgs {
            config: Some(path),
            k: Some(4),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.sweeps, 7);
        assert_eq!(cfg.lambda, PipelineConfig::default().lambda);
    }

    #[test]
    fn unknown_file_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atp.conf");
        std::fs::write(&path, "kk = 8\n").unwrap();
        let args = PipelineArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(args.resolve().is_err());
    }
}
