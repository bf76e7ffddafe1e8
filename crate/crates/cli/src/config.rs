use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pluralism_core::annotate::AnnotationConfig;
use pluralism_core::stack::StackConfig;
use pluralism_core::synth::SynthConfig;

use crate::{CliError, CliResult, CommonArgs};

/// Everything a run depends on. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub embeddings: Option<String>,
    pub out: Option<PathBuf>,
    /// Global seed; the split, learner and meta seeds derive from it.
    pub seed: u64,
    pub ablation: String,
    /// Top-1 confidence bin width for stratification.
    pub bin_width: f64,
    /// Bridge pairs reported by `analyze`.
    pub top_k: usize,
    /// Requests per second for `annotate`; 0 disables throttling.
    pub rate_limit: f64,
    pub stack: StackConfig,
    pub synth: SynthConfig,
    pub annotation: AnnotationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            embeddings: None,
            out: None,
            seed: 42,
            ablation: "features".into(),
            bin_width: 0.1,
            top_k: 10,
            rate_limit: 2.0,
            stack: StackConfig::default(),
            synth: SynthConfig::default(),
            annotation: AnnotationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(args: &CommonArgs) -> CliResult<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &args.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &args.embeddings {
            cfg.embeddings = Some(v.clone());
        }
        if let Some(v) = &args.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = &args.ablation {
            cfg.ablation = v.clone();
        }
        if let Some(v) = args.temperature {
            cfg.stack.calibration_temperature = v;
        }
        if let Some(v) = args.folds {
            cfg.stack.folds = v;
        }
        Ok(cfg)
    }

    /// Stack configuration with every seed derived from the global one.
    pub fn seeded_stack(&self) -> StackConfig {
        self.stack.clone().with_seed(self.seed)
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data.as_deref().ok_or_else(|| CliError::usage("no dataset given (--data)"))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        let out = self.out.as_deref().ok_or_else(|| CliError::usage("no output directory given (--out)"))?;
        std::fs::create_dir_all(out).map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 7\nembeddings = \"hash\"\n[stack]\nfolds = 4\ncalibration_temperature = 0.5\n[stack.learners.forest]\nn_trees = 10\n",
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path),
            seed: Some(9),
            folds: Some(3),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.stack.folds, 3);
        assert_eq!(cfg.stack.calibration_temperature, 0.5);
        assert_eq!(cfg.stack.learners.forest.n_trees, 10);
        assert_eq!(cfg.stack.learners.forest.max_depth, 12);
        assert_eq!(cfg.embeddings.as_deref(), Some("hash"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "sed = 3\n").unwrap();
        let err = RunConfig::from_toml_file(&path).unwrap_err();
        assert_eq!(err.code, crate::EXIT_USAGE);
    }
}
