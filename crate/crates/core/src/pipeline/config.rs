use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::JudgeMode;
use crate::ideation::IdeationConfig;
use crate::retrieval::RetrievalMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Replay,
    Synthetic,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "replay" => Ok(BackendKind::Replay),
            "synthetic" => Ok(BackendKind::Synthetic),
            _ => Err(Error::Invalid(format!(
                "backend `{s}` is not remote, replay or synthetic"
            ))),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Remote => "remote",
            BackendKind::Replay => "replay",
            BackendKind::Synthetic => "synthetic",
        })
    }
}

/// Everything a run needs. Loaded from TOML; command-line flags override
/// individual fields afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub topics_path: PathBuf,
    pub output_dir: PathBuf,
    /// Gold nuggets; when set, `run` also evaluates its reports.
    pub gold_path: Option<PathBuf>,

    /// Documents scanned for the bank's nuggets.
    pub retrieval: RetrievalMode,
    pub depth: usize,
    /// Initial pool the nuggets are ideated from (lexical or a run file).
    pub pool_retrieval: RetrievalMode,
    pub pool_depth: usize,

    pub pool_target: usize,
    pub max_nuggets_per_doc: usize,
    pub paraphrase_floor: f64,
    pub summary_max_chars: usize,

    pub bank_size: usize,
    pub weights_path: Option<PathBuf>,
    pub linear_model_path: Option<PathBuf>,

    pub k: usize,
    pub verify: bool,
    pub judge: JudgeMode,

    pub backend: BackendKind,
    pub model: Option<String>,
    pub api_base: Option<String>,
    pub replay_path: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Maximum number of model calls in flight.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ideation = IdeationConfig::default();
        PipelineConfig {
            corpus_path: PathBuf::new(),
            topics_path: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            gold_path: None,
            retrieval: RetrievalMode::FromNuggets,
            depth: crate::retrieval::DEFAULT_DEPTH,
            pool_retrieval: RetrievalMode::Lexical,
            pool_depth: 10,
            pool_target: ideation.pool_target,
            max_nuggets_per_doc: ideation.max_nuggets_per_doc,
            paraphrase_floor: ideation.paraphrase_floor,
            summary_max_chars: ideation.summary_max_chars,
            bank_size: crate::ranking::DEFAULT_BANK_SIZE,
            weights_path: None,
            linear_model_path: None,
            k: crate::assemble::DEFAULT_K,
            verify: false,
            judge: JudgeMode::Oracle,
            backend: BackendKind::Synthetic,
            model: None,
            api_base: None,
            replay_path: None,
            cache_dir: None,
            jobs: 4,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.corpus_path, &mut cfg.topics_path, &mut cfg.output_dir] {
            resolve(base, p);
        }
        for p in [
            &mut cfg.gold_path,
            &mut cfg.weights_path,
            &mut cfg.linear_model_path,
            &mut cfg.replay_path,
            &mut cfg.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        for mode in [&mut cfg.retrieval, &mut cfg.pool_retrieval] {
            if let RetrievalMode::RunFile(p) = mode {
                resolve(base, p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("depth", self.depth),
            ("pool_depth", self.pool_depth),
            ("pool_target", self.pool_target),
            ("max_nuggets_per_doc", self.max_nuggets_per_doc),
            ("summary_max_chars", self.summary_max_chars),
            ("bank_size", self.bank_size),
            ("k", self.k),
            ("jobs", self.jobs),
        ] {
            if v < 1 {
                return Err(Error::Invalid(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.paraphrase_floor) {
            return Err(Error::Invalid("paraphrase_floor must lie in [0, 1]".into()));
        }
        if self.pool_retrieval == RetrievalMode::FromNuggets {
            return Err(Error::Invalid("the ideation pool cannot come from nuggets".into()));
        }
        if self.weights_path.is_some() && self.linear_model_path.is_some() {
            return Err(Error::Invalid("set weights_path or linear_model_path, not both".into()));
        }
        if self.corpus_path.as_os_str().is_empty() || self.topics_path.as_os_str().is_empty() {
            return Err(Error::Invalid("corpus_path and topics_path are required".into()));
        }
        Ok(())
    }

    pub fn ideation(&self) -> IdeationConfig {
        IdeationConfig {
            max_nuggets_per_doc: self.max_nuggets_per_doc,
            pool_target: self.pool_target,
            paraphrase_floor: self.paraphrase_floor,
            summary_max_chars: self.summary_max_chars,
        }
    }
}
