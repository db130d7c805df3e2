//! Run directory layout.
//!
//! ```text
//! <run>/stage1.ckpt        stage-1 extractor and head
//! <run>/stage2.ckpt        CRT: frozen extractor with the retrained head
//! <run>/ncm_stats.bin      NCM: class means, counts and optional metric
//! <run>/log.jsonl          one object per epoch, stage-1 lines first
//! <run>/config.json        every resolved setting
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use longtail_core::model::Checkpoint;
use longtail_core::train::EpochRecord;

use crate::data::PreparedData;
use crate::error::{CliError, CliResult};
use crate::experiment::{Decision, Stage2Settings, TrainSettings};
use crate::files;

/// Contents of `config.json`. Each section has the same keys as the flags
/// of the verb it is named after, so it can be passed back via `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub train: TrainSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<Stage2Settings>,
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn stage1_ckpt(&self) -> PathBuf {
        self.path.join("stage1.ckpt")
    }

    pub fn stage2_ckpt(&self) -> PathBuf {
        self.path.join("stage2.ckpt")
    }

    pub fn ncm_stats(&self) -> PathBuf {
        self.path.join("ncm_stats.bin")
    }

    pub fn log(&self) -> PathBuf {
        self.path.join("log.jsonl")
    }

    pub fn config(&self) -> PathBuf {
        self.path.join("config.json")
    }

    pub fn read_config(&self) -> CliResult<RunConfig> {
        let path = self.config();
        serde_json::from_str(&files::read_text(&path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn write_config(&self, cfg: &RunConfig) -> CliResult<()> {
        files::write(&self.config(), serde_json::to_string_pretty(cfg)? + "\n")
    }

    /// Start a run: stage-1 artifacts replace anything from earlier runs.
    pub fn write_stage1(&self, cfg: &RunConfig, ckpt: &Checkpoint, log: &[EpochRecord]) -> CliResult<()> {
        for stale in [self.stage2_ckpt(), self.ncm_stats()] {
            if stale.exists() {
                std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
            }
        }
        files::save_checkpoint(&self.stage1_ckpt(), ckpt)?;
        files::write(&self.log(), log_lines(log)?)?;
        self.write_config(cfg)
    }

    /// Store a stage-2 result next to the stage-1 checkpoint it was built on.
    /// The log keeps its stage-1 lines and gains the stage-2 ones.
    pub fn write_stage2(
        &self,
        cfg: &RunConfig,
        stage1: &Checkpoint,
        decision: &Decision,
        log: &[EpochRecord],
    ) -> CliResult<()> {
        for stale in [self.stage2_ckpt(), self.ncm_stats()] {
            if stale.exists() {
                std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
            }
        }
        match decision {
            Decision::Head(head) => {
                let mut ckpt = stage1.clone();
                ckpt.model.head = head.clone();
                files::save_checkpoint(&self.stage2_ckpt(), &ckpt)?;
            }
            Decision::Ncm { stats, distance } => {
                files::save_ncm_stats(&self.ncm_stats(), stats, *distance, stage1.config_hash, stage1.vocab_hash)?;
            }
        }
        let mut out = String::new();
        for line in files::read_text(&self.log())?.lines() {
            let v: serde_json::Value = serde_json::from_str(line)?;
            if v.get("stage").and_then(|s| s.as_str()) == Some("stage1") {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(&log_lines(log)?);
        files::write(&self.log(), out)?;
        self.write_config(cfg)
    }

    /// Stage-1 checkpoint checked against the data and recorded settings.
    pub fn load_stage1(&self, data: &PreparedData, cfg: &RunConfig) -> CliResult<Checkpoint> {
        files::load_checkpoint(&self.stage1_ckpt(), cfg.train.config_hash(data), data.vocab_hash())
    }

    /// Whatever stage 2 left behind.
    pub fn load_stage2(&self, data: &PreparedData, cfg: &RunConfig) -> CliResult<(Checkpoint, Decision)> {
        let stage1 = self.load_stage1(data, cfg)?;
        let (config_hash, vocab_hash) = (stage1.config_hash, stage1.vocab_hash);
        if self.stage2_ckpt().exists() {
            let ckpt = files::load_checkpoint(&self.stage2_ckpt(), config_hash, vocab_hash)?;
            let head = ckpt.model.head.clone();
            Ok((ckpt, Decision::Head(head)))
        } else if self.ncm_stats().exists() {
            let (stats, distance) = files::load_ncm_stats(&self.ncm_stats(), config_hash, vocab_hash)?;
            Ok((stage1, Decision::Ncm { stats, distance }))
        } else {
            Err(CliError::data(format!("{}: no stage-2 result, run `stage2` first", self.path.display())))
        }
    }
}

fn log_lines(log: &[EpochRecord]) -> CliResult<String> {
    let mut out = String::new();
    for rec in log {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

