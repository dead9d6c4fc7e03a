//! Run directories. Each holds everything needed to repeat the run
//! bit-for-bit: the effective config, the seed, the pretrained parameters,
//! a content hash of those inputs, the metrics stream and the final checkpoint.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::emit_config;
use super::metrics::{write_record, MetricRecord};
use crate::diffnet::{checkpoint, ParamVector};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::trainer::{pretrain, run, RunOutcome, RunSink, TrainConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const SEED_FILE: &str = "seed";
pub const HASH_FILE: &str = "inputs.sha256";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PRETRAINED_FILE: &str = "pretrained.ckpt";
pub const FINAL_FILE: &str = "final.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// SHA-256 over `"blob <len>\0" ++ bytes`, the way git names blobs.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Flow-matching pretraining as configured.
pub fn pretrain_for(cfg: &TrainConfig, exec: Exec) -> Result<(ParamVector, Vec<f64>)> {
    pretrain(cfg.architecture()?, &cfg.task_spec()?, &cfg.pretrain_config(), exec)
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        create_dir(&root)?;
        Ok(RunDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes config, seed, pretrained parameters and the input hash file.
    pub fn write_inputs(&self, cfg: &TrainConfig, pretrained: &ParamVector) -> Result<()> {
        let config = emit_config(cfg)?;
        let ckpt = checkpoint::to_bytes(pretrained);
        write_file(&self.path(CONFIG_FILE), format!("{config}\n").as_bytes())?;
        write_file(&self.path(SEED_FILE), format!("{}\n", cfg.seed).as_bytes())?;
        write_file(&self.path(PRETRAINED_FILE), &ckpt)?;
        let hashes = format!(
            "{}  {CONFIG_FILE}\n{}  {PRETRAINED_FILE}\n",
            git_blob_hash(format!("{config}\n").as_bytes()),
            git_blob_hash(&ckpt)
        );
        write_file(&self.path(HASH_FILE), hashes.as_bytes())
    }

    pub fn write_final(&self, params: &ParamVector) -> Result<()> {
        checkpoint::save(params, &self.path(FINAL_FILE))
    }
}

/// Streams records to `metrics.jsonl`, flushing after each line, and writes
/// periodic checkpoints under `checkpoints/`.
pub struct DirSink {
    metrics: BufWriter<File>,
    path: PathBuf,
    checkpoints: PathBuf,
}

impl DirSink {
    pub fn new(dir: &RunDir) -> Result<Self> {
        let path = dir.path(METRICS_FILE);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(DirSink {
            metrics: BufWriter::new(f),
            path,
            checkpoints: dir.path(CHECKPOINT_DIR),
        })
    }
}

impl RunSink for DirSink {
    fn record(&mut self, record: &MetricRecord) -> Result<()> {
        write_record(&mut self.metrics, record)?;
        self.metrics.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn checkpoint(&mut self, step: usize, params: &ParamVector) -> Result<()> {
        create_dir(&self.checkpoints)?;
        checkpoint::save(params, &self.checkpoints.join(format!("step-{step:06}.ckpt")))
    }
}

/// Full run into `root`: inputs, streamed metrics and the final checkpoint.
pub fn train_in_dir(root: &Path, cfg: &TrainConfig, pretrained: ParamVector, exec: Exec) -> Result<RunOutcome> {
    let cfg = cfg.clone().resolve()?;
    let dir = RunDir::create(root)?;
    dir.write_inputs(&cfg, &pretrained)?;
    let mut sink = DirSink::new(&dir)?;
    let outcome = run(&cfg, pretrained, exec, &mut sink)?;
    dir.write_final(&outcome.final_params)?;
    Ok(outcome)
}
