use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use super::config::{emit_config, parse_config};
use super::metrics::{curves_csv, read_metrics};
use super::phenomena::{reproduce_phenomena, PhenomenaConfig, RunSeries};
use super::presets::ExperimentPreset;
use super::rundir::{git_blob_hash, pretrain_for, train_in_dir, METRICS_FILE, PRETRAINED_FILE};
use crate::advantage::estimate;
use crate::diffnet::{checkpoint, ParamVector};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rollout::{write_jsonl, TrajectoryRecord};
use crate::trainer::{TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(name = "flowrl", version, about = "Policy optimization for flow-matching samplers on toy tasks")]
pub struct Cli {
    /// Config file (TOML, or JSON for `.json` files and bodies starting with `{`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flow-matching pretraining; writes `pretrained.ckpt` and the loss curve.
    Pretrain,
    /// Pretrain (or load `--pretrained`) and run policy optimization.
    Train {
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Apply an ablation preset on top of the config.
        #[arg(long)]
        preset: Option<ExperimentPreset>,
    },
    /// ODE evaluation of a checkpoint, printed as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Shared pretraining, then one run per preset and the phenomena report.
    Ablate,
    /// Eval curves of a finished run as CSV.
    DumpCurves {
        /// Run directory; defaults to `--out-dir`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Output file; defaults to `<run>/curves.csv`, `-` for stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One batch of rollouts with per-step instant rewards and advantages as JSON lines.
    DumpRollouts {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Outer step whose seeds are used.
        #[arg(long, default_value_t = 1)]
        step: u64,
    },
}

fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn pretrain_cmd(cfg: &TrainConfig, out: &Path, exec: Exec) -> Result<ParamVector> {
    let (params, losses) = pretrain_for(cfg, exec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    checkpoint::save(&params, &out.join(PRETRAINED_FILE))?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write(&out.join("pretrain_loss.csv"), csv.as_bytes())?;
    let config = format!("{}\n", emit_config(cfg)?);
    write(&out.join("pretrain_config.json"), config.as_bytes())?;
    write(
        &out.join("pretrain.sha256"),
        format!("{}  pretrain_config.json\n", git_blob_hash(config.as_bytes())).as_bytes(),
    )?;
    Ok(params)
}

fn ablate(cfg: &TrainConfig, out: &Path, exec: Exec) -> Result<()> {
    let pretrained = pretrain_cmd(cfg, out, exec)?;
    let mut runs = Vec::new();
    for preset in ExperimentPreset::ALL {
        let pcfg = preset.apply(cfg).resolve()?;
        let outcome = train_in_dir(&out.join(preset.name()), &pcfg, pretrained.clone(), exec)?;
        eprintln!(
            "{preset}: final reward {:.4}",
            outcome.records.last().map_or(f64::NAN, |r| r.mean_reward)
        );
        runs.push(RunSeries::new(preset.name(), outcome.records));
    }
    let report = reproduce_phenomena(&runs, &PhenomenaConfig::default())?;
    write(&out.join("phenomena.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    let text = report.render();
    write(&out.join("phenomena.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn dump_rollouts(cfg: &TrainConfig, params: ParamVector, step: u64, out: &Path, exec: Exec) -> Result<PathBuf> {
    let trainer = Trainer::new(cfg.clone(), params, exec)?;
    let batch = trainer.sample_batch(step, trainer.task())?;
    let acfg = cfg.advantage_config();
    let mut records = Vec::new();
    for (gi, g) in batch.groups.iter().enumerate() {
        let est = estimate(g, &acfg)?;
        for (i, t) in g.trajectories.iter().enumerate() {
            let mut r = TrajectoryRecord::from_trajectory(step, gi, i, t);
            r.cumulative_values = Some(est.values[i].clone());
            r.advantages = Some(est.advantages.values[i].clone());
            records.push(r);
        }
    }
    let path = out.join(format!("rollouts-step{step}.jsonl"));
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records)?;
    write(&path, &buf)?;
    Ok(path)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Pretrain => {
            pretrain_cmd(&load_config(cli)?, out, exec)?;
        }
        Command::Train { pretrained, preset } => {
            let mut cfg = load_config(cli)?;
            if let Some(p) = preset {
                cfg = p.apply(&cfg).resolve()?;
            }
            let params = match pretrained {
                Some(p) => checkpoint::load(p)?,
                None => pretrain_for(&cfg, exec)?.0,
            };
            let outcome = train_in_dir(out, &cfg, params, exec)?;
            if let Some(r) = outcome.records.last() {
                eprintln!("step {}: mean reward {:.4}, accuracy {:.4}", r.step, r.mean_reward, r.accuracy);
            }
        }
        Command::Eval { checkpoint: ckpt } => {
            let cfg = load_config(cli)?;
            let params = checkpoint::load(ckpt)?;
            let trainer = Trainer::new(cfg, params, exec)?;
            println!("{}", serde_json::to_string_pretty(&trainer.evaluate()?)?);
        }
        Command::Ablate => ablate(&load_config(cli)?, out, exec)?,
        Command::DumpCurves { run, output } => {
            let run = run.as_deref().unwrap_or(out);
            let csv = curves_csv(&read_metrics(&run.join(METRICS_FILE))?);
            match output.as_deref() {
                Some(p) if p == Path::new("-") => {
                    std::io::stdout()
                        .write_all(csv.as_bytes())
                        .map_err(|e| Error::io("<stdout>", e))?;
                }
                Some(p) => write(p, csv.as_bytes())?,
                None => write(&run.join("curves.csv"), csv.as_bytes())?,
            }
        }
        Command::DumpRollouts { checkpoint: ckpt, step } => {
            let cfg = load_config(cli)?;
            let path = dump_rollouts(&cfg, checkpoint::load(ckpt)?, *step, out, exec)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Parses `args` and runs the command. Bad invocations print usage and exit 2;
/// runtime failures print the error and exit 1.
pub fn main<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
