//! Command-line front end over [`crate::pipeline`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::eval::{format_two_decimals, EvalReport, COLUMNS, EMPTY_CELL};
use crate::optim::EpochRecord;
use crate::pipeline::{self, CamRequest, RunConfig};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Internal invariant violation.
pub const EXIT_INTERNAL: i32 = 1;
/// Bad config file, flag value or architecture mismatch.
pub const EXIT_CONFIG: i32 = 2;
/// Unreadable or malformed dataset, image, checkpoint or report.
pub const EXIT_DATA: i32 = 3;
/// Non-finite loss, gradient or parameter.
pub const EXIT_NUMERIC: i32 = 4;
/// A checkpoint the command needs does not exist.
pub const EXIT_MISSING_CHECKPOINT: i32 = 5;

pub const THREADS_ENV: &str = "EO2SAR_THREADS";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter(_) | Error::Architecture(_) => EXIT_CONFIG,
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::MissingCheckpoint(_) => EXIT_MISSING_CHECKPOINT,
        Error::Dimension { .. } | Error::Contract(_) => EXIT_INTERNAL,
        Error::BadMagic { .. }
        | Error::VersionMismatch { .. }
        | Error::Truncated { .. }
        | Error::ShapeTable { .. }
        | Error::Row { .. }
        | Error::Data(_)
        | Error::Image { .. }
        | Error::Io { .. }
        | Error::Json(_)
        | Error::Csv(_) => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "eo2sar", version, about = "Train on EO ship chips, transfer to SAR, evaluate and explain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic EO and SAR datasets under <out>/eo and <out>/sar.
    Synth(Common),
    /// Train from scratch on the EO dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fine-tune the EO checkpoint on the SAR training split.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        /// Starting checkpoint; defaults to <out>/eo_model.ckpt.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate checkpoints on the SAR test split, stratified by attribute.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; defaults to both phase checkpoints in <out>.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Render class activation overlays for SAR chips.
    Cam {
        #[command(flatten)]
        common: Common,
        /// Model to explain; defaults to <out>/tl_model.ckpt.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Two models side by side: `before,after` or two checkpoint paths.
        #[arg(long, value_name = "A,B", num_args = 0..=1, default_missing_value = "before,after")]
        panels: Option<String>,
        /// Manifest ids of the chips to render; repeatable.
        #[arg(long = "id", value_name = "ID")]
        ids: Vec<String>,
        /// Target class (`ship` or `no_ship`); defaults to the predicted class.
        #[arg(long)]
        class: Option<String>,
        /// `grad_cam` or `gap_cam`.
        #[arg(long)]
        method: Option<String>,
        /// Also print the CAM localization rate over the test positives the
        /// fine-tuned (or `--checkpoint`) model detects.
        #[arg(long)]
        localization: bool,
    },
    /// Combine the evaluation reports into <out>/report.csv and print them.
    Report(Common),
    /// synth, train, finetune, eval, report and cam in sequence.
    Run(Common),
}

/// Config file, then `--set` overrides, then `--seed`.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (key, value) =
            kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Apply `EO2SAR_THREADS` to the global thread pool.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn progress(quiet: bool, phase: &str) -> impl FnMut(&EpochRecord) + '_ {
    move |r| {
        if !quiet {
            eprintln!("[{phase}] epoch {:>3}  loss {:.4}  train acc {:.3}", r.epoch, r.mean_loss, r.train_accuracy);
        }
    }
}

fn refuse_overwrite(force: bool, paths: &[PathBuf]) -> Result<()> {
    match paths.iter().find(|p| p.exists()) {
        Some(p) if !force => Err(Error::Config(format!("{} exists; pass --force to overwrite", p.display()))),
        _ => Ok(()),
    }
}

fn parse_panels(value: &str, out: &Path) -> Result<(PathBuf, PathBuf)> {
    match value.split(',').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok((pipeline::panel_path(a, out), pipeline::panel_path(b, out))),
        _ => Err(Error::Config(format!("--panels expects two comma-separated entries, got {value:?}"))),
    }
}

/// Render reports as an aligned text table, three rows per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let render = |v: Option<f64>| v.map_or_else(|| EMPTY_CELL.to_string(), format_two_decimals);
    let mut lines = vec![format!("{:<12}{:<9}{}", "training", "class", COLUMNS.map(|c| format!("{c:>8}")).join(""))];
    for r in reports {
        for (class, idx) in [("Ship", 0), ("No ship", 1), ("Overall", 2)] {
            let cells: String = r
                .cells
                .iter()
                .map(|c| [c.recall_ship, c.recall_no_ship, c.overall][idx])
                .map(|v| format!("{:>8}", render(v)))
                .collect();
            lines.push(format!("{:<12}{:<9}{cells}", r.training, class));
        }
    }
    lines.join("\n") + "\n"
}

/// Run one parsed command, writing human-readable output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let say = |stdout: &mut dyn Write, msg: String| writeln!(stdout, "{msg}").map_err(|e| Error::io("<stdout>", e));
    match cli.command {
        Command::Synth(c) => {
            let cfg = resolve_config(&c)?;
            pipeline::cmd_synth(&cfg, &c.out, c.force)?;
            say(stdout, format!("wrote {} and {}", c.out.join("eo").display(), c.out.join("sar").display()))
        }
        Command::Train { common: c, epochs } => {
            let mut cfg = resolve_config(&c)?;
            if let Some(e) = epochs {
                cfg.eo_epochs = e;
            }
            refuse_overwrite(c.force, &[c.out.join(pipeline::EO_CHECKPOINT)])?;
            let log = pipeline::cmd_train(&cfg, &c.out, progress(c.quiet, "eo"))?;
            say(stdout, format!("wrote {} after {} Adam steps", c.out.join(pipeline::EO_CHECKPOINT).display(), log.adam_steps))
        }
        Command::Finetune { common: c, epochs, checkpoint } => {
            let mut cfg = resolve_config(&c)?;
            if let Some(e) = epochs {
                cfg.tl_epochs = e;
            }
            refuse_overwrite(c.force, &[c.out.join(pipeline::TL_CHECKPOINT)])?;
            let log = pipeline::cmd_finetune(&cfg, &c.out, checkpoint.as_deref(), progress(c.quiet, "tl"))?;
            say(stdout, format!("wrote {} after {} Adam steps", c.out.join(pipeline::TL_CHECKPOINT).display(), log.adam_steps))
        }
        Command::Eval { common: c, checkpoint } => {
            let cfg = resolve_config(&c)?;
            let reports = pipeline::cmd_eval(&cfg, &c.out, checkpoint.as_deref())?;
            write!(stdout, "{}", format_table(&reports)).map_err(|e| Error::io("<stdout>", e))
        }
        Command::Cam { common: c, checkpoint, panels, ids, class, method, localization } => {
            let mut cfg = resolve_config(&c)?;
            if let Some(m) = method {
                cfg.cam_method = pipeline::parse_method(&m)?;
            }
            let class = class
                .map(|s| s.parse::<Label>().map_err(Error::Config))
                .transpose()?;
            let panels = panels.map(|p| parse_panels(&p, &c.out)).transpose()?;
            let request = CamRequest { checkpoint: checkpoint.clone(), panels: panels.clone(), ids, class };
            let written = pipeline::cmd_cam(&cfg, &c.out, &request)?;
            say(stdout, format!("wrote {} overlays to {}", written.len(), c.out.join("cam").display()))?;
            if localization {
                let reference = checkpoint.unwrap_or_else(|| c.out.join(pipeline::TL_CHECKPOINT));
                let models = match panels {
                    Some((a, b)) => vec![a, b],
                    None => vec![reference.clone()],
                };
                let rates = pipeline::test_localization(&cfg, &c.out, &reference, &models, class)?;
                for (m, l) in models.iter().zip(rates) {
                    say(stdout, format!("{}: peak in box for {}/{} ({:.3})", m.display(), l.hits, l.total, l.rate()))?;
                }
            }
            Ok(())
        }
        Command::Report(c) => {
            let reports = pipeline::cmd_report(&c.out)?;
            write!(stdout, "{}", format_table(&reports)).map_err(|e| Error::io("<stdout>", e))
        }
        Command::Run(c) => {
            let cfg = resolve_config(&c)?;
            let quiet = c.quiet;
            let reports = pipeline::cmd_run(&cfg, &c.out, c.force, |phase, r| progress(quiet, phase)(r))?;
            write!(stdout, "{}", format_table(&reports)).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Parse arguments, run, and map the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = configure_threads().and_then(|()| execute(cli, &mut std::io::stdout()));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common(args: &[&str]) -> Common {
        let mut full = vec!["eo2sar", "synth"];
        full.extend_from_slice(args);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Synth(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed=3\ninput_size=48\n").unwrap();
        let path = file.to_str().unwrap();
        let cfg = resolve_config(&common(&["--config", path, "--set", "input_size=32", "--seed", "11"])).unwrap();
        assert_eq!((cfg.seed, cfg.network.input_size), (11, 32));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for args in [&["--set", "nonsense"][..], &["--set", "dropout_p=2"], &["--set", "what=1"]] {
            let err = resolve_config(&common(args)).unwrap_err();
            assert_eq!(exit_code(&err), EXIT_CONFIG, "{err}");
        }
    }

    #[test]
    fn panels_flag_defaults_to_phase_checkpoints() {
        let cli = Cli::try_parse_from(["eo2sar", "cam", "--panels"]).unwrap();
        let Command::Cam { panels, .. } = cli.command else { unreachable!() };
        let (a, b) = parse_panels(&panels.unwrap(), Path::new("o")).unwrap();
        assert_eq!((a, b), (Path::new("o").join("eo_model.ckpt"), Path::new("o").join("tl_model.ckpt")));
        assert!(parse_panels("one", Path::new("o")).is_err());
    }

    #[test]
    fn unknown_subcommand_exits_with_config_status() {
        assert_eq!(main_with_args(["eo2sar", "fly"]), EXIT_CONFIG);
    }
}
