//! Command-line front end. Failures surface as a single stderr line
//! `error: <code>: <detail>` with exit status 2 for bad input (config,
//! schema, unknown trial, empty data) and 1 for anything that went wrong at
//! runtime.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::agent::run_trial_with;
use crate::dataset::{
    read_config, read_demographics, read_records, read_tlx, write_dataset, write_text, DatasetError, CONFIG_FILE,
    DATASET_FILE,
};
use crate::harness::{plan_trials, run_experiment, ExperimentConfig, ExperimentError};
use crate::stats::{analyze, StatsError};
use crate::svg::{box_plot, radar_chart};
use crate::wire;

#[derive(Debug, Parser)]
#[command(name = "drillguide", version, about = "Drill-positioning guidance simulator and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulated within-subject experiment.
    Simulate {
        /// Experiment config (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Master seed, overriding the config.
        #[arg(long, env = "DRILLGUIDE_SEED")]
        seed: Option<u64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Statistical analysis of a dataset.
    Analyze {
        /// `dataset.csv`, or a directory containing one.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tlx: Option<PathBuf>,
        #[arg(long)]
        demographics: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run one recorded trial and print its frames as JSON lines.
    Replay {
        /// Simulation output directory (or its `dataset.csv`); `config.json`
        /// must sit next to the CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        subject: u32,
        /// Index among that subject's rows, in file order.
        #[arg(long)]
        trial: usize,
    },
    /// Serve the v1 frame protocol over TCP on 127.0.0.1.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a config file and print the effective config.
    ValidateConfig { config: PathBuf },
}

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub detail: String,
    pub exit: u8,
}

impl CliError {
    fn input(code: &'static str, detail: impl ToString) -> Self {
        Self { code, detail: detail.to_string(), exit: 2 }
    }

    fn runtime(code: &'static str, detail: impl ToString) -> Self {
        Self { code, detail: detail.to_string(), exit: 1 }
    }

    /// The single stderr line for this error.
    pub fn line(&self) -> String {
        format!("error: {}: {}", self.code, self.detail.replace('\n', " "))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Empty => CliError::input("no_trials", "no trials"),
            DatasetError::Schema { .. } => CliError::input("schema", e),
            DatasetError::Config { .. } => CliError::input("config", e),
            DatasetError::Io { .. } => CliError::runtime("io", e),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let cfg = match path {
        None => ExperimentConfig::default(),
        Some(p) => read_config(p).map_err(|e| match e {
            DatasetError::Io { path, source } => CliError::input("config", format!("{}: {source}", path.display())),
            other => CliError::input("config", other),
        })?,
    };
    cfg.validate().map_err(|e| CliError::input("config", e))?;
    Ok(cfg)
}

fn dataset_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(DATASET_FILE)
    } else {
        data.to_path_buf()
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed, workers } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
            let ds = run_experiment(&cfg, workers).map_err(|e| match e {
                ExperimentError::Config(c) => CliError::input("config", c),
                ExperimentError::Pool(p) => CliError::runtime("runtime", p),
            })?;
            write_dataset(&out, &ds)?;
            if !ds.failures.is_empty() {
                return Err(CliError::runtime(
                    "trial_failed",
                    format!("{} trial(s) aborted, first: {}", ds.failures.len(), ds.failures[0]),
                ));
            }
            let _ = writeln!(stdout, "wrote {} records to {}", ds.records.len(), out.join(DATASET_FILE).display());
            Ok(())
        }
        Command::Analyze { data, tlx, demographics, out } => {
            let records = read_records(&dataset_path(&data))?;
            let tlx = tlx.as_deref().map(read_tlx).transpose()?;
            let demo = demographics.as_deref().map(read_demographics).transpose()?;
            let report = analyze(&records, tlx.as_deref(), demo.as_deref()).map_err(|e| match e {
                StatsError::NoTrials => CliError::input("no_trials", "no trials"),
                StatsError::MissingCell { .. } => CliError::input("schema", e),
                other => CliError::runtime("stats", other),
            })?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::runtime("io", format!("{}: {e}", out.display())))?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            write_text(&out.join("report.json"), &json)?;
            write_text(&out.join("report.txt"), &report.to_text())?;
            write_text(&out.join("radar.csv"), &report.to_radar_csv())?;
            write_text(&out.join("radar.svg"), &radar_chart(&report))?;
            for m in &report.metrics {
                write_text(&out.join(format!("box_{}.svg", m.metric)), &box_plot(m))?;
            }
            let _ = writeln!(stdout, "analyzed {} trials from {} subjects", report.n_trials, report.n_subjects);
            Ok(())
        }
        Command::Replay { data, subject, trial } => replay(&data, subject, trial, stdout),
        Command::Serve { port, config } => {
            let cfg = load_config(config.as_deref())?;
            let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| CliError::runtime("io", e))?;
            let addr = listener.local_addr().map_err(|e| CliError::runtime("io", e))?;
            let _ = writeln!(stdout, "listening on {addr}");
            let _ = stdout.flush();
            wire::serve(listener, cfg).map_err(|e| CliError::runtime("io", e))
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(Some(&config))?;
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(())
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn replay(data: &Path, subject: u32, index: usize, stdout: &mut dyn Write) -> Result<(), CliError> {
    let csv_path = dataset_path(data);
    let cfg_path = csv_path.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE);
    let cfg = load_config(Some(&cfg_path))?;
    let records = read_records(&csv_path)?;
    let rec = records
        .iter()
        .filter(|r| r.subject == subject)
        .nth(index)
        .ok_or_else(|| CliError::input("unknown_trial", format!("subject {subject} has no trial {index}")))?;
    let plan = plan_trials(&cfg).map_err(|e| CliError::input("config", e))?;
    let planned = plan
        .iter()
        .find(|p| p.key.subject == rec.subject && p.key.condition == rec.condition && p.key.trial == rec.trial)
        .ok_or_else(|| {
            CliError::input(
                "unknown_trial",
                format!("{}/{}/{} is not part of the configured experiment", rec.subject, rec.condition, rec.trial),
            )
        })?;
    let mut out = std::io::BufWriter::new(stdout);
    let mut io_result = Ok(());
    let replayed = run_trial_with(
        planned.key,
        &planned.target,
        &planned.start,
        &planned.params,
        &cfg.widget,
        cfg.timeout_s,
        |frame| {
            if io_result.is_ok() {
                io_result = writeln!(out, "{}", frame.to_canonical_json());
            }
        },
    );
    io_result.and_then(|_| out.flush()).map_err(|e| CliError::runtime("io", e))?;
    let same = replayed.seed == rec.seed
        && replayed.timed_out == rec.timed_out
        && close(replayed.task_time, rec.task_time)
        && close(replayed.error.pm, rec.error.pm)
        && close(replayed.error.rm, rec.error.rm);
    if !same {
        return Err(CliError::runtime(
            "replay_mismatch",
            format!(
                "replayed trial differs from the dataset (pm {} vs {}, rm {} vs {}, time {} vs {})",
                replayed.error.pm, rec.error.pm, replayed.error.rm, rec.error.rm, replayed.task_time, rec.task_time
            ),
        ));
    }
    Ok(())
}
