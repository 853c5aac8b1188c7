mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mobikg::io::{DeriveSettings, IoError};

/// Mobility knowledge graph pipeline.
#[derive(Debug, Parser, Serialize)]
#[command(name = "mobikg", version, about)]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory that receives every file the command writes.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmd {
    /// Load and validate a dataset, then write it back in normalized form.
    Ingest(IngestArgs),
    /// Generate a scenario with planted hotspots, flows and groups.
    Synth(SynthArgs),
    /// Build the PKG from a dataset.
    Derive(DeriveArgs),
    /// Mine cascading or co-occurrence patterns from a PKG.
    Mine(MineArgs),
    /// Weekly spatial correlation under every adjacency metric.
    ScPanel(ScPanelArgs),
    /// Train the hotspot classifier.
    Train(TrainArgs),
    /// Classify every region at one time.
    Predict(PredictArgs),
    /// List users who shared a place with an infected user.
    Trace(TraceArgs),
    /// Sweep the fog and cloud-only reporting models over payload sizes.
    Fogsim(FogArgs),
    /// Time PKG construction and queries at a given size.
    BenchPkg(BenchArgs),
}

impl Cmd {
    /// Manifest file stem; `mine` includes the pattern kind.
    pub fn manifest_stem(&self) -> String {
        match self {
            Cmd::Mine(a) => format!("mine-{}", a.kind.as_str()),
            _ => self.name().to_string(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Ingest(_) => "ingest",
            Cmd::Synth(_) => "synth",
            Cmd::Derive(_) => "derive",
            Cmd::Mine(_) => "mine",
            Cmd::ScPanel(_) => "sc-panel",
            Cmd::Train(_) => "train",
            Cmd::Predict(_) => "predict",
            Cmd::Trace(_) => "trace",
            Cmd::Fogsim(_) => "fogsim",
            Cmd::BenchPkg(_) => "bench-pkg",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Directory holding the files under their standard names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub places: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub routes: Option<PathBuf>,
    /// JSON object mapping column roles to names.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Scenario config as JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Overrides applied on top of the defaults or a `--settings` file.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Thresholds {
    /// Derive settings as JSON.
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Minimum users in a flow.
    #[arg(long)]
    pub nu: Option<usize>,
    /// Sets both participation thresholds.
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub pi1: Option<f64>,
    #[arg(long)]
    pub pi2: Option<f64>,
    /// Neighbor buffer in meters.
    #[arg(long)]
    pub nr_m: Option<f64>,
    /// Neighbor span in days.
    #[arg(long)]
    pub nr_days: Option<f64>,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub stay_radius_m: Option<f64>,
    #[arg(long)]
    pub stay_min_s: Option<i64>,
    #[arg(long)]
    pub group_tol_s: Option<i64>,
}

impl Thresholds {
    pub fn resolve(&self) -> anyhow::Result<DeriveSettings> {
        let mut s = match &self.settings {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| IoError::File { path: p.clone(), source: e })?;
                serde_json::from_str(&text).map_err(|e| IoError::Parse {
                    file: p.clone(),
                    line: e.line() as u64,
                    msg: e.to_string(),
                })?
            }
            None => DeriveSettings::default(),
        };
        if let Some(v) = self.nu {
            s.flow.nu = v;
        }
        if let Some(v) = self.pi {
            s.miner.pi1 = v;
            s.miner.pi2 = v;
        }
        if let Some(v) = self.pi1 {
            s.miner.pi1 = v;
        }
        if let Some(v) = self.pi2 {
            s.miner.pi2 = v;
        }
        if let Some(v) = self.nr_m {
            s.neighbor.spatial_buffer_m = v;
        }
        if let Some(v) = self.nr_days {
            s.neighbor.temporal_span_s = (v * 86_400.0).round() as i64;
        }
        if let Some(v) = self.max_size {
            s.miner.max_size = v;
        }
        if let Some(v) = self.stay_radius_m {
            s.stay_radius_m = v;
        }
        if let Some(v) = self.stay_min_s {
            s.stay_min_s = v;
        }
        if let Some(v) = self.group_tol_s {
            s.group_tol_s = v;
        }
        s.neighbor.validate()?;
        s.miner.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DeriveArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Cascading,
    Cooccurrence,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Cascading => "cascading",
            Kind::Cooccurrence => "cooccurrence",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MineArgs {
    #[arg(long)]
    pub pkg: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Dataset used to locate entities and add region context events.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Args, Serialize)]
pub struct ScPanelArgs {
    #[arg(long)]
    pub data: PathBuf,
}

/// Inputs shared by `train` and `predict`.
#[derive(Debug, Args, Serialize)]
pub struct SampleInputs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub pkg: PathBuf,
    /// Pattern files from `mine`; may be repeated.
    #[arg(long)]
    pub patterns: Vec<PathBuf>,
    /// SC panel from `sc-panel`.
    #[arg(long)]
    pub sc: Option<PathBuf>,
    /// Visits per sample sequence.
    #[arg(long, default_value_t = 5)]
    pub seq_len: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: SampleInputs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub cell_size: usize,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Skip-gram epochs for the location table; 0 keeps random init.
    #[arg(long, default_value_t = 20)]
    pub embed_epochs: usize,
    #[arg(long)]
    pub no_attention: bool,
    #[arg(long)]
    pub no_bilstm: bool,
    #[arg(long)]
    pub no_pkg_features: bool,
    #[arg(long)]
    pub no_two_phase: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inputs: SampleInputs,
    #[arg(long)]
    pub model: PathBuf,
    /// Unix time to classify at; defaults to the end of the last day.
    #[arg(long)]
    pub at: Option<i64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    #[arg(long)]
    pub pkg: PathBuf,
    /// Dataset whose places resolve visit locations.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value_t = 0.0)]
    pub spatial_tol_m: f64,
    #[arg(long, default_value_t = 0)]
    pub time_tol_s: i64,
}

#[derive(Debug, Args, Serialize)]
pub struct FogArgs {
    /// Parameter file; the built-in reference model when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub entities: usize,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOBIKG_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e:#}", commands::category(&e));
            ExitCode::from(1)
        }
    }
}
