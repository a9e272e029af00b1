mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Settings;

/// Plan, simulate and sweep group-based coded MapReduce.
#[derive(Parser)]
#[command(name = "gcmr", version)]
struct Cli {
    /// Flat `key = value` config file; flags take precedence over it.
    #[arg(long, env = "GCMR_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subpacketization, effective speedups and closed-form delays.
    Plan(Flags),
    /// Map, coded shuffle and reduce on a dataset, checked against the oracle.
    Run(Flags),
    /// CSV of delays over lists of K, L, t and S_max.
    Sweep(Flags),
    /// Effective gain under uneven intermediate value sizes.
    Uneven(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Node count (sweep: comma-separated list).
    #[arg(long = "K")]
    k: Option<String>,
    /// Group size (sweep: list).
    #[arg(long = "L")]
    l: Option<String>,
    /// Redundancy t = K gamma (sweep: list).
    #[arg(long)]
    t: Option<String>,
    /// Maximum subpacketization, or inf (sweep: list).
    #[arg(long)]
    smax: Option<String>,
    /// Reference communication time, integer or p/q.
    #[arg(long)]
    tc: Option<String>,
    /// word-count, sort-bucket or sum.
    #[arg(long)]
    job: Option<String>,
    /// Newline-delimited records.
    #[arg(long)]
    dataset: Option<String>,
    /// Generated dataset, "F=<n>,len=<n>".
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// wireless or wired.
    #[arg(long)]
    mode: Option<String>,
    /// Noise variance; 0 disables noise.
    #[arg(long)]
    noise: Option<String>,
    /// Transmit power, used only with noise.
    #[arg(long)]
    power: Option<String>,
    /// Also write the report (uneven: the measured profile) here.
    #[arg(long)]
    out: Option<String>,
    /// CSV output path (sweep: rows, uneven: per-slot padding).
    #[arg(long)]
    csv: Option<String>,
    /// Per-slot trace, one JSON object per line.
    #[arg(long)]
    trace: Option<String>,
    /// Size profile file for uneven; the bundled example when absent.
    #[arg(long)]
    profile: Option<String>,
}

impl Flags {
    fn pairs(self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("K", self.k),
            ("L", self.l),
            ("t", self.t),
            ("smax", self.smax),
            ("tc", self.tc),
            ("job", self.job),
            ("dataset", self.dataset),
            ("synthetic", self.synthetic),
            ("seed", self.seed),
            ("mode", self.mode),
            ("noise", self.noise),
            ("power", self.power),
            ("out", self.out),
            ("csv", self.csv),
            ("trace", self.trace),
            ("profile", self.profile),
        ]
    }
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub const CONFIG: u8 = 2;
    pub const DECODE: u8 = 3;
    pub const ORACLE: u8 = 4;
    pub const RECONCILE: u8 = 5;
    pub const COVERAGE: u8 = 6;

    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Self::CONFIG, message)
    }
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Self::new(1, format!("{e:#}"))
    }
}

type Handler = fn(&Settings) -> Result<(), Exit>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (flags, cmd): (Flags, Handler) = match cli.command {
        Command::Plan(f) => (f, commands::plan),
        Command::Run(f) => (f, commands::run),
        Command::Sweep(f) => (f, commands::sweep),
        Command::Uneven(f) => (f, commands::uneven),
    };
    let result = Settings::resolve(cli.config.as_deref(), &flags.pairs()).and_then(|s| cmd(&s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
