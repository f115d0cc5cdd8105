mod commands;
mod fail;
mod grid;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "surro", version, about = "Weather-aware building energy surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a primary and an alternate weather year per manifest location.
    GenWeather(GenWeather),
    /// Convert an EPW file to the internal 4-feature CSV.
    ParseEpw(ParseEpw),
    /// Weekly vs annual variance and pairwise cosine similarities.
    Variability(Variability),
    /// Build a training dataset (LHS designs × weekly oracle targets).
    GenData(GenData),
    /// Train a surrogate, an autoencoder, or a head on a frozen autoencoder.
    Train(Train),
    /// Train every grid row and score it on every test location.
    CrossEval(CrossEval),
    /// Render a matrix CSV as an SVG heatmap.
    Report(Report),
}

#[derive(Args)]
pub struct GenWeather {
    /// Climate manifest; the built-in ten-location suite when omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ParseEpw {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct Variability {
    #[arg(long)]
    pub weather: PathBuf,
    /// Comma-separated location ids; every primary year in the directory when omitted.
    #[arg(long, value_delimiter = ',')]
    pub locs: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GenData {
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub locs: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub designs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the alternate years (validation data). The scaler is still fitted
    /// on the primary years, so the result pairs with the training dataset.
    #[arg(long)]
    pub alternate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct Train {
    /// tcn | transformer | autoencoder
    #[arg(long)]
    pub encoder: String,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val_data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// joint | autoencoder | head; overrides `[train] stage`.
    #[arg(long)]
    pub stage: Option<String>,
    /// Pretrained autoencoder directory (stage = head).
    #[arg(long)]
    pub autoencoder: Option<PathBuf>,
    /// Overrides `[train] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, hide = true)]
    pub inject_nan: Option<usize>,
}

#[derive(Args)]
pub struct CrossEval {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rows trained concurrently; defaults to the available cores.
    #[arg(long, env = "SURRO_JOBS")]
    pub jobs: Option<usize>,
    /// Overrides `[grid] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct Report {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { fail::USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenWeather(a) => commands::gen_weather(&a),
        Command::ParseEpw(a) => commands::parse_epw(&a),
        Command::Variability(a) => commands::variability(&a),
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::CrossEval(a) => commands::cross_eval(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
