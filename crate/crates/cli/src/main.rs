//! `bbav`: batch tools around the oriented-detection core.

mod commands;
mod error;
mod fsio;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bbav", version, about = "Oriented object detection: encode, decode, tile, merge and evaluate")]
struct Cli {
    /// Worker threads for file-level parallelism (default: all cores).
    #[arg(long, global = true, env = "BBAV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DOTA annotation files to binary target maps.
    Encode(EncodeArgs),
    /// Target or predicted maps to detection records (JSON lines).
    Decode(DecodeArgs),
    /// Pairwise rotated IOU between the boxes of two files.
    Iou(IouArgs),
    /// Class-wise rotated NMS on detection records, per image.
    Nms(NmsArgs),
    /// Rotated-IOU mAP of detections against DOTA ground truth.
    Eval(EvalArgs),
    /// Split images into overlapping patches and crop their annotations.
    Tile(TileArgs),
    /// Map per-tile detections back to their images and remove duplicates.
    Merge(MergeArgs),
    /// Run the synthetic detector pipeline over a range of seeds.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory of DOTA `.txt` annotation files.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory for `.bbavmap` files and `.hdr` sidecars.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    /// Number of heatmap classes (DOTA category indices 0..K).
    #[arg(long, default_value_t = 15)]
    pub classes: usize,
    /// Directory with the images, used to look up each image's size.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Size shared by all images, as WIDTHxHEIGHT (e.g. 600x600 for tiles).
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<(u32, u32)>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Directory of `.bbavmap` files.
    #[arg(long)]
    pub maps: PathBuf,
    /// Output JSON-lines file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub topk: usize,
    #[arg(long, default_value_t = 0.1)]
    pub score: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct IouArgs {
    /// Boxes as DOTA annotation lines or detection records.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub iou: f64,
    /// Write kept detections here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detection records (JSON lines).
    #[arg(long)]
    pub dets: PathBuf,
    /// Directory of DOTA ground-truth files named after the images.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// JSON report with the per-class AP table.
    #[arg(long)]
    pub report: PathBuf,
    /// Directory for SVG precision-recall curves and box overlays.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// Directory with the images; only their sizes are read.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory for `manifest.json` and per-tile annotations.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub patch: u32,
    /// Pixels shared by neighbouring tiles.
    #[arg(long, default_value_t = 100, conflicts_with = "step")]
    pub overlap: u32,
    /// Distance between tile origins, instead of --overlap.
    #[arg(long)]
    pub step: Option<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
    pub scales: Vec<f64>,
    /// Size used for images not found in --images, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<(u32, u32)>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Detection records whose image field is a tile id; a file or a
    /// directory of `.jsonl` files.
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with optional [scene], [noise] and [pipeline] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of consecutive seeds, starting at the scene seed.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long)]
    pub report: PathBuf,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: u32 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("image size must be positive".into());
    }
    Ok((w, h))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Encode(a) => commands::encode(&a),
        Command::Decode(a) => commands::decode(&a),
        Command::Iou(a) => commands::iou(&a),
        Command::Nms(a) => commands::nms(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Tile(a) => commands::tile(&a),
        Command::Merge(a) => commands::merge(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
