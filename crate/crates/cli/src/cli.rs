use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use celldet_core::groundtruth::GtFormat;
use celldet_core::postprocess::DetectMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "celldet", version, about = "Cell detection ground truth, training, postprocessing and evaluation")]
pub struct Cli {
    /// TOML run configuration; defaults to $CELLDET_CONFIG when set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate synthetic cell/tissue scenes.
    Synth(SynthArgs),
    /// Build ground-truth maps for a scene.
    Gt(GtArgs),
    /// Train surrogate models on scenes.
    Train(TrainArgs),
    /// Predict probability maps for a scene.
    Predict(PredictArgs),
    /// Extract cell detections from predicted maps.
    Postprocess(PostprocessArgs),
    /// Score detections against annotations.
    Eval(EvalArgs),
    /// Run a comparison experiment on synthetic scenes.
    Experiment(ExperimentArgs),
    /// Draw annotations and detections over a scene image.
    Render(RenderArgs),
    /// Re-run the command recorded in a manifest and compare outputs.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Gt(_) => "gt",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Postprocess(_) => "postprocess",
            Command::Eval(_) => "eval",
            Command::Experiment(_) => "experiment",
            Command::Render(_) => "render",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out(&self) -> &PathBuf {
        match self {
            Command::Synth(a) => &a.out,
            Command::Gt(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Predict(a) => &a.out,
            Command::Postprocess(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Experiment(a) => &a.out,
            Command::Render(a) => &a.out,
            Command::Replay(a) => &a.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Synth(a) => a.out = out,
            Command::Gt(a) => a.out = out,
            Command::Train(a) => a.out = out,
            Command::Predict(a) => a.out = out,
            Command::Postprocess(a) => a.out = out,
            Command::Eval(a) => a.out = out,
            Command::Experiment(a) => a.out = out,
            Command::Render(a) => a.out = out,
            Command::Replay(a) => a.out = out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Circle,
    Hard,
    Soft,
}

impl From<FormatArg> for GtFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Circle => GtFormat::Circle,
            FormatArg::Hard => GtFormat::HardIs,
            FormatArg::Soft => GtFormat::SoftIs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueArg {
    None,
    Predicted,
    Leaked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetArg {
    Cells,
    Tissue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Soft,
    Hard,
}

impl From<ModeArg> for DetectMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Soft => DetectMode::Soft,
            ModeArg::Hard => DetectMode::Hard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhichArg {
    Formats,
    Sigma,
    Ctm,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GtArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum)]
    pub format: FormatArg,
    /// Gaussian width for soft maps; defaults to the configured value.
    #[arg(long)]
    pub sigma_um: Option<f64>,
    /// Disc radius for circle maps and unmatched cells.
    #[arg(long)]
    pub radius_px: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// A scene directory or a directory of scene directories.
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long, value_enum, default_value_t = TargetArg::Cells)]
    pub target: TargetArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Soft)]
    pub format: FormatArg,
    /// Tissue context fed to cell models.
    #[arg(long, value_enum, default_value_t = TissueArg::None)]
    pub tissue: TissueArg,
    /// Trained tissue models, required with tissue context.
    #[arg(long)]
    pub tissue_models: Option<PathBuf>,
    /// Overrides the configured number of folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// Average over the eight rotations and flips.
    #[arg(long)]
    pub tta: bool,
    #[arg(long, value_enum, default_value_t = TissueArg::None)]
    pub tissue: TissueArg,
    #[arg(long)]
    pub tissue_models: Option<PathBuf>,
    /// Use only the first N fold models.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PostprocessArgs {
    /// Directory holding predicted maps and their channels.json.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Soft)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub detections: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub annotations: Vec<PathBuf>,
    /// Organ tag per sample, for the per-organ table.
    #[arg(long, num_args = 1..)]
    pub organs: Vec<String>,
    #[arg(long)]
    pub radius_px: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub which: WhichArg,
    /// Overrides the configured number of seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Skip the annotated centroids.
    #[arg(long)]
    pub no_gt: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
