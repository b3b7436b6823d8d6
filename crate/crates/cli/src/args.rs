use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use statdec::{Preset, Spread, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "statdec", version, about = "Deep embedded clustering for imbalanced data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pretrain the autoencoder and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Run the joint clustering phase (pretraining inline unless a checkpoint is given).
    Train(TrainArgs),
    /// Cluster a labeled dataset with a trained model and report ACC/NMI/ARI.
    Eval(EvalArgs),
    /// Subsample a balanced labeled dataset into a step or long-tailed one.
    MakeImbalanced(ImbalanceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Feature file: IDX images, or CSV when the name ends in `.csv`.
    #[arg(long)]
    pub data: PathBuf,
    /// Ground-truth labels: an IDX label file or one integer per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CSV column holding the labels (name, or index without a header).
    #[arg(long)]
    pub label_column: Option<String>,
    /// Keep CSV features as-is instead of min-max scaling each column.
    #[arg(long)]
    pub no_scale: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Mnist,
    Cifar10,
    Cifar100,
    Refuge,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SpreadArg {
    Std,
    Variance,
}

/// Hyperparameters. Flags override `--config`, which overrides the defaults.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON file with (a subset of) the training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset preset for batch size and target update interval.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub update_interval: Option<usize>,
    /// Divide the iteration budgets and LR decay period by this (not the update interval).
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub pretrain_iters: Option<usize>,
    #[arg(long)]
    pub finetune_iters: Option<usize>,
    /// Hidden widths of the encoder, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub kmeans_restarts: Option<usize>,
    #[arg(long, value_enum)]
    pub spread: Option<SpreadArg>,
    /// Use the plain DEC target instead of the frequency-weighted one.
    #[arg(long)]
    pub no_weighted_target: bool,
    /// Disable the statistics pooling layer in the decoder.
    #[arg(long)]
    pub no_stat_pooling: bool,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Pretrained checkpoint; pretraining runs inline when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Skip the SVG charts.
    #[arg(long)]
    pub no_charts: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained checkpoint (must carry centroids).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Recorded in the metrics file.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `metrics.json`; printed only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ImbalanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `step` or `longtail`.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub ratio: f64,
    /// Make the second half of the classes the majority (step only).
    #[arg(long)]
    pub invert: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl ConfigArgs {
    /// Defaults, then preset, then the JSON file, then explicit flags.
    pub fn resolve(&self) -> Result<TrainConfig, String> {
        let mut c = match self.preset {
            Some(p) => TrainConfig::preset(match p {
                PresetArg::Mnist => Preset::Mnist,
                PresetArg::Cifar10 => Preset::Cifar10,
                PresetArg::Cifar100 => Preset::Cifar100,
                PresetArg::Refuge => Preset::Refuge,
            }),
            None => TrainConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut base = serde_json::to_value(&c).map_err(|e| e.to_string())?;
            let patch: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            merge(&mut base, patch);
            c = serde_json::from_value(base).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(k, lambda, gamma, delta, eta0, batch, update_interval, scale, max_iters, pretrain_iters, finetune_iters, hidden, embed_dim, dropout, kmeans_restarts);
        if let Some(s) = self.spread {
            c.spread = match s {
                SpreadArg::Std => Spread::Std,
                SpreadArg::Variance => Spread::Variance,
            };
        }
        if self.no_weighted_target {
            c.ablation.weighted_target = false;
        }
        if self.no_stat_pooling {
            c.ablation.stat_pooling = false;
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

// objects merge key by key so a partial file keeps the preset's other fields
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}
