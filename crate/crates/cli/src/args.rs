//! Command-line flags. Every flag is optional and overrides the value from
//! `--config`, which in turn overrides the built-in defaults.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "cerebroflow",
    version,
    about = "Vascular graphs, Poiseuille flow, and a learned flow surrogate"
)]
pub struct Cli {
    /// JSON run configuration, or any JSON artifact written by this tool.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smooth, threshold and density-filter a volume into a vessel mask.
    Segment {
        /// Input volume: `.nii` or a raw-format `.json` sidecar.
        #[arg(long)]
        input: PathBuf,
        /// Output mask sidecar (`.json`; labels go to the matching `.raw`).
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        segment: SegmentArgs,
    },
    /// Skeletonize a mask and trace it into a vascular graph.
    Graph {
        /// Mask sidecar written by `segment`.
        #[arg(long)]
        mask: PathBuf,
        /// Output graph JSON.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        extract: ExtractArgs,
    },
    /// Generate synthetic vascular networks into a dataset directory.
    Synth {
        /// Dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Solve steady Poiseuille flow on a graph.
    Solve {
        /// Graph JSON.
        #[arg(long)]
        graph: PathBuf,
        /// Output flow state JSON.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Add perturbed, solved samples for every network of a dataset.
    Augment {
        /// Dataset directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Assign networks to cross-validation folds.
    Split {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Train the surrogate on one fold.
    Train {
        /// Dataset directory with samples and a split plan.
        #[arg(long)]
        data: PathBuf,
        /// Fold to train.
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Output directory for the checkpoint and loss history.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a checkpoint on the held-out networks of a fold.
    Eval {
        /// Dataset directory with samples and a split plan.
        #[arg(long)]
        data: PathBuf,
        /// Fold whose test networks are scored.
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for metrics and scatter data.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        plot: PlotArgs,
    },
    /// Render a truth/prediction scatter CSV as SVG.
    Plot {
        /// CSV with `truth,pred` columns.
        #[arg(long)]
        input: PathBuf,
        /// Output SVG.
        #[arg(long)]
        output: PathBuf,
        /// Plot title.
        #[arg(long)]
        title: Option<String>,
    },
    /// Run synth, augment, split, cross-validated training, evaluation and plots.
    Pipeline {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        augment: AugmentArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        plot: PlotArgs,
    },
    /// Write a noisy Y-bifurcation test volume and its ground truth.
    Phantom {
        /// Output volume: `.nii`, or `.json` for the raw format.
        #[arg(long)]
        output: PathBuf,
        /// Output ground-truth JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        phantom: PhantomArgs,
    },
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value.clone() {
            $target = v;
        }
    };
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Gaussian sigma in voxels.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Hysteresis low threshold.
    #[arg(long)]
    pub low: Option<f64>,
    /// Hysteresis high threshold.
    #[arg(long)]
    pub high: Option<f64>,
    /// DBSCAN radius in mm.
    #[arg(long)]
    pub eps: Option<f64>,
    /// DBSCAN core-point neighbor count.
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// Smallest cluster kept, in voxels.
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
}

impl SegmentArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.segment.sigma, self.sigma);
        set!(cfg.segment.low, self.low);
        set!(cfg.segment.high, self.high);
        if self.eps.is_some() {
            cfg.segment.eps = self.eps;
        }
        set!(cfg.segment.min_samples, self.min_samples);
        set!(cfg.segment.min_cluster_size, self.min_cluster_size);
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Terminal branches shorter than this many junction radii are pruned.
    #[arg(long)]
    pub spur_factor: Option<f64>,
    /// Inlet node IDs (comma separated); default is the widest endpoint.
    #[arg(long, value_delimiter = ',')]
    pub inlets: Option<Vec<usize>>,
    /// Outlet node IDs (comma separated); default is every other endpoint.
    #[arg(long, value_delimiter = ',')]
    pub outlets: Option<Vec<usize>>,
}

impl ExtractArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.extract.spur_factor, self.spur_factor);
        set!(cfg.extract.boundary.inlets, self.inlets);
        set!(cfg.extract.boundary.outlets, self.outlets);
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Inlet pressure in Pa.
    #[arg(long)]
    pub inlet_pressure: Option<f64>,
    /// Outlet pressure in Pa.
    #[arg(long)]
    pub outlet_pressure: Option<f64>,
    /// Viscosity in Pa s.
    #[arg(long)]
    pub viscosity: Option<f64>,
}

impl SolveArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.solve.inlet_pressure, self.inlet_pressure);
        set!(cfg.solve.outlet_pressure, self.outlet_pressure);
        set!(cfg.solve.viscosity, self.viscosity);
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of synthetic networks.
    #[arg(long)]
    pub networks: Option<usize>,
    /// Smallest tree depth.
    #[arg(long)]
    pub depth_min: Option<usize>,
    /// Largest tree depth.
    #[arg(long)]
    pub depth_max: Option<usize>,
    /// Most loops per network.
    #[arg(long)]
    pub max_loops: Option<usize>,
    /// Most stenoses per network.
    #[arg(long)]
    pub max_stenoses: Option<usize>,
}

impl SynthArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.synth.networks, self.networks);
        set!(cfg.synth.depth[0], self.depth_min);
        set!(cfg.synth.depth[1], self.depth_max);
        set!(cfg.synth.max_loops, self.max_loops);
        set!(cfg.synth.max_stenoses, self.max_stenoses);
    }
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Augmented samples per network.
    #[arg(long)]
    pub augment_count: Option<usize>,
    /// Lower bound of the inlet pressure draw in Pa.
    #[arg(long)]
    pub inlet_min: Option<f64>,
    /// Upper bound of the inlet pressure draw in Pa.
    #[arg(long)]
    pub inlet_max: Option<f64>,
    /// Lower bound of the radius factor draw.
    #[arg(long)]
    pub radius_min: Option<f64>,
    /// Upper bound of the radius factor draw.
    #[arg(long)]
    pub radius_max: Option<f64>,
}

impl AugmentArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.augment_count, self.augment_count);
        set!(cfg.augment.inlet_pressure[0], self.inlet_min);
        set!(cfg.augment.inlet_pressure[1], self.inlet_max);
        set!(cfg.augment.radius_factor[0], self.radius_min);
        set!(cfg.augment.radius_factor[1], self.radius_max);
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
}

impl SplitArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.folds, self.folds);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training epochs per fold.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Final learning rate of the cosine schedule.
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Message-passing layers per pass.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Refinement passes.
    #[arg(long)]
    pub passes: Option<usize>,
    /// Graphs per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epochs between validation checks.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Loss weight of intermediate passes.
    #[arg(long)]
    pub aux_weight: Option<f64>,
    /// Share of training networks held out for validation.
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.train.epochs, self.epochs);
        set!(cfg.train.lr0, self.lr);
        set!(cfg.train.lr_min, self.lr_min);
        set!(cfg.train.model.hidden, self.hidden);
        set!(cfg.train.model.layers, self.layers);
        set!(cfg.train.model.passes, self.passes);
        set!(cfg.train.batch_size, self.batch_size);
        set!(cfg.train.eval_every, self.eval_every);
        set!(cfg.train.aux_weight, self.aux_weight);
        set!(cfg.val_fraction, self.val_fraction);
    }
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Points per scatter plot.
    #[arg(long)]
    pub plot_points: Option<usize>,
}

impl PlotArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.plot_points, self.plot_points);
    }
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Grid edge length in voxels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Voxel spacing in mm.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Trunk radius in voxels.
    #[arg(long)]
    pub trunk_radius: Option<f64>,
    /// Daughter radius in voxels.
    #[arg(long)]
    pub branch_radius: Option<f64>,
    /// Standard deviation of the additive noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of background voxels set to full intensity.
    #[arg(long)]
    pub speckle: Option<f64>,
}

impl PhantomArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.phantom.size, self.size);
        set!(cfg.phantom.spacing, self.spacing);
        set!(cfg.phantom.trunk_radius, self.trunk_radius);
        set!(cfg.phantom.branch_radius, self.branch_radius);
        set!(cfg.phantom.noise_sigma, self.noise);
        set!(cfg.phantom.speckle_fraction, self.speckle);
    }
}
