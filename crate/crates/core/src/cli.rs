//! Command-line front end: argument parsing, run configuration and the
//! subcommands. `main.rs` only forwards to [`run`].
//!
//! Exit codes: 0 success, 2 config or usage, 3 IO, 4 numerical divergence,
//! 5 gradcheck failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::degen::{degenerate, AugmentConfig};
use crate::imageio::{load_mask, render_mask};
use crate::layout::{build_dag, rasterize, DagEdge, PolyLayout, RoomTaxonomy};
use crate::losses::{gt_edge_map, ContrastiveConfig, EdgeLossConfig, LossWeights};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{
    infer, load_checkpoint, save_checkpoint, train, Checkpoint, ModelConfig, ModelError, OptimizerConfig,
    TrainConfig, TrainSetup, ToyModel,
};
use crate::synth::{gen_dataset, generate_sample, generate_samples, load_dataset, DatasetManifest, SynthConfig};
use crate::verify::{gradcheck_suite, SuiteConfig, KERNELS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_GRADCHECK: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Divergence(String),
    #[error("gradcheck failed: {0}")]
    Gradcheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Gradcheck(_) => EXIT_GRADCHECK,
        }
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn from_model(e: ModelError) -> CliError {
    match e {
        ModelError::Divergence { .. } => CliError::Divergence(e.to_string()),
        ModelError::Io(_) | ModelError::Checkpoint(_) => io(e),
        _ => config(e),
    }
}

/// Where the training samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory or manifest; when unset, `train_samples` are
    /// generated in memory from `[synth]`.
    pub manifest: Option<PathBuf>,
    pub train_samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { manifest: None, train_samples: 500 }
    }
}

/// Contents of the `--config` TOML file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Room-type taxonomy JSON; the built-in 11-type table when unset.
    pub taxonomy: Option<PathBuf>,
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub augment: AugmentConfig,
    pub weights: LossWeights,
    pub edge: EdgeLossConfig,
    pub contrastive: ContrastiveConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        Self {
            taxonomy: None,
            synth: SynthConfig { width: model.width, height: model.height, ..Default::default() },
            data: DataConfig::default(),
            augment: AugmentConfig::default(),
            weights: LossWeights::default(),
            edge: EdgeLossConfig::default(),
            contrastive: ContrastiveConfig::default(),
            model,
            optimizer: OptimizerConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a config file. Keys left out of a section keep the run
    /// defaults (so a `[synth]` block that only sets `seed` stays 64×64).
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        // strict parse first: its errors carry line and column
        toml::from_str::<RunConfig>(text).map_err(|e| CliError::Config(e.to_string()))?;
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        merge(&mut merged, user);
        merged.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// One seed for everything random.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.augment.seed = seed;
        self.train.seed = seed;
    }

    pub fn setup(&self) -> TrainSetup {
        TrainSetup {
            model: self.model.clone(),
            train: self.train.clone(),
            optimizer: self.optimizer,
            weights: self.weights,
            edge: self.edge,
            contrastive: self.contrastive,
            augment: self.augment.clone(),
        }
    }

    pub fn taxonomy(&self) -> Result<RoomTaxonomy, CliError> {
        match &self.taxonomy {
            None => Ok(RoomTaxonomy::default_lsun()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| io(format!("{}: {e}", p.display())))?;
                RoomTaxonomy::from_json(&text).map_err(config)
            }
        }
    }

    /// Check every section and return the resolved synth config.
    pub fn validate(&self, taxonomy: &RoomTaxonomy) -> Result<SynthConfig, CliError> {
        let synth = self.synth.resolved(taxonomy).map_err(config)?;
        self.setup().validate().map_err(config)?;
        Ok(synth)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "layoutforge", version, about = "Room-layout dataset, training and evaluation tools")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output directory (or file, for `render`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset
    Synth {
        /// Number of samples
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Train the toy model; writes checkpoint.lfck and epochs.jsonl
    Train {
        /// Dataset directory or manifest; overrides [data].manifest
        #[arg(long)]
        data: Option<PathBuf>,
        /// Held-out dataset whose PE is logged every epoch
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset; writes report.json
    Eval {
        /// Dataset directory or manifest
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint written by `train`
        #[arg(long, required_unless_present = "gt")]
        checkpoint: Option<PathBuf>,
        /// Score ground truth against itself
        #[arg(long)]
        gt: bool,
    },
    /// Finite-difference check of every loss kernel and the model
    Gradcheck {
        /// Random points per kernel
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Double the analytic gradient of one kernel
        #[arg(long, value_name = "KERNEL", num_args = 0..=1, default_missing_value = "dice")]
        inject_bug: Option<String>,
    },
    /// Render a label mask PNG or polygon JSON with the fixed palette
    Render {
        input: PathBuf,
        /// Overlay the ground-truth edge map
        #[arg(long)]
        edges: bool,
    },
    /// Write before.png and after.png for one degeneration edge
    DegenPreview {
        /// Dataset to take the sample from; generated from [synth] otherwise
        #[arg(long)]
        data: Option<PathBuf>,
        /// Sample id
        #[arg(long, default_value_t = 0)]
        sample: u64,
        /// `parent->child`
        #[arg(long)]
        edge: String,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAYOUTFORGE_LOG", "warn")).try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(g.threads).build().map_err(config)?;
    pool.install(|| match &cli.command {
        Command::Synth { n } => cmd_synth(&cfg, *n, g.out.as_deref()),
        Command::Train { data, val } => cmd_train(&cfg, data.as_deref(), val.as_deref(), g.out.as_deref()),
        Command::Eval { data, checkpoint, gt } => cmd_eval(data, checkpoint.as_deref(), *gt, g.out.as_deref()),
        Command::Gradcheck { points, inject_bug } => {
            cmd_gradcheck(g.seed.unwrap_or(0), *points, inject_bug.as_deref(), g.out.as_deref())
        }
        Command::Render { input, edges } => cmd_render(&cfg, input, *edges, g.out.as_deref()),
        Command::DegenPreview { data, sample, edge } => {
            cmd_degen_preview(&cfg, data.as_deref(), *sample, edge, g.out.as_deref())
        }
    })
}

fn out_dir(out: Option<&Path>, default: &str) -> Result<PathBuf, CliError> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn cmd_synth(cfg: &RunConfig, n: usize, out: Option<&Path>) -> Result<(), CliError> {
    let tax = cfg.taxonomy()?;
    let synth = cfg.validate(&tax)?;
    let dir = out_dir(out, "dataset")?;
    let manifest = gen_dataset(&synth, &tax, n, &dir).map_err(io)?;
    println!("wrote {} samples to {}", manifest.records.len(), dir.display());
    Ok(())
}

fn load_samples(path: &Path) -> Result<Vec<crate::synth::Sample>, CliError> {
    let manifest = DatasetManifest::load(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    load_dataset(&manifest).map_err(io)
}

pub fn cmd_train(cfg: &RunConfig, data: Option<&Path>, val: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let tax = cfg.taxonomy()?;
    let synth = cfg.validate(&tax)?;
    if (synth.width, synth.height) != (cfg.model.width, cfg.model.height) {
        return Err(CliError::Config(format!(
            "synth frame {}x{} differs from model input {}x{}",
            synth.width, synth.height, cfg.model.width, cfg.model.height
        )));
    }
    let samples = match data.or(cfg.data.manifest.as_deref()) {
        Some(p) => load_samples(p)?,
        None => generate_samples(&synth, &tax, 0..cfg.data.train_samples as u64).map_err(config)?,
    };
    if samples.is_empty() {
        return Err(CliError::Config("no training samples".into()));
    }
    let validation = val.map(load_samples).transpose()?;
    let dir = out_dir(out, "run")?;
    let outcome =
        train(&cfg.setup(), &samples, &tax, &synth, validation.as_deref(), Some(&dir)).map_err(from_model)?;
    let extra = serde_json::to_value(cfg).expect("config serializes");
    let ck = Checkpoint { model: cfg.model.clone(), extra, params: outcome.params };
    save_checkpoint(&ck, &dir.join("checkpoint.lfck")).map_err(from_model)?;
    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&serde_json::to_string(e).expect("log serializes"));
        log.push('\n');
    }
    fs::write(dir.join("epochs.jsonl"), log).map_err(io)?;
    if let Some(last) = outcome.log.last() {
        println!("epoch {}: loss {:.4} monitor pe {:.2}%", last.epoch, last.loss, last.pe);
    }
    println!("checkpoint written to {}", dir.join("checkpoint.lfck").display());
    Ok(())
}

pub fn cmd_eval(data: &Path, checkpoint: Option<&Path>, gt: bool, out: Option<&Path>) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(data).map_err(|e| io(format!("{}: {e}", data.display())))?;
    let report: EvalReport = if gt {
        evaluate(&manifest, |s| Ok::<_, String>(s.mask.clone()))
    } else {
        let path = checkpoint.expect("clap requires --checkpoint without --gt");
        let ck = load_checkpoint(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
        let model = ToyModel::new(ck.model.clone()).map_err(from_model)?;
        evaluate(&manifest, |s| infer(&model, &ck.params, &s.image))
    };
    let dir = out_dir(out, "eval")?;
    fs::write(dir.join("report.json"), report.to_json()).map_err(io)?;
    print!("{}", report.summary());
    Ok(())
}

pub fn cmd_gradcheck(seed: u64, points: usize, inject_bug: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(k) = inject_bug {
        if !KERNELS.contains(&k) {
            return Err(CliError::Config(format!("unknown kernel `{k}`, expected one of {}", KERNELS.join(", "))));
        }
    }
    if points == 0 {
        return Err(CliError::Config("--points must be positive".into()));
    }
    let cfg = SuiteConfig { seed, points, ..Default::default() };
    let checks = gradcheck_suite(&cfg, inject_bug);
    let mut text = String::new();
    for c in &checks {
        text.push_str(&format!("{c}\n"));
    }
    print!("{text}");
    if let Some(o) = out {
        fs::create_dir_all(o).map_err(io)?;
        fs::write(o.join("gradcheck.txt"), &text).map_err(io)?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gradcheck(failed.join(", ")))
    }
}

pub fn cmd_render(cfg: &RunConfig, input: &Path, edges: bool, out: Option<&Path>) -> Result<(), CliError> {
    let unreadable = |e: &dyn std::fmt::Display| io(format!("{}: {e}", input.display()));
    let mask = if input.extension().is_some_and(|e| e == "json") {
        let poly = PolyLayout::load(input).map_err(|e| unreadable(&e))?;
        rasterize(&poly).map_err(|e| unreadable(&e))?
    } else {
        load_mask(input).map_err(|e| unreadable(&e))?
    };
    let overlay: Option<Vec<bool>> =
        edges.then(|| gt_edge_map(&mask, &cfg.edge).data().iter().map(|&v| v > 0.5).collect());
    let img = render_mask(&mask, overlay.as_deref());
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("render.png"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    img.save(&path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_degen_preview(
    cfg: &RunConfig,
    data: Option<&Path>,
    sample: u64,
    edge: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let tax = cfg.taxonomy()?;
    let edge: DagEdge = edge.parse().map_err(config)?;
    let dag = build_dag(&tax).map_err(config)?;
    let poly = match data {
        Some(p) => {
            let manifest = DatasetManifest::load(p).map_err(|e| io(format!("{}: {e}", p.display())))?;
            let rec = manifest
                .records
                .iter()
                .find(|r| r.id == sample)
                .ok_or_else(|| CliError::Config(format!("sample {sample} is not in {}", p.display())))?;
            manifest.load_sample(rec).map_err(io)?.poly
        }
        None => generate_sample(&cfg.validate(&tax)?, &tax, sample).map_err(config)?.poly,
    };
    let after = degenerate(&poly, edge, &dag).map_err(config)?;
    let dir = out_dir(out, "degen")?;
    for (name, p) in [("before.png", &poly), ("after.png", &after)] {
        let mask = rasterize(p).map_err(config)?;
        let path = dir.join(name);
        render_mask(&mask, None).save(&path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    }
    let mut f = fs::File::create(dir.join("after.json")).map_err(io)?;
    f.write_all(after.to_json().as_bytes()).map_err(io)?;
    println!("type {} -> {}: wrote {}", edge.parent, edge.child, dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_run_defaults() {
        let cfg = RunConfig::from_toml("[synth]\nseed = 4\n[train]\nepochs = 2\n").unwrap();
        assert_eq!((cfg.synth.width, cfg.synth.seed, cfg.train.epochs), (64, 4, 2));
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn config_errors_name_the_line() {
        let e = RunConfig::from_toml("[model]\ndim = 16\nbogus = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn seed_flag_reaches_every_stream() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(42);
        assert_eq!((cfg.synth.seed, cfg.augment.seed, cfg.train.seed), (42, 42, 42));
    }
}
