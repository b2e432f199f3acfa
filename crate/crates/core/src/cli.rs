//! Command-line front end.
//!
//! Every command that writes a directory also writes `resolved_config.json`
//! there. Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::edits::{edit_and_decode, relight_direct, transfer_lighting, AttributeSets, EditLayers, TraversalConfig, TraversalMode};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::imaging::{load_float_map, load_image, load_mask, save_float_map, save_mask, save_png, NormalField, PixelField};
use crate::losses::LossWeights;
use crate::shading::{estimate_light_with_fit, ShCoeffs};
use crate::solver::{self, DecompResult, SolverConfig};
use crate::synth::{generate_dataset, load_dataset, manifest_hash, Split, SynthConfig, MANIFEST_FILE};
use crate::toynet::{self, load_checkpoint, Factor, ToyConfig, ToyModel};

/// Dataset block of a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthBlock {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub scene: SynthConfig,
}

impl Default for SynthBlock {
    fn default() -> Self {
        Self { count: 512, size: 32, seed: 0, scene: SynthConfig::default() }
    }
}

/// Run configuration. Missing blocks take their defaults; `weights` defaults to
/// [`solver::default_weights`] for decomposition and [`LossWeights::default`]
/// for training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub weights: Option<LossWeights>,
    pub solver: SolverConfig,
    pub toynet: ToyConfig,
    pub synth: SynthBlock,
    pub traversal: TraversalConfig,
    /// Decode sRGB input images to linear values.
    pub gamma_decode: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Returns a copy with `weights` filled in.
    fn resolved(&self, default_weights: LossWeights) -> Self {
        Self { weights: Some(self.weights.clone().unwrap_or(default_weights)), ..self.clone() }
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("resolved_config.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Parser, Debug)]
#[command(name = "nfed", version, about = "Intrinsic face decomposition, relighting and latent editing")]
pub struct Cli {
    /// Worker threads (falls back to NFED_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run configuration JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Decompose an image into albedo, shading, normals and light.
    Decompose(DecomposeArgs),
    /// Least-squares light from an image, normals and mask.
    EstimateLight(EstimateArgs),
    /// Re-render a decomposition under a new light.
    Relight(RelightArgs),
    /// Transfer a source light onto a target through its detailed albedo.
    Transfer(TransferArgs),
    /// Train the toy network on a synthetic dataset.
    Train(TrainArgs),
    /// Run the toy network on an image and write its layers and codes.
    Reconstruct(ReconstructArgs),
    /// Decode image A with one factor code taken from image B.
    Swap(SwapArgs),
    /// Move factor codes toward a positive attribute set and decode.
    Traverse(TraverseArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Prior normals (PFM).
    #[arg(long)]
    pub normals: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub normals: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Write the coefficients here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RelightArgs {
    /// Decomposition directory.
    #[arg(long)]
    pub decomp: PathBuf,
    /// The decomposed image; used as the background.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub light: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Target decomposition directory.
    #[arg(long)]
    pub decomp: PathBuf,
    /// Target image.
    #[arg(long)]
    pub image: PathBuf,
    /// Source light JSON.
    #[arg(long)]
    pub light: PathBuf,
    /// Output directory for `transfer.png` and `s_transfer.pfm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SwapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// light, albedo, normals, background, mask, uv or ni.
    #[arg(long)]
    pub factor: String,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TraverseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Factors to edit; may repeat.
    #[arg(long = "factor")]
    pub factors: Vec<String>,
    /// Directory of latent JSON files with the attribute.
    #[arg(long)]
    pub positive: PathBuf,
    /// Directory of latent JSON files without it.
    #[arg(long)]
    pub negative: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// mean-shift-linear or kernel-weighted.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("NFED_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("NFED_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::load_opt(cli.config.as_deref())?;
    let pool = match threads(cli.threads)? {
        Some(0) => return Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, config))
}

fn dispatch(command: Command, config: RunConfig) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a, config),
        Command::Decompose(a) => cmd_decompose(a, config),
        Command::EstimateLight(a) => cmd_estimate(a, config),
        Command::Relight(a) => cmd_relight(a, config),
        Command::Transfer(a) => cmd_transfer(a, config),
        Command::Train(a) => cmd_train(a, config),
        Command::Reconstruct(a) => cmd_reconstruct(a, config),
        Command::Swap(a) => cmd_swap(a, config),
        Command::Traverse(a) => cmd_traverse(a, config),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn read_light(path: &Path) -> Result<ShCoeffs> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ShCoeffs::from_json(&text)
}

fn read_normals(path: &Path) -> Result<NormalField> {
    NormalField::from_field_renormalized(&load_float_map(path)?)
}

fn cmd_synth(a: SynthArgs, mut config: RunConfig) -> Result<()> {
    let s = &mut config.synth;
    s.count = a.count.unwrap_or(s.count);
    s.size = a.size.unwrap_or(s.size);
    s.seed = a.seed.unwrap_or(s.seed);
    generate_dataset(s.count, s.size, s.seed, &s.scene, &a.out)?;
    config.write_resolved(&a.out)?;
    println!("{}", a.out.join(MANIFEST_FILE).display());
    println!("sha256 {}", manifest_hash(&a.out)?);
    Ok(())
}

fn cmd_decompose(a: DecomposeArgs, config: RunConfig) -> Result<()> {
    let mut config = config.resolved(solver::default_weights());
    if let Some(n) = a.iters {
        config.solver.iters = n;
    }
    let image = load_image(&a.image, config.gamma_decode)?;
    let normals = read_normals(&a.normals)?;
    let mask = load_mask(&a.mask)?;
    let weights = config.weights.clone().expect("resolved");
    let result = solver::solve(&image, &normals, &mask, &config.solver, &weights)?;
    result.write_dir(&a.out)?;
    config.write_resolved(&a.out)?;
    if let Some(report) = result.trace.last() {
        println!("{}", report.to_json());
    }
    println!("iterations {} converged {}", result.iterations, result.converged);
    println!("masked reconstruction MSE {:.6e}", result.masked_mse(&image)?);
    Ok(())
}

fn cmd_estimate(a: EstimateArgs, config: RunConfig) -> Result<()> {
    let image = load_image(&a.image, config.gamma_decode)?;
    let fit = estimate_light_with_fit(&image, &read_normals(&a.normals)?, &load_mask(&a.mask)?)?;
    eprintln!("pixels {} condition {:.3e} method {:?}", fit.pixels, fit.condition, fit.method);
    match a.out {
        Some(path) => fs::write(&path, fit.light.to_json()).map_err(|e| Error::io(&path, e)),
        None => {
            println!("{}", fit.light.to_json());
            Ok(())
        }
    }
}

fn solver_layers(decomp: &Path, image: &Path, config: &RunConfig) -> Result<EditLayers> {
    let result = DecompResult::read_dir(decomp)?;
    EditLayers::from_solver(&load_image(image, config.gamma_decode)?, &result)
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn cmd_relight(a: RelightArgs, config: RunConfig) -> Result<()> {
    let layers = solver_layers(&a.decomp, &a.image, &config)?;
    let out = relight_direct(&layers, &read_light(&a.light)?)?;
    let dir = parent_dir(&a.out);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_png(&out.clamped_unit(), &a.out, true)?;
    config.write_resolved(dir)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_transfer(a: TransferArgs, config: RunConfig) -> Result<()> {
    let layers = solver_layers(&a.decomp, &a.image, &config)?;
    let t = transfer_lighting(&layers, &read_light(&a.light)?, config.solver.epsilon)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_png(&t.output.clamped_unit(), a.out.join("transfer.png"), true)?;
    save_float_map(&t.output, a.out.join("transfer.pfm"))?;
    save_float_map(&t.shading, a.out.join("s_transfer.pfm"))?;
    save_float_map(&t.detail_albedo, a.out.join("detail_albedo.pfm"))?;
    config.write_resolved(&a.out)?;
    println!("{}", a.out.join("transfer.png").display());
    Ok(())
}

fn cmd_train(a: TrainArgs, config: RunConfig) -> Result<()> {
    let mut config = config.resolved(LossWeights::default());
    if let Some(e) = a.epochs {
        config.toynet.epochs = e;
    }
    if let Some(s) = a.seed {
        config.toynet.seed = s;
    }
    let (manifest, samples) = load_dataset(&a.data)?;
    if manifest.size != config.toynet.size {
        return Err(Error::Config(format!(
            "dataset size {} does not match toynet.size {}",
            manifest.size, config.toynet.size
        )));
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (split, s) in samples {
        match split {
            Split::Train => train.push(s),
            Split::Val => val.push(s),
        }
    }
    let mut model = ToyModel::new(config.toynet.clone())?;
    config.write_resolved(&a.out)?;
    let weights = config.weights.clone().expect("resolved");
    let summary = toynet::train(&mut model, &train, &val, &weights, Some(&a.out))?;
    for e in &summary.epochs {
        println!(
            "epoch {} objective {:.6} d_loss {:.6} val_mse {}",
            e.epoch,
            e.train_total,
            e.d_loss,
            e.val_mse.map_or("-".into(), |v| format!("{v:.6}"))
        );
    }
    println!("{}", a.out.join("model.nfed").display());
    Ok(())
}

fn write_outputs(out: &toynet::ToyOutputs, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_png(&out.recon.clamped_unit(), dir.join("recon.png"), true)?;
    save_png(&out.albedo.clamped_unit(), dir.join("albedo.png"), true)?;
    save_png(&out.background.clamped_unit(), dir.join("background.png"), true)?;
    save_mask(&out.mask, dir.join("mask.png"))?;
    save_float_map(&out.shading, dir.join("shading.pfm"))?;
    save_float_map(&out.normals, dir.join("normals.pfm"))?;
    let path = dir.join("latents.json");
    fs::write(&path, out.latents.to_json()).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("light.json");
    fs::write(&path, out.latents.light_coeffs()?.to_json()).map_err(|e| Error::io(&path, e))
}

fn load_model(path: &Path) -> Result<ToyModel> {
    load_checkpoint(path)
}

fn model_image(model: &ToyModel, path: &Path, config: &RunConfig) -> Result<PixelField> {
    let img = load_image(path, config.gamma_decode)?;
    let s = model.size();
    if img.width() != s || img.height() != s {
        return Err(Error::Config(format!(
            "{} is {}x{}, the model expects {s}x{s}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    Ok(img)
}

fn cmd_reconstruct(a: ReconstructArgs, config: RunConfig) -> Result<()> {
    let model = load_model(&a.model)?;
    let out = model.forward(&model_image(&model, &a.image, &config)?)?;
    write_outputs(&out, &a.out)?;
    let config = RunConfig { toynet: model.config.clone(), ..config };
    config.write_resolved(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_swap(a: SwapArgs, config: RunConfig) -> Result<()> {
    let factor: Factor = a.factor.parse()?;
    let model = load_model(&a.model)?;
    let img_a = model_image(&model, &a.a, &config)?;
    let img_b = model_image(&model, &a.b, &config)?;
    let out = model.latent_swap(&img_a, &img_b, factor)?;
    let dir = parent_dir(&a.out);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_png(&out.clamped_unit(), &a.out, true)?;
    RunConfig { toynet: model.config.clone(), ..config }.write_resolved(dir)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_traverse(a: TraverseArgs, mut config: RunConfig) -> Result<()> {
    let t = &mut config.traversal;
    t.lambda = a.lambda.unwrap_or(t.lambda);
    t.bandwidth = a.bandwidth.unwrap_or(t.bandwidth);
    if let Some(m) = &a.mode {
        t.mode = match m.as_str() {
            "mean-shift-linear" => TraversalMode::MeanShiftLinear,
            "kernel-weighted" => TraversalMode::KernelWeighted,
            other => return Err(Error::Config(format!("unknown traversal mode {other:?}"))),
        };
    }
    t.validate()?;
    let factors = a.factors.iter().map(|f| f.parse()).collect::<Result<Vec<Factor>>>()?;
    let pos = crate::edits::read_latent_dir(&a.positive)?;
    let neg = crate::edits::read_latent_dir(&a.negative)?;
    let sets = factors
        .iter()
        .map(|&f| AttributeSets::from_latents(&pos, &neg, f))
        .collect::<Result<Vec<_>>>()?;
    let model = load_model(&a.model)?;
    let image = model_image(&model, &a.image, &config)?;
    let refs: Vec<&AttributeSets> = sets.iter().collect();
    let out = edit_and_decode(&model, &image, &refs, &config.traversal)?;
    let dir = parent_dir(&a.out);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_png(&out.recon.clamped_unit(), &a.out, true)?;
    RunConfig { toynet: model.config.clone(), ..config }.write_resolved(dir)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(Error::Config("--samples must be at least 1".into()));
    }
    let results = gradcheck::run_all(a.samples, a.seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let ok = r.max_rel_err < a.tolerance;
        println!(
            "{:<22} entries {:>8}  max rel err {:.3e}  {:>6.2}s  {}",
            r.layer,
            r.entries,
            r.max_rel_err,
            r.seconds,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(r.layer.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradientCheck(failed.join(", ")))
    }
}
