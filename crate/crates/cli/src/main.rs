use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ddt_core::augment::{export_voc, filter_dataset, FilterPolicy};
use ddt_core::evaluate::{corloc, noise_roc};
use ddt_core::heatmap::{render, write_pgm};
use ddt_core::io::{load_manifest, write_manifest, ImageSetManifest, Layer};
use ddt_core::localize::{ddt_localize, ddt_plus_localize, read_results, scda_localize, write_results, LayerModel, Method, ResultsFile};
use ddt_core::synth::{generate, SynthSpec};
use ddt_core::transform::project;

#[derive(Parser, Debug)]
#[command(name = "ddt", version, about = "Co-localize the common object across an image set from convolutional descriptors")]
struct Cli {
    /// Worker threads (defaults to available parallelism)
    #[arg(long, global = true, env = "DDT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict one box per image and write a results file
    Localize(LocalizeArgs),
    /// Score results against ground-truth boxes (CorLoc)
    Eval(EvalArgs),
    /// ROC of noise rate as a noisy-image detector
    NoiseRoc(NoiseRocArgs),
    /// Drop images whose noise rate is at or below a threshold
    Filter(FilterArgs),
    /// Write PASCAL VOC annotations for predicted boxes
    ExportVoc(ExportVocArgs),
    /// Render a normalized indicator map as an 8-bit PGM
    Heatmap(HeatmapArgs),
    /// Generate a synthetic planted-signal descriptor set
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Ddt,
    DdtPlus,
    Scda,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LayerArg {
    Last,
    Prev,
}

impl From<LayerArg> for Layer {
    fn from(l: LayerArg) -> Self {
        match l {
            LayerArg::Last => Layer::Last,
            LayerArg::Prev => Layer::Prev,
        }
    }
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "ddt")]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
    /// Principal components to retain
    #[arg(long, default_value_t = 2)]
    top_k: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Report JSON path (default: <results stem>.report.json next to the results)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseRocArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportVocArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    category: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    id: String,
    #[arg(long, default_value_t = 1)]
    component: usize,
    #[arg(long, value_enum, default_value = "last")]
    layer: LayerArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON synth spec; overrides the generator flags below
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    images: usize,
    #[arg(long, default_value_t = 16)]
    h: usize,
    #[arg(long, default_value_t = 16)]
    w: usize,
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Signal strength over noise sigma
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    #[arg(long, default_value_t = 2)]
    noisy: usize,
    #[arg(long)]
    two_layer: bool,
}

fn load(path: &Path) -> Result<ImageSetManifest> {
    load_manifest(path).with_context(|| format!("load manifest {}", path.display()))
}

fn load_results(path: &Path) -> Result<ResultsFile> {
    read_results(path).with_context(|| format!("load results {}", path.display()))
}

fn cmd_localize(a: &LocalizeArgs) -> Result<()> {
    let manifest = load(&a.manifest)?;
    let (method, results) = match a.method {
        MethodArg::Ddt => (Method::Ddt, ddt_localize(&manifest, a.top_k).context("localize")?),
        MethodArg::DdtPlus => {
            manifest.require_layer(Layer::Prev).context("localize")?;
            (Method::DdtPlus, ddt_plus_localize(&manifest, a.top_k).context("localize")?)
        }
        MethodArg::Scda => (Method::Scda, scda_localize(&manifest).context("localize")?),
    };
    let noisy = results.iter().filter(|r| r.noisy).count();
    write_results(&ResultsFile::new(method, results), &a.out).with_context(|| format!("write {}", a.out.display()))?;
    println!("localized {} images ({} noisy) -> {}", manifest.len(), noisy, a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let manifest = load(&a.manifest)?;
    let results = load_results(&a.results)?;
    let report = corloc(&results.results, &manifest).context("eval")?;
    let out = a.out.clone().unwrap_or_else(|| a.results.with_extension("report.json"));
    std::fs::write(&out, report.to_json_string() + "\n").with_context(|| format!("write {}", out.display()))?;
    println!("CorLoc: {:.1}", report.corloc);
    println!("evaluated {} correct {} -> {}", report.evaluated, report.correct, out.display());
    Ok(())
}

fn cmd_noise_roc(a: &NoiseRocArgs) -> Result<()> {
    let manifest = load(&a.manifest)?;
    let results = load_results(&a.results)?;
    let curve = noise_roc(&results.results, &manifest).context("noise-roc")?;
    std::fs::write(&a.out, curve.to_csv()).with_context(|| format!("write {}", a.out.display()))?;
    println!("AUC: {:.4}", curve.auc);
    Ok(())
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let manifest = load(&a.manifest)?;
    let results = load_results(&a.results)?;
    let policy = FilterPolicy::new(a.threshold).context("filter")?;
    let cleaned = filter_dataset(&results.results, &manifest, policy).context("filter")?;
    write_manifest(&cleaned, &a.out).with_context(|| format!("write {}", a.out.display()))?;
    println!("kept {} of {} images -> {}", cleaned.len(), manifest.len(), a.out.display());
    Ok(())
}

fn cmd_export_voc(a: &ExportVocArgs) -> Result<()> {
    let manifest = load(&a.manifest)?;
    let results = load_results(&a.results)?;
    // results may cover a larger set than a cleaned manifest
    let covered: Vec<_> = results.results.into_iter().filter(|r| manifest.get(&r.image_id).is_some()).collect();
    let n = export_voc(&covered, &manifest, &a.category, &a.out_dir).context("export-voc")?;
    println!("wrote {n} annotations -> {}", a.out_dir.display());
    Ok(())
}

fn cmd_heatmap(a: &HeatmapArgs) -> Result<()> {
    let manifest = load(&a.manifest)?;
    let layer = Layer::from(a.layer);
    let record = manifest.get(&a.id).ok_or_else(|| anyhow!("heatmap: unknown image id {:?}", a.id))?;
    let tensor = record.load_layer(layer).context("heatmap")?;
    if a.component == 0 || a.component > tensor.d() {
        bail!("heatmap: component {} outside 1..={}", a.component, tensor.d());
    }
    let model = LayerModel::fit(&manifest, layer, a.component).context("heatmap")?;
    let map = project(&record.id, &tensor, &model.stats, a.component).context("heatmap")?;
    let img = render(&map, record.height as usize, record.width as usize);
    write_pgm(&img, &a.out).with_context(|| format!("write {}", a.out.display()))?;
    println!("heatmap {} component {} -> {}", record.id, a.component, a.out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
            serde_json::from_str::<SynthSpec>(&text).with_context(|| format!("synth: parse {}", path.display()))?
        }
        None => {
            let mut s = SynthSpec::planted(a.seed, a.images, a.h, a.w, a.d, a.separation, a.noisy);
            s.two_layer = a.two_layer;
            s
        }
    };
    let manifest = generate(&spec, &a.out_dir).context("synth")?;
    println!("generated {} images -> {}", manifest.len(), a.out_dir.join("manifest.json").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Localize(a) => cmd_localize(a),
        Command::Eval(a) => cmd_eval(a),
        Command::NoiseRoc(a) => cmd_noise_roc(a),
        Command::Filter(a) => cmd_filter(a),
        Command::ExportVoc(a) => cmd_export_voc(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Flattens the error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
