//! `cheapseg` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cheapseg::bundle::ModelBundle;
use cheapseg::config::{IlpVariant, RunConfig};
use cheapseg::dataset::{
    generate_synthetic, load_dataset, presets, Dataset, Sample, Split, SynthSpec,
};
use cheapseg::eval::{ConfusionMatrix, Metrics};
use cheapseg::image::{LabelImage, RgbImage};
use cheapseg::pipeline::{self, Appearance, Prior, SegmentOptions};
use cheapseg::{par, pnm, Error};

#[derive(Parser)]
#[command(
    name = "cheapseg",
    version,
    about = "Cheap semantic segmentation with decorrelated texton forests"
)]
struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Worker threads (0 = all cores); overrides the config, `CHEAPSEG_THREADS` overrides this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a spec file or a built-in preset.
    GenSynth(GenSynthArgs),
    /// Train a model bundle on the training split of a manifest.
    Train(TrainArgs),
    /// Segment images with a trained bundle.
    Predict(PredictArgs),
    /// Score label rasters against a manifest split.
    Evaluate(EvaluateArgs),
    /// Evaluate a list of location weights on one split.
    SweepOmega(SweepArgs),
    /// Evaluate the appearance x image-prior grid on one split.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// SynthSpec JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Built-in scene layout.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Generator seed (defaults to the config seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IlpArg {
    Context,
    Multiclass,
    Both,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Which image-level prior to train.
    #[arg(long, value_enum)]
    ilp: Option<IlpArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AppearanceArg {
    Stf,
    Dstf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    None,
    Multiclass,
    Context,
    Ideal,
}

#[derive(Args)]
struct CrfOverrides {
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Output directory for `<name>.pgm` label rasters.
    #[arg(long)]
    out: PathBuf,
    /// Segment every image of this manifest split instead of explicit files.
    #[arg(long, requires = "split")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    split: Option<Split>,
    /// PPM images to segment.
    #[arg(conflicts_with = "manifest")]
    images: Vec<PathBuf>,
    /// Also write `<name>_color.ppm` using the class palette.
    #[arg(long)]
    color: bool,
    #[arg(long, value_enum, default_value = "dstf")]
    appearance: AppearanceArg,
    /// Image-level prior; defaults to the bundle's primary prior.
    #[arg(long, value_enum)]
    prior: Option<PriorArg>,
    #[command(flatten)]
    crf: CrfOverrides,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding `<name>.pgm` predictions.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Write metrics CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "val")]
    split: Split,
    /// Comma-separated weights; duplicates are kept.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
    )]
    omegas: Vec<f64>,
    #[arg(long, value_enum, default_value = "dstf")]
    appearance: AppearanceArg,
    #[arg(long, value_enum)]
    prior: Option<PriorArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Add the ground-truth presence prior as a third column.
    #[arg(long)]
    ideal: bool,
    #[command(flatten)]
    crf: CrfOverrides,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Failure classes mapped onto the documented exit codes.
enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::UnknownExtractor(_) => {
                Failure::Usage(e.to_string())
            }
            Error::Io { .. }
            | Error::Json { .. }
            | Error::Raster { .. }
            | Error::Model(_)
            | Error::EmptyDataset
            | Error::LabelOutOfRange { .. }
            | Error::DimensionMismatch(_)
            | Error::ClassSet(_)
            | Error::NoLabels(_)
            | Error::EmptyCluster { .. }
            | Error::MissingComponent(_) => Failure::Data(e.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli)))
        .unwrap_or_else(|_| {
            Err(Failure::Internal(
                "invariant violated; see the panic message above".into(),
            ))
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}

fn load_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = load_config(&cli)?;
    if let Some(Command::Train(a)) = &cli.command {
        apply_train_overrides(&mut cfg, a);
    }
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::Usage("no subcommand given; see --help".into()));
    };
    let threads = cfg.effective_threads()?;
    let threads = if threads == 0 {
        default_threads()
    } else {
        threads
    };
    par::with_threads(threads, move || match command {
        Command::GenSynth(a) => gen_synth(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepOmega(a) => sweep(a),
        Command::Ablate(a) => ablate(a),
    })
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn apply_train_overrides(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(v) = a.ilp {
        cfg.ilp_variant = match v {
            IlpArg::Context => IlpVariant::Context,
            IlpArg::Multiclass => IlpVariant::Multiclass,
            IlpArg::Both => IlpVariant::Both,
        };
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, contents: &str) -> Outcome {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn gen_synth(cfg: &RunConfig, a: GenSynthArgs) -> Outcome {
    let spec: SynthSpec = match (&a.spec, &a.preset) {
        (Some(p), _) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?
        }
        (None, Some(name)) => presets::by_name(name).ok_or_else(|| {
            Failure::Usage(format!(
                "unknown preset `{name}`; known: {}",
                presets::NAMES.join(", ")
            ))
        })?,
        (None, None) => {
            return Err(Failure::Usage(
                "either --spec or --preset is required".into(),
            ))
        }
    };
    let data = generate_synthetic(&spec, a.seed.unwrap_or(cfg.seed))?;
    let manifest = data.save(&a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn train(cfg: &RunConfig, a: TrainArgs) -> Outcome {
    let data = load_dataset(&a.manifest)?;
    let bundle = pipeline::train_bundle(&data, cfg)?;
    bundle.save(&a.out)?;
    if let Some((summary, _)) = &bundle.report {
        eprintln!(
            "{} clusters: {:?}; gathered set sizes {:?}",
            summary.clusters.len(),
            summary.clusters,
            summary.gathered_sizes
        );
    }
    println!("{}", a.out.display());
    Ok(())
}

fn segment_options(
    bundle: &ModelBundle,
    appearance: AppearanceArg,
    prior: Option<PriorArg>,
    omega: Option<f64>,
    lambda: Option<f64>,
    alpha: Option<f64>,
) -> Outcome<SegmentOptions> {
    let mut o = SegmentOptions::full(bundle);
    o.appearance = match appearance {
        AppearanceArg::Stf => Appearance::Stf,
        AppearanceArg::Dstf => Appearance::Dstf,
    };
    if let Some(p) = prior {
        o.prior = prior_of(p);
    }
    if let Some(v) = omega {
        o.crf.omega = v;
    }
    if let Some(v) = lambda {
        o.crf.lambda = v;
    }
    if let Some(v) = alpha {
        o.crf.alpha = v;
    }
    o.crf.validate()?;
    Ok(o)
}

fn prior_of(p: PriorArg) -> Prior {
    match p {
        PriorArg::None => Prior::None,
        PriorArg::Multiclass => Prior::Multiclass,
        PriorArg::Context => Prior::Context,
        PriorArg::Ideal => Prior::Ideal,
    }
}

fn split_samples(data: &Dataset, split: Split) -> Outcome<Vec<&Sample>> {
    let s = data.split(split);
    if s.is_empty() {
        return Err(Failure::Data(format!("the {split:?} split is empty")));
    }
    Ok(s)
}

fn predict(a: PredictArgs) -> Outcome {
    let bundle = ModelBundle::load(&a.bundle)?;
    let options = segment_options(
        &bundle,
        a.appearance,
        a.prior,
        a.crf.omega,
        a.crf.lambda,
        a.crf.alpha,
    )?;
    let jobs: Vec<(String, RgbImage, Option<LabelImage>)> = match (&a.manifest, a.split) {
        (Some(m), Some(split)) => {
            let data = load_dataset(m)?;
            split_samples(&data, split)?
                .into_iter()
                .map(|s| (s.name.clone(), s.image.clone(), Some(s.labels.clone())))
                .collect()
        }
        _ => {
            if a.images.is_empty() {
                return Err(Failure::Usage(
                    "give image files or --manifest with --split".into(),
                ));
            }
            a.images
                .iter()
                .map(|p| {
                    let name = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    Ok((name, pnm::read_ppm(p)?, None))
                })
                .collect::<Result<_, Error>>()?
        }
    };
    if options.prior == Prior::Ideal && jobs.iter().any(|j| j.2.is_none()) {
        return Err(Failure::Usage(
            "the ideal prior needs --manifest ground truth".into(),
        ));
    }
    fs::create_dir_all(&a.out).map_err(|e| Failure::Data(format!("{}: {e}", a.out.display())))?;
    let palette = bundle.meta.palette.clone();
    if a.color && palette.is_none() {
        return Err(Failure::Data(
            "the bundle has no class palette for --color".into(),
        ));
    }
    let results = par::map_slice(&jobs, |(name, image, truth)| -> Result<(), Error> {
        let seg = pipeline::segment_image(&bundle, image, truth.as_ref(), &options, None)?;
        let labels = seg.labeling.to_label_image()?;
        pnm::write_pgm(a.out.join(format!("{name}.pgm")), &labels)?;
        if let (true, Some(pal)) = (a.color, &palette) {
            let mut rgb = RgbImage::filled(labels.width(), labels.height(), [0, 0, 0])?;
            for y in 0..labels.height() {
                for x in 0..labels.width() {
                    rgb.set_pixel(x, y, pal[labels.get(x, y) as usize]);
                }
            }
            pnm::write_ppm(a.out.join(format!("{name}_color.ppm")), &rgb)?;
        }
        Ok(())
    });
    for r in results {
        r?;
    }
    eprintln!("wrote {} label rasters to {}", jobs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let data = load_dataset(&a.manifest)?;
    let samples = split_samples(&data, a.split)?;
    let c = data.num_classes();
    let mut conf = ConfusionMatrix::new(c);
    for s in samples {
        let path = a.predictions.join(format!("{}.pgm", s.name));
        let pred = pnm::read_pgm(&path)?;
        let labels = pred.labels().iter().map(|&l| l as usize).collect();
        let labeling = cheapseg::image::Labeling::new(pred.width(), pred.height(), labels)?;
        conf.accumulate(&labeling, &s.labels)?;
    }
    let metrics = Metrics::from_confusion(data.classes.names(), conf)?;
    if let Some(p) = &a.json {
        write_file(p, metrics.to_json() + "\n")?;
    }
    emit(a.csv.as_deref(), &metrics.to_csv())
}

fn sweep(a: SweepArgs) -> Outcome {
    let bundle = ModelBundle::load(&a.bundle)?;
    let data = load_dataset(&a.manifest)?;
    let samples = split_samples(&data, a.split)?;
    check_classes(&bundle, &data)?;
    let options = segment_options(&bundle, a.appearance, a.prior, None, a.lambda, a.alpha)?;
    let rows = pipeline::sweep_omega(&bundle, &samples, &a.omegas, &options)?;
    emit(a.out.as_deref(), &pipeline::sweep_csv(&rows))
}

fn ablate(a: AblateArgs) -> Outcome {
    let bundle = ModelBundle::load(&a.bundle)?;
    let data = load_dataset(&a.manifest)?;
    let samples = split_samples(&data, a.split)?;
    check_classes(&bundle, &data)?;
    let options = segment_options(
        &bundle,
        AppearanceArg::Dstf,
        None,
        a.crf.omega,
        a.crf.lambda,
        a.crf.alpha,
    )?;
    let mut priors = vec![Prior::None, Prior::Multiclass, Prior::Context];
    if a.ideal {
        priors.push(Prior::Ideal);
    }
    let rows = pipeline::ablate(&bundle, &samples, &options.crf, &priors)?;
    if let Some(p) = &a.json {
        write_file(
            p,
            serde_json::to_string_pretty(&rows).map_err(|e| Failure::Internal(e.to_string()))?
                + "\n",
        )?;
    }
    emit(a.out.as_deref(), &pipeline::ablation_csv(&rows))
}

fn check_classes(bundle: &ModelBundle, data: &Dataset) -> Outcome {
    if bundle.meta.classes != data.classes.names() {
        return Err(Failure::Data(
            "manifest classes differ from the bundle's classes".into(),
        ));
    }
    Ok(())
}
