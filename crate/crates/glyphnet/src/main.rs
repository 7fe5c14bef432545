//! Command-line entry point: render, gen, train, eval, predict.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glyphnet::config::RunConfig;
use glyphnet::datasets::{
    self, load_csv_corpus, parse_babi_dialogs, split_dataset, write_babi_dialogs,
    write_csv_corpus, LabeledText,
};
use glyphnet::dialog::{build_instances, evaluate_dialogs, train_scorer, DialogLayout};
use glyphnet::error::Error;
use glyphnet::model::{
    evaluate, load_checkpoint, predict_positivity, save_checkpoint, train, EpochReport, Model,
};
use glyphnet::raster::pgm::write_pgm;
use glyphnet::raster::{load_font, render_text, GlyphFont, PageImage};
use glyphnet::Result;

#[derive(Parser)]
#[command(name = "glyphnet", about = "Text understanding as image processing", version)]
struct Cli {
    /// Run-config file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Inline config overrides, e.g. --set train.epochs=3 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads for rendering; 1 (the default) is bit-reproducible,
    /// and so is any other count by construction.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize text to a PGM image.
    Render(RenderArgs),
    /// Generate synthetic datasets in the CSV / dialog file formats.
    Gen(GenArgs),
    /// Train a model and write a checkpoint plus a metrics CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Score a single text with a trained binary model.
    Predict(PredictArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Text to render (mutually exclusive with --file).
    #[arg(long)]
    text: Option<String>,
    /// File whose contents are rendered.
    #[arg(long, conflicts_with = "text")]
    file: Option<PathBuf>,
    #[arg(long, default_value = "page.pgm")]
    out: PathBuf,
    /// Render a horizontal strip of augmented variants instead of one page.
    #[arg(long)]
    augment_preview: bool,
    /// Number of variants in the preview strip.
    #[arg(long, default_value_t = 8)]
    variants: usize,
    /// Seed for the preview augmentations.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = ["classify", "dialog"])]
    task: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    samples_per_class: usize,
    /// Training dialogs to generate.
    #[arg(long, default_value_t = 100)]
    dialogs: usize,
    /// Held-out dialogs to generate (0 = no test file).
    #[arg(long, default_value_t = 0)]
    test_dialogs: usize,
    #[arg(long, default_value_t = 10)]
    restaurants: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = ["classify", "dialog"])]
    task: String,
    /// Dataset file; overrides `paths.data`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    /// Per-epoch metrics CSV path.
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_parser = ["classify", "dialog"])]
    task: String,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    text: String,
    /// Emit the positive-class probability (requires a binary model).
    #[arg(long, default_value_t = true)]
    positivity: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {item:?}: expected KEY=VALUE")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Ok(seed) = std::env::var("GLYPHNET_SEED") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::Config(format!("GLYPHNET_SEED: cannot parse {seed:?}")))?;
        cfg.model_seed = seed;
        cfg.shuffle_seed = seed;
        cfg.split_seed = seed;
        cfg.dialog_seed = seed;
        cfg.augment.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(Error::InvalidArg("--workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| Error::InvalidArg(format!("thread pool: {e}")))?;

    let mut cfg = effective_config(cli)?;
    match &cli.command {
        Command::Render(args) => cmd_render(&cfg, args, cli.print_config),
        Command::Gen(args) => cmd_gen(args, cli.print_config, &cfg),
        Command::Train(args) => {
            if let Some(e) = args.epochs {
                cfg.epochs = e;
            }
            if let Some(b) = args.batch_size {
                cfg.batch_size = b;
            }
            if let Some(lr) = args.lr {
                cfg.learning_rate = lr;
            }
            if let Some(d) = &args.data {
                cfg.data_path = Some(d.clone());
            }
            if cli.print_config {
                print!("{}", cfg.echo());
                return Ok(());
            }
            cmd_train(&cfg, args)
        }
        Command::Eval(args) => {
            if let Some(d) = &args.data {
                cfg.data_path = Some(d.clone());
            }
            if cli.print_config {
                print!("{}", cfg.echo());
                return Ok(());
            }
            cmd_eval(&cfg, args)
        }
        Command::Predict(args) => cmd_predict(&cfg, args),
    }
}

fn font_for(cfg: &RunConfig) -> Result<GlyphFont> {
    load_font(cfg.font_path.as_deref())
}

fn data_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.data_path
        .as_deref()
        .ok_or_else(|| Error::Config("no dataset: pass --data or set paths.data".into()))
}

fn cmd_render(cfg: &RunConfig, args: &RenderArgs, print_config: bool) -> Result<()> {
    if print_config {
        print!("{}", cfg.echo());
        return Ok(());
    }
    let text = match (&args.text, &args.file) {
        (Some(t), _) => t.clone(),
        (None, Some(f)) => std::fs::read_to_string(f)?,
        (None, None) => return Err(Error::InvalidArg("render needs --text or --file".into())),
    };
    let font = font_for(cfg)?;
    let image = if args.augment_preview {
        if args.variants == 0 {
            return Err(Error::InvalidArg("--variants must be >= 1".into()));
        }
        let mut aug = cfg.augment.clone();
        if let Some(seed) = args.seed {
            aug.rng_seed = seed;
        }
        let pages: Vec<PageImage> = (0..args.variants)
            .map(|i| {
                glyphnet::augment::augment_sample(
                    &text,
                    &font,
                    &cfg.layout,
                    &aug,
                    &mut aug.sample_rng(0, i as u64),
                )
            })
            .collect::<Result<_>>()?;
        strip(&pages)
    } else {
        render_text(&text, &font, &cfg.layout)?
    };
    write_pgm(&image, &args.out)?;
    println!("wrote {} ({}x{})", args.out.display(), image.width, image.height);
    Ok(())
}

/// Concatenate pages of equal size into one horizontal strip.
fn strip(pages: &[PageImage]) -> PageImage {
    let (w, h) = (pages[0].width, pages[0].height);
    let mut out = PageImage::filled(w * pages.len(), h, 0.0);
    for (i, p) in pages.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                out.set(i * w + x, y, p.at(x, y));
            }
        }
    }
    out
}

fn cmd_gen(args: &GenArgs, print_config: bool, cfg: &RunConfig) -> Result<()> {
    if print_config {
        print!("{}", cfg.echo());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out_dir)?;
    match args.task.as_str() {
        "classify" => {
            let corpus = datasets::generate_synthetic_classification(
                args.classes,
                args.samples_per_class,
                args.seed,
            )?;
            let path = args.out_dir.join("classify.csv");
            write_csv_corpus(&corpus, &path)?;
            println!("wrote {} ({} samples)", path.display(), corpus.len());
        }
        "dialog" => {
            let (trn, candidates) =
                datasets::generate_synthetic_dialogs(args.dialogs, args.restaurants, args.seed)?;
            let trn_path = args.out_dir.join("dialog-trn.txt");
            write_babi_dialogs(&trn, &trn_path)?;
            datasets::babi::write_candidates(&candidates, &datasets::candidates_path(&trn_path))?;
            println!("wrote {} ({} dialogs)", trn_path.display(), trn.len());
            if args.test_dialogs > 0 {
                let (tst, tst_candidates) = datasets::generate_synthetic_dialogs(
                    args.test_dialogs,
                    args.restaurants,
                    args.seed.wrapping_add(1),
                )?;
                let tst_path = args.out_dir.join("dialog-tst.txt");
                write_babi_dialogs(&tst, &tst_path)?;
                datasets::babi::write_candidates(
                    &tst_candidates,
                    &datasets::candidates_path(&tst_path),
                )?;
                println!("wrote {} ({} dialogs)", tst_path.display(), tst.len());
            }
        }
        _ => unreachable!("clap validates --task"),
    }
    Ok(())
}

fn write_metrics(path: &Path, history: &[EpochReport], record_seconds: bool) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_acc,seconds\n");
    for r in history {
        let val = if r.val_accuracy.is_nan() {
            String::new()
        } else {
            format!("{:.6}", r.val_accuracy)
        };
        let secs = if record_seconds { r.seconds } else { 0.0 };
        out.push_str(&format!("{},{:.6},{},{:.3}\n", r.epoch, r.train_loss, val, secs));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn load_classify_corpus(cfg: &RunConfig) -> Result<Vec<LabeledText>> {
    let corpus = load_csv_corpus(data_path(cfg)?, cfg.num_outputs)?;
    if corpus.is_empty() {
        return Err(Error::InvalidArg("dataset is empty".into()));
    }
    Ok(corpus)
}

fn cmd_train(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let font = font_for(cfg)?;
    match args.task.as_str() {
        "classify" => {
            let corpus = load_classify_corpus(cfg)?;
            let (trn, val, _) = split_dataset(&corpus, cfg.split, cfg.split_seed)?;
            let mc = cfg.model_config(
                (cfg.layout.image_height, cfg.layout.image_width),
                cfg.num_outputs,
            );
            let mut model: Model<f32> = Model::build(mc)?;
            let history = train(&mut model, &trn, &val, &cfg.train_config(), &font, &cfg.layout)?;
            write_metrics(&args.metrics, &history, cfg.record_seconds)?;
            save_checkpoint(&model, &args.out)?;
            if let Some(last) = history.last() {
                println!("final train_loss={:.6}", last.train_loss);
                if !last.val_accuracy.is_nan() {
                    println!("final val_acc={:.6}", last.val_accuracy);
                }
            }
        }
        "dialog" => {
            let (dialogs, candidates) = parse_babi_dialogs(data_path(cfg)?)?;
            let mut neg = cfg.negative_config();
            if !cfg.augment_enabled {
                neg.hard_extras = 0;
                neg.charflip_extras = 0;
            }
            let instances = build_instances(&dialogs, &candidates, &neg)?;
            let layout = cfg.dialog_layout();
            let mc = cfg.model_config((cfg.dialog_height, cfg.dialog_width), 1);
            let mut model: Model<f32> = Model::build(mc)?;
            let history =
                train_scorer(&mut model, &instances, &cfg.train_config(), &font, &layout)?;
            write_metrics(&args.metrics, &history, cfg.record_seconds)?;
            save_checkpoint(&model, &args.out)?;
            if let Some(last) = history.last() {
                println!("final train_loss={:.6}", last.train_loss);
            }
            println!("instances={}", instances.len());
        }
        _ => unreachable!(),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Page layout sized to the checkpoint's input; other knobs from config.
fn classify_layout_for(cfg: &RunConfig, model: &Model<f32>) -> glyphnet::raster::LayoutConfig {
    let (h, w) = model.config.input_hw;
    glyphnet::raster::LayoutConfig {
        image_width: w,
        image_height: h,
        ..cfg.layout.clone()
    }
}

fn cmd_eval(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let font = font_for(cfg)?;
    let model = load_checkpoint(&args.ckpt)?;
    match args.task.as_str() {
        "classify" => {
            let corpus = load_csv_corpus(data_path(cfg)?, model.config.num_outputs)?;
            let layout = classify_layout_for(cfg, &model);
            let report = evaluate(&model, &corpus, &font, &layout)?;
            println!("accuracy={:.6}", report.accuracy);
            println!("loss={:.6}", report.loss);
            println!("samples={}", report.samples);
            println!("confusion (rows = true class, cols = predicted):");
            for row in &report.confusion {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
                println!("  {}", cells.join(" "));
            }
            if let Some(path) = &args.json_out {
                let json = serde_json::json!({
                    "accuracy": report.accuracy,
                    "loss": report.loss,
                    "samples": report.samples,
                    "confusion": report.confusion,
                });
                std::fs::write(path, serde_json::to_string_pretty(&json)? + "\n")?;
            }
        }
        "dialog" => {
            let (dialogs, candidates) = parse_babi_dialogs(data_path(cfg)?)?;
            let layout = dialog_layout_for(cfg, &model)?;
            let report = evaluate_dialogs(&model, &dialogs, &candidates, &font, &layout)?;
            println!("per_response_accuracy={:.6}", report.per_response_accuracy);
            println!("per_dialog_accuracy={:.6}", report.per_dialog_accuracy);
            println!("responses={}", report.num_responses);
            println!("dialogs={}", report.num_dialogs);
            if let Some(path) = &args.json_out {
                let json = serde_json::json!({
                    "per_response_accuracy": report.per_response_accuracy,
                    "per_dialog_accuracy": report.per_dialog_accuracy,
                    "responses": report.num_responses,
                    "dialogs": report.num_dialogs,
                });
                std::fs::write(path, serde_json::to_string_pretty(&json)? + "\n")?;
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Dialog page geometry sized to the checkpoint's input; candidate region and
/// text knobs from config.
fn dialog_layout_for(cfg: &RunConfig, model: &Model<f32>) -> Result<DialogLayout> {
    let mut layout = cfg.dialog_layout();
    let (h, w) = model.config.input_hw;
    layout.page.image_height = h;
    layout.page.image_width = w;
    Ok(layout)
}

fn cmd_predict(cfg: &RunConfig, args: &PredictArgs) -> Result<()> {
    if args.text.trim().is_empty() {
        return Err(Error::InvalidArg("--text must not be empty".into()));
    }
    let font = font_for(cfg)?;
    let model = load_checkpoint(&args.ckpt)?;
    let layout = classify_layout_for(cfg, &model);
    if args.positivity {
        let score = predict_positivity(&model, &args.text, &font, &layout)?;
        println!("positivity_score={score:.2}");
    } else {
        let image = render_text(&args.text, &font, &layout)?;
        let batch = glyphnet::raster::image_to_tensor::<f32>(&image);
        let logits = model.forward(&batch)?;
        let row = logits.row(0);
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        println!("class={pred}");
    }
    Ok(())
}
