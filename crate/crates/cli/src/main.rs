//! `contrastseg`: segment an image from a prompt, evaluate on a suite,
//! run ablations, synthesize suites, erase objects.
//!
//! stdout carries one JSON summary line per run; logs go to stderr.
//! Exit codes: 0 success, 2 bad input, 3 backend failure.

mod config;
mod prompt;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use contrastseg::amcp::{self, Engine, PromptKind};
use contrastseg::eval::{
    self, ablate, evaluate, load_suite, Axis, DatasetItem, EvalItem, EvalOptions, NoiseSpec,
    ShapeFamily, SuiteOptions,
};
use contrastseg::metrics::iou;
use contrastseg::scene::SceneSpec;
use contrastseg::{io, Painter, Projector};
use serde::Serialize;

use config::EngineArgs;

#[derive(Parser)]
#[command(
    name = "contrastseg",
    version,
    about = "Training-free prompt-guided object segmentation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image from a prompt.
    Segment(SegmentArgs),
    /// Evaluate a suite or dataset and write a report.
    Eval(EvalArgs),
    /// Evaluate once per value of one config axis.
    Ablate(AblateArgs),
    /// Generate a synthetic scene suite.
    Synth(SynthArgs),
    /// Inpaint the region under a mask.
    Erase(EraseArgs),
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    image: PathBuf,
    /// point:X,Y[;X,Y...] | box:x0,y0,x1,y1 | scribble:PATH | mask:PATH
    #[arg(long)]
    prompt: String,
    /// Scene description, required by the oracle painter.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "mask.png")]
    out: PathBuf,
    /// Directory for per-step masks and trace.json.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// PNG with the mask boundary drawn on the image.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Ground-truth mask; adds the IoU to the summary.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct ItemArgs {
    /// Suite directory written by `synth`.
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    suite: Option<PathBuf>,
    /// JSON list of {id, image, gt, scene?, coarse?, scribble?}.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "box")]
    prompt_type: PromptKind,
    /// Prompt displacement rate in [0, 1].
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Independent displacement per prompt point.
    #[arg(long)]
    jitter: bool,
    /// Override the oracle painting noise.
    #[arg(long)]
    sigma: Option<f32>,
    /// Write per-item trace directories under <out>/traces.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    items: ItemArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct AblateArgs {
    /// n | t | k | box_rate | ring_width
    #[arg(long)]
    axis: Axis,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    items: ItemArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value = "mixed")]
    family: ShapeFamily,
    /// Painting noise recorded in each scene.
    #[arg(long, default_value_t = 0.0)]
    sigma: f32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EraseArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "erased.png")]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Serialize)]
struct Summary {
    cmd: &'static str,
    out_paths: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_iou: Option<f64>,
    wall_ms: f64,
}

struct Outcome {
    out_paths: Vec<PathBuf>,
    mean_iou: Option<f64>,
    code: u8,
}

impl Outcome {
    fn ok(out_paths: Vec<PathBuf>, mean_iou: Option<f64>) -> Self {
        Self {
            out_paths,
            mean_iou,
            code: 0,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let (name, result) = match cli.cmd {
        Command::Segment(a) => ("segment", segment(a)),
        Command::Eval(a) => ("eval", eval_cmd(a)),
        Command::Ablate(a) => ("ablate", ablate_cmd(a)),
        Command::Synth(a) => ("synth", synth(a)),
        Command::Erase(a) => ("erase", erase(a)),
    };
    match result {
        Ok(o) => {
            let summary = Summary {
                cmd: name,
                out_paths: o.out_paths,
                mean_iou: o.mean_iou,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            println!(
                "{}",
                serde_json::to_string(&summary).expect("serializable summary")
            );
            ExitCode::from(o.code)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let backend = e
        .chain()
        .filter_map(|c| c.downcast_ref::<contrastseg::Error>())
        .any(|c| c.is_backend());
    if backend {
        3
    } else {
        2
    }
}

fn load_scene(path: Option<&Path>) -> Result<Option<SceneSpec>> {
    path.map(|p| SceneSpec::load(p).with_context(|| format!("loading scene {}", p.display())))
        .transpose()
}

type Built = (amcp::AmcpConfig, Box<dyn Painter>, Box<dyn Projector>);

fn backends(engine: &EngineArgs, scene: Option<&SceneSpec>) -> Result<Built> {
    let (cfg, b) = engine.resolve()?;
    let painter = b.painter.build(scene, b.timeout)?;
    let projector = b.projector.build(b.timeout)?;
    Ok((cfg, painter, projector))
}

fn segment(a: SegmentArgs) -> Result<Outcome> {
    let image =
        io::load_image(&a.image).with_context(|| format!("loading {}", a.image.display()))?;
    let prompt = prompt::parse(&a.prompt)
        .context("usage: --prompt point:X,Y[;X,Y] | box:x0,y0,x1,y1 | scribble:PATH | mask:PATH")?;
    prompt.validate(image.dims())?;
    let scene = load_scene(a.scene.as_deref())?;
    if let Some(s) = &scene {
        if (s.width, s.height) != image.dims() {
            bail!(contrastseg::Error::SceneMismatch(format!(
                "scene is {}x{}, image is {}x{}",
                s.width,
                s.height,
                image.width(),
                image.height()
            )));
        }
    }
    let (cfg, painter, projector) = backends(&a.engine, scene.as_ref())?;
    log::info!(
        "segmenting {} with {} / {}",
        a.image.display(),
        painter.name(),
        projector.name()
    );
    let out =
        Engine::new(cfg.clone(), painter.as_ref(), projector.as_ref())?.run(&image, &prompt)?;
    io::save_mask(&out.mask, &a.out)?;
    let mut paths = vec![a.out.clone()];
    if let Some(dir) = &a.trace {
        amcp::write_trace(
            dir,
            &out,
            &cfg,
            &prompt,
            painter.as_ref(),
            projector.as_ref(),
        )?;
        paths.push(dir.clone());
    }
    if let Some(p) = &a.overlay {
        io::save_image(&io::overlay_boundary(&image, &out.mask)?, p)?;
        paths.push(p.clone());
    }
    let score = match &a.gt {
        Some(p) => Some(iou(&out.mask, &io::load_mask(p)?)?),
        None => None,
    };
    for t in &out.traces {
        log::info!(
            "step {} {} k={} {} -> {} px",
            t.step,
            t.kind.as_str(),
            t.k,
            t.input_pixels,
            t.result_pixels
        );
    }
    Ok(Outcome::ok(paths, score))
}

fn load_items(a: &ItemArgs) -> Result<Vec<EvalItem>> {
    let list = match (&a.suite, &a.dataset) {
        (Some(dir), _) => {
            load_suite(dir).with_context(|| format!("reading suite {}", dir.display()))?
        }
        (None, Some(file)) => {
            let text = std::fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            serde_json::from_str::<Vec<DatasetItem>>(&text)
                .with_context(|| format!("parsing {}", file.display()))?
        }
        (None, None) => bail!("one of --suite or --dataset is required"),
    };
    if list.is_empty() {
        bail!("no items to evaluate");
    }
    list.iter()
        .map(|i| i.load().with_context(|| format!("loading item {}", i.id)))
        .collect()
}

fn eval_options(a: &ItemArgs) -> Result<EvalOptions> {
    let mut opts = EvalOptions::new(a.prompt_type);
    if let Some(rate) = a.noise {
        opts.noise = Some(NoiseSpec {
            jitter: a.jitter,
            ..NoiseSpec::new(rate, a.noise_seed)?
        });
    }
    opts.sigma = a.sigma;
    if a.trace {
        opts.trace_dir = Some(a.out.join("traces"));
    }
    Ok(opts)
}

fn eval_cmd(a: EvalArgs) -> Result<Outcome> {
    let items = load_items(&a.items)?;
    let opts = eval_options(&a.items)?;
    let (cfg, b) = a.engine.resolve()?;
    log::info!("evaluating {} items, prompt {}", items.len(), opts.prompt);
    let report = evaluate(&items, &cfg, &b, &opts)?;
    std::fs::create_dir_all(&a.items.out)?;
    let (csv, json) = (
        a.items.out.join("report.csv"),
        a.items.out.join("report.json"),
    );
    report.write_csv(&csv)?;
    report.write_json(&json)?;
    log::info!(
        "mean IoU {:.4}, {} exact, {} failed",
        report.mean_iou,
        report.exact,
        report.failures
    );
    let mut o = Outcome::ok(vec![csv, json], Some(report.mean_iou));
    if report.failures == report.rows.len() {
        log::error!(
            "every item failed; first error: {}",
            report.rows[0].error.as_deref().unwrap_or("?")
        );
        o.code = 3;
    }
    Ok(o)
}

fn ablate_cmd(a: AblateArgs) -> Result<Outcome> {
    let items = load_items(&a.items)?;
    let opts = eval_options(&a.items)?;
    let (cfg, b) = a.engine.resolve()?;
    let report = ablate(&items, &cfg, &b, &opts, a.axis, &a.values)?;
    std::fs::create_dir_all(&a.items.out)?;
    let (csv, json) = (
        a.items.out.join("ablation.csv"),
        a.items.out.join("ablation.json"),
    );
    report.write_csv(&csv)?;
    report.write_json(&json)?;
    for (v, m) in report.summary() {
        log::info!("{} = {v}: mean IoU {m:.4}", a.axis.name());
    }
    Ok(Outcome::ok(vec![csv, json], None))
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let opts = SuiteOptions {
        n: a.n,
        seed: a.seed,
        width: a.width,
        height: a.height,
        family: a.family,
        noise_sigma: a.sigma,
    };
    let scenes = eval::gen_scenes(&opts)?;
    eval::write_suite(&a.out, &opts, &scenes)?;
    log::info!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(Outcome::ok(vec![a.out.join(eval::MANIFEST)], None))
}

fn erase(a: EraseArgs) -> Result<Outcome> {
    let image = io::load_image(&a.image)?;
    let mask = io::load_mask(&a.mask)?;
    let scene = load_scene(a.scene.as_deref())?;
    let (cfg, painter, _) = backends(&a.engine, scene.as_ref())?;
    let erased = amcp::erase_object(
        &image,
        &mask,
        painter.as_ref(),
        cfg.seed,
        cfg.diffusion_steps,
    )?;
    io::save_image(&erased, &a.out)?;
    Ok(Outcome::ok(vec![a.out], None))
}
