use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::backends::Backends;
use super::noise::{perturb_prompt, NoiseSpec};
use super::scenes::{coarse_mask, scribble, Manifest, ScenePrompts, SuiteScene, MANIFEST};
use crate::amcp::{write_trace, AmcpConfig, Engine, PromptKind, RunOutput, StepTrace};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::iou;
use crate::par;
use crate::projector::Projector;
use crate::raster::{check_dims, BitMask, ImageBuf};
use crate::scene::SceneSpec;

/// An evaluation item on disk. Missing coarse/scribble files are derived
/// from the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub id: String,
    pub image: PathBuf,
    pub gt: PathBuf,
    #[serde(default)]
    pub scene: Option<PathBuf>,
    #[serde(default)]
    pub coarse: Option<PathBuf>,
    #[serde(default)]
    pub scribble: Option<PathBuf>,
}

impl DatasetItem {
    pub fn load(&self) -> Result<EvalItem> {
        let image = io::load_image(&self.image)?;
        let gt = io::load_mask(&self.gt)?;
        check_dims(image.dims(), gt.dims())?;
        let scene = self.scene.as_ref().map(SceneSpec::load).transpose()?;
        let bbox = gt.tight_bbox().ok_or(Error::EmptyMask)?;
        let load =
            |p: &Option<PathBuf>, derive: fn(&BitMask) -> Result<BitMask>| -> Result<BitMask> {
                match p {
                    Some(p) => {
                        let m = io::load_mask(p)?;
                        check_dims(image.dims(), m.dims())?;
                        Ok(m)
                    }
                    None => derive(&gt),
                }
            };
        let prompts = ScenePrompts {
            point: super::scenes::centroid_point(&gt)?,
            bbox,
            coarse: load(&self.coarse, coarse_mask)?,
            scribble: load(&self.scribble, scribble)?,
        };
        Ok(EvalItem {
            id: self.id.clone(),
            image,
            gt,
            scene,
            prompts,
        })
    }
}

/// Reads the manifest of a suite written by [`super::write_suite`].
pub fn load_suite(dir: &Path) -> Result<Vec<DatasetItem>> {
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST))?)?;
    Ok(manifest
        .scenes
        .iter()
        .map(|e| {
            let d = dir.join(&e.dir);
            DatasetItem {
                id: e.id.clone(),
                image: d.join("image.png"),
                gt: d.join("gt.png"),
                scene: Some(d.join("scene.json")),
                coarse: Some(d.join("coarse.png")),
                scribble: Some(d.join("scribble.png")),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub image: ImageBuf,
    pub gt: BitMask,
    pub scene: Option<SceneSpec>,
    pub prompts: ScenePrompts,
}

impl From<&SuiteScene> for EvalItem {
    fn from(s: &SuiteScene) -> Self {
        Self {
            id: s.id.clone(),
            image: s.image.clone(),
            gt: s.spec.gt_mask.clone(),
            scene: Some(s.spec.clone()),
            prompts: s.prompts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub prompt: PromptKind,
    pub noise: Option<NoiseSpec>,
    /// Overrides the painting noise recorded in each scene.
    pub sigma: Option<f32>,
    #[serde(skip)]
    pub trace_dir: Option<PathBuf>,
}

impl EvalOptions {
    pub fn new(prompt: PromptKind) -> Self {
        Self {
            prompt,
            noise: None,
            sigma: None,
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub item_id: String,
    pub prompt_type: PromptKind,
    pub noise_rate: f64,
    /// 0 for failed items.
    pub iou: f64,
    pub exact: bool,
    pub steps_run: usize,
    pub degenerate_steps: usize,
    /// Steps that broke the shrink (I) or grow (O) relation.
    pub monotone_violations: usize,
    pub prompt_feasible: bool,
    pub final_objective: Option<f64>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: AmcpConfig,
    pub backends: Backends,
    pub options: EvalOptions,
    pub mean_iou: f64,
    pub exact: usize,
    pub failures: usize,
    pub rows: Vec<ReportRow>,
}

const CSV_HEADER: [&str; 7] = [
    "item_id",
    "prompt_type",
    "noise_rate",
    "iou",
    "steps_run",
    "degenerate_steps",
    "wall_ms",
];

fn csv_fields(r: &ReportRow) -> [String; 7] {
    [
        r.item_id.clone(),
        r.prompt_type.to_string(),
        r.noise_rate.to_string(),
        format!("{:.6}", r.iou),
        r.steps_run.to_string(),
        r.degenerate_steps.to_string(),
        format!("{:.3}", r.wall_ms),
    ]
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::ReportWrite(format!("{}: {e}", path.display()))
}

impl Report {
    fn new(
        config: AmcpConfig,
        backends: Backends,
        options: EvalOptions,
        rows: Vec<ReportRow>,
    ) -> Self {
        let mean_iou = rows.iter().map(|r| r.iou).sum::<f64>() / rows.len() as f64;
        Self {
            mean_iou,
            exact: rows.iter().filter(|r| r.exact).count(),
            failures: rows.iter().filter(|r| r.error.is_some()).count(),
            config,
            backends,
            options,
            rows,
        }
    }

    pub fn monotone_violations(&self) -> usize {
        self.rows.iter().map(|r| r.monotone_violations).sum()
    }

    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.wall_ms = 0.0);
        r
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = |e: csv::Error| Error::ReportWrite(e.to_string());
        w.write_record(CSV_HEADER).map_err(e)?;
        for r in &self.rows {
            w.write_record(csv_fields(r)).map_err(e)?;
        }
        String::from_utf8(
            w.into_inner()
                .map_err(|e| Error::ReportWrite(e.to_string()))?,
        )
        .map_err(|e| Error::ReportWrite(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| write_err(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).map_err(|e| write_err(path, e))?;
        std::fs::write(path, bytes).map_err(|e| write_err(path, e))
    }
}

/// Runs the loop on every item with one shared configuration and seed.
/// Per-item failures are recorded in the report rather than aborting.
pub fn evaluate(
    items: &[EvalItem],
    cfg: &AmcpConfig,
    backends: &Backends,
    opts: &EvalOptions,
) -> Result<Report> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("no items to evaluate".into()));
    }
    cfg.validate()?;
    if let Some(n) = &opts.noise {
        n.validate()?;
    }
    let projector = backends.projector.build(backends.timeout)?;
    let rows = par::map_indices(items.len(), |i| {
        let start = Instant::now();
        let item = &items[i];
        let noise_rate = opts.noise.map_or(0.0, |n| n.rate);
        let mut row = ReportRow {
            item_id: item.id.clone(),
            prompt_type: opts.prompt,
            noise_rate,
            iou: 0.0,
            exact: false,
            steps_run: 0,
            degenerate_steps: 0,
            monotone_violations: 0,
            prompt_feasible: true,
            final_objective: None,
            error: None,
            wall_ms: 0.0,
        };
        match run_item(i, item, cfg, backends, projector.as_ref(), opts) {
            Ok((out, feasible)) => {
                row.iou = iou(&out.mask, &item.gt).unwrap_or(0.0);
                row.exact = out.mask == item.gt;
                row.steps_run = out.traces.len();
                row.degenerate_steps = out.degenerate_steps();
                row.monotone_violations = out
                    .traces
                    .iter()
                    .filter(|t| !StepTrace::is_monotone(t))
                    .count();
                row.prompt_feasible = feasible;
                row.final_objective = out.traces.last().and_then(|t| t.objective);
            }
            Err(e) => {
                log::warn!("{}: {e}", item.id);
                row.error = Some(e.to_string());
            }
        }
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        row
    });
    Ok(Report::new(
        cfg.clone(),
        backends.clone(),
        opts.clone(),
        rows,
    ))
}

fn run_item(
    index: usize,
    item: &EvalItem,
    cfg: &AmcpConfig,
    backends: &Backends,
    projector: &dyn Projector,
    opts: &EvalOptions,
) -> Result<(RunOutput, bool)> {
    let scene = item.scene.clone().map(|s| match opts.sigma {
        Some(sigma) => s.with_noise(sigma),
        None => s,
    });
    let painter = backends.painter.build(scene.as_ref(), backends.timeout)?;
    let mut prompt = item.prompts.get(opts.prompt);
    let mut feasible = true;
    if let Some(noise) = &opts.noise {
        let n = NoiseSpec {
            seed: noise.seed.wrapping_add(index as u64),
            ..*noise
        };
        let p = perturb_prompt(&prompt, &item.gt, &n)?;
        prompt = p.prompt;
        feasible = p.feasible;
    }
    let engine = Engine::new(cfg.clone(), painter.as_ref(), projector)?;
    let out = engine.run(&item.image, &prompt)?;
    if let Some(dir) = &opts.trace_dir {
        write_trace(
            &dir.join(&item.id),
            &out,
            cfg,
            &prompt,
            painter.as_ref(),
            projector,
        )?;
    }
    Ok((out, feasible))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    T,
    K,
    BoxRate,
    RingWidth,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" | "N" => Ok(Self::N),
            "t" | "T" => Ok(Self::T),
            "k" | "K" => Ok(Self::K),
            "box_rate" => Ok(Self::BoxRate),
            "ring_width" => Ok(Self::RingWidth),
            _ => Err(Error::InvalidConfig(format!(
                "unknown ablation axis {s:?} (n|t|k|box_rate|ring_width)"
            ))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::T => "t",
            Self::K => "k",
            Self::BoxRate => "box_rate",
            Self::RingWidth => "ring_width",
        }
    }

    /// `cfg` with this axis set to `value`. `K` fixes every step's cluster
    /// count; `T` drops an explicit schedule unless it is uniform.
    pub fn apply(self, cfg: &AmcpConfig, value: f64) -> Result<AmcpConfig> {
        let int = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!(
                    "axis {} needs an integer, got {value}",
                    self.name()
                )))
            }
        };
        let mut c = cfg.clone();
        match self {
            Self::N => c.n_samples = int()?,
            Self::T => {
                c.steps = int()?;
                c.k_schedule = match &cfg.k_schedule {
                    Some(ks) if ks.windows(2).all(|w| w[0] == w[1]) && !ks.is_empty() => {
                        Some(vec![ks[0]; c.steps])
                    }
                    _ => None,
                };
            }
            Self::K => c.k_schedule = Some(vec![int()?; c.steps]),
            Self::BoxRate => c.box_rate = value,
            Self::RingWidth => c.ring_width = int()?,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub value: f64,
    pub report: Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub axis: Axis,
    pub entries: Vec<AblationEntry>,
}

impl AblationReport {
    /// `(value, mean IoU)` per axis value.
    pub fn summary(&self) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .map(|e| (e.value, e.report.mean_iou))
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = |e: csv::Error| Error::ReportWrite(e.to_string());
        let mut header = vec!["axis", "value"];
        header.extend(CSV_HEADER);
        w.write_record(&header).map_err(e)?;
        for entry in &self.entries {
            for r in &entry.report.rows {
                let mut rec = vec![self.axis.name().to_string(), entry.value.to_string()];
                rec.extend(csv_fields(r));
                w.write_record(&rec).map_err(e)?;
            }
        }
        String::from_utf8(
            w.into_inner()
                .map_err(|e| Error::ReportWrite(e.to_string()))?,
        )
        .map_err(|e| Error::ReportWrite(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| write_err(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).map_err(|e| write_err(path, e))?;
        std::fs::write(path, bytes).map_err(|e| write_err(path, e))
    }
}

/// One [`evaluate`] per axis value, all with the same seeds.
pub fn ablate(
    items: &[EvalItem],
    cfg: &AmcpConfig,
    backends: &Backends,
    opts: &EvalOptions,
    axis: Axis,
    values: &[f64],
) -> Result<AblationReport> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("no ablation values".into()));
    }
    let configs = values
        .iter()
        .map(|v| axis.apply(cfg, *v))
        .collect::<Result<Vec<_>>>()?;
    let entries = values
        .iter()
        .zip(&configs)
        .map(|(v, c)| {
            Ok(AblationEntry {
                value: *v,
                report: evaluate(items, c, backends, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { axis, entries })
}
