//! The alternating refinement loop.
//!
//! Every step works on the foreground mask directly. An I-step inpaints the
//! current mask and may only remove pixels inside the inner boundary ring;
//! an O-step outpaints the complement and may only add pixels inside the
//! outer ring (and inside the step's box). Each step averages `N`
//! per-sample candidates, thresholds, and applies an open/close clean-up.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::clustering::kmeans_binarize;
use crate::color_model::GmmOptions;
use crate::error::{Error, Result};
use crate::io;
use crate::morphology::{morph_clean, rings, StructuringElement};
use crate::painter::{PaintMode, PaintRequest, Painter};
use crate::par;
use crate::potential::{
    combine, phi_color, phi_paint, phi_prompt, ContrastField, GaussianSigma, PotentialWeights,
};
use crate::projector::{FeatureMap, Projector};
use crate::raster::{bbox_of, check_dims, BitMask, ImageBuf, Rect, SoftMask};

#[derive(Debug, Clone, PartialEq)]
pub enum Prompt {
    Point(Vec<(usize, usize)>),
    Scribble(BitMask),
    Box(Rect),
    CoarseMask(BitMask),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Point,
    Scribble,
    Box,
    Mask,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [
        PromptKind::Point,
        PromptKind::Scribble,
        PromptKind::Box,
        PromptKind::Mask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Point => "point",
            PromptKind::Scribble => "scribble",
            PromptKind::Box => "box",
            PromptKind::Mask => "mask",
        }
    }
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown prompt type {s:?}")))
    }
}

impl Prompt {
    pub fn kind(&self) -> PromptKind {
        match self {
            Prompt::Point(_) => PromptKind::Point,
            Prompt::Scribble(_) => PromptKind::Scribble,
            Prompt::Box(_) => PromptKind::Box,
            Prompt::CoarseMask(_) => PromptKind::Mask,
        }
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<()> {
        let (width, height) = dims;
        let oob = Error::PromptOutOfBounds { width, height };
        match self {
            Prompt::Point(pts) if pts.is_empty() => Err(Error::NoPromptPoints),
            Prompt::Point(pts) => {
                if pts.iter().all(|(x, y)| *x < width && *y < height) {
                    Ok(())
                } else {
                    Err(oob)
                }
            }
            Prompt::Box(r) => {
                if r.area() == 0 {
                    Err(Error::InvalidMask("empty box prompt".into()))
                } else if r.fits_in(width, height) {
                    Ok(())
                } else {
                    Err(oob)
                }
            }
            Prompt::Scribble(m) | Prompt::CoarseMask(m) => {
                check_dims(dims, m.dims()).map_err(|_| oob)?;
                if m.is_empty() {
                    Err(Error::EmptyMask)
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Centers of the prompt Gaussians: the points themselves, the box
    /// center, or every scribble pixel. Coarse masks carry no point prior.
    pub fn prior_points(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Prompt::Point(pts) => Some(pts.iter().map(|(x, y)| (*x as f64, *y as f64)).collect()),
            Prompt::Box(r) => Some(vec![r.center()]),
            Prompt::Scribble(m) => Some(
                m.points()
                    .into_iter()
                    .map(|(x, y)| (x as f64, y as f64))
                    .collect(),
            ),
            Prompt::CoarseMask(_) => None,
        }
    }

    /// Short machine-readable summary for reports.
    pub fn describe(&self) -> serde_json::Value {
        match self {
            Prompt::Point(pts) => serde_json::json!({"type": "point", "points": pts}),
            Prompt::Box(r) => serde_json::json!({"type": "box", "rect": [r.x0, r.y0, r.x1, r.y1]}),
            Prompt::Scribble(m) => serde_json::json!({"type": "scribble", "pixels": m.count()}),
            Prompt::CoarseMask(m) => serde_json::json!({"type": "mask", "pixels": m.count()}),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    I,
    O,
}

impl StepKind {
    pub fn mode(self) -> PaintMode {
        match self {
            StepKind::I => PaintMode::Inpaint,
            StepKind::O => PaintMode::Outpaint,
        }
    }

    pub fn other(self) -> Self {
        match self {
            StepKind::I => StepKind::O,
            StepKind::O => StepKind::I,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::I => "I",
            StepKind::O => "O",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmcpConfig {
    pub steps: usize,
    pub first_step: StepKind,
    pub n_samples: usize,
    /// Cluster count per step; derived from the prompt type when absent.
    pub k_schedule: Option<Vec<usize>>,
    pub weights: PotentialWeights,
    pub ring_width: usize,
    pub clean_kernel: StructuringElement,
    pub box_rate: f64,
    pub sigma_fraction: f64,
    pub avg_threshold: f32,
    pub diffusion_steps: usize,
    pub seed: u64,
    pub color_components: usize,
    /// Evaluate the diagnostic objective after each step (two extra paintings).
    pub objective: bool,
}

impl Default for AmcpConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            first_step: StepKind::I,
            n_samples: 5,
            k_schedule: None,
            weights: PotentialWeights::default(),
            ring_width: 32,
            clean_kernel: StructuringElement::new(5).expect("odd"),
            box_rate: 1.1,
            sigma_fraction: 0.1,
            avg_threshold: 0.5,
            diffusion_steps: 50,
            seed: 0,
            color_components: 5,
            objective: true,
        }
    }
}

impl AmcpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1".into());
        }
        if let Some(ks) = &self.k_schedule {
            if ks.len() != self.steps {
                return bad(format!(
                    "k_schedule has {} entries for {} steps",
                    ks.len(),
                    self.steps
                ));
            }
            if let Some(k) = ks.iter().find(|k| !(2..=3).contains(*k)) {
                return Err(Error::InvalidK(*k));
            }
        }
        if self.ring_width == 0 {
            return bad("ring_width must be >= 1".into());
        }
        if !(self.box_rate > 0.0 && self.box_rate.is_finite()) {
            return bad(format!("box_rate must be positive, got {}", self.box_rate));
        }
        if !(self.sigma_fraction > 0.0 && self.sigma_fraction.is_finite()) {
            return bad(format!(
                "sigma_fraction must be positive, got {}",
                self.sigma_fraction
            ));
        }
        if !(self.avg_threshold > 0.0 && self.avg_threshold < 1.0) {
            return bad(format!(
                "avg_threshold must lie in (0, 1), got {}",
                self.avg_threshold
            ));
        }
        if self.color_components == 0 {
            return bad("color_components must be >= 1".into());
        }
        self.weights.validate()
    }

    /// Cluster counts for every step: three clusters in the first three
    /// steps for point, box and scribble prompts, two otherwise.
    pub fn schedule(&self, kind: PromptKind) -> Vec<usize> {
        if let Some(ks) = &self.k_schedule {
            return ks.clone();
        }
        (0..self.steps)
            .map(|t| {
                if kind != PromptKind::Mask && t < 3 {
                    3
                } else {
                    2
                }
            })
            .collect()
    }

    pub fn step_kind(&self, t: usize) -> StepKind {
        if t.is_multiple_of(2) {
            self.first_step
        } else {
            self.first_step.other()
        }
    }

    /// Base seed of step `t`; sample `i` uses `step_seed(t) + i`.
    pub fn step_seed(&self, t: usize) -> u64 {
        self.seed
            .wrapping_add((t as u64).wrapping_mul(self.n_samples as u64 + 2))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub kind: StepKind,
    pub k: usize,
    pub roi: Rect,
    pub input_pixels: usize,
    pub result_pixels: usize,
    pub objective: Option<f64>,
    /// Mean potential over the result mask inside the roi, averaged over samples.
    pub phi_mean: f64,
    /// `exp(-phi_mean)`.
    pub posterior_score: f64,
    /// The step left the mask unchanged because it could not act on it.
    pub degenerate: bool,
    /// Samples whose contrast field was constant inside the roi.
    pub degenerate_clusters: usize,
    /// The color term fell back to a constant field.
    pub color_fallback: bool,
    #[serde(skip)]
    pub input: BitMask,
    /// Thresholded average before the open/close clean-up.
    #[serde(skip)]
    pub pre_clean: BitMask,
    #[serde(skip)]
    pub result: BitMask,
    #[serde(skip)]
    pub soft: SoftMask,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl StepTrace {
    /// Shrink-only for I-steps, grow-only (before clean-up) for O-steps.
    pub fn is_monotone(&self) -> bool {
        match self.kind {
            StepKind::I => {
                self.pre_clean.is_subset_of(&self.input) && self.result.is_subset_of(&self.input)
            }
            StepKind::O => self.input.is_subset_of(&self.pre_clean),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mask: BitMask,
    pub traces: Vec<StepTrace>,
}

impl RunOutput {
    pub fn degenerate_steps(&self) -> usize {
        self.traces.iter().filter(|t| t.degenerate).count()
    }
}

pub fn init_mask(prompt: &Prompt, dims: (usize, usize)) -> Result<BitMask> {
    prompt.validate(dims)?;
    let (w, h) = dims;
    Ok(match prompt {
        Prompt::Box(r) => BitMask::from_rect(w, h, *r),
        Prompt::CoarseMask(m) => m.clone(),
        Prompt::Point(_) | Prompt::Scribble(_) => BitMask::full(w, h),
    })
}

/// Runs the configured steps with one painter and one projector.
pub struct Engine<'a> {
    cfg: AmcpConfig,
    painter: &'a dyn Painter,
    projector: &'a dyn Projector,
}

impl<'a> Engine<'a> {
    pub fn new(
        cfg: AmcpConfig,
        painter: &'a dyn Painter,
        projector: &'a dyn Projector,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            painter,
            projector,
        })
    }

    pub fn config(&self) -> &AmcpConfig {
        &self.cfg
    }

    pub fn run(&self, image: &ImageBuf, prompt: &Prompt) -> Result<RunOutput> {
        let mut mask = init_mask(prompt, image.dims())?;
        let schedule = self.cfg.schedule(prompt.kind());
        let features = self.projector.project(image)?;
        let mut traces = Vec::with_capacity(self.cfg.steps);
        for (t, k) in schedule.iter().enumerate() {
            let kind = self.cfg.step_kind(t);
            let (next, trace) = self.run_step(image, &features, prompt, &mask, t, kind, *k)?;
            log::debug!(
                "step {t} {}: {} -> {} px{}",
                kind.as_str(),
                trace.input_pixels,
                trace.result_pixels,
                if trace.degenerate {
                    " (degenerate)"
                } else {
                    ""
                }
            );
            mask = next;
            traces.push(trace);
        }
        Ok(RunOutput { mask, traces })
    }

    /// One I- or O-step on `mask`. `features` is the projection of `image`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_step(
        &self,
        image: &ImageBuf,
        features: &FeatureMap,
        prompt: &Prompt,
        mask: &BitMask,
        t: usize,
        kind: StepKind,
        k: usize,
    ) -> Result<(BitMask, StepTrace)> {
        let start = Instant::now();
        check_dims(image.dims(), mask.dims())?;
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let cfg = &self.cfg;
        let (w, h) = image.dims();
        let roi = bbox_of(mask, cfg.box_rate)?;
        let mut trace = StepTrace {
            step: t,
            kind,
            k,
            roi,
            input_pixels: mask.count(),
            result_pixels: mask.count(),
            objective: None,
            phi_mean: 0.0,
            posterior_score: 1.0,
            degenerate: false,
            degenerate_clusters: 0,
            color_fallback: false,
            input: mask.clone(),
            pre_clean: mask.clone(),
            result: mask.clone(),
            soft: SoftMask::average(std::slice::from_ref(mask))?,
            elapsed: Duration::ZERO,
        };
        if kind == StepKind::O && mask.is_full() {
            // nothing outside the mask to paint
            trace.degenerate = true;
            trace.elapsed = start.elapsed();
            return Ok((mask.clone(), trace));
        }

        let mode = kind.mode();
        let (inner, outer) = rings(mask, cfg.ring_width);
        let (keep, painted_region, ring) = match kind {
            StepKind::I => (mask.not(), mask.clone(), inner),
            StepKind::O => (
                mask.clone(),
                mask.not(),
                outer.and(&BitMask::from_rect(w, h, roi)),
            ),
        };
        let seed = cfg.step_seed(t);
        let req = PaintRequest {
            image,
            keep_mask: &keep,
            n_samples: cfg.n_samples,
            seed,
            diffusion_steps: cfg.diffusion_steps,
            mode,
        };
        let painted = self.painter.paint(&req)?;
        if painted.samples.len() != cfg.n_samples {
            return Err(Error::Protocol(format!(
                "painter returned {} samples, expected {}",
                painted.samples.len(),
                cfg.n_samples
            )));
        }

        let gmm = GmmOptions {
            components: cfg.color_components,
            seed,
            ..GmmOptions::default()
        };
        let color = match phi_color(image, &painted_region, roi, gmm) {
            Ok(f) => f,
            Err(Error::DegenerateRegion(_)) => {
                trace.color_fallback = true;
                ContrastField::from_roi_fn(w, h, roi, |_, _| 0.5)
            }
            Err(e) => return Err(e),
        };
        let prior = match prompt.prior_points() {
            Some(points) => {
                let tight = mask.tight_bbox().expect("non-empty mask");
                let sigma = GaussianSigma::from_box(tight, cfg.sigma_fraction)?;
                Some(phi_prompt(&points, sigma, roi, (w, h))?)
            }
            None => None,
        };

        let ring_pixels = ring.points();
        let per_sample = par::map_slice(
            &painted.samples,
            |sample| -> Result<(BitMask, ContrastField, bool)> {
                let projected = self.projector.project(sample)?;
                let paint = phi_paint(features, &projected, roi)?;
                let phi = combine(&paint, &color, prior.as_ref(), &cfg.weights, mode)?;
                let clusters = kmeans_binarize(&phi, k)?;
                let mut candidate = mask.clone();
                if !clusters.degenerate {
                    for (x, y) in &ring_pixels {
                        // the lowest cluster flips the label, the highest confirms it
                        if clusters.cluster_at(*x, *y) == Some(0) {
                            candidate.set(*x, *y, kind == StepKind::O);
                        }
                    }
                }
                Ok((candidate, phi, clusters.degenerate))
            },
        )
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let candidates: Vec<BitMask> = per_sample.iter().map(|(c, _, _)| c.clone()).collect();
        trace.degenerate_clusters = per_sample.iter().filter(|(_, _, d)| *d).count();
        let soft = SoftMask::average(&candidates)?;
        let pre_clean = soft.binarize(cfg.avg_threshold);
        let cleaned = morph_clean(&pre_clean, cfg.clean_kernel);
        let mut result = match kind {
            StepKind::I => cleaned.and(mask),
            StepKind::O => cleaned,
        };
        if result.is_empty() {
            log::warn!(
                "step {t} ({}) emptied the mask; keeping the previous estimate",
                kind.as_str()
            );
            trace.degenerate = true;
            result = mask.clone();
        }

        let support: Vec<usize> = result
            .points()
            .iter()
            .filter(|(x, y)| roi.contains(*x, *y))
            .map(|(x, y)| y * w + x)
            .collect();
        if !support.is_empty() {
            let means: Vec<f64> = per_sample
                .iter()
                .map(|(_, phi, _)| {
                    support.iter().map(|i| phi.values()[*i] as f64).sum::<f64>()
                        / support.len() as f64
                })
                .collect();
            trace.phi_mean = means.iter().sum::<f64>() / means.len() as f64;
            trace.posterior_score = (-trace.phi_mean).exp();
        }
        if cfg.objective && !result.is_full() {
            let obj_seed = seed.wrapping_add(cfg.n_samples as u64);
            trace.objective = Some(objective(
                image,
                features,
                &result,
                self.painter,
                self.projector,
                cfg.ring_width,
                obj_seed,
                cfg.diffusion_steps,
            )?);
        }
        trace.result_pixels = result.count();
        trace.pre_clean = pre_clean;
        trace.soft = soft;
        trace.result = result.clone();
        trace.elapsed = start.elapsed();
        Ok((result, trace))
    }
}

/// Mean feature distance over the inner ring between the image and one
/// inpainting of `mask`, plus the same over the outer ring for one
/// outpainting. Larger means `mask` separates the contrast better.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    image: &ImageBuf,
    features: &FeatureMap,
    mask: &BitMask,
    painter: &dyn Painter,
    projector: &dyn Projector,
    ring_width: usize,
    seed: u64,
    diffusion_steps: usize,
) -> Result<f64> {
    check_dims(image.dims(), mask.dims())?;
    if mask.is_empty() || mask.is_full() {
        return Err(Error::InvalidMask(
            "objective needs a mask that is neither empty nor full".into(),
        ));
    }
    let (inner, outer) = rings(mask, ring_width);
    let term = |keep: &BitMask, mode: PaintMode, ring: &BitMask| -> Result<f64> {
        let pixels = ring.points();
        if pixels.is_empty() {
            return Ok(0.0);
        }
        let req = PaintRequest {
            image,
            keep_mask: keep,
            n_samples: 1,
            seed,
            diffusion_steps,
            mode,
        };
        let sample = painter
            .paint(&req)?
            .samples
            .into_iter()
            .next()
            .ok_or_else(|| Error::Protocol("no samples".into()))?;
        let projected = projector.project(&sample)?;
        let w = image.width();
        let total: f64 = pixels
            .iter()
            .map(|(x, y)| {
                let i = y * w + x;
                features
                    .vector(i)
                    .iter()
                    .zip(projected.vector(i))
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        Ok(total / pixels.len() as f64)
    };
    Ok(term(&mask.not(), PaintMode::Inpaint, &inner)? + term(mask, PaintMode::Outpaint, &outer)?)
}

/// Inpaints `mask` once, removing the object it covers.
pub fn erase_object(
    image: &ImageBuf,
    mask: &BitMask,
    painter: &dyn Painter,
    seed: u64,
    diffusion_steps: usize,
) -> Result<ImageBuf> {
    check_dims(image.dims(), mask.dims())?;
    if mask.is_empty() {
        return Err(Error::InvalidMask("nothing to erase".into()));
    }
    let keep = mask.not();
    let req = PaintRequest {
        image,
        keep_mask: &keep,
        n_samples: 1,
        seed,
        diffusion_steps,
        mode: PaintMode::Inpaint,
    };
    painter
        .paint(&req)?
        .samples
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("no samples".into()))
}

#[derive(Serialize)]
struct TraceFile<'a> {
    config: &'a AmcpConfig,
    prompt: serde_json::Value,
    painter: String,
    projector: String,
    final_pixels: usize,
    steps: &'a [StepTrace],
}

/// Writes `step_{t}_{kind}.png`, `step_{t}_avg.png`, `trace.json` and
/// `timings.json` into `dir`.
pub fn write_trace(
    dir: &Path,
    out: &RunOutput,
    cfg: &AmcpConfig,
    prompt: &Prompt,
    painter: &dyn Painter,
    projector: &dyn Projector,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for tr in &out.traces {
        io::save_mask(
            &tr.result,
            dir.join(format!("step_{}_{}.png", tr.step, tr.kind.as_str())),
        )?;
        io::save_soft_mask(&tr.soft, dir.join(format!("step_{}_avg.png", tr.step)))?;
    }
    let file = TraceFile {
        config: cfg,
        prompt: prompt.describe(),
        painter: painter.name(),
        projector: projector.name(),
        final_pixels: out.mask.count(),
        steps: &out.traces,
    };
    std::fs::write(dir.join("trace.json"), serde_json::to_vec_pretty(&file)?)?;
    let timings: Vec<_> = out
        .traces
        .iter()
        .map(|t| serde_json::json!({"step": t.step, "wall_ms": t.elapsed.as_secs_f64() * 1e3}))
        .collect();
    std::fs::write(
        dir.join("timings.json"),
        serde_json::to_vec_pretty(&timings)?,
    )?;
    Ok(())
}
