use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amcp::Prompt;
use crate::error::{Error, Result};
use crate::raster::{BitMask, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Displacement bound as a fraction of half the object box diagonal.
    pub rate: f64,
    pub seed: u64,
    /// Draw an independent offset per prompt point instead of one rigid shift.
    #[serde(default)]
    pub jitter: bool,
}

impl NoiseSpec {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        let n = Self {
            rate,
            seed,
            jitter: false,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!(
                "noise rate must lie in [0, 1], got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub prompt: Prompt,
    /// The shifted prompt still touches the object.
    pub feasible: bool,
    /// Largest displacement applied, in pixels.
    pub max_shift: f64,
}

/// Shifts a prompt by a random vector drawn uniformly from the disk of
/// radius `rate * diag(gt box) / 2`. Components are truncated toward zero,
/// then the vector is limited so the prompt stays inside the frame.
pub fn perturb_prompt(prompt: &Prompt, gt: &BitMask, noise: &NoiseSpec) -> Result<Perturbed> {
    noise.validate()?;
    let (w, h) = gt.dims();
    prompt.validate((w, h))?;
    let bbox = gt.tight_bbox().ok_or(Error::EmptyMask)?;
    let radius = noise.rate * bbox.diagonal() / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut draw = || -> (i64, i64) {
        let r = radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        ((r * a.cos()).trunc() as i64, (r * a.sin()).trunc() as i64)
    };
    let mut max_shift = 0.0f64;
    let mut record =
        |dx: i64, dy: i64| max_shift = max_shift.max(((dx * dx + dy * dy) as f64).sqrt());

    let shifted = match prompt {
        Prompt::Point(pts) if noise.jitter => Prompt::Point(
            pts.iter()
                .map(|p| {
                    let (dx, dy) = draw();
                    let (dx, dy) = limit(
                        (dx, dy),
                        &Rect {
                            x0: p.0,
                            y0: p.1,
                            x1: p.0 + 1,
                            y1: p.1 + 1,
                        },
                        w,
                        h,
                    );
                    record(dx, dy);
                    (offset(p.0, dx), offset(p.1, dy))
                })
                .collect(),
        ),
        Prompt::Point(pts) => {
            let hull = points_bbox(pts);
            let (dx, dy) = limit(draw(), &hull, w, h);
            record(dx, dy);
            Prompt::Point(
                pts.iter()
                    .map(|p| (offset(p.0, dx), offset(p.1, dy)))
                    .collect(),
            )
        }
        Prompt::Box(r) => {
            let (dx, dy) = limit(draw(), r, w, h);
            record(dx, dy);
            Prompt::Box(Rect {
                x0: offset(r.x0, dx),
                y0: offset(r.y0, dy),
                x1: offset(r.x1, dx),
                y1: offset(r.y1, dy),
            })
        }
        Prompt::Scribble(m) | Prompt::CoarseMask(m) => {
            let b = m.tight_bbox().ok_or(Error::EmptyMask)?;
            let (dx, dy) = limit(draw(), &b, w, h);
            record(dx, dy);
            let moved = m.translated(dx, dy);
            if matches!(prompt, Prompt::Scribble(_)) {
                Prompt::Scribble(moved)
            } else {
                Prompt::CoarseMask(moved)
            }
        }
    };
    let feasible = match &shifted {
        Prompt::Point(pts) => pts.iter().any(|(x, y)| gt.get(*x, *y)),
        Prompt::Box(r) => gt.intersects(&BitMask::from_rect(w, h, *r)),
        Prompt::Scribble(m) | Prompt::CoarseMask(m) => gt.intersects(m),
    };
    Ok(Perturbed {
        prompt: shifted,
        feasible,
        max_shift,
    })
}

fn offset(v: usize, d: i64) -> usize {
    (v as i64 + d) as usize
}

fn points_bbox(pts: &[(usize, usize)]) -> Rect {
    Rect {
        x0: pts.iter().map(|p| p.0).min().unwrap_or(0),
        y0: pts.iter().map(|p| p.1).min().unwrap_or(0),
        x1: pts.iter().map(|p| p.0 + 1).max().unwrap_or(1),
        y1: pts.iter().map(|p| p.1 + 1).max().unwrap_or(1),
    }
}

/// Clamps a shift so that `r` moved by it stays inside `w x h`.
fn limit((dx, dy): (i64, i64), r: &Rect, w: usize, h: usize) -> (i64, i64) {
    (
        dx.clamp(-(r.x0 as i64), (w - r.x1) as i64),
        dy.clamp(-(r.y0 as i64), (h - r.y1) as i64),
    )
}
