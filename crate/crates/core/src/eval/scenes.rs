use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amcp::{Prompt, PromptKind};
use crate::error::{Error, Result};
use crate::io;
use crate::morphology::{erode, morph_clean, open, StructuringElement};
use crate::raster::{BitMask, ImageBuf, Rect};
use crate::scene::{SceneSpec, TextureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Ellipse,
    Polygon,
    Blob,
    /// Cycles ellipse, polygon, blob by scene index.
    Mixed,
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipse" => Ok(Self::Ellipse),
            "polygon" => Ok(Self::Polygon),
            "blob" => Ok(Self::Blob),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::InvalidConfig(format!("unknown shape family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub n: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub family: ShapeFamily,
    pub noise_sigma: f32,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            n: 20,
            seed: 7,
            width: 128,
            height: 128,
            family: ShapeFamily::Mixed,
            noise_sigma: 0.0,
        }
    }
}

/// Minimum distance in pixels between the object and the frame.
pub const MARGIN: usize = 8;
const AMPLITUDE: f32 = 0.2;
const MIN_BASE_DISTANCE: f32 = 0.6;
const MIN_GAP: f32 = 0.25;
/// Foreground draws per background before the background is redrawn.
const FG_ATTEMPTS: usize = 64;

/// Prompts of every type derived from a ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrompts {
    pub point: (usize, usize),
    pub bbox: Rect,
    pub coarse: BitMask,
    pub scribble: BitMask,
}

impl ScenePrompts {
    pub fn derive(gt: &BitMask) -> Result<Self> {
        Ok(Self {
            point: centroid_point(gt)?,
            bbox: gt.tight_bbox().ok_or(Error::EmptyMask)?,
            coarse: coarse_mask(gt)?,
            scribble: scribble(gt)?,
        })
    }

    pub fn get(&self, kind: PromptKind) -> Prompt {
        match kind {
            PromptKind::Point => Prompt::Point(vec![self.point]),
            PromptKind::Box => Prompt::Box(self.bbox),
            PromptKind::Mask => Prompt::CoarseMask(self.coarse.clone()),
            PromptKind::Scribble => Prompt::Scribble(self.scribble.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteScene {
    pub id: String,
    pub shape: ShapeFamily,
    pub spec: SceneSpec,
    pub image: ImageBuf,
    pub prompts: ScenePrompts,
}

/// Reproducible synthetic scenes: one seeded object per frame with its
/// area in 5-40% of the frame, at least [`MARGIN`] px from the border, and
/// invariant under the 5x5 open/close clean-up.
pub fn gen_scenes(opts: &SuiteOptions) -> Result<Vec<SuiteScene>> {
    if opts.n == 0 {
        return Err(Error::InvalidConfig("scene count must be >= 1".into()));
    }
    if opts.width < 4 * MARGIN || opts.height < 4 * MARGIN {
        return Err(Error::InvalidConfig(format!(
            "frame {}x{} too small",
            opts.width, opts.height
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.n)
        .map(|i| {
            let seed = master.next_u64();
            let shape = match opts.family {
                ShapeFamily::Mixed => [
                    ShapeFamily::Ellipse,
                    ShapeFamily::Polygon,
                    ShapeFamily::Blob,
                ][i % 3],
                f => f,
            };
            gen_scene(format!("scene_{i:03}"), seed, shape, opts)
        })
        .collect()
}

fn gen_scene(id: String, seed: u64, shape: ShapeFamily, opts: &SuiteOptions) -> Result<SuiteScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (opts.width, opts.height);
    let clean = StructuringElement::new(5).expect("odd");
    let frame = (w * h) as f64;
    let gt = loop {
        let raw = match shape {
            ShapeFamily::Ellipse | ShapeFamily::Mixed => ellipse(&mut rng, w, h),
            ShapeFamily::Polygon => polygon(&mut rng, w, h),
            ShapeFamily::Blob => blob(&mut rng, w, h),
        };
        let m = morph_clean(&raw, clean);
        let Some(b) = m.tight_bbox() else { continue };
        let area = m.count() as f64 / frame;
        let inside = b.x0 >= MARGIN && b.y0 >= MARGIN && b.x1 + MARGIN <= w && b.y1 + MARGIN <= h;
        if inside && (0.05..=0.40).contains(&area) && morph_clean(&m, clean) == m {
            break m;
        }
    };
    let spec = 'draw: loop {
        let background = texture(&mut rng);
        for _ in 0..FG_ATTEMPTS {
            let t = texture(&mut rng);
            if dist(t.base, background.base) < MIN_BASE_DISTANCE {
                continue;
            }
            let spec = SceneSpec::new(seed, background.clone(), t, gt.clone(), opts.noise_sigma)?;
            if spec.texture_gap >= MIN_GAP {
                break 'draw spec;
            }
        }
    };
    let prompts = ScenePrompts::derive(&spec.gt_mask)?;
    Ok(SuiteScene {
        id,
        shape,
        image: spec.render(),
        spec,
        prompts,
    })
}

fn texture(rng: &mut ChaCha8Rng) -> TextureSpec {
    let lo = AMPLITUDE + 0.02;
    TextureSpec {
        base: std::array::from_fn(|_| rng.random_range(lo..1.0 - lo)),
        amplitude: AMPLITUDE,
        cell: rng.random_range(6.0..16.0),
        octaves: rng.random_range(2..=3),
        seed: rng.next_u64(),
    }
}

fn dist(a: [f32; 3], b: [f32; 3]) -> f32 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f32>().sqrt()
}

fn ellipse(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BitMask {
    let s = w.min(h) as f64;
    let (cx, cy) = (
        rng.random_range(0.35..0.65) * w as f64,
        rng.random_range(0.35..0.65) * h as f64,
    );
    let (rx, ry) = (
        rng.random_range(0.12..0.32) * s,
        rng.random_range(0.12..0.32) * s,
    );
    let (sin, cos) = rng.random_range(0.0..TAU).sin_cos();
    BitMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
        (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
    })
}

fn polygon(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BitMask {
    let s = w.min(h) as f64;
    let (cx, cy) = (
        rng.random_range(0.4..0.6) * w as f64,
        rng.random_range(0.4..0.6) * h as f64,
    );
    let n = rng.random_range(5..=8);
    let r0 = rng.random_range(0.18..0.32) * s;
    let phase = rng.random_range(0.0..TAU);
    let verts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a = phase + TAU * (i as f64 + rng.random_range(-0.3..0.3)) / n as f64;
            let r = r0 * rng.random_range(0.65..1.0);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    BitMask::from_fn(w, h, |x, y| {
        point_in_polygon(&verts, x as f64 + 0.5, y as f64 + 0.5)
    })
}

fn point_in_polygon(verts: &[(f64, f64)], px: f64, py: f64) -> bool {
    let mut inside = false;
    let mut j = verts.len() - 1;
    for i in 0..verts.len() {
        let ((xi, yi), (xj, yj)) = (verts[i], verts[j]);
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn blob(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BitMask {
    let s = w.min(h) as f64;
    let mut disks = vec![(
        rng.random_range(0.4..0.6) * w as f64,
        rng.random_range(0.4..0.6) * h as f64,
        rng.random_range(0.1..0.18) * s,
    )];
    for _ in 0..rng.random_range(2..=3) {
        let (px, py, pr) = disks[rng.random_range(0..disks.len())];
        let a = rng.random_range(0.0..TAU);
        let d = pr * rng.random_range(0.4..0.8);
        disks.push((
            px + d * a.cos(),
            py + d * a.sin(),
            rng.random_range(0.08..0.16) * s,
        ));
    }
    BitMask::from_fn(w, h, |x, y| {
        disks
            .iter()
            .any(|(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    })
}

/// Rounded centroid, snapped to the nearest object pixel if it falls
/// outside the object.
pub fn centroid_point(gt: &BitMask) -> Result<(usize, usize)> {
    let pts = gt.points();
    if pts.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (rx, ry) = (cx.round() as usize, cy.round() as usize);
    if gt.get(rx, ry) {
        return Ok((rx, ry));
    }
    let d2 = |p: &(usize, usize)| (p.0 as f64 - cx).powi(2) + (p.1 as f64 - cy).powi(2);
    Ok(*pts
        .iter()
        .min_by(|a, b| d2(a).total_cmp(&d2(b)))
        .expect("non-empty"))
}

/// Erodes until at most 70% of the object area remains.
pub fn coarse_mask(gt: &BitMask) -> Result<BitMask> {
    if gt.is_empty() {
        return Err(Error::EmptyMask);
    }
    let target = gt.count() as f64 * 0.7;
    let mut prev = gt.clone();
    for r in 1.. {
        let m = erode(gt, r);
        if m.is_empty() {
            return Ok(prev);
        }
        if m.count() as f64 <= target {
            return Ok(m);
        }
        prev = m;
    }
    unreachable!()
}

/// Morphological skeleton (3x3 element) clipped to the 60% of its pixels
/// closest to the object centroid.
pub fn scribble(gt: &BitMask) -> Result<BitMask> {
    let (cx, cy) = centroid_point(gt)?;
    let mut skeleton = BitMask::empty(gt.width(), gt.height());
    let mut eroded = gt.clone();
    while !eroded.is_empty() {
        skeleton = skeleton.or(&eroded.minus(&open(&eroded, 1)));
        eroded = erode(&eroded, 1);
    }
    let mut pts = skeleton.points();
    pts.sort_by_key(|(x, y)| {
        (
            (*x as i64 - cx as i64).pow(2) + (*y as i64 - cy as i64).pow(2),
            *y,
            *x,
        )
    });
    pts.truncate(((pts.len() as f64 * 0.6).ceil() as usize).max(1));
    let mut out = BitMask::empty(gt.width(), gt.height());
    for (x, y) in pts {
        out.set(x, y, true);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub dir: String,
    pub seed: u64,
    pub shape: ShapeFamily,
    pub texture_gap: f32,
    pub gt_bbox: Rect,
    pub gt_diagonal: f64,
    pub centroid: (usize, usize),
    pub noise_sigma: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub options: SuiteOptions,
    pub scenes: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "scenes.json";

/// Writes `<dir>/<id>/{image,gt,coarse,scribble}.png`, `scene.json`, and the
/// `scenes.json` manifest. Returns the written scene directories.
pub fn write_suite(dir: &Path, opts: &SuiteOptions, scenes: &[SuiteScene]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(scenes.len());
    let mut dirs = Vec::with_capacity(scenes.len());
    for s in scenes {
        let d = dir.join(&s.id);
        std::fs::create_dir_all(&d)?;
        io::save_image(&s.image, d.join("image.png"))?;
        io::save_mask(&s.spec.gt_mask, d.join("gt.png"))?;
        io::save_mask(&s.prompts.coarse, d.join("coarse.png"))?;
        io::save_mask(&s.prompts.scribble, d.join("scribble.png"))?;
        s.spec.save(d.join("scene.json"))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            dir: s.id.clone(),
            seed: s.spec.seed,
            shape: s.shape,
            texture_gap: s.spec.texture_gap,
            gt_bbox: s.spec.gt_bbox,
            gt_diagonal: s.spec.gt_bbox.diagonal(),
            centroid: s.prompts.point,
            noise_sigma: s.spec.noise_sigma,
        });
        dirs.push(d);
    }
    let manifest = Manifest {
        options: *opts,
        scenes: entries,
    };
    std::fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::iou;

    fn small() -> SuiteOptions {
        SuiteOptions {
            n: 6,
            seed: 7,
            width: 96,
            height: 96,
            ..Default::default()
        }
    }

    #[test]
    fn scenes_meet_generation_contract() {
        for s in gen_scenes(&small()).unwrap() {
            let gt = &s.spec.gt_mask;
            let area = gt.count() as f64 / (96.0 * 96.0);
            assert!((0.05..=0.40).contains(&area), "{} area {area}", s.id);
            let b = gt.tight_bbox().unwrap();
            assert!(b.x0 >= MARGIN && b.y1 + MARGIN <= 96);
            assert_eq!(morph_clean(gt, StructuringElement::new(5).unwrap()), *gt);
            assert!(s.spec.texture_gap >= MIN_GAP);
            // recorded bbox matches a recomputation from the pixels
            let pts = gt.points();
            let x0 = pts.iter().map(|p| p.0).min().unwrap();
            let x1 = pts.iter().map(|p| p.0).max().unwrap() + 1;
            let y0 = pts.iter().map(|p| p.1).min().unwrap();
            let y1 = pts.iter().map(|p| p.1).max().unwrap() + 1;
            assert_eq!(s.spec.gt_bbox, Rect::new(x0, y0, x1, y1).unwrap());
            let diag = (((x1 - x0) as f64).powi(2) + ((y1 - y0) as f64).powi(2)).sqrt();
            assert!((s.spec.gt_bbox.diagonal() - diag).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_prompts() {
        for s in gen_scenes(&small()).unwrap() {
            let gt = &s.spec.gt_mask;
            let p = &s.prompts;
            assert!(gt.get(p.point.0, p.point.1));
            let c = iou(&p.coarse, gt).unwrap();
            assert!(c > 0.0 && c < 1.0, "coarse IoU {c}");
            assert!(p.coarse.is_subset_of(gt));
            assert!(p.coarse.count() as f64 <= 0.7 * gt.count() as f64);
            assert!(!p.scribble.is_empty() && p.scribble.is_subset_of(gt));
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = gen_scenes(&small()).unwrap();
        let b = gen_scenes(&small()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spec, y.spec);
            assert_eq!(x.image, y.image);
        }
        let other = gen_scenes(&SuiteOptions { seed: 8, ..small() }).unwrap();
        assert_ne!(a[0].spec, other[0].spec);
    }

    #[test]
    fn suite_files_are_byte_identical_across_runs() {
        let opts = SuiteOptions { n: 3, ..small() };
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_suite(d1.path(), &opts, &gen_scenes(&opts).unwrap()).unwrap();
        write_suite(d2.path(), &opts, &gen_scenes(&opts).unwrap()).unwrap();
        for rel in [
            "scenes.json",
            "scene_000/image.png",
            "scene_002/scene.json",
            "scene_001/coarse.png",
        ] {
            assert_eq!(
                std::fs::read(d1.path().join(rel)).unwrap(),
                std::fs::read(d2.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    #[test]
    fn centroid_snaps_into_ring() {
        let ring = BitMask::from_fn(40, 40, |x, y| {
            let d = (x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2);
            (64.0..=144.0).contains(&d)
        });
        let (x, y) = centroid_point(&ring).unwrap();
        assert!(ring.get(x, y));
    }

    #[test]
    fn zero_scenes_rejected() {
        assert!(gen_scenes(&SuiteOptions { n: 0, ..small() }).is_err());
    }
}
