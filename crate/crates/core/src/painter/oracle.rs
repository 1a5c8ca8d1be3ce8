use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{PaintMode, PaintRequest, PaintResult, Painter};
use crate::error::{Error, Result};
use crate::par;
use crate::raster::{quantize, BitMask, ImageBuf};
use crate::scene::SceneSpec;

/// Idealized painter for a synthetic scene.
///
/// Inpainting completes the background: every painted pixel receives the
/// background texture. Outpainting completes the partial object: painted
/// pixels inside the ground-truth object receive the foreground texture and
/// all others a fresh background realization. Gaussian noise of the scene's
/// sigma is added per painted channel, then values are rounded to 8 bits.
#[derive(Debug, Clone)]
pub struct OraclePainter {
    scene: SceneSpec,
    background: ImageBuf,
    foreground: ImageBuf,
    alternate: ImageBuf,
}

impl OraclePainter {
    pub fn new(scene: SceneSpec) -> Self {
        let (w, h) = (scene.width, scene.height);
        Self {
            background: scene.background.render(w, h),
            foreground: scene.foreground.render(w, h),
            alternate: scene.background.render_alternate(w, h),
            scene,
        }
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    fn source(&self, mode: PaintMode, idx: usize) -> [f32; 3] {
        match mode {
            PaintMode::Inpaint => self.background.at(idx),
            PaintMode::Outpaint if self.scene.gt_mask.bits()[idx] => self.foreground.at(idx),
            PaintMode::Outpaint => self.alternate.at(idx),
        }
    }

    fn paint_one(&self, req: &PaintRequest<'_>, seed: u64) -> ImageBuf {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = self.scene.noise_sigma;
        let noise = (sigma > 0.0).then(|| Normal::new(0.0f32, sigma).expect("finite sigma"));
        let (w, _) = req.image.dims();
        let mut out = req.image.clone();
        for (idx, keep) in req.keep_mask.bits().iter().enumerate() {
            if *keep {
                continue;
            }
            let mut rgb = self.source(req.mode, idx);
            if let Some(n) = &noise {
                for c in &mut rgb {
                    *c += n.sample(&mut rng);
                }
            }
            out.set_pixel(idx % w, idx / w, rgb.map(quantize));
        }
        out
    }
}

impl Painter for OraclePainter {
    fn paint(&self, req: &PaintRequest<'_>) -> Result<PaintResult> {
        req.validate()?;
        if req.image.dims() != (self.scene.width, self.scene.height) {
            return Err(Error::SceneMismatch(format!(
                "scene is {}x{}, image is {}x{}",
                self.scene.width,
                self.scene.height,
                req.image.width(),
                req.image.height()
            )));
        }
        let samples = par::map_indices(req.n_samples, |i| self.paint_one(req, req.sample_seed(i)));
        Ok(PaintResult { samples })
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}

/// Pixels where two images differ by more than `eps` in RGB L2 distance.
pub fn difference_mask(a: &ImageBuf, b: &ImageBuf, eps: f32) -> BitMask {
    let bits = a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f32>()
                .sqrt()
                > eps
        })
        .collect();
    BitMask::new(a.width(), a.height(), bits).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::TextureSpec;

    fn scene(sigma: f32) -> SceneSpec {
        let gt = BitMask::from_fn(40, 30, |x, y| {
            (x as f32 - 20.0).powi(2) / 100.0 + (y as f32 - 15.0).powi(2) / 49.0 <= 1.0
        });
        SceneSpec::new(
            3,
            TextureSpec {
                base: [0.25, 0.3, 0.35],
                amplitude: 0.1,
                cell: 6.0,
                octaves: 2,
                seed: 10,
            },
            TextureSpec {
                base: [0.75, 0.6, 0.3],
                amplitude: 0.1,
                cell: 6.0,
                octaves: 2,
                seed: 11,
            },
            gt,
            sigma,
        )
        .unwrap()
    }

    fn request<'a>(
        img: &'a ImageBuf,
        keep: &'a BitMask,
        mode: PaintMode,
        n: usize,
    ) -> PaintRequest<'a> {
        PaintRequest {
            image: img,
            keep_mask: keep,
            n_samples: n,
            seed: 42,
            diffusion_steps: 50,
            mode,
        }
    }

    #[test]
    fn inpaint_differs_exactly_on_object() {
        let s = scene(0.0);
        let img = s.render();
        let painted_region =
            BitMask::from_fn(40, 30, |x, y| (8..32).contains(&x) && (4..26).contains(&y));
        let keep = painted_region.not();
        let p = OraclePainter::new(s.clone());
        let out = p
            .paint(&request(&img, &keep, PaintMode::Inpaint, 1))
            .unwrap();
        let diff = difference_mask(&out.samples[0], &img, s.texture_gap / 2.0);
        assert_eq!(diff, s.gt_mask.and(&painted_region));
        // kept pixels bit-identical
        for (i, k) in keep.bits().iter().enumerate() {
            if *k {
                assert_eq!(out.samples[0].at(i), img.at(i));
            }
        }
    }

    #[test]
    fn outpaint_matches_object_differs_elsewhere() {
        let s = scene(0.0);
        let img = s.render();
        let keep = BitMask::from_fn(40, 30, |x, y| {
            (15..25).contains(&x) && (12..18).contains(&y)
        });
        let painted = keep.not();
        let out = OraclePainter::new(s.clone())
            .paint(&request(&img, &keep, PaintMode::Outpaint, 1))
            .unwrap();
        let diff = difference_mask(&out.samples[0], &img, 1e-6);
        assert_eq!(diff, painted.minus(&s.gt_mask));
    }

    #[test]
    fn sample_variance_matches_sigma() {
        let sigma = 0.05;
        let s = scene(sigma);
        let img = s.render();
        let keep = BitMask::from_fn(40, 30, |x, _| x < 20);
        let out = OraclePainter::new(s)
            .paint(&request(&img, &keep, PaintMode::Inpaint, 5))
            .unwrap();
        let mut var_sum = 0.0f64;
        let mut count = 0usize;
        for i in 0..40 * 30 {
            for c in 0..3 {
                let vals: Vec<f64> = out.samples.iter().map(|s| s.at(i)[c] as f64).collect();
                let mean = vals.iter().sum::<f64>() / 5.0;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
                if keep.bits()[i] {
                    assert_eq!(var, 0.0);
                } else {
                    var_sum += var;
                    count += 1;
                }
            }
        }
        let mean_var = var_sum / count as f64;
        let expected = (sigma as f64).powi(2);
        assert!(
            (mean_var - expected).abs() < 0.15 * expected,
            "mean var {mean_var} vs {expected}"
        );
    }

    #[test]
    fn deterministic_and_seeded_per_sample() {
        let s = scene(0.05);
        let img = s.render();
        let keep = BitMask::from_fn(40, 30, |x, _| x < 20);
        let p = OraclePainter::new(s);
        let a = p
            .paint(&request(&img, &keep, PaintMode::Inpaint, 3))
            .unwrap();
        let b = p
            .paint(&request(&img, &keep, PaintMode::Inpaint, 3))
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples[0], a.samples[1]);
        // sample 1 of seed 42 == sample 0 of seed 43
        let c = p
            .paint(&PaintRequest {
                seed: 43,
                ..request(&img, &keep, PaintMode::Inpaint, 1)
            })
            .unwrap();
        assert_eq!(c.samples[0], a.samples[1]);
    }

    #[test]
    fn scene_mismatch() {
        let p = OraclePainter::new(scene(0.0));
        let img = ImageBuf::filled(10, 10, [0.0; 3]);
        let keep = BitMask::empty(10, 10);
        assert!(matches!(
            p.paint(&request(&img, &keep, PaintMode::Inpaint, 1)),
            Err(Error::SceneMismatch(_))
        ));
    }
}
