//! Contrastive potential: painted-feature distance, color likelihood and a
//! Gaussian prompt prior, combined with signed weights.

use serde::{Deserialize, Serialize};

use crate::color_model::{posterior, ColorGmm, GmmOptions};
use crate::error::{Error, Result};
use crate::painter::PaintMode;
use crate::par;
use crate::projector::FeatureMap;
use crate::raster::{check_dims, BitMask, ImageBuf, Rect};

/// Scalar field over the image; zero outside `roi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastField {
    width: usize,
    height: usize,
    roi: Rect,
    values: Vec<f32>,
}

impl ContrastField {
    pub fn zeros(width: usize, height: usize, roi: Rect) -> Self {
        Self {
            width,
            height,
            roi,
            values: vec![0.0; width * height],
        }
    }

    /// Evaluates `f(x, y)` inside `roi`, zero elsewhere.
    pub fn from_roi_fn(
        width: usize,
        height: usize,
        roi: Rect,
        f: impl Fn(usize, usize) -> f32 + Sync + Send,
    ) -> Self {
        let mut values = vec![0.0; width * height];
        par::for_each_row(&mut values, width, |y, row| {
            if y < roi.y0 || y >= roi.y1 {
                return;
            }
            for (x, v) in row.iter_mut().enumerate().take(roi.x1).skip(roi.x0) {
                *v = f(x, y);
            }
        });
        Self {
            width,
            height,
            roi,
            values,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn roi(&self) -> Rect {
        self.roi
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Values inside the roi in row-major order.
    pub fn roi_values(&self) -> Vec<f32> {
        let r = self.roi;
        let mut out = Vec::with_capacity(r.area());
        for y in r.y0..r.y1 {
            out.extend_from_slice(&self.values[y * self.width + r.x0..y * self.width + r.x1]);
        }
        out
    }

    pub fn roi_max(&self) -> f32 {
        self.roi_values().into_iter().fold(0.0, f32::max)
    }

    fn check_compatible(&self, other: &ContrastField) -> Result<()> {
        check_dims(self.dims(), other.dims())?;
        if self.roi != other.roi {
            return Err(Error::InvalidConfig(format!(
                "roi mismatch: {:?} vs {:?}",
                self.roi, other.roi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialWeights {
    pub lambda_paint: f32,
    pub lambda_color: f32,
    pub lambda_prompt_istep: f32,
    pub lambda_prompt_ostep: f32,
}

impl Default for PotentialWeights {
    fn default() -> Self {
        Self {
            lambda_paint: 0.8,
            lambda_color: 0.2,
            lambda_prompt_istep: 0.2,
            lambda_prompt_ostep: -0.2,
        }
    }
}

impl PotentialWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_paint,
            self.lambda_color,
            self.lambda_prompt_istep,
            self.lambda_prompt_ostep,
        ];
        if all.iter().any(|v| !v.is_finite()) || self.lambda_paint + self.lambda_color <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "invalid potential weights {self:?}"
            )));
        }
        Ok(())
    }

    pub fn lambda_prompt(&self, kind: PaintMode) -> f32 {
        match kind {
            PaintMode::Inpaint => self.lambda_prompt_istep,
            PaintMode::Outpaint => self.lambda_prompt_ostep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSigma {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl GaussianSigma {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got ({sigma_x}, {sigma_y})"
            )));
        }
        Ok(Self { sigma_x, sigma_y })
    }

    /// `fraction` of the box width and height.
    pub fn from_box(rect: Rect, fraction: f64) -> Result<Self> {
        Self::new(
            rect.width() as f64 * fraction,
            rect.height() as f64 * fraction,
        )
    }
}

/// Per-pixel L2 distance between two feature maps inside `roi`.
pub fn phi_paint(orig: &FeatureMap, painted: &FeatureMap, roi: Rect) -> Result<ContrastField> {
    check_dims(orig.dims(), painted.dims())?;
    if orig.channels() != painted.channels() {
        return Err(Error::DimensionMismatch {
            expected: (orig.channels(), 1),
            actual: (painted.channels(), 1),
        });
    }
    let (w, h) = orig.dims();
    Ok(ContrastField::from_roi_fn(w, h, roi, |x, y| {
        let i = y * w + x;
        orig.vector(i)
            .iter()
            .zip(painted.vector(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            .sqrt()
    }))
}

/// Probability that each roi pixel's color belongs to the `mask` region,
/// from two Gaussian mixtures fitted on `mask ∩ roi` and `roi \ mask`.
pub fn phi_color(
    image: &ImageBuf,
    mask: &BitMask,
    roi: Rect,
    opts: GmmOptions,
) -> Result<ContrastField> {
    check_dims(image.dims(), mask.dims())?;
    let (w, h) = image.dims();
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for y in roi.y0..roi.y1 {
        for x in roi.x0..roi.x1 {
            if mask.get(x, y) {
                inside.push(image.pixel(x, y));
            } else {
                outside.push(image.pixel(x, y));
            }
        }
    }
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::DegenerateRegion(format!(
            "color model needs both regions inside the roi ({} in, {} out)",
            inside.len(),
            outside.len()
        )));
    }
    let fg = ColorGmm::fit(&inside, opts);
    let bg = ColorGmm::fit(
        &outside,
        GmmOptions {
            seed: opts.seed.wrapping_add(1),
            ..opts
        },
    );
    Ok(ContrastField::from_roi_fn(w, h, roi, |x, y| {
        let p = image.pixel(x, y);
        posterior(fg.log_density(p), bg.log_density(p)) as f32
    }))
}

/// Max over prompt points of a unit-peak Gaussian bump.
pub fn phi_prompt(
    points: &[(f64, f64)],
    sigma: GaussianSigma,
    roi: Rect,
    dims: (usize, usize),
) -> Result<ContrastField> {
    if points.is_empty() {
        return Err(Error::NoPromptPoints);
    }
    let (sx2, sy2) = (sigma.sigma_x * sigma.sigma_x, sigma.sigma_y * sigma.sigma_y);
    Ok(ContrastField::from_roi_fn(dims.0, dims.1, roi, |x, y| {
        let nearest = points
            .iter()
            .map(|(px, py)| (x as f64 - px).powi(2) / sx2 + (y as f64 - py).powi(2) / sy2)
            .fold(f64::INFINITY, f64::min);
        (-nearest).exp() as f32
    }))
}

/// Weighted sum with the paint term normalized by its roi maximum. The
/// prompt weight's sign depends on the step kind.
pub fn combine(
    paint: &ContrastField,
    color: &ContrastField,
    prompt: Option<&ContrastField>,
    weights: &PotentialWeights,
    kind: PaintMode,
) -> Result<ContrastField> {
    paint.check_compatible(color)?;
    if let Some(p) = prompt {
        paint.check_compatible(p)?;
    }
    let max = paint.roi_max();
    let paint_scale = if max > 0.0 {
        weights.lambda_paint / max
    } else {
        0.0
    };
    let lp = weights.lambda_prompt(kind);
    let mut out = ContrastField::zeros(paint.width, paint.height, paint.roi);
    let r = paint.roi;
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            let i = y * paint.width + x;
            let mut v = paint_scale * paint.values[i] + weights.lambda_color * color.values[i];
            if let Some(p) = prompt {
                v += lp * p.values[i];
            }
            out.values[i] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::{IdentityProjector, Projector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn fmap(w: usize, h: usize, c: usize, data: Vec<f32>) -> FeatureMap {
        FeatureMap::new(w, h, c, data).unwrap()
    }

    #[test]
    fn phi_paint_identical_is_zero() {
        let f = fmap(4, 4, 2, vec![0.3; 32]);
        let field = phi_paint(&f, &f, Rect::full(4, 4)).unwrap();
        assert!(field.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn phi_paint_pythagorean() {
        let a = fmap(3, 3, 2, vec![0.0; 18]);
        let mut d = vec![0.0; 18];
        d[4 * 2] = 3.0;
        d[4 * 2 + 1] = 4.0;
        let b = fmap(3, 3, 2, d);
        let field = phi_paint(&a, &b, Rect::full(3, 3)).unwrap();
        assert_eq!(field.get(1, 1), 5.0);
        assert_eq!(field.values().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn phi_paint_matches_loop_and_zeroes_outside_roi() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = fmap(8, 8, 4, (0..256).map(|_| rng.random::<f32>()).collect());
        let b = fmap(8, 8, 4, (0..256).map(|_| rng.random::<f32>()).collect());
        let roi = Rect::new(2, 1, 7, 6).unwrap();
        let field = phi_paint(&a, &b, roi).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let i = y * 8 + x;
                let mut s = 0.0f64;
                for c in 0..4 {
                    s += (a.data()[i * 4 + c] as f64 - b.data()[i * 4 + c] as f64).powi(2);
                }
                let expected = if roi.contains(x, y) { s.sqrt() } else { 0.0 };
                assert!((field.get(x, y) as f64 - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn phi_paint_channel_mismatch() {
        let a = fmap(2, 2, 2, vec![0.0; 8]);
        let b = fmap(2, 2, 3, vec![0.0; 12]);
        assert!(phi_paint(&a, &b, Rect::full(2, 2)).is_err());
    }

    #[test]
    fn identity_phi_paint_is_rgb_distance() {
        let a = ImageBuf::from_fn(5, 5, |x, y| [x as f32 / 5.0, y as f32 / 5.0, 0.5]);
        let b = ImageBuf::from_fn(5, 5, |x, _| [0.1, x as f32 / 10.0, 0.2]);
        let field = phi_paint(
            &IdentityProjector.project(&a).unwrap(),
            &IdentityProjector.project(&b).unwrap(),
            Rect::full(5, 5),
        )
        .unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let (p, q) = (a.pixel(x, y), b.pixel(x, y));
                let d =
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                assert!((field.get(x, y) - d).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn phi_color_separable_colors() {
        let img = ImageBuf::from_fn(20, 20, |x, _| {
            if x < 10 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            }
        });
        let mask = BitMask::from_fn(20, 20, |x, _| x < 10);
        let f = phi_color(&img, &mask, Rect::full(20, 20), GmmOptions::default()).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                let v = f.get(x, y);
                if x < 10 {
                    assert!(v > 0.99, "{v}");
                } else {
                    assert!(v < 0.01, "{v}");
                }
            }
        }
    }

    #[test]
    fn phi_color_uniform_gray_is_half() {
        let img = ImageBuf::filled(16, 16, [0.5; 3]);
        let mask = BitMask::from_fn(16, 16, |x, y| x > 4 && y > 6);
        let roi = Rect::new(2, 2, 14, 14).unwrap();
        let f = phi_color(&img, &mask, roi, GmmOptions::default()).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let expected = if roi.contains(x, y) { 0.5 } else { 0.0 };
                assert!((f.get(x, y) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn phi_color_empty_region_errors() {
        let img = ImageBuf::filled(4, 4, [0.5; 3]);
        assert!(matches!(
            phi_color(
                &img,
                &BitMask::full(4, 4),
                Rect::full(4, 4),
                GmmOptions::default()
            ),
            Err(Error::DegenerateRegion(_))
        ));
    }

    /// Samples `n` colors whose empirical mean and ML covariance are exactly
    /// `mu` and `s^2 I`.
    fn exact_moments(
        n: usize,
        mu: [f64; 3],
        s: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Vec<[f64; 3]> {
        use rand_distr::{Distribution, StandardNormal};
        let raw: Vec<[f64; 3]> = (0..n)
            .map(|_| [0; 3].map(|_| StandardNormal.sample(rng)))
            .collect();
        let m = [0, 1, 2].map(|c| raw.iter().map(|x| x[c]).sum::<f64>() / n as f64);
        let mut cov = [[0.0; 3]; 3];
        for x in &raw {
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += (x[a] - m[a]) * (x[b] - m[b]) / n as f64;
                }
            }
        }
        // Cholesky of the sample covariance, then solve L z = x - m
        let mut l = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let t: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                l[i][j] = if i == j {
                    (cov[i][i] - t).sqrt()
                } else {
                    (cov[i][j] - t) / l[j][j]
                };
            }
        }
        raw.iter()
            .map(|x| {
                let d = [x[0] - m[0], x[1] - m[1], x[2] - m[2]];
                let z0 = d[0] / l[0][0];
                let z1 = (d[1] - l[1][0] * z0) / l[1][1];
                let z2 = (d[2] - l[2][0] * z0 - l[2][1] * z1) / l[2][2];
                [mu[0] + s * z0, mu[1] + s * z1, mu[2] + s * z2]
            })
            .collect()
    }

    /// Closed-form posterior for two known isotropic Gaussians with equal
    /// weights, compared against the fitted single-component models.
    #[test]
    fn phi_color_matches_two_gaussian_posterior() {
        let (w, h) = (64, 64);
        let (mu_a, mu_b, s) = ([0.45f64, 0.5, 0.5], [0.55f64, 0.5, 0.45], 0.05f64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mask = BitMask::from_fn(w, h, |x, _| x < w / 2);
        let half = w * h / 2;
        let mut a = exact_moments(half, mu_a, s, &mut rng).into_iter();
        let mut b = exact_moments(half, mu_b, s, &mut rng).into_iter();
        let mut data = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            let px = if mask.bits()[i] { a.next() } else { b.next() }.unwrap();
            data.extend(px.map(|v| v as f32));
        }
        let img = ImageBuf::new(w, h, data).unwrap();
        let opts = GmmOptions {
            components: 1,
            ..Default::default()
        };
        let f = phi_color(&img, &mask, Rect::full(w, h), opts).unwrap();
        let log_n = |x: [f32; 3], mu: [f64; 3]| -> f64 {
            -(0..3).map(|c| (x[c] as f64 - mu[c]).powi(2)).sum::<f64>() / (2.0 * s * s)
        };
        let mut worst = 0.0f64;
        for i in 0..w * h {
            let p = img.at(i);
            let expected = 1.0 / (1.0 + (log_n(p, mu_b) - log_n(p, mu_a)).exp());
            worst = worst.max((f.values()[i] as f64 - expected).abs());
        }
        assert!(worst < 0.05, "worst deviation {worst}");
    }

    #[test]
    fn phi_prompt_peak_and_unit_offset() {
        let sigma = GaussianSigma::new(4.0, 2.0).unwrap();
        let f = phi_prompt(&[(10.0, 10.0)], sigma, Rect::full(30, 30), (30, 30)).unwrap();
        assert_eq!(f.get(10, 10), 1.0);
        assert!((f.get(14, 10) - (-1.0f32).exp()).abs() < 1e-6);
        assert!((f.get(10, 12) - (-1.0f32).exp()).abs() < 1e-6);
        assert!(matches!(
            phi_prompt(&[], sigma, Rect::full(3, 3), (3, 3)),
            Err(Error::NoPromptPoints)
        ));
    }

    #[test]
    fn phi_prompt_two_points_is_pointwise_max() {
        let sigma = GaussianSigma::new(3.0, 3.0).unwrap();
        let roi = Rect::full(25, 25);
        let a = phi_prompt(&[(5.0, 5.0)], sigma, roi, (25, 25)).unwrap();
        let b = phi_prompt(&[(15.0, 18.0)], sigma, roi, (25, 25)).unwrap();
        let both = phi_prompt(&[(5.0, 5.0), (15.0, 18.0)], sigma, roi, (25, 25)).unwrap();
        for i in 0..625 {
            assert_eq!(both.values()[i], a.values()[i].max(b.values()[i]));
        }
    }

    #[test]
    fn combine_paper_constants() {
        let roi = Rect::full(4, 4);
        let ones = ContrastField::from_roi_fn(4, 4, roi, |_, _| 1.0);
        let w = PotentialWeights::default();
        let c = combine(&ones, &ones, Some(&ones), &w, PaintMode::Inpaint).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.2).abs() < 1e-6));
        let c = combine(&ones, &ones, Some(&ones), &w, PaintMode::Outpaint).unwrap();
        assert!(c.values().iter().all(|v| (v - 0.8).abs() < 1e-6));
        let c = combine(&ones, &ones, None, &w, PaintMode::Inpaint).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-6));
        let z = ContrastField::zeros(4, 4, roi);
        let c = combine(&z, &z, Some(&z), &w, PaintMode::Inpaint).unwrap();
        assert!(c.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn combine_rejects_mismatch() {
        let a = ContrastField::zeros(4, 4, Rect::full(4, 4));
        let b = ContrastField::zeros(4, 4, Rect::new(0, 0, 2, 2).unwrap());
        assert!(combine(
            &a,
            &b,
            None,
            &PotentialWeights::default(),
            PaintMode::Inpaint
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn phi_paint_symmetric_nonnegative(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = fmap(6, 5, 3, (0..90).map(|_| rng.random::<f32>()).collect());
            let b = fmap(6, 5, 3, (0..90).map(|_| rng.random::<f32>()).collect());
            let roi = Rect::new(1, 1, 5, 4).unwrap();
            let ab = phi_paint(&a, &b, roi).unwrap();
            let ba = phi_paint(&b, &a, roi).unwrap();
            prop_assert_eq!(&ab, &ba);
            prop_assert!(ab.values().iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn phi_prompt_translation_equivariant(px in 5.0f64..15.0, py in 5.0f64..15.0, dx in 0usize..5, dy in 0usize..5) {
            let sigma = GaussianSigma::new(3.0, 2.0).unwrap();
            let roi = Rect::full(30, 30);
            let a = phi_prompt(&[(px, py)], sigma, roi, (30, 30)).unwrap();
            let b = phi_prompt(&[(px + dx as f64, py + dy as f64)], sigma, roi, (30, 30)).unwrap();
            for y in 0..30 - dy {
                for x in 0..30 - dx {
                    prop_assert!((a.get(x, y) - b.get(x + dx, y + dy)).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn combine_is_linear(s in 0.1f32..3.0, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let roi = Rect::full(5, 5);
            let p = ContrastField::from_roi_fn(5, 5, roi, |_, _| 0.0);
            let vals: Vec<f32> = (0..25).map(|_| rng.random::<f32>()).collect();
            let c = ContrastField::from_roi_fn(5, 5, roi, |x, y| vals[y * 5 + x]);
            let cs = ContrastField::from_roi_fn(5, 5, roi, |x, y| s * vals[y * 5 + x]);
            let w = PotentialWeights::default();
            let base = combine(&p, &c, None, &w, PaintMode::Inpaint).unwrap();
            let scaled = combine(&p, &cs, None, &w, PaintMode::Inpaint).unwrap();
            for i in 0..25 {
                prop_assert!((scaled.values()[i] - s * base.values()[i]).abs() < 1e-5);
            }
        }

        #[test]
        fn phi_color_is_probability(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = ImageBuf::new(12, 12, (0..432).map(|_| rng.random::<f32>()).collect()).unwrap();
            let mask = BitMask::from_fn(12, 12, |x, y| x + y < 12);
            let f = phi_color(&img, &mask, Rect::full(12, 12), GmmOptions { seed, ..Default::default() }).unwrap();
            prop_assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v) && v.is_finite()));
        }
    }
}
