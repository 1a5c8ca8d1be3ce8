use super::{FeatureMap, Projector};
use crate::error::{Error, Result};
use crate::par;
use crate::raster::ImageBuf;

/// Local per-channel mean and standard deviation over a square window.
///
/// Output channels are `[mean_r, mean_g, mean_b, std_r, std_g, std_b]`. The
/// window spans offsets `-window/2 ..= (window-1)/2` and is clipped at the
/// image border.
#[derive(Debug, Clone, Copy)]
pub struct PatchStatsProjector {
    window: usize,
}

impl PatchStatsProjector {
    pub const DEFAULT_WINDOW: usize = 8;

    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("patch window must be >= 1".into()));
        }
        Ok(Self { window })
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

impl Default for PatchStatsProjector {
    fn default() -> Self {
        Self {
            window: Self::DEFAULT_WINDOW,
        }
    }
}

impl Projector for PatchStatsProjector {
    fn project(&self, image: &ImageBuf) -> Result<FeatureMap> {
        let (w, h) = image.dims();
        // summed-area tables per channel for values and squares
        let stride = w + 1;
        let mut sum = vec![[0f64; 3]; (h + 1) * stride];
        let mut sq = vec![[0f64; 3]; (h + 1) * stride];
        for y in 0..h {
            for x in 0..w {
                let p = image.pixel(x, y);
                let (i, up, left, diag) = (
                    (y + 1) * stride + x + 1,
                    y * stride + x + 1,
                    (y + 1) * stride + x,
                    y * stride + x,
                );
                for c in 0..3 {
                    let v = p[c] as f64;
                    sum[i][c] = v + sum[up][c] + sum[left][c] - sum[diag][c];
                    sq[i][c] = v * v + sq[up][c] + sq[left][c] - sq[diag][c];
                }
            }
        }
        let before = self.window / 2;
        let after = (self.window - 1) / 2;
        let mut data = vec![0f32; w * h * 6];
        par::for_each_row(&mut data, w * 6, |y, row| {
            let y0 = y.saturating_sub(before);
            let y1 = (y + after + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(before);
                let x1 = (x + after + 1).min(w);
                let n = ((x1 - x0) * (y1 - y0)) as f64;
                let (a, b, c, d) = (
                    y1 * stride + x1,
                    y0 * stride + x1,
                    y1 * stride + x0,
                    y0 * stride + x0,
                );
                let out = &mut row[x * 6..x * 6 + 6];
                for ch in 0..3 {
                    let s = sum[a][ch] - sum[b][ch] - sum[c][ch] + sum[d][ch];
                    let s2 = sq[a][ch] - sq[b][ch] - sq[c][ch] + sq[d][ch];
                    let mean = s / n;
                    let var = (s2 / n - mean * mean).max(0.0);
                    out[ch] = mean as f32;
                    // cancellation noise on flat patches
                    out[3 + ch] = if var < 1e-10 { 0.0 } else { var.sqrt() as f32 };
                }
            }
        });
        FeatureMap::new(w, h, 6, data)
    }

    fn name(&self) -> String {
        format!("patchstats:{}", self.window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct window loop.
    fn oracle(image: &ImageBuf, window: usize, x: usize, y: usize) -> [f64; 6] {
        let (w, h) = image.dims();
        let (before, after) = (window / 2, (window - 1) / 2);
        let mut vals: Vec<[f32; 3]> = Vec::new();
        for yy in y.saturating_sub(before)..(y + after + 1).min(h) {
            for xx in x.saturating_sub(before)..(x + after + 1).min(w) {
                vals.push(image.pixel(xx, yy));
            }
        }
        let n = vals.len() as f64;
        let mut out = [0f64; 6];
        for c in 0..3 {
            let mean = vals.iter().map(|v| v[c] as f64).sum::<f64>() / n;
            let var = vals
                .iter()
                .map(|v| (v[c] as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            out[c] = mean;
            out[3 + c] = var.sqrt();
        }
        out
    }

    #[test]
    fn constant_image_has_zero_std() {
        let f = PatchStatsProjector::default()
            .project(&ImageBuf::filled(20, 12, [0.3, 0.6, 0.9]))
            .unwrap();
        assert_eq!(f.channels(), 6);
        for i in 0..20 * 12 {
            let v = f.vector(i);
            assert!((v[0] - 0.3).abs() < 1e-6 && (v[2] - 0.9).abs() < 1e-6);
            assert_eq!(&v[3..], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn step_edge_band() {
        let img = ImageBuf::from_fn(32, 8, |x, _| if x < 16 { [0.0; 3] } else { [1.0; 3] });
        let f = PatchStatsProjector::default().project(&img).unwrap();
        for x in 0..32 {
            let expected = oracle(&img, 8, x, 4);
            let got = f.vector(4 * 32 + x);
            for c in 0..6 {
                assert!((got[c] as f64 - expected[c]).abs() < 1e-6, "x={x} c={c}");
            }
            // windows straddling the edge are exactly x in 13..=19
            let straddles = (13..=19).contains(&x);
            assert_eq!(got[3] > 0.0, straddles, "x={x}");
        }
        let peak = (0..32)
            .max_by(|a, b| f.vector(4 * 32 + a)[3].total_cmp(&f.vector(4 * 32 + b)[3]))
            .unwrap();
        assert_eq!(peak, 16);
    }

    #[test]
    fn random_image_matches_window_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let img = ImageBuf::new(
            13,
            9,
            (0..13 * 9 * 3).map(|_| rng.random::<f32>()).collect(),
        )
        .unwrap();
        let proj = PatchStatsProjector::new(5).unwrap();
        let f = proj.project(&img).unwrap();
        for y in 0..9 {
            for x in 0..13 {
                let e = oracle(&img, 5, x, y);
                for c in 0..6 {
                    assert!((f.vector(y * 13 + x)[c] as f64 - e[c]).abs() < 1e-5);
                }
            }
        }
        // determinism
        assert_eq!(proj.project(&img).unwrap(), f);
    }
}
