//! Full-covariance Gaussian mixture over RGB colors, fitted by k-means++
//! initialization followed by a fixed number of EM iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy)]
pub struct GmmOptions {
    pub components: usize,
    pub em_iterations: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            components: 5,
            em_iterations: 20,
            variance_floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Component {
    log_weight: f64,
    mean: [f64; 3],
    /// Lower-triangular Cholesky factor of the covariance.
    chol: [[f64; 3]; 3],
    log_det: f64,
}

impl Component {
    fn new(weight: f64, mean: [f64; 3], mut cov: [[f64; 3]; 3], floor: f64) -> Self {
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = row[i].max(floor);
        }
        let chol = cholesky(&cov).unwrap_or_else(|| {
            let mut reg = cov;
            for (i, row) in reg.iter_mut().enumerate() {
                row[i] += floor;
            }
            cholesky(&reg).unwrap_or([
                [floor.sqrt(), 0.0, 0.0],
                [0.0, floor.sqrt(), 0.0],
                [0.0, 0.0, floor.sqrt()],
            ])
        });
        let log_det = 2.0 * (chol[0][0].ln() + chol[1][1].ln() + chol[2][2].ln());
        Self {
            log_weight: weight.max(1e-300).ln(),
            mean,
            chol,
            log_det,
        }
    }

    fn log_density(&self, x: [f64; 3]) -> f64 {
        let d = [
            x[0] - self.mean[0],
            x[1] - self.mean[1],
            x[2] - self.mean[2],
        ];
        // forward substitution L z = d
        let l = &self.chol;
        let z0 = d[0] / l[0][0];
        let z1 = (d[1] - l[1][0] * z0) / l[1][1];
        let z2 = (d[2] - l[2][0] * z0 - l[2][1] * z1) / l[2][2];
        -0.5 * (3.0 * LN_2PI + self.log_det + z0 * z0 + z1 * z1 + z2 * z2)
    }
}

fn cholesky(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if v <= 1e-300 || !v.is_finite() {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Gaussian mixture color model.
#[derive(Debug, Clone)]
pub struct ColorGmm {
    components: Vec<Component>,
}

impl ColorGmm {
    /// Fits a mixture to `samples`. Falls back to a single Gaussian when the
    /// samples have fewer distinct colors than requested components.
    ///
    /// Panics if `samples` is empty.
    pub fn fit(samples: &[[f32; 3]], opts: GmmOptions) -> Self {
        assert!(
            !samples.is_empty(),
            "cannot fit a color model to no samples"
        );
        let xs: Vec<[f64; 3]> = samples.iter().map(|s| s.map(f64::from)).collect();
        let k = opts.components.max(1);
        if k == 1 || distinct_colors(samples, k) < k {
            return Self {
                components: vec![single(&xs, opts.variance_floor)],
            };
        }

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let centers = kmeans_pp(&xs, k, &mut rng);
        // initial components from the hard k-means partition
        let mut resp = vec![0.0; xs.len() * k];
        for (i, x) in xs.iter().enumerate() {
            resp[i * k + nearest(&centers, x)] = 1.0;
        }
        let mut components = m_step(&xs, &resp, k, opts.variance_floor);
        let mut logs = vec![0.0; k];
        for _ in 0..opts.em_iterations {
            // E step
            for (i, x) in xs.iter().enumerate() {
                for (l, c) in logs.iter_mut().zip(&components) {
                    *l = c.log_weight + c.log_density(*x);
                }
                let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = logs.iter().map(|l| (l - m).exp()).sum();
                for (j, l) in logs.iter().enumerate() {
                    resp[i * k + j] = (l - m).exp() / total;
                }
            }
            components = m_step(&xs, &resp, k, opts.variance_floor);
        }
        Self { components }
    }

    pub fn components(&self) -> usize {
        self.components.len()
    }

    pub fn log_density(&self, rgb: [f32; 3]) -> f64 {
        let x = rgb.map(f64::from);
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.log_weight + c.log_density(x))
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }
}

/// `p_a / (p_a + p_b)` computed in log space.
pub fn posterior(log_a: f64, log_b: f64) -> f64 {
    let d = log_b - log_a;
    if d.is_nan() {
        0.5
    } else {
        1.0 / (1.0 + d.exp())
    }
}

fn distinct_colors(samples: &[[f32; 3]], stop_at: usize) -> usize {
    let mut seen = std::collections::HashSet::new();
    for s in samples {
        seen.insert(s.map(f32::to_bits));
        if seen.len() >= stop_at {
            break;
        }
    }
    seen.len()
}

fn single(xs: &[[f64; 3]], floor: f64) -> Component {
    let resp = vec![1.0; xs.len()];
    m_step(xs, &resp, 1, floor).remove(0)
}

fn m_step(xs: &[[f64; 3]], resp: &[f64], k: usize, floor: f64) -> Vec<Component> {
    let n = xs.len() as f64;
    (0..k)
        .map(|j| {
            let nk: f64 = (0..xs.len()).map(|i| resp[i * k + j]).sum();
            if nk < 1e-9 {
                // starved component: park it at the global mean with negligible weight
                let mut c = single(xs, floor);
                c.log_weight = (1e-12f64).ln();
                return c;
            }
            let mut mean = [0.0; 3];
            for (i, x) in xs.iter().enumerate() {
                for c in 0..3 {
                    mean[c] += resp[i * k + j] * x[c];
                }
            }
            mean = mean.map(|m| m / nk);
            let mut cov = [[0.0; 3]; 3];
            for (i, x) in xs.iter().enumerate() {
                let r = resp[i * k + j];
                let d = [x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]];
                for a in 0..3 {
                    for b in 0..=a {
                        cov[a][b] += r * d[a] * d[b];
                    }
                }
            }
            for a in 0..3 {
                for b in 0..=a {
                    cov[a][b] /= nk;
                    cov[b][a] = cov[a][b];
                }
            }
            Component::new(nk / n, mean, cov, floor)
        })
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

fn nearest(centers: &[[f64; 3]], x: &[f64; 3]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(c, x);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn kmeans_pp(xs: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centers = vec![xs[rng.random_range(0..xs.len())]];
    let mut d2: Vec<f64> = xs.iter().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            xs[rng.random_range(0..xs.len())]
        } else {
            let mut t = rng.random::<f64>() * total;
            let mut pick = xs.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            xs[pick]
        };
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min(dist2(x, &next));
        }
        centers.push(next);
    }
    // a few Lloyd refinements
    for _ in 0..10 {
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for x in xs {
            let j = nearest(&centers, x);
            counts[j] += 1;
            for c in 0..3 {
                sums[j][c] += x[c];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].map(|s| s / counts[j] as f64);
            }
        }
    }
    centers
}
