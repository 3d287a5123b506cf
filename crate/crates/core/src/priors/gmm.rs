use rand::{Rng, RngExt};

use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::priors::check_dim;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic variance.
    pub var: f64,
}

/// Mixture of isotropic Gaussians. Its MMSE denoiser is nonlinear and couples
/// all dimensions through the component responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    components: Vec<GmmComponent>,
    dim: usize,
}

/// Per-evaluation quantities shared by denoise, score and vjp.
struct Posterior {
    resp: Vec<f64>,
    /// `var_k / (var_k + sigma^2)`
    shrink: Vec<f64>,
    /// `1 / (var_k + sigma^2)`
    precision: Vec<f64>,
}

impl GmmPrior {
    /// Weights are renormalized to sum to one.
    pub fn new(mut components: Vec<GmmComponent>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::Parameter("mixture needs at least one component".into()));
        };
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Parameter("mixture dimension must be at least 1".into()));
        }
        for c in &components {
            check_dim(dim, c.mean.len())?;
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Parameter(format!("invalid mixture weight {}", c.weight)));
            }
            if !(c.var > 0.0 && c.var.is_finite()) {
                return Err(Error::Parameter(format!("invalid component variance {}", c.var)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(Error::Parameter("mixture weights sum to zero".into()));
        }
        for c in components.iter_mut() {
            c.weight /= total;
        }
        Ok(Self { components, dim })
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Marginal over the first `d` dimensions.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.dim {
            return Err(Error::Parameter(format!("cannot truncate {}-dim mixture to {d}", self.dim)));
        }
        Self::new(
            self.components
                .iter()
                .map(|c| GmmComponent {
                    weight: c.weight,
                    mean: c.mean[..d].to_vec(),
                    var: c.var,
                })
                .collect(),
        )
    }

    /// Fit to non-overlapping length-`dim` patches of `data` with a few
    /// k-means iterations: means are cluster centroids, each variance is the
    /// per-dimension residual power of its cluster, weights are cluster sizes.
    pub fn fit_patches<R: Rng + ?Sized>(
        data: &[f64],
        dim: usize,
        k: usize,
        iterations: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::Parameter("patch size and component count must be positive".into()));
        }
        let patches: Vec<&[f64]> = data.chunks_exact(dim).collect();
        if patches.len() < k {
            return Err(Error::Parameter(format!(
                "{} patches cannot seed {k} components",
                patches.len()
            )));
        }
        let mut means: Vec<Vec<f64>> = (0..k)
            .map(|_| patches[rng.random_range(0..patches.len())].to_vec())
            .collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let mut assign = vec![0usize; patches.len()];
        for _ in 0..iterations.max(1) {
            for (p, a) in patches.iter().zip(assign.iter_mut()) {
                *a = (0..k)
                    .min_by(|&i, &j| dist(p, &means[i]).total_cmp(&dist(p, &means[j])))
                    .unwrap_or(0);
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (p, &a) in patches.iter().zip(&assign) {
                counts[a] += 1;
                sums[a].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
            }
            for c in 0..k {
                if counts[c] > 0 {
                    means[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
        }
        let mut resid = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in patches.iter().zip(&assign) {
            resid[a] += dist(p, &means[a]);
            counts[a] += 1;
        }
        let global_power = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
        let floor = (global_power * 1e-4).max(1e-10);
        let components = (0..k)
            .filter(|&c| counts[c] > 0)
            .map(|c| GmmComponent {
                weight: counts[c] as f64,
                mean: means[c].clone(),
                var: (resid[c] / (counts[c] * dim) as f64).max(floor),
            })
            .collect();
        Self::new(components)
    }

    fn posterior(&self, x: &[f64], sigma: f64) -> Posterior {
        let s2 = sigma * sigma;
        let d = self.dim as f64;
        let precision: Vec<f64> = self.components.iter().map(|c| 1.0 / (c.var + s2)).collect();
        let shrink: Vec<f64> = self.components.iter().map(|c| c.var / (c.var + s2)).collect();
        let logits: Vec<f64> = self
            .components
            .iter()
            .zip(&precision)
            .map(|(c, p)| {
                let sq: f64 = x.iter().zip(&c.mean).map(|(x, m)| (x - m) * (x - m)).sum();
                c.weight.ln() - 0.5 * sq * p + 0.5 * d * p.ln()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Posterior {
            resp: exps.iter().map(|e| e / total).collect(),
            shrink,
            precision,
        }
    }
}

impl Denoiser for GmmPrior {
    fn denoise(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let post = self.posterior(x, sigma);
        let mut out = vec![0.0; self.dim];
        for (k, c) in self.components.iter().enumerate() {
            let (g, a) = (post.resp[k], post.shrink[k]);
            if g == 0.0 {
                continue;
            }
            for ((o, x), m) in out.iter_mut().zip(x).zip(&c.mean) {
                *o += g * (a * x + (1.0 - a) * m);
            }
        }
        Ok(out)
    }

    /// `sum_k resp_k * (mean_k - x) / (var_k + sigma^2)`, the gradient of the
    /// noised mixture's log density.
    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let post = self.posterior(x, sigma);
        let mut out = vec![0.0; self.dim];
        for (k, c) in self.components.iter().enumerate() {
            let w = post.resp[k] * post.precision[k];
            if w == 0.0 {
                continue;
            }
            for ((o, x), m) in out.iter_mut().zip(x).zip(&c.mean) {
                *o += w * (m - x);
            }
        }
        Ok(out)
    }

    // J = sum_k r_k a_k I + sum_k r_k m_k (g_k - g)^T, with g_k the
    // component log-density gradient and g their responsibility average.
    fn vjp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, v.len())?;
        let post = self.posterior(x, sigma);
        let score = self.score(x, sigma)?;
        let diag: f64 = post.resp.iter().zip(&post.shrink).map(|(r, a)| r * a).sum();
        let mut out: Vec<f64> = v.iter().map(|v| diag * v).collect();
        for (k, c) in self.components.iter().enumerate() {
            let (r, a, p) = (post.resp[k], post.shrink[k], post.precision[k]);
            if r == 0.0 {
                continue;
            }
            // m_k . v
            let mv: f64 = x
                .iter()
                .zip(&c.mean)
                .zip(v)
                .map(|((x, m), v)| (a * x + (1.0 - a) * m) * v)
                .sum();
            for (((o, x), m), s) in out.iter_mut().zip(x).zip(&c.mean).zip(&score) {
                *o += r * mv * ((m - x) * p - s);
            }
        }
        Ok(out)
    }

    fn supports_vjp(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("gmm(k={}, dim={})", self.components.len(), self.dim)
    }
}
