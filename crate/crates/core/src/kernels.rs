//! Emission kernels: atom prior, pointwise likelihood and conjugate
//! posterior draw.
//!
//! Two kernels are provided: a spherical Gaussian with known precision and
//! a categorical likelihood over a vocabulary with a Dirichlet prior.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the sampler needs from a mixture component family.
///
/// `sample_atom_posterior` with no assigned observations must be
/// distributed exactly like `sample_atom_prior`.
pub trait EmissionKernel: Send + Sync {
    type Obs: Clone + Debug + PartialEq + Send + Sync;
    type Atom: Clone + Debug + PartialEq + Send + Sync + Serialize + DeserializeOwned;

    fn sample_atom_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Atom;

    fn sample_atom_posterior<R: Rng + ?Sized>(&self, assigned: &[&Self::Obs], rng: &mut R) -> Result<Self::Atom>;

    fn atom_log_prior(&self, atom: &Self::Atom) -> f64;

    fn log_likelihood(&self, y: &Self::Obs, atom: &Self::Atom) -> f64;

    /// Sufficient statistics of a batch of observations.
    type Stats: Send + Sync;

    fn suff_stats(&self, ys: &[&Self::Obs]) -> Self::Stats;

    /// Joint log-likelihood of a summarized batch under one atom.
    fn stats_log_likelihood(&self, stats: &Self::Stats, atom: &Self::Atom) -> f64;

    fn batch_log_likelihood(&self, ys: &[&Self::Obs], atom: &Self::Atom) -> f64 {
        self.stats_log_likelihood(&self.suff_stats(ys), atom)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, atom: &Self::Atom, rng: &mut R) -> Self::Obs;

    /// Reject observations the kernel cannot score.
    fn check_observation(&self, y: &Self::Obs) -> Result<()>;
}

/// Kernel selection as it appears in run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Gaussian {
        dim: usize,
        #[serde(default = "one")]
        tau_phi2: f64,
        #[serde(default = "one")]
        tau_y2: f64,
    },
    /// `alpha` defaults to `1 / vocab` for every word.
    Multinomial { vocab: usize, alpha: Option<f64> },
}

fn one() -> f64 {
    1.0
}

// ---------------------------------------------------------------------------
// Gaussian

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianAtom {
    pub mean: Vec<f64>,
}

/// `phi ~ N(0, I/tau_phi2)`, `y | phi ~ N(phi, I/tau_y2)`. Both parameters
/// are precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    dim: usize,
    tau_phi2: f64,
    tau_y2: f64,
}

fn check_precision(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} must be a positive precision")))
    }
}

impl GaussianKernel {
    pub fn new(dim: usize, tau_phi2: f64, tau_y2: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("gaussian dimension must be at least 1"));
        }
        check_precision("tau_phi2", tau_phi2)?;
        check_precision("tau_y2", tau_y2)?;
        Ok(Self { dim, tau_phi2, tau_y2 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Posterior mean and precision of a Gaussian atom given its observations.
pub fn gaussian_posterior_params(
    assigned: &[&Vec<f64>],
    dim: usize,
    tau_phi2: f64,
    tau_y2: f64,
) -> Result<(Vec<f64>, f64)> {
    check_precision("tau_phi2", tau_phi2)?;
    check_precision("tau_y2", tau_y2)?;
    let mut sum = vec![0.0; dim];
    for y in assigned {
        if y.len() != dim {
            return Err(Error::domain(format!("observation of dimension {} != {dim}", y.len())));
        }
        for (s, v) in sum.iter_mut().zip(y.iter()) {
            *s += v;
        }
    }
    let precision = tau_phi2 + assigned.len() as f64 * tau_y2;
    let scale = tau_y2 / precision;
    Ok((sum.into_iter().map(|s| s * scale).collect(), precision))
}

/// Draw from `N(mu_k, I/tau_k2)` with `tau_k2 = tau_phi2 + n tau_y2`.
pub fn gaussian_posterior_draw<R: Rng + ?Sized>(
    assigned: &[&Vec<f64>],
    dim: usize,
    tau_phi2: f64,
    tau_y2: f64,
    rng: &mut R,
) -> Result<GaussianAtom> {
    let (mu, precision) = gaussian_posterior_params(assigned, dim, tau_phi2, tau_y2)?;
    let sd = precision.sqrt().recip();
    let mean = mu
        .into_iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            m + sd * z
        })
        .collect();
    Ok(GaussianAtom { mean })
}

fn spherical_log_density(y: &[f64], center: &[f64], precision: f64) -> f64 {
    let sq: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * y.len() as f64 * (precision / std::f64::consts::TAU).ln() - 0.5 * precision * sq
}

/// Count, coordinate sums and total squared norm of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub n: usize,
    pub sum: Vec<f64>,
    pub sum_sq: f64,
}

impl EmissionKernel for GaussianKernel {
    type Obs = Vec<f64>;
    type Atom = GaussianAtom;
    type Stats = GaussianStats;

    fn suff_stats(&self, ys: &[&Vec<f64>]) -> GaussianStats {
        let mut sum = vec![0.0; self.dim];
        let mut sum_sq = 0.0;
        for y in ys {
            for (s, v) in sum.iter_mut().zip(y.iter()) {
                *s += v;
                sum_sq += v * v;
            }
        }
        GaussianStats { n: ys.len(), sum, sum_sq }
    }

    fn stats_log_likelihood(&self, stats: &GaussianStats, atom: &GaussianAtom) -> f64 {
        if stats.n == 0 {
            return 0.0;
        }
        let n = stats.n as f64;
        let dot: f64 = stats.sum.iter().zip(&atom.mean).map(|(s, m)| s * m).sum();
        let norm: f64 = atom.mean.iter().map(|m| m * m).sum();
        let sq = stats.sum_sq - 2.0 * dot + n * norm;
        0.5 * n * self.dim as f64 * (self.tau_y2 / std::f64::consts::TAU).ln() - 0.5 * self.tau_y2 * sq
    }

    fn sample_atom_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussianAtom {
        let sd = self.tau_phi2.sqrt().recip();
        GaussianAtom {
            mean: (0..self.dim)
                .map(|_| {
                    sd * {
                        let z: f64 = StandardNormal.sample(rng);
                        z
                    }
                })
                .collect::<Vec<f64>>(),
        }
    }

    fn sample_atom_posterior<R: Rng + ?Sized>(&self, assigned: &[&Vec<f64>], rng: &mut R) -> Result<GaussianAtom> {
        gaussian_posterior_draw(assigned, self.dim, self.tau_phi2, self.tau_y2, rng)
    }

    fn atom_log_prior(&self, atom: &GaussianAtom) -> f64 {
        let origin = vec![0.0; self.dim];
        spherical_log_density(&atom.mean, &origin, self.tau_phi2)
    }

    fn log_likelihood(&self, y: &Vec<f64>, atom: &GaussianAtom) -> f64 {
        spherical_log_density(y, &atom.mean, self.tau_y2)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, atom: &GaussianAtom, rng: &mut R) -> Vec<f64> {
        let sd = self.tau_y2.sqrt().recip();
        atom.mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect()
    }

    fn check_observation(&self, y: &Vec<f64>) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::domain(format!("observation of dimension {} != {}", y.len(), self.dim)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite observation"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Multinomial

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialAtom {
    pub probs: Vec<f64>,
}

/// Categorical likelihood `K(y; phi) = phi_y` with a `Dirichlet(alpha)` prior.
/// Tokens are 0-based word ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialKernel {
    alpha: Vec<f64>,
}

impl MultinomialKernel {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::domain("vocabulary must be nonempty"));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::domain(format!("pseudo-count {a} must be positive")));
        }
        Ok(Self { alpha })
    }

    /// Symmetric prior with `alpha_w = 1/W`.
    pub fn symmetric(vocab: usize) -> Result<Self> {
        Self::new(vec![1.0 / vocab.max(1) as f64; vocab])
    }

    pub fn vocab(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

fn word_counts(tokens: impl IntoIterator<Item = usize>, vocab: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; vocab];
    for w in tokens {
        *counts.get_mut(w).ok_or_else(|| Error::domain(format!("token {w} outside vocabulary of size {vocab}")))? += 1;
    }
    Ok(counts)
}

/// `alpha'_w = alpha_w + #{assigned tokens equal to w}`.
pub fn multinomial_posterior_params(assigned: &[&usize], alpha: &[f64]) -> Result<Vec<f64>> {
    let counts = word_counts(assigned.iter().map(|w| **w), alpha.len())?;
    Ok(alpha.iter().zip(counts).map(|(a, c)| a + c as f64).collect())
}

/// `ln G` for `G ~ Gamma(shape, 1)`, stable for small shapes.
fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        // G = G' U^{1/a} with G' ~ Gamma(a + 1).
        let boosted = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u = 1.0 - rng.random::<f64>();
        boosted.ln() + u.ln() / shape
    }
}

/// One `Dirichlet(params)` draw, normalized in log space. Coordinates that
/// underflow are floored at the smallest normal `f64` so every density
/// stays finite.
pub fn dirichlet_draw<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = params.iter().map(|&a| log_gamma_draw(a, rng)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p = (*p / total).max(f64::MIN_POSITIVE));
    probs
}

pub fn multinomial_posterior_draw<R: Rng + ?Sized>(
    assigned: &[&usize],
    alpha: &[f64],
    rng: &mut R,
) -> Result<MultinomialAtom> {
    let params = multinomial_posterior_params(assigned, alpha)?;
    Ok(MultinomialAtom { probs: dirichlet_draw(&params, rng) })
}

/// Word histogram of each table of one group: `counts[t][w]`.
pub fn per_table_word_stats(tokens: &[usize], tables: &[usize], cap: usize, vocab: usize) -> Result<Vec<Vec<u64>>> {
    if tokens.len() != tables.len() {
        return Err(Error::domain("tokens and table assignments differ in length"));
    }
    let mut stats = vec![vec![0u64; vocab]; cap];
    for (&w, &t) in tokens.iter().zip(tables) {
        let row = stats.get_mut(t).ok_or_else(|| Error::invariant(format!("table {t} exceeds cap {cap}")))?;
        *row.get_mut(w).ok_or_else(|| Error::domain(format!("token {w} outside vocabulary of size {vocab}")))? += 1;
    }
    Ok(stats)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEF[1..].iter().enumerate().fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (std::f64::consts::TAU).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

impl EmissionKernel for MultinomialKernel {
    type Obs = usize;
    type Atom = MultinomialAtom;
    /// Nonzero word counts `(w, count)` in increasing word order.
    type Stats = Vec<(usize, u64)>;

    fn suff_stats(&self, ys: &[&usize]) -> Vec<(usize, u64)> {
        let mut words: Vec<usize> = ys.iter().map(|w| **w).collect();
        words.sort_unstable();
        let mut out: Vec<(usize, u64)> = Vec::new();
        for w in words {
            match out.last_mut() {
                Some((last, c)) if *last == w => *c += 1,
                _ => out.push((w, 1)),
            }
        }
        out
    }

    fn stats_log_likelihood(&self, stats: &Vec<(usize, u64)>, atom: &MultinomialAtom) -> f64 {
        stats
            .iter()
            .map(|&(w, c)| match atom.probs.get(w) {
                Some(p) => c as f64 * p.ln(),
                None => f64::NEG_INFINITY,
            })
            .sum()
    }

    fn sample_atom_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> MultinomialAtom {
        MultinomialAtom { probs: dirichlet_draw(&self.alpha, rng) }
    }

    fn sample_atom_posterior<R: Rng + ?Sized>(&self, assigned: &[&usize], rng: &mut R) -> Result<MultinomialAtom> {
        multinomial_posterior_draw(assigned, &self.alpha, rng)
    }

    fn atom_log_prior(&self, atom: &MultinomialAtom) -> f64 {
        let total: f64 = self.alpha.iter().sum();
        let norm = ln_gamma(total) - self.alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
        norm + self.alpha.iter().zip(&atom.probs).map(|(a, p)| (a - 1.0) * p.ln()).sum::<f64>()
    }

    fn log_likelihood(&self, y: &usize, atom: &MultinomialAtom) -> f64 {
        atom.probs[*y].ln()
    }

    fn sample_observation<R: Rng + ?Sized>(&self, atom: &MultinomialAtom, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, p) in atom.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return w;
            }
        }
        // Rounding left u above the cumulative sum: last word with mass.
        atom.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    fn check_observation(&self, y: &usize) -> Result<()> {
        if *y < self.vocab() {
            Ok(())
        } else {
            Err(Error::domain(format!("token {y} outside vocabulary of size {}", self.vocab())))
        }
    }
}
