//! Stick-breaking transforms and the conjugate stick update.
//!
//! Indices are 0-based throughout: `raw[0]` is the first break. For a
//! sequence of fractions `x`, the weights are `w[j] = x[j] * prod_{l<j}(1 - x[l])`
//! and the tail products are `p[j] = prod_{l<=j}(1 - x[l])`, the mass left
//! after break `j`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stick fractions are kept inside `[STICK_EPS, 1 - STICK_EPS]`.
pub const STICK_EPS: f64 = 1e-12;

fn check_fractions(raw: &[f64]) -> Result<()> {
    match raw.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
        Some(i) => Err(Error::domain(format!("stick fraction {} at index {i} is outside (0, 1)", raw[i]))),
        None => Ok(()),
    }
}

/// Stick-breaking weights of `raw`.
pub fn map_f(raw: &[f64]) -> Result<Vec<f64>> {
    check_fractions(raw)?;
    let mut left = 1.0;
    Ok(raw
        .iter()
        .map(|&x| {
            let w = x * left;
            left *= 1.0 - x;
            w
        })
        .collect())
}

/// Tail products of `raw`.
pub fn tail_p(raw: &[f64]) -> Result<Vec<f64>> {
    check_fractions(raw)?;
    Ok(raw
        .iter()
        .scan(1.0, |left, &x| {
            *left *= 1.0 - x;
            Some(*left)
        })
        .collect())
}

/// Raw fractions together with their derived weights and tail products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StickVector {
    raw: Vec<f64>,
    weights: Vec<f64>,
    tail: Vec<f64>,
}

impl TryFrom<Vec<f64>> for StickVector {
    type Error = Error;

    fn try_from(raw: Vec<f64>) -> Result<Self> {
        StickVector::new(raw)
    }
}

impl From<StickVector> for Vec<f64> {
    fn from(s: StickVector) -> Self {
        s.raw
    }
}

impl StickVector {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        let weights = map_f(&raw)?;
        let tail = tail_p(&raw)?;
        Ok(Self { raw, weights, tail })
    }

    /// `len` independent Beta(1, concentration) fractions.
    pub fn sample_prior<R: Rng + ?Sized>(len: usize, concentration: f64, rng: &mut R) -> Result<Self> {
        let beta = prior_beta(concentration)?;
        let raw = (0..len).map(|_| clamp_fraction(beta.sample(rng))).collect();
        Self::new(raw)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    /// Mass not covered by the tracked weights, `P[len]` (1 when empty).
    pub fn residual(&self) -> f64 {
        self.tail.last().copied().unwrap_or(1.0)
    }

    /// Mass left before break `j`: `P[j-1]`, with `P[-1] = 1`.
    pub fn tail_before(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.tail[j - 1]
        }
    }

    /// Append one break at the end.
    pub fn push(&mut self, x: f64) -> Result<()> {
        check_fractions(&[x])?;
        let left = self.residual();
        self.raw.push(x);
        self.weights.push(x * left);
        self.tail.push(left * (1.0 - x));
        Ok(())
    }
}

pub(crate) fn clamp_fraction(x: f64) -> f64 {
    x.clamp(STICK_EPS, 1.0 - STICK_EPS)
}

fn prior_beta(concentration: f64) -> Result<Beta<f64>> {
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::domain(format!("concentration {concentration} must be positive")));
    }
    Beta::new(1.0, concentration).map_err(|e| Error::domain(e.to_string()))
}

/// Per-index occupancy `n_j(z)` and `n_{>j}(z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyCounts {
    pub at: Vec<usize>,
    pub above: Vec<usize>,
}

/// Count 0-based `labels` against indices `0..cap`.
pub fn occupancy<I>(labels: I, cap: usize) -> Result<OccupancyCounts>
where
    I: IntoIterator<Item = usize>,
{
    let mut at = vec![0usize; cap];
    let mut total = 0usize;
    for z in labels {
        if z >= cap {
            return Err(Error::invariant(format!("label {z} exceeds cap {cap}")));
        }
        at[z] += 1;
        total += 1;
    }
    let above = at
        .iter()
        .scan(total, |left, &n| {
            *left -= n;
            Some(*left)
        })
        .collect();
    Ok(OccupancyCounts { at, above })
}

/// One draw of break `j` given the other breaks:
/// `Beta(n_j + 1, n_{>j} + concentration)`, clamped away from 0 and 1.
pub fn conditional_stick_draw<R: Rng + ?Sized>(
    counts: &OccupancyCounts,
    j: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::domain(format!("concentration {concentration} must be positive")));
    }
    let (at, above) = match (counts.at.get(j), counts.above.get(j)) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0, 0),
    };
    let beta = Beta::new(at as f64 + 1.0, above as f64 + concentration).map_err(|e| Error::domain(e.to_string()))?;
    Ok(clamp_fraction(beta.sample(rng)))
}
