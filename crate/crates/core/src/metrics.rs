//! Partition agreement and document labeling.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(A;B) / sqrt(H(A) H(B))`.
///
/// Two trivial partitions agree perfectly (1); a trivial partition against
/// a nontrivial one carries no information (0).
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::domain("nmi needs at least one label"));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut row: BTreeMap<usize, usize> = BTreeMap::new();
    let mut col: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *row.entry(x).or_default() += 1;
        *col.entry(y).or_default() += 1;
    }
    let ha = entropy(row.values().copied(), n);
    let hb = entropy(col.values().copied(), n);
    if row.len() == 1 && col.len() == 1 {
        return Ok(1.0);
    }
    if row.len() == 1 || col.len() == 1 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = row[&x] as f64 / n;
            let py = col[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Concatenate per-group labels in group-major, customer-minor order.
pub fn aggregate_labels<L: AsRef<[usize]>>(groups: &[L]) -> Vec<usize> {
    groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect()
}

/// Most frequent label of each document; ties go to the smallest label.
pub fn majority_vote<L: AsRef<[usize]>>(docs: &[L]) -> Result<Vec<usize>> {
    docs.iter()
        .enumerate()
        .map(|(d, labels)| {
            let labels = labels.as_ref();
            if labels.is_empty() {
                return Err(Error::domain(format!("document {} has no labels", d + 1)));
            }
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &l in labels {
                *counts.entry(l).or_default() += 1;
            }
            Ok(counts
                .into_iter()
                .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
                .map(|(l, _)| l)
                .expect("nonempty"))
        })
        .collect()
}
