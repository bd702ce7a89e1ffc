//! Synthetic data from the HDP mixture.
//!
//! [`generate_labels`] is the Chinese-restaurant-franchise predictive
//! scheme and is exact without truncation; dishes are numbered in order of
//! creation. [`generate_labels_stick_breaking`] draws the same process
//! through its stick representation, extending sticks lazily so it is exact
//! as well; its dish numbers are stick indices, as in the sampler.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{dirichlet_draw, EmissionKernel, MultinomialAtom, MultinomialKernel};
use crate::state::GroupedDataset;

/// Labels of a synthetic draw: `labels[j][i] = dishes[j][tables[j][i]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub labels: Vec<Vec<usize>>,
    pub tables: Vec<Vec<usize>>,
    pub dishes: Vec<Vec<usize>>,
    /// Customers per dish, indexed by dish.
    pub dish_sizes: Vec<usize>,
}

impl SyntheticTruth {
    /// Number of dishes with at least one customer.
    pub fn num_dishes(&self) -> usize {
        self.dish_sizes.iter().filter(|&&n| n > 0).count()
    }

    fn from_parts(tables: Vec<Vec<usize>>, dishes: Vec<Vec<usize>>) -> Self {
        let labels: Vec<Vec<usize>> =
            tables.iter().zip(&dishes).map(|(ts, ks)| ts.iter().map(|&t| ks[t]).collect()).collect();
        let top = labels.iter().flatten().copied().max().map_or(0, |m| m + 1);
        let mut dish_sizes = vec![0; top];
        for &z in labels.iter().flatten() {
            dish_sizes[z] += 1;
        }
        Self { labels, tables, dishes, dish_sizes }
    }
}

fn check_concentrations(gamma0: f64, alpha0: f64) -> Result<()> {
    for (name, c) in [("gamma0", gamma0), ("alpha0", alpha0)] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("{name} = {c} must be positive")));
        }
    }
    Ok(())
}

/// Pick index `i` with probability `w[i] / sum(w)`. `w` must have positive sum.
fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

/// Chinese-restaurant-franchise label draw for groups of the given sizes.
pub fn generate_labels<R: Rng + ?Sized>(
    gamma0: f64,
    alpha0: f64,
    sizes: &[usize],
    rng: &mut R,
) -> Result<SyntheticTruth> {
    check_concentrations(gamma0, alpha0)?;
    // tables serving each dish, over all groups
    let mut dish_tables: Vec<usize> = Vec::new();
    let mut all_tables = Vec::with_capacity(sizes.len());
    let mut all_dishes = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut occupancy: Vec<usize> = Vec::new();
        let mut dishes: Vec<usize> = Vec::new();
        let mut tables = Vec::with_capacity(n);
        for _ in 0..n {
            let weights = occupancy.iter().map(|&c| c as f64).chain(std::iter::once(alpha0));
            let t = pick(weights, rng);
            if t == occupancy.len() {
                let weights = dish_tables.iter().map(|&c| c as f64).chain(std::iter::once(gamma0));
                let k = pick(weights, rng);
                if k == dish_tables.len() {
                    dish_tables.push(0);
                }
                dish_tables[k] += 1;
                occupancy.push(0);
                dishes.push(k);
            }
            occupancy[t] += 1;
            tables.push(t);
        }
        all_tables.push(tables);
        all_dishes.push(dishes);
    }
    Ok(SyntheticTruth::from_parts(all_tables, all_dishes))
}

/// Lazily extended stick-breaking weights.
struct LazySticks {
    beta: Beta<f64>,
    weights: Vec<f64>,
    left: f64,
}

impl LazySticks {
    fn new(concentration: f64) -> Result<Self> {
        Ok(Self {
            beta: Beta::new(1.0, concentration).map_err(|e| Error::domain(e.to_string()))?,
            weights: Vec::new(),
            left: 1.0,
        })
    }

    /// Inverse-CDF draw; breaks more stick while the draw lies in the rest.
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let target: f64 = rng.random();
        let mut acc = 0.0;
        let mut i = 0;
        loop {
            if i == self.weights.len() {
                let x: f64 = self.beta.sample(rng);
                self.weights.push(x * self.left);
                self.left *= 1.0 - x;
            }
            acc += self.weights[i];
            if target < acc {
                return i;
            }
            // The tracked mass can only fall short of 1 by rounding here.
            if self.left == 0.0 {
                return i;
            }
            i += 1;
        }
    }
}

/// Stick-breaking label draw: `beta ~ GEM(gamma0)`, `gamma_j ~ GEM(alpha0)`,
/// `k_jt ~ beta`, `t_ji ~ gamma_j`. Tables without customers are not
/// materialized.
pub fn generate_labels_stick_breaking<R: Rng + ?Sized>(
    gamma0: f64,
    alpha0: f64,
    sizes: &[usize],
    rng: &mut R,
) -> Result<SyntheticTruth> {
    check_concentrations(gamma0, alpha0)?;
    let mut beta = LazySticks::new(gamma0)?;
    let mut all_tables = Vec::with_capacity(sizes.len());
    let mut all_dishes = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut gamma = LazySticks::new(alpha0)?;
        let mut dishes: Vec<Option<usize>> = Vec::new();
        let mut tables = Vec::with_capacity(n);
        for _ in 0..n {
            let t = gamma.draw(rng);
            if t >= dishes.len() {
                dishes.resize(t + 1, None);
            }
            if dishes[t].is_none() {
                dishes[t] = Some(beta.draw(rng));
            }
            tables.push(t);
        }
        // Vacant table slots get dish 0; no customer refers to them.
        all_dishes.push(dishes.into_iter().map(|k| k.unwrap_or(0)).collect());
        all_tables.push(tables);
    }
    Ok(SyntheticTruth::from_parts(all_tables, all_dishes))
}

/// Atoms with the observations drawn from them.
pub type Emitted<K> = (Vec<<K as EmissionKernel>::Atom>, GroupedDataset<<K as EmissionKernel>::Obs>);

/// Atoms from the kernel prior, one per dish, and observations
/// `y_ji ~ K(. ; phi_{z_ji})`.
pub fn generate_observations<K: EmissionKernel, R: Rng + ?Sized>(
    truth: &SyntheticTruth,
    kernel: &K,
    rng: &mut R,
) -> Result<Emitted<K>> {
    let atoms: Vec<K::Atom> = (0..truth.dish_sizes.len().max(1)).map(|_| kernel.sample_atom_prior(rng)).collect();
    let groups =
        truth.labels.iter().map(|zs| zs.iter().map(|&z| kernel.sample_observation(&atoms[z], rng)).collect()).collect();
    Ok((atoms, GroupedDataset::new(groups)?))
}

/// Observations for fixed labels and atoms.
pub fn regenerate_observations<K: EmissionKernel, R: Rng + ?Sized>(
    labels: &[Vec<usize>],
    atoms: &[K::Atom],
    kernel: &K,
    rng: &mut R,
) -> Result<GroupedDataset<K::Obs>> {
    let groups = labels
        .iter()
        .map(|zs| {
            zs.iter()
                .map(|&z| {
                    atoms
                        .get(z)
                        .map(|a| kernel.sample_observation(a, rng))
                        .ok_or_else(|| Error::invariant(format!("label {z} has no atom")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    GroupedDataset::new(groups)
}

/// A document corpus with one topic per document and well separated topics.
#[derive(Debug, Clone)]
pub struct TopicCorpus {
    pub data: GroupedDataset<usize>,
    /// Topic of each document.
    pub doc_topics: Vec<usize>,
    /// Topic of each token (the document's topic), group-major.
    pub token_topics: Vec<Vec<usize>>,
    pub topics: Vec<MultinomialAtom>,
}

/// Topic `c` puts most of its mass on the `c`-th block of the vocabulary:
/// its Dirichlet parameter is `concentration` inside the block and
/// `leak` outside. Documents draw a uniform topic and `doc_len` tokens.
pub fn separated_topic_corpus<R: Rng + ?Sized>(
    docs: usize,
    vocab: usize,
    num_topics: usize,
    doc_len: usize,
    concentration: f64,
    leak: f64,
    rng: &mut R,
) -> Result<TopicCorpus> {
    if num_topics == 0 || vocab < num_topics || doc_len == 0 {
        return Err(Error::domain("corpus needs topics <= vocab and nonempty documents"));
    }
    let block = vocab / num_topics;
    let topics: Vec<MultinomialAtom> = (0..num_topics)
        .map(|c| {
            let params: Vec<f64> =
                (0..vocab).map(|w| if (w / block).min(num_topics - 1) == c { concentration } else { leak }).collect();
            MultinomialAtom { probs: dirichlet_draw(&params, rng) }
        })
        .collect();
    let emit = MultinomialKernel::symmetric(vocab)?;
    let doc_topics: Vec<usize> = (0..docs).map(|_| rng.random_range(0..num_topics)).collect();
    let groups: Vec<Vec<usize>> =
        doc_topics.iter().map(|&c| (0..doc_len).map(|_| emit.sample_observation(&topics[c], rng)).collect()).collect();
    let token_topics = doc_topics.iter().map(|&c| vec![c; doc_len]).collect();
    Ok(TopicCorpus { data: GroupedDataset::new(groups)?, doc_topics, token_topics, topics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_customer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = generate_labels(3.0, 1.0, &[1], &mut rng).unwrap();
        assert_eq!(t.labels, vec![vec![0]]);
        assert_eq!(t.num_dishes(), 1);
    }

    #[test]
    fn second_customer_shares_table_half_the_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let shared = (0..n)
            .filter(|_| {
                let t = generate_labels(3.0, 1.0, &[2], &mut rng).unwrap();
                t.tables[0][1] == 0
            })
            .count();
        assert_abs_diff_eq!(shared as f64 / n as f64, 0.5, epsilon = 0.005);
    }

    #[test]
    fn dish_count_grows_with_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = 300;
        let means: Vec<f64> = [30usize, 100, 300]
            .iter()
            .map(|&n| {
                (0..reps)
                    .map(|_| generate_labels(3.0, 1.0, &[n / 3; 3], &mut rng).unwrap().num_dishes() as f64)
                    .sum::<f64>()
                    / reps as f64
            })
            .collect();
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }

    #[test]
    fn labels_compose_tables_and_dishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for truth in [
            generate_labels(2.0, 1.5, &[10, 7, 12], &mut rng).unwrap(),
            generate_labels_stick_breaking(2.0, 1.5, &[10, 7, 12], &mut rng).unwrap(),
        ] {
            for j in 0..3 {
                for (i, &t) in truth.tables[j].iter().enumerate() {
                    assert_eq!(truth.labels[j][i], truth.dishes[j][t]);
                }
            }
            assert_eq!(truth.dish_sizes.iter().sum::<usize>(), 29);
        }
    }

    #[test]
    fn degenerate_kernel_emits_one_word() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = generate_labels(3.0, 1.0, &[50], &mut rng).unwrap();
        // every dish puts all its mass on word 0
        let kernel = MultinomialKernel::new(vec![1e6, 1e-6]).unwrap();
        let (_, data) = generate_observations(&truth, &kernel, &mut rng).unwrap();
        assert!(data.group(0).iter().all(|&w| w == 0));
    }

    #[test]
    fn word_histogram_matches_label_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let truth =
            SyntheticTruth::from_parts(vec![(0..n).map(|i| usize::from(i % 4 == 0)).collect()], vec![vec![0, 1]]);
        let kernel = MultinomialKernel::new(vec![1.0, 1.0]).unwrap();
        let (atoms, data) = generate_observations(&truth, &kernel, &mut rng).unwrap();
        let expect0 = 0.75 * atoms[0].probs[0] + 0.25 * atoms[1].probs[0];
        let observed0 = data.group(0).iter().filter(|&&w| w == 0).count() as f64 / n as f64;
        // total variation over two words is |difference in word-0 frequency|
        assert!((expect0 - observed0).abs() < 0.05);
    }

    #[test]
    fn regeneration_is_deterministic() {
        let kernel = MultinomialKernel::symmetric(4).unwrap();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let truth = generate_labels(3.0, 1.0, &[5, 5], &mut rng).unwrap();
            generate_observations(&truth, &kernel, &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn topic_corpus_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = separated_topic_corpus(20, 30, 3, 8, 1.0, 0.01, &mut rng).unwrap();
        assert_eq!(c.data.num_groups(), 20);
        assert!(c.data.groups().iter().all(|g| g.len() == 8 && g.iter().all(|&w| w < 30)));
        assert!(c.doc_topics.iter().all(|&t| t < 3));
    }
}
