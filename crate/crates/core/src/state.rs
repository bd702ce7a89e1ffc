//! Latent chain state, hyperparameters, snapshots and the log joint density.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::EmissionKernel;
use crate::rng::{Phase, StreamFactory};
use crate::stick::StickVector;

/// Fixed model and run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Top-level concentration.
    pub gamma0: f64,
    /// Group-level concentration.
    pub alpha0: f64,
    pub initial_t_cap: usize,
    pub initial_k_cap: usize,
    /// Cap multiplier when a truncation guard fails.
    pub growth_factor: f64,
    pub max_iterations: u64,
    pub seed: u64,
    /// Restart bound within one iteration.
    pub max_restarts: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma0: 3.0,
            alpha0: 1.0,
            initial_t_cap: 10,
            initial_k_cap: 10,
            growth_factor: 1.5,
            max_iterations: 100,
            seed: 0,
            max_restarts: 50,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} = {v} must be positive")))
            }
        };
        positive("gamma0", self.gamma0)?;
        positive("alpha0", self.alpha0)?;
        if self.initial_t_cap == 0 || self.initial_k_cap == 0 {
            return Err(Error::domain("initial caps must be at least 1"));
        }
        if !(self.growth_factor > 1.0 && self.growth_factor.is_finite()) {
            return Err(Error::domain(format!("growth factor {} must exceed 1", self.growth_factor)));
        }
        if self.max_restarts == 0 {
            return Err(Error::domain("max_restarts must be at least 1"));
        }
        Ok(())
    }

    /// `ceil(cap * growth_factor)`, growing by at least one.
    pub fn grown_cap(&self, cap: usize) -> usize {
        ((cap as f64 * self.growth_factor).ceil() as usize).max(cap + 1)
    }
}

/// J groups of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset<O> {
    groups: Vec<Vec<O>>,
}

impl<O> GroupedDataset<O> {
    pub fn new(groups: Vec<Vec<O>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::domain("dataset needs at least one group"));
        }
        if let Some(j) = groups.iter().position(Vec::is_empty) {
            return Err(Error::domain(format!("group {} is empty", j + 1)));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<O>] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &[O] {
        &self.groups[j]
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn into_groups(self) -> Vec<Vec<O>> {
        self.groups
    }

    pub fn check_with<K>(&self, kernel: &K) -> Result<()>
    where
        K: EmissionKernel<Obs = O>,
    {
        for (j, g) in self.groups.iter().enumerate() {
            for (i, y) in g.iter().enumerate() {
                kernel
                    .check_observation(y)
                    .map_err(|e| Error::domain(format!("group {}, observation {}: {e}", j + 1, i + 1)))?;
            }
        }
        Ok(())
    }
}

/// Latent variables of one restaurant. The table cap is `sticks.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    /// Table sticks `gamma'_j`.
    pub sticks: StickVector,
    /// `k_jt`, 0-based dish of every tracked table.
    pub dish_of_table: Vec<usize>,
    /// `t_ji`, 0-based table of every customer.
    pub table_of_customer: Vec<usize>,
    /// Customer slices `u_ji`.
    pub u: Vec<f64>,
    /// Table slices `v_jt`.
    pub v: Vec<f64>,
}

impl GroupState {
    pub fn t_cap(&self) -> usize {
        self.sticks.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.table_of_customer.iter().map(|&t| self.dish_of_table[t]).collect()
    }
}

/// Full latent state of the chain. The dish cap is `beta_sticks.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState<A> {
    /// Dish sticks `beta'`.
    pub beta_sticks: StickVector,
    pub groups: Vec<GroupState>,
    /// One atom per tracked dish.
    pub atoms: Vec<A>,
}

impl<A> ChainState<A> {
    pub fn k_cap(&self) -> usize {
        self.beta_sticks.len()
    }

    pub fn t_caps(&self) -> Vec<usize> {
        self.groups.iter().map(GroupState::t_cap).collect()
    }

    /// Check label ranges, slice indicators and array shapes.
    pub fn check(&self) -> Result<()> {
        let k_cap = self.k_cap();
        if self.atoms.len() != k_cap {
            return Err(Error::invariant(format!("{} atoms for dish cap {k_cap}", self.atoms.len())));
        }
        let beta = self.beta_sticks.weights();
        for (j, g) in self.groups.iter().enumerate() {
            let t_cap = g.t_cap();
            if g.dish_of_table.len() != t_cap || g.v.len() != t_cap {
                return Err(Error::invariant(format!("group {j}: table arrays disagree with cap {t_cap}")));
            }
            if g.u.len() != g.table_of_customer.len() {
                return Err(Error::invariant(format!("group {j}: slice count differs from customer count")));
            }
            let gamma = g.sticks.weights();
            for (i, (&t, &u)) in g.table_of_customer.iter().zip(&g.u).enumerate() {
                if t >= t_cap {
                    return Err(Error::invariant(format!("group {j} customer {i}: table {t} >= cap {t_cap}")));
                }
                if !(u > 0.0 && u <= gamma[t]) {
                    return Err(Error::invariant(format!(
                        "group {j} customer {i}: slice {u} outside (0, {}]",
                        gamma[t]
                    )));
                }
            }
            for (t, (&k, &v)) in g.dish_of_table.iter().zip(&g.v).enumerate() {
                if k >= k_cap {
                    return Err(Error::invariant(format!("group {j} table {t}: dish {k} >= cap {k_cap}")));
                }
                if !(v > 0.0 && v <= beta[k]) {
                    return Err(Error::invariant(format!("group {j} table {t}: slice {v} outside (0, {}]", beta[k])));
                }
            }
        }
        Ok(())
    }
}

/// `z_ji = k_{j, t_ji}` for every group.
pub fn derive_z<A>(state: &ChainState<A>) -> Vec<Vec<usize>> {
    state.groups.iter().map(GroupState::labels).collect()
}

/// A uniform draw on `(0, upper]`.
pub(crate) fn slice_draw<R: Rng + ?Sized>(upper: f64, rng: &mut R) -> f64 {
    upper * (1.0 - rng.random::<f64>())
}

/// Algorithm start: every customer at table 1, every table serving dish 1,
/// sticks and atoms from their priors, slices uniform on their slice sets.
pub fn init_state<K: EmissionKernel>(
    hp: &Hyperparams,
    data: &GroupedDataset<K::Obs>,
    kernel: &K,
) -> Result<ChainState<K::Atom>> {
    hp.validate()?;
    data.check_with(kernel)?;
    let streams = StreamFactory::new(hp.seed);

    let beta_sticks =
        StickVector::sample_prior(hp.initial_k_cap, hp.gamma0, &mut streams.stream(0, Phase::InitDishStick, 0, 0))?;
    let atoms = (0..hp.initial_k_cap)
        .map(|k| kernel.sample_atom_prior(&mut streams.stream(0, Phase::InitAtom, 0, k)))
        .collect();

    let beta_first = beta_sticks.weights()[0];
    let groups = data
        .groups()
        .iter()
        .enumerate()
        .map(|(j, ys)| {
            let sticks = StickVector::sample_prior(
                hp.initial_t_cap,
                hp.alpha0,
                &mut streams.stream(0, Phase::InitTableStick, j, 0),
            )?;
            let gamma_first = sticks.weights()[0];
            let mut rng_u = streams.stream(0, Phase::InitCustomerSlice, j, 0);
            let u = (0..ys.len()).map(|_| slice_draw(gamma_first, &mut rng_u)).collect();
            let mut rng_v = streams.stream(0, Phase::InitTableSlice, j, 0);
            let v = (0..hp.initial_t_cap).map(|_| slice_draw(beta_first, &mut rng_v)).collect();
            Ok(GroupState {
                sticks,
                dish_of_table: vec![0; hp.initial_t_cap],
                table_of_customer: vec![0; ys.len()],
                u,
                v,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ChainState { beta_sticks, groups, atoms })
}

fn log_stick_prior(x: f64, concentration: f64) -> f64 {
    concentration.ln() + (concentration - 1.0) * (-x).ln_1p()
}

fn finite(value: f64, factor: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical { factor: factor(), detail: format!("value {value}") })
    }
}

/// Log of the fully factorized joint density restricted to the current caps.
///
/// Every factor beyond the caps is a prior term that does not involve the
/// data, so for fixed caps this is the joint up to an additive constant.
pub fn log_joint<K: EmissionKernel>(
    state: &ChainState<K::Atom>,
    data: &GroupedDataset<K::Obs>,
    kernel: &K,
    hp: &Hyperparams,
) -> Result<f64> {
    let beta = state.beta_sticks.weights();
    let mut total = 0.0;
    for (j, (g, ys)) in state.groups.iter().zip(data.groups()).enumerate() {
        let gamma = g.sticks.weights();
        for (i, (&t, y)) in g.table_of_customer.iter().zip(ys).enumerate() {
            let k = g.dish_of_table[t];
            total += finite(kernel.log_likelihood(y, &state.atoms[k]), || {
                format!("likelihood of group {j} customer {i} under dish {k}")
            })?;
            total += finite(gamma[t].ln(), || format!("table weight gamma[{j}][{t}]"))?;
        }
        for (t, (&x, &k)) in g.sticks.raw().iter().zip(&g.dish_of_table).enumerate() {
            total += finite(log_stick_prior(x, hp.alpha0), || format!("stick prior gamma'[{j}][{t}]"))?;
            total += finite(beta[k].ln(), || format!("dish weight beta[{k}] at table {t} of group {j}"))?;
        }
    }
    for (k, (&x, atom)) in state.beta_sticks.raw().iter().zip(&state.atoms).enumerate() {
        total += finite(log_stick_prior(x, hp.gamma0), || format!("stick prior beta'[{k}]"))?;
        total += finite(kernel.atom_log_prior(atom), || format!("atom prior of dish {k}"))?;
    }
    Ok(total)
}

/// The chain at the start of an iteration. Streams are keyed by
/// `(seed, iteration)`, so this is the complete restart point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<A> {
    pub state: ChainState<A>,
    /// Number of sweeps completed when the snapshot was taken.
    pub iteration: u64,
    pub seed: u64,
}

pub fn take_snapshot<A: Clone>(state: &ChainState<A>, iteration: u64, seed: u64) -> Snapshot<A> {
    Snapshot { state: state.clone(), iteration, seed }
}

pub fn restore_snapshot<A: Clone>(snapshot: &Snapshot<A>) -> ChainState<A> {
    snapshot.state.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{GaussianKernel, MultinomialAtom, MultinomialKernel};
    use approx::assert_abs_diff_eq;

    fn tiny_tokens() -> GroupedDataset<usize> {
        GroupedDataset::new(vec![vec![0, 1, 1], vec![1, 0]]).unwrap()
    }

    #[test]
    fn init_follows_algorithm_start() {
        let hp = Hyperparams { seed: 4, ..Default::default() };
        let kernel = MultinomialKernel::symmetric(2).unwrap();
        let s = init_state(&hp, &tiny_tokens(), &kernel).unwrap();
        assert_eq!(s.k_cap(), 10);
        assert_eq!(s.t_caps(), vec![10, 10]);
        assert!(s.groups.iter().all(|g| g.table_of_customer.iter().all(|&t| t == 0)));
        assert!(s.groups.iter().all(|g| g.dish_of_table.iter().all(|&k| k == 0)));
        assert!(derive_z(&s).iter().flatten().all(|&z| z == 0));
        s.check().unwrap();
    }

    #[test]
    fn init_is_deterministic() {
        let hp = Hyperparams { seed: 99, ..Default::default() };
        let kernel = MultinomialKernel::symmetric(2).unwrap();
        let a = init_state(&hp, &tiny_tokens(), &kernel).unwrap();
        let b = init_state(&hp, &tiny_tokens(), &kernel).unwrap();
        assert_eq!(a, b);
        let c = init_state(&Hyperparams { seed: 100, ..hp }, &tiny_tokens(), &kernel).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(GroupedDataset::<usize>::new(vec![vec![0], vec![]]).is_err());
        assert!(GroupedDataset::<usize>::new(vec![]).is_err());
    }

    #[test]
    fn bad_hyperparams_rejected() {
        for hp in [
            Hyperparams { gamma0: 0.0, ..Default::default() },
            Hyperparams { alpha0: -1.0, ..Default::default() },
            Hyperparams { initial_k_cap: 0, ..Default::default() },
            Hyperparams { growth_factor: 1.0, ..Default::default() },
        ] {
            assert!(hp.validate().is_err());
        }
        assert_eq!(Hyperparams::default().grown_cap(10), 15);
        assert_eq!(Hyperparams::default().grown_cap(1), 2);
    }

    fn state_with(dishes: Vec<usize>, tables: Vec<usize>) -> ChainState<MultinomialAtom> {
        let t_cap = dishes.len();
        let n = tables.len();
        ChainState {
            beta_sticks: StickVector::new(vec![0.5; 3]).unwrap(),
            groups: vec![GroupState {
                sticks: StickVector::new(vec![0.5; t_cap]).unwrap(),
                dish_of_table: dishes,
                table_of_customer: tables,
                u: vec![0.01; n],
                v: vec![0.01; t_cap],
            }],
            atoms: vec![MultinomialAtom { probs: vec![0.5, 0.5] }; 3],
        }
    }

    #[test]
    fn derive_z_composes() {
        // k_j = (3,1), t_j = (2,2,1) -> z_j = (1,1,3), 1-based
        let s = state_with(vec![2, 0], vec![1, 1, 0]);
        assert_eq!(derive_z(&s), vec![vec![0, 0, 2]]);
    }

    #[test]
    fn derive_z_under_table_relabeling() {
        let s = state_with(vec![2, 0], vec![1, 1, 0]);
        // swap the two tables in t and k together: z is unchanged
        let swapped = state_with(vec![0, 2], vec![0, 0, 1]);
        assert_eq!(derive_z(&s), derive_z(&swapped));
        // permuting t alone changes z
        let t_only = state_with(vec![2, 0], vec![0, 0, 1]);
        assert_ne!(derive_z(&s), derive_z(&t_only));
    }

    #[test]
    fn log_joint_one_atom_by_hand() {
        let kernel = GaussianKernel::new(1, 1.0, 1.0).unwrap();
        let data = GroupedDataset::new(vec![vec![vec![0.5]]]).unwrap();
        let hp = Hyperparams { gamma0: 2.0, alpha0: 3.0, initial_t_cap: 1, initial_k_cap: 1, ..Default::default() };
        let state = ChainState {
            beta_sticks: StickVector::new(vec![0.4]).unwrap(),
            groups: vec![GroupState {
                sticks: StickVector::new(vec![0.7]).unwrap(),
                dish_of_table: vec![0],
                table_of_customer: vec![0],
                u: vec![0.1],
                v: vec![0.1],
            }],
            atoms: vec![crate::kernels::GaussianAtom { mean: vec![0.2] }],
        };
        let ln2pi = std::f64::consts::TAU.ln();
        let lik = -0.5 * ln2pi - 0.5 * 0.3f64.powi(2);
        let prior_atom = -0.5 * ln2pi - 0.5 * 0.2f64.powi(2);
        let b_alpha = (3.0 * 0.3f64.powi(2)).ln();
        let b_gamma = (2.0 * 0.6f64).ln();
        let expect = lik + 0.7f64.ln() + b_alpha + 0.4f64.ln() + b_gamma + prior_atom;
        assert_abs_diff_eq!(log_joint(&state, &data, &kernel, &hp).unwrap(), expect, epsilon = 1e-9);
    }

    #[test]
    fn unit_likelihood_customer_adds_table_weight() {
        // A one-word vocabulary makes every token likelihood exactly 1.
        let kernel = MultinomialKernel::new(vec![1.0]).unwrap();
        let hp = Hyperparams::default();
        let mut s = ChainState {
            beta_sticks: StickVector::new(vec![0.5, 0.5]).unwrap(),
            groups: vec![GroupState {
                sticks: StickVector::new(vec![0.3, 0.6]).unwrap(),
                dish_of_table: vec![0, 1],
                table_of_customer: vec![0],
                u: vec![0.1],
                v: vec![0.1, 0.1],
            }],
            atoms: vec![MultinomialAtom { probs: vec![1.0] }; 2],
        };
        let one = GroupedDataset::new(vec![vec![0]]).unwrap();
        let two = GroupedDataset::new(vec![vec![0, 0]]).unwrap();
        let before = log_joint(&s, &one, &kernel, &hp).unwrap();
        s.groups[0].table_of_customer.push(1);
        s.groups[0].u.push(0.1);
        let after = log_joint(&s, &two, &kernel, &hp).unwrap();
        assert_abs_diff_eq!(after - before, (0.6f64 * 0.7).ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_joint_reports_offending_factor() {
        let kernel = MultinomialKernel::symmetric(2).unwrap();
        let data = GroupedDataset::new(vec![vec![1]]).unwrap();
        let mut s = state_with(vec![0], vec![0]);
        s.atoms[0] = MultinomialAtom { probs: vec![1.0, 0.0] };
        match log_joint(&s, &data, &kernel, &Hyperparams::default()) {
            Err(Error::Numerical { factor, .. }) => assert!(factor.contains("likelihood")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn slice_indicator_marginalizes_to_weight() {
        // Averaging 1{u <= gamma_t} over u ~ Uniform(0,1) recovers gamma_t.
        use rand::SeedableRng;
        let gamma_t = 0.37;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let hits = (0..n).filter(|_| rng.random::<f64>() <= gamma_t).count();
        assert_abs_diff_eq!(hits as f64 / n as f64, gamma_t, epsilon = 0.01);
    }

    #[test]
    fn snapshot_round_trip() {
        let hp = Hyperparams { seed: 1, ..Default::default() };
        let kernel = MultinomialKernel::symmetric(2).unwrap();
        let mut s = init_state(&hp, &tiny_tokens(), &kernel).unwrap();
        let snap = take_snapshot(&s, 0, hp.seed);
        s.groups[0].table_of_customer[0] = 3;
        s.beta_sticks = StickVector::new(vec![0.5; 4]).unwrap();
        let back = restore_snapshot(&snap);
        assert_ne!(back, s);
        assert_eq!(back, snap.state);
        let cells: usize = back.t_caps().iter().sum::<usize>() + back.k_cap();
        assert_eq!(cells, 30);
    }
}
