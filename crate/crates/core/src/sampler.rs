//! The exact slice sampler.
//!
//! One sweep runs, in order: table sticks and table bounds with the table
//! cap guard (per group); dish sticks and dish bounds with the dish cap
//! guard; atoms; per group the table dishes with their slices, then the
//! customer tables with their slices.
//!
//! A cap guard compares the untracked stick mass `P[cap]` against the
//! smallest slice value. Every untracked weight is at most `P[cap]`, so when
//! `P[cap] < min u` no index beyond the cap is admissible and the truncated
//! draw is the exact conditional. When a guard fails the iteration restarts
//! from its snapshot with a grown cap; the new coordinates are drawn from
//! their conditional priors and every stream is keyed by coordinate, so the
//! replay reproduces all existing draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::kernels::EmissionKernel;
use crate::metrics::{aggregate_labels, nmi};
use crate::rng::{Phase, Stream, StreamFactory};
use crate::state::{derive_z, init_state, log_joint, slice_draw, ChainState, GroupState, GroupedDataset, Hyperparams};
use crate::stick::{clamp_fraction, conditional_stick_draw, occupancy, StickVector};

/// One row of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based iteration index.
    pub iter: u64,
    pub nmi: Option<f64>,
    /// Dishes with at least one customer.
    pub active_dishes: usize,
    /// Largest admissible dish index `K` (1-based count).
    pub k_max: usize,
    /// Largest admissible table index over groups, `max_j T_j` (1-based).
    pub max_t: usize,
    pub t_cap_max: usize,
    pub k_cap: usize,
    pub restarts: usize,
    pub log_joint: f64,
}

/// Admissible index bounds of one sweep, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceBounds {
    /// `T_ji`: largest table with `u_ji <= gamma_jt`.
    pub table: Vec<Vec<usize>>,
    /// `T_j = max_i T_ji`.
    pub group_table: Vec<usize>,
    /// `K_jt`: largest dish with `v_jt <= beta_k`.
    pub dish: Vec<Vec<usize>>,
    /// `K_j = max_t K_jt`.
    pub group_dish: Vec<usize>,
    /// `K = max_j K_j`.
    pub dish_max: usize,
}

/// Untracked mass against the smallest slice it has to stay below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardCheck {
    pub tail: f64,
    pub min_slice: f64,
}

impl GuardCheck {
    pub fn passed(&self) -> bool {
        self.tail < self.min_slice
    }
}

/// Guards as evaluated by the accepted attempt of an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardReport {
    pub tables: Vec<GuardCheck>,
    pub dishes: GuardCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub record: TraceRecord,
    pub bounds: SliceBounds,
    pub guards: GuardReport,
}

// ---------------------------------------------------------------------------
// Per-phase updates

/// Move a slice drawn under weight `old` onto the slice of weight `new`.
/// `u / old` is uniform on (0, 1] and independent of the new sticks.
fn transport_slice(u: f64, old: f64, new: f64) -> f64 {
    ((u / old).min(1.0) * new).min(new)
}

/// Redraw every table stick of a group given its customers, then carry the
/// customer slices over to the new table weights.
pub fn update_gamma_sticks(
    group: &mut GroupState,
    alpha0: f64,
    streams: &StreamFactory,
    iteration: u64,
    j: usize,
) -> Result<()> {
    let cap = group.t_cap();
    let counts = occupancy(group.table_of_customer.iter().copied(), cap)?;
    let raw = (0..cap)
        .map(|t| {
            let mut rng = streams.stream(iteration, Phase::TableStick, j, t);
            conditional_stick_draw(&counts, t, alpha0, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let sticks = StickVector::new(raw)?;
    let (old, new) = (group.sticks.weights(), sticks.weights());
    for (u, &t) in group.u.iter_mut().zip(&group.table_of_customer) {
        *u = transport_slice(*u, old[t], new[t]);
    }
    group.sticks = sticks;
    Ok(())
}

/// Largest index `m` with `slice <= weights[m]`. The scan covers every
/// tracked index because stick weights are not monotone.
fn last_admissible(weights: &[f64], slice: f64) -> Option<usize> {
    weights.iter().rposition(|&w| slice <= w)
}

/// `T_ji` for every customer and `T_j`.
pub fn compute_t(group: &GroupState) -> Result<(Vec<usize>, usize)> {
    let gamma = group.sticks.weights();
    let bounds = group
        .u
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            last_admissible(gamma, u)
                .ok_or_else(|| Error::invariant(format!("customer {i}: no table admits slice {u}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let max = bounds.iter().copied().max().unwrap_or(0);
    Ok((bounds, max))
}

pub fn table_guard(group: &GroupState) -> GuardCheck {
    GuardCheck { tail: group.sticks.residual(), min_slice: group.u.iter().copied().fold(f64::INFINITY, f64::min) }
}

/// Redraw every dish stick given the dishes of all tracked tables (vacant
/// tables included), then carry the table slices over.
pub fn update_beta_sticks<A>(
    state: &mut ChainState<A>,
    gamma0: f64,
    streams: &StreamFactory,
    iteration: u64,
) -> Result<()> {
    let cap = state.k_cap();
    let counts = occupancy(state.groups.iter().flat_map(|g| g.dish_of_table.iter().copied()), cap)?;
    let raw = (0..cap)
        .map(|k| {
            let mut rng = streams.stream(iteration, Phase::DishStick, 0, k);
            conditional_stick_draw(&counts, k, gamma0, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let sticks = StickVector::new(raw)?;
    let (old, new) = (state.beta_sticks.weights(), sticks.weights());
    for g in &mut state.groups {
        for (v, &k) in g.v.iter_mut().zip(&g.dish_of_table) {
            *v = transport_slice(*v, old[k], new[k]);
        }
    }
    state.beta_sticks = sticks;
    Ok(())
}

/// `K_jt` for every tracked table.
pub fn compute_k<A>(state: &ChainState<A>) -> Result<Vec<Vec<usize>>> {
    let beta = state.beta_sticks.weights();
    state
        .groups
        .iter()
        .enumerate()
        .map(|(j, g)| {
            g.v.iter()
                .enumerate()
                .map(|(t, &v)| {
                    last_admissible(beta, v)
                        .ok_or_else(|| Error::invariant(format!("group {j} table {t}: no dish admits slice {v}")))
                })
                .collect()
        })
        .collect()
}

pub fn dish_guard<A>(state: &ChainState<A>) -> GuardCheck {
    GuardCheck {
        tail: state.beta_sticks.residual(),
        min_slice: state.groups.iter().flat_map(|g| g.v.iter().copied()).fold(f64::INFINITY, f64::min),
    }
}

/// Redraw every tracked atom from its conditional given the data currently
/// labeled with it; unlabeled atoms come from the prior.
pub fn update_atoms<K: EmissionKernel>(
    state: &mut ChainState<K::Atom>,
    kernel: &K,
    data: &GroupedDataset<K::Obs>,
    streams: &StreamFactory,
    iteration: u64,
    workers: &Workers,
) -> Result<()> {
    let cap = state.k_cap();
    let mut members: Vec<Vec<&K::Obs>> = vec![Vec::new(); cap];
    for (g, ys) in state.groups.iter().zip(data.groups()) {
        for (&t, y) in g.table_of_customer.iter().zip(ys) {
            let k = g.dish_of_table[t];
            members.get_mut(k).ok_or_else(|| Error::invariant(format!("dish {k} exceeds cap {cap}")))?.push(y);
        }
    }
    state.atoms = workers.map(cap, |k| {
        let mut rng = streams.stream(iteration, Phase::Atom, 0, k);
        kernel.sample_atom_posterior(&members[k], &mut rng)
    })?;
    Ok(())
}

/// Draw an index from unnormalized log weights. Ties in the maximum do not
/// matter for sampling; the walk is in candidate order.
pub fn sample_log_categorical<R: Rng + ?Sized>(candidates: &[(usize, f64)], rng: &mut R) -> Result<usize> {
    let top = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical {
            factor: "categorical weights".into(),
            detail: format!("{} candidates, maximum log weight {top}", candidates.len()),
        });
    }
    let weights: Vec<f64> = candidates.iter().map(|c| (c.1 - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (c, w) in candidates.iter().zip(&weights) {
        acc += w;
        if target < acc {
            return Ok(c.0);
        }
    }
    Ok(candidates
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .map(|(c, _)| c.0)
        .expect("at least one positive weight"))
}

/// Redraw the dish of every tracked table among the admissible dishes
/// `{k <= K_jt : v_jt <= beta_k}`, weighting by the likelihood of the
/// table's customers, then redraw the table slices.
#[allow(clippy::too_many_arguments)]
pub fn update_k<K: EmissionKernel>(
    group: &mut GroupState,
    ys: &[K::Obs],
    atoms: &[K::Atom],
    beta: &StickVector,
    dish_bounds: &[usize],
    kernel: &K,
    streams: &StreamFactory,
    iteration: u64,
    j: usize,
) -> Result<()> {
    let cap = group.t_cap();
    let mut seated: Vec<Vec<&K::Obs>> = vec![Vec::new(); cap];
    for (&t, y) in group.table_of_customer.iter().zip(ys) {
        seated[t].push(y);
    }
    let weights = beta.weights();
    for t in 0..cap {
        let v = group.v[t];
        let stats = kernel.suff_stats(&seated[t]);
        let candidates: Vec<(usize, f64)> = (0..=dish_bounds[t])
            .filter(|&k| v <= weights[k])
            .map(|k| {
                let ll = if seated[t].is_empty() { 0.0 } else { kernel.stats_log_likelihood(&stats, &atoms[k]) };
                (k, ll)
            })
            .collect();
        if candidates.is_empty() {
            return Err(Error::invariant(format!("group {j} table {t}: empty dish slice set")));
        }
        let mut rng = streams.stream(iteration, Phase::Dish, j, t);
        let k = sample_log_categorical(&candidates, &mut rng)?;
        group.dish_of_table[t] = k;
        group.v[t] = slice_draw(weights[k], &mut rng);
    }
    Ok(())
}

/// Redraw the table of every customer among `{t <= T_ji : u_ji <= gamma_jt}`,
/// weighting by the likelihood under the table's dish, then redraw the
/// customer slices.
#[allow(clippy::too_many_arguments)]
pub fn update_t<K: EmissionKernel>(
    group: &mut GroupState,
    ys: &[K::Obs],
    atoms: &[K::Atom],
    table_bounds: &[usize],
    kernel: &K,
    streams: &StreamFactory,
    iteration: u64,
    j: usize,
) -> Result<()> {
    let gamma = group.sticks.weights().to_vec();
    for (i, y) in ys.iter().enumerate() {
        let u = group.u[i];
        let candidates: Vec<(usize, f64)> = (0..=table_bounds[i])
            .filter(|&t| u <= gamma[t])
            .map(|t| (t, kernel.log_likelihood(y, &atoms[group.dish_of_table[t]])))
            .collect();
        if candidates.is_empty() {
            return Err(Error::invariant(format!("group {j} customer {i}: empty table slice set")));
        }
        let mut rng = streams.stream(iteration, Phase::Table, j, i);
        let t = sample_log_categorical(&candidates, &mut rng)?;
        group.table_of_customer[i] = t;
        group.u[i] = slice_draw(gamma[t], &mut rng);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cap growth

/// Track dishes up to `new_cap`: new sticks and atoms from their priors.
fn extend_dishes<K: EmissionKernel>(
    state: &mut ChainState<K::Atom>,
    new_cap: usize,
    kernel: &K,
    hp: &Hyperparams,
    streams: &StreamFactory,
    iteration: u64,
) -> Result<()> {
    for k in state.k_cap()..new_cap {
        let mut rng = streams.stream(iteration, Phase::ExtendDish, 0, k);
        let fresh = StickVector::sample_prior(1, hp.gamma0, &mut rng)?;
        state.beta_sticks.push(fresh.raw()[0])?;
        state.atoms.push(kernel.sample_atom_prior(&mut rng));
    }
    Ok(())
}

/// Inverse-CDF draw from the dish weights, tracking more dishes whenever
/// the draw falls into the untracked mass.
fn draw_dish<K: EmissionKernel>(
    state: &mut ChainState<K::Atom>,
    rng: &mut Stream,
    kernel: &K,
    hp: &Hyperparams,
    streams: &StreamFactory,
    iteration: u64,
) -> Result<usize> {
    let target: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = 0;
    for _ in 0..=hp.max_restarts {
        let weights = state.beta_sticks.weights();
        while k < weights.len() {
            acc += weights[k];
            if target < acc {
                return Ok(k);
            }
            k += 1;
        }
        let grown = hp.grown_cap(state.k_cap());
        extend_dishes(state, grown, kernel, hp, streams, iteration)?;
    }
    Err(Error::RestartLimit { iteration, restarts: hp.max_restarts })
}

/// Track tables of group `j` up to `new_cap`. New tables are vacant: their
/// sticks come from the prior, their dishes from the current dish weights.
fn extend_tables<K: EmissionKernel>(
    state: &mut ChainState<K::Atom>,
    j: usize,
    new_cap: usize,
    kernel: &K,
    hp: &Hyperparams,
    streams: &StreamFactory,
    iteration: u64,
) -> Result<()> {
    for t in state.groups[j].t_cap()..new_cap {
        let mut rng = streams.stream(iteration, Phase::ExtendTable, j, t);
        let x = StickVector::sample_prior(1, hp.alpha0, &mut rng)?.raw()[0];
        let k = draw_dish(state, &mut rng, kernel, hp, streams, iteration)?;
        let v = slice_draw(state.beta_sticks.weights()[k], &mut rng);
        let g = &mut state.groups[j];
        g.sticks.push(clamp_fraction(x))?;
        g.dish_of_table.push(k);
        g.v.push(v);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep

struct Accepted {
    table_bounds: Vec<Vec<usize>>,
    group_table: Vec<usize>,
    table_guards: Vec<GuardCheck>,
    dish_bounds: Vec<Vec<usize>>,
    dish_guard: GuardCheck,
}

/// Run iteration `iteration` (1-based) on `state`.
pub fn sweep<K: EmissionKernel>(
    state: &mut ChainState<K::Atom>,
    data: &GroupedDataset<K::Obs>,
    kernel: &K,
    hp: &Hyperparams,
    iteration: u64,
    workers: &Workers,
    truth: Option<&[usize]>,
) -> Result<SweepReport> {
    let streams = StreamFactory::new(hp.seed);
    let mut snapshot = state.clone();
    let mut restarts = 0usize;

    let (mut work, accepted) = loop {
        if restarts > hp.max_restarts {
            return Err(Error::RestartLimit { iteration, restarts: restarts - 1 });
        }
        let mut work = snapshot.clone();

        let phase_one = workers.map_mut(&mut work.groups, |j, g| {
            update_gamma_sticks(g, hp.alpha0, &streams, iteration, j)?;
            let guard = table_guard(g);
            if !guard.passed() {
                return Ok((guard, None));
            }
            Ok((guard, Some(compute_t(g)?)))
        })?;
        let failing: Vec<usize> = phase_one.iter().enumerate().filter(|(_, r)| r.1.is_none()).map(|(j, _)| j).collect();
        if !failing.is_empty() {
            for j in failing {
                let grown = hp.grown_cap(snapshot.groups[j].t_cap());
                extend_tables(&mut snapshot, j, grown, kernel, hp, &streams, iteration)?;
            }
            restarts += 1;
            continue;
        }
        let mut table_guards = Vec::with_capacity(phase_one.len());
        let mut table_bounds = Vec::with_capacity(phase_one.len());
        let mut group_table = Vec::with_capacity(phase_one.len());
        for (guard, bounds) in phase_one {
            let (b, m) = bounds.expect("guard passed");
            table_guards.push(guard);
            table_bounds.push(b);
            group_table.push(m);
        }

        update_beta_sticks(&mut work, hp.gamma0, &streams, iteration)?;
        let dish = dish_guard(&work);
        if !dish.passed() {
            let grown = hp.grown_cap(snapshot.k_cap());
            extend_dishes(&mut snapshot, grown, kernel, hp, &streams, iteration)?;
            restarts += 1;
            continue;
        }
        let dish_bounds = compute_k(&work)?;
        break (work, Accepted { table_bounds, group_table, table_guards, dish_bounds, dish_guard: dish });
    };

    update_atoms(&mut work, kernel, data, &streams, iteration, workers)?;

    {
        let ChainState { beta_sticks, groups, atoms } = &mut work;
        let (beta, atoms) = (&*beta_sticks, &*atoms);
        let acc = &accepted;
        workers.map_mut(groups, |j, g| {
            let ys = data.group(j);
            update_k(g, ys, atoms, beta, &acc.dish_bounds[j], kernel, &streams, iteration, j)?;
            update_t(g, ys, atoms, &acc.table_bounds[j], kernel, &streams, iteration, j)
        })?;
    }
    debug_assert!(work.check().is_ok(), "{:?}", work.check());

    let z = derive_z(&work);
    let flat = aggregate_labels(&z);
    let nmi = truth.map(|t| nmi(&flat, t)).transpose()?;
    let mut used: Vec<usize> = flat.clone();
    used.sort_unstable();
    used.dedup();

    let group_dish: Vec<usize> = accepted.dish_bounds.iter().map(|b| b.iter().copied().max().unwrap_or(0)).collect();
    let dish_max = group_dish.iter().copied().max().unwrap_or(0);
    let record = TraceRecord {
        iter: iteration,
        nmi,
        active_dishes: used.len(),
        k_max: dish_max + 1,
        max_t: accepted.group_table.iter().copied().max().unwrap_or(0) + 1,
        t_cap_max: work.t_caps().into_iter().max().unwrap_or(0),
        k_cap: work.k_cap(),
        restarts,
        log_joint: log_joint(&work, data, kernel, hp)?,
    };
    *state = work;
    Ok(SweepReport {
        record,
        bounds: SliceBounds {
            table: accepted.table_bounds,
            group_table: accepted.group_table,
            dish: accepted.dish_bounds,
            group_dish,
            dish_max,
        },
        guards: GuardReport { tables: accepted.table_guards, dishes: accepted.dish_guard },
    })
}

// ---------------------------------------------------------------------------
// Driver

/// Owns a chain and advances it one sweep at a time.
pub struct Sampler<'a, K: EmissionKernel> {
    kernel: &'a K,
    data: &'a GroupedDataset<K::Obs>,
    hp: Hyperparams,
    state: ChainState<K::Atom>,
    iteration: u64,
    truth: Option<Vec<usize>>,
    workers: Workers,
}

impl<'a, K: EmissionKernel> Sampler<'a, K> {
    pub fn new(kernel: &'a K, data: &'a GroupedDataset<K::Obs>, hp: Hyperparams) -> Result<Self> {
        let state = init_state(&hp, data, kernel)?;
        Ok(Self { kernel, data, hp, state, iteration: 0, truth: None, workers: Workers::sequential() })
    }

    /// Continue a chain from a saved state after `iteration` sweeps.
    pub fn resume(
        kernel: &'a K,
        data: &'a GroupedDataset<K::Obs>,
        hp: Hyperparams,
        state: ChainState<K::Atom>,
        iteration: u64,
    ) -> Result<Self> {
        hp.validate()?;
        data.check_with(kernel)?;
        if state.groups.len() != data.num_groups()
            || state.groups.iter().zip(data.groups()).any(|(g, ys)| g.table_of_customer.len() != ys.len())
        {
            return Err(Error::invariant("saved state does not match the dataset shape"));
        }
        state.check()?;
        Ok(Self { kernel, data, hp, state, iteration, truth: None, workers: Workers::sequential() })
    }

    /// Score every sweep against reference labels (group-major order).
    pub fn with_truth(mut self, truth: Vec<usize>) -> Result<Self> {
        if truth.len() != self.data.total() {
            return Err(Error::domain(format!(
                "{} reference labels for {} observations",
                truth.len(),
                self.data.total()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_workers(mut self, workers: Workers) -> Self {
        self.workers = workers;
        self
    }

    pub fn state(&self) -> &ChainState<K::Atom> {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ChainState<K::Atom> {
        &mut self.state
    }

    pub fn data(&self) -> &GroupedDataset<K::Obs> {
        self.data
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    /// Sweeps completed so far.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn labels(&self) -> Vec<Vec<usize>> {
        derive_z(&self.state)
    }

    pub fn log_joint(&self) -> Result<f64> {
        log_joint(&self.state, self.data, self.kernel, &self.hp)
    }

    pub fn sweep(&mut self) -> Result<SweepReport> {
        let next = self.iteration + 1;
        let report =
            sweep(&mut self.state, self.data, self.kernel, &self.hp, next, &self.workers, self.truth.as_deref())?;
        self.iteration = next;
        Ok(report)
    }

    /// Run `n` sweeps, handing every report to `observe`.
    pub fn run_with<F>(&mut self, n: u64, mut observe: F) -> Result<Vec<TraceRecord>>
    where
        F: FnMut(&Self, &SweepReport) -> Result<()>,
    {
        let mut trace = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let report = self.sweep()?;
            observe(self, &report)?;
            trace.push(report.record);
        }
        Ok(trace)
    }

    pub fn run(&mut self, n: u64) -> Result<Vec<TraceRecord>> {
        self.run_with(n, |_, _| Ok(()))
    }
}

/// Final state and trace of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput<A> {
    pub trace: Vec<TraceRecord>,
    pub state: ChainState<A>,
    pub labels: Vec<Vec<usize>>,
}

/// Initialize and run `hp.max_iterations` sweeps, without burn-in or thinning.
pub fn run<K: EmissionKernel>(
    data: &GroupedDataset<K::Obs>,
    kernel: &K,
    hp: &Hyperparams,
    truth: Option<Vec<usize>>,
) -> Result<RunOutput<K::Atom>> {
    let mut sampler = Sampler::new(kernel, data, hp.clone())?;
    if let Some(t) = truth {
        sampler = sampler.with_truth(t)?;
    }
    let trace = sampler.run(hp.max_iterations)?;
    let labels = sampler.labels();
    Ok(RunOutput { trace, labels, state: sampler.state })
}
