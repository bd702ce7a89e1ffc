use approx::assert_abs_diff_eq;
use hdp_slice::kernels::{gaussian_posterior_params, EmissionKernel};
use hdp_slice::rng::StreamFactory;
use hdp_slice::sampler::{
    compute_k, compute_t, dish_guard, sample_log_categorical, table_guard, update_atoms, update_beta_sticks,
    update_gamma_sticks, update_k, update_t,
};
use hdp_slice::{
    ChainState, GaussianAtom, GaussianKernel, GroupState, GroupedDataset, Hyperparams, MultinomialAtom,
    MultinomialKernel, StickVector, Workers,
};
use rand::SeedableRng;

fn group(raw: Vec<f64>, dishes: Vec<usize>, tables: Vec<usize>, u: Vec<f64>, v: Vec<f64>) -> GroupState {
    GroupState { sticks: StickVector::new(raw).unwrap(), dish_of_table: dishes, table_of_customer: tables, u, v }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (m, v)
}

#[test]
fn gamma_stick_is_beta_3_2_and_independent_of_its_neighbour() {
    let streams = StreamFactory::new(1);
    let mut g = group(vec![0.5; 3], vec![0; 3], vec![0, 0, 1], vec![0.01; 3], vec![0.01; 3]);
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for it in 1..=10_000 {
        update_gamma_sticks(&mut g, 1.0, &streams, it, 0).unwrap();
        first.push(g.sticks.raw()[0]);
        second.push(g.sticks.raw()[1]);
    }
    let (m, v) = mean_var(&first);
    assert_abs_diff_eq!(m, 0.6, epsilon = 0.01);
    assert_abs_diff_eq!(v, 0.04, epsilon = 0.005);
    // Stick 1 carries one customer: Beta(2, 1).
    let (m2, v2) = mean_var(&second);
    assert_abs_diff_eq!(m2, 2.0 / 3.0, epsilon = 0.01);
    let cov = first.iter().zip(&second).map(|(a, b)| (a - m) * (b - m2)).sum::<f64>() / (first.len() as f64 - 1.0);
    assert_abs_diff_eq!(cov / (v * v2).sqrt(), 0.0, epsilon = 0.03);
}

#[test]
fn gamma_update_keeps_slices_valid() {
    let streams = StreamFactory::new(2);
    let mut g = group(vec![0.5; 4], vec![0; 4], vec![0, 1, 3, 3], vec![0.3, 0.2, 0.05, 0.01], vec![0.01; 4]);
    for it in 1..=500 {
        update_gamma_sticks(&mut g, 1.0, &streams, it, 0).unwrap();
        let w = g.sticks.weights();
        for (&t, &u) in g.table_of_customer.iter().zip(&g.u) {
            assert!(u > 0.0 && u <= w[t]);
        }
    }
}

fn chain_with_dishes(dishes: Vec<usize>, k_cap: usize) -> ChainState<MultinomialAtom> {
    let n = dishes.len();
    ChainState {
        beta_sticks: StickVector::new(vec![0.5; k_cap]).unwrap(),
        groups: vec![group(vec![0.5; n], dishes, vec![0], vec![0.1], vec![0.01; n])],
        atoms: vec![MultinomialAtom { probs: vec![1.0] }; k_cap],
    }
}

#[test]
fn beta_stick_counts_every_tracked_table() {
    let streams = StreamFactory::new(3);
    let mut state = chain_with_dishes(vec![0; 5], 3);
    let mut draws = Vec::new();
    for it in 1..=10_000 {
        update_beta_sticks(&mut state, 3.0, &streams, it).unwrap();
        draws.push(state.beta_sticks.raw()[0]);
    }
    // Beta(6, 3).
    let (m, v) = mean_var(&draws);
    assert_abs_diff_eq!(m, 6.0 / 9.0, epsilon = 0.01);
    assert_abs_diff_eq!(v, 18.0 / (81.0 * 10.0), epsilon = 0.003);
}

#[test]
fn beta_stick_for_second_dish() {
    let streams = StreamFactory::new(4);
    let mut state = chain_with_dishes(vec![0, 1, 1], 3);
    let mut second = Vec::new();
    let mut third = Vec::new();
    for it in 1..=10_000 {
        update_beta_sticks(&mut state, 3.0, &streams, it).unwrap();
        second.push(state.beta_sticks.raw()[1]);
        third.push(state.beta_sticks.raw()[2]);
    }
    assert_abs_diff_eq!(mean_var(&second).0, 0.5, epsilon = 0.01);
    // Nothing at or above dish 2: the prior Beta(1, 3).
    assert_abs_diff_eq!(mean_var(&third).0, 0.25, epsilon = 0.01);
}

#[test]
fn table_bound_examples() {
    let g = group(vec![0.5, 0.5, 0.5], vec![0; 3], vec![0], vec![0.2], vec![0.01; 3]);
    assert_eq!(compute_t(&g).unwrap(), (vec![1], 1));

    let boundary = group(vec![0.5, 0.5, 0.5], vec![0; 3], vec![2], vec![0.125], vec![0.01; 3]);
    assert_eq!(compute_t(&boundary).unwrap().0, vec![2]);

    // Weights (0.1, 0.81): the first table is inadmissible, the second is not.
    let non_monotone = group(vec![0.1, 0.9], vec![0; 2], vec![1], vec![0.5], vec![0.01; 2]);
    assert_eq!(compute_t(&non_monotone).unwrap(), (vec![1], 1));

    let several = group(vec![0.5, 0.5, 0.5], vec![0; 3], vec![0, 1, 0], vec![0.4, 0.1, 0.3], vec![0.01; 3]);
    assert_eq!(compute_t(&several).unwrap(), (vec![0, 2, 0], 2));
}

#[test]
fn empty_table_slice_set_is_an_invariant_error() {
    let g = group(vec![0.5], vec![0], vec![0], vec![0.9], vec![0.01]);
    assert!(matches!(compute_t(&g), Err(hdp_slice::Error::Invariant(_))));
}

#[test]
fn dish_bounds_and_guard() {
    let mut state = chain_with_dishes(vec![0, 1, 2], 3);
    state.groups[0].v = vec![0.4, 0.2, 0.1];
    // beta = (0.5, 0.25, 0.125), tail 0.125.
    assert_eq!(compute_k(&state).unwrap(), vec![vec![0, 1, 2]]);
    let guard = dish_guard(&state);
    assert_eq!(guard.tail, 0.125);
    assert_eq!(guard.min_slice, 0.1);
    assert!(!guard.passed());
}

#[test]
fn guard_passes_when_tail_is_far_below_the_slices() {
    let raw = vec![1.0 - 1e-3, 1.0 - 1e-3, 1.0 - 1e-3];
    let g = group(raw, vec![0; 3], vec![0], vec![0.01], vec![0.01; 3]);
    let guard = table_guard(&g);
    assert!(guard.tail < 1e-8);
    assert!(guard.passed());
}

#[test]
fn cap_growth_factor() {
    let hp = Hyperparams::default();
    assert_eq!(hp.grown_cap(10), 15);
    assert_eq!(hp.grown_cap(15), 23);
    assert_eq!(hp.grown_cap(1), 2);
}

/// Two tables serving two dishes whose atoms give word 0 the stated probabilities.
fn two_table_group(p0: f64, p1: f64) -> (GroupState, Vec<MultinomialAtom>) {
    let g = group(vec![0.4, 0.9], vec![0, 1], vec![0], vec![0.001], vec![0.001; 2]);
    let atoms = vec![MultinomialAtom { probs: vec![p0, 1.0 - p0] }, MultinomialAtom { probs: vec![p1, 1.0 - p1] }];
    (g, atoms)
}

fn table_frequency(p0: f64, p1: f64) -> f64 {
    let kernel = MultinomialKernel::symmetric(2).unwrap();
    let streams = StreamFactory::new(5);
    let (g, atoms) = two_table_group(p0, p1);
    let n = 10_000;
    let hits = (1..=n)
        .filter(|&it| {
            let mut g = g.clone();
            update_t(&mut g, &[0], &atoms, &[1], &kernel, &streams, it, 0).unwrap();
            g.table_of_customer[0] == 0
        })
        .count();
    hits as f64 / n as f64
}

#[test]
fn table_draw_follows_likelihoods() {
    assert_abs_diff_eq!(table_frequency(0.5, 0.5), 0.5, epsilon = 0.01);
    assert_abs_diff_eq!(table_frequency(0.75, 0.25), 0.75, epsilon = 0.01);
}

#[test]
fn singleton_table_support() {
    let kernel = MultinomialKernel::symmetric(2).unwrap();
    let streams = StreamFactory::new(6);
    let (mut g, atoms) = two_table_group(0.01, 0.99);
    for it in 1..=100 {
        update_t(&mut g, &[0], &atoms, &[0], &kernel, &streams, it, 0).unwrap();
        assert_eq!(g.table_of_customer, vec![0]);
        assert!(g.u[0] <= g.sticks.weights()[0]);
    }
}

#[test]
fn vacant_table_dish_is_uniform() {
    let kernel = MultinomialKernel::symmetric(2).unwrap();
    let streams = StreamFactory::new(7);
    let beta = StickVector::new(vec![0.2, 0.25, 1.0 / 3.0, 0.5]).unwrap();
    // Weights are all 0.2.
    let atoms = vec![MultinomialAtom { probs: vec![0.5, 0.5] }; 4];
    let base = group(vec![0.5, 0.5], vec![0, 0], vec![0], vec![0.1], vec![0.05, 0.05]);
    let mut counts = [0usize; 4];
    let n = 10_000;
    for it in 1..=n {
        let mut g = base.clone();
        update_k(&mut g, &[0], &atoms, &beta, &[0, 3], &kernel, &streams, it, 0).unwrap();
        counts[g.dish_of_table[1]] += 1;
        assert_eq!(g.dish_of_table[0], 0);
    }
    for c in counts {
        assert_abs_diff_eq!(c as f64 / n as f64, 0.25, epsilon = 0.01);
    }
}

#[test]
fn occupied_table_dish_follows_likelihoods() {
    let kernel = MultinomialKernel::symmetric(2).unwrap();
    let streams = StreamFactory::new(8);
    let beta = StickVector::new(vec![0.5, 0.5]).unwrap();
    let atoms = vec![MultinomialAtom { probs: vec![0.7, 0.3] }, MultinomialAtom { probs: vec![0.3, 0.7] }];
    let base = group(vec![0.5], vec![0], vec![0], vec![0.1], vec![0.1]);
    let n = 10_000;
    let first = (1..=n)
        .filter(|&it| {
            let mut g = base.clone();
            update_k(&mut g, &[0], &atoms, &beta, &[1], &kernel, &streams, it, 0).unwrap();
            assert!(g.v[0] <= beta.weights()[g.dish_of_table[0]]);
            g.dish_of_table[0] == 0
        })
        .count();
    assert_abs_diff_eq!(first as f64 / n as f64, 0.7, epsilon = 0.01);
}

#[test]
fn categorical_rejects_all_impossible() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let r = sample_log_categorical(&[(0, f64::NEG_INFINITY), (1, f64::NEG_INFINITY)], &mut rng);
    assert!(matches!(r, Err(hdp_slice::Error::Numerical { .. })));
    assert_eq!(sample_log_categorical(&[(4, -1e6)], &mut rng).unwrap(), 4);
    // Extreme but finite log weights do not underflow to an empty draw.
    assert_eq!(sample_log_categorical(&[(0, -2000.0), (1, -1e9)], &mut rng).unwrap(), 0);
}

#[test]
fn atom_with_all_data_uses_all_points() {
    let kernel = GaussianKernel::new(1, 1.0, 1.0).unwrap();
    let ys = vec![vec![1.0], vec![2.0], vec![3.0], vec![6.0]];
    let data = GroupedDataset::new(vec![ys.clone()]).unwrap();
    let mut state = ChainState {
        beta_sticks: StickVector::new(vec![0.5, 0.5]).unwrap(),
        groups: vec![group(vec![0.5, 0.5], vec![0, 1], vec![0; 4], vec![0.1; 4], vec![0.1; 2])],
        atoms: vec![GaussianAtom { mean: vec![0.0] }; 2],
    };
    let refs: Vec<&Vec<f64>> = ys.iter().collect();
    let (mu, precision) = gaussian_posterior_params(&refs, 1, 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(mu[0], 2.4, epsilon = 1e-12);
    let streams = StreamFactory::new(9);
    let (mut full, mut empty) = (Vec::new(), Vec::new());
    for it in 1..=20_000 {
        update_atoms(&mut state, &kernel, &data, &streams, it, &Workers::sequential()).unwrap();
        full.push(state.atoms[0].mean[0]);
        empty.push(state.atoms[1].mean[0]);
    }
    let (m, v) = mean_var(&full);
    assert_abs_diff_eq!(m, mu[0], epsilon = 0.01);
    assert_abs_diff_eq!(v, 1.0 / precision, epsilon = 0.01);
    // The vacant dish is redrawn from the prior N(0, 1).
    let (m, v) = mean_var(&empty);
    assert_abs_diff_eq!(m, 0.0, epsilon = 0.03);
    assert_abs_diff_eq!(v, 1.0, epsilon = 0.03);
}

#[test]
fn atom_updates_do_not_depend_on_worker_count() {
    let kernel = MultinomialKernel::symmetric(3).unwrap();
    let data = GroupedDataset::new(vec![vec![0, 1, 2, 2], vec![1, 1]]).unwrap();
    let make = || ChainState {
        beta_sticks: StickVector::new(vec![0.5; 6]).unwrap(),
        groups: vec![
            group(vec![0.5; 2], vec![0, 3], vec![0, 0, 1, 1], vec![0.1; 4], vec![0.01; 2]),
            group(vec![0.5; 2], vec![5, 0], vec![0, 1], vec![0.1; 2], vec![0.01; 2]),
        ],
        atoms: vec![kernel.sample_atom_prior(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1)); 6],
    };
    let streams = StreamFactory::new(10);
    let mut a = make();
    let mut b = make();
    update_atoms(&mut a, &kernel, &data, &streams, 3, &Workers::sequential()).unwrap();
    update_atoms(&mut b, &kernel, &data, &streams, 3, &Workers::new(4).unwrap()).unwrap();
    assert_eq!(a.atoms, b.atoms);
}
