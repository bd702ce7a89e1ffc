//! Browser bindings for a few sampler operations. Each exported function is
//! a thin wrapper over a plain Rust function that is tested natively.

use hdp_slice::generator::{generate_labels, generate_observations};
use hdp_slice::metrics::aggregate_labels;
use hdp_slice::rng::{Phase, StreamFactory};
use hdp_slice::stick::{map_f, tail_p};
use hdp_slice::{Hyperparams, MultinomialKernel, Sampler};
use wasm_bindgen::prelude::*;

/// Weights followed by tails: `[F_1..F_n, P_1..P_n]`.
pub fn stick_breaking(raw: &[f64]) -> hdp_slice::Result<Vec<f64>> {
    let mut out = map_f(raw)?;
    out.extend(tail_p(raw)?);
    Ok(out)
}

/// Customers per dish of one draw from the Chinese restaurant franchise,
/// largest first.
pub fn crf_dish_sizes(gamma0: f64, alpha0: f64, groups: usize, size: usize, seed: u64) -> hdp_slice::Result<Vec<u32>> {
    let mut rng = StreamFactory::new(seed).stream(0, Phase::Generate, 0, 0);
    let truth = generate_labels(gamma0, alpha0, &vec![size; groups], &mut rng)?;
    let mut sizes: Vec<u32> = truth.dish_sizes.iter().filter(|&&n| n > 0).map(|&n| n as u32).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(sizes)
}

/// Generate a token corpus and fit it. Returns `[nmi, active dishes,
/// log joint]` for every iteration, flattened.
pub fn synthetic_fit(
    groups: usize,
    size: usize,
    vocab: usize,
    iterations: u64,
    seed: u64,
) -> hdp_slice::Result<Vec<f64>> {
    let kernel = MultinomialKernel::symmetric(vocab)?;
    let mut rng = StreamFactory::new(seed).stream(0, Phase::Generate, 0, 0);
    let truth = generate_labels(3.0, 1.0, &vec![size; groups], &mut rng)?;
    let (_, data) = generate_observations(&truth, &kernel, &mut rng)?;
    let hp = Hyperparams { seed, max_iterations: iterations, ..Default::default() };
    hp.validate()?;
    let mut sampler = Sampler::new(&kernel, &data, hp)?.with_truth(aggregate_labels(&truth.labels))?;
    let trace = sampler.run(iterations)?;
    Ok(trace.iter().flat_map(|r| [r.nmi.unwrap_or(f64::NAN), r.active_dishes as f64, r.log_joint]).collect())
}

fn js(e: hdp_slice::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = stickBreaking)]
pub fn stick_breaking_js(raw: &[f64]) -> Result<Vec<f64>, JsError> {
    stick_breaking(raw).map_err(js)
}

#[wasm_bindgen(js_name = crfDishSizes)]
pub fn crf_dish_sizes_js(gamma0: f64, alpha0: f64, groups: usize, size: usize, seed: u32) -> Result<Vec<u32>, JsError> {
    crf_dish_sizes(gamma0, alpha0, groups, size, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = syntheticFit)]
pub fn synthetic_fit_js(
    groups: usize,
    size: usize,
    vocab: usize,
    iterations: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    synthetic_fit(groups, size, vocab, iterations.into(), seed.into()).map_err(js)
}
