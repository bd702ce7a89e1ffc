use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hdp_slice::generator::{generate_labels, generate_observations};
use hdp_slice::io::{
    format_checkpoint, format_labels, format_tokens, format_trace_row, format_vectors, parse_checkpoint, parse_dataset,
    parse_labels, Checkpoint, Dataset, TRACE_HEADER,
};
use hdp_slice::metrics::{aggregate_labels, majority_vote, nmi};
use hdp_slice::rng::{Phase, StreamFactory};
use hdp_slice::{EmissionKernel, GaussianKernel, GroupedDataset, Hyperparams, MultinomialKernel, Sampler, Workers};

use crate::error::CliError;
use crate::settings::{required, EvalSettings, FitSettings, GenerateSettings, KernelKind};

fn read(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {what} {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn multinomial(vocab: usize, alpha_w: Option<f64>) -> Result<MultinomialKernel, CliError> {
    Ok(match alpha_w {
        Some(a) => MultinomialKernel::new(vec![a; vocab])?,
        None => MultinomialKernel::symmetric(vocab)?,
    })
}

fn gaussian(dim: usize, tau_phi2: Option<f64>, tau_y2: Option<f64>) -> Result<GaussianKernel, CliError> {
    Ok(GaussianKernel::new(dim, tau_phi2.unwrap_or(1.0), tau_y2.unwrap_or(1.0))?)
}

pub fn generate(s: GenerateSettings) -> Result<(), CliError> {
    let seed = required(s.seed, "seed")?;
    let groups = required(s.groups, "groups")?;
    let size = required(s.size, "size")?;
    let dataset_path = required(s.dataset.as_deref(), "dataset")?;
    if groups == 0 || size == 0 {
        return Err(CliError::config("--groups and --size must be at least 1"));
    }
    let gamma0 = s.gamma0.unwrap_or(3.0);
    let alpha0 = s.alpha0.unwrap_or(1.0);
    let mut rng = StreamFactory::new(seed).stream(0, Phase::Generate, 0, 0);
    let truth = generate_labels(gamma0, alpha0, &vec![size; groups], &mut rng)?;
    let text = match s.kernel.unwrap_or(KernelKind::Multinomial) {
        KernelKind::Multinomial => {
            let vocab = required(s.vocab, "vocab")?;
            let kernel = multinomial(vocab, s.alpha_w)?;
            let (_, data) = generate_observations(&truth, &kernel, &mut rng)?;
            format_tokens(vocab, &data)
        }
        KernelKind::Gaussian => {
            let dim = required(s.dim, "dim")?;
            let kernel = gaussian(dim, s.tau_phi2, s.tau_y2)?;
            let (_, data) = generate_observations(&truth, &kernel, &mut rng)?;
            format_vectors(dim, &data)
        }
    };
    write(dataset_path, &text)?;
    if let Some(path) = &s.truth {
        write(path, &format_labels(&truth.labels))?;
    }
    println!("dishes: {}", truth.num_dishes());
    Ok(())
}

fn read_truth(path: &Path, sizes: &[usize]) -> Result<Vec<usize>, CliError> {
    let labels = parse_labels(&read(path, "truth")?)?;
    let got: Vec<usize> = labels.iter().map(Vec::len).collect();
    if got != sizes {
        return Err(CliError::data(format!("truth {} has group sizes {got:?}, dataset has {sizes:?}", path.display())));
    }
    Ok(aggregate_labels(&labels))
}

/// Explicitly set hyperparameters replace those of `hp`.
fn apply(mut hp: Hyperparams, s: &FitSettings, seed: u64) -> Hyperparams {
    hp.seed = seed;
    hp.gamma0 = s.gamma0.unwrap_or(hp.gamma0);
    hp.alpha0 = s.alpha0.unwrap_or(hp.alpha0);
    hp.initial_t_cap = s.initial_t_cap.unwrap_or(hp.initial_t_cap);
    hp.initial_k_cap = s.initial_k_cap.unwrap_or(hp.initial_k_cap);
    hp.growth_factor = s.growth_factor.unwrap_or(hp.growth_factor);
    hp.max_restarts = s.max_restarts.unwrap_or(hp.max_restarts);
    hp.max_iterations = s.max_iterations.unwrap_or(hp.max_iterations);
    hp
}

pub fn fit(s: FitSettings) -> Result<(), CliError> {
    let seed = required(s.seed, "seed")?;
    let dataset_path = required(s.dataset.as_deref(), "dataset")?;
    if s.dump_every.is_some() != s.dump_dir.is_some() {
        return Err(CliError::config("--dump-every and --dump-dir go together"));
    }
    if s.checkpoint_every.is_some() && s.checkpoint.is_none() {
        return Err(CliError::config("--checkpoint-every needs --checkpoint"));
    }
    if s.dump_every == Some(0) || s.checkpoint_every == Some(0) {
        return Err(CliError::config("dump and checkpoint intervals must be at least 1"));
    }
    let dataset = parse_dataset(&read(dataset_path, "dataset")?)?;
    let truth = s.truth.as_deref().map(|p| read_truth(p, &dataset.sizes())).transpose()?;
    match dataset {
        Dataset::Tokens { vocab, data } => {
            if s.kernel == Some(KernelKind::Gaussian) {
                return Err(CliError::config("--kernel gaussian needs a vectors dataset"));
            }
            if s.tau_phi2.is_some() || s.tau_y2.is_some() {
                return Err(CliError::config("gaussian settings given for a token dataset"));
            }
            let kernel = multinomial(vocab, s.alpha_w)?;
            fit_chain(&kernel, KernelKind::Multinomial, &data, &s, seed, truth)
        }
        Dataset::Vectors { dim, data } => {
            if s.kernel == Some(KernelKind::Multinomial) {
                return Err(CliError::config("--kernel multinomial needs a token dataset"));
            }
            if s.alpha_w.is_some() {
                return Err(CliError::config("--alpha-w given for a vectors dataset"));
            }
            let kernel = gaussian(dim, s.tau_phi2, s.tau_y2)?;
            fit_chain(&kernel, KernelKind::Gaussian, &data, &s, seed, truth)
        }
    }
}

fn fit_chain<K: EmissionKernel>(
    kernel: &K,
    kind: KernelKind,
    data: &GroupedDataset<K::Obs>,
    s: &FitSettings,
    seed: u64,
    truth: Option<Vec<usize>>,
) -> Result<(), CliError> {
    let workers = Workers::new(s.workers.unwrap_or(1))?;
    let (mut sampler, hp) = match &s.resume {
        None => {
            let hp = apply(Hyperparams::default(), s, seed);
            hp.validate()?;
            (Sampler::new(kernel, data, hp.clone())?, hp)
        }
        Some(path) => {
            let ck: Checkpoint<K::Atom> = parse_checkpoint(&read(path, "checkpoint")?)?;
            if ck.kernel != kind.name() {
                return Err(CliError::config(format!("checkpoint holds a {} chain", ck.kernel)));
            }
            if ck.hyperparams.seed != seed {
                return Err(CliError::config(format!("checkpoint was run with seed {}", ck.hyperparams.seed)));
            }
            let hp = apply(ck.hyperparams.clone(), s, seed);
            if (Hyperparams { max_iterations: ck.hyperparams.max_iterations, ..hp.clone() }) != ck.hyperparams {
                return Err(CliError::config("hyperparameters conflict with the checkpoint"));
            }
            hp.validate()?;
            (Sampler::resume(kernel, data, hp.clone(), ck.state, ck.iteration)?, hp)
        }
    };
    if let Some(t) = truth {
        sampler = sampler.with_truth(t)?;
    }
    sampler = sampler.with_workers(workers);

    let mut trace = s.trace.as_deref().map(create).transpose()?;
    let trace_error = |e: std::io::Error| CliError::config(format!("cannot write trace: {e}"));
    if let Some(w) = trace.as_mut() {
        writeln!(w, "{TRACE_HEADER}").map_err(trace_error)?;
    }
    if let Some(dir) = &s.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    }

    let remaining = hp.max_iterations.saturating_sub(sampler.iteration());
    let mut side_error = None;
    let result = sampler.run_with(remaining, |smp, report| {
        let mut step = || -> Result<(), CliError> {
            let it = smp.iteration();
            if let Some(w) = trace.as_mut() {
                writeln!(w, "{}", format_trace_row(&report.record)).map_err(trace_error)?;
            }
            if let (Some(every), Some(dir)) = (s.dump_every, &s.dump_dir) {
                if it % every == 0 {
                    write(&dir.join(format!("labels_{it:06}.txt")), &format_labels(&smp.labels()))?;
                }
            }
            if let (Some(every), Some(path)) = (s.checkpoint_every, &s.checkpoint) {
                if it % every == 0 {
                    save_checkpoint(path, kind, smp)?;
                }
            }
            Ok(())
        };
        step().map_err(|e| {
            let msg = e.to_string();
            side_error = Some(e);
            hdp_slice::Error::Invariant(msg)
        })
    });
    if let Some(e) = side_error {
        return Err(e);
    }
    let records = result?;
    if let Some(mut w) = trace {
        w.flush().map_err(trace_error)?;
    }
    if let Some(path) = &s.labels {
        write(path, &format_labels(&sampler.labels()))?;
    }
    if let Some(path) = &s.checkpoint {
        save_checkpoint(path, kind, &sampler)?;
    }

    println!("iterations: {}", sampler.iteration());
    if let Some(last) = records.last() {
        println!("active dishes: {}", last.active_dishes);
        if let Some(x) = last.nmi {
            println!("nmi: {x:.6}");
        }
    }
    Ok(())
}

fn save_checkpoint<K: EmissionKernel>(path: &Path, kind: KernelKind, s: &Sampler<'_, K>) -> Result<(), CliError> {
    let ck = Checkpoint::new(kind.name(), s.iteration(), s.hyperparams().clone(), s.state().clone());
    write(path, &format_checkpoint(&ck)?)
}

pub fn eval(s: EvalSettings) -> Result<(), CliError> {
    let labels_path = required(s.labels.as_deref(), "labels")?;
    let truth_path = required(s.truth.as_deref(), "truth")?;
    if s.doc_truth.is_some() && !s.majority_vote {
        return Err(CliError::config("--doc-truth needs --majority-vote"));
    }
    let labels = parse_labels(&read(labels_path, "labels")?)?;
    let truth = parse_labels(&read(truth_path, "truth")?)?;
    let shape = |l: &[Vec<usize>]| l.iter().map(Vec::len).collect::<Vec<_>>();
    if shape(&labels) != shape(&truth) {
        return Err(CliError::data("labels and truth have different group sizes"));
    }
    println!("nmi: {:.6}", nmi(&aggregate_labels(&labels), &aggregate_labels(&truth))?);
    if s.majority_vote {
        let docs = majority_vote(&labels)?;
        let doc_truth = match &s.doc_truth {
            Some(path) => aggregate_labels(&parse_labels(&read(path, "document truth")?)?),
            None => majority_vote(&truth)?,
        };
        if doc_truth.len() != docs.len() {
            return Err(CliError::data(format!(
                "document truth has {} labels for {} groups",
                doc_truth.len(),
                docs.len()
            )));
        }
        println!("document nmi: {:.6}", nmi(&docs, &doc_truth)?);
    }
    Ok(())
}
