//! File formats: datasets, label files, trace rows and checkpoints.
//!
//! Dataset files start with a header naming the mode:
//!
//! ```text
//! tokens W=<int> J=<int>      one line per group, 1-based token ids
//! bow W=<int> J=<int>         one line per group, `word:count` pairs
//! vectors d=<int> J=<int>     one line per observation: <group> v1 .. vd
//! ```
//!
//! Label files hold one line per group of 1-based integers. Ids are 0-based
//! in memory.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::TraceRecord;
use crate::state::{ChainState, GroupedDataset, Hyperparams};

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Tokens { vocab: usize, data: GroupedDataset<usize> },
    Vectors { dim: usize, data: GroupedDataset<Vec<f64>> },
}

impl Dataset {
    pub fn num_groups(&self) -> usize {
        match self {
            Dataset::Tokens { data, .. } => data.num_groups(),
            Dataset::Vectors { data, .. } => data.num_groups(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        match self {
            Dataset::Tokens { data, .. } => data.sizes(),
            Dataset::Vectors { data, .. } => data.sizes(),
        }
    }
}

fn header_field(tok: Option<&str>, key: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::format(format!("header: missing {key}=<int>")))?;
    let value = tok
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::format(format!("header: expected {key}=<int>, found `{tok}`")))?;
    let n: usize =
        value.parse().map_err(|_| Error::format(format!("header: `{value}` is not a nonnegative integer")))?;
    if n == 0 {
        return Err(Error::format(format!("header: {key} must be positive")));
    }
    Ok(n)
}

fn one_based(tok: &str, line: usize, limit: Option<usize>) -> Result<usize> {
    let v: usize = tok.parse().map_err(|_| Error::format(format!("line {line}: `{tok}` is not a positive integer")))?;
    if v == 0 || limit.is_some_and(|l| v > l) {
        return Err(Error::format(format!(
            "line {line}: id {v} outside 1..={}",
            limit.map_or("inf".to_string(), |l| l.to_string())
        )));
    }
    Ok(v - 1)
}

/// Parse a dataset file.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.by_ref().find(|(_, l)| !l.is_empty()).ok_or_else(|| Error::format("empty dataset file"))?;
    let mut fields = header.split_whitespace();
    let mode = fields.next().unwrap_or_default();
    match mode {
        "tokens" | "bow" => {
            let vocab = header_field(fields.next(), "W")?;
            let groups_n = header_field(fields.next(), "J")?;
            let mut groups = Vec::with_capacity(groups_n);
            for (no, line) in lines {
                if line.is_empty() {
                    continue;
                }
                let mut tokens = Vec::new();
                for tok in line.split_whitespace() {
                    if mode == "tokens" {
                        tokens.push(one_based(tok, no, Some(vocab))?);
                    } else {
                        let (w, c) = tok
                            .split_once(':')
                            .ok_or_else(|| Error::format(format!("line {no}: expected word:count, found `{tok}`")))?;
                        let w = one_based(w, no, Some(vocab))?;
                        let c: usize = c.parse().map_err(|_| Error::format(format!("line {no}: bad count `{c}`")))?;
                        tokens.extend(std::iter::repeat_n(w, c));
                    }
                }
                if tokens.is_empty() {
                    return Err(Error::format(format!("line {no}: group has no tokens")));
                }
                groups.push(tokens);
            }
            if groups.len() != groups_n {
                return Err(Error::format(format!("header declares J={groups_n}, found {} groups", groups.len())));
            }
            Ok(Dataset::Tokens { vocab, data: GroupedDataset::new(groups)? })
        }
        "vectors" => {
            let dim = header_field(fields.next(), "d")?;
            let groups_n = header_field(fields.next(), "J")?;
            let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); groups_n];
            let mut current = 0usize;
            for (no, line) in lines {
                if line.is_empty() {
                    continue;
                }
                let mut toks = line.split_whitespace();
                let g = one_based(toks.next().unwrap_or_default(), no, Some(groups_n))?;
                if g < current {
                    return Err(Error::format(format!("line {no}: group ids must be ascending")));
                }
                current = g;
                let v = toks
                    .map(|t| {
                        t.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| Error::format(format!("line {no}: `{t}` is not a finite number")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if v.len() != dim {
                    return Err(Error::format(format!("line {no}: {} coordinates, expected {dim}", v.len())));
                }
                groups[g].push(v);
            }
            if let Some(j) = groups.iter().position(Vec::is_empty) {
                return Err(Error::format(format!("group {} has no observations", j + 1)));
            }
            Ok(Dataset::Vectors { dim, data: GroupedDataset::new(groups)? })
        }
        other => Err(Error::format(format!("unknown dataset mode `{other}`"))),
    }
}

pub fn format_tokens(vocab: usize, data: &GroupedDataset<usize>) -> String {
    let mut out = format!("tokens W={vocab} J={}\n", data.num_groups());
    out.push_str(&format_labels(data.groups()));
    out
}

pub fn format_vectors(dim: usize, data: &GroupedDataset<Vec<f64>>) -> String {
    let mut out = format!("vectors d={dim} J={}\n", data.num_groups());
    for (j, g) in data.groups().iter().enumerate() {
        for y in g {
            out.push_str(&(j + 1).to_string());
            for v in y {
                // shortest representation that round-trips
                write!(out, " {v:?}").expect("string write");
            }
            out.push('\n');
        }
    }
    out
}

pub fn format_dataset(ds: &Dataset) -> String {
    match ds {
        Dataset::Tokens { vocab, data } => format_tokens(*vocab, data),
        Dataset::Vectors { dim, data } => format_vectors(*dim, data),
    }
}

/// One line per group of 1-based labels.
pub fn format_labels<L: AsRef<[usize]>>(groups: &[L]) -> String {
    let mut out = String::new();
    for g in groups {
        let line: Vec<String> = g.as_ref().iter().map(|z| (z + 1).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.split_whitespace().map(|t| one_based(t, i + 1, None)).collect())
        .collect()
}

pub const TRACE_HEADER: &str = "iter,nmi,active_dishes,K,maxT,t_cap_max,k_cap,restarts,log_joint";

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, e) = sci.split_once('e').expect("exponent");
    let exp: i32 = e.parse().expect("exponent digits");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn format_trace_row(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.iter,
        r.nmi.map(format_sig6).unwrap_or_default(),
        r.active_dishes,
        r.k_max,
        r.max_t,
        r.t_cap_max,
        r.k_cap,
        r.restarts,
        format_sig6(r.log_joint)
    )
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format_trace_row(r));
        out.push('\n');
    }
    out
}

pub const CHECKPOINT_FORMAT: &str = "hdp-slice-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A resumable chain: state after `iteration` sweeps plus everything the
/// streams are keyed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<A> {
    pub format: String,
    pub version: u32,
    pub kernel: String,
    pub iteration: u64,
    pub hyperparams: Hyperparams,
    pub state: ChainState<A>,
}

impl<A> Checkpoint<A> {
    pub fn new(kernel: &str, iteration: u64, hyperparams: Hyperparams, state: ChainState<A>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kernel: kernel.into(),
            iteration,
            hyperparams,
            state,
        }
    }
}

pub fn format_checkpoint<A: Serialize>(c: &Checkpoint<A>) -> Result<String> {
    serde_json::to_string(c).map_err(|e| Error::format(e.to_string()))
}

pub fn parse_checkpoint<A: DeserializeOwned>(text: &str) -> Result<Checkpoint<A>> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_str(text).map_err(|e| Error::format(format!("checkpoint: {e}")))?;
    if h.format != CHECKPOINT_FORMAT {
        return Err(Error::format(format!("not a checkpoint (format `{}`)", h.format)));
    }
    if h.version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {}", h.version)));
    }
    serde_json::from_str(text).map_err(|e| Error::format(format!("checkpoint: {e}")))
}
