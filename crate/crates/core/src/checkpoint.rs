//! Line-oriented text checkpoints of a wrapped model.
//!
//! ```text
//! fracpinn-checkpoint 1
//! seed 7
//! wrapper spatial_ball
//! sizes 3 128 128 128 1
//! config training.epochs=1000
//! params 33665
//! 0.0123...
//! ...
//! end
//! ```
//!
//! Parameters are written with Rust's shortest round-trip formatting, so a
//! decode of an encode is bit-identical.

use std::fmt::Write;

use thiserror::Error;

use crate::network::{Mlp, Model, Wrapper};

pub const MAGIC: &str = "fracpinn-checkpoint";
pub const VERSION: u32 = 1;
/// Upper bound on the parameter count a decoder accepts.
pub const MAX_PARAMS: usize = 1 << 26;
const MAX_LAYERS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("checkpoint line {line}: {msg}")]
pub struct CheckpointError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub model: Model,
    /// Resolved configuration echoed as `key=value` pairs.
    pub config: Vec<(String, String)>,
}

pub fn encode(ck: &Checkpoint) -> String {
    let mut s = String::new();
    let sizes: Vec<String> = ck.model.mlp.sizes().iter().map(|v| v.to_string()).collect();
    writeln!(s, "{MAGIC} {VERSION}").unwrap();
    writeln!(s, "seed {}", ck.seed).unwrap();
    writeln!(s, "wrapper {}", ck.model.wrapper.name()).unwrap();
    writeln!(s, "sizes {}", sizes.join(" ")).unwrap();
    for (k, v) in &ck.config {
        writeln!(s, "config {k}={v}").unwrap();
    }
    writeln!(s, "params {}", ck.model.mlp.n_params()).unwrap();
    for p in ck.model.mlp.params() {
        writeln!(s, "{p:?}").unwrap();
    }
    s.push_str("end\n");
    s
}

pub fn decode(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut last = 0;
    let mut next = |what: &str| -> Result<(usize, &str), CheckpointError> {
        let r = lines.next().ok_or_else(|| CheckpointError {
            line: last + 1,
            msg: format!("unexpected end of input, expected {what}"),
        });
        if let Ok((n, _)) = r {
            last = n;
        }
        r
    };
    let err = |line: usize, msg: String| CheckpointError { line, msg };

    let (n, header) = next("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| err(n, format!("expected header '{MAGIC} <version>'")))?;
    if version.parse::<u32>().ok() != Some(VERSION) {
        return Err(err(n, format!("unsupported version '{version}', expected {VERSION}")));
    }

    let (n, l) = next("seed")?;
    let seed = field(l, "seed")
        .and_then(|v| v.parse::<u64>().ok())
        .ok_or_else(|| err(n, "expected 'seed <u64>'".into()))?;

    let (n, l) = next("wrapper")?;
    let wrapper = field(l, "wrapper")
        .and_then(Wrapper::from_name)
        .ok_or_else(|| err(n, "expected 'wrapper none|spatial_ball|spacetime_ball'".into()))?;

    let (n, l) = next("sizes")?;
    let sizes_txt = field(l, "sizes").ok_or_else(|| err(n, "expected 'sizes <n>...'".into()))?;
    let mut sizes = Vec::new();
    for tok in sizes_txt.split_whitespace() {
        let v: usize = tok.parse().map_err(|_| err(n, format!("bad layer size '{tok}'")))?;
        if v == 0 {
            return Err(err(n, "layer size 0".into()));
        }
        sizes.push(v);
        if sizes.len() > MAX_LAYERS {
            return Err(err(n, format!("more than {MAX_LAYERS} layers")));
        }
    }
    if sizes.len() < 2 {
        return Err(err(n, "need at least two layer sizes".into()));
    }
    let expected = checked_param_count(&sizes).ok_or_else(|| err(n, format!("more than {MAX_PARAMS} parameters")))?;

    let mut config = Vec::new();
    let (mut n, mut l) = next("params")?;
    while let Some(kv) = field(l, "config") {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(n, "expected 'config key=value'".into()))?;
        if k.is_empty() {
            return Err(err(n, "empty config key".into()));
        }
        config.push((k.to_string(), v.to_string()));
        (n, l) = next("params")?;
    }
    let count: usize = field(l, "params")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err(n, "expected 'params <count>'".into()))?;
    if count != expected {
        return Err(err(n, format!("params {count} does not match sizes ({expected})")));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = next("parameter value")?;
        let v: f64 = l.trim().parse().map_err(|_| err(n, format!("bad parameter '{l}'")))?;
        if !v.is_finite() {
            return Err(err(n, format!("non-finite parameter '{l}'")));
        }
        params.push(v);
    }
    let (n, l) = next("end")?;
    if l != "end" {
        return Err(err(n, format!("expected 'end', got '{l}'")));
    }
    if let Some((n, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(n, format!("trailing content '{l}'")));
    }
    let mlp = Mlp::from_params(&sizes, params).map_err(|e| err(n, e.to_string()))?;
    let model = Model::new(mlp, wrapper).map_err(|e| err(n, e.to_string()))?;
    Ok(Checkpoint { seed, model, config })
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.strip_prefix(key)?.strip_prefix(' ')
}

fn checked_param_count(sizes: &[usize]) -> Option<usize> {
    let mut total = 0usize;
    for w in sizes.windows(2) {
        total = total.checked_add(w[0].checked_mul(w[1])?.checked_add(w[1])?)?;
    }
    (total <= MAX_PARAMS).then_some(total)
}
