//! Sectioned `key = value` experiment configs and `--override` parsing.
//!
//! ```text
//! # comments start with '#'
//! [experiment]
//! kind = forward_fpoisson
//! dims = 2, 10
//! [operator]
//! alpha = 1.5
//! ```
//!
//! Every key is known in advance; anything else is rejected with the line
//! (or override) it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use fracpinn::operators::OperatorConfig;
use fracpinn::problems::ProblemKind;
use fracpinn::training::{EstimatorVariant, TrainConfig};

/// Where a raw value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(usize),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(i) => write!(f, "override #{}", i + 1),
            Origin::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: Origin,
    /// `section.key`, or empty for syntax errors.
    pub field: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}: {}", self.origin, self.msg)
        } else {
            write!(f, "{}: {}: {}", self.origin, self.field, self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Keys accepted per section.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "dims", "variants", "seeds", "out", "checkpoint"]),
    (
        "operator",
        &["alpha", "lambda_x", "gamma", "lambda_t", "c", "v", "r0", "epsilon", "n_radial", "n_time"],
    ),
    (
        "training",
        &["epochs", "lr0", "n_residual", "n_data", "w_initial", "w_residual", "w_data", "n_test", "hidden", "log_every"],
    ),
    ("problem", &["kind", "seed", "t_final", "forcing_samples"]),
    ("inverse", &["alpha_lo", "alpha_hi", "alpha_init", "lambda_init"]),
];

fn known(section: &str, key: &str) -> Result<(), String> {
    match SCHEMA.iter().find(|(s, _)| *s == section) {
        None => Err(format!(
            "unknown section [{section}] (expected one of {})",
            SCHEMA.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(", ")
        )),
        Some((_, keys)) if !keys.contains(&key) => Err(format!("unknown key (section [{section}] accepts {})", keys.join(", "))),
        Some(_) => Ok(()),
    }
}

/// Raw values keyed by `section.key`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, (String, Origin)>,
}

/// Parses the sectioned text format. Duplicate keys are errors.
pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let err = |field: &str, msg: String| ConfigError {
            origin,
            field: field.to_string(),
            msg,
        };
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("", format!("unterminated section header '{line}'")))?
                .trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                return Err(err("", known(name, "").unwrap_err()));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err("", format!("expected 'key = value', got '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let sec = section
            .as_deref()
            .ok_or_else(|| err(k, "key outside any [section]".into()))?;
        let field = format!("{sec}.{k}");
        known(sec, k).map_err(|m| err(&field, m))?;
        if let Some((_, prev)) = raw.entries.get(&field) {
            return Err(err(&field, format!("duplicate key (first set at {prev})")));
        }
        raw.entries.insert(field, (v.to_string(), origin));
    }
    Ok(raw)
}

/// Parses one `section.key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("override '{s}' is not of the form section.key=value"))?;
    let k = k.trim();
    let (sec, key) = k
        .split_once('.')
        .ok_or_else(|| format!("override key '{k}' is not of the form section.key"))?;
    known(sec, key).map_err(|m| format!("{k}: {m}"))?;
    Ok((k.to_string(), v.trim().to_string()))
}

impl RawConfig {
    /// Applies overrides in order; later ones win.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = parse_override(o).map_err(|msg| ConfigError {
                origin: Origin::Override(i),
                field: String::new(),
                msg,
            })?;
            self.entries.insert(k, (v, Origin::Override(i)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ForwardFpoisson,
    ForwardTfpoisson,
    ForwardTfdiffusion,
    InverseAlpha,
    InverseLambda,
    EstimatorUnitTest,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::ForwardFpoisson,
        ExperimentKind::ForwardTfpoisson,
        ExperimentKind::ForwardTfdiffusion,
        ExperimentKind::InverseAlpha,
        ExperimentKind::InverseLambda,
        ExperimentKind::EstimatorUnitTest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ForwardFpoisson => "forward_fpoisson",
            ExperimentKind::ForwardTfpoisson => "forward_tfpoisson",
            ExperimentKind::ForwardTfdiffusion => "forward_tfdiffusion",
            ExperimentKind::InverseAlpha => "inverse_alpha",
            ExperimentKind::InverseLambda => "inverse_lambda",
            ExperimentKind::EstimatorUnitTest => "estimator_unit_test",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn default_problem(&self) -> ProblemKind {
        match self {
            ExperimentKind::ForwardFpoisson | ExperimentKind::EstimatorUnitTest => ProblemKind::DydaCombined,
            ExperimentKind::ForwardTfpoisson | ExperimentKind::InverseAlpha | ExperimentKind::InverseLambda => ProblemKind::TwoBody,
            ExperimentKind::ForwardTfdiffusion => ProblemKind::TwoBodyTime,
        }
    }

    pub fn is_inverse(&self) -> bool {
        matches!(self, ExperimentKind::InverseAlpha | ExperimentKind::InverseLambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseConfig {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// `None` starts at the midpoint of the bounds.
    pub alpha_init: Option<f64>,
    pub lambda_init: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            alpha_lo: 0.01,
            alpha_hi: 1.99,
            alpha_init: None,
            lambda_init: 1.0,
        }
    }
}

/// A fully resolved and validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dims: Vec<usize>,
    pub variants: Vec<EstimatorVariant>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub checkpoint: bool,
    pub op: OperatorConfig,
    pub train: TrainConfig,
    /// Printed progress every this many epochs; 0 disables.
    pub log_every: usize,
    pub problem: ProblemKind,
    /// `None` uses the run seed.
    pub problem_seed: Option<u64>,
    pub t_final: f64,
    pub forcing_samples: usize,
    pub inverse: InverseConfig,
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl Reader<'_> {
    fn get(&self, field: &str) -> Option<(&str, Origin)> {
        self.raw.entries.get(field).map(|(v, o)| (v.as_str(), *o))
    }

    fn origin(&self, field: &str) -> Origin {
        self.get(field).map_or(Origin::Default, |(_, o)| o)
    }

    fn fail<T>(&self, field: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError {
            origin: self.origin(field),
            field: field.to_string(),
            msg: msg.into(),
        })
    }

    fn parse<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.get(field) {
            None => Ok(None),
            Some((v, _)) if v.is_empty() || v == "none" => Ok(None),
            Some((v, _)) => match v.parse::<T>() {
                Ok(x) => Ok(Some(x)),
                Err(_) => self.fail(field, format!("'{v}' is not {what}")),
            },
        }
    }

    fn real(&self, field: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.parse::<f64>(field, "a real number")?;
        match v {
            Some(x) if !x.is_finite() => self.fail(field, format!("{x} is not finite")),
            _ => Ok(v),
        }
    }

    fn count(&self, field: &str) -> Result<Option<usize>, ConfigError> {
        self.parse::<usize>(field, "a non-negative integer")
    }

    fn list<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some((v, _)) = self.get(field) else {
            return Ok(None);
        };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        let mut out = Vec::new();
        for tok in v.split(',').map(str::trim) {
            match tok.parse::<T>() {
                Ok(x) => out.push(x),
                Err(_) => return self.fail(field, format!("list item '{tok}' is not {what}")),
            }
        }
        Ok(Some(out))
    }
}

fn ensure(r: &Reader<'_>, ok: bool, field: &str, msg: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        r.fail(field, msg)
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut raw = parse_config(text)?;
        raw.apply_overrides(overrides)?;
        Self::from_raw(&raw)
    }

    /// Resolves defaults and validates every field before returning.
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let r = Reader { raw };
        let kind_txt = r.get("experiment.kind").map(|(v, _)| v);
        let kind = match kind_txt {
            None => return r.fail("experiment.kind", "missing (required)"),
            Some(v) => match ExperimentKind::from_name(v) {
                Some(k) => k,
                None => {
                    let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                    return r.fail("experiment.kind", format!("'{v}' is not one of {}", names.join(", ")));
                }
            },
        };
        let problem = match r.get("problem.kind") {
            None => kind.default_problem(),
            Some((v, _)) => match ProblemKind::from_name(v) {
                Some(p) => p,
                None => {
                    return r.fail(
                        "problem.kind",
                        format!("'{v}' is not one of dyda_combined, two_body, three_body, two_body_time"),
                    )
                }
            },
        };
        let dims = r.list::<usize>("experiment.dims", "a dimension")?.unwrap_or_else(|| vec![2]);
        ensure(&r, !dims.is_empty(), "experiment.dims", "needs at least one dimension")?;
        let min_d = match problem {
            ProblemKind::DydaCombined => 1,
            ProblemKind::TwoBody | ProblemKind::TwoBodyTime => 2,
            ProblemKind::ThreeBody => 3,
        };
        if let Some(&d) = dims.iter().find(|&&d| d < min_d) {
            return r.fail("experiment.dims", format!("dimension {d} is below the minimum {min_d} for {}", problem.name()));
        }
        let variants = match r.get("experiment.variants") {
            None => vec![EstimatorVariant::Quadrature],
            Some((v, _)) => {
                let mut out = Vec::new();
                for tok in v.split(',').map(str::trim) {
                    match EstimatorVariant::from_name(tok) {
                        Some(x) => out.push(x),
                        None => return r.fail("experiment.variants", format!("'{tok}' is not one of mc, quadrature, qmc")),
                    }
                }
                out
            }
        };
        let seeds = r.list::<u64>("experiment.seeds", "a seed")?.unwrap_or_else(|| vec![0]);
        ensure(&r, !seeds.is_empty(), "experiment.seeds", "needs at least one seed")?;
        let out = PathBuf::from(r.get("experiment.out").map_or("results", |(v, _)| v));
        let checkpoint = r.parse::<bool>("experiment.checkpoint", "true or false")?.unwrap_or(true);

        let def = OperatorConfig::default();
        let default_alpha = match kind {
            ExperimentKind::ForwardFpoisson | ExperimentKind::EstimatorUnitTest => 1.5,
            ExperimentKind::InverseAlpha => 0.6,
            _ => 0.5,
        };
        let default_lambda = match kind {
            ExperimentKind::ForwardFpoisson | ExperimentKind::EstimatorUnitTest => 0.0,
            ExperimentKind::InverseLambda => 2.0,
            _ => 1.0,
        };
        let op = OperatorConfig {
            alpha: r.real("operator.alpha")?.unwrap_or(default_alpha),
            lambda_x: r.real("operator.lambda_x")?.unwrap_or(default_lambda),
            gamma: match r.real("operator.gamma")? {
                Some(g) => Some(g),
                None if problem.has_time() => Some(0.5),
                None => None,
            },
            lambda_t: r.real("operator.lambda_t")?.unwrap_or(def.lambda_t),
            c: r.real("operator.c")?.unwrap_or(def.c),
            v: r.list::<f64>("operator.v", "a real number")?.unwrap_or_default(),
            r0: r.real("operator.r0")?,
            epsilon: r.real("operator.epsilon")?.unwrap_or(def.epsilon),
            n_radial: r.count("operator.n_radial")?.unwrap_or(def.n_radial),
            n_time: r.count("operator.n_time")?,
        };
        validate_operator(&r, &op, problem)?;
        if !op.v.is_empty() {
            if let Some(&d) = dims.iter().find(|&&d| d != op.v.len()) {
                return r.fail("operator.v", format!("has {} components but dims includes {d}", op.v.len()));
            }
        }

        let td = TrainConfig::default();
        let train = TrainConfig {
            epochs: r.count("training.epochs")?.unwrap_or(td.epochs),
            lr0: r.real("training.lr0")?.unwrap_or(td.lr0),
            n_residual: r.count("training.n_residual")?.unwrap_or(td.n_residual),
            n_data: r.count("training.n_data")?.unwrap_or(td.n_data),
            w_initial: r.real("training.w_initial")?.unwrap_or(td.w_initial),
            w_residual: r.real("training.w_residual")?.unwrap_or(td.w_residual),
            w_data: r.real("training.w_data")?.unwrap_or(td.w_data),
            variant: variants[0],
            seed: seeds[0],
            n_test: r.count("training.n_test")?.unwrap_or(td.n_test),
            hidden: r.list::<usize>("training.hidden", "a layer width")?.unwrap_or(td.hidden),
        };
        ensure(&r, train.epochs >= 1 || kind == ExperimentKind::EstimatorUnitTest, "training.epochs", "must be >= 1")?;
        ensure(&r, train.lr0 > 0.0, "training.lr0", format!("{} must be > 0", train.lr0))?;
        for (f, v) in [("w_initial", train.w_initial), ("w_residual", train.w_residual), ("w_data", train.w_data)] {
            ensure(&r, v >= 0.0, &format!("training.{f}"), format!("{v} must be >= 0"))?;
        }
        ensure(&r, train.n_residual >= 1, "training.n_residual", "must be >= 1")?;
        ensure(&r, train.n_test >= 1, "training.n_test", "must be >= 1")?;
        ensure(
            &r,
            !train.hidden.is_empty() && train.hidden.iter().all(|&h| h >= 1),
            "training.hidden",
            "needs one or more positive widths",
        )?;
        ensure(
            &r,
            !kind.is_inverse() || train.n_data >= 1,
            "training.n_data",
            "inverse experiments need n_data >= 1",
        )?;
        let log_every = r.count("training.log_every")?.unwrap_or(0);

        let problem_seed = r.parse::<u64>("problem.seed", "a seed")?;
        let t_final = r.real("problem.t_final")?.unwrap_or(1.0);
        ensure(&r, t_final > 0.0, "problem.t_final", format!("{t_final} must be > 0"))?;
        let forcing_samples = r.count("problem.forcing_samples")?.unwrap_or(fracpinn::problems::FORCING_SAMPLES);
        ensure(&r, forcing_samples >= 1, "problem.forcing_samples", "must be >= 1")?;

        let id = InverseConfig::default();
        let inverse = InverseConfig {
            alpha_lo: r.real("inverse.alpha_lo")?.unwrap_or(id.alpha_lo),
            alpha_hi: r.real("inverse.alpha_hi")?.unwrap_or(id.alpha_hi),
            alpha_init: r.real("inverse.alpha_init")?,
            lambda_init: r.real("inverse.lambda_init")?.unwrap_or(id.lambda_init),
        };
        ensure(
            &r,
            0.0 <= inverse.alpha_lo && inverse.alpha_lo < inverse.alpha_hi && inverse.alpha_hi < 2.0,
            "inverse.alpha_hi",
            format!("bounds ({}, {}) must satisfy 0 <= lo < hi < 2", inverse.alpha_lo, inverse.alpha_hi),
        )?;
        if let Some(a) = inverse.alpha_init {
            ensure(
                &r,
                inverse.alpha_lo < a && a < inverse.alpha_hi,
                "inverse.alpha_init",
                format!("{a} must lie strictly inside ({}, {})", inverse.alpha_lo, inverse.alpha_hi),
            )?;
        }
        ensure(&r, inverse.lambda_init > 0.0, "inverse.lambda_init", format!("{} must be > 0", inverse.lambda_init))?;
        if kind == ExperimentKind::InverseAlpha {
            ensure(
                &r,
                op.alpha > inverse.alpha_lo && op.alpha < inverse.alpha_hi,
                "operator.alpha",
                format!("true alpha {} must lie inside the inverse bounds", op.alpha),
            )?;
        }
        if kind.is_inverse() || kind == ExperimentKind::ForwardTfpoisson {
            ensure(&r, op.lambda_x > 0.0, "operator.lambda_x", format!("{} must be > 0 for {}", op.lambda_x, kind.name()))?;
        }
        if kind == ExperimentKind::ForwardTfdiffusion {
            ensure(&r, problem.has_time(), "problem.kind", "forward_tfdiffusion needs two_body_time")?;
        } else {
            ensure(&r, !problem.has_time(), "problem.kind", format!("{} needs a stationary problem", kind.name()))?;
        }
        if kind == ExperimentKind::EstimatorUnitTest {
            ensure(&r, problem == ProblemKind::DydaCombined, "problem.kind", "estimator_unit_test needs dyda_combined")?;
        }

        Ok(Self {
            kind,
            dims,
            variants,
            seeds,
            out,
            checkpoint,
            op,
            train,
            log_every,
            problem,
            problem_seed,
            t_final,
            forcing_samples,
            inverse,
        })
    }

    /// The resolved config in the input format; parsing it back yields an
    /// equal config.
    pub fn to_text(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        let opt = |v: Option<f64>| v.map_or(String::from("none"), |x| format!("{x:?}"));
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("[experiment]\nkind", self.kind.name().into());
        kv("dims", list(&self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>()));
        kv("variants", list(&self.variants.iter().map(|v| v.name().to_string()).collect::<Vec<_>>()));
        kv("seeds", list(&self.seeds.iter().map(|d| d.to_string()).collect::<Vec<_>>()));
        kv("out", self.out.display().to_string());
        kv("checkpoint", self.checkpoint.to_string());
        let o = &self.op;
        kv("\n[operator]\nalpha", format!("{:?}", o.alpha));
        kv("lambda_x", format!("{:?}", o.lambda_x));
        kv("gamma", opt(o.gamma));
        kv("lambda_t", format!("{:?}", o.lambda_t));
        kv("c", format!("{:?}", o.c));
        kv("v", list(&o.v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>()));
        kv("r0", opt(o.r0));
        kv("epsilon", format!("{:?}", o.epsilon));
        kv("n_radial", o.n_radial.to_string());
        kv("n_time", o.n_time.map_or("none".into(), |n| n.to_string()));
        let t = &self.train;
        kv("\n[training]\nepochs", t.epochs.to_string());
        kv("lr0", format!("{:?}", t.lr0));
        kv("n_residual", t.n_residual.to_string());
        kv("n_data", t.n_data.to_string());
        kv("w_initial", format!("{:?}", t.w_initial));
        kv("w_residual", format!("{:?}", t.w_residual));
        kv("w_data", format!("{:?}", t.w_data));
        kv("n_test", t.n_test.to_string());
        kv("hidden", list(&t.hidden.iter().map(|d| d.to_string()).collect::<Vec<_>>()));
        kv("log_every", self.log_every.to_string());
        kv("\n[problem]\nkind", self.problem.name().into());
        kv("seed", self.problem_seed.map_or("none".into(), |n| n.to_string()));
        kv("t_final", format!("{:?}", self.t_final));
        kv("forcing_samples", self.forcing_samples.to_string());
        let i = &self.inverse;
        kv("\n[inverse]\nalpha_lo", format!("{:?}", i.alpha_lo));
        kv("alpha_hi", format!("{:?}", i.alpha_hi));
        kv("alpha_init", opt(i.alpha_init));
        kv("lambda_init", format!("{:?}", i.lambda_init));
        s
    }
}

fn validate_operator(r: &Reader<'_>, op: &OperatorConfig, problem: ProblemKind) -> Result<(), ConfigError> {
    ensure(r, op.alpha > 0.0 && op.alpha < 2.0, "operator.alpha", format!("{} is outside the valid range 0 < alpha < 2", op.alpha))?;
    ensure(r, op.lambda_x >= 0.0, "operator.lambda_x", format!("{} must be >= 0", op.lambda_x))?;
    if let Some(g) = op.gamma {
        ensure(r, g > 0.0 && g < 1.0, "operator.gamma", format!("{g} is outside the valid range 0 < gamma < 1"))?;
        ensure(r, problem.has_time(), "operator.gamma", format!("{} has no time variable", problem.name()))?;
    }
    ensure(r, op.lambda_t >= 0.0, "operator.lambda_t", format!("{} must be >= 0", op.lambda_t))?;
    ensure(r, op.c > 0.0, "operator.c", format!("{} must be > 0", op.c))?;
    if let Some(r0) = op.r0 {
        ensure(r, r0 > 0.0, "operator.r0", format!("{r0} must be > 0"))?;
    }
    ensure(r, op.epsilon > 0.0, "operator.epsilon", format!("{} must be > 0", op.epsilon))?;
    ensure(r, op.n_radial >= 1, "operator.n_radial", "must be >= 1")?;
    if let Some(n) = op.n_time {
        ensure(r, n >= 1, "operator.n_time", "must be >= 1")?;
    }
    // Anything the field checks above missed.
    op.validate().map_err(|e| ConfigError {
        origin: Origin::Default,
        field: "operator".into(),
        msg: e.to_string(),
    })
}
