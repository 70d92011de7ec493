//! Runs a resolved experiment over every (dimension, variant, seed) and
//! writes the manifest, per-run histories and the summary table.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracpinn::checkpoint::{self, Checkpoint};
use fracpinn::operators::OperatorError;
use fracpinn::problems::{ForcingSource, ProblemError, ProblemSpec};
use fracpinn::training::{forcing_error, train_forward, train_inverse, EstimatorVariant, InverseSetup, TrainError, TrainReport, Unknown};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Train(#[from] TrainError),
    #[error("{0}")]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Operator(#[from] OperatorError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// 2 for config errors, 3 for a diverged loss, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Train(TrainError::NonFiniteLoss { .. }) => 3,
            RunError::Train(TrainError::InvalidConfig(_)) | RunError::Problem(ProblemError::DimensionTooSmall { .. }) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// One (dimension, variant, seed) result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub dimension: usize,
    pub variant: EstimatorVariant,
    pub seed: u64,
    /// Test error of the trained model, or the forcing error for the
    /// estimator unit test.
    pub rel_l2: f64,
    pub init_rel_l2: Option<f64>,
    pub coefficient: Option<String>,
    pub identified: Option<f64>,
    pub truth: Option<f64>,
    pub rel_l1: Option<f64>,
    pub elapsed_s: f64,
    pub epochs_per_s: f64,
    pub evaluations_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub runs: Vec<RunRecord>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn sci(x: f64) -> String {
    let s = format!("{x:.2E}");
    if s.contains("E-") {
        s
    } else {
        s.replace('E', "E+")
    }
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut s = String::from(
            "dimension,variant,seed,rel_l2,init_rel_l2,coefficient,identified,truth,rel_l1,elapsed_s,epochs_per_s,evaluations_per_s\n",
        );
        for r in &self.runs {
            writeln!(
                s,
                "{},{},{},{:e},{},{},{},{},{},{:.3},{:.3},{:.1}",
                r.dimension,
                r.variant.name(),
                r.seed,
                r.rel_l2,
                opt(r.init_rel_l2),
                r.coefficient.as_deref().unwrap_or(""),
                opt(r.identified),
                opt(r.truth),
                opt(r.rel_l1),
                r.elapsed_s,
                r.epochs_per_s,
                r.evaluations_per_s
            )
            .unwrap();
        }
        s
    }

    /// `mean±std` per (dimension, variant), one row per dimension.
    pub fn table(&self) -> String {
        let mut dims: Vec<usize> = self.runs.iter().map(|r| r.dimension).collect();
        dims.dedup();
        let mut variants: Vec<EstimatorVariant> = Vec::new();
        for r in &self.runs {
            if !variants.contains(&r.variant) {
                variants.push(r.variant);
            }
        }
        let inverse = self.runs.iter().any(|r| r.rel_l1.is_some());
        let metric = if inverse { "rel. L1 of coefficient" } else { "rel. L2" };
        let mut s = format!("{} ({metric}, mean±std over seeds)\n", self.experiment);
        write!(s, "{:>8}", "dim").unwrap();
        for v in &variants {
            write!(s, " | {:>22}", v.name()).unwrap();
        }
        s.push_str(" | it/s\n");
        for d in dims {
            write!(s, "{d:>8}").unwrap();
            let mut speed = Vec::new();
            for v in &variants {
                let rows: Vec<&RunRecord> = self.runs.iter().filter(|r| r.dimension == d && r.variant == *v).collect();
                let vals: Vec<f64> = rows.iter().map(|r| if inverse { r.rel_l1.unwrap_or(f64::NAN) } else { r.rel_l2 }).collect();
                speed.extend(rows.iter().map(|r| r.epochs_per_s));
                let (m, sd) = mean_std(&vals);
                write!(s, " | {:>22}", format!("{}±{}", sci(m), sci(sd))).unwrap();
            }
            writeln!(s, " | {:.1}", speed.iter().sum::<f64>() / speed.len().max(1) as f64).unwrap();
        }
        s
    }
}

fn run_dir(out: &Path, kind: ExperimentKind, d: usize, variant: EstimatorVariant, seed: u64) -> PathBuf {
    out.join(format!("{}_d{d}_{}_seed{seed}", kind.name(), variant.name()))
}

pub fn build_problem(cfg: &ExperimentConfig, d: usize, seed: u64) -> Result<ProblemSpec, RunError> {
    let mut p = ProblemSpec::new(cfg.problem, d, cfg.op.clone(), cfg.problem_seed.unwrap_or(seed))?;
    p.t_final = cfg.t_final;
    if let ForcingSource::McEstimate { n } = &mut p.forcing {
        *n = cfg.forcing_samples;
    }
    Ok(p)
}

fn problem_description(p: &ProblemSpec) -> String {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    let mut s = format!("# problem {} d={} seed={}\n", p.kind.name(), p.d, p.seed);
    writeln!(s, "# c1 = {}", fmt(&p.c1)).unwrap();
    if !p.c2.is_empty() {
        writeln!(s, "# c2 = {}", fmt(&p.c2)).unwrap();
    }
    if !p.op.v.is_empty() {
        writeln!(s, "# v = {}", fmt(&p.op.v)).unwrap();
    }
    s
}

/// Runs everything in `cfg`, writing results under `cfg.out`.
pub fn run(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Summary, RunError> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut manifest = cfg.to_text();
    let mut runs = Vec::new();
    for &d in &cfg.dims {
        for &seed in &cfg.seeds {
            let p = build_problem(cfg, d, seed)?;
            manifest.push('\n');
            manifest.push_str(&problem_description(&p));
            for &variant in &cfg.variants {
                let rec = run_one(cfg, &p, d, variant, seed, log)?;
                let _ = writeln!(
                    log,
                    "{} d={d} variant={} seed={seed}: rel_l2 = {:e}{}",
                    cfg.kind.name(),
                    variant.name(),
                    rec.rel_l2,
                    rec.identified
                        .map_or(String::new(), |v| format!(", identified {} = {v} (rel_l1 {:e})", rec.coefficient.as_deref().unwrap_or(""), rec.rel_l1.unwrap_or(f64::NAN)))
                );
                runs.push(rec);
            }
        }
    }
    let summary = Summary {
        experiment: cfg.kind.name().to_string(),
        runs,
    };
    write_file(&cfg.out.join("manifest.ini"), manifest.as_bytes())?;
    write_file(&cfg.out.join("summary.csv"), summary.to_csv().as_bytes())?;
    write_file(&cfg.out.join("summary.txt"), summary.table().as_bytes())?;
    let json = serde_json::to_string_pretty(&summary).expect("summary is serializable");
    write_file(&cfg.out.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}

fn run_one(
    cfg: &ExperimentConfig,
    p: &ProblemSpec,
    d: usize,
    variant: EstimatorVariant,
    seed: u64,
    log: &mut dyn Write,
) -> Result<RunRecord, RunError> {
    let dir = run_dir(&cfg.out, cfg.kind, d, variant, seed);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    if cfg.kind == ExperimentKind::EstimatorUnitTest {
        let start = Instant::now();
        let (err, evals) = forcing_error(p, variant, cfg.train.n_test, seed)?;
        let elapsed = start.elapsed().as_secs_f64();
        return Ok(RunRecord {
            dimension: d,
            variant,
            seed,
            rel_l2: err,
            init_rel_l2: None,
            coefficient: None,
            identified: None,
            truth: None,
            rel_l1: None,
            elapsed_s: elapsed,
            epochs_per_s: 0.0,
            evaluations_per_s: if elapsed > 0.0 { evals as f64 / elapsed } else { 0.0 },
        });
    }
    let mut train = cfg.train.clone();
    train.variant = variant;
    train.seed = seed;
    let every = cfg.log_every;
    let tag = format!("d={d} {} seed={seed}", variant.name());
    let mut observer = |r: &fracpinn::training::EpochRecord| {
        if every > 0 && r.epoch.is_multiple_of(every) {
            let coeffs: Vec<String> = r.coeffs.iter().map(|c| format!("{c:.6}")).collect();
            let _ = writeln!(log, "  [{tag}] epoch {} loss {:.4e} lr {:.2e} {} ({:.1}s)", r.epoch, r.loss, r.lr, coeffs.join(" "), r.elapsed_s);
        }
    };
    let (model, report) = match cfg.kind {
        ExperimentKind::InverseAlpha | ExperimentKind::InverseLambda => {
            let unknown = if cfg.kind == ExperimentKind::InverseAlpha {
                Unknown::alpha(cfg.inverse.alpha_lo, cfg.inverse.alpha_hi, cfg.inverse.alpha_init)
            } else {
                Unknown::lambda(cfg.inverse.lambda_init)
            };
            let setup = InverseSetup { unknowns: vec![unknown] };
            let (m, _, r) = train_inverse(p, &train, &setup, &mut observer)?;
            (m, r)
        }
        _ => train_forward(p, &train, &mut observer)?,
    };
    write_file(&dir.join("history.csv"), history_csv(&report).as_bytes())?;
    let json = serde_json::to_string_pretty(&report.summary_json()).expect("report is serializable");
    write_file(&dir.join("summary.json"), json.as_bytes())?;
    if cfg.checkpoint {
        let mut echo: Vec<(String, String)> = cfg
            .to_text()
            .lines()
            .scan(String::new(), |sec, l| {
                if let Some(s) = l.strip_prefix('[') {
                    *sec = s.trim_end_matches(']').to_string();
                    return Some(None);
                }
                Some(l.split_once(" = ").map(|(k, v)| (format!("{sec}.{k}"), v.to_string())))
            })
            .flatten()
            .collect();
        echo.push(("run.dimension".into(), d.to_string()));
        echo.push(("run.variant".into(), variant.name().into()));
        let ck = Checkpoint { seed, model, config: echo };
        write_file(&dir.join("checkpoint.txt"), checkpoint::encode(&ck).as_bytes())?;
    }
    let id = report.identified.first();
    Ok(RunRecord {
        dimension: d,
        variant,
        seed,
        rel_l2: report.final_rel_l2,
        init_rel_l2: Some(report.init_rel_l2),
        coefficient: id.map(|c| c.name.clone()),
        identified: id.map(|c| c.value),
        truth: id.map(|c| c.truth),
        rel_l1: id.map(|c| c.rel_l1),
        elapsed_s: report.elapsed_s,
        epochs_per_s: report.epochs_per_s,
        evaluations_per_s: report.evaluations_per_s,
    })
}

/// Per-epoch history without wall-clock columns, so reruns are byte-identical.
pub fn history_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,loss,residual_loss,data_loss,lr");
    for n in &report.coeff_names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for r in &report.history {
        write!(s, "{},{:e},{:e},{:e},{:e}", r.epoch, r.loss, r.residual_loss, r.data_loss, r.lr).unwrap();
        for c in &r.coeffs {
            write!(s, ",{c:?}").unwrap();
        }
        s.push('\n');
    }
    s
}
