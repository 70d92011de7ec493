//! Acceptance criteria, one pass/fail line each.
//!
//! The training criteria take hours on one core. Their per-run results are
//! cached under the cargo target directory, keyed by the run configuration
//! and a hash of the library sources, so a rerun on unchanged code reuses
//! them. `FRACPINN_ACCEPTANCE_ONLY=1,4` selects criteria and
//! `FRACPINN_ACCEPTANCE_STRICT=1` turns any failure into a non-zero exit.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracpinn::network::{Mlp, Model, Wrapper};
use fracpinn::operators::{
    inverse_mc_tempered_laplacian, inverse_mc_time_frac, inverse_quad_time_frac, inverse_tempered_laplacian, mc_tempered_frac_laplacian,
    mc_time_frac, quad_frac_laplacian, quad_tempered_frac_laplacian, quad_time_frac, tempered_time_frac, FnField, InverseSpatial,
    OperatorConfig, SpatialScheme, Support, TimeScheme,
};
use fracpinn::problems::{rel_l2, ProblemKind, ProblemSpec};
use fracpinn::quadrature::{gauss_rule, radial_rule_ball, radial_rule_halfline, radial_rule_time, RuleKind};
use fracpinn::sampling::{sample_ball, RngStream};
use fracpinn::special::{gamma, ln_abs_gamma};
use fracpinn::training::{
    build_estimators, forcing_error, residual_loss, train_forward, train_inverse, BoundedCoeff, CoeffParam, EstimatorVariant,
    InverseSetup, PositiveCoeff, TrainConfig, Unknown,
};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "quadrature exactness", criterion_quadrature),
    (2, "closed-form fractional Laplacian agreement", criterion_closed_form),
    (3, "forcing estimation unit test at d=100", criterion_unit_test),
    (4, "time-fractional convergence", criterion_time),
    (5, "reduction identities", criterion_reductions),
    (6, "gradient checks", criterion_gradients),
    (7, "forward training", criterion_forward_training),
    (8, "inverse identification", criterion_inverse),
    (9, "variance reduction", criterion_variance),
];

fn main() {
    let only: Option<Vec<usize>> = std::env::var("FRACPINN_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("FRACPINN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut passed = 0;
    let mut run = 0;
    for (id, name, f) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        run += 1;
        passed += usize::from(o.pass);
        println!(
            "criterion {id} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{run} criteria passed");
    if strict && passed < run {
        std::process::exit(1);
    }
}

fn criterion_quadrature() -> Outcome {
    let exps = [-0.9, -0.5, 0.0, 0.5, 1.0];
    let mut rng = RngStream::new(1).rng();
    let mut worst: f64 = 0.0;
    for n in 1..=16usize {
        for &a in &exps {
            let c: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect();
            let rule = gauss_rule(RuleKind::GeneralizedLaguerre, n, a, None).expect("laguerre rule");
            let exact: f64 = c.iter().enumerate().map(|(j, cj)| cj * ln_abs_gamma(a + j as f64 + 1.0).exp()).sum();
            let approx: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * c.iter().enumerate().map(|(j, cj)| cj * x.powi(j as i32)).sum::<f64>())
                .sum();
            worst = worst.max(((approx - exact) / exact).abs());
            for &b in &exps {
                let rule = gauss_rule(RuleKind::Jacobi, n, a, Some(b)).expect("jacobi rule");
                // ∫ (1−x)^a (1+x)^{b+j} = 2^{a+b+j+1} B(a+1, b+j+1)
                let exact: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(j, cj)| {
                        let bj = b + j as f64;
                        cj * ((a + bj + 1.0) * 2f64.ln() + ln_abs_gamma(a + 1.0) + ln_abs_gamma(bj + 1.0) - ln_abs_gamma(a + bj + 2.0)).exp()
                    })
                    .sum();
                let approx: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * c.iter().enumerate().map(|(j, cj)| cj * (1.0 + x).powi(j as i32)).sum::<f64>())
                    .sum();
                worst = worst.max(((approx - exact) / exact).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} (tolerance 1e-10)"))
}

fn closed_form_row(d: usize, alpha: f64, row2: bool, x: ArrayView1<'_, f64>) -> f64 {
    let df = d as f64;
    let base = 2f64.powf(alpha) * gamma((alpha + df) / 2.0) / gamma(df / 2.0);
    if row2 {
        base * gamma(alpha / 2.0 + 2.0) * (1.0 - (1.0 + alpha / df) * x.dot(&x))
    } else {
        base * gamma(alpha / 2.0 + 1.0)
    }
}

fn criterion_closed_form() -> Outcome {
    const RESAMPLES: usize = 1000;
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [1usize, 2, 3, 10] {
        // d = 1 needs no direction averaging, so it affords a finer rule
        let n = if d == 1 { 512 } else { 128 };
        // [row][single, averaged]
        let mut worst = [[0.0f64; 2]; 2];
        for alpha in [0.5, 1.0, 1.5] {
            let cfg = OperatorConfig {
                alpha,
                n_radial: n,
                ..Default::default()
            };
            let rule = radial_rule_ball(n, alpha, 2.0).expect("ball rule");
            let x = sample_ball(d, 100, &mut RngStream::with_stream(d as u64, 2).rng());
            for (row, w) in worst.iter_mut().enumerate() {
                let p = if row == 1 { 1.0 + alpha / 2.0 } else { alpha / 2.0 };
                let u = FnField::spatial(d, Support::UnitBall, move |y: ArrayView1<'_, f64>| (1.0 - y.dot(&y)).max(0.0).powf(p));
                let exact: Array1<f64> = x.rows().into_iter().map(|r| closed_form_row(d, alpha, row == 1, r)).collect();
                let single = quad_frac_laplacian(&u, x.view(), &cfg, &rule, RngStream::new(7)).expect("estimate");
                w[0] = w[0].max(rel_l2(&single, &exact).unwrap());
                if d > 1 {
                    let mut acc = Array1::zeros(x.nrows());
                    for k in 0..RESAMPLES {
                        acc += &quad_frac_laplacian(&u, x.view(), &cfg, &rule, RngStream::with_stream(11, k as u64)).expect("estimate");
                    }
                    acc /= RESAMPLES as f64;
                    w[1] = w[1].max(rel_l2(&acc, &exact).unwrap());
                }
            }
        }
        let rows = |i: usize, tol: f64| format!("{:.2e}/{:.2e} (tol {tol:.0e})", worst[0][i], worst[1][i]);
        let (single, averaged) = (worst[0][0].max(worst[1][0]), worst[0][1].max(worst[1][1]));
        match d {
            1 => {
                ok &= single <= 1e-6;
                parts.push(format!("d=1 n={n} {}", rows(0, 1e-6)));
            }
            10 => {
                ok &= single <= 2e-2 && averaged <= 1e-3;
                parts.push(format!("d=10 single {} averaged {}", rows(0, 2e-2), rows(1, 1e-3)));
            }
            _ => {
                ok &= averaged <= 1e-3;
                parts.push(format!("d={d} averaged {}", rows(1, 1e-3)));
            }
        }
    }
    outcome(
        ok,
        format!("worst relative L2 over 100 points, low/high envelope power: {}", parts.join("; ")),
    )
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

fn criterion_unit_test() -> Outcome {
    let op = OperatorConfig {
        alpha: 1.5,
        n_radial: 64,
        ..Default::default()
    };
    let mut quad = Vec::new();
    let mut mc = Vec::new();
    for seed in 0..10u64 {
        let p = ProblemSpec::new(ProblemKind::DydaCombined, 100, op.clone(), seed).expect("problem");
        quad.push(forcing_error(&p, EstimatorVariant::Quadrature, 20_000, seed).expect("quadrature").0);
        mc.push(forcing_error(&p, EstimatorVariant::Mc, 20_000, seed).expect("mc").0);
    }
    let (qm, qs) = mean_std(&quad);
    let (mm, ms) = mean_std(&mc);
    outcome(
        qm <= mm && qm <= 3e-2,
        format!("quadrature {qm:.3e}±{qs:.2e}, mc {mm:.3e}±{ms:.2e} (need quadrature <= mc and <= 3e-2)"),
    )
}

fn criterion_time() -> Outcome {
    let t: f64 = 0.7;
    let mut worst_quad: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    for k in [1i32, 2, 3] {
        for g in [0.3, 0.5, 0.7] {
            let f = move |s: f64| s.powi(k);
            let kf = k as f64;
            let exact = gamma(kf + 1.0) / gamma(kf + 1.0 - g) * t.powf(kf - g);
            let rule = radial_rule_time(16, g).expect("time rule");
            let q = quad_time_frac(&f, t, g, &rule).expect("quadrature");
            worst_quad = worst_quad.max(((q - exact) / exact).abs());
            // σ of the 10^5 estimate from 100 independent 10^3-sample estimates
            let small: Vec<f64> = (0..100)
                .map(|i| mc_time_frac(&f, t, g, 1000, RngStream::with_stream(40 + i, k as u64)).unwrap())
                .collect();
            // k = 1 makes the estimator exact, so σ is floored at summation roundoff
            let sigma = (mean_std(&small).1 / 10.0).max(1e-10 * exact.abs());
            let big = mc_time_frac(&f, t, g, 100_000, RngStream::with_stream(3, k as u64)).unwrap();
            worst_sigma = worst_sigma.max((big - exact).abs() / sigma);
        }
    }
    outcome(
        worst_quad <= 1e-10 && worst_sigma <= 3.0,
        format!("quadrature max relative error {worst_quad:.2e} (tol 1e-10); MC max deviation {worst_sigma:.2} sigma (tol 3)"),
    )
}

fn rel_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

fn criterion_reductions() -> Outcome {
    let mut worst: f64 = 0.0;
    let t = 0.6;
    let f = |s: f64| (2.0 * s).sin() + s * s;
    for g in [0.2, 0.5, 0.8] {
        let n = 32;
        let mc = TimeScheme::mc(g, n).unwrap();
        let quad = TimeScheme::quadrature(g, n).unwrap();
        for (scheme, seed) in [(&mc, 1u64), (&quad, 2)] {
            let plain = scheme.stencil(t, 0.0, &mut RngStream::new(seed).rng()).unwrap().apply(&f);
            let tempered = tempered_time_frac(&f, t, 0.0, scheme, RngStream::new(seed)).unwrap();
            worst = worst.max(rel_diff(&Array1::from(vec![plain]), &Array1::from(vec![tempered])));
        }
        let fwd = mc_time_frac(&f, t, g, n, RngStream::new(5)).unwrap();
        let inv = inverse_mc_time_frac(&f, t, g, g, n, RngStream::new(5)).unwrap();
        worst = worst.max(((fwd - inv) / fwd).abs());
        let rule = radial_rule_time(n, g).unwrap();
        let fwd = quad_time_frac(&f, t, g, &rule).unwrap();
        let inv = inverse_quad_time_frac(&f, t, g, g, &rule).unwrap();
        worst = worst.max(((fwd - inv) / fwd).abs());
    }
    for d in [1usize, 3] {
        let u = FnField::spatial(d, Support::UnitBall, |y: ArrayView1<'_, f64>| {
            let s = 1.0 - y.dot(&y);
            if s > 0.0 {
                s * s * (1.0 + y[0])
            } else {
                0.0
            }
        });
        let x = sample_ball(d, 20, &mut RngStream::new(9).rng());
        for alpha in [0.5, 1.2] {
            let n = 24;
            let cfg = OperatorConfig {
                alpha,
                lambda_x: 1.0,
                n_radial: n,
                ..Default::default()
            };
            let fwd = mc_tempered_frac_laplacian(&u, x.view(), &cfg, RngStream::new(3)).unwrap();
            let inv = inverse_mc_tempered_laplacian(&u, x.view(), alpha, alpha, 1.0, n, cfg.epsilon, RngStream::new(3)).unwrap();
            worst = worst.max(rel_diff(&fwd, &inv));
            let rule = radial_rule_halfline(n, alpha, 1.0).unwrap();
            let fwd = quad_tempered_frac_laplacian(&u, x.view(), &cfg, &rule, RngStream::new(4)).unwrap();
            let est = InverseSpatial::quadrature(alpha, alpha, 1.0, n).unwrap();
            let inv = inverse_tempered_laplacian(&u, x.view(), &est, RngStream::new(4)).unwrap();
            worst = worst.max(rel_diff(&fwd, &inv));
        }
    }
    outcome(worst <= 1e-12, format!("max relative difference {worst:.2e} (tol 1e-12)"))
}

/// `|fd − an| / max(|an|, |fd|, 1e-2·scale)`: components far below the
/// gradient's scale are compared against that scale.
fn grad_err(fd: f64, an: f64, scale: f64) -> f64 {
    (fd - an).abs() / an.abs().max(fd.abs()).max(1e-2 * scale).max(1e-300)
}

fn criterion_gradients() -> Outcome {
    let mut rng = RngStream::new(77).rng();
    let h = 1e-6;
    let mut worst_net: f64 = 0.0;
    for inst in 0..100u64 {
        let d = if inst % 2 == 0 { 2 } else { 10 };
        let wrapper = [Wrapper::None, Wrapper::SpatialBall, Wrapper::SpacetimeBall][(inst % 3) as usize];
        let width = d + usize::from(wrapper == Wrapper::SpacetimeBall);
        let model = Model::new(Mlp::init(&[width, 16, 16, 1], RngStream::with_stream(inst, 1)).unwrap(), wrapper).unwrap();
        let mut x = Array2::zeros((3, width));
        let pts = sample_ball(d, 3, &mut rng);
        x.slice_mut(ndarray::s![.., ..d]).assign(&(pts * 0.95));
        if width > d {
            x.column_mut(d).mapv_inplace(|_| rng.random_range(0.1..1.0));
        }
        let up: Array1<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |m: &Model, x: &Array2<f64>| m.forward(x.view()).unwrap().dot(&up);
        let g = model.grad_params(x.view(), &up).unwrap();
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..5 {
            let j = rng.random_range(0..g.len());
            let mut p = model.clone();
            p.mlp.params_mut()[j] += h;
            let mut m = model.clone();
            m.mlp.params_mut()[j] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            worst_net = worst_net.max(grad_err(fd, g[j], scale));
        }
        let gi = model.grad_input(x.view()).unwrap();
        let scale = gi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..3 {
            for k in 0..width {
                let mut xp = x.clone();
                xp[[i, k]] += h;
                let mut xm = x.clone();
                xm[[i, k]] -= h;
                let fd = (model.forward(xp.view()).unwrap()[i] - model.forward(xm.view()).unwrap()[i]) / (2.0 * h);
                worst_net = worst_net.max(grad_err(fd, gi[[i, k]], scale));
            }
        }
    }
    let mut worst_coeff: f64 = 0.0;
    for inst in 0..100u64 {
        let op = OperatorConfig {
            alpha: rng.random_range(0.2..0.9),
            lambda_x: rng.random_range(0.5..2.0),
            gamma: Some(rng.random_range(0.2..0.8)),
            n_radial: 8,
            ..Default::default()
        };
        let problem = ProblemSpec::new(ProblemKind::TwoBodyTime, 2, op, inst).unwrap();
        let model = Model::new(Mlp::init(&[3, 8, 1], RngStream::with_stream(inst, 2)).unwrap(), Wrapper::SpacetimeBall).unwrap();
        let pts = problem.sample_points(5, RngStream::with_stream(inst, 3));
        let f: Array1<f64> = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
        let variant = if inst % 2 == 0 { EstimatorVariant::Quadrature } else { EstimatorVariant::Mc };
        let unknowns = vec![
            Unknown::alpha(0.0, 1.0, Some(rng.random_range(0.2..0.9))),
            Unknown::lambda(rng.random_range(0.5..2.0)),
            Unknown::gamma(0.0, 0.9, Some(rng.random_range(0.2..0.8))),
        ];
        let eval = |u: &[Unknown]| {
            let est = build_estimators(&problem, variant, u).unwrap();
            residual_loss(&model, &problem.op, pts.view(), &f, &est, RngStream::with_stream(inst, 4), None, 1.0).unwrap()
        };
        let base = eval(&unknowns);
        let scale = base.coeff_grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for k in 0..3 {
            let shifted = |dv: f64| {
                let mut u = unknowns.clone();
                let v = u[k].param.value() + dv;
                u[k].param = match u[k].param {
                    CoeffParam::Bounded(b) => CoeffParam::Bounded(BoundedCoeff::with_value(b.lo, b.hi, v)),
                    CoeffParam::Positive(_) => CoeffParam::Positive(PositiveCoeff::with_value(v)),
                };
                eval(&u).loss
            };
            // MC stencils cancel heavily at tiny radii and moved points cross the
            // envelope kink, so the step balances roundoff against both
            let hc = 1e-5;
            let fd = (shifted(hc) - shifted(-hc)) / (2.0 * hc);
            let an = base.coeff_grad[unknowns[k].which as usize];
            worst_coeff = worst_coeff.max(grad_err(fd, an, scale));
        }
    }
    outcome(
        worst_net <= 1e-4 && worst_coeff <= 1e-4,
        format!("network worst {worst_net:.2e}, coefficients worst {worst_coeff:.2e} over 100 instances each (tol 1e-4)"),
    )
}

/// Outcome of one cached training run.
#[derive(Debug, Clone, Copy)]
struct RunResult {
    rel_l2: f64,
    coeff: f64,
}

fn source_fingerprint() -> u64 {
    fn walk(dir: &Path, files: &mut Vec<PathBuf>) {
        if let Ok(rd) = fs::read_dir(dir) {
            for e in rd.flatten() {
                let p = e.path();
                if p.is_dir() {
                    walk(&p, files);
                } else if p.extension().is_some_and(|x| x == "rs") {
                    files.push(p);
                }
            }
        }
    }
    let mut files = Vec::new();
    walk(&Path::new(env!("CARGO_MANIFEST_DIR")).join("src"), &mut files);
    files.sort();
    let mut h = DefaultHasher::new();
    for f in files {
        f.file_name().hash(&mut h);
        fs::read(&f).unwrap_or_default().hash(&mut h);
    }
    h.finish()
}

fn cached_run(key: &str, run: impl FnOnce() -> RunResult) -> (RunResult, bool) {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    source_fingerprint().hash(&mut h);
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache");
    let path = dir.join(format!("{:016x}.txt", h.finish()));
    if let Ok(text) = fs::read_to_string(&path) {
        let vals: Vec<f64> = text.lines().nth(1).unwrap_or("").split(' ').filter_map(|v| v.parse().ok()).collect();
        if let [rel_l2, coeff] = vals[..] {
            return (RunResult { rel_l2, coeff }, true);
        }
    }
    let r = run();
    let _ = fs::create_dir_all(&dir);
    let _ = fs::write(&path, format!("{key}\n{:?} {:?}\n", r.rel_l2, r.coeff));
    (r, false)
}

fn progress(tag: &str) -> impl FnMut(&fracpinn::training::EpochRecord) + '_ {
    move |r| {
        if r.epoch % 5000 == 0 {
            eprintln!("  [{tag}] epoch {} loss {:.3e} {:?} ({:.0}s)", r.epoch, r.loss, r.coeffs, r.elapsed_s);
        }
    }
}

/// Runs seeds until two of three are decided.
fn two_of_three(label: &str, tol: f64, problem: impl Fn(u64) -> ProblemSpec, cfg: impl Fn(u64) -> TrainConfig) -> (bool, String) {
    let mut results = Vec::new();
    let mut passes = 0;
    for seed in 0..3u64 {
        let p = problem(seed);
        let c = cfg(seed);
        let key = format!("forward {label} {p:?} {c:?}");
        let tag = format!("{label} seed {seed}");
        let (r, cached) = cached_run(&key, || {
            let (_, report) = train_forward(&p, &c, &mut progress(&tag)).expect("training");
            RunResult {
                rel_l2: report.final_rel_l2,
                coeff: f64::NAN,
            }
        });
        eprintln!("  [{tag}] rel_l2 {:.3e}{}", r.rel_l2, if cached { " (cached)" } else { "" });
        passes += usize::from(r.rel_l2 <= tol);
        results.push(format!("{:.2e}", r.rel_l2));
        let decided = passes >= 2 || (results.len() - passes) >= 2;
        if decided {
            break;
        }
    }
    (passes >= 2, format!("{label} [{}] (tol {tol:.0e})", results.join(", ")))
}

fn criterion_forward_training() -> Outcome {
    let base = |epochs: usize, seed: u64| TrainConfig {
        epochs,
        seed,
        variant: EstimatorVariant::Quadrature,
        ..Default::default()
    };
    let (a, da) = two_of_three(
        "(a) d=10 fractional Poisson",
        5e-2,
        |s| {
            let op = OperatorConfig {
                alpha: 1.5,
                ..Default::default()
            };
            ProblemSpec::new(ProblemKind::DydaCombined, 10, op, s).unwrap()
        },
        |s| base(50_000, s),
    );
    let (b, db) = two_of_three(
        "(b) d=10 tempered Poisson",
        1e-2,
        |s| {
            let op = OperatorConfig {
                alpha: 0.5,
                lambda_x: 1.0,
                ..Default::default()
            };
            ProblemSpec::new(ProblemKind::TwoBody, 10, op, s).unwrap()
        },
        |s| base(10_000, s),
    );
    let (c, dc) = two_of_three(
        "(c) d=10 tempered diffusion",
        5e-2,
        |s| {
            let op = OperatorConfig {
                alpha: 0.5,
                lambda_x: 1.0,
                gamma: Some(0.5),
                ..Default::default()
            };
            ProblemSpec::new(ProblemKind::TwoBodyTime, 10, op, s).unwrap()
        },
        |s| base(30_000, s),
    );
    outcome(a && b && c, format!("final test relative L2, 2 of 3 seeds: {da}; {db}; {dc}"))
}

fn criterion_inverse() -> Outcome {
    let cfg = TrainConfig {
        epochs: 20_000,
        seed: 0,
        variant: EstimatorVariant::Quadrature,
        ..Default::default()
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, alpha, lambda, unknown, truth) in [
        ("alpha", 0.6, 1.0, Unknown::alpha(0.0, 1.0, None), 0.6),
        ("lambda", 0.5, 2.0, Unknown::lambda(1.0), 2.0),
    ] {
        let op = OperatorConfig {
            alpha,
            lambda_x: lambda,
            n_radial: 128,
            ..Default::default()
        };
        let p = ProblemSpec::new(ProblemKind::TwoBody, 10, op, 0).unwrap();
        let setup = InverseSetup { unknowns: vec![unknown] };
        let key = format!("inverse {label} {p:?} {cfg:?} {:?}", setup.unknowns);
        let tag = format!("inverse {label}");
        let (r, cached) = cached_run(&key, || {
            let (_, found, report) = train_inverse(&p, &cfg, &setup, &mut progress(&tag)).expect("training");
            RunResult {
                rel_l2: report.final_rel_l2,
                coeff: found[0].param.value(),
            }
        });
        eprintln!("  [{tag}] identified {:.6}{}", r.coeff, if cached { " (cached)" } else { "" });
        let rel = ((r.coeff - truth) / truth).abs();
        ok &= rel <= 2e-2;
        parts.push(format!("{label} = {:.5} (truth {truth}, rel L1 {rel:.2e})", r.coeff));
    }
    outcome(ok, format!("{} (tol 2e-2)", parts.join("; ")))
}

fn criterion_variance() -> Outcome {
    let n = 64;
    let op = OperatorConfig {
        alpha: 0.5,
        lambda_x: 1.0,
        n_radial: n,
        ..Default::default()
    };
    let p = ProblemSpec::new(ProblemKind::TwoBody, 100, op.clone(), 0).unwrap();
    let u = p.exact_field();
    let x = p.sample_points(20, RngStream::new(5));
    let rule = radial_rule_halfline(n, op.alpha, op.lambda_x).unwrap();
    let mc_scheme = SpatialScheme::mc(&op).unwrap();
    assert!(matches!(mc_scheme, SpatialScheme::McTempered { .. }));
    let reps = 100;
    let mut quad = Array2::zeros((reps, x.nrows()));
    let mut mc = Array2::zeros((reps, x.nrows()));
    for k in 0..reps {
        quad.row_mut(k)
            .assign(&quad_tempered_frac_laplacian(&u, x.view(), &op, &rule, RngStream::with_stream(1, k as u64)).unwrap());
        mc.row_mut(k)
            .assign(&mc_tempered_frac_laplacian(&u, x.view(), &op, RngStream::with_stream(2, k as u64)).unwrap());
    }
    let mean_var = |a: &Array2<f64>| a.var_axis(ndarray::Axis(0), 1.0).mean().unwrap();
    let (vq, vm) = (mean_var(&quad), mean_var(&mc));
    outcome(vq < vm, format!("mean variance over 20 points: quadrature {vq:.3e}, mc {vm:.3e}"))
}
