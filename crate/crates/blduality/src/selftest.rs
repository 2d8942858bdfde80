//! Desk-scale replay of the library's invariants, with seeded
//! counterexamples and an optional injected fault to show the checks bite.

use blduality_core::forward::{best_constant_entropy_with, functional_lhs, functional_rhs, ForwardProblem, TestFunctions};
use blduality_core::gaussian::{f0_eval, f0_grad, nelson_check, wyner_ci, CovMatrix, GaussianChannel, GaussianProblem};
use blduality_core::prob::{kl_divergence, product_dist, pushforward, renyi_divergence};
use blduality_core::reverse::min_coupling_divergence;
use blduality_core::special::{renyi_variational_max, shearer_gap};
use blduality_core::{Channel, Dist, Executor, Measure, Sequential};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::report::{inputs_digest, Report, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    fn cases(self) -> u64 {
        match self {
            Level::Quick => 10,
            Level::Full => 250,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Level::Quick => "quick",
            Level::Full => "full",
        }
    }
}

/// Deliberate bugs the gradient check should catch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the analytic gradient before comparing it with finite differences.
    GradSign,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    fault: Option<Fault>,
}

type Check = fn(&Ctx, &mut ChaCha8Rng) -> Result<(), String>;

const PROPERTIES: &[(&str, &str, Check)] = &[
    ("finite_prob", "kl_nonnegative", kl_nonnegative),
    ("finite_prob", "data_processing", data_processing),
    ("forward_duality", "soundness", forward_soundness),
    ("forward_duality", "tightness", forward_tightness),
    ("forward_duality", "binary_grid", forward_grid),
    ("special_ineq", "renyi_variational", renyi_variational),
    ("special_ineq", "shearer_product", shearer_product),
    ("reverse_duality", "coupling_minimal", coupling_minimal),
    ("gaussian_opt", "gradient_check", gradient_check),
    ("gaussian_opt", "nelson_two_by_two", nelson_two_by_two),
    ("gaussian_opt", "wyner_closed_form", wyner_closed_form),
];

/// Runs every property on `level.cases()` seeds starting at `cfg.seed`.
pub fn selftest<E: Executor>(level: Level, fault: Option<Fault>, cfg: &RunConfig, exec: &E) -> Report {
    let extra = json!({"level": level.name(), "fault": fault.map(|_| "grad-sign")});
    let mut rep = Report::new("selftest", inputs_digest("selftest", &Value::Null, &extra, cfg), cfg);
    let ctx = Ctx { cfg, fault };
    let mut rows = Vec::new();
    let (mut passed, mut failed) = (0usize, 0usize);
    for &(module, property, check) in PROPERTIES {
        let outcomes = exec.map(level.cases() as usize, |i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            (seed, check(&ctx, &mut ChaCha8Rng::seed_from_u64(seed)))
        });
        let failures: Vec<Value> = outcomes
            .into_iter()
            .filter_map(|(seed, r)| r.err().map(|detail| json!({"seed": seed, "detail": detail})))
            .collect();
        if failures.is_empty() {
            passed += 1;
        } else {
            failed += 1;
        }
        rows.push(json!({
            "module": module,
            "property": property,
            "cases": level.cases(),
            "pass": failures.is_empty(),
            "failures": failures,
        }));
    }
    rep.value("level", json!(level.name()))
        .value("injected_fault", extra["fault"].clone())
        .value("passed", json!(passed))
        .value("failed", json!(failed))
        .value("properties", Value::Array(rows))
        .status(if failed == 0 { Status::Ok } else { Status::Failed });
    rep
}

fn dist(rng: &mut ChaCha8Rng, n: usize) -> Dist {
    Dist::from_weights((0..n).map(|_| rng.random_range(0.02..1.0)).collect()).expect("positive weights")
}

fn channel(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Channel {
    Channel::new((0..n_in).map(|_| dist(rng, n_out).into_vec()).collect()).expect("stochastic rows")
}

fn forward_problem(rng: &mut ChaCha8Rng, max_x: usize, max_m: usize, max_y: usize) -> ForwardProblem {
    let nx = rng.random_range(2..=max_x);
    let m = rng.random_range(1..=max_m);
    let mut channels = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..m {
        let ny = rng.random_range(2..=max_y);
        channels.push(channel(rng, nx, ny));
        refs.push(Measure::from(dist(rng, ny)));
    }
    let c = (0..m).map(|_| rng.random_range(0.3..3.0)).collect();
    ForwardProblem::new(dist(rng, nx), channels, refs, c).expect("consistent dimensions")
}

fn ensure(ok: bool, detail: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(detail())
    }
}

fn kl_nonnegative(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_kl");
    let (p, q) = (dist(rng, 5), dist(rng, 5));
    let d = kl_divergence(&p, &q).map_err(|e| e.to_string())?;
    ensure(d >= -tol, || format!("D(P||Q) = {d}"))
}

fn data_processing(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_dpi");
    let (p, q, w) = (dist(rng, 4), dist(rng, 4), channel(rng, 4, 3));
    let before = kl_divergence(&p, &q).map_err(|e| e.to_string())?;
    let after = kl_divergence(&pushforward(&p, &w).unwrap(), &pushforward(&q, &w).unwrap()).map_err(|e| e.to_string())?;
    ensure(after <= before + tol, || format!("{after} > {before}"))
}

fn forward_soundness(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_soundness");
    let prob = forward_problem(rng, 4, 3, 4);
    let rep = best_constant_entropy_with(&prob, &ctx.cfg.optimizer(), &Sequential).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let f = prob
            .channels()
            .iter()
            .map(|ch| (0..ch.n_out()).map(|_| rng.random_range(0.0..5.0)).collect())
            .collect();
        let Ok(f) = TestFunctions::new(f) else { continue };
        let lhs = functional_lhs(&prob, &f, rep.d_star + 1e-6).map_err(|e| e.to_string())?;
        let rhs = functional_rhs(&prob, &f).map_err(|e| e.to_string())?;
        ensure(lhs <= rhs * (1.0 + tol), || format!("lhs {lhs} > rhs {rhs} at d* = {}", rep.d_star))?;
    }
    Ok(())
}

fn forward_tightness(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_tightness");
    let prob = forward_problem(rng, 4, 3, 4);
    let rep = best_constant_entropy_with(&prob, &ctx.cfg.optimizer(), &Sequential).map_err(|e| e.to_string())?;
    ensure(rep.functional_gap.abs() <= tol, || format!("relative gap {}", rep.functional_gap))
}

fn forward_grid(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_grid");
    let prob = forward_problem(rng, 2, 2, 2);
    let rep = best_constant_entropy_with(&prob, &ctx.cfg.optimizer(), &Sequential).map_err(|e| e.to_string())?;
    let objective = |p: &Dist| {
        let mut v = -kl_divergence(p, prob.q_x()).unwrap();
        for ((w, r), &c) in prob.channels().iter().zip(prob.refs()).zip(prob.c()) {
            v += c * kl_divergence(&pushforward(p, w).unwrap(), r).unwrap();
        }
        v
    };
    let n = 10_000;
    let grid = (0..=n)
        .map(|k| objective(&Dist::new(vec![1.0 - k as f64 / n as f64, k as f64 / n as f64]).unwrap()))
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(rep.d_star >= grid - 1e-9 && rep.d_star <= grid + tol, || {
        format!("d* = {} vs grid {grid}", rep.d_star)
    })
}

fn renyi_variational(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_renyi");
    let (q, r) = (dist(rng, 4), dist(rng, 4));
    let alpha = [1.5, 2.0, 3.0][rng.random_range(0..3)];
    let v = renyi_variational_max(alpha, &q, &r, &ctx.cfg.optimizer()).map_err(|e| e.to_string())?;
    let d = renyi_divergence(alpha, &q, &r).map_err(|e| e.to_string())?;
    ensure((v.value - d).abs() <= tol, || format!("alpha {alpha}: {} vs {d}", v.value))
}

fn shearer_product(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_shearer");
    let margs: Vec<Dist> = (0..3).map(|_| dist(rng, 2)).collect();
    let gap = shearer_gap(&product_dist(&margs).unwrap(), 3).map_err(|e| e.to_string())?;
    ensure(gap.abs() <= tol, || format!("product gap {gap}"))
}

fn coupling_minimal(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_coupling");
    let marginals = vec![dist(rng, 2), dist(rng, 3)];
    let mac = channel(rng, 6, 3);
    let r = Measure::from(dist(rng, 3));
    let sol = min_coupling_divergence(&marginals, &mac, &r, &ctx.cfg.optimizer()).map_err(|e| e.to_string())?;
    let independent = product_dist(&marginals).unwrap();
    let v = kl_divergence(&pushforward(&independent, &mac).unwrap(), &r).unwrap();
    ensure(sol.value <= v + tol, || format!("optimal {} above independent coupling {v}", sol.value))
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.5..1.5))
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, n, n);
    &b * b.transpose() + DMatrix::identity(n, n) * floor
}

fn gradient_check(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_grad_rel");
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=3);
    let channels = (0..m)
        .map(|_| {
            let k = rng.random_range(1..=3);
            GaussianChannel::linear(random_matrix(rng, k, n), random_pd(rng, k, 0.2)).unwrap()
        })
        .collect();
    let c = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
    let prob = GaussianProblem::new(channels, c, rng.random_range(0.0..1.0), random_pd(rng, n, 0.0), None)
        .map_err(|e| e.to_string())?;
    let k = random_pd(rng, n, 0.2);
    let dir = random_matrix(rng, n, n);
    let dir = (&dir + dir.transpose()) * 0.5;
    let f = |m: DMatrix<f64>| f0_eval(&prob, &CovMatrix::new(m).unwrap()).unwrap();
    let h = 1e-5;
    let fd = (f(&k + &dir * h) - f(&k - &dir * h)) / (2.0 * h);
    let mut g = f0_grad(&prob, &CovMatrix::new(k.clone()).unwrap()).map_err(|e| e.to_string())?;
    if ctx.fault == Some(Fault::GradSign) {
        g = -g;
    }
    let analytic = g.component_mul(&dir).sum();
    let err = (fd - analytic).abs() / analytic.abs().max(1.0);
    ensure(err <= tol, || format!("n = {n}, m = {m}: finite difference {fd} vs gradient {analytic}"))
}

fn nelson_two_by_two(_: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let rho: f64 = rng.random_range(-0.95..0.95);
    let (p1, p2) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0));
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let r = nelson_check(&sigma, &[p1, p2]).map_err(|e| e.to_string())?;
    let margin = ((p1 - 1.0) * (p2 - 1.0) - rho * rho).min(p1 - 1.0).min(p2 - 1.0);
    if margin.abs() <= 1e-8 {
        return Ok(());
    }
    ensure(r.holds == (margin > 0.0), || format!("rho {rho}, p ({p1}, {p2}): holds = {}", r.holds))
}

fn wyner_closed_form(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tol = ctx.cfg.tol("st_wyner");
    let rho: f64 = rng.random_range(-0.9..0.9);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let v = wyner_ci(&sigma).map_err(|e| e.to_string())?.value;
    let closed = 0.5 * ((1.0 + rho.abs()) / (1.0 - rho.abs())).ln();
    ensure((v - closed).abs() <= tol, || format!("rho {rho}: {v} vs {closed}"))
}
