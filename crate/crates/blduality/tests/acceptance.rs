//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion outside [`KNOWN_FAILURES`] fails, or a known failure passes.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use blduality_core::forward::{best_constant_entropy, functional_lhs, functional_rhs, tight_test_functions, ForwardProblem, TestFunctions};
use blduality_core::gaussian::{f0_eval, f0_grad, nelson_check, CovMatrix, GaussianChannel, GaussianProblem};
use blduality_core::prob::{kl_divergence, product_dist, pushforward, renyi_divergence};
use blduality_core::reverse::{best_constant_reverse, splitting_extract, verify_reverse_functional, ReverseProblem, ReverseVerdict};
use blduality_core::simplex::{for_each_grid_point, OptimizerOptions};
use blduality_core::special::{loomis_whitney_gap, renyi_variational_max, sdpi_constant, shearer_gap};
use blduality_core::{Channel, Dist, Measure};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The literal equality condition `dQ/dR = e^{ag}/E_R e^{ag}` does not hold at
/// the maximizer; the corrected condition is checked by 6c.
const KNOWN_FAILURES: &[&str] = &["6b"];

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(detail())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_cli(args: &[&str]) -> (Option<i32>, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_blduality")).args(args).output().expect("binary runs");
    (out.status.code(), out.stdout)
}

fn dist(rng: &mut ChaCha8Rng, n: usize) -> Dist {
    Dist::from_weights((0..n).map(|_| rng.random_range(0.02..1.0)).collect()).unwrap()
}

fn channel(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Channel {
    Channel::new((0..n_in).map(|_| dist(rng, n_out).into_vec()).collect()).unwrap()
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
    ForwardProblem::new(dist(rng, nx), channels, refs, c).unwrap()
}

fn forward_objective(prob: &ForwardProblem, p: &[f64]) -> f64 {
    let p = Dist::new(p.to_vec()).unwrap();
    let mut v = -kl_divergence(&p, prob.q_x()).unwrap();
    for ((w, r), &c) in prob.channels().iter().zip(prob.refs()).zip(prob.c()) {
        v += c * kl_divergence(&pushforward(&p, w).unwrap(), r).unwrap();
    }
    v
}

fn wyner() -> Outcome {
    // Diagonal Lambda on a 1e-4 grid with Sigma - Lambda PSD, i.e.
    // (1 - l1)(1 - l2) >= 1/4; maximize l1 l2.
    let n = 10_000;
    let mut best = 0.0f64;
    for i in 1..=n {
        let l1 = i as f64 / n as f64;
        for k in 1..=n {
            let l2 = k as f64 / n as f64;
            if (1.0 - l1) * (1.0 - l2) >= 0.25 {
                best = best.max(l1 * l2);
            }
        }
    }
    let oracle = 0.5 * (0.75 / best).ln();
    let start = Instant::now();
    let (code, stdout) = run_cli(&["wyner", fixture("sigma2x2_rho05.json").to_str().unwrap()]);
    let elapsed = start.elapsed();
    let report: serde_json::Value = serde_json::from_slice(&stdout).map_err(|e| e.to_string())?;
    let v = report["values"]["value"].as_f64().ok_or("missing value")?;
    let closed = 0.5 * 3f64.ln();
    ensure(code == Some(0), || format!("exit {code:?}"))?;
    ensure((v - closed).abs() <= 1e-6, || format!("{v} vs {closed}"))?;
    ensure(v <= oracle + 1e-12 && oracle - v <= 1e-3, || format!("{v} vs grid {oracle}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("value {v:.10}, grid {oracle:.6}, {elapsed:.2?}"))
}

fn nelson() -> Outcome {
    for i in 1..=9 {
        let rho = i as f64 / 10.0;
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        for (p, want) in [(1.0 + rho + 1e-6, true), (1.0 + rho - 1e-6, false)] {
            let r = nelson_check(&sigma, &[p, p]).map_err(|e| e.to_string())?;
            // Eigenvalues of diag(p) - Sigma are p - 1 -+ rho.
            let sign = p - 1.0 - rho > 0.0;
            ensure(r.holds == want && r.holds == sign, || format!("rho {rho}, p {p}: holds {}", r.holds))?;
        }
    }
    Ok("rho 0.1..0.9 at 1e-6 margins".into())
}

fn forward_duality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = OptimizerOptions::default();
    let (mut worst_tight, mut worst_grid, mut gridded) = (0.0f64, 0.0f64, 0);
    for case in 0..50 {
        let prob = forward_problem(&mut rng, 4, 3, 4);
        let rep = best_constant_entropy(&prob, &opts).map_err(|e| e.to_string())?;
        let d = rep.d_star;
        for _ in 0..1000 {
            let f = prob
                .channels()
                .iter()
                .map(|ch| (0..ch.n_out()).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect())
                .collect();
            let f = TestFunctions::new(f).map_err(|e| e.to_string())?;
            let lhs = functional_lhs(&prob, &f, d + 1e-6).map_err(|e| e.to_string())?;
            let rhs = functional_rhs(&prob, &f).map_err(|e| e.to_string())?;
            ensure(lhs <= rhs * (1.0 + 1e-12), || format!("case {case}: lhs {lhs} > rhs {rhs}"))?;
        }
        let tight = tight_test_functions(&prob, &rep.argmax_p).map_err(|e| e.to_string())?;
        let lhs = functional_lhs(&prob, &tight, d).map_err(|e| e.to_string())?;
        let rhs = functional_rhs(&prob, &tight).map_err(|e| e.to_string())?;
        let gap = (rhs - lhs).abs() / rhs;
        worst_tight = worst_tight.max(gap);
        ensure(gap <= 1e-3, || format!("case {case}: relative gap {gap}"))?;
        let nx = prob.q_x().len();
        if nx <= 3 {
            let n = if nx == 2 { 10_000 } else { 1000 };
            let mut grid = f64::NEG_INFINITY;
            for_each_grid_point(nx, n, |p| grid = grid.max(forward_objective(&prob, p)));
            worst_grid = worst_grid.max((d - grid).abs());
            gridded += 1;
            ensure((d - grid).abs() <= 1e-4, || format!("case {case}: d* {d} vs grid {grid}"))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("tight gap <= {worst_tight:.1e}, {gridded} grid checks within {worst_grid:.1e}, {elapsed:.1?}"))
}

fn tensorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = OptimizerOptions::default();
    let mut worst = 0.0f64;
    for case in 0..20 {
        let a = forward_problem(&mut rng, 2, 1, 2);
        let c = a.c().to_vec();
        let b = ForwardProblem::new(dist(&mut rng, 2), vec![channel(&mut rng, 2, 2)], vec![Measure::from(dist(&mut rng, 2))], c)
            .map_err(|e| e.to_string())?;
        let joint = a.product(&b).map_err(|e| e.to_string())?;
        let da = best_constant_entropy(&a, &opts).map_err(|e| e.to_string())?.d_star;
        let db = best_constant_entropy(&b, &opts).map_err(|e| e.to_string())?.d_star;
        let dj = best_constant_entropy(&joint, &opts).map_err(|e| e.to_string())?.d_star;
        let err = (dj - da - db).abs();
        worst = worst.max(err);
        ensure(err <= 2e-3, || format!("case {case}: {dj} vs {da} + {db}"))?;
    }
    Ok(format!("worst defect {worst:.1e}"))
}

/// `D(Bern(p) || Bern(1/2))` without cancellation near `p = 1/2`.
fn kl_to_fair(p: f64) -> f64 {
    let e = p - 0.5;
    let term = |w: f64, x: f64| if w == 0.0 { 0.0 } else { w * x.ln_1p() };
    term(p, 2.0 * e) + term(1.0 - p, -2.0 * e)
}

fn sdpi() -> Outcome {
    let delta = 0.1;
    let n = 100_000;
    let mut grid = f64::INFINITY;
    for i in 0..=n {
        let p = i as f64 / n as f64;
        if i * 2 == n {
            continue;
        }
        let py = p * (1.0 - delta) + (1.0 - p) * delta;
        grid = grid.min(kl_to_fair(p) / kl_to_fair(py));
    }
    let opts = OptimizerOptions::default();
    let u = Dist::uniform(2).unwrap();
    let c = sdpi_constant(&u, &Channel::bsc(delta).unwrap(), &opts).map_err(|e| e.to_string())?.c_star;
    ensure((c - 1.5625).abs() <= 1e-3, || format!("c* {c}"))?;
    ensure((c - grid).abs() <= 1e-3, || format!("c* {c} vs grid {grid}"))?;
    for k in 2..=4 {
        let q = Dist::uniform(k).unwrap();
        let id = sdpi_constant(&q, &Channel::identity(k).unwrap(), &opts).map_err(|e| e.to_string())?.c_star;
        ensure(id == 1.0, || format!("identity on {k} symbols: {id}"))?;
    }
    Ok(format!("c* {c:.6}, grid {grid:.6}, identity 1"))
}

/// Runs 20 random pairs on four symbols for each alpha and returns the
/// worst value error, the worst literal-condition error and the worst
/// corrected-condition error.
fn renyi_errors() -> Result<(f64, f64, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = OptimizerOptions::default();
    let (mut value, mut literal, mut corrected) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let (q, r) = (dist(&mut rng, 4), dist(&mut rng, 4));
        for alpha in [1.5, 2.0, 3.0] {
            let res = renyi_variational_max(alpha, &q, &r, &opts).map_err(|e| e.to_string())?;
            let d = renyi_divergence(alpha, &q, &r).map_err(|e| e.to_string())?;
            value = value.max((res.value - d).abs());
            let g = res.g_star.ok_or("no maximizer")?;
            let (qp, rp) = (q.probs(), r.probs());
            let tilt: Vec<f64> = g.iter().map(|v| (alpha * v).exp()).collect();
            let norm: f64 = tilt.iter().zip(rp).map(|(t, r)| t * r).sum();
            let qa: Vec<f64> = qp.iter().zip(rp).map(|(q, r)| (q / r).powf(alpha)).collect();
            let qa_norm: f64 = qa.iter().zip(rp).map(|(v, r)| v * r).sum();
            for x in 0..4 {
                let density = tilt[x] / norm;
                literal = literal.max((qp[x] / rp[x] - density).abs());
                corrected = corrected.max((qa[x] / qa_norm - density).abs());
            }
        }
    }
    Ok((value, literal, corrected))
}

fn renyi_value() -> Outcome {
    let (v, _, _) = renyi_errors()?;
    ensure(v <= 1e-6, || format!("value error {v:.3e}"))?;
    Ok(format!("value error {v:.1e}"))
}

fn renyi_literal_condition() -> Outcome {
    let (_, l, _) = renyi_errors()?;
    ensure(l <= 1e-4, || format!("sup |dQ/dR - e^(ag)/E_R e^(ag)| = {l:.3e}"))?;
    Ok(format!("sup error {l:.1e}"))
}

fn renyi_corrected_condition() -> Outcome {
    let (_, _, c) = renyi_errors()?;
    ensure(c <= 1e-4, || format!("sup |dQ_a/dR - e^(ag)/E_R e^(ag)| = {c:.3e}"))?;
    Ok(format!("sup error {c:.1e}"))
}

fn shearer_lw() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::INFINITY;
    for case in 0..1000 {
        let joint = dist(&mut rng, 8);
        let s = shearer_gap(&joint, 3).map_err(|e| e.to_string())?;
        let fs: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
        let l = loomis_whitney_gap(&fs).map_err(|e| e.to_string())?;
        worst = worst.min(s).min(l);
        ensure(s >= -1e-12 && l >= -1e-12, || format!("case {case}: shearer {s}, loomis-whitney {l}"))?;
        let margs: Vec<Dist> = (0..3).map(|_| dist(&mut rng, 2)).collect();
        let prod = shearer_gap(&product_dist(&margs).unwrap(), 3).map_err(|e| e.to_string())?;
        ensure(prod.abs() <= 1e-12, || format!("case {case}: product gap {prod}"))?;
    }
    let uniform = shearer_gap(&Dist::uniform(8).unwrap(), 3).map_err(|e| e.to_string())?;
    let constant = loomis_whitney_gap(&vec![vec![1.0; 4]; 3]).map_err(|e| e.to_string())?;
    ensure(uniform.abs() <= 1e-12 && constant.abs() <= 1e-12, || format!("uniform {uniform}, constant {constant}"))?;
    Ok(format!("smallest gap {worst:.1e}"))
}

fn output_divergence(joint: [f64; 4], w: &Channel, r: &Measure) -> f64 {
    let py = pushforward(&Dist::from_weights(joint.map(|v| v.max(0.0)).to_vec()).unwrap(), w).unwrap();
    kl_divergence(&py, r).unwrap()
}

fn reverse_grid(prob: &ReverseProblem) -> f64 {
    let (q0, q1) = (prob.marginals()[0].probs(), prob.marginals()[1].probs());
    let (n, nc) = (100, 200);
    let mut grid = f64::INFINITY;
    for i in 0..=n {
        for k in 0..=n {
            let (a, b) = (i as f64 / n as f64, k as f64 / n as f64);
            let input = prob.c()[0] * kl_divergence(&Dist::bernoulli(1.0 - a).unwrap(), q0).unwrap()
                + prob.c()[1] * kl_divergence(&Dist::bernoulli(1.0 - b).unwrap(), q1).unwrap();
            let (lo, hi) = ((a + b - 1.0).max(0.0), a.min(b));
            let coupling = (0..=nc)
                .map(|s| {
                    let t = lo + (hi - lo) * s as f64 / nc as f64;
                    output_divergence([t, a - t, b - t, 1.0 - a - b + t], prob.mac(), prob.r_y())
                })
                .fold(f64::INFINITY, f64::min);
            grid = grid.min(input - coupling);
        }
    }
    grid
}

fn make_admissible(prob: &ReverseProblem, big_f: &[f64], fs: &[Vec<f64>]) -> Vec<f64> {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..4 {
        let digits = [i / 2, i % 2];
        let rhs: f64 = (0..2).map(|j| prob.c()[j] * fs[j][digits[j]].ln()).sum();
        let lhs: f64 = prob.mac().row(i).iter().zip(big_f).map(|(&w, &f)| w * f.ln()).sum();
        worst = worst.max(rhs - lhs);
    }
    big_f.iter().map(|v| v * worst.exp()).collect()
}

fn reverse_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let opts = OptimizerOptions::default();
    let (mut worst_grid, mut worst_residual, mut certified) = (0.0f64, 0.0f64, 0);
    for case in 0..20 {
        let ny = rng.random_range(2..=3);
        let mac = channel(&mut rng, 4, ny);
        let marginals = vec![dist(&mut rng, 2), dist(&mut rng, 2)];
        let r = Measure::from(dist(&mut rng, ny));
        let c = (0..2).map(|_| rng.random_range(0.3..2.0)).collect();
        let prob = ReverseProblem::new(mac, marginals, r, c).map_err(|e| e.to_string())?;
        let rep = best_constant_reverse(&prob, &opts).map_err(|e| e.to_string())?;
        let grid = reverse_grid(&prob);
        worst_grid = worst_grid.max((rep.d_star - grid).abs());
        ensure((rep.d_star - grid).abs() <= 5e-3, || format!("case {case}: d* {} vs grid {grid}", rep.d_star))?;
        if rep.certified_by_grid {
            certified += 1;
            let split = splitting_extract(&rep.witness_coupling, prob.mac(), prob.r_y(), prob.c()).map_err(|e| e.to_string())?;
            worst_residual = worst_residual.max(split.residual);
            ensure(split.residual <= 1e-4, || format!("case {case}: residual {}", split.residual))?;
        }
        for _ in 0..200 {
            let fs: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| rng.random_range(0.05..3.0)).collect()).collect();
            let big: Vec<f64> = (0..ny).map(|_| rng.random_range(0.05..3.0)).collect();
            let big_f = make_admissible(&prob, &big, &fs);
            match verify_reverse_functional(&prob, &big_f, &fs, rep.d_star - 1e-6).map_err(|e| e.to_string())? {
                ReverseVerdict::Admissible { gap, rhs, .. } => {
                    ensure(gap >= -1e-12 * rhs, || format!("case {case}: gap {gap}"))?
                }
                ReverseVerdict::Rejected { violation, .. } => return Err(format!("case {case}: rejected by {violation}")),
            }
        }
    }
    Ok(format!("grid within {worst_grid:.1e}, residual <= {worst_residual:.1e} on {certified} certified optima"))
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.5..1.5))
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, n, n);
    &b * b.transpose() + DMatrix::identity(n, n) * floor
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let channels = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=3);
                GaussianChannel::linear(random_matrix(&mut rng, k, n), random_pd(&mut rng, k, 0.2)).unwrap()
            })
            .collect();
        let c = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
        let c0 = rng.random_range(0.0..1.0);
        let prob = GaussianProblem::new(channels, c, c0, random_pd(&mut rng, n, 0.0), None).map_err(|e| e.to_string())?;
        let k = random_pd(&mut rng, n, 0.2);
        let dir = random_matrix(&mut rng, n, n);
        let dir = (&dir + dir.transpose()) * 0.5;
        let f = |m: DMatrix<f64>| f0_eval(&prob, &CovMatrix::new(m).unwrap()).unwrap();
        let h = 1e-5;
        let fd = (f(&k + &dir * h) - f(&k - &dir * h)) / (2.0 * h);
        let g = f0_grad(&prob, &CovMatrix::new(k.clone()).unwrap()).map_err(|e| e.to_string())?;
        let analytic = g.component_mul(&dir).sum();
        let err = (fd - analytic).abs() / analytic.abs().max(1.0);
        worst = worst.max(err);
        ensure(err <= 1e-5, || format!("case {case}: finite difference {fd} vs gradient {analytic}"))?;
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn determinism() -> Outcome {
    let cases: &[(&str, &str, &[&str])] = &[
        ("forward-constant", "forward_two_outputs.json", &[]),
        ("verify-forward", "forward_two_outputs.json", &["--samples", "200"]),
        ("sdpi", "sdpi_bsc.json", &[]),
        ("hypercontractivity", "hc_dsbs.json", &[]),
        ("renyi-var", "renyi.json", &[]),
        ("shearer", "shearer.json", &[]),
        ("loomis-whitney", "loomis_whitney.json", &[]),
        ("reverse-constant", "reverse_binary.json", &[]),
        ("coupling", "coupling_xor.json", &[]),
        ("reverse-verify", "reverse_verify.json", &[]),
        ("gaussian-f0", "gaussian_f0.json", &[]),
        ("gaussian-bl", "gaussian_bl.json", &[]),
        ("nelson", "nelson.json", &[]),
        ("wyner", "sigma2x2_rho05.json", &[]),
        ("selftest", "", &[]),
    ];
    for (cmd, file, extra) in cases {
        let path = fixture(file);
        let mut outputs = Vec::new();
        for workers in ["1", "4", "4"] {
            let mut args = vec![*cmd];
            if !file.is_empty() {
                args.push(path.to_str().unwrap());
            }
            args.extend_from_slice(extra);
            args.extend_from_slice(&["--seed", "11", "--workers", workers]);
            outputs.push(run_cli(&args));
        }
        ensure(outputs[0].0 == Some(0), || format!("{cmd}: exit {:?}", outputs[0].0))?;
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || format!("{cmd}: outputs differ"))?;
    }
    Ok(format!("{} subcommands identical at 1 and 4 workers", cases.len()))
}

fn main() {
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("1", "wyner common information closed form", wyner),
        ("2", "nelson boundary", nelson),
        ("3", "forward duality soundness, tightness and grid", forward_duality),
        ("4", "tensorization", tensorization),
        ("5", "strong data processing constant", sdpi),
        ("6a", "renyi variational value", renyi_value),
        ("6b", "renyi literal equality condition", renyi_literal_condition),
        ("6c", "renyi corrected equality condition", renyi_corrected_condition),
        ("7", "shearer and loomis-whitney", shearer_lw),
        ("8", "reverse duality", reverse_duality),
        ("9", "gaussian gradient check", gradient_check),
        ("10", "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        let outcome = check();
        let known = KNOWN_FAILURES.contains(&id);
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let note = if known { " (known failure)" } else { "" };
        println!("{verdict} {id:>3} {name}: {detail}{note}");
        if outcome.is_ok() == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected outcomes: {unexpected:?}");
        std::process::exit(1);
    }
}
