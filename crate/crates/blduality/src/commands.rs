//! One function per subcommand: decode the input, run the kernel, fill a
//! [`Report`].

use blduality_core::forward::{
    best_constant_entropy_with, functional_lhs, functional_rhs, tight_test_functions, ForwardProblem, TestFunctions,
};
use blduality_core::gaussian::{gaussian_gbll_constant, minimize_f0, nelson_check, wyner_ci, F0Status};
use blduality_core::prob::{renyi_divergence, shannon_entropy};
use blduality_core::reverse::{
    best_constant_reverse_with, min_coupling_divergence, splitting_extract, verify_reverse_functional, ReverseVerdict,
};
use blduality_core::simplex::grid_denominator;
use blduality_core::special::{
    hc_entropy_deficit_with, loomis_whitney_gap, renyi_variational_max, sdpi_constant_with, shearer_gap, HcQuery,
};
use blduality_core::{Dist, Executor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{inputs_digest, matrix, num, nums, Report, Status};
use crate::schema::{self, decode};

/// Every subcommand except `selftest`, with its own arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    ForwardConstant,
    VerifyForward { d: Option<f64>, samples: usize },
    Sdpi,
    Hypercontractivity,
    RenyiVar,
    Shearer,
    LoomisWhitney,
    ReverseConstant,
    Coupling,
    ReverseVerify { d: Option<f64> },
    GaussianF0,
    GaussianBl,
    Nelson,
    Wyner,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ForwardConstant => "forward-constant",
            Command::VerifyForward { .. } => "verify-forward",
            Command::Sdpi => "sdpi",
            Command::Hypercontractivity => "hypercontractivity",
            Command::RenyiVar => "renyi-var",
            Command::Shearer => "shearer",
            Command::LoomisWhitney => "loomis-whitney",
            Command::ReverseConstant => "reverse-constant",
            Command::Coupling => "coupling",
            Command::ReverseVerify { .. } => "reverse-verify",
            Command::GaussianF0 => "gaussian-f0",
            Command::GaussianBl => "gaussian-bl",
            Command::Nelson => "nelson",
            Command::Wyner => "wyner",
        }
    }

    fn extra(&self) -> Value {
        match self {
            Command::VerifyForward { d, samples } => json!({"d": d.map(num), "samples": samples}),
            Command::ReverseVerify { d } => json!({"d": d.map(num)}),
            _ => Value::Null,
        }
    }
}

pub fn run<E: Executor>(cmd: &Command, input: &Value, cfg: &RunConfig, exec: &E) -> Result<Report, CliError> {
    let mut rep = Report::new(cmd.name(), inputs_digest(cmd.name(), input, &cmd.extra(), cfg), cfg);
    match cmd {
        Command::ForwardConstant => forward_constant(input, cfg, exec, &mut rep)?,
        Command::VerifyForward { d, samples } => verify_forward(input, cfg, exec, *d, *samples, &mut rep)?,
        Command::Sdpi => sdpi(input, cfg, exec, &mut rep)?,
        Command::Hypercontractivity => hypercontractivity(input, cfg, exec, &mut rep)?,
        Command::RenyiVar => renyi_var(input, cfg, &mut rep)?,
        Command::Shearer => shearer(input, &mut rep)?,
        Command::LoomisWhitney => loomis_whitney(input, &mut rep)?,
        Command::ReverseConstant => reverse_constant(input, cfg, exec, &mut rep)?,
        Command::Coupling => coupling(input, cfg, &mut rep)?,
        Command::ReverseVerify { d } => reverse_verify(input, cfg, exec, *d, &mut rep)?,
        Command::GaussianF0 => gaussian_f0(input, cfg, &mut rep)?,
        Command::GaussianBl => gaussian_bl(input, cfg, &mut rep)?,
        Command::Nelson => nelson(input, &mut rep)?,
        Command::Wyner => wyner(input, &mut rep)?,
    }
    Ok(rep)
}

fn finite_or_unbounded(x: f64) -> Status {
    if x.is_finite() {
        Status::Ok
    } else {
        Status::Unbounded
    }
}

fn dist(p: &Dist) -> Value {
    nums(p.probs())
}

fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn grid_certificate(rep: &mut Report, certified: bool, dims: &[usize]) {
    rep.cert("certified_by_grid", json!(certified));
    if certified {
        let dens: Vec<Option<usize>> = dims.iter().map(|&d| grid_denominator(d)).collect();
        rep.cert("grid_denominators", json!(dens));
    }
}

fn forward_constant<E: Executor>(input: &Value, cfg: &RunConfig, exec: &E, rep: &mut Report) -> Result<(), CliError> {
    let prob = decode::<schema::ForwardJson>(input)?.build()?;
    let r = best_constant_entropy_with(&prob, &cfg.optimizer(), exec)?;
    rep.info("d_star", r.d_star)
        .value("argmax_p", dist(&r.argmax_p))
        .cert("functional_gap", num(r.functional_gap))
        .cert("n_restarts_used", json!(r.n_restarts_used))
        .status(finite_or_unbounded(r.d_star));
    grid_certificate(rep, r.certified_by_grid, &[prob.q_x().len()]);
    Ok(())
}

/// Log-uniform positive test functions in `[e^-3, e^3]`.
fn random_functions(prob: &ForwardProblem, rng: &mut ChaCha8Rng) -> Result<TestFunctions, CliError> {
    let f = prob
        .channels()
        .iter()
        .map(|ch| (0..ch.n_out()).map(|_| (rng.random::<f64>() * 6.0 - 3.0).exp()).collect())
        .collect();
    Ok(TestFunctions::new(f)?)
}

fn verify_forward<E: Executor>(
    input: &Value,
    cfg: &RunConfig,
    exec: &E,
    d: Option<f64>,
    samples: usize,
    rep: &mut Report,
) -> Result<(), CliError> {
    let prob = decode::<schema::ForwardJson>(input)?.build()?;
    let mut candidates = Vec::with_capacity(samples + 1);
    let d = match d {
        Some(d) => d,
        None => {
            let r = best_constant_entropy_with(&prob, &cfg.optimizer(), exec)?;
            if r.d_star.is_finite() {
                candidates.push(tight_test_functions(&prob, &r.argmax_p)?);
            }
            r.d_star
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..samples {
        candidates.push(random_functions(&prob, &mut rng)?);
    }
    let rel = cfg.tol("verify_rel");
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for f in &candidates {
        let lhs = functional_lhs(&prob, f, d)?;
        let rhs = functional_rhs(&prob, f)?;
        if lhs > rhs * (1.0 + rel) {
            violations += 1;
        }
        worst = worst.max(lhs.ln() - rhs.ln());
    }
    rep.info("d", d)
        .value("holds", json!(violations == 0))
        .value("violations", json!(violations))
        .value("samples", json!(candidates.len()))
        .cert("max_log_ratio", num(worst))
        .status(finite_or_unbounded(d));
    Ok(())
}

fn sdpi<E: Executor>(input: &Value, cfg: &RunConfig, exec: &E, rep: &mut Report) -> Result<(), CliError> {
    let s = decode::<schema::SdpiJson>(input)?;
    let (q, w) = (s.q_x.build()?, s.channel.build()?);
    let r = sdpi_constant_with(&q, &w, &cfg.optimizer(), exec)?;
    rep.value("c_star", num(r.c_star))
        .value("argmin_p", r.argmin_p.as_ref().map_or(Value::Null, dist))
        .cert("local_limit", num(r.local_limit))
        .cert("global_ratio", num(r.global_ratio));
    grid_certificate(rep, r.certified_by_grid, &[q.len()]);
    Ok(())
}

fn hypercontractivity<E: Executor>(input: &Value, cfg: &RunConfig, exec: &E, rep: &mut Report) -> Result<(), CliError> {
    let h = decode::<schema::HcJson>(input)?;
    let (p1, p2) = h.exponents();
    let q = HcQuery::new(h.joint.build()?, h.shape, p1, p2)?;
    let mut opts = cfg.optimizer();
    opts.grid_threshold = opts.grid_threshold.max(4);
    let r = hc_entropy_deficit_with(&q, &opts, exec)?;
    rep.info("deficit", r.deficit)
        .value("hypercontractive", json!(r.deficit >= -cfg.tol("hc_sign")))
        .value("argmin_p", dist(&r.argmin_p))
        .status(finite_or_unbounded(r.deficit));
    grid_certificate(rep, r.certified_by_grid, &[q.joint().len()]);
    Ok(())
}

fn renyi_var(input: &Value, cfg: &RunConfig, rep: &mut Report) -> Result<(), CliError> {
    let s = decode::<schema::RenyiJson>(input)?;
    let (q, r) = (s.q.build()?, s.r.build()?);
    let v = renyi_variational_max(s.alpha, &q, &r, &cfg.optimizer())?;
    let closed = renyi_divergence(s.alpha, &q, &r)?;
    rep.info("value", v.value)
        .info("renyi_divergence", closed)
        .value("g_star", v.g_star.as_deref().map_or(Value::Null, nums))
        .cert("divergence_gap", num(closed - v.value))
        .cert("iterations", json!(v.iterations))
        .status(finite_or_unbounded(v.value));
    Ok(())
}

fn shearer(input: &Value, rep: &mut Report) -> Result<(), CliError> {
    let s = decode::<schema::ShearerJson>(input)?;
    let p = s.joint.build()?;
    let gap = shearer_gap(&p, s.m)?;
    rep.info("gap", gap).info("joint_entropy", shannon_entropy(&p)).value("holds", json!(gap >= -1e-12));
    Ok(())
}

fn loomis_whitney(input: &Value, rep: &mut Report) -> Result<(), CliError> {
    let s = decode::<schema::LoomisWhitneyJson>(input)?;
    let gap = loomis_whitney_gap(&s.functions)?;
    rep.value("gap", num(gap)).value("holds", json!(gap >= -1e-12));
    Ok(())
}

fn reverse_constant<E: Executor>(input: &Value, cfg: &RunConfig, exec: &E, rep: &mut Report) -> Result<(), CliError> {
    let prob = decode::<schema::ReverseJson>(input)?.build()?;
    let r = best_constant_reverse_with(&prob, &cfg.optimizer(), exec)?;
    rep.info("d_star", r.d_star)
        .value("witness_marginals", Value::Array(r.witness_marginals.iter().map(dist).collect()))
        .value("witness_coupling", dist(r.witness_coupling.joint()))
        .cert("fw_gap", num(r.fw_gap))
        .cert("certified_by_grid", json!(r.certified_by_grid))
        .status(finite_or_unbounded(r.d_star));
    if r.d_star.is_finite() {
        let s = splitting_extract(&r.witness_coupling, prob.mac(), prob.r_y(), prob.c())?;
        rep.value("splitting_g", Value::Array(s.g.iter().map(|g| nums(g)).collect()))
            .cert("splitting_residual", num(s.residual))
            .cert("splitting_ambiguous", json!(s.ambiguous));
    }
    Ok(())
}

fn coupling(input: &Value, cfg: &RunConfig, rep: &mut Report) -> Result<(), CliError> {
    let (marginals, mac, r_y) = decode::<schema::CouplingJson>(input)?.build()?;
    let s = min_coupling_divergence(&marginals, &mac, &r_y, &cfg.optimizer())?;
    rep.info("value", s.value)
        .value("coupling", dist(s.coupling.joint()))
        .cert("fw_gap", num(s.fw_gap))
        .cert("iterations", json!(s.iterations))
        .status(finite_or_unbounded(s.value));
    Ok(())
}

fn reverse_verify<E: Executor>(
    input: &Value,
    cfg: &RunConfig,
    exec: &E,
    d: Option<f64>,
    rep: &mut Report,
) -> Result<(), CliError> {
    let s = decode::<schema::ReverseVerifyJson>(input)?;
    let prob = s.build()?;
    let d = match d.or(s.d) {
        Some(d) => d,
        None => best_constant_reverse_with(&prob, &cfg.optimizer(), exec)?.d_star,
    };
    rep.info("d", d);
    match verify_reverse_functional(&prob, &s.big_f, &s.fs, d)? {
        ReverseVerdict::Admissible { gap, lhs, rhs } => {
            rep.value("admissible", json!(true))
                .value("holds", json!(gap >= 0.0))
                .value("lhs", num(lhs))
                .value("rhs", num(rhs))
                .cert("gap", num(gap));
        }
        ReverseVerdict::Rejected { cell, violation } => {
            rep.value("admissible", json!(false))
                .value("rejected_cell", json!(cell))
                .cert("violation", num(violation));
        }
    }
    Ok(())
}

fn f0_status(s: F0Status) -> (Status, &'static str) {
    match s {
        F0Status::Converged => (Status::Ok, "converged"),
        F0Status::NotConverged => (Status::NotConverged, "not_converged"),
        F0Status::Unbounded => (Status::Unbounded, "unbounded"),
    }
}

fn gaussian_f0(input: &Value, cfg: &RunConfig, rep: &mut Report) -> Result<(), CliError> {
    let prob = decode::<schema::GaussianF0Json>(input)?.build()?;
    let s = minimize_f0(&prob, &cfg.gaussian())?;
    let (status, label) = f0_status(s.status);
    rep.info("value", s.value)
        .value("k_star", matrix(&s.k_star))
        .cert("solver_status", json!(label))
        .cert("proj_grad_norm", num(s.proj_grad_norm))
        .cert("iterations", json!(s.iterations))
        .cert("k_eigenvalues", nums(&sym_eigenvalues(&s.k_star)))
        .status(status);
    if let Some(cap) = prob.sigma_cap() {
        rep.cert("cap_margin_eigenvalues", nums(&sym_eigenvalues(&(cap - &s.k_star))));
    }
    Ok(())
}

fn gaussian_bl(input: &Value, cfg: &RunConfig, rep: &mut Report) -> Result<(), CliError> {
    let prob = decode::<schema::GaussianBlJson>(input)?.build()?;
    let r = gaussian_gbll_constant(&prob, &cfg.gaussian())?;
    let (status, label) = f0_status(r.status);
    rep.info("d", r.d)
        .value("mean", r.mean.as_ref().map_or(Value::Null, |m| nums(m.as_slice())))
        .value("k", r.k.as_ref().map_or(Value::Null, matrix))
        .cert("solver_status", json!(label))
        .cert("mean_curvature", num(r.mean_curvature))
        .status(if status == Status::Ok { finite_or_unbounded(r.d) } else { status });
    if let Some(k) = &r.k {
        rep.cert("k_eigenvalues", nums(&sym_eigenvalues(k)));
    }
    Ok(())
}

fn nelson(input: &Value, rep: &mut Report) -> Result<(), CliError> {
    let s = decode::<schema::NelsonJson>(input)?;
    let r = nelson_check(&schema::matrix(&s.sigma)?, &s.exponents())?;
    rep.value("holds", json!(r.holds)).cert("min_eigenvalue", num(r.min_eig));
    Ok(())
}

fn wyner(input: &Value, rep: &mut Report) -> Result<(), CliError> {
    let s = decode::<schema::WynerJson>(input)?;
    let r = wyner_ci(&schema::matrix(&s.sigma)?)?;
    rep.info("value", r.value)
        .value("lambda", nums(&r.lambda))
        .cert("min_eigenvalue_margin", num(r.min_eig_margin));
    Ok(())
}
