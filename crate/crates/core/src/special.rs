//! Special cases of the forward duality: strong data processing,
//! hypercontractivity, the variational formula for Renyi divergence, and
//! the Shearer / Loomis-Whitney pair.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::forward::{best_constant_entropy_with, log_sum_exp, ForwardProblem};
use crate::linalg::max_eigenvalue;
use crate::prob::{entropy_raw, push_raw, pushforward, unravel, Channel, Dist, Measure};
use crate::simplex::{
    embed, for_each_grid_point, grid_denominator, pattern_search, random_point, restart_rng,
    OptimizerOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpiReport {
    /// `inf_{P != Q_X} D(P||Q_X) / D(PW||Q_X W)`, never below 1.
    pub c_star: f64,
    /// Limit of the ratio as `P -> Q_X`: one over the squared second
    /// singular value of the normalized channel matrix.
    pub local_limit: f64,
    /// Smallest ratio found away from `Q_X`.
    pub global_ratio: f64,
    /// Where `global_ratio` was found.
    pub argmin_p: Option<Dist>,
    pub certified_by_grid: bool,
}

/// Anything smaller counts as `P = Q_X` and is left to the local limit.
const RATIO_FLOOR: f64 = 1e-9;

/// `D(P||Q)` for two probability vectors as `sum q phi(p/q - 1)` with
/// `phi(d) = (1+d) ln(1+d) - d`; every term is nonnegative, so nothing
/// cancels when `P` is close to `Q`.
fn kl_near(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if b == 0.0 {
            if a > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        let d = (a - b) / b;
        s += b * ((1.0 + d) * d.ln_1p() - d);
    }
    s
}

fn sdpi_ratio(p: &[f64], q: &[f64], w: &Channel, qy: &[f64], py: &mut [f64]) -> f64 {
    let num = kl_near(p, q);
    if num < RATIO_FLOOR {
        return f64::INFINITY;
    }
    push_raw(p, w, py);
    let den = kl_near(py, qy);
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn second_singular_value_sq(q: &[f64], w: &Channel, qy: &[f64]) -> f64 {
    let n = q.len();
    let mut btb = DMatrix::zeros(n, n);
    for x in 0..n {
        for x2 in 0..=x {
            let mut s = 0.0;
            for y in 0..w.n_out() {
                if qy[y] > 0.0 {
                    s += w.get(x, y) * w.get(x2, y) / qy[y];
                }
            }
            s *= (q[x] * q[x2]).sqrt();
            s -= (q[x] * q[x2]).sqrt();
            btb[(x, x2)] = s;
            btb[(x2, x)] = s;
        }
    }
    max_eigenvalue(&btb).max(0.0)
}

pub fn sdpi_constant(q_x: &Dist, w: &Channel, opts: &OptimizerOptions) -> Result<SdpiReport> {
    sdpi_constant_with(q_x, w, opts, &Sequential)
}

/// The strong data processing constant of `(Q_X, W)`.
pub fn sdpi_constant_with<E: Executor>(
    q_x: &Dist,
    w: &Channel,
    opts: &OptimizerOptions,
    exec: &E,
) -> Result<SdpiReport> {
    if w.n_in() != q_x.len() {
        return Err(Error::DimensionMismatch {
            expected: w.n_in(),
            found: q_x.len(),
        });
    }
    if q_x.probs().iter().any(|&v| v == 0.0) {
        return Err(invalid("reference input must have full support"));
    }
    let n = q_x.len();
    if w.is_constant() || n == 1 {
        return Ok(SdpiReport {
            c_star: f64::INFINITY,
            local_limit: f64::INFINITY,
            global_ratio: f64::INFINITY,
            argmin_p: None,
            certified_by_grid: n <= opts.grid_threshold,
        });
    }
    let q = q_x.probs();
    let mut qy = vec![0.0; w.n_out()];
    push_raw(q, w, &mut qy);

    let s2 = second_singular_value_sq(q, w, &qy);
    let local_limit = if s2 > 1e-14 { 1.0 / s2 } else { f64::INFINITY };

    let ratio = |p: &[f64]| {
        let mut py = vec![0.0; w.n_out()];
        sdpi_ratio(p, q, w, &qy, &mut py)
    };
    let all: Vec<usize> = (0..n).collect();
    let blocks = [0..n];
    let active = vec![true; n];

    let mut best = f64::INFINITY;
    let mut best_point: Option<Vec<f64>> = None;
    let mut consider = |p: Vec<f64>, v: f64| {
        if v < best {
            best = v;
            best_point = Some(p);
        }
    };

    let mut certified = false;
    if n <= opts.grid_threshold {
        if let Some(den) = grid_denominator(n) {
            let mut grid_best = f64::INFINITY;
            let mut grid_point = q.to_vec();
            for_each_grid_point(n, den, |p| {
                let v = ratio(p);
                if v < grid_best {
                    grid_best = v;
                    grid_point = p.to_vec();
                }
            });
            let step = 1.0 / den as f64;
            let (p, v) = pattern_search(grid_point, &blocks, &active, &ratio, step, 1e-12, 50_000);
            consider(p, v);
            certified = true;
        }
    }

    let runs = exec.map(opts.restarts.max(1), |i| {
        let start = if i < n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        } else {
            random_point(&mut restart_rng(opts.seed, i), &all, n)
        };
        pattern_search(start, &blocks, &active, &ratio, 0.1, 1e-12, 50_000)
    });
    for (p, v) in runs {
        consider(p, v);
    }

    let argmin_p = match best_point {
        Some(p) if best.is_finite() => Some(Dist::from_weights(embed(&p, &all, n))?),
        _ => None,
    };
    Ok(SdpiReport {
        c_star: local_limit.min(best).max(1.0),
        local_limit,
        global_ratio: best,
        argmin_p,
        certified_by_grid: certified,
    })
}

/// `||f||_{1/c} - E[exp(E[ln f(Y)|X])]` with the norm taken under
/// `Q_Y = Q_X W`. Nonnegative for every `f` exactly when `c` is a valid
/// strong data processing constant.
pub fn sdpi_functional_gap(q_x: &Dist, w: &Channel, c: f64, f: &[f64]) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c must be positive"));
    }
    if w.n_in() != q_x.len() {
        return Err(Error::DimensionMismatch {
            expected: w.n_in(),
            found: q_x.len(),
        });
    }
    if f.len() != w.n_out() {
        return Err(Error::DimensionMismatch {
            expected: w.n_out(),
            found: f.len(),
        });
    }
    for (index, &value) in f.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidEntry { index, value });
        }
    }
    let q = q_x.probs();
    let mut qy = vec![0.0; w.n_out()];
    push_raw(q, w, &mut qy);
    let mut lhs = 0.0;
    for (x, &qx) in q.iter().enumerate() {
        if qx == 0.0 {
            continue;
        }
        let e: f64 = w
            .row(x)
            .iter()
            .zip(f)
            .filter(|(&wy, _)| wy > 0.0)
            .map(|(&wy, &fy)| wy * fy.ln())
            .sum();
        lhs += qx * e.exp();
    }
    let rhs = qy
        .iter()
        .zip(f)
        .map(|(&r, &fy)| r * fy.powf(1.0 / c))
        .sum::<f64>()
        .powf(c);
    Ok(rhs - lhs)
}

/// A two-party hypercontractivity query. `p1`, `p2` lie in `[1, inf]`;
/// infinity drops the corresponding marginal term.
#[derive(Debug, Clone, PartialEq)]
pub struct HcQuery {
    joint: Dist,
    shape: [usize; 2],
    p1: f64,
    p2: f64,
}

impl HcQuery {
    pub fn new(joint: Dist, shape: [usize; 2], p1: f64, p2: f64) -> Result<Self> {
        if shape[0] * shape[1] != joint.len() {
            return Err(Error::DimensionMismatch {
                expected: shape[0] * shape[1],
                found: joint.len(),
            });
        }
        if !(p1 >= 1.0 && p2 >= 1.0) {
            return Err(invalid("hypercontractivity exponents must be at least 1"));
        }
        if joint.probs().iter().any(|&v| v == 0.0) {
            return Err(invalid("joint distribution must have full support"));
        }
        Ok(Self { joint, shape, p1, p2 })
    }

    pub fn joint(&self) -> &Dist {
        &self.joint
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.p1, self.p2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcReport {
    /// `inf_P D(P||Q) - D(P_1||Q_1)/p1 - D(P_2||Q_2)/p2`; the pair is
    /// hypercontractive iff this is nonnegative.
    pub deficit: f64,
    pub argmin_p: Dist,
    pub certified_by_grid: bool,
}

pub fn hc_entropy_deficit(q: &HcQuery, opts: &OptimizerOptions) -> Result<HcReport> {
    hc_entropy_deficit_with(q, opts, &Sequential)
}

pub fn hc_entropy_deficit_with<E: Executor>(
    q: &HcQuery,
    opts: &OptimizerOptions,
    exec: &E,
) -> Result<HcReport> {
    let mut channels = Vec::new();
    let mut refs = Vec::new();
    let mut c = Vec::new();
    for (axis, p) in [q.p1, q.p2].into_iter().enumerate() {
        if p.is_infinite() {
            continue;
        }
        let w = Channel::coordinate(&q.shape, axis)?;
        refs.push(Measure::from(pushforward(&q.joint, &w)?));
        channels.push(w);
        c.push(1.0 / p);
    }
    if channels.is_empty() {
        return Ok(HcReport {
            deficit: 0.0,
            argmin_p: q.joint.clone(),
            certified_by_grid: true,
        });
    }
    let prob = ForwardProblem::new(q.joint.clone(), channels, refs, c)?;
    let mut opts = opts.clone();
    opts.grid_threshold = opts.grid_threshold.max(4);
    let rep = best_constant_entropy_with(&prob, &opts, exec)?;
    Ok(HcReport {
        deficit: -rep.d_star,
        argmin_p: rep.argmax_p,
        certified_by_grid: rep.certified_by_grid,
    })
}

fn check_renyi_inputs(alpha: f64, q: &Dist, r: &Dist) -> Result<()> {
    if alpha == 1.0 {
        return Err(Error::RenyiOrderOne);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("Renyi order must lie in (0,1) or (1,inf)"));
    }
    if q.len() != r.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: r.len(),
        });
    }
    Ok(())
}

/// `(a/(a-1)) ln E_Q[exp((a-1) g)] - ln E_R[exp(a g)]`, a lower bound on
/// `D_a(Q||R)` for `a > 1`. Entries of `g` may be `-inf`.
pub fn renyi_variational_objective(g: &[f64], alpha: f64, q: &Dist, r: &Dist) -> Result<f64> {
    check_renyi_inputs(alpha, q, r)?;
    if g.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: g.len(),
        });
    }
    for (index, &value) in g.iter().enumerate() {
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::InvalidEntry { index, value });
        }
    }
    Ok(renyi_objective_raw(g, alpha, q.probs(), r.probs()))
}

fn renyi_objective_raw(g: &[f64], alpha: f64, q: &[f64], r: &[f64]) -> f64 {
    let tilted = |w: &[f64], k: f64| {
        log_sum_exp(
            w.iter()
                .zip(g)
                .filter(|(&wx, _)| wx > 0.0)
                .map(move |(&wx, &gx)| wx.ln() + if gx == f64::NEG_INFINITY { gx } else { k * gx }),
        )
    };
    alpha / (alpha - 1.0) * tilted(q, alpha - 1.0) - tilted(r, alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenyiVariational {
    pub value: f64,
    /// Maximizing `g`, determined up to an additive constant; `None` when
    /// the supremum is infinite.
    pub g_star: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Maximizes [`renyi_variational_objective`] over `g` for `alpha > 1`.
///
/// The ascent direction is `ln(dQ_g/dR_g)` with `Q_g ∝ Q e^{(a-1)g}` and
/// `R_g ∝ R e^{ag}`; its inner product with the gradient is a symmetrized
/// divergence, so it always ascends.
pub fn renyi_variational_max(
    alpha: f64,
    q: &Dist,
    r: &Dist,
    opts: &OptimizerOptions,
) -> Result<RenyiVariational> {
    check_renyi_inputs(alpha, q, r)?;
    if alpha < 1.0 {
        return Err(invalid("the variational maximum is only provided for alpha > 1"));
    }
    let (qp, rp) = (q.probs(), r.probs());
    if qp.iter().zip(rp).any(|(&a, &b)| a > 0.0 && b == 0.0) {
        return Ok(RenyiVariational {
            value: f64::INFINITY,
            g_star: None,
            iterations: 0,
        });
    }
    let support: Vec<usize> = (0..qp.len()).filter(|&x| qp[x] > 0.0).collect();
    let mut g: Vec<f64> = qp
        .iter()
        .map(|&a| if a > 0.0 { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    let mut value = renyi_objective_raw(&g, alpha, qp, rp);
    let mut trial = g.clone();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let lq: Vec<f64> = support.iter().map(|&x| qp[x].ln() + (alpha - 1.0) * g[x]).collect();
        let lr: Vec<f64> = support.iter().map(|&x| rp[x].ln() + alpha * g[x]).collect();
        let zq = log_sum_exp(lq.iter().copied());
        let zr = log_sum_exp(lr.iter().copied());
        let d: Vec<f64> = lq.iter().zip(&lr).map(|(a, b)| (a - zq) - (b - zr)).collect();
        if d.iter().all(|v| v.abs() < 1e-14) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for (k, &x) in support.iter().enumerate() {
                trial[x] = g[x] + t * d[k];
            }
            let v = renyi_objective_raw(&trial, alpha, qp, rp);
            if v > value {
                value = v;
                g.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // Pin the additive constant: zero at the first support symbol.
    let shift = g[support[0]];
    for &x in &support {
        g[x] -= shift;
    }
    Ok(RenyiVariational {
        value,
        g_star: Some(g),
        iterations,
    })
}

/// Integer `a` with `a^m = len`.
fn power_root(len: usize, m: usize) -> Result<usize> {
    let guess = (len as f64).powf(1.0 / m as f64).round() as usize;
    for a in guess.saturating_sub(1).max(1)..=guess + 1 {
        if a.checked_pow(m as u32) == Some(len) {
            return Ok(a);
        }
    }
    Err(Error::NotPowerAlphabet { len, m })
}

/// Row-major index into `A^(m-1)` of `digits` with coordinate `j` removed.
fn deleted_index(digits: &[usize], j: usize, a: usize) -> usize {
    digits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .fold(0, |acc, (_, &d)| acc * a + d)
}

/// `sum_j H(X without X_j)/(m-1) - H(X_1..X_m)` in nats.
pub fn shearer_gap(p: &Dist, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(invalid("Shearer's inequality needs m >= 2"));
    }
    let a = power_root(p.len(), m)?;
    let shape = vec![a; m];
    let reduced = a.pow(m as u32 - 1);
    let mut rhs = 0.0;
    for j in 0..m {
        let mut marginal = vec![0.0; reduced];
        for (i, &pi) in p.probs().iter().enumerate() {
            marginal[deleted_index(&unravel(i, &shape), j, a)] += pi;
        }
        rhs += entropy_raw(&marginal);
    }
    Ok(rhs / (m - 1) as f64 - entropy_raw(p.probs()))
}

/// `prod_j ||f_j||_{m-1} - sum_x prod_j f_j(x without x_j)` under counting
/// measure on `A^m`.
pub fn loomis_whitney_gap(fs: &[Vec<f64>]) -> Result<f64> {
    let m = fs.len();
    if m < 2 {
        return Err(invalid("Loomis-Whitney needs m >= 2"));
    }
    let len = fs[0].len();
    for f in fs {
        if f.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: f.len(),
            });
        }
        for (index, &value) in f.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidEntry { index, value });
            }
        }
    }
    let a = power_root(len, m - 1)?;
    let shape = vec![a; m];
    let mut lhs = 0.0;
    for i in 0..a.pow(m as u32) {
        let digits = unravel(i, &shape);
        lhs += fs
            .iter()
            .enumerate()
            .map(|(j, f)| f[deleted_index(&digits, j, a)])
            .product::<f64>();
    }
    let k = (m - 1) as f64;
    let rhs: f64 = fs
        .iter()
        .map(|f| f.iter().map(|&v| v.powf(k)).sum::<f64>().powf(1.0 / k))
        .product();
    Ok(rhs - lhs)
}
