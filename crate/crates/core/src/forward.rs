//! The forward (broadcast channel) duality.
//!
//! For an input law `Q_X`, channels `W_j = Q_{Y_j|X}`, reference measures
//! `R_j` and weights `c_j > 0`, the functional inequality
//!
//! ```text
//! E_Q[ exp( sum_j E[ln f_j(Y_j) | X] - d ) ] <= prod_j ( sum_y R_j(y) f_j(y)^(1/c_j) )^(c_j)
//! ```
//!
//! holds for every nonnegative `f_j` exactly when, for every `P << Q_X`,
//!
//! ```text
//! D(P || Q_X) + d >= sum_j c_j D(P W_j || R_j).
//! ```
//!
//! The smallest such `d` is the supremum of the entropy-side objective,
//! computed here by multi-start mirror ascent and certified on a grid for
//! alphabets of size at most three. The functional side is evaluated
//! directly, and the extremal test functions and auxiliary measures from
//! the equivalence are constructed explicitly so both directions can be
//! replayed numerically.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::prob::{kl_raw, push_raw, Channel, Dist, Measure};
use crate::simplex::{
    embed, for_each_grid_point, grid_denominator, mirror_ascent, random_point, restart_rng,
    OptimizerOptions,
};

/// The data `(Q_X, {W_j}, {R_j}, {c_j})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardProblem {
    q_x: Dist,
    channels: Vec<Channel>,
    refs: Vec<Measure>,
    c: Vec<f64>,
}

impl ForwardProblem {
    pub fn new(q_x: Dist, channels: Vec<Channel>, refs: Vec<Measure>, c: Vec<f64>) -> Result<Self> {
        let m = channels.len();
        if m == 0 {
            return Err(Error::Empty);
        }
        for found in [refs.len(), c.len()] {
            if found != m {
                return Err(Error::DimensionMismatch { expected: m, found });
            }
        }
        if c.iter().any(|&cj| !(cj > 0.0 && cj.is_finite())) {
            return Err(invalid("weights c_j must be positive and finite"));
        }
        for (w, r) in channels.iter().zip(&refs) {
            if w.n_in() != q_x.len() {
                return Err(Error::DimensionMismatch {
                    expected: q_x.len(),
                    found: w.n_in(),
                });
            }
            if r.len() != w.n_out() {
                return Err(Error::DimensionMismatch {
                    expected: w.n_out(),
                    found: r.len(),
                });
            }
        }
        Ok(Self { q_x, channels, refs, c })
    }

    pub fn q_x(&self) -> &Dist {
        &self.q_x
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn refs(&self) -> &[Measure] {
        &self.refs
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    /// Same channels and references with a different weight vector.
    pub fn with_weights(&self, c: Vec<f64>) -> Result<Self> {
        Self::new(self.q_x.clone(), self.channels.clone(), self.refs.clone(), c)
    }

    /// The tensor product of two problems with equal `m` and weights:
    /// product inputs, product channels, product references.
    pub fn product(&self, other: &ForwardProblem) -> Result<Self> {
        if self.m() != other.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: other.m(),
            });
        }
        if self.c != other.c {
            return Err(invalid("tensor product needs identical weights"));
        }
        let q = crate::prob::product_dist(&[self.q_x.clone(), other.q_x.clone()])?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.kron(b))
            .collect();
        let refs = self
            .refs
            .iter()
            .zip(&other.refs)
            .map(|(a, b)| a.product(b))
            .collect();
        Self::new(q, channels, refs, self.c.clone())
    }

    /// Post-composes channel `j` with `v` and moves `R_j` along with it.
    pub fn post_process(&self, j: usize, v: &Channel) -> Result<Self> {
        if j >= self.m() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.m(),
            });
        }
        let mut out = self.clone();
        out.channels[j] = self.channels[j].then(v)?;
        out.refs[j] = self.refs[j].pushforward(v)?;
        Ok(out)
    }

    fn support(&self) -> Vec<usize> {
        (0..self.q_x.len()).filter(|&x| self.q_x.probs()[x] > 0.0).collect()
    }

    /// A symbol in the support of `Q_X` whose output can land where some
    /// `R_j` vanishes; any `P` charging it makes the objective `+inf`.
    fn escaping_symbol(&self) -> Option<usize> {
        self.support().into_iter().find(|&x| {
            self.channels.iter().zip(&self.refs).any(|(w, r)| {
                w.row(x)
                    .iter()
                    .zip(r.weights())
                    .any(|(&wy, &ry)| wy > 0.0 && ry == 0.0)
            })
        })
    }

    fn outputs(&self, p: &[f64]) -> Vec<Vec<f64>> {
        self.channels
            .iter()
            .map(|w| {
                let mut out = vec![0.0; w.n_out()];
                push_raw(p, w, &mut out);
                out
            })
            .collect()
    }

    fn objective_raw(&self, p: &[f64]) -> f64 {
        let input = kl_raw(p, self.q_x.probs());
        if input == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        let outputs = self.outputs(p);
        let mut total = 0.0;
        for ((py, r), &c) in outputs.iter().zip(&self.refs).zip(&self.c) {
            total += c * kl_raw(py, r.weights());
        }
        total - input
    }

    /// Gradient up to an additive constant (irrelevant on the simplex).
    fn gradient_raw(&self, p: &[f64], g: &mut [f64]) {
        let outputs = self.outputs(p);
        let q = self.q_x.probs();
        for x in 0..p.len() {
            if p[x] == 0.0 {
                g[x] = 0.0;
                continue;
            }
            let mut s = -(p[x] / q[x]).ln();
            for (((w, py), r), &c) in self.channels.iter().zip(&outputs).zip(&self.refs).zip(&self.c) {
                for ((&wy, &pyy), &ry) in w.row(x).iter().zip(py).zip(r.weights()) {
                    if wy > 0.0 {
                        s += c * wy * (pyy.max(f64::MIN_POSITIVE) / ry).ln();
                    }
                }
            }
            g[x] = s;
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.q_x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.q_x.len(),
                found: n,
            });
        }
        Ok(())
    }
}

/// Nonnegative test functions `f_j` on the output alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctions {
    f: Vec<Vec<f64>>,
}

impl TestFunctions {
    pub fn new(f: Vec<Vec<f64>>) -> Result<Self> {
        for fj in &f {
            for (index, &value) in fj.iter().enumerate() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidEntry { index, value });
                }
            }
            if !fj.iter().any(|&v| v > 0.0) {
                return Err(invalid("each test function needs a positive entry"));
            }
        }
        Ok(Self { f })
    }

    pub fn functions(&self) -> &[Vec<f64>] {
        &self.f
    }

    fn check(&self, prob: &ForwardProblem) -> Result<()> {
        if self.f.len() != prob.m() {
            return Err(Error::DimensionMismatch {
                expected: prob.m(),
                found: self.f.len(),
            });
        }
        for (fj, w) in self.f.iter().zip(&prob.channels) {
            if fj.len() != w.n_out() {
                return Err(Error::DimensionMismatch {
                    expected: w.n_out(),
                    found: fj.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub d_star: f64,
    pub argmax_p: Dist,
    /// `1 - lhs/rhs` of the functional inequality at `d_star` with the tight
    /// test functions built from `argmax_p`.
    pub functional_gap: f64,
    pub n_restarts_used: usize,
    pub certified_by_grid: bool,
}

/// `sum_j c_j D(P W_j || R_j) - D(P || Q_X)`; `-inf` when `P` is not
/// dominated by `Q_X`.
pub fn entropy_objective(prob: &ForwardProblem, p: &Dist) -> Result<f64> {
    prob.check_len(p.len())?;
    Ok(prob.objective_raw(p.probs()))
}

pub fn best_constant_entropy(prob: &ForwardProblem, opts: &OptimizerOptions) -> Result<DualityReport> {
    best_constant_entropy_with(prob, opts, &Sequential)
}

/// Supremum of [`entropy_objective`] over the simplex, running restarts on
/// `exec`.
pub fn best_constant_entropy_with<E: Executor>(
    prob: &ForwardProblem,
    opts: &OptimizerOptions,
    exec: &E,
) -> Result<DualityReport> {
    let n = prob.q_x.len();
    let support = prob.support();

    if let Some(x) = prob.escaping_symbol() {
        return Ok(DualityReport {
            d_star: f64::INFINITY,
            argmax_p: Dist::point(n, x)?,
            functional_gap: 1.0,
            n_restarts_used: 0,
            certified_by_grid: false,
        });
    }

    let value = |p: &[f64]| prob.objective_raw(p);
    let grad = |p: &[f64], g: &mut [f64]| prob.gradient_raw(p, g);

    let restarts = opts.restarts.max(1);
    let runs = exec.map(restarts, |i| {
        let start = if i == 0 {
            prob.q_x.probs().to_vec()
        } else {
            random_point(&mut restart_rng(opts.seed, i), &support, n)
        };
        mirror_ascent(&start, &value, &grad, opts.max_iter, opts.tol)
    });

    let mut best_point = runs[0].point.clone();
    let mut best = runs[0].value;
    let mut consider = |point: &[f64], v: f64| {
        if v > best || (best.is_nan() && !v.is_nan()) {
            best = v;
            best_point = point.to_vec();
        }
    };
    for run in &runs {
        consider(&run.point, run.value);
    }
    for &x in &support {
        let mut e = vec![0.0; n];
        e[x] = 1.0;
        let v = value(&e);
        consider(&e, v);
    }

    let mut certified = false;
    if support.len() <= opts.grid_threshold {
        if let Some(den) = grid_denominator(support.len()) {
            let mut grid_best = f64::NEG_INFINITY;
            let mut grid_point = Vec::new();
            for_each_grid_point(support.len(), den, |sub| {
                let p = embed(sub, &support, n);
                let v = value(&p);
                if v > grid_best {
                    grid_best = v;
                    grid_point = p;
                }
            });
            let polished = mirror_ascent(&grid_point, &value, &grad, opts.max_iter, opts.tol);
            consider(&grid_point, grid_best);
            consider(&polished.point, polished.value);
            certified = true;
        }
    }

    if !best.is_finite() {
        return Err(Error::NoFiniteValue);
    }
    let argmax_p = Dist::from_weights(best_point)?;
    let f = tight_test_functions(prob, &argmax_p)?;
    let lhs = functional_lhs(prob, &f, best)?;
    let rhs = functional_rhs(prob, &f)?;
    Ok(DualityReport {
        d_star: best,
        argmax_p,
        functional_gap: 1.0 - lhs / rhs,
        n_restarts_used: restarts,
        certified_by_grid: certified,
    })
}

/// `E[ln f_j(Y_j) | X = x]` summed over `j`, with `ln 0 = -inf`.
fn conditional_log_sum(prob: &ForwardProblem, f: &TestFunctions, x: usize) -> f64 {
    let mut s = 0.0;
    for (w, fj) in prob.channels.iter().zip(&f.f) {
        for (&wy, &fy) in w.row(x).iter().zip(fj) {
            if wy > 0.0 {
                s += wy * fy.ln();
            }
        }
    }
    s
}

/// Left side of the functional inequality,
/// `sum_x Q_X(x) exp(sum_j E[ln f_j(Y_j)|X=x] - d)`.
pub fn functional_lhs(prob: &ForwardProblem, f: &TestFunctions, d: f64) -> Result<f64> {
    f.check(prob)?;
    Ok((0..prob.q_x.len())
        .filter(|&x| prob.q_x.probs()[x] > 0.0)
        .map(|x| prob.q_x.probs()[x] * (conditional_log_sum(prob, f, x) - d).exp())
        .sum())
}

/// Right side, `prod_j ||f_j||_{1/c_j}` with norms taken against `R_j`.
pub fn functional_rhs(prob: &ForwardProblem, f: &TestFunctions) -> Result<f64> {
    f.check(prob)?;
    Ok(f.f
        .iter()
        .zip(&prob.refs)
        .zip(&prob.c)
        .map(|((fj, r), &c)| {
            let integral: f64 = fj
                .iter()
                .zip(r.weights())
                .map(|(&v, &rw)| rw * v.powf(1.0 / c))
                .sum();
            integral.powf(c)
        })
        .product())
}

/// `f_j = (dP_{Y_j} / dR_j)^{c_j}`, zero where both vanish.
pub fn tight_test_functions(prob: &ForwardProblem, p: &Dist) -> Result<TestFunctions> {
    prob.check_len(p.len())?;
    let outputs = prob.outputs(p.probs());
    let mut f = Vec::with_capacity(prob.m());
    for (j, ((py, r), &c)) in outputs.iter().zip(&prob.refs).zip(&prob.c).enumerate() {
        let mut fj = Vec::with_capacity(py.len());
        for (index, (&a, &b)) in py.iter().zip(r.weights()).enumerate() {
            fj.push(if a == 0.0 {
                0.0
            } else if b == 0.0 {
                return Err(Error::SupportViolation { component: j, index });
            } else {
                (a / b).powf(c)
            });
        }
        f.push(fj);
    }
    TestFunctions::new(f)
}

/// The auxiliary measures used in both directions of the equivalence.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofWitnesses {
    /// `S_X(x) ∝ Q_X(x) exp(sum_j c_j E[ln(dP_{Y_j}/dR_j)(Y_j) | X = x])`.
    pub s_x: Dist,
    /// `S_{Y_j}(y) ∝ R_j(y) f_j(y)^{1/c_j}`.
    pub s_y: Vec<Dist>,
    /// Log-normalizer of `S_X`.
    pub d0: f64,
    /// Log-normalizers of the `S_{Y_j}`.
    pub d_j: Vec<f64>,
    /// `P(x) ∝ Q_X(x) exp(sum_j E[ln f_j(Y_j) | X = x])`, the input law
    /// built from the test functions.
    pub input_from_f: Dist,
    /// Log-normalizer of `input_from_f`, i.e. `ln lhs(f, 0)`.
    pub input_log_normalizer: f64,
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn gibbs(weights: &[f64], logs: &[f64]) -> Result<(Dist, f64)> {
    let terms = weights
        .iter()
        .zip(logs)
        .filter(|(&w, _)| w > 0.0)
        .map(|(&w, &l)| w.ln() + l);
    let z = log_sum_exp(terms);
    if !z.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let probs = weights
        .iter()
        .zip(logs)
        .map(|(&w, &l)| if w > 0.0 { (w.ln() + l - z).exp() } else { 0.0 })
        .collect();
    Ok((Dist::from_weights(probs)?, z))
}

pub fn proof_witnesses(prob: &ForwardProblem, p: &Dist, f: &TestFunctions) -> Result<ProofWitnesses> {
    prob.check_len(p.len())?;
    f.check(prob)?;
    let n = p.len();
    let outputs = prob.outputs(p.probs());

    let mut h = vec![0.0; n];
    for (x, hx) in h.iter_mut().enumerate() {
        for (j, (((w, py), r), &c)) in prob
            .channels
            .iter()
            .zip(&outputs)
            .zip(&prob.refs)
            .zip(&prob.c)
            .enumerate()
        {
            for (y, ((&wy, &pyy), &ry)) in w.row(x).iter().zip(py).zip(r.weights()).enumerate() {
                if wy == 0.0 {
                    continue;
                }
                if ry == 0.0 && pyy > 0.0 {
                    return Err(Error::SupportViolation { component: j, index: y });
                }
                *hx += c * wy * (pyy / ry).ln();
            }
        }
    }
    let (s_x, d0) = gibbs(prob.q_x.probs(), &h)?;

    let mut s_y = Vec::with_capacity(prob.m());
    let mut d_j = Vec::with_capacity(prob.m());
    for ((fj, r), &c) in f.f.iter().zip(&prob.refs).zip(&prob.c) {
        let logs: Vec<f64> = fj.iter().map(|&v| v.ln() / c).collect();
        let (s, d) = gibbs(r.weights(), &logs)?;
        s_y.push(s);
        d_j.push(d);
    }

    let logs: Vec<f64> = (0..n).map(|x| conditional_log_sum(prob, f, x)).collect();
    let (input_from_f, input_log_normalizer) = gibbs(prob.q_x.probs(), &logs)?;

    Ok(ProofWitnesses {
        s_x,
        s_y,
        d0,
        d_j,
        input_from_f,
        input_log_normalizer,
    })
}
