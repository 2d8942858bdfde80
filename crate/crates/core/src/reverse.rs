//! The reverse (multiple access channel) duality.
//!
//! Given a channel `Q_{Y|X_1..X_m}`, input laws `Q_{X_j}`, a reference
//! `R_Y` and weights `c_j`, the functional inequality
//!
//! ```text
//! sum_y R_Y(y) F(y) >= e^d prod_j ( sum_x Q_{X_j}(x) f_j(x) )^(c_j)
//! whenever E[ln F(Y) | X^m = x^m] >= sum_j c_j ln f_j(x_j)
//! ```
//!
//! is equivalent to: for all `P_{X_j}` there is a coupling with
//! `D(P_Y || R_Y) + d <= sum_j c_j D(P_{X_j} || Q_{X_j})`. The inner
//! minimization over couplings is convex and is solved by pairwise
//! Frank-Wolfe over the transportation polytope; the outer one is not, and
//! is searched by grid (small binary cases) plus pattern search.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::lp::{solve_lp, LpOutcome};
use crate::prob::{kl_raw, product_dist, push_raw, unravel, Channel, Dist, Measure};
use crate::simplex::{for_each_grid_point, grid_denominator, pattern_search, random_point, restart_rng, OptimizerOptions};

/// Marginal agreement required of a [`Coupling`].
pub const MARGINAL_TOL: f64 = 1e-9;
/// Cells lighter than this are treated as off the coupling's support.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseProblem {
    mac: Channel,
    marginals: Vec<Dist>,
    r_y: Measure,
    c: Vec<f64>,
}

impl ReverseProblem {
    pub fn new(mac: Channel, marginals: Vec<Dist>, r_y: Measure, c: Vec<f64>) -> Result<Self> {
        let m = marginals.len();
        if m == 0 {
            return Err(Error::Empty);
        }
        if c.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: c.len() });
        }
        if c.iter().any(|&cj| !(cj > 0.0 && cj.is_finite())) {
            return Err(invalid("weights c_j must be positive and finite"));
        }
        let cells: usize = marginals.iter().map(Dist::len).product();
        if mac.n_in() != cells {
            return Err(Error::DimensionMismatch { expected: cells, found: mac.n_in() });
        }
        if r_y.len() != mac.n_out() {
            return Err(Error::DimensionMismatch { expected: mac.n_out(), found: r_y.len() });
        }
        Ok(Self { mac, marginals, r_y, c })
    }

    pub fn mac(&self) -> &Channel {
        &self.mac
    }

    pub fn marginals(&self) -> &[Dist] {
        &self.marginals
    }

    pub fn r_y(&self) -> &Measure {
        &self.r_y
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn m(&self) -> usize {
        self.marginals.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.marginals.iter().map(Dist::len).collect()
    }
}

/// Marginals of a joint vector on the row-major product alphabet `shape`.
pub fn marginals_of(joint: &[f64], shape: &[usize]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    for (i, &p) in joint.iter().enumerate() {
        for (j, &xj) in unravel(i, shape).iter().enumerate() {
            out[j][xj] += p;
        }
    }
    out
}

/// A joint law on `X_1 x .. x X_m` whose marginals match the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    joint: Dist,
    targets: Vec<Dist>,
}

impl Coupling {
    pub fn new(joint: Dist, targets: Vec<Dist>) -> Result<Self> {
        let shape: Vec<usize> = targets.iter().map(Dist::len).collect();
        let cells: usize = shape.iter().product();
        if joint.len() != cells || targets.is_empty() {
            return Err(Error::DimensionMismatch { expected: cells, found: joint.len() });
        }
        for (found, target) in marginals_of(joint.probs(), &shape).iter().zip(&targets) {
            if found.iter().zip(target.probs()).any(|(a, b)| (a - b).abs() > MARGINAL_TOL) {
                return Err(invalid("joint marginals do not match the targets"));
            }
        }
        Ok(Self { joint, targets })
    }

    /// The product coupling.
    pub fn independent(targets: Vec<Dist>) -> Result<Self> {
        let joint = product_dist(&targets)?;
        Ok(Self { joint, targets })
    }

    pub fn joint(&self) -> &Dist {
        &self.joint
    }

    pub fn targets(&self) -> &[Dist] {
        &self.targets
    }

    pub fn shape(&self) -> Vec<usize> {
        self.targets.iter().map(Dist::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSolution {
    pub coupling: Coupling,
    /// `D(P_Y || R_Y)`, `+inf` when every coupling escapes `supp R_Y`.
    pub value: f64,
    /// Frank-Wolfe duality gap, an upper bound on `value - optimum`.
    pub fw_gap: f64,
    pub iterations: usize,
}

/// The transportation polytope restricted to cells that neither charge a
/// zero-mass symbol nor reach an output outside `supp R_Y`.
struct Polytope {
    n_cells: usize,
    cells: Vec<usize>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Polytope {
    fn new(targets: &[&[f64]], mac: &Channel, r: &[f64]) -> Self {
        let shape: Vec<usize> = targets.iter().map(|t| t.len()).collect();
        let n_cells: usize = shape.iter().product();
        let cells: Vec<usize> = (0..n_cells)
            .filter(|&i| {
                let charged = unravel(i, &shape)
                    .iter()
                    .zip(targets)
                    .all(|(&xj, t)| t[xj] > 0.0);
                let inside = mac.row(i).iter().zip(r).all(|(&w, &ry)| w == 0.0 || ry > 0.0);
                charged && inside
            })
            .collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (j, t) in targets.iter().enumerate() {
            let mut first = true;
            for (xj, &mass) in t.iter().enumerate() {
                if mass <= 0.0 {
                    continue;
                }
                // One row per block is implied by total mass.
                if first && j > 0 {
                    first = false;
                    continue;
                }
                first = false;
                a.push(
                    cells
                        .iter()
                        .map(|&i| if unravel(i, &shape)[j] == xj { 1.0 } else { 0.0 })
                        .collect(),
                );
                b.push(mass);
            }
        }
        Self { n_cells, cells, a, b }
    }

    /// Vertex minimizing `<cost, .>`, spread back onto all cells.
    fn lmo(&self, cost: &[f64]) -> Option<Vec<f64>> {
        let c: Vec<f64> = self.cells.iter().map(|&i| cost[i]).collect();
        match solve_lp(&self.a, &self.b, &c) {
            LpOutcome::Optimal { x, .. } => {
                let mut full = vec![0.0; self.n_cells];
                for (&i, v) in self.cells.iter().zip(x) {
                    full[i] = v;
                }
                Some(full)
            }
            _ => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Root of the increasing `h'(t) = sum dY ln((PY + t dY)/R)` on `[0, t_max]`.
fn line_search(py: &[f64], dy: &[f64], r: &[f64], t_max: f64) -> f64 {
    let deriv = |t: f64| {
        let mut s = 0.0;
        for ((&p, &d), &rv) in py.iter().zip(dy).zip(r) {
            if d == 0.0 {
                continue;
            }
            let v = p + t * d;
            s += if v <= 0.0 {
                if d < 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                d * (v / rv).ln()
            };
        }
        s
    };
    if deriv(t_max) <= 0.0 {
        return t_max;
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-17 * t_max.max(1e-300) {
            break;
        }
    }
    lo
}

struct RawSolution {
    x: Vec<f64>,
    value: f64,
    gap: f64,
    iterations: usize,
}

fn output_of(x: &[f64], mac: &Channel) -> Vec<f64> {
    let mut py = vec![0.0; mac.n_out()];
    push_raw(x, mac, &mut py);
    py
}

fn solve_coupling(targets: &[&[f64]], mac: &Channel, r: &[f64], tol: f64, max_iter: usize) -> RawSolution {
    let poly = Polytope::new(targets, mac, r);
    let n = poly.n_cells;
    let shape: Vec<usize> = targets.iter().map(|t| t.len()).collect();

    let product: Vec<f64> = (0..n)
        .map(|i| unravel(i, &shape).iter().zip(targets).map(|(&xj, t)| t[xj]).product())
        .collect();
    let product_inside = (0..n).all(|i| product[i] == 0.0 || poly.cells.contains(&i));

    let start = if product_inside {
        product
    } else {
        // Average a few vertices for a point deep inside the restricted face.
        let mut rng = restart_rng(0x5eed, 0);
        let all: Vec<usize> = (0..n).collect();
        let mut acc = vec![0.0; n];
        let k = 8;
        for _ in 0..k {
            let cost = random_point(&mut rng, &all, n);
            match poly.lmo(&cost) {
                Some(v) => acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b / k as f64),
                None => {
                    return RawSolution {
                        x: (0..n)
                            .map(|i| unravel(i, &shape).iter().zip(targets).map(|(&xj, t)| t[xj]).product())
                            .collect(),
                        value: f64::INFINITY,
                        gap: 0.0,
                        iterations: 0,
                    }
                }
            }
        }
        acc
    };

    let mut x = start.clone();
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(start, 1.0)];
    let mut py = output_of(&x, mac);
    let mut grad = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        for &i in &poly.cells {
            grad[i] = mac
                .row(i)
                .iter()
                .zip(&py)
                .zip(r)
                .filter(|((&w, _), _)| w > 0.0)
                .map(|((&w, &p), &rv)| w * (p.max(f64::MIN_POSITIVE) / rv).ln())
                .sum();
        }
        let Some(s) = poly.lmo(&grad) else { break };
        gap = dot(&grad, &x) - dot(&grad, &s);
        if gap <= tol {
            break;
        }
        iterations += 1;
        let (away, _) = atoms
            .iter()
            .enumerate()
            .map(|(k, (a, _))| (k, dot(&grad, a)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let t_max = atoms[away].1;
        let d: Vec<f64> = s.iter().zip(&atoms[away].0).map(|(a, b)| a - b).collect();
        let mut dy = vec![0.0; mac.n_out()];
        push_raw(&d, mac, &mut dy);
        let t = line_search(&py, &dy, r, t_max);
        if t <= 0.0 {
            break;
        }
        x.iter_mut().zip(&d).for_each(|(a, b)| *a = (*a + t * b).max(0.0));
        py = output_of(&x, mac);
        atoms[away].1 -= t;
        match atoms
            .iter_mut()
            .find(|(a, _)| a.iter().zip(&s).all(|(u, v)| (u - v).abs() < 1e-15))
        {
            Some(atom) => atom.1 += t,
            None => atoms.push((s, t)),
        }
        atoms.retain(|(_, w)| *w > 1e-15);
    }
    let value = kl_raw(&py, r);
    RawSolution { x, value, gap, iterations }
}

fn check_mac(marginals: &[Dist], mac: &Channel, r_y: &Measure) -> Result<()> {
    if marginals.is_empty() {
        return Err(Error::Empty);
    }
    let cells: usize = marginals.iter().map(Dist::len).product();
    if mac.n_in() != cells {
        return Err(Error::DimensionMismatch { expected: cells, found: mac.n_in() });
    }
    if r_y.len() != mac.n_out() {
        return Err(Error::DimensionMismatch { expected: mac.n_out(), found: r_y.len() });
    }
    Ok(())
}

/// `min D(P_Y || R_Y)` over couplings of `marginals`, with `P_Y` the
/// output of `mac`. Stops once the Frank-Wolfe gap drops to `opts.tol`.
pub fn min_coupling_divergence(
    marginals: &[Dist],
    mac: &Channel,
    r_y: &Measure,
    opts: &OptimizerOptions,
) -> Result<CouplingSolution> {
    check_mac(marginals, mac, r_y)?;
    let targets: Vec<&[f64]> = marginals.iter().map(Dist::probs).collect();
    let sol = solve_coupling(&targets, mac, r_y.weights(), opts.tol, opts.max_iter);
    let coupling = if sol.value.is_finite() {
        Coupling::new(Dist::from_weights(sol.x)?, marginals.to_vec())?
    } else {
        Coupling::independent(marginals.to_vec())?
    };
    Ok(CouplingSolution {
        coupling,
        value: sol.value,
        fw_gap: sol.gap,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseReport {
    /// `inf_{P_j} sum_j c_j D(P_j || Q_j) - min_coupling D(P_Y || R_Y)`;
    /// `-inf` when some marginals admit no coupling inside `supp R_Y`.
    pub d_star: f64,
    pub witness_marginals: Vec<Dist>,
    pub witness_coupling: Coupling,
    pub fw_gap: f64,
    pub certified_by_grid: bool,
}

fn reverse_objective(prob: &ReverseProblem, flat: &[f64], tol: f64, max_iter: usize) -> (f64, RawSolution) {
    let shape = prob.shape();
    let mut targets = Vec::with_capacity(shape.len());
    let mut offset = 0;
    let mut input = 0.0;
    for (j, &n) in shape.iter().enumerate() {
        let pj = &flat[offset..offset + n];
        input += prob.c[j] * kl_raw(pj, prob.marginals[j].probs());
        targets.push(pj);
        offset += n;
    }
    let sol = solve_coupling(&targets, &prob.mac, prob.r_y.weights(), tol, max_iter);
    let v = if sol.value == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        input - sol.value
    };
    (v, sol)
}

pub fn best_constant_reverse(prob: &ReverseProblem, opts: &OptimizerOptions) -> Result<ReverseReport> {
    best_constant_reverse_with(prob, opts, &Sequential)
}

/// Grid resolution for the outer search, when the problem is small enough.
fn outer_grid(prob: &ReverseProblem) -> Option<Vec<(Vec<usize>, usize)>> {
    let supports: Vec<Vec<usize>> = prob
        .marginals
        .iter()
        .map(|q| (0..q.len()).filter(|&x| q.probs()[x] > 0.0).collect())
        .collect();
    let den = match prob.m() {
        1 if supports[0].len() <= 3 => grid_denominator(supports[0].len())?,
        1 | 2 if supports.iter().all(|s| s.len() <= 2) => 100,
        _ => return None,
    };
    Some(supports.into_iter().map(|s| (s, den)).collect())
}

pub fn best_constant_reverse_with<E: Executor>(
    prob: &ReverseProblem,
    opts: &OptimizerOptions,
    exec: &E,
) -> Result<ReverseReport> {
    let shape = prob.shape();
    let total: usize = shape.iter().sum();
    let mut blocks = Vec::new();
    let mut active = vec![false; total];
    let mut offset = 0;
    for q in &prob.marginals {
        for (x, &v) in q.probs().iter().enumerate() {
            active[offset + x] = v > 0.0;
        }
        blocks.push(offset..offset + q.len());
        offset += q.len();
    }
    let tol = opts.tol;
    let max_iter = opts.max_iter;
    let f = |flat: &[f64]| reverse_objective(prob, flat, tol, max_iter).0;

    let mut candidates: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut certified = false;

    if let Some(grid) = outer_grid(prob) {
        let per_block: Vec<Vec<Vec<f64>>> = grid
            .iter()
            .zip(&shape)
            .map(|((support, den), &n)| {
                let mut pts = Vec::new();
                for_each_grid_point(support.len(), *den, |sub| {
                    let mut p = vec![0.0; n];
                    for (&x, &v) in support.iter().zip(sub) {
                        p[x] = v;
                    }
                    pts.push(p);
                });
                pts
            })
            .collect();
        let counts: Vec<usize> = per_block.iter().map(Vec::len).collect();
        let n_points: usize = counts.iter().product();
        let values = exec.map(n_points, |k| {
            let idx = unravel(k, &counts);
            let flat: Vec<f64> = idx.iter().enumerate().flat_map(|(j, &i)| per_block[j][i].iter().copied()).collect();
            f(&flat)
        });
        let (k_best, _) = values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, &v)| if v < best.1 { (k, v) } else { best });
        let idx = unravel(k_best, &counts);
        let flat: Vec<f64> = idx.iter().enumerate().flat_map(|(j, &i)| per_block[j][i].iter().copied()).collect();
        let step = 1.0 / grid[0].1 as f64;
        candidates.push((flat.clone(), values[k_best]));
        if values[k_best].is_finite() {
            candidates.push(pattern_search(flat, &blocks, &active, &f, step, 1e-9, 4000));
        }
        certified = true;
    }

    let all: Vec<Vec<usize>> = prob
        .marginals
        .iter()
        .map(|q| (0..q.len()).filter(|&x| q.probs()[x] > 0.0).collect())
        .collect();
    let runs = exec.map(opts.restarts.max(1), |i| {
        let start: Vec<f64> = if i == 0 {
            prob.marginals.iter().flat_map(|q| q.probs().iter().copied()).collect()
        } else {
            let mut rng = restart_rng(opts.seed, i);
            prob.marginals
                .iter()
                .zip(&all)
                .flat_map(|(q, s)| random_point(&mut rng, s, q.len()))
                .collect()
        };
        pattern_search(start, &blocks, &active, &f, 0.1, 1e-9, 2000)
    });
    candidates.extend(runs);

    let (best_flat, _) = candidates
        .into_iter()
        .fold((Vec::new(), f64::INFINITY), |best, cur| if cur.1 < best.1 || best.0.is_empty() { cur } else { best });
    let (d_star, sol) = reverse_objective(prob, &best_flat, tol, max_iter);

    let mut witness_marginals = Vec::with_capacity(prob.m());
    let mut offset = 0;
    for &n in &shape {
        witness_marginals.push(Dist::from_weights(best_flat[offset..offset + n].to_vec())?);
        offset += n;
    }
    let witness_coupling = if sol.value.is_finite() {
        Coupling::new(Dist::from_weights(sol.x)?, witness_marginals.clone())?
    } else {
        Coupling::independent(witness_marginals.clone())?
    };
    Ok(ReverseReport {
        d_star,
        witness_marginals,
        witness_coupling,
        fw_gap: sol.gap,
        certified_by_grid: certified,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    /// `g_j`, `-inf` on symbols the coupling never uses.
    pub g: Vec<Vec<f64>>,
    /// Largest equality defect on the support, or inequality violation off
    /// it.
    pub residual: f64,
    /// The support equations leave more freedom than the additive gauge.
    pub ambiguous: bool,
}

/// `E[ln(dP_Y/dR_Y)(Y) | X^m = x]` for every cell.
fn conditional_information(joint: &[f64], mac: &Channel, r: &[f64]) -> Vec<f64> {
    let py = output_of(joint, mac);
    (0..joint.len())
        .map(|i| {
            let mut s = 0.0;
            for ((&w, &p), &rv) in mac.row(i).iter().zip(&py).zip(r) {
                if w == 0.0 {
                    continue;
                }
                if rv == 0.0 {
                    return f64::INFINITY;
                }
                s += w * (p / rv).ln();
            }
            s
        })
        .collect()
}

fn splitting_residual(e: &[f64], joint: &[f64], shape: &[usize], c: &[f64], g: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, &ei) in e.iter().enumerate() {
        let split: f64 = unravel(i, shape).iter().enumerate().map(|(j, &xj)| c[j] * g[j][xj]).sum();
        if split == f64::NEG_INFINITY || ei == f64::INFINITY {
            continue;
        }
        let defect = if joint[i] > SUPPORT_TOL {
            (ei - split).abs()
        } else {
            (split - ei).max(0.0)
        };
        worst = worst.max(if defect.is_nan() { f64::INFINITY } else { defect });
    }
    worst
}

/// Minimax fit: `min t` with `|e - sum c g| <= t` on the support and
/// `sum c g - e <= t` off it.
fn chebyshev_split(
    e: &[f64],
    joint: &[f64],
    shape: &[usize],
    c: &[f64],
    index: &[Vec<Option<usize>>],
    k: usize,
) -> Option<Vec<f64>> {
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, &ei) in e.iter().enumerate() {
        if !ei.is_finite() {
            continue;
        }
        let digits = unravel(i, shape);
        let mut coef = vec![0.0; k];
        let mut live = true;
        for (j, &xj) in digits.iter().enumerate() {
            match index[j][xj] {
                Some(col) => coef[col] += c[j],
                None => live = false,
            }
        }
        if !live {
            continue;
        }
        rows.push((coef.clone(), ei));
        if joint[i] > SUPPORT_TOL {
            rows.push((coef.iter().map(|v| -v).collect(), -ei));
        }
    }
    // Variables: g+ (k), g- (k), t, one slack per row.
    let n_rows = rows.len();
    let n_vars = 2 * k + 1 + n_rows;
    let mut a = Vec::with_capacity(n_rows);
    let mut b = Vec::with_capacity(n_rows);
    for (r, (coef, rhs)) in rows.into_iter().enumerate() {
        let mut row = vec![0.0; n_vars];
        for col in 0..k {
            row[col] = coef[col];
            row[k + col] = -coef[col];
        }
        row[2 * k] = -1.0;
        row[2 * k + 1 + r] = 1.0;
        a.push(row);
        b.push(rhs);
    }
    let mut cost = vec![0.0; n_vars];
    cost[2 * k] = 1.0;
    match solve_lp(&a, &b, &cost) {
        LpOutcome::Optimal { x, .. } => Some((0..k).map(|col| x[col] - x[k + col]).collect()),
        _ => None,
    }
}

/// Recovers `g_j` with `E[ln(dP_Y/dR_Y)(Y) | x^m] = sum_j c_j g_j(x_j)` on
/// the coupling's support (least squares), checking `>=` off the support.
/// When least squares leaves an off-support violation, a minimax fit over
/// the same constraints is tried and the better of the two kept.
pub fn splitting_extract(coupling: &Coupling, mac: &Channel, r_y: &Measure, c: &[f64]) -> Result<Splitting> {
    check_mac(coupling.targets(), mac, r_y)?;
    let shape = coupling.shape();
    let m = shape.len();
    if c.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: c.len() });
    }
    let joint = coupling.joint().probs();
    let r = r_y.weights();
    let e = conditional_information(joint, mac, r);

    let marg = marginals_of(joint, &shape);
    let mut index: Vec<Vec<Option<usize>>> = Vec::with_capacity(m);
    let mut k = 0;
    for mj in &marg {
        index.push(
            mj.iter()
                .map(|&v| {
                    (v > 0.0).then(|| {
                        k += 1;
                        k - 1
                    })
                })
                .collect(),
        );
    }

    let support: Vec<usize> = (0..joint.len()).filter(|&i| joint[i] > SUPPORT_TOL).collect();
    if support.iter().any(|&i| !e[i].is_finite()) {
        return Err(Error::NoFiniteValue);
    }
    let mut design = DMatrix::<f64>::zeros(support.len(), k);
    let mut rhs = DVector::<f64>::zeros(support.len());
    for (row, &i) in support.iter().enumerate() {
        for (j, &xj) in unravel(i, &shape).iter().enumerate() {
            if let Some(col) = index[j][xj] {
                design[(row, col)] += c[j];
            }
        }
        rhs[row] = e[i];
    }
    let svd = design.svd(true, true);
    let eps = 1e-10 * svd.singular_values.max().max(1.0);
    let rank = svd.rank(eps);
    let ambiguous = k - rank > m - 1;
    let solution = svd.solve(&rhs, eps).map_err(|_| Error::Singular)?;

    let assemble = |flat: &[f64]| -> Vec<Vec<f64>> {
        index
            .iter()
            .map(|cols| {
                cols.iter()
                    .map(|col| col.map_or(f64::NEG_INFINITY, |cidx| flat[cidx]))
                    .collect()
            })
            .collect()
    };
    let mut g = assemble(solution.as_slice());
    let mut residual = splitting_residual(&e, joint, &shape, c, &g);
    if residual > 1e-9 {
        if let Some(flat) = chebyshev_split(&e, joint, &shape, c, &index, k) {
            let alt = assemble(&flat);
            let alt_residual = splitting_residual(&e, joint, &shape, c, &alt);
            if alt_residual < residual {
                g = alt;
                residual = alt_residual;
            }
        }
    }
    Ok(Splitting { g, residual, ambiguous })
}

/// `F(y) = max over the fiber phi^{-1}(y) of prod_j f_j(x_j)^(c_j)`, zero on
/// empty fibers. `phi` lists the output of every cell in row-major order.
pub fn sup_formula_f(fs: &[Vec<f64>], c: &[f64], phi: &[usize], n_y: usize) -> Result<Vec<f64>> {
    if c.len() != fs.len() {
        return Err(Error::DimensionMismatch { expected: fs.len(), found: c.len() });
    }
    let shape: Vec<usize> = fs.iter().map(Vec::len).collect();
    let cells: usize = shape.iter().product();
    if phi.len() != cells {
        return Err(Error::DimensionMismatch { expected: cells, found: phi.len() });
    }
    for f in fs {
        for (index, &value) in f.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidEntry { index, value });
            }
        }
    }
    let mut out = vec![0.0f64; n_y];
    for (i, &y) in phi.iter().enumerate() {
        if y >= n_y {
            return Err(Error::IndexOutOfRange { index: y, len: n_y });
        }
        let v: f64 = unravel(i, &shape)
            .iter()
            .enumerate()
            .map(|(j, &xj)| fs[j][xj].powf(c[j]))
            .product();
        out[y] = out[y].max(v);
    }
    Ok(out)
}

/// Tolerance on `ln` values when checking the pointwise constraint.
pub const ADMISSIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ReverseVerdict {
    /// The pair satisfies the constraint; `gap = lhs - rhs`.
    Admissible { gap: f64, lhs: f64, rhs: f64 },
    /// `E[ln F(Y) | x^m] < sum_j c_j ln f_j(x_j)` at `cell` by `violation`.
    Rejected { cell: usize, violation: f64 },
}

pub fn verify_reverse_functional(prob: &ReverseProblem, big_f: &[f64], fs: &[Vec<f64>], d: f64) -> Result<ReverseVerdict> {
    let shape = prob.shape();
    if big_f.len() != prob.mac.n_out() {
        return Err(Error::DimensionMismatch { expected: prob.mac.n_out(), found: big_f.len() });
    }
    if fs.len() != prob.m() {
        return Err(Error::DimensionMismatch { expected: prob.m(), found: fs.len() });
    }
    for (f, &n) in fs.iter().zip(&shape) {
        if f.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: f.len() });
        }
    }
    for v in fs.iter().flatten().chain(big_f) {
        if !(*v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidEntry { index: 0, value: *v });
        }
    }
    let mut worst: Option<(usize, f64)> = None;
    for i in 0..prob.mac.n_in() {
        let digits = unravel(i, &shape);
        if digits.iter().enumerate().any(|(j, &xj)| prob.marginals[j].probs()[xj] == 0.0) {
            continue;
        }
        let rhs: f64 = digits.iter().enumerate().map(|(j, &xj)| prob.c[j] * fs[j][xj].ln()).sum();
        if rhs == f64::NEG_INFINITY {
            continue;
        }
        let lhs: f64 = prob
            .mac
            .row(i)
            .iter()
            .zip(big_f)
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, &fy)| w * fy.ln())
            .sum();
        let violation = rhs - lhs;
        if violation > ADMISSIBILITY_TOL && worst.is_none_or(|(_, v)| violation > v) {
            worst = Some((i, violation));
        }
    }
    if let Some((cell, violation)) = worst {
        return Ok(ReverseVerdict::Rejected { cell, violation });
    }
    let lhs = dot(prob.r_y.weights(), big_f);
    let rhs = d.exp()
        * fs.iter()
            .zip(&prob.marginals)
            .zip(&prob.c)
            .map(|((f, q), &c)| dot(q.probs(), f).powf(c))
            .product::<f64>();
    Ok(ReverseVerdict::Admissible { gap: lhs - rhs, lhs, rhs })
}
