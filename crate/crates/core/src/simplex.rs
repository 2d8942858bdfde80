//! Search machinery on the probability simplex (and products of simplices):
//! deterministic grids, multiplicative mirror ascent with backtracking, and
//! a derivative-free pattern search used for local refinement.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Knobs shared by every multi-start optimizer in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tol: f64,
    /// Alphabets up to this size are certified by a simplex grid.
    pub grid_threshold: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            seed: 0,
            max_iter: 10_000,
            tol: 1e-10,
            grid_threshold: 3,
        }
    }
}

/// Grid denominator used for certification: step `1e-3` on the binary
/// simplex, `1e-2` on the ternary one, `2e-2` on four symbols.
pub fn grid_denominator(dim: usize) -> Option<usize> {
    match dim {
        1 => Some(1),
        2 => Some(1000),
        3 => Some(100),
        4 => Some(50),
        _ => None,
    }
}

/// Calls `visit` on every point of `{p : p_i = k_i / n, sum k_i = n}`.
pub fn for_each_grid_point(dim: usize, n: usize, mut visit: impl FnMut(&[f64])) {
    fn fill(i: usize, remaining: usize, n: usize, point: &mut [f64], visit: &mut dyn FnMut(&[f64])) {
        if i + 1 == point.len() {
            point[i] = remaining as f64 / n as f64;
            visit(point);
            return;
        }
        for k in 0..=remaining {
            point[i] = k as f64 / n as f64;
            fill(i + 1, remaining - k, n, point, visit);
        }
    }
    if dim == 0 {
        return;
    }
    let mut point = vec![0.0; dim];
    fill(0, n, n, &mut point, &mut visit);
}

/// Spreads a point of the `support.len()`-simplex back onto the full
/// alphabet.
pub(crate) fn embed(sub: &[f64], support: &[usize], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for (&x, &v) in support.iter().zip(sub) {
        p[x] = v;
    }
    p
}

/// Independent stream for restart `index`.
pub(crate) fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Uniform (flat Dirichlet) draw supported on `support`.
pub(crate) fn random_point(rng: &mut ChaCha8Rng, support: &[usize], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    let mut sum = 0.0;
    for &x in support {
        let u: f64 = rng.random();
        let e = -(1.0 - u).ln();
        p[x] = e;
        sum += e;
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

#[derive(Debug, Clone)]
pub(crate) struct Ascent {
    pub point: Vec<f64>,
    pub value: f64,
}

const LOG_FLOOR: f64 = -700.0;

/// Multiplicative (entropic mirror) ascent: `p <- p exp(eta g) / Z`, with
/// `eta` halved from 1 until the objective improves. Zero coordinates of
/// `start` stay zero.
pub(crate) fn mirror_ascent(
    start: &[f64],
    value: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64], &mut [f64]),
    max_iter: usize,
    tol: f64,
) -> Ascent {
    let n = start.len();
    let active: Vec<usize> = (0..n).filter(|&i| start[i] > 0.0).collect();
    let mut logp: Vec<f64> = start
        .iter()
        .map(|&v| if v > 0.0 { v.ln().max(LOG_FLOOR) } else { f64::NEG_INFINITY })
        .collect();
    let mut p = from_logs(&logp, &active);
    let mut current = value(&p);
    let mut g = vec![0.0; n];
    let mut trial_log = logp.clone();
    for _ in 0..max_iter {
        grad(&p, &mut g);
        if active.iter().any(|&i| !g[i].is_finite()) {
            break;
        }
        let mut eta = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for &i in &active {
                trial_log[i] = logp[i] + eta * g[i];
            }
            renormalize_logs(&mut trial_log, &active);
            let q = from_logs(&trial_log, &active);
            let v = value(&q);
            if v > current {
                accepted = Some((q, v));
                break;
            }
            eta *= 0.5;
        }
        let Some((q, v)) = accepted else { break };
        let gain = v - current;
        logp.copy_from_slice(&trial_log);
        p = q;
        current = v;
        if gain < tol {
            break;
        }
    }
    Ascent { point: p, value: current }
}

fn renormalize_logs(logp: &mut [f64], active: &[usize]) {
    let max = active
        .iter()
        .map(|&i| logp[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + active
            .iter()
            .map(|&i| (logp[i] - max).exp())
            .sum::<f64>()
            .ln();
    for &i in active {
        logp[i] = (logp[i] - lse).max(LOG_FLOOR);
    }
}

fn from_logs(logp: &[f64], active: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; logp.len()];
    let mut sum = 0.0;
    for &i in active {
        p[i] = logp[i].exp();
        sum += p[i];
    }
    for &i in active {
        p[i] /= sum;
    }
    p
}

/// Derivative-free minimization over a product of simplices. `blocks`
/// partitions the coordinates; mass only moves within a block and only
/// between coordinates flagged in `active`.
pub(crate) fn pattern_search(
    start: Vec<f64>,
    blocks: &[Range<usize>],
    active: &[bool],
    f: &dyn Fn(&[f64]) -> f64,
    initial_step: f64,
    min_step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = initial_step;
    let mut evals = 1;
    let mut trial = x.clone();
    while step >= min_step && evals < max_evals {
        let mut improved = false;
        for block in blocks {
            for i in block.clone() {
                for k in block.clone() {
                    if i == k || !active[i] || !active[k] || x[i] <= 0.0 {
                        continue;
                    }
                    let delta = step.min(x[i]);
                    trial.copy_from_slice(&x);
                    trial[i] -= delta;
                    trial[k] += delta;
                    if trial[i] < 1e-300 {
                        trial[i] = 0.0;
                    }
                    let ft = f(&trial);
                    evals += 1;
                    if ft < fx {
                        x.copy_from_slice(&trial);
                        fx = ft;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_counts() {
        let mut n = 0;
        for_each_grid_point(2, 1000, |_| n += 1);
        assert_eq!(n, 1001);
        let mut n = 0;
        let mut ok = true;
        for_each_grid_point(3, 100, |p| {
            n += 1;
            ok &= (p.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        });
        assert_eq!(n, 5151);
        assert!(ok);
        let mut pts = Vec::new();
        for_each_grid_point(3, 2, |p| pts.push(p.to_vec()));
        assert_eq!(pts.len(), 6);
        assert!(pts.contains(&vec![1.0, 0.0, 0.0]));
        assert!(pts.contains(&vec![0.0, 0.5, 0.5]));
    }

    #[test]
    fn ascent_finds_entropy_maximum() {
        // maximize H(p): the uniform distribution.
        let value = |p: &[f64]| -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
        let grad = |p: &[f64], g: &mut [f64]| {
            for (gi, &pi) in g.iter_mut().zip(p) {
                *gi = -pi.ln();
            }
        };
        let a = mirror_ascent(&[0.7, 0.2, 0.1], &value, &grad, 1000, 1e-14);
        assert_abs_diff_eq!(a.value, 3.0f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn pattern_search_on_two_blocks() {
        let target = [0.3, 0.7, 0.2, 0.5, 0.3];
        let f = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let (x, fx) = pattern_search(
            vec![0.5, 0.5, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            &[0..2, 2..5],
            &[true; 5],
            &f,
            0.1,
            1e-10,
            100_000,
        );
        assert!(fx < 1e-16, "{x:?}");
    }
}
