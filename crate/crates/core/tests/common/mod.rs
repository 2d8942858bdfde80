#![allow(dead_code)]

use blduality_core::forward::ForwardProblem;
use blduality_core::prob::{kl_divergence, pushforward};
use blduality_core::{Channel, Dist, Measure};
use proptest::prelude::*;

pub fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, n)
}

pub fn dist(n: usize) -> impl Strategy<Value = Dist> {
    weights(n).prop_map(|w| Dist::from_weights(w).unwrap())
}

/// Like [`dist`], but each entry is zero with probability 1/4 (never all).
pub fn sparse_dist(n: usize) -> impl Strategy<Value = Dist> {
    (weights(n), prop::collection::vec(0u8..4, n)).prop_map(|(mut w, mask)| {
        for (v, &k) in w.iter_mut().zip(&mask) {
            if k == 0 {
                *v = 0.0;
            }
        }
        if w.iter().all(|&v| v == 0.0) {
            w[0] = 1.0;
        }
        Dist::from_weights(w).unwrap()
    })
}

pub fn channel(n_in: usize, n_out: usize) -> impl Strategy<Value = Channel> {
    prop::collection::vec(weights(n_out), n_in).prop_map(|rows| {
        let rows = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Channel::new(rows).unwrap()
    })
}

/// Random forward problem with `|X| in 2..=max_x`, `m in 1..=max_m`,
/// `|Y_j| in 2..=max_y`, normalized references and `c_j in [0.3, 3]`.
pub fn forward_problem(max_x: usize, max_m: usize, max_y: usize) -> impl Strategy<Value = ForwardProblem> {
    (2..=max_x, prop::collection::vec(2..=max_y, 1..=max_m)).prop_flat_map(|(nx, ys)| {
        let m = ys.len();
        let channels: Vec<_> = ys.iter().map(|&ny| channel(nx, ny)).collect();
        let refs: Vec<_> = ys.iter().map(|&ny| dist(ny)).collect();
        (dist(nx), channels, refs, prop::collection::vec(0.3f64..3.0, m)).prop_map(|(q, w, r, c)| {
            ForwardProblem::new(q, w, r.into_iter().map(Measure::from).collect(), c).unwrap()
        })
    })
}

pub fn binary_problem() -> impl Strategy<Value = ForwardProblem> {
    prop::collection::vec(0.3f64..3.0, 1..=2).prop_flat_map(binary_problem_with)
}

pub fn binary_problem_with(c: Vec<f64>) -> impl Strategy<Value = ForwardProblem> {
    let m = c.len();
    (
        dist(2),
        prop::collection::vec(channel(2, 2), m),
        prop::collection::vec(dist(2), m),
    )
        .prop_map(move |(q, w, r)| {
            ForwardProblem::new(q, w, r.into_iter().map(Measure::from).collect(), c.clone()).unwrap()
        })
}

/// The entropy-side objective rebuilt from the divergence primitives.
pub fn oracle_objective(prob: &ForwardProblem, p: &Dist) -> f64 {
    let mut v = -kl_divergence(p, prob.q_x()).unwrap();
    for ((w, r), &c) in prob.channels().iter().zip(prob.refs()).zip(prob.c()) {
        v += c * kl_divergence(&pushforward(p, w).unwrap(), r).unwrap();
    }
    v
}

/// Maximum of [`oracle_objective`] on the binary simplex grid with step `1/n`.
pub fn binary_grid_max(prob: &ForwardProblem, n: usize) -> f64 {
    (0..=n)
        .map(|k| oracle_objective(prob, &Dist::new(vec![1.0 - k as f64 / n as f64, k as f64 / n as f64]).unwrap()))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum of [`oracle_objective`] on the ternary simplex grid with step `1/n`.
pub fn ternary_grid_max(prob: &ForwardProblem, n: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        for j in 0..=n - i {
            let p = vec![i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
            best = best.max(oracle_objective(prob, &Dist::from_weights(p).unwrap()));
        }
    }
    best
}
