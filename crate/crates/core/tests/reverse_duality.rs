mod common;

use blduality_core::forward::{best_constant_entropy, ForwardProblem};
use blduality_core::prob::{kl_divergence, pushforward};
use blduality_core::reverse::{
    best_constant_reverse, min_coupling_divergence, marginals_of, splitting_extract, sup_formula_f,
    verify_reverse_functional, Coupling, ReverseProblem, ReverseVerdict,
};
use blduality_core::simplex::OptimizerOptions;
use blduality_core::{Channel, Dist, Measure};
use common::{channel, dist};
use proptest::prelude::*;

fn opts() -> OptimizerOptions {
    OptimizerOptions::default()
}

/// Two binary inputs into a random MAC with `|Y| in 2..=3`.
fn binary_mac_problem() -> impl Strategy<Value = ReverseProblem> {
    (2usize..=3).prop_flat_map(|ny| {
        (
            channel(4, ny),
            prop::collection::vec(dist(2), 2),
            dist(ny),
            prop::collection::vec(0.3f64..2.0, 2),
        )
            .prop_map(|(w, q, r, c)| ReverseProblem::new(w, q, Measure::from(r), c).unwrap())
    })
}

/// Iterative proportional fitting of a positive seed onto two marginals.
fn ipf(seed: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let (na, nb) = (a.len(), b.len());
    let mut p = seed.to_vec();
    for _ in 0..500 {
        for (i, &ai) in a.iter().enumerate() {
            let s: f64 = p[i * nb..(i + 1) * nb].iter().sum();
            p[i * nb..(i + 1) * nb].iter_mut().for_each(|v| *v *= ai / s);
        }
        for (k, &bk) in b.iter().enumerate() {
            let s: f64 = (0..na).map(|i| p[i * nb + k]).sum();
            (0..na).for_each(|i| p[i * nb + k] *= bk / s);
        }
    }
    p
}

fn output_divergence(joint: &[f64], w: &Channel, r: &Measure) -> f64 {
    let joint = joint.iter().map(|v| v.max(0.0)).collect();
    let py = pushforward(&Dist::from_weights(joint).unwrap(), w).unwrap();
    kl_divergence(&py, r).unwrap()
}

/// Inner minimum for binary marginals by ternary search over the one free cell.
fn binary_coupling_min(a: f64, b: f64, w: &Channel, r: &Measure) -> f64 {
    let (mut lo, mut hi) = ((a + b - 1.0).max(0.0), a.min(b));
    let value = |t: f64| output_divergence(&[t, a - t, b - t, 1.0 - a - b + t], w, r);
    for _ in 0..100 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if value(m1) <= value(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    value(0.5 * (lo + hi))
}

/// Scales `big_f` so the pointwise constraint is tight at its worst cell.
fn make_admissible(prob: &ReverseProblem, big_f: &[f64], fs: &[Vec<f64>]) -> Vec<f64> {
    let shape = prob.shape();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..prob.mac().n_in() {
        let digits = [i / shape[1], i % shape[1]];
        let rhs: f64 = (0..2).map(|j| prob.c()[j] * fs[j][digits[j]].ln()).sum();
        let lhs: f64 = prob.mac().row(i).iter().zip(big_f).map(|(&w, &f)| w * f.ln()).sum();
        worst = worst.max(rhs - lhs);
    }
    big_f.iter().map(|v| v * worst.exp()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The Frank-Wolfe coupling is no worse than any other coupling.
    #[test]
    fn coupling_is_minimal(prob in binary_mac_problem(), p in prop::collection::vec(dist(2), 2), seeds in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 4), 20)) {
        let sol = min_coupling_divergence(&p, prob.mac(), prob.r_y(), &opts()).unwrap();
        prop_assert!(sol.fw_gap <= 1e-10);
        for seed in &seeds {
            let joint = ipf(seed, p[0].probs(), p[1].probs());
            let c = Coupling::new(Dist::from_weights(joint.clone()).unwrap(), p.clone()).unwrap();
            prop_assert!(sol.value <= output_divergence(c.joint().probs(), prob.mac(), prob.r_y()) + 1e-9);
        }
        let m = marginals_of(sol.coupling.joint().probs(), &[2, 2]);
        for (found, want) in m.iter().zip(&p) {
            for (x, y) in found.iter().zip(want.probs()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
        let oracle = binary_coupling_min(p[0].probs()[0], p[1].probs()[0], prob.mac(), prob.r_y());
        prop_assert!((sol.value - oracle).abs() <= 1e-8, "{} vs {oracle}", sol.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The outer search agrees with a brute-force grid over both marginals.
    #[test]
    fn binary_matches_grid(prob in binary_mac_problem()) {
        let rep = best_constant_reverse(&prob, &opts()).unwrap();
        let (q0, q1) = (prob.marginals()[0].probs(), prob.marginals()[1].probs());
        let mut grid = f64::INFINITY;
        let n = 60;
        for i in 0..=n {
            for k in 0..=n {
                let (a, b) = (i as f64 / n as f64, k as f64 / n as f64);
                let input = prob.c()[0] * kl_divergence(&Dist::bernoulli(1.0 - a).unwrap(), q0).unwrap()
                    + prob.c()[1] * kl_divergence(&Dist::bernoulli(1.0 - b).unwrap(), q1).unwrap();
                grid = grid.min(input - binary_coupling_min(a, b, prob.mac(), prob.r_y()));
            }
        }
        prop_assert!(rep.d_star <= grid + 1e-9 && rep.d_star >= grid - 5e-3, "{} vs {grid}", rep.d_star);
    }

    /// Admissible pairs satisfy the functional inequality at the optimized constant,
    /// and the pair built from the witnesses is tight.
    #[test]
    fn functional_sound_and_tight(prob in binary_mac_problem(), pairs in prop::collection::vec((prop::collection::vec(0.05f64..3.0, 3), prop::collection::vec(0.05f64..3.0, 2), prop::collection::vec(0.05f64..3.0, 2)), 200)) {
        let rep = best_constant_reverse(&prob, &opts()).unwrap();
        prop_assume!(rep.d_star.is_finite());
        let ny = prob.mac().n_out();
        for (big, f0, f1) in &pairs {
            let fs = vec![f0.clone(), f1.clone()];
            let big_f = make_admissible(&prob, &big[..ny], &fs);
            match verify_reverse_functional(&prob, &big_f, &fs, rep.d_star - 1e-6).unwrap() {
                ReverseVerdict::Admissible { gap, rhs, .. } => prop_assert!(gap >= -1e-12 * rhs, "gap {gap}"),
                ReverseVerdict::Rejected { violation, .. } => prop_assert!(false, "rejected by {violation}"),
            }
        }

        let split = splitting_extract(&rep.witness_coupling, prob.mac(), prob.r_y(), prob.c()).unwrap();
        prop_assert!(split.residual <= 1e-4, "residual {}", split.residual);
        let py = pushforward(rep.witness_coupling.joint(), prob.mac()).unwrap();
        let big_f: Vec<f64> = py.probs().iter().zip(prob.r_y().weights()).map(|(p, r)| p / r).collect();
        let shift = split.residual / prob.c().iter().sum::<f64>();
        let fs: Vec<Vec<f64>> = split.g.iter().map(|g| g.iter().map(|v| (v - shift).exp()).collect()).collect();
        match verify_reverse_functional(&prob, &big_f, &fs, rep.d_star).unwrap() {
            ReverseVerdict::Admissible { gap, lhs, .. } => prop_assert!(gap.abs() <= 1e-3 * lhs, "gap {gap}"),
            ReverseVerdict::Rejected { violation, .. } => prop_assert!(false, "rejected by {violation}"),
        }
    }

    /// With one input through the identity the reverse constant is a rescaled negated forward constant.
    #[test]
    fn identity_mac_mirrors_forward(n in 2usize..=3, q in dist(3), r in dist(3), c in 0.4f64..2.5) {
        let q = Dist::from_weights(q.probs()[..n].to_vec()).unwrap();
        let r = Dist::from_weights(r.probs()[..n].to_vec()).unwrap();
        let id = Channel::identity(n).unwrap();
        let rev = ReverseProblem::new(id.clone(), vec![q.clone()], Measure::from(r.clone()), vec![c]).unwrap();
        let fwd = ForwardProblem::new(q, vec![id], vec![Measure::from(r)], vec![1.0 / c]).unwrap();
        let dr = best_constant_reverse(&rev, &opts()).unwrap().d_star;
        let df = best_constant_entropy(&fwd, &opts()).unwrap().d_star;
        prop_assert!((dr + c * df).abs() <= 1e-6 * (1.0 + dr.abs()), "{dr} vs {}", -c * df);
    }
}

proptest! {
    /// For a deterministic MAC the fiberwise maximum is the smallest admissible F.
    #[test]
    fn sup_formula_is_minimal_admissible(fs in prop::collection::vec(prop::collection::vec(0.05f64..3.0, 2), 3), c in prop::collection::vec(0.3f64..2.0, 3), q in prop::collection::vec(dist(2), 3)) {
        let phi: Vec<usize> = (0..8).map(|i: usize| i.count_ones() as usize % 2).collect();
        let big_f = sup_formula_f(&fs, &c, &phi, 2).unwrap();
        for y in 0..2 {
            let brute = (0..8)
                .filter(|&i| phi[i] == y)
                .map(|i| (0..3).map(|j| fs[j][(i >> (2 - j)) & 1].powf(c[j])).product::<f64>())
                .fold(0.0, f64::max);
            prop_assert!((big_f[y] - brute).abs() <= 1e-12 * brute);
        }
        let mac = Channel::from_map(&phi, 2).unwrap();
        let prob = ReverseProblem::new(mac, q, Measure::counting(2).unwrap(), c).unwrap();
        let admissible = |f: &[f64]| matches!(verify_reverse_functional(&prob, f, &fs, 0.0).unwrap(), ReverseVerdict::Admissible { .. });
        prop_assert!(admissible(&big_f));
        for y in 0..2 {
            let mut lower = big_f.clone();
            lower[y] *= 1.0 - 1e-6;
            prop_assert!(!admissible(&lower));
        }
    }
}

#[test]
fn disjoint_support_is_minus_infinity() {
    // Y = X_1 XOR X_2 with R_Y a point mass at 0: only diagonal couplings fit,
    // which fails for unequal marginals.
    let phi = [0, 1, 1, 0];
    let mac = Channel::from_map(&phi, 2).unwrap();
    let r = Measure::new(vec![1.0, 0.0], true).unwrap();
    let q = vec![Dist::new(vec![0.5, 0.5]).unwrap(), Dist::new(vec![0.5, 0.5]).unwrap()];
    let p = vec![Dist::new(vec![0.2, 0.8]).unwrap(), Dist::new(vec![0.7, 0.3]).unwrap()];
    let sol = min_coupling_divergence(&p, &mac, &r, &opts()).unwrap();
    assert_eq!(sol.value, f64::INFINITY);
    let prob = ReverseProblem::new(mac, q, r, vec![1.0, 1.0]).unwrap();
    assert_eq!(best_constant_reverse(&prob, &opts()).unwrap().d_star, f64::NEG_INFINITY);
}
