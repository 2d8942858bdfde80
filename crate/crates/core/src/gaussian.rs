//! Finite-dimensional Gaussian reductions.
//!
//! `F0(K) = -h(X) + sum_j c_j h(Y_j) + c0 Tr[M K]` for `X ~ N(0, K)` and
//! `Y_j = A_j X + b_j + Z_j`, its minimization over covariances (optionally
//! capped by `K <= Sigma`), Nelson's hypercontractivity test
//! `diag(p) >= Sigma`, Wyner's common information of a Gaussian vector, and
//! the best forward constant restricted to Gaussian inputs.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};
use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    check_symmetric, eigh, frobenius_dot, inverse_pd, is_pd, logdet_pd, max_eigenvalue, min_eigenvalue,
    spectral_map, symmetrize, SYM_TOL,
};

/// Eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(m, SYM_TOL)?;
    let min_eig = min_eigenvalue(m);
    if min_eig < -PSD_TOL {
        return Err(Error::NotPsd { min_eig });
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// `Y = A X + b + Z` with `Z ~ N(0, noise)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    noise: DMatrix<f64>,
}

impl GaussianChannel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, noise: DMatrix<f64>) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
        }
        check_square(&noise, a.nrows())?;
        check_psd(&noise)?;
        Ok(Self { a, b, noise: symmetrize(&noise) })
    }

    /// Zero offset.
    pub fn linear(a: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        let b = DVector::zeros(a.nrows());
        Self::new(a, b, noise)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn output_cov(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.a * k * self.a.transpose() + &self.noise))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProblem {
    channels: Vec<GaussianChannel>,
    c: Vec<f64>,
    c0: f64,
    m: DMatrix<f64>,
    sigma_cap: Option<DMatrix<f64>>,
}

impl GaussianProblem {
    /// Weights may be zero, which switches the corresponding term off.
    pub fn new(
        channels: Vec<GaussianChannel>,
        c: Vec<f64>,
        c0: f64,
        m: DMatrix<f64>,
        sigma_cap: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if c.len() != channels.len() {
            return Err(Error::DimensionMismatch { expected: channels.len(), found: c.len() });
        }
        if c.iter().chain([&c0]).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("weights must be nonnegative and finite"));
        }
        let n = m.nrows();
        check_square(&m, n)?;
        check_psd(&m)?;
        for ch in &channels {
            if ch.input_dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: ch.input_dim() });
            }
        }
        if let Some(cap) = &sigma_cap {
            check_square(cap, n)?;
            check_psd(cap)?;
        }
        Ok(Self {
            channels,
            c,
            c0,
            m: symmetrize(&m),
            sigma_cap: sigma_cap.map(|s| symmetrize(&s)),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn channels(&self) -> &[GaussianChannel] {
        &self.channels
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn sigma_cap(&self) -> Option<&DMatrix<f64>> {
        self.sigma_cap.as_ref()
    }

    /// Applies `x -> U x` to the input space: `A_j -> A_j U^T`,
    /// `M -> U M U^T`, `Sigma -> U Sigma U^T`.
    pub fn rotate(&self, u: &DMatrix<f64>) -> Result<Self> {
        check_square(u, self.dim())?;
        let conj = |s: &DMatrix<f64>| symmetrize(&(u * s * u.transpose()));
        Ok(Self {
            channels: self
                .channels
                .iter()
                .map(|ch| GaussianChannel {
                    a: &ch.a * u.transpose(),
                    b: ch.b.clone(),
                    noise: ch.noise.clone(),
                })
                .collect(),
            c: self.c.clone(),
            c0: self.c0,
            m: conj(&self.m),
            sigma_cap: self.sigma_cap.as_ref().map(conj),
        })
    }
}

/// A symmetric positive semidefinite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    k: DMatrix<f64>,
}

impl CovMatrix {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        check_psd(&k)?;
        Ok(Self { k: symmetrize(&k) })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.k
    }
}

/// `h(N(0, S)) = ln((2 pi e)^n |S|)/2`; `-inf` for singular `S`.
fn gaussian_entropy(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows() as f64;
    match logdet_pd(s) {
        Some(ld) => 0.5 * (n * (2.0 * PI * E).ln() + ld),
        None => f64::NEG_INFINITY,
    }
}

fn f0_raw(prob: &GaussianProblem, k: &DMatrix<f64>) -> f64 {
    let hx = gaussian_entropy(k);
    if hx == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let mut v = -hx + prob.c0 * frobenius_dot(&prob.m, k);
    for (ch, &c) in prob.channels.iter().zip(&prob.c) {
        if c > 0.0 {
            v += c * gaussian_entropy(&ch.output_cov(k));
        }
    }
    v
}

fn f0_grad_raw(prob: &GaussianProblem, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut g = inverse_pd(k)? * -0.5 + &prob.m * prob.c0;
    for (ch, &c) in prob.channels.iter().zip(&prob.c) {
        if c > 0.0 {
            let inv = inverse_pd(&ch.output_cov(k))?;
            g += ch.a.transpose() * inv * &ch.a * (0.5 * c);
        }
    }
    Ok(symmetrize(&g))
}

/// `F0(K)`; `+inf` when `K` is singular.
pub fn f0_eval(prob: &GaussianProblem, k: &CovMatrix) -> Result<f64> {
    check_square(k.matrix(), prob.dim())?;
    Ok(f0_raw(prob, k.matrix()))
}

/// `-K^{-1}/2 + sum_j (c_j/2) A_j^T (A_j K A_j^T + Sigma_j)^{-1} A_j + c0 M`.
pub fn f0_grad(prob: &GaussianProblem, k: &CovMatrix) -> Result<DMatrix<f64>> {
    check_square(k.matrix(), prob.dim())?;
    f0_grad_raw(prob, k.matrix())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOptions {
    /// Eigenvalue floor of the feasible set.
    pub eps: f64,
    /// Stop once the projected gradient has Frobenius norm below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Values below this are reported unbounded.
    pub value_floor: f64,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        Self {
            eps: 1e-9,
            tol: 1e-6,
            max_iter: 100_000,
            value_floor: -1e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F0Status {
    Converged,
    /// Iteration budget spent or line search stalled before `tol`.
    NotConverged,
    /// The objective keeps decreasing as `K` grows without bound.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Solution {
    pub k_star: DMatrix<f64>,
    pub value: f64,
    pub proj_grad_norm: f64,
    pub iterations: usize,
    pub status: F0Status,
}

const NONMONOTONE_WINDOW: usize = 10;

/// Spectral projected gradient over `{eps I <= K <= Sigma}` (or `K >= eps I`
/// without a cap).
///
/// With a cap the iteration runs in whitened coordinates `Z = S^{-1} K S^{-1}`,
/// `S = Sigma^{1/2}`, where the feasible set becomes `{lo I <= Z <= I}` and
/// projection is eigenvalue clipping.
pub fn minimize_f0(prob: &GaussianProblem, opts: &GaussianOptions) -> Result<F0Solution> {
    let n = prob.dim();
    let (s, lo, hi) = match &prob.sigma_cap {
        Some(cap) => {
            let lam_min = min_eigenvalue(cap);
            if lam_min < opts.eps {
                return Err(invalid("the covariance cap must dominate eps * I"));
            }
            (spectral_map(cap, |v| v.max(0.0).sqrt()), opts.eps / lam_min, 1.0)
        }
        None => (DMatrix::identity(n, n), opts.eps, f64::INFINITY),
    };
    let capped = prob.sigma_cap.is_some();
    let to_k = |z: &DMatrix<f64>| symmetrize(&(&s * z * &s));
    let value = |z: &DMatrix<f64>| f0_raw(prob, &to_k(z));
    let grad = |z: &DMatrix<f64>| f0_grad_raw(prob, &to_k(z)).map(|g| symmetrize(&(&s * g * &s)));
    let proj = |z: &DMatrix<f64>| spectral_map(z, |v| v.clamp(lo, hi));

    let mut z = if capped {
        DMatrix::identity(n, n) * 0.5_f64.max(lo)
    } else {
        DMatrix::identity(n, n)
    };
    let mut f = value(&z);
    let mut g = grad(&z)?;
    let mut history = vec![f];
    let mut step = 1.0;
    let mut status = F0Status::NotConverged;
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        pg_norm = (proj(&(&z - &g)) - &z).norm();
        // Along the ray K -> sK the slope in ln s is <G, K>; a steady
        // descent there means the infimum sits at infinity.
        let ray_descent = !capped && frobenius_dot(&g, &z) <= -1e-3;
        if pg_norm <= opts.tol && !ray_descent {
            status = F0Status::Converged;
            break;
        }
        if f < opts.value_floor || (ray_descent && max_eigenvalue(&z) > 1e8) {
            status = F0Status::Unbounded;
            break;
        }
        iterations += 1;
        let d = proj(&(&z - &g * step)) - &z;
        let gd = frobenius_dot(&g, &d);
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let zt = &z + &d * t;
            let ft = value(&zt);
            if ft <= f_ref + 1e-4 * t * gd {
                accepted = Some((zt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((z_new, f_new)) = accepted else { break };
        let g_new = grad(&z_new)?;
        let sk = &z_new - &z;
        let yk = &g_new - &g;
        let sy = frobenius_dot(&sk, &yk);
        step = if sy > 0.0 {
            (frobenius_dot(&sk, &sk) / sy).clamp(1e-30, 1e30)
        } else {
            1e-2
        };
        z = z_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if history.len() > NONMONOTONE_WINDOW {
            history.remove(0);
        }
    }
    Ok(F0Solution {
        k_star: to_k(&z),
        value: f,
        proj_grad_norm: pg_norm,
        iterations,
        status,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelsonResult {
    pub holds: bool,
    /// Smallest eigenvalue of `diag(p) - Sigma` (coordinates with
    /// `p_j = inf` removed).
    pub min_eig: f64,
}

/// Whether `diag(p) - Sigma` is positive semidefinite, up to [`PSD_TOL`].
pub fn nelson_check(sigma: &DMatrix<f64>, p: &[f64]) -> Result<NelsonResult> {
    let n = sigma.nrows();
    check_square(sigma, n)?;
    check_psd(sigma)?;
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.len() });
    }
    if (0..n).any(|i| (sigma[(i, i)] - 1.0).abs() > SYM_TOL) {
        return Err(Error::NonUnitDiagonal);
    }
    if p.iter().any(|&v| !(v >= 1.0)) {
        return Err(invalid("exponents must be at least 1"));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| p[i].is_finite()).collect();
    let k = keep.len();
    let diff = DMatrix::from_fn(k, k, |a, b| {
        let (i, j) = (keep[a], keep[b]);
        (if i == j { p[i] } else { 0.0 }) - sigma[(i, j)]
    });
    let min_eig = min_eigenvalue(&diff);
    Ok(NelsonResult { holds: min_eig >= -PSD_TOL, min_eig })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WynerResult {
    /// `(ln|Sigma| - ln|Lambda|)/2` in nats.
    pub value: f64,
    /// Diagonal of the optimal `Lambda`.
    pub lambda: Vec<f64>,
    /// Smallest eigenvalue of `Sigma - Lambda`.
    pub min_eig_margin: f64,
}

/// Maximizes `ln|Lambda|` over diagonal `0 < Lambda <= Sigma` by a barrier
/// method: Newton ascent on `ln|Lambda| + mu ln|Sigma - Lambda|` with `mu`
/// driven from 1 to 1e-13.
pub fn wyner_ci(sigma: &DMatrix<f64>) -> Result<WynerResult> {
    let n = sigma.nrows();
    check_square(sigma, n)?;
    check_symmetric(sigma, SYM_TOL)?;
    let sigma = symmetrize(sigma);
    let ld_sigma = logdet_pd(&sigma).ok_or(Error::Singular)?;
    let start = 0.5 * min_eigenvalue(&sigma);
    if !(start > 0.0) {
        return Err(Error::Singular);
    }
    let mut lam = vec![start; n];
    let slack = |lam: &[f64]| {
        let mut s = sigma.clone();
        for (i, &l) in lam.iter().enumerate() {
            s[(i, i)] -= l;
        }
        s
    };
    let barrier = |lam: &[f64], mu: f64| -> f64 {
        if lam.iter().any(|&l| l <= 0.0) {
            return f64::NEG_INFINITY;
        }
        match logdet_pd(&slack(lam)) {
            Some(ld) => lam.iter().map(|l| l.ln()).sum::<f64>() + mu * ld,
            None => f64::NEG_INFINITY,
        }
    };
    let mut mu = 1.0;
    while mu >= 1e-13 {
        for _ in 0..200 {
            let b = inverse_pd(&slack(&lam))?;
            let grad = DVector::from_fn(n, |i, _| 1.0 / lam[i] - mu * b[(i, i)]);
            let neg_hess = DMatrix::from_fn(n, n, |i, j| {
                mu * b[(i, j)] * b[(i, j)] + if i == j { 1.0 / (lam[i] * lam[i]) } else { 0.0 }
            });
            let Some(chol) = neg_hess.cholesky() else { break };
            let delta = chol.solve(&grad);
            let decrement = grad.dot(&delta);
            if decrement < 1e-20 {
                break;
            }
            let current = barrier(&lam, mu);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let trial: Vec<f64> = (0..n).map(|i| lam[i] + t * delta[i]).collect();
                if barrier(&trial, mu) >= current + 0.25 * t * decrement {
                    lam = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        mu *= 0.1;
    }
    let value = 0.5 * (ld_sigma - lam.iter().map(|l| l.ln()).sum::<f64>());
    Ok(WynerResult {
        value: value.max(0.0),
        min_eig_margin: min_eigenvalue(&slack(&lam)),
        lambda: lam,
    })
}

/// `N(mean, cov)` with positive definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReference {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianReference {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_square(&cov, mean.len())?;
        check_symmetric(&cov, SYM_TOL)?;
        if !is_pd(&cov) {
            return Err(Error::NotPsd { min_eig: min_eigenvalue(&cov) });
        }
        Ok(Self { mean, cov: symmetrize(&cov) })
    }

    pub fn standard(n: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// `D(N(a, A) || N(b, B))`.
pub fn gaussian_kl(a: &DVector<f64>, cov_a: &DMatrix<f64>, b: &DVector<f64>, cov_b: &DMatrix<f64>) -> Result<f64> {
    let inv_b = inverse_pd(cov_b)?;
    let diff = a - b;
    let Some(ld_a) = logdet_pd(cov_a) else {
        return Ok(f64::INFINITY);
    };
    let ld_b = logdet_pd(cov_b).ok_or(Error::Singular)?;
    let quad = (diff.transpose() * &inv_b * &diff)[(0, 0)];
    Ok(0.5 * (frobenius_dot(&inv_b, cov_a) + quad - a.len() as f64 + ld_b - ld_a))
}

/// Forward problem with Gaussian input law, Gaussian channels and Gaussian
/// output references.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlProblem {
    input: GaussianReference,
    channels: Vec<GaussianChannel>,
    c: Vec<f64>,
    refs: Vec<GaussianReference>,
    sigma_cap: Option<DMatrix<f64>>,
}

impl GaussianBlProblem {
    pub fn new(
        input: GaussianReference,
        channels: Vec<GaussianChannel>,
        c: Vec<f64>,
        refs: Vec<GaussianReference>,
        sigma_cap: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let m = channels.len();
        if m == 0 {
            return Err(Error::Empty);
        }
        for found in [c.len(), refs.len()] {
            if found != m {
                return Err(Error::DimensionMismatch { expected: m, found });
            }
        }
        if c.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("weights c_j must be positive and finite"));
        }
        let n = input.mean.len();
        for (ch, r) in channels.iter().zip(&refs) {
            if ch.input_dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: ch.input_dim() });
            }
            if r.mean.len() != ch.output_dim() {
                return Err(Error::DimensionMismatch { expected: ch.output_dim(), found: r.mean.len() });
            }
        }
        if let Some(cap) = &sigma_cap {
            check_square(cap, n)?;
            check_psd(cap)?;
        }
        Ok(Self { input, channels, c, refs, sigma_cap })
    }

    /// `sum_j c_j D(P_{Y_j} || R_j) - D(P_X || Q_X)` at `P_X = N(mean, k)`.
    pub fn objective(&self, mean: &DVector<f64>, k: &DMatrix<f64>) -> Result<f64> {
        let mut v = -gaussian_kl(mean, k, &self.input.mean, &self.input.cov)?;
        if v == f64::NEG_INFINITY {
            return Ok(v);
        }
        for ((ch, r), &c) in self.channels.iter().zip(&self.refs).zip(&self.c) {
            let my = &ch.a * mean + &ch.b;
            v += c * gaussian_kl(&my, &ch.output_cov(k), &r.mean, &r.cov)?;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlReport {
    /// Smallest `d` valid for all Gaussian inputs; `+inf` if none is.
    pub d: f64,
    pub mean: Option<DVector<f64>>,
    pub k: Option<DMatrix<f64>>,
    pub status: F0Status,
    /// Largest eigenvalue of the curvature of the objective in the mean.
    pub mean_curvature: f64,
}

/// Supremum of [`GaussianBlProblem::objective`] over `(mean, K)`.
///
/// The mean enters through a quadratic with Hessian
/// `H = sum_j c_j A_j^T S_j^{-1} A_j - K_0^{-1}`; a positive eigenvalue makes
/// the supremum infinite, otherwise the maximizer solves a linear system.
/// The covariance part equals `-F0` with `c0 = 1`, `M = -H/2`, up to an
/// additive constant.
pub fn gaussian_gbll_constant(prob: &GaussianBlProblem, opts: &GaussianOptions) -> Result<GaussianBlReport> {
    let n = prob.input.mean.len();
    let k0_inv = inverse_pd(&prob.input.cov)?;
    let mut h = -&k0_inv;
    let mut lin = &k0_inv * &prob.input.mean;
    for ((ch, r), &c) in prob.channels.iter().zip(&prob.refs).zip(&prob.c) {
        let s_inv = inverse_pd(&r.cov)?;
        h += ch.a.transpose() * &s_inv * &ch.a * c;
        lin += ch.a.transpose() * &s_inv * (&ch.b - &r.mean) * c;
    }
    let h = symmetrize(&h);
    let curvature = max_eigenvalue(&h);
    let scale = h.amax().max(1.0);
    let unbounded = |status| GaussianBlReport {
        d: f64::INFINITY,
        mean: None,
        k: None,
        status,
        mean_curvature: curvature,
    };
    if curvature > 1e-12 * scale {
        return Ok(unbounded(F0Status::Unbounded));
    }
    // Maximize mu^T H mu / 2 + lin^T mu: H mu = -lin on range(H).
    let (vals, vecs) = eigh(&h);
    let mut mean = DVector::zeros(n);
    for i in 0..n {
        let v = vecs.column(i);
        let coef = v.dot(&lin);
        if vals[i].abs() <= 1e-12 * scale {
            if coef.abs() > 1e-9 * lin.amax().max(1.0) {
                return Ok(unbounded(F0Status::Unbounded));
            }
            continue;
        }
        mean -= v * (coef / vals[i]);
    }

    let m = spectral_map(&(-&h * 0.5), |v| v.max(0.0));
    let f0 = GaussianProblem::new(prob.channels.clone(), prob.c.clone(), 1.0, m, prob.sigma_cap.clone())?;
    let sol = minimize_f0(&f0, opts)?;
    if sol.status == F0Status::Unbounded {
        return Ok(unbounded(F0Status::Unbounded));
    }
    let d = prob.objective(&mean, &sol.k_star)?;
    Ok(GaussianBlReport {
        d,
        mean: Some(mean),
        k: Some(sol.k_star),
        status: sol.status,
        mean_curvature: curvature,
    })
}
