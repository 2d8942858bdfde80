//! Exact primitives on finite alphabets: distributions, nonnegative
//! measures, channels, and the divergences built on them.
//!
//! Conventions: `0 ln 0 = 0`, `0 ln(0/0) = 0`, and a divergence whose first
//! argument is not absolutely continuous with respect to the second is
//! `+inf` rather than an error.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Tolerance on the total mass of a probability vector before it is
/// renormalized.
pub const MASS_TOL: f64 = 1e-12;

fn check_entries(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty);
    }
    for (index, &value) in v.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidEntry { index, value });
        }
    }
    Ok(())
}

/// A probability mass function on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    probs: Vec<f64>,
}

impl Dist {
    /// Validates that the entries are nonnegative and sum to one within
    /// [`MASS_TOL`], then renormalizes exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_entries(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self::normalized(probs, sum))
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Unnormalizable);
        }
        Ok(Self::normalized(weights, sum))
    }

    fn normalized(mut probs: Vec<f64>, sum: f64) -> Self {
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Self { probs }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// The point mass at `index`.
    pub fn point(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    /// `Bern(p)` puts mass `p` on symbol 1 and `1 - p` on symbol 0.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("Bernoulli parameter outside [0, 1]"));
        }
        Ok(Self {
            probs: vec![1.0 - p, p],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Is `self` absolutely continuous with respect to `other`?
    pub fn is_dominated_by(&self, other: &[f64]) -> bool {
        self.probs
            .iter()
            .zip(other)
            .all(|(&p, &q)| p == 0.0 || q > 0.0)
    }
}

impl AsRef<[f64]> for Dist {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

/// A nonnegative measure on a finite alphabet, possibly unnormalized
/// (reference measures, the counting measure).
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: Vec<f64>,
    normalized: bool,
}

impl Measure {
    /// When `normalized` is set the weights must sum to one within
    /// [`MASS_TOL`] and are renormalized exactly.
    pub fn new(weights: Vec<f64>, normalized: bool) -> Result<Self> {
        if normalized {
            let d = Dist::new(weights)?;
            return Ok(Self {
                weights: d.probs,
                normalized: true,
            });
        }
        check_entries(&weights)?;
        Ok(Self {
            weights,
            normalized: false,
        })
    }

    pub fn counting(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n], false)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Image of the measure under a channel: `z -> sum_y w(y) V(z|y)`.
    pub fn pushforward(&self, channel: &Channel) -> Result<Measure> {
        if channel.n_in() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: channel.n_in(),
                found: self.len(),
            });
        }
        let mut out = vec![0.0; channel.n_out()];
        push_raw(&self.weights, channel, &mut out);
        if self.normalized {
            let sum: f64 = out.iter().sum();
            out.iter_mut().for_each(|w| *w /= sum);
        }
        Ok(Self {
            weights: out,
            normalized: self.normalized,
        })
    }

    /// Product measure, row-major.
    pub fn product(&self, other: &Measure) -> Measure {
        Self {
            weights: outer(&self.weights, &other.weights),
            normalized: self.normalized && other.normalized,
        }
    }
}

impl From<Dist> for Measure {
    fn from(d: Dist) -> Self {
        Self {
            weights: d.probs,
            normalized: true,
        }
    }
}

impl From<&Dist> for Measure {
    fn from(d: &Dist) -> Self {
        d.clone().into()
    }
}

impl AsRef<[f64]> for Measure {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

/// A row-stochastic matrix `W(y|x)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    n_in: usize,
    n_out: usize,
    data: Vec<f64>,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_in = rows.len();
        if n_in == 0 {
            return Err(Error::Empty);
        }
        let n_out = rows[0].len();
        let mut data = Vec::with_capacity(n_in * n_out);
        for row in rows {
            if row.len() != n_out {
                return Err(Error::DimensionMismatch {
                    expected: n_out,
                    found: row.len(),
                });
            }
            data.extend(Dist::new(row)?.probs);
        }
        Ok(Self { n_in, n_out, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut idx = Vec::with_capacity(n);
        idx.extend(0..n);
        Self::from_map(&idx, n)
    }

    /// Binary symmetric channel with crossover probability `delta`.
    pub fn bsc(delta: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - delta, delta], vec![delta, 1.0 - delta]])
    }

    /// The deterministic channel `x -> map[x]`.
    pub fn from_map(map: &[usize], n_out: usize) -> Result<Self> {
        if map.is_empty() || n_out == 0 {
            return Err(Error::Empty);
        }
        let mut data = vec![0.0; map.len() * n_out];
        for (x, &y) in map.iter().enumerate() {
            if y >= n_out {
                return Err(Error::IndexOutOfRange {
                    index: y,
                    len: n_out,
                });
            }
            data[x * n_out + y] = 1.0;
        }
        Ok(Self {
            n_in: map.len(),
            n_out,
            data,
        })
    }

    /// The channel that keeps coordinate `axis` of a row-major product
    /// alphabet with the given shape.
    pub fn coordinate(shape: &[usize], axis: usize) -> Result<Self> {
        if axis >= shape.len() {
            return Err(Error::IndexOutOfRange {
                index: axis,
                len: shape.len(),
            });
        }
        let total: usize = shape.iter().product();
        let map: Vec<usize> = (0..total).map(|i| unravel(i, shape)[axis]).collect();
        Self::from_map(&map, shape[axis])
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n_out..(x + 1) * self.n_out]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.n_out + y]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_out)
    }

    /// Product channel acting independently on the two factors of a
    /// row-major product alphabet.
    pub fn kron(&self, other: &Channel) -> Channel {
        let n_in = self.n_in * other.n_in;
        let n_out = self.n_out * other.n_out;
        let mut data = Vec::with_capacity(n_in * n_out);
        for x1 in 0..self.n_in {
            for x2 in 0..other.n_in {
                for y1 in 0..self.n_out {
                    let a = self.get(x1, y1);
                    data.extend(other.row(x2).iter().map(|&b| a * b));
                }
            }
        }
        Channel { n_in, n_out, data }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if next.n_in != self.n_out {
            return Err(Error::DimensionMismatch {
                expected: self.n_out,
                found: next.n_in,
            });
        }
        let mut data = vec![0.0; self.n_in * next.n_out];
        for x in 0..self.n_in {
            push_raw(self.row(x), next, &mut data[x * next.n_out..(x + 1) * next.n_out]);
        }
        Ok(Channel {
            n_in: self.n_in,
            n_out: next.n_out,
            data,
        })
    }

    /// Rows are all equal: the output carries no information about the input.
    pub fn is_constant(&self) -> bool {
        let first = self.row(0);
        self.rows().all(|r| r == first)
    }
}

/// Row-major multi-index of `index` in an alphabet with the given shape.
pub fn unravel(mut index: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for (slot, &n) in out.iter_mut().zip(shape).rev() {
        *slot = index % n;
        index /= n;
    }
    out
}

pub(crate) fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// `out[y] = sum_x p[x] W(y|x)`; `out` is overwritten.
pub(crate) fn push_raw(p: &[f64], w: &Channel, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (o, &wxy) in out.iter_mut().zip(w.row(x)) {
            *o += px * wxy;
        }
    }
}

/// `p ln(p/q)` with the zero conventions.
#[inline]
pub(crate) fn xlogx_over(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if q == 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).ln()
    }
}

/// Relative entropy of raw weight vectors of equal length.
pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| xlogx_over(a, b)).sum()
}

/// `ln(P(x)/Q(x))`; zero when `P(x) = 0`, `+inf` when only `Q(x)` vanishes.
pub fn relative_information(p: &Dist, q: &Dist, x: usize) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    if x >= p.len() {
        return Err(Error::IndexOutOfRange {
            index: x,
            len: p.len(),
        });
    }
    let (a, b) = (p.probs[x], q.probs[x]);
    Ok(if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        (a / b).ln()
    })
}

/// `D(P||Q)` against a possibly unnormalized measure (then it may be
/// negative); `+inf` when `P` is not dominated by `Q`.
pub fn kl_divergence<Q: AsRef<[f64]> + ?Sized>(p: &Dist, q: &Q) -> Result<f64> {
    let q = q.as_ref();
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(kl_raw(&p.probs, q))
}

/// Renyi divergence of order `alpha` in `(0,1) u (1,inf)`:
/// `ln(sum Q^a R^(1-a)) / (a - 1)`.
pub fn renyi_divergence(alpha: f64, q: &Dist, r: &Dist) -> Result<f64> {
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
    let mut sum = 0.0;
    for (&a, &b) in q.probs.iter().zip(&r.probs) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            if alpha > 1.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        sum += a.powf(alpha) * b.powf(1.0 - alpha);
    }
    Ok(sum.ln() / (alpha - 1.0))
}

/// Output distribution of `W` driven by `P`.
pub fn pushforward(p: &Dist, w: &Channel) -> Result<Dist> {
    if p.len() != w.n_in() {
        return Err(Error::DimensionMismatch {
            expected: w.n_in(),
            found: p.len(),
        });
    }
    let mut out = vec![0.0; w.n_out()];
    push_raw(&p.probs, w, &mut out);
    let sum: f64 = out.iter().sum();
    Ok(Dist::normalized(out, sum))
}

/// Product distribution on the row-major product alphabet.
pub fn product_dist(ps: &[Dist]) -> Result<Dist> {
    let (first, rest) = ps.split_first().ok_or(Error::Empty)?;
    let mut probs = first.probs.clone();
    for p in rest {
        probs = outer(&probs, &p.probs);
    }
    Ok(Dist { probs })
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &Dist) -> f64 {
    entropy_raw(&p.probs)
}

pub(crate) fn entropy_raw(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}
