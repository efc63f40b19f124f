//! Orthonormal Legendre product basis on the hypercube `[-1, 1]^q`.
//!
//! Each one-dimensional factor is normalised so that `(1/2)∫ P_i P_j dx = δ_ij`
//! under the uniform measure, i.e. `P_l = sqrt(2l + 1) · p_l` with `p_l` the
//! classical Legendre polynomial. Product functions are indexed by a
//! [`MultiIndex`] of per-coordinate degrees and enumerated in graded
//! lexicographic order (total degree ascending, then lexicographic).

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Default upper bound on the number of basis functions `enumerate_basis` will produce.
pub const DEFAULT_BASIS_LIMIT: usize = 10_000_000;

/// Orthonormal Legendre polynomial of degree `l` at `x`.
///
/// Uses the three-term recurrence on the classical polynomials and rescales
/// by `sqrt(2l + 1)` at the end.
pub fn legendre(l: u32, x: f64) -> f64 {
    ((2 * l + 1) as f64).sqrt() * classical_legendre(l, x)
}

fn classical_legendre(l: u32, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..l {
                let k = k as f64;
                let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Fill `out[0..=d_max]` with the orthonormal Legendre values at `x`.
pub fn legendre_table(x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let (mut prev, mut cur) = (1.0, x);
    out[0] = 1.0;
    if n > 1 {
        out[1] = 3f64.sqrt() * x;
    }
    for l in 1..n.saturating_sub(1) {
        let k = l as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
        out[l + 1] = ((2 * l + 3) as f64).sqrt() * cur;
    }
}

/// Per-coordinate degrees `(l_1, …, l_q)` of a product basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(degrees: Vec<u32>) -> Self {
        MultiIndex(degrees)
    }

    pub fn constant(q: usize) -> Self {
        MultiIndex(vec![0; q])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of coordinates with non-zero degree.
    pub fn n_active(&self) -> usize {
        self.0.iter().filter(|&&d| d > 0).count()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of total degree `<= d_max` in `q` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub q: usize,
    pub d_max: u32,
    pub indices: Vec<MultiIndex>,
}

/// `binomial(q + d_max, d_max)`, or `None` on overflow.
pub fn basis_count(q: usize, d_max: u32) -> Option<u128> {
    let n = q as u128 + d_max as u128;
    let k = (d_max as u128).min(q as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Enumerate the basis with the default size limit.
pub fn enumerate_basis(q: usize, d_max: u32) -> Result<BasisSet> {
    enumerate_basis_with_limit(q, d_max, DEFAULT_BASIS_LIMIT)
}

pub fn enumerate_basis_with_limit(q: usize, d_max: u32, limit: usize) -> Result<BasisSet> {
    if q == 0 {
        return Err(Error::invalid("basis dimension q must be at least 1"));
    }
    let count = basis_count(q, d_max).ok_or(Error::BasisTooLarge {
        count: u128::MAX,
        limit,
    })?;
    if count > limit as u128 {
        return Err(Error::BasisTooLarge { count, limit });
    }
    let mut indices = Vec::with_capacity(count as usize);
    let mut scratch = vec![0u32; q];
    for total in 0..=d_max {
        compositions(total, 0, &mut scratch, &mut indices);
    }
    debug_assert_eq!(indices.len() as u128, count);
    Ok(BasisSet { q, d_max, indices })
}

// Lexicographically ascending compositions of `remaining` into the slots from `pos` on.
fn compositions(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        return;
    }
    for d in 0..=remaining {
        scratch[pos] = d;
        compositions(remaining - d, pos + 1, scratch, out);
    }
    scratch[pos] = 0;
}

/// Evaluate one product basis function at a point `u`.
pub fn eval_basis_function(idx: &MultiIndex, u: &[f64]) -> Result<f64> {
    if idx.q() != u.len() {
        return Err(Error::DimensionMismatch {
            context: "basis function evaluation",
            expected: idx.q(),
            got: u.len(),
        });
    }
    Ok(idx
        .degrees()
        .iter()
        .zip(u)
        .map(|(&l, &x)| legendre(l, x))
        .product())
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Position of the all-zero index, if present.
    pub fn constant_position(&self) -> Option<usize> {
        self.indices.iter().position(MultiIndex::is_constant)
    }

    /// Evaluate every basis function at every row of `points` (N×q),
    /// returning an N×L matrix whose column `l` is `y_l(u(n))`.
    pub fn evaluate(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if points.ncols() != self.q {
            return Err(Error::DimensionMismatch {
                context: "basis evaluation",
                expected: self.q,
                got: points.ncols(),
            });
        }
        let n = points.nrows();
        let stride = self.d_max as usize + 1;
        let q = self.q;
        // tables[(k * n + row) * stride + l] = P_l(u_k(row))
        let mut tables = vec![0.0; q * n * stride];
        for k in 0..q {
            for row in 0..n {
                let at = (k * n + row) * stride;
                legendre_table(points[(row, k)], &mut tables[at..at + stride]);
            }
        }
        let mut out = DMatrix::<f64>::zeros(n, self.len());
        if n == 0 {
            return Ok(out);
        }
        let tables = &tables;
        par::for_each_chunk_mut(out.as_mut_slice(), n, |col, column| {
            let degrees = self.indices[col].degrees();
            column.iter_mut().for_each(|v| *v = 1.0);
            for (k, &l) in degrees.iter().enumerate() {
                if l == 0 {
                    continue;
                }
                let base = k * n * stride + l as usize;
                for (row, v) in column.iter_mut().enumerate() {
                    *v *= tables[base + row * stride];
                }
            }
        });
        Ok(out)
    }
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Exact square of the Wigner 3j symbol `(l l 2L; 0 0 0)`.
///
/// With `g = l + L` the closed form is
/// `(2L)!² (2l-2L)! / (2l+2L+1)! · [ (l+L)! / (L!² (l-L)!) ]²`.
pub fn wigner_3j_000_squared(l: u32, big_l: u32) -> BigRational {
    assert!(big_l <= l, "wigner_3j_000 requires L <= l");
    let num = factorial(2 * big_l).pow(2u32) * factorial(2 * l - 2 * big_l);
    let den = factorial(2 * l + 2 * big_l + 1);
    let ratio_num = factorial(l + big_l);
    let ratio_den = factorial(big_l).pow(2u32) * factorial(l - big_l);
    let ratio = BigRational::new(ratio_num, ratio_den);
    BigRational::new(num, den) * ratio.clone() * ratio
}

/// The Wigner 3j symbol `(l l 2L; 0 0 0)` as a float. Sign is `(-1)^(l+L)`.
pub fn wigner_3j_000(l: u32, big_l: u32) -> f64 {
    let mag = wigner_3j_000_squared(l, big_l)
        .to_f64()
        .expect("3j square is finite")
        .sqrt();
    if (l + big_l).is_multiple_of(2) {
        mag
    } else {
        -mag
    }
}

/// Exact `E[P_l^4]` under the uniform measure on `[-1, 1]`, as a rational.
pub fn fourth_moment_exact(l: u32) -> BigRational {
    let mut sum = BigRational::zero();
    for big_l in 0..=l {
        let sq = wigner_3j_000_squared(l, big_l);
        sum += BigRational::from_integer(BigInt::from(4 * big_l + 1)) * sq.clone() * sq;
    }
    let scale = BigInt::from(2 * l + 1).pow(2u32);
    sum * BigRational::from_integer(scale)
}

/// `E[P_l^4]` for the orthonormal Legendre polynomial of degree `l`.
pub fn fourth_moment(l: u32) -> f64 {
    fourth_moment_exact(l)
        .to_f64()
        .expect("fourth moment is finite")
}

/// `E[y^4]` of a product basis function: the product of per-coordinate moments.
pub fn fourth_moment_product(idx: &MultiIndex) -> f64 {
    idx.degrees().iter().map(|&l| fourth_moment(l)).product()
}

/// Precomputed `E[P_l^4]` for `l = 0..=d_max`.
#[derive(Debug, Clone)]
pub struct FourthMoments(Vec<f64>);

impl FourthMoments {
    pub fn up_to(d_max: u32) -> Self {
        FourthMoments((0..=d_max).map(fourth_moment).collect())
    }

    pub fn product(&self, idx: &MultiIndex) -> f64 {
        idx.degrees()
            .iter()
            .map(|&l| match self.0.get(l as usize) {
                Some(&m) => m,
                None => fourth_moment(l),
            })
            .product()
    }
}
