//! Gram statistics, whitening and raw finite-sample capacities.
//!
//! For readouts `X` (N×K) and a target `y` with `E[y²] = 1`, the raw capacity
//! is `Rᵀ G⁺ R` where `G = XᵀX / N` and `R = Xᵀy / N`. The eigenpairs of `G`
//! come from a QR factorization `X = QR` followed by an SVD of the small
//! factor `R = U Σ Vᵀ`, so `G = V diag(σ²/N) Vᵀ` without forming `XᵀX`.
//! Directions with `λ ≤ tol · λ_max` are dropped and the whitener
//! `Λ = V_r diag(λ_r^{-1/2})` maps readouts to `X̃ = XΛ` with `X̃ᵀX̃ / N = I`.
//! Then `C = ‖X̃ᵀy / N‖²`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSet, MultiIndex};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;

/// Relative eigenvalue cutoff for the pseudo-inverse.
pub const DEFAULT_EIGEN_TOLERANCE: f64 = 1e-10;

/// Basis functions processed per block when projecting onto the readout span.
const BASIS_BLOCK: usize = 128;

/// Empirical second-moment matrix of the readouts and its whitener.
#[derive(Debug, Clone)]
pub struct GramStats {
    /// K×K, `XᵀX / N`.
    pub g: DMatrix<f64>,
    pub rank: usize,
    /// K×rank.
    pub whitener: DMatrix<f64>,
    /// All eigenvalues of `G`, descending.
    pub eigenvalues: Vec<f64>,
    pub eigen_tolerance: f64,
}

impl GramStats {
    pub fn k(&self) -> usize {
        self.g.nrows()
    }
}

pub fn gram(data: &Dataset, eigen_tolerance: f64) -> Result<GramStats> {
    gram_of(&data.readouts, eigen_tolerance)
}

/// Gram statistics of an arbitrary N×K readout matrix.
pub fn gram_of(x: &DMatrix<f64>, eigen_tolerance: f64) -> Result<GramStats> {
    if !(eigen_tolerance > 0.0) {
        return Err(Error::invalid("eigen_tolerance must be positive"));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::invalid("gram statistics need at least one sample"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "readouts contain non-finite values".into(),
        ));
    }
    let mut g = x.tr_mul(x) / n as f64;
    g = (&g + g.transpose()) * 0.5;
    let k = g.nrows();
    let svd = x.clone().qr().r().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("singular value decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| svd.singular_values[i].powi(2) / n as f64)
        .collect();
    eigenvalues.resize(k, 0.0);
    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = if lmax > 0.0 {
        eigenvalues
            .iter()
            .take_while(|&&l| l > eigen_tolerance * lmax)
            .count()
    } else {
        log::warn!("all readouts are zero; Gram matrix has rank 0");
        0
    };
    let mut whitener = DMatrix::zeros(k, rank);
    for (c, &i) in order.iter().take(rank).enumerate() {
        let s = (n as f64).sqrt() / svd.singular_values[i];
        whitener.set_column(c, &(v_t.row(i).transpose() * s));
    }
    Ok(GramStats {
        g,
        rank,
        whitener,
        eigenvalues,
        eigen_tolerance,
    })
}

/// Whitened readouts `X̃ = XΛ` (N×rank).
pub fn whitened(data: &Dataset, stats: &GramStats) -> Result<DMatrix<f64>> {
    check_k(data.k(), stats)?;
    Ok(&data.readouts * &stats.whitener)
}

fn check_k(k: usize, stats: &GramStats) -> Result<()> {
    if k != stats.k() {
        return Err(Error::DimensionMismatch {
            context: "readout count vs Gram matrix",
            expected: stats.k(),
            got: k,
        });
    }
    Ok(())
}

/// `R_i = (1/N) Σ_n X_i(n) y(n)`.
pub fn correlation(data: &Dataset, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != data.n() {
        return Err(Error::DimensionMismatch {
            context: "target length",
            expected: data.n(),
            got: y.len(),
        });
    }
    let y = DVector::from_column_slice(y);
    Ok(data.readouts.tr_mul(&y) / data.n() as f64)
}

/// `Rᵀ G⁺ R / y_norm_sq`, clamped to `[0, 1]`.
pub fn raw_capacity(stats: &GramStats, r: &DVector<f64>, y_norm_sq: f64) -> Result<f64> {
    Ok(clamp_capacity(raw_capacity_unclamped(stats, r, y_norm_sq)?))
}

/// `Rᵀ G⁺ R / y_norm_sq` without clamping.
pub fn raw_capacity_unclamped(stats: &GramStats, r: &DVector<f64>, y_norm_sq: f64) -> Result<f64> {
    check_k(r.len(), stats)?;
    if !(y_norm_sq > 0.0) {
        return Err(Error::invalid("target mean square must be positive"));
    }
    if stats.rank == 0 {
        log::warn!("rank-0 Gram matrix; capacity is 0");
        return Ok(0.0);
    }
    Ok(stats.whitener.tr_mul(r).norm_squared() / y_norm_sq)
}

pub(crate) fn clamp_capacity(c: f64) -> f64 {
    if c > 1.0 {
        if c > 1.0 + 1e-9 {
            log::debug!("capacity {c} clamped to 1");
        }
        1.0
    } else if c < 0.0 {
        log::debug!("capacity {c} clamped to 0");
        0.0
    } else {
        c
    }
}

/// `W* = G⁺ R`.
pub fn optimal_weights(stats: &GramStats, r: &DVector<f64>) -> Result<DVector<f64>> {
    check_k(r.len(), stats)?;
    Ok(&stats.whitener * stats.whitener.tr_mul(r))
}

/// How a capacity value was treated by the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityStatus {
    Kept,
    ZeroedByThreshold,
    ZeroedNegative,
}

/// Capacity of one basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityValue {
    pub index: MultiIndex,
    pub raw: f64,
    pub corrected: Option<f64>,
    pub threshold: Option<f64>,
    pub status: CapacityStatus,
    /// Raw capacities on the first and second ordered halves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halves: Option<[f64; 2]>,
}

/// A contiguous block of rows together with its own whitener.
pub(crate) struct RowView {
    pub start: usize,
    pub len: usize,
    pub whitened: DMatrix<f64>,
}

impl RowView {
    pub fn new(data: &Dataset, start: usize, len: usize, stats: &GramStats) -> Self {
        let x = data.readouts.rows(start, len);
        RowView {
            start,
            len,
            whitened: x * &stats.whitener,
        }
    }
}

/// Which mean square divides `Rᵀ G⁺ R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetNorm {
    /// `E[y²] = 1`, exact for the orthonormal basis.
    #[default]
    Analytic,
    /// The sample mean square of `y` over the rows used.
    Empirical,
}

/// Unclamped raw capacities of every basis function, one vector per row view.
///
/// Basis values are evaluated once on all rows, in blocks, and shared by the views.
pub(crate) fn sweep_views(
    points: &DMatrix<f64>,
    basis: &BasisSet,
    views: &[RowView],
    norm: TargetNorm,
) -> Result<Vec<Vec<f64>>> {
    let n_blocks = basis.len().div_ceil(BASIS_BLOCK);
    let blocks: Vec<Result<Vec<Vec<f64>>>> = par::map_range(n_blocks, |b| {
        let lo = b * BASIS_BLOCK;
        let hi = (lo + BASIS_BLOCK).min(basis.len());
        let sub = BasisSet {
            q: basis.q,
            d_max: basis.d_max,
            indices: basis.indices[lo..hi].to_vec(),
        };
        let y = sub.evaluate(points)?;
        Ok(views
            .iter()
            .map(|v| {
                if v.whitened.ncols() == 0 {
                    return vec![0.0; hi - lo];
                }
                let yv = y.rows(v.start, v.len);
                let p = v.whitened.tr_mul(&yv) / v.len as f64;
                p.column_iter()
                    .zip(yv.column_iter())
                    .map(|(c, yc)| match norm {
                        TargetNorm::Analytic => c.norm_squared(),
                        TargetNorm::Empirical => {
                            c.norm_squared() / (yc.norm_squared() / v.len as f64)
                        }
                    })
                    .collect()
            })
            .collect())
    });
    let mut out = vec![Vec::with_capacity(basis.len()); views.len()];
    for block in blocks {
        for (acc, part) in out.iter_mut().zip(block?) {
            acc.extend(part);
        }
    }
    Ok(out)
}

/// Raw capacity of every basis function with `E[y²] = 1`, reusing one Gram factorization.
pub fn capacity_sweep(
    data: &Dataset,
    basis: &BasisSet,
    eigen_tolerance: f64,
) -> Result<Vec<CapacityValue>> {
    capacity_sweep_with(data, basis, eigen_tolerance, TargetNorm::Analytic)
}

pub fn capacity_sweep_with(
    data: &Dataset,
    basis: &BasisSet,
    eigen_tolerance: f64,
    norm: TargetNorm,
) -> Result<Vec<CapacityValue>> {
    if basis.q != data.q() {
        return Err(Error::DimensionMismatch {
            context: "basis q vs dataset q",
            expected: data.q(),
            got: basis.q,
        });
    }
    let stats = gram(data, eigen_tolerance)?;
    let view = RowView::new(data, 0, data.n(), &stats);
    let raw = sweep_views(&data.inputs.points, basis, &[view], norm)?.remove(0);
    Ok(basis
        .indices
        .iter()
        .zip(raw)
        .map(|(idx, c)| CapacityValue {
            index: idx.clone(),
            raw: clamp_capacity(c),
            corrected: None,
            threshold: None,
            status: CapacityStatus::Kept,
            halves: None,
        })
        .collect())
}

/// Add independent zero-mean Gaussian noise to each readout column.
///
/// `noise_std` has one entry per readout column; the appended constant
/// column of an augmented dataset is never perturbed. Column `i` draws from
/// its own ChaCha8 stream (`seed`, stream `i`), so changing one column's
/// level leaves the others bit-identical.
pub fn inject_additive_noise(data: &Dataset, noise_std: &[f64], seed: u64) -> Result<Dataset> {
    if noise_std.len() != data.k() {
        return Err(Error::DimensionMismatch {
            context: "noise std per readout",
            expected: data.k(),
            got: noise_std.len(),
        });
    }
    if let Some(s) = noise_std.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::invalid(format!(
            "noise std {s} must be non-negative"
        )));
    }
    let mut out = data.clone();
    let noisy_cols = if data.augmented {
        data.k() - 1
    } else {
        data.k()
    };
    for (i, &std) in noise_std.iter().enumerate().take(noisy_cols) {
        if std == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        for v in out.readouts.column_mut(i).iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    out.meta
        .insert("additive_noise_seed".into(), seed.to_string());
    Ok(out)
}
