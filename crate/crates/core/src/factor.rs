//! Effective dimensionality from Malinowski's indicator function.
//!
//! With `λ_1 ≥ … ≥ λ_K` the eigenvalues of `ZᵀZ` for noise-normalised
//! readouts `Z` (N×K),
//! `IND(κ) = (K − κ)^{-2} · sqrt(Σ_{j>κ} λ_j / (N (K − κ)))`,
//! and the number of significant factors is the position of its interior minimum.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as exact zeros.
const ZERO_EIGEN_TOLERANCE: f64 = 1e-12;

/// Divide each readout column by its noise standard deviation.
///
/// The appended constant column of an augmented dataset is left untouched and
/// its entry in `noise_std` is ignored.
pub fn noise_normalize(data: &Dataset, noise_std: &[f64]) -> Result<Dataset> {
    if noise_std.len() != data.k() {
        return Err(Error::DimensionMismatch {
            context: "noise std per readout",
            expected: data.k(),
            got: noise_std.len(),
        });
    }
    let cols = if data.augmented {
        data.k() - 1
    } else {
        data.k()
    };
    let mut out = data.clone();
    for (i, &s) in noise_std.iter().enumerate().take(cols) {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!(
                "readout column {} has noise std {s}; it must be strictly positive",
                i + 1
            )));
        }
        out.readouts.column_mut(i).unscale_mut(s);
    }
    Ok(out.with_meta("noise_normalized", "true"))
}

/// Per-column sample standard deviation (denominator `M − 1`) of repeated
/// measurements at a fixed input.
pub fn estimate_noise_std(repeated: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = repeated.nrows();
    if m < 2 {
        return Err(Error::invalid(format!(
            "noise estimation needs at least two repeats, got {m}"
        )));
    }
    let out: Vec<f64> = repeated
        .column_iter()
        .map(|c| {
            let mean = c.sum() / m as f64;
            let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (m - 1) as f64).sqrt()
        })
        .collect();
    for (i, s) in out.iter().enumerate() {
        if *s == 0.0 {
            log::warn!("readout column {} shows no noise across repeats", i + 1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPoint {
    pub kappa: usize,
    pub ind: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCurve {
    /// `IND(κ)` for `κ = 1..K−1`.
    pub values: Vec<IndicatorPoint>,
    pub argmin: Option<usize>,
    /// Eigenvalues of `ZᵀZ`, non-ascending.
    pub eigenvalues: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl IndicatorCurve {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["kappa", "IND"])?;
        for p in &self.values {
            wr.write_record([p.kappa.to_string(), format!("{:.16e}", p.ind)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn indicator_function(data: &Dataset) -> Result<IndicatorCurve> {
    indicator_of(&data.readouts)
}

/// Indicator curve of an N×K matrix.
pub fn indicator_of(z: &DMatrix<f64>) -> Result<IndicatorCurve> {
    let (n, k) = z.shape();
    if k < 2 {
        return Err(Error::invalid(
            "the indicator function needs at least two readouts",
        ));
    }
    if n <= k {
        log::warn!("only {n} samples for {k} readouts; the indicator may be unreliable");
    }
    let zz = z.tr_mul(z);
    let zz = (&zz + zz.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(zz)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let lmax = eigenvalues[0];
    if !(lmax > 0.0) {
        return Err(Error::Numerical("readouts are identically zero".into()));
    }
    for l in eigenvalues.iter_mut() {
        if *l < ZERO_EIGEN_TOLERANCE * lmax {
            *l = 0.0;
        }
    }
    // tail[κ] = Σ_{j>κ} λ_j
    let mut tail = vec![0.0; k + 1];
    for j in (0..k).rev() {
        tail[j] = tail[j + 1] + eigenvalues[j];
    }
    let ind = |kappa: usize| {
        let r = (k - kappa) as f64;
        (tail[kappa] / (n as f64 * r)).sqrt() / (r * r)
    };
    let values: Vec<IndicatorPoint> = (1..k)
        .map(|kappa| IndicatorPoint {
            kappa,
            ind: ind(kappa),
        })
        .collect();
    let argmin = (1..k.saturating_sub(1)).find(|&kappa| {
        let here = ind(kappa);
        here <= ind(kappa + 1) && here < ind(kappa - 1)
    });
    Ok(IndicatorCurve {
        values,
        argmin,
        eigenvalues,
        k,
        n,
    })
}
