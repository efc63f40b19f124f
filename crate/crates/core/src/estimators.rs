//! Bias-corrected capacity estimation.
//!
//! Raw capacities `C_N` carry a positive `O(1/N)` bias. Two estimators remove it:
//!
//! * [`Algorithm::ThresholdFirst`]: values below `(1/N)·sqrt(S_N · E[y⁴])` are
//!   set to zero; the rest are Richardson-extrapolated as
//!   `2·C_N − mean(C_{N/2}^{(1)}, C_{N/2}^{(2)})` using the two ordered halves,
//!   and negative results are set to zero.
//! * [`Algorithm::RichardsonFirst`]: every value is extrapolated, `B` is the
//!   smallest extrapolated value, and values below `−B` are set to zero.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSet, FourthMoments, MultiIndex};
use crate::capacity::{
    clamp_capacity, gram, sweep_views, CapacityStatus, CapacityValue, GramStats, RowView,
    TargetNorm, DEFAULT_EIGEN_TOLERANCE,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sampling::SampleSource;
use crate::stats::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    ThresholdFirst,
    RichardsonFirst,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold-first" | "threshold_first" | "1" => Ok(Algorithm::ThresholdFirst),
            "richardson-first" | "richardson_first" | "2" => Ok(Algorithm::RichardsonFirst),
            other => Err(Error::Parse(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    pub eigen_tolerance: f64,
    /// Store the two half-sample raw capacities on every value.
    pub record_halves: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            algorithm: Algorithm::ThresholdFirst,
            eigen_tolerance: DEFAULT_EIGEN_TOLERANCE,
            record_halves: false,
        }
    }
}

/// Per-basis capacities with totals and the statistics used to correct them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub basis: BasisSet,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "S_N")]
    pub s_n: f64,
    pub algorithm: Algorithm,
    pub values: Vec<CapacityValue>,
    pub total_raw: f64,
    pub total_corrected: f64,
    /// Number of readouts, counting the constant when augmented.
    pub max_capacity: f64,
    pub rank: usize,
    pub augmented: bool,
    pub sampling_source: SampleSource,
    /// Leading points of the reference Sobol sequence dropped before the first
    /// sample; present for Sobol inputs and always 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sobol_skip: Option<usize>,
    /// False when a half sample has no more rows than the readout rank, so half
    /// capacities saturate and the extrapolation is meaningless.
    pub reliable: bool,
    /// Smallest extrapolated value (`B`), reported by the Richardson-first estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub richardson_floor: Option<f64>,
    pub config: EstimatorConfig,
}

impl CapacityReport {
    /// `"Total capacity T / M"` with three decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "Total capacity {:.3} / {}",
            self.total_corrected,
            format_max(self.max_capacity)
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Corrected value if present, else raw.
    pub fn value_of(&self, v: &CapacityValue) -> f64 {
        v.corrected.unwrap_or(v.raw)
    }

    pub fn find(&self, idx: &MultiIndex) -> Option<&CapacityValue> {
        self.values.iter().find(|v| &v.index == idx)
    }
}

pub(crate) fn format_max(m: f64) -> String {
    if m.fract() == 0.0 {
        format!("{}", m as i64)
    } else {
        format!("{m:.3}")
    }
}

/// `S_N = (1/N) Σ_n (Σ_i X̃_i(n)²)²` over the retained whitened directions.
pub fn s_n_statistic(stats: &GramStats, data: &Dataset) -> Result<f64> {
    if stats.rank == 0 {
        return Ok(0.0);
    }
    let xt = crate::capacity::whitened(data, stats)?;
    Ok(s_n_of_whitened(&xt))
}

fn s_n_of_whitened(xt: &nalgebra::DMatrix<f64>) -> f64 {
    let per_row: Vec<f64> = xt
        .row_iter()
        .map(|r| {
            let s = r.norm_squared();
            s * s
        })
        .collect();
    pairwise_sum(&per_row) / xt.nrows() as f64
}

/// `(1/N) · sqrt(S_N · E[y⁴])` for the product basis function `idx`.
pub fn threshold_for(idx: &MultiIndex, s_n: f64, n: usize) -> f64 {
    (s_n * crate::basis::fourth_moment_product(idx)).sqrt() / n as f64
}

/// `2·c_full − c_half_mean`.
pub fn richardson(c_full: f64, c_half_mean: f64) -> f64 {
    2.0 * c_full - c_half_mean
}

/// The zeroing rule of the Richardson-first estimator.
///
/// Returns `B = min(extrapolated)` and, per value, the corrected capacity and
/// its status. Values below `−B` are zeroed; values surviving the cut but still
/// negative are clamped to zero; values above one are clamped to one.
pub fn richardson_first_rule(extrapolated: &[f64]) -> (f64, Vec<(f64, CapacityStatus)>) {
    let b = extrapolated.iter().copied().fold(f64::INFINITY, f64::min);
    let cut = -b;
    let out = extrapolated
        .iter()
        .map(|&e| {
            if e < cut {
                (0.0, CapacityStatus::ZeroedByThreshold)
            } else if e < 0.0 {
                (0.0, CapacityStatus::ZeroedNegative)
            } else {
                (e.min(1.0), CapacityStatus::Kept)
            }
        })
        .collect();
    (b, out)
}

pub fn estimate_threshold_first(
    data: &Dataset,
    basis: &BasisSet,
    cfg: &EstimatorConfig,
) -> Result<CapacityReport> {
    estimate(
        data,
        basis,
        &EstimatorConfig {
            algorithm: Algorithm::ThresholdFirst,
            ..*cfg
        },
    )
}

pub fn estimate_richardson_first(
    data: &Dataset,
    basis: &BasisSet,
    cfg: &EstimatorConfig,
) -> Result<CapacityReport> {
    estimate(
        data,
        basis,
        &EstimatorConfig {
            algorithm: Algorithm::RichardsonFirst,
            ..*cfg
        },
    )
}

/// Run the estimator selected by `cfg.algorithm`.
pub fn estimate(data: &Dataset, basis: &BasisSet, cfg: &EstimatorConfig) -> Result<CapacityReport> {
    if basis.q != data.q() {
        return Err(Error::DimensionMismatch {
            context: "basis q vs dataset q",
            expected: data.q(),
            got: basis.q,
        });
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::invalid("dataset has no samples"));
    }
    if n % 2 == 1 {
        return Err(Error::OddSampleCount(n));
    }
    if data.inputs.source == SampleSource::Sobol && !data.inputs.ordered {
        return Err(Error::invalid(
            "Sobol samples must keep their generation order for the half split",
        ));
    }
    let h = n / 2;
    let full = gram(data, cfg.eigen_tolerance)?;
    let first = gram(&data.rows(0, h), cfg.eigen_tolerance)?;
    let second = gram(&data.rows(h, h), cfg.eigen_tolerance)?;
    let views = [
        RowView::new(data, 0, n, &full),
        RowView::new(data, 0, h, &first),
        RowView::new(data, h, h, &second),
    ];
    let s_n = if full.rank == 0 {
        0.0
    } else {
        s_n_of_whitened(&views[0].whitened)
    };
    let mut sweeps = sweep_views(&data.inputs.points, basis, &views, TargetNorm::Analytic)?;
    let c2 = sweeps.pop().unwrap();
    let c1 = sweeps.pop().unwrap();
    let c = sweeps.pop().unwrap();

    let reliable = h > full.rank;
    if !reliable {
        log::warn!(
            "half sample size {h} does not exceed readout rank {}; extrapolation unreliable",
            full.rank
        );
    }

    let moments = FourthMoments::up_to(basis.d_max);
    let mut richardson_floor = None;
    let values: Vec<CapacityValue> = match cfg.algorithm {
        Algorithm::ThresholdFirst => basis
            .indices
            .iter()
            .enumerate()
            .map(|(l, idx)| {
                let raw = clamp_capacity(c[l]);
                let halves = [clamp_capacity(c1[l]), clamp_capacity(c2[l])];
                let threshold = (s_n * moments.product(idx)).sqrt() / n as f64;
                let (corrected, status) = if raw <= threshold {
                    (0.0, CapacityStatus::ZeroedByThreshold)
                } else {
                    let e = richardson(raw, 0.5 * (halves[0] + halves[1]));
                    if e < 0.0 {
                        (0.0, CapacityStatus::ZeroedNegative)
                    } else {
                        (e.min(1.0), CapacityStatus::Kept)
                    }
                };
                CapacityValue {
                    index: idx.clone(),
                    raw,
                    corrected: Some(corrected),
                    threshold: Some(threshold),
                    status,
                    halves: cfg.record_halves.then_some(halves),
                }
            })
            .collect(),
        Algorithm::RichardsonFirst => {
            let raws: Vec<f64> = c.iter().map(|&v| clamp_capacity(v)).collect();
            let halves: Vec<[f64; 2]> = c1
                .iter()
                .zip(&c2)
                .map(|(&a, &b)| [clamp_capacity(a), clamp_capacity(b)])
                .collect();
            let ext: Vec<f64> = raws
                .iter()
                .zip(&halves)
                .map(|(&r, h)| richardson(r, 0.5 * (h[0] + h[1])))
                .collect();
            let (b, rule) = richardson_first_rule(&ext);
            richardson_floor = Some(b);
            basis
                .indices
                .iter()
                .zip(rule)
                .enumerate()
                .map(|(l, (idx, (corrected, status)))| CapacityValue {
                    index: idx.clone(),
                    raw: raws[l],
                    corrected: Some(corrected),
                    threshold: Some(-b),
                    status,
                    halves: cfg.record_halves.then_some(halves[l]),
                })
                .collect()
        }
    };

    let raw_list: Vec<f64> = values.iter().map(|v| v.raw).collect();
    let corr_list: Vec<f64> = values.iter().map(|v| v.corrected.unwrap_or(0.0)).collect();
    Ok(CapacityReport {
        basis: basis.clone(),
        n,
        k: data.k(),
        s_n,
        algorithm: cfg.algorithm,
        total_raw: pairwise_sum(&raw_list),
        total_corrected: pairwise_sum(&corr_list),
        values,
        max_capacity: data.k() as f64,
        rank: full.rank,
        augmented: data.augmented,
        sampling_source: data.inputs.source,
        sobol_skip: (data.inputs.source == SampleSource::Sobol).then_some(0),
        reliable,
        richardson_floor,
        config: *cfg,
    })
}
