//! Synthetic readout systems with exactly known capacities.
//!
//! Readouts are random linear combinations of a random subset of the
//! orthonormal basis, so every capacity can be computed from the mixing
//! matrix alone: the capacity of basis function `l` is the squared norm of the
//! projection of `e_l` onto the row space of the mixing matrix.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_basis, BasisSet, MultiIndex};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig};
use crate::par;
use crate::sampling::{pseudo_random_points, sobol_points, SampleMatrix};
use crate::stats::{mean, pairwise_sum, std_dev};

/// Relative singular-value cutoff used to decide the rank of a mixing matrix.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSystem {
    pub basis: BasisSet,
    /// Positions in `basis.indices` of the selected functions, ascending.
    pub selected: Vec<usize>,
    /// K×n_sel mixing matrix; readout `i` is `Σ_j c_ij y_{selected[j]}`.
    pub coefficients: DMatrix<f64>,
    pub seed: u64,
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(StandardNormal.sample(rng));
    }
    DMatrix::from_row_slice(rows, cols, &values)
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

fn select(basis_len: usize, n_sel: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut selected = sample(rng, basis_len, n_sel).into_vec();
    selected.sort_unstable();
    selected
}

/// `k` readouts mixing `n_sel` randomly chosen basis functions with i.i.d.
/// standard normal coefficients. The mixing matrix has full row rank.
pub fn make_synthetic(
    q: usize,
    d_max: u32,
    n_sel: usize,
    k: usize,
    seed: u64,
) -> Result<SyntheticSystem> {
    let basis = enumerate_basis(q, d_max)?;
    if n_sel == 0 || n_sel > basis.len() {
        return Err(Error::invalid(format!(
            "cannot select {n_sel} of {} basis functions",
            basis.len()
        )));
    }
    if k == 0 || k > n_sel {
        return Err(Error::invalid(format!(
            "readout count {k} must be between 1 and the selection size {n_sel}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selected = select(basis.len(), n_sel, &mut rng);
    for _ in 0..100 {
        let coefficients = normal_matrix(k, n_sel, &mut rng);
        if matrix_rank(&coefficients) == k {
            return Ok(SyntheticSystem {
                basis,
                selected,
                coefficients,
                seed,
            });
        }
    }
    Err(Error::Numerical(
        "could not draw a full-rank mixing matrix".into(),
    ))
}

/// Like [`make_synthetic`] but the K×n_sel mixing matrix is a product of
/// K×rank and rank×n_sel standard normal factors, so only `rank` directions
/// are independent. `k` may exceed `n_sel`.
pub fn make_low_rank_synthetic(
    q: usize,
    d_max: u32,
    n_sel: usize,
    k: usize,
    rank: usize,
    seed: u64,
) -> Result<SyntheticSystem> {
    let basis = enumerate_basis(q, d_max)?;
    if n_sel == 0 || n_sel > basis.len() {
        return Err(Error::invalid(format!(
            "cannot select {n_sel} of {} basis functions",
            basis.len()
        )));
    }
    if rank == 0 || rank > n_sel.min(k) {
        return Err(Error::invalid(format!(
            "rank {rank} must be between 1 and min(n_sel, K) = {}",
            n_sel.min(k)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selected = select(basis.len(), n_sel, &mut rng);
    for _ in 0..100 {
        let left = normal_matrix(k, rank, &mut rng);
        let right = normal_matrix(rank, n_sel, &mut rng);
        let coefficients = left * right;
        if matrix_rank(&coefficients) == rank {
            return Ok(SyntheticSystem {
                basis,
                selected,
                coefficients,
                seed,
            });
        }
    }
    Err(Error::Numerical(
        "could not draw a mixing matrix of the requested rank".into(),
    ))
}

impl SyntheticSystem {
    pub fn k(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn selected_indices(&self) -> Vec<MultiIndex> {
        self.selected
            .iter()
            .map(|&p| self.basis.indices[p].clone())
            .collect()
    }

    /// Readouts at the given samples, optionally with the constant column appended.
    pub fn evaluate_readouts(&self, samples: &SampleMatrix, augmented: bool) -> Result<Dataset> {
        let sub = BasisSet {
            q: self.basis.q,
            d_max: self.basis.d_max,
            indices: self.selected_indices(),
        };
        let y = sub.evaluate(&samples.points)?;
        let x = y * self.coefficients.transpose();
        let d = Dataset::new(samples.clone(), x)?
            .with_meta("system", "synthetic")
            .with_meta("system_seed", self.seed);
        Ok(if augmented { d.augment() } else { d })
    }

    /// Exact capacity of every function of `basis`, in basis order.
    ///
    /// With `augmented`, the constant readout joins the span.
    pub fn true_capacities(&self, augmented: bool) -> Vec<f64> {
        let const_pos = self.basis.constant_position();
        let mut cols = self.selected.clone();
        let mut rows = self.coefficients.clone();
        if augmented {
            if let Some(c) = const_pos {
                let j = match cols.iter().position(|&p| p == c) {
                    Some(j) => j,
                    None => {
                        cols.push(c);
                        let at = rows.ncols();
                        rows = rows.insert_column(at, 0.0);
                        at
                    }
                };
                let k = rows.nrows();
                rows = rows.insert_row(k, 0.0);
                rows[(k, j)] = 1.0;
            }
        }
        let mut out = vec![0.0; self.basis.len()];
        let svd = rows.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let max = svd.singular_values.max();
        for (r, &s) in svd.singular_values.iter().enumerate() {
            if s <= RANK_TOLERANCE * max {
                continue;
            }
            for (j, &p) in cols.iter().enumerate() {
                out[p] += vt[(r, j)] * vt[(r, j)];
            }
        }
        out
    }

    /// Sum of the exact capacities, i.e. the dimension of the readout span.
    pub fn ground_truth_rank(&self, augmented: bool) -> f64 {
        pairwise_sum(&self.true_capacities(augmented))
    }
}

/// Which sampler feeds a validation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Sobol,
    PseudoRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationParams {
    pub q: usize,
    pub d_max: u32,
    pub n_sel: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub source: SourceKind,
    pub repeats: usize,
    pub seed: u64,
    /// Append the constant readout before estimating.
    pub augment: bool,
}

/// Error histogram over a fixed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub counts_raw: Vec<u64>,
    pub counts_corrected: Vec<u64>,
    /// Errors below `lo` / at or above `hi`, as `[raw, corrected]`.
    pub underflow: [u64; 2],
    pub overflow: [u64; 2],
}

pub const HISTOGRAM_LO: f64 = -0.005;
pub const HISTOGRAM_HI: f64 = 0.02;
pub const HISTOGRAM_WIDTH: f64 = 2e-4;

impl Histogram {
    fn new(lo: f64, hi: f64, width: f64) -> Self {
        let bins = ((hi - lo) / width).round() as usize;
        Histogram {
            lo,
            hi,
            width,
            counts_raw: vec![0; bins],
            counts_corrected: vec![0; bins],
            underflow: [0; 2],
            overflow: [0; 2],
        }
    }

    fn add(&mut self, which: usize, e: f64) {
        if e < self.lo {
            self.underflow[which] += 1;
            return;
        }
        let bin = ((e - self.lo) / self.width).floor() as usize;
        let counts = if which == 0 {
            &mut self.counts_raw
        } else {
            &mut self.counts_corrected
        };
        match counts.get_mut(bin) {
            Some(c) => *c += 1,
            None => self.overflow[which] += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalErrorStats {
    pub ground_truth_rank: f64,
    pub mean_total_true: f64,
    pub mean_total_raw: f64,
    pub mean_total_corrected: f64,
    /// Mean of `total_corrected − total_true` over repeats.
    pub mean_err: f64,
    pub std_err: f64,
    pub per_repeat_corrected: Vec<f64>,
    pub per_repeat_true: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub params: ValidationParams,
    pub config: EstimatorConfig,
    pub repeats: usize,
    pub histogram: Histogram,
    pub mean_raw_err: f64,
    pub mean_corr_err: f64,
    pub std_raw_err: f64,
    pub std_corr_err: f64,
    pub total_err_stats: TotalErrorStats,
}

struct RepeatOutcome {
    raw_err: Vec<f64>,
    corr_err: Vec<f64>,
    total_true: f64,
    total_raw: f64,
    total_corrected: f64,
}

/// Seed of repeat `r` derived from the run seed.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Estimate capacities of fresh synthetic systems and compare with the truth.
///
/// Every repeat draws a new system; Sobol repeats share the point set, while
/// pseudo-random repeats draw new points.
pub fn validation_run(p: &ValidationParams, cfg: &EstimatorConfig) -> Result<ValidationStats> {
    if p.n % 2 == 1 {
        return Err(Error::OddSampleCount(p.n));
    }
    if p.repeats == 0 {
        return Err(Error::invalid("validation needs at least one repeat"));
    }
    let sobol = match p.source {
        SourceKind::Sobol => Some(sobol_points(p.q, p.n)?),
        SourceKind::PseudoRandom => None,
    };
    let outcomes: Vec<Result<RepeatOutcome>> = par::map_range(p.repeats, |r| {
        let rs = repeat_seed(p.seed, r);
        let sys = make_synthetic(p.q, p.d_max, p.n_sel, p.k, rs)?;
        let samples = match &sobol {
            Some(s) => s.clone(),
            None => pseudo_random_points(p.q, p.n, rs ^ 0x5DEE_CE66),
        };
        let data = sys.evaluate_readouts(&samples, p.augment)?;
        let report = estimate(&data, &sys.basis, cfg)?;
        let truth = sys.true_capacities(p.augment);
        let raw_err = report
            .values
            .iter()
            .zip(&truth)
            .map(|(v, t)| v.raw - t)
            .collect();
        let corr_err = report
            .values
            .iter()
            .zip(&truth)
            .map(|(v, t)| v.corrected.unwrap_or(v.raw) - t)
            .collect();
        Ok(RepeatOutcome {
            raw_err,
            corr_err,
            total_true: pairwise_sum(&truth),
            total_raw: report.total_raw,
            total_corrected: report.total_corrected,
        })
    });
    let outcomes: Vec<RepeatOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut hist = Histogram::new(HISTOGRAM_LO, HISTOGRAM_HI, HISTOGRAM_WIDTH);
    let mut raw_all = Vec::new();
    let mut corr_all = Vec::new();
    for o in &outcomes {
        for &e in &o.raw_err {
            hist.add(0, e);
        }
        for &e in &o.corr_err {
            hist.add(1, e);
        }
        raw_all.extend_from_slice(&o.raw_err);
        corr_all.extend_from_slice(&o.corr_err);
    }
    let trues: Vec<f64> = outcomes.iter().map(|o| o.total_true).collect();
    let raws: Vec<f64> = outcomes.iter().map(|o| o.total_raw).collect();
    let corrs: Vec<f64> = outcomes.iter().map(|o| o.total_corrected).collect();
    let diffs: Vec<f64> = corrs.iter().zip(&trues).map(|(c, t)| c - t).collect();
    Ok(ValidationStats {
        params: *p,
        config: *cfg,
        repeats: p.repeats,
        histogram: hist,
        mean_raw_err: mean(&raw_all),
        mean_corr_err: mean(&corr_all),
        std_raw_err: std_dev(&raw_all),
        std_corr_err: std_dev(&corr_all),
        total_err_stats: TotalErrorStats {
            ground_truth_rank: trues[0],
            mean_total_true: mean(&trues),
            mean_total_raw: mean(&raws),
            mean_total_corrected: mean(&corrs),
            mean_err: mean(&diffs),
            std_err: std_dev(&diffs),
            per_repeat_corrected: corrs,
            per_repeat_true: trues,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity_sweep, DEFAULT_EIGEN_TOLERANCE};
    use approx::assert_relative_eq;

    #[test]
    fn full_size_system() {
        let s = make_synthetic(5, 8, 200, 71, 1).unwrap();
        assert_eq!(s.basis.len(), 1287);
        assert_eq!(s.selected.len(), 200);
        assert_eq!(s.k(), 71);
        let t = s.true_capacities(false);
        assert_relative_eq!(pairwise_sum(&t), 71.0, epsilon = 1e-10);
        assert!(t.iter().all(|&c| (-1e-12..=1.0 + 1e-12).contains(&c)));
        let ta = s.true_capacities(true);
        assert_relative_eq!(pairwise_sum(&ta), 72.0, epsilon = 1e-10);
    }

    #[test]
    fn full_selection_spans_everything() {
        let s = make_synthetic(1, 1, 2, 2, 4).unwrap();
        let t = s.true_capacities(false);
        assert_relative_eq!(t[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(t[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn square_mixing_and_unselected_indices() {
        let s = make_synthetic(3, 3, 6, 6, 8).unwrap();
        let t = s.true_capacities(false);
        for (p, c) in t.iter().enumerate() {
            if s.selected.contains(&p) {
                assert_relative_eq!(*c, 1.0, epsilon = 1e-10);
            } else {
                assert_eq!(*c, 0.0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            make_synthetic(2, 4, 8, 3, 5).unwrap(),
            make_synthetic(2, 4, 8, 3, 5).unwrap()
        );
        assert_ne!(
            make_synthetic(2, 4, 8, 3, 5).unwrap(),
            make_synthetic(2, 4, 8, 3, 6).unwrap()
        );
    }

    #[test]
    fn infeasible_sizes() {
        assert!(make_synthetic(2, 2, 7, 3, 0).is_err());
        assert!(make_synthetic(2, 2, 4, 5, 0).is_err());
        assert!(make_low_rank_synthetic(2, 2, 4, 10, 5, 0).is_err());
    }

    #[test]
    fn true_capacities_match_dense_sobol_estimate() {
        let s = make_synthetic(2, 3, 5, 3, 12).unwrap();
        let pts = sobol_points(2, 1 << 20).unwrap();
        let d = s.evaluate_readouts(&pts, false).unwrap();
        let est = capacity_sweep(&d, &s.basis, DEFAULT_EIGEN_TOLERANCE).unwrap();
        for (v, t) in est.iter().zip(s.true_capacities(false)) {
            assert!((v.raw - t).abs() < 2e-3, "{}: {} vs {t}", v.index, v.raw);
        }
    }

    #[test]
    fn readouts_match_per_sample_loop() {
        let s = make_synthetic(2, 3, 4, 2, 3).unwrap();
        let pts = pseudo_random_points(2, 9, 1);
        let d = s.evaluate_readouts(&pts, true).unwrap();
        assert_eq!(d.k(), 3);
        let idx = s.selected_indices();
        for n in 0..9 {
            let u = pts.row(n);
            for i in 0..2 {
                let mut acc = 0.0;
                for (j, m) in idx.iter().enumerate() {
                    acc +=
                        s.coefficients[(i, j)] * crate::basis::eval_basis_function(m, &u).unwrap();
                }
                assert_relative_eq!(d.readouts[(n, i)], acc, epsilon = 1e-12);
            }
            assert_eq!(d.readouts[(n, 2)], 1.0);
        }
    }

    #[test]
    fn identity_and_zero_mixing() {
        let mut s = make_synthetic(1, 2, 3, 3, 0).unwrap();
        s.coefficients = DMatrix::identity(3, 3);
        let pts = sobol_points(1, 8).unwrap();
        let d = s.evaluate_readouts(&pts, false).unwrap();
        let y = s.basis.evaluate(&pts.points).unwrap();
        assert_eq!(d.readouts, y);
        s.coefficients.row_mut(1).fill(0.0);
        let d = s.evaluate_readouts(&pts, false).unwrap();
        assert!(d.readouts.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn low_rank_system_truth_sums_to_rank() {
        let s = make_low_rank_synthetic(2, 6, 20, 71, 5, 3).unwrap();
        assert_eq!(s.k(), 71);
        assert_relative_eq!(s.ground_truth_rank(false), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn small_validation_run_shapes() {
        let p = ValidationParams {
            q: 2,
            d_max: 6,
            n_sel: 6,
            k: 3,
            n: 256,
            source: SourceKind::Sobol,
            repeats: 3,
            seed: 1,
            augment: true,
        };
        let v = validation_run(&p, &EstimatorConfig::default()).unwrap();
        assert_eq!(v.histogram.counts_raw.len(), 125);
        let counted: u64 = v.histogram.counts_raw.iter().sum::<u64>()
            + v.histogram.underflow[0]
            + v.histogram.overflow[0];
        assert_eq!(counted, 3 * 28);
        assert!(v.mean_raw_err > 0.0, "{v:#?}");
        assert_eq!(v.total_err_stats.ground_truth_rank.round(), 4.0);
        let again = validation_run(&p, &EstimatorConfig::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}
