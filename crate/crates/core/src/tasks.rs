//! Classification benchmarks with a trained linear output layer.
//!
//! Features are pushed through a fixed system (the simulated fiber, or the
//! identity for the linear baseline), a constant column is appended, and a
//! least-squares readout is scored by k-fold cross-validation.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::photonic::{simulate_dataset, Scenario};
use crate::sampling::{SampleMatrix, SampleSource};
use crate::stats;

/// Feature matrix in `[-1, 1]` with integer class labels.
///
/// Binary tasks use classes `0` and `1`, trained against targets `−1` and `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub name: String,
}

impl TaskDataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                context: "labels vs feature rows",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if let Some(v) = features.iter().find(|v| !(v.abs() <= 1.0 + 1e-12)) {
            return Err(Error::invalid(format!("feature value {v} outside [-1, 1]")));
        }
        Ok(TaskDataset {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Features followed by a `label` column.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut wr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.features.ncols())
            .map(|j| format!("f{j}"))
            .collect();
        header.push("label".into());
        wr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .features
                .row(i)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            rec.push(self.labels[i].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read a CSV whose last column holds integer class labels.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let cols = rd.headers()?.len();
        if cols < 2 {
            return Err(Error::Parse(
                "task CSV needs feature columns and a label column".into(),
            ));
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            for j in 0..cols - 1 {
                let v: f64 = rec[j].parse().map_err(|_| {
                    Error::Parse(format!("row {}: bad number {:?}", line + 2, &rec[j]))
                })?;
                values.push(v);
            }
            labels.push(rec[cols - 1].parse().map_err(|_| {
                Error::Parse(format!("row {}: bad label {:?}", line + 2, &rec[cols - 1]))
            })?);
        }
        let features = DMatrix::from_row_slice(labels.len(), cols - 1, &values);
        let name = path
            .file_stem()
            .map_or("task".into(), |s| s.to_string_lossy().into_owned());
        TaskDataset::new(features, labels, name)
    }
}

/// Angular extent of the spirals, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralRange {
    pub theta0: f64,
    pub theta_max: f64,
}

impl Default for SpiralRange {
    /// Two full turns starting at `π/2`.
    fn default() -> Self {
        SpiralRange {
            theta0: 0.5 * std::f64::consts::PI,
            theta_max: 4.5 * std::f64::consts::PI,
        }
    }
}

/// Two interleaved spirals over the default angular range.
pub fn two_spirals(n: usize, noise_std: f64, seed: u64) -> Result<TaskDataset> {
    two_spirals_with(n, noise_std, seed, SpiralRange::default())
}

/// Two interleaved spirals, `n/2` points each.
///
/// `θ` runs evenly over `[θ₀, θ_max]`, `r = θ/θ_max`; the second spiral is the
/// first rotated by `π`. Jitter is added before scaling into `[-1, 1]²`.
pub fn two_spirals_with(
    n: usize,
    noise_std: f64,
    seed: u64,
    range: SpiralRange,
) -> Result<TaskDataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "two spirals needs a positive even count, got {n}"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise std must be non-negative"));
    }
    if !(range.theta_max > range.theta0 && range.theta0 >= 0.0) {
        return Err(Error::invalid("spiral range needs 0 ≤ θ₀ < θ_max"));
    }
    let (theta0, theta_max) = (range.theta0, range.theta_max);
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).expect("checked std");
    let mut features = DMatrix::zeros(n, 2);
    let mut labels = vec![0; n];
    for i in 0..half {
        let t = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let theta = theta0 + t * (theta_max - theta0);
        let r = theta / theta_max;
        let (x, y) = (r * theta.cos(), r * theta.sin());
        for (row, sign, label) in [(i, 1.0, 0), (half + i, -1.0, 1)] {
            features[(row, 0)] = sign * x + normal.sample(&mut rng);
            features[(row, 1)] = sign * y + normal.sample(&mut rng);
            labels[row] = label;
        }
    }
    let m = features.amax();
    if m > 0.0 {
        features /= m;
    }
    TaskDataset::new(features, labels, "two_spirals")
}

/// Fitted principal-component projection with the output rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// D×k, columns in order of decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: f64,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl PcaTransform {
    /// Project and min-max rescale new rows with the fitted parameters.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for (j, m) in self.mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let mut z = centered * &self.components;
        for j in 0..z.ncols() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let span = hi - lo;
            z.column_mut(j).apply(|v| {
                *v = if span > 0.0 {
                    2.0 * (*v - lo) / span - 1.0
                } else {
                    0.0
                }
            });
        }
        z
    }

    /// Centered projection before rescaling.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for (j, m) in self.mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-m);
        }
        centered * &self.components
    }
}

/// Project onto the top-`k` principal directions and rescale each component to `[-1, 1]`.
pub fn pca_reduce(features: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, PcaTransform)> {
    let (n, d) = features.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!(
            "cannot keep {k} components of a {n}×{d} matrix"
        )));
    }
    let mean: Vec<f64> = features.column_iter().map(|c| c.sum() / n as f64).collect();
    let mut centered = features.clone();
    for (j, m) in mean.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = DMatrix::zeros(d, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // Fix the sign so the largest-magnitude loading is positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        components.set_column(c, &v);
    }
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let explained_variance: Vec<f64> = order
        .iter()
        .take(k)
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .collect();
    let explained_ratio = if total > 0.0 {
        explained_variance.iter().sum::<f64>() / total
    } else {
        1.0
    };
    let z = &centered * &components;
    let min: Vec<f64> = z.column_iter().map(|c| c.min()).collect();
    let max: Vec<f64> = z.column_iter().map(|c| c.max()).collect();
    let t = PcaTransform {
        mean,
        components,
        explained_variance,
        explained_ratio,
        min,
        max,
    };
    let out = t.apply(features);
    Ok((out, t))
}

/// `1e-8 · tr(G) / K` with `G = XᵀX / N`.
pub fn default_ridge(x: &DMatrix<f64>) -> f64 {
    let (n, k) = x.shape();
    let trace: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    1e-8 * trace / k as f64
}

/// `W = (XᵀX + ridge·N·I)⁺ XᵀY`.
pub fn train_linear_readout(
    x: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    if !(ridge >= 0.0) {
        return Err(Error::invalid(format!(
            "ridge must be non-negative, got {ridge}"
        )));
    }
    if x.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            context: "targets vs readout rows",
            expected: x.nrows(),
            got: targets.nrows(),
        });
    }
    let n = x.nrows() as f64;
    let mut g = x.tr_mul(x) / n;
    g = (&g + g.transpose()) * 0.5;
    for i in 0..g.nrows() {
        g[(i, i)] += ridge;
    }
    let r = x.tr_mul(targets) / n;
    let eig = SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let cut = crate::capacity::DEFAULT_EIGEN_TOLERANCE * lmax;
    let v = &eig.eigenvectors;
    let inv_diag = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
    let proj = v.tr_mul(&r);
    let scaled = DMatrix::from_fn(proj.nrows(), proj.ncols(), |i, j| {
        proj[(i, j)] * inv_diag[i]
    });
    let w = v * scaled;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("readout weights are not finite".into()));
    }
    Ok(w)
}

/// Regression targets: `∓1` for binary labels, one-hot otherwise.
pub fn label_targets(labels: &[usize], n_classes: usize) -> DMatrix<f64> {
    if n_classes <= 2 {
        DMatrix::from_fn(
            labels.len(),
            1,
            |i, _| if labels[i] == 1 { 1.0 } else { -1.0 },
        )
    } else {
        DMatrix::from_fn(labels.len(), n_classes, |i, j| {
            if labels[i] == j {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Sign decoding for one output column, argmax otherwise.
pub fn decode(outputs: &DMatrix<f64>) -> Vec<usize> {
    outputs
        .row_iter()
        .map(|r| {
            if r.len() == 1 {
                usize::from(r[0] > 0.0)
            } else {
                r.iamax_full().1
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    PhotonicElm,
    LinearBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the fold accuracies over `√k`.
    pub std_error: f64,
    pub model: Model,
    pub ridge: Option<f64>,
    pub seed: u64,
}

impl CVResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seeded fold index of every sample: a ChaCha8 shuffle, then round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// k-fold accuracy of a linear readout on `features` plus a constant column.
///
/// `ridge = None` uses [`default_ridge`] of each training fold.
pub fn kfold_accuracy(
    features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    ridge: Option<f64>,
    seed: u64,
    model: Model,
) -> Result<CVResult> {
    let n = features.nrows();
    if k < 2 || k > n {
        return Err(Error::invalid(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "labels vs feature rows",
            expected: n,
            got: labels.len(),
        });
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let x = features.clone().insert_column(features.ncols(), 1.0);
    let fold = fold_assignment(n, k, seed);
    let results: Vec<Result<f64>> = par::map_range(k, |f| {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let xt = x.select_rows(&train);
        let yl: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        for c in 0..n_classes {
            if !yl.contains(&c) {
                log::warn!("class {c} is absent from training fold {f}");
            }
        }
        let w = train_linear_readout(
            &xt,
            &label_targets(&yl, n_classes),
            ridge.unwrap_or_else(|| default_ridge(&xt)),
        )?;
        let pred = decode(&(x.select_rows(&test) * w));
        let hits = test
            .iter()
            .zip(&pred)
            .filter(|(&i, &p)| labels[i] == p)
            .count();
        Ok(hits as f64 / test.len() as f64)
    });
    let fold_accuracies = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = stats::mean(&fold_accuracies);
    let std_error = stats::std_dev(&fold_accuracies) / (k as f64).sqrt();
    Ok(CVResult {
        fold_accuracies,
        mean,
        std_error,
        model,
        ridge,
        seed,
    })
}

/// Fixed feature map placed in front of the trained readout.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchSystem {
    PhotonicSim(Box<Scenario>),
    Identity,
}

/// System readouts for every task sample.
pub fn system_features(task: &TaskDataset, system: &BenchSystem) -> Result<DMatrix<f64>> {
    match system {
        BenchSystem::Identity => Ok(task.features.clone()),
        BenchSystem::PhotonicSim(sc) => {
            let q = sc.n_inputs();
            if task.features.ncols() != q {
                return Err(Error::DimensionMismatch {
                    context: "task features vs system inputs",
                    expected: q,
                    got: task.features.ncols(),
                });
            }
            let samples = SampleMatrix::new(task.features.clone(), SampleSource::External, false)?;
            Ok(simulate_dataset(&samples, sc)?.readouts)
        }
    }
}

pub fn run_benchmark(
    task: &TaskDataset,
    system: &BenchSystem,
    ridge: Option<f64>,
    k: usize,
    seed: u64,
) -> Result<CVResult> {
    let features = system_features(task, system)?;
    let model = match system {
        BenchSystem::Identity => Model::LinearBaseline,
        BenchSystem::PhotonicSim(_) => Model::PhotonicElm,
    };
    kfold_accuracy(&features, &task.labels, k, ridge, seed, model)
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn idx_header(bytes: &[u8], magic: u32, dims: usize) -> Result<(Vec<usize>, &[u8])> {
    let head = 4 + 4 * dims;
    if bytes.len() < head {
        return Err(Error::Parse("IDX file is truncated".into()));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(0) != magic {
        return Err(Error::Parse(format!(
            "IDX magic {:#x}, expected {magic:#x}",
            word(0)
        )));
    }
    let shape: Vec<usize> = (1..=dims).map(|i| word(i) as usize).collect();
    let body = &bytes[head..];
    if body.len() != shape.iter().product::<usize>() {
        return Err(Error::Parse(format!(
            "IDX payload has {} bytes, header promises {}",
            body.len(),
            shape.iter().product::<usize>()
        )));
    }
    Ok((shape, body))
}

/// Unsigned-byte image file (`0x00000803`) as an N×(rows·cols) matrix of raw pixel values.
pub fn read_idx_images(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = open_maybe_gz(path)?;
    let (shape, body) = idx_header(&bytes, 0x803, 3)?;
    let d = shape[1] * shape[2];
    Ok(DMatrix::from_row_iterator(
        shape[0],
        d,
        body.iter().map(|&b| b as f64),
    ))
}

/// Unsigned-byte label file (`0x00000801`).
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = open_maybe_gz(path)?;
    let (_, body) = idx_header(&bytes, 0x801, 1)?;
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// `n` distinct row indices out of `total`, drawn with a seeded shuffle and returned sorted.
pub fn random_subset(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(Error::invalid(format!(
            "cannot draw {n} rows out of {total}"
        )));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    Ok(idx)
}

/// Digit images reduced by PCA to `k` components in `[-1, 1]`.
pub fn digits_task(images: &Path, labels: &Path, k: usize) -> Result<(TaskDataset, PcaTransform)> {
    let x = read_idx_images(images)?;
    let y = read_idx_labels(labels)?;
    let (z, t) = pca_reduce(&x, k)?;
    Ok((TaskDataset::new(z, y, "digits_pca")?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn spirals_shape_and_range() {
        let s = two_spirals(2000, 0.02, 1).unwrap();
        assert_eq!(s.n(), 2000);
        assert!(s.features.amax() <= 1.0 + 1e-15);
        assert_eq!(s.labels.iter().filter(|&&l| l == 1).count(), 1000);
        assert!(two_spirals(7, 0.0, 1).is_err());
    }

    #[test]
    fn clean_spirals_never_share_a_point() {
        let s = two_spirals(400, 0.0, 0).unwrap();
        for i in 0..200 {
            for j in 200..400 {
                let d = (s.features.row(i) - s.features.row(j)).norm();
                assert!(d > 1e-6);
            }
        }
    }

    #[test]
    fn linear_model_cannot_separate_spirals() {
        let s = two_spirals(2000, 0.0, 3).unwrap();
        let cv =
            kfold_accuracy(&s.features, &s.labels, 5, None, 11, Model::LinearBaseline).unwrap();
        assert!(cv.mean < 0.65, "{}", cv.mean);
    }

    #[test]
    fn readout_matches_normal_equations() {
        let x = gaussian(50, 4, 1);
        let y = gaussian(50, 2, 2);
        let w = train_linear_readout(&x, &y, 0.0).unwrap();
        let oracle = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        assert!((w - oracle).amax() < 1e-10);
        let ridge = 0.3;
        let wr = train_linear_readout(&x, &y, ridge).unwrap();
        let a = x.transpose() * &x + DMatrix::identity(4, 4) * (ridge * 50.0);
        assert!((wr - a.try_inverse().unwrap() * x.transpose() * &y).amax() < 1e-10);
        assert!(train_linear_readout(&x, &y, 1e12).unwrap().amax() < 1e-9);
        assert!(train_linear_readout(&x, &y, -1.0).is_err());
    }

    #[test]
    fn square_system_is_fit_exactly() {
        let x = gaussian(6, 6, 4);
        let y = gaussian(6, 1, 5);
        let w = train_linear_readout(&x, &y, 0.0).unwrap();
        assert!((x * w - y).amax() < 1e-8);
    }

    #[test]
    fn separable_data_is_classified_perfectly() {
        let x = gaussian(300, 3, 6).map(|v| v.clamp(-3.0, 3.0) / 3.0);
        let labels: Vec<usize> = x
            .row_iter()
            .map(|r| usize::from(r[0] - 0.5 * r[1] > 0.05))
            .collect();
        let cv = kfold_accuracy(&x, &labels, 5, None, 1, Model::LinearBaseline).unwrap();
        assert!(cv.mean >= 0.99, "{}", cv.mean);
    }

    #[test]
    fn shuffled_labels_score_chance() {
        let x = gaussian(2000, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut labels: Vec<usize> = (0..2000).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);
        let cv = kfold_accuracy(&x, &labels, 5, None, 2, Model::LinearBaseline).unwrap();
        assert!((cv.mean - 0.5).abs() < 0.05, "{}", cv.mean);
    }

    #[test]
    fn cv_is_deterministic_with_correct_error() {
        let s = two_spirals(200, 0.05, 9).unwrap();
        let a = kfold_accuracy(&s.features, &s.labels, 5, None, 4, Model::LinearBaseline).unwrap();
        assert_eq!(
            a,
            kfold_accuracy(&s.features, &s.labels, 5, None, 4, Model::LinearBaseline).unwrap()
        );
        let m = a.fold_accuracies.iter().sum::<f64>() / 5.0;
        let var = a
            .fold_accuracies
            .iter()
            .map(|v| (v - m).powi(2))
            .sum::<f64>()
            / 4.0;
        assert_relative_eq!(a.std_error, (var / 5.0).sqrt(), epsilon = 1e-15);
        assert!(a.fold_accuracies.iter().all(|v| (0.0..=1.0).contains(v)));
        let folds = fold_assignment(200, 5, 4);
        assert!((0..5).all(|f| folds.iter().filter(|&&v| v == f).count() == 40));
    }

    #[test]
    fn multiclass_uses_argmax() {
        let centers = [[0.8, 0.0], [-0.8, 0.5], [0.0, -0.8]];
        let noise = gaussian(300, 2, 10) * 0.05;
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(300, 2, |i, j| centers[labels[i]][j] + noise[(i, j)]);
        let cv = kfold_accuracy(&x, &labels, 5, None, 3, Model::LinearBaseline).unwrap();
        assert!(cv.mean > 0.98);
        assert_eq!(
            label_targets(&[2, 0], 3)
                .row(0)
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn identity_benchmark_is_the_baseline() {
        let s = two_spirals(200, 0.05, 1).unwrap();
        let a = run_benchmark(&s, &BenchSystem::Identity, None, 5, 2).unwrap();
        let b = kfold_accuracy(&s.features, &s.labels, 5, None, 2, Model::LinearBaseline).unwrap();
        assert_eq!(a, b);
        let sc = Scenario {
            encoder: crate::photonic::EncoderConfig {
                scheme: crate::photonic::EncodingScheme::Sequential5x4,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(run_benchmark(&s, &BenchSystem::PhotonicSim(Box::new(sc)), None, 5, 2).is_err());
    }

    #[test]
    fn pca_examples() {
        let x = gaussian(100, 3, 11);
        let (z, t) = pca_reduce(&x, 3).unwrap();
        assert_relative_eq!(t.explained_ratio, 1.0, epsilon = 1e-12);
        assert!(z.amax() <= 1.0 + 1e-12);
        let p = t.project(&x);
        for c in p.column_iter() {
            assert!(c.mean().abs() < 1e-9);
        }
        // Lossless: the projection is a rotation of the centered data.
        let mut centered = x.clone();
        for (j, m) in t.mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-m);
        }
        assert!((&p * t.components.transpose() - centered).amax() < 1e-10);
        assert!(pca_reduce(&x, 4).is_err());
    }

    #[test]
    fn pca_orders_by_variance() {
        let mut x = gaussian(500, 4, 12);
        x.column_mut(2).scale_mut(10.0);
        let (_, t) = pca_reduce(&x, 2).unwrap();
        assert!(t.explained_variance[0] > t.explained_variance[1]);
        assert!(t.components[(2, 0)].abs() > 0.99);
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend([0, 255, 7, 9, 1, 2, 3, 4]);
        std::fs::write(&img, &bytes).unwrap();
        std::fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 2, 3, 5]).unwrap();
        let m = read_idx_images(&img).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m[(0, 1)], 255.0);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(read_idx_labels(&lab).unwrap(), vec![3, 5]);
        assert!(read_idx_labels(&img).is_err());
        std::fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 3, 3, 5]).unwrap();
        assert!(read_idx_labels(&lab).is_err());
    }

    #[test]
    fn task_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spirals.csv");
        let s = two_spirals(20, 0.1, 1).unwrap();
        s.save_csv(&p).unwrap();
        let back = TaskDataset::load_csv(&p).unwrap();
        assert_eq!(back.labels, s.labels);
        assert!((back.features - &s.features).amax() < 1e-15);
    }
}
