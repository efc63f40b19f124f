//! Paired input samples and readout responses.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sampling::{read_matrix_csv, write_matrix_csv, SampleMatrix};

/// N input samples with the K readouts `X_i(u(n))` measured for each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: SampleMatrix,
    /// N×K, one row per sample.
    pub readouts: DMatrix<f64>,
    /// The last readout column is the appended constant.
    pub augmented: bool,
    pub meta: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(inputs: SampleMatrix, readouts: DMatrix<f64>) -> Result<Self> {
        if inputs.n() != readouts.nrows() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows",
                expected: inputs.n(),
                got: readouts.nrows(),
            });
        }
        let mut meta = BTreeMap::new();
        meta.insert("sampling".to_owned(), inputs.source.to_string());
        Ok(Dataset {
            inputs,
            readouts,
            augmented: false,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.readouts.nrows()
    }

    /// Number of readout columns, including the constant when augmented.
    pub fn k(&self) -> usize {
        self.readouts.ncols()
    }

    pub fn q(&self) -> usize {
        self.inputs.q()
    }

    /// Append an all-ones readout column. No-op if already augmented.
    pub fn augment(mut self) -> Self {
        if self.augmented {
            return self;
        }
        let k = self.k();
        self.readouts = self.readouts.insert_column(k, 1.0);
        self.augmented = true;
        self.meta.insert("augmented".to_owned(), "true".to_owned());
        self
    }

    /// Rows `start..start + len` with provenance and augmentation preserved.
    pub fn rows(&self, start: usize, len: usize) -> Dataset {
        Dataset {
            inputs: self.inputs.rows(start, len),
            readouts: self.readouts.rows(start, len).into_owned(),
            augmented: self.augmented,
            meta: self.meta.clone(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_owned(), value.to_string());
        self
    }

    /// Write `inputs.csv`-style and `readouts.csv`-style files.
    ///
    /// The appended constant column is not written; it is re-created on load
    /// by the caller's augmentation choice.
    pub fn save_csv_pair(&self, inputs: &Path, readouts: &Path) -> Result<()> {
        self.inputs.save_csv(inputs)?;
        let k = if self.augmented {
            self.k() - 1
        } else {
            self.k()
        };
        let header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        let f = std::fs::File::create(readouts)?;
        write_matrix_csv(
            std::io::BufWriter::new(f),
            &header,
            &self.readouts.columns(0, k).into_owned(),
        )
    }

    pub fn load_csv_pair(inputs: &Path, readouts: &Path) -> Result<Self> {
        let samples = SampleMatrix::load_csv(inputs)?;
        let f = std::fs::File::open(readouts)?;
        let (_, x) = read_matrix_csv(std::io::BufReader::new(f))?;
        let d = Dataset::new(samples, x)?;
        Ok(d.with_meta("inputs_file", inputs.display())
            .with_meta("readouts_file", readouts.display()))
    }
}

/// Dense `f64` matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Headered numeric CSV as a matrix, e.g. a readouts-only file.
pub fn load_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let f = std::fs::File::open(path)?;
    read_matrix_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sobol_points;

    #[test]
    fn row_mismatch_is_rejected() {
        let s = sobol_points(2, 4).unwrap();
        assert!(Dataset::new(s, DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn augment_appends_ones_once() {
        let s = sobol_points(1, 4).unwrap();
        let d = Dataset::new(s, DMatrix::from_element(4, 2, 0.5))
            .unwrap()
            .augment();
        assert_eq!(d.k(), 3);
        assert!(d.readouts.column(2).iter().all(|&v| v == 1.0));
        assert_eq!(d.clone().augment(), d);
    }

    #[test]
    fn csv_pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = sobol_points(2, 6).unwrap();
        let x = DMatrix::from_fn(6, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let d = Dataset::new(s, x).unwrap().augment();
        let (a, b) = (dir.path().join("in.csv"), dir.path().join("out.csv"));
        d.save_csv_pair(&a, &b).unwrap();
        let back = Dataset::load_csv_pair(&a, &b).unwrap().augment();
        assert_eq!(back.readouts, d.readouts);
        assert_eq!(back.inputs.points, d.inputs.points);
    }
}
