//! Input samples on `[-1, 1]^q`: unscrambled Sobol points, seeded
//! pseudo-random points, and the ordered-halves split.
//!
//! Sobol points use the Joe–Kuo `new-joe-kuo-6.21201` direction numbers
//! (embedded, gzip-compressed) with Gray-code ordering. The all-zero
//! generator state is the starting state and is not emitted, so the first
//! point of every coordinate is `0.5` in `[0, 1)`. Points are mapped to
//! `[-1, 1)` by `x ↦ 2x − 1`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use flate2::read::GzDecoder;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Largest dimension covered by the embedded direction-number table.
pub const SOBOL_MAX_DIM: usize = 21201;

const SOBOL_BITS: u32 = 32;
static JOE_KUO_GZ: &[u8] = include_bytes!("../data/new-joe-kuo-6.21201.gz");

/// Where a sample matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Sobol,
    PseudoRandom {
        seed: u64,
    },
    /// Loaded from a file; provenance unknown.
    External,
}

impl std::fmt::Display for SampleSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleSource::Sobol => write!(f, "sobol"),
            SampleSource::PseudoRandom { seed } => write!(f, "prng(seed={seed})"),
            SampleSource::External => write!(f, "external"),
        }
    }
}

/// N×q matrix of input samples plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub points: DMatrix<f64>,
    pub source: SampleSource,
    /// Row order is the generation order (required for ordered halves of Sobol data).
    pub ordered: bool,
}

impl SampleMatrix {
    pub fn new(points: DMatrix<f64>, source: SampleSource, ordered: bool) -> Result<Self> {
        if let Some(bad) = points.iter().find(|v| !(v.abs() <= 1.0 + 1e-12)) {
            return Err(Error::invalid(format!(
                "sample value {bad} lies outside [-1, 1]"
            )));
        }
        Ok(SampleMatrix {
            points,
            source,
            ordered,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn q(&self) -> usize {
        self.points.ncols()
    }

    /// Contiguous block of rows `start..start + len`, keeping provenance.
    pub fn rows(&self, start: usize, len: usize) -> SampleMatrix {
        SampleMatrix {
            points: self.points.rows(start, len).into_owned(),
            source: self.source,
            ordered: self.ordered,
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.q()).map(|k| format!("u{k}")).collect();
        write_matrix_csv(w, &header, &self.points)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parse a `u1,…,uq` CSV. Rows are taken to be in generation order.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (_, points) = read_matrix_csv(r)?;
        SampleMatrix::new(points, SampleSource::External, true)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

pub(crate) fn write_matrix_csv<W: Write>(w: W, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    let mut rec: Vec<String> = Vec::with_capacity(m.ncols());
    for i in 0..m.nrows() {
        rec.clear();
        rec.extend((0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub(crate) fn read_matrix_csv<R: Read>(r: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    let cols = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!(
                "row {} has {} fields, header has {cols}",
                line + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: cannot parse {field:?}", line + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok((header, DMatrix::from_row_slice(rows, cols, &values)))
}

struct DirectionEntry {
    s: u32,
    a: u32,
    m: Vec<u32>,
}

fn direction_table() -> &'static [DirectionEntry] {
    static TABLE: OnceLock<Vec<DirectionEntry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut text = String::new();
        GzDecoder::new(JOE_KUO_GZ)
            .read_to_string(&mut text)
            .expect("embedded direction numbers decompress");
        text.lines()
            .skip(1)
            .map(|line| {
                let mut it = line.split_whitespace().map(|t| t.parse::<u32>().unwrap());
                let _d = it.next();
                let s = it.next().unwrap();
                let a = it.next().unwrap();
                DirectionEntry {
                    s,
                    a,
                    m: it.collect(),
                }
            })
            .collect()
    })
}

fn direction_numbers(dim: usize) -> [u32; SOBOL_BITS as usize] {
    let mut v = [0u32; SOBOL_BITS as usize];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let entry = &direction_table()[dim - 1];
    let s = entry.s as usize;
    for k in 0..s.min(v.len()) {
        v[k] = entry.m[k] << (31 - k);
    }
    for i in s..v.len() {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (entry.a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// First `n` unscrambled Sobol points in `q` dimensions, mapped to `[-1, 1)`.
pub fn sobol_points(q: usize, n: usize) -> Result<SampleMatrix> {
    if q == 0 || q > SOBOL_MAX_DIM {
        return Err(Error::UnsupportedDimension {
            requested: q,
            max: SOBOL_MAX_DIM,
        });
    }
    if n as u64 >= 1u64 << SOBOL_BITS {
        return Err(Error::invalid(format!(
            "at most 2^{SOBOL_BITS} - 1 Sobol points are available, requested {n}"
        )));
    }
    let dirs: Vec<[u32; SOBOL_BITS as usize]> = (0..q).map(direction_numbers).collect();
    let mut state = vec![0u32; q];
    let mut points = DMatrix::<f64>::zeros(n, q);
    let scale = 1.0 / (1u64 << SOBOL_BITS) as f64;
    for i in 0..n {
        let c = (i as u32).trailing_ones() as usize;
        for (j, x) in state.iter_mut().enumerate() {
            *x ^= dirs[j][c];
            points[(i, j)] = 2.0 * (*x as f64 * scale) - 1.0;
        }
    }
    Ok(SampleMatrix {
        points,
        source: SampleSource::Sobol,
        ordered: true,
    })
}

/// `n` i.i.d. uniform points on `[-1, 1)^q` from a ChaCha8 stream seeded with `seed`.
///
/// Each coordinate is `2x − 1` with `x` a 53-bit uniform double in `[0, 1)`,
/// filled row by row.
pub fn pseudo_random_points(q: usize, n: usize, seed: u64) -> SampleMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * q);
    for _ in 0..n * q {
        let x: f64 = rng.random();
        values.push(2.0 * x - 1.0);
    }
    SampleMatrix {
        points: DMatrix::from_row_slice(n, q, &values),
        source: SampleSource::PseudoRandom { seed },
        ordered: true,
    }
}

/// Split a dataset into its first and second halves, preserving row order.
pub fn ordered_halves(data: &Dataset) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n % 2 == 1 {
        return Err(Error::OddSampleCount(n));
    }
    let h = n / 2;
    Ok((data.rows(0, h), data.rows(h, h)))
}
