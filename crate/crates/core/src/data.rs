//! Finite-sum datasets: sparse rows with ±1 labels.
//!
//! Two on-disk formats are supported. LIBSVM text lines look like
//!
//! ```text
//! -1 3:1 10:0.5
//! +1 1:2
//! ```
//!
//! with 1-based feature indices. MNIST IDX files are big-endian binaries with a
//! 4-byte magic, the dimension sizes and then raw `u8` payload.

use std::fmt::Write as _;
use std::io::{BufRead, Read};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};

/// A sparse feature vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRow {
    /// Builds a row, rejecting unsorted or duplicated indices.
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "row indices must be strictly increasing".into(),
            ));
        }
        Ok(SparseRow { indices, values })
    }

    /// Keeps the non-zero entries of a dense vector.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseRow { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `out += scale * self`
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (i, v) in self.iter() {
            out[i] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy(1.0, &mut out);
        out
    }

    fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}

/// How raw numeric labels are mapped onto {−1, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LabelRule {
    /// `label > 0 → +1`, otherwise −1.
    #[default]
    Sign,
    /// `label == class → +1`, otherwise −1.
    OneVsRest(f64),
}

impl LabelRule {
    pub fn map(&self, raw: f64) -> f64 {
        let positive = match self {
            LabelRule::Sign => raw > 0.0,
            LabelRule::OneVsRest(class) => raw == *class,
        };
        if positive {
            1.0
        } else {
            -1.0
        }
    }
}

/// Row-sparse feature matrix with ±1 labels, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    dim: usize,
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    row_sq_norms: Vec<f64>,
}

impl SparseDataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|y| **y != 1.0 && **y != -1.0) {
            return Err(Error::InvalidParameter(format!("label {bad} is not ±1")));
        }
        if let Some(max) = rows.iter().filter_map(SparseRow::max_index).max() {
            if max >= dim {
                return Err(Error::InvalidParameter(format!(
                    "feature index {} exceeds dimension {dim}",
                    max + 1
                )));
            }
        }
        let row_sq_norms = rows.iter().map(SparseRow::sq_norm).collect();
        Ok(SparseDataset {
            dim,
            rows,
            labels,
            row_sq_norms,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        let sparse = rows.iter().map(|r| SparseRow::from_dense(r)).collect();
        Self::new(sparse, labels, dim)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &SparseRow {
        &self.rows[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn row_sq_norms(&self) -> &[f64] {
        &self.row_sq_norms
    }

    pub fn max_row_sq_norm(&self) -> f64 {
        self.row_sq_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_row_sq_norm(&self) -> f64 {
        self.row_sq_norms.iter().sum::<f64>() / self.n() as f64
    }

    /// Serializes back to LIBSVM text with 1-based indices.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, y) in self.rows.iter().zip(&self.labels) {
            out.push_str(if *y > 0.0 { "+1" } else { "-1" });
            for (i, v) in row.iter() {
                let _ = write!(out, " {}:{}", i + 1, v);
            }
            out.push('\n');
        }
        out
    }
}

/// Free-function form of [`SparseDataset::max_row_sq_norm`]; errors on an empty dataset.
pub fn max_row_sq_norm(ds: &SparseDataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(ds.max_row_sq_norm())
}

pub fn mean_row_sq_norm(ds: &SparseDataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(ds.mean_row_sq_norm())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LibsvmOptions {
    /// Known feature dimension; defaults to the largest index seen.
    pub dim: Option<usize>,
    pub labels: LabelRule,
}

/// Parses LIBSVM text. Blank lines and `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, opts: LibsvmOptions) -> Result<SparseDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };

        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let raw: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label {label_tok:?}")))?;
        if !raw.is_finite() {
            return Err(err(format!("non-finite label {label_tok:?}")));
        }

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad feature index {idx:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value {val:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in {tok:?}")));
            }
            if let Some(&prev) = indices.last() {
                if idx - 1 <= prev {
                    return Err(err(format!("index {idx} is not increasing")));
                }
            }
            max_index = max_index.max(idx);
            indices.push(idx - 1);
            values.push(val);
        }
        rows.push(SparseRow { indices, values });
        labels.push(opts.labels.map(raw));
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = match opts.dim {
        Some(d) if d < max_index => {
            return Err(Error::InvalidParameter(format!(
                "dimension override {d} is below max index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    SparseDataset::new(rows, labels, dim)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("truncated header ({what})")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads an MNIST image/label pair. Pixels are scaled to [0, 1]; a sample is
/// labelled +1 iff its digit equals `positive_class`.
pub fn parse_mnist_idx<R1: Read, R2: Read>(
    mut images: R1,
    mut labels: R2,
    positive_class: u8,
) -> Result<SparseDataset> {
    let magic = read_u32_be(&mut images, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("image magic {magic:#010x}")));
    }
    let count = read_u32_be(&mut images, "image count")? as usize;
    let height = read_u32_be(&mut images, "rows")? as usize;
    let width = read_u32_be(&mut images, "cols")? as usize;

    let magic = read_u32_be(&mut labels, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("label magic {magic:#010x}")));
    }
    let label_count = read_u32_be(&mut labels, "label count")? as usize;
    if label_count != count {
        return Err(Error::Format(format!(
            "{count} images but {label_count} labels"
        )));
    }

    let mut digits = vec![0u8; count];
    labels
        .read_exact(&mut digits)
        .map_err(|_| Error::Format("truncated label payload".into()))?;

    let dim = height * width;
    let mut pixels = vec![0u8; dim];
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        images
            .read_exact(&mut pixels)
            .map_err(|_| Error::Format("truncated image payload".into()))?;
        let (indices, values) = pixels
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0)
            .map(|(i, p)| (i, f64::from(*p) / 255.0))
            .unzip();
        rows.push(SparseRow { indices, values });
    }
    let labels = digits
        .iter()
        .map(|&d| if d == positive_class { 1.0 } else { -1.0 })
        .collect();
    SparseDataset::new(rows, labels, dim)
}

/// Linearly separable data with a fraction of flipped labels.
///
/// Features are i.i.d. `N(0, 1/d)` so that `E‖x‖² = 1`; labels are
/// `sign(w_trueᵀx)` with probability `1 - flip_prob`.
pub fn synthetic_separable(
    n: usize,
    dim: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<SparseDataset> {
    if n == 0 || dim == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let w_true: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let coin = Uniform::new(0.0, 1.0).expect("valid range");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        let margin: f64 = x.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        if coin.sample(&mut rng) < flip_prob {
            y = -y;
        }
        rows.push(x);
        labels.push(y);
    }
    SparseDataset::from_dense(&rows, labels)
}

/// Two Gaussian classes `x = y·separation·u + noise·z` around a random unit
/// direction `u`, with a fraction `flip_prob` of labels flipped afterwards.
pub fn synthetic_clusters(
    n: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<SparseDataset> {
    if n == 0 || dim == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= len);
    let coin = Uniform::new(0.0, 1.0).expect("valid range");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y: f64 = if coin.sample(&mut rng) < 0.5 {
            -1.0
        } else {
            1.0
        };
        let x: Vec<f64> = direction
            .iter()
            .map(|u| {
                let z: f64 = StandardNormal.sample(&mut rng);
                y * separation * u + noise * z
            })
            .collect();
        let flipped = coin.sample(&mut rng) < flip_prob;
        rows.push(x);
        labels.push(if flipped { -y } else { y });
    }
    SparseDataset::from_dense(&rows, labels)
}
