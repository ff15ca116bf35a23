//! Dataset ingestion: IDX image files, the abalone CSV, deterministic
//! splits, and feature standardization.
//!
//! Images are parsed to flat rows of `[0, 1]` pixels; abalone rows keep raw
//! units with the sex column encoded ordinally (I=0, M=1, F=2). All
//! normalization happens explicitly via [`NormStats`], which are always
//! fitted on the training split alone.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bytes::{read_f64, read_u32, read_u64, read_u8};
use crate::error::{Result, SageError};

/// Fixed image normalization constants (train-set statistics of the
/// canonical 60k digit corpus, used verbatim for every image split).
pub const IMAGE_MEAN: f64 = 0.1307;
pub const IMAGE_STD: f64 = 0.3081;

/// Magic string for the dataset cache format.
pub const DATASET_MAGIC: &[u8; 8] = b"SAGEDATA";

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    /// Unsplit source data (e.g. a freshly parsed CSV).
    Pool,
    Train,
    Test,
    Validation,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Pool => "pool",
            SplitTag::Train => "train",
            SplitTag::Test => "test",
            SplitTag::Validation => "validation",
        }
    }

    fn code(self) -> u8 {
        match self {
            SplitTag::Pool => 0,
            SplitTag::Train => 1,
            SplitTag::Test => 2,
            SplitTag::Validation => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => SplitTag::Pool,
            1 => SplitTag::Train,
            2 => SplitTag::Test,
            3 => SplitTag::Validation,
            _ => return Err(SageError::Format(format!("unknown split tag code {c}"))),
        })
    }
}

/// Supervision targets: class indices or real values.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Array1<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(v) => {
                Targets::Values(indices.iter().map(|&i| v[i]).collect())
            }
        }
    }
}

/// Per-column standardization statistics, fitted on training data only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub means: Array1<f64>,
    /// Strictly positive; constant columns get 1.0 (see `zero_variance`).
    pub stds: Array1<f64>,
    /// Columns whose variance was zero and whose std was substituted with 1.
    pub zero_variance: Vec<usize>,
}

/// A feature matrix with aligned targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `n × d`, row per sample.
    pub features: Array2<f64>,
    pub targets: Targets,
    pub split: SplitTag,
    /// Statistics applied to `features`, if it has been standardized.
    pub norm: Option<NormStats>,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Class labels, when this is a classification dataset.
    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    /// Regression targets, when this is a regression dataset.
    pub fn values(&self) -> Option<&Array1<f64>> {
        match &self.targets {
            Targets::Values(v) => Some(v),
            Targets::Classes { .. } => None,
        }
    }

    /// Copies the given rows into a new dataset with the given tag.
    pub fn take(&self, indices: &[usize], split: SplitTag) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            targets: self.targets.take(indices),
            split,
            norm: self.norm.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// IDX parsing

/// Parses an uncompressed IDX file into its raw bytes plus dimension list.
///
/// Header layout, big-endian: two zero bytes, a type-code byte (only 0x08,
/// unsigned byte, is supported), a dimension-count byte, then one 32-bit
/// length per dimension.
pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 {
        return Err(SageError::TruncatedFile {
            expected: 4,
            found: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(SageError::DimensionMismatch(format!(
            "first two magic bytes must be zero, got {:02x} {:02x}",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != 0x08 {
        return Err(SageError::BadMagic(bytes[2]));
    }
    let ndim = bytes[3] as usize;
    let header_len = 4 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(SageError::TruncatedFile {
            expected: header_len,
            found: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 4 + 4 * i;
        let dim = u32::from_be_bytes([
            bytes[off],
            bytes[off + 1],
            bytes[off + 2],
            bytes[off + 3],
        ]) as usize;
        dims.push(dim);
    }
    let expected: usize = dims.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() < expected {
        return Err(SageError::TruncatedFile {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(SageError::DimensionMismatch(format!(
            "{} trailing bytes after declared payload of {expected}",
            payload.len() - expected
        )));
    }
    Ok((dims, payload))
}

/// Parses an IDX image file (3 dimensions) into flat `n × (h·w)` rows with
/// pixels scaled to `[0, 1]` by division by 255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<LabeledFeatures> {
    let (dims, payload) = parse_idx(bytes)?;
    if dims.len() != 3 {
        return Err(SageError::DimensionMismatch(format!(
            "image file must have 3 dimensions, got {}",
            dims.len()
        )));
    }
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let features = Array2::from_shape_vec(
        (n, h * w),
        payload.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
    .map_err(|e| SageError::DimensionMismatch(e.to_string()))?;
    Ok(LabeledFeatures {
        features,
        height: h,
        width: w,
    })
}

/// Flattened image rows plus their original frame size.
#[derive(Debug, Clone)]
pub struct LabeledFeatures {
    pub features: Array2<f64>,
    pub height: usize,
    pub width: usize,
}

/// Parses an IDX label file (1 dimension) into class indices.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (dims, payload) = parse_idx(bytes)?;
    if dims.len() != 1 {
        return Err(SageError::DimensionMismatch(format!(
            "label file must have 1 dimension, got {}",
            dims.len()
        )));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Pairs image rows with labels into a classification dataset.
pub fn image_dataset(
    images: LabeledFeatures,
    labels: Vec<usize>,
    n_classes: usize,
    split: SplitTag,
) -> Result<LabeledDataset> {
    if images.features.nrows() != labels.len() {
        return Err(SageError::DimensionMismatch(format!(
            "{} images but {} labels",
            images.features.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(SageError::LabelOutOfRange {
            label: bad,
            classes: n_classes,
        });
    }
    Ok(LabeledDataset {
        features: images.features,
        targets: Targets::Classes { labels, n_classes },
        split,
        norm: None,
    })
}

// ---------------------------------------------------------------------------
// Abalone CSV

/// Parses the headerless 9-column abalone CSV.
///
/// The sex column is encoded ordinally (I=0, M=1, F=2) so the feature count
/// stays at 8; ring count is the regression target. Row numbers in errors
/// are 1-based.
pub fn parse_abalone_csv(text: &str) -> Result<LabeledDataset> {
    let mut rows: Vec<[f64; 8]> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(SageError::RowArity {
                row,
                got: fields.len(),
            });
        }
        let sex = match fields[0] {
            "I" => 0.0,
            "M" => 1.0,
            "F" => 2.0,
            other => {
                return Err(SageError::UnknownSexCode {
                    row,
                    code: other.to_string(),
                })
            }
        };
        let mut feats = [0.0; 8];
        feats[0] = sex;
        for (col, (f, slot)) in fields[1..8].iter().zip(feats[1..].iter_mut()).enumerate() {
            *slot = f.parse().map_err(|_| SageError::NonNumeric {
                row,
                field: col + 2, // 1-based CSV column
                value: (*f).to_string(),
            })?;
        }
        let rings: f64 = fields[8].parse().map_err(|_| SageError::NonNumeric {
            row,
            field: 9,
            value: fields[8].to_string(),
        })?;
        rows.push(feats);
        targets.push(rings);
    }
    let n = rows.len();
    let features =
        Array2::from_shape_vec((n, 8), rows.into_iter().flatten().collect())
            .expect("row-major flatten");
    Ok(LabeledDataset {
        features,
        targets: Targets::Values(Array1::from_vec(targets)),
        split: SplitTag::Pool,
        norm: None,
    })
}

// ---------------------------------------------------------------------------
// Splits

/// Splits by fractions after a seeded shuffle.
///
/// Train and test sizes are floored; validation absorbs the rounding
/// remainder, so 4,177 rows at 80/16/4 give 3,341 / 668 / 168.
pub fn split_fractions(
    ds: &LabeledDataset,
    train_frac: f64,
    test_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let sum = train_frac + test_frac + val_frac;
    assert!(
        (sum - 1.0).abs() < 1e-9,
        "split fractions must sum to 1, got {sum}"
    );
    let n = ds.n();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let n_train = (n as f64 * train_frac).floor() as usize;
    let n_test = (n as f64 * test_frac).floor() as usize;
    let train = ds.take(&indices[..n_train], SplitTag::Train);
    let test = ds.take(&indices[n_train..n_train + n_test], SplitTag::Test);
    let val = ds.take(&indices[n_train + n_test..], SplitTag::Validation);
    Ok((train, test, val))
}

/// Splits a classification pool into class-balanced test and validation
/// sets: exactly `per_class_test` + `per_class_val` samples per class,
/// chosen by a seeded shuffle within each class.
pub fn split_class_balanced(
    pool: &LabeledDataset,
    per_class_test: usize,
    per_class_val: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (labels, n_classes) = match &pool.targets {
        Targets::Classes { labels, n_classes } => (labels, *n_classes),
        Targets::Values(_) => {
            return Err(SageError::DimensionMismatch(
                "class-balanced split needs class labels".to_string(),
            ))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = Vec::with_capacity(per_class_test * n_classes);
    let mut val_idx = Vec::with_capacity(per_class_val * n_classes);
    let requested = per_class_test + per_class_val;
    for class in 0..n_classes {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect();
        if members.len() < requested {
            return Err(SageError::InsufficientSamples {
                class,
                available: members.len(),
                requested,
            });
        }
        members.shuffle(&mut rng);
        test_idx.extend_from_slice(&members[..per_class_test]);
        val_idx.extend_from_slice(&members[per_class_test..requested]);
    }
    // stable order regardless of class interleaving
    test_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((
        pool.take(&test_idx, SplitTag::Test),
        pool.take(&val_idx, SplitTag::Validation),
    ))
}

/// Seeded subsample of `n` rows without replacement, preserving the tag.
pub fn subsample(ds: &LabeledDataset, n: usize, seed: u64) -> LabeledDataset {
    if n >= ds.n() {
        return ds.clone();
    }
    let mut indices: Vec<usize> = (0..ds.n()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();
    ds.take(&chosen, ds.split)
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-column mean and population standard deviation.
///
/// Constant columns get std 1 (recorded in `zero_variance`) so the map stays
/// total; callers may surface the substitution as a warning.
pub fn fit_norm_stats(features: &Array2<f64>) -> NormStats {
    let n = features.nrows() as f64;
    let means = features.mean_axis(Axis(0)).expect("nonempty");
    let mut stds = Array1::zeros(features.ncols());
    let mut zero_variance = Vec::new();
    for (j, col) in features.columns().into_iter().enumerate() {
        let m = means[j];
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 0.0 {
            stds[j] = std;
        } else {
            stds[j] = 1.0;
            zero_variance.push(j);
        }
    }
    NormStats {
        means,
        stds,
        zero_variance,
    }
}

/// The fixed image statistics replicated across all `d` pixel columns.
pub fn image_norm_stats(d: usize) -> NormStats {
    NormStats {
        means: Array1::from_elem(d, IMAGE_MEAN),
        stds: Array1::from_elem(d, IMAGE_STD),
        zero_variance: Vec::new(),
    }
}

/// Applies `x → (x − mean)/std` column-wise.
pub fn apply_norm(features: &Array2<f64>, stats: &NormStats) -> Result<Array2<f64>> {
    if features.ncols() != stats.means.len() {
        return Err(SageError::ShapeMismatch(format!(
            "{} feature columns, {} normalization stats",
            features.ncols(),
            stats.means.len()
        )));
    }
    let mut out = features.clone();
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.means[j]) / stats.stds[j];
        }
    }
    Ok(out)
}

/// Returns a standardized copy of the dataset, recording the stats used.
pub fn normalize(ds: &LabeledDataset, stats: &NormStats) -> Result<LabeledDataset> {
    Ok(LabeledDataset {
        features: apply_norm(&ds.features, stats)?,
        targets: ds.targets.clone(),
        split: ds.split,
        norm: Some(stats.clone()),
    })
}

// ---------------------------------------------------------------------------
// Binary cache

/// Writes the dataset in a versioned binary form that round-trips exactly.
pub fn write_dataset(ds: &LabeledDataset, w: &mut impl Write) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&[ds.split.code()])?;
    w.write_all(&(ds.n() as u64).to_le_bytes())?;
    w.write_all(&(ds.dim() as u64).to_le_bytes())?;
    for v in ds.features.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    match &ds.targets {
        Targets::Classes { labels, n_classes } => {
            w.write_all(&[0u8])?;
            w.write_all(&(*n_classes as u32).to_le_bytes())?;
            for &l in labels {
                w.write_all(&(l as u32).to_le_bytes())?;
            }
        }
        Targets::Values(values) => {
            w.write_all(&[1u8])?;
            for v in values.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    match &ds.norm {
        None => w.write_all(&[0u8])?,
        Some(stats) => {
            w.write_all(&[1u8])?;
            for v in stats.means.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in stats.stds.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&(stats.zero_variance.len() as u32).to_le_bytes())?;
            for &j in &stats.zero_variance {
                w.write_all(&(j as u32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<LabeledDataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(SageError::Format("bad dataset cache magic".to_string()));
    }
    let version = read_u32(r)?;
    if version != 1 {
        return Err(SageError::Format(format!(
            "unsupported dataset cache version {version}"
        )));
    }
    let split = SplitTag::from_code(read_u8(r)?)?;
    let n = read_u64(r)? as usize;
    let d = read_u64(r)? as usize;
    let mut feat = vec![0.0; n * d];
    for v in feat.iter_mut() {
        *v = read_f64(r)?;
    }
    let features =
        Array2::from_shape_vec((n, d), feat).map_err(|e| SageError::Format(e.to_string()))?;
    let targets = match read_u8(r)? {
        0 => {
            let n_classes = read_u32(r)? as usize;
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                labels.push(read_u32(r)? as usize);
            }
            Targets::Classes { labels, n_classes }
        }
        1 => {
            let mut values = Array1::zeros(n);
            for v in values.iter_mut() {
                *v = read_f64(r)?;
            }
            Targets::Values(values)
        }
        c => return Err(SageError::Format(format!("unknown target kind {c}"))),
    };
    let norm = match read_u8(r)? {
        0 => None,
        1 => {
            let mut means = Array1::zeros(d);
            for v in means.iter_mut() {
                *v = read_f64(r)?;
            }
            let mut stds = Array1::zeros(d);
            for v in stds.iter_mut() {
                *v = read_f64(r)?;
            }
            let n_zv = read_u32(r)? as usize;
            let mut zero_variance = Vec::with_capacity(n_zv);
            for _ in 0..n_zv {
                zero_variance.push(read_u32(r)? as usize);
            }
            Some(NormStats {
                means,
                stds,
                zero_variance,
            })
        }
        c => return Err(SageError::Format(format!("unknown norm flag {c}"))),
    };
    Ok(LabeledDataset {
        features,
        targets,
        split,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_bytes(dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut bytes = vec![0, 0, 0x08, dims.len() as u8];
        for &d in dims {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend_from_slice(payload);
        bytes
    }

    #[test]
    fn hand_built_idx_round_trips() {
        let bytes = idx_bytes(&[1, 2, 2], &[10, 20, 30, 40]);
        let (dims, payload) = parse_idx(&bytes).unwrap();
        assert_eq!(dims, vec![1, 2, 2]);
        assert_eq!(payload, &[10, 20, 30, 40]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!(imgs.features.dim(), (1, 4));
        assert_eq!(imgs.height, 2);
        assert_eq!(imgs.width, 2);
        assert!((imgs.features[[0, 0]] - 10.0 / 255.0).abs() < 1e-15);
        assert!((imgs.features[[0, 3]] - 40.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_type_code_is_bad_magic() {
        let mut bytes = idx_bytes(&[4], &[0, 1, 2, 3]);
        bytes[2] = 0x0B;
        assert!(matches!(parse_idx(&bytes), Err(SageError::BadMagic(0x0B))));
    }

    #[test]
    fn short_payload_is_truncated() {
        let bytes = idx_bytes(&[2, 2, 2], &[1, 2, 3]); // needs 8 bytes
        assert!(matches!(
            parse_idx(&bytes),
            Err(SageError::TruncatedFile {
                expected: 8,
                found: 3
            })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let bytes = idx_bytes(&[2], &[1, 2, 3]);
        assert!(matches!(
            parse_idx(&bytes),
            Err(SageError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn label_file_parses_and_wrong_rank_rejected() {
        let bytes = idx_bytes(&[3], &[7, 0, 9]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7, 0, 9]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(SageError::DimensionMismatch(_))
        ));
        let img_bytes = idx_bytes(&[1, 1, 1], &[5]);
        assert!(matches!(
            parse_idx_labels(&img_bytes),
            Err(SageError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn abalone_first_public_row() {
        let ds = parse_abalone_csv("M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15\n").unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.dim(), 8);
        assert_eq!(ds.features[[0, 0]], 1.0); // M
        assert_eq!(ds.features[[0, 1]], 0.455);
        assert_eq!(ds.features[[0, 7]], 0.15);
        assert_eq!(ds.values().unwrap()[0], 15.0);
    }

    #[test]
    fn abalone_sex_codes() {
        let ds =
            parse_abalone_csv("I,0.1,0.1,0.1,0.1,0.1,0.1,0.1,5\nF,0.2,0.2,0.2,0.2,0.2,0.2,0.2,9\n")
                .unwrap();
        assert_eq!(ds.features[[0, 0]], 0.0);
        assert_eq!(ds.features[[1, 0]], 2.0);
    }

    #[test]
    fn abalone_error_rows() {
        assert!(matches!(
            parse_abalone_csv("M,0.455,0.365,0.095,0.514,0.2245,0.101,15\n"),
            Err(SageError::RowArity { row: 1, got: 8 })
        ));
        assert!(matches!(
            parse_abalone_csv("X,0.1,0.1,0.1,0.1,0.1,0.1,0.1,5\n"),
            Err(SageError::UnknownSexCode { row: 1, .. })
        ));
        assert!(matches!(
            parse_abalone_csv("M,abc,0.1,0.1,0.1,0.1,0.1,0.1,5\n"),
            Err(SageError::NonNumeric { row: 1, .. })
        ));
        // blank lines are ignored, and row numbers count real lines
        assert!(matches!(
            parse_abalone_csv("\nM,x,0.1,0.1,0.1,0.1,0.1,0.1,5\n"),
            Err(SageError::NonNumeric { row: 2, .. })
        ));
    }

    fn synthetic_values(n: usize) -> LabeledDataset {
        let features = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64);
        LabeledDataset {
            features,
            targets: Targets::Values(Array1::from_shape_fn(n, |i| i as f64)),
            split: SplitTag::Pool,
            norm: None,
        }
    }

    #[test]
    fn fraction_split_sizes_match_floor_rule() {
        let ds = synthetic_values(4177);
        let (tr, te, va) = split_fractions(&ds, 0.8, 0.16, 0.04, 42).unwrap();
        assert_eq!(tr.n(), 3341);
        assert_eq!(te.n(), 668);
        assert_eq!(va.n(), 168);
        assert_eq!(tr.split, SplitTag::Train);
        assert_eq!(te.split, SplitTag::Test);
        assert_eq!(va.split, SplitTag::Validation);
    }

    #[test]
    fn fraction_split_is_a_partition() {
        let ds = synthetic_values(101);
        let (tr, te, va) = split_fractions(&ds, 0.8, 0.16, 0.04, 7).unwrap();
        // targets are unique row ids, so they witness the partition
        let mut seen: Vec<i64> = tr
            .values()
            .unwrap()
            .iter()
            .chain(te.values().unwrap())
            .chain(va.values().unwrap())
            .map(|&v| v as i64)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..101).collect::<Vec<i64>>());
    }

    #[test]
    fn fraction_split_deterministic() {
        let ds = synthetic_values(500);
        let a = split_fractions(&ds, 0.8, 0.16, 0.04, 13).unwrap();
        let b = split_fractions(&ds, 0.8, 0.16, 0.04, 13).unwrap();
        assert_eq!(a.0.features, b.0.features);
        assert_eq!(a.1.features, b.1.features);
        assert_eq!(a.2.features, b.2.features);
        let c = split_fractions(&ds, 0.8, 0.16, 0.04, 14).unwrap();
        assert!(a.0.features != c.0.features);
    }

    fn synthetic_classes(per_class: usize, n_classes: usize) -> LabeledDataset {
        let n = per_class * n_classes;
        let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
        LabeledDataset {
            features: Array2::from_shape_fn((n, 2), |(i, j)| (i + j) as f64),
            targets: Targets::Classes {
                labels,
                n_classes,
            },
            split: SplitTag::Pool,
            norm: None,
        }
    }

    #[test]
    fn class_balanced_split_counts() {
        let pool = synthetic_classes(1000, 10);
        let (test, val) = split_class_balanced(&pool, 800, 200, 42).unwrap();
        assert_eq!(test.n(), 8000);
        assert_eq!(val.n(), 2000);
        for class in 0..10 {
            let t = test.labels().unwrap().iter().filter(|&&l| l == class).count();
            let v = val.labels().unwrap().iter().filter(|&&l| l == class).count();
            assert_eq!(t, 800);
            assert_eq!(v, 200);
        }
    }

    #[test]
    fn class_balanced_split_disjoint() {
        let pool = synthetic_classes(10, 3);
        let (test, val) = split_class_balanced(&pool, 6, 4, 3).unwrap();
        // features are unique per row index, so use the first column as id
        let mut ids: Vec<i64> = test
            .features
            .column(0)
            .iter()
            .chain(val.features.column(0).iter())
            .map(|&v| v as i64)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 30);
    }

    #[test]
    fn class_balanced_split_insufficient() {
        let pool = synthetic_classes(999, 10);
        assert!(matches!(
            split_class_balanced(&pool, 800, 200, 42),
            Err(SageError::InsufficientSamples {
                class: 0,
                available: 999,
                requested: 1000
            })
        ));
    }

    #[test]
    fn subsample_is_deterministic_and_sized() {
        let ds = synthetic_values(100);
        let a = subsample(&ds, 30, 5);
        let b = subsample(&ds, 30, 5);
        assert_eq!(a.features, b.features);
        assert_eq!(a.n(), 30);
        assert_eq!(subsample(&ds, 1000, 5).n(), 100);
    }

    #[test]
    fn image_constant_normalization_value() {
        let stats = image_norm_stats(4);
        let pixels = Array2::zeros((1, 4));
        let out = apply_norm(&pixels, &stats).unwrap();
        let expected = (0.0 - 0.1307) / 0.3081;
        assert!((out[[0, 0]] - expected).abs() < 1e-12);
        assert!((expected - (-0.424213)).abs() < 1e-6);
    }

    #[test]
    fn standardized_train_columns_have_zero_mean_unit_std() {
        let ds = synthetic_values(4177);
        let stats = fit_norm_stats(&ds.features);
        let normed = apply_norm(&ds.features, &stats).unwrap();
        for col in normed.columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_is_not_idempotent() {
        let ds = synthetic_values(50);
        let stats = fit_norm_stats(&ds.features);
        let once = apply_norm(&ds.features, &stats).unwrap();
        let twice = apply_norm(&once, &stats).unwrap();
        assert!(once != twice);
    }

    #[test]
    fn zero_variance_column_substituted() {
        let mut features = Array2::from_shape_fn((10, 3), |(i, j)| (i + j) as f64);
        features.column_mut(1).fill(7.5);
        let stats = fit_norm_stats(&features);
        assert_eq!(stats.zero_variance, vec![1]);
        assert_eq!(stats.stds[1], 1.0);
        let normed = apply_norm(&features, &stats).unwrap();
        assert!(normed.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let mut ds = synthetic_classes(5, 3);
        ds.split = SplitTag::Test;
        ds.norm = Some(NormStats {
            means: Array1::from_vec(vec![0.25, -1.5]),
            stds: Array1::from_vec(vec![1.75, 0.03125]),
            zero_variance: vec![1],
        });
        ds.features[[0, 0]] = 0.1 + 0.2; // not exactly representable sums
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(ds, back);

        let values = synthetic_values(7);
        let mut buf = Vec::new();
        write_dataset(&values, &mut buf).unwrap();
        assert_eq!(read_dataset(&mut buf.as_slice()).unwrap(), values);
    }
}
