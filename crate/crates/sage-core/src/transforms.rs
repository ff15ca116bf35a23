//! Perturbation panel for images and tabular rows.
//!
//! Image transforms operate on `[0, 1]` pixel matrices before normalization;
//! tabular transforms operate on raw feature units before standardization.
//! Every stochastic transform is a pure function of (input, spec): the spec
//! carries the seed, and batch helpers derive per-sample seeds as
//! `seed ^ sample_index`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SageError};

/// One perturbation with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    HorizontalFlip,
    VerticalFlip,
    PixelInversion,
    GaussianBlur { kernel: usize, sigma: f64 },
    GaussianNoise { sigma: f64, clamp: bool },
    Elastic { alpha: f64, sigma: f64 },
    Solarize { threshold: f64 },
    Posterize { bits: u8 },
    TabularNoise { sigma: f64 },
    FeatureInversion,
    /// Replaces `count` columns (drawn once from `seed`) with the training
    /// mean of each column.
    ColumnDrop { count: usize, seed: u64 },
    Scale { factor: f64 },
}

impl TransformKind {
    pub fn is_image(&self) -> bool {
        !self.is_tabular()
    }

    pub fn is_tabular(&self) -> bool {
        matches!(
            self,
            TransformKind::TabularNoise { .. }
                | TransformKind::FeatureInversion
                | TransformKind::ColumnDrop { .. }
                | TransformKind::Scale { .. }
        )
    }

    fn name(&self) -> &'static str {
        match self {
            TransformKind::HorizontalFlip => "hflip",
            TransformKind::VerticalFlip => "vflip",
            TransformKind::PixelInversion => "invert",
            TransformKind::GaussianBlur { .. } => "blur",
            TransformKind::GaussianNoise { .. } => "noise",
            TransformKind::Elastic { .. } => "elastic",
            TransformKind::Solarize { .. } => "solarize",
            TransformKind::Posterize { .. } => "posterize",
            TransformKind::TabularNoise { .. } => "tab_noise",
            TransformKind::FeatureInversion => "feat_invert",
            TransformKind::ColumnDrop { .. } => "drop",
            TransformKind::Scale { .. } => "scale",
        }
    }
}

/// A transform plus the seed driving any randomness it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub seed: u64,
}

/// Default image panel (matches the perturbation set applied to digit
/// images; solarize/posterize are available but not part of this panel).
pub const IMAGE_PANEL: [&str; 8] = [
    "hflip",
    "vflip",
    "invert",
    "blur",
    "noise_low",
    "noise_high",
    "elastic_low",
    "elastic_high",
];

/// Default tabular panel for the abalone rows.
pub const TABULAR_PANEL: [&str; 7] = [
    "tab_noise_low",
    "tab_noise_high",
    "feat_invert",
    "drop_low",
    "drop_high",
    "scale_up",
    "scale_down",
];

/// Every recognized transform name.
pub const ALL_NAMES: [&str; 17] = [
    "hflip",
    "vflip",
    "invert",
    "blur",
    "noise_low",
    "noise_high",
    "elastic_low",
    "elastic_high",
    "solarize",
    "posterize",
    "tab_noise_low",
    "tab_noise_high",
    "feat_invert",
    "drop_low",
    "drop_high",
    "scale_up",
    "scale_down",
];

impl TransformSpec {
    /// Builds the named transform with its standard parameters.
    pub fn by_name(name: &str, seed: u64) -> Result<TransformSpec> {
        let kind = match name {
            "hflip" => TransformKind::HorizontalFlip,
            "vflip" => TransformKind::VerticalFlip,
            "invert" => TransformKind::PixelInversion,
            "blur" => TransformKind::GaussianBlur {
                kernel: 5,
                sigma: 2.0,
            },
            "noise_low" => TransformKind::GaussianNoise {
                sigma: 0.2,
                clamp: true,
            },
            "noise_high" => TransformKind::GaussianNoise {
                sigma: 0.8,
                clamp: true,
            },
            "elastic_low" => TransformKind::Elastic {
                alpha: 50.0,
                sigma: 5.0,
            },
            "elastic_high" => TransformKind::Elastic {
                alpha: 200.0,
                sigma: 5.0,
            },
            "solarize" => TransformKind::Solarize { threshold: 0.75 },
            "posterize" => TransformKind::Posterize { bits: 2 },
            "tab_noise_low" => TransformKind::TabularNoise { sigma: 0.05 },
            "tab_noise_high" => TransformKind::TabularNoise { sigma: 0.5 },
            "feat_invert" => TransformKind::FeatureInversion,
            "drop_low" => TransformKind::ColumnDrop { count: 1, seed },
            "drop_high" => TransformKind::ColumnDrop { count: 3, seed },
            "scale_up" => TransformKind::Scale { factor: 2.0 },
            "scale_down" => TransformKind::Scale { factor: 0.5 },
            other => return Err(SageError::UnknownPreset(other.to_string())),
        };
        Ok(TransformSpec { kind, seed })
    }

    /// Same transform with a different seed (used for per-sample derivation).
    fn with_seed(&self, seed: u64) -> TransformSpec {
        TransformSpec {
            kind: self.kind.clone(),
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Image transforms

/// Applies an image transform to one `H × W` matrix of `[0, 1]` pixels.
pub fn apply_image_transform(image: ArrayView2<f64>, spec: &TransformSpec) -> Result<Array2<f64>> {
    if spec.kind.is_tabular() {
        return Err(SageError::BadKind {
            kind: spec.kind.name().to_string(),
            target: "image".to_string(),
        });
    }
    let out = match &spec.kind {
        TransformKind::HorizontalFlip => image.slice(ndarray::s![.., ..;-1]).to_owned(),
        TransformKind::VerticalFlip => image.slice(ndarray::s![..;-1, ..]).to_owned(),
        TransformKind::PixelInversion => image.mapv(|v| 1.0 - v),
        TransformKind::GaussianBlur { kernel, sigma } => {
            let k = gaussian_kernel(*kernel, *sigma)?;
            separable_blur(image, &k)
        }
        TransformKind::GaussianNoise { sigma, clamp } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut out = image.to_owned();
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
                if *clamp {
                    *v = v.clamp(0.0, 1.0);
                }
            }
            out
        }
        TransformKind::Elastic { alpha, sigma } => {
            elastic_deform(image, *alpha, *sigma, spec.seed)?
        }
        TransformKind::Solarize { threshold } => {
            image.mapv(|v| if v >= *threshold { 1.0 - v } else { v })
        }
        TransformKind::Posterize { bits } => {
            assert!((1..=8).contains(bits), "posterize bits must be in 1..=8");
            let mask = 0xFFu16 << (8 - bits);
            image.mapv(|v| {
                let byte = (v * 255.0).round().clamp(0.0, 255.0) as u16;
                f64::from(byte & mask) / 255.0
            })
        }
        tab => unreachable!("tabular kind {tab:?} filtered above"),
    };
    Ok(out)
}

/// Normalized 1-D Gaussian kernel of odd length `k`.
fn gaussian_kernel(k: usize, sigma: f64) -> Result<Vec<f64>> {
    if k.is_multiple_of(2) {
        return Err(SageError::EvenKernel(k));
    }
    assert!(sigma > 0.0, "blur sigma must be positive");
    let c = (k / 2) as f64;
    let mut weights: Vec<f64> = (0..k)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

/// Mirror-reflect an index into `0..n` (edge pixel not repeated).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // converges for any i since each bounce shrinks |i - valid range|
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
        if n == 1 {
            return 0;
        }
    }
}

/// Separable convolution with reflect padding along both axes.
fn separable_blur(image: ArrayView2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (h, w) = image.dim();
    let r = (kernel.len() / 2) as isize;
    let mut rows = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + t as isize - r, w);
                acc += k * image[[y, sx]];
            }
            rows[[y, x]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + t as isize - r, h);
                acc += k * rows[[sy, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// The smoothed, scaled per-pixel displacement fields used by
/// [`elastic_deform`], exposed so their magnitudes can be inspected.
///
/// Draw order: the x-field row-major, then the y-field row-major.
pub fn elastic_displacement_field(
    h: usize,
    w: usize,
    alpha: f64,
    sigma: f64,
    seed: u64,
) -> (Array2<f64>, Array2<f64>) {
    assert!(alpha > 0.0 && sigma > 0.0, "elastic parameters must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dx = Array2::from_shape_fn((h, w), |_| rng.gen_range(-1.0..1.0));
    let mut dy = Array2::from_shape_fn((h, w), |_| rng.gen_range(-1.0..1.0));
    // smooth with a Gaussian truncated at 3 sigma
    let k = 2 * (3.0 * sigma).ceil() as usize + 1;
    let kernel = gaussian_kernel(k, sigma).expect("odd by construction");
    dx = separable_blur(dx.view(), &kernel);
    dy = separable_blur(dy.view(), &kernel);
    let scale = alpha / h.max(w) as f64;
    dx *= scale;
    dy *= scale;
    (dx, dy)
}

/// Elastic deformation: smoothed random displacement field, then bilinear
/// resampling with zero padding outside the frame.
pub fn elastic_deform(
    image: ArrayView2<f64>,
    alpha: f64,
    sigma: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    let (h, w) = image.dim();
    let (dx, dy) = elastic_displacement_field(h, w, alpha, sigma, seed);
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let sx = x as f64 + dx[[y, x]];
            let sy = y as f64 + dy[[y, x]];
            out[[y, x]] = bilinear(image, sy, sx);
        }
    }
    Ok(out)
}

/// Bilinear sample at fractional (y, x); zero outside the frame.
fn bilinear(image: ArrayView2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = image.dim();
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            image[[yy as usize, xx as usize]]
        }
    };
    at(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + at(y0, x0 + 1.0) * (1.0 - fy) * fx
        + at(y0 + 1.0, x0) * fy * (1.0 - fx)
        + at(y0 + 1.0, x0 + 1.0) * fy * fx
}

// ---------------------------------------------------------------------------
// Tabular transforms

/// Applies a tabular transform to one raw feature row.
///
/// `train_means` supplies raw-unit column means for imputation and is only
/// read by [`TransformKind::ColumnDrop`].
pub fn apply_tabular_transform(
    row: ArrayView1<f64>,
    spec: &TransformSpec,
    train_means: &Array1<f64>,
) -> Result<Array1<f64>> {
    if spec.kind.is_image() {
        return Err(SageError::BadKind {
            kind: spec.kind.name().to_string(),
            target: "tabular".to_string(),
        });
    }
    let out = match &spec.kind {
        TransformKind::TabularNoise { sigma } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut out = row.to_owned();
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
            out
        }
        TransformKind::FeatureInversion => row.mapv(|v| 1.0 - v),
        TransformKind::ColumnDrop { count, seed } => {
            if *count >= row.len() {
                return Err(SageError::DropTooMany {
                    requested: *count,
                    available: row.len(),
                });
            }
            let mut out = row.to_owned();
            for j in dropped_columns(row.len(), *count, *seed) {
                out[j] = train_means[j];
            }
            out
        }
        TransformKind::Scale { factor } => row.mapv(|v| v * factor),
        img => unreachable!("image kind {img:?} filtered above"),
    };
    Ok(out)
}

/// The column set a [`TransformKind::ColumnDrop`] with this seed replaces —
/// fixed for the whole batch, not per sample.
pub fn dropped_columns(d: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = sample_indices(&mut rng, d, count).into_vec();
    cols.sort_unstable();
    cols
}

// ---------------------------------------------------------------------------
// Batch helpers

/// Applies the transform to every flattened image row; sample `i` uses seed
/// `spec.seed ^ i`.
pub fn transform_image_batch(
    batch: &Array2<f64>,
    h: usize,
    w: usize,
    spec: &TransformSpec,
) -> Result<Array2<f64>> {
    if batch.ncols() != h * w {
        return Err(SageError::ShapeMismatch(format!(
            "row width {} != {h}x{w}",
            batch.ncols()
        )));
    }
    let mut out = Array2::zeros(batch.raw_dim());
    for (i, row) in batch.rows().into_iter().enumerate() {
        let image = row.to_shape((h, w)).expect("checked width");
        let per_sample = spec.with_seed(spec.seed ^ i as u64);
        let transformed = apply_image_transform(image.view(), &per_sample)?;
        out.row_mut(i)
            .assign(&transformed.to_shape(h * w).expect("same size"));
    }
    Ok(out)
}

/// Applies the transform to every raw tabular row; sample `i` uses seed
/// `spec.seed ^ i`. Column-drop choices stay fixed across the batch.
pub fn transform_tabular_batch(
    batch: &Array2<f64>,
    spec: &TransformSpec,
    train_means: &Array1<f64>,
) -> Result<Array2<f64>> {
    if batch.ncols() != train_means.len() {
        return Err(SageError::ShapeMismatch(format!(
            "row width {} != {} train means",
            batch.ncols(),
            train_means.len()
        )));
    }
    let mut out = Array2::zeros(batch.raw_dim());
    for (i, row) in batch.rows().into_iter().enumerate() {
        let per_sample = spec.with_seed(spec.seed ^ i as u64);
        let transformed = apply_tabular_transform(row, &per_sample, train_means)?;
        out.row_mut(i).assign(&transformed);
    }
    Ok(out)
}

/// Raw (un-normalized) per-column means of a training feature matrix, for
/// column-drop imputation.
pub fn raw_column_means(features: &Array2<f64>) -> Array1<f64> {
    features.mean_axis(Axis(0)).expect("nonempty training set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn spec(name: &str, seed: u64) -> TransformSpec {
        TransformSpec::by_name(name, seed).unwrap()
    }

    fn test_image() -> Array2<f64> {
        Array2::from_shape_fn((8, 8), |(y, x)| ((y * 8 + x) as f64) / 63.0)
    }

    #[test]
    fn all_names_resolve_and_unknown_rejected() {
        for name in ALL_NAMES {
            assert!(TransformSpec::by_name(name, 1).is_ok(), "{name}");
        }
        assert!(matches!(
            TransformSpec::by_name("sepia", 1),
            Err(SageError::UnknownPreset(_))
        ));
    }

    #[test]
    fn panels_partition_by_kind() {
        for name in IMAGE_PANEL {
            assert!(spec(name, 0).kind.is_image(), "{name}");
        }
        for name in TABULAR_PANEL {
            assert!(spec(name, 0).kind.is_tabular(), "{name}");
        }
    }

    #[test]
    fn flips_and_inversion_are_involutions() {
        let img = test_image();
        // flips are pure permutations: bit-exact
        for name in ["hflip", "vflip"] {
            let s = spec(name, 0);
            let once = apply_image_transform(img.view(), &s).unwrap();
            let twice = apply_image_transform(once.view(), &s).unwrap();
            assert_eq!(twice, img, "{name}");
        }
        // inversion is arithmetic: involution up to rounding
        let s = spec("invert", 0);
        let once = apply_image_transform(img.view(), &s).unwrap();
        let twice = apply_image_transform(once.view(), &s).unwrap();
        for (a, b) in twice.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pixel_inversion_of_zero_is_one() {
        let img = Array2::zeros((2, 2));
        let out = apply_image_transform(img.view(), &spec("invert", 0)).unwrap();
        assert!(out.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn hflip_mirrors_columns() {
        let img = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let out = apply_image_transform(img.view(), &spec("hflip", 0)).unwrap();
        assert_eq!(out, array![[3.0, 2.0, 1.0], [6.0, 5.0, 4.0]]);
        let out = apply_image_transform(img.view(), &spec("vflip", 0)).unwrap();
        assert_eq!(out, array![[4.0, 5.0, 6.0], [1.0, 2.0, 3.0]]);
    }

    #[test]
    fn blur_kernel_sums_to_one_and_preserves_constants() {
        let k = gaussian_kernel(5, 2.0).unwrap();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let img = Array2::from_elem((10, 10), 0.42);
        let out = apply_image_transform(img.view(), &spec("blur", 0)).unwrap();
        for &v in out.iter() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn even_blur_kernel_rejected() {
        let s = TransformSpec {
            kind: TransformKind::GaussianBlur {
                kernel: 4,
                sigma: 2.0,
            },
            seed: 0,
        };
        assert!(matches!(
            apply_image_transform(test_image().view(), &s),
            Err(SageError::EvenKernel(4))
        ));
    }

    #[test]
    fn noise_clamps_and_no_clamp_escapes() {
        let img = Array2::from_elem((16, 16), 0.95);
        let clamped = apply_image_transform(img.view(), &spec("noise_high", 7)).unwrap();
        assert!(clamped.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let s = TransformSpec {
            kind: TransformKind::GaussianNoise {
                sigma: 0.8,
                clamp: false,
            },
            seed: 7,
        };
        let free = apply_image_transform(img.view(), &s).unwrap();
        assert!(free.iter().any(|&v| !(0.0..=1.0).contains(&v)));
    }

    #[test]
    fn solarize_inverts_above_threshold_only() {
        let img = array![[0.8, 0.5], [0.75, 0.0]];
        let out = apply_image_transform(img.view(), &spec("solarize", 0)).unwrap();
        assert!((out[[0, 0]] - 0.2).abs() < 1e-12);
        assert_eq!(out[[0, 1]], 0.5);
        assert!((out[[1, 0]] - 0.25).abs() < 1e-12); // threshold itself inverts
        assert_eq!(out[[1, 1]], 0.0);
    }

    #[test]
    fn posterize_masks_to_top_bits() {
        let img = array![[252.0 / 255.0, 7.0 / 255.0]];
        let out = apply_image_transform(img.view(), &spec("posterize", 0)).unwrap();
        assert!((out[[0, 0]] - 192.0 / 255.0).abs() < 1e-12);
        assert_eq!(out[[0, 1]], 0.0);
    }

    #[test]
    fn elastic_is_deterministic_and_alpha_scales_displacement() {
        let img = test_image();
        let a = apply_image_transform(img.view(), &spec("elastic_low", 9)).unwrap();
        let b = apply_image_transform(img.view(), &spec("elastic_low", 9)).unwrap();
        assert_eq!(a, b);
        let (dx_lo, dy_lo) = elastic_displacement_field(28, 28, 50.0, 5.0, 9);
        let (dx_hi, dy_hi) = elastic_displacement_field(28, 28, 200.0, 5.0, 9);
        let mean_abs = |a: &Array2<f64>, b: &Array2<f64>| {
            (a.mapv(f64::abs).sum() + b.mapv(f64::abs).sum()) / (2.0 * a.len() as f64)
        };
        assert!(mean_abs(&dx_hi, &dy_hi) > mean_abs(&dx_lo, &dy_lo));
        // exactly alpha-proportional: same smoothed field, scaled
        assert!((dx_hi[[3, 4]] / dx_lo[[3, 4]] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn elastic_tiny_alpha_is_identity() {
        let img = test_image();
        let out = elastic_deform(img.view(), 1e-9, 5.0, 3).unwrap();
        for (a, b) in out.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn image_kind_on_tabular_and_vice_versa_rejected() {
        let row = array![0.1, 0.2, 0.3];
        let means = Array1::zeros(3);
        assert!(matches!(
            apply_tabular_transform(row.view(), &spec("blur", 0), &means),
            Err(SageError::BadKind { .. })
        ));
        assert!(matches!(
            apply_image_transform(test_image().view(), &spec("scale_up", 0)),
            Err(SageError::BadKind { .. })
        ));
    }

    #[test]
    fn scale_and_feature_inversion() {
        let row = array![0.1, -0.4, 2.0];
        let means = Array1::zeros(3);
        let up = apply_tabular_transform(row.view(), &spec("scale_up", 0), &means).unwrap();
        assert_eq!(up, array![0.2, -0.8, 4.0]);
        let down = apply_tabular_transform(row.view(), &spec("scale_down", 0), &means).unwrap();
        assert_eq!(down, array![0.05, -0.2, 1.0]);
        let s = spec("feat_invert", 0);
        let inv = apply_tabular_transform(row.view(), &s, &means).unwrap();
        assert_eq!(inv, array![0.9, 1.4, -1.0]);
        let back = apply_tabular_transform(inv.view(), &s, &means).unwrap();
        for (a, b) in back.iter().zip(row.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn column_drop_imputes_train_means_consistently() {
        let means = array![10.0, 20.0, 30.0, 40.0, 50.0];
        let row = array![1.0, 2.0, 3.0, 4.0, 5.0];
        let s = spec("drop_high", 77);
        let out = apply_tabular_transform(row.view(), &s, &means).unwrap();
        let cols = dropped_columns(5, 3, 77);
        assert_eq!(cols.len(), 3);
        for j in 0..5 {
            if cols.contains(&j) {
                assert_eq!(out[j], means[j]);
            } else {
                assert_eq!(out[j], row[j]);
            }
        }
        // same seed, same columns
        assert_eq!(dropped_columns(5, 3, 77), cols);
        assert_ne!(dropped_columns(5, 3, 78), cols);
    }

    #[test]
    fn column_drop_too_many_rejected() {
        let row = array![1.0, 2.0];
        let s = TransformSpec {
            kind: TransformKind::ColumnDrop { count: 2, seed: 0 },
            seed: 0,
        };
        assert!(matches!(
            apply_tabular_transform(row.view(), &s, &Array1::zeros(2)),
            Err(SageError::DropTooMany {
                requested: 2,
                available: 2
            })
        ));
    }

    #[test]
    fn batch_seeds_vary_per_sample_but_rerun_identically() {
        let batch = Array2::from_elem((4, 64), 0.5);
        let s = spec("noise_low", 11);
        let a = transform_image_batch(&batch, 8, 8, &s).unwrap();
        let b = transform_image_batch(&batch, 8, 8, &s).unwrap();
        assert_eq!(a, b);
        // same input rows, different per-sample noise
        assert!(a.row(0) != a.row(1));

        let rows = Array2::from_elem((3, 5), 1.0);
        let means = Array1::zeros(5);
        let t = spec("tab_noise_high", 13);
        let c = transform_tabular_batch(&rows, &t, &means).unwrap();
        let d = transform_tabular_batch(&rows, &t, &means).unwrap();
        assert_eq!(c, d);
        assert!(c.row(0) != c.row(1));
    }

    #[test]
    fn column_drop_fixed_across_batch_rows() {
        let rows = Array2::from_shape_fn((6, 5), |(i, j)| (i * 5 + j) as f64);
        let means = Array1::from_elem(5, -1.0);
        let out = transform_tabular_batch(&rows, &spec("drop_low", 21), &means).unwrap();
        let cols = dropped_columns(5, 1, 21);
        for i in 0..6 {
            assert_eq!(out[[i, cols[0]]], -1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn involutions_hold_for_arbitrary_images(
            pixels in proptest::collection::vec(0.0f64..=1.0, 36)
        ) {
            let img = Array2::from_shape_vec((6, 6), pixels).unwrap();
            for name in ["hflip", "vflip"] {
                let s = spec(name, 0);
                let once = apply_image_transform(img.view(), &s).unwrap();
                let twice = apply_image_transform(once.view(), &s).unwrap();
                prop_assert_eq!(&twice, &img);
            }
            let s = spec("invert", 0);
            let once = apply_image_transform(img.view(), &s).unwrap();
            let twice = apply_image_transform(once.view(), &s).unwrap();
            for (a, b) in twice.iter().zip(img.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn clamped_noise_stays_in_unit_interval(
            pixels in proptest::collection::vec(0.0f64..=1.0, 36),
            seed in 0u64..1000,
        ) {
            let img = Array2::from_shape_vec((6, 6), pixels).unwrap();
            let out = apply_image_transform(img.view(), &spec("noise_high", seed)).unwrap();
            prop_assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn stochastic_transforms_are_pure_in_seed(
            seed in 0u64..10_000,
        ) {
            let img = test_image();
            for name in ["noise_low", "elastic_low"] {
                let s = spec(name, seed);
                let a = apply_image_transform(img.view(), &s).unwrap();
                let b = apply_image_transform(img.view(), &s).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
