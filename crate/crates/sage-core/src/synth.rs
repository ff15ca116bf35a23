//! Deterministic synthetic corpora in the exact on-disk formats the
//! ingestion layer parses: IDX image/label files and a headerless 9-field
//! CSV. No network access — the generator stands in for the public
//! downloads while exercising every byte of the parsing path.
//!
//! Images: each class renders as a Gaussian blob at a class-specific polar
//! position (distinct angle and radius, deliberately asymmetric under
//! flips). A per-sample difficulty draw with a heavy easy mode controls
//! position wobble, footprint anisotropy, intensity and pixel noise, and a
//! minority of samples carry a faint distractor blob — so class identity is
//! recoverable but not perfectly separable, confidence spans a continuum
//! instead of saturating, and awkward samples degrade on every companion
//! measure at once, as they do in real corpora.
//!
//! Tabular rows: plausible shell measurements driven by a latent body size,
//! with ring counts a noisy monotone function of size — enough signal for a
//! forest to fit and for corruption to visibly hurt it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Synthetic images are square with this side length.
pub const IMAGE_SIDE: usize = 28;
/// Number of image classes.
pub const N_CLASSES: usize = 10;

/// IDX-encoded file bytes for a paired image/label corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCorpus {
    pub train_images: Vec<u8>,
    pub train_labels: Vec<u8>,
    pub test_images: Vec<u8>,
    pub test_labels: Vec<u8>,
}

fn idx_image_bytes(pixels: &[u8], n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&[0, 0, 0x08, 3]);
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

fn idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&[0, 0, 0x08, 1]);
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Blob center offsets from the image midpoint, one per class. The layout
/// keeps every class at least 4.4 px from every other class AND from every
/// class's horizontal/vertical mirror image, so flipped samples sit clearly
/// off-distribution instead of impersonating another class.
const CLASS_OFFSETS: [(f64, f64); N_CLASSES] = [
    (-5.43, -2.25),
    (9.93, -2.29),
    (-2.25, -5.44),
    (2.27, -9.94),
    (-6.31, -7.87),
    (2.25, 5.44),
    (7.42, 6.43),
    (-9.94, 2.28),
    (-2.25, 9.95),
    (5.43, 2.25),
];

/// Blob center for a class, before jitter.
fn class_center(class: usize) -> (f64, f64) {
    let mid = (IMAGE_SIDE - 1) as f64 / 2.0;
    let (dx, dy) = CLASS_OFFSETS[class];
    (mid + dx, mid + dy)
}

fn render_sample(class: usize, rng: &mut ChaCha8Rng, out: &mut [u8]) {
    let (cx0, cy0) = class_center(class);
    // Squaring the uniform draw keeps most samples easy while the tail
    // wanders toward neighbouring basins, smears out and picks up noise —
    // degrading latent position, reconstruction and confidence together.
    let difficulty = rng.gen_range(0.0..1.0f64).powi(2);
    let wobble = 0.8 + 3.0 * difficulty;
    let cx = cx0 + rng.gen_range(-wobble..wobble);
    let cy = cy0 + rng.gen_range(-wobble..wobble);
    let spread = 1.0 + 0.6 * difficulty;
    let sx = rng.gen_range(1.7..2.5) * spread;
    let sy = rng.gen_range(1.7..2.5) * spread;
    let tilt = rng.gen_range(-0.6..0.6) * difficulty.sqrt();
    let intensity = rng.gen_range(0.55..1.0) - 0.15 * difficulty;
    let noise_amp = 0.02 + 0.22 * difficulty;
    // a faint companion blob at an arbitrary position, on a quarter of
    // the samples
    let distractor = rng.gen_bool(0.25).then(|| {
        let margin = 4.0;
        (
            rng.gen_range(margin..IMAGE_SIDE as f64 - margin),
            rng.gen_range(margin..IMAGE_SIDE as f64 - margin),
            rng.gen_range(1.0..1.8),
            rng.gen_range(0.12..0.30),
        )
    });

    let det = 1.0 - tilt * tilt;
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let dx = (x as f64 - cx) / sx;
            let dy = (y as f64 - cy) / sy;
            let q = (dx * dx - 2.0 * tilt * dx * dy + dy * dy) / (2.0 * det);
            let mut v = intensity * (-q).exp();
            if let Some((ox, oy, osigma, oint)) = distractor {
                let d2 = (x as f64 - ox).powi(2) + (y as f64 - oy).powi(2);
                v += oint * (-d2 / (2.0 * osigma * osigma)).exp();
            }
            v += rng.gen_range(-noise_amp..noise_amp);
            out[y * IMAGE_SIDE + x] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
}

fn render_split(per_class: usize, rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<u8>) {
    let n = per_class * N_CLASSES;
    // class-balanced by construction, then shuffled so file order carries
    // no class periodicity
    let mut order: Vec<u8> = (0..n).map(|i| (i % N_CLASSES) as u8).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    let mut pixels = vec![0u8; n * IMAGE_SIDE * IMAGE_SIDE];
    for (i, &label) in order.iter().enumerate() {
        let start = i * IMAGE_SIDE * IMAGE_SIDE;
        render_sample(
            label as usize,
            rng,
            &mut pixels[start..start + IMAGE_SIDE * IMAGE_SIDE],
        );
    }
    (pixels, order)
}

/// Generates a full image corpus: `train_per_class`/`test_per_class`
/// samples per class, encoded as IDX file bytes. Identical seeds produce
/// identical bytes.
pub fn image_corpus(train_per_class: usize, test_per_class: usize, seed: u64) -> ImageCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_pixels, train_labels) = render_split(train_per_class, &mut rng);
    let (test_pixels, test_labels) = render_split(test_per_class, &mut rng);
    ImageCorpus {
        train_images: idx_image_bytes(&train_pixels, train_labels.len()),
        train_labels: idx_label_bytes(&train_labels),
        test_images: idx_image_bytes(&test_pixels, test_labels.len()),
        test_labels: idx_label_bytes(&test_labels),
    }
}

/// Generates a headerless 9-field CSV of shell measurements: sex code,
/// seven correlated size/weight columns in raw units, and an integer ring
/// count in 1..=29 that tracks body size with additive noise.
pub fn abalone_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(rows * 64);
    for _ in 0..rows {
        let sex = ["I", "M", "F"][rng.gen_range(0..3)];
        let adult = if sex == "I" { 0.0 } else { 1.0 };
        let length: f64 = rng.gen_range(0.15..0.75) + 0.05 * adult;
        let diameter = 0.80 * length * rng.gen_range(0.95..1.05);
        let height = 0.28 * length * rng.gen_range(0.90..1.10);
        let whole = 5.5 * length.powi(3) * rng.gen_range(0.90..1.10);
        let shucked = 0.45 * whole * rng.gen_range(0.90..1.10);
        let viscera = 0.22 * whole * rng.gen_range(0.90..1.10);
        let shell = 0.28 * whole * rng.gen_range(0.90..1.10);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let rings = (2.0 + 16.0 * length + 1.2 * adult + 1.1 * noise)
            .round()
            .clamp(1.0, 29.0) as i32;
        out.push_str(&format!(
            "{sex},{length:.4},{diameter:.4},{height:.4},{whole:.4},{shucked:.4},{viscera:.4},{shell:.4},{rings}\n"
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_abalone_csv, parse_idx_images, parse_idx_labels, Targets};

    #[test]
    fn corpus_parses_back_through_the_ingest_path() {
        let corpus = image_corpus(20, 10, 42);
        let images = parse_idx_images(&corpus.train_images).unwrap();
        assert_eq!(images.features.dim(), (200, 784));
        assert_eq!((images.height, images.width), (28, 28));
        let labels = parse_idx_labels(&corpus.train_labels).unwrap();
        assert_eq!(labels.len(), 200);
        // raw pixels land in [0,1] after the /255 scaling
        assert!(images.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // exactly balanced classes
        let mut counts = [0usize; N_CLASSES];
        for &l in &labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 20));
        let test_labels = parse_idx_labels(&corpus.test_labels).unwrap();
        assert_eq!(test_labels.len(), 100);
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        assert_eq!(image_corpus(5, 5, 7), image_corpus(5, 5, 7));
        assert_ne!(image_corpus(5, 5, 7), image_corpus(5, 5, 8));
        assert_eq!(abalone_csv(50, 7), abalone_csv(50, 7));
        assert_ne!(abalone_csv(50, 7), abalone_csv(50, 8));
    }

    #[test]
    fn classes_are_tighter_within_than_between() {
        let corpus = image_corpus(12, 1, 3);
        let images = parse_idx_images(&corpus.train_images).unwrap();
        let labels = parse_idx_labels(&corpus.train_labels).unwrap();
        let dist = |a: usize, b: usize| {
            images
                .features
                .row(a)
                .iter()
                .zip(images.features.row(b))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let n = labels.len();
        let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
        for a in 0..n {
            for b in a + 1..n {
                if labels[a] == labels[b] {
                    intra = (intra.0 + dist(a, b), intra.1 + 1);
                } else {
                    inter = (inter.0 + dist(a, b), inter.1 + 1);
                }
            }
        }
        let mean_intra = intra.0 / intra.1 as f64;
        let mean_inter = inter.0 / inter.1 as f64;
        assert!(
            mean_intra * 1.5 < mean_inter,
            "intra {mean_intra} vs inter {mean_inter}"
        );
    }

    #[test]
    fn no_class_center_is_a_flip_of_another() {
        let mid = (IMAGE_SIDE - 1) as f64;
        for a in 0..N_CLASSES {
            let (ax, ay) = class_center(a);
            for b in 0..N_CLASSES {
                let (bx, by) = class_center(b);
                let hflip = ((mid - ax) - bx).hypot(ay - by);
                let vflip = (ax - bx).hypot((mid - ay) - by);
                assert!(hflip > 4.0, "classes {a}/{b} collide under hflip");
                assert!(vflip > 4.0, "classes {a}/{b} collide under vflip");
                if a != b {
                    let plain = (ax - bx).hypot(ay - by);
                    assert!(plain > 4.0, "classes {a}/{b} overlap");
                }
            }
        }
    }

    #[test]
    fn tabular_rows_parse_with_plausible_ranges() {
        let csv = abalone_csv(500, 11);
        let ds = parse_abalone_csv(&csv).unwrap();
        assert_eq!(ds.n(), 500);
        assert_eq!(ds.dim(), 8);
        let Targets::Values(rings) = &ds.targets else {
            panic!("regression targets expected");
        };
        assert!(rings.iter().all(|&r| (1.0..=29.0).contains(&r)));
        assert!(rings.iter().all(|&r| r == r.round()));
        // all three sex codes occur
        let sexes: std::collections::BTreeSet<i64> =
            ds.features.column(0).iter().map(|&v| v as i64).collect();
        assert_eq!(sexes.len(), 3);
        // rings correlate strongly with length
        let lengths: Vec<f64> = ds.features.column(1).to_vec();
        let rr: Vec<f64> = rings.to_vec();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ml, mr) = (mean(&lengths), mean(&rr));
        let cov: f64 = lengths
            .iter()
            .zip(&rr)
            .map(|(l, r)| (l - ml) * (r - mr))
            .sum();
        let vl: f64 = lengths.iter().map(|l| (l - ml).powi(2)).sum();
        let vr: f64 = rr.iter().map(|r| (r - mr).powi(2)).sum();
        let pearson = cov / (vl * vr).sqrt();
        assert!(pearson > 0.8, "length/rings correlation {pearson}");
    }
}
