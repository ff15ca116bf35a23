//! Dataset loading and generation for the pipeline commands.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use sage_core::dataset::{
    self, image_dataset, parse_abalone_csv, parse_idx_images, parse_idx_labels, LabeledDataset,
    SplitTag,
};
use sage_core::synth;
use sage_core::transforms::{
    raw_column_means, transform_image_batch, transform_tabular_batch, TransformSpec,
};

use crate::config::{RunConfig, ABALONE_FILE, MNIST_FILES};
use crate::CliError;

pub fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub fn pipeline_err(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

/// Fails fast if any raw dataset file is missing, before any output is
/// touched.
pub fn require_inputs(cfg: &RunConfig) -> Result<(), CliError> {
    let missing: Vec<String> = cfg
        .dataset_paths()
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "missing dataset file(s): {} (run `sage fetch-info` for sources or `sage synth-data` \
             to generate a synthetic stand-in)",
            missing.join(", ")
        )))
    }
}

/// Loads and splits the raw dataset: (train, test, validation).
///
/// Images: the pre-split training file becomes the train set (optionally
/// subsampled), and the test file is carved class-balanced into test and
/// validation. Tabular: one CSV split 80/16/4 by seeded shuffle.
pub fn load_split(
    cfg: &RunConfig,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset), CliError> {
    require_inputs(cfg)?;
    if cfg.is_classification() {
        let read = |name: &str| fs::read(cfg.data_dir.join(name)).map_err(input_err);
        let train_images = parse_idx_images(&read(MNIST_FILES[0])?).map_err(input_err)?;
        let train_labels = parse_idx_labels(&read(MNIST_FILES[1])?).map_err(input_err)?;
        let pool_images = parse_idx_images(&read(MNIST_FILES[2])?).map_err(input_err)?;
        let pool_labels = parse_idx_labels(&read(MNIST_FILES[3])?).map_err(input_err)?;
        let mut train = image_dataset(train_images, train_labels, synth::N_CLASSES, SplitTag::Train)
            .map_err(input_err)?;
        let pool = image_dataset(pool_images, pool_labels, synth::N_CLASSES, SplitTag::Test)
            .map_err(input_err)?;
        let (test, val) =
            dataset::split_class_balanced(&pool, cfg.test_per_class, cfg.val_per_class, cfg.seed)
                .map_err(input_err)?;
        if cfg.train_subsample > 0 && cfg.train_subsample < train.n() {
            train = dataset::subsample(&train, cfg.train_subsample, cfg.seed);
        }
        Ok((train, test, val))
    } else {
        let text = fs::read_to_string(cfg.data_dir.join(ABALONE_FILE)).map_err(input_err)?;
        let ds = parse_abalone_csv(&text).map_err(input_err)?;
        let (mut train, test, val) =
            dataset::split_fractions(&ds, 0.8, 0.16, 0.04, cfg.seed).map_err(input_err)?;
        if cfg.train_subsample > 0 && cfg.train_subsample < train.n() {
            train = dataset::subsample(&train, cfg.train_subsample, cfg.seed);
        }
        Ok((train, test, val))
    }
}

/// One scoring unit: a named feature block plus the targets it inherits.
pub struct TaggedBlock {
    pub tag: String,
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub values: Option<Array1<f64>>,
}

fn block_from(tag: &str, features: Array2<f64>, src: &LabeledDataset) -> TaggedBlock {
    TaggedBlock {
        tag: tag.to_string(),
        features,
        labels: src.labels().map(<[usize]>::to_vec),
        values: src.values().cloned(),
    }
}

/// Applies one panel transform to the test features, in raw units.
pub fn transform_test_block(
    cfg: &RunConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    name: &str,
) -> Result<TaggedBlock, CliError> {
    let spec = TransformSpec::by_name(name, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let kind_ok = if cfg.is_classification() {
        spec.kind.is_image()
    } else {
        spec.kind.is_tabular()
    };
    if !kind_ok {
        return Err(CliError::Config(format!(
            "transform {name:?} does not apply to the {} preset",
            cfg.preset
        )));
    }
    let transformed = if cfg.is_classification() {
        let side = synth::IMAGE_SIDE;
        transform_image_batch(&test.features, side, side, &spec).map_err(pipeline_err)?
    } else {
        let means = raw_column_means(&train.features);
        transform_tabular_batch(&test.features, &spec, &means).map_err(pipeline_err)?
    };
    Ok(block_from(name, transformed, test))
}

/// The standard scoring lineup: train, test, then each configured
/// transform applied to the test split. Transform blocks are recomputed
/// from the seed rather than read from disk, so scoring never depends on
/// cached files.
pub fn tagged_blocks(
    cfg: &RunConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    tags: &[String],
) -> Result<Vec<TaggedBlock>, CliError> {
    let mut blocks = Vec::with_capacity(tags.len());
    for tag in tags {
        let block = match tag.as_str() {
            "train" => block_from("train", train.features.clone(), train),
            "test" => block_from("test", test.features.clone(), test),
            name => transform_test_block(cfg, train, test, name)?,
        };
        blocks.push(block);
    }
    Ok(blocks)
}

/// Default tag order for `score` and `eval`: train, test, transforms.
pub fn default_tags(cfg: &RunConfig) -> Vec<String> {
    let mut tags = vec!["train".to_string(), "test".to_string()];
    tags.extend(cfg.transforms.iter().cloned());
    tags
}

/// Writes a finished byte buffer via a sibling temp file and rename, so an
/// interrupted run never leaves a partial artifact at the final path.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(pipeline_err)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(pipeline_err)?;
    fs::rename(&tmp, path).map_err(pipeline_err)?;
    Ok(())
}

/// Prints where the real datasets live and what this tool expects on disk.
pub fn cmd_fetch_info(cfg: &RunConfig) -> Result<(), CliError> {
    println!("No downloads are performed; place dataset files under {:?}.", cfg.data_dir);
    println!();
    println!("mnist preset — four IDX files, decompressed (gunzip the originals):");
    for name in MNIST_FILES {
        println!("  {}", cfg.data_dir.join(name).display());
    }
    println!("  source: http://yann.lecun.com/exdb/mnist/ (or any torchvision mirror)");
    println!();
    println!("abalone preset — one headerless 9-column CSV:");
    println!("  {}", cfg.data_dir.join(ABALONE_FILE).display());
    println!("  source: https://archive.ics.uci.edu/dataset/1/abalone");
    println!();
    println!("`sage synth-data` writes a synthetic stand-in corpus in the same formats.");
    Ok(())
}

/// Generates the synthetic stand-in corpus for the active preset.
pub fn cmd_synth_data(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.data_dir).map_err(pipeline_err)?;
    if cfg.is_classification() {
        let corpus = synth::image_corpus(
            cfg.synth_train_per_class,
            cfg.synth_test_per_class,
            cfg.seed,
        );
        let files = [
            (MNIST_FILES[0], &corpus.train_images),
            (MNIST_FILES[1], &corpus.train_labels),
            (MNIST_FILES[2], &corpus.test_images),
            (MNIST_FILES[3], &corpus.test_labels),
        ];
        for (name, bytes) in files {
            let path = cfg.data_dir.join(name);
            write_output(&path, bytes)?;
            println!("wrote {} ({} bytes)", path.display(), bytes.len());
        }
    } else {
        let csv = synth::abalone_csv(cfg.synth_abalone_rows, cfg.seed);
        let path = cfg.data_dir.join(ABALONE_FILE);
        write_output(&path, csv.as_bytes())?;
        println!("wrote {} ({} rows)", path.display(), cfg.synth_abalone_rows);
    }
    Ok(())
}

/// Materializes transformed copies of the test split as dataset cache
/// files, one per requested transform. These are the same blocks `score`
/// computes in memory.
pub fn cmd_transform(cfg: &RunConfig, only: Option<&str>) -> Result<(), CliError> {
    let (train, test, _val) = load_split(cfg)?;
    let names: Vec<String> = match only {
        Some(name) => vec![name.to_string()],
        None => cfg.transforms.clone(),
    };
    for name in &names {
        let block = transform_test_block(cfg, &train, &test, name)?;
        let ds = LabeledDataset {
            features: block.features,
            targets: test.targets.clone(),
            split: SplitTag::Test,
            norm: None,
        };
        let mut bytes = Vec::new();
        dataset::write_dataset(&ds, &mut bytes).map_err(pipeline_err)?;
        let path = cfg.transformed_path(name);
        write_output(&path, &bytes)?;
        println!("wrote {} ({} rows)", path.display(), ds.n());
    }
    Ok(())
}
