//! Versioned binary artifacts: the self-contained companion bundle (model +
//! temperature + normalization stats + score reference), the random forest,
//! and the independent classifier.
//!
//! All integers are little-endian; floats are little-endian f64 bits, so
//! every artifact round-trips bit-exactly. The latent-space tree is never
//! serialized — it is rebuilt from the reference coordinates on load.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::bytes::{read_f64, read_u32, read_u64, read_u8};
use crate::dataset::NormStats;
use crate::downstream::{
    ForestParams, IndependentClassifier, RandomForest, RegressionTree, TreeNode,
};
use crate::error::{Result, SageError};
use crate::nn::Network;
use crate::sae::{SaeModel, Task};
use crate::scoring::ScoreReference;

pub const COMPANION_MAGIC: &[u8; 8] = b"SAGECOMP";
pub const FOREST_MAGIC: &[u8; 8] = b"SAGEFRST";
pub const CLASSIFIER_MAGIC: &[u8; 8] = b"SAGEDSCL";
const ARTIFACT_VERSION: u32 = 1;

fn check_header(r: &mut impl Read, magic: &[u8; 8], what: &str) -> Result<()> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(SageError::Format(format!("bad {what} artifact magic")));
    }
    let version = read_u32(r)?;
    if version != ARTIFACT_VERSION {
        return Err(SageError::Format(format!(
            "unsupported {what} artifact version {version}"
        )));
    }
    Ok(())
}

fn write_f64_slice(w: &mut impl Write, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_vec(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for v in out.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(out)
}

fn write_norm(w: &mut impl Write, norm: &Option<NormStats>) -> Result<()> {
    match norm {
        None => w.write_all(&[0u8])?,
        Some(stats) => {
            w.write_all(&[1u8])?;
            w.write_all(&(stats.means.len() as u64).to_le_bytes())?;
            write_f64_slice(w, stats.means.as_slice().expect("contiguous"))?;
            write_f64_slice(w, stats.stds.as_slice().expect("contiguous"))?;
            w.write_all(&(stats.zero_variance.len() as u64).to_le_bytes())?;
            for &j in &stats.zero_variance {
                w.write_all(&(j as u64).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_norm(r: &mut impl Read) -> Result<Option<NormStats>> {
    match read_u8(r)? {
        0 => Ok(None),
        1 => {
            let d = read_u64(r)? as usize;
            let means = Array1::from_vec(read_f64_vec(r, d)?);
            let stds = Array1::from_vec(read_f64_vec(r, d)?);
            let n_zero = read_u64(r)? as usize;
            let mut zero_variance = Vec::with_capacity(n_zero);
            for _ in 0..n_zero {
                zero_variance.push(read_u64(r)? as usize);
            }
            Ok(Some(NormStats {
                means,
                stds,
                zero_variance,
            }))
        }
        c => Err(SageError::Format(format!("unknown norm-stats tag {c}"))),
    }
}

/// Writes the companion bundle: task, latent width, temperature,
/// normalization stats, the three parameter stacks, and the score reference
/// (sorted measure arrays + latent coordinates + regression center).
pub fn write_companion(
    w: &mut impl Write,
    model: &SaeModel,
    reference: &ScoreReference,
) -> Result<()> {
    w.write_all(COMPANION_MAGIC)?;
    w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
    match model.task {
        Task::Classification { n_classes } => {
            w.write_all(&[0u8])?;
            w.write_all(&(n_classes as u64).to_le_bytes())?;
        }
        Task::Regression => w.write_all(&[1u8])?,
    }
    w.write_all(&(model.latent_dim as u64).to_le_bytes())?;
    w.write_all(&model.temperature.to_le_bytes())?;
    write_norm(w, &model.norm)?;
    model.encoder.serialize(w)?;
    model.decoder.serialize(w)?;
    model.head.serialize(w)?;

    w.write_all(&(reference.n as u64).to_le_bytes())?;
    w.write_all(&(reference.k as u64).to_le_bytes())?;
    write_f64_slice(w, &reference.sorted_knn)?;
    write_f64_slice(w, &reference.sorted_recon)?;
    write_f64_slice(w, &reference.sorted_task)?;
    let coords = &reference.latent_reference;
    w.write_all(&(coords.nrows() as u64).to_le_bytes())?;
    w.write_all(&(coords.ncols() as u64).to_le_bytes())?;
    write_f64_slice(w, coords.as_slice().expect("contiguous"))?;
    match reference.regression_center {
        None => w.write_all(&[0u8])?,
        Some(c) => {
            w.write_all(&[1u8])?;
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_companion(r: &mut impl Read) -> Result<(SaeModel, ScoreReference)> {
    check_header(r, COMPANION_MAGIC, "companion")?;
    let task = match read_u8(r)? {
        0 => Task::Classification {
            n_classes: read_u64(r)? as usize,
        },
        1 => Task::Regression,
        c => return Err(SageError::Format(format!("unknown task tag {c}"))),
    };
    let latent_dim = read_u64(r)? as usize;
    let temperature = read_f64(r)?;
    let norm = read_norm(r)?;
    let encoder = Network::deserialize(r)?;
    let decoder = Network::deserialize(r)?;
    let head = Network::deserialize(r)?;
    let model = SaeModel {
        encoder,
        decoder,
        head,
        latent_dim,
        task,
        temperature,
        norm,
    };

    let n = read_u64(r)? as usize;
    let k = read_u64(r)? as usize;
    let sorted_knn = read_f64_vec(r, n)?;
    let sorted_recon = read_f64_vec(r, n)?;
    let sorted_task = read_f64_vec(r, n)?;
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let latent_reference = Array2::from_shape_vec((rows, cols), read_f64_vec(r, rows * cols)?)
        .map_err(|e| SageError::Format(e.to_string()))?;
    let regression_center = match read_u8(r)? {
        0 => None,
        1 => Some(read_f64(r)?),
        c => return Err(SageError::Format(format!("unknown center tag {c}"))),
    };
    let reference = ScoreReference {
        sorted_knn,
        sorted_recon,
        sorted_task,
        n,
        k,
        latent_reference,
        regression_center,
    };
    Ok((model, reference))
}

/// Writes the forest as one pre-order node list per tree.
pub fn write_forest(w: &mut impl Write, forest: &RandomForest) -> Result<()> {
    w.write_all(FOREST_MAGIC)?;
    w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
    w.write_all(&forest.seed.to_le_bytes())?;
    w.write_all(&(forest.params.n_estimators as u64).to_le_bytes())?;
    w.write_all(&(forest.params.max_depth as u64).to_le_bytes())?;
    w.write_all(&(forest.params.max_features as u64).to_le_bytes())?;
    w.write_all(&[forest.params.bootstrap as u8])?;
    w.write_all(&(forest.trees.len() as u64).to_le_bytes())?;
    for tree in &forest.trees {
        w.write_all(&(tree.nodes.len() as u64).to_le_bytes())?;
        for node in &tree.nodes {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.write_all(&[0u8])?;
                    w.write_all(&(feature as u64).to_le_bytes())?;
                    w.write_all(&threshold.to_le_bytes())?;
                    w.write_all(&(left as u64).to_le_bytes())?;
                    w.write_all(&(right as u64).to_le_bytes())?;
                }
                TreeNode::Leaf { value } => {
                    w.write_all(&[1u8])?;
                    w.write_all(&value.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_forest(r: &mut impl Read) -> Result<RandomForest> {
    check_header(r, FOREST_MAGIC, "forest")?;
    let seed = read_u64(r)?;
    let params = ForestParams {
        n_estimators: read_u64(r)? as usize,
        max_depth: read_u64(r)? as usize,
        max_features: read_u64(r)? as usize,
        bootstrap: read_u8(r)? != 0,
    };
    let n_trees = read_u64(r)? as usize;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = read_u64(r)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match read_u8(r)? {
                0 => TreeNode::Split {
                    feature: read_u64(r)? as usize,
                    threshold: read_f64(r)?,
                    left: read_u64(r)? as usize,
                    right: read_u64(r)? as usize,
                },
                1 => TreeNode::Leaf { value: read_f64(r)? },
                c => return Err(SageError::Format(format!("unknown tree node tag {c}"))),
            });
        }
        trees.push(RegressionTree { nodes });
    }
    Ok(RandomForest { trees, params, seed })
}

pub fn write_classifier(w: &mut impl Write, clf: &IndependentClassifier) -> Result<()> {
    w.write_all(CLASSIFIER_MAGIC)?;
    w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
    w.write_all(&(clf.n_classes as u64).to_le_bytes())?;
    clf.net.serialize(w)
}

pub fn read_classifier(r: &mut impl Read) -> Result<IndependentClassifier> {
    check_header(r, CLASSIFIER_MAGIC, "classifier")?;
    let n_classes = read_u64(r)? as usize;
    let net = Network::deserialize(r)?;
    Ok(IndependentClassifier { net, n_classes })
}
