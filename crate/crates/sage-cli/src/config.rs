//! Run configuration: flat `key = value` text with `[section]` headers.
//!
//! Sections are purely visual grouping; keys are unique across the whole
//! file. Defaults depend on the dataset preset, so resolution happens in
//! two stages: collect explicit assignments (file first, then `--set`
//! overrides in order), pick the preset, then fill everything still unset
//! from that preset's defaults. `print-config` emits the resolved form in
//! the same format, so its output can be fed back in unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sage_core::evaluation::DEFAULT_THRESHOLDS;
use sage_core::transforms::{TransformSpec, IMAGE_PANEL, TABULAR_PANEL};

use crate::CliError;

/// Everything a pipeline command needs, fully resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,

    /// Training rows kept after the split (0 keeps all of them).
    pub train_subsample: usize,
    /// Per-class sizes when carving test/validation out of the image pool.
    pub test_per_class: usize,
    pub val_per_class: usize,
    /// Sizes for the `synth-data` generator.
    pub synth_train_per_class: usize,
    pub synth_test_per_class: usize,
    pub synth_abalone_rows: usize,

    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    pub early_stop_patience: usize,
    pub k: usize,

    pub transforms: Vec<String>,
    pub thresholds: Vec<f64>,

    pub forest_trees: usize,
    pub forest_max_depth: usize,
    pub forest_max_features: usize,
    pub classifier_epochs: usize,
    pub classifier_hidden: Vec<usize>,
    pub classifier_seed: u64,
}

/// Key order for printing, grouped into the sections users see.
const LAYOUT: &[(&str, &[&str])] = &[
    ("run", &["preset", "seed", "data_dir", "out_dir"]),
    (
        "data",
        &[
            "train_subsample",
            "test_per_class",
            "val_per_class",
            "synth_train_per_class",
            "synth_test_per_class",
            "synth_abalone_rows",
        ],
    ),
    (
        "model",
        &[
            "latent_dim",
            "epochs",
            "batch_size",
            "lr",
            "early_stop_patience",
            "k",
        ],
    ),
    ("transforms", &["transforms"]),
    ("eval", &["thresholds"]),
    (
        "downstream",
        &[
            "forest_trees",
            "forest_max_depth",
            "forest_max_features",
            "classifier_epochs",
            "classifier_hidden",
            "classifier_seed",
        ],
    ),
];

fn known_key(key: &str) -> bool {
    LAYOUT.iter().any(|(_, keys)| keys.contains(&key))
}

/// Explicit assignments gathered before preset defaults fill the gaps.
#[derive(Debug, Default)]
pub struct ConfigDraft {
    values: BTreeMap<String, String>,
}

impl ConfigDraft {
    /// Parses config-file text, later assignments overriding earlier ones.
    pub fn parse(text: &str) -> Result<ConfigDraft, CliError> {
        let mut draft = ConfigDraft::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(CliError::Config(format!(
                        "line {}: unterminated section header {line:?}",
                        lineno + 1
                    )));
                }
                continue; // sections carry no meaning beyond grouping
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            draft.assign(key.trim(), value.trim())?;
        }
        Ok(draft)
    }

    /// Applies one `--set key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--set expects key=value, got {assignment:?}"))
        })?;
        self.assign(key.trim(), value.trim())
    }

    fn assign(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !known_key(key) {
            return Err(CliError::Config(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Fills unset keys from preset defaults and validates the result.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let preset = self
            .values
            .get("preset")
            .cloned()
            .unwrap_or_else(|| "mnist".to_string());
        let defaults = preset_defaults(&preset)?;
        let get = |key: &str| self.values.get(key).or_else(|| defaults.get(key));
        let text = |key: &str| get(key).expect("every key has a default").clone();

        let cfg = RunConfig {
            preset,
            seed: parse_num(&text("seed"), "seed")?,
            data_dir: PathBuf::from(text("data_dir")),
            out_dir: PathBuf::from(text("out_dir")),
            train_subsample: parse_num(&text("train_subsample"), "train_subsample")?,
            test_per_class: parse_num(&text("test_per_class"), "test_per_class")?,
            val_per_class: parse_num(&text("val_per_class"), "val_per_class")?,
            synth_train_per_class: parse_num(
                &text("synth_train_per_class"),
                "synth_train_per_class",
            )?,
            synth_test_per_class: parse_num(&text("synth_test_per_class"), "synth_test_per_class")?,
            synth_abalone_rows: parse_num(&text("synth_abalone_rows"), "synth_abalone_rows")?,
            latent_dim: parse_num(&text("latent_dim"), "latent_dim")?,
            epochs: parse_num(&text("epochs"), "epochs")?,
            batch_size: parse_num(&text("batch_size"), "batch_size")?,
            lr: parse_num(&text("lr"), "lr")?,
            early_stop_patience: parse_num(&text("early_stop_patience"), "early_stop_patience")?,
            k: parse_num(&text("k"), "k")?,
            transforms: parse_list(&text("transforms"), "transforms", |s| Ok(s.to_string()))?,
            thresholds: parse_list(&text("thresholds"), "thresholds", |s| {
                parse_num::<f64>(s, "thresholds")
            })?,
            forest_trees: parse_num(&text("forest_trees"), "forest_trees")?,
            forest_max_depth: parse_num(&text("forest_max_depth"), "forest_max_depth")?,
            forest_max_features: parse_num(&text("forest_max_features"), "forest_max_features")?,
            classifier_epochs: parse_num(&text("classifier_epochs"), "classifier_epochs")?,
            classifier_hidden: parse_list(&text("classifier_hidden"), "classifier_hidden", |s| {
                parse_num::<usize>(s, "classifier_hidden")
            })?,
            classifier_seed: parse_num(&text("classifier_seed"), "classifier_seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("key {key}: cannot parse {value:?}")))
}

fn parse_list<T>(
    value: &str,
    key: &str,
    item: impl Fn(&str) -> Result<T, CliError>,
) -> Result<Vec<T>, CliError> {
    if value.trim().is_empty() {
        return Err(CliError::Config(format!("key {key}: list must not be empty")));
    }
    value.split(',').map(|s| item(s.trim())).collect()
}

/// Per-preset default values as config-file text fragments.
fn preset_defaults(preset: &str) -> Result<BTreeMap<&'static str, String>, CliError> {
    let (latent_dim, epochs, patience, k, subsample, panel): (_, _, _, _, _, &[&str]) =
        match preset {
            "mnist" => (2, 20, 3, 100, 10_000, &IMAGE_PANEL),
            "abalone" => (1, 100, 0, 20, 0, &TABULAR_PANEL),
            other => {
                return Err(CliError::Config(format!(
                    "unknown preset {other:?} (expected mnist or abalone)"
                )))
            }
        };
    let mut d: BTreeMap<&'static str, String> = BTreeMap::new();
    d.insert("preset", preset.to_string());
    d.insert("seed", "42".into());
    d.insert("data_dir", "data".into());
    d.insert("out_dir", "out".into());
    d.insert("train_subsample", subsample.to_string());
    d.insert("test_per_class", "800".into());
    d.insert("val_per_class", "200".into());
    d.insert("synth_train_per_class", "1200".into());
    d.insert("synth_test_per_class", "1000".into());
    d.insert("synth_abalone_rows", "4177".into());
    d.insert("latent_dim", latent_dim.to_string());
    d.insert("epochs", epochs.to_string());
    d.insert("batch_size", "64".into());
    d.insert("lr", 3e-4.to_string());
    d.insert("early_stop_patience", patience.to_string());
    d.insert("k", k.to_string());
    d.insert("transforms", panel.join(","));
    d.insert(
        "thresholds",
        DEFAULT_THRESHOLDS
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    d.insert("forest_trees", "50".into());
    d.insert("forest_max_depth", "15".into());
    d.insert("forest_max_features", "2".into());
    d.insert("classifier_epochs", "12".into());
    d.insert("classifier_hidden", "128,128".into());
    d.insert("classifier_seed", "4242".into());
    Ok(d)
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.epochs == 0 || self.batch_size == 0 || self.k == 0 || self.latent_dim == 0 {
            return Err(CliError::Config(
                "epochs, batch_size, k and latent_dim must all be positive".into(),
            ));
        }
        if self.lr <= 0.0 || self.lr.is_nan() {
            return Err(CliError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for pair in self.thresholds.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CliError::Config(format!(
                    "thresholds must be strictly ascending, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let (Some(&first), Some(&last)) = (self.thresholds.first(), self.thresholds.last()) {
            if first < 0.0 || last > 1.0 {
                return Err(CliError::Config(format!(
                    "thresholds must lie in [0, 1], got [{first}, {last}]"
                )));
            }
        }
        for name in &self.transforms {
            let spec = TransformSpec::by_name(name, self.seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let ok = match self.preset.as_str() {
                "mnist" => spec.kind.is_image(),
                _ => spec.kind.is_tabular(),
            };
            if !ok {
                return Err(CliError::Config(format!(
                    "transform {name:?} does not apply to the {} preset",
                    self.preset
                )));
            }
        }
        if self.forest_trees == 0 || self.forest_max_features == 0 {
            return Err(CliError::Config(
                "forest_trees and forest_max_features must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Renders the resolved config in file format; parsing the output
    /// reproduces this config exactly.
    pub fn print(&self) -> String {
        let value = |key: &str| -> String {
            match key {
                "preset" => self.preset.clone(),
                "seed" => self.seed.to_string(),
                "data_dir" => self.data_dir.display().to_string(),
                "out_dir" => self.out_dir.display().to_string(),
                "train_subsample" => self.train_subsample.to_string(),
                "test_per_class" => self.test_per_class.to_string(),
                "val_per_class" => self.val_per_class.to_string(),
                "synth_train_per_class" => self.synth_train_per_class.to_string(),
                "synth_test_per_class" => self.synth_test_per_class.to_string(),
                "synth_abalone_rows" => self.synth_abalone_rows.to_string(),
                "latent_dim" => self.latent_dim.to_string(),
                "epochs" => self.epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "lr" => self.lr.to_string(),
                "early_stop_patience" => self.early_stop_patience.to_string(),
                "k" => self.k.to_string(),
                "transforms" => self.transforms.join(","),
                "thresholds" => self
                    .thresholds
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                "forest_trees" => self.forest_trees.to_string(),
                "forest_max_depth" => self.forest_max_depth.to_string(),
                "forest_max_features" => self.forest_max_features.to_string(),
                "classifier_epochs" => self.classifier_epochs.to_string(),
                "classifier_hidden" => self
                    .classifier_hidden
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                "classifier_seed" => self.classifier_seed.to_string(),
                other => unreachable!("unlisted key {other}"),
            }
        };
        let mut out = String::new();
        for (i, (section, keys)) in LAYOUT.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            for key in *keys {
                let _ = writeln!(out, "{key} = {}", value(key));
            }
        }
        out
    }

    /// Early-stop patience in the form the trainer expects.
    pub fn patience(&self) -> Option<usize> {
        if self.early_stop_patience == 0 {
            None
        } else {
            Some(self.early_stop_patience)
        }
    }

    pub fn is_classification(&self) -> bool {
        self.preset == "mnist"
    }

    // Artifact and report locations, all under `out_dir`.

    pub fn companion_path(&self) -> PathBuf {
        self.out_dir.join(format!("companion-{}.bin", self.preset))
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.out_dir.join(format!("train-log-{}.csv", self.preset))
    }

    pub fn downstream_path(&self) -> PathBuf {
        let stem = if self.is_classification() { "classifier" } else { "forest" };
        self.out_dir.join(format!("{stem}-{}.bin", self.preset))
    }

    pub fn transformed_path(&self, tag: &str) -> PathBuf {
        self.out_dir
            .join(format!("transformed-{}-{tag}.bin", self.preset))
    }

    pub fn scores_path(&self) -> PathBuf {
        self.out_dir.join(format!("scores-{}.csv", self.preset))
    }

    pub fn filtered_path(&self) -> PathBuf {
        self.out_dir.join(format!("filtered-{}.csv", self.preset))
    }

    pub fn retention_path(&self) -> PathBuf {
        self.out_dir.join(format!("retention-{}.csv", self.preset))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.out_dir.join(format!("summary-{}.json", self.preset))
    }

    pub fn curves_path(&self) -> PathBuf {
        self.out_dir.join(format!("curves-{}.svg", self.preset))
    }

    pub fn metric_curves_path(&self) -> PathBuf {
        self.out_dir.join(format!("metric-{}.svg", self.preset))
    }

    pub fn component_auc_path(&self) -> PathBuf {
        self.out_dir
            .join(format!("component-auc-{}.csv", self.preset))
    }

    pub fn sweep_path(&self) -> PathBuf {
        self.out_dir
            .join(format!("latent-sweep-{}.csv", self.preset))
    }

    /// Raw dataset files expected under `data_dir`.
    pub fn dataset_paths(&self) -> Vec<PathBuf> {
        if self.is_classification() {
            MNIST_FILES.iter().map(|f| self.data_dir.join(f)).collect()
        } else {
            vec![self.data_dir.join(ABALONE_FILE)]
        }
    }
}

/// Standard (decompressed) MNIST file names, in train-images, train-labels,
/// test-images, test-labels order.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

pub const ABALONE_FILE: &str = "abalone.data";

/// Builds the resolved config from an optional file plus `--set` overrides.
pub fn load_config(file: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut draft = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            ConfigDraft::parse(&text)?
        }
        None => ConfigDraft::default(),
    };
    for assignment in sets {
        draft.set(assignment)?;
    }
    draft.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(sets: &[&str]) -> Result<RunConfig, CliError> {
        let mut draft = ConfigDraft::default();
        for s in sets {
            draft.set(s)?;
        }
        draft.resolve()
    }

    #[test]
    fn default_config_is_the_image_preset() {
        let cfg = resolve(&[]).unwrap();
        assert_eq!(cfg.preset, "mnist");
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.latent_dim, 2);
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.k, 100);
        assert_eq!(cfg.early_stop_patience, 3);
        assert_eq!(cfg.train_subsample, 10_000);
        assert_eq!(cfg.transforms, IMAGE_PANEL.map(str::to_string).to_vec());
        assert_eq!(cfg.thresholds, DEFAULT_THRESHOLDS.to_vec());
        assert_eq!(cfg.lr, 3e-4);
    }

    #[test]
    fn preset_switch_changes_dependent_defaults() {
        let cfg = resolve(&["preset=abalone"]).unwrap();
        assert_eq!(cfg.latent_dim, 1);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.k, 20);
        assert_eq!(cfg.early_stop_patience, 0);
        assert_eq!(cfg.patience(), None);
        assert_eq!(cfg.train_subsample, 0);
        assert_eq!(cfg.transforms, TABULAR_PANEL.map(str::to_string).to_vec());
    }

    #[test]
    fn explicit_values_survive_preset_defaults() {
        let cfg = resolve(&["preset=abalone", "epochs=7", "k=3"]).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.latent_dim, 1); // still from the preset
    }

    #[test]
    fn printed_config_round_trips() {
        let cfg = resolve(&["seed=7", "latent_dim=8", "thresholds=0,0.5,1"]).unwrap();
        let text = cfg.print();
        let back = ConfigDraft::parse(&text).unwrap().resolve().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_sections_are_ignored() {
        let text = "# a comment\n[run]\npreset = abalone # trailing\n\n[model]\nk = 5\n";
        let cfg = ConfigDraft::parse(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.preset, "abalone");
        assert_eq!(cfg.k, 5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = resolve(&["learning=fast"]).unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
    }

    #[test]
    fn unknown_preset_is_rejected() {
        let err = resolve(&["preset=cifar"]).unwrap_err();
        assert!(err.to_string().contains("unknown preset"));
    }

    #[test]
    fn thresholds_must_ascend_within_unit_interval() {
        assert!(resolve(&["thresholds=0.1,0.05"]).is_err());
        assert!(resolve(&["thresholds=0,0,0.1"]).is_err());
        assert!(resolve(&["thresholds=0.5,1.5"]).is_err());
        assert!(resolve(&["thresholds=0,1"]).is_ok());
    }

    #[test]
    fn transform_kind_must_match_preset() {
        let err = resolve(&["transforms=tab_noise_low"]).unwrap_err();
        assert!(err.to_string().contains("does not apply"));
        let err = resolve(&["preset=abalone", "transforms=hflip"]).unwrap_err();
        assert!(err.to_string().contains("does not apply"));
        assert!(resolve(&["transforms=hflip,blur"]).is_ok());
    }

    #[test]
    fn malformed_lines_are_reported_with_numbers() {
        let err = ConfigDraft::parse("preset mnist\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let err = ConfigDraft::parse("[run\n").unwrap_err();
        assert!(err.to_string().contains("unterminated"));
    }
}
