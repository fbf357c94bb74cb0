//! Experiment configuration: the TOML schema, dotted-path overrides,
//! dataset loading, and budget resolution.
//!
//! Unknown keys anywhere in the document are hard errors; a config that
//! parses is guaranteed to address every field the run will use.

use super::ExperimentError;
use crate::adversarial::{AttackConfig, AttackObjective, RobustTrainConfig};
use crate::data::{
    generate_synthetic, load_image_manifest, load_tabular, DatasetBundle, SplitFractions,
    SyntheticSpec, TabularOptions,
};
use crate::fairness::{MetricKind, WorstGroupMode};
use crate::model::{ArchSpec, TrainConfig};
use crate::selection::Strategy;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// A delimiter-separated file with `feature_*`, `label`, and `group`
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularFileConfig {
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub splits: SplitFractions,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_delimiter() -> String {
    ",".to_string()
}

/// A manifest of `path,label,group` lines pointing at equally sized images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageManifestConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub splits: SplitFractions,
    #[serde(default)]
    pub split_seed: u64,
}

/// Where the dataset comes from. Externally tagged, so configs write one of
/// `[dataset.synthetic]`, `[dataset.tabular]`, `[dataset.image-manifest]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    Tabular(TabularFileConfig),
    ImageManifest(ImageManifestConfig),
}

impl DatasetConfig {
    /// Load the bundle. Relative paths resolve against `base`, normally the
    /// directory containing the config file.
    pub fn load(&self, base: &Path) -> Result<DatasetBundle, ExperimentError> {
        match self {
            DatasetConfig::Synthetic(spec) => Ok(generate_synthetic(spec)?),
            DatasetConfig::Tabular(cfg) => {
                let options = TabularOptions {
                    delimiter: single_byte_delimiter(&cfg.delimiter)?,
                    splits: cfg.splits,
                    split_seed: cfg.split_seed,
                };
                Ok(load_tabular(&resolve(base, &cfg.path), &options)?)
            }
            DatasetConfig::ImageManifest(cfg) => {
                let options = TabularOptions {
                    delimiter: b',',
                    splits: cfg.splits,
                    split_seed: cfg.split_seed,
                };
                Ok(load_image_manifest(&resolve(base, &cfg.manifest), &options)?)
            }
        }
    }

    /// A short name for reports ("synthetic:two-group-gaussians", file stem
    /// for files), used to check that compared runs share a dataset.
    pub fn describe(&self) -> String {
        match self {
            DatasetConfig::Synthetic(spec) => format!("synthetic:{}:{}:{}", spec.name, spec.seed, spec.n),
            DatasetConfig::Tabular(cfg) => format!("tabular:{}", cfg.path.display()),
            DatasetConfig::ImageManifest(cfg) => {
                format!("image-manifest:{}", cfg.manifest.display())
            }
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn single_byte_delimiter(text: &str) -> Result<u8, ExperimentError> {
    let bytes = text.as_bytes();
    if bytes.len() != 1 {
        return Err(ExperimentError::InvalidConfig(format!(
            "delimiter must be a single byte, got {text:?}"
        )));
    }
    Ok(bytes[0])
}

/// Labeling budget per round: a whole number of samples or a fraction of the
/// train split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Absolute(u64),
    Fraction(f64),
}

/// Resolve the budget against the train split size. Fractions round to the
/// nearest whole sample and must resolve to at least one.
pub fn resolve_budget(budget: BudgetSpec, train_size: usize) -> Result<usize, ExperimentError> {
    match budget {
        BudgetSpec::Absolute(b) => {
            if b < 1 {
                return Err(ExperimentError::InvalidConfig(
                    "budget must be at least 1".to_string(),
                ));
            }
            Ok(b as usize)
        }
        BudgetSpec::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(ExperimentError::InvalidConfig(format!(
                    "budget fraction must lie in (0, 1), got {f}"
                )));
            }
            let b = (f * train_size as f64).round() as usize;
            if b < 1 {
                return Err(ExperimentError::InvalidConfig(format!(
                    "budget fraction {f} of {train_size} training samples resolves to zero"
                )));
            }
            Ok(b)
        }
    }
}

/// Everything one run needs. Every field is addressable from the command
/// line as a dotted path, e.g. `adv_train.trades_beta=2.0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Classifier architecture: `linear` or `mlp:H1[-H2][:tanh|relu]`.
    pub architecture: String,
    pub strategy: Strategy,
    /// Number of acquisition rounds K.
    pub rounds: u32,
    pub budget: BudgetSpec,
    /// Initially labeled fraction of the train split, in (0, 1).
    pub labeled_fraction: f64,
    /// Master seed; every random decision derives from it.
    pub seed: u64,
    #[serde(default)]
    pub worst_group_mode: WorstGroupMode,
    #[serde(default)]
    pub metric: MetricKind,
    /// Hyperparameters of the auxiliary standard model (JIN only).
    #[serde(default)]
    pub train: TrainConfig,
    /// Hyperparameters of the robust model, including the inner attack.
    #[serde(default)]
    pub adv_train: RobustTrainConfig,
    /// Attack used for robust evaluation; must be label-driven.
    #[serde(default)]
    pub eval_attack: AttackConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.rounds < 1 {
            return Err(ExperimentError::InvalidConfig(
                "rounds must be at least 1".to_string(),
            ));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction < 1.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "labeled_fraction must lie in (0, 1), got {}",
                self.labeled_fraction
            )));
        }
        ArchSpec::parse(&self.architecture)?;
        self.train
            .validate()
            .map_err(ExperimentError::Model)?;
        self.adv_train.validate()?;
        self.eval_attack.validate()?;
        if self.eval_attack.objective != AttackObjective::CrossEntropy {
            return Err(ExperimentError::InvalidConfig(
                "eval_attack must use the cross-entropy objective; the robust metric is \
                 defined against label-driven attacks"
                    .to_string(),
            ));
        }
        match self.budget {
            BudgetSpec::Absolute(b) if b < 1 => {
                return Err(ExperimentError::InvalidConfig(
                    "budget must be at least 1".to_string(),
                ));
            }
            BudgetSpec::Fraction(f) if !(f > 0.0 && f < 1.0) => {
                return Err(ExperimentError::InvalidConfig(format!(
                    "budget fraction must lie in (0, 1), got {f}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn load_dataset(&self, base: &Path) -> Result<DatasetBundle, ExperimentError> {
        self.dataset.load(base)
    }

    /// Parse and validate a full document.
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        from_document(parse_document(text)?)
    }
}

/// Parse config text into a mutable document so overrides can be applied
/// before the typed deserialization.
pub fn parse_document(text: &str) -> Result<toml::Value, ExperimentError> {
    text.parse::<toml::Value>()
        .map_err(|e| ExperimentError::Parse(e.to_string()))
}

/// Deserialize and validate a document. Unknown keys fail here with the
/// offending key named.
pub fn from_document(doc: toml::Value) -> Result<ExperimentConfig, ExperimentError> {
    let cfg: ExperimentConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| ExperimentError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Apply one `dotted.path=value` override to a document. Values parse as
/// TOML scalars where possible and fall back to strings, so
/// `strategy=RAND`, `rounds=3`, and `budget=0.05` all do the expected
/// thing. Intermediate tables are created on demand.
pub fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<(), ExperimentError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ExperimentError::Override {
        path: spec.to_string(),
        message: "expected dotted.path=value".to_string(),
    })?;
    let parts: Vec<&str> = path.split('.').collect();
    if path.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(ExperimentError::Override {
            path: path.to_string(),
            message: "empty path component".to_string(),
        });
    }
    let mut cursor = doc;
    for part in &parts[..parts.len() - 1] {
        let table = cursor.as_table_mut().ok_or_else(|| ExperimentError::Override {
            path: path.to_string(),
            message: format!("`{part}` is not addressable: parent is not a table"),
        })?;
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let leaf = parts[parts.len() - 1];
    let table = cursor.as_table_mut().ok_or_else(|| ExperimentError::Override {
        path: path.to_string(),
        message: "parent is not a table".to_string(),
    })?;
    table.insert(leaf.to_string(), parse_scalar(raw));
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    let attempt: Result<toml::Table, _> = toml::from_str(&format!("v = {raw}"));
    match attempt {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::AttackInit;

    const MINIMAL: &str = r#"
architecture = "mlp:8"
strategy = "JIN"
rounds = 2
budget = 4
labeled_fraction = 0.2
seed = 7

[dataset.synthetic]
name = "two-group-gaussians"
seed = 7
n = 120
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.strategy, Strategy::Jin);
        assert_eq!(cfg.rounds, 2);
        assert_eq!(cfg.budget, BudgetSpec::Absolute(4));
        assert_eq!(cfg.worst_group_mode, WorstGroupMode::Robust);
        assert_eq!(cfg.metric, MetricKind::Accuracy);
        assert_eq!(cfg.adv_train.trades_beta, 6.0);
        assert_eq!(cfg.eval_attack.objective, AttackObjective::CrossEntropy);
        assert_eq!(cfg.adv_train.attack.init, AttackInit::UniformInBall);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let text = format!("{MINIMAL}\nbudgett = 3\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("budgett"), "{err}");

        let nested = format!("{MINIMAL}\n[train]\nepochsz = 3\n");
        let err = ExperimentConfig::from_toml_str(&nested).unwrap_err();
        assert!(err.to_string().contains("epochsz"), "{err}");
    }

    #[test]
    fn fractional_budget_parses() {
        let text = MINIMAL.replace("budget = 4", "budget = 0.02");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.budget, BudgetSpec::Fraction(0.02));
    }

    #[test]
    fn budget_resolution_examples() {
        assert_eq!(resolve_budget(BudgetSpec::Fraction(0.02), 5000).unwrap(), 100);
        assert_eq!(resolve_budget(BudgetSpec::Absolute(7), 5000).unwrap(), 7);
        assert!(resolve_budget(BudgetSpec::Fraction(0.02), 10).is_err());
        assert!(resolve_budget(BudgetSpec::Absolute(0), 10).is_err());
        assert!(resolve_budget(BudgetSpec::Fraction(1.2), 10).is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut doc = parse_document(MINIMAL).unwrap();
        apply_override(&mut doc, "strategy=RAND").unwrap();
        apply_override(&mut doc, "rounds=5").unwrap();
        apply_override(&mut doc, "budget=0.05").unwrap();
        apply_override(&mut doc, "adv_train.trades_beta=2.5").unwrap();
        apply_override(&mut doc, "dataset.synthetic.n=64").unwrap();
        apply_override(&mut doc, "eval_attack.epsilon=8/255").unwrap();
        let cfg = from_document(doc).unwrap();
        assert_eq!(cfg.strategy, Strategy::Rand);
        assert_eq!(cfg.rounds, 5);
        assert_eq!(cfg.budget, BudgetSpec::Fraction(0.05));
        assert_eq!(cfg.adv_train.trades_beta, 2.5);
        match &cfg.dataset {
            DatasetConfig::Synthetic(spec) => assert_eq!(spec.n, 64),
            other => panic!("unexpected dataset {other:?}"),
        }
        assert!((cfg.eval_attack.epsilon - 8.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn override_syntax_errors_are_reported() {
        let mut doc = parse_document(MINIMAL).unwrap();
        assert!(matches!(
            apply_override(&mut doc, "justaword"),
            Err(ExperimentError::Override { .. })
        ));
        assert!(matches!(
            apply_override(&mut doc, "=5"),
            Err(ExperimentError::Override { .. })
        ));
        assert!(matches!(
            apply_override(&mut doc, "a..b=5"),
            Err(ExperimentError::Override { .. })
        ));
        // seed is a scalar; it cannot be descended into.
        assert!(matches!(
            apply_override(&mut doc, "seed.x=1"),
            Err(ExperimentError::Override { .. })
        ));
    }

    #[test]
    fn override_with_unknown_key_still_fails_typed_parse() {
        let mut doc = parse_document(MINIMAL).unwrap();
        apply_override(&mut doc, "not_a_field=1").unwrap();
        let err = from_document(doc).unwrap_err();
        assert!(err.to_string().contains("not_a_field"), "{err}");
    }

    #[test]
    fn validation_catches_semantic_errors() {
        let zero_rounds = MINIMAL.replace("rounds = 2", "rounds = 0");
        assert!(ExperimentConfig::from_toml_str(&zero_rounds).is_err());

        let bad_fraction = MINIMAL.replace("labeled_fraction = 0.2", "labeled_fraction = 1.0");
        assert!(ExperimentConfig::from_toml_str(&bad_fraction).is_err());

        let bad_arch = MINIMAL.replace("mlp:8", "mlp:");
        assert!(ExperimentConfig::from_toml_str(&bad_arch).is_err());

        let bad_eval = format!("{MINIMAL}\n[eval_attack]\nobjective = \"kl-to-benign\"\n");
        let err = ExperimentConfig::from_toml_str(&bad_eval).unwrap_err();
        assert!(err.to_string().contains("cross-entropy"), "{err}");
    }

    #[test]
    fn synthetic_dataset_loads_and_describes_itself() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let bundle = cfg.load_dataset(Path::new(".")).unwrap();
        assert_eq!(bundle.len(), 120);
        assert_eq!(cfg.dataset.describe(), "synthetic:two-group-gaussians:7:120");
    }

    #[test]
    fn tabular_dataset_round_trips_through_config() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("toy.csv");
        let mut rows = String::from("feature_a,feature_b,label,group\n");
        for i in 0..40 {
            let class = i % 2;
            let group = (i / 2) % 2;
            rows.push_str(&format!(
                "{:.2},{:.2},{class},{group}\n",
                0.1 * (i % 7) as f64 + class as f64,
                0.2 * (i % 5) as f64
            ));
        }
        std::fs::write(&csv_path, rows).unwrap();

        let text = r#"
architecture = "linear"
strategy = "RAND"
rounds = 1
budget = 2
labeled_fraction = 0.3
seed = 1

[dataset.tabular]
path = "toy.csv"
"#
        .to_string();
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let bundle = cfg.load_dataset(dir.path()).unwrap();
        assert_eq!(bundle.len(), 40);
        assert_eq!(bundle.feature_dim(), 2);

        let bad_delim = text.replace("path = \"toy.csv\"", "path = \"toy.csv\"\ndelimiter = \"ab\"");
        let cfg = ExperimentConfig::from_toml_str(&bad_delim).unwrap();
        assert!(cfg.load_dataset(dir.path()).is_err());
    }
}
