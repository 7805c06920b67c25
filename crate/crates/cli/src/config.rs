//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [model]
//! variant = pgraphdta
//!
//! [data]
//! interactions = davis.csv
//! sequences = davis.fasta
//! kind = davis
//!
//! [train]
//! epochs = 100
//! ```
//!
//! Lines starting with `#` or `;` are comments. Relative paths are resolved
//! against the configuration file's directory. Command-line overrides take
//! the form `--section.key value`; the `PGDTA_SEED` environment variable
//! replaces `train.seed` from the file but not an explicit override.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pgdta_core::contact::{DEFAULT_COORD_THRESHOLD, DEFAULT_DISTANCE_THRESHOLD};
use pgdta_core::data::DatasetKind;
use pgdta_core::gnn::{DrugLayerKind, PoolMode};
use pgdta_core::model::{ModelConfig, ModelVariant};
use pgdta_core::train::{AdamConfig, TrainConfig};

use crate::error::CliError;

const MODEL_KEYS: &[&str] = &[
    "variant",
    "gnn",
    "drug_layers",
    "drug_out",
    "cnn_embed",
    "cnn_filters",
    "cnn_kernel",
    "max_len",
    "plm_dim",
    "protein_dim",
    "contact_grid",
    "contact_dim",
    "hidden",
    "dropout",
];
const DATA_KEYS: &[&str] = &[
    "interactions",
    "sequences",
    "kind",
    "sidecar_dir",
    "pseudo_embeddings",
    "embedding_pool",
    "train_fraction",
    "split_seed",
    "eval_subset",
    "cm1_threshold",
    "cm2_threshold",
];
const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "eval_every",
    "early_stop_patience",
    "record_timing",
];
const OUTPUT_KEYS: &[&str] = &["checkpoint", "history"];

fn schema(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "model" => Some(MODEL_KEYS),
        "data" => Some(DATA_KEYS),
        "train" => Some(TRAIN_KEYS),
        "output" => Some(OUTPUT_KEYS),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    origin: String,
}

/// Raw validated key/value pairs, keyed by `section.key`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path, source: &str) -> Result<Self, CliError> {
        let mut cfg = RawConfig {
            entries: BTreeMap::new(),
            base_dir: base_dir.to_path_buf(),
        };
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let origin = format!("{source}:{}", i + 1);
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if schema(&name).is_none() {
                    return Err(CliError::Config(format!("{origin}: unknown section [{name}]")));
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}: expected 'key = value'")))?;
            let sec = section
                .as_deref()
                .ok_or_else(|| CliError::Config(format!("{origin}: key outside of a [section]")))?;
            cfg.set(sec, key.trim(), value.trim(), origin)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    fn set(&mut self, section: &str, key: &str, value: &str, origin: String) -> Result<(), CliError> {
        let keys = schema(section).ok_or_else(|| CliError::Config(format!("{origin}: unknown section [{section}]")))?;
        if !keys.contains(&key) {
            return Err(CliError::Config(format!(
                "{origin}: unknown key '{key}' in [{section}] (allowed: {})",
                keys.join(", ")
            )));
        }
        self.entries.insert(
            format!("{section}.{key}"),
            Entry {
                value: value.to_string(),
                origin,
            },
        );
        Ok(())
    }

    /// Applies `--section.key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let name = flag
                .strip_prefix("--")
                .ok_or_else(|| CliError::Config(format!("unexpected argument '{flag}' (overrides look like --section.key value)")))?;
            let (section, key) = name
                .split_once('.')
                .ok_or_else(|| CliError::Config(format!("override '{flag}' must be --section.key")))?;
            let value = it
                .next()
                .ok_or_else(|| CliError::Config(format!("override '{flag}' is missing its value")))?;
            self.set(section, key, value, format!("override {flag}"))?;
        }
        Ok(())
    }

    /// Uses `seed` for `train.seed` unless an override already set it.
    pub fn apply_env_seed(&mut self, seed: Option<&str>) -> Result<(), CliError> {
        let Some(seed) = seed else { return Ok(()) };
        let explicit = self
            .entries
            .get("train.seed")
            .is_some_and(|e| e.origin.starts_with("override"));
        if !explicit {
            self.set("train", "seed", seed.trim(), "env PGDTA_SEED".into())?;
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|err| CliError::Config(format!("{}: invalid value '{}' for {key}: {err}", e.origin, e.value)))
            })
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn get_bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => match e.value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(CliError::Config(format!("{}: '{}' is not a boolean", e.origin, e.value))),
            },
        }
    }

    fn get_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        self.raw(key)
            .map(|e| {
                e.value
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|err| CliError::Config(format!("{}: invalid list '{}' for {key}: {err}", e.origin, e.value)))
            })
            .transpose()
    }

    fn get_layers(&self, key: &str) -> Result<Option<Vec<(usize, usize)>>, CliError> {
        self.raw(key)
            .map(|e| {
                e.value
                    .split(',')
                    .map(|t| {
                        let (h, w) = t.trim().split_once('x')?;
                        Some((h.trim().parse().ok()?, w.trim().parse().ok()?))
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| {
                        CliError::Config(format!(
                            "{}: invalid layer list '{}' for {key} (expected e.g. 4x32,4x32,1x128)",
                            e.origin, e.value
                        ))
                    })
            })
            .transpose()
    }

    fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|e| {
            let p = PathBuf::from(&e.value);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }

    fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.get_path(key)
            .ok_or_else(|| CliError::Config(format!("missing required key {key}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSubset {
    All,
    Train,
    Test,
}

impl FromStr for EvalSubset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(EvalSubset::All),
            "train" => Ok(EvalSubset::Train),
            "test" => Ok(EvalSubset::Test),
            _ => Err("expected all, train or test".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub interactions: PathBuf,
    pub sequences: PathBuf,
    pub kind: DatasetKind,
    pub sidecar_dir: Option<PathBuf>,
    pub pseudo_embeddings: bool,
    pub embedding_pool: PoolMode,
    pub train_fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub eval_subset: EvalSubset,
    pub cm1_threshold: f64,
    pub cm2_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Whether `model.variant` was given; training requires it.
    pub variant_set: bool,
    /// Whether `model.plm_dim` was given explicitly.
    pub plm_dim_set: bool,
    pub data: DataSection,
    pub train: TrainConfig,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

fn parse_pool(s: &str) -> Result<PoolMode, String> {
    match s {
        "mean" => Ok(PoolMode::Mean),
        "max" => Ok(PoolMode::Max),
        _ => Err("expected mean or max".into()),
    }
}

fn parse_gnn(s: &str) -> Result<DrugLayerKind, String> {
    match s {
        "gat" => Ok(DrugLayerKind::Gat),
        "gcn" => Ok(DrugLayerKind::Gcn),
        _ => Err("expected gat or gcn".into()),
    }
}

struct Wrap<T>(T);

impl FromStr for Wrap<PoolMode> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_pool(s).map(Wrap)
    }
}

impl FromStr for Wrap<DrugLayerKind> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_gnn(s).map(Wrap)
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let variant: Option<ModelVariant> = raw.get("model.variant")?;
        let mut model = ModelConfig::new(variant.unwrap_or(ModelVariant::BaselineCnn));
        if let Some(Wrap(kind)) = raw.get::<Wrap<DrugLayerKind>>("model.gnn")? {
            model.drug.kind = kind;
        }
        if let Some(layers) = raw.get_layers("model.drug_layers")? {
            model.drug.layers = layers;
        }
        model.drug.out_dim = raw.get_or("model.drug_out", model.drug.out_dim)?;
        model.cnn.embed_dim = raw.get_or("model.cnn_embed", model.cnn.embed_dim)?;
        if let Some(f) = raw.get_list("model.cnn_filters")? {
            model.cnn.filters = f;
        }
        model.cnn.kernel = raw.get_or("model.cnn_kernel", model.cnn.kernel)?;
        model.max_len = raw.get_or("model.max_len", model.max_len)?;
        let plm_dim: Option<usize> = raw.get("model.plm_dim")?;
        model.plm_dim = plm_dim.unwrap_or(model.plm_dim);
        model.protein_dim = raw.get_or("model.protein_dim", model.protein_dim)?;
        model.cnn.out_dim = model.protein_dim;
        model.contact_grid = raw.get_or("model.contact_grid", model.contact_grid)?;
        model.contact_dim = raw.get_or("model.contact_dim", model.contact_dim)?;
        if let Some(h) = raw.get_list("model.hidden")? {
            model.hidden = h;
        }
        model.dropout = raw.get_or("model.dropout", model.dropout)?;
        validate_model(&model)?;

        let data = DataSection {
            interactions: raw.require_path("data.interactions")?,
            sequences: raw.require_path("data.sequences")?,
            kind: raw.get_or("data.kind", DatasetKind::Generic)?,
            sidecar_dir: raw.get_path("data.sidecar_dir"),
            pseudo_embeddings: raw.get_bool("data.pseudo_embeddings", false)?,
            embedding_pool: raw.get::<Wrap<PoolMode>>("data.embedding_pool")?.map_or(PoolMode::Mean, |w| w.0),
            train_fraction: raw.get("data.train_fraction")?,
            split_seed: raw.get("data.split_seed")?,
            eval_subset: raw.get_or("data.eval_subset", EvalSubset::All)?,
            cm1_threshold: raw.get_or("data.cm1_threshold", DEFAULT_DISTANCE_THRESHOLD)?,
            cm2_threshold: raw.get_or("data.cm2_threshold", DEFAULT_COORD_THRESHOLD)?,
        };
        if let Some(f) = data.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(format!("data.train_fraction {f} must lie in (0, 1)")));
            }
        }
        if data.eval_subset != EvalSubset::All && data.train_fraction.is_none() {
            return Err(CliError::Config("data.eval_subset needs data.train_fraction".into()));
        }

        let d = TrainConfig::default();
        let train = TrainConfig {
            epochs: raw.get_or("train.epochs", d.epochs)?,
            batch_size: raw.get_or("train.batch_size", d.batch_size)?,
            adam: AdamConfig {
                learning_rate: raw.get_or("train.learning_rate", d.adam.learning_rate)?,
                beta1: raw.get_or("train.adam_beta1", d.adam.beta1)?,
                beta2: raw.get_or("train.adam_beta2", d.adam.beta2)?,
                eps: raw.get_or("train.adam_eps", d.adam.eps)?,
            },
            seed: raw.get_or("train.seed", d.seed)?,
            eval_every: raw.get_or("train.eval_every", d.eval_every)?,
            early_stop_patience: raw.get("train.early_stop_patience")?,
            record_timing: raw.get_bool("train.record_timing", d.record_timing)?,
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;

        Ok(RunConfig {
            model,
            variant_set: variant.is_some(),
            plm_dim_set: plm_dim.is_some(),
            data,
            train,
            checkpoint: raw.get_path("output.checkpoint"),
            history: raw.get_path("output.history"),
        })
    }

    /// Checks that every configured input path exists.
    pub fn check_paths(&self) -> Result<(), CliError> {
        for (key, p) in [("data.interactions", &self.data.interactions), ("data.sequences", &self.data.sequences)] {
            if !p.is_file() {
                return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
            }
        }
        if let Some(dir) = &self.data.sidecar_dir {
            if !dir.is_dir() {
                return Err(CliError::Config(format!("data.sidecar_dir: {} is not a directory", dir.display())));
            }
        }
        for (key, p) in [("output.checkpoint", &self.checkpoint), ("output.history", &self.history)] {
            if let Some(parent) = p.as_ref().and_then(|p| p.parent()) {
                if !parent.as_os_str().is_empty() && !parent.is_dir() {
                    return Err(CliError::Config(format!("{key}: directory {} does not exist", parent.display())));
                }
            }
        }
        Ok(())
    }
}

fn validate_model(m: &ModelConfig) -> Result<(), CliError> {
    let bad = |msg: &str| Err(CliError::Config(format!("model: {msg}")));
    if m.drug.layers.is_empty() || m.drug.layers.iter().any(|&(h, w)| h == 0 || w == 0) {
        return bad("drug_layers must be non-empty with positive heads and widths");
    }
    let dims = [m.drug.out_dim, m.cnn.embed_dim, m.cnn.kernel, m.max_len, m.plm_dim, m.protein_dim, m.contact_grid, m.contact_dim];
    if dims.contains(&0) || m.cnn.filters.is_empty() || m.cnn.filters.contains(&0) || m.hidden.contains(&0) {
        return bad("all widths and sizes must be positive");
    }
    if m.max_len < m.cnn.filters.len() * (m.cnn.kernel - 1) + 1 {
        return bad("max_len is shorter than the convolution stack's receptive field");
    }
    if !(0.0..1.0).contains(&m.dropout) {
        return bad("dropout must lie in [0, 1)");
    }
    Ok(())
}
