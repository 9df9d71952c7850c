//! Run configuration: one TOML file with `[data]`, `[model]`, `[train]` and
//! `[output]` tables, overridable with `section.key=value` pairs.
//!
//! ```toml
//! [data]
//! root = "runs/data"        # dataset directory (gen-data writes, train reads)
//! catalog = "7scenes"       # "7scenes", "cambridge", or a catalog file path
//! scenes = 3                # first K scenes of the catalog
//! samples_per_scene = 32
//! height = 64
//! width = 64
//! max_caption_len = 16
//! seed = 0
//!
//! [model]
//! d_model = 64
//! n_heads = 4
//! n_layers = 4              # one of 2, 4, 6, 8
//! patch = 8
//! image_size = 64           # square model input; defaults to the data size
//! seed = 0
//!
//! [train]                   # defaults are the published recipe
//! lr0 = 4.5e-5
//! weight_decay = 4e-5
//! batch_size = 64
//! epochs = 280
//! dropout = 0.5
//! seed = 0
//! eval_every = 0
//! checkpoint_every = 0
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! jitter_brightness = 0.6
//! jitter_contrast = 0.7
//! jitter_saturation = 0.7
//! jitter_hue = 0.5
//! random_crop = true
//!
//! [output]
//! dir = "runs/out"          # defaults to $MVLOC_OUTPUT_ROOT, else ./mvloc-out
//! ```
//!
//! A catalog file holds one scene per line as `name: description`; blank lines
//! and lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mvloc_core::data::{JitterFactors, SceneCatalog, Vocab};
use mvloc_core::model::ModelConfig;
use mvloc_core::training::TrainConfig;

use crate::CliError;

pub const OUTPUT_ROOT_ENV: &str = "MVLOC_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_DIR: &str = "mvloc-out";

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    pub catalog: String,
    pub scenes: Option<usize>,
    pub samples_per_scene: usize,
    pub height: usize,
    pub width: usize,
    pub max_caption_len: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: None,
            catalog: "7scenes".into(),
            scenes: None,
            samples_per_scene: 32,
            height: 64,
            width: 64,
            max_caption_len: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub patch: usize,
    pub image_size: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            patch: 8,
            image_size: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr0: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub jitter_brightness: f64,
    pub jitter_contrast: f64,
    pub jitter_saturation: f64,
    pub jitter_hue: f64,
    pub random_crop: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr0: t.lr0,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            dropout: t.dropout,
            seed: t.seed,
            eval_every: t.eval_every,
            checkpoint_every: t.checkpoint_every,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            jitter_brightness: t.jitter.brightness,
            jitter_contrast: t.jitter.contrast,
            jitter_saturation: t.jitter.saturation,
            jitter_hue: t.jitter.hue,
            random_crop: t.random_crop,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

fn config_err(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Sets `path` (dotted) in `table` to `raw`, read as a TOML value when it
/// parses as one and as a plain string otherwise.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(assignment, "override must look like section.key=value"))?;
    let path = path.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_err(path, "empty key segment"));
    }
    let (last, parents) = keys.split_last().expect("non-empty split");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| config_err(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses `text` after applying `overrides`, then validates every value.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err("<file>", e.message()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err("<file>", e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| config_err("--config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.samples_per_scene == 0 {
            return Err(config_err("data.samples_per_scene", "must be at least 1"));
        }
        if d.height == 0 || d.width == 0 {
            return Err(config_err(if d.height == 0 { "data.height" } else { "data.width" }, "must be positive"));
        }
        if d.max_caption_len == 0 {
            return Err(config_err("data.max_caption_len", "must be at least 1"));
        }
        if d.scenes == Some(0) {
            return Err(config_err("data.scenes", "must be at least 1"));
        }
        if let Some(s) = self.model.image_size {
            if s > d.height.min(d.width) {
                return Err(config_err("model.image_size", format!("{s} exceeds the {}×{} data images", d.height, d.width)));
            }
        }
        let catalog = self.catalog()?;
        let vocab = Vocab::build(&catalog).map_err(|e| config_err("data.catalog", e.to_string()))?;
        self.model_config(catalog.len(), vocab.len())?;
        self.train_config()?;
        Ok(())
    }

    /// The configured catalog, truncated to `data.scenes`.
    pub fn catalog(&self) -> Result<SceneCatalog, CliError> {
        let key = "data.catalog";
        let full = match self.data.catalog.as_str() {
            "7scenes" => SceneCatalog::seven_scenes(),
            "cambridge" => SceneCatalog::cambridge(),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| config_err(key, format!("{path}: {e}")))?;
                parse_catalog(&text).map_err(|e| config_err(key, e))?
            }
        };
        match self.data.scenes {
            None => Ok(full),
            Some(k) => full.take(k).map_err(|e| config_err("data.scenes", e.to_string())),
        }
    }

    pub fn model_config(&self, n_scenes: usize, vocab: usize) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let size = m.image_size.unwrap_or(self.data.height);
        if m.image_size.is_none() && self.data.height != self.data.width {
            return Err(config_err("model.image_size", "required when data images are not square"));
        }
        let config = ModelConfig {
            channels: 3,
            height: size,
            width: size,
            patch: m.patch,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            n_scenes,
            vocab,
            max_caption_len: self.data.max_caption_len,
            dropout: self.train.dropout,
        };
        config.validate().map_err(|e| match e {
            mvloc_core::model::ModelError::InvalidConfig { key, reason } => {
                let section = if matches!(key, "dropout") { "train" } else { "model" };
                config_err(&format!("{section}.{key}"), reason)
            }
            other => config_err("model", other.to_string()),
        })?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let config = TrainConfig {
            lr0: t.lr0,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            dropout: t.dropout,
            seed: t.seed,
            eval_every: t.eval_every,
            checkpoint_every: t.checkpoint_every,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            jitter: JitterFactors {
                brightness: t.jitter_brightness,
                contrast: t.jitter_contrast,
                saturation: t.jitter_saturation,
                hue: t.jitter_hue,
            },
            random_crop: t.random_crop,
        };
        config.validate().map_err(|e| match e {
            mvloc_core::training::TrainError::InvalidConfig { key, reason } => config_err(&format!("train.{key}"), reason),
            other => config_err("train", other.to_string()),
        })?;
        Ok(config)
    }

    /// `data.root`, which must be set.
    pub fn data_root(&self) -> Result<&Path, CliError> {
        self.data.root.as_deref().ok_or_else(|| config_err("data.root", "not set"))
    }

    /// `output.dir`, else `$MVLOC_OUTPUT_ROOT`, else `./mvloc-out`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            return d.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => PathBuf::from(DEFAULT_OUTPUT_DIR),
        }
    }
}

pub fn parse_catalog(text: &str) -> Result<SceneCatalog, String> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, desc) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `name: description`", i + 1))?;
        entries.push((name.trim().to_string(), desc.trim().to_string()));
    }
    SceneCatalog::new(entries).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(r: Result<RunConfig, CliError>) -> String {
        match r {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        let t = c.train_config().unwrap();
        assert_eq!((t.lr0, t.batch_size, t.epochs), (4.5e-5, 64, 280));
        let m = c.model_config(3, 20).unwrap();
        assert_eq!((m.d_model, m.n_layers, m.height), (64, 4, 64));
    }

    #[test]
    fn overrides_win_over_the_file() {
        let c = RunConfig::from_toml(
            "[train]\nlr0 = 1e-3\n",
            &["train.lr0=2e-3".into(), "data.root=/tmp/x".into(), "model.n_layers = 6".into()],
        )
        .unwrap();
        assert_eq!(c.train.lr0, 2e-3);
        assert_eq!(c.data.root.as_deref(), Some(Path::new("/tmp/x")));
        assert_eq!(c.model.n_layers, 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml("[train]\nlearning_rate = 1\n", &[]).unwrap_err();
        assert!(e.to_string().contains("learning_rate"), "{e}");
        assert!(RunConfig::from_toml("[nonsense]\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["train.lr".into()]).is_err());
    }

    #[test]
    fn invalid_values_name_their_key() {
        assert_eq!(key_of(RunConfig::from_toml("[model]\nn_layers = 3\n", &[])), "model.n_layers");
        assert_eq!(key_of(RunConfig::from_toml("[train]\nbatch_size = 0\n", &[])), "train.batch_size");
        assert_eq!(key_of(RunConfig::from_toml("[train]\ndropout = 1.5\n", &[])), "train.dropout");
        assert_eq!(key_of(RunConfig::from_toml("[data]\nsamples_per_scene = 0\n", &[])), "data.samples_per_scene");
        assert_eq!(key_of(RunConfig::from_toml("[data]\nscenes = 9\n", &[])), "data.scenes");
        assert_eq!(key_of(RunConfig::from_toml("[data]\ncatalog = \"/no/such/file\"\n", &[])), "data.catalog");
        assert_eq!(key_of(RunConfig::from_toml("[model]\nimage_size = 128\n", &[])), "model.image_size");
        assert_eq!(key_of(RunConfig::default().data_root().map(|_| RunConfig::default())), "data.root");
    }

    #[test]
    fn every_allowed_depth_validates() {
        for n in [2, 4, 6, 8] {
            RunConfig::from_toml(&format!("[model]\nn_layers = {n}\n"), &[]).unwrap();
        }
    }

    #[test]
    fn catalog_files() {
        let cat = parse_catalog("# scenes\nLab: A bench with a microscope\n\nHall: A long corridor\n").unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.get(1).unwrap().name, "Hall");
        assert!(parse_catalog("no colon here").is_err());
        assert!(parse_catalog("").is_err());
    }
}
