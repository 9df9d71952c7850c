use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mvloc_core::data::{dataset_digest, generate_synthetic, read_dataset, write_dataset, CropMode, Dataset, DatasetInfo, SynthConfig, Vocab};
use mvloc_core::model::{checkpoint, Mode, Model, ModelInput};
use mvloc_core::numerics::Seed;
use mvloc_core::training::{evaluate, fit_image, train, MetricsReport, StepRecord, TrainError, TrainHooks, LOG_HEADER};

use crate::attention::attention_maps;
use crate::config::RunConfig;
use crate::fixtures::{self, FixtureTable};
use crate::report::{self, Comparison};
use crate::CliError;

pub const LOSS_LOG_FILE: &str = "loss.log";
pub const EVAL_LOG_FILE: &str = "eval.log";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "report.txt";

fn runtime(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenDataSummary {
    pub root: PathBuf,
    pub scenes: usize,
    pub samples: usize,
    pub digest: String,
}

/// Renders the configured synthetic dataset to `data.root`; `seed` overrides `data.seed`.
pub fn cmd_gen_data(config: &RunConfig, seed: Option<u64>) -> Result<GenDataSummary, CliError> {
    let root = config.data_root()?;
    let catalog = config.catalog()?;
    let vocab = Vocab::build(&catalog).map_err(|e| runtime("vocabulary", e))?;
    let d = &config.data;
    let seed = seed.unwrap_or(d.seed);
    let synth = SynthConfig {
        height: d.height,
        width: d.width,
        max_caption_len: d.max_caption_len,
    };
    let samples = generate_synthetic(Seed(seed), &catalog, &vocab, d.samples_per_scene, &synth).map_err(|e| runtime("generate", e))?;
    let info = DatasetInfo {
        seed,
        channels: 3,
        height: d.height,
        width: d.width,
        max_caption_len: d.max_caption_len,
        samples_per_scene: d.samples_per_scene,
    };
    write_dataset(root, &info, &catalog, &samples).map_err(|e| runtime("write dataset", e))?;
    Ok(GenDataSummary {
        root: root.to_path_buf(),
        scenes: catalog.len(),
        samples: samples.len(),
        digest: dataset_digest(root).map_err(|e| runtime("digest", e))?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub output: PathBuf,
    pub checkpoint: PathBuf,
    pub steps: usize,
    pub final_loss: f64,
    pub alpha: f64,
    pub beta: f64,
}

struct RunHooks {
    dir: PathBuf,
    loss: BufWriter<File>,
    eval: Option<BufWriter<File>>,
}

fn hook_err(e: std::io::Error) -> TrainError {
    TrainError::Hook(e.to_string())
}

impl TrainHooks for RunHooks {
    fn on_step(&mut self, record: &StepRecord) -> Result<(), TrainError> {
        writeln!(self.loss, "{}", record.log_line()).map_err(hook_err)
    }

    fn on_checkpoint(&mut self, steps: usize, model: &Model) -> Result<(), TrainError> {
        let path = self.dir.join("checkpoints").join(format!("step-{steps:06}.ckpt"));
        checkpoint::save(model, &path).map_err(hook_err)
    }

    fn on_eval(&mut self, steps: usize, r: &MetricsReport) -> Result<(), TrainError> {
        let eval = match &mut self.eval {
            Some(e) => e,
            None => {
                let mut w = BufWriter::new(File::create(self.dir.join(EVAL_LOG_FILE)).map_err(hook_err)?);
                writeln!(w, "# steps position_m rotation_deg accuracy").map_err(hook_err)?;
                self.eval.insert(w)
            }
        };
        writeln!(eval, "{steps} {:e} {:e} {:e}", r.mean_position_m, r.mean_rotation_deg, r.accuracy).map_err(hook_err)?;
        eval.flush().map_err(hook_err)
    }
}

fn load_dataset(root: &Path, key: &str) -> Result<Dataset, CliError> {
    if !root.join("dataset.txt").is_file() {
        return Err(CliError::Config {
            key: key.to_string(),
            reason: format!("no dataset at {}", root.display()),
        });
    }
    read_dataset(root).map_err(|e| runtime(root.display(), e))
}

/// Trains on the dataset at `data.root`. The output directory receives
/// `loss.log`, `eval.log` when evaluation is enabled, `checkpoints/step-NNNNNN.ckpt`
/// every `train.checkpoint_every` steps, and the final `model.ckpt`.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary, CliError> {
    let dataset = load_dataset(config.data_root()?, "data.root")?;
    let catalog = config.catalog()?;
    if dataset.catalog != catalog {
        return Err(CliError::Config {
            key: "data.catalog".into(),
            reason: format!(
                "dataset holds {} scenes that differ from the configured {} scenes",
                dataset.catalog.len(),
                catalog.len()
            ),
        });
    }
    let model_config = config.model_config(catalog.len(), dataset.vocab.len())?;
    if model_config.height > dataset.info.height.min(dataset.info.width) {
        return Err(CliError::Config {
            key: "model.image_size".into(),
            reason: format!("{} exceeds the {}×{} dataset images", model_config.height, dataset.info.height, dataset.info.width),
        });
    }
    let train_config = config.train_config()?;
    let model = Model::new(model_config, Seed(config.model.seed)).map_err(|e| runtime("model", e))?;

    let dir = config.output_dir();
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| runtime(dir.display(), e))?;
    let log_path = dir.join(LOSS_LOG_FILE);
    let mut loss = BufWriter::new(File::create(&log_path).map_err(|e| runtime(log_path.display(), e))?);
    writeln!(loss, "{LOG_HEADER}").map_err(|e| runtime(log_path.display(), e))?;
    let mut hooks = RunHooks {
        dir: dir.clone(),
        loss,
        eval: None,
    };
    let result = train(model, &train_config, &dataset.samples, &catalog, &mut hooks);
    hooks.loss.flush().map_err(|e| runtime(log_path.display(), e))?;
    let outcome = result.map_err(|e| match e {
        TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
        other => runtime("training", other),
    })?;
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    checkpoint::save(&outcome.model, &checkpoint_path).map_err(|e| runtime(checkpoint_path.display(), e))?;
    let last = outcome.records.last().expect("at least one step");
    Ok(TrainSummary {
        output: dir,
        checkpoint: checkpoint_path,
        steps: outcome.records.len(),
        final_loss: last.loss,
        alpha: outcome.model.alpha(),
        beta: outcome.model.beta(),
    })
}

fn load_model(path: &Path, dataset: &Dataset) -> Result<Model, CliError> {
    let model = checkpoint::load(path).map_err(|e| runtime(path.display(), e))?;
    if model.config.n_scenes != dataset.catalog.len() || model.config.vocab != dataset.vocab.len() {
        return Err(CliError::Runtime(format!(
            "checkpoint expects {} scenes and {} tokens, dataset has {} and {}",
            model.config.n_scenes,
            model.config.vocab,
            dataset.catalog.len(),
            dataset.vocab.len()
        )));
    }
    Ok(model)
}

/// Evaluates `checkpoint` on the dataset at `data`, writing the report to `out`
/// and the formatted table to `out` with a `.table` extension.
pub fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path) -> Result<MetricsReport, CliError> {
    let dataset = load_dataset(data, "--data")?;
    let model = load_model(checkpoint, &dataset)?;
    let r = evaluate(&model, &dataset.samples, &dataset.catalog).map_err(|e| runtime("evaluate", e))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(parent.display(), e))?;
    }
    fs::write(out, report::format_report(&r)).map_err(|e| runtime(out.display(), e))?;
    let table = out.with_extension("table");
    fs::write(&table, report::format_table(&r)).map_err(|e| runtime(table.display(), e))?;
    Ok(r)
}

/// Compares a report with the `method` row of the named fixture table.
pub fn cmd_compare(report_path: &Path, fixture: &str, method: &str) -> Result<(Comparison, String), CliError> {
    let table: &'static FixtureTable = fixtures::table(fixture).ok_or_else(|| CliError::Config {
        key: "--fixture".into(),
        reason: format!("unknown fixture `{fixture}`; expected 7scenes or cambridge"),
    })?;
    let row = table.method(method).ok_or_else(|| CliError::Config {
        key: "--method".into(),
        reason: format!("`{method}` is not in the {} table", table.dataset),
    })?;
    let text = fs::read_to_string(report_path).map_err(|e| runtime(report_path.display(), e))?;
    let r = report::parse_report(&text)?;
    let c = report::compare(&r, table, row)?;
    let formatted = report::format_comparison(&c);
    Ok((c, formatted))
}

/// Writes one PGM per decoder layer and multi-head attention head for sample
/// `index` of the dataset at `data`, returning the paths written.
pub fn cmd_export_attention(checkpoint: &Path, data: &Path, index: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let dataset = load_dataset(data, "--data")?;
    let sample = dataset.samples.get(index).ok_or_else(|| CliError::Config {
        key: "--sample".into(),
        reason: format!("index {index} outside the {} samples", dataset.samples.len()),
    })?;
    let model = load_model(checkpoint, &dataset)?;
    let image = fit_image(&sample.image, &model.config, CropMode::Center, &mut Seed(0).rng()).map_err(|e| runtime("image", e))?;
    let input = ModelInput {
        image: &image,
        tokens: &sample.tokens,
        scene: None,
    };
    let output = model
        .forward(&[input], Mode::Eval, Seed(0))
        .map_err(|e| runtime("forward", e))?
        .pop()
        .expect("one output per input");
    let (gh, gw) = model.config.grid();
    fs::create_dir_all(out).map_err(|e| runtime(out.display(), e))?;
    let mut written = Vec::new();
    for (name, bytes) in attention_maps(&output.attention, model.config.num_visual_tokens(), gh, gw) {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| runtime(path.display(), e))?;
        written.push(path);
    }
    Ok(written)
}
