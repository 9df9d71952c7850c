use rand::seq::SliceRandom;

use super::eval::{evaluate, MetricsReport};
use super::optim::{adamw_step, cosine_lr, OptimizerState};
use super::{TrainConfig, TrainError};
use crate::data::{color_jitter, crop, CropMode, JitterFactors, PoseSample, SceneCatalog};
use crate::loss::{batch_loss, LossError, PoseTarget};
use crate::model::{Mode, Model, ModelConfig, ModelError, ModelInput};
use crate::numerics::{rng::stream, NumericsError, Rng, Seed, Tensor};

/// First line of a loss log.
pub const LOG_HEADER: &str = "# step lr loss cls alpha beta";

/// One optimizer step. `alpha` and `beta` are the values the loss was computed with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub cls: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl StepRecord {
    /// Space-separated, floats in shortest round-trip exponent form.
    pub fn log_line(&self) -> String {
        format!(
            "{} {:e} {:e} {:e} {:e} {:e}",
            self.step, self.lr, self.loss, self.cls, self.alpha, self.beta
        )
    }
}

/// Callbacks for logging, checkpointing and periodic evaluation.
pub trait TrainHooks {
    fn on_step(&mut self, _record: &StepRecord) -> Result<(), TrainError> {
        Ok(())
    }

    /// `steps` updates have been applied to `model`.
    fn on_checkpoint(&mut self, _steps: usize, _model: &Model) -> Result<(), TrainError> {
        Ok(())
    }

    fn on_eval(&mut self, _steps: usize, _report: &MetricsReport) -> Result<(), TrainError> {
        Ok(())
    }
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub records: Vec<StepRecord>,
    pub optimizer: OptimizerState,
}

/// `epochs · ⌈samples / batch⌉`; the last partial batch of an epoch is kept.
pub fn total_steps(samples: usize, config: &TrainConfig) -> usize {
    config.epochs * samples.div_ceil(config.batch_size)
}

/// Brings a dataset image to the model's input size; images already at that
/// size pass through, larger square inputs are cropped.
pub fn fit_image(image: &Tensor, config: &ModelConfig, mode: CropMode, rng: &mut Rng) -> Result<Tensor, TrainError> {
    let want = [config.channels, config.height, config.width];
    if image.shape() == want {
        return Ok(image.clone());
    }
    if config.height != config.width || image.shape().len() != 3 || image.shape()[0] != config.channels {
        return Err(ModelError::Shape {
            what: "image",
            expected: want.to_vec(),
            got: image.shape().to_vec(),
        }
        .into());
    }
    Ok(crop(image, config.height, mode, rng)?)
}

fn non_finite(e: &TrainError) -> bool {
    fn model(e: &ModelError) -> bool {
        match e {
            ModelError::Numerics(NumericsError::NonFinite { .. }) => true,
            ModelError::Sample { source, .. } => model(source),
            _ => false,
        }
    }
    match e {
        TrainError::Model(m) => model(m),
        TrainError::Loss(LossError::Model(m)) => model(m),
        TrainError::Loss(LossError::Numerics(NumericsError::NonFinite { .. })) => true,
        _ => false,
    }
}

/// Minibatch AdamW over `samples` with a cosine schedule.
///
/// Epoch `e` visits the samples in the order of a shuffle drawn from
/// `seed.derive([SHUFFLE, e])`; sample `i` in epoch `e` is augmented with
/// `seed.derive([AUGMENT, e, i])`; step `s` draws dropout from
/// `seed.derive([DROPOUT, s])`. Pose heads are routed by the ground-truth scene.
/// A non-finite loss, gradient or parameter aborts with [`TrainError::Divergence`].
pub fn train(
    mut model: Model,
    config: &TrainConfig,
    samples: &[PoseSample],
    catalog: &SceneCatalog,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let scenes = model.config.n_scenes.min(catalog.len());
    for (index, s) in samples.iter().enumerate() {
        if s.scene >= scenes {
            return Err(TrainError::UnknownScene { index, scene: s.scene, scenes });
        }
    }
    model.config.dropout = config.dropout;
    let seed = Seed(config.seed);
    let total = total_steps(samples.len(), config);
    let opt = config.optimizer();
    let mut state = OptimizerState::new(&model.params);
    let mut records = Vec::with_capacity(total);
    let crop_mode = if config.random_crop { CropMode::Random } else { CropMode::Center };
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut seed.derive(&[stream::SHUFFLE, epoch as u64]).rng());
        for chunk in order.chunks(config.batch_size) {
            let lr = cosine_lr(step, total, config.lr0)?;
            let mut images = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let mut rng = seed.derive(&[stream::AUGMENT, epoch as u64, i as u64]).rng();
                let mut img = fit_image(&samples[i].image, &model.config, crop_mode, &mut rng)?;
                if config.jitter != JitterFactors::NONE {
                    img = color_jitter(&img, &config.jitter, &mut rng)?;
                }
                images.push(img);
            }
            let inputs: Vec<ModelInput> = chunk
                .iter()
                .zip(&images)
                .map(|(&i, image)| ModelInput {
                    image,
                    tokens: &samples[i].tokens,
                    scene: Some(samples[i].scene),
                })
                .collect();
            let targets: Vec<PoseTarget> = chunk.iter().map(|&i| PoseTarget::new(samples[i].pose, samples[i].scene)).collect();
            let (record, grads) = {
                let guard = |e: TrainError| {
                    if non_finite(&e) {
                        TrainError::Divergence { step, detail: e.to_string() }
                    } else {
                        e
                    }
                };
                let mut session = model.session();
                let graphs = session
                    .forward_batch(&inputs, Mode::Train, seed.derive(&[stream::DROPOUT, step as u64]))
                    .map_err(|e| guard(e.into()))?;
                let terms = batch_loss(&mut session, &graphs, &targets).map_err(|e| guard(e.into()))?;
                let value = |v| session.tape.value(v).data()[0];
                let record = StepRecord {
                    step,
                    lr,
                    loss: value(terms.total),
                    cls: value(terms.cls),
                    alpha: model.alpha(),
                    beta: model.beta(),
                };
                if !record.loss.is_finite() {
                    return Err(TrainError::Divergence { step, detail: format!("loss {}", record.loss) });
                }
                let grads = session
                    .tape
                    .backward(terms.total)
                    .map_err(|e| TrainError::Divergence { step, detail: e.to_string() })?;
                (record, grads)
            };
            adamw_step(&mut model.params, &grads, &mut state, lr, &opt)?;
            if let Some((_, name, _)) = model.params.iter().find(|(_, _, t)| !t.is_finite()) {
                return Err(TrainError::Divergence {
                    step,
                    detail: format!("parameter `{name}` became non-finite"),
                });
            }
            hooks.on_step(&record)?;
            records.push(record);
            step += 1;
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
                hooks.on_checkpoint(step, &model)?;
            }
            if config.eval_every > 0 && step % config.eval_every == 0 {
                let report = evaluate(&model, samples, catalog)?;
                hooks.on_eval(step, &report)?;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        optimizer: state,
    })
}
