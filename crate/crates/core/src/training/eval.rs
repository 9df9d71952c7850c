use super::run::fit_image;
use super::TrainError;
use crate::data::{CropMode, PoseSample, SceneCatalog};
use crate::geometry::{canonicalize_hemisphere, median, normalize, position_error_m, rotation_error_deg, Pose};
use crate::model::{Mode, Model, ModelInput};
use crate::numerics::Seed;

const EVAL_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub scene: usize,
    pub pose: Pose,
}

/// Anything that maps samples to a predicted scene and pose.
pub trait PosePredictor {
    fn predict(&self, samples: &[PoseSample]) -> Result<Vec<Prediction>, TrainError>;
}

/// Evaluation-mode network: no dropout, centre crop, pose from the most probable scene's head.
impl PosePredictor for Model {
    fn predict(&self, samples: &[PoseSample]) -> Result<Vec<Prediction>, TrainError> {
        let mut out = Vec::with_capacity(samples.len());
        // Centre crops draw nothing from the generator.
        let mut rng = Seed(0).rng();
        for chunk in samples.chunks(EVAL_CHUNK) {
            let images = chunk
                .iter()
                .map(|s| fit_image(&s.image, &self.config, CropMode::Center, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let inputs: Vec<ModelInput> = chunk
                .iter()
                .zip(&images)
                .map(|(s, image)| ModelInput {
                    image,
                    tokens: &s.tokens,
                    scene: None,
                })
                .collect();
            for o in self.forward(&inputs, Mode::Eval, Seed(0))? {
                let raw = o.pose();
                out.push(Prediction {
                    scene: o.predicted_scene(),
                    pose: Pose {
                        p: raw.p,
                        q: canonicalize_hemisphere(normalize(raw.q_raw).q),
                    },
                });
            }
        }
        Ok(out)
    }
}

/// Test stub predicting the ground truth of every sample.
pub struct GroundTruthEcho;

impl PosePredictor for GroundTruthEcho {
    fn predict(&self, samples: &[PoseSample]) -> Result<Vec<Prediction>, TrainError> {
        Ok(samples.iter().map(|s| Prediction { scene: s.scene, pose: s.pose }).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMetrics {
    pub index: usize,
    pub name: String,
    pub samples: usize,
    pub median_position_m: f64,
    pub median_rotation_deg: f64,
    pub accuracy: f64,
}

/// Per-scene medians and their plain averages over the scenes present.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub scenes: Vec<SceneMetrics>,
    pub mean_position_m: f64,
    pub mean_rotation_deg: f64,
    /// Fraction of all samples whose most probable scene is the true one.
    pub accuracy: f64,
}

pub fn evaluate(predictor: &dyn PosePredictor, samples: &[PoseSample], catalog: &SceneCatalog) -> Result<MetricsReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (index, s) in samples.iter().enumerate() {
        if s.scene >= catalog.len() {
            return Err(TrainError::UnknownScene {
                index,
                scene: s.scene,
                scenes: catalog.len(),
            });
        }
    }
    let preds = predictor.predict(samples)?;
    if preds.len() != samples.len() {
        return Err(TrainError::Predictor(format!("{} predictions for {} samples", preds.len(), samples.len())));
    }
    let k = catalog.len();
    let mut pos = vec![Vec::new(); k];
    let mut rot = vec![Vec::new(); k];
    let mut hits = vec![0usize; k];
    for (s, p) in samples.iter().zip(&preds) {
        pos[s.scene].push(position_error_m(p.pose.p, s.pose.p));
        rot[s.scene].push(rotation_error_deg(p.pose.q, s.pose.q));
        hits[s.scene] += usize::from(p.scene == s.scene);
    }
    let mut scenes = Vec::new();
    for scene in catalog.scenes() {
        let n = pos[scene.index].len();
        if n == 0 {
            continue;
        }
        scenes.push(SceneMetrics {
            index: scene.index,
            name: scene.name.clone(),
            samples: n,
            median_position_m: median(&pos[scene.index]).expect("nonempty"),
            median_rotation_deg: median(&rot[scene.index]).expect("nonempty"),
            accuracy: hits[scene.index] as f64 / n as f64,
        });
    }
    let m = scenes.len() as f64;
    Ok(MetricsReport {
        mean_position_m: scenes.iter().map(|s| s.median_position_m).sum::<f64>() / m,
        mean_rotation_deg: scenes.iter().map(|s| s.median_rotation_deg).sum::<f64>() / m,
        accuracy: hits.iter().sum::<usize>() as f64 / samples.len() as f64,
        scenes,
    })
}
