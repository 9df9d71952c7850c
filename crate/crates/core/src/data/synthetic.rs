//! Seeded synthetic scenes.
//!
//! Each scene is a constellation of eight coloured landmarks placed at the
//! vertex directions of a cube, at distance ~3 from the centre of the unit box
//! the camera lives in, and turned by a scene-specific rotation. A sample draws
//! a camera position uniformly in `[0, 1]³` and a uniformly random orientation,
//! then renders the landmarks as Gaussian splats through a wide-angle pinhole.
//!
//! The camera looks along its `+z` axis with `x` to the right and `y` down the
//! image. The horizontal half field of view is 75°; every viewing direction is
//! within 55° of a cube vertex and the camera offset adds at most 17°, so at
//! least one landmark centre always lands in the image.

use super::{augment::hsv_to_rgb, DataError, PoseSample, SceneCatalog, Vocab};
use crate::geometry::{random_unit_quaternion, Pose, Quaternion};
use crate::numerics::{rng::stream, Seed, Tensor};
use rand::Rng as _;

pub const LANDMARKS: usize = 8;
pub const HALF_FOV_DEG: f64 = 75.0;
const BOX_CENTRE: [f64; 3] = [0.5, 0.5, 0.5];
const RADIUS: f64 = 3.0;
/// World-space splat radius.
const LANDMARK_SIZE: f64 = 0.45;
const MIN_SIGMA_PX: f64 = 0.75;
const NEAR: f64 = 0.1;
const BACKGROUND: f64 = 0.02;

/// Image size and caption budget of generated samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub max_caption_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneLayout {
    pub landmarks: [[f64; 3]; LANDMARKS],
    pub colors: [[f64; 3]; LANDMARKS],
}

/// The landmark constellation of scene `scene` under dataset `seed`.
pub fn scene_layout(seed: Seed, scene: usize) -> SceneLayout {
    let mut rng = seed.derive(&[stream::SCENE_LAYOUT, scene as u64]).rng();
    let turn = random_unit_quaternion(&mut rng);
    let s = 1.0 / 3f64.sqrt();
    let landmarks = std::array::from_fn(|m| {
        let dir = [
            if m & 1 == 0 { s } else { -s },
            if m & 2 == 0 { s } else { -s },
            if m & 4 == 0 { s } else { -s },
        ];
        let r = RADIUS * (0.85 + 0.3 * rng.random::<f64>());
        let d = turn.rotate(dir);
        std::array::from_fn(|i| BOX_CENTRE[i] + r * d[i])
    });
    let colors = std::array::from_fn(|m| {
        let hue = ((scene * LANDMARKS + m) as f64 * 0.618_033_988_749_895).fract();
        hsv_to_rgb([hue, 0.85, 1.0])
    });
    SceneLayout { landmarks, colors }
}

pub fn focal_length(width: usize) -> f64 {
    0.5 * width as f64 / HALF_FOV_DEG.to_radians().tan()
}

/// Pixel coordinates `(x, y)` and depth of a world point seen from `pose`, if in front.
pub fn project(pose: &Pose, point: [f64; 3], height: usize, width: usize) -> Option<(f64, f64, f64)> {
    let rel = [point[0] - pose.p[0], point[1] - pose.p[1], point[2] - pose.p[2]];
    let c = pose.q.conjugate().rotate(rel);
    if c[2] <= NEAR {
        return None;
    }
    let f = focal_length(width);
    let x = f * c[0] / c[2] + 0.5 * (width as f64 - 1.0);
    let y = f * c[1] / c[2] + 0.5 * (height as f64 - 1.0);
    Some((x, y, c[2]))
}

/// Renders the scene from `pose` as a `3×H×W` image in `[0, 1]`.
pub fn render(layout: &SceneLayout, pose: &Pose, height: usize, width: usize) -> Tensor {
    let plane = height * width;
    let mut img = vec![BACKGROUND; 3 * plane];
    let f = focal_length(width);
    for (point, color) in layout.landmarks.iter().zip(&layout.colors) {
        let Some((cx, cy, z)) = project(pose, *point, height, width) else { continue };
        let sigma = (f * LANDMARK_SIZE / z).max(MIN_SIGMA_PX);
        let reach = 3.0 * sigma;
        let x0 = (cx - reach).floor().max(0.0) as usize;
        let y0 = (cy - reach).floor().max(0.0) as usize;
        let x1 = (cx + reach).ceil().min(width as f64 - 1.0);
        let y1 = (cy + reach).ceil().min(height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let a = (-d2 * inv).exp();
                for c in 0..3 {
                    img[c * plane + y * width + x] += color[c] * a;
                }
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::new(vec![3, height, width], img).expect("finite render")
}

/// Camera pose of sample `index` of `scene`.
pub fn sample_pose(seed: Seed, scene: usize, index: usize) -> Pose {
    let mut rng = seed.derive(&[stream::DATASET, scene as u64, index as u64]).rng();
    let p = std::array::from_fn(|_| rng.random::<f64>());
    let q: Quaternion = random_unit_quaternion(&mut rng);
    Pose { p, q }
}

/// `samples_per_scene` samples for every scene of `catalog`, scene-major.
pub fn generate_synthetic(
    seed: Seed,
    catalog: &SceneCatalog,
    vocab: &Vocab,
    samples_per_scene: usize,
    config: &SynthConfig,
) -> Result<Vec<PoseSample>, DataError> {
    if samples_per_scene == 0 {
        return Err(DataError::Invalid("samples_per_scene must be at least 1".into()));
    }
    if config.height == 0 || config.width == 0 || config.max_caption_len == 0 {
        return Err(DataError::Invalid("image size and caption budget must be positive".into()));
    }
    let mut out = Vec::with_capacity(catalog.len() * samples_per_scene);
    for scene in catalog.scenes() {
        let layout = scene_layout(seed, scene.index);
        let tokens = vocab.tokenize(&scene.description, config.max_caption_len);
        for i in 0..samples_per_scene {
            let pose = sample_pose(seed, scene.index, i);
            out.push(PoseSample {
                image: render(&layout, &pose, config.height, config.width),
                tokens: tokens.clone(),
                scene: scene.index,
                pose,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SynthConfig {
        SynthConfig {
            height: 32,
            width: 32,
            max_caption_len: 16,
        }
    }

    #[test]
    fn deterministic_and_counted() {
        let cat = SceneCatalog::seven_scenes().take(3).unwrap();
        let vocab = Vocab::build(&cat).unwrap();
        let a = generate_synthetic(Seed(9), &cat, &vocab, 4, &cfg()).unwrap();
        let b = generate_synthetic(Seed(9), &cat, &vocab, 4, &cfg()).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, b);
        let c = generate_synthetic(Seed(10), &cat, &vocab, 4, &cfg()).unwrap();
        assert_ne!(a[0].image, c[0].image);
        assert!(generate_synthetic(Seed(9), &cat, &vocab, 0, &cfg()).is_err());
    }

    #[test]
    fn different_poses_give_different_images() {
        let cat = SceneCatalog::seven_scenes().take(1).unwrap();
        let vocab = Vocab::build(&cat).unwrap();
        let s = generate_synthetic(Seed(3), &cat, &vocab, 2, &cfg()).unwrap();
        assert_ne!(s[0].pose, s[1].pose);
        assert!(s[0].image.max_abs_diff(&s[1].image) > 0.0);
    }

    #[test]
    fn samples_are_valid() {
        let cat = SceneCatalog::cambridge();
        let vocab = Vocab::build(&cat).unwrap();
        for s in generate_synthetic(Seed(4), &cat, &vocab, 8, &cfg()).unwrap() {
            assert!(s.pose.q.is_unit() && s.pose.q.is_canonical());
            assert!(s.pose.p.iter().all(|c| (0.0..1.0).contains(c)));
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(s.tokens, vocab.tokenize(&cat.get(s.scene).unwrap().description, 16));
        }
    }

    #[test]
    fn some_landmark_is_always_in_view() {
        let layout = scene_layout(Seed(5), 0);
        for i in 0..2000 {
            let pose = sample_pose(Seed(5), 0, i);
            let visible = layout.landmarks.iter().filter(|l| {
                project(&pose, **l, 32, 32).is_some_and(|(x, y, _)| (-0.5..31.5).contains(&x) && (-0.5..31.5).contains(&y))
            });
            assert!(visible.count() >= 1, "sample {i}");
        }
    }

    #[test]
    fn landmark_at_optical_axis_lands_at_centre() {
        let pose = Pose { p: [0.0; 3], q: Quaternion::IDENTITY };
        let (x, y, z) = project(&pose, [0.0, 0.0, 2.0], 33, 33).unwrap();
        assert_eq!((x, y, z), (16.0, 16.0, 2.0));
        assert!(project(&pose, [0.0, 0.0, -2.0], 33, 33).is_none());
    }

    #[test]
    fn scenes_have_distinct_colours() {
        let all: Vec<[f64; 3]> = (0..4).flat_map(|k| scene_layout(Seed(1), k).colors).collect();
        for i in 0..all.len() {
            for j in 0..i {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
