use rand::Rng as _;

use super::DataError;
use crate::numerics::{Rng, Tensor};

/// Jitter strengths. Scales are drawn from `[max(0, 1 − f), 1 + f]`, the hue
/// shift from `[−h, h]` as a fraction of the hue wheel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterFactors {
    pub const NONE: Self = Self {
        brightness: 0.0,
        contrast: 0.0,
        saturation: 0.0,
        hue: 0.0,
    };
}

impl Default for JitterFactors {
    fn default() -> Self {
        Self {
            brightness: 0.6,
            contrast: 0.7,
            saturation: 0.7,
            hue: 0.5,
        }
    }
}

fn rgb_dims(image: &Tensor) -> Result<(usize, usize), DataError> {
    match image.shape() {
        [3, h, w] => Ok((*h, *w)),
        s => Err(DataError::Image(format!("expected 3×H×W, got {s:?}"))),
    }
}

fn draw_scale(rng: &mut Rng, f: f64) -> f64 {
    let lo = (1.0 - f).max(0.0);
    lo + (1.0 + f - lo) * rng.random::<f64>()
}

fn map_pixels(image: &Tensor, f: impl Fn([f64; 3]) -> [f64; 3]) -> Tensor {
    let plane = image.len() / 3;
    let d = image.data();
    let mut out = vec![0.0; d.len()];
    for i in 0..plane {
        let px = f([d[i], d[plane + i], d[2 * plane + i]]);
        for c in 0..3 {
            out[c * plane + i] = px[c].clamp(0.0, 1.0);
        }
    }
    Tensor::new(image.shape().to_vec(), out).expect("clamped pixels are finite")
}

fn luminance([r, g, b]: [f64; 3]) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn adjust_brightness(image: &Tensor, scale: f64) -> Result<Tensor, DataError> {
    rgb_dims(image)?;
    Ok(map_pixels(image, |p| p.map(|c| c * scale)))
}

/// Blends every pixel with the mean luminance of the image.
pub fn adjust_contrast(image: &Tensor, scale: f64) -> Result<Tensor, DataError> {
    rgb_dims(image)?;
    let plane = image.len() / 3;
    let d = image.data();
    let mean = (0..plane).map(|i| luminance([d[i], d[plane + i], d[2 * plane + i]])).sum::<f64>() / plane as f64;
    Ok(map_pixels(image, |p| p.map(|c| mean + scale * (c - mean))))
}

/// Scales HSV saturation.
pub fn adjust_saturation(image: &Tensor, scale: f64) -> Result<Tensor, DataError> {
    rgb_dims(image)?;
    Ok(map_pixels(image, |p| {
        let [h, s, v] = rgb_to_hsv(p);
        hsv_to_rgb([h, (s * scale).clamp(0.0, 1.0), v])
    }))
}

/// Rotates HSV hue by `shift` turns.
pub fn adjust_hue(image: &Tensor, shift: f64) -> Result<Tensor, DataError> {
    rgb_dims(image)?;
    Ok(map_pixels(image, |p| {
        let [h, s, v] = rgb_to_hsv(p);
        hsv_to_rgb([(h + shift).rem_euclid(1.0), s, v])
    }))
}

/// Brightness, contrast, saturation, then hue, each with a freshly drawn
/// strength; values stay in `[0, 1]`. Unit scales and zero shifts are skipped
/// so a zero-factor jitter returns the input bitwise.
pub fn color_jitter(image: &Tensor, factors: &JitterFactors, rng: &mut Rng) -> Result<Tensor, DataError> {
    rgb_dims(image)?;
    let b = draw_scale(rng, factors.brightness);
    let c = draw_scale(rng, factors.contrast);
    let s = draw_scale(rng, factors.saturation);
    let h = factors.hue * (2.0 * rng.random::<f64>() - 1.0);
    let mut out = image.clone();
    if b != 1.0 {
        out = adjust_brightness(&out, b)?;
    }
    if c != 1.0 {
        out = adjust_contrast(&out, c)?;
    }
    if s != 1.0 {
        out = adjust_saturation(&out, s)?;
    }
    if h != 0.0 {
        out = adjust_hue(&out, h)?;
    }
    Ok(out)
}

/// Hue in turns `[0, 1)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CropMode {
    Center,
    Random,
}

/// Offsets `(top, left)` of an `out × out` window.
pub fn crop_offsets(h: usize, w: usize, out: usize, mode: CropMode, rng: &mut Rng) -> Result<(usize, usize), DataError> {
    if h < out || w < out || out == 0 {
        return Err(DataError::Image(format!("cannot crop {out}×{out} from {h}×{w}")));
    }
    Ok(match mode {
        CropMode::Center => ((h - out) / 2, (w - out) / 2),
        CropMode::Random => (rng.random_range(0..=h - out), rng.random_range(0..=w - out)),
    })
}

pub fn crop(image: &Tensor, out: usize, mode: CropMode, rng: &mut Rng) -> Result<Tensor, DataError> {
    let [c, h, w] = image.shape() else {
        return Err(DataError::Image(format!("expected C×H×W, got {:?}", image.shape())));
    };
    let (c, h, w) = (*c, *h, *w);
    let (top, left) = crop_offsets(h, w, out, mode, rng)?;
    if (h, w) == (out, out) {
        return Ok(image.clone());
    }
    let d = image.data();
    let mut data = Vec::with_capacity(c * out * out);
    for ch in 0..c {
        for y in top..top + out {
            let start = ch * h * w + y * w + left;
            data.extend_from_slice(&d[start..start + out]);
        }
    }
    Ok(Tensor::new(vec![c, out, out], data).expect("finite pixels"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Seed;
    use proptest::prelude::*;

    fn random_image(seed: u64, h: usize, w: usize) -> Tensor {
        let mut rng = Seed(seed).rng();
        Tensor::new(vec![3, h, w], (0..3 * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn solid(rgb: [f64; 3]) -> Tensor {
        Tensor::new(vec![3, 1, 2], vec![rgb[0], rgb[0], rgb[1], rgb[1], rgb[2], rgb[2]]).unwrap()
    }

    #[test]
    fn zero_factors_are_identity() {
        let img = random_image(1, 5, 7);
        let out = color_jitter(&img, &JitterFactors::NONE, &mut Seed(2).rng()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn red_shifted_by_a_third_is_green() {
        let out = adjust_hue(&solid([1.0, 0.0, 0.0]), 1.0 / 3.0).unwrap();
        for (a, b) in out.data().iter().zip(solid([0.0, 1.0, 0.0]).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hsv_round_trip() {
        let mut rng = Seed(3).rng();
        for _ in 0..1000 {
            let p: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
            let back = hsv_to_rgb(rgb_to_hsv(p));
            for (a, b) in back.iter().zip(p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let img = random_image(4, 6, 6);
        let f = JitterFactors::default();
        let a = color_jitter(&img, &f, &mut Seed(5).rng()).unwrap();
        let b = color_jitter(&img, &f, &mut Seed(5).rng()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, img);
    }

    #[test]
    fn jitter_rejects_non_rgb() {
        let img = Tensor::zeros(&[1, 4, 4]);
        assert!(color_jitter(&img, &JitterFactors::default(), &mut Seed(0).rng()).is_err());
    }

    #[test]
    fn crop_examples() {
        let mut rng = Seed(6).rng();
        assert_eq!(crop_offsets(256, 256, 224, CropMode::Center, &mut rng).unwrap(), (16, 16));
        let img = random_image(7, 8, 8);
        assert_eq!(crop(&img, 8, CropMode::Random, &mut rng).unwrap(), img);
        assert_eq!(crop(&img, 8, CropMode::Center, &mut rng).unwrap(), img);
        let a = crop(&img, 5, CropMode::Random, &mut Seed(8).rng()).unwrap();
        let b = crop(&img, 5, CropMode::Random, &mut Seed(8).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[3, 5, 5]);
        assert!(crop(&img, 9, CropMode::Center, &mut rng).is_err());
    }

    #[test]
    fn center_crop_picks_the_middle() {
        let img = Tensor::new(vec![1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let c = crop(&img, 2, CropMode::Center, &mut Seed(0).rng()).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
    }

    proptest! {
        #[test]
        fn jitter_keeps_shape_and_range(seed in 0u64..500) {
            let img = random_image(seed, 4, 5);
            let out = color_jitter(&img, &JitterFactors::default(), &mut Seed(seed + 1).rng()).unwrap();
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
