//! Attention maps over the patch grid as binary graymaps.

use mvloc_core::model::LayerAttention;
use mvloc_core::numerics::Tensor;

/// Mean over query rows of the probabilities on the first `visual` keys,
/// reshaped row-major to `grid_h × grid_w`.
pub fn visual_attention(probs: &Tensor, visual: usize, grid_h: usize, grid_w: usize) -> Vec<f64> {
    assert_eq!(visual, grid_h * grid_w, "grid does not cover the visual tokens");
    let (rows, cols) = probs.dims2().expect("attention maps are matrices");
    assert!(visual <= cols);
    let mut out = vec![0.0; visual];
    for r in 0..rows {
        for (o, p) in out.iter_mut().zip(&probs.row(r)[..visual]) {
            *o += p;
        }
    }
    out.iter_mut().for_each(|v| *v /= rows as f64);
    out
}

/// Binary PGM (`P5`, maxval 255) of `values`, min-max normalized; a constant
/// map is written as all zeros.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| {
        if span > 0.0 {
            (255.0 * (v - lo) / span).round() as u8
        } else {
            0
        }
    }));
    out
}

/// One `(file name, PGM bytes)` per layer and multi-head attention head.
pub fn attention_maps(
    layers: &[LayerAttention<Tensor>],
    visual: usize,
    grid_h: usize,
    grid_w: usize,
) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        for (h, probs) in layer.mha.iter().enumerate() {
            let map = visual_attention(probs, visual, grid_h, grid_w);
            files.push((format!("layer{l}-head{h}.pgm"), encode_pgm(&map, grid_w, grid_h)));
        }
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout_and_normalization() {
        let bytes = encode_pgm(&[0.0, 0.5, 0.25, 1.0], 2, 2);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 64, 255]);
        let flat = encode_pgm(&[0.25; 4], 2, 2);
        assert_eq!(&flat[header.len()..], &[0, 0, 0, 0]);
    }

    #[test]
    fn visual_mass_averages_rows() {
        // Two queries over 4 visual keys and 1 text key.
        let probs = Tensor::new(vec![2, 5], vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.6]).unwrap();
        assert_eq!(visual_attention(&probs, 4, 2, 2), vec![0.25, 0.25, 0.1, 0.1]);
    }
}
