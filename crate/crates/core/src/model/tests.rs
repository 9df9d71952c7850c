use rand::Rng as _;

use super::*;
use crate::loss::{batch_loss, PoseTarget};
use crate::geometry::Quaternion;
use crate::numerics::{softmax, Seed, Tensor};

fn tiny_config(n_scenes: usize) -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 16,
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        dropout: 0.5,
        ..ModelConfig::desk(n_scenes, 12)
    }
}

fn image(cfg: &ModelConfig, seed: u64) -> Tensor {
    let mut rng = Seed(seed).rng();
    let n = cfg.channels * cfg.height * cfg.width;
    Tensor::new(
        vec![cfg.channels, cfg.height, cfg.width],
        (0..n).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap()
}

fn zero(model: &mut Model, id: crate::numerics::ParamId) {
    model.params.values_mut(id).fill(0.0);
}

fn assert_rows_sum_to_one(t: &Tensor) {
    let (rows, _) = t.dims2().unwrap();
    for r in 0..rows {
        let s: f64 = t.row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "row {r} sums to {s}");
    }
}

#[test]
fn zero_image_gives_scaled_positional_table() {
    let model = Model::new(tiny_config(2), Seed(1)).unwrap();
    let cfg = &model.config;
    let img = Tensor::zeros(&[cfg.channels, cfg.height, cfg.width]);
    let mut s = model.session();
    let v = s.encode_image(&img).unwrap();
    let expected: Vec<f64> = model.positional_visual().data().iter().map(|p| p * cfg.gamma()).collect();
    assert_eq!(s.tape.value(v).data(), &expected[..]);
    assert_eq!(s.tape.value(v).shape(), &[cfg.num_visual_tokens(), cfg.d_model]);
}

#[test]
fn positional_terms_bounded_by_gamma() {
    let model = Model::new(tiny_config(2), Seed(1)).unwrap();
    let g = model.config.gamma();
    for p in model.positional_visual().data().iter().chain(model.positional_text().data()) {
        assert!((p * g).abs() <= g);
    }
}

#[test]
fn zero_embedding_gives_scaled_text_positions() {
    let mut model = Model::new(tiny_config(2), Seed(2)).unwrap();
    let id = model.layout.token_embedding;
    zero(&mut model, id);
    let d = model.config.d_model;
    for tokens in [&[3usize, 4, 5][..], &[7, 7, 1, 2, 9, 11, 0]] {
        let mut s = model.session();
        let l = s.encode_text(tokens).unwrap();
        let expected: Vec<f64> =
            model.positional_text().data()[..tokens.len() * d].iter().map(|p| p * model.config.gamma()).collect();
        assert_eq!(s.tape.value(l).data(), &expected[..]);
        assert_eq!(s.tape.value(l).shape(), &[tokens.len(), d]);
    }
}

#[test]
fn text_encoder_rejects_bad_tokens() {
    let model = Model::new(tiny_config(2), Seed(2)).unwrap();
    let mut s = model.session();
    assert!(matches!(s.encode_text(&[]), Err(ModelError::CaptionLength { .. })));
    assert!(matches!(s.encode_text(&[12]), Err(ModelError::OutOfVocab { id: 12, .. })));
    assert!(matches!(s.encode_text(&[1; 17]), Err(ModelError::CaptionLength { .. })));
}

#[test]
fn image_encoder_rejects_wrong_shape() {
    let model = Model::new(tiny_config(2), Seed(2)).unwrap();
    let mut s = model.session();
    assert!(matches!(
        s.encode_image(&Tensor::zeros(&[3, 8, 16])),
        Err(ModelError::Shape { what: "image", .. })
    ));
}

#[test]
fn fusion_with_zero_language_leaves_visual_tokens() {
    let model = Model::new(tiny_config(2), Seed(3)).unwrap();
    let mut s = model.session();
    let mut rng = Seed(4).rng();
    let v: Vec<f64> = (0..5 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = s.tape.constant(Tensor::new(vec![5, 16], v).unwrap());
    let l = s.tape.constant(Tensor::zeros(&[3, 16]));
    let (joint, w) = s.fuse(v, l).unwrap();
    for x in s.tape.value(w).data() {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
    let j = s.tape.value(joint);
    assert_eq!(j.shape(), &[8, 16]);
    assert_eq!(&j.data()[..80], s.tape.value(v).data());
}

#[test]
fn fusion_with_one_language_token_broadcasts_it() {
    let model = Model::new(tiny_config(2), Seed(3)).unwrap();
    let mut s = model.session();
    let mut rng = Seed(5).rng();
    let v: Vec<f64> = (0..4 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vt = s.tape.constant(Tensor::new(vec![4, 16], v.clone()).unwrap());
    let lt = s.tape.constant(Tensor::new(vec![1, 16], l.clone()).unwrap());
    let (joint, _) = s.fuse(vt, lt).unwrap();
    let j = s.tape.value(joint);
    for r in 0..4 {
        for c in 0..16 {
            assert!((j.row(r)[c] - (v[r * 16 + c] + l[c])).abs() < 1e-15);
        }
    }
    assert_eq!(j.row(4), &l[..]);
}

#[test]
fn every_attention_row_is_a_distribution() {
    let model = Model::new(tiny_config(3), Seed(6)).unwrap();
    let img = image(&model.config, 7);
    let out = model
        .forward(&[ModelInput { image: &img, tokens: &[2, 3, 4, 5], scene: Some(1) }], Mode::Train, Seed(8))
        .unwrap();
    let out = &out[0];
    assert_rows_sum_to_one(&out.fusion);
    assert_eq!(out.attention.len(), 2);
    for layer in &out.attention {
        assert_rows_sum_to_one(&layer.sa);
        assert_eq!(layer.mha.len(), 2);
        for m in &layer.mha {
            assert_rows_sum_to_one(m);
        }
    }
}

#[test]
fn zeroed_output_projections_make_decoder_identity() {
    let mut model = Model::new(tiny_config(2), Seed(9)).unwrap();
    for l in model.layout.layers.clone() {
        for id in [l.sa.wo, l.sa.bo, l.mha.wo, l.mha.bo] {
            zero(&mut model, id);
        }
    }
    let mut rng = Seed(10).rng();
    let x: Vec<f64> = (0..20 * 16).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut s = model.session();
    let x0 = s.tape.constant(Tensor::new(vec![20, 16], x).unwrap());
    let mut y = x0;
    let mut drop_rng = Seed(11).rng();
    for ids in model.layout.layers.clone() {
        y = s.decoder_layer(y, &ids, &mut drop_rng, true).unwrap().0;
    }
    assert_eq!(s.tape.value(y), s.tape.value(x0));
}

#[test]
fn zeroed_second_ff_layer_is_identity() {
    let mut model = Model::new(tiny_config(2), Seed(12)).unwrap();
    let (w2, b2) = (model.layout.ff_w2, model.layout.ff_b2);
    zero(&mut model, w2);
    zero(&mut model, b2);
    let mut s = model.session();
    let mut rng = Seed(13).rng();
    let x: Vec<f64> = (0..6 * 16).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x0 = s.tape.constant(Tensor::new(vec![6, 16], x).unwrap());
    let y = s.final_feedforward(x0, &mut rng, false).unwrap();
    assert_eq!(s.tape.value(y), s.tape.value(x0));
}

#[test]
fn single_scene_probability_is_one() {
    let model = Model::new(tiny_config(1), Seed(14)).unwrap();
    let img = image(&model.config, 15);
    let out = model.forward(&[ModelInput { image: &img, tokens: &[4], scene: None }], Mode::Eval, Seed(0)).unwrap();
    assert_eq!(out[0].probs, vec![1.0]);
}

#[test]
fn classifier_bias_shift_shifts_logits() {
    let mut model = Model::new(tiny_config(3), Seed(16)).unwrap();
    let img = image(&model.config, 17);
    let input = [ModelInput { image: &img, tokens: &[4, 5], scene: None }];
    let before = model.forward(&input, Mode::Eval, Seed(0)).unwrap().remove(0);
    let bias = model.layout.cls_bias;
    for b in model.params.values_mut(bias) {
        *b += 2.5;
    }
    let after = model.forward(&input, Mode::Eval, Seed(0)).unwrap().remove(0);
    for (a, b) in after.logits.iter().zip(&before.logits) {
        assert!((a - b - 2.5).abs() < 1e-12);
        assert!(a.is_finite());
    }
    assert_eq!(after.predicted_scene(), before.predicted_scene());
}

#[test]
fn probabilities_match_external_softmax() {
    let model = Model::new(tiny_config(3), Seed(18)).unwrap();
    let img = image(&model.config, 19);
    let out = model.forward(&[ModelInput { image: &img, tokens: &[1, 2], scene: None }], Mode::Eval, Seed(0)).unwrap();
    let p = softmax(&Tensor::vector(&out[0].logits).unwrap()).unwrap();
    assert_eq!(p.data(), &out[0].probs[..]);
}

#[test]
fn eval_is_deterministic_and_train_reproducible() {
    let model = Model::new(tiny_config(2), Seed(20)).unwrap();
    let img = image(&model.config, 21);
    let input = [ModelInput { image: &img, tokens: &[1, 2, 3], scene: Some(0) }];
    let a = model.forward(&input, Mode::Eval, Seed(1)).unwrap();
    let b = model.forward(&input, Mode::Eval, Seed(2)).unwrap();
    assert_eq!(a[0].logits, b[0].logits);
    assert_eq!(a[0].poses, b[0].poses);
    let a = model.forward(&input, Mode::Train, Seed(3)).unwrap();
    let b = model.forward(&input, Mode::Train, Seed(3)).unwrap();
    assert_eq!(a[0].poses, b[0].poses);
    let c = model.forward(&input, Mode::Train, Seed(4)).unwrap();
    assert_ne!(a[0].poses, c[0].poses);
}

#[test]
fn routing_follows_mode() {
    let model = Model::new(tiny_config(3), Seed(22)).unwrap();
    let img = image(&model.config, 23);
    let eval = model.forward(&[ModelInput { image: &img, tokens: &[1], scene: Some(2) }], Mode::Eval, Seed(0)).unwrap();
    assert_eq!(eval[0].routed, eval[0].predicted_scene());
    for k in 0..3 {
        let train = model.forward(&[ModelInput { image: &img, tokens: &[1], scene: Some(k) }], Mode::Train, Seed(0)).unwrap();
        assert_eq!(train[0].routed, k);
        assert_eq!(train[0].poses.len(), 3);
    }
    let err = model.forward(&[ModelInput { image: &img, tokens: &[1], scene: None }], Mode::Train, Seed(0));
    assert!(matches!(err, Err(ModelError::Sample { index: 0, .. })));
}

#[test]
fn perturbing_one_head_leaves_others() {
    let mut model = Model::new(tiny_config(3), Seed(24)).unwrap();
    let img = image(&model.config, 25);
    let input = [ModelInput { image: &img, tokens: &[3, 1], scene: None }];
    let before = model.forward(&input, Mode::Eval, Seed(0)).unwrap().remove(0);
    for id in model.layout.head_params(1) {
        for v in model.params.values_mut(id) {
            *v += 0.3;
        }
    }
    let after = model.forward(&input, Mode::Eval, Seed(0)).unwrap().remove(0);
    assert_eq!(after.poses[0], before.poses[0]);
    assert_eq!(after.poses[2], before.poses[2]);
    assert_ne!(after.poses[1], before.poses[1]);
    assert_eq!(after.logits, before.logits);
}

#[test]
fn loss_gradient_reaches_only_the_routed_head() {
    let model = Model::new(tiny_config(3), Seed(26)).unwrap();
    let img = image(&model.config, 27);
    let mut s = model.session();
    let batch = [
        ModelInput { image: &img, tokens: &[3, 1], scene: Some(0) },
        ModelInput { image: &img, tokens: &[5], scene: Some(2) },
    ];
    let graphs = s.forward_batch(&batch, Mode::Train, Seed(28)).unwrap();
    let targets = [
        PoseTarget { p: [0.2, 0.4, 0.1], q: Quaternion::new(0.8, 0.6, 0.0, 0.0), scene: 0 },
        PoseTarget { p: [0.9, 0.1, 0.5], q: Quaternion::IDENTITY, scene: 2 },
    ];
    let loss = batch_loss(&mut s, &graphs, &targets).unwrap();
    let grads = s.tape.backward(loss.total).unwrap();
    for k in 0..3 {
        for id in model.layout.head_params(k) {
            let g = grads.get(id).unwrap();
            let nonzero = g.data().iter().any(|v| *v != 0.0);
            assert_eq!(nonzero, k != 1, "head {k} param {}", model.params.name(id));
        }
    }
    assert_eq!(grads.len(), model.params.len());
}

#[test]
fn im2col_orders_channel_then_rows() {
    let img = Tensor::new(vec![2, 4, 4], (0..32).map(|v| v as f64).collect()).unwrap();
    let cols = im2col(&img, 2);
    assert_eq!(cols.shape(), &[4, 8]);
    assert_eq!(cols.row(0), &[0.0, 1.0, 4.0, 5.0, 16.0, 17.0, 20.0, 21.0]);
    assert_eq!(cols.row(3), &[10.0, 11.0, 14.0, 15.0, 26.0, 27.0, 30.0, 31.0]);
}
