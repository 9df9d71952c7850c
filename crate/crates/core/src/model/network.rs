use super::params::{init_params, sinusoid_1d, sinusoid_2d, AttentionIds, LayerIds, Layout, ParamStore};
use super::{ModelConfig, ModelError};
use crate::numerics::{rng::stream, ParamId, Rng, Seed, Tape, Tensor, Var, LN_EPS};

/// The network: configuration, learnable parameters and the fixed positional tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub layout: Layout,
    pos_vis: Tensor,
    pos_txt: Tensor,
}

impl Model {
    pub fn new(config: ModelConfig, seed: Seed) -> Result<Self, ModelError> {
        config.validate()?;
        let (params, layout) = init_params(&config, seed);
        Ok(Self::assemble(config, params, layout))
    }

    pub(crate) fn assemble(config: ModelConfig, params: ParamStore, layout: Layout) -> Self {
        let (gh, gw) = config.grid();
        let pos_vis = sinusoid_2d(gh, gw, config.d_model);
        let pos_txt = sinusoid_1d(config.max_caption_len, config.d_model);
        Self {
            config,
            params,
            layout,
            pos_vis,
            pos_txt,
        }
    }

    pub fn positional_visual(&self) -> &Tensor {
        &self.pos_vis
    }

    pub fn positional_text(&self) -> &Tensor {
        &self.pos_txt
    }

    pub fn session(&self) -> Session<'_> {
        Session {
            model: self,
            tape: Tape::new(),
            bound: vec![None; self.params.len()],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.params.get(self.layout.alpha).data()[0]
    }

    pub fn beta(&self) -> f64 {
        self.params.get(self.layout.beta).data()[0]
    }
}

/// Image, caption and (for training) ground-truth scene of one sample.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub image: &'a Tensor,
    pub tokens: &'a [usize],
    pub scene: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout on, pose routed through the ground-truth scene head.
    Train,
    /// Dropout off, pose routed through the most probable scene.
    Eval,
}

/// Attention probabilities of one decoder layer.
#[derive(Clone, Debug)]
pub struct LayerAttention<T> {
    /// Single-head self-attention, `S×S`.
    pub sa: T,
    /// One `S×S` map per head of the multi-head block.
    pub mha: Vec<T>,
}

/// Tape handles produced by one sample's forward pass.
#[derive(Clone, Debug)]
pub struct SampleGraph {
    pub logits: Var,
    /// Raw 7-vector `(p, q_raw)` of every scene head, each `1×7`.
    pub heads: Vec<Var>,
    pub routed: usize,
    pub fusion: Var,
    pub attention: Vec<LayerAttention<Var>>,
    pub visual_tokens: usize,
}

impl SampleGraph {
    pub fn routed_head(&self) -> Var {
        self.heads[self.routed]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawPose {
    pub p: [f64; 3],
    pub q_raw: [f64; 4],
}

impl RawPose {
    fn from_slice(v: &[f64]) -> Self {
        Self {
            p: [v[0], v[1], v[2]],
            q_raw: [v[3], v[4], v[5], v[6]],
        }
    }
}

/// Plain values of one sample's forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub poses: Vec<RawPose>,
    pub routed: usize,
    pub attention: Vec<LayerAttention<Tensor>>,
    pub fusion: Tensor,
}

impl ForwardOutput {
    pub fn pose(&self) -> RawPose {
        self.poses[self.routed]
    }

    pub fn predicted_scene(&self) -> usize {
        argmax(&self.probs)
    }
}

/// First index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// One forward/backward graph over a fixed model.
pub struct Session<'m> {
    model: &'m Model,
    pub tape: Tape,
    bound: Vec<Option<Var>>,
}

impl<'m> Session<'m> {
    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.param(id, self.model.params.get(id));
        self.bound[id.0] = Some(v);
        v
    }

    fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var, ModelError> {
        let (w, b) = (self.param(w), self.param(b));
        let y = self.tape.matmul(x, w)?;
        Ok(self.tape.add_row(y, b)?)
    }

    /// Patch embedding plus `γ·P_vis`: `(H/p)·(W/p)` tokens of width `d_model`.
    pub fn encode_image(&mut self, image: &Tensor) -> Result<Var, ModelError> {
        let cfg = &self.model.config;
        let expected = [cfg.channels, cfg.height, cfg.width];
        if image.shape() != expected {
            return Err(ModelError::Shape {
                what: "image",
                expected: expected.to_vec(),
                got: image.shape().to_vec(),
            });
        }
        let patches = self.tape.constant(im2col(image, cfg.patch));
        let gamma = cfg.gamma();
        let layout = &self.model.layout;
        let x = self.linear(patches, layout.conv_weight, layout.conv_bias)?;
        let pos = self.tape.constant(scaled(&self.model.pos_vis, gamma));
        Ok(self.tape.add(x, pos)?)
    }

    /// Token embedding plus `γ·P_txt` over exactly `tokens.len()` positions.
    pub fn encode_text(&mut self, tokens: &[usize]) -> Result<Var, ModelError> {
        let cfg = &self.model.config;
        if tokens.is_empty() || tokens.len() > cfg.max_caption_len {
            return Err(ModelError::CaptionLength {
                len: tokens.len(),
                max: cfg.max_caption_len,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&id| id >= cfg.vocab) {
            return Err(ModelError::OutOfVocab { id, vocab: cfg.vocab });
        }
        let gamma = cfg.gamma();
        let d = cfg.d_model;
        let table = self.param(self.model.layout.token_embedding);
        let emb = self.tape.gather_rows(table, tokens)?;
        let rows = &self.model.pos_txt.data()[..tokens.len() * d];
        let pos = Tensor::new(vec![tokens.len(), d], rows.iter().map(|v| v * gamma).collect())?;
        let pos = self.tape.constant(pos);
        Ok(self.tape.add(emb, pos)?)
    }

    /// Dot-product fusion. Visual tokens gather language context weighted by
    /// `softmax(V·Lᵀ/√d)`; the joint sequence is `[V + context; L]`.
    ///
    /// Returns the joint sequence and the `Nv×Nt` fusion weights.
    pub fn fuse(&mut self, visual: Var, language: Var) -> Result<(Var, Var), ModelError> {
        let (dv, dl) = (self.tape.value(visual).dims2()?.1, self.tape.value(language).dims2()?.1);
        if dv != dl {
            return Err(ModelError::Shape {
                what: "fusion width",
                expected: vec![dv],
                got: vec![dl],
            });
        }
        let sim = self.tape.matmul_t(visual, false, language, true)?;
        let sim = self.tape.scale(sim, 1.0 / (dv as f64).sqrt())?;
        let weights = self.tape.softmax_rows(sim)?;
        let context = self.tape.matmul(weights, language)?;
        let fused = self.tape.add(visual, context)?;
        let joint = self.tape.concat_rows(&[fused, language])?;
        Ok((joint, weights))
    }

    /// Scaled dot-product attention with `heads` heads over the whole sequence,
    /// followed by the output projection. Returns the output and one probability
    /// map per head.
    fn attention(&mut self, x: Var, ids: &AttentionIds, heads: usize) -> Result<(Var, Vec<Var>), ModelError> {
        let q = self.linear(x, ids.wq, ids.bq)?;
        let k = self.linear(x, ids.wk, ids.bk)?;
        let v = self.linear(x, ids.wv, ids.bv)?;
        let d = self.model.config.d_model;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        let mut maps = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.tape.slice_cols(q, h * dh, (h + 1) * dh)?,
                    self.tape.slice_cols(k, h * dh, (h + 1) * dh)?,
                    self.tape.slice_cols(v, h * dh, (h + 1) * dh)?,
                )
            };
            let scores = self.tape.matmul_t(qh, false, kh, true)?;
            let scores = self.tape.scale(scores, scale)?;
            let probs = self.tape.softmax_rows(scores)?;
            outs.push(self.tape.matmul(probs, vh)?);
            maps.push(probs);
        }
        let ctx = if heads == 1 { outs[0] } else { self.tape.concat_cols(&outs)? };
        let out = self.linear(ctx, ids.wo, ids.bo)?;
        Ok((out, maps))
    }

    /// Pre-LN layer: `x' = x + SA(LN(x))`, `x'' = x' + MHA(LN(x'))`, with dropout on
    /// each sublayer output in training.
    pub fn decoder_layer(
        &mut self,
        x: Var,
        ids: &LayerIds,
        rng: &mut Rng,
        training: bool,
    ) -> Result<(Var, LayerAttention<Var>), ModelError> {
        let rate = self.model.config.dropout;
        let heads = self.model.config.n_heads;
        let (g1, b1) = (self.param(ids.ln1_gain), self.param(ids.ln1_bias));
        let h = self.tape.layer_norm(x, g1, b1, LN_EPS)?;
        let (sa, sa_map) = self.attention(h, &ids.sa, 1)?;
        let sa = self.tape.dropout(sa, rate, rng, training)?;
        let x1 = self.tape.add(x, sa)?;
        let (g2, b2) = (self.param(ids.ln2_gain), self.param(ids.ln2_bias));
        let h = self.tape.layer_norm(x1, g2, b2, LN_EPS)?;
        let (mha, mha_maps) = self.attention(h, &ids.mha, heads)?;
        let mha = self.tape.dropout(mha, rate, rng, training)?;
        let x2 = self.tape.add(x1, mha)?;
        Ok((
            x2,
            LayerAttention {
                sa: sa_map[0],
                mha: mha_maps,
            },
        ))
    }

    /// `x + FF(LN(x))` with `FF = linear(d→4d) → GELU → linear(4d→d)`.
    pub fn final_feedforward(&mut self, x: Var, rng: &mut Rng, training: bool) -> Result<Var, ModelError> {
        let l = &self.model.layout;
        let (w1, b1, w2, b2) = (l.ff_w1, l.ff_b1, l.ff_w2, l.ff_b2);
        let (g, b) = (self.param(l.final_ln_gain), self.param(l.final_ln_bias));
        let h = self.tape.layer_norm(x, g, b, LN_EPS)?;
        let h = self.linear(h, w1, b1)?;
        let h = self.tape.gelu(h)?;
        let h = self.linear(h, w2, b2)?;
        let h = self.tape.dropout(h, self.model.config.dropout, rng, training)?;
        Ok(self.tape.add(x, h)?)
    }

    /// Mean of the first `visual_tokens` rows, `1×d`.
    pub fn pool(&mut self, features: Var, visual_tokens: usize) -> Result<Var, ModelError> {
        Ok(self.tape.mean_rows(features, 0, visual_tokens)?)
    }

    /// Scene logits `1×K` from pooled features.
    pub fn classify_scene(&mut self, pooled: Var) -> Result<Var, ModelError> {
        let l = &self.model.layout;
        let (w, b) = (l.cls_weight, l.cls_bias);
        self.linear(pooled, w, b)
    }

    /// Head `k`'s two-layer MLP (`d→d`, GELU, `d→7`) on pooled features.
    pub fn regress_pose(&mut self, pooled: Var, k: usize) -> Result<Var, ModelError> {
        let n = self.model.config.n_scenes;
        let head = self
            .model
            .layout
            .pose_heads
            .get(k)
            .ok_or(ModelError::SceneIndex { index: k, scenes: n })?
            .clone();
        let h = self.linear(pooled, head.w1, head.b1)?;
        let h = self.tape.gelu(h)?;
        self.linear(h, head.w2, head.b2)
    }

    /// The whole network on one sample.
    pub fn forward_sample(&mut self, input: &ModelInput, mode: Mode, rng: &mut Rng) -> Result<SampleGraph, ModelError> {
        let training = mode == Mode::Train;
        let visual = self.encode_image(input.image)?;
        let language = self.encode_text(input.tokens)?;
        let visual_tokens = self.model.config.num_visual_tokens();
        let (mut x, fusion) = self.fuse(visual, language)?;
        let layers = self.model.layout.layers.clone();
        let mut attention = Vec::with_capacity(layers.len());
        for ids in &layers {
            let (next, maps) = self.decoder_layer(x, ids, rng, training)?;
            x = next;
            attention.push(maps);
        }
        let features = self.final_feedforward(x, rng, training)?;
        let pooled = self.pool(features, visual_tokens)?;
        let logits = self.classify_scene(pooled)?;
        let heads = (0..self.model.config.n_scenes)
            .map(|k| self.regress_pose(pooled, k))
            .collect::<Result<Vec<_>, _>>()?;
        let routed = match mode {
            Mode::Train => {
                let k = input.scene.ok_or(ModelError::MissingScene)?;
                if k >= heads.len() {
                    return Err(ModelError::SceneIndex {
                        index: k,
                        scenes: heads.len(),
                    });
                }
                k
            }
            Mode::Eval => argmax(self.tape.value(logits).data()),
        };
        Ok(SampleGraph {
            logits,
            heads,
            routed,
            fusion,
            attention,
            visual_tokens,
        })
    }

    /// Forward pass over a batch; sample `i` draws dropout masks from
    /// `seed.derive([DROPOUT, i])`.
    pub fn forward_batch(&mut self, batch: &[ModelInput], mode: Mode, seed: Seed) -> Result<Vec<SampleGraph>, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        batch
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let mut rng = seed.derive(&[stream::DROPOUT, i as u64]).rng();
                self.forward_sample(input, mode, &mut rng).map_err(|e| ModelError::Sample {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    pub fn output(&self, g: &SampleGraph) -> ForwardOutput {
        let logits = self.tape.value(g.logits).data().to_vec();
        let probs = crate::numerics::softmax(self.tape.value(g.logits))
            .expect("finite logits")
            .into_data();
        ForwardOutput {
            logits,
            probs,
            poses: g.heads.iter().map(|h| RawPose::from_slice(self.tape.value(*h).data())).collect(),
            routed: g.routed,
            attention: g
                .attention
                .iter()
                .map(|a| LayerAttention {
                    sa: self.tape.value(a.sa).clone(),
                    mha: a.mha.iter().map(|m| self.tape.value(*m).clone()).collect(),
                })
                .collect(),
            fusion: self.tape.value(g.fusion).clone(),
        }
    }
}

impl Model {
    /// Runs the network and returns plain values for every sample.
    pub fn forward(&self, batch: &[ModelInput], mode: Mode, seed: Seed) -> Result<Vec<ForwardOutput>, ModelError> {
        let mut s = self.session();
        let graphs = s.forward_batch(batch, mode, seed)?;
        Ok(graphs.iter().map(|g| s.output(g)).collect())
    }
}

fn scaled(t: &Tensor, c: f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect()).expect("finite")
}

/// Rearranges a `C×H×W` image into `(H/p·W/p) × (C·p·p)` patch rows, row-major
/// over the patch grid, each row ordered channel, then y, then x.
pub fn im2col(image: &Tensor, patch: usize) -> Tensor {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (gh, gw) = (h / patch, w / patch);
    let px = image.data();
    let mut out = Vec::with_capacity(gh * gw * c * patch * patch);
    for gy in 0..gh {
        for gx in 0..gw {
            for ch in 0..c {
                for dy in 0..patch {
                    let y = gy * patch + dy;
                    let start = ch * h * w + y * w + gx * patch;
                    out.extend_from_slice(&px[start..start + patch]);
                }
            }
        }
    }
    Tensor::new(vec![gh * gw, c * patch * patch], out).expect("finite image")
}
