use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{ModelConfig, ModelError};
use crate::numerics::{rng::stream, ParamId, Rng, Seed, Tensor};

/// Initial value of the position-branch loss weight.
pub const ALPHA_INIT: f64 = -4.0;
/// Initial value of the orientation-branch loss weight.
pub const BETA_INIT: f64 = -2.0;
/// Output bias of every pose head: zero position, identity rotation, so the
/// raw quaternion starts far from the degenerate origin.
pub const POSE_BIAS_INIT: [f64; 7] = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
const INIT_STD: f64 = 0.02;

/// Named learnable tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    decay: Vec<bool>,
}

impl ParamStore {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            decay: Vec::new(),
        }
    }

    fn push(&mut self, name: String, t: Tensor, decay: bool) -> ParamId {
        self.names.push(name);
        self.tensors.push(t);
        self.decay.push(decay);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Mutable view of one parameter's values.
    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.tensors[id.0].data_mut()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Whether decoupled weight decay applies (weight matrices and embeddings only).
    pub fn decays(&self, id: ParamId) -> bool {
        self.decay[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn replace(&mut self, id: ParamId, t: Tensor) -> Result<(), ModelError> {
        if t.shape() != self.tensors[id.0].shape() {
            return Err(ModelError::Shape {
                what: "parameter",
                expected: self.tensors[id.0].shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
        self.tensors[id.0] = t;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionIds {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerIds {
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub sa: AttentionIds,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub mha: AttentionIds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseHeadIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Where each named parameter lives in the [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub conv_weight: ParamId,
    pub conv_bias: ParamId,
    pub token_embedding: ParamId,
    pub layers: Vec<LayerIds>,
    pub final_ln_gain: ParamId,
    pub final_ln_bias: ParamId,
    pub ff_w1: ParamId,
    pub ff_b1: ParamId,
    pub ff_w2: ParamId,
    pub ff_b2: ParamId,
    pub cls_weight: ParamId,
    pub cls_bias: ParamId,
    pub pose_heads: Vec<PoseHeadIds>,
    pub alpha: ParamId,
    pub beta: ParamId,
}

impl Layout {
    /// Every id belonging to pose head `k`.
    pub fn head_params(&self, k: usize) -> [ParamId; 4] {
        let h = &self.pose_heads[k];
        [h.w1, h.b1, h.w2, h.b2]
    }
}

/// Truncated normal at ±2σ by rejection.
fn trunc_normal(rng: &mut Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("finite init")
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, shape: &[usize]) -> ParamId {
        let t = trunc_normal(self.rng, shape, INIT_STD);
        self.store.push(name, t, true)
    }

    fn zeros(&mut self, name: String, shape: &[usize]) -> ParamId {
        self.store.push(name, Tensor::zeros(shape), false)
    }

    fn biased(&mut self, name: String, values: &[f64]) -> ParamId {
        self.store.push(name, Tensor::vector(values).expect("finite init"), false)
    }

    fn ones(&mut self, name: String, shape: &[usize]) -> ParamId {
        self.store.push(name, Tensor::full(shape, 1.0), false)
    }

    fn value(&mut self, name: String, v: f64) -> ParamId {
        self.store.push(name, Tensor::full(&[1], v), false)
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIds {
        AttentionIds {
            wq: self.weight(format!("{prefix}.wq"), &[d, d]),
            bq: self.zeros(format!("{prefix}.bq"), &[d]),
            wk: self.weight(format!("{prefix}.wk"), &[d, d]),
            bk: self.zeros(format!("{prefix}.bk"), &[d]),
            wv: self.weight(format!("{prefix}.wv"), &[d, d]),
            bv: self.zeros(format!("{prefix}.bv"), &[d]),
            wo: self.weight(format!("{prefix}.wo"), &[d, d]),
            bo: self.zeros(format!("{prefix}.bo"), &[d]),
        }
    }
}

/// Builds the layout and its initial values: truncated normal (std 0.02) for
/// weight matrices and embeddings, zero biases, unit layer-norm gains, and the
/// loss weights at their fixed starting values.
pub fn init_params(config: &ModelConfig, seed: Seed) -> (ParamStore, Layout) {
    let mut rng = seed.split(stream::INIT).rng();
    let mut b = Builder {
        store: ParamStore::new(),
        rng: &mut rng,
    };
    let d = config.d_model;
    let conv_weight = b.weight("conv.weight".into(), &[config.patch_dim(), d]);
    let conv_bias = b.zeros("conv.bias".into(), &[d]);
    let token_embedding = b.weight("token.embedding".into(), &[config.vocab, d]);
    let layers = (0..config.n_layers)
        .map(|l| LayerIds {
            ln1_gain: b.ones(format!("layers.{l}.ln1.gain"), &[d]),
            ln1_bias: b.zeros(format!("layers.{l}.ln1.bias"), &[d]),
            sa: b.attention(&format!("layers.{l}.sa"), d),
            ln2_gain: b.ones(format!("layers.{l}.ln2.gain"), &[d]),
            ln2_bias: b.zeros(format!("layers.{l}.ln2.bias"), &[d]),
            mha: b.attention(&format!("layers.{l}.mha"), d),
        })
        .collect();
    let final_ln_gain = b.ones("final.ln.gain".into(), &[d]);
    let final_ln_bias = b.zeros("final.ln.bias".into(), &[d]);
    let ff_w1 = b.weight("final.ff.w1".into(), &[d, 4 * d]);
    let ff_b1 = b.zeros("final.ff.b1".into(), &[4 * d]);
    let ff_w2 = b.weight("final.ff.w2".into(), &[4 * d, d]);
    let ff_b2 = b.zeros("final.ff.b2".into(), &[d]);
    let cls_weight = b.weight("cls.weight".into(), &[d, config.n_scenes]);
    let cls_bias = b.zeros("cls.bias".into(), &[config.n_scenes]);
    let pose_heads = (0..config.n_scenes)
        .map(|k| PoseHeadIds {
            w1: b.weight(format!("pose.{k}.w1"), &[d, d]),
            b1: b.zeros(format!("pose.{k}.b1"), &[d]),
            w2: b.weight(format!("pose.{k}.w2"), &[d, 7]),
            b2: b.biased(format!("pose.{k}.b2"), &POSE_BIAS_INIT),
        })
        .collect();
    let alpha = b.value("loss.alpha".into(), ALPHA_INIT);
    let beta = b.value("loss.beta".into(), BETA_INIT);
    let layout = Layout {
        conv_weight,
        conv_bias,
        token_embedding,
        layers,
        final_ln_gain,
        final_ln_bias,
        ff_w1,
        ff_b1,
        ff_w2,
        ff_b2,
        cls_weight,
        cls_bias,
        pose_heads,
        alpha,
        beta,
    };
    (b.store, layout)
}

/// 1-D sinusoidal table, `rows × d`:
/// `P[pos, 2i] = sin(pos / 10000^(2i/d))`, `P[pos, 2i+1] = cos(...)`.
pub fn sinusoid_1d(rows: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; rows * d];
    for pos in 0..rows {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let a = pos as f64 * freq;
            data[pos * d + 2 * i] = a.sin();
            data[pos * d + 2 * i + 1] = a.cos();
        }
    }
    Tensor::new(vec![rows, d], data).expect("finite table")
}

/// Separable 2-D table over a `gh × gw` grid: the first `d/2` columns encode the
/// row index, the last `d/2` the column index. Row-major token order.
pub fn sinusoid_2d(gh: usize, gw: usize, d: usize) -> Tensor {
    let half = d / 2;
    let rows = sinusoid_1d(gh, half);
    let cols = sinusoid_1d(gw, half);
    let mut data = Vec::with_capacity(gh * gw * d);
    for r in 0..gh {
        for c in 0..gw {
            data.extend_from_slice(rows.row(r));
            data.extend_from_slice(cols.row(c));
        }
    }
    Tensor::new(vec![gh * gw, d], data).expect("finite table")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_closed_form() {
        for n_layers in [2, 4, 6, 8] {
            for (d, heads, k, vocab) in [(16, 2, 2, 11), (64, 4, 3, 40)] {
                let cfg = ModelConfig {
                    n_layers,
                    d_model: d,
                    n_heads: heads,
                    n_scenes: k,
                    vocab,
                    ..ModelConfig::desk(k, vocab)
                };
                let (store, layout) = init_params(&cfg, Seed(1));
                assert_eq!(store.scalar_count(), cfg.param_count());
                assert_eq!(layout.layers.len(), n_layers);
                assert_eq!(layout.pose_heads.len(), k);
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig::desk(2, 10);
        let (a, _) = init_params(&cfg, Seed(3));
        let (b, _) = init_params(&cfg, Seed(3));
        assert_eq!(a, b);
        let (c, _) = init_params(&cfg, Seed(4));
        assert_ne!(a, c);
        for (_, name, t) in a.iter() {
            if a.decays(a.find(name).unwrap()) {
                assert!(t.data().iter().all(|v| v.abs() <= 0.04), "{name}");
            }
        }
        let layout = init_params(&cfg, Seed(3)).1;
        assert_eq!(a.get(layout.alpha).item(), Some(-4.0));
        assert_eq!(a.get(layout.beta).item(), Some(-2.0));
    }

    #[test]
    fn positional_tables_within_unit_range() {
        let p = sinusoid_2d(8, 8, 64);
        assert_eq!(p.shape(), &[64, 64]);
        assert!(p.data().iter().all(|v| v.abs() <= 1.0));
        let t = sinusoid_1d(16, 64);
        assert_eq!(t.row(0)[0], 0.0);
        assert_eq!(t.row(0)[1], 1.0);
    }
}
