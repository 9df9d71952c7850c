use super::ModelError;

/// Decoder depths the architecture accepts.
pub const ALLOWED_LAYERS: [usize; 4] = [2, 4, 6, 8];

/// Architecture hyperparameters. Every learnable shape is a function of these.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub n_scenes: usize,
    pub vocab: usize,
    pub max_caption_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    /// Full-size input geometry (224×224 RGB, 16-pixel patches, 4 decoder layers).
    fn default() -> Self {
        Self {
            channels: 3,
            height: 224,
            width: 224,
            patch: 16,
            d_model: 256,
            n_heads: 8,
            n_layers: 4,
            n_scenes: 7,
            vocab: 64,
            max_caption_len: 32,
            dropout: 0.5,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidConfig {
        key,
        reason: reason.into(),
    }
}

impl ModelConfig {
    /// Small configuration used for desk-scale runs.
    pub fn desk(n_scenes: usize, vocab: usize) -> Self {
        Self {
            channels: 3,
            height: 64,
            width: 64,
            patch: 8,
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            n_scenes,
            vocab,
            max_caption_len: 16,
            dropout: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("channels", self.channels),
            ("height", self.height),
            ("width", self.width),
            ("patch", self.patch),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_scenes", self.n_scenes),
            ("vocab", self.vocab),
            ("max_caption_len", self.max_caption_len),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(invalid(key, "must be positive"));
            }
        }
        if !ALLOWED_LAYERS.contains(&self.n_layers) {
            return Err(invalid("n_layers", format!("{} not in {ALLOWED_LAYERS:?}", self.n_layers)));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(invalid("n_heads", format!("d_model {} not divisible by {}", self.d_model, self.n_heads)));
        }
        if self.d_model % 4 != 0 {
            return Err(invalid("d_model", "must be a multiple of 4 for the 2-D positional encoding"));
        }
        if self.height % self.patch != 0 {
            return Err(invalid("height", format!("{} not divisible by patch {}", self.height, self.patch)));
        }
        if self.width % self.patch != 0 {
            return Err(invalid("width", format!("{} not divisible by patch {}", self.width, self.patch)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Positional scale `W^(-1/2)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (self.width as f64).sqrt()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    pub fn num_visual_tokens(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch * self.patch
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Trainable parameter count:
    ///
    /// ```text
    ///   C·p²·d + d                    patch embedding
    /// + V·d                           token embedding
    /// + N·(8d² + 12d)                 decoder layers (2 LNs, 2 attention blocks with biases)
    /// + 2d + 8d² + 5d                 final LN and feedforward (hidden 4d)
    /// + d·K + K                       scene classifier
    /// + K·(d² + 8d + 7)               pose heads (d→d→7)
    /// + 2                             loss weights
    /// ```
    pub fn param_count(&self) -> usize {
        let (d, k) = (self.d_model, self.n_scenes);
        self.patch_dim() * d
            + d
            + self.vocab * d
            + self.n_layers * (8 * d * d + 12 * d)
            + 2 * d
            + 8 * d * d
            + 5 * d
            + d * k
            + k
            + k * (d * d + 8 * d + 7)
            + 2
    }
}
