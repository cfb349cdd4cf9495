use rand::Rng as _;

use crate::error::{CasmError, Result};
use crate::numerics::{Matrix, ParamId, ParamSet, Real};
use crate::rng::{stream_rng, Stream};

/// Architecture and vocabulary sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Number of real items; the item table has `num_items + 1` rows (row 0 = padding).
    pub num_items: usize,
    pub num_behaviors: usize,
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub max_len: usize,
    /// When false, behavior embeddings and the fusion layer are bypassed.
    pub use_context: bool,
    /// When true, blocks are bare attention + FFN without residuals or layer norm.
    pub plain_block: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CasmError::Config(msg));
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return fail(format!("embedding size d={} must be a positive multiple of heads={}", self.dim, self.heads));
        }
        if self.blocks == 0 {
            return fail("at least one attention block is required".into());
        }
        if self.max_len < 2 {
            return fail(format!("max_len must be at least 2, got {}", self.max_len));
        }
        if self.num_items == 0 || self.num_behaviors == 0 {
            return fail("item and behavior vocabularies must be non-empty".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub query: Vec<ParamId>,
    pub key: Vec<ParamId>,
    pub value: Vec<ParamId>,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    /// Layer-norm `(gain, bias)` before attention and before the FFN.
    pub attn_norm: Option<(ParamId, ParamId)>,
    pub ffn_norm: Option<(ParamId, ParamId)>,
}

/// Where each learnable matrix lives inside the parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub item_table: ParamId,
    pub item_bias: ParamId,
    pub context_table: ParamId,
    pub context_bias: ParamId,
    pub fuse_weight: ParamId,
    pub fuse_bias: ParamId,
    pub positions: ParamId,
    pub blocks: Vec<BlockLayout>,
    pub final_norm: Option<(ParamId, ParamId)>,
}

/// All learnable tensors of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub set: ParamSet<T>,
    pub layout: ParamLayout,
}

enum Init {
    Embedding,
    Xavier,
    Zeros,
    Ones,
}

/// Builds the parameter list in a fixed order, so a layout can be rebuilt
/// from the config alone.
fn build<T: Real>(config: &ModelConfig, mut make: impl FnMut(&str, usize, usize, Init) -> Matrix<T>) -> ModelParams<T> {
    let mut set = ParamSet::new();
    let d = config.dim;
    let mut add = |set: &mut ParamSet<T>, name: String, r: usize, c: usize, init: Init| {
        let m = make(&name, r, c, init);
        set.push(name, m)
    };
    let item_table = add(&mut set, "item_table".into(), config.num_items + 1, d, Init::Embedding);
    let item_bias = add(&mut set, "item_bias".into(), 1, d, Init::Zeros);
    let context_table = add(&mut set, "context_table".into(), config.num_behaviors, d, Init::Embedding);
    let context_bias = add(&mut set, "context_bias".into(), 1, d, Init::Zeros);
    let fuse_weight = add(&mut set, "fuse_weight".into(), 2 * d, d, Init::Xavier);
    let fuse_bias = add(&mut set, "fuse_bias".into(), 1, d, Init::Zeros);
    let positions = add(&mut set, "positions".into(), config.max_len, d, Init::Embedding);
    let dh = config.head_dim();
    let mut blocks = Vec::with_capacity(config.blocks);
    for b in 0..config.blocks {
        let norm = |set: &mut ParamSet<T>, add: &mut dyn FnMut(&mut ParamSet<T>, String, usize, usize, Init) -> ParamId, which: &str| {
            if config.plain_block {
                None
            } else {
                Some((
                    add(set, format!("block{b}.{which}_norm.gain"), 1, d, Init::Ones),
                    add(set, format!("block{b}.{which}_norm.bias"), 1, d, Init::Zeros),
                ))
            }
        };
        let attn_norm = norm(&mut set, &mut add, "attn");
        let mut proj = |set: &mut ParamSet<T>, kind: &str| {
            (0..config.heads)
                .map(|h| add(set, format!("block{b}.head{h}.{kind}"), d, dh, Init::Xavier))
                .collect::<Vec<_>>()
        };
        let query = proj(&mut set, "query");
        let key = proj(&mut set, "key");
        let value = proj(&mut set, "value");
        let ffn_norm = norm(&mut set, &mut add, "ffn");
        let ffn_w1 = add(&mut set, format!("block{b}.ffn.w1"), d, d, Init::Xavier);
        let ffn_b1 = add(&mut set, format!("block{b}.ffn.b1"), 1, d, Init::Zeros);
        let ffn_w2 = add(&mut set, format!("block{b}.ffn.w2"), d, d, Init::Xavier);
        let ffn_b2 = add(&mut set, format!("block{b}.ffn.b2"), 1, d, Init::Zeros);
        blocks.push(BlockLayout { query, key, value, ffn_w1, ffn_b1, ffn_w2, ffn_b2, attn_norm, ffn_norm });
    }
    let final_norm = if config.plain_block {
        None
    } else {
        Some((
            add(&mut set, "final_norm.gain".into(), 1, d, Init::Ones),
            add(&mut set, "final_norm.bias".into(), 1, d, Init::Zeros),
        ))
    };
    let layout = ParamLayout {
        item_table,
        item_bias,
        context_table,
        context_bias,
        fuse_weight,
        fuse_bias,
        positions,
        blocks,
        final_norm,
    };
    ModelParams { config: *config, set, layout }
}

impl<T: Real> ModelParams<T> {
    /// Embedding tables uniform in ±0.01 (item row 0 zero), Xavier-uniform
    /// projections, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init, &[]);
        let params = build(config, |name, rows, cols, init| match init {
            Init::Zeros => Matrix::zeros(rows, cols),
            Init::Ones => Matrix::filled(rows, cols, T::one()),
            Init::Embedding => Matrix::from_fn(rows, cols, |r, _| {
                let x = rng.gen_range(-0.01..0.01);
                if name == "item_table" && r == 0 {
                    T::zero()
                } else {
                    T::of(x)
                }
            }),
            Init::Xavier => {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                Matrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-limit..limit)))
            }
        });
        Ok(params)
    }

    /// All-zero parameters with the layout of `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(build(config, |_, rows, cols, _| Matrix::zeros(rows, cols)))
    }

    /// Replaces the parameter values, checking names and shapes against the layout.
    pub fn from_set(config: &ModelConfig, set: ParamSet<T>) -> Result<Self> {
        let template = Self::zeros(config)?;
        if template.set.len() != set.len() {
            return Err(CasmError::Data(format!(
                "expected {} parameter tensors, found {}",
                template.set.len(),
                set.len()
            )));
        }
        for id in template.set.ids() {
            let (want, got) = (template.set.get(id), set.get(id));
            if template.set.name(id) != set.name(id) || want.shape() != got.shape() {
                return Err(CasmError::Data(format!(
                    "parameter {} has shape {:?}, expected {} {:?}",
                    set.name(id),
                    got.shape(),
                    template.set.name(id),
                    want.shape()
                )));
            }
        }
        Ok(Self { config: *config, set, layout: template.layout })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams { config: self.config, set: self.set.cast(), layout: self.layout.clone() }
    }

    /// Resets the padding row of the item table to zero.
    pub fn zero_padding_row(&mut self) {
        for x in self.set.get_mut(self.layout.item_table).row_mut(0) {
            *x = T::zero();
        }
    }
}
