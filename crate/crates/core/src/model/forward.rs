//! Forward pass.
//!
//! Inputs are flattened to `batch·max_len` rows of width `d`:
//!
//! 1. item embedding `v' = lookup(W_l, v) + b_l`, behavior embedding
//!    `c' = lookup(W_c, c) + b_c`;
//! 2. fusion `q = [v' | c'] W_f + b_f` (or `q = v'` with context disabled);
//! 3. positional term `e_t = q_t + P_t`;
//! 4. attention blocks: per head `softmax(Q Kᵀ / √(d/H)) V` under a causal and
//!    key-padding mask, heads concatenated, then a two-layer ReLU FFN.
//!    Unless `plain_block` is set each sublayer is pre-normalised, wrapped in
//!    dropout and a residual connection, and a final layer norm follows;
//! 5. scores `σ(z_t · q^o)` where `q^o` is a target embedded through the same
//!    layers as step 1–2, without a positional term.

use rand::Rng as _;

use super::params::{BlockLayout, ModelParams};
use crate::data::{EvalInstance, SequenceBatch};
use crate::error::{CasmError, Result};
use crate::numerics::{sigmoid, Matrix, Real, Tape, Var};
use crate::rng::Rng;

const LAYER_NORM_EPS: f64 = 1e-8;

/// Inverted dropout: kept activations are scaled by `1 / (1 − rate)`.
pub struct Dropout {
    pub rate: f64,
    pub rng: Rng,
}

pub enum Mode<'r> {
    Train(&'r mut Dropout),
    Infer,
}

/// Tape handles for every parameter.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    fn get(&self, id: crate::numerics::ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Registers all parameters on `tape` (borrowed, not copied).
pub fn bind<'a, T: Real>(tape: &mut Tape<'a, T>, params: &'a ModelParams<T>) -> Result<Bound> {
    let vars = params.set.ids().map(|id| tape.param(&params.set, id)).collect::<Result<_>>()?;
    Ok(Bound { vars })
}

/// Tape handles produced by [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// Encoded sequence, `batch·max_len × d`.
    pub z: Var,
    /// Positive-target logits, `batch·max_len × 1`.
    pub pos_logits: Var,
    pub neg_logits: Var,
    pub batch_size: usize,
    pub max_len: usize,
}

impl ForwardOutput {
    pub fn pos_scores<T: Real>(&self, tape: &Tape<'_, T>) -> Vec<f64> {
        tape.value(self.pos_logits).data().iter().map(|x| sigmoid(x.as_f64())).collect()
    }

    pub fn neg_scores<T: Real>(&self, tape: &Tape<'_, T>) -> Vec<f64> {
        tape.value(self.neg_logits).data().iter().map(|x| sigmoid(x.as_f64())).collect()
    }
}

/// `lookup(W_l, ids) + b_l`. Id 0 is the padding row.
pub fn embed_items<T: Real>(tape: &mut Tape<'_, T>, params: &ModelParams<T>, bound: &Bound, ids: &[usize]) -> Result<Var> {
    if let Some(&bad) = ids.iter().find(|&&i| i > params.config.num_items) {
        return Err(CasmError::Data(format!(
            "item id {bad} exceeds item count {}",
            params.config.num_items
        )));
    }
    let rows = tape.gather(bound.get(params.layout.item_table), ids.to_vec())?;
    tape.add_row(rows, bound.get(params.layout.item_bias))
}

/// `lookup(W_c, behaviors) + b_c`.
pub fn embed_contexts<T: Real>(
    tape: &mut Tape<'_, T>,
    params: &ModelParams<T>,
    bound: &Bound,
    behaviors: &[usize],
) -> Result<Var> {
    if let Some(&bad) = behaviors.iter().find(|&&b| b >= params.config.num_behaviors) {
        return Err(CasmError::Data(format!(
            "behavior id {bad} not below behavior count {}",
            params.config.num_behaviors
        )));
    }
    let rows = tape.gather(bound.get(params.layout.context_table), behaviors.to_vec())?;
    tape.add_row(rows, bound.get(params.layout.context_bias))
}

/// `[v' | c'] W_f + b_f`.
pub fn fuse<T: Real>(tape: &mut Tape<'_, T>, params: &ModelParams<T>, bound: &Bound, items: Var, contexts: Var) -> Result<Var> {
    let joined = tape.concat_cols(&[items, contexts])?;
    let mapped = tape.matmul(joined, bound.get(params.layout.fuse_weight))?;
    tape.add_row(mapped, bound.get(params.layout.fuse_bias))
}

/// Item/behavior pair embedding shared by sequence inputs and scoring targets.
pub fn embed_pairs<T: Real>(
    tape: &mut Tape<'_, T>,
    params: &ModelParams<T>,
    bound: &Bound,
    items: &[usize],
    behaviors: &[usize],
) -> Result<Var> {
    let v = embed_items(tape, params, bound, items)?;
    if !params.config.use_context {
        return Ok(v);
    }
    let c = embed_contexts(tape, params, bound, behaviors)?;
    fuse(tape, params, bound, v, c)
}

/// `e[b, t] = q[b, t] + P[t]`.
pub fn add_positional<T: Real>(
    tape: &mut Tape<'_, T>,
    params: &ModelParams<T>,
    bound: &Bound,
    q: Var,
    max_len: usize,
) -> Result<Var> {
    let table = params.set.get(params.layout.positions);
    if table.rows() != max_len {
        return Err(CasmError::Config(format!(
            "sequence length {max_len} does not match positional table length {}",
            table.rows()
        )));
    }
    let rows = tape.value(q).rows();
    let pos = tape.gather(bound.get(params.layout.positions), (0..rows).map(|r| r % max_len).collect())?;
    tape.add(q, pos)
}

fn dropout<T: Real>(tape: &mut Tape<'_, T>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
    let Mode::Train(drop) = mode else { return Ok(x) };
    if drop.rate <= 0.0 {
        return Ok(x);
    }
    let (rows, cols) = tape.value(x).shape();
    let keep = T::of(1.0 / (1.0 - drop.rate));
    let rate = drop.rate;
    let rng = &mut drop.rng;
    let factor = Matrix::from_fn(rows, cols, |_, _| if rng.gen::<f64>() < rate { T::zero() } else { keep });
    tape.mul_const(x, factor)
}

fn feed_forward<T: Real>(tape: &mut Tape<'_, T>, bound: &Bound, block: &BlockLayout, x: Var) -> Result<Var> {
    let h = tape.matmul(x, bound.get(block.ffn_w1))?;
    let h = tape.add_row(h, bound.get(block.ffn_b1))?;
    let h = tape.relu(h)?;
    let out = tape.matmul(h, bound.get(block.ffn_w2))?;
    tape.add_row(out, bound.get(block.ffn_b2))
}

fn multi_head<T: Real>(
    tape: &mut Tape<'_, T>,
    params: &ModelParams<T>,
    bound: &Bound,
    block: &BlockLayout,
    x: Var,
    key_valid: &[bool],
    max_len: usize,
) -> Result<Var> {
    let scale = T::of(1.0 / (params.config.head_dim() as f64).sqrt());
    let mut heads = Vec::with_capacity(block.query.len());
    for h in 0..block.query.len() {
        let q = tape.matmul(x, bound.get(block.query[h]))?;
        let k = tape.matmul(x, bound.get(block.key[h]))?;
        let v = tape.matmul(x, bound.get(block.value[h]))?;
        heads.push(tape.masked_attention(q, k, v, max_len, key_valid, true, scale)?);
    }
    if heads.len() == 1 {
        Ok(heads[0])
    } else {
        tape.concat_cols(&heads)
    }
}

/// One self-attention block over `batch·max_len` rows.
#[allow(clippy::too_many_arguments)]
pub fn attention_block<T: Real>(
    tape: &mut Tape<'_, T>,
    params: &ModelParams<T>,
    bound: &Bound,
    block: usize,
    e: Var,
    key_valid: &[bool],
    max_len: usize,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let layout = &params.layout.blocks[block];
    if params.config.plain_block {
        let a = multi_head(tape, params, bound, layout, e, key_valid, max_len)?;
        return feed_forward(tape, bound, layout, a);
    }
    let eps = T::of(LAYER_NORM_EPS);
    let (g1, b1) = layout.attn_norm.expect("norm present");
    let n1 = tape.layer_norm(e, bound.get(g1), bound.get(b1), eps)?;
    let a = multi_head(tape, params, bound, layout, n1, key_valid, max_len)?;
    let a = dropout(tape, a, mode)?;
    let h = tape.add(e, a)?;
    let (g2, b2) = layout.ffn_norm.expect("norm present");
    let n2 = tape.layer_norm(h, bound.get(g2), bound.get(b2), eps)?;
    let f = feed_forward(tape, bound, layout, n2)?;
    let f = dropout(tape, f, mode)?;
    tape.add(h, f)
}

/// Encodes left-padded `[batch, max_len]` sequences into `Z`.
#[allow(clippy::too_many_arguments)]
pub fn encode<T: Real>(
    tape: &mut Tape<'_, T>,
    params: &ModelParams<T>,
    bound: &Bound,
    items: &[usize],
    behaviors: &[usize],
    key_valid: &[bool],
    max_len: usize,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let q = embed_pairs(tape, params, bound, items, behaviors)?;
    let e = add_positional(tape, params, bound, q, max_len)?;
    let mut x = dropout(tape, e, mode)?;
    for b in 0..params.config.blocks {
        x = attention_block(tape, params, bound, b, x, key_valid, max_len, mode)?;
    }
    if let Some((g, b)) = params.layout.final_norm {
        x = tape.layer_norm(x, bound.get(g), bound.get(b), T::of(LAYER_NORM_EPS))?;
    }
    Ok(x)
}

/// Training-style forward: per-step positive and negative logits.
pub fn forward<'a, T: Real>(
    tape: &mut Tape<'a, T>,
    params: &'a ModelParams<T>,
    batch: &SequenceBatch,
    mode: &mut Mode<'_>,
) -> Result<ForwardOutput> {
    if batch.max_len != params.config.max_len {
        return Err(CasmError::Config(format!(
            "batch sequence length {} does not match model max_len {}",
            batch.max_len, params.config.max_len
        )));
    }
    let bound = bind(tape, params)?;
    let z = encode(tape, params, &bound, &batch.input_items, &batch.input_behaviors, &batch.mask, batch.max_len, mode)?;
    let pos_q = embed_pairs(tape, params, &bound, &batch.pos_items, &batch.pos_behaviors)?;
    let neg_q = embed_pairs(tape, params, &bound, &batch.neg_items, &batch.pos_behaviors)?;
    let pos_logits = tape.row_dot(z, pos_q)?;
    let neg_logits = tape.row_dot(z, neg_q)?;
    Ok(ForwardOutput { z, pos_logits, neg_logits, batch_size: batch.batch_size, max_len: batch.max_len })
}

/// Scores candidate lists against the last position of each input sequence.
/// Returns a `n × candidates` matrix of logits (higher ranks first).
pub fn score_candidates<T: Real>(
    params: &ModelParams<T>,
    inputs: &[(&[usize], &[usize])],
    candidates: &[&[usize]],
    target_behavior: usize,
) -> Result<Matrix<T>> {
    let l = params.config.max_len;
    let n = inputs.len();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let c = candidates[0].len();
    if candidates.len() != n || candidates.iter().any(|cs| cs.len() != c) {
        return Err(CasmError::Config("every input needs a candidate list of equal length".into()));
    }
    let mut items = Vec::with_capacity(n * l);
    let mut behaviors = Vec::with_capacity(n * l);
    for (it, bh) in inputs {
        if it.len() != l || bh.len() != l {
            return Err(CasmError::Config(format!("input sequences must have length {l}")));
        }
        items.extend_from_slice(it);
        behaviors.extend_from_slice(bh);
    }
    let key_valid: Vec<bool> = items.iter().map(|&i| i != 0).collect();
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params)?;
    let z = encode(&mut tape, params, &bound, &items, &behaviors, &key_valid, l, &mut Mode::Infer)?;
    let last = tape.gather(z, (0..n).map(|b| b * l + l - 1).collect())?;
    let repeated = tape.gather(last, (0..n * c).map(|i| i / c).collect())?;
    let flat: Vec<usize> = candidates.iter().flat_map(|cs| cs.iter().copied()).collect();
    let targets = embed_pairs(&mut tape, params, &bound, &flat, &vec![target_behavior; n * c])?;
    let logits = tape.row_dot(repeated, targets)?;
    Matrix::new(n, c, tape.value(logits).data().to_vec())
}

/// Candidate logits for evaluation instances (one row per instance).
pub fn score_instances<T: Real>(params: &ModelParams<T>, instances: &[EvalInstance]) -> Result<Matrix<T>> {
    let inputs: Vec<(&[usize], &[usize])> =
        instances.iter().map(|i| (i.input_items.as_slice(), i.input_behaviors.as_slice())).collect();
    let cands: Vec<&[usize]> = instances.iter().map(|i| i.candidates.as_slice()).collect();
    let target = instances.first().map_or(0, |i| i.target_behavior);
    if instances.iter().any(|i| i.target_behavior != target) {
        return Err(CasmError::Config("instances in one scoring call must share a target behavior".into()));
    }
    score_candidates(params, &inputs, &cands, target)
}
