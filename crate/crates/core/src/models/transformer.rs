//! Encoder-only Transformer over the token sequence. Blocks are residual
//! multi-head self-attention followed by a residual feed-forward sublayer with
//! batch norm; the encoded sequence is mean-pooled into a ReLU head.

use super::{Ctx, Init, ModelSpec};
use crate::tensor::{Tape, Tensor, Var};
use crate::Result;

pub(super) fn init(spec: &ModelSpec, init: &mut Init) -> Result<()> {
    let d = spec.hidden;
    init.dense("embed", spec.input_dim(), d)?;
    for l in 0..spec.layers {
        let p = format!("block{l}");
        init.dense(&format!("{p}.q"), d, d)?;
        init.dense(&format!("{p}.k"), d, d)?;
        init.dense(&format!("{p}.v"), d, d)?;
        init.dense(&format!("{p}.o"), d, d)?;
        init.dense(&format!("{p}.ff1"), d, spec.ff_hidden)?;
        init.batch_norm(&format!("{p}.bn"), spec.ff_hidden)?;
        init.dense(&format!("{p}.ff2"), spec.ff_hidden, d)?;
    }
    init.dense("fc1", d, spec.dense)?;
    init.dense("fc2", spec.dense, spec.horizon)
}

/// Sinusoidal encoding of position `t` in a width-`d` model.
pub fn positional_encoding(t: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = t as f64 / freq;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

pub(super) fn forward(spec: &ModelSpec, tape: &mut Tape, ctx: &mut Ctx, x: Var, batch: usize) -> Result<Var> {
    let (steps, d) = (spec.steps(), spec.hidden);
    let mut h = ctx.dense(tape, x, "embed")?;
    if spec.positional_encoding {
        let mut pe = Vec::with_capacity(batch * steps * d);
        for _ in 0..batch {
            for t in 0..steps {
                pe.extend(positional_encoding(t, d));
            }
        }
        let pe = tape.constant(Tensor::matrix(batch * steps, d, pe)?);
        h = tape.add(h, pe)?;
    }
    for l in 0..spec.layers {
        let p = format!("block{l}");
        let attn = attention(spec, tape, ctx, h, batch, &p)?;
        h = tape.add(h, attn)?;
        let f = ctx.dense(tape, h, &format!("{p}.ff1"))?;
        let f = ctx.batch_norm(tape, f, &format!("{p}.bn"))?;
        let f = tape.relu(f);
        let f = ctx.dense(tape, f, &format!("{p}.ff2"))?;
        h = tape.add(h, f)?;
    }
    let mut pool = vec![0.0; batch * batch * steps];
    for b in 0..batch {
        for t in 0..steps {
            pool[b * batch * steps + b * steps + t] = 1.0 / steps as f64;
        }
    }
    let pool = tape.constant(Tensor::matrix(batch, batch * steps, pool)?);
    let pooled = tape.matmul(pool, h)?;
    let z = ctx.dense(tape, pooled, "fc1")?;
    let z = tape.relu(z);
    ctx.dense(tape, z, "fc2")
}

fn attention(spec: &ModelSpec, tape: &mut Tape, ctx: &Ctx, h: Var, batch: usize, p: &str) -> Result<Var> {
    let (steps, heads) = (spec.steps(), spec.heads);
    let dh = spec.hidden / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = ctx.dense(tape, h, &format!("{p}.q"))?;
    let k = ctx.dense(tape, h, &format!("{p}.k"))?;
    let v = ctx.dense(tape, h, &format!("{p}.v"))?;
    let mut per_batch = Vec::with_capacity(batch);
    for b in 0..batch {
        let (lo, hi) = (b * steps, (b + 1) * steps);
        let qb = tape.slice_rows(q, lo, hi)?;
        let kb = tape.slice_rows(k, lo, hi)?;
        let vb = tape.slice_rows(v, lo, hi)?;
        let mut per_head = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (c0, c1) = (hd * dh, (hd + 1) * dh);
            let qh = tape.slice_cols(qb, c0, c1)?;
            let kh = tape.slice_cols(kb, c0, c1)?;
            let vh = tape.slice_cols(vb, c0, c1)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores)?;
            per_head.push(tape.matmul(weights, vh)?);
        }
        per_batch.push(tape.concat_cols(&per_head)?);
    }
    let joined = tape.concat_rows(&per_batch)?;
    ctx.dense(tape, joined, &format!("{p}.o"))
}
