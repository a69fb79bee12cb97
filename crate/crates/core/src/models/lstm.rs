//! Stacked LSTM; batch norm on the last hidden state feeds a ReLU head.

use std::sync::Arc;

use super::{Ctx, Init, ModelSpec};
use crate::tensor::{Tape, Tensor, Var};
use crate::Result;

pub(super) fn init(spec: &ModelSpec, init: &mut Init) -> Result<()> {
    let h = spec.hidden;
    for layer in 0..spec.layers {
        let input = if layer == 0 { spec.input_dim() } else { h };
        init_cell(init, &format!("lstm{layer}"), input, h)?;
    }
    init.batch_norm("bn", h)?;
    init.dense("fc1", h, spec.dense)?;
    init.dense("fc2", spec.dense, spec.horizon)
}

pub(super) fn init_cell(init: &mut Init, prefix: &str, input: usize, h: usize) -> Result<()> {
    init.uniform(&format!("{prefix}.w_ih"), vec![input, 4 * h], h)?;
    init.uniform(&format!("{prefix}.w_hh"), vec![h, 4 * h], h)?;
    init.uniform(&format!("{prefix}.bias"), vec![4 * h], h)
}

pub(super) fn forward(spec: &ModelSpec, tape: &mut Tape, ctx: &mut Ctx, x: Var, batch: usize) -> Result<Var> {
    let mut seq = time_major(spec, tape, x, batch)?;
    let mut last = None;
    for layer in 0..spec.layers {
        let states = run_cell(
            tape,
            ctx,
            &format!("lstm{layer}"),
            seq,
            batch,
            spec.steps(),
            spec.hidden,
        )?;
        last = states.last().copied();
        if layer + 1 < spec.layers {
            seq = tape.concat_rows(&states)?;
        }
    }
    let h_t = last.expect("at least one step");
    let h = ctx.batch_norm(tape, h_t, "bn")?;
    let h = ctx.dense(tape, h, "fc1")?;
    let h = tape.relu(h);
    ctx.dense(tape, h, "fc2")
}

/// Reorder batch-major tokens to time-major rows `t·B + b`.
pub(super) fn time_major(spec: &ModelSpec, tape: &mut Tape, x: Var, batch: usize) -> Result<Var> {
    let (t_len, d) = (spec.steps(), spec.input_dim());
    let mut idx = Vec::with_capacity(t_len * batch * d);
    for t in 0..t_len {
        for b in 0..batch {
            for j in 0..d {
                idx.push(Some((b * t_len + t) * d + j));
            }
        }
    }
    tape.gather(x, Arc::new(idx), vec![t_len * batch, d])
}

/// One LSTM layer over a time-major `[T·B, in]` sequence; returns `h_t` per
/// step, each `[B, h]`. Gate order is input, forget, cell, output.
pub(super) fn run_cell(
    tape: &mut Tape,
    ctx: &Ctx,
    prefix: &str,
    seq: Var,
    batch: usize,
    steps: usize,
    h: usize,
) -> Result<Vec<Var>> {
    let w_ih = ctx.var(&format!("{prefix}.w_ih"))?;
    let w_hh = ctx.var(&format!("{prefix}.w_hh"))?;
    let bias = ctx.var(&format!("{prefix}.bias"))?;
    let projected = tape.affine(seq, w_ih, bias)?;
    let mut h_prev = tape.constant(Tensor::zeros(vec![batch, h]));
    let mut c_prev = tape.constant(Tensor::zeros(vec![batch, h]));
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let xg = tape.slice_rows(projected, t * batch, (t + 1) * batch)?;
        let hg = tape.matmul(h_prev, w_hh)?;
        let gates = tape.add(xg, hg)?;
        let i = tape.slice_cols(gates, 0, h)?;
        let f = tape.slice_cols(gates, h, 2 * h)?;
        let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
        let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h_t = tape.mul(o, tc)?;
        out.push(h_t);
        h_prev = h_t;
        c_prev = c;
    }
    Ok(out)
}
