//! LSTM over the window, then a kernel-3 convolution along time over the
//! hidden-state sequence, batch norm and a ReLU head.

use std::sync::Arc;

use super::lstm::{init_cell, run_cell, time_major};
use super::{Ctx, Init, ModelSpec};
use crate::tensor::{Tape, Var};
use crate::Result;

pub(super) fn init(spec: &ModelSpec, init: &mut Init) -> Result<()> {
    let h = spec.hidden;
    init_cell(init, "lstm0", spec.input_dim(), h)?;
    init.dense("conv", 3 * h, h)?;
    init.batch_norm("bn", h)?;
    init.dense("fc1", spec.steps() * h, spec.dense)?;
    init.dense("fc2", spec.dense, spec.horizon)
}

pub(super) fn forward(spec: &ModelSpec, tape: &mut Tape, ctx: &mut Ctx, x: Var, batch: usize) -> Result<Var> {
    let (steps, h) = (spec.steps(), spec.hidden);
    let seq = time_major(spec, tape, x, batch)?;
    let states = run_cell(tape, ctx, "lstm0", seq, batch, steps, h)?;
    let hs = tape.concat_rows(&states)?;

    // Patch row (b, t), column k·h + j reads hidden state (t + k − 1, b, j).
    let mut idx = Vec::with_capacity(batch * steps * 3 * h);
    for b in 0..batch {
        for t in 0..steps {
            for k in 0..3 {
                let tt = (t + k).checked_sub(1).filter(|&v| v < steps);
                for j in 0..h {
                    idx.push(tt.map(|tt| (tt * batch + b) * h + j));
                }
            }
        }
    }
    let patches = tape.gather(hs, Arc::new(idx), vec![batch * steps, 3 * h])?;
    let c = ctx.dense(tape, patches, "conv")?;
    let c = tape.relu(c);
    let c = ctx.batch_norm(tape, c, "bn")?;
    let flat = tape.reshape(c, vec![batch, steps * h])?;
    let z = ctx.dense(tape, flat, "fc1")?;
    let z = tape.relu(z);
    ctx.dense(tape, z, "fc2")
}
