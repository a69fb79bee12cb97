//! Two 3×3 "same" convolution blocks over the feature × time image, each
//! followed by leaky ReLU and batch norm, then a dense head.

use std::sync::Arc;

use super::{Ctx, Init, ModelSpec, LEAKY_SLOPE};
use crate::tensor::{Tape, Var};
use crate::Result;

pub(super) fn init(spec: &ModelSpec, init: &mut Init) -> Result<()> {
    let c = spec.hidden;
    init.dense("conv1", 9, c)?;
    init.batch_norm("bn1", c)?;
    init.dense("conv2", 9 * c, c)?;
    init.batch_norm("bn2", c)?;
    init.dense("fc1", spec.input_dim() * spec.steps() * c, spec.dense)?;
    init.dense("fc2", spec.dense, spec.horizon)
}

pub(super) fn forward(spec: &ModelSpec, tape: &mut Tape, ctx: &mut Ctx, x: Var, batch: usize) -> Result<Var> {
    let (rows, cols, c) = (spec.input_dim(), spec.steps(), spec.hidden);
    // Image pixel (b, r, t) is token element (b·T + t)·D + r.
    let cols1 = im2col(batch, rows, cols, 1, |b, r, t, _| (b * cols + t) * rows + r);
    let p1 = tape.gather(x, cols1, vec![batch * rows * cols, 9])?;
    let h = ctx.dense(tape, p1, "conv1")?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    let h = ctx.batch_norm(tape, h, "bn1")?;

    let cols2 = im2col(batch, rows, cols, c, |b, r, t, ch| ((b * rows + r) * cols + t) * c + ch);
    let p2 = tape.gather(h, cols2, vec![batch * rows * cols, 9 * c])?;
    let h = ctx.dense(tape, p2, "conv2")?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    let h = ctx.batch_norm(tape, h, "bn2")?;

    let flat = tape.reshape(h, vec![batch, rows * cols * c])?;
    let h = ctx.dense(tape, flat, "fc1")?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    ctx.dense(tape, h, "fc2")
}

/// Patch matrix for a 3×3 zero-padded convolution. Output row `(b, r, t)`,
/// column `(kr·3 + kc)·C + ch`.
fn im2col(
    batch: usize,
    rows: usize,
    cols: usize,
    channels: usize,
    src: impl Fn(usize, usize, usize, usize) -> usize,
) -> Arc<Vec<Option<usize>>> {
    let mut idx = Vec::with_capacity(batch * rows * cols * 9 * channels);
    for b in 0..batch {
        for r in 0..rows {
            for t in 0..cols {
                for kr in 0..3 {
                    for kc in 0..3 {
                        let rr = (r + kr).checked_sub(1).filter(|&v| v < rows);
                        let tt = (t + kc).checked_sub(1).filter(|&v| v < cols);
                        for ch in 0..channels {
                            idx.push(match (rr, tt) {
                                (Some(rr), Some(tt)) => Some(src(b, rr, tt, ch)),
                                _ => None,
                            });
                        }
                    }
                }
            }
        }
    }
    Arc::new(idx)
}
