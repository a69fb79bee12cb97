use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is essentially zero are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(param index, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose ±eps probes straddle a rectifier kink.
    pub skipped: usize,
}

/// Compare tape gradients against central finite differences
/// `(f(x+eps) - f(x-eps)) / (2 eps)` for every coordinate of every parameter.
///
/// `f` builds a scalar graph from parameter vars. Coordinates where the two
/// probes land on different linear pieces of a relu/leaky-relu are excluded.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let eval = |ps: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = scalar(&tape, out)?;
        Ok((value, tape.kink_signature()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out)?;
    let base_sig = tape.kink_signature();
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect::<Result<_>>()?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    let mut probe: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for ci in 0..p.len() {
            let x0 = p.data()[ci];
            probe[pi].data_mut()[ci] = x0 + eps;
            let (fp, sp) = eval(&probe)?;
            probe[pi].data_mut()[ci] = x0 - eps;
            let (fm, sm) = eval(&probe)?;
            probe[pi].data_mut()[ci] = x0;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[pi].data()[ci];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite(format!("gradient of param {pi}[{ci}]")));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, ci));
            }
        }
    }
    Ok(report)
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(Error::Shape("grad_check needs a scalar function".into()));
    }
    let x = t.data()[0];
    if !x.is_finite() {
        return Err(Error::NonFinite("function value".into()));
    }
    Ok(x)
}
