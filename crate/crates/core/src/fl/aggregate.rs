use crate::models::ParamSet;
use crate::{Error, Result};

/// Sample-count weighted mean of every entry, batch-norm state included.
pub fn aggregate_fedavg(updates: &[(&ParamSet, usize)]) -> Result<ParamSet> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::Empty("no updates to aggregate".into()))?;
    for (p, _) in &updates[1..] {
        first.check_compatible(p)?;
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("total sample count is zero".into()));
    }
    let weights: Vec<f64> = updates.iter().map(|(_, n)| *n as f64 / total as f64).collect();
    let mut out = (*first).clone();
    for (i, entry) in out.entries_mut().iter_mut().enumerate() {
        let acc = entry.tensor.data_mut();
        acc.iter_mut().for_each(|v| *v = 0.0);
        for ((p, _), w) in updates.iter().zip(&weights) {
            if *w == 0.0 {
                continue;
            }
            for (a, x) in acc.iter_mut().zip(p.entries()[i].tensor.data()) {
                *a += w * x;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedBnAggregate {
    /// FedAvg of all entries; only the non-batch-norm block is meaningful.
    pub shared: ParamSet,
    /// Per update: the shared block with that client's own batch-norm entries.
    pub clients: Vec<ParamSet>,
}

/// Average the non-batch-norm block; every batch-norm entry stays with the
/// client that produced it.
pub fn aggregate_fedbn(updates: &[(&ParamSet, usize)]) -> Result<FedBnAggregate> {
    let shared = aggregate_fedavg(updates)?;
    let clients = updates
        .iter()
        .map(|(own, _)| personalize(&shared, own))
        .collect::<Result<_>>()?;
    Ok(FedBnAggregate { shared, clients })
}

/// `shared` with the batch-norm entries of `own`.
pub fn personalize(shared: &ParamSet, own: &ParamSet) -> Result<ParamSet> {
    let mut p = shared.clone();
    p.overwrite_from(own, |e| e.is_batchnorm)?;
    Ok(p)
}
