use super::{NetError, Scalar};

/// Softmax restricted to the masked-in entries. Masked-out entries are
/// exactly zero; the maximum masked-in logit is subtracted first.
pub fn masked_softmax<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<T>, NetError> {
    if logits.len() != mask.len() {
        return Err(NetError::Shape { what: "mask", expected: logits.len(), got: mask.len() });
    }
    let max = masked_max(logits, mask).ok_or(NetError::NoLegalMove)?;
    let mut out: Vec<T> = logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { (z - max).exp() } else { T::zero() })
        .collect();
    let sum: T = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / sum;
    }
    Ok(out)
}

/// `-ln softmax(logits)[target]` over the masked-in entries, computed in
/// log space so tiny probabilities do not underflow.
pub fn masked_nll<T: Scalar>(logits: &[T], mask: &[bool], target: usize) -> Result<T, NetError> {
    if !mask.get(target).copied().unwrap_or(false) {
        return Err(NetError::InvalidTarget(target));
    }
    let max = masked_max(logits, mask).ok_or(NetError::NoLegalMove)?;
    let sum: T = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(&z, _)| (z - max).exp()).sum();
    Ok(sum.ln() - (logits[target] - max))
}

fn masked_max<T: Scalar>(logits: &[T], mask: &[bool]) -> Option<T> {
    logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .reduce(T::max)
}
