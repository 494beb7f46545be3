use crate::error::{Error, Result};
use crate::labels::{LabelVector, PerceptionVector};

fn check(preds: &[PerceptionVector], labels: &[LabelVector]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(Error::Empty("perception predictions"));
    }
    Ok(())
}

/// Share of samples whose whole 10-bit vector is predicted exactly.
pub fn macc(preds: &[PerceptionVector], labels: &[LabelVector]) -> Result<f64> {
    check(preds, labels)?;
    let t = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(t as f64 / preds.len() as f64)
}

/// Recall of bit `i`: among samples labelled with it, the share predicted with it.
pub fn dacc(preds: &[PerceptionVector], labels: &[LabelVector], i: usize) -> Result<f64> {
    check(preds, labels)?;
    let bit = crate::labels::LabelBit::from_index(i).ok_or(Error::EmptyClass(i))?;
    let (mut hit, mut n) = (0usize, 0usize);
    for (p, l) in preds.iter().zip(labels) {
        if l.get(bit) {
            n += 1;
            if p.get(bit) {
                hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyClass(i));
    }
    Ok(hit as f64 / n as f64)
}

/// Precision of bit `i`; `None` when the bit is never predicted.
pub fn precision(
    preds: &[PerceptionVector],
    labels: &[LabelVector],
    i: usize,
) -> Result<Option<f64>> {
    check(preds, labels)?;
    let bit = crate::labels::LabelBit::from_index(i).ok_or(Error::EmptyClass(i))?;
    let (mut hit, mut n) = (0usize, 0usize);
    for (p, l) in preds.iter().zip(labels) {
        if p.get(bit) {
            n += 1;
            if l.get(bit) {
                hit += 1;
            }
        }
    }
    Ok((n > 0).then(|| hit as f64 / n as f64))
}
