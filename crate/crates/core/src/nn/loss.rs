use crate::{Element, Error, Result, Tensor};

const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = logits.dims2()?;
    if cols < 2 {
        return Err(Error::Dimension(format!("softmax needs >= 2 classes, got {cols}")));
    }
    let mut out = logits.clone();
    for i in 0..rows {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(out)
}

pub fn one_hot<T: Element>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::InvalidLabel(format!("label {l} >= class count {classes}")));
        }
        t.row_mut(i)[l] = T::one();
    }
    Ok(t)
}

fn true_class<T: Element>(row: &[T], i: usize) -> Result<usize> {
    let mut hot = None;
    for (j, &v) in row.iter().enumerate() {
        if v == T::one() {
            if hot.is_some() {
                return Err(Error::InvalidLabel(format!("row {i} has several hot entries")));
            }
            hot = Some(j);
        } else if v != T::zero() {
            return Err(Error::InvalidLabel(format!("row {i} is not one-hot")));
        }
    }
    hot.ok_or_else(|| Error::InvalidLabel(format!("row {i} has no hot entry")))
}

/// Mean over the batch of `−ln p[true]`, with `p` clipped to `[1e-12, 1]`.
pub fn cross_entropy<T: Element>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<f64> {
    let (rows, _) = probs.dims2()?;
    if labels.shape() != probs.shape() {
        return Err(Error::Dimension(format!(
            "labels {:?} vs probs {:?}",
            labels.shape(),
            probs.shape()
        )));
    }
    let mut idx = Vec::with_capacity(rows);
    for i in 0..rows {
        let sum: f64 = probs.row(i).iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidParameter(format!(
                "probability row {i} sums to {sum}"
            )));
        }
        idx.push(true_class(labels.row(i), i)?);
    }
    cross_entropy_labels(probs, &idx)
}

/// Same as [`cross_entropy`] with integer class labels.
pub fn cross_entropy_labels<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (rows, cols) = probs.dims2()?;
    if labels.len() != rows || rows == 0 {
        return Err(Error::Dimension(format!(
            "{} labels for {rows} rows",
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= cols {
            return Err(Error::InvalidLabel(format!("label {l} >= class count {cols}")));
        }
        let p = probs.row(i)[l].as_f64().clamp(PROB_FLOOR, 1.0);
        total -= p.ln();
    }
    Ok(total / rows as f64)
}

/// Gradient of the batch-mean softmax cross-entropy with respect to the
/// logits: `(probs − onehot) / B`.
pub fn softmax_ce_grad<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let (rows, cols) = probs.dims2()?;
    if labels.len() != rows {
        return Err(Error::Dimension(format!("{} labels for {rows} rows", labels.len())));
    }
    let scale = T::from_f64(1.0 / rows as f64);
    let mut g = probs.clone();
    for (i, &l) in labels.iter().enumerate() {
        if l >= cols {
            return Err(Error::InvalidLabel(format!("label {l} >= class count {cols}")));
        }
        let row = g.row_mut(i);
        row[l] = row[l] - T::one();
        row.iter_mut().for_each(|v| *v = *v * scale);
    }
    Ok(g)
}
