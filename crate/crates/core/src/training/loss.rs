use crate::error::{Error, Result};
use crate::model::{Scalar, Tensor};

fn check(logits: &Tensor<impl Scalar>, labels: &[usize]) -> Result<(usize, usize)> {
    if logits.shape.len() != 2 {
        return Err(Error::Shape(format!("logits must be [n, classes], got {:?}", logits.shape)));
    }
    let (n, c) = (logits.shape[0], logits.shape[1]);
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    if logits.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok((n, c))
}

/// Mean negative log-softmax of the true class, evaluated in f64 after
/// subtracting each row's maximum.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    cross_entropy_with_grad(logits, labels).map(|(loss, _)| loss)
}

/// Loss and its gradient with respect to the logits, `(softmax - onehot) / n`.
pub fn cross_entropy_with_grad<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (n, c) = check(logits, labels)?;
    let mut grad = Tensor::zeros(&[n, c]);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.data[i * c..(i + 1) * c]
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[label];
        for (j, v) in row.iter().enumerate() {
            let p = (v - lse).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            grad.data[i * c + j] = T::from_f64_lossy((p - target) / n as f64);
        }
    }
    Ok((total / n as f64, grad))
}

/// Lowest index among the maxima of each row.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let c = logits.shape[1];
    logits
        .data
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
