use crate::error::{Error, Result};
use crate::real::{cast, Real};
use crate::tensor::Tensor;

fn sequence_dims<F: Real>(output: &Tensor<F>) -> Result<(usize, usize, usize)> {
    match *output.shape() {
        [t, b, f] if t > 0 => Ok((t, b, f)),
        _ => Err(Error::InvalidParameter(format!(
            "expected a [T, B, features] output, got {:?}",
            output.shape()
        ))),
    }
}

/// Mean over time of a `[T, B, F]` output, as `[B][F]`.
pub fn firing_rates<F: Real>(output: &Tensor<F>) -> Result<Vec<Vec<f64>>> {
    let (t, b, f) = sequence_dims(output)?;
    let mut rates = vec![vec![0.0; f]; b];
    for step in output.data().chunks(b * f) {
        for (r, row) in rates.iter_mut().zip(step.chunks(f)) {
            r.iter_mut().zip(row).for_each(|(acc, v)| *acc += v.as_f64());
        }
    }
    let scale = 1.0 / t as f64;
    rates.iter_mut().flatten().for_each(|v| *v *= scale);
    Ok(rates)
}

/// Class scores: time-averaged rates pooled over non-overlapping groups of
/// `kernel` neurons with step `stride`.
pub fn voting_decode<F: Real>(
    output: &Tensor<F>,
    kernel: usize,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    let (_, _, f) = sequence_dims(output)?;
    if kernel == 0 || stride == 0 || f < kernel || (f - kernel) % stride != 0 {
        return Err(Error::InvalidParameter(format!(
            "{f} output neurons do not split into voting groups of {kernel}"
        )));
    }
    let classes = (f - kernel) / stride + 1;
    Ok(firing_rates(output)?
        .into_iter()
        .map(|r| {
            (0..classes)
                .map(|c| r[c * stride..c * stride + kernel].iter().sum::<f64>() / kernel as f64)
                .collect()
        })
        .collect())
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Rate MSE against one-hot targets, averaged over classes and batch.
///
/// `output` is the network output after any voting layer, so each feature
/// is one class. Returns the loss and `dL/d output` for every step.
pub fn mse_rate_loss<F: Real>(output: &Tensor<F>, targets: &[usize]) -> Result<(f64, Tensor<F>)> {
    let (t, b, f) = sequence_dims(output)?;
    if targets.len() != b {
        return Err(Error::InvalidParameter(format!(
            "{} targets for a batch of {b}",
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&c| c >= f) {
        return Err(Error::InvalidParameter(format!(
            "target class {bad} outside {f} outputs"
        )));
    }
    let rates = firing_rates(output)?;
    let mut loss = 0.0;
    let mut step_grad = vec![F::zero(); b * f];
    let scale = 2.0 / (f * b * t) as f64;
    for (i, (r, &target)) in rates.iter().zip(targets).enumerate() {
        for (c, &rate) in r.iter().enumerate() {
            let diff = rate - if c == target { 1.0 } else { 0.0 };
            loss += diff * diff;
            step_grad[i * f + c] = cast::<F>(scale * diff);
        }
    }
    loss /= (f * b) as f64;
    let grad = step_grad.repeat(t);
    Ok((loss, Tensor::new(vec![t, b, f], grad)?))
}
