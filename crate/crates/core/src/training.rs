//! Minibatch loop shared by the forecasters and the regressors.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::{Adam, Parameterized, RngStream};

/// One pass over `samples` in a shuffled order: per-sample gradients are
/// summed, averaged over the batch and applied with Adam. Returns the mean
/// per-sample loss. Hidden state never crosses samples.
pub(crate) fn run_epoch<M, S, F>(
    model: &mut M,
    optimizer: &mut Adam,
    samples: &[S],
    batch_size: usize,
    epoch: usize,
    shuffle: &RngStream,
    mut loss_and_grad: F,
) -> Result<f64>
where
    M: Parameterized + Clone,
    F: FnMut(&M, &S, &mut M) -> Result<f64>,
{
    let diverged = |e: Error| match e {
        Error::NonFinite { .. } => Error::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut shuffle.child(format!("epoch/{epoch}")).rng());
    let mut total = 0.0;
    let mut grads = model.zeros_like();
    for batch in order.chunks(batch_size.max(1)) {
        for (_, g) in grads.params_mut() {
            g.fill(0.0);
        }
        let mut batch_loss = 0.0;
        for &i in batch {
            batch_loss += loss_and_grad(model, &samples[i], &mut grads).map_err(diverged)?;
        }
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: batch_loss,
            });
        }
        total += batch_loss;
        grads.scale_all(1.0 / batch.len() as f64);
        optimizer.step(model, &grads).map_err(diverged)?;
    }
    Ok(total / samples.len() as f64)
}
