//! Dense multilayer perceptrons with hand-written backprop, Adam, and MSE.
//!
//! Everything is `f64` and value-typed: cloning a network clones its parameters,
//! and a fixed seed always reproduces the same initialization.

mod adam;
mod gradcheck;
mod loss;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, Loss, FD_STEP};
pub use loss::{mse, mse_grad};
pub use mlp::{Activation, ForwardTrace, Gradients, Layer, Mlp};

use crate::error::Result;

/// Mini-batch regression trainer: one Adam step on mean MSE over `batch`.
///
/// Returns the batch loss measured before the update.
pub fn train_step<'a, I>(
    mlp: &mut Mlp,
    adam: &mut AdamState,
    lr: f64,
    batch: I,
    scratch: &mut TrainScratch,
) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    scratch.ensure(mlp);
    scratch.grads.fill_zero();
    let mut n = 0usize;
    let mut total = 0.0;
    for (x, target) in batch {
        mlp.forward_trace(x, &mut scratch.trace)?;
        let pred = scratch.trace.output();
        total += mse(pred, target)?;
        mse_grad(pred, target, &mut scratch.upstream)?;
        mlp.backward_accumulate(&scratch.trace, &scratch.upstream, &mut scratch.grads)?;
        n += 1;
    }
    if n == 0 {
        return Ok(0.0);
    }
    scratch.grads.scale(1.0 / n as f64);
    adam_step(mlp, &scratch.grads, adam, lr)?;
    Ok(total / n as f64)
}

/// Reusable buffers for [`train_step`].
#[derive(Debug, Default)]
pub struct TrainScratch {
    trace: ForwardTrace,
    upstream: Vec<f64>,
    grads: Gradients,
}

impl TrainScratch {
    fn ensure(&mut self, mlp: &Mlp) {
        let same = self.grads.layers.len() == mlp.layers().len()
            && self.grads.layers.iter().zip(mlp.layers()).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            });
        if !same {
            self.grads = Gradients::zeros_like(mlp);
        }
    }
}

impl Default for Gradients {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}
