use crate::error::{Result, TensorError};
use crate::params::ParamStore;

/// Adagrad: per-coordinate accumulator of squared gradients,
///
///   acc += g²,   p -= lr · g / (√acc + eps)
///
/// Accumulators only grow, so effective step sizes shrink monotonically.
#[derive(Debug, Clone, Copy)]
pub struct Adagrad {
    pub lr: f32,
    pub eps: f32,
}

impl Adagrad {
    pub fn new(lr: f32) -> Self {
        Adagrad { lr, eps: 1e-8 }
    }

    /// Apply one update in parameter insertion order and clear grads.
    /// Every parameter must carry a gradient: a missing one means the
    /// caller forgot a backward pass or a harvest, which we refuse to
    /// paper over. (An all-zero gradient is fine and leaves the value
    /// bit-identical since acc stays 0 for untouched coordinates.)
    pub fn step(&self, store: &mut ParamStore) -> Result<()> {
        for (_, p) in store.iter_mut() {
            let grad = p.grad.take().ok_or_else(|| {
                TensorError::Contract(format!("adagrad step: no gradient for {:?}", p.name))
            })?;
            for ((v, a), &g) in
                p.value.data_mut().iter_mut().zip(p.acc.data_mut()).zip(grad.data())
            {
                *a += g * g;
                *v -= self.lr * g / (a.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
