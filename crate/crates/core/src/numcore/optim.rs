use super::{Array, ParamStore};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "sgd needs lr > 0 and 0 <= momentum < 1, got lr={lr}, momentum={momentum}"
            )));
        }
        Ok(Sgd { lr, momentum })
    }

    pub fn step(&self, store: &mut ParamStore) -> Result<()> {
        sgd_step(store, self.lr, self.momentum)
    }
}

/// `v <- momentum * v + grad; param <- param - lr * v`, then zero the gradients.
///
/// Only trainable parameters move. Gradients are checked for finiteness
/// before anything is updated, so a failed step leaves the store untouched.
pub fn sgd_step(store: &mut ParamStore, lr: f64, momentum: f64) -> Result<()> {
    Sgd::new(lr, momentum)?;
    if let Some((name, _)) = store
        .iter()
        .find(|(_, p)| p.trainable && !p.grad.all_finite())
    {
        return Err(Error::Divergence(name.to_string()));
    }
    for (_, p) in store.iter_mut() {
        if !p.trainable {
            continue;
        }
        let v = p
            .velocity
            .get_or_insert_with(|| Array::zeros(p.value.shape()));
        for ((w, vel), g) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(v.data_mut())
            .zip(p.grad.data())
        {
            *vel = momentum * *vel + g;
            *w -= lr * *vel;
        }
    }
    store.zero_grads();
    Ok(())
}
