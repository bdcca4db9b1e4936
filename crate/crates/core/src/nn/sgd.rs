use super::mlp::{shapes_match, Gradients, MlpModel};
use crate::error::{invalid, Error, Result};

/// Classical momentum: `v ← β·v + g`, `θ ← θ − lr·v`.
pub fn sgd_momentum_step(
    model: &mut MlpModel,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    beta: f64,
) -> Result<()> {
    if !shapes_match(&model.layers, &grads.layers) || !shapes_match(&model.layers, &velocity.layers) {
        return Err(Error::Shape("model, gradient and velocity layouts differ".into()));
    }
    for ((p, g), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        v.w *= beta;
        v.w += &g.w;
        v.b *= beta;
        v.b += &g.b;
        p.w.scaled_add(-lr, &v.w);
        p.b.scaled_add(-lr, &v.b);
    }
    Ok(())
}

/// Owns the velocity buffers for [`sgd_momentum_step`].
#[derive(Debug, Clone)]
pub struct Momentum {
    pub beta: f64,
    velocity: Gradients,
}

impl Momentum {
    pub fn new(model: &MlpModel, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {beta}")));
        }
        Ok(Self { beta, velocity: Gradients::zeros_like(model) })
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
        sgd_momentum_step(model, grads, &mut self.velocity, lr, self.beta)
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }
}
