use super::{Gradients, NnError};
use crate::tensor::Tensor;

/// Plain SGD with a static learning rate: `p ← p − lr · g`.
pub fn sgd_step(params: &mut [Tensor], grads: &Gradients, learning_rate: f64) -> Result<(), NnError> {
    if params.len() != grads.tensors.len() {
        return Err(NnError::Input(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.tensors.len()
        )));
    }
    if let Some((i, _)) = params
        .iter()
        .zip(&grads.tensors)
        .enumerate()
        .find(|(_, (p, g))| !p.same_shape(g))
    {
        return Err(NnError::Input(format!("gradient {i} shape does not match its parameter")));
    }
    for (p, g) in params.iter_mut().zip(&grads.tensors) {
        p.add_scaled(g, -learning_rate);
    }
    Ok(())
}
