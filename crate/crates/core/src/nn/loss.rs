use super::NnError;
use crate::tensor::Tensor;

/// Probabilities are clamped below at this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-15;

/// `−ln p[label]`, with the fused softmax + cross-entropy gradient with
/// respect to the logits, `p − onehot(label)`.
pub fn cross_entropy_loss(probs: &Tensor, label: usize) -> Result<(f64, Tensor), NnError> {
    let classes = probs.len();
    if label >= classes {
        return Err(NnError::LabelOutOfRange { label, classes });
    }
    let loss = -probs.data()[label].max(PROB_FLOOR).ln();
    let mut grad = probs.clone();
    grad.data_mut()[label] -= 1.0;
    Ok((loss, grad))
}

/// `(s_p − s_t)² + (t_p − t_t)²` with gradient `2 (pred − target)`.
pub fn additive_l2_loss(pred: &Tensor, target: &[f64; 2]) -> Result<(f64, Tensor), NnError> {
    if pred.len() != 2 {
        return Err(NnError::Input(format!("L2 loss expects 2 outputs, got {}", pred.len())));
    }
    let d = [pred.data()[0] - target[0], pred.data()[1] - target[1]];
    Ok((d[0] * d[0] + d[1] * d[1], Tensor::vector(vec![2.0 * d[0], 2.0 * d[1]])))
}
