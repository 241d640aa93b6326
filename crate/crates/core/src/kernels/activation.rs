use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-subtracted exponentials).
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::new(logits.shape(), exps.into_iter().map(|e| e / total).collect())
        .expect("softmax preserves shape")
}

/// Vector–Jacobian product of softmax: `s ⊙ (g − ⟨g, s⟩)`.
pub fn softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Tensor {
    let dot: f64 = probs.data().iter().zip(grad_out.data()).map(|(s, g)| s * g).sum();
    let data = probs
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(s, g)| s * (g - dot))
        .collect();
    Tensor::new(probs.shape(), data).expect("same shape")
}
