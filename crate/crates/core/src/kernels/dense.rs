use super::linalg::{matvec, matvec_t_acc, outer_acc};
use crate::tensor::{Result, Tensor, TensorError};

/// `out = W · x + b` for `W` of shape `out × in`. The input is read flat.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, cols) = check(input, weights, bias)?;
    let mut out = bias.data().to_vec();
    matvec(weights.data(), rows, cols, input.data(), 1.0, &mut out);
    Tensor::new([rows], out)
}

fn check(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    if weights.rank() != 2 {
        return Err(TensorError::Dimension(format!(
            "dense weights must be 2-D, got {:?}",
            weights.shape()
        )));
    }
    let (rows, cols) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != cols {
        return Err(TensorError::Dimension(format!(
            "dense input length {} does not match weight inner dim {cols}",
            input.len()
        )));
    }
    if bias.len() != rows {
        return Err(TensorError::Dimension(format!(
            "dense bias length {} does not match {rows} outputs",
            bias.len()
        )));
    }
    Ok((rows, cols))
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (rows, cols) = (weights.shape()[0], weights.shape()[1]);
    if grad_out.len() != rows || input.len() != cols {
        return Err(TensorError::Dimension("dense backward shape mismatch".into()));
    }
    let mut gw = Tensor::zeros([rows, cols]);
    outer_acc(gw.data_mut(), grad_out.data(), input.data());
    let mut gx = vec![0.0; cols];
    matvec_t_acc(weights.data(), rows, cols, grad_out.data(), &mut gx);
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), gx)?,
        weights: gw,
        bias: Tensor::new([rows], grad_out.data().to_vec())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_zero_bias() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let eye = Tensor::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(dense(&x, &eye, &Tensor::zeros([3])).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![0.5, -1.0, 2.0]);
        assert_eq!(dense(&x, &Tensor::zeros([3, 2]), &b).unwrap(), b);
    }

    #[test]
    fn matches_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_fn([10], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn([4, 10], |_| rng.gen_range(-1.0..1.0));
        let b = Tensor::from_fn([4], |_| rng.gen_range(-1.0..1.0));
        let out = dense(&x, &w, &b).unwrap();
        for r in 0..4 {
            let mut acc = b.data()[r];
            for c in 0..10 {
                acc += w.at(&[r, c]) * x.data()[c];
            }
            assert!((out.data()[r] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(dense(&Tensor::zeros([3]), &Tensor::zeros([2, 4]), &Tensor::zeros([2])).is_err());
    }

    #[test]
    fn weight_gradient_is_outer_product() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let g = Tensor::vector(vec![0.5, -1.0]);
        let grads = dense_backward(&x, &Tensor::zeros([2, 3]), &g).unwrap();
        assert_eq!(grads.weights.data(), &[0.5, 1.0, 1.5, -1.0, -2.0, -3.0]);
        assert_eq!(grads.bias, g);
    }
}
