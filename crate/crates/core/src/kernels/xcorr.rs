use crate::tensor::{Result, Tensor, TensorError};

/// Output extent of a strided, zero-padded window sweep along one axis.
pub fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(TensorError::Config("stride must be at least 1".into()));
    }
    let padded = input + 2 * padding;
    if kernel == 0 || kernel > padded {
        return Err(TensorError::Dimension(format!(
            "kernel extent {kernel} does not fit padded input extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Two-dimensional cross-correlation of a single plane with a single kernel.
///
/// `out[x, y] = Σ_m Σ_n in[x·s + m − pad, y·s + n − pad] · k[m, n]`, with
/// out-of-range input reads treated as zero.
pub fn xcorr2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if input.rank() != 2 || kernel.rank() != 2 {
        return Err(TensorError::Dimension(format!(
            "xcorr2d expects 2-D operands, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    }
    let (ih, iw) = (input.shape()[0], input.shape()[1]);
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    let oh = out_extent(ih, kh, stride, padding)?;
    let ow = out_extent(iw, kw, stride, padding)?;
    let src = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; oh * ow];
    for ox in 0..oh {
        for oy in 0..ow {
            let mut acc = 0.0;
            for m in 0..kh {
                let r = (ox * stride + m) as isize - padding as isize;
                if r < 0 || r >= ih as isize {
                    continue;
                }
                let row = &src[r as usize * iw..(r as usize + 1) * iw];
                for n in 0..kw {
                    let c = (oy * stride + n) as isize - padding as isize;
                    if c < 0 || c >= iw as isize {
                        continue;
                    }
                    acc += row[c as usize] * k[m * kw + n];
                }
            }
            out[ox * ow + oy] = acc;
        }
    }
    Tensor::new([oh, ow], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_passthrough() {
        let input = Tensor::from_fn([3, 3], |i| i as f64 - 4.0);
        let kernel = Tensor::new([1, 1], vec![1.0]).unwrap();
        assert_eq!(xcorr2d(&input, &kernel, 1, 0).unwrap(), input);
    }

    #[test]
    fn full_support_sum() {
        let input = Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::filled([2, 2], 1.0);
        let out = xcorr2d(&input, &kernel, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn oversized_kernel_is_dimension_error() {
        let input = Tensor::zeros([2, 2]);
        let kernel = Tensor::zeros([3, 3]);
        assert!(matches!(
            xcorr2d(&input, &kernel, 1, 0),
            Err(TensorError::Dimension(_))
        ));
        // Padding can make the same kernel fit.
        assert_eq!(xcorr2d(&input, &kernel, 1, 1).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(out_extent(7, 3, 2, 1).unwrap(), 4);
        assert_eq!(out_extent(120, 3, 1, 1).unwrap(), 120);
        assert_eq!(out_extent(15, 5, 3, 0).unwrap(), 4);
        assert_eq!(out_extent(20, 5, 3, 0).unwrap(), 6);
    }
}
