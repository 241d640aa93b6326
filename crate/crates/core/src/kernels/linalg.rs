//! Thin safe wrapper over `matrixmultiply::dgemm` for row-major operands.

/// Whether an operand is read as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c = a' · b' + beta · c`, where `a'` is `m × k`, `b'` is `k × n` and `c` is
/// `m × n`, all row-major. `a` is stored `m × k` for `Op::N` and `k × m` for
/// `Op::T`; likewise for `b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    op_a: Op,
    b: &[f64],
    op_b: Op,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: output size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: the asserts above bound every index dgemm touches given the
    // row/column strides derived from (m, k, n) and the transpose flags.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = W x + beta · y` for a row-major `rows × cols` matrix.
pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], beta: f64, y: &mut [f64]) {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(x.len(), cols);
    assert_eq!(y.len(), rows);
    for (r, out) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        *out = dot + beta * *out;
    }
}

/// `y += Wᵀ g` for a row-major `rows × cols` matrix.
pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], y: &mut [f64]) {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(g.len(), rows);
    assert_eq!(y.len(), cols);
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (yc, wc) in y.iter_mut().zip(row) {
            *yc += gr * wc;
        }
    }
}

/// `W += g ⊗ x` (outer product accumulate).
pub fn outer_acc(w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    assert_eq!(w.len(), g.len() * cols);
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut w[r * cols..(r + 1) * cols];
        for (wc, xc) in row.iter_mut().zip(x) {
            *wc += gr * xc;
        }
    }
}
