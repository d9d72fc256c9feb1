//! Row-vector × matrix kernels. Matrices are row-major `[rows, cols]`.

/// `out = x · W[row_offset .. row_offset + x.len(), ..]`.
#[inline]
pub fn vec_mat(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    vec_mat_acc(x, w, cols, out);
}

/// `out += x · W` where `W` has `x.len()` rows of `cols` entries.
#[inline]
pub fn vec_mat_acc(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), cols);
    debug_assert!(w.len() >= x.len() * cols);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `dx += dy · Wᵀ` for the same `W` layout as [`vec_mat`].
#[inline]
pub fn vec_mat_t_acc(dy: &[f64], w: &[f64], cols: usize, dx: &mut [f64]) {
    for (i, d) in dx.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *d += row.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dW += xᵀ · dy`.
#[inline]
pub fn outer_acc(x: &[f64], dy: &[f64], dw: &mut [f64]) {
    let cols = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        let row = &mut dw[i * cols..(i + 1) * cols];
        for (g, &d) in row.iter_mut().zip(dy) {
            *g += xi * d;
        }
    }
}

#[inline]
pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
