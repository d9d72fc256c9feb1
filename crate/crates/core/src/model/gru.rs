//! Gated recurrent cell with biases on both the input and recurrent paths:
//!
//! ```text
//! r  = σ(x·W_r + b_ir + h·U_r + b_hr)
//! z  = σ(x·W_z + b_iz + h·U_z + b_hz)
//! n  = tanh(x·W_n + b_in + r ⊙ (h·U_n + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! Inside a group GRU the input is `[local band, averaged band]`. The part of
//! `x·W + b_i` that depends on the averaged band is identical for every
//! channel, so it is computed once per frame by [`shared_input_projection`]
//! and passed to [`cell_step`].

use super::linalg::{vec_mat, vec_mat_acc};
use super::GruCell;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GruStepCache {
    pub h_prev: Vec<f64>,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
    /// Recurrent candidate pre-activation `h·U_n + b_hn`, before the reset gate.
    pub hidden_candidate: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = b_input + avg · W_input[band..]`, with `band = avg.len()`.
pub fn shared_input_projection(cell: &GruCell, avg: &[f64], out: &mut [f64]) {
    let cols = cell.w_input.cols();
    let band = avg.len();
    out.copy_from_slice(cell.b_input.data());
    vec_mat_acc(avg, &cell.w_input.data()[band * cols..], cols, out);
}

/// One recurrent step. `shared` is the output of [`shared_input_projection`]
/// for this cell and frame; `gi`, `gh` are `3h` scratch vectors.
#[allow(clippy::too_many_arguments)]
pub fn cell_step(
    cell: &GruCell,
    local: &[f64],
    shared: &[f64],
    h_prev: &[f64],
    h_out: &mut [f64],
    gi: &mut [f64],
    gh: &mut [f64],
    cache: Option<&mut GruStepCache>,
) {
    let h = h_prev.len();
    let cols = 3 * h;
    gi.copy_from_slice(shared);
    vec_mat_acc(local, cell.w_input.data(), cols, gi);
    vec_mat(h_prev, cell.w_hidden.data(), cols, gh);
    for (g, b) in gh.iter_mut().zip(cell.b_hidden.data()) {
        *g += b;
    }

    let mut cache = cache;
    if let Some(c) = cache.as_deref_mut() {
        c.h_prev.clear();
        c.h_prev.extend_from_slice(h_prev);
        for v in [&mut c.reset, &mut c.update, &mut c.candidate, &mut c.hidden_candidate] {
            v.resize(h, 0.0);
        }
    }
    for j in 0..h {
        let r = sigmoid(gi[j] + gh[j]);
        let z = sigmoid(gi[h + j] + gh[h + j]);
        let n = (gi[2 * h + j] + r * gh[2 * h + j]).tanh();
        h_out[j] = (1.0 - z) * n + z * h_prev[j];
        if let Some(c) = cache.as_deref_mut() {
            c.reset[j] = r;
            c.update[j] = z;
            c.candidate[j] = n;
            c.hidden_candidate[j] = gh[2 * h + j];
        }
    }
}
