//! Sliding-window layer normalization (sLN).
//!
//! Mean and variance are taken jointly over the feature dimension and the
//! last `min(k, R)` frames. Two circular buffers hold each frame's feature
//! sum and squared-feature sum, so a step costs `O(N)` regardless of `R`.

/// Stability floor added to the variance.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct NormState {
    sums: Vec<f64>,
    sq_sums: Vec<f64>,
    total: f64,
    total_sq: f64,
    pos: usize,
    fill: usize,
}

/// Statistics used to normalize one frame; cached for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub inv_std: f64,
    /// Frames in the window, `R_k`.
    pub count: usize,
}

impl NormState {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "normalization window must be >= 1");
        Self {
            sums: vec![0.0; window],
            sq_sums: vec![0.0; window],
            total: 0.0,
            total_sq: 0.0,
            pos: 0,
            fill: 0,
        }
    }

    pub fn window(&self) -> usize {
        self.sums.len()
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn reset(&mut self) {
        self.sums.iter_mut().for_each(|x| *x = 0.0);
        self.sq_sums.iter_mut().for_each(|x| *x = 0.0);
        self.total = 0.0;
        self.total_sq = 0.0;
        self.pos = 0;
        self.fill = 0;
    }

    /// Pushes one frame and returns the statistics of the updated window.
    pub fn update(&mut self, x: &[f64]) -> NormStats {
        let (s, sq) = x
            .iter()
            .fold((0.0, 0.0), |(s, sq), &v| (s + v, sq + v * v));
        if self.fill == self.window() {
            self.total -= self.sums[self.pos];
            self.total_sq -= self.sq_sums[self.pos];
        } else {
            self.fill += 1;
        }
        self.sums[self.pos] = s;
        self.sq_sums[self.pos] = sq;
        self.total += s;
        self.total_sq += sq;
        self.pos = (self.pos + 1) % self.window();

        let denom = (x.len() * self.fill) as f64;
        let mean = self.total / denom;
        let var = (self.total_sq / denom - mean * mean).max(0.0);
        NormStats {
            mean,
            inv_std: 1.0 / (var + NORM_EPS).sqrt(),
            count: self.fill,
        }
    }
}

/// One sLN step: updates `state` with `x` and writes
/// `(x − μ)/sqrt(σ² + ε) ⊙ γ + β` into `out`.
pub fn sln_step(
    x: &[f64],
    state: &mut NormState,
    gain: &[f64],
    bias: &[f64],
    out: &mut [f64],
) -> NormStats {
    let stats = state.update(x);
    for (((o, &v), &g), &b) in out.iter_mut().zip(x).zip(gain).zip(bias) {
        *o = (v - stats.mean) * stats.inv_std * g + b;
    }
    stats
}

/// Plain layer normalization of a single vector, computed directly.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + NORM_EPS).sqrt();
    x.iter()
        .zip(gain)
        .zip(bias)
        .map(|((v, g), b)| (v - mean) * inv * g + b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_returns_bias() {
        let mut st = NormState::new(4);
        let gain = [2.0; 5];
        let bias = [0.1, -0.2, 0.3, 0.0, 1.5];
        let mut out = [0.0; 5];
        for _ in 0..10 {
            sln_step(&[3.25; 5], &mut st, &gain, &bias, &mut out);
            for (o, b) in out.iter().zip(&bias) {
                assert!((o - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn window_fill_saturates() {
        let mut st = NormState::new(3);
        let counts: Vec<usize> = (0..6).map(|i| st.update(&[i as f64, 1.0]).count).collect();
        assert_eq!(counts, vec![1, 2, 3, 3, 3, 3]);
        st.reset();
        assert_eq!(st.fill(), 0);
    }
}
