//! Model size, compute rate, and algorithmic latency.
//!
//! MACs count matrix products only; elementwise work (norms, gates,
//! activations) is not included. Channel averaging and the masked sum are
//! counted as one MAC per element.

use serde::Serialize;

use crate::model::ModelConfig;

/// Exact number of scalars in the parameter set for `config`.
pub fn count_params(config: &ModelConfig) -> usize {
    let (l, n, h) = (config.frame_len, config.latent_dim, config.hidden_dim);
    let cell_in = 2 * config.band();
    let ch = config.cell_hidden();
    let cell = 3 * (cell_in * ch + ch * ch + 2 * ch);
    let block = n + config.num_cells() * cell + h * n + n + 2 * n;
    let encoder = l * n + if config.encoder_bias { n } else { 0 };
    encoder + n * l + 2 * n + config.num_blocks * block
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacReport {
    pub frames_per_second: f64,
    /// Local MAC/s for a single channel.
    pub local_per_channel: f64,
    /// Local MAC/s for all channels.
    pub local: f64,
    /// Cross-channel MAC/s, including the averaged-band products computed
    /// once per frame.
    pub global: f64,
    pub total: f64,
}

pub fn count_macs(config: &ModelConfig, sample_rate: f64, channels: usize) -> MacReport {
    let (l, n, h) = (config.frame_len, config.latent_dim, config.hidden_dim);
    let (band, ch) = (config.band(), config.cell_hidden());
    let p = config.partitions;
    let c = channels as f64;
    let frames_per_second = 2.0 * sample_rate / l as f64;

    let cell_local = band * 3 * ch + ch * 3 * ch;
    let block_local = p * cell_local + h * n;
    let local_frame = l * n + config.num_blocks * block_local + n * l;

    let block_global = p * band * 3 * ch;
    let global_frame = (config.num_blocks * block_global) as f64
        + c * (config.num_blocks * n) as f64
        + c * n as f64;

    let local_per_channel = local_frame as f64 * frames_per_second;
    let local = c * local_per_channel;
    let global = global_frame * frames_per_second;
    MacReport {
        frames_per_second,
        local_per_channel,
        local,
        global,
        total: local + global,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyReport {
    pub frame_latency_ms: f64,
    pub frac_filter_latency_ms: f64,
    pub algorithmic_total_ms: f64,
    /// Hop duration: the processing time available per frame.
    pub max_compute_budget_ms: f64,
}

pub fn latency_report(config: &ModelConfig, num_taps: usize, sample_rate: f64) -> LatencyReport {
    let ms = |samples: usize| samples as f64 * 1000.0 / sample_rate;
    let frame = ms(config.frame_len);
    let frac = ms(num_taps.saturating_sub(1) / 2);
    LatencyReport {
        frame_latency_ms: frame,
        frac_filter_latency_ms: frac,
        algorithmic_total_ms: frame + frac,
        max_compute_budget_ms: ms(config.hop()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn tiny_count_by_hand() {
        // L=N=H=4, P=B=1: encoder 16, decoder 16, input norm 8,
        // block: prelu 4, cell 3·(8·4 + 4·4 + 8) = 168, fc 16 + 4, norm 8
        let cfg = ModelConfig {
            frame_len: 4,
            latent_dim: 4,
            hidden_dim: 4,
            partitions: 1,
            num_blocks: 1,
            norm_window: 3,
            shared_cells: false,
            encoder_bias: false,
        };
        assert_eq!(count_params(&cfg), 16 + 16 + 8 + 4 + 168 + 20 + 8);
    }

    #[test]
    fn count_matches_allocated_params() {
        for cfg in [
            ModelConfig::tiny(),
            ModelConfig { shared_cells: true, ..ModelConfig::tiny() },
            ModelConfig { encoder_bias: true, ..ModelConfig::tiny() },
            ModelConfig::reference(),
        ] {
            let params = ModelParams::zeros(&cfg).unwrap();
            assert_eq!(params.num_scalars(), count_params(&cfg));
        }
    }

    #[test]
    fn macs_are_affine_in_channels() {
        let cfg = ModelConfig::reference();
        let totals: Vec<f64> = (1..=8).map(|c| count_macs(&cfg, 16000.0, c).total).collect();
        let step = totals[1] - totals[0];
        for w in totals.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-3);
        }
    }

    #[test]
    fn latency_formulas() {
        let cfg = ModelConfig { frame_len: 32, ..ModelConfig::reference() };
        let r = latency_report(&cfg, 17, 16000.0);
        assert!((r.algorithmic_total_ms - 2.5).abs() < 1e-12);
        assert_eq!(latency_report(&cfg, 1, 16000.0).frac_filter_latency_ms, 0.0);
    }
}
