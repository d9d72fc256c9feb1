//! Per-frame building blocks of the filter estimator and the latent
//! filter-and-sum. The allocating functions here are the reference forms of
//! each operation; the streaming engine drives the same kernels through
//! preallocated scratch.

use super::engine::{BlockCache, BlockScratch, BlockState};
use super::gru::{cell_step, shared_input_projection};
use super::linalg::{vec_mat, vec_mat_acc};
use super::norm::sln_step;
use super::{BlockParams, GruCell, ModelConfig, ModelParams};
use crate::error::{check_len, Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `z = frame · B_e (+ b_e)`.
pub fn encode(frame: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    let cfg = &params.config;
    check_len("encoder input", cfg.frame_len, frame.len())?;
    let mut z = vec![0.0; cfg.latent_dim];
    encode_into(frame, params, &mut z);
    Ok(z)
}

pub(crate) fn encode_into(frame: &[f64], params: &ModelParams, z: &mut [f64]) {
    let n = params.config.latent_dim;
    vec_mat(frame, params.encoder.data(), n, z);
    if let Some(b) = &params.encoder_bias {
        for (v, b) in z.iter_mut().zip(b.data()) {
            *v += b;
        }
    }
}

/// Parametric ReLU with one slope per feature.
pub fn prelu(x: &[f64], slopes: &[f64], out: &mut [f64]) {
    for ((o, &v), &a) in out.iter_mut().zip(x).zip(slopes) {
        *o = if v > 0.0 { v } else { a * v };
    }
}

/// Elementwise mean over channels.
pub fn channel_average(features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::invalid("channel average of zero channels"))?;
    let mut avg = vec![0.0; first.len()];
    for f in features {
        check_len("channel average", first.len(), f.len())?;
    }
    average_rows(features.iter().map(|f| f.as_slice()), features.len(), &mut avg);
    Ok(avg)
}

/// Channel counts up to this are summed in a canonical (sorted) order, which
/// makes channel averaging exactly invariant to channel order.
pub const ORDER_FREE_CHANNELS: usize = 16;

fn channel_sum<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, count: usize, out: &mut [f64], term: impl Fn(usize, &'a [f64], usize) -> f64) {
    if count <= ORDER_FREE_CHANNELS {
        let mut col = [0.0; ORDER_FREE_CHANNELS];
        for (i, o) in out.iter_mut().enumerate() {
            for (c, row) in rows.clone().enumerate() {
                col[c] = term(c, row, i);
            }
            let vals = &mut col[..count];
            vals.sort_unstable_by(f64::total_cmp);
            *o = vals.iter().sum();
        }
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, row) in rows.enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += term(c, row, i);
            }
        }
    }
}

pub(crate) fn average_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, count: usize, out: &mut [f64]) {
    channel_sum(rows, count, out, |_, row, i| row[i]);
    let c = count as f64;
    out.iter_mut().for_each(|o| *o /= c);
}

/// Elementwise logistic sigmoid.
pub fn mask_head(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    features
        .iter()
        .map(|f| f.iter().map(|&x| sigmoid(x)).collect())
        .collect()
}

/// `((1/C) Σ_c m_c ⊙ z_c) · B_d`.
pub fn decode_and_sum(
    masks: &[Vec<f64>],
    latents: &[Vec<f64>],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    check_len("decoder channels", latents.len(), masks.len())?;
    if masks.is_empty() {
        return Err(Error::invalid("decoder needs at least one channel"));
    }
    let n = params.config.latent_dim;
    for (m, z) in masks.iter().zip(latents) {
        check_len("decoder mask", n, m.len())?;
        check_len("decoder latent", n, z.len())?;
    }
    let mut mix = vec![0.0; n];
    let mut out = vec![0.0; params.config.frame_len];
    masked_mix(&masks.concat(), &latents.concat(), masks.len(), &mut mix);
    vec_mat(&mix, params.decoder.data(), params.config.frame_len, &mut out);
    Ok(out)
}

pub(crate) fn masked_mix(masks: &[f64], latents: &[f64], count: usize, mix: &mut [f64]) {
    let n = mix.len();
    channel_sum(masks.chunks(n), count, mix, |c, m, i| m[i] * latents[c * n + i]);
    let c = count as f64;
    mix.iter_mut().for_each(|o| *o /= c);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupGruOptions {
    /// Compute the averaged-band input product once per frame and reuse it
    /// for every channel.
    pub reuse_shared_projection: bool,
}

impl Default for GroupGruOptions {
    fn default() -> Self {
        Self {
            reuse_shared_projection: true,
        }
    }
}

/// One group-GRU step for a single channel. `hidden` is the channel's `H`
/// concatenated partition states; returns the new state (which is also the
/// output).
pub fn group_gru_step(
    local: &[f64],
    shared_avg: &[f64],
    hidden: &[f64],
    cells: &[GruCell],
    config: &ModelConfig,
) -> Result<Vec<f64>> {
    check_len("group gru local", config.latent_dim, local.len())?;
    check_len("group gru average", config.latent_dim, shared_avg.len())?;
    check_len("group gru hidden", config.hidden_dim, hidden.len())?;
    check_len("group gru cells", config.num_cells(), cells.len())?;
    let (band, hp) = (config.band(), config.cell_hidden());
    let mut out = vec![0.0; config.hidden_dim];
    let mut shared = vec![0.0; 3 * hp];
    let (mut gi, mut gh) = (vec![0.0; 3 * hp], vec![0.0; 3 * hp]);
    for p in 0..config.partitions {
        let cell = &cells[config.cell_index(p)];
        let bands = p * band..(p + 1) * band;
        let hid = p * hp..(p + 1) * hp;
        shared_input_projection(cell, &shared_avg[bands.clone()], &mut shared);
        cell_step(
            cell,
            &local[bands],
            &shared,
            &hidden[hid.clone()],
            &mut out[hid],
            &mut gi,
            &mut gh,
            None,
        );
    }
    Ok(out)
}

/// One RCI block step over all channels: PReLU, channel average, group GRU,
/// FC, sLN, skip from the PReLU output.
pub fn rci_block_step(
    features: &[Vec<f64>],
    block: &BlockParams,
    config: &ModelConfig,
    states: &mut [BlockState],
    options: GroupGruOptions,
) -> Result<Vec<Vec<f64>>> {
    let c = features.len();
    if c == 0 {
        return Err(Error::invalid("block step needs at least one channel"));
    }
    check_len("block states", c, states.len())?;
    let n = config.latent_dim;
    let mut flat = Vec::with_capacity(c * n);
    for f in features {
        check_len("block features", n, f.len())?;
        flat.extend_from_slice(f);
    }
    let mut scratch = BlockScratch::new(config, c);
    block_forward(block, config, &mut flat, states, &mut scratch, options, None);
    Ok(flat.chunks(n).map(|r| r.to_vec()).collect())
}

/// In-place block step on `feats` (`C × N`, row-major).
pub(crate) fn block_forward(
    block: &BlockParams,
    cfg: &ModelConfig,
    feats: &mut [f64],
    states: &mut [BlockState],
    s: &mut BlockScratch,
    options: GroupGruOptions,
    mut cache: Option<&mut BlockCache>,
) {
    let n = cfg.latent_dim;
    let h = cfg.hidden_dim;
    let (band, hp) = (cfg.band(), cfg.cell_hidden());
    let c = states.len();

    for (x, a) in feats.chunks(n).zip(s.act.chunks_mut(n)) {
        prelu(x, block.prelu.data(), a);
    }
    average_rows(s.act.chunks(n), c, &mut s.avg);
    if options.reuse_shared_projection {
        for p in 0..cfg.partitions {
            let cell = &block.cells[cfg.cell_index(p)];
            shared_input_projection(
                cell,
                &s.avg[p * band..(p + 1) * band],
                &mut s.shared[p * 3 * hp..(p + 1) * 3 * hp],
            );
        }
    }
    if let Some(bc) = cache.as_deref_mut() {
        bc.input.clear();
        bc.input.extend_from_slice(feats);
        bc.act.clone_from(&s.act);
        bc.avg.clone_from(&s.avg);
        bc.steps.resize_with(c * cfg.partitions, Default::default);
        bc.hidden.resize(c * h, 0.0);
        bc.fc_out.resize(c * n, 0.0);
        bc.norm_stats.clear();
    }

    for (ch, state) in states.iter_mut().enumerate() {
        let act = &s.act[ch * n..(ch + 1) * n];
        for p in 0..cfg.partitions {
            let cell = &block.cells[cfg.cell_index(p)];
            let shared = if options.reuse_shared_projection {
                &s.shared[p * 3 * hp..(p + 1) * 3 * hp]
            } else {
                shared_input_projection(cell, &s.avg[p * band..(p + 1) * band], &mut s.shared_tmp);
                &s.shared_tmp
            };
            let step_cache = cache
                .as_deref_mut()
                .map(|bc| &mut bc.steps[ch * cfg.partitions + p]);
            cell_step(
                cell,
                &act[p * band..(p + 1) * band],
                shared,
                &state.hidden[p * hp..(p + 1) * hp],
                &mut s.hidden_new[p * hp..(p + 1) * hp],
                &mut s.gi,
                &mut s.gh,
                step_cache,
            );
        }
        state.hidden.copy_from_slice(&s.hidden_new);

        s.fc_out.copy_from_slice(block.fc_bias.data());
        vec_mat_acc(&s.hidden_new, block.fc_weight.data(), n, &mut s.fc_out);
        let stats = sln_step(
            &s.fc_out,
            &mut state.norm,
            block.norm_gain.data(),
            block.norm_bias.data(),
            &mut s.norm_out,
        );
        let out = &mut feats[ch * n..(ch + 1) * n];
        for ((o, y), f) in out.iter_mut().zip(&s.norm_out).zip(act) {
            *o = y + f;
        }
        if let Some(bc) = cache.as_deref_mut() {
            bc.hidden[ch * h..(ch + 1) * h].copy_from_slice(&s.hidden_new);
            bc.fc_out[ch * n..(ch + 1) * n].copy_from_slice(&s.fc_out);
            bc.norm_stats.push(stats);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prelu_passes_positive_values() {
        let mut out = [0.0; 4];
        prelu(&[1.0, 0.5, -2.0, 0.0], &[1.0, 0.3, 0.3, 0.3], &mut out);
        assert_eq!(out, [1.0, 0.5, -0.6, 0.0]);
    }

    #[test]
    fn channel_average_cases() {
        assert_eq!(channel_average(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            channel_average(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(channel_average(&[]).is_err());
        assert!(channel_average(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mask_head_values() {
        let m = mask_head(&[vec![0.0, 20.0, -3.0, -2.0]]);
        assert_eq!(m[0][0], 0.5);
        assert!((m[0][1] - 1.0).abs() < 1e-8);
        assert!(m[0][2] < m[0][3]);
    }
}
