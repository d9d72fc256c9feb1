//! Reverse-mode gradients for every differentiable stage of the network.
//!
//! Sequence-level functions (`sln_backward`, `rci_block_backward`,
//! `model_backward`) consume the per-frame caches recorded by
//! [`forward_frame`](crate::model::forward_frame) and backpropagate through
//! time: through the recurrent state chain and through every frame that
//! contributed to a sliding normalization window. All gradient outputs
//! named `grad*` or `d*` accumulate (`+=`).

use std::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};
use crate::framing::coverage_gain;
use crate::model::linalg::{add_assign, outer_acc, vec_mat_t_acc};
use crate::model::engine::BlockScratch;
use crate::model::layers::block_forward;
use crate::model::{
    BlockCache, BlockState, GroupGruOptions, BlockParams, FrameCache, GruCell, GruStepCache, ModelConfig, ModelParams,
    NormStats,
};

/// Gradient of a scalar loss with respect to every model tensor; shapes
/// mirror [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(ModelParams);

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self(params.zeros_like())
    }

    pub fn into_inner(self) -> ModelParams {
        self.0
    }
}

impl Deref for ParamGrads {
    type Target = ModelParams;
    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl DerefMut for ParamGrads {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

/// Encoder: `dB_e += frameᵀ·dz`, `db_e += dz`; returns `dframe = dz·B_eᵀ`.
pub fn encode_backward(
    params: &ModelParams,
    frame: &[f64],
    dz: &[f64],
    grads: &mut ParamGrads,
) -> Vec<f64> {
    let n = params.config.latent_dim;
    outer_acc(frame, dz, grads.encoder.data_mut());
    if let Some(b) = grads.encoder_bias.as_mut() {
        b.data_mut().iter_mut().zip(dz).for_each(|(g, d)| *g += d);
    }
    let mut dframe = vec![0.0; frame.len()];
    vec_mat_t_acc(dz, params.encoder.data(), n, &mut dframe);
    dframe
}

/// Backward pass of sLN over one channel's whole sequence.
///
/// `xs` holds the `K × N` inputs, `stats` the cached window statistics, and
/// `dout` the upstream gradient. Returns `dx` (`K × N`). Each frame's mean
/// and variance depend on the previous `min(k, R)` frames, so a frame
/// receives gradient from every later window that contains it.
#[allow(clippy::too_many_arguments)]
pub fn sln_backward(
    xs: &[f64],
    n: usize,
    stats: &[NormStats],
    window: usize,
    gain: &[f64],
    dout: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let k_frames = stats.len();
    debug_assert_eq!(xs.len(), k_frames * n);
    debug_assert_eq!(dout.len(), k_frames * n);
    let mut dx = vec![0.0; k_frames * n];
    let mut a = vec![0.0; k_frames];
    let mut b = vec![0.0; k_frames];
    for (k, st) in stats.iter().enumerate() {
        let x = &xs[k * n..(k + 1) * n];
        let d = &dout[k * n..(k + 1) * n];
        let s = st.inv_std;
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for i in 0..n {
            let centered = x[i] - st.mean;
            let g = d[i] * gain[i];
            dgain[i] += d[i] * centered * s;
            dbias[i] += d[i];
            dx[k * n + i] = g * s;
            sum_g += g;
            sum_gx += g * centered;
        }
        let dmean = -s * sum_g;
        let dvar = -0.5 * sum_gx * s * s * s;
        let inv = 1.0 / (n * st.count) as f64;
        a[k] = (dmean - 2.0 * st.mean * dvar) * inv;
        b[k] = 2.0 * dvar * inv;
    }
    // frame j lies in the windows of frames j ..= j + R - 1
    let prefix = |v: &[f64]| {
        let mut p = vec![0.0; v.len() + 1];
        for (i, x) in v.iter().enumerate() {
            p[i + 1] = p[i] + x;
        }
        p
    };
    let (pa, pb) = (prefix(&a), prefix(&b));
    for j in 0..k_frames {
        let end = (j + window).min(k_frames);
        let aj = pa[end] - pa[j];
        let bj = pb[end] - pb[j];
        for i in 0..n {
            dx[j * n + i] += aj + bj * xs[j * n + i];
        }
    }
    dx
}

/// Every channel receives `davg / C`.
pub fn channel_average_backward(davg: &[f64], channels: usize) -> Vec<Vec<f64>> {
    let c = channels as f64;
    vec![davg.iter().map(|d| d / c).collect(); channels]
}

/// Backward of one recurrent step given `dh` for the new state.
///
/// Accumulates into the cell gradient, `dlocal`, `davg` and `dh_prev`.
#[allow(clippy::too_many_arguments)]
pub fn gru_cell_backward(
    cell: &GruCell,
    local: &[f64],
    avg: &[f64],
    cache: &GruStepCache,
    dh: &[f64],
    grad: &mut GruCell,
    dlocal: &mut [f64],
    davg: &mut [f64],
    dh_prev: &mut [f64],
) {
    let h = dh.len();
    let cols = 3 * h;
    let band = local.len();
    let mut dgi = vec![0.0; cols];
    let mut dgh = vec![0.0; cols];
    for j in 0..h {
        let (r, z, n) = (cache.reset[j], cache.update[j], cache.candidate[j]);
        let dn = dh[j] * (1.0 - z);
        let dz = dh[j] * (cache.h_prev[j] - n);
        dh_prev[j] += dh[j] * z;
        let dan = dn * (1.0 - n * n);
        let dr = dan * cache.hidden_candidate[j];
        let daz = dz * z * (1.0 - z);
        let dar = dr * r * (1.0 - r);
        dgi[j] = dar;
        dgi[h + j] = daz;
        dgi[2 * h + j] = dan;
        dgh[j] = dar;
        dgh[h + j] = daz;
        dgh[2 * h + j] = dan * r;
    }
    let (g_local, g_avg) = grad.w_input.data_mut().split_at_mut(band * cols);
    outer_acc(local, &dgi, g_local);
    outer_acc(avg, &dgi, g_avg);
    add_assign(grad.b_input.data_mut(), &dgi);
    outer_acc(&cache.h_prev, &dgh, grad.w_hidden.data_mut());
    add_assign(grad.b_hidden.data_mut(), &dgh);

    let (w_local, w_avg) = cell.w_input.data().split_at(band * cols);
    vec_mat_t_acc(&dgi, w_local, cols, dlocal);
    vec_mat_t_acc(&dgi, w_avg, cols, davg);
    vec_mat_t_acc(&dgh, cell.w_hidden.data(), cols, dh_prev);
}

/// Gradients of one group-GRU step for one channel.
pub struct GroupGruGrads {
    pub dlocal: Vec<f64>,
    pub davg: Vec<f64>,
    pub dh_prev: Vec<f64>,
}

/// Backward of [`group_gru_step`](crate::model::group_gru_step) given the
/// per-partition caches of that step.
pub fn group_gru_backward(
    local: &[f64],
    avg: &[f64],
    caches: &[GruStepCache],
    dh: &[f64],
    cells: &[GruCell],
    grad_cells: &mut [GruCell],
    config: &ModelConfig,
) -> GroupGruGrads {
    let (band, hp) = (config.band(), config.cell_hidden());
    let mut out = GroupGruGrads {
        dlocal: vec![0.0; config.latent_dim],
        davg: vec![0.0; config.latent_dim],
        dh_prev: vec![0.0; config.hidden_dim],
    };
    for p in 0..config.partitions {
        let idx = config.cell_index(p);
        let bands = p * band..(p + 1) * band;
        let hid = p * hp..(p + 1) * hp;
        gru_cell_backward(
            &cells[idx],
            &local[bands.clone()],
            &avg[bands.clone()],
            &caches[p],
            &dh[hid.clone()],
            &mut grad_cells[idx],
            &mut out.dlocal[bands.clone()],
            &mut out.davg[bands],
            &mut out.dh_prev[hid],
        );
    }
    out
}

/// Backward of an RCI block over a whole sequence.
///
/// `caches[k]` is the block's cache at frame `k`; `dout[k]` is `C × N`.
/// Returns the gradient with respect to the block input at every frame.
pub fn rci_block_backward(
    block: &BlockParams,
    config: &ModelConfig,
    caches: &[&BlockCache],
    dout: &[Vec<f64>],
    grad: &mut BlockParams,
) -> Result<Vec<Vec<f64>>> {
    check_len("block backward frames", caches.len(), dout.len())?;
    let k_frames = caches.len();
    if k_frames == 0 {
        return Ok(Vec::new());
    }
    let (n, h, p_count) = (config.latent_dim, config.hidden_dim, config.partitions);
    let (band, hp) = (config.band(), config.cell_hidden());
    let c = caches[0].input.len() / n;
    for cache in caches {
        if cache.steps.len() != c * p_count || cache.norm_stats.len() != c {
            return Err(Error::MissingCache("rci block"));
        }
    }

    // skip connection
    let mut d_act: Vec<Vec<f64>> = dout.to_vec();
    let mut dh_out = vec![vec![0.0; c * h]; k_frames];
    for ch in 0..c {
        let xs: Vec<f64> = caches
            .iter()
            .flat_map(|bc| bc.fc_out[ch * n..(ch + 1) * n].iter().copied())
            .collect();
        let stats: Vec<NormStats> = caches.iter().map(|bc| bc.norm_stats[ch]).collect();
        let d: Vec<f64> = dout
            .iter()
            .flat_map(|d| d[ch * n..(ch + 1) * n].iter().copied())
            .collect();
        let dy = sln_backward(
            &xs,
            n,
            &stats,
            config.norm_window,
            block.norm_gain.data(),
            &d,
            grad.norm_gain.data_mut(),
            grad.norm_bias.data_mut(),
        );
        for k in 0..k_frames {
            let dyk = &dy[k * n..(k + 1) * n];
            let hidden = &caches[k].hidden[ch * h..(ch + 1) * h];
            outer_acc(hidden, dyk, grad.fc_weight.data_mut());
            add_assign(grad.fc_bias.data_mut(), dyk);
            vec_mat_t_acc(dyk, block.fc_weight.data(), n, &mut dh_out[k][ch * h..(ch + 1) * h]);
        }
    }

    let mut davg = vec![vec![0.0; n]; k_frames];
    for ch in 0..c {
        let mut carry = vec![0.0; h];
        for k in (0..k_frames).rev() {
            let mut dh = dh_out[k][ch * h..(ch + 1) * h].to_vec();
            add_assign(&mut dh, &carry);
            carry.iter_mut().for_each(|x| *x = 0.0);
            let bc = caches[k];
            for p in 0..p_count {
                let idx = config.cell_index(p);
                let bands = p * band..(p + 1) * band;
                let hid = p * hp..(p + 1) * hp;
                let act = &bc.act[ch * n..(ch + 1) * n];
                gru_cell_backward(
                    &block.cells[idx],
                    &act[bands.clone()],
                    &bc.avg[bands.clone()],
                    &bc.steps[ch * p_count + p],
                    &dh[hid.clone()],
                    &mut grad.cells[idx],
                    &mut d_act[k][ch * n + p * band..ch * n + (p + 1) * band],
                    &mut davg[k][bands],
                    &mut carry[hid],
                );
            }
        }
    }

    let inv_c = 1.0 / c as f64;
    let mut d_in = vec![vec![0.0; c * n]; k_frames];
    for k in 0..k_frames {
        for ch in 0..c {
            for i in 0..n {
                let g = d_act[k][ch * n + i] + davg[k][i] * inv_c;
                let x = caches[k].input[ch * n + i];
                let slope = block.prelu.data()[i];
                if x > 0.0 {
                    d_in[k][ch * n + i] = g;
                } else {
                    d_in[k][ch * n + i] = slope * g;
                    grad.prelu.data_mut()[i] += g * x;
                }
            }
        }
    }
    Ok(d_in)
}

/// Runs one RCI block over a sequence of `C × N` inputs from a zero state,
/// recording the caches [`rci_block_backward`] needs.
pub fn rci_block_forward_cached(
    block: &BlockParams,
    config: &ModelConfig,
    inputs: &[Vec<f64>],
    channels: usize,
) -> Result<(Vec<Vec<f64>>, Vec<BlockCache>)> {
    config.validate()?;
    let n = config.latent_dim;
    let mut states: Vec<BlockState> = (0..channels).map(|_| BlockState::new(config)).collect();
    let mut scratch = BlockScratch::new(config, channels);
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        check_len("block input", channels * n, x.len())?;
        let mut feats = x.clone();
        let mut cache = BlockCache::default();
        block_forward(block, config, &mut feats, &mut states, &mut scratch, GroupGruOptions::default(), Some(&mut cache));
        outputs.push(feats);
        caches.push(cache);
    }
    Ok((outputs, caches))
}

/// `d feature = d mask · m(1 − m)`.
pub fn mask_head_backward(masks: &[f64], dmasks: &[f64]) -> Vec<f64> {
    masks
        .iter()
        .zip(dmasks)
        .map(|(m, d)| d * m * (1.0 - m))
        .collect()
}

/// Backward of the masked channel average and decoder for one frame.
/// `masks` and `latents` are `C × N`; returns `(dmasks, dlatents)`.
pub fn decode_and_sum_backward(
    params: &ModelParams,
    masks: &[f64],
    latents: &[f64],
    mix: &[f64],
    dframe: &[f64],
    grads: &mut ParamGrads,
) -> (Vec<f64>, Vec<f64>) {
    let (l, n) = (params.config.frame_len, params.config.latent_dim);
    let c = masks.len() / n;
    outer_acc(mix, dframe, grads.decoder.data_mut());
    let mut dmix = vec![0.0; n];
    vec_mat_t_acc(dframe, params.decoder.data(), l, &mut dmix);
    let inv_c = 1.0 / c as f64;
    let mut dmasks = vec![0.0; c * n];
    let mut dlatents = vec![0.0; c * n];
    for i in 0..c * n {
        let d = dmix[i % n] * inv_c;
        dmasks[i] = d * latents[i];
        dlatents[i] = d * masks[i];
    }
    (dmasks, dlatents)
}

/// Splits the gradient of an overlap-added signal back onto its frames.
/// `dsignal` may be shorter than the covered length (truncated output).
pub fn overlap_add_backward(dsignal: &[f64], num_frames: usize, frame_len: usize) -> Vec<Vec<f64>> {
    let hop = frame_len / 2;
    (0..num_frames)
        .map(|k| {
            (0..frame_len)
                .map(|i| {
                    let t = k * hop + i;
                    dsignal
                        .get(t)
                        .map_or(0.0, |d| d * coverage_gain(t, num_frames, frame_len))
                })
                .collect()
        })
        .collect()
}

/// Full-network backward over an utterance. `dframes[k]` is the gradient
/// with respect to the decoded frame `k`.
pub fn model_backward(
    params: &ModelParams,
    caches: &[FrameCache],
    dframes: &[Vec<f64>],
    grads: &mut ParamGrads,
) -> Result<()> {
    check_len("model backward frames", caches.len(), dframes.len())?;
    if !grads.same_shape(params) {
        return Err(Error::invalid("gradient container does not match parameters"));
    }
    let cfg = params.config;
    let (l, n) = (cfg.frame_len, cfg.latent_dim);
    let k_frames = caches.len();
    if k_frames == 0 {
        return Ok(());
    }
    let c = caches[0].latents.len() / n;
    for fc in caches {
        if fc.blocks.len() != cfg.num_blocks || fc.masks.len() != c * n || fc.input_stats.len() != c {
            return Err(Error::MissingCache("model frame"));
        }
    }

    let mut dlat = Vec::with_capacity(k_frames);
    let mut dfeat = Vec::with_capacity(k_frames);
    for (fc, dframe) in caches.iter().zip(dframes) {
        check_len("decoded frame gradient", l, dframe.len())?;
        let (dm, dz) = decode_and_sum_backward(params, &fc.masks, &fc.latents, &fc.mix, dframe, grads);
        dfeat.push(mask_head_backward(&fc.masks, &dm));
        dlat.push(dz);
    }
    for b in (0..cfg.num_blocks).rev() {
        let block_caches: Vec<&BlockCache> = caches.iter().map(|fc| &fc.blocks[b]).collect();
        dfeat = rci_block_backward(&params.blocks[b], &cfg, &block_caches, &dfeat, &mut grads.blocks[b])?;
    }
    for ch in 0..c {
        let xs: Vec<f64> = caches
            .iter()
            .flat_map(|fc| fc.latents[ch * n..(ch + 1) * n].iter().copied())
            .collect();
        let stats: Vec<NormStats> = caches.iter().map(|fc| fc.input_stats[ch]).collect();
        let d: Vec<f64> = dfeat
            .iter()
            .flat_map(|d| d[ch * n..(ch + 1) * n].iter().copied())
            .collect();
        let g = &mut **grads;
        let dz = sln_backward(
            &xs,
            n,
            &stats,
            cfg.norm_window,
            params.input_norm_gain.data(),
            &d,
            g.input_norm_gain.data_mut(),
            g.input_norm_bias.data_mut(),
        );
        for k in 0..k_frames {
            add_assign(&mut dlat[k][ch * n..(ch + 1) * n], &dz[k * n..(k + 1) * n]);
        }
    }
    for (fc, dz) in caches.iter().zip(&dlat) {
        for ch in 0..c {
            encode_backward(params, &fc.frames[ch * l..(ch + 1) * l], &dz[ch * n..(ch + 1) * n], grads);
        }
    }
    Ok(())
}
