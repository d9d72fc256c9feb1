//! Frame-synchronous evaluation of the full network for `C` channels.

use super::layers::{block_forward, encode_into, masked_mix, sigmoid, GroupGruOptions};
use super::linalg::vec_mat;
use super::norm::{sln_step, NormState, NormStats};
use super::{GruStepCache, ModelConfig, ModelParams};
use crate::error::{check_len, Error, Result};

/// Per-channel state of one RCI block.
#[derive(Debug, Clone)]
pub struct BlockState {
    pub norm: NormState,
    pub hidden: Vec<f64>,
}

impl BlockState {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            norm: NormState::new(config.norm_window),
            hidden: vec![0.0; config.hidden_dim],
        }
    }

    pub fn reset(&mut self) {
        self.norm.reset();
        self.hidden.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BlockScratch {
    pub act: Vec<f64>,
    pub avg: Vec<f64>,
    pub shared: Vec<f64>,
    pub shared_tmp: Vec<f64>,
    pub gi: Vec<f64>,
    pub gh: Vec<f64>,
    pub hidden_new: Vec<f64>,
    pub fc_out: Vec<f64>,
    pub norm_out: Vec<f64>,
}

impl BlockScratch {
    pub fn new(cfg: &ModelConfig, channels: usize) -> Self {
        let (n, hp) = (cfg.latent_dim, cfg.cell_hidden());
        Self {
            act: vec![0.0; channels * n],
            avg: vec![0.0; n],
            shared: vec![0.0; cfg.partitions * 3 * hp],
            shared_tmp: vec![0.0; 3 * hp],
            gi: vec![0.0; 3 * hp],
            gh: vec![0.0; 3 * hp],
            hidden_new: vec![0.0; cfg.hidden_dim],
            fc_out: vec![0.0; n],
            norm_out: vec![0.0; n],
        }
    }
}

/// Forward values of one RCI block for one frame, all channels.
#[derive(Debug, Clone, Default)]
pub struct BlockCache {
    /// Block input before PReLU, `C × N`.
    pub input: Vec<f64>,
    pub act: Vec<f64>,
    pub avg: Vec<f64>,
    /// Indexed `channel · P + partition`.
    pub steps: Vec<GruStepCache>,
    /// New hidden states, `C × H`.
    pub hidden: Vec<f64>,
    pub fc_out: Vec<f64>,
    pub norm_stats: Vec<NormStats>,
}

/// Forward values of one frame needed by the backward pass.
#[derive(Debug, Clone, Default)]
pub struct FrameCache {
    /// Aligned input frames, `C × L`.
    pub frames: Vec<f64>,
    pub latents: Vec<f64>,
    pub input_stats: Vec<NormStats>,
    pub blocks: Vec<BlockCache>,
    pub masks: Vec<f64>,
    pub mix: Vec<f64>,
}

/// Recurrent and normalization state of one stream, plus scratch space so
/// that [`forward_frame`] never allocates.
#[derive(Debug, Clone)]
pub struct ModelState {
    config: ModelConfig,
    channels: usize,
    input_norms: Vec<NormState>,
    /// Indexed `block · C + channel`.
    blocks: Vec<BlockState>,
    latents: Vec<f64>,
    feats: Vec<f64>,
    masks: Vec<f64>,
    mix: Vec<f64>,
    block_scratch: BlockScratch,
    options: GroupGruOptions,
}

impl ModelState {
    pub fn new(config: &ModelConfig, channels: usize) -> Result<Self> {
        config.validate()?;
        if channels == 0 {
            return Err(Error::invalid("model state needs at least one channel"));
        }
        let n = config.latent_dim;
        Ok(Self {
            config: *config,
            channels,
            input_norms: (0..channels).map(|_| NormState::new(config.norm_window)).collect(),
            blocks: (0..config.num_blocks * channels)
                .map(|_| BlockState::new(config))
                .collect(),
            latents: vec![0.0; channels * n],
            feats: vec![0.0; channels * n],
            masks: vec![0.0; channels * n],
            mix: vec![0.0; n],
            block_scratch: BlockScratch::new(config, channels),
            options: GroupGruOptions::default(),
        })
    }

    pub fn with_options(mut self, options: GroupGruOptions) -> Self {
        self.options = options;
        self
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.input_norms.iter_mut().for_each(NormState::reset);
        self.blocks.iter_mut().for_each(BlockState::reset);
    }

    /// Masks produced by the most recent frame, `C × N`.
    pub fn last_masks(&self) -> &[f64] {
        &self.masks
    }

    /// Reorders the per-channel states: channel `i` takes the state of `perm[i]`.
    pub fn permute_channels(&mut self, perm: &[usize]) {
        let c = self.channels;
        let norms: Vec<NormState> = perm.iter().map(|&p| self.input_norms[p].clone()).collect();
        self.input_norms = norms;
        let blocks: Vec<BlockState> = (0..self.config.num_blocks)
            .flat_map(|b| perm.iter().map(move |&p| b * c + p))
            .map(|i| self.blocks[i].clone())
            .collect();
        self.blocks = blocks;
    }
}

/// Runs the network on one aligned frame per channel.
///
/// `frames` is `C × L` row-major and `out` receives the `L`-sample estimate of
/// the delay-and-sum clean frame. Every stateful component advances exactly
/// once. When `cache` is given, intermediate values are recorded for
/// backpropagation.
pub fn forward_frame(
    params: &ModelParams,
    state: &mut ModelState,
    frames: &[f64],
    out: &mut [f64],
    mut cache: Option<&mut FrameCache>,
) -> Result<()> {
    let cfg = &params.config;
    if *cfg != state.config {
        return Err(Error::InvalidConfig(
            "model state was created for a different configuration".into(),
        ));
    }
    let (l, n, c) = (cfg.frame_len, cfg.latent_dim, state.channels);
    check_len("forward frames", c * l, frames.len())?;
    check_len("forward output", l, out.len())?;

    for (frame, z) in frames.chunks(l).zip(state.latents.chunks_mut(n)) {
        encode_into(frame, params, z);
    }
    if let Some(fc) = cache.as_deref_mut() {
        fc.frames.clear();
        fc.frames.extend_from_slice(frames);
        fc.latents.clone_from(&state.latents);
        fc.input_stats.clear();
        fc.blocks.resize_with(cfg.num_blocks, Default::default);
    }
    for ch in 0..c {
        let stats = sln_step(
            &state.latents[ch * n..(ch + 1) * n],
            &mut state.input_norms[ch],
            params.input_norm_gain.data(),
            params.input_norm_bias.data(),
            &mut state.feats[ch * n..(ch + 1) * n],
        );
        if let Some(fc) = cache.as_deref_mut() {
            fc.input_stats.push(stats);
        }
    }
    for (b, block) in params.blocks.iter().enumerate() {
        block_forward(
            block,
            cfg,
            &mut state.feats,
            &mut state.blocks[b * c..(b + 1) * c],
            &mut state.block_scratch,
            state.options,
            cache.as_deref_mut().map(|fc| &mut fc.blocks[b]),
        );
    }
    for (m, f) in state.masks.iter_mut().zip(&state.feats) {
        *m = sigmoid(*f);
    }
    masked_mix(&state.masks, &state.latents, c, &mut state.mix);
    vec_mat(&state.mix, params.decoder.data(), l, out);
    if let Some(fc) = cache {
        fc.masks.clone_from(&state.masks);
        fc.mix.clone_from(&state.mix);
    }
    Ok(())
}
