//! Hop-synchronous real-time engine: steering delay lines, framing, the
//! network, and overlap-add, driven `L/2` samples at a time.
//!
//! Output hop `j` carries samples `[(j − 1)·L/2, j·L/2)` of the estimate on
//! the delay-and-sum timeline; hop 0 is silence. [`enhance_offline`] and
//! [`enhance_streaming`] produce bit-identical results.

use std::sync::Arc;

use crate::audio::MultichannelBuffer;
use crate::error::{check_len, Error, Result};
use crate::framing::{overlap_add, segment, FrameSequence, OverlapAdder};
use crate::model::{forward_frame, FrameCache, ModelParams, ModelState};
use crate::steering::{apply_steering, ChannelSteerer, SteeringPlan};

pub use crate::accounting::{latency_report, LatencyReport};

/// Per-stream mutable state. Parameters and steering filters are shared
/// read-only; everything else belongs to this stream.
#[derive(Debug, Clone)]
pub struct Stream {
    params: Arc<ModelParams>,
    steerers: Vec<ChannelSteerer>,
    /// Latest aligned frame per channel, `C × L`.
    frames: Vec<f64>,
    hops_seen: usize,
    model: ModelState,
    ola: OverlapAdder,
    frame_out: Vec<f64>,
    frames_processed: usize,
}

/// Creates a zeroed stream for `channels` microphones steered by `plan`.
pub fn create_stream(params: Arc<ModelParams>, plan: &SteeringPlan, channels: usize) -> Result<Stream> {
    check_len("stream channels", plan.num_channels(), channels)?;
    let cfg = params.config;
    let model = ModelState::new(&cfg, channels)?;
    Ok(Stream {
        steerers: (0..channels)
            .map(|c| ChannelSteerer::new(plan.channel_filter(c)))
            .collect(),
        frames: vec![0.0; channels * cfg.frame_len],
        hops_seen: 0,
        model,
        ola: OverlapAdder::new(cfg.frame_len)?,
        frame_out: vec![0.0; cfg.frame_len],
        frames_processed: 0,
        params,
    })
}

impl Stream {
    pub fn num_channels(&self) -> usize {
        self.steerers.len()
    }

    pub fn hop(&self) -> usize {
        self.params.config.hop()
    }

    pub fn frames_processed(&self) -> usize {
        self.frames_processed
    }

    pub fn params(&self) -> &Arc<ModelParams> {
        &self.params
    }

    /// Consumes one hop per channel (`input` is `C × L/2`, channel-major) and
    /// writes one hop of enhanced output.
    pub fn push_pull(&mut self, input: &[f64], output: &mut [f64]) -> Result<()> {
        let hop = self.hop();
        let l = 2 * hop;
        check_len("stream input", self.num_channels() * hop, input.len())?;
        check_len("stream output", hop, output.len())?;

        for (c, steerer) in self.steerers.iter_mut().enumerate() {
            let frame = &mut self.frames[c * l..(c + 1) * l];
            frame.copy_within(hop.., 0);
            steerer.process(&input[c * hop..(c + 1) * hop], &mut frame[hop..]);
        }
        self.hops_seen += 1;
        if self.hops_seen < 2 {
            output.iter_mut().for_each(|o| *o = 0.0);
            return Ok(());
        }
        forward_frame(&self.params, &mut self.model, &self.frames, &mut self.frame_out, None)?;
        self.ola.push_frame(&self.frame_out, output);
        self.frames_processed += 1;
        Ok(())
    }

    /// Emits the final half frame, which no later frame overlaps.
    pub fn flush(&self, output: &mut [f64]) -> Result<()> {
        check_len("stream output", self.hop(), output.len())?;
        if self.frames_processed == 0 {
            output.iter_mut().for_each(|o| *o = 0.0);
        } else {
            self.ola.flush(output);
        }
        Ok(())
    }

    /// Restores the state of a freshly created stream.
    pub fn reset(&mut self) {
        self.steerers.iter_mut().for_each(ChannelSteerer::reset);
        self.frames.iter_mut().for_each(|x| *x = 0.0);
        self.hops_seen = 0;
        self.model.reset();
        self.ola.reset();
        self.frame_out.iter_mut().for_each(|x| *x = 0.0);
        self.frames_processed = 0;
    }
}

/// Length to which an utterance is zero-padded before processing: a whole
/// number of hops and at least one frame.
pub fn padded_len(len: usize, frame_len: usize) -> usize {
    let hop = frame_len / 2;
    len.div_ceil(hop).max(2) * hop
}

fn padded(mix: &MultichannelBuffer, frame_len: usize) -> Result<MultichannelBuffer> {
    let p = padded_len(mix.len(), frame_len);
    let channels = mix
        .channels()
        .iter()
        .map(|c| {
            let mut v = c.clone();
            v.resize(p, 0.0);
            v
        })
        .collect();
    MultichannelBuffer::new(channels, mix.sample_rate())
}

/// Steered, zero-padded frames of every channel, gathered per frame as
/// `C × L` row-major blocks.
pub fn aligned_frames(
    plan: &SteeringPlan,
    mix: &MultichannelBuffer,
    frame_len: usize,
) -> Result<Vec<Vec<f64>>> {
    let aligned = apply_steering(plan, &padded(mix, frame_len)?)?;
    let per_channel: Vec<FrameSequence> = aligned
        .channels()
        .iter()
        .map(|c| segment(c, frame_len))
        .collect::<Result<_>>()?;
    let k = per_channel[0].num_frames();
    Ok((0..k)
        .map(|i| {
            per_channel
                .iter()
                .flat_map(|seq| seq.frames[i].iter().copied())
                .collect()
        })
        .collect())
}

/// Runs the model over pre-gathered frames, optionally recording caches.
pub fn run_frames(
    params: &ModelParams,
    frames: &[Vec<f64>],
    channels: usize,
    mut caches: Option<&mut Vec<FrameCache>>,
) -> Result<Vec<Vec<f64>>> {
    let mut state = ModelState::new(&params.config, channels)?;
    if let Some(c) = caches.as_deref_mut() {
        c.clear();
        c.resize_with(frames.len(), Default::default);
    }
    frames
        .iter()
        .enumerate()
        .map(|(k, frame)| {
            let mut out = vec![0.0; params.config.frame_len];
            let cache = caches.as_deref_mut().map(|c| &mut c[k]);
            forward_frame(params, &mut state, frame, &mut out, cache)?;
            Ok(out)
        })
        .collect()
}

/// Whole-utterance processing: steer, frame, run the network, overlap-add.
/// Output has the input's length.
pub fn enhance_offline(
    params: &ModelParams,
    plan: &SteeringPlan,
    mix: &MultichannelBuffer,
) -> Result<Vec<f64>> {
    check_len("mix channels", plan.num_channels(), mix.num_channels())?;
    let l = params.config.frame_len;
    let frames = aligned_frames(plan, mix, l)?;
    let outputs = run_frames(params, &frames, mix.num_channels(), None)?;
    let mut est = overlap_add(&FrameSequence {
        frames: outputs,
        frame_len: l,
        signal_len: padded_len(mix.len(), l),
    });
    est.truncate(mix.len());
    Ok(est)
}

/// Feeds `mix` through a [`Stream`] hop by hop and realigns the result to
/// the offline timeline.
pub fn enhance_streaming(
    params: Arc<ModelParams>,
    plan: &SteeringPlan,
    mix: &MultichannelBuffer,
) -> Result<Vec<f64>> {
    let c = mix.num_channels();
    let mut stream = create_stream(params, plan, c)?;
    let hop = stream.hop();
    let input = padded(mix, 2 * hop)?;
    let hops = input.len() / hop;
    if hops < 2 {
        return Err(Error::invalid("padded input shorter than one frame"));
    }
    let mut out = Vec::with_capacity((hops + 1) * hop);
    let mut block = vec![0.0; c * hop];
    let mut out_hop = vec![0.0; hop];
    for j in 0..hops {
        for ch in 0..c {
            block[ch * hop..(ch + 1) * hop].copy_from_slice(&input.channel(ch)[j * hop..(j + 1) * hop]);
        }
        stream.push_pull(&block, &mut out_hop)?;
        out.extend_from_slice(&out_hop);
    }
    stream.flush(&mut out_hop)?;
    out.extend_from_slice(&out_hop);
    let mut est = out.split_off(hop);
    est.truncate(mix.len());
    Ok(est)
}
