//! 50%-overlapped rectangular framing and coverage-normalized overlap-add.
//!
//! Frame `k` covers samples `[k·L/2, k·L/2 + L)`. Reconstruction divides every
//! output sample by the number of frames that touched it, so
//! `overlap_add(segment(x)) == x` exactly.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    /// Length of the signal the frames were cut from, before zero padding.
    pub signal_len: usize,
}

impl FrameSequence {
    pub fn hop(&self) -> usize {
        self.frame_len / 2
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

fn check_frame_len(frame_len: usize) -> Result<()> {
    if frame_len < 2 || frame_len % 2 != 0 {
        return Err(Error::invalid(format!(
            "frame length must be even and >= 2, got {frame_len}"
        )));
    }
    Ok(())
}

/// Number of frames needed to cover `signal_len` samples.
pub fn num_frames(signal_len: usize, frame_len: usize) -> usize {
    let hop = frame_len / 2;
    if signal_len <= frame_len {
        1
    } else {
        (signal_len - frame_len).div_ceil(hop) + 1
    }
}

pub fn segment(signal: &[f64], frame_len: usize) -> Result<FrameSequence> {
    check_frame_len(frame_len)?;
    let hop = frame_len / 2;
    let k = num_frames(signal.len(), frame_len);
    let frames = (0..k)
        .map(|i| {
            let start = i * hop;
            let mut frame = vec![0.0; frame_len];
            let end = (start + frame_len).min(signal.len());
            if start < end {
                frame[..end - start].copy_from_slice(&signal[start..end]);
            }
            frame
        })
        .collect();
    Ok(FrameSequence {
        frames,
        frame_len,
        signal_len: signal.len(),
    })
}

/// Per-sample gain applied after summing frames: 1 where one frame
/// contributes, 1/2 where two do.
pub fn coverage_gain(index: usize, num_frames: usize, frame_len: usize) -> f64 {
    let hop = frame_len / 2;
    let covered_len = (num_frames - 1) * hop + frame_len;
    if num_frames > 1 && index >= hop && index < covered_len - hop {
        0.5
    } else {
        1.0
    }
}

pub fn overlap_add(frames: &FrameSequence) -> Vec<f64> {
    let l = frames.frame_len;
    let hop = l / 2;
    let k = frames.num_frames();
    if k == 0 {
        return vec![0.0; frames.signal_len];
    }
    let mut out = vec![0.0; (k - 1) * hop + l];
    for (i, frame) in frames.frames.iter().enumerate() {
        for (o, x) in out[i * hop..i * hop + l].iter_mut().zip(frame) {
            *o += x;
        }
    }
    for (n, o) in out.iter_mut().enumerate() {
        *o *= coverage_gain(n, k, l);
    }
    out.truncate(frames.signal_len);
    out
}

/// Streaming counterpart of [`segment`]: accepts one hop at a time and
/// exposes the most recent full frame.
#[derive(Debug, Clone)]
pub struct FrameAssembler {
    frame: Vec<f64>,
    hops_seen: usize,
}

impl FrameAssembler {
    pub fn new(frame_len: usize) -> Result<Self> {
        check_frame_len(frame_len)?;
        Ok(Self {
            frame: vec![0.0; frame_len],
            hops_seen: 0,
        })
    }

    pub fn reset(&mut self) {
        self.frame.iter_mut().for_each(|x| *x = 0.0);
        self.hops_seen = 0;
    }

    /// Shifts in one hop. Returns `true` once the buffer holds a complete frame.
    pub fn push_hop(&mut self, hop: &[f64]) -> bool {
        let h = self.frame.len() / 2;
        debug_assert_eq!(hop.len(), h);
        self.frame.copy_within(h.., 0);
        self.frame[h..].copy_from_slice(hop);
        self.hops_seen += 1;
        self.hops_seen >= 2
    }

    pub fn frame(&self) -> &[f64] {
        &self.frame
    }
}

/// Streaming counterpart of [`overlap_add`]. Each completed frame releases
/// the hop that can no longer receive contributions.
#[derive(Debug, Clone)]
pub struct OverlapAdder {
    carry: Vec<f64>,
    frames_seen: usize,
}

impl OverlapAdder {
    pub fn new(frame_len: usize) -> Result<Self> {
        check_frame_len(frame_len)?;
        Ok(Self {
            carry: vec![0.0; frame_len / 2],
            frames_seen: 0,
        })
    }

    pub fn reset(&mut self) {
        self.carry.iter_mut().for_each(|x| *x = 0.0);
        self.frames_seen = 0;
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Adds `frame` and writes the finished hop into `out`.
    pub fn push_frame(&mut self, frame: &[f64], out: &mut [f64]) {
        let h = self.carry.len();
        if self.frames_seen == 0 {
            out.copy_from_slice(&frame[..h]);
        } else {
            for ((o, c), x) in out.iter_mut().zip(&self.carry).zip(&frame[..h]) {
                *o = (c + x) * 0.5;
            }
        }
        self.carry.copy_from_slice(&frame[h..]);
        self.frames_seen += 1;
    }

    /// Releases the trailing half of the last frame, which only one frame covers.
    pub fn flush(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.carry);
    }
}
