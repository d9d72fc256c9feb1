//! Multichannel sample container shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// A `C × T` block of audio samples at a fixed sample rate.
///
/// Rows are channels; every row has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl MultichannelBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("buffer needs at least one channel"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                context: "channel length",
                expected: len,
                actual: bad.len(),
            });
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            channels: vec![vec![0.0; len]; num_channels.max(1)],
            sample_rate,
        }
    }

    pub fn from_mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Returns a copy with rows reordered so that output row `i` is input row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_channels() {
            return Err(Error::DimensionMismatch {
                context: "channel permutation",
                expected: self.num_channels(),
                actual: perm.len(),
            });
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("not a permutation"));
            }
        }
        Ok(Self {
            channels: perm.iter().map(|&p| self.channels[p].clone()).collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Total energy summed over all channels.
    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|x| x * x).sum()
    }

    /// Elementwise `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if other.num_channels() != self.num_channels() || other.len() != self.len() {
            return Err(Error::invalid("linear combination of mismatched buffers"));
        }
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(x, y)| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect())
            .collect();
        Ok(Self {
            channels,
            sample_rate: self.sample_rate,
        })
    }
}
