//! Channel alignment toward the source with integer and fractional delay
//! filters, and the delay-and-sum combination used both as a baseline and
//! as the training target.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio::MultichannelBuffer;
use crate::error::{check_len, Error, Result};

/// Fractional delay filter length used by the reference configuration.
pub const DEFAULT_FRAC_TAPS: usize = 17;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x == x.round() {
        // exact zeros keep integer delays bit-exact
        0.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman window of support `width` centered at zero.
fn blackman(x: f64, width: f64) -> f64 {
    if x.abs() >= width / 2.0 {
        return 0.0;
    }
    let t = 2.0 * PI * x / width;
    0.42 + 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

/// Windowed-sinc fractional delay filter with a total delay of
/// `(M − 1)/2 + frac` samples and unit DC gain.
///
/// The Blackman window is centered on the delay point and spans `M + 1`
/// samples so that exactly `M` taps fall inside its nonzero region.
pub fn design_fractional_filter(frac: f64, num_taps: usize) -> Result<Vec<f64>> {
    if num_taps < 3 || num_taps % 2 == 0 {
        return Err(Error::invalid(format!(
            "fractional filter length must be odd and >= 3, got {num_taps}"
        )));
    }
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::invalid(format!(
            "fractional delay must lie in [0, 1), got {frac}"
        )));
    }
    let center = ((num_taps - 1) / 2) as f64 + frac;
    let width = (num_taps + 1) as f64;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|n| {
            let x = n as f64 - center;
            sinc(x) * blackman(x, width)
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= sum);
    Ok(taps)
}

/// Per-channel alignment filters derived from (estimated) TDOAs.
///
/// Channel 0 is the reference (farthest) microphone and only receives the
/// compensation delay. Channel `i ≥ 1` receives `int_delays[i-1]` samples of
/// pure delay followed by `frac_taps[i-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringPlan {
    pub int_delays: Vec<usize>,
    pub frac_delays: Vec<f64>,
    pub frac_taps: Vec<Vec<f64>>,
    pub ref_comp_delay: usize,
    pub num_taps: usize,
}

/// The effective causal filter applied to one channel: `delay` samples of
/// pure delay followed by `taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFilter {
    pub delay: usize,
    pub taps: Vec<f64>,
}

impl SteeringPlan {
    pub fn num_channels(&self) -> usize {
        self.int_delays.len() + 1
    }

    pub fn channel_filter(&self, c: usize) -> ChannelFilter {
        if c == 0 {
            ChannelFilter {
                delay: self.ref_comp_delay,
                taps: vec![1.0],
            }
        } else {
            ChannelFilter {
                delay: self.int_delays[c - 1],
                taps: self.frac_taps[c - 1].clone(),
            }
        }
    }

    /// Plan for `num_channels` channels that need no alignment.
    pub fn unsteered(num_channels: usize, num_taps: usize) -> Result<Self> {
        build_steering_plan(&vec![0.0; num_channels.saturating_sub(1)], num_taps)
    }
}

pub fn build_steering_plan(tdoas: &[f64], num_taps: usize) -> Result<SteeringPlan> {
    if let Some(t) = tdoas.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid(format!(
            "TDOA {t} is negative or non-finite; reference-permute the array first"
        )));
    }
    let mut int_delays = Vec::with_capacity(tdoas.len());
    let mut frac_delays = Vec::with_capacity(tdoas.len());
    let mut frac_taps = Vec::with_capacity(tdoas.len());
    for &t in tdoas {
        let d = t.floor();
        let f = (t - d).clamp(0.0, 1.0 - f64::EPSILON);
        int_delays.push(d as usize);
        frac_delays.push(f);
        frac_taps.push(design_fractional_filter(f, num_taps)?);
    }
    Ok(SteeringPlan {
        int_delays,
        frac_delays,
        frac_taps,
        ref_comp_delay: (num_taps - 1) / 2,
        num_taps,
    })
}

/// Streaming form of one channel's alignment filter.
///
/// Holds the last `delay + taps.len()` input samples; zero initial history.
#[derive(Debug, Clone)]
pub struct ChannelSteerer {
    filter: ChannelFilter,
    history: Vec<f64>,
    pos: usize,
}

impl ChannelSteerer {
    pub fn new(filter: ChannelFilter) -> Self {
        let cap = filter.delay + filter.taps.len();
        Self {
            filter,
            history: vec![0.0; cap],
            pos: 0,
        }
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|x| *x = 0.0);
        self.pos = 0;
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> f64 {
        let cap = self.history.len();
        self.history[self.pos] = x;
        // newest sample sits at `pos`; tap n reads x[t - delay - n]
        let mut idx = (self.pos + cap - self.filter.delay) % cap;
        let mut acc = 0.0;
        for &h in &self.filter.taps {
            acc += h * self.history[idx];
            idx = if idx == 0 { cap - 1 } else { idx - 1 };
        }
        self.pos = (self.pos + 1) % cap;
        acc
    }

    pub fn process(&mut self, input: &[f64], output: &mut [f64]) {
        for (y, &x) in output.iter_mut().zip(input) {
            *y = self.push(x);
        }
    }
}

/// Aligns every channel of `input`. Output length equals input length.
pub fn apply_steering(plan: &SteeringPlan, input: &MultichannelBuffer) -> Result<MultichannelBuffer> {
    check_len("steering channels", plan.num_channels(), input.num_channels())?;
    let channels = (0..input.num_channels())
        .map(|c| {
            let mut steerer = ChannelSteerer::new(plan.channel_filter(c));
            let mut out = vec![0.0; input.len()];
            steerer.process(input.channel(c), &mut out);
            out
        })
        .collect();
    MultichannelBuffer::new(channels, input.sample_rate())
}

/// Mean across channels.
pub fn delay_and_sum(aligned: &MultichannelBuffer) -> Vec<f64> {
    let c = aligned.num_channels() as f64;
    let mut out = vec![0.0; aligned.len()];
    for ch in aligned.channels() {
        for (o, x) in out.iter_mut().zip(ch) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= c);
    out
}

/// Delay-and-sum of the steered clean components: the training target.
pub fn make_target(plan: &SteeringPlan, clean: &MultichannelBuffer) -> Result<Vec<f64>> {
    Ok(delay_and_sum(&apply_steering(plan, clean)?))
}
