//! RIFF/WAVE reading and writing, PCM16 or IEEE float32.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::audio::MultichannelBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

const PCM_MAX: f64 = 1.0 - 1.0 / 32768.0;

/// Rounds half away from zero after clipping to `[−1, 1 − 2⁻¹⁵]`.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, PCM_MAX) * 32768.0).round() as i16
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelBuffer> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let c = spec.channels as usize;
    if c == 0 {
        return Err(Error::format("wav", "zero channels"));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(Error::format(
                "wav",
                format!("unsupported codec: {bits}-bit {fmt:?}"),
            ))
        }
    };
    if interleaved.len() % c != 0 {
        return Err(Error::format("wav", "sample count is not a multiple of the channel count"));
    }
    let mut channels = vec![Vec::with_capacity(interleaved.len() / c); c];
    for frame in interleaved.chunks(c) {
        for (ch, v) in channels.iter_mut().zip(frame) {
            ch.push(*v);
        }
    }
    MultichannelBuffer::new(channels, spec.sample_rate)
}

/// Reads `path` and checks its channel count and rate when given.
pub fn read_wav_expect(
    path: impl AsRef<Path>,
    channels: Option<usize>,
    sample_rate: Option<u32>,
) -> Result<MultichannelBuffer> {
    let path = path.as_ref();
    let buf = read_wav(path)?;
    if let Some(c) = channels.filter(|&c| c != buf.num_channels()) {
        return Err(Error::format(
            "wav",
            format!("{} has {} channels, expected {c}", path.display(), buf.num_channels()),
        ));
    }
    if let Some(r) = sample_rate.filter(|&r| r != buf.sample_rate()) {
        return Err(Error::format(
            "wav",
            format!("{} is sampled at {} Hz, expected {r}", path.display(), buf.sample_rate()),
        ));
    }
    Ok(buf)
}

pub fn write_wav(path: impl AsRef<Path>, buffer: &MultichannelBuffer, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: u16::try_from(buffer.num_channels())
            .map_err(|_| Error::invalid("too many channels for wav"))?,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    write_atomic(path, |tmp| {
        let mut w = WavWriter::create(tmp, spec).map_err(wav_err(path))?;
        for t in 0..buffer.len() {
            for ch in buffer.channels() {
                match format {
                    WavFormat::Pcm16 => w.write_sample(quantize_pcm16(ch[t])),
                    WavFormat::Float32 => w.write_sample(ch[t] as f32),
                }
                .map_err(wav_err(path))?;
            }
        }
        w.finalize().map_err(wav_err(path))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_quantization() {
        assert_eq!(quantize_pcm16(1.0), 32767);
        assert_eq!(quantize_pcm16(2.0), 32767);
        assert_eq!(quantize_pcm16(-1.0), -32768);
        assert_eq!(quantize_pcm16(-3.0), -32768);
        assert_eq!(quantize_pcm16(0.5 / 32768.0), 1);
        assert_eq!(quantize_pcm16(-0.5 / 32768.0), -1);
        assert_eq!(quantize_pcm16(0.0), 0);
    }
}
