//! WAV, weight and scene-metadata files.

use dfsnet_core::io::*;
use dfsnet_core::model::{ModelConfig, ModelParams};
use dfsnet_core::sim::sample_random_scene;
use dfsnet_core::MultichannelBuffer;

fn tone(freq: f64, len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 * (2.0 * std::f64::consts::PI * freq * n as f64 / 16000.0).sin()).collect()
}

#[test]
fn six_channel_order_survives_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let freqs = [250.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0];
    let buf = MultichannelBuffer::new(freqs.iter().map(|&f| tone(f, 1600)).collect(), 16000).unwrap();
    for format in [WavFormat::Pcm16, WavFormat::Float32] {
        let path = dir.path().join(format!("{format:?}.wav"));
        write_wav(&path, &buf, format).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.num_channels(), 6);
        for (c, &f) in freqs.iter().enumerate() {
            // the marker tone of each channel dominates its own correlation
            let best = freqs
                .iter()
                .map(|&g| tone(g, 1600).iter().zip(back.channel(c)).map(|(a, b)| a * b).sum::<f64>())
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            assert_eq!(freqs[best], f);
        }
    }
}

#[test]
fn float32_round_trip_is_exact_for_f32_values() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = tone(440.0, 500).iter().map(|v| *v as f32 as f64).collect();
    let buf = MultichannelBuffer::new(vec![data.clone(), data.iter().map(|v| -v).collect()], 16000).unwrap();
    let path = dir.path().join("x.wav");
    write_wav(&path, &buf, WavFormat::Float32).unwrap();
    assert_eq!(read_wav(&path).unwrap(), buf);
}

#[test]
fn pcm16_full_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let buf = MultichannelBuffer::new(vec![vec![1.0, -1.0, 0.0]], 16000).unwrap();
    write_wav(&path, &buf, WavFormat::Pcm16).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.channel(0), &[32767.0 / 32768.0, -1.0, 0.0]);
}

#[test]
fn rejects_malformed_and_unsupported_wavs() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"RIFF\x10\0\0\0WAVEnope").unwrap();
    assert!(read_wav(&junk).is_err());

    let int24 = dir.path().join("int24.wav");
    let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 24, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&int24, spec).unwrap();
    w.write_sample(5i32).unwrap();
    w.finalize().unwrap();
    assert!(read_wav(&int24).unwrap_err().to_string().contains("unsupported"));

    let ok = dir.path().join("ok.wav");
    write_wav(&ok, &MultichannelBuffer::zeros(2, 10, 16000), WavFormat::Float32).unwrap();
    assert!(read_wav_expect(&ok, Some(3), None).is_err());
    assert!(read_wav_expect(&ok, Some(2), Some(8000)).is_err());
    assert!(read_wav_expect(&ok, Some(2), Some(16000)).is_ok());
}

#[test]
fn weight_file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [ModelConfig::reference(), ModelConfig { shared_cells: true, encoder_bias: true, ..ModelConfig::tiny() }] {
        let file = WeightFile { params: ModelParams::init(&cfg, 5).unwrap(), num_taps: 17, sample_rate: 16000 };
        let path = dir.path().join("w.dfsw");
        save_weights(&path, &file).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.params.config, cfg);
        assert_eq!(back.to_bytes(), bytes);
    }
    assert!(load_weights(dir.path().join("missing.dfsw")).is_err());
}

#[test]
fn scene_metadata_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let meta = SceneMetadata::from_spec(sample_random_scene(8), 5.0, 3, 17).unwrap();
    let path = dir.path().join("scene.json");
    save_scene_metadata(&path, &meta).unwrap();
    assert_eq!(load_scene_metadata(&path).unwrap(), meta);
    assert_eq!(meta.permutation.len(), meta.spec.num_mics());
    assert!(meta.perturbed_tdoas.iter().all(|t| *t >= 0.0));
}
