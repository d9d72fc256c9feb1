//! Analytic gradients against central finite differences.

#![allow(dead_code)]

use dfsnet_core::model::{
    cell_step, shared_input_projection, sigmoid, sln_step, GruCell, GruStepCache, ModelConfig,
    ModelParams, NormState, Tensor,
};
use dfsnet_core::steering::SteeringPlan;
use dfsnet_core::train::*;
use dfsnet_core::MultichannelBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
use std::cell::Cell;

thread_local! {
    static WORST: Cell<f64> = const { Cell::new(0.0) };
}

/// Largest relative error seen by [`check`] since the last call.
pub fn take_worst() -> f64 {
    WORST.with(|w| w.replace(0.0))
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn randv(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks `analytic` against central differences of `f` at `x`, probing at
/// most `max_probes` coordinates.
fn check(
    label: &str,
    x: &mut Vec<f64>,
    analytic: &[f64],
    max_probes: usize,
    rng: &mut ChaCha8Rng,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(x.len(), analytic.len(), "{label}");
    let idx: Vec<usize> = if x.len() <= max_probes {
        (0..x.len()).collect()
    } else {
        (0..max_probes).map(|_| rng.random_range(0..x.len())).collect()
    };
    let mut worst: f64 = 0.0;
    let mut at = (0.0, 0.0);
    for i in idx {
        let orig = x[i];
        x[i] = orig + STEP;
        let up = f(x);
        x[i] = orig - STEP;
        let down = f(x);
        x[i] = orig;
        let num = (up - down) / (2.0 * STEP);
        if rel_err(analytic[i], num) > worst {
            worst = rel_err(analytic[i], num);
            at = (analytic[i], num);
        }
    }
    f(x);
    WORST.with(|w| w.set(w.get().max(worst)));
    assert!(worst < TOL, "{label}: max relative error {worst:e} (analytic {:e}, numeric {:e})", at.0, at.1);
    worst
}

pub fn tiny_cfg(seed: u64) -> ModelConfig {
    ModelConfig {
        frame_len: 8,
        latent_dim: 4,
        hidden_dim: 4,
        partitions: 2,
        num_blocks: 2,
        norm_window: 3,
        shared_cells: seed % 3 == 0,
        encoder_bias: seed % 2 == 0,
    }
}

fn perturb_params(params: &mut ModelParams, rng: &mut ChaCha8Rng) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

fn set_tensor(params: &mut ModelParams, which: usize, data: &[f64]) {
    params.tensors_mut()[which].data_mut().copy_from_slice(data);
}

pub fn si_sdr_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = randv(&mut rng, 40);
        let mut e: Vec<f64> = r.iter().map(|x| x + 0.5 * rng.random_range(-1.0..1.0)).collect();
        let (_, g) = si_sdr_grad(&e, &r).unwrap();
        check("si_sdr", &mut e, &g, 40, &mut rng, |x| si_sdr(x, &r).unwrap());
    }
}

pub fn encode_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = tiny_cfg(seed);
        let mut params = ModelParams::init(&cfg, seed).unwrap();
        let frame = randv(&mut rng, cfg.frame_len);
        let w = randv(&mut rng, cfg.latent_dim);
        let mut grads = ParamGrads::zeros_like(&params);
        let dframe = encode_backward(&params, &frame, &w, &mut grads);

        let p2 = params.clone();
        let mut x = frame.clone();
        check("encode input", &mut x, &dframe, 64, &mut rng, |x| {
            dot(&dfsnet_core::model::encode(x, &p2).unwrap(), &w)
        });
        let mut we = params.encoder.data().to_vec();
        let g = grads.encoder.data().to_vec();
        check("encode weight", &mut we, &g, 64, &mut rng, |v| {
            params.encoder.data_mut().copy_from_slice(v);
            dot(&dfsnet_core::model::encode(&frame, &params).unwrap(), &w)
        });
        if let Some(b) = params.encoder_bias.clone() {
            let mut bv = b.data().to_vec();
            let g = grads.encoder_bias.as_ref().unwrap().data().to_vec();
            check("encode bias", &mut bv, &g, 64, &mut rng, |v| {
                params.encoder_bias.as_mut().unwrap().data_mut().copy_from_slice(v);
                dot(&dfsnet_core::model::encode(&frame, &params).unwrap(), &w)
            });
        }
    }
}

fn sln_sequence(xs: &[f64], n: usize, window: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<dfsnet_core::model::NormStats>) {
    let mut state = NormState::new(window);
    let mut out = vec![0.0; xs.len()];
    let mut stats = Vec::new();
    for (x, o) in xs.chunks(n).zip(out.chunks_mut(n)) {
        stats.push(sln_step(x, &mut state, gain, bias, o));
    }
    (out, stats)
}

pub fn sln_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k, window) = (5, 9, 1 + seed as usize % 4);
        let mut xs = randv(&mut rng, n * k);
        let mut gain: Vec<f64> = randv(&mut rng, n).iter().map(|g| 1.0 + 0.5 * g).collect();
        let mut bias = randv(&mut rng, n);
        let w = randv(&mut rng, n * k);
        let (_, stats) = sln_sequence(&xs, n, window, &gain, &bias);
        let (mut dg, mut db) = (vec![0.0; n], vec![0.0; n]);
        let dx = sln_backward(&xs, n, &stats, window, &gain, &w, &mut dg, &mut db);

        let (g0, b0) = (gain.clone(), bias.clone());
        check("sln input", &mut xs.clone(), &dx, 64, &mut rng, |x| {
            dot(&sln_sequence(x, n, window, &g0, &b0).0, &w)
        });
        let x0 = xs.clone();
        check("sln gain", &mut gain, &dg, 64, &mut rng, |g| {
            dot(&sln_sequence(&x0, n, window, g, &b0).0, &w)
        });
        check("sln bias", &mut bias, &db, 64, &mut rng, |b| {
            dot(&sln_sequence(&x0, n, window, &g0, b).0, &w)
        });
        xs.clear();
    }
}

pub fn channel_average_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, n) = (1 + seed as usize % 5, 6);
        let w = randv(&mut rng, n);
        let grads = channel_average_backward(&w, c);
        let flat_grad: Vec<f64> = grads.concat();
        let mut x = randv(&mut rng, c * n);
        check("channel average", &mut x, &flat_grad, 64, &mut rng, |x| {
            let rows: Vec<Vec<f64>> = x.chunks(n).map(|r| r.to_vec()).collect();
            dot(&dfsnet_core::model::channel_average(&rows).unwrap(), &w)
        });
    }
}

fn random_cell(rng: &mut ChaCha8Rng, band: usize, h: usize) -> GruCell {
    let mut cell = GruCell::zeros(2 * band, h);
    for t in [&mut cell.w_input, &mut cell.w_hidden, &mut cell.b_input, &mut cell.b_hidden] {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    cell
}

fn run_cell(cell: &GruCell, local: &[f64], avg: &[f64], h_prev: &[f64], cache: Option<&mut GruStepCache>) -> Vec<f64> {
    let h = h_prev.len();
    let mut shared = vec![0.0; 3 * h];
    shared_input_projection(cell, avg, &mut shared);
    let (mut gi, mut gh, mut out) = (vec![0.0; 3 * h], vec![0.0; 3 * h], vec![0.0; h]);
    cell_step(cell, local, &shared, h_prev, &mut out, &mut gi, &mut gh, cache);
    out
}

fn cell_tensor(cell: &mut GruCell, i: usize) -> &mut Tensor {
    match i {
        0 => &mut cell.w_input,
        1 => &mut cell.w_hidden,
        2 => &mut cell.b_input,
        _ => &mut cell.b_hidden,
    }
}

pub fn gru_cell_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (band, h) = (3, 4);
        let mut cell = random_cell(&mut rng, band, h);
        let local = randv(&mut rng, band);
        let avg = randv(&mut rng, band);
        let h_prev = randv(&mut rng, h);
        let w = randv(&mut rng, h);
        let mut cache = GruStepCache::default();
        run_cell(&cell, &local, &avg, &h_prev, Some(&mut cache));
        let mut grad = GruCell::zeros(2 * band, h);
        let (mut dl, mut da, mut dh) = (vec![0.0; band], vec![0.0; band], vec![0.0; h]);
        gru_cell_backward(&cell, &local, &avg, &cache, &w, &mut grad, &mut dl, &mut da, &mut dh);

        let c0 = cell.clone();
        check("gru local", &mut local.clone(), &dl, 64, &mut rng, |x| dot(&run_cell(&c0, x, &avg, &h_prev, None), &w));
        check("gru avg", &mut avg.clone(), &da, 64, &mut rng, |x| dot(&run_cell(&c0, &local, x, &h_prev, None), &w));
        check("gru hidden", &mut h_prev.clone(), &dh, 64, &mut rng, |x| dot(&run_cell(&c0, &local, &avg, x, None), &w));
        for t in 0..4 {
            let mut v = cell_tensor(&mut cell, t).data().to_vec();
            let g = cell_tensor(&mut grad, t).data().to_vec();
            check("gru weights", &mut v, &g, 64, &mut rng, |v| {
                cell_tensor(&mut cell, t).data_mut().copy_from_slice(v);
                dot(&run_cell(&cell, &local, &avg, &h_prev, None), &w)
            });
        }
    }
}

pub fn group_gru_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = tiny_cfg(seed);
        let (band, hp) = (cfg.band(), cfg.cell_hidden());
        let mut cells: Vec<GruCell> = (0..cfg.num_cells()).map(|_| random_cell(&mut rng, band, hp)).collect();
        let local = randv(&mut rng, cfg.latent_dim);
        let avg = randv(&mut rng, cfg.latent_dim);
        let hidden = randv(&mut rng, cfg.hidden_dim);
        let w = randv(&mut rng, cfg.hidden_dim);
        let forward = |cells: &[GruCell], local: &[f64], avg: &[f64], hidden: &[f64]| {
            dot(&dfsnet_core::model::group_gru_step(local, avg, hidden, cells, &cfg).unwrap(), &w)
        };
        let caches: Vec<GruStepCache> = (0..cfg.partitions)
            .map(|p| {
                let mut c = GruStepCache::default();
                let b = p * band..(p + 1) * band;
                run_cell(&cells[cfg.cell_index(p)], &local[b.clone()], &avg[b], &hidden[p * hp..(p + 1) * hp], Some(&mut c));
                c
            })
            .collect();
        let mut grad_cells: Vec<GruCell> = cells.iter().map(|c| GruCell::zeros(c.input_dim(), c.hidden_dim())).collect();
        let g = group_gru_backward(&local, &avg, &caches, &w, &cells, &mut grad_cells, &cfg);

        let c0 = cells.clone();
        check("group local", &mut local.clone(), &g.dlocal, 64, &mut rng, |x| forward(&c0, x, &avg, &hidden));
        check("group avg", &mut avg.clone(), &g.davg, 64, &mut rng, |x| forward(&c0, &local, x, &hidden));
        check("group hidden", &mut hidden.clone(), &g.dh_prev, 64, &mut rng, |x| forward(&c0, &local, &avg, x));
        for ci in 0..cells.len() {
            let mut v = cells[ci].w_input.data().to_vec();
            let gv = grad_cells[ci].w_input.data().to_vec();
            check("group weights", &mut v, &gv, 32, &mut rng, |v| {
                cells[ci].w_input.data_mut().copy_from_slice(v);
                forward(&cells, &local, &avg, &hidden)
            });
        }
    }
}

pub fn rci_block_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = tiny_cfg(seed);
        let c = 1 + seed as usize % 3;
        let k = 6;
        let n = cfg.latent_dim;
        let mut params = ModelParams::init(&cfg, seed).unwrap();
        perturb_params(&mut params, &mut rng);
        let mut block = params.blocks[0].clone();
        let inputs: Vec<Vec<f64>> = (0..k).map(|_| randv(&mut rng, c * n)).collect();
        let w: Vec<Vec<f64>> = (0..k).map(|_| randv(&mut rng, c * n)).collect();
        let loss = |block: &dfsnet_core::model::BlockParams, inputs: &[Vec<f64>]| {
            let (out, _) = rci_block_forward_cached(block, &cfg, inputs, c).unwrap();
            out.iter().zip(&w).map(|(o, w)| dot(o, w)).sum::<f64>()
        };
        let (_, caches) = rci_block_forward_cached(&block, &cfg, &inputs, c).unwrap();
        let refs: Vec<_> = caches.iter().collect();
        let mut grad = params.zeros_like().blocks[0].clone();
        let din = rci_block_backward(&block, &cfg, &refs, &w, &mut grad).unwrap();

        let b0 = block.clone();
        let mut flat = inputs.concat();
        check("rci input", &mut flat, &din.concat(), 48, &mut rng, |x| {
            let rows: Vec<Vec<f64>> = x.chunks(c * n).map(|r| r.to_vec()).collect();
            loss(&b0, &rows)
        });
        let count = 5 + 4 * block.cells.len();
        for t in 0..count {
            let g = block_tensor(&mut grad, t).data().to_vec();
            let mut v = block_tensor(&mut block, t).data().to_vec();
            check("rci params", &mut v, &g, 16, &mut rng, |v| {
                block_tensor(&mut block, t).data_mut().copy_from_slice(v);
                loss(&block, &inputs)
            });
        }
    }
}

fn block_tensor(b: &mut dfsnet_core::model::BlockParams, i: usize) -> &mut Tensor {
    match i {
        0 => &mut b.prelu,
        1 => &mut b.fc_weight,
        2 => &mut b.fc_bias,
        3 => &mut b.norm_gain,
        4 => &mut b.norm_bias,
        _ => cell_tensor(&mut b.cells[(i - 5) / 4], (i - 5) % 4),
    }
}

pub fn mask_head_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = randv(&mut rng, 12).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
        let w = randv(&mut rng, 12);
        let masks: Vec<f64> = x.iter().map(|v| sigmoid(*v)).collect();
        let d = mask_head_backward(&masks, &w);
        check("mask head", &mut x, &d, 64, &mut rng, |x| {
            x.iter().zip(&w).map(|(v, w)| sigmoid(*v) * w).sum()
        });
    }
}

pub fn decode_and_sum_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = tiny_cfg(seed);
        let (l, n, c) = (cfg.frame_len, cfg.latent_dim, 1 + seed as usize % 4);
        let mut params = ModelParams::init(&cfg, seed).unwrap();
        let masks: Vec<f64> = randv(&mut rng, c * n).iter().map(|v| sigmoid(2.0 * v)).collect();
        let latents = randv(&mut rng, c * n);
        let w = randv(&mut rng, l);
        let forward = |params: &ModelParams, masks: &[f64], latents: &[f64]| {
            let m: Vec<Vec<f64>> = masks.chunks(n).map(|r| r.to_vec()).collect();
            let z: Vec<Vec<f64>> = latents.chunks(n).map(|r| r.to_vec()).collect();
            dot(&dfsnet_core::model::decode_and_sum(&m, &z, params).unwrap(), &w)
        };
        let mix: Vec<f64> = (0..n)
            .map(|i| (0..c).map(|ch| masks[ch * n + i] * latents[ch * n + i]).sum::<f64>() / c as f64)
            .collect();
        let mut grads = ParamGrads::zeros_like(&params);
        let (dm, dz) = decode_and_sum_backward(&params, &masks, &latents, &mix, &w, &mut grads);
        let p0 = params.clone();
        check("decode masks", &mut masks.clone(), &dm, 64, &mut rng, |x| forward(&p0, x, &latents));
        check("decode latents", &mut latents.clone(), &dz, 64, &mut rng, |x| forward(&p0, &masks, x));
        let mut dec = params.decoder.data().to_vec();
        let g = grads.decoder.data().to_vec();
        check("decoder", &mut dec, &g, 64, &mut rng, |v| {
            params.decoder.data_mut().copy_from_slice(v);
            forward(&params, &masks, &latents)
        });
    }
}

pub fn overlap_add_gradient(seeds: u64) {
    use dfsnet_core::framing::{overlap_add, FrameSequence};
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, k) = (8, 2 + seed as usize % 5);
        let signal_len = (k + 1) * l / 2 - seed as usize % 3;
        let w = randv(&mut rng, signal_len);
        let d = overlap_add_backward(&w, k, l).concat();
        let mut x = randv(&mut rng, k * l);
        check("overlap-add", &mut x, &d, 64, &mut rng, |x| {
            let seq = FrameSequence {
                frames: x.chunks(l).map(|r| r.to_vec()).collect(),
                frame_len: l,
                signal_len,
            };
            dot(&overlap_add(&seq), &w)
        });
    }
}

pub fn tiny_item(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> TrainingItem {
    let clean: Vec<Vec<f64>> = (0..channels)
        .map(|ch| (0..len).map(|t| (0.3 * t as f64 + ch as f64).sin()).collect())
        .collect();
    let mix: Vec<Vec<f64>> = clean
        .iter()
        .map(|c| c.iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect())
        .collect();
    let plan = SteeringPlan::unsteered(channels, 3).unwrap();
    TrainingItem::from_clean(
        MultichannelBuffer::new(mix, 16000).unwrap(),
        &MultichannelBuffer::new(clean, 16000).unwrap(),
        plan,
    )
    .unwrap()
}

pub fn full_model_gradient(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = tiny_cfg(seed);
        let mut params = ModelParams::init(&cfg, seed).unwrap();
        perturb_params(&mut params, &mut rng);
        let item = tiny_item(&mut rng, 1 + seed as usize % 3, 37);
        let (_, grads) = loss_and_grad(&params, &item).unwrap();
        assert!(grads.is_finite());
        let names = params.tensor_names();
        for t in 0..names.len() {
            let mut v = params.tensors()[t].data().to_vec();
            let g = grads.tensors()[t].data().to_vec();
            check(&names[t], &mut v, &g, 6, &mut rng, |v| {
                set_tensor(&mut params, t, v);
                loss_and_grad(&params, &item).unwrap().0
            });
        }
    }
}


pub const OPS: &[(&str, fn(u64))] = &[
    ("si_sdr", si_sdr_gradient),
    ("encode", encode_gradient),
    ("sln", sln_gradient),
    ("channel_average", channel_average_gradient),
    ("gru_cell", gru_cell_gradient),
    ("group_gru", group_gru_gradient),
    ("rci_block", rci_block_gradient),
    ("mask_head", mask_head_gradient),
    ("decode_and_sum", decode_and_sum_gradient),
    ("overlap_add", overlap_add_gradient),
    ("full_model", full_model_gradient),
];
