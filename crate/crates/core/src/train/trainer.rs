//! Per-utterance SI-SDR training with full backpropagation through time.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use super::backward::{model_backward, overlap_add_backward, ParamGrads};
use super::metrics::{si_sdr, si_sdr_grad};
use crate::audio::MultichannelBuffer;
use crate::error::{check_len, Error, Result};
use crate::framing::{overlap_add, FrameSequence};
use crate::model::ModelParams;
use crate::steering::{make_target, SteeringPlan};
use crate::streaming::{aligned_frames, enhance_offline, padded_len, run_frames};

/// One utterance: the microphone mixture (reference channel first), its
/// steering plan, and the delay-and-sum clean target.
#[derive(Debug, Clone)]
pub struct TrainingItem {
    pub mix: MultichannelBuffer,
    pub plan: SteeringPlan,
    pub target: Vec<f64>,
}

impl TrainingItem {
    pub fn new(mix: MultichannelBuffer, plan: SteeringPlan, target: Vec<f64>) -> Result<Self> {
        check_len("plan channels", mix.num_channels(), plan.num_channels())?;
        check_len("target length", mix.len(), target.len())?;
        Ok(Self { mix, plan, target })
    }

    /// Builds the target from the clean per-microphone components.
    pub fn from_clean(mix: MultichannelBuffer, clean: &MultichannelBuffer, plan: SteeringPlan) -> Result<Self> {
        let target = make_target(&plan, clean)?;
        Self::new(mix, plan, target)
    }

    /// Delay-and-sum of the steered mixture, i.e. the unprocessed baseline.
    pub fn baseline(&self) -> Result<Vec<f64>> {
        make_target(&self.plan, &self.mix)
    }
}

/// Negative SI-SDR of the network output against the item target, and its
/// gradient with respect to every parameter.
pub fn loss_and_grad(params: &ModelParams, item: &TrainingItem) -> Result<(f64, ParamGrads)> {
    let l = params.config.frame_len;
    let frames = aligned_frames(&item.plan, &item.mix, l)?;
    let mut caches = Vec::new();
    let outputs = run_frames(params, &frames, item.mix.num_channels(), Some(&mut caches))?;
    let k = outputs.len();
    let mut est = overlap_add(&FrameSequence {
        frames: outputs,
        frame_len: l,
        signal_len: padded_len(item.mix.len(), l),
    });
    est.truncate(item.mix.len());
    let (sdr, grad) = si_sdr_grad(&est, &item.target)?;
    if !sdr.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let dest: Vec<f64> = grad.iter().map(|g| -g).collect();
    let dframes = overlap_add_backward(&dest, k, l);
    let mut grads = ParamGrads::zeros_like(params);
    model_backward(params, &caches, &dframes, &mut grads)?;
    Ok((-sdr, grads))
}

/// SI-SDR of the enhanced output against the target.
pub fn evaluate(params: &ModelParams, item: &TrainingItem) -> Result<f64> {
    si_sdr(&enhance_offline(params, &item.plan, &item.mix)?, &item.target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    /// Defaults to one pass over the dataset.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_decay: 0.98,
            epochs: 1,
            steps_per_epoch: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    /// Mean SI-SDR over the dataset after each epoch.
    pub epoch_si_sdr: Vec<f64>,
}

impl TrainLog {
    /// Plain-text `step loss lr` lines.
    pub fn to_text(&self) -> String {
        self.steps
            .iter()
            .map(|r| format!("{} {:.6} {:.6e}\n", r.step, r.loss, r.lr))
            .collect()
    }
}

/// Adam on one utterance per step. Utterance order is reshuffled every
/// epoch from `seed`; identical inputs give identical results.
pub fn train_loop(
    mut params: ModelParams,
    dataset: &[TrainingItem],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut opt = OptimizerState::new(&params, config.learning_rate, config.lr_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps_per_epoch = config.steps_per_epoch.unwrap_or(dataset.len());
    let mut log = TrainLog {
        steps: Vec::new(),
        epoch_si_sdr: Vec::new(),
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for s in 0..steps_per_epoch {
            let item = &dataset[order[s % order.len()]];
            let (loss, grads) = loss_and_grad(&params, item)?;
            log.steps.push(StepRecord {
                step: log.steps.len(),
                epoch,
                loss,
                lr: opt.learning_rate(),
            });
            adam_step(&mut params, &grads, &mut opt)?;
        }
        opt.end_epoch();
        let total = dataset
            .iter()
            .map(|item| evaluate(&params, item))
            .sum::<Result<f64>>()?;
        log.epoch_si_sdr.push(total / dataset.len() as f64);
    }
    Ok((params, log))
}
