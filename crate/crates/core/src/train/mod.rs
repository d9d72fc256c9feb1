//! SI-SDR objective, analytic gradients, and the Adam trainer.

pub mod adam;
pub mod backward;
pub mod metrics;
pub mod trainer;

pub use adam::{adam_step, OptimizerState};
pub use backward::{
    channel_average_backward, decode_and_sum_backward, encode_backward, group_gru_backward,
    gru_cell_backward, mask_head_backward, model_backward, overlap_add_backward,
    rci_block_backward, rci_block_forward_cached, sln_backward, GroupGruGrads, ParamGrads,
};
pub use metrics::{si_sdr, si_sdr_grad, SI_SDR_EPS};
pub use trainer::{
    evaluate, loss_and_grad, train_loop, StepRecord, TrainConfig, TrainLog, TrainingItem,
};
