//! The delay-filter-and-sum network: linear encoder, sliding-window layer
//! normalization, stacked recurrent channel-interaction (RCI) blocks, sigmoid
//! masks, and latent filter-and-sum followed by a linear decoder.
//!
//! Every tensor is shared across channels; the channel count is a property
//! of the [`ModelState`], never of the parameters.

pub(crate) mod engine;
mod gru;
pub(crate) mod layers;
pub(crate) mod linalg;
mod norm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{forward_frame, BlockCache, BlockState, FrameCache, ModelState};
pub use gru::{cell_step, shared_input_projection, GruStepCache};
pub use layers::{
    channel_average, decode_and_sum, encode, group_gru_step, mask_head, prelu, rci_block_step,
    sigmoid, GroupGruOptions,
};
pub use norm::{layer_norm, sln_step, NormState, NormStats, NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Frame length `L` in samples; the hop is `L/2`.
    pub frame_len: usize,
    /// Latent dimension `N`.
    pub latent_dim: usize,
    /// Recurrent hidden size `H`, split evenly over the partitions.
    pub hidden_dim: usize,
    /// Number of feature bands `P` in each group GRU.
    pub partitions: usize,
    pub num_blocks: usize,
    /// Sliding normalization window `R`, in frames.
    pub norm_window: usize,
    /// One recurrent cell reused for every band instead of `P` cells.
    #[serde(default)]
    pub shared_cells: bool,
    #[serde(default)]
    pub encoder_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl ModelConfig {
    /// `L=64, N=128, H=256, P=4, B=4, R=1000`.
    pub fn reference() -> Self {
        Self {
            frame_len: 64,
            latent_dim: 128,
            hidden_dim: 256,
            partitions: 4,
            num_blocks: 4,
            norm_window: 1000,
            shared_cells: false,
            encoder_bias: false,
        }
    }

    /// Small configuration used for desk-scale training.
    pub fn tiny() -> Self {
        Self {
            frame_len: 32,
            latent_dim: 16,
            hidden_dim: 32,
            partitions: 2,
            num_blocks: 2,
            norm_window: 100,
            shared_cells: false,
            encoder_bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return bad(format!("frame length {} must be even", self.frame_len));
        }
        if [
            self.latent_dim,
            self.hidden_dim,
            self.partitions,
            self.num_blocks,
            self.norm_window,
        ]
        .contains(&0)
        {
            return bad("all dimensions must be >= 1".into());
        }
        if self.latent_dim % self.partitions != 0 {
            return bad(format!(
                "latent dim {} not divisible by {} partitions",
                self.latent_dim, self.partitions
            ));
        }
        if self.hidden_dim % self.partitions != 0 {
            return bad(format!(
                "hidden dim {} not divisible by {} partitions",
                self.hidden_dim, self.partitions
            ));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.frame_len / 2
    }

    /// Width `N/P` of one latent feature band.
    pub fn band(&self) -> usize {
        self.latent_dim / self.partitions
    }

    /// Hidden units `H/P` of one partition's cell.
    pub fn cell_hidden(&self) -> usize {
        self.hidden_dim / self.partitions
    }

    pub fn num_cells(&self) -> usize {
        if self.shared_cells {
            1
        } else {
            self.partitions
        }
    }

    pub fn cell_index(&self, partition: usize) -> usize {
        if self.shared_cells {
            0
        } else {
            partition
        }
    }
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch {
                context: "tensor data",
                expected: n,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }
}

/// Weights of one gated recurrent cell, gates ordered (reset, update, candidate).
///
/// `w_input` is `[in, 3h]` and `w_hidden` is `[h, 3h]`, applied to row
/// vectors. In a group GRU the first half of the input rows multiply the
/// channel's local band and the second half the channel-averaged band.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub b_input: Tensor,
    pub b_hidden: Tensor,
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Tensor::zeros(&[input, 3 * hidden]),
            w_hidden: Tensor::zeros(&[hidden, 3 * hidden]),
            b_input: Tensor::zeros(&[3 * hidden]),
            b_hidden: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.rows()
    }

    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / hidden as f64).sqrt();
        let mut w_hidden = Tensor::zeros(&[hidden, 3 * hidden]);
        for gate in 0..3 {
            let q = random_orthogonal(hidden, rng);
            for i in 0..hidden {
                for j in 0..hidden {
                    w_hidden.data[i * 3 * hidden + gate * hidden + j] = q[i * hidden + j];
                }
            }
        }
        Self {
            w_input: Tensor::uniform(&[input, 3 * hidden], bound, rng),
            w_hidden,
            b_input: Tensor::zeros(&[3 * hidden]),
            b_hidden: Tensor::zeros(&[3 * hidden]),
        }
    }
}

/// Square orthogonal matrix from Gram-Schmidt on a Gaussian draw.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
            for k in 0..n {
                q[i * n + k] -= dot * q[j * n + k];
            }
        }
        let norm = (0..n).map(|k| q[i * n + k].powi(2)).sum::<f64>().sqrt();
        for k in 0..n {
            q[i * n + k] /= norm;
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub prelu: Tensor,
    pub cells: Vec<GruCell>,
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    pub norm_gain: Tensor,
    pub norm_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: Tensor,
    pub encoder_bias: Option<Tensor>,
    pub decoder: Tensor,
    pub input_norm_gain: Tensor,
    pub input_norm_bias: Tensor,
    pub blocks: Vec<BlockParams>,
}

impl ModelParams {
    /// All-zero tensors with the shapes implied by `config`. Also the
    /// container used for gradients.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (l, n, h) = (config.frame_len, config.latent_dim, config.hidden_dim);
        let blocks = (0..config.num_blocks)
            .map(|_| BlockParams {
                prelu: Tensor::zeros(&[n]),
                cells: (0..config.num_cells())
                    .map(|_| GruCell::zeros(2 * config.band(), config.cell_hidden()))
                    .collect(),
                fc_weight: Tensor::zeros(&[h, n]),
                fc_bias: Tensor::zeros(&[n]),
                norm_gain: Tensor::zeros(&[n]),
                norm_bias: Tensor::zeros(&[n]),
            })
            .collect();
        Ok(Self {
            config: *config,
            encoder: Tensor::zeros(&[l, n]),
            encoder_bias: config.encoder_bias.then(|| Tensor::zeros(&[n])),
            decoder: Tensor::zeros(&[n, l]),
            input_norm_gain: Tensor::zeros(&[n]),
            input_norm_bias: Tensor::zeros(&[n]),
            blocks,
        })
    }

    /// Random initialization: dense layers uniform in `±sqrt(1/fan_in)`,
    /// orthogonal recurrent matrices per gate, PReLU slopes 0.25, unit norm
    /// gains, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, n, h) = (config.frame_len, config.latent_dim, config.hidden_dim);
        let encoder = Tensor::uniform(&[l, n], (1.0 / l as f64).sqrt(), &mut rng);
        let decoder = Tensor::uniform(&[n, l], (1.0 / n as f64).sqrt(), &mut rng);
        let blocks = (0..config.num_blocks)
            .map(|_| {
                let cells = (0..config.num_cells())
                    .map(|_| GruCell::init(2 * config.band(), config.cell_hidden(), &mut rng))
                    .collect();
                BlockParams {
                    prelu: Tensor::filled(&[n], 0.25),
                    cells,
                    fc_weight: Tensor::uniform(&[h, n], (1.0 / h as f64).sqrt(), &mut rng),
                    fc_bias: Tensor::zeros(&[n]),
                    norm_gain: Tensor::filled(&[n], 1.0),
                    norm_bias: Tensor::zeros(&[n]),
                }
            })
            .collect();
        Ok(Self {
            config: *config,
            encoder,
            encoder_bias: config.encoder_bias.then(|| Tensor::zeros(&[n])),
            decoder,
            input_norm_gain: Tensor::filled(&[n], 1.0),
            input_norm_bias: Tensor::zeros(&[n]),
            blocks,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config validated at construction")
    }

    /// Dotted tensor names in serialization order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["encoder.weight".to_string()];
        if self.encoder_bias.is_some() {
            names.push("encoder.bias".into());
        }
        names.extend(
            ["decoder.weight", "input_norm.gain", "input_norm.bias"].map(String::from),
        );
        for (i, b) in self.blocks.iter().enumerate() {
            names.push(format!("blocks.{i}.prelu"));
            for p in 0..b.cells.len() {
                for t in ["w_input", "w_hidden", "b_input", "b_hidden"] {
                    names.push(format!("blocks.{i}.cells.{p}.{t}"));
                }
            }
            for t in ["fc.weight", "fc.bias", "norm.gain", "norm.bias"] {
                names.push(format!("blocks.{i}.{t}"));
            }
        }
        names
    }

    /// Every tensor, in the order of [`tensor_names`](Self::tensor_names).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.encoder];
        v.extend(self.encoder_bias.as_ref());
        v.extend([&self.decoder, &self.input_norm_gain, &self.input_norm_bias]);
        for b in &self.blocks {
            v.push(&b.prelu);
            for c in &b.cells {
                v.extend([&c.w_input, &c.w_hidden, &c.b_input, &c.b_hidden]);
            }
            v.extend([&b.fc_weight, &b.fc_bias, &b.norm_gain, &b.norm_bias]);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.encoder];
        v.extend(self.encoder_bias.as_mut());
        v.extend([
            &mut self.decoder,
            &mut self.input_norm_gain,
            &mut self.input_norm_bias,
        ]);
        for b in &mut self.blocks {
            v.push(&mut b.prelu);
            for c in &mut b.cells {
                v.extend([&mut c.w_input, &mut c.w_hidden, &mut c.b_input, &mut c.b_hidden]);
            }
            v.extend([&mut b.fc_weight, &mut b.fc_bias, &mut b.norm_gain, &mut b.norm_bias]);
        }
        v
    }

    /// Visits every tensor with its name, in serialization order.
    pub fn visit(&self, mut f: impl FnMut(&str, &Tensor)) {
        for (name, t) in self.tensor_names().iter().zip(self.tensors()) {
            f(name, t);
        }
    }

    /// True when both sets have identical configurations and tensor shapes.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.config == other.config
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.data().iter().all(|x| x.is_finite()));
        ok
    }

    /// Flattened copy of every scalar in visit order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        self.visit(|_, t| out.extend_from_slice(t.data()));
        out
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
}
