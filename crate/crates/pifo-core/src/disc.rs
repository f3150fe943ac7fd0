//! Frame-stack discriminator and imitation rewards.
//!
//! The discriminator scores stacks of four consecutive frames: label 1 for
//! imitator stacks, 0 for expert stacks. Its output drives the imitation
//! reward `-ln(D)`, so fooling the discriminator (driving D toward 0, the
//! expert label) earns high reward.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::adam::{adam_step, AdamState};
use crate::env::render::{Frame, FRAME_PIXELS, FRAME_SIZE};
use crate::graph::Graph;
use crate::nn::{self, Init, ParamSet, ParamSpec};
use crate::tensor::Tensor;
use crate::{CoreError, Result};

/// Discriminator outputs are clamped to `[D_CLAMP, 1 - D_CLAMP]` before any
/// logarithm, bounding rewards and loss terms.
pub const D_CLAMP: f64 = 1e-6;

/// Number of frames per stack.
pub const STACK_LEN: usize = 4;

/// A stack of four consecutive frames, shared by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    frames: [Arc<Frame>; STACK_LEN],
}

impl FrameStack {
    pub fn new(frames: [Arc<Frame>; STACK_LEN]) -> FrameStack {
        FrameStack { frames }
    }

    pub fn frames(&self) -> &[Arc<Frame>; STACK_LEN] {
        &self.frames
    }

    /// Writes the stack as `4 * 64 * 64` floats in channel order.
    pub fn fill_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), STACK_LEN * FRAME_PIXELS);
        for (ch, frame) in self.frames.iter().enumerate() {
            frame.fill_f64(&mut out[ch * FRAME_PIXELS..(ch + 1) * FRAME_PIXELS]);
        }
    }

    /// The stack as a `[4, 64, 64]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let mut t = Tensor::zeros(&[STACK_LEN, FRAME_SIZE, FRAME_SIZE]);
        self.fill_into(t.data_mut());
        t
    }
}

/// Packs stacks into a `[B, 4, 64, 64]` batch tensor.
pub fn stacks_to_tensor(stacks: &[FrameStack]) -> Tensor {
    let mut t = Tensor::zeros(&[stacks.len(), STACK_LEN, FRAME_SIZE, FRAME_SIZE]);
    let per = STACK_LEN * FRAME_PIXELS;
    for (i, s) in stacks.iter().enumerate() {
        s.fill_into(&mut t.data_mut()[i * per..(i + 1) * per]);
    }
    t
}

/// Builds one stack per frame: stack `t` holds frames `t-2, t-1, t, t+1`,
/// with out-of-range indices replaced by the nearest episode endpoint.
pub fn build_stacks(frames: &[Arc<Frame>]) -> Vec<FrameStack> {
    let t_max = frames.len() as isize - 1;
    let at = |i: isize| frames[i.clamp(0, t_max) as usize].clone();
    (0..frames.len() as isize)
        .map(|t| FrameStack::new([at(t - 2), at(t - 1), at(t), at(t + 1)]))
        .collect()
}

/// Causal stack for acting at step `t`: frames `t-3, t-2, t-1, t` (clamped at
/// the episode start). Unlike the scoring stacks, this never peeks ahead.
pub fn build_causal_stack(frames: &[Arc<Frame>], t: usize) -> FrameStack {
    let t_max = frames.len() as isize - 1;
    let t = t as isize;
    let at = |i: isize| frames[i.clamp(0, t_max) as usize].clone();
    FrameStack::new([at(t - 3), at(t - 2), at(t - 1), at(t)])
}

const CONV0: (usize, usize, usize) = (8, 8, 4);
const CONV1: (usize, usize, usize) = (16, 4, 2);
const CONV_FLAT: usize = 16 * 6 * 6;
const FEATURE_DIM: usize = 64;

/// Conv net scoring frame stacks with a sigmoid output in (0, 1).
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub params: ParamSet,
}

impl Discriminator {
    fn param_specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(
                "disc/conv0_w",
                &[CONV0.0, STACK_LEN, CONV0.1, CONV0.1],
                Init::FanInUniform,
            ),
            ParamSpec::new("disc/conv0_b", &[CONV0.0], Init::Zero),
            ParamSpec::new(
                "disc/conv1_w",
                &[CONV1.0, CONV0.0, CONV1.1, CONV1.1],
                Init::FanInUniform,
            ),
            ParamSpec::new("disc/conv1_b", &[CONV1.0], Init::Zero),
            ParamSpec::new("disc/fc0_w", &[FEATURE_DIM, CONV_FLAT], Init::FanInUniform),
            ParamSpec::new("disc/fc0_b", &[FEATURE_DIM], Init::Zero),
            ParamSpec::new("disc/fc1_w", &[1, FEATURE_DIM], Init::FanInUniform),
            ParamSpec::new("disc/fc1_b", &[1], Init::Zero),
        ]
    }

    pub fn new(seed: u64) -> Result<Discriminator> {
        let params = nn::init_params(&Self::param_specs(), seed)?;
        Ok(Discriminator { params })
    }

    /// Rebuilds a discriminator around loaded parameters, validating shapes.
    pub fn from_params(params: ParamSet) -> Result<Discriminator> {
        let specs = Self::param_specs();
        if params.len() != specs.len() {
            return Err(CoreError::State(format!(
                "expected {} discriminator parameters, found {}",
                specs.len(),
                params.len()
            )));
        }
        for spec in &specs {
            let e = params
                .get(&spec.name)
                .ok_or_else(|| CoreError::State(format!("missing parameter {:?}", spec.name)))?;
            if e.value.dims() != spec.dims.as_slice() {
                return Err(CoreError::State(format!(
                    "parameter {:?} has shape {:?}, expected {:?}",
                    spec.name,
                    e.value.dims(),
                    spec.dims
                )));
            }
        }
        Ok(Discriminator { params })
    }

    fn p(&self, name: &str) -> &Tensor {
        &self.params.get(name).expect("validated at construction").value
    }

    /// Raw sigmoid outputs, one per stack, without any graph bookkeeping.
    pub fn forward_batch(&self, x: &Tensor) -> Result<Vec<f64>> {
        let h = nn::conv2d(x, self.p("disc/conv0_w"), self.p("disc/conv0_b"), CONV0.2)?;
        let h = nn::relu_t(&h);
        let h = nn::conv2d(&h, self.p("disc/conv1_w"), self.p("disc/conv1_b"), CONV1.2)?;
        let h = nn::relu_t(&h);
        let batch = if h.rank() == 4 { h.dims()[0] } else { 1 };
        let h = h.reshape(&[batch, CONV_FLAT])?;
        let h = nn::dense(&h, self.p("disc/fc0_w"), self.p("disc/fc0_b"))?;
        let h = nn::relu_t(&h);
        let out = nn::dense(&h, self.p("disc/fc1_w"), self.p("disc/fc1_b"))?;
        Ok(out.data().iter().map(|&v| nn::sigmoid(v)).collect())
    }

    /// Scores stacks in bounded chunks so arbitrarily large sets never
    /// materialize one huge batch tensor.
    pub fn score(&self, stacks: &[FrameStack]) -> Result<Vec<f64>> {
        const CHUNK: usize = 128;
        let mut out = Vec::with_capacity(stacks.len());
        for chunk in stacks.chunks(CHUNK) {
            out.extend(self.forward_batch(&stacks_to_tensor(chunk))?);
        }
        Ok(out)
    }

    /// Tape forward pass: `x` is a `[B, 4, 64, 64]` constant node; returns
    /// the `[B]` node of clamped sigmoid outputs.
    fn build_scores(&self, g: &mut Graph, x: crate::graph::NodeId) -> Result<crate::graph::NodeId> {
        let batch = g.value(x).dims()[0];
        let c0w = g.param_named(&self.params, "disc/conv0_w")?;
        let c0b = g.param_named(&self.params, "disc/conv0_b")?;
        let c1w = g.param_named(&self.params, "disc/conv1_w")?;
        let c1b = g.param_named(&self.params, "disc/conv1_b")?;
        let f0w = g.param_named(&self.params, "disc/fc0_w")?;
        let f0b = g.param_named(&self.params, "disc/fc0_b")?;
        let f1w = g.param_named(&self.params, "disc/fc1_w")?;
        let f1b = g.param_named(&self.params, "disc/fc1_b")?;
        let h = g.conv2d(x, c0w, c0b, CONV0.2)?;
        let h = g.relu(h)?;
        let h = g.conv2d(h, c1w, c1b, CONV1.2)?;
        let h = g.relu(h)?;
        let h = g.reshape(h, &[batch, CONV_FLAT])?;
        let h = g.dense(h, f0w, f0b)?;
        let h = g.relu(h)?;
        let h = g.dense(h, f1w, f1b)?;
        let h = g.sigmoid(h)?;
        let h = g.reshape(h, &[batch])?;
        g.clamp(h, D_CLAMP, 1.0 - D_CLAMP)
    }
}

/// Imitation reward for one discriminator output: `-ln(D)` after clamping,
/// so rewards live in `[-ln(1 - 1e-6), -ln(1e-6)]`.
pub fn reward_from_d(d: f64) -> f64 {
    -libm::log(d.clamp(D_CLAMP, 1.0 - D_CLAMP))
}

/// Cross-entropy loss with imitator labeled 1 and expert labeled 0:
/// `-(mean ln D(imitator) + mean ln(1 - D(expert)))`, outputs clamped.
pub fn disc_loss(d_imitator: &[f64], d_expert: &[f64]) -> f64 {
    let mean_ln = |ds: &[f64], flip: bool| {
        if ds.is_empty() {
            return 0.0;
        }
        let total: f64 = ds
            .iter()
            .map(|&d| {
                let d = d.clamp(D_CLAMP, 1.0 - D_CLAMP);
                libm::log(if flip { 1.0 - d } else { d })
            })
            .sum();
        total / ds.len() as f64
    };
    -(mean_ln(d_imitator, false) + mean_ln(d_expert, true))
}

/// Diagnostics from one discriminator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscStats {
    /// Mean cross-entropy loss over the processed minibatches (or over all
    /// stacks when no update ran).
    pub loss: f64,
    /// Mean discriminator output on the imitator stacks it saw.
    pub mean_d_imitator: f64,
    /// Mean discriminator output on the expert stacks it saw.
    pub mean_d_expert: f64,
}

/// Trains the discriminator on imitator vs. expert stacks.
///
/// Each epoch shuffles both sources independently, slices each into chunks of
/// at most `batch_per_source`, and pairs chunks until one source runs out.
/// With `epochs == 0` no update happens and the stats are computed over all
/// stacks. Stats always reflect outputs *before* the step that followed them.
pub fn disc_update(
    disc: &mut Discriminator,
    adam: &mut AdamState,
    imitator: &[FrameStack],
    expert: &[FrameStack],
    lr: f64,
    epochs: usize,
    batch_per_source: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DiscStats> {
    if batch_per_source == 0 {
        return Err(CoreError::Config("disc_batch_per_source must be >= 1".into()));
    }
    if imitator.is_empty() || expert.is_empty() {
        return Err(CoreError::Usage("disc_update needs stacks from both sources"));
    }
    if epochs == 0 {
        let d_imi = disc.score(imitator)?;
        let d_exp = disc.score(expert)?;
        return Ok(DiscStats {
            loss: disc_loss(&d_imi, &d_exp),
            mean_d_imitator: mean(&d_imi),
            mean_d_expert: mean(&d_exp),
        });
    }

    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let mut d_imi_sum = 0.0;
    let mut d_imi_n = 0usize;
    let mut d_exp_sum = 0.0;
    let mut d_exp_n = 0usize;

    for _ in 0..epochs {
        let mut imi_idx: Vec<usize> = (0..imitator.len()).collect();
        let mut exp_idx: Vec<usize> = (0..expert.len()).collect();
        imi_idx.shuffle(rng);
        exp_idx.shuffle(rng);
        let pairs = imi_idx
            .chunks(batch_per_source)
            .zip(exp_idx.chunks(batch_per_source))
            .map(|(a, b)| (a.to_vec(), b.to_vec()))
            .collect::<Vec<_>>();
        for (imi_chunk, exp_chunk) in pairs {
            let imi_batch: Vec<FrameStack> =
                imi_chunk.iter().map(|&i| imitator[i].clone()).collect();
            let exp_batch: Vec<FrameStack> = exp_chunk.iter().map(|&i| expert[i].clone()).collect();

            let mut g = Graph::new();
            let x_imi = g.constant(stacks_to_tensor(&imi_batch));
            let x_exp = g.constant(stacks_to_tensor(&exp_batch));
            let d_imi = disc.build_scores(&mut g, x_imi)?;
            let d_exp = disc.build_scores(&mut g, x_exp)?;
            let ln_imi = g.ln(d_imi)?;
            let one_minus = g.affine(d_exp, -1.0, 1.0)?;
            let ln_exp = g.ln(one_minus)?;
            let m_imi = g.mean_all(ln_imi)?;
            let m_exp = g.mean_all(ln_exp)?;
            let both = g.add(m_imi, m_exp)?;
            let loss = g.affine(both, -1.0, 0.0)?;

            let loss_v = g.value(loss).item();
            if !loss_v.is_finite() {
                return Err(CoreError::NonFinite("discriminator loss"));
            }
            loss_sum += loss_v;
            loss_n += 1;
            d_imi_sum += g.value(d_imi).data().iter().sum::<f64>();
            d_imi_n += imi_batch.len();
            d_exp_sum += g.value(d_exp).data().iter().sum::<f64>();
            d_exp_n += exp_batch.len();

            disc.params.zero_grads();
            g.backward(loss, &mut disc.params)?;
            adam_step(&mut disc.params, adam, lr)?;
        }
    }

    Ok(DiscStats {
        loss: loss_sum / loss_n.max(1) as f64,
        mean_d_imitator: d_imi_sum / d_imi_n.max(1) as f64,
        mean_d_expert: d_exp_sum / d_exp_n.max(1) as f64,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
