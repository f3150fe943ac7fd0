//! Diagonal Gaussian policies and value networks.
//!
//! A policy maps an observation to an action mean; a state-independent
//! `log_std` vector completes the distribution. Two observation modes exist:
//!
//! * proprio — the environment state feeds a tanh MLP;
//! * vision — a stack of four consecutive frames feeds a small conv net
//!   (relu after the convolutions, tanh on the dense feature layer).
//!
//! Value networks share the trunk layout with a one-dimensional head.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::disc::FrameStack;
use crate::graph::{Graph, NodeId};
use crate::nn::{self, Init, ParamSet, ParamSpec};
use crate::tensor::Tensor;
use crate::{CoreError, Result};

/// Observation mode of a policy or value network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Proprio,
    Vision,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proprio => "proprio",
            Mode::Vision => "vision",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "proprio" => Ok(Mode::Proprio),
            "vision" => Ok(Mode::Vision),
            other => Err(CoreError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observation, borrowed from the caller.
#[derive(Debug, Clone, Copy)]
pub enum Obs<'a> {
    Proprio(&'a [f64]),
    Vision(&'a FrameStack),
}

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Frame-stack input channels (four consecutive frames).
pub const STACK_CHANNELS: usize = 4;

const CONV0: (usize, usize, usize) = (8, 8, 4); // channels, kernel, stride
const CONV1: (usize, usize, usize) = (16, 4, 2);
/// Flattened size of the conv trunk on 64x64 inputs: 16 channels of 6x6.
const CONV_FLAT: usize = 16 * 6 * 6;
const FEATURE_DIM: usize = 64;

/// Shared trunk logic for policies and value nets.
#[derive(Debug, Clone)]
struct Trunk {
    prefix: String,
    mode: Mode,
    input_dim: usize,
    hidden: Vec<usize>,
    out_dim: usize,
}

impl Trunk {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        match self.mode {
            Mode::Proprio => {
                let mut sizes = vec![self.input_dim];
                sizes.extend_from_slice(&self.hidden);
                sizes.push(self.out_dim);
                for l in 0..sizes.len() - 1 {
                    specs.push(ParamSpec::new(
                        &format!("{}fc{l}_w", self.prefix),
                        &[sizes[l + 1], sizes[l]],
                        Init::FanInUniform,
                    ));
                    specs.push(ParamSpec::new(
                        &format!("{}fc{l}_b", self.prefix),
                        &[sizes[l + 1]],
                        Init::Zero,
                    ));
                }
            }
            Mode::Vision => {
                let p = &self.prefix;
                specs.push(ParamSpec::new(
                    &format!("{p}conv0_w"),
                    &[CONV0.0, STACK_CHANNELS, CONV0.1, CONV0.1],
                    Init::FanInUniform,
                ));
                specs.push(ParamSpec::new(&format!("{p}conv0_b"), &[CONV0.0], Init::Zero));
                specs.push(ParamSpec::new(
                    &format!("{p}conv1_w"),
                    &[CONV1.0, CONV0.0, CONV1.1, CONV1.1],
                    Init::FanInUniform,
                ));
                specs.push(ParamSpec::new(&format!("{p}conv1_b"), &[CONV1.0], Init::Zero));
                specs.push(ParamSpec::new(
                    &format!("{p}fc0_w"),
                    &[FEATURE_DIM, CONV_FLAT],
                    Init::FanInUniform,
                ));
                specs.push(ParamSpec::new(&format!("{p}fc0_b"), &[FEATURE_DIM], Init::Zero));
                specs.push(ParamSpec::new(
                    &format!("{p}fc1_w"),
                    &[self.out_dim, FEATURE_DIM],
                    Init::FanInUniform,
                ));
                specs.push(ParamSpec::new(&format!("{p}fc1_b"), &[self.out_dim], Init::Zero));
            }
        }
        specs
    }

    fn entry<'a>(&self, params: &'a ParamSet, name: &str) -> Result<&'a Tensor> {
        params
            .get(&format!("{}{}", self.prefix, name))
            .map(|e| &e.value)
            .ok_or_else(|| CoreError::State(format!("missing parameter {}{}", self.prefix, name)))
    }

    /// Single-observation forward pass outside any graph.
    fn forward(&self, params: &ParamSet, obs: Obs<'_>) -> Result<Vec<f64>> {
        match (self.mode, obs) {
            (Mode::Proprio, Obs::Proprio(s)) => {
                let mut h = Tensor::from_vec(&[s.len()], s.to_vec())?;
                let layers = self.hidden.len() + 1;
                for l in 0..layers {
                    let w = self.entry(params, &format!("fc{l}_w"))?;
                    let b = self.entry(params, &format!("fc{l}_b"))?;
                    h = nn::dense(&h, w, b)?;
                    if l + 1 < layers {
                        h = nn::tanh_t(&h);
                    }
                }
                Ok(h.data().to_vec())
            }
            (Mode::Vision, Obs::Vision(stack)) => {
                let x = stack.to_tensor();
                let h = nn::conv2d(
                    &x,
                    self.entry(params, "conv0_w")?,
                    self.entry(params, "conv0_b")?,
                    CONV0.2,
                )?;
                let h = nn::relu_t(&h);
                let h = nn::conv2d(
                    &h,
                    self.entry(params, "conv1_w")?,
                    self.entry(params, "conv1_b")?,
                    CONV1.2,
                )?;
                let h = nn::relu_t(&h);
                let h = h.reshape(&[CONV_FLAT])?;
                let h = nn::dense(&h, self.entry(params, "fc0_w")?, self.entry(params, "fc0_b")?)?;
                let h = nn::tanh_t(&h);
                let out = nn::dense(&h, self.entry(params, "fc1_w")?, self.entry(params, "fc1_b")?)?;
                Ok(out.data().to_vec())
            }
            _ => Err(CoreError::Usage("observation kind does not match network mode")),
        }
    }

    /// Batched forward pass on the tape; `x` is `[B, input]` (proprio) or
    /// `[B, 4, 64, 64]` (vision). Returns the `[B, out]` output node.
    fn build(&self, g: &mut Graph, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        match self.mode {
            Mode::Proprio => {
                let mut h = x;
                let layers = self.hidden.len() + 1;
                for l in 0..layers {
                    let w = g.param_named(params, &format!("{}fc{l}_w", self.prefix))?;
                    let b = g.param_named(params, &format!("{}fc{l}_b", self.prefix))?;
                    h = g.dense(h, w, b)?;
                    if l + 1 < layers {
                        h = g.tanh(h)?;
                    }
                }
                Ok(h)
            }
            Mode::Vision => {
                let batch = g.value(x).dims()[0];
                let c0w = g.param_named(params, &format!("{}conv0_w", self.prefix))?;
                let c0b = g.param_named(params, &format!("{}conv0_b", self.prefix))?;
                let c1w = g.param_named(params, &format!("{}conv1_w", self.prefix))?;
                let c1b = g.param_named(params, &format!("{}conv1_b", self.prefix))?;
                let f0w = g.param_named(params, &format!("{}fc0_w", self.prefix))?;
                let f0b = g.param_named(params, &format!("{}fc0_b", self.prefix))?;
                let f1w = g.param_named(params, &format!("{}fc1_w", self.prefix))?;
                let f1b = g.param_named(params, &format!("{}fc1_b", self.prefix))?;
                let h = g.conv2d(x, c0w, c0b, CONV0.2)?;
                let h = g.relu(h)?;
                let h = g.conv2d(h, c1w, c1b, CONV1.2)?;
                let h = g.relu(h)?;
                let h = g.reshape(h, &[batch, CONV_FLAT])?;
                let h = g.dense(h, f0w, f0b)?;
                let h = g.tanh(h)?;
                g.dense(h, f1w, f1b)
            }
        }
    }

    /// Checks that `params` holds exactly the trunk's tensors (plus any
    /// `extra` names) with the right shapes.
    fn validate(&self, params: &ParamSet, extra: &[(String, Vec<usize>)]) -> Result<()> {
        let mut expected: Vec<(String, Vec<usize>)> = self
            .param_specs()
            .into_iter()
            .map(|s| (s.name, s.dims))
            .collect();
        expected.extend_from_slice(extra);
        if params.len() != expected.len() {
            return Err(CoreError::State(format!(
                "expected {} parameters with prefix {:?}, found {}",
                expected.len(),
                self.prefix,
                params.len()
            )));
        }
        for (name, dims) in &expected {
            let e = params
                .get(name)
                .ok_or_else(|| CoreError::State(format!("missing parameter {name:?}")))?;
            if e.value.dims() != dims.as_slice() {
                return Err(CoreError::State(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    e.value.dims(),
                    dims
                )));
            }
        }
        Ok(())
    }
}

// ───────────────────────── policy ─────────────────────────

/// A diagonal Gaussian policy: trunk mean plus a trainable `log_std` vector
/// (initialized to -0.5 per dimension).
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    trunk: Trunk,
    pub params: ParamSet,
}

pub const LOG_STD_INIT: f64 = -0.5;

impl GaussianPolicy {
    /// Tanh MLP policy over proprioceptive states.
    pub fn new_proprio(
        input_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<GaussianPolicy> {
        let trunk = Trunk {
            prefix: "policy/".to_string(),
            mode: Mode::Proprio,
            input_dim,
            hidden: hidden.to_vec(),
            out_dim: action_dim,
        };
        Self::init(trunk, seed)
    }

    /// Conv policy over frame stacks.
    pub fn new_vision(action_dim: usize, seed: u64) -> Result<GaussianPolicy> {
        let trunk = Trunk {
            prefix: "policy/".to_string(),
            mode: Mode::Vision,
            input_dim: 0,
            hidden: Vec::new(),
            out_dim: action_dim,
        };
        Self::init(trunk, seed)
    }

    fn init(trunk: Trunk, seed: u64) -> Result<GaussianPolicy> {
        let mut specs = trunk.param_specs();
        specs.push(ParamSpec::new(
            "policy/log_std",
            &[trunk.out_dim],
            Init::Const(LOG_STD_INIT),
        ));
        let params = nn::init_params(&specs, seed)?;
        Ok(GaussianPolicy { trunk, params })
    }

    /// Rebuilds a policy around loaded parameters, validating every shape.
    pub fn from_params(
        mode: Mode,
        input_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        params: ParamSet,
    ) -> Result<GaussianPolicy> {
        let trunk = Trunk {
            prefix: "policy/".to_string(),
            mode,
            input_dim,
            hidden: if mode == Mode::Proprio {
                hidden.to_vec()
            } else {
                Vec::new()
            },
            out_dim: action_dim,
        };
        trunk.validate(&params, &[("policy/log_std".to_string(), vec![action_dim])])?;
        Ok(GaussianPolicy { trunk, params })
    }

    pub fn mode(&self) -> Mode {
        self.trunk.mode
    }

    pub fn action_dim(&self) -> usize {
        self.trunk.out_dim
    }

    pub fn log_std(&self) -> &[f64] {
        self.params
            .get("policy/log_std")
            .expect("log_std always present")
            .value
            .data()
    }

    /// Mean and log-std of the action distribution at one observation.
    pub fn forward(&self, obs: Obs<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = self.trunk.forward(&self.params, obs)?;
        Ok((mean, self.log_std().to_vec()))
    }

    /// One reparameterized draw: `mean + exp(log_std) * z`, `z ~ N(0, I)`.
    pub fn sample_action(&self, obs: Obs<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (mean, log_std) = self.forward(obs)?;
        Ok(sample_given(&mean, &log_std, rng))
    }

    /// Log density of `action` under the policy at `obs`.
    pub fn log_prob(&self, obs: Obs<'_>, action: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.forward(obs)?;
        Ok(log_prob_given(&mean, &log_std, action))
    }

    /// Differential entropy; depends only on `log_std`.
    pub fn entropy(&self) -> f64 {
        entropy_given(self.log_std())
    }

    /// Tape forward pass producing the `[B, action_dim]` mean node.
    pub fn build_mean(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        self.trunk.build(g, &self.params, x)
    }

    /// Tape nodes for the per-sample log densities of `actions` (`[B, d]`
    /// constant) at observations `x`. Returns `(log_probs [B], log_std [d])`;
    /// the `log_std` node feeds the entropy term.
    pub fn build_log_prob(
        &self,
        g: &mut Graph,
        x: NodeId,
        actions: &Tensor,
    ) -> Result<(NodeId, NodeId)> {
        let d = self.trunk.out_dim;
        let mean = self.build_mean(g, x)?;
        let ls = g.param_named(&self.params, "policy/log_std")?;
        let neg_ls = g.affine(ls, -1.0, 0.0)?;
        let inv_std = g.exp(neg_ls)?;
        let a = g.constant(actions.clone());
        let diff = g.sub(a, mean)?;
        let z = g.mul_row(diff, inv_std)?;
        let z2 = g.mul(z, z)?;
        let row = g.sum_axis1(z2)?;
        let ln_2pi = libm::log(2.0 * core::f64::consts::PI);
        let q = g.affine(row, -0.5, -0.5 * d as f64 * ln_2pi)?;
        let sum_ls = g.sum_all(ls)?;
        let lp = g.add_scaled_scalar(q, sum_ls, -1.0)?;
        Ok((lp, ls))
    }

    /// Scalar entropy node from the `log_std` node of [`Self::build_log_prob`].
    pub fn build_entropy(&self, g: &mut Graph, ls: NodeId) -> Result<NodeId> {
        let d = self.trunk.out_dim as f64;
        let ln_2pi_e = libm::log(2.0 * core::f64::consts::PI) + 1.0;
        let s = g.sum_all(ls)?;
        g.affine(s, 1.0, 0.5 * d * ln_2pi_e)
    }
}

// ───────────────────────── value net ─────────────────────────

/// State-value network sharing the policy trunk layout with a scalar head.
#[derive(Debug, Clone)]
pub struct ValueNet {
    trunk: Trunk,
    pub params: ParamSet,
}

impl ValueNet {
    pub fn new_proprio(input_dim: usize, hidden: &[usize], seed: u64) -> Result<ValueNet> {
        let trunk = Trunk {
            prefix: "value/".to_string(),
            mode: Mode::Proprio,
            input_dim,
            hidden: hidden.to_vec(),
            out_dim: 1,
        };
        let params = nn::init_params(&trunk.param_specs(), seed)?;
        Ok(ValueNet { trunk, params })
    }

    pub fn new_vision(seed: u64) -> Result<ValueNet> {
        let trunk = Trunk {
            prefix: "value/".to_string(),
            mode: Mode::Vision,
            input_dim: 0,
            hidden: Vec::new(),
            out_dim: 1,
        };
        let params = nn::init_params(&trunk.param_specs(), seed)?;
        Ok(ValueNet { trunk, params })
    }

    pub fn from_params(
        mode: Mode,
        input_dim: usize,
        hidden: &[usize],
        params: ParamSet,
    ) -> Result<ValueNet> {
        let trunk = Trunk {
            prefix: "value/".to_string(),
            mode,
            input_dim,
            hidden: if mode == Mode::Proprio {
                hidden.to_vec()
            } else {
                Vec::new()
            },
            out_dim: 1,
        };
        trunk.validate(&params, &[])?;
        Ok(ValueNet { trunk, params })
    }

    pub fn mode(&self) -> Mode {
        self.trunk.mode
    }

    /// V(s) for a single observation.
    pub fn value(&self, obs: Obs<'_>) -> Result<f64> {
        Ok(self.trunk.forward(&self.params, obs)?[0])
    }

    /// Tape forward pass producing the `[B]` value node.
    pub fn build_values(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let out = self.trunk.build(g, &self.params, x)?;
        let batch = g.value(out).dims()[0];
        g.reshape(out, &[batch])
    }
}

// ───────────────────────── distribution helpers ─────────────────────────

/// `mean + exp(log_std) * z` with independent standard normal draws.
pub fn sample_given(mean: &[f64], log_std: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let z: f64 = StandardNormal.sample(rng);
            m + libm::exp(ls) * z
        })
        .collect()
}

/// Log density of a diagonal Gaussian.
pub fn log_prob_given(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let d = mean.len() as f64;
    let ln_2pi = libm::log(2.0 * core::f64::consts::PI);
    let mut z2 = 0.0;
    let mut ls_sum = 0.0;
    for ((&m, &ls), &a) in mean.iter().zip(log_std).zip(action) {
        let z = (a - m) * libm::exp(-ls);
        z2 += z * z;
        ls_sum += ls;
    }
    -0.5 * z2 - ls_sum - 0.5 * d * ln_2pi
}

/// Differential entropy of a diagonal Gaussian with the given `log_std`.
pub fn entropy_given(log_std: &[f64]) -> f64 {
    let d = log_std.len() as f64;
    let ln_2pi_e = libm::log(2.0 * core::f64::consts::PI) + 1.0;
    log_std.iter().sum::<f64>() + 0.5 * d * ln_2pi_e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn standard_normal_log_prob_closed_form() {
        // d = 1, mean 0, sigma 1, at the mean: -0.5*ln(2*pi).
        let lp = log_prob_given(&[0.0], &[0.0], &[0.0]);
        assert!((lp - -0.91893853320467274).abs() < 1e-15);
        // d = 2 at the mean: -ln(2*pi).
        let lp = log_prob_given(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert!((lp - -1.8378770664093455).abs() < 1e-14);
        // Shifting one unit in a unit-variance dimension costs 0.5.
        let lp1 = log_prob_given(&[0.3], &[0.0], &[1.3]);
        assert!((lp1 - (-0.91893853320467274 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn entropy_closed_form() {
        // d-dimensional sigma=1 Gaussian: d/2 * ln(2*pi*e).
        let h1 = entropy_given(&[0.0]);
        assert!((h1 - 1.4189385332046727).abs() < 1e-15);
        let h3 = entropy_given(&[0.0, 0.0, 0.0]);
        assert!((h3 - 3.0 * 1.4189385332046727).abs() < 1e-14);
        // log_std shifts add up linearly.
        let h = entropy_given(&[-0.5, 0.25]);
        assert!((h - (2.0 * 1.4189385332046727 - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        // Trapezoid quadrature of exp(log_prob) over mean +- 8 sigma.
        let (mean, ls) = ([0.37], [-0.2]);
        let sigma = libm::exp(ls[0]);
        let (lo, hi) = (mean[0] - 8.0 * sigma, mean[0] + 8.0 * sigma);
        let n = 20001;
        let h = (hi - lo) / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            let a = lo + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            total += w * libm::exp(log_prob_given(&mean, &ls, &[a]));
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn two_dimensional_density_integrates_to_one() {
        let (mean, ls) = ([0.1, -0.3], [-0.5, 0.1]);
        let s = [libm::exp(ls[0]), libm::exp(ls[1])];
        let n = 401;
        let mut total = 0.0;
        let (w0, w1) = (12.0 * s[0] / (n - 1) as f64, 12.0 * s[1] / (n - 1) as f64);
        for i in 0..n {
            let a0 = mean[0] - 6.0 * s[0] + i as f64 * w0;
            let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            for j in 0..n {
                let a1 = mean[1] - 6.0 * s[1] + j as f64 * w1;
                let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                total += wi * wj * libm::exp(log_prob_given(&mean, &ls, &[a0, a1]));
            }
        }
        total *= w0 * w1;
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn sampling_matches_moments() {
        // 1e5 draws: empirical mean within 4 sigma/sqrt(n), std within
        // 4 * sigma/sqrt(2n) of the target.
        let mut rng = stream_rng(11, 0);
        let (mean, ls) = ([1.5], [-0.7]);
        let sigma = libm::exp(ls[0]);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let a = sample_given(&mean, &ls, &mut rng)[0];
            sum += a;
            sum2 += a * a;
        }
        let m = sum / n as f64;
        let var = sum2 / n as f64 - m * m;
        let sd = libm::sqrt(var);
        assert!((m - mean[0]).abs() < 4.0 * sigma / (n as f64).sqrt(), "mean {m}");
        assert!(
            (sd - sigma).abs() < 4.0 * sigma / (2.0 * n as f64).sqrt(),
            "std {sd} vs {sigma}"
        );
    }

    #[test]
    fn zero_std_limit_returns_the_mean_exactly() {
        let mut rng = stream_rng(3, 0);
        let mean = [0.25, -1.75];
        let a = sample_given(&mean, &[f64::NEG_INFINITY, f64::NEG_INFINITY], &mut rng);
        assert_eq!(a, mean.to_vec());
    }

    #[test]
    fn entropy_decreases_with_narrower_policy() {
        assert!(entropy_given(&[-1.0]) < entropy_given(&[-0.5]));
    }

    #[test]
    fn proprio_policy_shapes_and_determinism() {
        let p = GaussianPolicy::new_proprio(4, 2, &DEFAULT_HIDDEN, 7).unwrap();
        let q = GaussianPolicy::new_proprio(4, 2, &DEFAULT_HIDDEN, 7).unwrap();
        assert_eq!(p.params, q.params);
        assert_eq!(p.log_std(), &[LOG_STD_INIT, LOG_STD_INIT]);
        let s = [0.1, -0.2, 0.3, -0.4];
        let (mean, ls) = p.forward(Obs::Proprio(&s)).unwrap();
        assert_eq!(mean.len(), 2);
        assert_eq!(ls.len(), 2);
        assert!(mean.iter().all(|v| v.is_finite()));
        // Names follow the fixed prefix/layer scheme.
        assert!(p.params.get("policy/fc0_w").is_some());
        assert!(p.params.get("policy/fc2_b").is_some());
    }

    #[test]
    fn forward_perturbation_respects_layer_norm_bound() {
        // Tanh is 1-Lipschitz and each dense layer is Lipschitz in its
        // spectral norm, bounded by the Frobenius norm. Perturbing the input
        // can move the mean by at most the product of those norms.
        let p = GaussianPolicy::new_proprio(4, 1, &DEFAULT_HIDDEN, 21).unwrap();
        let fro = |name: &str| {
            let t = &p.params.get(name).unwrap().value;
            libm::sqrt(t.data().iter().map(|v| v * v).sum::<f64>())
        };
        let lip = fro("policy/fc0_w") * fro("policy/fc1_w") * fro("policy/fc2_w");
        let s = [0.3, -0.1, 0.2, 0.05];
        let mut rng = stream_rng(5, 1);
        for _ in 0..20 {
            let delta: Vec<f64> = (0..4).map(|_| 0.2 * (rng.random::<f64>() - 0.5)).collect();
            let sp: Vec<f64> = s.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let (m0, _) = p.forward(Obs::Proprio(&s)).unwrap();
            let (m1, _) = p.forward(Obs::Proprio(&sp)).unwrap();
            let dm = (m1[0] - m0[0]).abs();
            let dn = libm::sqrt(delta.iter().map(|v| v * v).sum::<f64>());
            assert!(dm <= lip * dn + 1e-12, "moved {dm} > bound {}", lip * dn);
        }
    }

    #[test]
    fn vision_policy_runs_on_frame_stacks() {
        use crate::env::{render, EnvId};
        use alloc::sync::Arc;
        let p = GaussianPolicy::new_vision(1, 3).unwrap();
        let f = Arc::new(render(EnvId::CartpoleBalance, &[0.0, 0.0, 0.0, 0.0]));
        let stack = FrameStack::new([f.clone(), f.clone(), f.clone(), f]);
        let (mean, _) = p.forward(Obs::Vision(&stack)).unwrap();
        assert_eq!(mean.len(), 1);
        assert!(mean[0].is_finite());
        assert!(p.params.get("policy/conv0_w").is_some());
        let v = ValueNet::new_vision(4).unwrap();
        assert!(v.value(Obs::Vision(&stack)).unwrap().is_finite());
    }

    #[test]
    fn from_params_validates_shapes() {
        let p = GaussianPolicy::new_proprio(4, 1, &DEFAULT_HIDDEN, 7).unwrap();
        let ok = GaussianPolicy::from_params(Mode::Proprio, 4, 1, &DEFAULT_HIDDEN, p.params.clone());
        assert!(ok.is_ok());
        let bad = GaussianPolicy::from_params(Mode::Proprio, 5, 1, &DEFAULT_HIDDEN, p.params.clone());
        assert!(matches!(bad, Err(CoreError::State(_))));
        let v = ValueNet::new_proprio(4, &DEFAULT_HIDDEN, 9).unwrap();
        assert!(ValueNet::from_params(Mode::Proprio, 4, &DEFAULT_HIDDEN, v.params.clone()).is_ok());
        assert!(ValueNet::from_params(Mode::Vision, 0, &[], v.params.clone()).is_err());
    }

    #[test]
    fn graph_and_plain_forward_agree() {
        let p = GaussianPolicy::new_proprio(3, 2, &[8, 8], 13).unwrap();
        let s = [0.5, -0.25, 0.125];
        let (mean, _) = p.forward(Obs::Proprio(&s)).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(&[1, 3], s.to_vec()).unwrap());
        let node = p.build_mean(&mut g, x).unwrap();
        assert_eq!(g.value(node).data(), mean.as_slice());
    }
}
