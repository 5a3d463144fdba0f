//! Diagonal-Gaussian MLP policy with a separate value network.
//!
//! All parameters live in one flat `f64` buffer addressed through a
//! [`Layout`]; gradients are plain buffers of the same length, which keeps
//! Adam, finite-difference probing, and the checkpoint codec trivial. The
//! networks are small tanh MLPs evaluated and differentiated by hand —
//! reverse-mode adjoints exist only for the fixed loss family built from
//! `forward` / `log_prob` / `kl_gaussian`, not for arbitrary code.
//!
//! Parameter order (also the checkpoint payload order): policy layers from
//! input to mean head (weights row-major `out × in`, then bias, per layer),
//! the state-independent `log_std` vector, then the value layers in the same
//! scheme.

pub mod checkpoint;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, stream};

/// σ is clamped to this range after every optimizer update.
pub const STD_MIN: f64 = 0.05;
pub const STD_MAX: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("observation dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
}

/// Network shape shared by the policy trunk and the value trunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

impl Architecture {
    /// Two hidden layers of 64 tanh units.
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self::with_hidden(obs_dim, act_dim, vec![64, 64])
    }

    pub fn with_hidden(obs_dim: usize, act_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            obs_dim,
            act_dim,
            hidden,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.obs_dim == 0 || self.act_dim == 0 {
            return Err(PolicyError::BadArchitecture(
                "obs_dim and act_dim must be at least 1".into(),
            ));
        }
        if self.hidden.is_empty() {
            return Err(PolicyError::BadArchitecture("hidden layers required".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(PolicyError::BadArchitecture(format!(
                "zero-width hidden layer in {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::build(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

/// One affine layer's location inside the flat parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Offset of the row-major `out × in` weight block.
    pub w: usize,
    /// Offset of the bias vector.
    pub b: usize,
}

/// Addressing of every parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub pi: Vec<LayerSpec>,
    pub log_std: usize,
    pub vf: Vec<LayerSpec>,
    pub total: usize,
}

impl Layout {
    fn build(arch: &Architecture) -> Self {
        fn chain(dims: &[usize], off: &mut usize) -> Vec<LayerSpec> {
            dims.windows(2)
                .map(|w| {
                    let (i, o) = (w[0], w[1]);
                    let spec = LayerSpec {
                        in_dim: i,
                        out_dim: o,
                        w: *off,
                        b: *off + i * o,
                    };
                    *off += i * o + o;
                    spec
                })
                .collect()
        }
        let mut off = 0;
        let mut pi_dims = vec![arch.obs_dim];
        pi_dims.extend_from_slice(&arch.hidden);
        pi_dims.push(arch.act_dim);
        let pi = chain(&pi_dims, &mut off);
        let log_std = off;
        off += arch.act_dim;
        let mut vf_dims = vec![arch.obs_dim];
        vf_dims.extend_from_slice(&arch.hidden);
        vf_dims.push(1);
        let vf = chain(&vf_dims, &mut off);
        Layout {
            pi,
            log_std,
            vf,
            total: off,
        }
    }
}

/// Deterministic policy head outputs for one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub value: f64,
}

/// All weights of the Gaussian policy and the value network.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    arch: Architecture,
    layout: Layout,
    data: Vec<f64>,
}

// Initialization gains: hidden layers keep activations in the tanh linear
// range, the mean head starts near zero so early actions are ~N(0, 1), the
// value head starts at full scale.
const GAIN_HIDDEN: f64 = 1.0;
const GAIN_PI_HEAD: f64 = 0.01;
const GAIN_VF_HEAD: f64 = 1.0;

impl PolicyParams {
    /// Semi-orthogonal random weights, zero biases, `log_std = 0`.
    /// Deterministic per seed.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self, PolicyError> {
        arch.validate()?;
        let layout = arch.layout();
        let mut data = vec![0.0; layout.total];
        let mut rng = rng::stream_rng(seed, &[stream::INIT]);
        for (chain, head_gain) in [(&layout.pi, GAIN_PI_HEAD), (&layout.vf, GAIN_VF_HEAD)] {
            for (l, spec) in chain.iter().enumerate() {
                let gain = if l + 1 == chain.len() { head_gain } else { GAIN_HIDDEN };
                init_semi_orthogonal(
                    &mut rng,
                    spec.out_dim,
                    spec.in_dim,
                    gain,
                    &mut data[spec.w..spec.w + spec.in_dim * spec.out_dim],
                );
            }
        }
        Ok(Self { arch: arch.clone(), layout, data })
    }

    /// All-zero parameters (mean 0, value 0, σ = 1 everywhere).
    pub fn zeros(arch: &Architecture) -> Result<Self, PolicyError> {
        arch.validate()?;
        let layout = arch.layout();
        Ok(Self {
            data: vec![0.0; layout.total],
            arch: arch.clone(),
            layout,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn log_std(&self) -> &[f64] {
        &self.data[self.layout.log_std..self.layout.log_std + self.arch.act_dim]
    }

    pub fn std_vec(&self) -> Vec<f64> {
        self.log_std().iter().map(|&l| libm::exp(l)).collect()
    }

    /// Clamps every `log_std` entry into `[ln STD_MIN, ln STD_MAX]`.
    pub fn clamp_log_std(&mut self) {
        let lo = libm::log(STD_MIN);
        let hi = libm::log(STD_MAX);
        let off = self.layout.log_std;
        for v in &mut self.data[off..off + self.arch.act_dim] {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn check_obs(&self, obs: &[f64]) -> Result<(), PolicyError> {
        if obs.len() != self.arch.obs_dim {
            return Err(PolicyError::DimMismatch {
                expected: self.arch.obs_dim,
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Full forward pass into a reusable workspace. The mean lives in
    /// `ws.pi_acts.last()`, the value in `ws.vf_acts.last()[0]`.
    pub fn forward_ws(&self, obs: &[f64], ws: &mut Workspace) -> Result<(), PolicyError> {
        self.check_obs(obs)?;
        net_forward(&self.data, &self.layout.pi, obs, &mut ws.pi_acts);
        net_forward(&self.data, &self.layout.vf, obs, &mut ws.vf_acts);
        Ok(())
    }

    /// Policy trunk only (mean head); used for expert queries where the
    /// value is not needed.
    pub fn forward_mean_ws(&self, obs: &[f64], ws: &mut Workspace) -> Result<(), PolicyError> {
        self.check_obs(obs)?;
        net_forward(&self.data, &self.layout.pi, obs, &mut ws.pi_acts);
        Ok(())
    }

    /// Allocating forward pass.
    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput, PolicyError> {
        let mut ws = Workspace::new(&self.arch);
        self.forward_ws(obs, &mut ws)?;
        Ok(PolicyOutput {
            mean: ws.mean().to_vec(),
            std: self.std_vec(),
            value: ws.value(),
        })
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given output adjoints
    /// `d_mean` and `d_value` for the forward pass cached in `ws`.
    /// `log_std` adjoints are the caller's responsibility (they are direct
    /// parameters, offset [`Layout::log_std`]).
    pub fn backward_ws(
        &self,
        obs: &[f64],
        ws: &Workspace,
        scratch: &mut Scratch,
        d_mean: &[f64],
        d_value: f64,
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.layout.total);
        net_backward(
            &self.data,
            &self.layout.pi,
            obs,
            &ws.pi_acts,
            d_mean,
            scratch,
            grad,
        );
        net_backward(
            &self.data,
            &self.layout.vf,
            obs,
            &ws.vf_acts,
            &[d_value],
            scratch,
            grad,
        );
    }
}

/// Per-layer activation buffers for one forward pass.
#[derive(Clone, Debug)]
pub struct Workspace {
    pi_acts: Vec<Vec<f64>>,
    vf_acts: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new(arch: &Architecture) -> Self {
        let layout = arch.layout();
        let alloc_chain =
            |chain: &[LayerSpec]| chain.iter().map(|s| vec![0.0; s.out_dim]).collect();
        Self {
            pi_acts: alloc_chain(&layout.pi),
            vf_acts: alloc_chain(&layout.vf),
        }
    }

    pub fn mean(&self) -> &[f64] {
        self.pi_acts.last().expect("non-empty policy chain")
    }

    pub fn value(&self) -> f64 {
        self.vf_acts.last().expect("non-empty value chain")[0]
    }
}

/// Delta buffers reused across backward passes.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    delta: Vec<f64>,
    dx: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n4 = a.len() / 4 * 4;
    let mut acc = [0.0f64; 4];
    let mut i = 0;
    while i < n4 {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in n4..a.len() {
        s += a[j] * b[j];
    }
    s
}

fn net_forward(data: &[f64], layers: &[LayerSpec], x0: &[f64], acts: &mut [Vec<f64>]) {
    debug_assert_eq!(layers.len(), acts.len());
    let last = layers.len() - 1;
    for (l, spec) in layers.iter().enumerate() {
        // Split so the previous activation can be read while this one is written.
        let (prev, rest) = acts.split_at_mut(l);
        let x: &[f64] = if l == 0 { x0 } else { &prev[l - 1] };
        let out = &mut rest[0];
        for o in 0..spec.out_dim {
            let row = &data[spec.w + o * spec.in_dim..spec.w + (o + 1) * spec.in_dim];
            let z = data[spec.b + o] + dot(row, x);
            out[o] = if l == last { z } else { libm::tanh(z) };
        }
    }
}

fn net_backward(
    data: &[f64],
    layers: &[LayerSpec],
    x0: &[f64],
    acts: &[Vec<f64>],
    d_out: &[f64],
    scratch: &mut Scratch,
    grad: &mut [f64],
) {
    scratch.delta.clear();
    scratch.delta.extend_from_slice(d_out);
    for l in (0..layers.len()).rev() {
        let spec = layers[l];
        let x: &[f64] = if l == 0 { x0 } else { &acts[l - 1] };
        // Parameter gradients for this layer.
        for o in 0..spec.out_dim {
            let d = scratch.delta[o];
            if d == 0.0 {
                continue;
            }
            grad[spec.b + o] += d;
            let row = &mut grad[spec.w + o * spec.in_dim..spec.w + (o + 1) * spec.in_dim];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if l == 0 {
            break;
        }
        // d(loss)/d(input) = Wᵀ·δ, then through the upstream tanh.
        scratch.dx.clear();
        scratch.dx.resize(spec.in_dim, 0.0);
        for o in 0..spec.out_dim {
            let d = scratch.delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &data[spec.w + o * spec.in_dim..spec.w + (o + 1) * spec.in_dim];
            for (dx, &w) in scratch.dx.iter_mut().zip(row) {
                *dx += d * w;
            }
        }
        let upstream = &acts[l - 1];
        scratch.delta.clear();
        scratch
            .delta
            .extend(scratch.dx.iter().zip(upstream).map(|(&dx, &a)| dx * (1.0 - a * a)));
    }
}

fn init_semi_orthogonal(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize, gain: f64, w: &mut [f64]) {
    for v in w.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    // Orthonormalize along the shorter side (rows if out ≤ in, else columns)
    // with modified Gram-Schmidt, then scale by the gain.
    if out_dim <= in_dim {
        for r in 0..out_dim {
            loop {
                for p in 0..r {
                    let proj = dot(
                        &w[r * in_dim..(r + 1) * in_dim],
                        &w[p * in_dim..(p + 1) * in_dim],
                    );
                    for i in 0..in_dim {
                        w[r * in_dim + i] -= proj * w[p * in_dim + i];
                    }
                }
                let norm = libm::sqrt(dot(&w[r * in_dim..(r + 1) * in_dim], &w[r * in_dim..(r + 1) * in_dim]));
                if norm > 1e-8 {
                    for i in 0..in_dim {
                        w[r * in_dim + i] /= norm;
                    }
                    break;
                }
                for i in 0..in_dim {
                    w[r * in_dim + i] = rng.sample(StandardNormal);
                }
            }
        }
    } else {
        for c in 0..in_dim {
            loop {
                for p in 0..c {
                    let mut proj = 0.0;
                    for o in 0..out_dim {
                        proj += w[o * in_dim + c] * w[o * in_dim + p];
                    }
                    for o in 0..out_dim {
                        w[o * in_dim + c] -= proj * w[o * in_dim + p];
                    }
                }
                let mut norm2 = 0.0;
                for o in 0..out_dim {
                    norm2 += w[o * in_dim + c] * w[o * in_dim + c];
                }
                let norm = libm::sqrt(norm2);
                if norm > 1e-8 {
                    for o in 0..out_dim {
                        w[o * in_dim + c] /= norm;
                    }
                    break;
                }
                for o in 0..out_dim {
                    w[o * in_dim + c] = rng.sample(StandardNormal);
                }
            }
        }
    }
    for v in w.iter_mut() {
        *v *= gain;
    }
}

/// `mean + std ⊙ z`, `z ~ N(0, I)`; reproducible per RNG state.
pub fn sample_action(output: &PolicyOutput, rng: &mut ChaCha8Rng) -> Vec<f64> {
    output
        .mean
        .iter()
        .zip(&output.std)
        .map(|(&m, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            m + s * z
        })
        .collect()
}

/// Diagonal-Gaussian log density of `action` under `output`.
pub fn log_prob(output: &PolicyOutput, action: &[f64]) -> f64 {
    log_prob_parts(&output.mean, &output.std, action)
}

pub(crate) fn log_prob_parts(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    debug_assert_eq!(mean.len(), action.len());
    let half_ln_2pi = 0.5 * libm::log(core::f64::consts::TAU);
    let mut lp = 0.0;
    for d in 0..mean.len() {
        let z = (action[d] - mean[d]) / std[d];
        lp -= 0.5 * z * z + libm::log(std[d]) + half_ln_2pi;
    }
    lp
}

/// `KL(old ‖ new)` for diagonal Gaussians, summed over action dimensions.
/// Batch averaging is the caller's job.
pub fn kl_gaussian(old: &PolicyOutput, new: &PolicyOutput) -> f64 {
    kl_parts(&old.mean, &old.std, &new.mean, &new.std)
}

pub(crate) fn kl_parts(mean_o: &[f64], std_o: &[f64], mean_n: &[f64], std_n: &[f64]) -> f64 {
    let mut kl = 0.0;
    for d in 0..mean_o.len() {
        let dm = mean_o[d] - mean_n[d];
        let vo = std_o[d] * std_o[d];
        let vn = std_n[d] * std_n[d];
        kl += libm::log(std_n[d] / std_o[d]) + (vo + dm * dm) / (2.0 * vn) - 0.5;
    }
    kl
}

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One Adam update followed by the `log_std` clamp.
pub fn adam_step(params: &mut PolicyParams, grad: &[f64], state: &mut AdamState, lr: f64) {
    debug_assert_eq!(grad.len(), params.layout.total);
    state.t += 1;
    let bc1 = 1.0 - libm::pow(ADAM_BETA1, state.t as f64);
    let bc2 = 1.0 - libm::pow(ADAM_BETA2, state.t as f64);
    let data = &mut params.data;
    for i in 0..data.len() {
        let g = grad[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        data[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
    }
    params.clamp_log_std();
}

/// Central-difference gradient probe: checks `analytic` against
/// `(f(θ+h) - f(θ-h)) / 2h` on `probes` random coordinates and returns the
/// maximum relative error `|g_a - g_fd| / max(1e-8, |g_fd|)`.
pub fn finite_diff_check<F>(
    params: &PolicyParams,
    analytic: &[f64],
    probes: usize,
    rng: &mut ChaCha8Rng,
    mut loss: F,
) -> f64
where
    F: FnMut(&PolicyParams) -> f64,
{
    const H: f64 = 1e-6;
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let idx = rng.gen_range(0..p.data.len());
        let orig = p.data[idx];
        p.data[idx] = orig + H;
        let f_plus = loss(&p);
        p.data[idx] = orig - H;
        let f_minus = loss(&p);
        p.data[idx] = orig;
        let g_fd = (f_plus - f_minus) / (2.0 * H);
        let rel = libm::fabs(analytic[idx] - g_fd) / libm::fabs(g_fd).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn arch() -> Architecture {
        Architecture::new(8, 2)
    }

    #[test]
    fn layout_is_contiguous_and_complete() {
        let a = Architecture::with_hidden(3, 2, vec![5, 4]);
        let l = a.layout();
        // pi: 3→5→4→2, vf: 3→5→4→1, log_std: 2
        let pi = 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2;
        let vf = 3 * 5 + 5 + 5 * 4 + 4 + 4 + 1;
        assert_eq!(l.total, pi + 2 + vf);
        assert_eq!(l.log_std, pi);
        assert_eq!(l.pi.len(), 3);
        assert_eq!(l.vf.len(), 3);
        assert_eq!(a.param_count(), l.total);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = PolicyParams::init(&arch(), 7).unwrap();
        let b = PolicyParams::init(&arch(), 7).unwrap();
        let c = PolicyParams::init(&arch(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.log_std().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn init_rows_are_orthonormal() {
        let p = PolicyParams::init(&arch(), 3).unwrap();
        // Hidden 64×64 layer: rows orthonormal at gain 1.
        let spec = p.layout().pi[1];
        assert_eq!((spec.in_dim, spec.out_dim), (64, 64));
        let d = p.data();
        for r in [0usize, 13, 63] {
            let row = &d[spec.w + r * 64..spec.w + (r + 1) * 64];
            assert!((dot(row, row) - 1.0).abs() < 1e-10);
        }
        let r0 = &d[spec.w..spec.w + 64];
        let r1 = &d[spec.w + 64..spec.w + 128];
        assert!(dot(r0, r1).abs() < 1e-10);
    }

    #[test]
    fn zero_network_outputs_zero_mean_unit_std() {
        let p = PolicyParams::zeros(&arch()).unwrap();
        let out = p.forward(&[0.0; 8]).unwrap();
        assert_eq!(out.mean, vec![0.0, 0.0]);
        assert_eq!(out.std, vec![1.0, 1.0]);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn forward_rejects_bad_dims() {
        let p = PolicyParams::init(&arch(), 1).unwrap();
        assert_eq!(
            p.forward(&[0.0; 5]).unwrap_err(),
            PolicyError::DimMismatch {
                expected: 8,
                got: 5
            }
        );
    }

    #[test]
    fn forward_paths_agree() {
        let p = PolicyParams::init(&arch(), 5).unwrap();
        let obs: Vec<f64> = (0..8).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let out = p.forward(&obs).unwrap();
        let mut ws = Workspace::new(p.arch());
        p.forward_ws(&obs, &mut ws).unwrap();
        assert_eq!(out.mean.as_slice(), ws.mean());
        assert_eq!(out.value, ws.value());
    }

    #[test]
    fn outputs_move_continuously_with_weights() {
        let base = PolicyParams::init(&arch(), 11).unwrap();
        let obs: Vec<f64> = (0..8).map(|i| libm::sin(i as f64)).collect();
        let f0 = base.forward(&obs).unwrap();
        let probe = |delta: f64, idx: usize| {
            let mut p = base.clone();
            p.data_mut()[idx] += delta;
            let f = p.forward(&obs).unwrap();
            let mut change = libm::fabs(f.value - f0.value);
            for d in 0..2 {
                change = change.max(libm::fabs(f.mean[d] - f0.mean[d]));
            }
            change
        };
        for idx in [0usize, 100, 800] {
            let big = probe(1e-4, idx);
            let small = probe(1e-5, idx);
            assert!(small <= 0.2 * big + 1e-12, "idx {idx}: {small} vs {big}");
        }
    }

    #[test]
    fn log_prob_closed_form() {
        let out = PolicyOutput {
            mean: vec![0.3, -0.7],
            std: vec![1.0, 1.0],
            value: 0.0,
        };
        let at_mean = log_prob(&out, &[0.3, -0.7]);
        assert!((at_mean - (-1.8378770664093453)).abs() < 1e-12);

        let one = PolicyOutput {
            mean: vec![0.0],
            std: vec![1.0],
            value: 0.0,
        };
        let off = log_prob(&one, &[1.0]);
        assert!((off - (-1.4189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn log_prob_peaks_at_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mean = vec![rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
            let std = vec![0.1 + rng.gen::<f64>(), 0.1 + rng.gen::<f64>()];
            let out = PolicyOutput {
                mean: mean.clone(),
                std,
                value: 0.0,
            };
            let peak = log_prob(&out, &mean);
            let off: Vec<f64> = mean.iter().map(|m| m + rng.gen::<f64>() - 0.5).collect();
            assert!(log_prob(&out, &off) <= peak + 1e-12);
        }
    }

    #[test]
    fn kl_closed_form_and_nonnegative() {
        let p = PolicyOutput {
            mean: vec![0.0],
            std: vec![1.0],
            value: 0.0,
        };
        let q = PolicyOutput {
            mean: vec![0.0],
            std: vec![2.0],
            value: 0.0,
        };
        assert!((kl_gaussian(&p, &q) - 0.3181471805599453).abs() < 1e-12);
        assert_eq!(kl_gaussian(&p, &p), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let mk = |rng: &mut ChaCha8Rng| PolicyOutput {
                mean: vec![rng.gen::<f64>() * 6.0 - 3.0],
                std: vec![0.05 + 2.0 * rng.gen::<f64>()],
                value: 0.0,
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            assert!(kl_gaussian(&a, &b) >= 0.0);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let out = PolicyOutput {
            mean: vec![1.0, -1.0],
            std: vec![0.5, 2.0],
            value: 0.0,
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_action(&out, &mut r1), sample_action(&out, &mut r2));
    }

    #[test]
    fn adam_minimizes_quadratic_and_clamps_log_std() {
        let a = arch();
        let mut p = PolicyParams::init(&a, 2).unwrap();
        let target: Vec<f64> = p.data().iter().map(|&x| x + 0.5).collect();
        let mut st = AdamState::new(p.data().len());
        let loss = |p: &PolicyParams| -> f64 {
            p.data()
                .iter()
                .zip(&target)
                .map(|(&x, &t)| (x - t) * (x - t))
                .sum::<f64>()
                * 0.5
        };
        let before = loss(&p);
        for _ in 0..2000 {
            let grad: Vec<f64> = p.data().iter().zip(&target).map(|(&x, &t)| x - t).collect();
            adam_step(&mut p, &grad, &mut st, 0.01);
        }
        // log_std coordinates chase targets of +0.5 but stay within the clamp.
        let hi = libm::log(STD_MAX);
        for &l in p.log_std() {
            assert!(l <= hi + 1e-15);
        }
        assert!(loss(&p) < 0.05 * before, "{} -> {}", before, loss(&p));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let a = arch();
        let p = PolicyParams::init(&a, 21).unwrap();
        let obs: Vec<f64> = (0..8).map(|i| libm::cos(1.7 * i as f64)).collect();
        // Scalar probe loss: sum(mean) + 2·value.
        let loss = |p: &PolicyParams| {
            let out = p.forward(&obs).unwrap();
            out.mean.iter().sum::<f64>() + 2.0 * out.value
        };
        let mut ws = Workspace::new(&a);
        let mut scratch = Scratch::default();
        p.forward_ws(&obs, &mut ws).unwrap();
        let mut grad = vec![0.0; p.data().len()];
        p.backward_ws(&obs, &ws, &mut scratch, &[1.0, 1.0], 2.0, &mut grad);
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let worst = finite_diff_check(&p, &grad, 60, &mut rng, loss);
        assert!(worst < 1e-5, "max relative error {worst}");
    }
}
