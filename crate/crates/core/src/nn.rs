//! Small fully connected networks with hand-written backpropagation.
//!
//! Everything that needs a learned or random mapping (feature encoders, the
//! inverse-dynamics head, forward models, RND nets, the policy) is built from
//! [`Mlp`]. Weights are stored input-major: the slice for input `j` holds the
//! weights from that input to every output, so sparse inputs skip whole
//! columns in both passes.

use crate::ellipse::FeatureVector;
use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(invalid(format!("unknown activation tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Input-major: `weights[j * outputs + i]` connects input `j` to output `i`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Uniform init in `±1/√fan_in` for weights and biases.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.uniform(-bound, bound)).collect();
        let bias = (0..outputs).map(|_| rng.uniform(-bound, bound)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[inp * self.outputs + out]
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        let o = self.outputs;
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &self.weights[j * o..(j + 1) * o];
            for (y, w) in out.iter_mut().zip(col) {
                *y += xj * w;
            }
        }
        if self.activation == Activation::Relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

/// Layer-wise parameters of a feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations recorded by [`Mlp::forward_trace`]: `values[0]` is the input,
/// `values[k + 1]` the post-activation output of layer `k`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().unwrap()
    }
}

impl Mlp {
    /// Network with layer sizes `sizes[0] → sizes[1] → …`, rectified-linear
    /// hidden layers and the given activation on the last layer.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut SplitMix64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n { output } else { Activation::Relu };
                Layer::init(sizes[k], sizes[k + 1], act, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(invalid(format!("layer {k} buffers do not match its shape")));
            }
            if k > 0 && layers[k - 1].outputs != l.inputs {
                return Err(invalid(format!(
                    "layer {k} expects {} inputs but layer {} produces {}",
                    l.inputs,
                    k - 1,
                    layers[k - 1].outputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            check_finite(&next, k)?;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(values.last().unwrap(), &mut out);
            check_finite(&out, k)?;
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output`, and returns
    /// `∂L/∂input` when `want_input` is set.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_out: &[f64],
        grads: &mut GradBuffer,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let mut delta = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let out = &trace.values[k + 1];
            if layer.activation == Activation::Relu {
                for (d, y) in delta.iter_mut().zip(out) {
                    if *y <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.values[k];
            let o = layer.outputs;
            let (gw, gb) = &mut grads.layers[k];
            for (b, d) in gb.iter_mut().zip(&delta) {
                *b += d;
            }
            for (j, &xj) in x.iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                for (g, d) in gw[j * o..(j + 1) * o].iter_mut().zip(&delta) {
                    *g += xj * d;
                }
            }
            if k == 0 && !want_input {
                return None;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (j, p) in prev.iter_mut().enumerate() {
                let col = &layer.weights[j * o..(j + 1) * o];
                *p = col.iter().zip(&delta).map(|(w, d)| w * d).sum();
            }
            delta = prev;
        }
        Some(delta)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameter view: per layer, weights then biases.
    pub fn param(&self, mut k: usize) -> f64 {
        for l in &self.layers {
            if k < l.weights.len() {
                return l.weights[k];
            }
            k -= l.weights.len();
            if k < l.bias.len() {
                return l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    /// Text shape manifest used as the checkpoint header.
    pub fn manifest(&self, seed: u64) -> String {
        let mut s = format!("mlp layers={} seed={seed}\n", self.layers.len());
        for l in &self.layers {
            s.push_str(&format!("{} {} {}\n", l.inputs, l.outputs, l.activation.tag()));
        }
        s
    }

    /// Manifest, a blank line, then every parameter as little-endian f64
    /// (per layer: weights in output-major order, then biases).
    pub fn to_checkpoint(&self, seed: u64) -> Vec<u8> {
        let mut out = self.manifest(seed).into_bytes();
        out.push(b'\n');
        for l in &self.layers {
            for i in 0..l.outputs {
                for j in 0..l.inputs {
                    out.extend_from_slice(&l.weight(i, j).to_le_bytes());
                }
            }
            for b in &l.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`Self::to_checkpoint`]; returns the network and its seed.
    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, u64)> {
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| invalid("checkpoint has no header terminator"))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| invalid("header is not UTF-8"))?;
        let mut lines = header.lines();
        let first = lines.next().ok_or_else(|| invalid("empty header"))?;
        let mut count = None;
        let mut seed = None;
        for tok in first.split_whitespace().skip(1) {
            if let Some(v) = tok.strip_prefix("layers=") {
                count = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            }
        }
        let count = count.ok_or_else(|| invalid("header missing layers="))?;
        let seed = seed.ok_or_else(|| invalid("header missing seed="))?;
        let mut body = bytes[split + 2..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| invalid("header has fewer layers than declared"))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(invalid(format!("bad layer line {line:?}")));
            }
            let inputs: usize = parts[0].parse().map_err(|_| invalid("bad input dim"))?;
            let outputs: usize = parts[1].parse().map_err(|_| invalid("bad output dim"))?;
            let activation = Activation::from_tag(parts[2])?;
            let mut weights = vec![0.0; inputs * outputs];
            for i in 0..outputs {
                for j in 0..inputs {
                    weights[j * outputs + i] = body.next().ok_or_else(|| invalid("truncated weights"))?;
                }
            }
            let bias = (0..outputs)
                .map(|_| body.next().ok_or_else(|| invalid("truncated biases")))
                .collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        if body.next().is_some() {
            return Err(invalid("trailing bytes after parameters"));
        }
        Ok((Self::from_layers(layers)?, seed))
    }
}

fn check_finite(v: &[f64], layer: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation at layer {layer}")))
    }
}

/// Gradient accumulator with the same shape as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    /// `(weights, biases)` per layer, same layout as [`Layer`].
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GradBuffer {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b).map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn scale(&mut self, f: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= f);
        }
    }

    pub fn get(&self, mut k: usize) -> f64 {
        for (w, b) in &self.layers {
            if k < w.len() {
                return w[k];
            }
            k -= w.len();
            if k < b.len() {
                return b[k];
            }
            k -= b.len();
        }
        panic!("gradient index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }

    fn congruent(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.bias.len())
    }
}

/// Scales every buffer so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(buffers: &mut [&mut GradBuffer], max_norm: f64) -> f64 {
    let norm = buffers.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        for g in buffers.iter_mut() {
            g.scale(f);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub smoothing: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            smoothing: 0.99,
            eps: 1e-5,
        }
    }
}

/// Running square averages for RMSProp (no momentum, not centered).
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub square_avg: GradBuffer,
    pub steps: u64,
}

impl RmsPropState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            square_avg: GradBuffer::zeros_like(net),
            steps: 0,
        }
    }

    /// `s ← ρs + (1−ρ)g²`, `θ ← θ − lr·g/(√s + ε)`.
    pub fn step(&mut self, params: &mut Mlp, grads: &GradBuffer, cfg: RmsPropConfig) -> Result<()> {
        if !(cfg.lr > 0.0) || !(cfg.smoothing > 0.0 && cfg.smoothing < 1.0) || !(cfg.eps >= 0.0) {
            return Err(invalid(format!("bad RMSProp settings {cfg:?}")));
        }
        if !grads.congruent(params) || !self.square_avg.congruent(params) {
            return Err(invalid("gradient/optimizer shapes do not match the network"));
        }
        let rho = cfg.smoothing;
        for ((layer, (gw, gb)), (sw, sb)) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.square_avg.layers.iter_mut())
        {
            let it = layer
                .weights
                .iter_mut()
                .zip(gw)
                .zip(sw.iter_mut())
                .chain(layer.bias.iter_mut().zip(gb).zip(sb.iter_mut()));
            for ((p, g), s) in it {
                *s = rho * *s + (1.0 - rho) * g * g;
                *p -= cfg.lr * g / (s.sqrt() + cfg.eps);
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Softmax cross-entropy of `logits` against class `target`; returns the loss
/// and `∂loss/∂logits`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[target];
    let mut grad = probs;
    grad[target] -= 1.0;
    (loss, grad)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Inverse-dynamics loss `−log p(a | g(φ(s), φ(s')))` for one transition.
/// Gradients flow through both encoder evaluations and are accumulated.
pub fn idm_loss_and_grad(
    phi: &Mlp,
    g: &Mlp,
    s_t: &[f64],
    action: usize,
    s_next: &[f64],
    grad_phi: &mut GradBuffer,
    grad_g: &mut GradBuffer,
) -> Result<f64> {
    if action >= g.output_dim() {
        return Err(invalid(format!(
            "action {action} out of range for {} logits",
            g.output_dim()
        )));
    }
    if g.input_dim() != 2 * phi.output_dim() {
        return Err(invalid("inverse head input must be twice the feature dimension"));
    }
    let t0 = phi.forward_trace(s_t)?;
    let t1 = phi.forward_trace(s_next)?;
    let tg = g
        .forward_trace(&concat(t0.output(), t1.output()))
        .map_err(|e| Error::Numeric(format!("inverse head: {e}")))?;
    let (loss, dlogits) = softmax_cross_entropy(tg.output(), action);
    if !loss.is_finite() {
        return Err(Error::Numeric(
            "inverse-dynamics loss is not finite (output layer)".into(),
        ));
    }
    let dz = g.backward(&tg, &dlogits, grad_g, true).unwrap();
    let n = phi.output_dim();
    phi.backward(&t0, &dz[..n], grad_phi, false);
    phi.backward(&t1, &dz[n..], grad_phi, false);
    Ok(loss)
}

/// Forward-model loss `½‖f(φ(s), onehot(a)) − φ(s')‖²`. Only `f` receives
/// gradients; both encoder outputs are constants here.
pub fn forward_model_loss_and_grad(
    phi: &Mlp,
    f: &Mlp,
    s_t: &[f64],
    action: usize,
    s_next: &[f64],
    grad_f: &mut GradBuffer,
) -> Result<f64> {
    let n = phi.output_dim();
    let num_actions = f
        .input_dim()
        .checked_sub(n)
        .ok_or_else(|| invalid("forward model input smaller than feature dimension"))?;
    if action >= num_actions {
        return Err(invalid(format!(
            "action {action} out of range for {num_actions} actions"
        )));
    }
    if f.output_dim() != n {
        return Err(invalid("forward model must predict the feature dimension"));
    }
    let z0 = phi.forward(s_t)?;
    let z1 = phi.forward(s_next)?;
    let mut a = vec![0.0; num_actions];
    a[action] = 1.0;
    let tf = f.forward_trace(&concat(&z0, &a))?;
    let diff: Vec<f64> = tf.output().iter().zip(&z1).map(|(p, t)| p - t).collect();
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
    if !loss.is_finite() {
        return Err(Error::Numeric("forward-model loss is not finite (output layer)".into()));
    }
    f.backward(&tf, &diff, grad_f, false);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    OneHot,
    RandomNet,
    PolicyTrunk,
    InverseDynamics,
}

impl EncoderKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one_hot" => Ok(Self::OneHot),
            "random_net" => Ok(Self::RandomNet),
            "policy_trunk" => Ok(Self::PolicyTrunk),
            "inverse_dynamics" => Ok(Self::InverseDynamics),
            other => Err(invalid(format!("unknown encoder kind {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::OneHot => "one_hot",
            Self::RandomNet => "random_net",
            Self::PolicyTrunk => "policy_trunk",
            Self::InverseDynamics => "inverse_dynamics",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Output dimension `n` (ignored for `policy_trunk`, which uses the trunk width).
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    /// Length of the dense observation vector.
    pub input_dim: usize,
    /// Size of the discrete key space (`one_hot` only).
    pub key_space: usize,
    pub num_actions: usize,
    /// Hidden width of the inverse-dynamics head `g`.
    pub head_hidden: usize,
}

/// What an encoder reads from an observation.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub dense: &'a [f64],
    pub key: usize,
}

/// A feature map `φ` plus whatever trainable companions it owns.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    OneHot {
        dim: usize,
    },
    RandomNet {
        net: Mlp,
    },
    /// Reads the policy trunk's last hidden layer; owns no parameters.
    PolicyTrunk {
        dim: usize,
    },
    InverseDynamics {
        phi: Mlp,
        head: Mlp,
    },
}

pub fn one_hot_encode(key: usize, dim: usize) -> Result<FeatureVector> {
    if key >= dim {
        return Err(invalid(format!("key index {key} out of range for dimension {dim}")));
    }
    let mut v = vec![0.0; dim];
    v[key] = 1.0;
    FeatureVector::new(v)
}

pub fn build_encoder(spec: &EncoderSpec, seed: u64) -> Result<Encoder> {
    let mut rng = SplitMix64::stream(seed, 0x00E7_C0DE);
    let mut sizes = Vec::with_capacity(spec.hidden.len() + 2);
    sizes.push(spec.input_dim);
    sizes.extend_from_slice(&spec.hidden);
    sizes.push(spec.feature_dim);
    match spec.kind {
        EncoderKind::OneHot => {
            if spec.key_space == 0 {
                return Err(invalid("one_hot encoder needs a finite, nonempty key space"));
            }
            Ok(Encoder::OneHot { dim: spec.key_space })
        }
        EncoderKind::RandomNet => {
            if spec.input_dim == 0 {
                return Err(invalid("random_net encoder needs a dense input layout"));
            }
            Ok(Encoder::RandomNet {
                net: Mlp::new(&sizes, Activation::Identity, &mut rng)?,
            })
        }
        EncoderKind::PolicyTrunk => {
            if spec.feature_dim == 0 {
                return Err(invalid("policy_trunk encoder needs the trunk width"));
            }
            Ok(Encoder::PolicyTrunk { dim: spec.feature_dim })
        }
        EncoderKind::InverseDynamics => {
            if spec.input_dim == 0 || spec.num_actions < 2 {
                return Err(invalid("inverse_dynamics encoder needs a dense input and ≥2 actions"));
            }
            let phi = Mlp::new(&sizes, Activation::Identity, &mut rng)?;
            let head = Mlp::new(
                &[2 * spec.feature_dim, spec.head_hidden, spec.num_actions],
                Activation::Identity,
                &mut rng,
            )?;
            Ok(Encoder::InverseDynamics { phi, head })
        }
    }
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::OneHot { .. } => EncoderKind::OneHot,
            Encoder::RandomNet { .. } => EncoderKind::RandomNet,
            Encoder::PolicyTrunk { .. } => EncoderKind::PolicyTrunk,
            Encoder::InverseDynamics { .. } => EncoderKind::InverseDynamics,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::OneHot { dim } | Encoder::PolicyTrunk { dim } => *dim,
            Encoder::RandomNet { net } => net.output_dim(),
            Encoder::InverseDynamics { phi, .. } => phi.output_dim(),
        }
    }

    /// `φ(s)`. `trunk` must be supplied for the policy-trunk encoder.
    pub fn encode(&self, input: EncoderInput<'_>, trunk: Option<&Mlp>) -> Result<FeatureVector> {
        match self {
            Encoder::OneHot { dim } => one_hot_encode(input.key, *dim),
            Encoder::RandomNet { net } => FeatureVector::new(net.forward(input.dense)?),
            Encoder::InverseDynamics { phi, .. } => FeatureVector::new(phi.forward(input.dense)?),
            Encoder::PolicyTrunk { dim } => {
                let trunk = trunk.ok_or_else(|| invalid("policy_trunk encoder needs the policy trunk"))?;
                if trunk.output_dim() != *dim {
                    return Err(invalid("policy trunk width does not match encoder dimension"));
                }
                FeatureVector::new(trunk.forward(input.dense)?)
            }
        }
    }

    /// The trainable feature network, if this encoder has one.
    pub fn feature_net(&self) -> Option<&Mlp> {
        match self {
            Encoder::InverseDynamics { phi, .. } => Some(phi),
            Encoder::RandomNet { net } => Some(net),
            _ => None,
        }
    }
}
