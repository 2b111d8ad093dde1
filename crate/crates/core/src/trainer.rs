//! Synchronous advantage actor-critic with intrinsic bonuses.
//!
//! Each iteration collects `unroll` steps from `num_envs` environments,
//! computing the bonus of every transition from the pre-update episodic state,
//! mixes `r̄ = r + β·b` (optionally dividing `b` by a running standard
//! deviation), takes one actor-critic step and then one step on the bonus
//! models (inverse dynamics, forward model, RND predictor) using the same
//! transitions. Single-actor execution is bit-for-bit deterministic.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use crate::bonus::{
    step_bonus, Algo, BonusConfig, BonusModels, CountForm, EpisodeState, KeyExtractor, RndPair, StepView,
};
use crate::env::{Action, Context, EnvConfig, GridEnv, Observation, NUM_ACTIONS};
use crate::error::{invalid, Error, Result};
use crate::nn::{
    build_encoder, clip_global_norm, forward_model_loss_and_grad, idm_loss_and_grad, log_softmax, softmax, Activation,
    Encoder, EncoderKind, EncoderSpec, GradBuffer, Mlp, RmsPropConfig, RmsPropState,
};
use crate::record::{MetricRow, RunRecord, RunStatus};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub bonus: BonusConfig,
    /// Feature encoder used by the bonus (`None` when the bonus needs none).
    pub encoder: Option<EncoderKind>,
    pub feature_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: usize,
    pub policy_hidden: Vec<usize>,
    pub gamma: f64,
    pub unroll: usize,
    pub num_envs: usize,
    pub lr: f64,
    pub rms_smoothing: f64,
    pub rms_eps: f64,
    pub entropy_cost: f64,
    pub baseline_cost: f64,
    pub max_grad_norm: f64,
    /// Mixed rewards are clamped to `[-reward_clip, reward_clip]` before
    /// returns are computed; `0` disables clamping.
    pub reward_clip: f64,
    pub total_steps: u64,
    pub seed: u64,
    /// Reset trackers and count tables at every episode start.
    pub episodic: bool,
    /// Rollouts between refreshes of the encoder snapshot the bonus reads.
    pub encoder_update_period: u64,
    pub inverse_coef: f64,
    pub forward_coef: f64,
    pub rnd_updates: usize,
    pub log_interval: u64,
    /// Record wall-clock `steps_per_second` (makes record files non-reproducible).
    pub log_timing: bool,
    /// `policy_trunk` encoder reads a frozen copy of the initial trunk instead
    /// of the live one.
    pub trunk_frozen: bool,
    pub label: Option<String>,
}

impl TrainConfig {
    /// Defaults for `algo` on `env`.
    pub fn new(algo: Algo, env: EnvConfig) -> Self {
        let (beta, normalize, entropy_cost, inverse_coef) = match algo {
            Algo::E3b => (1.0, true, 0.005, 1.0),
            Algo::NovelD => (1.0, true, 0.005, 0.1),
            Algo::Ride | Algo::Icm => (0.1, false, 0.0005, 0.1),
            Algo::Rnd | Algo::Count => (1.0, false, 0.0005, 0.1),
            Algo::None => (0.0, false, 0.0005, 0.1),
        };
        let encoder = match algo {
            Algo::E3b | Algo::Ride | Algo::Icm => Some(EncoderKind::InverseDynamics),
            _ => None,
        };
        Self {
            env,
            bonus: BonusConfig {
                algo,
                extractor: KeyExtractor::Identity,
                alpha: 0.1,
                beta,
                ridge: 0.1,
                normalize,
                count_form: CountForm::InverseSqrt,
            },
            encoder,
            feature_dim: 64,
            encoder_hidden: vec![64, 64],
            head_hidden: 256,
            policy_hidden: vec![64, 64],
            gamma: 0.99,
            unroll: 32,
            num_envs: 8,
            lr: DEFAULT_LR,
            rms_smoothing: 0.99,
            rms_eps: 1e-5,
            entropy_cost,
            baseline_cost: 0.5,
            max_grad_norm: 40.0,
            reward_clip: 1.0,
            total_steps: 200_000,
            seed: 0,
            episodic: true,
            encoder_update_period: 1,
            inverse_coef,
            forward_coef: 1.0,
            rnd_updates: 1,
            log_interval: 0,
            log_timing: false,
            trunk_frozen: false,
            label: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.bonus.validate()?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.unroll < 1 || self.num_envs < 1 {
            return Err(invalid("unroll and num_envs must be at least 1"));
        }
        if !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(invalid("lr and max_grad_norm must be positive"));
        }
        if self.feature_dim < 1 || self.head_hidden < 1 || self.policy_hidden.is_empty() {
            return Err(invalid("network widths must be positive"));
        }
        if !(self.reward_clip >= 0.0) {
            return Err(invalid("reward_clip must be non-negative"));
        }
        if self.encoder_update_period < 1 {
            return Err(invalid("encoder_update_period must be at least 1"));
        }
        let needs_encoder = matches!(self.bonus.algo, Algo::E3b | Algo::Ride | Algo::Icm);
        if needs_encoder && self.encoder.is_none() {
            return Err(invalid(format!("{} needs an encoder", self.bonus.algo.name())));
        }
        if matches!(self.bonus.algo, Algo::Icm | Algo::Ride) && self.encoder != Some(EncoderKind::InverseDynamics) {
            return Err(invalid("ride and icm use the inverse_dynamics encoder"));
        }
        Ok(())
    }

    pub fn steps_per_rollout(&self) -> u64 {
        (self.unroll * self.num_envs) as u64
    }

    pub fn rms(&self) -> RmsPropConfig {
        RmsPropConfig {
            lr: self.lr,
            smoothing: self.rms_smoothing,
            eps: self.rms_eps,
        }
    }

    fn encoder_spec(&self, kind: EncoderKind) -> EncoderSpec {
        EncoderSpec {
            kind,
            feature_dim: if kind == EncoderKind::PolicyTrunk {
                *self.policy_hidden.last().unwrap()
            } else {
                self.feature_dim
            },
            hidden: self.encoder_hidden.clone(),
            input_dim: self.env.input_dim(),
            key_space: self.env.key_space(),
            num_actions: NUM_ACTIONS,
            head_hidden: self.head_hidden,
        }
    }
}

/// Learning rate used when a config does not set one.
pub const DEFAULT_LR: f64 = 1e-4;

/// Actor and critic heads on a shared trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub trunk: Mlp,
    pub actor: Mlp,
    pub critic: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub trunk: GradBuffer,
    pub actor: GradBuffer,
    pub critic: GradBuffer,
}

impl PolicyGrads {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        Self {
            trunk: GradBuffer::zeros_like(&p.trunk),
            actor: GradBuffer::zeros_like(&p.actor),
            critic: GradBuffer::zeros_like(&p.critic),
        }
    }
}

impl PolicyParams {
    pub fn new(input_dim: usize, hidden: &[usize], num_actions: usize, rng: &mut SplitMix64) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(&sizes, Activation::Relu, rng)?;
        let h = *hidden.last().unwrap();
        let actor = Mlp::new(&[h, num_actions], Activation::Identity, rng)?;
        let critic = Mlp::new(&[h, 1], Activation::Identity, rng)?;
        Ok(Self { trunk, actor, critic })
    }

    /// `(logits, value)` for one observation.
    pub fn evaluate(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let h = self.trunk.forward(x)?;
        let logits = self.actor.forward(&h)?;
        let v = self.critic.forward(&h)?[0];
        Ok((logits, v))
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.actor.num_params() + self.critic.num_params()
    }

    /// Flat view across trunk, actor, critic (in that order).
    pub fn param_mut(&mut self, k: usize) -> &mut f64 {
        let (a, b) = (self.trunk.num_params(), self.actor.num_params());
        if k < a {
            self.trunk.param_mut(k)
        } else if k < a + b {
            self.actor.param_mut(k - a)
        } else {
            self.critic.param_mut(k - a - b)
        }
    }
}

impl PolicyGrads {
    pub fn get(&self, k: usize) -> f64 {
        let a: usize = self.trunk.layers.iter().map(|(w, b)| w.len() + b.len()).sum();
        let b: usize = self.actor.layers.iter().map(|(w, b)| w.len() + b.len()).sum();
        if k < a {
            self.trunk.get(k)
        } else if k < a + b {
            self.actor.get(k - a)
        } else {
            self.critic.get(k - a - b)
        }
    }
}

/// Streaming mean and variance (Welford) with a floor on the reported std.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
    eps: f64,
}

impl RunningNormalizer {
    pub fn new(eps: f64) -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            eps,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `max(√(M2/count), ε)`.
    pub fn std(&self) -> f64 {
        let raw = if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        };
        raw.max(self.eps)
    }
}

impl Default for RunningNormalizer {
    fn default() -> Self {
        Self::new(1e-8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub x: Arc<[f64]>,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub next_obs: Observation,
    pub x_next: Arc<[f64]>,
    pub reward: f64,
    pub bonus: f64,
    /// `r + β·b̃`, filled by [`mix_rewards`].
    pub mixed: f64,
    pub done: bool,
}

/// `unroll` transitions per environment plus the bootstrap values at the edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub envs: Vec<Vec<Transition>>,
    pub bootstrap: Vec<f64>,
    /// Extrinsic returns of episodes that ended inside this rollout.
    pub finished_returns: Vec<f64>,
}

impl Rollout {
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.envs.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.envs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One environment with its current observation and episodic bonus state.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub env: GridEnv,
    pub obs: Observation,
    pub x: Arc<[f64]>,
    pub state: EpisodeState,
    contexts: SplitMix64,
    episode_return: f64,
}

impl EnvSlot {
    pub fn new(cfg: &TrainConfig, state: EpisodeState, index: usize) -> Result<Self> {
        let mut env = GridEnv::new(
            cfg.env.clone(),
            SplitMix64::stream(cfg.seed, 0x5EED_0000 + index as u64).next_u64(),
        )?;
        let mut contexts = SplitMix64::stream(cfg.seed, 0xC0_0000 + index as u64);
        let ctx = Context {
            seed: contexts.next_u64(),
            task: cfg.env.task,
        };
        let obs = env.reset(ctx)?;
        let x: Arc<[f64]> = obs.input(cfg.env.max_steps).into();
        Ok(Self {
            env,
            obs,
            x,
            state,
            contexts,
            episode_return: 0.0,
        })
    }
}

fn sample_action(logits: &[f64], rng: &mut SplitMix64) -> (usize, f64) {
    let probs = softmax(logits);
    let a = rng.categorical(&probs);
    (a, log_softmax(logits)[a])
}

/// Steps every slot `unroll` times with actions from `policy`, recording the
/// bonus of each transition (computed before the episodic state absorbs it).
/// Slots whose episode ends are reset with a fresh context; their episodic
/// bonus state is cleared only when `cfg.episodic` is set.
pub fn collect_rollout(
    policy: &PolicyParams,
    slots: &mut [EnvSlot],
    cfg: &TrainConfig,
    models: &BonusModels,
    trunk: Option<&Mlp>,
    rng: &mut SplitMix64,
) -> Result<Rollout> {
    let mut envs: Vec<Vec<Transition>> = (0..slots.len()).map(|_| Vec::with_capacity(cfg.unroll)).collect();
    let mut finished = Vec::new();
    for _ in 0..cfg.unroll {
        for (i, slot) in slots.iter_mut().enumerate() {
            let (logits, value) = policy.evaluate(&slot.x)?;
            let (action, log_prob) = sample_action(&logits, rng);
            let out = slot.env.step(Action::from_index(action)?)?;
            let x_next: Arc<[f64]> = out.obs.input(cfg.env.max_steps).into();
            let bonus = step_bonus(
                &cfg.bonus,
                models,
                &mut slot.state,
                StepView {
                    obs_t: &slot.obs,
                    x_t: &slot.x,
                    action,
                    obs_next: &out.obs,
                    x_next: &x_next,
                },
                trunk,
            )?;
            slot.episode_return += out.reward;
            envs[i].push(Transition {
                obs: std::mem::replace(&mut slot.obs, out.obs.clone()),
                x: std::mem::replace(&mut slot.x, x_next.clone()),
                action,
                log_prob,
                value,
                next_obs: out.obs,
                x_next,
                reward: out.reward,
                bonus,
                mixed: out.reward,
                done: out.done,
            });
            if out.done {
                finished.push(slot.episode_return);
                slot.episode_return = 0.0;
                if cfg.episodic {
                    slot.state.reset();
                }
                let ctx = Context {
                    seed: slot.contexts.next_u64(),
                    task: cfg.env.task,
                };
                slot.obs = slot.env.reset(ctx)?;
                slot.x = slot.obs.input(cfg.env.max_steps).into();
            }
        }
    }
    let bootstrap = slots
        .iter()
        .map(|s| policy.evaluate(&s.x).map(|(_, v)| v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Rollout {
        envs,
        bootstrap,
        finished_returns: finished,
    })
}

/// Fills `mixed = r + β·b` for every transition. With `normalize`, the raw
/// bonuses are first fed to the running normalizer and each bonus is divided
/// by its (floored) standard deviation.
pub fn mix_rewards(rollout: &mut Rollout, beta: f64, normalizer: &mut RunningNormalizer, normalize: bool) {
    if normalize {
        for t in rollout.transitions() {
            normalizer.push(t.bonus);
        }
    }
    let scale = if normalize { normalizer.std() } else { 1.0 };
    for t in rollout.envs.iter_mut().flatten() {
        t.mixed = t.reward + beta * (t.bonus / scale);
    }
}

/// Clamps every mixed reward to `[-limit, limit]`.
pub fn clip_rewards(rollout: &mut Rollout, limit: f64) {
    for t in rollout.envs.iter_mut().flatten() {
        t.mixed = t.mixed.clamp(-limit, limit);
    }
}

/// Discounted returns and advantages per environment. Returns do not
/// bootstrap across episode ends; the value at the unroll edge bootstraps
/// unfinished segments.
pub fn compute_returns_and_advantages(rollout: &Rollout, gamma: f64) -> Vec<Vec<(f64, f64)>> {
    rollout
        .envs
        .iter()
        .zip(&rollout.bootstrap)
        .map(|(steps, &boot)| {
            let mut out = vec![(0.0, 0.0); steps.len()];
            let mut g = boot;
            for (k, t) in steps.iter().enumerate().rev() {
                g = if t.done { t.mixed } else { t.mixed + gamma * g };
                out[k] = (g, g - t.value);
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct A2cSample<'a> {
    pub x: &'a [f64],
    pub action: usize,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct A2cStats {
    pub total_loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cCosts {
    pub entropy_cost: f64,
    pub baseline_cost: f64,
}

/// `Σ −A·log π(a|s) + c_v·Σ (G − V)² − c_H·Σ H(π(·|s))` and its gradient.
/// Reported `policy_loss`, `value_loss` and `entropy` are per-sample means.
pub fn a2c_loss_and_grad(
    policy: &PolicyParams,
    samples: &[A2cSample<'_>],
    costs: A2cCosts,
) -> Result<(A2cStats, PolicyGrads)> {
    let mut grads = PolicyGrads::zeros_like(policy);
    let mut stats = A2cStats::default();
    for s in samples {
        let th = policy.trunk.forward_trace(s.x)?;
        let ta = policy.actor.forward_trace(th.output())?;
        let tc = policy.critic.forward_trace(th.output())?;
        let logits = ta.output();
        if s.action >= logits.len() {
            return Err(invalid(format!("action {} out of range", s.action)));
        }
        let logp = log_softmax(logits);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let v = tc.output()[0];

        let pg = -s.advantage * logp[s.action];
        let vl = (s.ret - v).powi(2);
        stats.policy_loss += pg;
        stats.value_loss += vl;
        stats.entropy += entropy;
        stats.total_loss += pg + costs.baseline_cost * vl - costs.entropy_cost * entropy;

        let mut dlogits: Vec<f64> = p
            .iter()
            .zip(&logp)
            .map(|(pk, lk)| s.advantage * pk + costs.entropy_cost * pk * (lk + entropy))
            .collect();
        dlogits[s.action] -= s.advantage;
        let dv = [2.0 * costs.baseline_cost * (v - s.ret)];

        let mut dh = policy.actor.backward(&ta, &dlogits, &mut grads.actor, true).unwrap();
        let dh_c = policy.critic.backward(&tc, &dv, &mut grads.critic, true).unwrap();
        dh.iter_mut().zip(&dh_c).for_each(|(a, b)| *a += b);
        policy.trunk.backward(&th, &dh, &mut grads.trunk, false);
    }
    if !stats.total_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "actor-critic loss is not finite (policy {}, value {}, entropy {})",
            stats.policy_loss, stats.value_loss, stats.entropy
        )));
    }
    let n = samples.len().max(1) as f64;
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    Ok((stats, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOptimizer {
    pub trunk: RmsPropState,
    pub actor: RmsPropState,
    pub critic: RmsPropState,
}

impl PolicyOptimizer {
    pub fn new(p: &PolicyParams) -> Self {
        Self {
            trunk: RmsPropState::new(&p.trunk),
            actor: RmsPropState::new(&p.actor),
            critic: RmsPropState::new(&p.critic),
        }
    }
}

/// One clipped RMSProp step on the actor-critic loss.
pub fn a2c_update(
    policy: &mut PolicyParams,
    opt: &mut PolicyOptimizer,
    samples: &[A2cSample<'_>],
    costs: A2cCosts,
    rms: RmsPropConfig,
    max_grad_norm: f64,
) -> Result<A2cStats> {
    let (mut stats, mut g) = a2c_loss_and_grad(policy, samples, costs)?;
    stats.grad_norm = clip_global_norm(&mut [&mut g.trunk, &mut g.actor, &mut g.critic], max_grad_norm);
    if !stats.grad_norm.is_finite() {
        return Err(Error::Numeric("actor-critic gradient is not finite".into()));
    }
    opt.trunk.step(&mut policy.trunk, &g.trunk, rms)?;
    opt.actor.step(&mut policy.actor, &g.actor, rms)?;
    opt.critic.step(&mut policy.critic, &g.critic, rms)?;
    Ok(stats)
}

/// Optimizer state for the trainable bonus models.
#[derive(Debug, Clone, PartialEq)]
struct BonusOptimizers {
    phi: Option<RmsPropState>,
    head: Option<RmsPropState>,
    forward: Option<RmsPropState>,
}

/// One step of the inverse-dynamics (and, for ICM, forward-model) losses on
/// the rollout's transitions. Returns the mean inverse-dynamics loss.
fn update_bonus_models(
    cfg: &TrainConfig,
    models: &mut BonusModels,
    opts: &mut BonusOptimizers,
    rollout: &Rollout,
) -> Result<Option<f64>> {
    let rms = cfg.rms();
    if let Some(rnd) = &mut models.rnd {
        for _ in 0..cfg.rnd_updates {
            for t in rollout.transitions() {
                rnd.queue(t.x_next.to_vec());
            }
            rnd.train_pending(cfg.max_grad_norm)?;
        }
    }
    let Some(Encoder::InverseDynamics { phi, head }) = &mut models.encoder else {
        return Ok(None);
    };
    let n = rollout.len().max(1) as f64;
    let mut g_phi = GradBuffer::zeros_like(phi);
    let mut g_head = GradBuffer::zeros_like(head);
    let mut total = 0.0;
    for t in rollout.transitions() {
        total += idm_loss_and_grad(phi, head, &t.x, t.action, &t.x_next, &mut g_phi, &mut g_head)?;
    }
    let scale = cfg.inverse_coef / n;
    g_phi.scale(scale);
    g_head.scale(scale);
    if cfg.bonus.algo == Algo::Icm {
        let f = models
            .forward
            .as_mut()
            .ok_or_else(|| invalid("icm needs a forward model"))?;
        let mut g_f = GradBuffer::zeros_like(f);
        for t in rollout.transitions() {
            forward_model_loss_and_grad(phi, f, &t.x, t.action, &t.x_next, &mut g_f)?;
        }
        g_f.scale(cfg.forward_coef / n);
        clip_global_norm(&mut [&mut g_f], cfg.max_grad_norm);
        opts.forward.as_mut().unwrap().step(f, &g_f, rms)?;
    }
    clip_global_norm(&mut [&mut g_phi, &mut g_head], cfg.max_grad_norm);
    opts.phi.as_mut().unwrap().step(phi, &g_phi, rms)?;
    opts.head.as_mut().unwrap().step(head, &g_head, rms)?;
    Ok(Some(total / n))
}

/// Recomputes every bonus of `rollout` from the episodic state at rollout
/// start and the model snapshot the actors used. Returns the largest absolute
/// deviation from the recorded bonuses.
pub fn replay_bonuses(
    cfg: &TrainConfig,
    models: &BonusModels,
    mut states: Vec<EpisodeState>,
    rollout: &Rollout,
    trunk: Option<&Mlp>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (state, steps) in states.iter_mut().zip(&rollout.envs) {
        for t in steps {
            let b = step_bonus(
                &cfg.bonus,
                models,
                state,
                StepView {
                    obs_t: &t.obs,
                    x_t: &t.x,
                    action: t.action,
                    obs_next: &t.next_obs,
                    x_next: &t.x_next,
                },
                trunk,
            )?;
            worst = worst.max((b - t.bonus).abs());
            if t.done && cfg.episodic {
                state.reset();
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Re-derive every bonus offline after each rollout.
    pub verify_bonuses: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub bonuses_checked: u64,
    pub max_bonus_deviation: f64,
}

/// Everything the learner owns.
pub struct Learner {
    pub cfg: TrainConfig,
    pub policy: PolicyParams,
    pub models: BonusModels,
    pub slots: Vec<EnvSlot>,
    policy_opt: PolicyOptimizer,
    bonus_opt: BonusOptimizers,
    frozen_trunk: Option<Mlp>,
    normalizer: RunningNormalizer,
    actions: SplitMix64,
    snapshot: BonusModels,
    iterations: u64,
}

/// Result of one collect-and-update iteration.
#[derive(Debug, Clone)]
pub struct Iteration {
    pub rollout: Rollout,
    pub a2c: A2cStats,
    pub idm_loss: Option<f64>,
    /// Largest replay deviation when bonus verification is on.
    pub bonus_deviation: Option<f64>,
}

impl Learner {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = SplitMix64::stream(cfg.seed, 0x9011C7);
        let policy = PolicyParams::new(cfg.env.input_dim(), &cfg.policy_hidden, NUM_ACTIONS, &mut init)?;
        let encoder = match cfg.encoder {
            Some(kind) if cfg.bonus.algo != Algo::None => {
                Some(build_encoder(&cfg.encoder_spec(kind), cfg.seed ^ 0xE3B)?)
            }
            _ => None,
        };
        let feature_dim = encoder.as_ref().map(Encoder::dim).unwrap_or(cfg.feature_dim);
        let forward = if cfg.bonus.algo == Algo::Icm {
            let mut r = SplitMix64::stream(cfg.seed, 0xF0D);
            Some(Mlp::new(
                &[feature_dim + NUM_ACTIONS, cfg.head_hidden, feature_dim],
                Activation::Identity,
                &mut r,
            )?)
        } else {
            None
        };
        let rnd = if cfg.bonus.algo.uses_rnd() {
            Some(RndPair::new(
                cfg.env.input_dim(),
                &cfg.encoder_hidden,
                64,
                cfg.rms(),
                cfg.seed ^ 0x52D,
            )?)
        } else {
            None
        };
        let bonus_opt = match &encoder {
            Some(Encoder::InverseDynamics { phi, head }) => BonusOptimizers {
                phi: Some(RmsPropState::new(phi)),
                head: Some(RmsPropState::new(head)),
                forward: forward.as_ref().map(RmsPropState::new),
            },
            _ => BonusOptimizers {
                phi: None,
                head: None,
                forward: None,
            },
        };
        let slots = (0..cfg.num_envs)
            .map(|i| EnvSlot::new(&cfg, EpisodeState::new(&cfg.bonus, feature_dim)?, i))
            .collect::<Result<Vec<_>>>()?;
        let frozen_trunk = cfg.trunk_frozen.then(|| policy.trunk.clone());
        let models = BonusModels { encoder, forward, rnd };
        Ok(Self {
            policy_opt: PolicyOptimizer::new(&policy),
            actions: SplitMix64::stream(cfg.seed, 0xAC7),
            policy,
            snapshot: models.clone(),
            models,
            slots,
            bonus_opt,
            frozen_trunk,
            normalizer: RunningNormalizer::default(),
            iterations: 0,
            cfg,
        })
    }

    /// Collects one rollout, then takes one actor-critic step and one step on
    /// the bonus models.
    pub fn iterate(&mut self, verify_bonuses: bool) -> Result<Iteration> {
        let cfg = &self.cfg;
        if self.iterations.is_multiple_of(cfg.encoder_update_period) {
            self.snapshot = self.models.clone();
        }
        let trunk = match (&self.snapshot.encoder, &self.frozen_trunk) {
            (Some(Encoder::PolicyTrunk { .. }), Some(frozen)) => Some(frozen.clone()),
            (Some(Encoder::PolicyTrunk { .. }), None) => Some(self.policy.trunk.clone()),
            _ => None,
        };
        let states_before: Option<Vec<EpisodeState>> =
            verify_bonuses.then(|| self.slots.iter().map(|s| s.state.clone()).collect());
        let mut rollout = collect_rollout(
            &self.policy,
            &mut self.slots,
            cfg,
            &self.snapshot,
            trunk.as_ref(),
            &mut self.actions,
        )?;
        let bonus_deviation = match states_before {
            Some(states) => Some(replay_bonuses(cfg, &self.snapshot, states, &rollout, trunk.as_ref())?),
            None => None,
        };
        mix_rewards(&mut rollout, cfg.bonus.beta, &mut self.normalizer, cfg.bonus.normalize);
        if cfg.reward_clip > 0.0 {
            clip_rewards(&mut rollout, cfg.reward_clip);
        }
        let targets = compute_returns_and_advantages(&rollout, cfg.gamma);
        let samples: Vec<A2cSample<'_>> = rollout
            .envs
            .iter()
            .zip(&targets)
            .flat_map(|(steps, tg)| {
                steps.iter().zip(tg).map(|(t, &(ret, adv))| A2cSample {
                    x: &t.x,
                    action: t.action,
                    advantage: adv,
                    ret,
                })
            })
            .collect();
        let costs = A2cCosts {
            entropy_cost: cfg.entropy_cost,
            baseline_cost: cfg.baseline_cost,
        };
        let a2c = a2c_update(
            &mut self.policy,
            &mut self.policy_opt,
            &samples,
            costs,
            cfg.rms(),
            cfg.max_grad_norm,
        )?;
        drop(samples);
        let idm_loss = if cfg.bonus.algo != Algo::None {
            update_bonus_models(cfg, &mut self.models, &mut self.bonus_opt, &rollout)?
        } else {
            None
        };
        self.iterations += 1;
        Ok(Iteration {
            rollout,
            a2c,
            idm_loss,
            bonus_deviation,
        })
    }
}

/// Interval accumulators for the metric stream.
#[derive(Default)]
struct IntervalStats {
    bonus_sum: f64,
    bonus_sq: f64,
    bonus_n: u64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    idm_loss: f64,
    idm_n: u64,
    updates: u64,
}

/// Runs a full training job. Errors end the run with a record flagged failed.
pub fn train(cfg: &TrainConfig) -> RunRecord {
    train_with(cfg, TrainOptions::default(), |_| {}).record
}

pub fn train_with(cfg: &TrainConfig, opts: TrainOptions, mut on_metric: impl FnMut(&MetricRow)) -> TrainOutcome {
    let mut outcome = TrainOutcome {
        record: RunRecord {
            fingerprint: crate::config::fingerprint(cfg),
            seed: cfg.seed,
            status: RunStatus::Completed,
            error: None,
            config: crate::config::to_pairs(cfg),
            metrics: Vec::new(),
        },
        bonuses_checked: 0,
        max_bonus_deviation: 0.0,
    };
    if let Err(e) = run(cfg, opts, &mut outcome, &mut on_metric) {
        outcome.record.status = RunStatus::Failed;
        outcome.record.error = Some(e.to_string());
    }
    outcome
}

fn run(
    cfg: &TrainConfig,
    opts: TrainOptions,
    out: &mut TrainOutcome,
    on_metric: &mut dyn FnMut(&MetricRow),
) -> Result<()> {
    if cfg.total_steps == 0 {
        return Ok(());
    }
    let mut l = Learner::new(cfg.clone())?;
    let per_rollout = cfg.steps_per_rollout();
    let log_every = if cfg.log_interval > 0 {
        cfg.log_interval
    } else {
        (cfg.total_steps / 100).max(per_rollout)
    };
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(100);
    let mut stats = IntervalStats::default();
    let mut steps = 0u64;
    let mut next_log = log_every;
    let mut clock = Instant::now();
    let mut clock_steps = 0u64;

    while steps < cfg.total_steps {
        let it = l.iterate(opts.verify_bonuses)?;
        if let Some(dev) = it.bonus_deviation {
            out.max_bonus_deviation = out.max_bonus_deviation.max(dev);
            out.bonuses_checked += it.rollout.len() as u64;
        }
        for t in it.rollout.transitions() {
            stats.bonus_sum += t.bonus;
            stats.bonus_sq += t.bonus * t.bonus;
            stats.bonus_n += 1;
        }
        for &r in &it.rollout.finished_returns {
            if recent.len() == 100 {
                recent.pop_front();
            }
            recent.push_back(r);
        }
        if let Some(idm) = it.idm_loss {
            stats.idm_loss += idm;
            stats.idm_n += 1;
        }
        stats.policy_loss += it.a2c.policy_loss;
        stats.value_loss += it.a2c.value_loss;
        stats.entropy += it.a2c.entropy;
        stats.updates += 1;
        steps += per_rollout;

        if steps >= next_log || steps >= cfg.total_steps {
            while next_log <= steps {
                next_log += log_every;
            }
            let n = stats.bonus_n.max(1) as f64;
            let mean = stats.bonus_sum / n;
            let u = stats.updates.max(1) as f64;
            let sps = cfg.log_timing.then(|| {
                let dt = clock.elapsed().as_secs_f64().max(1e-9);
                (steps - clock_steps) as f64 / dt
            });
            let row = MetricRow {
                step: steps,
                episode_return_mean: if recent.is_empty() {
                    0.0
                } else {
                    recent.iter().sum::<f64>() / recent.len() as f64
                },
                intrinsic_mean: mean,
                intrinsic_std: (stats.bonus_sq / n - mean * mean).max(0.0).sqrt(),
                policy_loss: stats.policy_loss / u,
                value_loss: stats.value_loss / u,
                entropy: stats.entropy / u,
                idm_loss: (stats.idm_n > 0).then(|| stats.idm_loss / stats.idm_n as f64),
                steps_per_second: sps,
            };
            on_metric(&row);
            out.record.metrics.push(row);
            stats = IntervalStats::default();
            clock = Instant::now();
            clock_steps = steps;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition(reward: f64, bonus: f64, value: f64, done: bool) -> Transition {
        let obs = Observation {
            side: 3,
            grid: vec![],
            x: 1,
            y: 1,
            t: 0,
            timer: false,
            message: 0,
            carrying: false,
            noise: vec![],
        };
        let x: Arc<[f64]> = vec![0.0].into();
        Transition {
            obs: obs.clone(),
            x: x.clone(),
            action: 0,
            log_prob: 0.0,
            value,
            next_obs: obs,
            x_next: x,
            reward,
            bonus,
            mixed: reward,
            done,
        }
    }

    #[test]
    fn mixing_examples() {
        let mut r = Rollout {
            envs: vec![vec![transition(0.0, 2.0, 0.0, false)]],
            bootstrap: vec![0.0],
            finished_returns: vec![],
        };
        let mut norm = RunningNormalizer::default();
        mix_rewards(&mut r, 1.0, &mut norm, false);
        assert_eq!(r.envs[0][0].mixed, 2.0);
        assert_eq!(norm.count(), 0);

        let mut r = Rollout {
            envs: vec![vec![transition(1.0, 5.0, 0.0, false), transition(0.0, 3.0, 0.0, true)]],
            bootstrap: vec![0.0],
            finished_returns: vec![],
        };
        mix_rewards(&mut r, 0.0, &mut norm, true);
        assert_eq!(r.envs[0][0].mixed, 1.0);
        assert_eq!(r.envs[0][1].mixed, 0.0);
    }

    #[test]
    fn constant_bonus_is_floored() {
        let c = 0.5;
        let mut r = Rollout {
            envs: vec![(0..10).map(|_| transition(0.0, c, 0.0, false)).collect()],
            bootstrap: vec![0.0],
            finished_returns: vec![],
        };
        let mut norm = RunningNormalizer::new(1e-8);
        mix_rewards(&mut r, 1.0, &mut norm, true);
        assert_eq!(norm.std(), 1e-8);
        for t in r.transitions() {
            assert!((t.mixed - c / 1e-8).abs() <= 1e-6 * c / 1e-8);
            assert!(t.mixed.is_finite());
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let mut n = RunningNormalizer::new(1e-8);
        xs.iter().for_each(|&x| n.push(x));
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0;
        assert!((n.mean() - mean).abs() < 1e-12);
        assert!((n.std() - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn returns_examples() {
        let mut t = transition(0.0, 0.0, 0.0, true);
        t.mixed = 1.0;
        let r = Rollout {
            envs: vec![vec![t]],
            bootstrap: vec![5.0],
            finished_returns: vec![],
        };
        assert_eq!(compute_returns_and_advantages(&r, 0.99)[0][0].0, 1.0);

        let mut a = transition(0.0, 0.0, 0.0, false);
        let mut b = transition(0.0, 0.0, 0.0, true);
        a.mixed = 0.0;
        b.mixed = 1.0;
        let r = Rollout {
            envs: vec![vec![a, b]],
            bootstrap: vec![123.0],
            finished_returns: vec![],
        };
        let g = compute_returns_and_advantages(&r, 0.99);
        assert!((g[0][0].0 - 0.99).abs() < 1e-15);

        let r = Rollout {
            envs: vec![(0..5).map(|_| transition(0.0, 0.0, 0.0, false)).collect()],
            bootstrap: vec![0.0],
            finished_returns: vec![],
        };
        assert!(compute_returns_and_advantages(&r, 0.99)[0]
            .iter()
            .all(|&(_, a)| a == 0.0));
    }

    #[test]
    fn no_bootstrap_across_episode_end() {
        let mut a = transition(0.0, 0.0, 0.0, true);
        a.mixed = 0.0;
        let mut b = transition(0.0, 0.0, 0.0, false);
        b.mixed = 0.0;
        let r = Rollout {
            envs: vec![vec![a, b]],
            bootstrap: vec![10.0],
            finished_returns: vec![],
        };
        let g = compute_returns_and_advantages(&r, 0.5);
        assert_eq!(g[0][0].0, 0.0);
        assert_eq!(g[0][1].0, 5.0);
    }

    #[test]
    fn zero_step_run_is_empty_and_valid() {
        let mut cfg = TrainConfig::new(Algo::E3b, EnvConfig::parse("multiroom-r2-s7").unwrap());
        cfg.total_steps = 0;
        let rec = train(&cfg);
        assert_eq!(rec.status, RunStatus::Completed);
        assert!(rec.metrics.is_empty());
    }

    #[test]
    fn invalid_gamma_fails_the_run() {
        let mut cfg = TrainConfig::new(Algo::None, EnvConfig::parse("multiroom-r2-s7").unwrap());
        cfg.gamma = 1.0;
        cfg.total_steps = 64;
        let rec = train(&cfg);
        assert_eq!(rec.status, RunStatus::Failed);
        assert!(rec.error.unwrap().contains("gamma"));
    }
}
