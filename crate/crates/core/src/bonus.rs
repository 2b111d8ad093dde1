//! Intrinsic bonuses behind one per-step interface.
//!
//! Episodic statistics (count tables, elliptical trackers) live in
//! [`EpisodeState`], one per environment instance. Learned or random models
//! (encoders, RND nets, forward models) live in [`BonusModels`], which the
//! learner trains and actors read through snapshots.

use std::collections::HashMap;

use crate::ellipse::EllipticalTracker;
use crate::env::{Observation, NUM_ACTIONS};
use crate::error::{invalid, Error, Result};
use crate::nn::{Encoder, EncoderInput, GradBuffer, Mlp, RmsPropConfig, RmsPropState};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyExtractor {
    Identity,
    Position,
    Message,
}

impl KeyExtractor {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "position" => Ok(Self::Position),
            "message" => Ok(Self::Message),
            other => Err(invalid(format!("unknown key extractor {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Position => "position",
            Self::Message => "message",
        }
    }
}

/// Canonical fixed-width little-endian key for the selected channels.
pub fn extract_key(obs: &Observation, extractor: KeyExtractor) -> Vec<u8> {
    match extractor {
        KeyExtractor::Identity => {
            let mut k = Vec::with_capacity(obs.grid.len() + 16 + 8 * obs.noise.len());
            k.extend(obs.grid.iter().map(|&c| c as u8));
            k.extend_from_slice(&(obs.x as u16).to_le_bytes());
            k.extend_from_slice(&(obs.y as u16).to_le_bytes());
            k.push(u8::from(obs.carrying));
            k.push(obs.message);
            if obs.timer {
                k.extend_from_slice(&obs.t.to_le_bytes());
            }
            for v in &obs.noise {
                k.extend_from_slice(&v.to_le_bytes());
            }
            k
        }
        KeyExtractor::Position => {
            let mut k = Vec::with_capacity(4);
            k.extend_from_slice(&(obs.x as u16).to_le_bytes());
            k.extend_from_slice(&(obs.y as u16).to_le_bytes());
            k
        }
        KeyExtractor::Message => vec![obs.message],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountForm {
    /// `1/√N`
    InverseSqrt,
    /// `I[N = 1]`
    FirstVisit,
}

/// Within-episode visit counts `N_e` under one key extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicCountTable {
    extractor: KeyExtractor,
    counts: HashMap<Vec<u8>, u32>,
}

impl EpisodicCountTable {
    pub fn new(extractor: KeyExtractor) -> Self {
        Self {
            extractor,
            counts: HashMap::new(),
        }
    }

    pub fn extractor(&self) -> KeyExtractor {
        self.extractor
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, obs: &Observation) -> u32 {
        self.counts.get(&extract_key(obs, self.extractor)).copied().unwrap_or(0)
    }

    /// Increments the count of `obs` and returns the new value.
    pub fn visit(&mut self, obs: &Observation) -> u32 {
        let c = self.counts.entry(extract_key(obs, self.extractor)).or_insert(0);
        *c += 1;
        *c
    }
}

/// Counts the visit to `obs`, then returns `1/√N` or `I[N = 1]`.
pub fn count_bonus(table: &mut EpisodicCountTable, obs: &Observation, form: CountForm) -> f64 {
    let n = table.visit(obs);
    count_term(n, form)
}

fn count_term(n: u32, form: CountForm) -> f64 {
    match form {
        CountForm::InverseSqrt => 1.0 / (n as f64).sqrt(),
        CountForm::FirstVisit => {
            if n == 1 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Random network distillation: a frozen random target and a predictor
/// regressed onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct RndPair {
    pub target: Mlp,
    pub predictor: Mlp,
    pub optimizer: RmsPropState,
    pub opt_cfg: RmsPropConfig,
    pending: Vec<Vec<f64>>,
}

impl RndPair {
    pub fn new(input_dim: usize, hidden: &[usize], out_dim: usize, opt_cfg: RmsPropConfig, seed: u64) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(out_dim);
        let mut trng = SplitMix64::stream(seed, 0x7A46E7);
        let mut prng = SplitMix64::stream(seed, 0x94ED);
        let target = Mlp::new(&sizes, crate::nn::Activation::Identity, &mut trng)?;
        let predictor = Mlp::new(&sizes, crate::nn::Activation::Identity, &mut prng)?;
        let optimizer = RmsPropState::new(&predictor);
        Ok(Self {
            target,
            predictor,
            optimizer,
            opt_cfg,
            pending: Vec::new(),
        })
    }

    /// `‖target(x) − predictor(x)‖²` without side effects.
    pub fn error(&self, x: &[f64]) -> Result<f64> {
        let t = self.target.forward(x)?;
        let p = self.predictor.forward(x)?;
        let e: f64 = t.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        if !e.is_finite() {
            return Err(Error::Numeric("RND error is not finite".into()));
        }
        Ok(e)
    }

    pub fn queue(&mut self, x: Vec<f64>) {
        self.pending.push(x);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// One RMSProp step on the mean squared error over the queued inputs,
    /// then clears the queue. Returns the mean loss before the step.
    pub fn train_pending(&mut self, max_grad_norm: f64) -> Result<f64> {
        if self.pending.is_empty() {
            return Ok(0.0);
        }
        let batch = std::mem::take(&mut self.pending);
        let mut grads = GradBuffer::zeros_like(&self.predictor);
        let mut total = 0.0;
        for x in &batch {
            let t = self.target.forward(x)?;
            let trace = self.predictor.forward_trace(x)?;
            let diff: Vec<f64> = trace.output().iter().zip(&t).map(|(p, t)| p - t).collect();
            total += diff.iter().map(|d| d * d).sum::<f64>();
            let g: Vec<f64> = diff.iter().map(|d| 2.0 * d / batch.len() as f64).collect();
            self.predictor.backward(&trace, &g, &mut grads, false);
        }
        crate::nn::clip_global_norm(&mut [&mut grads], max_grad_norm);
        self.optimizer.step(&mut self.predictor, &grads, self.opt_cfg)?;
        Ok(total / batch.len() as f64)
    }
}

/// RND bonus at `x`; `x` is queued for the predictor's next regression step.
pub fn rnd_bonus(pair: &mut RndPair, x: &[f64]) -> Result<f64> {
    let e = pair.error(x)?;
    pair.queue(x.to_vec());
    Ok(e)
}

/// `[b_RND(s') − α·b_RND(s)]₊ · I[N_e(s') = 1]`; counts the visit to `s'`.
pub fn noveld_bonus(
    pair: &RndPair,
    table: &mut EpisodicCountTable,
    obs_next: &Observation,
    x_t: &[f64],
    x_next: &[f64],
    alpha: f64,
) -> Result<f64> {
    let gate = count_bonus(table, obs_next, CountForm::FirstVisit);
    let diff = pair.error(x_next)? - alpha * pair.error(x_t)?;
    Ok(diff.max(0.0) * gate)
}

/// `‖φ(s') − φ(s)‖₂ · 1/√N_e(s')`; counts the visit to `s'`.
pub fn ride_bonus(phi_t: &[f64], phi_next: &[f64], table: &mut EpisodicCountTable, obs_next: &Observation) -> f64 {
    let dist = phi_t
        .iter()
        .zip(phi_next)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    dist * count_bonus(table, obs_next, CountForm::InverseSqrt)
}

/// Forward-model prediction error `½‖f(φ(s), a) − φ(s')‖²`.
pub fn icm_bonus(phi: &Mlp, forward: &Mlp, x_t: &[f64], action: usize, x_next: &[f64]) -> Result<f64> {
    let z0 = phi.forward(x_t)?;
    let z1 = phi.forward(x_next)?;
    let num_actions = forward.input_dim() - z0.len();
    if action >= num_actions {
        return Err(invalid(format!("action {action} out of range")));
    }
    let mut input = z0;
    input.extend((0..num_actions).map(|a| if a == action { 1.0 } else { 0.0 }));
    let pred = forward.forward(&input)?;
    Ok(0.5 * pred.iter().zip(&z1).map(|(p, t)| (p - t) * (p - t)).sum::<f64>())
}

/// Bonus of `φ(s')` against the pre-update tracker, then absorbs `φ(s')`.
pub fn e3b_step_bonus(tracker: &mut EllipticalTracker, phi_next: &[f64]) -> Result<f64> {
    tracker.update(phi_next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// No intrinsic reward (plain actor-critic).
    None,
    E3b,
    NovelD,
    Ride,
    Icm,
    Rnd,
    Count,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "e3b" => Ok(Self::E3b),
            "noveld" => Ok(Self::NovelD),
            "ride" => Ok(Self::Ride),
            "icm" => Ok(Self::Icm),
            "rnd" => Ok(Self::Rnd),
            "count" => Ok(Self::Count),
            other => Err(invalid(format!("unknown algo {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::E3b => "e3b",
            Self::NovelD => "noveld",
            Self::Ride => "ride",
            Self::Icm => "icm",
            Self::Rnd => "rnd",
            Self::Count => "count",
        }
    }

    pub fn uses_counts(self) -> bool {
        matches!(self, Self::NovelD | Self::Ride | Self::Count)
    }

    pub fn uses_rnd(self) -> bool {
        matches!(self, Self::NovelD | Self::Rnd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonusConfig {
    pub algo: Algo,
    pub extractor: KeyExtractor,
    pub alpha: f64,
    pub beta: f64,
    pub ridge: f64,
    pub normalize: bool,
    pub count_form: CountForm,
}

impl BonusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(invalid(format!("alpha must be ≥ 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(invalid(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        if self.algo == Algo::E3b && !(self.ridge > 0.0) {
            return Err(invalid(format!("ridge must be > 0 for e3b, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Models the bonuses read. Trained by the learner, read by actors.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusModels {
    pub encoder: Option<Encoder>,
    pub forward: Option<Mlp>,
    pub rnd: Option<RndPair>,
}

/// Per-environment episodic state.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub tracker: Option<EllipticalTracker>,
    pub table: Option<EpisodicCountTable>,
}

impl EpisodeState {
    pub fn new(cfg: &BonusConfig, feature_dim: usize) -> Result<Self> {
        let tracker = match cfg.algo {
            Algo::E3b => Some(EllipticalTracker::new(feature_dim, cfg.ridge)?),
            _ => None,
        };
        let table = cfg.algo.uses_counts().then(|| EpisodicCountTable::new(cfg.extractor));
        Ok(Self { tracker, table })
    }

    pub fn reset(&mut self) {
        if let Some(t) = &mut self.tracker {
            t.reset();
        }
        if let Some(t) = &mut self.table {
            t.clear();
        }
    }
}

/// One transition as seen by a bonus.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub obs_t: &'a Observation,
    pub x_t: &'a [f64],
    pub action: usize,
    pub obs_next: &'a Observation,
    pub x_next: &'a [f64],
}

fn features(encoder: &Encoder, obs: &Observation, x: &[f64], trunk: Option<&Mlp>) -> Result<Vec<f64>> {
    Ok(encoder
        .encode(
            EncoderInput {
                dense: x,
                key: obs.position_index(),
            },
            trunk,
        )?
        .into_inner())
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| invalid(format!("bonus needs a {what}")))
}

/// Raw (unscaled, unnormalized) bonus for one transition. Updates the
/// episodic state; never touches model parameters.
pub fn step_bonus(
    cfg: &BonusConfig,
    models: &BonusModels,
    state: &mut EpisodeState,
    step: StepView<'_>,
    trunk: Option<&Mlp>,
) -> Result<f64> {
    let b = match cfg.algo {
        Algo::None => 0.0,
        Algo::E3b => {
            let enc = need(&models.encoder, "feature encoder")?;
            let phi = features(enc, step.obs_next, step.x_next, trunk)?;
            let tracker = state
                .tracker
                .as_mut()
                .ok_or_else(|| invalid("e3b needs an elliptical tracker"))?;
            e3b_step_bonus(tracker, &phi)?
        }
        Algo::NovelD => {
            let pair = need(&models.rnd, "RND pair")?;
            let table = state
                .table
                .as_mut()
                .ok_or_else(|| invalid("noveld needs a count table"))?;
            noveld_bonus(pair, table, step.obs_next, step.x_t, step.x_next, cfg.alpha)?
        }
        Algo::Ride => {
            let enc = need(&models.encoder, "feature encoder")?;
            let z0 = features(enc, step.obs_t, step.x_t, trunk)?;
            let z1 = features(enc, step.obs_next, step.x_next, trunk)?;
            let table = state
                .table
                .as_mut()
                .ok_or_else(|| invalid("ride needs a count table"))?;
            ride_bonus(&z0, &z1, table, step.obs_next)
        }
        Algo::Icm => {
            let phi = need(&models.encoder, "feature encoder")?
                .feature_net()
                .ok_or_else(|| invalid("icm needs a network encoder"))?;
            let f = need(&models.forward, "forward model")?;
            icm_bonus(phi, f, step.x_t, step.action, step.x_next)?
        }
        Algo::Rnd => need(&models.rnd, "RND pair")?.error(step.x_next)?,
        Algo::Count => {
            let table = state
                .table
                .as_mut()
                .ok_or_else(|| invalid("count needs a count table"))?;
            count_bonus(table, step.obs_next, cfg.count_form)
        }
    };
    if !b.is_finite() || b < 0.0 {
        return Err(Error::Numeric(format!("{} bonus is {b}", cfg.algo.name())));
    }
    Ok(b)
}

/// Number of actions the bonus heads are built for.
pub const BONUS_ACTIONS: usize = NUM_ACTIONS;
