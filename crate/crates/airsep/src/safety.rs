//! Execution-time safety module (DODA: dropout + data augmentation).
//!
//! Wraps a trained policy without retraining it. The model-uncertainty side
//! runs n dropout forward passes per state and turns the pass actions into an
//! empirical distribution; the state-uncertainty side evaluates m copies of
//! the state disturbed by clipped uniform noise and aggregates by majority
//! vote (`da1`) or by sampling the minimum-entropy distribution (`da2`). The
//! combined modes nest the dropout ensemble inside the disturbed-state loop.

use crate::net::{forward, sample_mask, ActionDistribution, NetError, NetworkParams};
use crate::rng::DecisionRngs;
use crate::sim::{Action, AircraftId, CaseId, Controller, SimError, StateVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Execution modes. The strings are the CLI and result-file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DodaMode {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "do")]
    Do,
    #[serde(rename = "da1")]
    Da1,
    #[serde(rename = "da2")]
    Da2,
    #[serde(rename = "da1do")]
    Da1Do,
    #[serde(rename = "da2do")]
    Da2Do,
}

impl DodaMode {
    pub const ALL: [DodaMode; 6] = [
        DodaMode::Baseline,
        DodaMode::Da1,
        DodaMode::Da2,
        DodaMode::Do,
        DodaMode::Da1Do,
        DodaMode::Da2Do,
    ];

    pub fn uses_dropout(self) -> bool {
        matches!(self, DodaMode::Do | DodaMode::Da1Do | DodaMode::Da2Do)
    }

    pub fn uses_augmentation(self) -> bool {
        matches!(self, DodaMode::Da1 | DodaMode::Da2 | DodaMode::Da1Do | DodaMode::Da2Do)
    }
}

impl fmt::Display for DodaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DodaMode::Baseline => "baseline",
            DodaMode::Do => "do",
            DodaMode::Da1 => "da1",
            DodaMode::Da2 => "da2",
            DodaMode::Da1Do => "da1do",
            DodaMode::Da2Do => "da2do",
        };
        f.write_str(s)
    }
}

impl FromStr for DodaMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "baseline" => Ok(DodaMode::Baseline),
            "do" => Ok(DodaMode::Do),
            "da1" => Ok(DodaMode::Da1),
            "da2" => Ok(DodaMode::Da2),
            "da1do" => Ok(DodaMode::Da1Do),
            "da2do" => Ok(DodaMode::Da2Do),
            other => Err(SimError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// How a dropout pass is reduced to one action before counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassRule {
    /// Argmax of the pass's softmax; mask variation alone drives the spread,
    /// so zero dropout collapses to a point mass.
    #[serde(rename = "argmax")]
    Argmax,
    /// Categorical sample from the pass's softmax; with it, every mode at
    /// m = n = 1, zero noise and zero dropout reduces exactly to the
    /// baseline's one-pass categorical draw.
    #[serde(rename = "sample")]
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DodaConfig {
    pub mode: DodaMode,
    /// Number of disturbed states.
    pub m: u32,
    /// Number of dropout forward passes per state.
    pub n: u32,
    pub noise_low: f64,
    pub noise_high: f64,
    pub p_drop: f64,
    pub pass_rule: PassRule,
}

impl Default for DodaConfig {
    fn default() -> Self {
        Self {
            mode: DodaMode::Baseline,
            m: 5,
            n: 5,
            noise_low: -0.1,
            noise_high: 0.1,
            p_drop: 0.2,
            pass_rule: PassRule::Argmax,
        }
    }
}

impl DodaConfig {
    pub fn with_mode(self, mode: DodaMode) -> Self {
        Self { mode, ..self }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.m == 0 || self.n == 0 {
            return Err(SimError::Config("m and n must be >= 1".to_string()));
        }
        if self.noise_low > self.noise_high {
            return Err(SimError::Config(format!(
                "noise bounds inverted: [{}, {}]",
                self.noise_low, self.noise_high
            )));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(SimError::Config(format!("p_drop must be in [0, 1), got {}", self.p_drop)));
        }
        Ok(())
    }
}

/// clip(s + eps) with eps drawn i.i.d. per component from
/// U(noise_low, noise_high); output components stay in [0, 1].
pub fn perturb_state(
    s: &StateVector,
    noise_low: f64,
    noise_high: f64,
    rng: &mut ChaCha12Rng,
) -> StateVector {
    let span = noise_high - noise_low;
    let values: Vec<f64> = s
        .values()
        .iter()
        .map(|&v| {
            let eps = noise_low + rng.gen::<f64>() * span;
            (v + eps).clamp(0.0, 1.0)
        })
        .collect();
    StateVector::new(values).expect("clipped perturbation stays in [0,1]")
}

/// Empirical action distribution over n dropout forward passes, each with an
/// independent mask: P(a) = (1/n) sum_i 1_a(pass_i action).
pub fn mc_action_distribution(
    params: &NetworkParams,
    s: &StateVector,
    n: u32,
    p_drop: f64,
    pass_rule: PassRule,
    mask_rng: &mut ChaCha12Rng,
    policy_rng: &mut ChaCha12Rng,
) -> Result<ActionDistribution, NetError> {
    let sizes = params.sizes;
    let mut actions = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mask = sample_mask(sizes.h1, sizes.h2, p_drop, mask_rng)?;
        let out = forward(params, s.values(), Some(&mask))?;
        let a = match pass_rule {
            PassRule::Argmax => out.action_probs.argmax(),
            PassRule::Sample => out.action_probs.sample(policy_rng),
        };
        actions.push(a);
    }
    Ok(ActionDistribution::from_counts(&actions, sizes.actions))
}

/// Majority vote; ties are broken uniformly at random among the leaders.
pub fn da1_select(actions: &[usize], n_actions: usize, rng: &mut ChaCha12Rng) -> usize {
    assert!(!actions.is_empty(), "da1_select needs at least one action");
    let mut counts = vec![0usize; n_actions];
    for &a in actions {
        counts[a] += 1;
    }
    let best = *counts.iter().max().unwrap();
    let leaders: Vec<usize> =
        (0..n_actions).filter(|&a| counts[a] == best).collect();
    let pick = if leaders.len() == 1 { leaders[0] } else { leaders[rng.gen_range(0..leaders.len())] };
    debug_assert!(counts.iter().all(|&c| c <= counts[pick]));
    pick
}

/// Sample from the distribution with minimal entropy; entropy ties keep the
/// lowest index.
pub fn da2_select(distributions: &[ActionDistribution], rng: &mut ChaCha12Rng) -> usize {
    assert!(!distributions.is_empty(), "da2_select needs at least one distribution");
    let mut best = 0;
    let mut best_h = distributions[0].entropy();
    for (i, d) in distributions.iter().enumerate().skip(1) {
        let h = d.entropy();
        if h < best_h {
            best = i;
            best_h = h;
        }
    }
    distributions[best].sample(rng)
}

/// Select one action under the configured mode.
pub fn doda_select(
    params: &NetworkParams,
    s: &StateVector,
    cfg: &DodaConfig,
    rngs: &mut DecisionRngs,
) -> Result<usize, NetError> {
    let n_actions = params.sizes.actions;
    match cfg.mode {
        DodaMode::Baseline => {
            let out = forward(params, s.values(), None)?;
            Ok(out.action_probs.sample(&mut rngs.policy))
        }
        DodaMode::Do => {
            let dist = mc_action_distribution(
                params,
                s,
                cfg.n,
                cfg.p_drop,
                cfg.pass_rule,
                &mut rngs.mask,
                &mut rngs.policy,
            )?;
            Ok(dist.sample(&mut rngs.policy))
        }
        DodaMode::Da1 => {
            let mut votes = Vec::with_capacity(cfg.m as usize);
            for _ in 0..cfg.m {
                let sj = perturb_state(s, cfg.noise_low, cfg.noise_high, &mut rngs.noise);
                let out = forward(params, sj.values(), None)?;
                votes.push(out.action_probs.sample(&mut rngs.policy));
            }
            Ok(da1_select(&votes, n_actions, &mut rngs.policy))
        }
        DodaMode::Da2 => {
            let mut dists = Vec::with_capacity(cfg.m as usize);
            for _ in 0..cfg.m {
                let sj = perturb_state(s, cfg.noise_low, cfg.noise_high, &mut rngs.noise);
                dists.push(forward(params, sj.values(), None)?.action_probs);
            }
            Ok(da2_select(&dists, &mut rngs.policy))
        }
        DodaMode::Da1Do => {
            let mut votes = Vec::with_capacity(cfg.m as usize);
            for _ in 0..cfg.m {
                let sj = perturb_state(s, cfg.noise_low, cfg.noise_high, &mut rngs.noise);
                let dist = mc_action_distribution(
                    params,
                    &sj,
                    cfg.n,
                    cfg.p_drop,
                    cfg.pass_rule,
                    &mut rngs.mask,
                    &mut rngs.policy,
                )?;
                votes.push(dist.sample(&mut rngs.policy));
            }
            Ok(da1_select(&votes, n_actions, &mut rngs.policy))
        }
        DodaMode::Da2Do => {
            let mut dists = Vec::with_capacity(cfg.m as usize);
            for _ in 0..cfg.m {
                let sj = perturb_state(s, cfg.noise_low, cfg.noise_high, &mut rngs.noise);
                dists.push(mc_action_distribution(
                    params,
                    &sj,
                    cfg.n,
                    cfg.p_drop,
                    cfg.pass_rule,
                    &mut rngs.mask,
                    &mut rngs.policy,
                )?);
            }
            Ok(da2_select(&dists, &mut rngs.policy))
        }
    }
}

/// Identifies which stream family a policy draws from, so that evaluation
/// episodes stay paired across modes.
#[derive(Debug, Clone, Copy)]
pub struct DecisionScope {
    pub master_seed: u64,
    pub context: u64,
    pub case: CaseId,
    pub episode: u64,
}

impl DecisionScope {
    pub fn rngs(&self, step: u64, aircraft: AircraftId) -> DecisionRngs {
        DecisionRngs::derive(
            self.master_seed,
            &[self.context, self.case.tag(), self.episode, step, aircraft as u64],
        )
    }
}

/// Episode controller running a frozen policy under a safety mode.
pub struct DodaPolicy {
    params: Arc<NetworkParams>,
    cfg: DodaConfig,
    scope: DecisionScope,
}

impl DodaPolicy {
    pub fn new(params: Arc<NetworkParams>, cfg: DodaConfig, scope: DecisionScope) -> Self {
        Self { params, cfg, scope }
    }
}

impl Controller for DodaPolicy {
    fn act(&mut self, step: u64, id: AircraftId, obs: &StateVector) -> Action {
        let mut rngs = self.scope.rngs(step, id);
        let idx = doda_select(&self.params, obs, &self.cfg, &mut rngs)
            .expect("validated config and matching dimensions");
        Action::from_index(idx).expect("action index in range")
    }
}
