//! Structured-airspace multi-agent simulator.
//!
//! Routes with crossings and merge points, aircraft spawned by inter-arrival
//! interval, speed-command kinematics on a fixed timestep, loss-of-separation
//! detection, normalized observations, and episode scoring. Everything is
//! deterministic given (config, seed).

mod airspace;
mod config;
mod episode;
mod world;

pub use airspace::{build_case, Airspace, Intersection, RouteSpec};
pub use config::{GeometryConfig, SimConfig};
pub use episode::{run_episode, spawn_schedule, Controller, HoldController};
pub use world::{detect_conflicts, World};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Case studies: `A` is the training sector, `B`/`C`/`D` are the unseen
/// validation sectors with more routes and interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseId {
    A,
    B,
    C,
    D,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::A, CaseId::B, CaseId::C, CaseId::D];

    /// Stable tag for RNG substream derivation.
    pub fn tag(self) -> u64 {
        match self {
            CaseId::A => 0,
            CaseId::B => 1,
            CaseId::C => 2,
            CaseId::D => 3,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseId::A => "A",
            CaseId::B => "B",
            CaseId::C => "C",
            CaseId::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for CaseId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(CaseId::A),
            "B" | "b" => Ok(CaseId::B),
            "C" | "c" => Ok(CaseId::C),
            "D" | "d" => Ok(CaseId::D),
            other => Err(SimError::Config(format!("unknown case id {other:?}"))),
        }
    }
}

pub type AircraftId = u32;

/// Discrete speed advisories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Decelerate,
    Hold,
    Accelerate,
}

impl Action {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Action::Decelerate => 0,
            Action::Hold => 1,
            Action::Accelerate => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        match i {
            0 => Some(Action::Decelerate),
            1 => Some(Action::Hold),
            2 => Some(Action::Accelerate),
            _ => None,
        }
    }

    pub fn is_speed_change(self) -> bool {
        !matches!(self, Action::Hold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pending,
    Active,
    Exited,
    InConflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub id: AircraftId,
    pub route: usize,
    pub spawn_time_s: f64,
    pub along_nm: f64,
    pub speed_kn: f64,
    pub speed_cmd_kn: f64,
    pub status: Status,
}

/// Normalized observation; every component lies in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimError> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(SimError::Contract(format!(
                    "state component {i} out of [0,1]: {v}"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A loss of separation between two aircraft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub time_s: f64,
    /// Involved aircraft, lower id first.
    pub pair: (AircraftId, AircraftId),
    pub separation_nm: f64,
}

/// Outcome of a finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Aircraft that exited the sector without any conflict.
    pub score: u32,
    pub conflicts: Vec<ConflictEvent>,
    pub spawned: u32,
    pub steps: u64,
}

impl EpisodeResult {
    /// Number of distinct aircraft appearing in any conflict event.
    pub fn distinct_conflict_aircraft(&self) -> u32 {
        let mut ids: Vec<AircraftId> =
            self.conflicts.iter().flat_map(|c| [c.pair.0, c.pair.1]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len() as u32
    }
}

/// Score of a finished episode: spawned aircraft minus the distinct aircraft
/// involved in at least one conflict.
pub fn episode_score(result: &EpisodeResult) -> u32 {
    result.spawned - result.distinct_conflict_aircraft()
}
