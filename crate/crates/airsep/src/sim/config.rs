//! Simulator configuration and the route-geometry table.

use super::SimError;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// All simulator constants. Loaded from the experiment config file; every
/// field is overridable there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Horizontal loss-of-separation threshold (NM).
    pub separation_nm: f64,
    /// Fixed decision timestep (s).
    pub dt_s: f64,
    pub v_min_kn: f64,
    pub v_max_kn: f64,
    /// Commanded speed change per accelerate/decelerate action (kn).
    pub speed_step_kn: f64,
    /// Bound on how fast actual speed tracks the command (kn/s).
    pub accel_kn_per_s: f64,
    pub initial_speed_kn: f64,
    /// Aircraft spawned per route per episode.
    pub per_route_count: u32,
    /// Inter-arrival interval bounds (s); each gap is drawn uniformly.
    pub spawn_interval_s: (f64, f64),
    /// Nearest aircraft included in each observation.
    pub k_neighbors: usize,
    /// Distance normalizer for observation features (NM).
    pub dist_norm_nm: f64,
    /// Proximity shaping starts inside this radius (NM).
    pub warning_radius_nm: f64,
    /// Shaping weight per NM of shortfall below the warning radius.
    pub proximity_penalty: f64,
    /// Penalty for a non-hold action.
    pub speed_change_penalty: f64,
    /// Hard cap on episode length, contract violation when exceeded.
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            separation_nm: 3.0,
            dt_s: 12.0,
            v_min_kn: 200.0,
            v_max_kn: 300.0,
            speed_step_kn: 20.0,
            accel_kn_per_s: 1.0,
            initial_speed_kn: 250.0,
            per_route_count: 10,
            spawn_interval_s: (180.0, 360.0),
            k_neighbors: 2,
            dist_norm_nm: 50.0,
            warning_radius_nm: 10.0,
            proximity_penalty: 0.1,
            speed_change_penalty: 0.01,
            max_steps: 100_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.separation_nm <= 0.0 {
            return err(format!("separation_nm must be > 0, got {}", self.separation_nm));
        }
        if self.dt_s <= 0.0 {
            return err(format!("dt_s must be > 0, got {}", self.dt_s));
        }
        if !(0.0 < self.v_min_kn && self.v_min_kn < self.v_max_kn) {
            return err(format!("need 0 < v_min < v_max, got [{}, {}]", self.v_min_kn, self.v_max_kn));
        }
        if self.speed_step_kn <= 0.0 || self.accel_kn_per_s <= 0.0 {
            return err("speed_step_kn and accel_kn_per_s must be > 0".to_string());
        }
        if !(self.v_min_kn..=self.v_max_kn).contains(&self.initial_speed_kn) {
            return err(format!("initial speed {} outside bounds", self.initial_speed_kn));
        }
        if self.per_route_count == 0 {
            return err("per_route_count must be >= 1".to_string());
        }
        let (lo, hi) = self.spawn_interval_s;
        if !(0.0 < lo && lo <= hi) {
            return err(format!("spawn interval must satisfy 0 < min <= max, got [{lo}, {hi}]"));
        }
        if self.k_neighbors == 0 {
            return err("k_neighbors must be >= 1".to_string());
        }
        if self.dist_norm_nm <= 0.0 || self.warning_radius_nm <= 0.0 {
            return err("distance constants must be > 0".to_string());
        }
        Ok(())
    }

    /// Observation length: 3 own features plus 3 per neighbor slot.
    pub fn obs_dim(&self) -> usize {
        3 + 3 * self.k_neighbors
    }

    /// Knots to NM-per-second.
    pub fn kn_to_nm_per_s(speed_kn: f64) -> f64 {
        speed_kn / 3600.0
    }
}

/// Geometry table: waypoints per route per case, NM units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub version: u32,
    #[serde(rename = "case")]
    pub cases: Vec<CaseGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseGeometry {
    pub id: String,
    #[serde(rename = "route")]
    pub routes: Vec<RouteGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteGeometry {
    pub id: String,
    /// Ordered [x, y] waypoints in NM; first is the entry, last the exit.
    pub waypoints: Vec<[f64; 2]>,
}

static BUILTIN_GEOMETRY: OnceLock<GeometryConfig> = OnceLock::new();

impl GeometryConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("geometry parse: {e}")))
    }

    /// The versioned default table shipped with the crate.
    pub fn builtin() -> &'static GeometryConfig {
        BUILTIN_GEOMETRY.get_or_init(|| {
            GeometryConfig::from_toml(include_str!("../../config/cases.toml"))
                .expect("built-in geometry table is valid")
        })
    }

    pub fn case(&self, id: &str) -> Option<&CaseGeometry> {
        self.cases.iter().find(|c| c.id == id)
    }
}
