//! World state and the fixed-timestep update.

use super::airspace::Airspace;
use super::config::SimConfig;
use super::{Action, AircraftId, AircraftState, ConflictEvent, EpisodeResult, SimError, StateVector, Status};
use crate::geom::Point;
use std::collections::HashMap;
use std::sync::Arc;

/// Pairs with horizontal distance strictly below `separation_nm`.
///
/// Broad phase is a uniform grid with cell size equal to the separation
/// minimum, so only the 3x3 cell neighborhood of each aircraft is scanned.
/// Tests hold this against an all-pairs oracle.
pub fn detect_conflicts(
    time_s: f64,
    positions: &[(AircraftId, Point)],
    separation_nm: f64,
) -> Vec<ConflictEvent> {
    let cell = separation_nm;
    let key = |p: Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, (_, p)) in positions.iter().enumerate() {
        grid.entry(key(*p)).or_default().push(idx);
    }
    let mut events = Vec::new();
    for (idx, &(id_a, pa)) in positions.iter().enumerate() {
        let (cx, cy) = key(pa);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else { continue };
                for &jdx in bucket {
                    if jdx <= idx {
                        continue;
                    }
                    let (id_b, pb) = positions[jdx];
                    let d = pa.dist(pb);
                    if d < separation_nm {
                        let pair = (id_a.min(id_b), id_a.max(id_b));
                        events.push(ConflictEvent { time_s, pair, separation_nm: d });
                    }
                }
            }
        }
    }
    events.sort_by(|a, b| a.pair.cmp(&b.pair));
    events
}

/// Mutable episode state: all aircraft (pending, active and terminal), the
/// clock, and the accumulated conflict log.
#[derive(Debug, Clone)]
pub struct World {
    airspace: Arc<Airspace>,
    cfg: SimConfig,
    time_s: f64,
    steps: u64,
    aircraft: Vec<AircraftState>,
    conflict_log: Vec<ConflictEvent>,
}

impl World {
    /// `schedule` lists (route index, spawn time) entries; ids are assigned
    /// in (time, route) order. Aircraft due at t = 0 start active.
    pub fn new(
        airspace: Arc<Airspace>,
        cfg: SimConfig,
        schedule: &[(usize, f64)],
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        for &(route, t) in schedule {
            if route >= airspace.routes.len() {
                return Err(SimError::Config(format!("schedule references route {route}")));
            }
            if t < 0.0 || !t.is_finite() {
                return Err(SimError::Config(format!("bad spawn time {t}")));
            }
        }
        let mut entries: Vec<(usize, f64)> = schedule.to_vec();
        entries.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let aircraft = entries
            .iter()
            .enumerate()
            .map(|(id, &(route, t))| AircraftState {
                id: id as AircraftId,
                route,
                spawn_time_s: t,
                along_nm: 0.0,
                speed_kn: cfg.initial_speed_kn,
                speed_cmd_kn: cfg.initial_speed_kn,
                status: Status::Pending,
            })
            .collect();
        let mut world =
            Self { airspace, cfg, time_s: 0.0, steps: 0, aircraft, conflict_log: Vec::new() };
        world.activate_due();
        Ok(world)
    }

    fn activate_due(&mut self) {
        for a in &mut self.aircraft {
            if a.status == Status::Pending && a.spawn_time_s <= self.time_s {
                a.status = Status::Active;
            }
        }
    }

    pub fn airspace(&self) -> &Airspace {
        &self.airspace
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn aircraft(&self) -> &[AircraftState] {
        &self.aircraft
    }

    pub fn state(&self, id: AircraftId) -> Option<&AircraftState> {
        self.aircraft.get(id as usize)
    }

    /// Active aircraft ids in ascending order.
    pub fn active_ids(&self) -> Vec<AircraftId> {
        self.aircraft
            .iter()
            .filter(|a| a.status == Status::Active)
            .map(|a| a.id)
            .collect()
    }

    pub fn pending_count(&self) -> usize {
        self.aircraft.iter().filter(|a| a.status == Status::Pending).count()
    }

    /// True once every aircraft reached a terminal status.
    pub fn complete(&self) -> bool {
        self.aircraft
            .iter()
            .all(|a| matches!(a.status, Status::Exited | Status::InConflict))
    }

    pub fn is_terminal(&self, id: AircraftId) -> bool {
        matches!(self.aircraft[id as usize].status, Status::Exited | Status::InConflict)
    }

    pub fn position(&self, id: AircraftId) -> Point {
        let a = &self.aircraft[id as usize];
        self.airspace.routes[a.route].polyline.point_at(a.along_nm)
    }

    /// Distance to the nearest other active aircraft, if any.
    pub fn nearest_active_distance(&self, id: AircraftId) -> Option<f64> {
        let p = self.position(id);
        self.aircraft
            .iter()
            .filter(|a| a.status == Status::Active && a.id != id)
            .map(|a| self.airspace.routes[a.route].polyline.point_at(a.along_nm).dist(p))
            .min_by(|x, y| x.partial_cmp(y).unwrap())
    }

    /// Advance one configured timestep. `actions` must contain exactly one
    /// entry per active aircraft.
    pub fn step(&mut self, actions: &[(AircraftId, Action)]) -> Result<Vec<ConflictEvent>, SimError> {
        self.step_with_dt(actions, self.cfg.dt_s)
    }

    /// Advance by `dt_s` seconds: apply speed commands, integrate kinematics,
    /// mark exits, activate due spawns, then detect conflicts among the
    /// aircraft active at the new time. Conflicting aircraft become terminal.
    pub fn step_with_dt(
        &mut self,
        actions: &[(AircraftId, Action)],
        dt_s: f64,
    ) -> Result<Vec<ConflictEvent>, SimError> {
        if dt_s <= 0.0 {
            return Err(SimError::Contract(format!("dt must be > 0, got {dt_s}")));
        }
        let active = self.active_ids();
        if actions.len() != active.len() {
            return Err(SimError::Contract(format!(
                "{} actions for {} active aircraft",
                actions.len(),
                active.len()
            )));
        }
        let mut seen = vec![false; self.aircraft.len()];
        for &(id, _) in actions {
            let a = self
                .aircraft
                .get(id as usize)
                .ok_or_else(|| SimError::Contract(format!("action for unknown aircraft {id}")))?;
            if a.status != Status::Active {
                return Err(SimError::Contract(format!("action for inactive aircraft {id}")));
            }
            if seen[id as usize] {
                return Err(SimError::Contract(format!("duplicate action for aircraft {id}")));
            }
            seen[id as usize] = true;
        }

        for &(id, action) in actions {
            let a = &mut self.aircraft[id as usize];
            let delta = match action {
                Action::Decelerate => -self.cfg.speed_step_kn,
                Action::Hold => 0.0,
                Action::Accelerate => self.cfg.speed_step_kn,
            };
            a.speed_cmd_kn = (a.speed_cmd_kn + delta).clamp(self.cfg.v_min_kn, self.cfg.v_max_kn);
        }

        let max_dv = self.cfg.accel_kn_per_s * dt_s;
        for a in &mut self.aircraft {
            if a.status != Status::Active {
                continue;
            }
            let dv = (a.speed_cmd_kn - a.speed_kn).clamp(-max_dv, max_dv);
            a.speed_kn += dv;
            a.along_nm += SimConfig::kn_to_nm_per_s(a.speed_kn) * dt_s;
            if a.along_nm >= self.airspace.routes[a.route].arc_length() {
                a.status = Status::Exited;
            }
        }

        self.time_s += dt_s;
        self.steps += 1;
        self.activate_due();

        let positions: Vec<(AircraftId, Point)> = self
            .aircraft
            .iter()
            .filter(|a| a.status == Status::Active)
            .map(|a| (a.id, self.airspace.routes[a.route].polyline.point_at(a.along_nm)))
            .collect();
        let events = detect_conflicts(self.time_s, &positions, self.cfg.separation_nm);
        for ev in &events {
            self.aircraft[ev.pair.0 as usize].status = Status::InConflict;
            self.aircraft[ev.pair.1 as usize].status = Status::InConflict;
        }
        self.conflict_log.extend(events.iter().cloned());
        Ok(events)
    }

    /// Normalized observation for an active aircraft: own along-track
    /// fraction, speed, and distance to the next intersection ahead, then
    /// (distance, speed, distance-to-shared-intersection) for each of the K
    /// nearest active neighbors. Absent slots pad with 1.0.
    pub fn observe(&self, id: AircraftId) -> Result<StateVector, SimError> {
        let own = self
            .aircraft
            .get(id as usize)
            .ok_or_else(|| SimError::Contract(format!("observe unknown aircraft {id}")))?;
        if own.status != Status::Active {
            return Err(SimError::Contract(format!("observe inactive aircraft {id}")));
        }
        let cfg = &self.cfg;
        let route = &self.airspace.routes[own.route];
        let speed_span = cfg.v_max_kn - cfg.v_min_kn;
        let norm_speed = |v: f64| ((v - cfg.v_min_kn) / speed_span).clamp(0.0, 1.0);
        let norm_dist = |d: f64| (d / cfg.dist_norm_nm).clamp(0.0, 1.0);

        let mut features = Vec::with_capacity(cfg.obs_dim());
        features.push((own.along_nm / route.arc_length()).clamp(0.0, 1.0));
        features.push(norm_speed(own.speed_kn));
        let next_int = self
            .airspace
            .intersections_on(own.route)
            .map(|x| x.along_on(own.route))
            .filter(|&along| along >= own.along_nm)
            .min_by(|a, b| a.partial_cmp(b).unwrap());
        features.push(match next_int {
            Some(along) => norm_dist(along - own.along_nm),
            None => 1.0,
        });

        let own_pos = route.polyline.point_at(own.along_nm);
        let mut neighbors: Vec<(f64, &AircraftState)> = self
            .aircraft
            .iter()
            .filter(|a| a.status == Status::Active && a.id != id)
            .map(|a| {
                let p = self.airspace.routes[a.route].polyline.point_at(a.along_nm);
                (own_pos.dist(p), a)
            })
            .collect();
        neighbors.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.id.cmp(&y.1.id)));

        for slot in 0..cfg.k_neighbors {
            match neighbors.get(slot) {
                Some(&(dist, nb)) => {
                    features.push(norm_dist(dist));
                    features.push(norm_speed(nb.speed_kn));
                    // Nearest shared intersection still ahead of both; the
                    // feature is the neighbor's along-track distance to it.
                    let shared = self
                        .airspace
                        .shared_intersections(own.route, nb.route)
                        .filter(|x| {
                            x.along_on(own.route) >= own.along_nm
                                && x.along_on(nb.route) >= nb.along_nm
                        })
                        .min_by(|a, b| {
                            a.along_on(own.route).partial_cmp(&b.along_on(own.route)).unwrap()
                        });
                    features.push(match shared {
                        Some(x) => norm_dist(x.along_on(nb.route) - nb.along_nm),
                        None => 1.0,
                    });
                }
                None => {
                    features.extend_from_slice(&[1.0, 1.0, 1.0]);
                }
            }
        }
        StateVector::new(features)
    }

    /// Reward for an aircraft that acted this step, evaluated after the move:
    /// -1 when it is in a conflict event; otherwise a proximity shortfall
    /// penalty inside the warning radius plus a charge for changing speed.
    pub fn reward(&self, id: AircraftId, action: Action, events: &[ConflictEvent]) -> f64 {
        if events.iter().any(|e| e.pair.0 == id || e.pair.1 == id) {
            return -1.0;
        }
        let mut r = 0.0;
        if self.aircraft[id as usize].status == Status::Active {
            if let Some(d) = self.nearest_active_distance(id) {
                let shortfall = (self.cfg.warning_radius_nm - d).max(0.0);
                r -= self.cfg.proximity_penalty * shortfall;
            }
        }
        if action.is_speed_change() {
            r -= self.cfg.speed_change_penalty;
        }
        r
    }

    /// Final accounting; contract violation if any aircraft is not terminal.
    pub fn result(&self) -> Result<EpisodeResult, SimError> {
        if !self.complete() {
            return Err(SimError::Contract("episode result requested before termination".into()));
        }
        let exited =
            self.aircraft.iter().filter(|a| a.status == Status::Exited).count() as u32;
        Ok(EpisodeResult {
            score: exited,
            conflicts: self.conflict_log.clone(),
            spawned: self.aircraft.len() as u32,
            steps: self.steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::airspace::build_case;
    use super::super::config::GeometryConfig;
    use super::super::CaseId;
    use super::*;

    fn case_a() -> Arc<Airspace> {
        Arc::new(build_case(CaseId::A, GeometryConfig::builtin()).unwrap())
    }

    fn single_aircraft_world(speed: f64) -> World {
        let mut cfg = SimConfig::default();
        cfg.initial_speed_kn = speed;
        World::new(case_a(), cfg, &[(0, 0.0)]).unwrap()
    }

    #[test]
    fn hold_advances_along_track_by_speed_times_dt() {
        let mut w = single_aircraft_world(240.0);
        // 240 kn = 4 NM/min, dt = 12 s -> 0.8 NM per step.
        for _ in 0..12 {
            w.step(&[(0, Action::Hold)]).unwrap();
        }
        let along = w.state(0).unwrap().along_nm;
        assert!((along - 9.6).abs() < 1e-9, "along {along}");
        w.step(&[(0, Action::Hold)]).unwrap();
        assert!((w.state(0).unwrap().along_nm - 10.4).abs() < 1e-9);
    }

    #[test]
    fn constant_speed_integration_is_exact() {
        let mut w = single_aircraft_world(250.0);
        let mut expected = 0.0;
        for _ in 0..40 {
            w.step(&[(0, Action::Hold)]).unwrap();
            expected += 250.0 / 3600.0 * 12.0;
            assert!((w.state(0).unwrap().along_nm - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_airspace_step_advances_time() {
        let mut w = World::new(case_a(), SimConfig::default(), &[]).unwrap();
        let events = w.step(&[]).unwrap();
        assert!(events.is_empty());
        assert_eq!(w.time_s(), 12.0);
    }

    #[test]
    fn speed_tracks_command_at_bounded_rate_within_limits() {
        let mut w = single_aircraft_world(250.0);
        w.step(&[(0, Action::Accelerate)]).unwrap();
        // Command moved to 270, acceleration bound 1 kn/s caps the change at 12.
        let s = w.state(0).unwrap();
        assert_eq!(s.speed_cmd_kn, 270.0);
        assert!((s.speed_kn - 262.0).abs() < 1e-12);
        w.step(&[(0, Action::Hold)]).unwrap();
        assert!((w.state(0).unwrap().speed_kn - 270.0).abs() < 1e-12);
        for _ in 0..10 {
            w.step(&[(0, Action::Accelerate)]).unwrap();
        }
        let s = w.state(0).unwrap();
        assert_eq!(s.speed_cmd_kn, 300.0);
        assert!(s.speed_kn <= 300.0);
    }

    #[test]
    fn aircraft_exits_past_route_end() {
        let mut w = single_aircraft_world(300.0);
        let mut steps = 0;
        while !w.complete() {
            let acts: Vec<_> = w.active_ids().into_iter().map(|id| (id, Action::Hold)).collect();
            w.step(&acts).unwrap();
            steps += 1;
            assert!(steps < 1000);
        }
        assert_eq!(w.state(0).unwrap().status, Status::Exited);
        let r = w.result().unwrap();
        assert_eq!(r.score, 1);
        assert_eq!(r.spawned, 1);
    }

    #[test]
    fn timed_crossing_is_detected_and_terminal() {
        // Crossing at (30, 25): aircraft 0 has 30 NM to it on A1, aircraft 1
        // has 25 NM on A2. Speeds 300 vs 250 kn put both at the crossing near
        // t = 360 s with a closest approach well under 3 NM.
        let cfg = SimConfig::default();
        let mut w = World::new(case_a(), cfg, &[(0, 0.0), (1, 0.0)]).unwrap();
        let mut conflicted = false;
        let mut guard = 0;
        while !w.complete() {
            let acts: Vec<_> = w
                .active_ids()
                .into_iter()
                .map(|id| (id, if id == 0 { Action::Accelerate } else { Action::Hold }))
                .collect();
            let events = w.step(&acts).unwrap();
            if !events.is_empty() {
                conflicted = true;
                for e in &events {
                    assert!(e.separation_nm < w.config().separation_nm);
                    assert_ne!(e.pair.0, e.pair.1);
                }
            }
            guard += 1;
            assert!(guard < 10_000);
        }
        assert!(conflicted, "timed crossing should conflict");
        let r = w.result().unwrap();
        assert_eq!(r.score + r.distinct_conflict_aircraft(), r.spawned);
        assert_eq!(r.score, 0);
    }

    #[test]
    fn detect_conflicts_threshold_is_strict() {
        let mk = |d: f64| {
            vec![
                (0, Point::new(0.0, 0.0)),
                (1, Point::new(d, 0.0)),
            ]
        };
        assert_eq!(detect_conflicts(0.0, &mk(2.9), 3.0).len(), 1);
        assert_eq!(detect_conflicts(0.0, &mk(3.0), 3.0).len(), 0);
        assert!(detect_conflicts(0.0, &[], 3.0).is_empty());
        assert!(detect_conflicts(0.0, &[(7, Point::new(1.0, 1.0))], 3.0).is_empty());
    }

    #[test]
    fn actions_must_cover_exactly_the_active_set() {
        let mut w = single_aircraft_world(250.0);
        assert!(matches!(w.step(&[]), Err(SimError::Contract(_))));
        assert!(matches!(
            w.step(&[(0, Action::Hold), (0, Action::Hold)]),
            Err(SimError::Contract(_))
        ));
        assert!(matches!(w.step(&[(5, Action::Hold)]), Err(SimError::Contract(_))));
        w.step(&[(0, Action::Hold)]).unwrap();
    }

    #[test]
    fn observe_contract_and_normalization() {
        let mut cfg = SimConfig::default();
        cfg.initial_speed_kn = cfg.v_min_kn;
        let mut w = World::new(case_a(), cfg, &[(0, 0.0)]).unwrap();
        // Walk the aircraft to the midpoint of route A1 (60 NM long).
        while w.state(0).unwrap().along_nm < 30.0 - 1e-9 {
            w.step(&[(0, Action::Hold)]).unwrap();
        }
        let along = w.state(0).unwrap().along_nm;
        let obs = w.observe(0).unwrap();
        assert!((obs.values()[0] - along / 60.0).abs() < 1e-12);
        assert_eq!(obs.values()[1], 0.0, "v_min maps to 0");
        // Sole aircraft: every neighbor slot padded with 1.0.
        assert_eq!(&obs.values()[3..], &[1.0; 6]);
        assert!(matches!(w.observe(9), Err(SimError::Contract(_))));
    }

    #[test]
    fn reward_cases() {
        let mut w = single_aircraft_world(250.0);
        w.step(&[(0, Action::Hold)]).unwrap();
        assert_eq!(w.reward(0, Action::Hold, &[]), 0.0);
        assert_eq!(w.reward(0, Action::Accelerate, &[]), -0.01);
        let ev = ConflictEvent { time_s: 0.0, pair: (0, 3), separation_nm: 2.0 };
        assert_eq!(w.reward(0, Action::Hold, &[ev]), -1.0);
    }

    #[test]
    fn result_before_termination_is_a_contract_violation() {
        let w = single_aircraft_world(250.0);
        assert!(matches!(w.result(), Err(SimError::Contract(_))));
    }
}
