//! Case airspaces: routes plus the intersections derived from their
//! polylines.

use super::config::GeometryConfig;
use super::{CaseId, SimError};
use crate::geom::{segment_hit, Point, Polyline, SegmentHit};
use serde::{Deserialize, Serialize};

/// Tolerance for deduplicating intersection points and for the
/// point-on-both-routes invariant (NM).
pub const INTERSECTION_TOL_NM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub id: String,
    pub polyline: Polyline,
}

impl RouteSpec {
    pub fn entry_point(&self) -> Point {
        self.polyline.first()
    }

    pub fn exit_point(&self) -> Point {
        self.polyline.last()
    }

    pub fn arc_length(&self) -> f64 {
        self.polyline.arc_length()
    }
}

/// A crossing or merge point between two routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    /// Route indices, lower first.
    pub routes: (usize, usize),
    /// Along-track positions of the point on each route (NM).
    pub along: (f64, f64),
    pub point: Point,
}

impl Intersection {
    /// Along-track position on route `r`, which must be one of the pair.
    pub fn along_on(&self, r: usize) -> f64 {
        if r == self.routes.0 {
            self.along.0
        } else {
            debug_assert_eq!(r, self.routes.1);
            self.along.1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airspace {
    pub case: CaseId,
    pub routes: Vec<RouteSpec>,
    pub intersections: Vec<Intersection>,
}

impl Airspace {
    /// Build from routes, deriving intersections from the polylines.
    pub fn from_routes(case: CaseId, routes: Vec<RouteSpec>) -> Result<Self, SimError> {
        if routes.is_empty() {
            return Err(SimError::Config(format!("case {case} has no routes")));
        }
        let mut intersections = Vec::new();
        for i in 0..routes.len() {
            for j in i + 1..routes.len() {
                intersections.extend(route_pair_intersections(i, &routes[i], j, &routes[j]));
            }
        }
        intersections.sort_by(|a, b| {
            (a.routes, a.along.0)
                .partial_cmp(&(b.routes, b.along.0))
                .unwrap()
        });
        let space = Self { case, routes, intersections };
        space.validate()?;
        Ok(space)
    }

    /// Check the geometric invariants: every intersection point lies on both
    /// referenced routes within [`INTERSECTION_TOL_NM`].
    pub fn validate(&self) -> Result<(), SimError> {
        for x in &self.intersections {
            for r in [x.routes.0, x.routes.1] {
                let d = self.routes[r].polyline.dist_to_point(x.point);
                if d >= INTERSECTION_TOL_NM {
                    return Err(SimError::Config(format!(
                        "intersection {:?} lies {d} NM off route {r}",
                        x.point
                    )));
                }
            }
            if x.routes.0 == x.routes.1 {
                return Err(SimError::Config("self-intersection recorded".to_string()));
            }
        }
        Ok(())
    }

    /// Intersections touching route `r`, in arbitrary stored order.
    pub fn intersections_on(&self, r: usize) -> impl Iterator<Item = &Intersection> {
        self.intersections
            .iter()
            .filter(move |x| x.routes.0 == r || x.routes.1 == r)
    }

    /// Intersections shared by the route pair (order-insensitive).
    pub fn shared_intersections(&self, a: usize, b: usize) -> impl Iterator<Item = &Intersection> {
        let key = (a.min(b), a.max(b));
        self.intersections.iter().filter(move |x| x.routes == key)
    }
}

fn route_pair_intersections(
    i: usize,
    a: &RouteSpec,
    j: usize,
    b: &RouteSpec,
) -> Vec<Intersection> {
    let mut found: Vec<Intersection> = Vec::new();
    let pa = &a.polyline;
    let pb = &b.polyline;
    for sa in 0..pa.segment_count() {
        let (a0, a1) = (pa.points()[sa], pa.points()[sa + 1]);
        let seg_a_len = a0.dist(a1);
        for sb in 0..pb.segment_count() {
            let (b0, b1) = (pb.points()[sb], pb.points()[sb + 1]);
            let seg_b_len = b0.dist(b1);
            let (t, u) = match segment_hit(a0, a1, b0, b1) {
                Some(SegmentHit::Crossing { t, u }) => (t, u),
                Some(SegmentHit::OverlapStart { t, u }) => (t, u),
                None => continue,
            };
            let point = Point::new(a0.x + t * (a1.x - a0.x), a0.y + t * (a1.y - a0.y));
            let along_a = pa.segment_start_len(sa) + t * seg_a_len;
            let along_b = pb.segment_start_len(sb) + u * seg_b_len;
            if found.iter().any(|x| x.point.dist(point) < INTERSECTION_TOL_NM) {
                continue;
            }
            found.push(Intersection { routes: (i, j), along: (along_a, along_b), point });
        }
    }
    found
}

/// Build the airspace for a case from a geometry table.
pub fn build_case(case: CaseId, geometry: &GeometryConfig) -> Result<Airspace, SimError> {
    let geom = geometry
        .case(&case.to_string())
        .ok_or_else(|| SimError::Config(format!("case {case} missing from geometry table")))?;
    let mut routes = Vec::with_capacity(geom.routes.len());
    for r in &geom.routes {
        let points = r.waypoints.iter().map(|w| Point::new(w[0], w[1])).collect();
        let polyline = Polyline::new(points)
            .map_err(|e| SimError::Config(format!("route {}: {e}", r.id)))?;
        routes.push(RouteSpec { id: r.id.clone(), polyline });
    }
    Airspace::from_routes(case, routes)
}
