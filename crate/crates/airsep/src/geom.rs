//! 2D geometry for route polylines. All coordinates are in nautical miles.

use serde::{Deserialize, Serialize};

/// Parameter tolerance when deciding whether a segment intersection lies
/// within the segment endpoints.
const PARAM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

fn dot(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * bx + ay * by
}

/// How two directed segments meet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentHit {
    /// Single crossing point at parameter `t` on segment a, `u` on segment b.
    Crossing { t: f64, u: f64 },
    /// Segments are collinear and overlap; parameters locate the start of the
    /// overlap (the merge point when both segments run the same way).
    OverlapStart { t: f64, u: f64 },
}

/// Intersection of segments `a0..a1` and `b0..b1`, endpoints inclusive.
pub fn segment_hit(a0: Point, a1: Point, b0: Point, b1: Point) -> Option<SegmentHit> {
    let rx = a1.x - a0.x;
    let ry = a1.y - a0.y;
    let sx = b1.x - b0.x;
    let sy = b1.y - b0.y;
    let qpx = b0.x - a0.x;
    let qpy = b0.y - a0.y;

    let r_len = (rx * rx + ry * ry).sqrt();
    let s_len = (sx * sx + sy * sy).sqrt();
    let denom = cross(rx, ry, sx, sy);

    if denom.abs() > 1e-12 * r_len * s_len {
        let t = cross(qpx, qpy, sx, sy) / denom;
        let u = cross(qpx, qpy, rx, ry) / denom;
        if (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&t) && (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&u)
        {
            return Some(SegmentHit::Crossing {
                t: t.clamp(0.0, 1.0),
                u: u.clamp(0.0, 1.0),
            });
        }
        return None;
    }

    // Parallel. Collinear when b0 sits on the line through a.
    let off = cross(qpx, qpy, rx, ry).abs() / r_len;
    if off > 1e-9 {
        return None;
    }
    let r2 = r_len * r_len;
    let t0 = dot(qpx, qpy, rx, ry) / r2;
    let t1 = dot(b1.x - a0.x, b1.y - a0.y, rx, ry) / r2;
    let lo = t0.min(t1).max(0.0);
    let hi = t0.max(t1).min(1.0);
    if lo > hi + PARAM_EPS {
        return None;
    }
    let t = lo.clamp(0.0, 1.0);
    // Recover the matching parameter on b by projecting the overlap start.
    let px = a0.x + t * rx;
    let py = a0.y + t * ry;
    let u = (dot(px - b0.x, py - b0.y, sx, sy) / (s_len * s_len)).clamp(0.0, 1.0);
    Some(SegmentHit::OverlapStart { t, u })
}

/// Open polyline with precomputed cumulative arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<Point>,
    cum_len: Vec<f64>,
}

impl Polyline {
    /// Requires at least two points, distinct consecutive points, and a
    /// strictly positive total length.
    pub fn new(points: Vec<Point>) -> Result<Self, String> {
        if points.len() < 2 {
            return Err(format!("polyline needs >= 2 waypoints, got {}", points.len()));
        }
        let mut cum_len = Vec::with_capacity(points.len());
        cum_len.push(0.0);
        for w in points.windows(2) {
            let d = w[0].dist(w[1]);
            if d <= 0.0 {
                return Err("consecutive waypoints must be distinct".to_string());
            }
            cum_len.push(cum_len.last().unwrap() + d);
        }
        Ok(Self { points, cum_len })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn arc_length(&self) -> f64 {
        *self.cum_len.last().unwrap()
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        *self.points.last().unwrap()
    }

    /// Point at the given along-track distance, clamped to the endpoints.
    pub fn point_at(&self, along: f64) -> Point {
        if along <= 0.0 {
            return self.points[0];
        }
        if along >= self.arc_length() {
            return self.last();
        }
        // cum_len is strictly increasing.
        let seg = match self
            .cum_len
            .binary_search_by(|c| c.partial_cmp(&along).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i - 1,
        };
        let a = self.points[seg];
        let b = self.points[seg + 1];
        let seg_len = self.cum_len[seg + 1] - self.cum_len[seg];
        let t = (along - self.cum_len[seg]) / seg_len;
        Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// Along-track distance of the start of segment `i`.
    pub fn segment_start_len(&self, i: usize) -> f64 {
        self.cum_len[i]
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    /// Minimum distance from `p` to the polyline.
    pub fn dist_to_point(&self, p: Point) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let abx = b.x - a.x;
            let aby = b.y - a.y;
            let t = (dot(p.x - a.x, p.y - a.y, abx, aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
            let proj = Point::new(a.x + t * abx, a.y + t * aby);
            best = best.min(p.dist(proj));
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_of_perpendicular_segments() {
        let hit = segment_hit(
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(5.0, -5.0),
            Point::new(5.0, 5.0),
        )
        .unwrap();
        match hit {
            SegmentHit::Crossing { t, u } => {
                assert!((t - 0.5).abs() < 1e-12);
                assert!((u - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected crossing"),
        }
    }

    #[test]
    fn disjoint_segments_do_not_hit() {
        assert!(segment_hit(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        )
        .is_none());
    }

    #[test]
    fn collinear_overlap_reports_start() {
        let hit = segment_hit(
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(14.0, 0.0),
        )
        .unwrap();
        match hit {
            SegmentHit::OverlapStart { t, u } => {
                assert!((t - 0.4).abs() < 1e-12);
                assert!(u.abs() < 1e-12);
            }
            _ => panic!("expected overlap"),
        }
    }

    #[test]
    fn shared_endpoint_counts_as_hit() {
        let hit = segment_hit(
            Point::new(0.0, 0.0),
            Point::new(5.0, 5.0),
            Point::new(5.0, 5.0),
            Point::new(10.0, 0.0),
        )
        .unwrap();
        match hit {
            SegmentHit::Crossing { t, u } => {
                assert!((t - 1.0).abs() < 1e-9);
                assert!(u.abs() < 1e-9);
            }
            _ => panic!("expected endpoint crossing"),
        }
    }

    #[test]
    fn polyline_point_at_interpolates() {
        let pl = Polyline::new(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 4.0),
            Point::new(3.0, 10.0),
        ])
        .unwrap();
        assert!((pl.arc_length() - 11.0).abs() < 1e-12);
        let mid = pl.point_at(5.0);
        assert!((mid.x - 3.0).abs() < 1e-12);
        assert!((mid.y - 4.0).abs() < 1e-12);
        assert_eq!(pl.point_at(-1.0), pl.first());
        assert_eq!(pl.point_at(100.0), pl.last());
    }

    #[test]
    fn polyline_rejects_degenerate_input() {
        assert!(Polyline::new(vec![Point::new(0.0, 0.0)]).is_err());
        assert!(Polyline::new(vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0)]).is_err());
    }
}
