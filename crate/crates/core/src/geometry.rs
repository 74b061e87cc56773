//! Line-segment maps and ray casting.
//!
//! Maps are sets of 2D segments in meters. A beam's expected range `z*` is
//! the distance along the ray to the closest segment, clamped to the sensor
//! maximum range.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{invalid, Result};

/// Intersections closer than this to the ray origin are ignored.
pub const MIN_HIT_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Segment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    /// Ray parameter of the intersection with the ray `origin + t * dir`,
    /// `dir` being a unit vector.
    fn intersect(&self, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<f64> {
        let ex = self.x2 - self.x1;
        let ey = self.y2 - self.y1;
        let px = self.x1 - ox;
        let py = self.y1 - oy;
        let denom = dx * ey - dy * ex;
        let scale = self.length();
        if denom.abs() <= 1e-12 * scale {
            // Parallel. A collinear segment is hit at its nearest endpoint ahead.
            if (px * dy - py * dx).abs() > 1e-12 * scale.max(1.0) {
                return None;
            }
            let t1 = px * dx + py * dy;
            let t2 = (self.x2 - ox) * dx + (self.y2 - oy) * dy;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            return if lo > MIN_HIT_DISTANCE {
                Some(lo)
            } else if hi > MIN_HIT_DISTANCE {
                // Origin lies on the segment; the sensor cannot see its own origin.
                None
            } else {
                None
            };
        }
        let t = (px * ey - py * ex) / denom;
        let s = (px * dy - py * dx) / denom;
        (t > MIN_HIT_DISTANCE && (0.0..=1.0).contains(&s)).then_some(t)
    }
}

/// A 2D environment made of line segments, plus the sensor's maximum range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapFile", into = "MapFile")]
pub struct SegmentMap {
    z_max: f64,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    z_max: f64,
    segments: Vec<[f64; 4]>,
}

impl TryFrom<MapFile> for SegmentMap {
    type Error = crate::Error;

    fn try_from(file: MapFile) -> Result<Self> {
        let segments = file
            .segments
            .into_iter()
            .map(|[x1, y1, x2, y2]| Segment::new(x1, y1, x2, y2))
            .collect();
        SegmentMap::new(file.z_max, segments)
    }
}

impl From<SegmentMap> for MapFile {
    fn from(map: SegmentMap) -> Self {
        MapFile {
            z_max: map.z_max,
            segments: map.segments.iter().map(|s| [s.x1, s.y1, s.x2, s.y2]).collect(),
        }
    }
}

impl SegmentMap {
    pub fn new(z_max: f64, segments: Vec<Segment>) -> Result<Self> {
        if !(z_max > 0.0 && z_max.is_finite()) {
            return Err(invalid("z_max", format!("must be positive and finite, got {z_max}")));
        }
        for (i, s) in segments.iter().enumerate() {
            let finite = [s.x1, s.y1, s.x2, s.y2].iter().all(|v| v.is_finite());
            if !finite || s.length() <= 0.0 {
                return Err(invalid(
                    "segments",
                    format!("segment {i} must have finite coordinates and nonzero length"),
                ));
            }
        }
        Ok(Self { z_max, segments })
    }

    /// Map without geometry: every beam reads `z_max`.
    pub fn open(z_max: f64) -> Result<Self> {
        Self::new(z_max, Vec::new())
    }

    /// Axis-aligned rectangular room.
    pub fn rectangle(z_max: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let mut map = Self::open(z_max)?;
        map.add_rectangle(x0, y0, x1, y1)?;
        Ok(map)
    }

    /// Adds the four sides of an axis-aligned rectangle.
    pub fn add_rectangle(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<()> {
        for s in [
            Segment::new(x0, y0, x1, y0),
            Segment::new(x1, y0, x1, y1),
            Segment::new(x1, y1, x0, y1),
            Segment::new(x0, y1, x0, y0),
        ] {
            self.add_segment(s)?;
        }
        Ok(())
    }

    pub fn add_segment(&mut self, segment: Segment) -> Result<()> {
        let mut segments = std::mem::take(&mut self.segments);
        segments.push(segment);
        *self = Self::new(self.z_max, segments)?;
        Ok(())
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialization cannot fail")
    }
}

/// Robot pose; the heading is kept in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = a - two_pi * ((a + PI) / two_pi).floor();
    // Rounding can land exactly on +pi.
    if r >= PI {
        r - two_pi
    } else {
        r
    }
}

/// Beam angles of a scan, relative to the robot heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    angles: Vec<f64>,
}

impl ScanGeometry {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("angles", "a scan needs at least one beam"));
        }
        if angles.iter().any(|a| !a.is_finite()) || angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("angles", "beam angles must be finite and strictly increasing"));
        }
        Ok(Self { angles })
    }

    /// `count` beams evenly spread over `[first, last]`.
    pub fn uniform(first: f64, last: f64, count: usize) -> Result<Self> {
        match count {
            0 => Self::new(Vec::new()),
            1 => Self::new(vec![first]),
            _ => {
                let step = (last - first) / (count - 1) as f64;
                Self::new((0..count).map(|i| first + step * i as f64).collect())
            }
        }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Expected range along the beam at `angle` (relative to the pose heading).
pub fn ray_cast(map: &SegmentMap, pose: &Pose, angle: f64) -> f64 {
    let theta = pose.heading + angle;
    let (dy, dx) = theta.sin_cos();
    map.segments
        .iter()
        .filter_map(|s| s.intersect(pose.x, pose.y, dx, dy))
        .fold(map.z_max, f64::min)
}

/// Noise-free scan: one `ray_cast` per beam.
pub fn simulate_ideal_scan(map: &SegmentMap, pose: &Pose, geometry: &ScanGeometry) -> Vec<f64> {
    geometry.angles.iter().map(|&a| ray_cast(map, pose, a)).collect()
}
