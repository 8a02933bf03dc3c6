//! Spherical geodesy and route geometry.
//!
//! Everything here works on a sphere of radius [`EARTH_RADIUS_M`]. At city
//! scale the difference from an ellipsoid is well under half a percent.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bearing is undefined between identical points")]
    DegenerateBearing,
    #[error("distance {distance} m is outside the polyline range [0, {length}] m")]
    OutOfRange { distance: f64, length: f64 },
}

/// A position on the globe in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoordinate", into = "RawCoordinate")]
pub struct GeoCoordinate {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCoordinate {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawCoordinate> for GeoCoordinate {
    type Error = GeoError;

    fn try_from(raw: RawCoordinate) -> Result<Self, Self::Error> {
        GeoCoordinate::new(raw.lat, raw.lon)
    }
}

impl From<GeoCoordinate> for RawCoordinate {
    fn from(c: GeoCoordinate) -> Self {
        RawCoordinate { lat: c.lat, lon: c.lon }
    }
}

impl GeoCoordinate {
    /// Builds a coordinate, normalizing longitude into (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::InvalidArgument(format!(
                "coordinate must be finite, got ({lat}, {lon})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidArgument(format!(
                "latitude {lat} outside [-90, 90]"
            )));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    fn to_unit_vector(self) -> [f64; 3] {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    fn from_unit_vector(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let lat = (v[2] / norm).clamp(-1.0, 1.0).asin().to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        Self {
            lat,
            lon: normalize_lon(lon),
        }
    }
}

impl fmt::Display for GeoCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6},{:.6}", self.lat, self.lon)
    }
}

impl std::str::FromStr for GeoCoordinate {
    type Err = GeoError;

    /// Parses `"lat,lon"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lat, lon) = s
            .split_once(',')
            .ok_or_else(|| GeoError::InvalidArgument(format!("expected 'lat,lon', got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| GeoError::InvalidArgument(format!("not a number: {t:?}")))
        };
        GeoCoordinate::new(parse(lat)?, parse(lon)?)
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if wrapped == -180.0 {
        180.0
    } else {
        wrapped
    }
}

/// Compass direction in degrees clockwise from true north, in [0, 360).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HeadingDeg(f64);

impl HeadingDeg {
    pub const NORTH: HeadingDeg = HeadingDeg(0.0);

    /// Wraps any finite angle into [0, 360).
    pub fn new(degrees: f64) -> Result<Self, GeoError> {
        if !degrees.is_finite() {
            return Err(GeoError::InvalidArgument(format!(
                "heading must be finite, got {degrees}"
            )));
        }
        Ok(Self::wrap(degrees))
    }

    fn wrap(degrees: f64) -> Self {
        let v = degrees.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        HeadingDeg(if v >= 360.0 { 0.0 } else { v })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Heading rotated clockwise by `degrees` (negative rotates counter-clockwise).
    pub fn rotate(self, degrees: f64) -> Self {
        Self::wrap(self.0 + degrees)
    }

    pub fn reverse(self) -> Self {
        self.rotate(180.0)
    }

    /// Smallest absolute angle between two headings, in [0, 180].
    pub fn angular_distance(self, other: HeadingDeg) -> f64 {
        let d = (self.0 - other.0).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    /// Whole-degree heading as used in tile names, in 0..360.
    pub fn rounded(self) -> u16 {
        (self.0.round() as u16) % 360
    }

    pub fn cardinal(self) -> Cardinal {
        cardinal_of(self)
    }
}

impl TryFrom<f64> for HeadingDeg {
    type Error = GeoError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        if !(0.0..360.0).contains(&value) {
            return Err(GeoError::InvalidArgument(format!(
                "heading {value} outside [0, 360)"
            )));
        }
        Ok(HeadingDeg(value))
    }
}

impl From<HeadingDeg> for f64 {
    fn from(h: HeadingDeg) -> f64 {
        h.0
    }
}

impl fmt::Display for HeadingDeg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}°", self.0)
    }
}

/// The eight compass points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cardinal {
    North,
    Northeast,
    East,
    Southeast,
    South,
    Southwest,
    West,
    Northwest,
}

impl Cardinal {
    const ALL: [Cardinal; 8] = [
        Cardinal::North,
        Cardinal::Northeast,
        Cardinal::East,
        Cardinal::Southeast,
        Cardinal::South,
        Cardinal::Southwest,
        Cardinal::West,
        Cardinal::Northwest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Cardinal::North => "North",
            Cardinal::Northeast => "Northeast",
            Cardinal::East => "East",
            Cardinal::Southeast => "Southeast",
            Cardinal::South => "South",
            Cardinal::Southwest => "Southwest",
            Cardinal::West => "West",
            Cardinal::Northwest => "Northwest",
        }
    }
}

impl fmt::Display for Cardinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Nearest of the eight 45° compass sectors. A heading exactly on a sector
/// boundary belongs to the sector clockwise of it.
pub fn cardinal_of(h: HeadingDeg) -> Cardinal {
    let sector = ((h.value() + 22.5) / 45.0).floor() as usize % 8;
    Cardinal::ALL[sector]
}

/// Great-circle distance in meters (haversine formula).
pub fn haversine_distance(a: GeoCoordinate, b: GeoCoordinate) -> Result<f64, GeoError> {
    for c in [a, b] {
        if !c.lat.is_finite() || !c.lon.is_finite() {
            return Err(GeoError::InvalidArgument(
                "coordinate must be finite".to_string(),
            ));
        }
    }
    Ok(distance(a, b))
}

// Coordinates are finite by construction, so internal callers skip the check.
pub(crate) fn distance(a: GeoCoordinate, b: GeoCoordinate) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Forward azimuth at `a` of the great circle towards `b`.
pub fn initial_bearing(a: GeoCoordinate, b: GeoCoordinate) -> Result<HeadingDeg, GeoError> {
    if a == b {
        return Err(GeoError::DegenerateBearing);
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    if x == 0.0 && y == 0.0 {
        // antipodal or numerically identical
        return Err(GeoError::DegenerateBearing);
    }
    Ok(HeadingDeg::wrap(y.atan2(x).to_degrees()))
}

/// Point at `fraction` of the way along the great circle from `a` to `b`.
fn slerp(a: GeoCoordinate, b: GeoCoordinate, fraction: f64) -> GeoCoordinate {
    if fraction <= 0.0 {
        return a;
    }
    if fraction >= 1.0 {
        return b;
    }
    let (va, vb) = (a.to_unit_vector(), b.to_unit_vector());
    let dot = (va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-15 {
        return a;
    }
    let s = omega.sin();
    let wa = ((1.0 - fraction) * omega).sin() / s;
    let wb = (fraction * omega).sin() / s;
    GeoCoordinate::from_unit_vector([
        wa * va[0] + wb * vb[0],
        wa * va[1] + wb * vb[1],
        wa * va[2] + wb * vb[2],
    ])
}

/// An ordered path of at least two points with strictly positive segment lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GeoCoordinate>", into = "Vec<GeoCoordinate>")]
pub struct Polyline {
    points: Vec<GeoCoordinate>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<GeoCoordinate>) -> Result<Self, GeoError> {
        if points.len() < 2 {
            return Err(GeoError::InvalidArgument(format!(
                "polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for (i, pair) in points.windows(2).enumerate() {
            let len = distance(pair[0], pair[1]);
            if len <= 0.0 {
                return Err(GeoError::InvalidArgument(format!(
                    "points {i} and {} coincide",
                    i + 1
                )));
            }
            cumulative.push(cumulative[i] + len);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[GeoCoordinate] {
        &self.points
    }

    pub fn first(&self) -> GeoCoordinate {
        self.points[0]
    }

    pub fn last(&self) -> GeoCoordinate {
        self.points[self.points.len() - 1]
    }

    pub fn total_length(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    /// Index of the segment containing distance `d`; a vertex belongs to the
    /// segment starting there, except the final vertex.
    fn segment_at(&self, d: f64) -> usize {
        let idx = self.cumulative.partition_point(|&c| c <= d);
        idx.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Bearing of the segment containing distance `d`.
    pub fn heading_at(&self, d: f64) -> HeadingDeg {
        let seg = self.segment_at(d);
        // segments have positive length, so the bearing is defined
        initial_bearing(self.points[seg], self.points[seg + 1]).unwrap_or(HeadingDeg::NORTH)
    }

    /// Distance along the polyline of the point on it closest to `c`,
    /// measured over vertices and a fine subdivision of each segment.
    pub fn project(&self, c: GeoCoordinate) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for seg in 0..self.points.len() - 1 {
            let start = self.cumulative[seg];
            let len = self.cumulative[seg + 1] - start;
            let steps = (len / 1.0).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let p = slerp(self.points[seg], self.points[seg + 1], t);
                let dist = distance(p, c);
                if dist < best.0 {
                    best = (dist, start + t * len);
                }
            }
        }
        best.1
    }
}

impl TryFrom<Vec<GeoCoordinate>> for Polyline {
    type Error = GeoError;

    fn try_from(points: Vec<GeoCoordinate>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<GeoCoordinate> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

/// Coordinate at distance `d` meters along `p`, advancing along great circles.
pub fn interpolate_along(p: &Polyline, d: f64) -> Result<GeoCoordinate, GeoError> {
    let length = p.total_length();
    if !d.is_finite() || d < 0.0 || d > length {
        return Err(GeoError::OutOfRange {
            distance: d,
            length,
        });
    }
    if d == length {
        return Ok(p.last());
    }
    let seg = p.segment_at(d);
    let start = p.cumulative[seg];
    let seg_len = p.cumulative[seg + 1] - start;
    Ok(slerp(
        p.points[seg],
        p.points[seg + 1],
        (d - start) / seg_len,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    MidBlock,
    Intersection,
    Destination,
}

/// A position along a route, carrying the direction of travel there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub coord: GeoCoordinate,
    pub heading: HeadingDeg,
    pub distance_from_start: f64,
    pub kind: PointKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub min_interval_m: f64,
    pub max_interval_m: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            min_interval_m: 30.0,
            max_interval_m: 40.0,
        }
    }
}

impl SamplingConfig {
    pub fn new(min_interval_m: f64, max_interval_m: f64) -> Result<Self, GeoError> {
        let cfg = Self {
            min_interval_m,
            max_interval_m,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.min_interval_m.is_finite() && self.max_interval_m.is_finite())
            || self.min_interval_m <= 0.0
            || self.min_interval_m > self.max_interval_m
        {
            return Err(GeoError::InvalidArgument(format!(
                "sampling interval must satisfy 0 < min <= max, got [{}, {}]",
                self.min_interval_m, self.max_interval_m
            )));
        }
        Ok(())
    }

    pub fn target_interval_m(&self) -> f64 {
        (self.min_interval_m + self.max_interval_m) / 2.0
    }
}

const GAP_EPS: f64 = 1e-6;

/// Distances along a route of `length` meters at which samples are placed.
///
/// Samples step by the target (midpoint) interval. When the leftover tail is
/// not itself an admissible gap, the spacing is stretched over the same number
/// of gaps, or failing that shrunk over one more gap, so that every gap is in
/// range. If neither fits (short routes) the tail is left short.
pub fn sample_offsets(length: f64, cfg: &SamplingConfig) -> Vec<f64> {
    if length <= cfg.min_interval_m {
        return vec![0.0, length];
    }
    let target = cfg.target_interval_m();
    let whole = (length / target + GAP_EPS).floor() as usize;
    let tail = length - whole as f64 * target;

    let uniform = |gaps: usize| -> Vec<f64> {
        let step = length / gaps as f64;
        let mut out: Vec<f64> = (0..gaps).map(|i| i as f64 * step).collect();
        out.push(length);
        out
    };
    let admissible =
        |gap: f64| gap >= cfg.min_interval_m - GAP_EPS && gap <= cfg.max_interval_m + GAP_EPS;

    if tail <= GAP_EPS {
        return uniform(whole);
    }
    if admissible(tail) {
        let mut out: Vec<f64> = (0..=whole).map(|i| i as f64 * target).collect();
        out.push(length);
        return out;
    }
    if whole > 0 && admissible(length / whole as f64) {
        return uniform(whole);
    }
    if admissible(length / (whole + 1) as f64) {
        return uniform(whole + 1);
    }
    let mut out: Vec<f64> = (0..=whole).map(|i| i as f64 * target).collect();
    out.push(length);
    out
}

/// Samples `p` at roughly even spacing within the configured interval. Every
/// sample starts out as [`PointKind::MidBlock`] except the last, which is the
/// destination.
pub fn sample_route(p: &Polyline, cfg: &SamplingConfig) -> Result<Vec<SamplePoint>, GeoError> {
    cfg.validate()?;
    let length = p.total_length();
    if !(length > 0.0) {
        return Err(GeoError::InvalidArgument(
            "polyline has zero length".to_string(),
        ));
    }
    let offsets = sample_offsets(length, cfg);
    let last = offsets.len() - 1;
    offsets
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            Ok(SamplePoint {
                coord: interpolate_along(p, d)?,
                heading: p.heading_at(d),
                distance_from_start: d,
                kind: if i == last {
                    PointKind::Destination
                } else {
                    PointKind::MidBlock
                },
            })
        })
        .collect()
}
