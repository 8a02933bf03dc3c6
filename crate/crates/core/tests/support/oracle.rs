//! Brute-force great-circle reference used to check the closed-form geodesy.
//!
//! Walks the arc between two points in many small steps and sums chord
//! lengths; the bearing is read off the first step in the local east/north
//! frame. Shares no code with the library.

#![allow(dead_code)]

pub const RADIUS_M: f64 = 6_371_000.0;

type V3 = [f64; 3];

fn unit(lat: f64, lon: f64) -> V3 {
    let (la, lo) = (lat.to_radians(), lon.to_radians());
    [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub struct ArcOracle {
    pub length_m: f64,
    pub bearing_deg: f64,
}

/// Integrates the great-circle arc from `a` to `b` (each `(lat, lon)`) in `steps` pieces.
pub fn arc(a: (f64, f64), b: (f64, f64), steps: usize) -> ArcOracle {
    let (pa, pb) = (unit(a.0, a.1), unit(b.0, b.1));
    let d = dot(pa, pb);
    let mut u = [pb[0] - d * pa[0], pb[1] - d * pa[1], pb[2] - d * pa[2]];
    let n = norm(u);
    u = [u[0] / n, u[1] / n, u[2] / n];
    let omega = norm(cross(pa, pb)).atan2(d);
    let at = |t: f64| -> V3 {
        [
            t.cos() * pa[0] + t.sin() * u[0],
            t.cos() * pa[1] + t.sin() * u[1],
            t.cos() * pa[2] + t.sin() * u[2],
        ]
    };
    let mut total = 0.0;
    let mut prev = pa;
    for k in 1..=steps {
        let p = at(omega * k as f64 / steps as f64);
        total += norm([p[0] - prev[0], p[1] - prev[1], p[2] - prev[2]]);
        prev = p;
    }
    let first = at(omega / steps as f64);
    let delta = [first[0] - pa[0], first[1] - pa[1], first[2] - pa[2]];
    let (la, lo) = (a.0.to_radians(), a.1.to_radians());
    let east = [-lo.sin(), lo.cos(), 0.0];
    let north = [-la.sin() * lo.cos(), -la.sin() * lo.sin(), la.cos()];
    let bearing = dot(delta, east).atan2(dot(delta, north)).to_degrees().rem_euclid(360.0);
    ArcOracle {
        length_m: total * RADIUS_M,
        bearing_deg: bearing,
    }
}

/// Point reached from `a` after travelling `dist_m` along `bearing_deg`,
/// by rotating the position vector about the local great-circle axis.
pub fn advance(a: (f64, f64), bearing_deg: f64, dist_m: f64) -> (f64, f64) {
    let p = unit(a.0, a.1);
    let (la, lo) = (a.0.to_radians(), a.1.to_radians());
    let east = [-lo.sin(), lo.cos(), 0.0];
    let north = [-la.sin() * lo.cos(), -la.sin() * lo.sin(), la.cos()];
    let b = bearing_deg.to_radians();
    let dir = [
        b.cos() * north[0] + b.sin() * east[0],
        b.cos() * north[1] + b.sin() * east[1],
        b.cos() * north[2] + b.sin() * east[2],
    ];
    let t = dist_m / RADIUS_M;
    let q = [
        t.cos() * p[0] + t.sin() * dir[0],
        t.cos() * p[1] + t.sin() * dir[1],
        t.cos() * p[2] + t.sin() * dir[2],
    ];
    (q[2].asin().to_degrees(), q[1].atan2(q[0]).to_degrees())
}

/// Surface distance recovered from the straight-line chord between the two
/// position vectors.
pub fn chord_arc_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p, q) = (unit(a.0, a.1), unit(b.0, b.1));
    let c = norm([p[0] - q[0], p[1] - q[1], p[2] - q[2]]);
    2.0 * RADIUS_M * (c / 2.0).asin()
}
