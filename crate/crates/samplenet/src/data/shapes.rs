//! Uniform surface sampling of the eight synthetic shape classes.
//!
//! Every sampler draws points uniformly by area on a unit-scale primitive
//! centered at the origin. The sphere (and each ball of the two-sphere
//! pair) samples antipodal point pairs so an even-count cloud has an
//! exactly zero centroid, which keeps normalization from disturbing exact
//! radii.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Point;

use super::DataError;

pub const CLASS_NAMES: [&str; 8] = [
    "sphere",
    "box",
    "cylinder",
    "cone",
    "torus",
    "plane-cross",
    "helix",
    "two-spheres",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
    PlaneCross,
    Helix,
    TwoSpheres,
}

impl Primitive {
    pub fn from_class_id(id: usize) -> Result<Self, DataError> {
        Ok(match id {
            0 => Primitive::Sphere,
            1 => Primitive::Box,
            2 => Primitive::Cylinder,
            3 => Primitive::Cone,
            4 => Primitive::Torus,
            5 => Primitive::PlaneCross,
            6 => Primitive::Helix,
            7 => Primitive::TwoSpheres,
            other => return Err(DataError::UnknownPrimitive(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        CLASS_NAMES[*self as usize]
    }
}

impl std::str::FromStr for Primitive {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        CLASS_NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| Primitive::from_class_id(i).unwrap())
            .ok_or_else(|| DataError::UnknownPrimitive(s.to_string()))
    }
}

/// `n` points on the primitive's surface at unit scale, centered at the
/// origin, before jitter/scale/normalization.
pub fn sample_surface(primitive: Primitive, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    match primitive {
        Primitive::Sphere => sphere(n, 1.0, [0.0; 3], rng),
        Primitive::Box => cuboid(n, [0.5, 0.35, 0.2], rng),
        Primitive::Cylinder => cylinder(n, 0.5, 1.4, rng),
        Primitive::Cone => cone(n, 0.6, 1.2, rng),
        Primitive::Torus => torus(n, 0.7, 0.25, rng),
        Primitive::PlaneCross => plane_cross(n, rng),
        Primitive::Helix => helix(n, rng),
        Primitive::TwoSpheres => {
            let half = n / 2;
            let mut pts = sphere(half, 0.45, [-0.55, 0.0, 0.0], rng);
            pts.extend(sphere(n - half, 0.45, [0.55, 0.0, 0.0], rng));
            pts
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng) -> Point {
    // Marsaglia rejection sampling on the ball surface.
    loop {
        let a = rng.random_range(-1.0..1.0);
        let b = rng.random_range(-1.0..1.0);
        let s: f64 = a * a + b * b;
        if s < 1.0 && s > 0.0 {
            let root = (1.0 - s).sqrt();
            return [2.0 * a * root, 2.0 * b * root, 1.0 - 2.0 * s];
        }
    }
}

fn sphere(n: usize, radius: f64, center: Point, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut pts = Vec::with_capacity(n);
    // Antipodal pairs: exact zero centroid for even n.
    while pts.len() + 2 <= n {
        let d = unit_direction(rng);
        pts.push([
            center[0] + radius * d[0],
            center[1] + radius * d[1],
            center[2] + radius * d[2],
        ]);
        pts.push([
            center[0] - radius * d[0],
            center[1] - radius * d[1],
            center[2] - radius * d[2],
        ]);
    }
    if pts.len() < n {
        let d = unit_direction(rng);
        pts.push([
            center[0] + radius * d[0],
            center[1] + radius * d[1],
            center[2] + radius * d[2],
        ]);
    }
    pts
}

/// Area-weighted face sampling of a box with half-extents `h`.
fn cuboid(n: usize, h: [f64; 3], rng: &mut ChaCha8Rng) -> Vec<Point> {
    // Face pairs normal to x, y, z; each pair's area counted separately.
    let areas = [
        h[1] * h[2], // +x
        h[1] * h[2], // -x
        h[0] * h[2], // +y
        h[0] * h[2], // -y
        h[0] * h[1], // +z
        h[0] * h[1], // -z
    ];
    let total: f64 = areas.iter().sum();
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random_range(0.0..total);
        let mut face = 0;
        for (i, &a) in areas.iter().enumerate() {
            if pick < a || i == areas.len() - 1 {
                face = i;
                break;
            }
            pick -= a;
        }
        let axis = face / 2;
        let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
        let mut p = [0.0; 3];
        p[axis] = sign * h[axis];
        let others: [usize; 2] = match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        for o in others {
            p[o] = rng.random_range(-h[o]..h[o]);
        }
        pts.push(p);
    }
    pts
}

fn cylinder(n: usize, r: f64, height: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    use std::f64::consts::PI;
    let lateral = 2.0 * PI * r * height;
    let cap = PI * r * r;
    let total = lateral + 2.0 * cap;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.random_range(0.0..total);
        let theta = rng.random_range(0.0..2.0 * PI);
        if pick < lateral {
            let z = rng.random_range(-height / 2.0..height / 2.0);
            pts.push([r * theta.cos(), r * theta.sin(), z]);
        } else {
            let z = if pick < lateral + cap {
                height / 2.0
            } else {
                -height / 2.0
            };
            let rad = r * rng.random_range(0.0..1.0f64).sqrt();
            pts.push([rad * theta.cos(), rad * theta.sin(), z]);
        }
    }
    pts
}

fn cone(n: usize, r: f64, height: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    use std::f64::consts::PI;
    let slant = (r * r + height * height).sqrt();
    let lateral = PI * r * slant;
    let base = PI * r * r;
    let total = lateral + base;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.random_range(0.0..total);
        let theta = rng.random_range(0.0..2.0 * PI);
        if pick < lateral {
            // Uniform on the lateral surface: density grows with radius.
            let s = rng.random_range(0.0..1.0f64).sqrt();
            let rad = r * s;
            let z = height / 2.0 - height * s;
            pts.push([rad * theta.cos(), rad * theta.sin(), z]);
        } else {
            let rad = r * rng.random_range(0.0..1.0f64).sqrt();
            pts.push([rad * theta.cos(), rad * theta.sin(), -height / 2.0]);
        }
    }
    pts
}

fn torus(n: usize, major: f64, minor: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    use std::f64::consts::PI;
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let u = rng.random_range(0.0..2.0 * PI);
        let v = rng.random_range(0.0..2.0 * PI);
        // Rejection against the surface element (major + minor cos v).
        let accept = (major + minor * v.cos()) / (major + minor);
        if rng.random_range(0.0..1.0) > accept {
            continue;
        }
        let ring = major + minor * v.cos();
        pts.push([ring * u.cos(), ring * u.sin(), minor * v.sin()]);
    }
    pts
}

/// Two perpendicular unit squares meeting along the z axis.
fn plane_cross(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let u = rng.random_range(-0.8..0.8);
        let v = rng.random_range(-0.8..0.8);
        if i % 2 == 0 {
            pts.push([u, 0.0, v]);
        } else {
            pts.push([0.0, u, v]);
        }
    }
    pts
}

/// Tube of radius 0.08 around a two-turn circular helix. Arc length of a
/// circular helix is linear in the parameter, so a uniform parameter draw
/// is uniform along the curve.
fn helix(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    use std::f64::consts::PI;
    let turns = 2.0;
    let major = 0.7;
    let pitch = 0.9; // total z span / (2 pi turns)
    let tube = 0.08;
    let climb = pitch / (2.0 * PI);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.random_range(0.0..turns * 2.0 * PI);
        let phi = rng.random_range(0.0..2.0 * PI);
        let center = [
            major * t.cos(),
            major * t.sin(),
            climb * t - pitch * turns / 2.0,
        ];
        // Frame: inward normal and unit binormal of the helix curve.
        let normal = [-t.cos(), -t.sin(), 0.0];
        let speed = (major * major + climb * climb).sqrt();
        let tangent = [-major * t.sin() / speed, major * t.cos() / speed, climb / speed];
        let binormal = [
            tangent[1] * normal[2] - tangent[2] * normal[1],
            tangent[2] * normal[0] - tangent[0] * normal[2],
            tangent[0] * normal[1] - tangent[1] * normal[0],
        ];
        let mut p = center;
        for a in 0..3 {
            p[a] += tube * (phi.cos() * normal[a] + phi.sin() * binormal[a]);
        }
        pts.push(p);
    }
    pts
}
