//! Synthetic ground-truth scenes.
//!
//! All generated values are rounded to `f32` precision so that a scene
//! survives a trip through PFM files bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{is_power_of_two, Image};
use crate::photon::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Axis-aligned depth plateaus on a block grid.
    Steps,
    /// Shaded spheres in front of a background plane.
    Spheres,
    /// Tilted planes with smooth depth gradients.
    Planes,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steps" => Ok(SceneKind::Steps),
            "spheres" => Ok(SceneKind::Spheres),
            "planes" => Ok(SceneKind::Planes),
            other => Err(Error::Usage(format!(
                "unknown scene kind {other:?} (expected steps, spheres or planes)"
            ))),
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::Steps => "steps",
            SceneKind::Spheres => "spheres",
            SceneKind::Planes => "planes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    /// Expected photons per dwell summed over the whole frame.
    pub total_rate: f64,
    /// Nearest and farthest depth in the scene, meters.
    pub near_m: f64,
    pub far_m: f64,
    /// Plateau grid cell in pixels for `steps`; 0 picks `side / 64`.
    pub block: usize,
    /// Number of depth plateaus for `steps`, including the background.
    pub plateaus: usize,
    pub spheres: usize,
    /// Width of the imaged field at the target, meters.
    pub field_m: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            total_rate: 500.0,
            near_m: 2.5,
            far_m: 3.0,
            block: 0,
            plateaus: 6,
            spheres: 3,
            field_m: 1.0,
        }
    }
}

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

fn finish(intensity: Image, depth: Image, total_rate: f64) -> Result<Scene> {
    let sum = intensity.sum();
    let scale = if sum > 0.0 { total_rate / sum } else { 0.0 };
    let intensity = intensity.map(|v| f32_exact(v * scale));
    let depth = depth.map(f32_exact);
    Scene::new(intensity, depth)
}

pub fn generate(kind: SceneKind, side: usize, params: &SceneParams, seed: u64) -> Result<Scene> {
    if !is_power_of_two(side) {
        return Err(Error::size(format!(
            "scene side {side} is not a power of two"
        )));
    }
    if !(params.near_m >= 0.0 && params.near_m <= params.far_m) {
        return Err(Error::Config(format!(
            "need 0 <= near_m <= far_m, got {} and {}",
            params.near_m, params.far_m
        )));
    }
    if !(params.total_rate >= 0.0 && params.field_m > 0.0) {
        return Err(Error::Config(
            "total_rate must be >= 0 and field_m > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SceneKind::Steps => steps(side, params, &mut rng),
        SceneKind::Spheres => spheres(side, params, &mut rng),
        SceneKind::Planes => planes(side, params, &mut rng),
    }
}

fn steps(side: usize, params: &SceneParams, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let block = if params.block == 0 {
        (side / 64).max(1)
    } else {
        params.block
    };
    if !side.is_multiple_of(block) {
        return Err(Error::Config(format!(
            "block {block} does not divide side {side}"
        )));
    }
    let cells = side / block;
    let mut depth = Image::filled(side, params.far_m);
    let mut albedo = Image::filled(side, 0.5);
    for _ in 1..params.plateaus.max(1) {
        let (r0, r1) = ordered_pair(rng, cells);
        let (c0, c1) = ordered_pair(rng, cells);
        let d = f32_exact(rng.random_range(params.near_m..=params.far_m));
        let a = rng.random_range(0.3..=1.0);
        for p in r0 * block..r1 * block {
            for q in c0 * block..c1 * block {
                depth.set(p, q, d);
                albedo.set(p, q, a);
            }
        }
    }
    finish(albedo, depth, params.total_rate)
}

/// Two distinct cell boundaries `lo < hi` in `0..=cells`.
fn ordered_pair(rng: &mut ChaCha8Rng, cells: usize) -> (usize, usize) {
    let a = rng.random_range(0..cells);
    let b = rng.random_range(a + 1..=cells);
    (a, b)
}

fn spheres(side: usize, params: &SceneParams, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let m_per_px = params.field_m / side as f64;
    let mut depth = Image::filled(side, params.far_m);
    let mut intensity = Image::filled(side, 0.5);
    let depth_span = params.far_m - params.near_m;
    for _ in 0..params.spheres {
        let radius_px = rng.random_range(side as f64 / 10.0..=side as f64 / 5.0);
        // keep the sphere's front within the depth window
        let radius_m = (radius_px * m_per_px).min(depth_span);
        let cp = rng.random_range(0.0..side as f64);
        let cq = rng.random_range(0.0..side as f64);
        let center_z =
            rng.random_range(params.near_m + radius_m..=params.far_m.max(params.near_m + radius_m));
        let albedo = rng.random_range(0.6..=1.0);
        let p_lo = (cp - radius_px).floor().max(0.0) as usize;
        let p_hi = ((cp + radius_px).ceil() as usize).min(side);
        let q_lo = (cq - radius_px).floor().max(0.0) as usize;
        let q_hi = ((cq + radius_px).ceil() as usize).min(side);
        for p in p_lo..p_hi {
            for q in q_lo..q_hi {
                let dy = (p as f64 + 0.5 - cp) * m_per_px;
                let dx = (q as f64 + 0.5 - cq) * m_per_px;
                let rho2 = dx * dx + dy * dy;
                if rho2 >= radius_m * radius_m {
                    continue;
                }
                let height = (radius_m * radius_m - rho2).sqrt();
                let z = center_z - height;
                if z < depth.get(p, q) {
                    depth.set(p, q, z);
                    // Lambertian with the source beside the detector, plus ambient
                    intensity.set(p, q, albedo * (0.2 + 0.8 * height / radius_m));
                }
            }
        }
    }
    finish(intensity, depth, params.total_rate)
}

fn planes(side: usize, params: &SceneParams, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let span = params.far_m - params.near_m;
    let s = side as f64;
    let tilt = |rng: &mut ChaCha8Rng| (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
    let (gp, gq) = tilt(rng);
    let mut depth = Image::from_fn(side, |p, q| {
        let t = 0.5 + 0.25 * (gp * (p as f64 / s - 0.5) + gq * (q as f64 / s - 0.5));
        params.near_m + span * (0.5 + 0.5 * t)
    });
    let mut intensity = Image::filled(side, 0.5);
    let (r0, r1) = ordered_pair(rng, side);
    let (c0, c1) = ordered_pair(rng, side);
    let (hp, hq) = tilt(rng);
    let albedo = rng.random_range(0.6..=1.0);
    for p in r0..r1 {
        for q in c0..c1 {
            let t = 0.5 + 0.5 * (hp * (p as f64 / s - 0.5) + hq * (q as f64 / s - 0.5));
            depth.set(p, q, params.near_m + span * 0.5 * t.clamp(0.0, 1.0));
            intensity.set(p, q, albedo);
        }
    }
    finish(intensity, depth, params.total_rate)
}
