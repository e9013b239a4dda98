//! Geometric multipath scene synthesis.
//!
//! A scene is a base station with a uniform linear array, a rectangular grid
//! of user positions, a set of vertical reflector walls, and a set of
//! axis-aligned box blockers. Propagation paths are traced geometrically:
//! the (possibly blocked) line-of-sight ray plus one first-order specular
//! reflection per wall via the image method. Each path carries a complex
//! gain with free-space amplitude `lambda / (4 pi d)` (attenuated by the
//! wall's reflection loss), propagation phase `-2 pi d / lambda`, delay, and
//! azimuth departure/arrival angles. Channels are superpositions of
//! steering-vector-weighted path gains.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;
use crate::math::{wrap_angle, PI, TAU};
use crate::rng::{self, Ns};

/// Speed of light in m/s; converts path length to delay.
pub const C_LIGHT: f64 = 299_792_458.0;

/// 3D point/vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dist(self, o: Vec3) -> f64 {
        self.sub(o).norm()
    }
}

/// Vertical rectangular reflector: a ground segment from `a` to `b`
/// (x, y pairs) extruded up to `height`. Walls reflect but do not block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub height: f64,
    pub loss_db: f64,
}

/// Axis-aligned box obstacle; any path segment touching it is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// True when the segment `p -> q` touches the box (slab test on the
    /// segment parameter; grazing contact counts as blocked).
    pub fn intersects_segment(&self, p: Vec3, q: Vec3) -> bool {
        let d = q.sub(p);
        let mut tmin = 0.0f64;
        let mut tmax = 1.0f64;
        let axes = [
            (p.x, d.x, self.min.x, self.max.x),
            (p.y, d.y, self.min.y, self.max.y),
            (p.z, d.z, self.min.z, self.max.z),
        ];
        for (origin, dir, lo, hi) in axes {
            if dir.abs() < 1e-12 {
                if origin < lo || origin > hi {
                    return false;
                }
            } else {
                let mut t1 = (lo - origin) / dir;
                let mut t2 = (hi - origin) / dir;
                if t1 > t2 {
                    core::mem::swap(&mut t1, &mut t2);
                }
                tmin = tmin.max(t1);
                tmax = tmax.min(t2);
                if tmin > tmax {
                    return false;
                }
            }
        }
        true
    }
}

/// Rectangular user grid: positions `(x0 + i*step, y0 + j*step, ue_height)`
/// for all points with `x < x1`, `y < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub step: f64,
    pub ue_height: f64,
}

/// Scene parameters; `Default` yields the desk-scale layout used throughout
/// the test suites (a 100 x 50 m grid of 5000 users at 28 GHz). Fields left
/// out of a serialized document fall back to those defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Base-station (array) position; the array is a horizontal ULA with
    /// boresight along +x, so azimuth angles are measured from the x axis.
    pub bs: Vec3,
    pub grid: GridSpec,
    /// Carrier wavelength in meters.
    pub wavelength_m: f64,
    /// Transmit antennas in the ULA.
    pub n_t: usize,
    /// Element spacing in wavelengths.
    pub spacing_wl: f64,
    /// Codebook size the scene will be paired with (validated here so a bad
    /// pairing fails before any tracing happens).
    pub n_beam: usize,
    pub n_reflectors: usize,
    pub n_blockers: usize,
    /// Amplitude loss applied per wall bounce, in dB.
    pub reflection_loss_db: f64,
    /// Strongest-first truncation of the per-user path list.
    pub l_max: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x0: 10.0,
            x1: 110.0,
            y0: -25.0,
            y1: 25.0,
            step: 1.0,
            ue_height: 1.5,
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            bs: Vec3::new(0.0, 0.0, 10.0),
            grid: GridSpec::default(),
            wavelength_m: C_LIGHT / 28e9,
            n_t: 32,
            spacing_wl: 0.5,
            n_beam: 8,
            n_reflectors: 3,
            n_blockers: 6,
            reflection_loss_db: 6.0,
            l_max: 5,
        }
    }
}

/// A realized scene: obstacles placed from a seeded stream plus the user
/// grid. Construction is pure in `(config, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub config: SceneConfig,
    pub seed: u64,
    pub walls: Vec<Wall>,
    pub blockers: Vec<Aabb>,
    ues: Vec<Vec3>,
}

/// One propagation path from base station to user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    /// Complex amplitude: free-space magnitude times propagation phase.
    pub gain: Complex64,
    /// Propagation delay in seconds.
    pub delay_s: f64,
    /// Azimuth of departure at the array, radians in (-pi, pi].
    pub aod_rad: f64,
    /// Azimuth of arrival at the user, radians in (-pi, pi].
    pub aoa_rad: f64,
    pub is_los: bool,
}

impl Path {
    pub fn amplitude(&self) -> f64 {
        self.gain.norm_sqr().sqrt()
    }
}

fn validate_config(cfg: &SceneConfig) -> Result<()> {
    if cfg.n_t == 0 || cfg.n_beam == 0 || cfg.n_t < cfg.n_beam {
        return Err(Error::Config(format!(
            "need n_t >= n_beam >= 1, got n_t={} n_beam={}",
            cfg.n_t, cfg.n_beam
        )));
    }
    if !(cfg.wavelength_m > 0.0) || !(cfg.spacing_wl > 0.0) {
        return Err(Error::Config(String::from(
            "wavelength and element spacing must be positive",
        )));
    }
    if cfg.l_max == 0 {
        return Err(Error::Config(String::from("l_max must be at least 1")));
    }
    let g = &cfg.grid;
    if !(g.step > 0.0) || g.x1 <= g.x0 || g.y1 <= g.y0 {
        return Err(Error::Config(String::from("empty user grid")));
    }
    Ok(())
}

fn grid_points(g: &GridSpec) -> Vec<Vec3> {
    let nx = ((g.x1 - g.x0) / g.step - 1e-9).floor() as usize + 1;
    let ny = ((g.y1 - g.y0) / g.step - 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            out.push(Vec3::new(
                g.x0 + ix as f64 * g.step,
                g.y0 + iy as f64 * g.step,
                g.ue_height,
            ));
        }
    }
    out
}

fn place_obstacles(cfg: &SceneConfig, seed: u64, attempt: u64) -> (Vec<Wall>, Vec<Aabb>) {
    let mut rng = rng::substream(seed, Ns::Scene, attempt);
    let g = &cfg.grid;
    let mut walls = Vec::with_capacity(cfg.n_reflectors);
    for _ in 0..cfg.n_reflectors {
        let cx = g.x0 + 5.0 + rng::u01(&mut rng) * (g.x1 - g.x0 - 10.0);
        let cy = g.y0 + rng::u01(&mut rng) * (g.y1 - g.y0);
        let phi = rng::u01(&mut rng) * PI;
        let half = 5.0 + rng::u01(&mut rng) * 7.0;
        let height = 8.0 + rng::u01(&mut rng) * 8.0;
        let (dx, dy) = (phi.cos() * half, phi.sin() * half);
        walls.push(Wall {
            a: [cx - dx, cy - dy],
            b: [cx + dx, cy + dy],
            height,
            loss_db: cfg.reflection_loss_db,
        });
    }
    let mut blockers = Vec::with_capacity(cfg.n_blockers);
    for _ in 0..cfg.n_blockers {
        // Redraw (bounded) if a box would swallow the base station.
        for _ in 0..64 {
            let cx = g.x0 + 8.0 + rng::u01(&mut rng) * (g.x1 - g.x0 - 16.0);
            let cy = g.y0 + 5.0 + rng::u01(&mut rng) * (g.y1 - g.y0 - 10.0);
            let hx = 2.5 + rng::u01(&mut rng) * 3.0;
            let hy = 2.5 + rng::u01(&mut rng) * 3.0;
            let height = 7.0 + rng::u01(&mut rng) * 6.0;
            let boxx = Aabb {
                min: Vec3::new(cx - hx, cy - hy, 0.0),
                max: Vec3::new(cx + hx, cy + hy, height),
            };
            let inside = cfg.bs.x >= boxx.min.x - 1.0
                && cfg.bs.x <= boxx.max.x + 1.0
                && cfg.bs.y >= boxx.min.y - 1.0
                && cfg.bs.y <= boxx.max.y + 1.0;
            if !inside {
                blockers.push(boxx);
                break;
            }
        }
    }
    (walls, blockers)
}

/// Builds a scene from a config and seed. Obstacle placement is seeded; when
/// blockers are requested, placement retries (bounded, still deterministic)
/// until at least one user's line of sight is actually shadowed.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    validate_config(cfg)?;
    let ues = grid_points(&cfg.grid);
    if ues.is_empty() {
        return Err(Error::Config(String::from("empty user grid")));
    }
    for attempt in 0..8 {
        let (walls, blockers) = place_obstacles(cfg, seed, attempt);
        let scene = Scene {
            config: cfg.clone(),
            seed,
            walls,
            blockers,
            ues: ues.clone(),
        };
        if cfg.n_blockers == 0
            || scene
                .ues
                .iter()
                .any(|&ue| segment_blocked(cfg.bs, ue, &scene.blockers))
        {
            return Ok(scene);
        }
    }
    Err(Error::Geometry(String::from(
        "blocker placement never shadowed a user; enlarge blockers or the grid",
    )))
}

impl Scene {
    pub fn ue_positions(&self) -> &[Vec3] {
        &self.ues
    }

    pub fn ue_count(&self) -> usize {
        self.ues.len()
    }
}

fn segment_blocked(p: Vec3, q: Vec3, blockers: &[Aabb]) -> bool {
    blockers.iter().any(|b| b.intersects_segment(p, q))
}

#[inline]
fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

fn free_space_path(d_total: f64, loss_db: f64, wavelength: f64) -> Complex64 {
    let amp = wavelength / (4.0 * PI * d_total) * 10f64.powf(-loss_db / 20.0);
    let phase = -TAU * d_total / wavelength;
    Complex64::new(amp * phase.cos(), amp * phase.sin())
}

/// Traces the line-of-sight ray and one image-method reflection per wall
/// from the scene's base station to `ue`. Paths blocked by any box are
/// dropped; survivors are sorted strongest-first and truncated to `l_max`.
/// A user co-located with the base station is a geometry error; a fully
/// boxed-in user yields an empty list.
pub fn trace_paths(scene: &Scene, ue: Vec3) -> Result<Vec<Path>> {
    let cfg = &scene.config;
    let bs = cfg.bs;
    let d_los = bs.dist(ue);
    if d_los < 1e-9 {
        return Err(Error::Geometry(String::from(
            "user position coincides with the base station",
        )));
    }
    let lam = cfg.wavelength_m;
    let mut paths = Vec::new();
    if !segment_blocked(bs, ue, &scene.blockers) {
        paths.push(Path {
            gain: free_space_path(d_los, 0.0, lam),
            delay_s: d_los / C_LIGHT,
            aod_rad: wrap_angle((ue.y - bs.y).atan2(ue.x - bs.x)),
            aoa_rad: wrap_angle((bs.y - ue.y).atan2(bs.x - ue.x)),
            is_los: true,
        });
    }
    for wall in &scene.walls {
        if let Some(p) = reflect_off_wall(bs, ue, wall, scene, lam) {
            paths.push(p);
        }
    }
    paths.sort_by(|a, b| {
        b.amplitude()
            .partial_cmp(&a.amplitude())
            .expect("path amplitudes are finite")
    });
    paths.truncate(cfg.l_max);
    Ok(paths)
}

/// Image-method first-order specular bounce off one vertical wall, or `None`
/// when geometry forbids it (opposite sides, reflection point off the
/// segment or above the wall, or either leg blocked).
fn reflect_off_wall(bs: Vec3, ue: Vec3, wall: &Wall, scene: &Scene, lam: f64) -> Option<Path> {
    let (ax, ay) = (wall.a[0], wall.a[1]);
    let (ux, uy) = (wall.b[0] - ax, wall.b[1] - ay);
    let wall_len = (ux * ux + uy * uy).sqrt();
    if wall_len < 1e-9 {
        return None;
    }
    // Unit normal to the wall's ground line.
    let (nx, ny) = (-uy / wall_len, ux / wall_len);
    let s_bs = (bs.x - ax) * nx + (bs.y - ay) * ny;
    let s_ue = (ue.x - ax) * nx + (ue.y - ay) * ny;
    // A specular bounce exists only when both endpoints face the same side.
    if s_bs.abs() < 1e-9 || s_ue.abs() < 1e-9 || s_bs * s_ue < 0.0 {
        return None;
    }
    // Mirror the base station across the wall line (ground plane).
    let (ix, iy) = (bs.x - 2.0 * s_bs * nx, bs.y - 2.0 * s_bs * ny);
    // Intersect image -> UE with the wall segment.
    let (dx, dy) = (ue.x - ix, ue.y - iy);
    let denom = cross2(dx, dy, ux, uy);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = cross2(ax - ix, ay - iy, ux, uy) / denom;
    let s = cross2(ax - ix, ay - iy, dx, dy) / denom;
    if !(t > 0.0 && t < 1.0 && (0.0..=1.0).contains(&s)) {
        return None;
    }
    let (rx, ry) = (ix + t * dx, iy + t * dy);
    let l1 = ((rx - bs.x) * (rx - bs.x) + (ry - bs.y) * (ry - bs.y)).sqrt();
    let l2 = ((ue.x - rx) * (ue.x - rx) + (ue.y - ry) * (ue.y - ry)).sqrt();
    if l1 + l2 < 1e-9 {
        return None;
    }
    // The bounce height interpolates linearly along the unfolded ray.
    let zr = bs.z + (ue.z - bs.z) * l1 / (l1 + l2);
    if zr < 0.0 || zr > wall.height {
        return None;
    }
    let r = Vec3::new(rx, ry, zr);
    if segment_blocked(bs, r, &scene.blockers) || segment_blocked(r, ue, &scene.blockers) {
        return None;
    }
    let dz = ue.z - bs.z;
    let ground = l1 + l2;
    let d_total = (ground * ground + dz * dz).sqrt();
    Some(Path {
        gain: free_space_path(d_total, wall.loss_db, lam),
        delay_s: d_total / C_LIGHT,
        aod_rad: wrap_angle((ry - bs.y).atan2(rx - bs.x)),
        aoa_rad: wrap_angle((ry - ue.y).atan2(rx - ue.x)),
        is_los: false,
    })
}

/// ULA steering vector: entry `m` is `exp(j 2 pi spacing m sin(theta))`.
/// Every entry has unit modulus; `theta = 0` gives the all-ones vector.
pub fn array_response(theta: f64, n_t: usize, spacing_wl: f64) -> Result<Vec<Complex64>> {
    if n_t == 0 {
        return Err(Error::Config(String::from("array needs n_t >= 1")));
    }
    let step = TAU * spacing_wl * theta.sin();
    Ok((0..n_t)
        .map(|m| {
            let phi = step * m as f64;
            Complex64::new(phi.cos(), phi.sin())
        })
        .collect())
}

/// Narrowband channel vector: superposition of per-path steering vectors
/// weighted by the complex path gains. No paths yields the zero channel.
pub fn synthesize_channel(paths: &[Path], n_t: usize, spacing_wl: f64) -> Result<Vec<Complex64>> {
    if n_t == 0 {
        return Err(Error::Config(String::from("array needs n_t >= 1")));
    }
    let mut h = vec![Complex64::new(0.0, 0.0); n_t];
    for p in paths {
        let a = array_response(p.aod_rad, n_t, spacing_wl)?;
        for (hm, am) in h.iter_mut().zip(a.iter()) {
            *hm += p.gain * am;
        }
    }
    Ok(h)
}
