//! Indoor diffuse optical channel: recursive Lambertian reflections over a
//! discretized rectangular room, plus linear convolution and AWGN.
//!
//! Room frame: `x` runs along the length (west wall at `x = 0`, east at
//! `x = length`), `y` along the width (south wall at `y = 0`, north at
//! `y = width`) and `z` is height (floor at 0).
//!
//! The order-k response is built from per-patch incident power profiles:
//! the profile at every patch after `k - 1` bounces is propagated through
//! one more bounce, and each profile is collected by the receiver through a
//! first-order Lambertian re-emission. Intermediate delays are rounded to the
//! nearest bin; the line-of-sight and single-bounce terms use exact delays.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::SignalFrame;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const DEFAULT_REFLECTIONS: usize = 3;
pub const DEFAULT_PATCH_SIZE: f64 = 0.2;
pub const DEFAULT_BIN_WIDTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector from azimuth (in the x-y plane from +x) and elevation.
    pub fn from_angles(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let mut v = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        // Snap cos(+-90 deg) rounding noise so boresight geometry stays exact.
        for c in [&mut v.x, &mut v.y, &mut v.z] {
            if c.abs() < 1e-15 {
                *c = 0.0;
            }
        }
        v
    }
}

/// Generalized Lambertian emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter {
    pub position: Vec3,
    pub normal: Vec3,
    pub mode: f64,
}

/// Flat detector with an acceptance cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    pub position: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub fov_deg: f64,
}

/// Line-of-sight gain and delay between an emitter and a detector.
pub fn los_gain(source: &Emitter, receiver: &Detector) -> Result<(f64, f64)> {
    let d = receiver.position - source.position;
    let dist = d.norm();
    if dist <= 0.0 {
        return Err(Error::Geometry("source and receiver are coincident".into()));
    }
    let delay = dist / SPEED_OF_LIGHT;
    let cos_phi = source.normal.dot(d) / dist;
    let cos_theta = -receiver.normal.dot(d) / dist;
    let fov_cos = receiver.fov_deg.to_radians().cos();
    if cos_phi <= 0.0 || cos_theta <= 0.0 || cos_theta < fov_cos {
        return Ok((0.0, delay));
    }
    let gain = (source.mode + 1.0) * receiver.area / (2.0 * std::f64::consts::PI * dist * dist)
        * cos_phi.powf(source.mode)
        * cos_theta;
    Ok((gain, delay))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflectivities {
    pub north: f64,
    pub south: f64,
    pub east: f64,
    pub west: f64,
    pub ceiling: f64,
    pub floor: f64,
}

impl Default for Reflectivities {
    fn default() -> Self {
        Self {
            north: 0.8,
            south: 0.8,
            east: 0.8,
            west: 0.8,
            ceiling: 0.8,
            floor: 0.3,
        }
    }
}

impl Reflectivities {
    pub fn uniform(rho: f64) -> Self {
        Self {
            north: rho,
            south: rho,
            east: rho,
            west: rho,
            ceiling: rho,
            floor: rho,
        }
    }

    pub fn max(&self) -> f64 {
        [
            self.north,
            self.south,
            self.east,
            self.west,
            self.ceiling,
            self.floor,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomConfig {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub reflectivity: Reflectivities,
    pub source_position: Vec3,
    pub source_azimuth_deg: f64,
    pub source_elevation_deg: f64,
    pub source_mode: f64,
    pub receiver_position: Vec3,
    pub receiver_azimuth_deg: f64,
    pub receiver_elevation_deg: f64,
    pub receiver_area: f64,
    /// The reference room lists 0 degrees, which would block all light; 85
    /// degrees is used instead.
    pub receiver_fov_deg: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            length: 6.0,
            width: 5.0,
            height: 3.0,
            reflectivity: Reflectivities::default(),
            source_position: Vec3::new(0.1, 0.2, 3.0),
            source_azimuth_deg: 0.0,
            source_elevation_deg: -90.0,
            source_mode: 1.0,
            receiver_position: Vec3::new(2.5, 2.5, 1.0),
            receiver_azimuth_deg: 0.0,
            receiver_elevation_deg: 90.0,
            receiver_area: 1e-4,
            receiver_fov_deg: 85.0,
        }
    }
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("receiver_area", self.receiver_area),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        let r = &self.reflectivity;
        for (name, v) in [
            ("rho_north", r.north),
            ("rho_south", r.south),
            ("rho_east", r.east),
            ("rho_west", r.west),
            ("rho_ceiling", r.ceiling),
            ("rho_floor", r.floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} outside [0, 1]")));
            }
        }
        if !(self.source_mode >= 1.0) {
            return Err(Error::param(
                "source_mode",
                format!("{} < 1", self.source_mode),
            ));
        }
        if !(0.0..=90.0).contains(&self.receiver_fov_deg) {
            return Err(Error::param(
                "receiver_fov_deg",
                format!("{} outside [0, 90]", self.receiver_fov_deg),
            ));
        }
        for (name, p) in [
            ("source_position", self.source_position),
            ("receiver_position", self.receiver_position),
        ] {
            let inside = (0.0..=self.length).contains(&p.x)
                && (0.0..=self.width).contains(&p.y)
                && (0.0..=self.height).contains(&p.z);
            if !inside {
                return Err(Error::Geometry(format!(
                    "{name} {p:?} lies outside the room"
                )));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Emitter {
        Emitter {
            position: self.source_position,
            normal: Vec3::from_angles(self.source_azimuth_deg, self.source_elevation_deg),
            mode: self.source_mode,
        }
    }

    pub fn receiver(&self) -> Detector {
        Detector {
            position: self.receiver_position,
            normal: Vec3::from_angles(self.receiver_azimuth_deg, self.receiver_elevation_deg),
            area: self.receiver_area,
            fov_deg: self.receiver_fov_deg,
        }
    }

    pub fn diagonal(&self) -> f64 {
        Vec3::new(self.length, self.width, self.height).norm()
    }

    /// Splits every surface into rectangular patches no larger than
    /// `patch_size` on a side.
    pub fn patches(&self, patch_size: f64) -> Vec<Patch> {
        let (l, w, h) = (self.length, self.width, self.height);
        let r = &self.reflectivity;
        let mut out = Vec::new();
        // (fixed axis, fixed value, inward normal, extent a, extent b, rho)
        let surfaces = [
            (2, 0.0, Vec3::new(0.0, 0.0, 1.0), l, w, r.floor),
            (2, h, Vec3::new(0.0, 0.0, -1.0), l, w, r.ceiling),
            (1, 0.0, Vec3::new(0.0, 1.0, 0.0), l, h, r.south),
            (1, w, Vec3::new(0.0, -1.0, 0.0), l, h, r.north),
            (0, 0.0, Vec3::new(1.0, 0.0, 0.0), w, h, r.west),
            (0, l, Vec3::new(-1.0, 0.0, 0.0), w, h, r.east),
        ];
        for (axis, value, normal, ea, eb, rho) in surfaces {
            let na = (ea / patch_size).ceil().max(1.0) as usize;
            let nb = (eb / patch_size).ceil().max(1.0) as usize;
            let (da, db) = (ea / na as f64, eb / nb as f64);
            for ia in 0..na {
                for ib in 0..nb {
                    let a = (ia as f64 + 0.5) * da;
                    let b = (ib as f64 + 0.5) * db;
                    let center = match axis {
                        2 => Vec3::new(a, b, value),
                        1 => Vec3::new(a, value, b),
                        _ => Vec3::new(value, a, b),
                    };
                    out.push(Patch {
                        center,
                        normal,
                        area: da * db,
                        rho,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub center: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub rho: f64,
}

impl Patch {
    fn as_detector(&self) -> Detector {
        Detector {
            position: self.center,
            normal: self.normal,
            area: self.area,
            fov_deg: 90.0,
        }
    }

    fn as_emitter(&self) -> Emitter {
        Emitter {
            position: self.center,
            normal: self.normal,
            mode: 1.0,
        }
    }
}

/// Optical power gain per time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulseResponse {
    /// Bin width in seconds; bin `n` covers `[n dt, (n + 1) dt)`.
    pub dt: f64,
    pub gains: Vec<f64>,
    /// Reflection order used to build the response.
    pub reflections: usize,
}

impl ChannelImpulseResponse {
    pub fn total_gain(&self) -> f64 {
        self.gains.iter().sum()
    }

    pub fn first_arrival(&self) -> Option<usize> {
        self.gains.iter().position(|&g| g > 0.0)
    }

    /// Rebins to `sample_period`, starting at the first arrival. Trailing
    /// empty taps are dropped.
    pub fn to_taps(&self, sample_period: f64) -> Result<Vec<f64>> {
        if !(sample_period > 0.0) {
            return Err(Error::param("sample_period", "must be positive"));
        }
        let Some(start) = self.first_arrival() else {
            return Err(Error::param("cir", "impulse response carries no energy"));
        };
        let mut taps: Vec<f64> = Vec::new();
        for (n, &g) in self.gains.iter().enumerate().skip(start) {
            let idx = ((n - start) as f64 * self.dt / sample_period + 1e-9).floor() as usize;
            if taps.len() <= idx {
                taps.resize(idx + 1, 0.0);
            }
            taps[idx] += g;
        }
        while taps.len() > 1 && *taps.last().unwrap() == 0.0 {
            taps.pop();
        }
        Ok(taps)
    }

    /// Taps at `sample_period`, scaled to unit DC gain.
    pub fn normalized_taps(&self, sample_period: f64) -> Result<Vec<f64>> {
        let taps = self.to_taps(sample_period)?;
        let total: f64 = taps.iter().sum();
        Ok(taps.iter().map(|t| t / total).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# dt={:e}", self.dt).unwrap();
        writeln!(s, "# K={}", self.reflections).unwrap();
        for g in &self.gains {
            writeln!(s, "{g:e}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dt = None;
        let mut k = None;
        let mut gains = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let bad = |reason: String| Error::Parse {
                line: i + 1,
                reason,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("dt=") {
                    dt = Some(v.parse::<f64>().map_err(|e| bad(format!("dt: {e}")))?);
                } else if let Some(v) = rest.strip_prefix("K=") {
                    k = Some(v.parse::<usize>().map_err(|e| bad(format!("K: {e}")))?);
                }
                continue;
            }
            gains.push(
                line.parse::<f64>()
                    .map_err(|e| bad(format!("`{line}`: {e}")))?,
            );
        }
        let dt = dt.ok_or(Error::Parse {
            line: 0,
            reason: "missing `# dt=` header".into(),
        })?;
        let reflections = k.ok_or(Error::Parse {
            line: 0,
            reason: "missing `# K=` header".into(),
        })?;
        Ok(Self {
            dt,
            gains,
            reflections,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn check_discretization(patch_size: f64, dt: f64) -> Result<()> {
    if !(patch_size > 0.0 && patch_size.is_finite()) {
        return Err(Error::param(
            "patch_size",
            format!("must be positive, got {patch_size}"),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    Ok(())
}

/// Per-order binned responses, index 0 being line of sight.
pub fn simulate_orders(
    room: &RoomConfig,
    reflections: usize,
    patch_size: f64,
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    check_discretization(patch_size, dt)?;
    room.validate()?;
    let src = room.source();
    let rx = room.receiver();
    let bins =
        (((reflections + 1) as f64 * room.diagonal() / SPEED_OF_LIGHT) / dt).ceil() as usize + 2;
    let bin_of = |t: f64| ((t / dt).floor() as usize).min(bins - 1);
    let mut orders = vec![vec![0.0; bins]; reflections + 1];

    let (g0, t0) = los_gain(&src, &rx)?;
    orders[0][bin_of(t0)] += g0;
    if reflections == 0 {
        return Ok(orders);
    }

    let patches = room.patches(patch_size);
    // Source -> patch and patch -> receiver terms.
    let to_patch: Vec<(f64, f64)> = patches
        .iter()
        .map(|p| los_gain(&src, &p.as_detector()).unwrap_or((0.0, 0.0)))
        .collect();
    let to_rx: Vec<(f64, f64)> = patches
        .iter()
        .map(|p| los_gain(&p.as_emitter(), &rx).unwrap_or((0.0, 0.0)))
        .collect();

    for (j, p) in patches.iter().enumerate() {
        let (gs, ts) = to_patch[j];
        let (gr, tr) = to_rx[j];
        if gs > 0.0 && gr > 0.0 {
            orders[1][bin_of(ts + tr)] += p.rho * gs * gr;
        }
    }
    if reflections == 1 {
        return Ok(orders);
    }

    // Incident power profile at each patch, one row of `bins` per patch.
    let mut incident = vec![0.0; patches.len() * bins];
    for (j, &(g, t)) in to_patch.iter().enumerate() {
        if g > 0.0 {
            incident[j * bins + ((t / dt).round() as usize).min(bins - 1)] += g;
        }
    }
    for order in 2..=reflections {
        let ranges = support(&incident, bins);
        let next: Vec<f64> = incident
            .par_chunks(bins)
            .enumerate()
            .flat_map_iter(|(i, _)| {
                let target = &patches[i];
                let mut row = vec![0.0; bins];
                for (j, src_patch) in patches.iter().enumerate() {
                    let Some((lo, hi)) = ranges[j] else { continue };
                    if i == j || src_patch.rho == 0.0 {
                        continue;
                    }
                    let Some((g, t)) = patch_to_patch(src_patch, target) else {
                        continue;
                    };
                    let w = src_patch.rho * g;
                    let shift = (t / dt).round() as usize;
                    let from = &incident[j * bins..(j + 1) * bins];
                    for n in lo..=hi {
                        let m = (n + shift).min(bins - 1);
                        row[m] += w * from[n];
                    }
                }
                row
            })
            .collect();
        incident = next;
        let out = &mut orders[order];
        for (i, p) in patches.iter().enumerate() {
            let (gr, tr) = to_rx[i];
            if gr <= 0.0 || p.rho == 0.0 {
                continue;
            }
            let row = &incident[i * bins..(i + 1) * bins];
            let shift = tr / dt;
            for (n, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    let m = ((n as f64 + shift).floor() as usize).min(bins - 1);
                    out[m] += p.rho * gr * v;
                }
            }
        }
    }
    Ok(orders)
}

/// Gain and delay from a first-order Lambertian patch to a patch with a
/// hemispherical field of view; the same closed form as [`los_gain`].
#[inline]
fn patch_to_patch(from: &Patch, to: &Patch) -> Option<(f64, f64)> {
    let d = to.center - from.center;
    let out = from.normal.dot(d);
    let inc = -to.normal.dot(d);
    if out <= 0.0 || inc <= 0.0 {
        return None;
    }
    let d2 = d.dot(d);
    let g = to.area * out * inc / (std::f64::consts::PI * d2 * d2);
    Some((g, d2.sqrt() / SPEED_OF_LIGHT))
}

fn support(rows: &[f64], bins: usize) -> Vec<Option<(usize, usize)>> {
    rows.chunks(bins)
        .map(|row| {
            let lo = row.iter().position(|&v| v != 0.0)?;
            let hi = row.iter().rposition(|&v| v != 0.0)?;
            Some((lo, hi))
        })
        .collect()
}

pub fn simulate_impulse_response(
    room: &RoomConfig,
    reflections: usize,
    patch_size: f64,
    dt: f64,
) -> Result<ChannelImpulseResponse> {
    let orders = simulate_orders(room, reflections, patch_size, dt)?;
    let bins = orders[0].len();
    let gains: Vec<f64> = (0..bins)
        .map(|n| orders.iter().map(|o| o[n]).sum())
        .collect();
    Ok(ChannelImpulseResponse {
        dt,
        gains,
        reflections,
    })
}

/// Hex digest identifying a simulation input.
pub fn cache_key(room: &RoomConfig, reflections: usize, patch_size: f64, dt: f64) -> String {
    let desc = format!("{room:?}|K={reflections}|patch={patch_size:e}|dt={dt:e}");
    Sha256::digest(desc.as_bytes())
        .iter()
        .take(12)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads the response from `cache_dir` if present, otherwise simulates and
/// writes it there.
pub fn cached_impulse_response(
    cache_dir: &Path,
    room: &RoomConfig,
    reflections: usize,
    patch_size: f64,
    dt: f64,
) -> Result<ChannelImpulseResponse> {
    let path = cache_dir.join(format!(
        "cir-{}.txt",
        cache_key(room, reflections, patch_size, dt)
    ));
    if path.exists() {
        return ChannelImpulseResponse::load(&path);
    }
    let cir = simulate_impulse_response(room, reflections, patch_size, dt)?;
    std::fs::create_dir_all(cache_dir)?;
    cir.save(&path)?;
    Ok(cir)
}

/// Noise variance in watts for a power in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Full linear convolution with the taps plus white Gaussian noise.
/// `noise_power_dbm = None` disables the noise.
pub fn propagate(
    frame: &SignalFrame,
    taps: &[f64],
    noise_power_dbm: Option<f64>,
    rng_seed: u64,
) -> SignalFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    propagate_with(frame, taps, noise_power_dbm, &mut rng)
}

pub fn propagate_with<R: rand::Rng + ?Sized>(
    frame: &SignalFrame,
    taps: &[f64],
    noise_power_dbm: Option<f64>,
    rng: &mut R,
) -> SignalFrame {
    let mut out = convolve(&frame.samples, taps);
    if let Some(dbm) = noise_power_dbm {
        let sigma = dbm_to_watts(dbm).sqrt();
        for y in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *y += sigma * z;
        }
    }
    SignalFrame::new(out, frame.sample_rate)
}

pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}
