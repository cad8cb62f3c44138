//! TOML experiment configuration.
//!
//! Every key except `seed` has a default; `ExperimentConfig::reference`
//! produces a file listing all of them. Unknown and duplicate keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vlcsim_core::analysis::Scheme;
use vlcsim_core::channel::{Reflectivities, RoomConfig, Vec3};
use vlcsim_core::coding::Bicm;
use vlcsim_core::constellation::Constellation;
use vlcsim_core::led::{self, DatasheetCurve, LedModel};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "defaults::schemes")]
    pub schemes: Vec<String>,
    #[serde(rename = "M", default = "defaults::orders")]
    pub orders: Vec<usize>,
    #[serde(rename = "N", default = "defaults::frame_sizes")]
    pub frame_sizes: Vec<usize>,
    #[serde(default = "defaults::cp_len")]
    pub cp_len: usize,
    #[serde(default = "defaults::snr_start_db")]
    pub snr_start_db: f64,
    #[serde(default = "defaults::snr_stop_db")]
    pub snr_stop_db: f64,
    #[serde(default = "defaults::snr_step_db")]
    pub snr_step_db: f64,
    /// Monte Carlo stopping rule: stop a point after this many bit errors...
    #[serde(default = "defaults::min_errors")]
    pub min_errors: u64,
    /// ...or this many simulated bits.
    #[serde(default = "defaults::max_bits")]
    pub max_bits: u64,
    #[serde(default = "defaults::target_ber")]
    pub target_ber: f64,
    #[serde(default = "defaults::sample_rate_hz")]
    pub sample_rate_hz: f64,
    #[serde(default = "defaults::ook_block_bits")]
    pub ook_block_bits: usize,
    #[serde(default = "defaults::ook_taps")]
    pub ook_taps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub led: LedSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub room: RoomSection,
    #[serde(default)]
    pub papr: PaprSection,
    #[serde(default)]
    pub coding: CodingSection,
}

mod defaults {
    pub fn schemes() -> Vec<String> {
        vec!["aco-ofdm".into(), "aco-scfde".into()]
    }
    pub fn orders() -> Vec<usize> {
        vec![4, 16, 64]
    }
    pub fn frame_sizes() -> Vec<usize> {
        vec![64]
    }
    pub fn cp_len() -> usize {
        vlcsim_core::link::DEFAULT_CP_LEN
    }
    pub fn snr_start_db() -> f64 {
        0.0
    }
    pub fn snr_stop_db() -> f64 {
        30.0
    }
    pub fn snr_step_db() -> f64 {
        2.0
    }
    pub fn min_errors() -> u64 {
        100
    }
    pub fn max_bits() -> u64 {
        10_000_000
    }
    pub fn target_ber() -> f64 {
        1e-4
    }
    pub fn sample_rate_hz() -> f64 {
        vlcsim_core::link::DEFAULT_SAMPLE_RATE
    }
    pub fn ook_block_bits() -> usize {
        vlcsim_core::link::DEFAULT_OOK_BLOCK
    }
    pub fn ook_taps() -> usize {
        vlcsim_core::link::DEFAULT_OOK_TAPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LedSection {
    /// `false` bypasses the LED (ideal linear emitter).
    pub enabled: bool,
    /// Datasheet curve file; the shipped proxy curve when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
    pub fit_order: usize,
    pub bias_v: f64,
    /// Bias points visited by `bias-sweep`.
    pub bias_sweep_v: Vec<f64>,
    /// Volts per unit RMS of the modulator output.
    pub drive_scale: f64,
    pub turn_on_v: f64,
    pub saturation_v: f64,
}

impl Default for LedSection {
    fn default() -> Self {
        Self {
            enabled: true,
            curve: None,
            fit_order: led::DEFAULT_ORDER,
            bias_v: led::DEFAULT_BIAS_V,
            bias_sweep_v: vec![3.0, 3.2, 3.5],
            drive_scale: led::DEFAULT_DRIVE_SCALE,
            turn_on_v: led::TURN_ON_V,
            saturation_v: led::SATURATION_V,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// `false` replaces the ray-traced response with a flat channel.
    pub multipath: bool,
    pub reflections: usize,
    pub patch_size_m: f64,
    pub bin_width_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        use vlcsim_core::channel::*;
        Self {
            multipath: true,
            reflections: DEFAULT_REFLECTIONS,
            patch_size_m: DEFAULT_PATCH_SIZE,
            bin_width_s: DEFAULT_BIN_WIDTH,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomSection {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub source_position_m: [f64; 3],
    pub source_azimuth_deg: f64,
    pub source_elevation_deg: f64,
    pub source_mode: f64,
    pub receiver_position_m: [f64; 3],
    pub receiver_azimuth_deg: f64,
    pub receiver_elevation_deg: f64,
    pub receiver_area_m2: f64,
    pub receiver_fov_deg: f64,
    pub reflectivity: ReflectivitySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReflectivitySection {
    pub north: f64,
    pub south: f64,
    pub east: f64,
    pub west: f64,
    pub ceiling: f64,
    pub floor: f64,
}

impl Default for ReflectivitySection {
    fn default() -> Self {
        let r = Reflectivities::default();
        Self {
            north: r.north,
            south: r.south,
            east: r.east,
            west: r.west,
            ceiling: r.ceiling,
            floor: r.floor,
        }
    }
}

impl Default for RoomSection {
    fn default() -> Self {
        let r = RoomConfig::default();
        let p = |v: Vec3| [v.x, v.y, v.z];
        Self {
            length_m: r.length,
            width_m: r.width,
            height_m: r.height,
            source_position_m: p(r.source_position),
            source_azimuth_deg: r.source_azimuth_deg,
            source_elevation_deg: r.source_elevation_deg,
            source_mode: r.source_mode,
            receiver_position_m: p(r.receiver_position),
            receiver_azimuth_deg: r.receiver_azimuth_deg,
            receiver_elevation_deg: r.receiver_elevation_deg,
            receiver_area_m2: r.receiver_area,
            receiver_fov_deg: r.receiver_fov_deg,
            reflectivity: ReflectivitySection::default(),
        }
    }
}

impl RoomSection {
    pub fn to_room(&self) -> RoomConfig {
        let v = |p: [f64; 3]| Vec3::new(p[0], p[1], p[2]);
        let r = &self.reflectivity;
        RoomConfig {
            length: self.length_m,
            width: self.width_m,
            height: self.height_m,
            reflectivity: Reflectivities {
                north: r.north,
                south: r.south,
                east: r.east,
                west: r.west,
                ceiling: r.ceiling,
                floor: r.floor,
            },
            source_position: v(self.source_position_m),
            source_azimuth_deg: self.source_azimuth_deg,
            source_elevation_deg: self.source_elevation_deg,
            source_mode: self.source_mode,
            receiver_position: v(self.receiver_position_m),
            receiver_azimuth_deg: self.receiver_azimuth_deg,
            receiver_elevation_deg: self.receiver_elevation_deg,
            receiver_area: self.receiver_area_m2,
            receiver_fov_deg: self.receiver_fov_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaprSection {
    pub trials: usize,
    pub threshold_start_db: f64,
    pub threshold_stop_db: f64,
    pub threshold_step_db: f64,
}

impl Default for PaprSection {
    fn default() -> Self {
        Self {
            trials: 100_000,
            threshold_start_db: 0.0,
            threshold_stop_db: 20.0,
            threshold_step_db: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodingSection {
    /// Coded bits per interleaver block, including the two tail pairs.
    pub block_bits: usize,
    pub interleaver_rows: usize,
}

impl Default for CodingSection {
    fn default() -> Self {
        Self {
            block_bits: 2048,
            interleaver_rows: 32,
        }
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {reason}"))
}

impl ExperimentConfig {
    /// Configuration with every default spelled out.
    pub fn reference(seed: u64) -> Self {
        toml::from_str(&format!("seed = {seed}")).expect("defaults always parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scheme_list()?;
        if self.orders.is_empty() {
            return Err(invalid("M", "list is empty"));
        }
        for &m in &self.orders {
            Constellation::new(m)
                .map_err(|_| invalid("M", format!("unsupported constellation order {m}")))?;
        }
        if self.frame_sizes.is_empty() {
            return Err(invalid("N", "list is empty"));
        }
        for &n in &self.frame_sizes {
            if n == 0 || !n.is_power_of_two() {
                return Err(invalid("N", format!("{n} is not a power of two")));
            }
            if self.cp_len >= 4 * n {
                return Err(invalid(
                    "cp_len",
                    format!("must be shorter than the {}-sample frame", 4 * n),
                ));
            }
        }
        if !(self.snr_step_db > 0.0) || !(self.snr_stop_db >= self.snr_start_db) {
            return Err(invalid(
                "snr_step_db",
                "grid needs a positive step and stop >= start",
            ));
        }
        if self.min_errors == 0 {
            return Err(invalid("min_errors", "must be at least 1"));
        }
        if self.max_bits == 0 {
            return Err(invalid("max_bits", "must be at least 1"));
        }
        if !(self.target_ber > 0.0 && self.target_ber < 0.5) {
            return Err(invalid("target_ber", "must lie in (0, 0.5)"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(invalid("sample_rate_hz", "must be positive"));
        }
        if self.ook_block_bits == 0 {
            return Err(invalid("ook_block_bits", "must be positive"));
        }
        if self.ook_taps == 0 {
            return Err(invalid("ook_taps", "must be positive"));
        }
        if let Some(path) = &self.led.curve {
            if !path.is_file() {
                return Err(invalid(
                    "led.curve",
                    format!("{} does not exist", path.display()),
                ));
            }
        }
        if self.led.bias_sweep_v.is_empty() {
            return Err(invalid("led.bias_sweep_v", "list is empty"));
        }
        for &v in std::iter::once(&self.led.bias_v).chain(&self.led.bias_sweep_v) {
            if !(v >= self.led.turn_on_v && v <= self.led.saturation_v) {
                return Err(invalid(
                    "led.bias_v",
                    format!("{v} V is outside the LED range"),
                ));
            }
        }
        if !(self.led.drive_scale > 0.0) {
            return Err(invalid("led.drive_scale", "must be positive"));
        }
        let ch = &self.channel;
        if !(ch.patch_size_m > 0.0) {
            return Err(invalid("channel.patch_size_m", "must be positive"));
        }
        if !(ch.bin_width_s > 0.0) {
            return Err(invalid("channel.bin_width_s", "must be positive"));
        }
        self.room
            .to_room()
            .validate()
            .map_err(|e| invalid("room", e))?;
        let p = &self.papr;
        if p.trials == 0 {
            return Err(invalid("papr.trials", "must be at least 1"));
        }
        if !(p.threshold_step_db > 0.0) || !(p.threshold_stop_db >= p.threshold_start_db) {
            return Err(invalid(
                "papr.threshold_step_db",
                "grid needs a positive step and stop >= start",
            ));
        }
        self.bicm()?;
        Ok(())
    }

    pub fn scheme_list(&self) -> Result<Vec<Scheme>, CliError> {
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "list is empty"));
        }
        self.schemes
            .iter()
            .map(|s| {
                s.parse::<Scheme>()
                    .map_err(|_| invalid("schemes", format!("unknown scheme `{s}`")))
            })
            .collect()
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        vlcsim_core::analysis::threshold_grid(self.snr_start_db, self.snr_stop_db, self.snr_step_db)
    }

    pub fn papr_grid(&self) -> Vec<f64> {
        let p = &self.papr;
        vlcsim_core::analysis::threshold_grid(
            p.threshold_start_db,
            p.threshold_stop_db,
            p.threshold_step_db,
        )
    }

    pub fn bicm(&self) -> Result<Bicm, CliError> {
        Bicm::new(self.coding.block_bits, self.coding.interleaver_rows)
            .map_err(|e| invalid("coding", e))
    }

    /// LED at `bias_v`, or `None` when the LED is disabled.
    pub fn led_model(&self, bias_v: f64) -> Result<Option<LedModel>, CliError> {
        if !self.led.enabled {
            return Ok(None);
        }
        let curve = match &self.led.curve {
            Some(path) => DatasheetCurve::load(path).map_err(|e| invalid("led.curve", e))?,
            None => DatasheetCurve::shipped(),
        };
        let coeffs = led::fit_polynomial(&curve, self.led.fit_order)
            .map_err(|e| invalid("led.fit_order", e))?;
        LedModel::new(
            coeffs,
            self.led.turn_on_v,
            self.led.saturation_v,
            bias_v,
            self.led.drive_scale,
        )
        .map(Some)
        .map_err(|e| invalid("led", e))
    }

    /// The configuration as recorded in a run manifest: output locations are
    /// dropped so that manifests compare equal across output directories.
    pub fn for_manifest(&self) -> Self {
        let mut cfg = self.clone();
        cfg.out_dir = None;
        cfg.channel.cache_dir = None;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips() {
        let cfg = ExperimentConfig::reference(42);
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn seed_is_required() {
        let err = ExperimentConfig::from_toml("M = [4]")
            .unwrap_err()
            .to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn invalid_order_names_m() {
        let err = ExperimentConfig::from_toml("seed = 1\nM = [5]")
            .unwrap_err()
            .to_string();
        assert!(err.contains("M:"), "{err}");
    }

    #[test]
    fn duplicate_and_unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("seed = 1\nseed = 2").is_err());
        let err = ExperimentConfig::from_toml("seed = 1\nbogus = 3")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = ExperimentConfig::from_toml("seed = 1\n[room]\nlenght_m = 3.0")
            .unwrap_err()
            .to_string();
        assert!(err.contains("lenght_m"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ExperimentConfig::from_toml("seed = 1\nM = [4\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn missing_curve_file_is_rejected() {
        let err = ExperimentConfig::from_toml("seed = 1\n[led]\ncurve = \"/nonexistent/led.txt\"")
            .unwrap_err()
            .to_string();
        assert!(err.contains("led.curve"), "{err}");
    }

    #[test]
    fn default_led_matches_shipped_model() {
        let cfg = ExperimentConfig::reference(1);
        let led = cfg.led_model(3.2).unwrap().unwrap();
        assert_eq!(led, LedModel::shipped(3.2).unwrap());
    }

    #[test]
    fn default_room_matches_core_default() {
        assert_eq!(RoomSection::default().to_room(), RoomConfig::default());
    }
}
