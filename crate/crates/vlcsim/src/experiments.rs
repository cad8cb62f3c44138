//! Experiment drivers. Each experiment computes all of its artifacts in
//! memory; `write_outputs` then places them with write-then-rename so an
//! aborted run leaves no partial CSV behind.

use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use vlcsim_core::analysis::{
    ccdf_from_samples, normalized_bandwidth, normalized_snr_at_ber, papr_samples_db, run_ber_sweep,
    snr_at_ber, BerRecord, CcdfRecord, Scheme,
};
use vlcsim_core::channel::{
    cached_impulse_response, simulate_impulse_response, write_atomic, ChannelImpulseResponse,
};
use vlcsim_core::link::LinkConfig;

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Papr,
    Ber,
    BiasSweep,
    CodedVsUncoded,
    NormalizedComparison,
    Channel,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.to_possible_value().expect("no skipped variants");
        f.write_str(name.get_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
struct BerRow<'a> {
    scheme: &'a str,
    #[serde(rename = "M")]
    order: usize,
    #[serde(rename = "N")]
    n: usize,
    bias_v: Option<f64>,
    snr_db: f64,
    bits: u64,
    errors: u64,
    ber: f64,
    seed: u64,
}

#[derive(Serialize)]
struct CcdfRow {
    scheme: &'static str,
    #[serde(rename = "M")]
    order: usize,
    #[serde(rename = "N")]
    n: usize,
    papr0_db: f64,
    ccdf: f64,
    trials: usize,
    seed: u64,
}

#[derive(Serialize)]
struct NormalizedRow {
    scheme: &'static str,
    #[serde(rename = "M")]
    order: usize,
    #[serde(rename = "N")]
    n: usize,
    normalized_bandwidth: f64,
    /// Empty when the sweep does not bracket the target BER.
    normalized_snr_db: Option<f64>,
    target_ber: f64,
    seed: u64,
}

#[derive(Serialize)]
struct CirRow {
    bin: usize,
    delay_s: f64,
    gain: f64,
}

#[derive(Serialize)]
struct TapRow {
    tap: usize,
    gain: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: String,
    vlcsim_version: &'static str,
    artifacts: Vec<&'static str>,
    config: &'a ExperimentConfig,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn ber_csv(records: &[BerRecord]) -> Result<Vec<u8>, CliError> {
    to_csv(records.iter().map(|r| BerRow {
        scheme: &r.scheme,
        order: r.order,
        n: r.n,
        bias_v: r.bias_v,
        snr_db: r.snr_db,
        bits: r.bits,
        errors: r.errors,
        ber: r.ber,
        seed: r.seed,
    }))
}

fn ccdf_csv(records: &[CcdfRecord]) -> Result<Vec<u8>, CliError> {
    to_csv(records.iter().map(|r| CcdfRow {
        scheme: r.scheme.name(),
        order: r.order,
        n: r.n,
        papr0_db: r.papr0_db,
        ccdf: r.ccdf,
        trials: r.trials,
        seed: r.seed,
    }))
}

pub fn run(kind: Experiment, cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    match kind {
        Experiment::Papr => papr(cfg),
        Experiment::Ber => ber(cfg),
        Experiment::BiasSweep => bias_sweep(cfg),
        Experiment::CodedVsUncoded => coded_vs_uncoded(cfg),
        Experiment::NormalizedComparison => normalized_comparison(cfg),
        Experiment::Channel => channel(cfg),
    }
}

/// Writes the artifacts and a manifest into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    kind: Experiment,
    cfg: &ExperimentConfig,
    artifacts: &[Artifact],
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        experiment: kind.to_string(),
        vlcsim_version: env!("CARGO_PKG_VERSION"),
        artifacts: artifacts.iter().map(|a| a.name).collect(),
        config: &cfg.for_manifest(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    for a in artifacts {
        write_atomic(&dir.join(a.name), &a.bytes)?;
    }
    write_atomic(&dir.join("manifest.toml"), text.as_bytes())?;
    Ok(())
}

fn aco_schemes(cfg: &ExperimentConfig, experiment: &str) -> Result<Vec<Scheme>, CliError> {
    let schemes = cfg.scheme_list()?;
    if let Some(s) = schemes.iter().find(|s| s.aco().is_none()) {
        return Err(CliError::Config(format!(
            "schemes: `{s}` is not supported by the {experiment} experiment"
        )));
    }
    Ok(schemes)
}

fn impulse_response(cfg: &ExperimentConfig) -> Result<ChannelImpulseResponse, CliError> {
    let ch = &cfg.channel;
    let room = cfg.room.to_room();
    let cir = match &ch.cache_dir {
        Some(dir) => {
            cached_impulse_response(dir, &room, ch.reflections, ch.patch_size_m, ch.bin_width_s)?
        }
        None => simulate_impulse_response(&room, ch.reflections, ch.patch_size_m, ch.bin_width_s)?,
    };
    Ok(cir)
}

/// Channel taps at the link sample rate, normalized to unit DC gain.
pub fn channel_taps(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    if !cfg.channel.multipath {
        return Ok(vec![1.0]);
    }
    Ok(impulse_response(cfg)?.normalized_taps(1.0 / cfg.sample_rate_hz)?)
}

/// Link template shared by the BER experiments; scheme, order and frame
/// size are filled in per sweep.
fn link_config(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    order: usize,
    n: usize,
    taps: &[f64],
) -> LinkConfig {
    let mut link = match scheme {
        Scheme::Ook => LinkConfig::ook(cfg.ook_block_bits),
        _ => LinkConfig::aco(scheme, order, n),
    };
    link.cp_len = cfg.cp_len;
    link.sample_rate = cfg.sample_rate_hz;
    link.ook_taps = cfg.ook_taps;
    link.channel = taps.to_vec();
    link
}

fn sweep(cfg: &ExperimentConfig, link: &LinkConfig) -> Result<Vec<BerRecord>, CliError> {
    eprintln!(
        "sweeping {} M={} N={}{}",
        link.label(),
        link.effective_order(),
        link.n,
        link.led
            .as_ref()
            .map_or(String::new(), |l| format!(" bias={} V", l.v_bias))
    );
    Ok(run_ber_sweep(
        link,
        &cfg.snr_grid(),
        cfg.min_errors,
        cfg.max_bits,
        cfg.seed,
    )?)
}

/// Sweeps every (scheme, M, N) combination; OOK runs once since M and N do
/// not apply to it.
fn sweep_grid(
    cfg: &ExperimentConfig,
    schemes: &[Scheme],
    taps: &[f64],
    mut adjust: impl FnMut(LinkConfig) -> Result<Vec<LinkConfig>, CliError>,
) -> Result<Vec<BerRecord>, CliError> {
    let mut records = Vec::new();
    for &scheme in schemes {
        let combos: Vec<(usize, usize)> = match scheme {
            Scheme::Ook => vec![(2, cfg.ook_block_bits)],
            _ => cfg
                .orders
                .iter()
                .flat_map(|&m| cfg.frame_sizes.iter().map(move |&n| (m, n)))
                .collect(),
        };
        for (order, n) in combos {
            for link in adjust(link_config(cfg, scheme, order, n, taps))? {
                records.extend(sweep(cfg, &link)?);
            }
        }
    }
    Ok(records)
}

fn papr(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let schemes = aco_schemes(cfg, "papr")?;
    let grid = cfg.papr_grid();
    let mut records = Vec::new();
    for &scheme in &schemes {
        for &order in &cfg.orders {
            for &n in &cfg.frame_sizes {
                eprintln!("papr {scheme} M={order} N={n}");
                let samples = papr_samples_db(scheme, order, n, cfg.papr.trials, cfg.seed)?;
                records.extend(ccdf_from_samples(
                    scheme, order, n, cfg.seed, &samples, &grid,
                ));
            }
        }
    }
    Ok(vec![Artifact {
        name: "ccdf.csv",
        bytes: ccdf_csv(&records)?,
    }])
}

fn ber(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let schemes = cfg.scheme_list()?;
    let taps = channel_taps(cfg)?;
    let led = cfg.led_model(cfg.led.bias_v)?;
    let records = sweep_grid(cfg, &schemes, &taps, |link| {
        Ok(vec![link.with_led(led.clone())])
    })?;
    Ok(vec![Artifact {
        name: "ber.csv",
        bytes: ber_csv(&records)?,
    }])
}

fn bias_sweep(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    if !cfg.led.enabled {
        return Err(CliError::Config(
            "led.enabled: the bias sweep needs the LED model".into(),
        ));
    }
    let schemes = cfg.scheme_list()?;
    let taps = channel_taps(cfg)?;
    let leds = cfg
        .led
        .bias_sweep_v
        .iter()
        .map(|&v| cfg.led_model(v))
        .collect::<Result<Vec<_>, _>>()?;
    let records = sweep_grid(cfg, &schemes, &taps, |link| {
        Ok(leds
            .iter()
            .map(|led| link.clone().with_led(led.clone()))
            .collect())
    })?;
    Ok(vec![Artifact {
        name: "ber.csv",
        bytes: ber_csv(&records)?,
    }])
}

fn coded_vs_uncoded(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let schemes = aco_schemes(cfg, "coded-vs-uncoded")?;
    let taps = channel_taps(cfg)?;
    let led = cfg.led_model(cfg.led.bias_v)?;
    let bicm = cfg.bicm()?;
    let records = sweep_grid(cfg, &schemes, &taps, |link| {
        let link = link.with_led(led.clone());
        Ok(vec![link.clone(), link.with_coding(Some(bicm))])
    })?;
    Ok(vec![Artifact {
        name: "ber.csv",
        bytes: ber_csv(&records)?,
    }])
}

fn normalized_comparison(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    // OOK is always swept as the reference.
    let mut schemes: Vec<Scheme> = cfg
        .scheme_list()?
        .into_iter()
        .filter(|s| *s != Scheme::Ook)
        .collect();
    schemes.insert(0, Scheme::Ook);
    let taps = channel_taps(cfg)?;
    let led = cfg.led_model(cfg.led.bias_v)?;
    let records = sweep_grid(cfg, &schemes, &taps, |link| {
        Ok(vec![link.with_led(led.clone())])
    })?;

    let ook: Vec<BerRecord> = records
        .iter()
        .filter(|r| r.scheme == Scheme::Ook.name())
        .cloned()
        .collect();
    let reference = snr_at_ber(&ook, cfg.target_ber).map_err(|e| {
        CliError::Runtime(format!(
            "OOK reference sweep does not reach the target BER: {e}"
        ))
    })?;
    let mut rows = Vec::new();
    for &scheme in &schemes {
        let combos: Vec<(usize, usize)> = match scheme {
            Scheme::Ook => vec![(2, cfg.ook_block_bits)],
            _ => cfg
                .orders
                .iter()
                .flat_map(|&m| cfg.frame_sizes.iter().map(move |&n| (m, n)))
                .collect(),
        };
        for (order, n) in combos {
            let subset: Vec<BerRecord> = records
                .iter()
                .filter(|r| r.scheme == scheme.name() && r.order == order && r.n == n)
                .cloned()
                .collect();
            rows.push(NormalizedRow {
                scheme: scheme.name(),
                order,
                n,
                normalized_bandwidth: normalized_bandwidth(scheme, order, n)?,
                normalized_snr_db: normalized_snr_at_ber(&subset, cfg.target_ber, reference).ok(),
                target_ber: cfg.target_ber,
                seed: cfg.seed,
            });
        }
    }
    Ok(vec![
        Artifact {
            name: "ber.csv",
            bytes: ber_csv(&records)?,
        },
        Artifact {
            name: "normalized.csv",
            bytes: to_csv(rows)?,
        },
    ])
}

fn channel(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let cir = impulse_response(cfg)?;
    let taps = cir.normalized_taps(1.0 / cfg.sample_rate_hz)?;
    let cir_rows = cir.gains.iter().enumerate().map(|(bin, &gain)| CirRow {
        bin,
        delay_s: bin as f64 * cir.dt,
        gain,
    });
    let tap_rows = taps
        .iter()
        .enumerate()
        .map(|(tap, &gain)| TapRow { tap, gain });
    Ok(vec![
        Artifact {
            name: "cir.csv",
            bytes: to_csv(cir_rows)?,
        },
        Artifact {
            name: "taps.csv",
            bytes: to_csv(tap_rows)?,
        },
    ])
}
