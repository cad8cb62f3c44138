//! Experiment metrics: PAPR and its CCDF, BER sweeps and the normalized
//! bandwidth / normalized SNR comparison against OOK.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::aco::{AcoFrameConfig, AcoModem, AcoScheme};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::link::{Link, LinkConfig};
use crate::rng::unit_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    AcoOfdm,
    AcoScfde,
    Ook,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::AcoOfdm, Scheme::AcoScfde, Scheme::Ook];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::AcoOfdm => "aco-ofdm",
            Scheme::AcoScfde => "aco-scfde",
            Scheme::Ook => "ook",
        }
    }

    pub fn aco(self) -> Option<AcoScheme> {
        match self {
            Scheme::AcoOfdm => Some(AcoScheme::Ofdm),
            Scheme::AcoScfde => Some(AcoScheme::Scfde),
            Scheme::Ook => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::param("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Peak-to-average power ratio `max(x^2) / mean(x^2)`.
pub fn papr(samples: &[f64]) -> Result<f64> {
    let mut peak = 0.0f64;
    let mut sum = 0.0;
    for x in samples {
        let p = x * x;
        peak = peak.max(p);
        sum += p;
    }
    if samples.is_empty() || sum == 0.0 {
        return Err(Error::UndefinedPapr);
    }
    Ok(peak / (sum / samples.len() as f64))
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcdfRecord {
    pub scheme: Scheme,
    pub order: usize,
    pub n: usize,
    pub papr0_db: f64,
    pub ccdf: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Threshold grid `start, start + step, ..., <= stop` in dB.
pub fn threshold_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + step * i as f64).collect()
}

/// Default CCDF thresholds: 0 to 20 dB in 0.1 dB steps.
pub fn default_papr_grid() -> Vec<f64> {
    threshold_grid(0.0, 20.0, 0.1)
}

/// PAPR in dB of `trials` random frames (no cyclic prefix, after clipping).
pub fn papr_samples_db(
    scheme: Scheme,
    order: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let aco = scheme
        .aco()
        .ok_or_else(|| Error::param("scheme", "PAPR statistics are defined for the ACO schemes"))?;
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let constellation = Constellation::new(order)?;
    let modem = AcoModem::new(AcoFrameConfig::new(n, 0, aco)?);
    let k = constellation.bits_per_symbol();
    let stream = (order as u64) << 32 | n as u64;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = unit_rng(seed, stream, t as u64);
            let bits: Vec<u8> = (0..n * k).map(|_| rng.random_range(0..2)).collect();
            let frame = modem.modulate(&constellation.map_bits(&bits)?)?;
            Ok(to_db(papr(&frame.samples)?))
        })
        .collect()
}

/// Empirical `Pr(PAPR > threshold)` over the grid.
pub fn ccdf_papr(
    scheme: Scheme,
    order: usize,
    n: usize,
    trials: usize,
    seed: u64,
    grid_db: &[f64],
) -> Result<Vec<CcdfRecord>> {
    let samples = papr_samples_db(scheme, order, n, trials, seed)?;
    Ok(ccdf_from_samples(scheme, order, n, seed, &samples, grid_db))
}

/// CCDF records from precomputed PAPR samples (dB).
pub fn ccdf_from_samples(
    scheme: Scheme,
    order: usize,
    n: usize,
    seed: u64,
    samples_db: &[f64],
    grid_db: &[f64],
) -> Vec<CcdfRecord> {
    let mut samples = samples_db.to_vec();
    samples.sort_by(f64::total_cmp);
    let trials = samples.len();
    grid_db
        .iter()
        .map(|&t| {
            let at_or_below = samples.partition_point(|&p| p <= t);
            CcdfRecord {
                scheme,
                order,
                n,
                papr0_db: t,
                ccdf: (trials - at_or_below) as f64 / trials as f64,
                trials,
                seed,
            }
        })
        .collect()
}

/// PAPR value (dB) exceeded with probability `prob`, i.e. the empirical
/// `1 - prob` quantile.
pub fn papr_at_ccdf(samples_db: &[f64], prob: f64) -> f64 {
    let mut s = samples_db.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((1.0 - prob) * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    /// Scheme label; coded links carry a `-bicm` suffix.
    pub scheme: String,
    pub order: usize,
    pub n: usize,
    /// LED bias, `None` for an ideal LED.
    pub bias_v: Option<f64>,
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub seed: u64,
}

/// Monte Carlo units simulated between stopping checks.
pub const BATCH_UNITS: usize = 32;

/// Runs the link at each SNR until `min_errors` bit errors or `max_bits`
/// bits. Units are processed in fixed batches, so the stopping point and the
/// counts do not depend on the worker count.
pub fn run_ber_sweep(
    config: &LinkConfig,
    snr_grid_db: &[f64],
    min_errors: u64,
    max_bits: u64,
    seed: u64,
) -> Result<Vec<BerRecord>> {
    if snr_grid_db.is_empty() {
        return Err(Error::param("snr_db", "grid is empty"));
    }
    if min_errors == 0 {
        return Err(Error::param("min_errors", "must be at least 1"));
    }
    if max_bits == 0 {
        return Err(Error::param("max_bits", "must be at least 1"));
    }
    let link = Link::new(config.clone())?;
    snr_grid_db
        .iter()
        .enumerate()
        .map(|(point, &snr_db)| {
            let at = link.at_snr(snr_db)?;
            let mut bits = 0u64;
            let mut errors = 0u64;
            let mut next_unit = 0u64;
            while errors < min_errors && bits < max_bits {
                let batch: Vec<(u64, u64)> = (next_unit..next_unit + BATCH_UNITS as u64)
                    .into_par_iter()
                    .map(|u| at.run_unit(&mut unit_rng(seed, point as u64, u)))
                    .collect::<Result<_>>()?;
                next_unit += BATCH_UNITS as u64;
                for (e, b) in batch {
                    errors += e;
                    bits += b;
                }
            }
            Ok(BerRecord {
                scheme: config.label(),
                order: config.effective_order(),
                n: config.n,
                bias_v: config.led.as_ref().map(|l| l.v_bias),
                snr_db,
                bits,
                errors,
                ber: errors as f64 / bits as f64,
                seed,
            })
        })
        .collect()
}

/// First-null bandwidth per bit rate, relative to OOK at the same bit rate.
pub fn normalized_bandwidth(scheme: Scheme, order: usize, n: usize) -> Result<f64> {
    match scheme {
        Scheme::Ook => Ok(1.0),
        Scheme::AcoOfdm | Scheme::AcoScfde => {
            let bits = Constellation::new(order)?.bits_per_symbol() as f64;
            if n == 0 {
                return Err(Error::param("N", "must be positive"));
            }
            Ok(2.0 * (1.0 + 2.0 / n as f64) / bits)
        }
    }
}

/// SNR (dB) at which the sweep crosses `target_ber`, by linear interpolation
/// of `log10(BER)` between the bracketing records.
pub fn snr_at_ber(records: &[BerRecord], target_ber: f64) -> Result<f64> {
    if !(target_ber > 0.0 && target_ber < 1.0) {
        return Err(Error::param(
            "target_ber",
            format!("{target_ber} outside (0, 1)"),
        ));
    }
    let mut pts: Vec<(f64, f64)> = records.iter().map(|r| (r.snr_db, r.ber)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(p) = pts.iter().find(|p| p.1 == target_ber) {
        return Ok(p.0);
    }
    for w in pts.windows(2) {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 > target_ber && target_ber > b1 && b1 > 0.0 {
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target_ber.log10());
            return Ok(s0 + (lt - l0) * (s1 - s0) / (l1 - l0));
        }
    }
    let positive = pts.iter().map(|p| p.1).filter(|&b| b > 0.0);
    let low = positive.clone().fold(f64::INFINITY, f64::min);
    let high = positive.fold(0.0, f64::max);
    Err(Error::Extrapolation {
        target: target_ber,
        low,
        high,
    })
}

/// SNR required for `target_ber` minus the OOK reference SNR.
pub fn normalized_snr_at_ber(
    records: &[BerRecord],
    target_ber: f64,
    ook_reference_snr_db: f64,
) -> Result<f64> {
    Ok(snr_at_ber(records, target_ber)? - ook_reference_snr_db)
}

/// Two-proportion z statistic for the difference of two BER estimates.
pub fn separation_z(a: &BerRecord, b: &BerRecord) -> f64 {
    let var = |r: &BerRecord| r.ber * (1.0 - r.ber) / r.bits as f64;
    let sd = (var(a) + var(b)).sqrt();
    if sd == 0.0 {
        return 0.0;
    }
    (a.ber - b.ber) / sd
}
