//! End-to-end transmission chains used by the BER sweeps.
//!
//! Power convention: the modulator output is scaled to unit mean electrical
//! power and drives the LED through its drive scale, so the LED operating
//! point does not depend on SNR. After receiver linearization the signal is
//! scaled to the target electrical power `noise * 10^(SNR/10)`, passed
//! through the channel taps (normally unit DC gain) and AWGN of fixed power
//! is added.

use num_complex::Complex64;
use rand::Rng;

use crate::aco::{freq_response_from_cir, AcoFrameConfig, AcoModem, FreqResponse};
use crate::analysis::Scheme;
use crate::channel::{dbm_to_watts, propagate_with};
use crate::coding::Bicm;
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::led::LedModel;
use crate::ook::{mmse_design_best_delay, ook_demodulate, MmseEqualizer};
use crate::signal::SignalFrame;

pub const NOISE_POWER_DBM: f64 = -10.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 100e6;
pub const DEFAULT_CP_LEN: usize = 16;
pub const DEFAULT_OOK_TAPS: usize = 15;
pub const DEFAULT_OOK_BLOCK: usize = 4096;

/// Noise variance used for LLRs when the link is noiseless.
const NOISELESS_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub scheme: Scheme,
    /// Constellation order; ignored for OOK.
    pub order: usize,
    /// Symbols per ACO frame, or bits per OOK block.
    pub n: usize,
    pub cp_len: usize,
    pub sample_rate: f64,
    /// `None` bypasses the LED.
    pub led: Option<LedModel>,
    /// Channel taps at the sample rate.
    pub channel: Vec<f64>,
    pub coding: Option<Bicm>,
    pub ook_taps: usize,
    pub noise_power_dbm: f64,
    pub noiseless: bool,
}

impl LinkConfig {
    /// ACO link over a flat channel with an ideal LED.
    pub fn aco(scheme: Scheme, order: usize, n: usize) -> Self {
        Self {
            scheme,
            order,
            n,
            cp_len: DEFAULT_CP_LEN,
            sample_rate: DEFAULT_SAMPLE_RATE,
            led: None,
            channel: vec![1.0],
            coding: None,
            ook_taps: DEFAULT_OOK_TAPS,
            noise_power_dbm: NOISE_POWER_DBM,
            noiseless: false,
        }
    }

    pub fn ook(block_bits: usize) -> Self {
        Self {
            order: 2,
            ..Self::aco(Scheme::Ook, 2, block_bits)
        }
    }

    pub fn with_channel(mut self, taps: Vec<f64>) -> Self {
        self.channel = taps;
        self
    }

    pub fn with_led(mut self, led: Option<LedModel>) -> Self {
        self.led = led;
        self
    }

    pub fn with_coding(mut self, coding: Option<Bicm>) -> Self {
        self.coding = coding;
        self
    }

    pub fn label(&self) -> String {
        match self.coding {
            Some(_) => format!("{}-bicm", self.scheme.name()),
            None => self.scheme.name().to_string(),
        }
    }

    pub fn effective_order(&self) -> usize {
        match self.scheme {
            Scheme::Ook => 2,
            _ => self.order,
        }
    }
}

/// A validated link with its modem, constellation and channel response.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    aco: Option<AcoChain>,
}

#[derive(Debug, Clone)]
struct AcoChain {
    modem: AcoModem,
    constellation: Constellation,
    response: FreqResponse,
    /// Gain taking the clipped modulator output to unit mean power.
    unit_gain: f64,
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Result<Self> {
        if cfg.channel.is_empty() || cfg.channel.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::param(
                "channel",
                "taps must be finite and non-negative",
            ));
        }
        if !(cfg.sample_rate > 0.0) {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        if cfg.n == 0 {
            return Err(Error::param("N", "must be positive"));
        }
        let aco = match cfg.scheme.aco() {
            Some(scheme) => {
                let frame = AcoFrameConfig::new(cfg.n, cfg.cp_len, scheme)?
                    .with_sample_rate(cfg.sample_rate);
                if cfg.channel.len() > cfg.cp_len + 1 {
                    return Err(Error::param(
                        "cp_len",
                        format!(
                            "{} samples cannot absorb a {}-tap channel",
                            cfg.cp_len,
                            cfg.channel.len()
                        ),
                    ));
                }
                Some(AcoChain {
                    modem: AcoModem::new(frame),
                    constellation: Constellation::new(cfg.order)?,
                    response: freq_response_from_cir(&cfg.channel, frame.fft_size())?,
                    unit_gain: (16.0 * cfg.n as f64).sqrt(),
                })
            }
            None => {
                if cfg.coding.is_some() {
                    return Err(Error::param(
                        "coding",
                        "BICM is only defined for the ACO schemes",
                    ));
                }
                if cfg.ook_taps == 0 {
                    return Err(Error::param("ook_taps", "must be at least 1"));
                }
                None
            }
        };
        Ok(Self { cfg, aco })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    fn frames_per_block(&self, bicm: &Bicm) -> usize {
        let per_frame = self.bits_per_frame();
        bicm.interleaver.len().div_ceil(per_frame)
    }

    fn bits_per_frame(&self) -> usize {
        self.aco.as_ref().map_or(self.cfg.n, |a| {
            a.constellation.bits_per_symbol() * self.cfg.n
        })
    }

    /// Information bits per transmitted bit slot; 1 for uncoded links.
    pub fn code_rate(&self) -> f64 {
        match &self.cfg.coding {
            Some(bicm) => {
                bicm.info_bits() as f64
                    / (self.frames_per_block(bicm) * self.bits_per_frame()) as f64
            }
            None => 1.0,
        }
    }

    /// Fixes the operating point. For coded links `snr_db` is the SNR of an
    /// uncoded link with the same energy per information bit.
    pub fn at_snr(&self, snr_db: f64) -> Result<LinkAtSnr<'_>> {
        let noise_w = dbm_to_watts(self.cfg.noise_power_dbm);
        let signal_power = noise_w * 10f64.powf(snr_db / 10.0) * self.code_rate();
        let noise_dbm = (!self.cfg.noiseless).then_some(self.cfg.noise_power_dbm);
        let variance = if self.cfg.noiseless { 0.0 } else { noise_w };
        let ook_eq = match self.cfg.scheme {
            // Antipodal part of the unit-power OOK stream has amplitude 1.
            Scheme::Ook => Some(mmse_design_best_delay(
                &self.cfg.channel,
                variance / signal_power,
                self.cfg.ook_taps,
            )?),
            _ => None,
        };
        Ok(LinkAtSnr {
            link: self,
            signal_power,
            noise_dbm,
            noise_variance: variance,
            ook_eq,
        })
    }

    fn led_distort(&self, samples: &[f64]) -> Result<Vec<f64>> {
        match &self.cfg.led {
            Some(led) => led.distort(samples),
            None => Ok(samples.to_vec()),
        }
    }
}

/// A link at a fixed SNR; `run_unit` simulates one frame or coded block.
#[derive(Debug)]
pub struct LinkAtSnr<'a> {
    link: &'a Link,
    signal_power: f64,
    noise_dbm: Option<f64>,
    noise_variance: f64,
    ook_eq: Option<MmseEqualizer>,
}

impl LinkAtSnr<'_> {
    /// Returns `(bit errors, bits)` for one unit drawn from `rng`.
    pub fn run_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u64, u64)> {
        let cfg = &self.link.cfg;
        match (&self.link.aco, &cfg.coding) {
            (None, _) => self.run_ook_block(rng),
            (Some(aco), None) => {
                let bits = random_bits(rng, self.link.bits_per_frame());
                let symbols = aco.constellation.map_bits(&bits)?;
                let rx = self.transmit_aco(aco, &symbols, rng)?;
                let decided = aco.constellation.demap_hard(&rx);
                Ok((count_errors(&bits, &decided), bits.len() as u64))
            }
            (Some(aco), Some(bicm)) => self.run_coded_block(aco, bicm, rng),
        }
    }

    fn transmit_aco<R: Rng + ?Sized>(
        &self,
        aco: &AcoChain,
        symbols: &[Complex64],
        rng: &mut R,
    ) -> Result<Vec<Complex64>> {
        let cfg = &self.link.cfg;
        let frame = aco.modem.modulate(symbols)?;
        let drive: Vec<f64> = frame.samples.iter().map(|x| x * aco.unit_gain).collect();
        let amp = self.signal_power.sqrt();
        let tx: Vec<f64> = self
            .link
            .led_distort(&drive)?
            .iter()
            .map(|x| x * amp)
            .collect();
        let rx = propagate_with(
            &SignalFrame::new(tx, cfg.sample_rate),
            &cfg.channel,
            self.noise_dbm,
            rng,
        );
        let back = 1.0 / (amp * aco.unit_gain);
        let samples: Vec<f64> = rx.samples[..frame.len()].iter().map(|x| x * back).collect();
        aco.modem.demodulate(&samples, &aco.response)
    }

    /// Post-equalization noise variance of each demodulated symbol.
    fn symbol_variances(&self, aco: &AcoChain) -> Vec<f64> {
        let n = self.link.cfg.n;
        if self.noise_variance == 0.0 {
            return vec![NOISELESS_VARIANCE; n];
        }
        let time_var = self.noise_variance / (self.signal_power * aco.unit_gain * aco.unit_gain);
        let bin_var = 4.0 * n as f64 * time_var;
        let per_bin: Vec<f64> = (0..n)
            .map(|k| 4.0 * bin_var / aco.response.0[AcoFrameConfig::data_bin(k)].norm_sqr())
            .collect();
        match self.link.cfg.scheme {
            Scheme::AcoScfde => vec![per_bin.iter().sum::<f64>() / n as f64; n],
            _ => per_bin,
        }
    }

    fn run_coded_block<R: Rng + ?Sized>(
        &self,
        aco: &AcoChain,
        bicm: &Bicm,
        rng: &mut R,
    ) -> Result<(u64, u64)> {
        let info = random_bits(rng, bicm.info_bits());
        let mut coded = bicm.encode(&info)?;
        let coded_len = coded.len();
        let per_frame = self.link.bits_per_frame();
        let frames = self.link.frames_per_block(bicm);
        coded.extend(random_bits(rng, frames * per_frame - coded_len));
        let variances = self.symbol_variances(aco);
        let mut llrs = Vec::with_capacity(frames * per_frame);
        for chunk in coded.chunks(per_frame) {
            let symbols = aco.constellation.map_bits(chunk)?;
            let rx = self.transmit_aco(aco, &symbols, rng)?;
            llrs.extend(aco.constellation.demap_soft_each(&rx, &variances)?);
        }
        llrs.truncate(coded_len);
        let decoded = bicm.decode(&llrs)?;
        Ok((count_errors(&info, &decoded), info.len() as u64))
    }

    fn run_ook_block<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u64, u64)> {
        let cfg = &self.link.cfg;
        let eq = self.ook_eq.as_ref().ok_or(Error::SingularDesign)?;
        let bits = random_bits(rng, cfg.n);
        let level = std::f64::consts::SQRT_2;
        let drive: Vec<f64> = bits.iter().map(|&b| f64::from(b) * level).collect();
        let amp = self.signal_power.sqrt();
        let tx: Vec<f64> = self
            .link
            .led_distort(&drive)?
            .iter()
            .map(|x| x * amp)
            .collect();
        let rx = propagate_with(
            &SignalFrame::new(tx, cfg.sample_rate),
            &cfg.channel,
            self.noise_dbm,
            rng,
        );
        let samples: Vec<f64> = rx.samples.iter().map(|x| x / amp).collect();
        let decided = ook_demodulate(&samples, eq, level);
        Ok((count_errors(&bits, &decided), bits.len() as u64))
    }
}

fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn count_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::run_ber_sweep;

    #[test]
    fn noiseless_links_are_error_free() {
        for scheme in [Scheme::AcoOfdm, Scheme::AcoScfde] {
            let mut cfg = LinkConfig::aco(scheme, 64, 64);
            cfg.noiseless = true;
            let recs = run_ber_sweep(&cfg, &[0.0, 20.0], 1, 50_000, 1).unwrap();
            assert!(recs.iter().all(|r| r.errors == 0 && r.bits >= 50_000));
        }
        let mut cfg = LinkConfig::ook(1024);
        cfg.noiseless = true;
        let recs = run_ber_sweep(&cfg, &[0.0], 1, 20_000, 1).unwrap();
        assert_eq!(recs[0].errors, 0);
    }

    #[test]
    fn multipath_noiseless_links_are_error_free() {
        let taps = vec![0.7, 0.2, 0.1];
        for scheme in [Scheme::AcoOfdm, Scheme::AcoScfde] {
            let mut cfg = LinkConfig::aco(scheme, 16, 64).with_channel(taps.clone());
            cfg.noiseless = true;
            let recs = run_ber_sweep(&cfg, &[10.0], 1, 20_000, 2).unwrap();
            assert_eq!(recs[0].errors, 0);
        }
        let mut cfg = LinkConfig::ook(1024).with_channel(taps);
        cfg.noiseless = true;
        assert_eq!(
            run_ber_sweep(&cfg, &[10.0], 1, 20_000, 2).unwrap()[0].errors,
            0
        );
    }

    #[test]
    fn coded_noiseless_link_is_error_free() {
        let mut cfg = LinkConfig::aco(Scheme::AcoOfdm, 64, 64)
            .with_coding(Some(Bicm::new(2048, 32).unwrap()));
        cfg.noiseless = true;
        let recs = run_ber_sweep(&cfg, &[5.0], 1, 10_000, 3).unwrap();
        assert_eq!(recs[0].errors, 0);
        assert_eq!(recs[0].scheme, "aco-ofdm-bicm");
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = LinkConfig::aco(Scheme::AcoOfdm, 5, 64);
        assert!(Link::new(cfg).is_err());
        let cfg = LinkConfig::aco(Scheme::AcoOfdm, 4, 64).with_channel(vec![0.1; 20]);
        assert!(Link::new(cfg).is_err());
        let cfg = LinkConfig::ook(64).with_coding(Some(Bicm::new(2048, 32).unwrap()));
        assert!(Link::new(cfg).is_err());
    }

    #[test]
    fn code_rate_accounts_for_padding() {
        let bicm = Bicm::new(2048, 32).unwrap();
        let l16 =
            Link::new(LinkConfig::aco(Scheme::AcoOfdm, 16, 64).with_coding(Some(bicm))).unwrap();
        assert!((l16.code_rate() - 1022.0 / 2048.0).abs() < 1e-15);
        let l64 =
            Link::new(LinkConfig::aco(Scheme::AcoOfdm, 64, 64).with_coding(Some(bicm))).unwrap();
        assert!((l64.code_rate() - 1022.0 / 2304.0).abs() < 1e-15);
    }

    #[test]
    fn transmit_power_is_unit_before_scaling() {
        // Clipped frames scaled by sqrt(16N) carry unit mean power on average.
        use rand::SeedableRng;
        let link = Link::new(LinkConfig::aco(Scheme::AcoOfdm, 16, 64)).unwrap();
        let aco = link.aco.as_ref().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut total = 0.0;
        let frames = 2000;
        for _ in 0..frames {
            let bits = random_bits(&mut rng, 256);
            let f = aco
                .modem
                .modulate(&aco.constellation.map_bits(&bits).unwrap())
                .unwrap();
            total += f.scaled(aco.unit_gain).mean_power();
        }
        assert!((total / frames as f64 - 1.0).abs() < 0.02);
    }
}
