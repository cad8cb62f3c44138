//! ACO-OFDM and ACO-SCFDE transmit and receive chains.
//!
//! Conventions: the `4N`-point forward DFT is unscaled and the inverse DFT is
//! scaled by `1/(4N)`. The extra `N`-point transform used by ACO-SCFDE is
//! unitary (`1/sqrt(N)` both ways), so precoded symbols keep unit energy.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{SignalFrame, SymbolBlock};

/// Channels weaker than this on a data subcarrier are treated as singular.
pub const SINGULAR_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AcoScheme {
    Ofdm,
    Scfde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcoFrameConfig {
    /// Data symbols per frame.
    pub n: usize,
    pub cp_len: usize,
    pub scheme: AcoScheme,
    pub sample_rate: f64,
}

impl AcoFrameConfig {
    pub fn new(n: usize, cp_len: usize, scheme: AcoScheme) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::param("N", format!("{n} is not a power of two")));
        }
        if cp_len >= 4 * n {
            return Err(Error::param(
                "cp_len",
                format!("{cp_len} must be shorter than the FFT size {}", 4 * n),
            ));
        }
        Ok(Self {
            n,
            cp_len,
            scheme,
            sample_rate: SignalFrame::UNIT_RATE,
        })
    }

    pub fn with_sample_rate(mut self, sample_rate: f64) -> Self {
        self.sample_rate = sample_rate;
        self
    }

    pub fn fft_size(&self) -> usize {
        4 * self.n
    }

    /// Samples per transmitted frame, cyclic prefix included.
    pub fn frame_len(&self) -> usize {
        self.fft_size() + self.cp_len
    }

    /// Subcarrier index carrying data symbol `k`.
    pub fn data_bin(k: usize) -> usize {
        2 * k + 1
    }
}

/// Complex channel gain per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqResponse(pub Vec<Complex64>);

impl FreqResponse {
    pub fn flat(fft_size: usize) -> Self {
        FreqResponse(vec![Complex64::new(1.0, 0.0); fft_size])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Zero-padded DFT of channel taps sampled at the frame rate.
pub fn freq_response_from_cir(taps: &[f64], fft_size: usize) -> Result<FreqResponse> {
    if taps.len() > fft_size {
        return Err(Error::size(
            format!("at most {fft_size} channel taps"),
            taps.len(),
        ));
    }
    let mut buf: Vec<Complex64> = taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    buf.resize(fft_size, Complex64::new(0.0, 0.0));
    FftPlanner::new()
        .plan_fft_forward(fft_size)
        .process(&mut buf);
    Ok(FreqResponse(buf))
}

/// Places `N` symbols on the odd bins of a `4N` Hermitian spectrum.
pub fn build_odd_hermitian_vector(symbols: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if symbols.len() != n {
        return Err(Error::size(format!("{n} symbols"), symbols.len()));
    }
    let size = 4 * n;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
    for (k, s) in symbols.iter().enumerate() {
        let bin = AcoFrameConfig::data_bin(k);
        spectrum[bin] = *s;
        spectrum[size - bin] = s.conj();
    }
    Ok(spectrum)
}

/// Zero-clipping; keeps only the non-negative part of the signal.
pub fn clip_negative(samples: &mut [f64]) {
    samples.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// A configured modem with cached FFT plans.
#[derive(Clone)]
pub struct AcoModem {
    cfg: AcoFrameConfig,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pre_fwd: Arc<dyn Fft<f64>>,
    pre_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AcoModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AcoModem").field("cfg", &self.cfg).finish()
    }
}

impl AcoModem {
    pub fn new(cfg: AcoFrameConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            cfg,
            fwd: planner.plan_fft_forward(cfg.fft_size()),
            inv: planner.plan_fft_inverse(cfg.fft_size()),
            pre_fwd: planner.plan_fft_forward(cfg.n),
            pre_inv: planner.plan_fft_inverse(cfg.n),
        }
    }

    pub fn config(&self) -> &AcoFrameConfig {
        &self.cfg
    }

    /// Unitary N-point DFT applied by the SCFDE transmitter.
    pub fn precode(&self, symbols: &[Complex64]) -> Result<SymbolBlock> {
        self.check_len(symbols.len())?;
        let mut buf = symbols.to_vec();
        self.pre_fwd.process(&mut buf);
        let scale = 1.0 / (self.cfg.n as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= scale);
        Ok(buf)
    }

    /// Unitary N-point inverse DFT applied by the SCFDE receiver.
    pub fn deprecode(&self, symbols: &[Complex64]) -> Result<SymbolBlock> {
        self.check_len(symbols.len())?;
        let mut buf = symbols.to_vec();
        self.pre_inv.process(&mut buf);
        let scale = 1.0 / (self.cfg.n as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= scale);
        Ok(buf)
    }

    /// Real bipolar time signal (no prefix, no clipping) whose odd bins carry
    /// `subcarrier_symbols`.
    pub fn unclipped(&self, subcarrier_symbols: &[Complex64]) -> Result<Vec<f64>> {
        let mut spectrum = build_odd_hermitian_vector(subcarrier_symbols, self.cfg.n)?;
        self.inv.process(&mut spectrum);
        let scale = 1.0 / self.cfg.fft_size() as f64;
        debug_assert!(spectrum.iter().all(|c| (c.im * scale).abs() < 1e-10));
        Ok(spectrum.iter().map(|c| c.re * scale).collect())
    }

    /// Full transmitter: optional precoding, odd Hermitian mapping, IFFT,
    /// cyclic prefix and zero-clipping.
    pub fn modulate(&self, symbols: &[Complex64]) -> Result<SignalFrame> {
        self.check_len(symbols.len())?;
        let x = match self.cfg.scheme {
            AcoScheme::Ofdm => self.unclipped(symbols)?,
            AcoScheme::Scfde => self.unclipped(&self.precode(symbols)?)?,
        };
        let size = self.cfg.fft_size();
        let mut samples = Vec::with_capacity(self.cfg.frame_len());
        samples.extend_from_slice(&x[size - self.cfg.cp_len..]);
        samples.extend_from_slice(&x);
        clip_negative(&mut samples);
        Ok(SignalFrame::new(samples, self.cfg.sample_rate))
    }

    /// Single-tap zero-forcing equalized odd-bin symbols, before any SCFDE
    /// de-precoding. The factor two undoes the clipping loss.
    pub fn equalized_subcarriers(&self, frame: &[f64], h: &FreqResponse) -> Result<SymbolBlock> {
        let size = self.cfg.fft_size();
        if frame.len() != self.cfg.frame_len() {
            return Err(Error::size(
                format!("{} samples", self.cfg.frame_len()),
                frame.len(),
            ));
        }
        if h.len() != size {
            return Err(Error::size(
                format!("{size}-bin frequency response"),
                h.len(),
            ));
        }
        let mut buf: Vec<Complex64> = frame[self.cfg.cp_len..]
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        self.fwd.process(&mut buf);
        (0..self.cfg.n)
            .map(|k| {
                let bin = AcoFrameConfig::data_bin(k);
                let gain = h.0[bin];
                if gain.norm() < SINGULAR_GAIN {
                    return Err(Error::SingularChannel {
                        bin,
                        magnitude: gain.norm(),
                    });
                }
                Ok(2.0 * buf[bin] / gain)
            })
            .collect()
    }

    pub fn demodulate(&self, frame: &[f64], h: &FreqResponse) -> Result<SymbolBlock> {
        let eq = self.equalized_subcarriers(frame, h)?;
        match self.cfg.scheme {
            AcoScheme::Ofdm => Ok(eq),
            AcoScheme::Scfde => self.deprecode(&eq),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.cfg.n {
            Err(Error::size(format!("{} symbols", self.cfg.n), len))
        } else {
            Ok(())
        }
    }
}

pub fn aco_ofdm_modulate(symbols: &[Complex64], cfg: &AcoFrameConfig) -> Result<SignalFrame> {
    AcoModem::new(AcoFrameConfig {
        scheme: AcoScheme::Ofdm,
        ..*cfg
    })
    .modulate(symbols)
}

pub fn aco_ofdm_demodulate(
    frame: &SignalFrame,
    h: &FreqResponse,
    cfg: &AcoFrameConfig,
) -> Result<SymbolBlock> {
    AcoModem::new(AcoFrameConfig {
        scheme: AcoScheme::Ofdm,
        ..*cfg
    })
    .demodulate(&frame.samples, h)
}

pub fn aco_scfde_modulate(symbols: &[Complex64], cfg: &AcoFrameConfig) -> Result<SignalFrame> {
    AcoModem::new(AcoFrameConfig {
        scheme: AcoScheme::Scfde,
        ..*cfg
    })
    .modulate(symbols)
}

pub fn aco_scfde_demodulate(
    frame: &SignalFrame,
    h: &FreqResponse,
    cfg: &AcoFrameConfig,
) -> Result<SymbolBlock> {
    AcoModem::new(AcoFrameConfig {
        scheme: AcoScheme::Scfde,
        ..*cfg
    })
    .demodulate(&frame.samples, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_symbols(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Direct O(n^2) DFT used as an independent reference.
    fn dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| {
                        let a = sign * 2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, a)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn hermitian_vector_for_single_symbol() {
        let s = build_odd_hermitian_vector(&[c(1.0, 0.0)], 1).unwrap();
        assert_eq!(s, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn hermitian_vector_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sym = random_symbols(&mut rng, 8);
        let s = build_odd_hermitian_vector(&sym, 8).unwrap();
        assert_eq!(s[0], c(0.0, 0.0));
        for k in 1..32 {
            assert_eq!(s[k], s[32 - k].conj());
            if k % 2 == 0 {
                assert_eq!(s[k], c(0.0, 0.0));
            }
        }
        assert_eq!(s[1], sym[0]);
        assert_eq!(s[15], sym[7]);
        assert_eq!(s[17], sym[7].conj());
        assert_eq!(s[31], sym[0].conj());
        let zeros = build_odd_hermitian_vector(&[c(0.0, 0.0); 8], 8).unwrap();
        assert!(zeros.iter().all(|z| *z == c(0.0, 0.0)));
        assert!(build_odd_hermitian_vector(&sym, 4).is_err());
    }

    #[test]
    fn single_symbol_waveform() {
        let cfg = AcoFrameConfig::new(1, 0, AcoScheme::Ofdm).unwrap();
        let modem = AcoModem::new(cfg);
        let x = modem.unclipped(&[c(1.0, 0.0)]).unwrap();
        let expect = [0.5, 0.0, -0.5, 0.0];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let y = modem.modulate(&[c(1.0, 0.0)]).unwrap();
        for (a, b) in y.samples.iter().zip([0.5, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unclipped_signal_is_real_with_empty_even_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AcoFrameConfig::new(16, 0, AcoScheme::Ofdm).unwrap();
        let sym = random_symbols(&mut rng, 16);
        let spec = build_odd_hermitian_vector(&sym, 16).unwrap();
        let time = dft(&spec, true);
        assert!(time.iter().all(|t| (t.im / 64.0).abs() < 1e-10));
        let x = AcoModem::new(cfg).unclipped(&sym).unwrap();
        let back = dft(&x.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>(), false);
        for k in (0..64).step_by(2) {
            assert!(back[k].norm() < 1e-12);
        }
    }

    #[test]
    fn modulated_frames_are_non_negative_with_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for scheme in [AcoScheme::Ofdm, AcoScheme::Scfde] {
            let cfg = AcoFrameConfig::new(64, 16, scheme).unwrap();
            let m = AcoModem::new(cfg);
            for _ in 0..20 {
                let f = m.modulate(&random_symbols(&mut rng, 64)).unwrap();
                assert_eq!(f.len(), 272);
                assert!(f.samples.iter().all(|&x| x >= 0.0));
                assert_eq!(&f.samples[..16], &f.samples[256..]);
            }
        }
    }

    #[test]
    fn clipping_halves_odd_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = AcoFrameConfig::new(32, 0, AcoScheme::Ofdm).unwrap();
        let m = AcoModem::new(cfg);
        for _ in 0..50 {
            let x = m.unclipped(&random_symbols(&mut rng, 32)).unwrap();
            let mut y = x.clone();
            clip_negative(&mut y);
            let fx = dft(&x.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>(), false);
            let fy = dft(&y.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>(), false);
            for k in (1..128).step_by(2) {
                assert!((fy[k] - 0.5 * fx[k]).norm() <= 1e-10 * fx[k].norm().max(1e-300));
            }
        }
    }

    #[test]
    fn scfde_precoding_of_constant_is_impulse() {
        let cfg = AcoFrameConfig::new(8, 0, AcoScheme::Scfde).unwrap();
        let m = AcoModem::new(cfg);
        let p = m.precode(&[c(0.3, -0.2); 8]).unwrap();
        assert!((p[0] - c(0.3, -0.2) * 8f64.sqrt()).norm() < 1e-12);
        assert!(p[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn ideal_loopback_both_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scheme in [AcoScheme::Ofdm, AcoScheme::Scfde] {
            let cfg = AcoFrameConfig::new(64, 16, scheme).unwrap();
            let m = AcoModem::new(cfg);
            let h = FreqResponse::flat(256);
            let sym = random_symbols(&mut rng, 64);
            let f = m.modulate(&sym).unwrap();
            let out = m.demodulate(&f.samples, &h).unwrap();
            for (a, b) in sym.iter().zip(&out) {
                assert!((a - b).norm() < 1e-9);
            }
            let zeros = m.demodulate(&vec![0.0; 272], &h).unwrap();
            assert!(zeros.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn two_tap_channel_with_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cir = [1.0, 0.5];
        for scheme in [AcoScheme::Ofdm, AcoScheme::Scfde] {
            let cfg = AcoFrameConfig::new(16, 1, scheme).unwrap();
            let m = AcoModem::new(cfg);
            let h = freq_response_from_cir(&cir, 64).unwrap();
            let sym = random_symbols(&mut rng, 16);
            let f = m.modulate(&sym).unwrap();
            // Linear convolution truncated to the frame: the prefix absorbs the tail.
            let rx: Vec<f64> = (0..f.len())
                .map(|n| {
                    cir.iter()
                        .enumerate()
                        .filter(|(i, _)| *i <= n)
                        .map(|(i, g)| g * f.samples[n - i])
                        .sum()
                })
                .collect();
            let out = m.demodulate(&rx, &h).unwrap();
            for (a, b) in sym.iter().zip(&out) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn scfde_equals_ofdm_on_precoded_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ofdm = AcoModem::new(AcoFrameConfig::new(32, 8, AcoScheme::Ofdm).unwrap());
        let sc = AcoModem::new(AcoFrameConfig::new(32, 8, AcoScheme::Scfde).unwrap());
        let sym = random_symbols(&mut rng, 32);
        let pre: Vec<Complex64> = dft(&sym, false).iter().map(|v| v / 32f64.sqrt()).collect();
        let a = sc.modulate(&sym).unwrap();
        let b = ofdm.modulate(&pre).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1e-12);
        }
        let h = freq_response_from_cir(&[0.8, 0.3, 0.1], 128).unwrap();
        let eq = ofdm.demodulate(&b.samples, &h).unwrap();
        let back: Vec<Complex64> = dft(&eq, true).iter().map(|v| v / 32f64.sqrt()).collect();
        let direct = sc.demodulate(&a.samples, &h).unwrap();
        for (x, y) in back.iter().zip(&direct) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn freq_response_examples() {
        let h = freq_response_from_cir(&[1.0], 16).unwrap();
        assert!(h.0.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let h = freq_response_from_cir(&[0.5], 16).unwrap();
        assert!(h.0.iter().all(|v| (v - c(0.5, 0.0)).norm() < 1e-15));
        // Direct 4-point DFT of [1, 1, 0, 0]: 2, 1 - j, 0, 1 + j.
        let h = freq_response_from_cir(&[1.0, 1.0], 4).unwrap();
        let expect = [c(2.0, 0.0), c(1.0, -1.0), c(0.0, 0.0), c(1.0, 1.0)];
        for (a, b) in h.0.iter().zip(expect) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(freq_response_from_cir(&[1.0; 5], 4).is_err());
    }

    #[test]
    fn singular_channel_is_reported() {
        let cfg = AcoFrameConfig::new(4, 0, AcoScheme::Ofdm).unwrap();
        let m = AcoModem::new(cfg);
        let mut h = FreqResponse::flat(16);
        h.0[3] = c(0.0, 0.0);
        assert!(matches!(
            m.demodulate(&[0.0; 16], &h),
            Err(Error::SingularChannel { bin: 3, .. })
        ));
        // Even bins are never used.
        let mut h = FreqResponse::flat(16);
        h.0[2] = c(0.0, 0.0);
        assert!(m.demodulate(&[0.0; 16], &h).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(AcoFrameConfig::new(3, 0, AcoScheme::Ofdm).is_err());
        assert!(AcoFrameConfig::new(4, 16, AcoScheme::Ofdm).is_err());
        assert!(AcoFrameConfig::new(4, 15, AcoScheme::Ofdm).is_ok());
        let m = AcoModem::new(AcoFrameConfig::new(4, 0, AcoScheme::Ofdm).unwrap());
        assert!(m.demodulate(&[0.0; 15], &FreqResponse::flat(16)).is_err());
    }
}
