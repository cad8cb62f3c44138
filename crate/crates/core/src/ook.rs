//! NRZ on-off keying with a symbol-spaced linear MMSE equalizer.
//!
//! The equalizer is designed for the zero-mean part of the OOK stream, i.e.
//! unit-variance antipodal symbols, so `noise_variance` is the receiver
//! noise variance relative to the squared half-amplitude `(A/2)^2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::SignalFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct MmseEqualizer {
    pub taps: Vec<f64>,
    /// Decision delay in samples.
    pub delay: usize,
    /// Length of the channel the taps were designed for.
    pub channel_len: usize,
    /// Mean squared error of the design, for unit-variance symbols.
    pub mse: f64,
    /// DC gain of the equalized channel (`sum(taps * h)`).
    pub combined_dc_gain: f64,
}

pub fn ook_modulate(bits: &[u8], amplitude: f64, sample_rate: f64) -> Result<SignalFrame> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::param(
            "amplitude",
            format!("must be positive, got {amplitude}"),
        ));
    }
    Ok(SignalFrame::new(
        bits.iter()
            .map(|&b| if b & 1 == 1 { amplitude } else { 0.0 })
            .collect(),
        sample_rate,
    ))
}

/// Solves the Wiener-Hopf equations `(H H^T + noise I) w = H e_delay`.
pub fn mmse_design(
    cir: &[f64],
    noise_variance: f64,
    n_taps: usize,
    delay: usize,
) -> Result<MmseEqualizer> {
    if cir.is_empty() {
        return Err(Error::param("cir", "channel has no taps"));
    }
    if n_taps == 0 {
        return Err(Error::param("n_taps", "must be at least 1"));
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::param(
            "noise_variance",
            format!("must be non-negative, got {noise_variance}"),
        ));
    }
    let span = n_taps + cir.len() - 1;
    if delay >= span {
        return Err(Error::param(
            "delay",
            format!("{delay} outside [0, {}]", span - 1),
        ));
    }
    let h = convolution_matrix(cir, n_taps);
    let r = &h * h.transpose() + DMatrix::identity(n_taps, n_taps) * noise_variance;
    let p: DVector<f64> = h.column(delay).into_owned();
    let w = match r.clone().cholesky() {
        Some(ch) => ch.solve(&p),
        None => r.lu().solve(&p).ok_or(Error::SingularDesign)?,
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign);
    }
    let mse = (1.0 - p.dot(&w)).max(0.0);
    let taps: Vec<f64> = w.iter().copied().collect();
    let combined_dc_gain = taps.iter().sum::<f64>() * cir.iter().sum::<f64>();
    Ok(MmseEqualizer {
        taps,
        delay,
        channel_len: cir.len(),
        mse,
        combined_dc_gain,
    })
}

/// Designs at every valid delay and keeps the one with the lowest MSE.
pub fn mmse_design_best_delay(
    cir: &[f64],
    noise_variance: f64,
    n_taps: usize,
) -> Result<MmseEqualizer> {
    let span = n_taps + cir.len().max(1) - 1;
    let mut best: Option<MmseEqualizer> = None;
    for delay in 0..span {
        let eq = mmse_design(cir, noise_variance, n_taps, delay)?;
        if best.as_ref().is_none_or(|b| eq.mse < b.mse) {
            best = Some(eq);
        }
    }
    best.ok_or(Error::SingularDesign)
}

/// Filters, samples at the decision delay and slices at half amplitude
/// scaled by the equalized DC gain. Returns `len + 1 - channel_len` bits.
pub fn ook_demodulate(frame: &[f64], eq: &MmseEqualizer, amplitude: f64) -> Vec<u8> {
    let n_bits = (frame.len() + 1).saturating_sub(eq.channel_len);
    let threshold = 0.5 * amplitude * eq.combined_dc_gain;
    (0..n_bits)
        .map(|n| {
            let at = n + eq.delay;
            let y: f64 = eq
                .taps
                .iter()
                .enumerate()
                .filter(|(i, _)| *i <= at && at - i < frame.len())
                .map(|(i, w)| w * frame[at - i])
                .sum();
            u8::from(y > threshold)
        })
        .collect()
}

/// `n_taps x (n_taps + L - 1)` matrix mapping the symbol window to the
/// received window `[r[n], r[n-1], ...]`.
fn convolution_matrix(cir: &[f64], n_taps: usize) -> DMatrix<f64> {
    let cols = n_taps + cir.len() - 1;
    DMatrix::from_fn(n_taps, cols, |i, j| {
        if j >= i && j - i < cir.len() {
            cir[j - i]
        } else {
            0.0
        }
    })
}
