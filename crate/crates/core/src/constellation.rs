//! Square M-QAM mapping with a fixed Gray labeling, hard decisions and
//! max-log soft demapping.
//!
//! Labeling table. A symbol carries `log2(M)` bits, written MSB first. The
//! first half selects the in-phase level and the second half the quadrature
//! level. On each axis the `L = sqrt(M)` levels `-(L-1), ..., -1, 1, ..., L-1`
//! are indexed from the most negative upwards, and level index `i` carries
//! the binary-reflected Gray label `i ^ (i >> 1)`. Points are scaled by
//! `1/sqrt(2(M-1)/3)` so the constellation has unit average energy.
//!
//! For M = 4 this gives
//!
//! | bits | point              |
//! |------|--------------------|
//! | 00   | (-1 - 1j) / sqrt 2 |
//! | 01   | (-1 + 1j) / sqrt 2 |
//! | 10   | ( 1 - 1j) / sqrt 2 |
//! | 11   | ( 1 + 1j) / sqrt 2 |
//!
//! LLR sign convention: positive means the bit is more likely 0.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::SymbolBlock;

/// Per-bit log-likelihood ratios; positive favours bit 0.
pub type LlrBlock = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_axis: usize,
    /// Amplitude of each axis label, indexed by label.
    axis_levels: Vec<f64>,
}

impl Constellation {
    /// Builds the Gray-labeled square QAM of the given order (4, 16, 64, 256).
    pub fn new(order: usize) -> Result<Self> {
        let bits = order.trailing_zeros() as usize;
        if order < 4 || !order.is_power_of_two() || !bits.is_multiple_of(2) || order > 256 {
            return Err(Error::param(
                "M",
                format!("{order} is not a supported square QAM order (4, 16, 64, 256)"),
            ));
        }
        let bits_per_axis = bits / 2;
        let levels = 1usize << bits_per_axis;
        let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let mut axis_levels = vec![0.0; levels];
        for index in 0..levels {
            let label = index ^ (index >> 1);
            axis_levels[label] = (2.0 * index as f64 - (levels as f64 - 1.0)) * scale;
        }
        Ok(Self {
            order,
            bits_per_axis,
            axis_levels,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// The point carrying `label`, whose bits read MSB first are the symbol bits.
    pub fn point(&self, label: usize) -> Complex64 {
        let q_mask = (1 << self.bits_per_axis) - 1;
        Complex64::new(
            self.axis_levels[label >> self.bits_per_axis],
            self.axis_levels[label & q_mask],
        )
    }

    /// All `M` points, indexed by label.
    pub fn points(&self) -> Vec<Complex64> {
        (0..self.order).map(|l| self.point(l)).collect()
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<SymbolBlock> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::size(format!("a multiple of {k} bits"), bits.len()));
        }
        Ok(bits
            .chunks_exact(k)
            .map(|chunk| {
                let label = chunk
                    .iter()
                    .fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
                self.point(label)
            })
            .collect())
    }

    /// Nearest-point decisions. Ties go to the lexicographically smallest label.
    pub fn demap_hard(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            let i_label = self.slice_axis(s.re);
            let q_label = self.slice_axis(s.im);
            self.push_label_bits(i_label, &mut bits);
            self.push_label_bits(q_label, &mut bits);
        }
        bits
    }

    /// Max-log LLRs with a common noise variance.
    pub fn demap_soft(&self, symbols: &[Complex64], noise_variance: f64) -> Result<LlrBlock> {
        check_variance(noise_variance)?;
        let mut llrs = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            self.push_symbol_llrs(*s, noise_variance, &mut llrs);
        }
        Ok(llrs)
    }

    /// Max-log LLRs where each symbol has its own noise variance.
    pub fn demap_soft_each(&self, symbols: &[Complex64], variances: &[f64]) -> Result<LlrBlock> {
        if variances.len() != symbols.len() {
            return Err(Error::size(
                format!("{} noise variances", symbols.len()),
                variances.len(),
            ));
        }
        let mut llrs = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for (s, &v) in symbols.iter().zip(variances) {
            check_variance(v)?;
            self.push_symbol_llrs(*s, v, &mut llrs);
        }
        Ok(llrs)
    }

    fn slice_axis(&self, y: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (label, &level) in self.axis_levels.iter().enumerate() {
            let d = (y - level) * (y - level);
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    fn push_label_bits(&self, label: usize, out: &mut Vec<u8>) {
        for b in (0..self.bits_per_axis).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    fn push_symbol_llrs(&self, s: Complex64, noise_variance: f64, out: &mut Vec<f64>) {
        for y in [s.re, s.im] {
            for b in (0..self.bits_per_axis).rev() {
                let mut min0 = f64::INFINITY;
                let mut min1 = f64::INFINITY;
                for (label, &level) in self.axis_levels.iter().enumerate() {
                    let d = (y - level) * (y - level);
                    if (label >> b) & 1 == 0 {
                        min0 = min0.min(d);
                    } else {
                        min1 = min1.min(d);
                    }
                }
                out.push((min1 - min0) / noise_variance);
            }
        }
    }
}

fn check_variance(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "noise_variance",
            format!("must be positive and finite, got {v}"),
        ))
    }
}
