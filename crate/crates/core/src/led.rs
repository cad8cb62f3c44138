//! LED voltage-to-light front end: clamp to the conduction range, then a
//! least-squares polynomial transfer curve.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::SignalFrame;

/// Built-in transfer curve shipped with the crate.
pub const SHIPPED_CURVE: &str = include_str!("../data/led_transfer.txt");

pub const DEFAULT_ORDER: usize = 5;
pub const TURN_ON_V: f64 = 3.0;
pub const SATURATION_V: f64 = 4.0;
pub const DEFAULT_BIAS_V: f64 = 3.2;
/// Volts per unit of unit-RMS drive; +-3 RMS spans [3.0, 4.0] V around 3.5 V.
pub const DEFAULT_DRIVE_SCALE: f64 = 0.5 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasheetCurve {
    pub voltage: Vec<f64>,
    pub output: Vec<f64>,
}

impl DatasheetCurve {
    pub fn new(voltage: Vec<f64>, output: Vec<f64>) -> Result<Self> {
        if voltage.len() != output.len() {
            return Err(Error::size(
                format!("{} outputs", voltage.len()),
                output.len(),
            ));
        }
        if voltage.len() < 6 {
            return Err(Error::Fit(format!(
                "a datasheet curve needs at least 6 points, got {}",
                voltage.len()
            )));
        }
        if voltage.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Fit("voltages must be strictly increasing".into()));
        }
        Ok(Self { voltage, output })
    }

    /// Parses two whitespace- or comma-separated columns; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut voltage = Vec::new();
        let mut output = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: format!("`{s}`: {e}"),
                })
            };
            voltage.push(num(fields[0])?);
            output.push(num(fields[1])?);
        }
        Self::new(voltage, output)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_CURVE).expect("shipped LED curve is valid")
    }
}

/// Polynomial in ascending powers, evaluated by accumulating powers of `x`.
pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    let mut power = 1.0;
    let mut acc = 0.0;
    for c in coeffs {
        acc += c * power;
        power *= x;
    }
    acc
}

fn eval_poly_derivative(coeffs: &[f64], x: f64) -> f64 {
    let mut power = 1.0;
    let mut acc = 0.0;
    for (i, c) in coeffs.iter().enumerate().skip(1) {
        acc += i as f64 * c * power;
        power *= x;
    }
    acc
}

/// Least-squares polynomial coefficients (ascending powers of volts).
///
/// The fit is solved in a centred and scaled variable and converted back to
/// monomials in volts.
pub fn fit_polynomial(curve: &DatasheetCurve, order: usize) -> Result<Vec<f64>> {
    let n = curve.voltage.len();
    if n < order + 1 {
        return Err(Error::Fit(format!(
            "order {order} needs at least {} points, got {n}",
            order + 1
        )));
    }
    let lo = curve.voltage[0];
    let hi = curve.voltage[n - 1];
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    if half <= 0.0 {
        return Err(Error::Fit("degenerate voltage span".into()));
    }
    let design = DMatrix::from_fn(n, order + 1, |i, j| {
        ((curve.voltage[i] - mid) / half).powi(j as i32)
    });
    let y = DVector::from_column_slice(&curve.output);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(Error::Fit("rank-deficient design matrix".into()));
    }
    let scaled = svd.solve(&y, 0.0).map_err(|e| Error::Fit(e.to_string()))?;

    // sum_j a_j ((v - mid)/half)^j expanded into powers of v.
    let mut coeffs = vec![0.0; order + 1];
    for (j, a) in scaled.iter().enumerate() {
        let s = a / half.powi(j as i32);
        let mut binom = 1.0;
        for i in 0..=j {
            if i > 0 {
                binom = binom * (j - i + 1) as f64 / i as f64;
            }
            coeffs[i] += s * binom * (-mid).powi((j - i) as i32);
        }
    }
    Ok(coeffs)
}

/// Sum of squared residuals of `coeffs` over the curve points.
pub fn fit_residual(curve: &DatasheetCurve, coeffs: &[f64]) -> f64 {
    curve
        .voltage
        .iter()
        .zip(&curve.output)
        .map(|(&v, &y)| (eval_poly(coeffs, v) - y).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedModel {
    /// Transfer polynomial, ascending powers of volts.
    pub coeffs: Vec<f64>,
    pub v_ton: f64,
    pub v_sat: f64,
    pub v_bias: f64,
    /// Volts per unit signal amplitude.
    pub drive_scale: f64,
}

impl LedModel {
    pub fn new(
        coeffs: Vec<f64>,
        v_ton: f64,
        v_sat: f64,
        v_bias: f64,
        drive_scale: f64,
    ) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::param("coeffs", "empty polynomial"));
        }
        if !(v_ton < v_sat) {
            return Err(Error::param(
                "v_sat",
                format!("{v_sat} must exceed turn-on {v_ton}"),
            ));
        }
        if !(v_ton <= v_bias && v_bias <= v_sat) {
            return Err(Error::param(
                "bias_v",
                format!("{v_bias} outside [{v_ton}, {v_sat}]"),
            ));
        }
        if !(drive_scale > 0.0 && drive_scale.is_finite()) {
            return Err(Error::param(
                "drive_scale",
                format!("must be positive, got {drive_scale}"),
            ));
        }
        Ok(Self {
            coeffs,
            v_ton,
            v_sat,
            v_bias,
            drive_scale,
        })
    }

    /// Fit of `curve` with the conduction range taken from its end points.
    pub fn from_curve(
        curve: &DatasheetCurve,
        order: usize,
        v_bias: f64,
        drive_scale: f64,
    ) -> Result<Self> {
        let coeffs = fit_polynomial(curve, order)?;
        let v_ton = curve.voltage[0];
        let v_sat = *curve.voltage.last().unwrap();
        Self::new(coeffs, v_ton, v_sat, v_bias, drive_scale)
    }

    /// The shipped fifth-order model at the given bias.
    pub fn shipped(v_bias: f64) -> Result<Self> {
        let mut m = Self::from_curve(
            &DatasheetCurve::shipped(),
            DEFAULT_ORDER,
            v_bias,
            DEFAULT_DRIVE_SCALE,
        )?;
        m.v_ton = TURN_ON_V;
        m.v_sat = SATURATION_V;
        Ok(m)
    }

    /// Pass-through model: unit slope, no clamp, zero bias.
    pub fn identity() -> Self {
        Self {
            coeffs: vec![0.0, 1.0],
            v_ton: f64::NEG_INFINITY,
            v_sat: f64::INFINITY,
            v_bias: 0.0,
            drive_scale: 1.0,
        }
    }

    pub fn with_bias(&self, v_bias: f64) -> Result<Self> {
        Self::new(
            self.coeffs.clone(),
            self.v_ton,
            self.v_sat,
            v_bias,
            self.drive_scale,
        )
    }

    /// Light output for an absolute drive voltage.
    pub fn transfer(&self, v: f64) -> f64 {
        eval_poly(&self.coeffs, v.clamp(self.v_ton, self.v_sat))
    }

    pub fn drive_voltage(&self, x: f64) -> f64 {
        self.v_bias + self.drive_scale * x
    }

    pub fn apply(&self, frame: &SignalFrame) -> SignalFrame {
        SignalFrame::new(
            frame
                .samples
                .iter()
                .map(|&x| self.transfer(self.drive_voltage(x)))
                .collect(),
            frame.sample_rate,
        )
    }

    /// d(output)/d(volts) of the polynomial at the bias point.
    pub fn small_signal_slope(&self) -> f64 {
        eval_poly_derivative(&self.coeffs, self.v_bias)
    }

    /// Receiver-side linear rescaling: removes the bias light level and
    /// divides by the small-signal gain, so a linear LED is transparent.
    pub fn linearize(&self, light: &[f64]) -> Result<Vec<f64>> {
        let gain = self.drive_scale * self.small_signal_slope();
        if !(gain.abs() > 1e-12) {
            return Err(Error::param(
                "bias_v",
                format!("small-signal slope vanishes at {} V", self.v_bias),
            ));
        }
        let dc = self.transfer(self.v_bias);
        Ok(light.iter().map(|y| (y - dc) / gain).collect())
    }

    /// LED followed by receiver linearization.
    pub fn distort(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let light: Vec<f64> = samples
            .iter()
            .map(|&x| self.transfer(self.drive_voltage(x)))
            .collect();
        self.linearize(&light)
    }

    /// True when the transfer is non-decreasing on an `n`-point grid over the
    /// conduction range.
    pub fn is_monotone(&self, n: usize) -> bool {
        let step = (self.v_sat - self.v_ton) / (n - 1) as f64;
        let vals: Vec<f64> = (0..n)
            .map(|i| self.transfer(self.v_ton + step * i as f64))
            .collect();
        vals.windows(2).all(|w| w[1] >= w[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horner(coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    #[test]
    fn recovers_known_quintic() {
        let truth = [-40.0, 30.0, -8.0, 0.7, 0.05, -0.01];
        let v: Vec<f64> = (0..21).map(|i| 3.0 + 0.05 * i as f64).collect();
        let y: Vec<f64> = v.iter().map(|&x| horner(&truth, x)).collect();
        let fit = fit_polynomial(&DatasheetCurve::new(v, y).unwrap(), 5).unwrap();
        for (a, b) in fit.iter().zip(truth) {
            assert!((a - b).abs() <= 1e-6 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn too_few_points_is_fit_error() {
        let v = vec![3.0, 3.2, 3.4, 3.6, 3.8, 4.0];
        let y = vec![0.0, 0.1, 0.3, 0.5, 0.8, 1.0];
        let c = DatasheetCurve::new(v.clone(), y.clone()).unwrap();
        assert!(matches!(fit_polynomial(&c, 6), Err(Error::Fit(_))));
        assert!(DatasheetCurve::new(v[..5].to_vec(), y[..5].to_vec()).is_err());
    }

    #[test]
    fn fifth_order_beats_third_order_on_shipped_curve() {
        let c = DatasheetCurve::shipped();
        let r5 = fit_residual(&c, &fit_polynomial(&c, 5).unwrap());
        let r3 = fit_residual(&c, &fit_polynomial(&c, 3).unwrap());
        assert!(r5 <= r3);
    }

    #[test]
    fn shipped_model_is_monotone() {
        let m = LedModel::shipped(DEFAULT_BIAS_V).unwrap();
        assert!(m.is_monotone(1000));
        assert!(m.small_signal_slope() > 0.0);
    }

    #[test]
    fn clamps_below_turn_on() {
        let m = LedModel::shipped(3.0).unwrap();
        let out = m.apply(&SignalFrame::unit(vec![-5.0, -10.0, -100.0]));
        let floor = eval_poly(&m.coeffs, 3.0);
        assert!(out.samples.iter().all(|&y| y == floor));
        let hi = m.apply(&SignalFrame::unit(vec![100.0]));
        assert_eq!(hi.samples[0], eval_poly(&m.coeffs, 4.0));
    }

    #[test]
    fn identity_model_passes_through() {
        let m = LedModel::identity();
        let x = vec![-3.5, 0.0, 0.25, 12.0];
        assert_eq!(m.apply(&SignalFrame::unit(x.clone())).samples, x);
        assert_eq!(m.distort(&x).unwrap(), x);
    }

    #[test]
    fn evaluation_matches_horner() {
        let coeffs = [0.3, -1.2, 2.5, -0.7, 0.11, -0.004];
        let m = LedModel::new(coeffs.to_vec(), -10.0, 10.0, 0.5, 0.8).unwrap();
        let y = m.apply(&SignalFrame::unit(vec![1.7])).samples[0];
        let v = 0.5 + 0.8 * 1.7;
        assert!((y - horner(&coeffs, v)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bias_outside_range() {
        assert!(LedModel::shipped(2.9).is_err());
        assert!(LedModel::shipped(4.1).is_err());
        assert!(LedModel::new(vec![0.0, 1.0], 4.0, 3.0, 3.5, 1.0).is_err());
    }

    #[test]
    fn parse_handles_comments_and_errors() {
        let text = "# header\n3.0 0\n3.2, 0.1\n\n3.4 0.3\n3.6 0.5\n3.8 0.8\n4.0 1.0\n";
        let c = DatasheetCurve::parse(text).unwrap();
        assert_eq!(c.voltage.len(), 6);
        assert_eq!(c.output[1], 0.1);
        let bad = "3.0 0\n3.2 x\n";
        assert!(matches!(
            DatasheetCurve::parse(bad),
            Err(Error::Parse { line: 2, .. })
        ));
        let unsorted = "3.0 0\n3.2 0.1\n3.1 0.2\n3.4 0.3\n3.6 0.5\n4.0 1.0\n";
        assert!(DatasheetCurve::parse(unsorted).is_err());
    }
}
