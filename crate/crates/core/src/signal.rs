use num_complex::Complex64;

/// Ordered block of complex constellation symbols.
pub type SymbolBlock = Vec<Complex64>;

/// Real-valued discrete-time samples with their sample rate in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl SignalFrame {
    /// Sample rate used when a frame has no physical time base attached.
    pub const UNIT_RATE: f64 = 1.0;

    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn unit(samples: Vec<f64>) -> Self {
        Self::new(samples, Self::UNIT_RATE)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of the squared samples.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(mut self, gain: f64) -> Self {
        self.samples.iter_mut().for_each(|x| *x *= gain);
        self
    }
}
