use crate::error::{Error, Result};

/// Source ramp `amplitude * (1 - exp(-t / tau))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceWaveform {
    pub amplitude: f64,
    pub tau: f64,
}

impl SourceWaveform {
    pub fn new(amplitude: f64, tau: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "source amplitude must be >= 0, got {amplitude}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("source tau must be > 0, got {tau}")));
        }
        Ok(Self { amplitude, tau })
    }

    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            tau: 1.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        source_at(self, t)
    }
}

pub fn source_at(waveform: &SourceWaveform, t: f64) -> f64 {
    // -expm1 keeps full relative precision for t << tau
    waveform.amplitude * -(-t.max(0.0) / waveform.tau).exp_m1()
}
