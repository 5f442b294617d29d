//! Multichannel time-domain signals.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A K-channel real time series with a common sampling rate.
///
/// Row `i` holds the signal recorded at vertex/electrode `i`, in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPanel {
    samples: Array2<f64>,
    sample_rate_hz: f64,
}

impl SignalPanel {
    pub fn new(samples: Array2<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(channels: usize, samples: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(Array2::zeros((channels, samples)), sample_rate_hz)
    }

    /// Number of channels K.
    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    /// Number of time samples T.
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<f64> {
        &mut self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    /// Signal of a single channel.
    pub fn channel(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    /// Panel restricted to the sample range `[start, end)`.
    pub fn slice_time(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::InvalidLength(format!(
                "range {}..{} out of bounds for {} samples",
                range.start,
                range.end,
                self.len()
            )));
        }
        Ok(Self {
            samples: self
                .samples
                .slice(ndarray::s![.., range.start..range.end])
                .to_owned(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.samples.dim() != other.samples.dim() {
            return Err(Error::DimensionMismatch(format!(
                "panels have shapes {:?} and {:?}",
                self.samples.dim(),
                other.samples.dim()
            )));
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::DimensionMismatch(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        Ok(())
    }

    /// Sample-exact sum of two panels (the additive mixing model).
    pub fn mix(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: &self.samples + &other.samples,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Sample-exact difference `self - other`.
    pub fn subtract(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: &self.samples - &other.samples,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Largest absolute sample value over the whole panel.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }
}
