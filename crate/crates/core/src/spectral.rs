//! Energy maps, level discretization, graph-variation measures and
//! band-limitedness checks for joint vertex/time-frequency spectra.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::LaplacianSpectrum;
use crate::panel::SignalPanel;
use crate::transforms::{gft_panel, JointSpectrum, StftTensor};

/// Discrete energy level of a map cell.
///
/// `L1` is within 1 dB of the map maximum, `L2` within 6 dB, `L3` below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    L1,
    L2,
    L3,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
        }
    }
}

/// Upper level boundary: cells at or above this are L1.
pub const LEVEL1_FLOOR_DB: f64 = -1.0;
/// Lower level boundary: cells below this are L3.
pub const LEVEL2_FLOOR_DB: f64 = -6.0;

/// Energy map in decibels relative to its own maximum.
///
/// Rows/columns follow the source analysis: frames x one-sided bins for
/// time-frequency energy, graph frequencies x time for vertex-spectral
/// energy. Zero-amplitude cells carry `-inf`; every finite cell is <= 0 dB
/// and the maximum is exactly 0 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMapDb {
    values: Array2<f64>,
    reference_max: f64,
}

impl EnergyMapDb {
    /// Normalize a map of linear amplitudes by its global maximum.
    pub fn from_linear_amplitudes(amps: &Array2<f64>) -> Result<Self> {
        let max = amps.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if !(max > 0.0) {
            return Err(Error::UndefinedReference);
        }
        let values = amps.mapv(|a| {
            if a == 0.0 {
                f64::NEG_INFINITY
            } else {
                20.0 * (a.abs() / max).log10()
            }
        });
        Ok(Self { values, reference_max: max })
    }

    /// Rebuild a map from already-normalized dB values, e.g. when loading a
    /// stored map. `reference_max` is the linear amplitude rendered as 0 dB.
    pub fn from_db_values(values: Array2<f64>, reference_max: f64) -> Result<Self> {
        if !(reference_max > 0.0 && reference_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reference amplitude must be positive and finite, got {reference_max}"
            )));
        }
        Ok(Self { values, reference_max })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Linear amplitude rendered as 0 dB.
    pub fn reference_max(&self) -> f64 {
        self.reference_max
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-cell level labels with the thresholds that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMap {
    labels: Array2<Level>,
    t1_db: f64,
    t2_db: f64,
}

impl LevelMap {
    pub fn labels(&self) -> &Array2<Level> {
        &self.labels
    }

    pub fn t1_db(&self) -> f64 {
        self.t1_db
    }

    pub fn t2_db(&self) -> f64 {
        self.t2_db
    }
}

/// Classify a level given the two thresholds.
fn classify(e: f64, t1: f64, t2: f64) -> Level {
    if e >= t1 {
        Level::L1
    } else if e >= t2 {
        Level::L2
    } else {
        Level::L3
    }
}

/// Discretize an energy map into L1/L2/L3 at -1 dB and -6 dB.
pub fn quantize_levels(e: &EnergyMapDb) -> LevelMap {
    let labels = e.values().mapv(|v| classify(v, LEVEL1_FLOOR_DB, LEVEL2_FLOOR_DB));
    LevelMap { labels, t1_db: LEVEL1_FLOOR_DB, t2_db: LEVEL2_FLOOR_DB }
}

/// Normalized time-frequency energy of one channel, frames x one-sided bins.
pub fn normalized_energy_db(t: &StftTensor, channel: usize) -> Result<EnergyMapDb> {
    if channel >= t.num_channels() {
        return Err(Error::InvalidParameter(format!(
            "channel {channel} out of range for {} channels",
            t.num_channels()
        )));
    }
    let m = t.num_frames();
    let bins = t.one_sided_bins();
    let amps = Array2::from_shape_fn((m, bins), |(mi, fi)| t.coeffs()[[channel, mi, fi]].norm());
    EnergyMapDb::from_linear_amplitudes(&amps)
}

/// Per-instant GFT magnitudes of a panel, graph frequencies x time,
/// normalized like [`normalized_energy_db`].
pub fn gft_energy_db(panel: &SignalPanel, spectrum: &LaplacianSpectrum) -> Result<EnergyMapDb> {
    let xt = gft_panel(spectrum, panel.samples())?;
    EnergyMapDb::from_linear_amplitudes(&xt.mapv(f64::abs))
}

/// Per-instant squared GFT coefficients, graph frequencies x time.
pub fn gft_energy_linear(panel: &SignalPanel, spectrum: &LaplacianSpectrum) -> Result<Array2<f64>> {
    let xt = gft_panel(spectrum, panel.samples())?;
    Ok(xt.mapv(|v| v * v))
}

/// Frequency band `[0, f_max]` in hertz over which `level` occurs, with
/// `f_max` the highest bin (of spacing `bin_width_hz`) attaining the level
/// in any frame. Returns `[0, 0]` when the level never occurs above DC.
/// Columns of the map are frequency bins, rows are frames.
pub fn relevant_band(lm: &LevelMap, level: Level, bin_width_hz: f64) -> (f64, f64) {
    let mut max_bin = 0usize;
    for ((_, fi), &lab) in lm.labels().indexed_iter() {
        if lab == level && fi > max_bin {
            max_bin = fi;
        }
    }
    (0.0, max_bin as f64 * bin_width_hz)
}

/// Laplacian quadratic form `x^T L x`: weighted sum of squared differences
/// across edges, zero for constant signals.
pub fn quadratic_variation(l: &Array2<f64>, x: ArrayView1<'_, f64>) -> Result<f64> {
    if l.nrows() != l.ncols() || l.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}x{} incompatible with vector of length {}",
            l.nrows(),
            l.ncols(),
            x.len()
        )));
    }
    Ok(l.dot(&x).dot(&x).max(0.0))
}

/// Quadratic variation of every time instant of a panel.
pub fn quadratic_variation_series(l: &Array2<f64>, panel: &SignalPanel) -> Result<VariationSeries> {
    let mut values = Vec::with_capacity(panel.len());
    for t in 0..panel.len() {
        values.push(quadratic_variation(l, panel.samples().column(t))?);
    }
    Ok(VariationSeries { values, kind: VariationKind::Raw })
}

/// Rayleigh quotient `x^T L x / x^T x`, bounded by the extreme eigenvalues.
pub fn normalized_variation(l: &Array2<f64>, x: ArrayView1<'_, f64>) -> Result<f64> {
    let denom: f64 = x.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter(
            "normalized variation of the zero vector is undefined".into(),
        ));
    }
    Ok(quadratic_variation(l, x)? / denom)
}

/// Same quotient computed in the spectral domain: an eigenvalue average
/// weighted by squared GFT coefficients. Must agree with
/// [`normalized_variation`] to within 1e-10 for any vector.
pub fn normalized_variation_modal(
    spectrum: &LaplacianSpectrum,
    x: ArrayView1<'_, f64>,
) -> Result<f64> {
    let xt = crate::transforms::gft(spectrum, x)?;
    let denom: f64 = xt.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter(
            "normalized variation of the zero vector is undefined".into(),
        ));
    }
    let num: f64 = xt.iter().zip(spectrum.lambdas()).map(|(v, &lam)| lam * v * v).sum();
    Ok((num / denom).max(0.0))
}

/// Variation values over time or frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSeries {
    values: Vec<f64>,
    kind: VariationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationKind {
    Raw,
    Normalized,
}

impl VariationSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> VariationKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Smallest index `k_b` whose cumulative share of the total energy, summed
/// over all time instants, reaches fraction `p`.
pub fn boundary_graph_frequency(panel_energy: &Array2<f64>, p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "energy fraction must lie in (0, 1), got {p}"
        )));
    }
    let per_mode: Array1<f64> = panel_energy.sum_axis(ndarray::Axis(1));
    let total: f64 = per_mode.sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedReference);
    }
    let target = p * total;
    let mut cum = 0.0;
    for (k, &e) in per_mode.iter().enumerate() {
        cum += e;
        // Slack admits exact-fraction boundaries despite rounding.
        if cum + 1e-12 * total >= target {
            return Ok(k);
        }
    }
    Ok(per_mode.len() - 1)
}

const ZERO_ENERGY_TOL: f64 = 1e-30;

/// Mean normalized variation per frame over a low band `[0, split_hz]` and a
/// high band `(split_hz, Nyquist]`; the split bin belongs to the low band.
/// Zero-energy bins are skipped; a frame with no energy in a band yields 0.
pub fn band_average_variation(
    j: &JointSpectrum,
    spectrum: &LaplacianSpectrum,
    split_hz: f64,
) -> Result<(VariationSeries, VariationSeries)> {
    let k = j.num_vertices();
    if spectrum.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "tensor has {k} graph frequencies, basis dimension is {}",
            spectrum.len()
        )));
    }
    let bin_hz = j.bin_hz();
    let nyquist = j.sample_rate_hz() / 2.0;
    if !(split_hz > 0.0 && split_hz < nyquist) {
        return Err(Error::InvalidParameter(format!(
            "split frequency must lie in (0, {nyquist}), got {split_hz}"
        )));
    }
    let bins = j.one_sided_bins();
    let split_bin = (split_hz / bin_hz).floor() as usize;
    let low: Vec<usize> = (0..bins).filter(|&f| f <= split_bin).collect();
    let high: Vec<usize> = (0..bins).filter(|&f| f > split_bin).collect();
    if high.is_empty() {
        return Err(Error::InvalidParameter(
            "high band contains no frequency bins".into(),
        ));
    }

    let series = |band: &[usize]| -> VariationSeries {
        let mut values = Vec::with_capacity(j.num_frames());
        for m in 0..j.num_frames() {
            let mut sum = 0.0;
            let mut used = 0usize;
            for &f in band {
                let mut denom = 0.0;
                let mut num = 0.0;
                for k_idx in 0..k {
                    let e = j.coeffs()[[k_idx, m, f]].norm_sqr();
                    denom += e;
                    num += spectrum.lambdas()[k_idx] * e;
                }
                if denom > ZERO_ENERGY_TOL {
                    sum += (num / denom).max(0.0);
                    used += 1;
                }
            }
            values.push(if used > 0 { sum / used as f64 } else { 0.0 });
        }
        VariationSeries { values, kind: VariationKind::Normalized }
    };

    Ok((series(&low), series(&high)))
}

/// True iff no coefficient above graph frequency `k0` exceeds `tol`.
pub fn is_bandlimited(xt: ArrayView1<'_, f64>, k0: usize, tol: f64) -> bool {
    xt.iter().skip(k0 + 1).all(|v| v.abs() <= tol)
}

/// Complex-coefficient variant of [`is_bandlimited`].
pub fn is_bandlimited_complex(xt: ArrayView1<'_, Complex64>, k0: usize, tol: f64) -> bool {
    xt.iter().skip(k0 + 1).all(|v| v.norm() <= tol)
}
