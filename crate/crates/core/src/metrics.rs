//! Separation quality metrics: intrusive (ground truth available) and
//! non-intrusive (beat-based) measures, plus the R-peak detection they need.

use ndarray::ArrayView1;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SignalPanel;

/// R-peak locations and QRS intervals per channel.
///
/// Beat `q` of channel `i` is the sample `r_peaks[i][q]` inside the inclusive
/// window `intervals[i][q]`; windows are sorted and non-overlapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeatAnnotations {
    r_peaks: Vec<Vec<usize>>,
    intervals: Vec<Vec<(usize, usize)>>,
}

impl BeatAnnotations {
    pub fn new(r_peaks: Vec<Vec<usize>>, intervals: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        if r_peaks.len() != intervals.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} peak lists but {} interval lists",
                r_peaks.len(),
                intervals.len()
            )));
        }
        for (ch, (peaks, ivals)) in r_peaks.iter().zip(&intervals).enumerate() {
            if peaks.len() != ivals.len() {
                return Err(Error::DimensionMismatch(format!(
                    "channel {ch}: {} peaks but {} intervals",
                    peaks.len(),
                    ivals.len()
                )));
            }
            for q in 0..peaks.len() {
                let (b, e) = ivals[q];
                if b > e || peaks[q] < b || peaks[q] > e {
                    return Err(Error::InvalidParameter(format!(
                        "channel {ch} beat {q}: peak {} outside interval [{b}, {e}]",
                        peaks[q]
                    )));
                }
                if q > 0 && ivals[q - 1].1 >= b {
                    return Err(Error::InvalidParameter(format!(
                        "channel {ch}: intervals {} and {q} overlap",
                        q - 1
                    )));
                }
            }
        }
        Ok(Self { r_peaks, intervals })
    }

    pub fn num_channels(&self) -> usize {
        self.r_peaks.len()
    }

    /// Beat count Q (identical across channels by construction).
    pub fn num_beats(&self) -> usize {
        self.r_peaks.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.num_beats() == 0
    }

    pub fn r_peaks(&self) -> &[Vec<usize>] {
        &self.r_peaks
    }

    pub fn intervals(&self) -> &[Vec<(usize, usize)>] {
        &self.intervals
    }
}

/// A panel-level metric: the mean over usable channels, the per-channel
/// values (`None` when a channel was excluded), and any guard warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricOutcome {
    pub value: f64,
    pub per_channel: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

fn mean_of_included(per_channel: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = per_channel.iter().flatten().copied().collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Normalized mean square error: per channel, error energy over reference
/// energy, averaged across channels. Zero for a perfect estimate, one for
/// an all-zero estimate.
pub fn nmse(a: &SignalPanel, a_est: &SignalPanel) -> Result<MetricOutcome> {
    a.check_compatible(a_est)?;
    let mut per_channel = Vec::with_capacity(a.channels());
    let mut warnings = Vec::new();
    for ch in 0..a.channels() {
        let reference = a.channel(ch);
        let estimate = a_est.channel(ch);
        let energy: f64 = reference.iter().map(|v| v * v).sum();
        if energy <= 0.0 {
            warnings.push(format!("channel {ch}: zero-energy reference excluded from NMSE"));
            per_channel.push(None);
            continue;
        }
        let err: f64 = reference
            .iter()
            .zip(estimate.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        per_channel.push(Some(err / energy));
    }
    let value = mean_of_included(&per_channel).ok_or_else(|| {
        Error::InsufficientData("every reference channel has zero energy".into())
    })?;
    Ok(MetricOutcome { value, per_channel, warnings })
}

/// Snap a correlation to the exact boundary when it is within rounding
/// distance; affine relations then score exactly +/-1.
fn snap_unit(r: f64) -> f64 {
    if r > 1.0 - 1e-12 {
        1.0
    } else if r < -1.0 + 1e-12 {
        -1.0
    } else {
        r
    }
}

fn pearson(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(snap_unit(sxy / (sxx.sqrt() * syy.sqrt())))
    }
}

/// Mean Pearson correlation across channels, mean-removed per channel.
/// Constant channels are excluded with a warning.
pub fn cc(a: &SignalPanel, a_est: &SignalPanel) -> Result<MetricOutcome> {
    a.check_compatible(a_est)?;
    let mut per_channel = Vec::with_capacity(a.channels());
    let mut warnings = Vec::new();
    for ch in 0..a.channels() {
        match pearson(a.channel(ch), a_est.channel(ch)) {
            Some(r) => per_channel.push(Some(r)),
            None => {
                warnings.push(format!("channel {ch}: constant signal excluded from CC"));
                per_channel.push(None);
            }
        }
    }
    let value = mean_of_included(&per_channel)
        .ok_or_else(|| Error::InsufficientData("every channel is constant".into()))?;
    Ok(MetricOutcome { value, per_channel, warnings })
}

/// Beat detector settings: amplitude threshold as a fraction of the global
/// maximum, refractory spacing, and the QRS half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatDetectConfig {
    pub threshold_frac: f64,
    pub refractory_ms: f64,
    pub qrs_half_width_ms: f64,
}

impl Default for BeatDetectConfig {
    fn default() -> Self {
        Self { threshold_frac: 0.6, refractory_ms: 200.0, qrs_half_width_ms: 50.0 }
    }
}

/// Detect beats on the channel-mean envelope, then refine the R-peak of
/// each beat per channel as the largest magnitude inside the beat window.
pub fn detect_beats(panel: &SignalPanel, cfg: &BeatDetectConfig) -> Result<BeatAnnotations> {
    if !(cfg.threshold_frac > 0.0 && cfg.threshold_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold fraction must lie in (0, 1], got {}",
            cfg.threshold_frac
        )));
    }
    if cfg.refractory_ms < 0.0 || cfg.qrs_half_width_ms < 0.0 {
        return Err(Error::InvalidParameter(
            "refractory and QRS half-width must be nonnegative".into(),
        ));
    }
    let k = panel.channels();
    let t = panel.len();
    let rate = panel.sample_rate_hz();
    let refractory = ((cfg.refractory_ms * rate / 1000.0).round() as usize).max(1);
    let hw = (cfg.qrs_half_width_ms * rate / 1000.0).round() as usize;

    // Channel-mean magnitude is polarity-proof across the array.
    let envelope: Vec<f64> = (0..t)
        .map(|ti| (0..k).map(|ch| panel.samples()[[ch, ti]].abs()).sum::<f64>() / k as f64)
        .collect();
    let max_env = envelope.iter().fold(0.0f64, |m, &v| m.max(v));
    if max_env <= 0.0 {
        return BeatAnnotations::new(vec![Vec::new(); k], vec![Vec::new(); k]);
    }
    let thresh = cfg.threshold_frac * max_env;

    // Local maxima above threshold, merged within the refractory period.
    let mut peaks: Vec<usize> = Vec::new();
    for ti in 0..t {
        if envelope[ti] < thresh {
            continue;
        }
        let left_ok = ti == 0 || envelope[ti] >= envelope[ti - 1];
        let right_ok = ti + 1 == t || envelope[ti] > envelope[ti + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        match peaks.last() {
            Some(&last) if ti - last < refractory => {
                if envelope[ti] > envelope[last] {
                    *peaks.last_mut().unwrap() = ti;
                }
            }
            _ => peaks.push(ti),
        }
    }

    let mut r_peaks = vec![Vec::with_capacity(peaks.len()); k];
    let mut intervals = vec![Vec::with_capacity(peaks.len()); k];
    for ch in 0..k {
        for &p in &peaks {
            let b = p.saturating_sub(hw);
            let e = (p + hw).min(t - 1);
            let mut best = b;
            let mut best_val = -1.0;
            for ti in b..=e {
                let v = panel.samples()[[ch, ti]].abs();
                if v > best_val {
                    best_val = v;
                    best = ti;
                }
            }
            let rb = best.saturating_sub(hw);
            let re = (best + hw).min(t - 1);
            r_peaks[ch].push(best);
            intervals[ch].push((rb, re));
        }
        // Clip neighboring windows at the midpoint so they never overlap.
        for q in 1..intervals[ch].len() {
            let prev_peak = r_peaks[ch][q - 1];
            let peak = r_peaks[ch][q];
            if intervals[ch][q].0 <= intervals[ch][q - 1].1 {
                let mid = (prev_peak + peak) / 2;
                intervals[ch][q - 1].1 = mid.max(prev_peak);
                intervals[ch][q].0 = (mid + 1).min(peak);
            }
        }
    }
    BeatAnnotations::new(r_peaks, intervals)
}

const VDR_RESIDUAL_FLOOR: f64 = 1e-12;

/// Ventricular depolarization reduction: `10*log10` of the mixed-to-residual
/// R-peak amplitude ratio, averaged over beats and channels. Zero means
/// nothing was removed; larger is better.
pub fn vdr(
    mixed: &SignalPanel,
    residual: &SignalPanel,
    ann: &BeatAnnotations,
) -> Result<MetricOutcome> {
    mixed.check_compatible(residual)?;
    if ann.num_channels() != mixed.channels() {
        return Err(Error::DimensionMismatch(format!(
            "annotations cover {} channels, panel has {}",
            ann.num_channels(),
            mixed.channels()
        )));
    }
    if ann.is_empty() {
        return Err(Error::InsufficientData("no annotated beats for VDR".into()));
    }
    let mut per_channel = Vec::with_capacity(mixed.channels());
    let mut warnings = Vec::new();
    for ch in 0..mixed.channels() {
        let mut acc = 0.0;
        let mut used = 0usize;
        for &r in &ann.r_peaks()[ch] {
            let rm = mixed.samples()[[ch, r]].abs();
            if rm <= 0.0 {
                warnings.push(format!("channel {ch}: zero mixed amplitude at peak {r}, skipped"));
                continue;
            }
            let mut rr = residual.samples()[[ch, r]].abs();
            if rr < VDR_RESIDUAL_FLOOR * rm {
                warnings.push(format!(
                    "channel {ch}: residual at peak {r} clamped to avoid infinite ratio"
                ));
                rr = VDR_RESIDUAL_FLOOR * rm;
            }
            acc += 10.0 * (rm / rr).log10();
            used += 1;
        }
        per_channel.push(if used > 0 { Some(acc / used as f64) } else { None });
    }
    let value = mean_of_included(&per_channel)
        .ok_or_else(|| Error::InsufficientData("no usable beats for VDR".into()))?;
    Ok(MetricOutcome { value, per_channel, warnings })
}

/// Ventricular residue: per beat, the largest in-window magnitude times the
/// root in-window energy, normalized by the channel's root-mean-square,
/// averaged over beats and channels. Degree-1 homogeneous in the signal.
pub fn vr(a_est: &SignalPanel, ann: &BeatAnnotations) -> Result<MetricOutcome> {
    if ann.num_channels() != a_est.channels() {
        return Err(Error::DimensionMismatch(format!(
            "annotations cover {} channels, panel has {}",
            ann.num_channels(),
            a_est.channels()
        )));
    }
    if ann.is_empty() {
        return Err(Error::InsufficientData("no annotated beats for VR".into()));
    }
    let t = a_est.len() as f64;
    let mut per_channel = Vec::with_capacity(a_est.channels());
    let mut warnings = Vec::new();
    for ch in 0..a_est.channels() {
        let energy: f64 = a_est.channel(ch).iter().map(|v| v * v).sum();
        let rms = (energy / t).sqrt();
        if rms <= 0.0 {
            warnings.push(format!("channel {ch}: zero-energy estimate, VR defined as 0"));
            per_channel.push(Some(0.0));
            continue;
        }
        let mut acc = 0.0;
        for &(b, e) in &ann.intervals()[ch] {
            let mut amp = 0.0f64;
            let mut qrs_energy = 0.0;
            for ti in b..=e {
                let v = a_est.samples()[[ch, ti]];
                amp = amp.max(v.abs());
                qrs_energy += v * v;
            }
            acc += amp * qrs_energy.sqrt() / rms;
        }
        per_channel.push(Some(acc / ann.num_beats() as f64));
    }
    let value = mean_of_included(&per_channel).expect("per-channel VR is always defined");
    Ok(MetricOutcome { value, per_channel, warnings })
}
