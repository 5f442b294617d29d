//! Ventricular/atrial source separation on the electrode graph.
//!
//! Ventricular activity is spatially smooth across the array, so on frames
//! where it is detected the per-(frame, bin) graph spectrum is shrunk toward
//! the low graph frequencies by a closed-form diagonal filter; the atrial
//! estimate is the remainder. An average-beat-subtraction baseline is
//! provided for comparison.

use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, Array3, ArrayView1};
use num_complex::Complex64;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{eigendecompose, ElectrodeGraph, LaplacianSpectrum};
use crate::panel::SignalPanel;
use crate::transforms::{inverse_joint, joint_transform, FrameConfig, JointSpectrum};

/// Parameters of the graph-based extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GAEParams {
    c: f64,
    mu: f64,
    va_threshold_factor: f64,
}

impl GAEParams {
    /// `c` bounds the normalized variation of the smooth component, `mu`
    /// weights that bound, and `va_threshold_factor` scales the median-based
    /// ventricular-activity detector.
    pub fn new(c: f64, mu: f64, va_threshold_factor: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smoothness bound c must be nonnegative, got {c}"
            )));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "multiplier mu must be nonnegative, got {mu}"
            )));
        }
        // With nonnegative eigenvalues the smallest shrinkage denominator is
        // 1 - mu*c, at the zero graph frequency.
        if mu * c >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "mu*c = {} must be below 1 for a positive shrinkage denominator",
                mu * c
            )));
        }
        if !(va_threshold_factor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "detection threshold factor must be positive, got {va_threshold_factor}"
            )));
        }
        Ok(Self { c, mu, va_threshold_factor })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn va_threshold_factor(&self) -> f64 {
        self.va_threshold_factor
    }
}

impl Default for GAEParams {
    fn default() -> Self {
        Self { c: 0.14, mu: 2.0, va_threshold_factor: 4.0 }
    }
}

/// Outcome of a separation: the input splits exactly into the two parts.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub atrial: SignalPanel,
    pub ventricular: SignalPanel,
    /// Frame indices on which ventricular activity was detected; empty for
    /// methods that do not operate framewise.
    pub va_frames: BTreeSet<usize>,
}

/// Shrink a graph spectrum toward low variation: mode `k` is scaled by
/// `1 / (1 - mu*c + mu*lambda_k)`. Modes rougher than `c` shrink, smoother
/// ones expand, and a mode with `lambda_k = c` passes unchanged.
pub fn gae_shrink(
    y_tilde: ArrayView1<'_, Complex64>,
    lambdas: &[f64],
    p: &GAEParams,
) -> Result<Array1<Complex64>> {
    if y_tilde.len() != lambdas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients but {} eigenvalues",
            y_tilde.len(),
            lambdas.len()
        )));
    }
    let mut out = Array1::from_elem(y_tilde.len(), Complex64::new(0.0, 0.0));
    for (k, (&y, &lam)) in y_tilde.iter().zip(lambdas).enumerate() {
        let denom = 1.0 - p.mu * p.c + p.mu * lam;
        if !(denom > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage denominator {denom} at graph frequency {k} is not positive"
            )));
        }
        out[k] = y / denom;
    }
    Ok(out)
}

/// Frames whose zero-graph-frequency energy exceeds `factor` times the
/// median across frames.
pub fn detect_va_frames(j: &JointSpectrum, p: &GAEParams) -> Result<BTreeSet<usize>> {
    let m = j.num_frames();
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "ventricular-activity detection needs at least 3 frames, got {m}"
        )));
    }
    let energies: Vec<f64> = (0..m)
        .map(|mi| {
            (0..j.num_bins())
                .map(|fi| j.coeffs()[[0, mi, fi]].norm_sqr())
                .sum()
        })
        .collect();
    let med = median(&energies);
    Ok(energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > p.va_threshold_factor * med)
        .map(|(i, _)| i)
        .collect())
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Full graph-based extraction: joint transform, framewise detection,
/// shrinkage on flagged frames (the smooth estimate is zero elsewhere),
/// and inverse transforms of both components.
pub fn extract_atrial(
    panel: &SignalPanel,
    graph: &ElectrodeGraph,
    cfg: &FrameConfig,
    p: &GAEParams,
) -> Result<SeparationResult> {
    let spectrum = eigendecompose(&graph.laplacian())?;
    extract_atrial_with_spectrum(panel, &spectrum, cfg, p)
}

/// [`extract_atrial`] with a precomputed Laplacian spectrum.
pub fn extract_atrial_with_spectrum(
    panel: &SignalPanel,
    spectrum: &LaplacianSpectrum,
    cfg: &FrameConfig,
    p: &GAEParams,
) -> Result<SeparationResult> {
    let js = joint_transform(panel, cfg, spectrum)?;
    let va_frames = detect_va_frames(&js, p)?;

    let (k, m, f) = {
        let sh = js.coeffs().shape();
        (sh[0], sh[1], sh[2])
    };
    let mut smooth = Array3::from_elem((k, m, f), Complex64::new(0.0, 0.0));
    for &mi in &va_frames {
        for fi in 0..f {
            let col = js.coeffs().slice(s![.., mi, fi]);
            let shrunk = gae_shrink(col, spectrum.lambdas(), p)?;
            smooth.slice_mut(s![.., mi, fi]).assign(&shrunk);
        }
    }
    let atrial_coeffs = js.coeffs() - &smooth;

    let ventricular_js = JointSpectrum::new(smooth, js.sample_rate_hz(), *js.frame_config())?;
    let atrial_js = JointSpectrum::new(atrial_coeffs, js.sample_rate_hz(), *js.frame_config())?;
    let out_len = Some(panel.len());
    let (ventricular, _) = inverse_joint(&ventricular_js, spectrum, out_len)?;
    let (atrial, _) = inverse_joint(&atrial_js, spectrum, out_len)?;

    Ok(SeparationResult { atrial, ventricular, va_frames })
}

/// Average-beat-subtraction baseline: per channel, average the beat-aligned
/// windows around the given peaks into a template, then subtract it at every
/// beat. Outside beat windows the atrial estimate is the input.
pub fn abs_baseline(
    panel: &SignalPanel,
    r_peaks: &[Vec<usize>],
    qrs_half_width: usize,
) -> Result<SeparationResult> {
    let k = panel.channels();
    if r_peaks.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} peak lists for {k} channels",
            r_peaks.len()
        )));
    }
    let t = panel.len();
    let width = 2 * qrs_half_width + 1;
    let mut ventricular = Array2::zeros((k, t));

    for ch in 0..k {
        let peaks = &r_peaks[ch];
        if peaks.len() < 2 {
            return Err(Error::InsufficientBeats { channel: ch, found: peaks.len() });
        }
        // Offsets near the recording edges see fewer beats; average each
        // offset over the beats that actually cover it.
        let mut template = vec![0.0f64; width];
        let mut counts = vec![0usize; width];
        for &peak in peaks {
            for off in 0..width {
                let idx = peak as isize + off as isize - qrs_half_width as isize;
                if idx >= 0 && (idx as usize) < t {
                    template[off] += panel.samples()[[ch, idx as usize]];
                    counts[off] += 1;
                }
            }
        }
        for off in 0..width {
            if counts[off] > 0 {
                template[off] /= counts[off] as f64;
            }
        }
        for &peak in peaks {
            for off in 0..width {
                let idx = peak as isize + off as isize - qrs_half_width as isize;
                if idx >= 0 && (idx as usize) < t {
                    ventricular[[ch, idx as usize]] = template[off];
                }
            }
        }
    }

    let atrial = panel.samples() - &ventricular;
    Ok(SeparationResult {
        atrial: SignalPanel::new(atrial, panel.sample_rate_hz())?,
        ventricular: SignalPanel::new(ventricular, panel.sample_rate_hz())?,
        va_frames: BTreeSet::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::Window;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn params(c: f64, mu: f64, factor: f64) -> GAEParams {
        GAEParams::new(c, mu, factor).unwrap()
    }

    fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Array1<Complex64> {
        Array1::from_shape_fn(n, |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn params_validation() {
        assert!(GAEParams::new(0.14, 2.0, 4.0).is_ok());
        assert!(GAEParams::new(-0.1, 2.0, 4.0).is_err());
        assert!(GAEParams::new(0.14, -1.0, 4.0).is_err());
        assert!(GAEParams::new(0.6, 2.0, 4.0).is_err()); // mu*c = 1.2
        assert!(GAEParams::new(0.5, 2.0, 4.0).is_err()); // mu*c = 1.0 exactly
        assert!(GAEParams::new(0.14, 2.0, 0.0).is_err());
        let d = GAEParams::default();
        assert_abs_diff_eq!(d.c(), 0.14);
        assert_abs_diff_eq!(d.mu(), 2.0);
        assert_abs_diff_eq!(d.va_threshold_factor(), 4.0);
    }

    #[test]
    fn shrink_with_zero_mu_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_complex(&mut rng, 6);
        let lambdas = [0.0, 0.3, 0.9, 1.5, 2.2, 4.0];
        let p = params(0.14, 0.0, 4.0);
        let v = gae_shrink(y.view(), &lambdas, &p).unwrap();
        for k in 0..6 {
            assert!((v[k] - y[k]).norm() < 1e-15);
        }
    }

    #[test]
    fn shrink_fixed_point_at_lambda_equal_c() {
        let y = Array1::from_elem(3, Complex64::new(2.0, -1.0));
        let lambdas = [0.0, 0.14, 1.0];
        let p = params(0.14, 2.0, 4.0);
        let v = gae_shrink(y.view(), &lambdas, &p).unwrap();
        // Denominator at lambda = c is exactly 1.
        assert!((v[1] - y[1]).norm() < 1e-15);
        // Zero mode is amplified by 1/(1 - mu*c).
        let expect = y[0] / (1.0 - 2.0 * 0.14);
        assert!((v[0] - expect).norm() < 1e-12);
        // Rough mode shrinks.
        assert!(v[2].norm() < y[2].norm());
    }

    #[test]
    fn shrink_contracts_rough_and_expands_smooth_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = params(0.2, 1.5, 4.0);
        for _ in 0..50 {
            let y = random_complex(&mut rng, 8);
            let lambdas: Vec<f64> = {
                let mut l: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..3.0)).collect();
                l.sort_by(f64::total_cmp);
                l
            };
            let v = gae_shrink(y.view(), &lambdas, &p).unwrap();
            for k in 0..8 {
                if y[k].norm() < 1e-9 {
                    continue;
                }
                if lambdas[k] > 0.2 + 1e-12 {
                    assert!(v[k].norm() < y[k].norm());
                } else if lambdas[k] < 0.2 - 1e-12 {
                    assert!(v[k].norm() > y[k].norm());
                }
            }
        }
    }

    #[test]
    fn shrink_reports_offending_mode() {
        let y = Array1::from_elem(2, Complex64::new(1.0, 0.0));
        let lambdas = [0.0, -0.6];
        let p = params(0.14, 2.0, 4.0);
        let err = gae_shrink(y.view(), &lambdas, &p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("graph frequency 1"), "{msg}");
    }

    /// Conjugate gradient on the normal equations of the quadratic cost
    /// `||y - v||^2 + mu * v^H (diag(lambda) - c I) v`, i.e. solving
    /// `(I + mu (diag(lambda) - c I)) v = y` through matrix-vector products
    /// only. Never touches the closed-form denominator and converges to
    /// machine precision in at most `n` steps on this diagonal system,
    /// regardless of conditioning.
    fn lagrangian_minimizer(
        y: &Array1<Complex64>,
        lambdas: &[f64],
        c: f64,
        mu: f64,
    ) -> Array1<Complex64> {
        let n = y.len();
        let apply = |x: &Array1<Complex64>| -> Array1<Complex64> {
            Array1::from_shape_fn(n, |k| x[k] * (1.0 + mu * (lambdas[k] - c)))
        };
        let dot = |a: &Array1<Complex64>, b: &Array1<Complex64>| -> f64 {
            a.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum()
        };
        let mut v = Array1::from_elem(n, Complex64::new(0.0, 0.0));
        let mut r = y.clone();
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        for _ in 0..2 * n + 4 {
            if rs < 1e-30 {
                break;
            }
            let ap = apply(&p);
            let alpha = rs / dot(&p, &ap);
            for k in 0..n {
                v[k] += p[k] * alpha;
                r[k] -= ap[k] * alpha;
            }
            let rs_next = dot(&r, &r);
            let beta = rs_next / rs;
            rs = rs_next;
            for k in 0..n {
                p[k] = r[k] + p[k] * beta;
            }
        }
        v
    }

    #[test]
    fn shrink_matches_numerical_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..200 {
            let n = rng.random_range(2..=12);
            let y = random_complex(&mut rng, n);
            let mut lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
            lambdas.sort_by(f64::total_cmp);
            lambdas[0] = 0.0;
            let c: f64 = rng.random_range(0.0..0.4);
            let mu = rng.random_range(0.0..1.0 / c.max(0.2));
            let p = params(c, mu, 4.0);
            let closed = gae_shrink(y.view(), &lambdas, &p).unwrap();
            let oracle = lagrangian_minimizer(&y, &lambdas, c, mu);
            let scale = oracle.iter().map(|z| z.norm()).fold(1e-12, f64::max);
            for k in 0..n {
                assert!(
                    (closed[k] - oracle[k]).norm() / scale < 1e-8,
                    "trial {trial} mode {k}: closed {} oracle {}",
                    closed[k],
                    oracle[k]
                );
            }
        }
    }

    fn spectrum_with_energy(
        profile: &[f64],
        bins: usize,
    ) -> JointSpectrum {
        // One-channel-free synthetic tensor: K=4 modes, |profile| frames.
        let m = profile.len();
        let mut coeffs = Array3::from_elem((4, m, bins), Complex64::new(0.0, 0.0));
        for (mi, &amp) in profile.iter().enumerate() {
            for fi in 0..bins {
                coeffs[[0, mi, fi]] = Complex64::new(amp, 0.0);
                coeffs[[2, mi, fi]] = Complex64::new(0.5, 0.1);
            }
        }
        let cfg = FrameConfig::new(bins, bins / 2, Window::Hann).unwrap();
        JointSpectrum::new(coeffs, 1000.0, cfg).unwrap()
    }

    #[test]
    fn detection_flags_outlier_frame() {
        // Frame 2 carries 100x the zero-mode energy of the rest.
        let js = spectrum_with_energy(&[1.0, 1.0, 10.0, 1.0, 1.0], 16);
        let p = params(0.14, 2.0, 10.0);
        let flagged = detect_va_frames(&js, &p).unwrap();
        assert_eq!(flagged, BTreeSet::from([2]));
    }

    #[test]
    fn detection_is_empty_for_uniform_and_silent_spectra() {
        let uniform = spectrum_with_energy(&[1.0; 6], 16);
        let p = params(0.14, 2.0, 4.0);
        assert!(detect_va_frames(&uniform, &p).unwrap().is_empty());

        let silent = spectrum_with_energy(&[0.0; 5], 16);
        assert!(detect_va_frames(&silent, &p).unwrap().is_empty());
    }

    #[test]
    fn detection_needs_three_frames() {
        let js = spectrum_with_energy(&[1.0, 5.0], 16);
        let p = params(0.14, 2.0, 4.0);
        assert!(matches!(
            detect_va_frames(&js, &p),
            Err(Error::InsufficientData(_))
        ));
    }

    fn grid_graph(rows: usize, cols: usize) -> ElectrodeGraph {
        ElectrodeGraph::build_grid(rows, cols, 2.0, &std::collections::BTreeSet::new()).unwrap()
    }

    #[test]
    fn no_detection_passes_input_through() {
        let g = grid_graph(2, 3);
        let cfg = FrameConfig::new(100, 50, Window::Hann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = Array2::from_shape_fn((6, 600), |_| rng.random_range(-1.0..1.0));
        let panel = SignalPanel::new(samples, 1000.0).unwrap();
        let res = extract_atrial(&panel, &g, &cfg, &GAEParams::default()).unwrap();
        assert!(res.va_frames.is_empty());
        // Smooth estimate is identically zero, atrial matches on interior.
        assert_eq!(res.ventricular.max_abs(), 0.0);
        for ch in 0..6 {
            for t in 50..550 {
                assert_abs_diff_eq!(
                    res.atrial.samples()[[ch, t]],
                    panel.samples()[[ch, t]],
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn burst_is_detected_and_split_consistently() {
        let g = grid_graph(2, 3);
        let cfg = FrameConfig::new(100, 50, Window::Hann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Small rough background plus a large spatially-constant burst.
        let mut samples = Array2::from_shape_fn((6, 800), |_| rng.random_range(-0.05..0.05));
        for t in 380..420 {
            let w = ((t as f64 - 380.0) / 39.0 * std::f64::consts::PI).sin();
            for ch in 0..6 {
                samples[[ch, t]] += 8.0 * w;
            }
        }
        let panel = SignalPanel::new(samples, 1000.0).unwrap();
        let res = extract_atrial(&panel, &g, &cfg, &GAEParams::default()).unwrap();
        assert!(!res.va_frames.is_empty());
        // The burst lives around sample 400: frames 6..=7 cover 300..450.
        assert!(res.va_frames.iter().all(|&m| (6..=8).contains(&m)), "{:?}", res.va_frames);

        // Split is exact on the interior.
        for ch in 0..6 {
            for t in 50..750 {
                let sum = res.atrial.samples()[[ch, t]] + res.ventricular.samples()[[ch, t]];
                assert_abs_diff_eq!(sum, panel.samples()[[ch, t]], epsilon = 1e-8);
            }
        }

        // The smooth component is supported only on flagged frame windows.
        let lo = res.va_frames.iter().min().unwrap() * 50;
        let hi = res.va_frames.iter().max().unwrap() * 50 + 100;
        for ch in 0..6 {
            for t in 0..800 {
                if t < lo || t >= hi {
                    assert_abs_diff_eq!(res.ventricular.samples()[[ch, t]], 0.0, epsilon = 1e-12);
                }
            }
        }

    }

    #[test]
    fn constant_burst_shrinks_uniformly_across_channels() {
        // No background: anything the detector flags is purely the
        // spatially-constant burst, so the smooth estimate must be identical
        // on every channel.
        let g = grid_graph(2, 3);
        let cfg = FrameConfig::new(100, 50, Window::Hann).unwrap();
        let mut samples = Array2::zeros((6, 800));
        for t in 380..420 {
            let w = ((t as f64 - 380.0) / 39.0 * std::f64::consts::PI).sin();
            for ch in 0..6 {
                samples[[ch, t]] = 8.0 * w;
            }
        }
        let panel = SignalPanel::new(samples, 1000.0).unwrap();
        let res = extract_atrial(&panel, &g, &cfg, &GAEParams::default()).unwrap();
        assert!(!res.va_frames.is_empty());
        for t in 50..750 {
            for ch in 1..6 {
                assert_abs_diff_eq!(
                    res.ventricular.samples()[[ch, t]],
                    res.ventricular.samples()[[0, t]],
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn shrinkage_never_raises_spectral_roughness() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = params(0.14, 2.0, 4.0);
        for _ in 0..100 {
            let n = rng.random_range(2..=10);
            let y = random_complex(&mut rng, n);
            let mut lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
            lambdas.sort_by(f64::total_cmp);
            let v = gae_shrink(y.view(), &lambdas, &p).unwrap();
            let roughness = |x: &Array1<Complex64>| {
                let e: f64 = x.iter().map(|z| z.norm_sqr()).sum();
                let n: f64 = x.iter().zip(&lambdas).map(|(z, &l)| l * z.norm_sqr()).sum();
                n / e
            };
            assert!(roughness(&v) <= roughness(&y) + 1e-10);
        }
    }

    fn pulse_train(t: usize, peaks: &[usize], amps: &[f64], half: usize) -> Array1<f64> {
        let mut x = Array1::zeros(t);
        for (&p, &a) in peaks.iter().zip(amps) {
            for off in 0..=2 * half {
                let idx = p as isize + off as isize - half as isize;
                if idx >= 0 && (idx as usize) < t {
                    let u = (off as f64 - half as f64) / half as f64;
                    x[idx as usize] += a * (1.0 - u * u);
                }
            }
        }
        x
    }

    #[test]
    fn abs_removes_identical_periodic_beats() {
        let peaks = vec![100usize, 300, 500, 700];
        let x = pulse_train(900, &peaks, &[2.0; 4], 30);
        let samples = x.clone().insert_axis(ndarray::Axis(0));
        let panel = SignalPanel::new(samples, 1000.0).unwrap();
        let res = abs_baseline(&panel, &[peaks], 50).unwrap();
        assert!(res.atrial.max_abs() < 1e-12);
        // Exact split by construction.
        for t in 0..900 {
            assert_abs_diff_eq!(
                res.atrial.samples()[[0, t]] + res.ventricular.samples()[[0, t]],
                x[t],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn abs_alternating_amplitudes_leave_half_gap_residual() {
        let peaks = vec![100usize, 300, 500, 700];
        let x = pulse_train(900, &peaks, &[3.0, 1.0, 3.0, 1.0], 30);
        let panel = SignalPanel::new(x.insert_axis(ndarray::Axis(0)), 1000.0).unwrap();
        let res = abs_baseline(&panel, &[peaks.clone()], 50).unwrap();
        // Template is the mean beat; each residual peak is (3-1)/2 = 1.
        for &p in &peaks {
            assert_abs_diff_eq!(res.atrial.samples()[[0, p]].abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn abs_requires_two_beats_per_channel() {
        let panel = SignalPanel::zeros(2, 500, 1000.0).unwrap();
        let err = abs_baseline(&panel, &[vec![100, 300], vec![250]], 50).unwrap_err();
        assert!(matches!(err, Error::InsufficientBeats { channel: 1, found: 1 }));
    }

    #[test]
    fn abs_handles_edge_truncated_beats() {
        let peaks = vec![10usize, 300, 890];
        let x = pulse_train(900, &peaks, &[2.0; 3], 30);
        let panel = SignalPanel::new(x.insert_axis(ndarray::Axis(0)), 1000.0).unwrap();
        let res = abs_baseline(&panel, &[peaks], 50).unwrap();
        // Identical beats, per-offset averaging: residual vanishes even with
        // windows truncated at the recording edges.
        assert!(res.atrial.max_abs() < 1e-12);
    }
}
