//! Short-time Fourier and graph Fourier transforms, separately and jointly.
//!
//! The joint transform takes a `K x T` panel to a `K x M x F` tensor:
//! per-channel windowed DFTs followed by a graph Fourier transform across
//! channels for every (frame, bin) pair. With a constant-overlap-add window
//! the inverse reconstructs every fully-covered sample exactly.

use std::ops::Range;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::graph::LaplacianSpectrum;
use crate::panel::SignalPanel;

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann, `0.5 * (1 - cos(2 pi n / W))`.
    Hann,
    Rect,
}

/// Framing parameters for the time-frequency transform.
///
/// The DFT length defaults to the window length, so a 0.1 s window at 1 kHz
/// yields 100 bins at 10 Hz spacing; `with_fft_bins` zero-pads to more.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    window_len: usize,
    hop: usize,
    window: Window,
    fft_bins: usize,
}

const COLA_TOL: f64 = 1e-10;

impl FrameConfig {
    pub fn new(window_len: usize, hop: usize, window: Window) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::InvalidParameter("window length must be positive".into()));
        }
        if hop == 0 || hop > window_len {
            return Err(Error::InvalidParameter(format!(
                "hop must lie in 1..={window_len}, got {hop}"
            )));
        }
        Ok(Self { window_len, hop, window, fft_bins: window_len })
    }

    /// Hann window of `window_s` seconds with fractional `overlap` in [0, 1).
    pub fn hann_from_duration(sample_rate_hz: f64, window_s: f64, overlap: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !(window_s > 0.0) {
            return Err(Error::InvalidParameter(
                "sample rate and window duration must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidParameter(format!(
                "overlap must lie in [0, 1), got {overlap}"
            )));
        }
        let window_len = (sample_rate_hz * window_s).round() as usize;
        let hop = ((window_len as f64) * (1.0 - overlap)).round() as usize;
        Self::new(window_len, hop.max(1), Window::Hann)
    }

    /// Zero-pad frames to `fft_bins >= window_len` before the DFT.
    pub fn with_fft_bins(mut self, fft_bins: usize) -> Result<Self> {
        if fft_bins < self.window_len {
            return Err(Error::InvalidParameter(format!(
                "fft bins {fft_bins} must be at least the window length {}",
                self.window_len
            )));
        }
        self.fft_bins = fft_bins;
        Ok(self)
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn fft_bins(&self) -> usize {
        self.fft_bins
    }

    /// Number of full frames that fit in a signal of length `len`.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    /// Length of the region covered by `m` frames.
    pub fn covered_len(&self, m: usize) -> usize {
        if m == 0 {
            0
        } else {
            (m - 1) * self.hop + self.window_len
        }
    }

    /// Window samples, length `window_len`.
    pub fn coefficients(&self) -> Array1<f64> {
        let w = self.window_len;
        match self.window {
            Window::Rect => Array1::ones(w),
            Window::Hann => Array1::from_shape_fn(w, |n| {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / w as f64).cos())
            }),
        }
    }

    /// Overlap-add constant if the window/hop pair satisfies COLA.
    pub fn cola_constant(&self) -> Option<f64> {
        let win = self.coefficients();
        let mut first = None;
        for p in 0..self.hop {
            let mut sum = 0.0;
            let mut n = p;
            while n < self.window_len {
                sum += win[n];
                n += self.hop;
            }
            match first {
                None => first = Some(sum),
                Some(c) if (sum - c).abs() > COLA_TOL * c.abs().max(1.0) => return None,
                Some(_) => {}
            }
        }
        first
    }

    pub fn is_cola(&self) -> bool {
        self.cola_constant().is_some()
    }

    /// Spacing of DFT bins in hertz.
    pub fn bin_hz(&self, sample_rate_hz: f64) -> f64 {
        sample_rate_hz / self.fft_bins as f64
    }

    /// Center time of frame `m` in seconds.
    pub fn frame_center_s(&self, m: usize, sample_rate_hz: f64) -> f64 {
        ((m * self.hop) as f64 + 0.5 * self.window_len as f64) / sample_rate_hz
    }
}

/// Slice a panel into overlapping unwindowed frames, each `K x window_len`.
pub fn enframe(panel: &SignalPanel, cfg: &FrameConfig) -> Result<Vec<Array2<f64>>> {
    let m = cfg.num_frames(panel.len());
    if m == 0 {
        return Err(Error::InvalidLength(format!(
            "signal of {} samples is shorter than one frame of {}",
            panel.len(),
            cfg.window_len()
        )));
    }
    let mut frames = Vec::with_capacity(m);
    for fi in 0..m {
        let off = fi * cfg.hop();
        frames.push(panel.samples().slice(s![.., off..off + cfg.window_len()]).to_owned());
    }
    Ok(frames)
}

/// Windowed DFT of every frame of one channel; rows are frames, columns the
/// `F` complex bins of an unnormalized forward DFT.
pub fn stft_channel(x: ArrayView1<'_, f64>, cfg: &FrameConfig) -> Array2<Complex64> {
    let w = cfg.window_len();
    let f = cfg.fft_bins();
    let m = cfg.num_frames(x.len());
    let win = cfg.coefficients();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(f);
    let mut out = Array2::zeros((m, f));
    let mut buf = vec![Complex64::new(0.0, 0.0); f];
    for fi in 0..m {
        let off = fi * cfg.hop();
        for n in 0..w {
            buf[n] = Complex64::new(x[off + n] * win[n], 0.0);
        }
        for v in buf.iter_mut().skip(w) {
            *v = Complex64::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (n, &v) in buf.iter().enumerate() {
            out[[fi, n]] = v;
        }
    }
    out
}

/// Invert [`stft_channel`] by overlap-add, normalizing by the accumulated
/// window envelope. Returns the signal of length `out_len` together with the
/// range of samples that are reconstructed exactly (full window coverage).
pub fn istft_channel(
    frames: ArrayView2<'_, Complex64>,
    cfg: &FrameConfig,
    out_len: usize,
) -> Result<(Array1<f64>, Range<usize>)> {
    if frames.ncols() != cfg.fft_bins() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} bins per frame, got {}",
            cfg.fft_bins(),
            frames.ncols()
        )));
    }
    cfg.cola_constant().ok_or_else(|| {
        Error::InvalidConfig("window/hop pair does not satisfy constant overlap-add".into())
    })?;
    let w = cfg.window_len();
    let f = cfg.fft_bins();
    let win = cfg.coefficients();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(f);
    let mut acc = Array1::zeros(out_len);
    let mut env = Array1::<f64>::zeros(out_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); f];
    for fi in 0..frames.nrows() {
        for n in 0..f {
            buf[n] = frames[[fi, n]];
        }
        ifft.process(&mut buf);
        let off = fi * cfg.hop();
        for n in 0..w {
            let t = off + n;
            if t < out_len {
                acc[t] += buf[n].re / f as f64;
                env[t] += win[n];
            }
        }
    }
    for t in 0..out_len {
        if env[t] > 1e-12 {
            acc[t] /= env[t];
        } else {
            acc[t] = 0.0;
        }
    }
    // Interior = samples overlapped by the full complement of windows,
    // [W - hop, M * hop); degenerates to the whole covered signal when
    // hop == W (no overlap).
    let m = frames.nrows();
    let interior = if m == 0 {
        0..0
    } else {
        let start = (w - cfg.hop()).min(out_len);
        let end = (m * cfg.hop()).min(out_len).max(start);
        start..end
    };
    Ok((acc, interior))
}

/// Per-channel short-time spectra of a panel, `K x M x F`, channel-major.
///
/// For real input, bins `f` and `F - f` are conjugate pairs.
#[derive(Debug, Clone)]
pub struct StftTensor {
    coeffs: Array3<Complex64>,
    sample_rate_hz: f64,
    cfg: FrameConfig,
}

impl StftTensor {
    pub fn new(coeffs: Array3<Complex64>, sample_rate_hz: f64, cfg: FrameConfig) -> Result<Self> {
        check_tensor(&coeffs, sample_rate_hz, &cfg)?;
        Ok(Self { coeffs, sample_rate_hz, cfg })
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.coeffs
    }

    pub fn num_channels(&self) -> usize {
        self.coeffs.shape()[0]
    }

    pub fn num_frames(&self) -> usize {
        self.coeffs.shape()[1]
    }

    pub fn num_bins(&self) -> usize {
        self.coeffs.shape()[2]
    }

    /// Number of nonredundant bins of the real-input DFT, `F/2 + 1`.
    pub fn one_sided_bins(&self) -> usize {
        self.num_bins() / 2 + 1
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn bin_hz(&self) -> f64 {
        self.cfg.bin_hz(self.sample_rate_hz)
    }

    pub fn frame_center_s(&self, m: usize) -> f64 {
        self.cfg.frame_center_s(m, self.sample_rate_hz)
    }
}

/// Joint vertex/time-frequency representation: like [`StftTensor`] but with
/// the first axis indexed by graph frequency instead of channel.
#[derive(Debug, Clone)]
pub struct JointSpectrum {
    coeffs: Array3<Complex64>,
    sample_rate_hz: f64,
    cfg: FrameConfig,
}

impl JointSpectrum {
    pub fn new(coeffs: Array3<Complex64>, sample_rate_hz: f64, cfg: FrameConfig) -> Result<Self> {
        check_tensor(&coeffs, sample_rate_hz, &cfg)?;
        Ok(Self { coeffs, sample_rate_hz, cfg })
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.coeffs
    }

    /// Graph-frequency dimension K.
    pub fn num_vertices(&self) -> usize {
        self.coeffs.shape()[0]
    }

    pub fn num_frames(&self) -> usize {
        self.coeffs.shape()[1]
    }

    pub fn num_bins(&self) -> usize {
        self.coeffs.shape()[2]
    }

    pub fn one_sided_bins(&self) -> usize {
        self.num_bins() / 2 + 1
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn bin_hz(&self) -> f64 {
        self.cfg.bin_hz(self.sample_rate_hz)
    }

    pub fn frame_center_s(&self, m: usize) -> f64 {
        self.cfg.frame_center_s(m, self.sample_rate_hz)
    }
}

fn check_tensor(coeffs: &Array3<Complex64>, sample_rate_hz: f64, cfg: &FrameConfig) -> Result<()> {
    if coeffs.shape()[2] != cfg.fft_bins() {
        return Err(Error::DimensionMismatch(format!(
            "tensor has {} bins but the transform is configured for {}",
            coeffs.shape()[2],
            cfg.fft_bins()
        )));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    Ok(())
}

/// Windowed DFT of every frame of every channel.
pub fn stft(panel: &SignalPanel, cfg: &FrameConfig) -> Result<StftTensor> {
    let m = cfg.num_frames(panel.len());
    if m == 0 {
        return Err(Error::InvalidLength(format!(
            "signal of {} samples is shorter than one frame of {}",
            panel.len(),
            cfg.window_len()
        )));
    }
    let k = panel.channels();
    let mut data = Array3::zeros((k, m, cfg.fft_bins()));
    for ch in 0..k {
        let s = stft_channel(panel.channel(ch), cfg);
        data.slice_mut(s![ch, .., ..]).assign(&s);
    }
    StftTensor::new(data, panel.sample_rate_hz(), *cfg)
}

/// Overlap-add inverse of [`stft`]. `out_len` defaults to the covered
/// length `(M-1)*hop + window_len`; the returned range marks samples with
/// full window coverage, which all channels reconstruct exactly.
pub fn istft(t: &StftTensor, out_len: Option<usize>) -> Result<(SignalPanel, Range<usize>)> {
    let k = t.num_channels();
    let len = out_len.unwrap_or_else(|| t.frame_config().covered_len(t.num_frames()));
    let mut samples = Array2::zeros((k, len));
    let mut interior = 0..0;
    for ch in 0..k {
        let frames = t.coeffs().slice(s![ch, .., ..]);
        let (x, range) = istft_channel(frames, t.frame_config(), len)?;
        samples.row_mut(ch).assign(&x);
        interior = range;
    }
    Ok((SignalPanel::new(samples, t.sample_rate_hz())?, interior))
}

/// Graph Fourier transform of a vertex signal: projection on the basis.
pub fn gft(spectrum: &LaplacianSpectrum, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.len() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} does not match basis dimension {}",
            x.len(),
            spectrum.len()
        )));
    }
    Ok(spectrum.basis().t().dot(&x))
}

/// Inverse graph Fourier transform: synthesis from basis coefficients.
pub fn igft(spectrum: &LaplacianSpectrum, xt: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if xt.len() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient length {} does not match basis dimension {}",
            xt.len(),
            spectrum.len()
        )));
    }
    Ok(spectrum.basis().dot(&xt))
}

/// Apply the GFT to every column of a `K x T` matrix.
pub fn gft_panel(spectrum: &LaplacianSpectrum, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.nrows() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} rows, basis dimension is {}",
            x.nrows(),
            spectrum.len()
        )));
    }
    Ok(spectrum.basis().t().dot(x))
}

/// Inverse of [`gft_panel`].
pub fn igft_panel(spectrum: &LaplacianSpectrum, xt: &Array2<f64>) -> Result<Array2<f64>> {
    if xt.nrows() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} rows, basis dimension is {}",
            xt.nrows(),
            spectrum.len()
        )));
    }
    Ok(spectrum.basis().dot(xt))
}

/// STFT per channel followed by a GFT across channels per (frame, bin).
pub fn joint_transform(
    panel: &SignalPanel,
    cfg: &FrameConfig,
    spectrum: &LaplacianSpectrum,
) -> Result<JointSpectrum> {
    let k = panel.channels();
    if spectrum.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "panel has {k} channels, basis dimension is {}",
            spectrum.len()
        )));
    }
    let t = stft(panel, cfg)?;
    let transformed = apply_to_vertex_axis(&spectrum.basis().t().to_owned(), t.coeffs());
    JointSpectrum::new(transformed, panel.sample_rate_hz(), *cfg)
}

/// IGFT per (frame, bin) followed by overlap-add per channel. The returned
/// range marks fully-covered samples, reconstructed exactly on all channels.
pub fn inverse_joint(
    js: &JointSpectrum,
    spectrum: &LaplacianSpectrum,
    out_len: Option<usize>,
) -> Result<(SignalPanel, Range<usize>)> {
    let k = js.num_vertices();
    if spectrum.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "tensor has {k} graph frequencies, basis dimension is {}",
            spectrum.len()
        )));
    }
    let vertex_domain = apply_to_vertex_axis(spectrum.basis(), js.coeffs());
    let stft_view = StftTensor::new(vertex_domain, js.sample_rate_hz(), *js.frame_config())?;
    istft(&stft_view, out_len)
}

/// Multiply a real `K x K` matrix into the vertex axis of a complex tensor,
/// as two real matrix products on the parts.
fn apply_to_vertex_axis(mat: &Array2<f64>, data: &Array3<Complex64>) -> Array3<Complex64> {
    let (k, m, f) = (data.shape()[0], data.shape()[1], data.shape()[2]);
    let cols = m * f;
    let mut re = Array2::zeros((k, cols));
    let mut im = Array2::zeros((k, cols));
    for ch in 0..k {
        for mi in 0..m {
            for fi in 0..f {
                let v = data[[ch, mi, fi]];
                re[[ch, mi * f + fi]] = v.re;
                im[[ch, mi * f + fi]] = v.im;
            }
        }
    }
    let re_t = mat.dot(&re);
    let im_t = mat.dot(&im);
    let mut out = Array3::zeros((k, m, f));
    for ch in 0..k {
        for mi in 0..m {
            for fi in 0..f {
                let j = mi * f + fi;
                out[[ch, mi, fi]] = Complex64::new(re_t[[ch, j]], im_t[[ch, j]]);
            }
        }
    }
    out
}
