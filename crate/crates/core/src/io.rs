//! On-disk formats: signal panels (binary and CSV), spectral tensor
//! containers, graph documents, episode scenario configs, and metric
//! reports.
//!
//! Every writer goes through a temporary file in the destination directory
//! followed by a rename, so a crashed process never leaves a half-written
//! artifact behind.
//!
//! # Panel files
//!
//! The binary format is a 64-byte little-endian header (magic `EGMP`),
//! an optional list of inactive lattice indices, then the samples as
//! channel-major float64. The CSV form carries the same metadata in `# key
//! = value` comment lines before the header row; both round-trip losslessly
//! because floats are printed with shortest round-trip formatting.
//!
//! # Scenario configs
//!
//! [`parse_scenario`] reads a flat key-value file (`key = value`, `#`
//! comments) describing one simulated episode: tissue, ionic model, foci,
//! electrode array, and the ventricular overlay. The schema is documented
//! by [`render_scenario`], which emits every key with a comment. A
//! `version` key is mandatory.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ElectrodeGraph, LaplacianSpectrum};
use crate::metrics::BeatAnnotations;
use crate::metrics::{cc, nmse, vdr, vr};
use crate::panel::SignalPanel;
use crate::pipeline::AclComparison;
use crate::sim::{
    calibrate_diffusion, Courtemanche, ElectrodeArraySpec, FociSchedule, MitchellSchaeffer,
    TissueConfig, VaParams,
};
use crate::transforms::{FrameConfig, JointSpectrum, StftTensor, Window};

const PANEL_MAGIC: &[u8; 4] = b"EGMP";
const TENSOR_MAGIC: &[u8; 4] = b"EGMT";
const PANEL_VERSION: u16 = 1;
const TENSOR_VERSION: u16 = 1;
const SCENARIO_VERSION: u64 = 1;

// ---------------------------------------------------------------------------
// Recording metadata

/// What a recording contains, as far as the toolkit is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordingLabel {
    SinusRhythm,
    AtrialFibrillation,
    Synthetic,
}

impl RecordingLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordingLabel::SinusRhythm => "sinus-rhythm",
            RecordingLabel::AtrialFibrillation => "atrial-fibrillation",
            RecordingLabel::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sinus-rhythm" => Ok(RecordingLabel::SinusRhythm),
            "atrial-fibrillation" => Ok(RecordingLabel::AtrialFibrillation),
            "synthetic" => Ok(RecordingLabel::Synthetic),
            other => Err(Error::InvalidParameter(format!(
                "unknown recording label {other:?}; expected sinus-rhythm, \
                 atrial-fibrillation or synthetic"
            ))),
        }
    }

    fn code(&self) -> u16 {
        match self {
            RecordingLabel::SinusRhythm => 0,
            RecordingLabel::AtrialFibrillation => 1,
            RecordingLabel::Synthetic => 2,
        }
    }

    fn from_code(c: u16) -> Result<Self> {
        match c {
            0 => Ok(RecordingLabel::SinusRhythm),
            1 => Ok(RecordingLabel::AtrialFibrillation),
            2 => Ok(RecordingLabel::Synthetic),
            other => Err(Error::CorruptFile(format!("unknown label code {other}"))),
        }
    }
}

/// Physical electrode layout: lattice shape plus the row-major lattice
/// indices of electrodes that recorded nothing usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub rows: usize,
    pub cols: usize,
    pub pitch_mm: f64,
    /// Sorted, deduplicated row-major lattice indices.
    pub inactive: Vec<usize>,
}

impl ArrayLayout {
    pub fn full(rows: usize, cols: usize, pitch_mm: f64) -> Self {
        Self { rows, cols, pitch_mm, inactive: Vec::new() }
    }

    /// Channels actually present: lattice size minus dropouts.
    pub fn active_count(&self) -> usize {
        self.rows * self.cols - self.inactive.len()
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "layout must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.pitch_mm > 0.0 && self.pitch_mm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "electrode pitch must be positive, got {}",
                self.pitch_mm
            )));
        }
        let n = self.rows * self.cols;
        for w in self.inactive.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidParameter(
                    "inactive indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = self.inactive.last() {
            if last >= n {
                return Err(Error::InvalidParameter(format!(
                    "inactive index {last} outside the {}x{} lattice",
                    self.rows, self.cols
                )));
            }
        }
        if self.inactive.len() >= n {
            return Err(Error::InvalidParameter("no active electrodes left".into()));
        }
        Ok(())
    }
}

/// Everything a panel file records about itself besides the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub channel_count: usize,
    pub sample_rate_hz: f64,
    pub duration_samples: usize,
    pub layout: ArrayLayout,
    pub label: RecordingLabel,
    /// Seed and config fingerprint for synthetic data; zeros otherwise.
    pub seed: u64,
    pub config_hash: u64,
}

impl RecordingHeader {
    /// Header for a full-lattice recording; channel count and duration are
    /// derived from the layout and panel.
    pub fn new(layout: ArrayLayout, label: RecordingLabel, panel: &SignalPanel) -> Result<Self> {
        let h = Self {
            channel_count: layout.active_count(),
            sample_rate_hz: panel.sample_rate_hz(),
            duration_samples: panel.len(),
            layout,
            label,
            seed: 0,
            config_hash: 0,
        };
        h.validate()?;
        h.check_panel(panel)?;
        Ok(h)
    }

    pub fn with_provenance(mut self, seed: u64, config_hash: u64) -> Self {
        self.seed = seed;
        self.config_hash = config_hash;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.channel_count != self.layout.active_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} channels but the layout has {} active electrodes",
                self.channel_count,
                self.layout.active_count()
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.channel_count == 0 || self.duration_samples == 0 {
            return Err(Error::InvalidParameter("empty recording".into()));
        }
        Ok(())
    }

    fn check_panel(&self, panel: &SignalPanel) -> Result<()> {
        if panel.channels() != self.channel_count || panel.len() != self.duration_samples {
            return Err(Error::DimensionMismatch(format!(
                "header says {}x{}, panel is {}x{}",
                self.channel_count,
                self.duration_samples,
                panel.channels(),
                panel.len()
            )));
        }
        if panel.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::DimensionMismatch(format!(
                "header rate {} Hz, panel rate {} Hz",
                self.sample_rate_hz,
                panel.sample_rate_hz()
            )));
        }
        Ok(())
    }
}

/// FNV-1a over raw bytes; used to fingerprint scenario text into the
/// provenance field independently of the platform.
pub fn config_fingerprint(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------------
// Atomic file writing

/// Write through a temp file in the destination directory plus rename, so
/// concurrent readers see either the old content or the new, never a mix.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Little-endian slice reader

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::CorruptFile(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            ))),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

// ---------------------------------------------------------------------------
// Binary panel format

fn encode_panel(header: &RecordingHeader, panel: &SignalPanel) -> Result<Vec<u8>> {
    header.validate()?;
    header.check_panel(panel)?;
    if header.layout.rows > u16::MAX as usize || header.layout.cols > u16::MAX as usize {
        return Err(Error::InvalidParameter("layout exceeds the u16 header fields".into()));
    }
    let inactive = &header.layout.inactive;
    // Inactive list is padded to an 8-byte boundary so the payload stays
    // float64-aligned for mmap readers.
    let pad = inactive.len() % 2;
    let mut out =
        Vec::with_capacity(64 + 4 * (inactive.len() + pad) + 8 * panel.samples().len());
    out.extend_from_slice(PANEL_MAGIC);
    out.extend_from_slice(&PANEL_VERSION.to_le_bytes());
    out.extend_from_slice(&header.label.code().to_le_bytes());
    out.extend_from_slice(&(header.channel_count as u64).to_le_bytes());
    out.extend_from_slice(&(header.duration_samples as u64).to_le_bytes());
    out.extend_from_slice(&header.sample_rate_hz.to_bits().to_le_bytes());
    out.extend_from_slice(&(header.layout.rows as u16).to_le_bytes());
    out.extend_from_slice(&(header.layout.cols as u16).to_le_bytes());
    out.extend_from_slice(&(inactive.len() as u32).to_le_bytes());
    out.extend_from_slice(&header.layout.pitch_mm.to_bits().to_le_bytes());
    out.extend_from_slice(&header.seed.to_le_bytes());
    out.extend_from_slice(&header.config_hash.to_le_bytes());
    debug_assert_eq!(out.len(), 64);
    for &i in inactive {
        out.extend_from_slice(&(i as u32).to_le_bytes());
    }
    if pad == 1 {
        out.extend_from_slice(&[0u8; 4]);
    }
    for ch in panel.samples().outer_iter() {
        for &v in ch.iter() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

fn decode_panel(bytes: &[u8]) -> Result<(RecordingHeader, SignalPanel)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != PANEL_MAGIC {
        return Err(Error::CorruptFile("bad magic, not a panel file".into()));
    }
    let version = r.u16()?;
    if version != PANEL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let label = RecordingLabel::from_code(r.u16()?)?;
    let channel_count = r.u64()? as usize;
    let duration_samples = r.u64()? as usize;
    let sample_rate_hz = r.f64()?;
    let rows = r.u16()? as usize;
    let cols = r.u16()? as usize;
    let inactive_count = r.u32()? as usize;
    let pitch_mm = r.f64()?;
    let seed = r.u64()?;
    let config_hash = r.u64()?;

    let mut inactive = Vec::with_capacity(inactive_count);
    for _ in 0..inactive_count {
        inactive.push(r.u32()? as usize);
    }
    if inactive_count % 2 == 1 {
        r.take(4)?;
    }

    let header = RecordingHeader {
        channel_count,
        sample_rate_hz,
        duration_samples,
        layout: ArrayLayout { rows, cols, pitch_mm, inactive },
        label,
        seed,
        config_hash,
    };
    header.validate().map_err(|e| Error::CorruptFile(format!("bad header: {e}")))?;

    let expected = channel_count
        .checked_mul(duration_samples)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::CorruptFile("payload size overflows".into()))?;
    if r.remaining() != expected {
        return Err(Error::CorruptFile(format!(
            "payload holds {} bytes, header implies {expected}",
            r.remaining()
        )));
    }
    let mut samples = Array2::zeros((channel_count, duration_samples));
    for mut ch in samples.outer_iter_mut() {
        for v in ch.iter_mut() {
            *v = r.f64()?;
        }
    }
    let panel = SignalPanel::new(samples, sample_rate_hz)?;
    Ok((header, panel))
}

// ---------------------------------------------------------------------------
// CSV panel format

fn encode_panel_csv(header: &RecordingHeader, panel: &SignalPanel) -> Result<String> {
    header.validate()?;
    header.check_panel(panel)?;
    let mut out = String::new();
    out.push_str("# version = 1\n");
    out.push_str(&format!("# label = {}\n", header.label.as_str()));
    out.push_str(&format!("# sample_rate_hz = {}\n", header.sample_rate_hz));
    out.push_str(&format!("# rows = {}\n", header.layout.rows));
    out.push_str(&format!("# cols = {}\n", header.layout.cols));
    out.push_str(&format!("# pitch_mm = {}\n", header.layout.pitch_mm));
    if !header.layout.inactive.is_empty() {
        let list: Vec<String> =
            header.layout.inactive.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("# inactive = {}\n", list.join(" ")));
    }
    if header.seed != 0 || header.config_hash != 0 {
        out.push_str(&format!("# seed = {}\n", header.seed));
        out.push_str(&format!("# config_hash = {}\n", header.config_hash));
    }
    // Column names carry the lattice index, skipping inactive sites.
    let mut names = Vec::with_capacity(header.channel_count);
    let mut skip = header.layout.inactive.iter().peekable();
    for i in 0..header.layout.rows * header.layout.cols {
        if skip.peek() == Some(&&i) {
            skip.next();
            continue;
        }
        names.push(format!("ch{i:03}"));
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for t in 0..panel.len() {
        let row: Vec<String> =
            (0..panel.channels()).map(|k| panel.samples()[[k, t]].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn decode_panel_csv(text: &str) -> Result<(RecordingHeader, SignalPanel)> {
    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            lines.next();
        } else if trimmed.is_empty() {
            lines.next();
        } else {
            break;
        }
    }
    let header_row = lines
        .next()
        .ok_or_else(|| Error::CorruptFile("CSV has no header row".into()))?;
    let k = header_row.split(',').count();
    if k == 0 || header_row.trim().is_empty() {
        return Err(Error::CorruptFile("CSV header row is empty".into()));
    }

    let mut data: Vec<f64> = Vec::new();
    let mut t = 0usize;
    for (lineno, line) in lines.enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != k {
            return Err(Error::CorruptFile(format!(
                "row {} has {} fields, header has {k}",
                lineno + 2,
                fields.len()
            )));
        }
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::CorruptFile(format!("unparsable number {f:?} on row {}", lineno + 2))
            })?;
            data.push(v);
        }
        t += 1;
    }
    if t == 0 {
        return Err(Error::CorruptFile("CSV has no data rows".into()));
    }

    let get = |key: &str| meta.get(key).map(String::as_str);
    if let Some(v) = get("version") {
        let version: u16 = v
            .parse()
            .map_err(|_| Error::CorruptFile(format!("bad version {v:?}")))?;
        if version != PANEL_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
    }
    let parse_f64 = |key: &str, default: f64| -> Result<f64> {
        match get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::CorruptFile(format!("bad {key} value {v:?}"))),
        }
    };
    let parse_usize = |key: &str, default: usize| -> Result<usize> {
        match get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::CorruptFile(format!("bad {key} value {v:?}"))),
        }
    };
    let label = match get("label") {
        None => RecordingLabel::Synthetic,
        Some(v) => RecordingLabel::parse(v)?,
    };
    let inactive = match get("inactive") {
        None => Vec::new(),
        Some(v) => v
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::CorruptFile(format!("bad inactive index {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let layout = ArrayLayout {
        rows: parse_usize("rows", 1)?,
        cols: parse_usize("cols", k)?,
        pitch_mm: parse_f64("pitch_mm", 2.0)?,
        inactive,
    };
    let header = RecordingHeader {
        channel_count: k,
        sample_rate_hz: parse_f64("sample_rate_hz", 1000.0)?,
        duration_samples: t,
        layout,
        label,
        seed: parse_usize("seed", 0)? as u64,
        config_hash: parse_usize("config_hash", 0)? as u64,
    };
    header.validate().map_err(|e| Error::CorruptFile(format!("bad metadata: {e}")))?;

    // Data arrived row-per-sample; the panel wants channel-major.
    let by_sample = Array2::from_shape_vec((t, k), data).expect("shape checked above");
    let samples = by_sample.reversed_axes().as_standard_layout().into_owned();
    let panel = SignalPanel::new(samples, header.sample_rate_hz)?;
    Ok((header, panel))
}

/// Save a panel with its metadata; paths ending in `.csv` get the text
/// form, everything else the binary form.
pub fn save_panel(path: &Path, header: &RecordingHeader, panel: &SignalPanel) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        atomic_write(path, encode_panel_csv(header, panel)?.as_bytes())
    } else {
        atomic_write(path, &encode_panel(header, panel)?)
    }
}

/// Load a panel, sniffing binary vs CSV from the content rather than the
/// file name.
pub fn load_panel(path: &Path) -> Result<(RecordingHeader, SignalPanel)> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(PANEL_MAGIC) {
        return decode_panel(&bytes);
    }
    match std::str::from_utf8(&bytes) {
        Ok(text) => decode_panel_csv(text),
        Err(_) => Err(Error::CorruptFile(
            "neither a binary panel (bad magic) nor UTF-8 text".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Tensor container

fn window_code(w: Window) -> u8 {
    match w {
        Window::Hann => 0,
        Window::Rect => 1,
    }
}

fn window_from_code(c: u8) -> Result<Window> {
    match c {
        0 => Ok(Window::Hann),
        1 => Ok(Window::Rect),
        other => Err(Error::CorruptFile(format!("unknown window code {other}"))),
    }
}

fn encode_tensor(
    kind: u8,
    coeffs: &Array3<Complex64>,
    sample_rate_hz: f64,
    cfg: &FrameConfig,
) -> Result<Vec<u8>> {
    let shape = coeffs.shape();
    if shape.iter().any(|&d| d > u32::MAX as usize)
        || cfg.window_len() > u16::MAX as usize
        || cfg.hop() > u16::MAX as usize
    {
        return Err(Error::InvalidParameter("tensor exceeds the header field widths".into()));
    }
    let mut out = Vec::with_capacity(32 + 16 * coeffs.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(kind);
    out.push(window_code(cfg.window()));
    out.extend_from_slice(&(shape[0] as u32).to_le_bytes());
    out.extend_from_slice(&(shape[1] as u32).to_le_bytes());
    out.extend_from_slice(&(shape[2] as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.window_len() as u16).to_le_bytes());
    out.extend_from_slice(&(cfg.hop() as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_bits().to_le_bytes());
    debug_assert_eq!(out.len(), 32);
    for v in coeffs.iter() {
        out.extend_from_slice(&v.re.to_bits().to_le_bytes());
        out.extend_from_slice(&v.im.to_bits().to_le_bytes());
    }
    Ok(out)
}

fn decode_tensor(bytes: &[u8], want_kind: u8) -> Result<(Array3<Complex64>, f64, FrameConfig)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != TENSOR_MAGIC {
        return Err(Error::CorruptFile("bad magic, not a tensor file".into()));
    }
    let version = r.u16()?;
    if version != TENSOR_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = r.take(1)?[0];
    if kind != want_kind {
        let (found, wanted) = match kind {
            0 => ("a per-channel transform", "joint spectrum"),
            _ => ("a joint spectrum", "per-channel transform"),
        };
        return Err(Error::CorruptFile(format!("tensor holds {found}, wanted a {wanted}")));
    }
    let window = window_from_code(r.take(1)?[0])?;
    let d0 = r.u32()? as usize;
    let d1 = r.u32()? as usize;
    let d2 = r.u32()? as usize;
    let window_len = r.u16()? as usize;
    let hop = r.u16()? as usize;
    let sample_rate_hz = r.f64()?;
    let cfg = FrameConfig::new(window_len, hop, window)?.with_fft_bins(d2)?;
    let expected = d0
        .checked_mul(d1)
        .and_then(|n| n.checked_mul(d2))
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| Error::CorruptFile("payload size overflows".into()))?;
    if r.remaining() != expected {
        return Err(Error::CorruptFile(format!(
            "payload holds {} bytes, header implies {expected}",
            r.remaining()
        )));
    }
    let mut coeffs = Array3::zeros((d0, d1, d2));
    for v in coeffs.iter_mut() {
        let re = r.f64()?;
        let im = r.f64()?;
        *v = Complex64::new(re, im);
    }
    Ok((coeffs, sample_rate_hz, cfg))
}

pub fn save_stft(path: &Path, t: &StftTensor) -> Result<()> {
    atomic_write(path, &encode_tensor(0, t.coeffs(), t.sample_rate_hz(), t.frame_config())?)
}

pub fn load_stft(path: &Path) -> Result<StftTensor> {
    let bytes = std::fs::read(path)?;
    let (coeffs, rate, cfg) = decode_tensor(&bytes, 0)?;
    StftTensor::new(coeffs, rate, cfg)
}

pub fn save_joint(path: &Path, j: &JointSpectrum) -> Result<()> {
    atomic_write(path, &encode_tensor(1, j.coeffs(), j.sample_rate_hz(), j.frame_config())?)
}

pub fn load_joint(path: &Path) -> Result<JointSpectrum> {
    let bytes = std::fs::read(path)?;
    let (coeffs, rate, cfg) = decode_tensor(&bytes, 1)?;
    JointSpectrum::new(coeffs, rate, cfg)
}

// ---------------------------------------------------------------------------
// CSV exports (plot fodder; the binary container is the lossless form)

fn tensor_long_csv(
    first_col: &str,
    coeffs: &Array3<Complex64>,
    one_sided: usize,
    bin_hz: f64,
) -> String {
    let mut out = String::with_capacity(32 * coeffs.len());
    out.push_str(&format!("{first_col},tau,f_hz,re,im\n"));
    for (i, plane) in coeffs.outer_iter().enumerate() {
        for (tau, row) in plane.outer_iter().enumerate() {
            for (f, v) in row.iter().take(one_sided).enumerate() {
                out.push_str(&format!(
                    "{i},{tau},{},{},{}\n",
                    f as f64 * bin_hz,
                    v.re,
                    v.im
                ));
            }
        }
    }
    out
}

/// One-sided long-form rows `channel,tau,f_hz,re,im`.
pub fn export_stft_csv(path: &Path, t: &StftTensor) -> Result<()> {
    let text = tensor_long_csv("channel", t.coeffs(), t.one_sided_bins(), t.bin_hz());
    atomic_write(path, text.as_bytes())
}

/// One-sided long-form rows `k,tau,f_hz,re,im` over graph frequencies.
pub fn export_joint_csv(path: &Path, j: &JointSpectrum) -> Result<()> {
    let text = tensor_long_csv("k", j.coeffs(), j.one_sided_bins(), j.bin_hz());
    atomic_write(path, text.as_bytes())
}

/// Generic map export: one `row,col,value` line per cell, with the axis
/// sample values supplied by the caller.
pub fn export_map_csv(
    path: &Path,
    columns: (&str, &str, &str),
    row_axis: &[f64],
    col_axis: &[f64],
    values: &Array2<f64>,
) -> Result<()> {
    if values.nrows() != row_axis.len() || values.ncols() != col_axis.len() {
        return Err(Error::DimensionMismatch(format!(
            "map is {}x{}, axes are {} and {}",
            values.nrows(),
            values.ncols(),
            row_axis.len(),
            col_axis.len()
        )));
    }
    let mut out = String::with_capacity(24 * values.len());
    out.push_str(&format!("{},{},{}\n", columns.0, columns.1, columns.2));
    for (i, &rv) in row_axis.iter().enumerate() {
        for (j, &cv) in col_axis.iter().enumerate() {
            out.push_str(&format!("{rv},{cv},{}\n", values[[i, j]]));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Eigendecomposition export: one row per graph frequency, `k,lambda`, then
/// the eigenvector entry at every vertex.
pub fn export_spectrum_csv(path: &Path, spec: &LaplacianSpectrum) -> Result<()> {
    let n = spec.len();
    let mut out = String::new();
    out.push_str("k,lambda");
    for v in 0..n {
        out.push_str(&format!(",v{v}"));
    }
    out.push('\n');
    for k in 0..n {
        out.push_str(&format!("{k},{}", spec.lambdas()[k]));
        for &u in spec.eigenvector(k).iter() {
            out.push_str(&format!(",{u}"));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Graph document

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    rows: usize,
    cols: usize,
    pitch_mm: f64,
    inactive: Vec<usize>,
    /// Undirected edges once each, `[i, j, weight]` with `i < j` over
    /// active-vertex indices.
    weights: Vec<(usize, usize, f64)>,
}

fn graph_triplets(g: &ElectrodeGraph) -> Vec<(usize, usize, f64)> {
    let a = g.adjacency();
    let n = g.vertex_count();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] != 0.0 {
                out.push((i, j, a[[i, j]]));
            }
        }
    }
    out
}

pub fn save_graph(path: &Path, g: &ElectrodeGraph) -> Result<()> {
    let doc = GraphDoc {
        rows: g.rows(),
        cols: g.cols(),
        pitch_mm: g.pitch_mm(),
        inactive: g.inactive().iter().copied().collect(),
        weights: graph_triplets(g),
    };
    let text = serde_json::to_string_pretty(&doc)?;
    atomic_write(path, text.as_bytes())
}

/// Load a graph document and rebuild the lattice from its layout; the
/// stored weights must agree with the rebuilt ones, so a document edited
/// out from under its layout is rejected rather than trusted.
pub fn load_graph(path: &Path) -> Result<ElectrodeGraph> {
    let bytes = std::fs::read(path)?;
    let doc: GraphDoc = serde_json::from_slice(&bytes)?;
    let inactive = doc.inactive.iter().copied().collect();
    let g = ElectrodeGraph::build_grid(doc.rows, doc.cols, doc.pitch_mm, &inactive)?;
    let rebuilt = graph_triplets(&g);
    if rebuilt.len() != doc.weights.len() {
        return Err(Error::CorruptFile(format!(
            "document lists {} edges, layout implies {}",
            doc.weights.len(),
            rebuilt.len()
        )));
    }
    for (have, want) in doc.weights.iter().zip(&rebuilt) {
        let (hi, hj, hw) = *have;
        let (wi, wj, ww) = *want;
        if hi != wi || hj != wj || (hw - ww).abs() > 1e-12 * ww.max(1.0) {
            return Err(Error::CorruptFile(format!(
                "edge ({hi}, {hj}, {hw}) disagrees with the layout's ({wi}, {wj}, {ww})"
            )));
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Metric report

/// Per-channel metric values; `null` in JSON where a channel was excluded
/// by a guard or the metric was not computed at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: usize,
    pub nmse: Option<f64>,
    pub cc: Option<f64>,
    pub vdr: Option<f64>,
    pub vr: Option<f64>,
}

/// One extraction method's scores over a panel. Ground-truth metrics stay
/// `null` when no reference was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub nmse: Option<f64>,
    pub cc: Option<f64>,
    pub vdr: Option<f64>,
    pub vr: Option<f64>,
    pub per_channel: Vec<ChannelMetrics>,
    pub warnings: Vec<String>,
}

/// Score an atrial estimate. `truth` enables NMSE/CC; `mixed` plus
/// annotations enable VDR; annotations alone enable VR.
pub fn build_metric_report(
    method: &str,
    estimate: &SignalPanel,
    truth: Option<&SignalPanel>,
    mixed: Option<&SignalPanel>,
    ann: Option<&BeatAnnotations>,
) -> Result<MetricReport> {
    if truth.is_none() && ann.is_none() {
        return Err(Error::InvalidParameter(
            "nothing to score: need ground truth and/or beat annotations".into(),
        ));
    }
    let k = estimate.channels();
    let mut report = MetricReport {
        method: method.to_string(),
        nmse: None,
        cc: None,
        vdr: None,
        vr: None,
        per_channel: (0..k)
            .map(|channel| ChannelMetrics {
                channel,
                nmse: None,
                cc: None,
                vdr: None,
                vr: None,
            })
            .collect(),
        warnings: Vec::new(),
    };
    let mut absorb = |tag: &str, out: crate::metrics::MetricOutcome| {
        for w in out.warnings {
            report.warnings.push(format!("{tag}: {w}"));
        }
        (out.value, out.per_channel)
    };
    if let Some(a) = truth {
        let (v, per) = absorb("nmse", nmse(a, estimate)?);
        report.nmse = Some(v);
        for (c, p) in report.per_channel.iter_mut().zip(&per) {
            c.nmse = *p;
        }
        let (v, per) = absorb("cc", cc(a, estimate)?);
        report.cc = Some(v);
        for (c, p) in report.per_channel.iter_mut().zip(&per) {
            c.cc = *p;
        }
    }
    if let Some(ann) = ann {
        if let Some(m) = mixed {
            let (v, per) = absorb("vdr", vdr(m, estimate, ann)?);
            report.vdr = Some(v);
            for (c, p) in report.per_channel.iter_mut().zip(&per) {
                c.vdr = *p;
            }
        }
        let (v, per) = absorb("vr", vr(estimate, ann)?);
        report.vr = Some(v);
        for (c, p) in report.per_channel.iter_mut().zip(&per) {
            c.vr = *p;
        }
    }
    Ok(report)
}

pub fn save_metric_report(path: &Path, report: &MetricReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    atomic_write(path, text.as_bytes())
}

pub fn load_metric_report(path: &Path) -> Result<MetricReport> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Long-form CSV of a benchmark run, one `acl_ms,segment,method,metric,value`
/// row per score — the shape box-plot tooling wants.
pub fn export_comparison_csv(path: &Path, comparisons: &[AclComparison]) -> Result<()> {
    let mut out = String::from("acl_ms,segment,method,metric,value\n");
    for acl in comparisons {
        for seg in &acl.segments {
            for (method, s) in [("gae", &seg.gae), ("abs", &seg.abs)] {
                for (metric, v) in [
                    ("nmse", s.nmse),
                    ("cc", s.cc),
                    ("vdr", s.vdr_db),
                    ("vr", s.vr),
                ] {
                    out.push_str(&format!(
                        "{},{},{method},{metric},{v}\n",
                        acl.acl_ms, seg.segment_index
                    ));
                }
            }
        }
    }
    atomic_write(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Scenario config

/// Which ionic model drives an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelChoice {
    /// Two-variable phenomenological model; fast, used for benchmarks.
    Phenomenological,
    /// Ion-channel atrial model with AF remodeling conductances.
    AtrialRemodeled,
    /// Ion-channel atrial model with unremodeled conductances.
    AtrialBaseline,
}

impl ModelChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelChoice::Phenomenological => "phenomenological",
            ModelChoice::AtrialRemodeled => "atrial-remodeled",
            ModelChoice::AtrialBaseline => "atrial-baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phenomenological" => Ok(ModelChoice::Phenomenological),
            "atrial-remodeled" => Ok(ModelChoice::AtrialRemodeled),
            "atrial-baseline" => Ok(ModelChoice::AtrialBaseline),
            other => Err(Error::InvalidParameter(format!(
                "unknown model {other:?}; expected phenomenological, \
                 atrial-remodeled or atrial-baseline"
            ))),
        }
    }
}

/// A fully resolved episode description: everything `simulate` needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelChoice,
    pub duration_s: f64,
    pub seed: u64,
    pub tissue: TissueConfig,
    pub foci: FociSchedule,
    pub array: ElectrodeArraySpec,
    pub va: VaParams,
    /// Ventricular R amplitude relative to the atrial panel's largest
    /// excursion; the absolute amplitude is resolved after simulation.
    pub va_relative_amplitude: f64,
}

impl Scenario {
    /// The stock fibrillation episode: 2 cm sheet, five staggered foci at a
    /// 160 ms cycle, calibrated to 100 cm/s conduction.
    pub fn default_af() -> Result<Self> {
        let model = MitchellSchaeffer::default();
        let d = calibrate_diffusion(&model, 100.0, 0.025, 0.04)?;
        let tissue = TissueConfig::default()
            .with_resolution(0.025, 0.04)?
            .with_diffusion(d)?
            .with_grid(80, 80)?;
        let foci = FociSchedule::five_sources(&tissue, 160.0);
        Ok(Self {
            model: ModelChoice::Phenomenological,
            duration_s: 10.0,
            seed: 1,
            tissue,
            foci,
            array: ElectrodeArraySpec::default(),
            va: VaParams::default(),
            va_relative_amplitude: 0.65,
        })
    }
}

fn scenario_keys() -> &'static [&'static str] {
    &[
        "version",
        "model",
        "duration_s",
        "seed",
        "tissue.rows",
        "tissue.cols",
        "tissue.dx_cm",
        "tissue.dt_ms",
        "tissue.cv_cm_s",
        "tissue.d_long_cm2_ms",
        "tissue.anisotropy_ratio",
        "tissue.sigma_e_ms_per_cm",
        "foci.sources",
        "foci.cycle_length_ms",
        "foci.stimulus_duration_ms",
        "foci.stimulus_amplitude",
        "foci.radius_cells",
        "foci.timing_jitter_frac",
        "array.rows",
        "array.cols",
        "array.pitch_mm",
        "array.height_mm",
        "va.rate_bpm",
        "va.relative_amplitude",
        "va.amplitude_jitter",
        "va.width_jitter",
        "va.first_beat_ms",
    ]
}

/// Parse the flat key-value scenario schema. Unknown keys, duplicate keys
/// and a missing or wrong `version` are all hard errors; anything else
/// falls back to [`Scenario::default_af`] piecewise.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !scenario_keys().contains(&k) {
            return Err(Error::InvalidConfig(format!("line {}: unknown key {k:?}", lineno + 1)));
        }
        if map.insert(k, v).is_some() {
            return Err(Error::InvalidConfig(format!("line {}: duplicate key {k:?}", lineno + 1)));
        }
    }

    let version = map
        .get("version")
        .ok_or_else(|| Error::InvalidConfig("missing required key `version`".into()))?;
    let version: u64 = version
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad version {version:?}")))?;
    if version != SCENARIO_VERSION {
        return Err(Error::UnsupportedVersion(version.min(u16::MAX as u64) as u16));
    }

    let f64_key = |key: &str| -> Result<Option<f64>> {
        map.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad number for {key}: {v:?}")))
            })
            .transpose()
    };
    let usize_key = |key: &str| -> Result<Option<usize>> {
        map.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad integer for {key}: {v:?}")))
            })
            .transpose()
    };

    let model = match map.get("model") {
        None => ModelChoice::Phenomenological,
        Some(v) => ModelChoice::parse(v)?,
    };

    // Tissue first; foci and the stock defaults hang off it.
    let mut tissue = TissueConfig::default()
        .with_resolution(
            f64_key("tissue.dx_cm")?.unwrap_or(0.025),
            f64_key("tissue.dt_ms")?.unwrap_or(0.04),
        )?
        .with_grid(
            usize_key("tissue.cols")?.unwrap_or(80),
            usize_key("tissue.rows")?.unwrap_or(80),
        )?;
    if let Some(ratio) = f64_key("tissue.anisotropy_ratio")? {
        tissue = tissue.with_anisotropy_ratio(ratio)?;
    }
    if let Some(sigma) = f64_key("tissue.sigma_e_ms_per_cm")? {
        tissue = tissue.with_conductivity(sigma)?;
    }
    let explicit_d = f64_key("tissue.d_long_cm2_ms")?;
    let cv = f64_key("tissue.cv_cm_s")?;
    if explicit_d.is_some() && cv.is_some() {
        return Err(Error::InvalidConfig(
            "set either tissue.cv_cm_s or tissue.d_long_cm2_ms, not both".into(),
        ));
    }

    let cycle = f64_key("foci.cycle_length_ms")?.unwrap_or(160.0);
    let mut foci = match map.get("foci.sources") {
        None => FociSchedule::five_sources(&tissue, cycle),
        Some(&"auto") => FociSchedule::five_sources(&tissue, cycle),
        Some(v) => {
            let mut sources = Vec::new();
            for part in v.split(';') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let (r, c) = part.split_once(',').ok_or_else(|| {
                    Error::InvalidConfig(format!("foci.sources entry {part:?} is not `row,col`"))
                })?;
                let r: usize = r.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("bad focus row in {part:?}"))
                })?;
                let c: usize = c.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("bad focus col in {part:?}"))
                })?;
                sources.push((r, c));
            }
            if sources.is_empty() {
                return Err(Error::InvalidConfig("foci.sources lists no positions".into()));
            }
            let n = sources.len();
            let template = FociSchedule::single_source(&tissue, cycle);
            FociSchedule {
                sources,
                phase_offsets_ms: (0..n).map(|i| i as f64 * cycle / n as f64).collect(),
                ..template
            }
        }
    };
    if let Some(v) = f64_key("foci.stimulus_duration_ms")? {
        foci.stimulus_duration_ms = v;
    }
    if let Some(v) = f64_key("foci.stimulus_amplitude")? {
        foci.stimulus_amplitude = v;
    }
    if let Some(v) = f64_key("foci.radius_cells")? {
        foci.radius_cells = v;
    }
    if let Some(v) = f64_key("foci.timing_jitter_frac")? {
        foci.timing_jitter_frac = v;
    }
    foci.validate(&tissue)?;

    let array = ElectrodeArraySpec {
        rows: usize_key("array.rows")?.unwrap_or(8),
        cols: usize_key("array.cols")?.unwrap_or(8),
        pitch_mm: f64_key("array.pitch_mm")?.unwrap_or(2.0),
        height_mm: f64_key("array.height_mm")?.unwrap_or(0.5),
    };

    let mut va = VaParams::default();
    if let Some(v) = f64_key("va.rate_bpm")? {
        va.rate_bpm = v;
    }
    if let Some(v) = f64_key("va.amplitude_jitter")? {
        va.amplitude_jitter = v;
    }
    if let Some(v) = f64_key("va.width_jitter")? {
        va.width_jitter = v;
    }
    if let Some(v) = f64_key("va.first_beat_ms")? {
        va.first_beat_ms = v;
    }
    va.validate()?;

    // Diffusion last: calibration simulates, and a config that fails any of
    // the cheap checks above should not pay for it first.
    tissue = match explicit_d {
        Some(d) => tissue.with_diffusion(d)?,
        None => {
            let target = cv.unwrap_or(100.0);
            let d = match model {
                ModelChoice::Phenomenological => calibrate_diffusion(
                    &MitchellSchaeffer::default(),
                    target,
                    tissue.dx_cm(),
                    tissue.dt_ms(),
                )?,
                ModelChoice::AtrialRemodeled => calibrate_diffusion(
                    &Courtemanche::remodeled(),
                    target,
                    tissue.dx_cm(),
                    tissue.dt_ms(),
                )?,
                ModelChoice::AtrialBaseline => calibrate_diffusion(
                    &Courtemanche::baseline(),
                    target,
                    tissue.dx_cm(),
                    tissue.dt_ms(),
                )?,
            };
            tissue.with_diffusion(d)?.with_cv_target(target)?
        }
    };

    let scenario = Scenario {
        model,
        duration_s: f64_key("duration_s")?.unwrap_or(10.0),
        seed: usize_key("seed")?.unwrap_or(1) as u64,
        tissue,
        foci,
        array,
        va,
        va_relative_amplitude: f64_key("va.relative_amplitude")?.unwrap_or(0.65),
    };
    if !(scenario.duration_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "duration_s must be positive, got {}",
            scenario.duration_s
        )));
    }
    if !(scenario.va_relative_amplitude >= 0.0 && scenario.va_relative_amplitude.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "va.relative_amplitude must be nonnegative, got {}",
            scenario.va_relative_amplitude
        )));
    }
    Ok(scenario)
}

/// Write a scenario back out in the same schema `parse_scenario` reads,
/// with every key present and commented. Diffusion is always rendered
/// explicitly so a round trip skips re-calibration.
pub fn render_scenario(s: &Scenario) -> String {
    let sources: Vec<String> =
        s.foci.sources.iter().map(|(r, c)| format!("{r},{c}")).collect();
    format!(
        "version = {SCENARIO_VERSION}\n\
         model = {}                  # phenomenological | atrial-remodeled | atrial-baseline\n\
         duration_s = {}\n\
         seed = {}\n\
         \n\
         tissue.rows = {}\n\
         tissue.cols = {}\n\
         tissue.dx_cm = {}\n\
         tissue.dt_ms = {}\n\
         tissue.d_long_cm2_ms = {}   # or tissue.cv_cm_s to calibrate at load\n\
         tissue.anisotropy_ratio = {}\n\
         tissue.sigma_e_ms_per_cm = {}\n\
         \n\
         foci.sources = {}           # `row,col; ...` or `auto` for five staggered foci\n\
         foci.cycle_length_ms = {}\n\
         foci.stimulus_duration_ms = {}\n\
         foci.stimulus_amplitude = {}\n\
         foci.radius_cells = {}\n\
         foci.timing_jitter_frac = {}\n\
         \n\
         array.rows = {}\n\
         array.cols = {}\n\
         array.pitch_mm = {}\n\
         array.height_mm = {}\n\
         \n\
         va.rate_bpm = {}\n\
         va.relative_amplitude = {}  # R peak relative to the atrial panel maximum\n\
         va.amplitude_jitter = {}\n\
         va.width_jitter = {}\n\
         va.first_beat_ms = {}\n",
        s.model.as_str(),
        s.duration_s,
        s.seed,
        s.tissue.ny(),
        s.tissue.nx(),
        s.tissue.dx_cm(),
        s.tissue.dt_ms(),
        s.tissue.d_long_cm2_ms(),
        s.tissue.anisotropy_ratio(),
        s.tissue.sigma_e_ms_per_cm(),
        sources.join("; "),
        s.foci.cycle_length_ms,
        s.foci.stimulus_duration_ms,
        s.foci.stimulus_amplitude,
        s.foci.radius_cells,
        s.foci.timing_jitter_frac,
        s.array.rows,
        s.array.cols,
        s.array.pitch_mm,
        s.array.height_mm,
        s.va.rate_bpm,
        s.va_relative_amplitude,
        s.va.amplitude_jitter,
        s.va.width_jitter,
        s.va.first_beat_ms,
    )
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn save_scenario(path: &Path, s: &Scenario) -> Result<()> {
    atomic_write(path, render_scenario(s).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;
    use tempfile::TempDir;

    use crate::transforms::{joint_transform, stft};

    fn random_panel(k: usize, t: usize, seed: u64) -> SignalPanel {
        let mut rng = StdRng::seed_from_u64(seed);
        let samples =
            Array2::from_shape_fn((k, t), |_| rng.random_range(-1.0..1.0));
        SignalPanel::new(samples, 1000.0).unwrap()
    }

    fn full_header(k_rows: usize, k_cols: usize, panel: &SignalPanel) -> RecordingHeader {
        RecordingHeader::new(
            ArrayLayout::full(k_rows, k_cols, 2.0),
            RecordingLabel::Synthetic,
            panel,
        )
        .unwrap()
        .with_provenance(42, config_fingerprint(b"test"))
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("panel.egm");
        let mut panel = random_panel(8, 500, 7);
        // Edge payloads: negative zero, subnormal, huge, tiny.
        panel.samples_mut()[[0, 0]] = -0.0;
        panel.samples_mut()[[1, 1]] = f64::MIN_POSITIVE / 8.0;
        panel.samples_mut()[[2, 2]] = 1.0e308;
        panel.samples_mut()[[3, 3]] = -7.213e-301;
        let header = full_header(2, 4, &panel);

        save_panel(&path, &header, &panel).unwrap();
        let (h2, p2) = load_panel(&path).unwrap();
        assert_eq!(h2, header);
        assert_eq!(p2.sample_rate_hz(), panel.sample_rate_hz());
        for (a, b) in panel.samples().iter().zip(p2.samples().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("panel.csv");
        let mut panel = random_panel(4, 200, 11);
        panel.samples_mut()[[0, 0]] = -0.0;
        panel.samples_mut()[[1, 1]] = f64::MIN_POSITIVE;
        panel.samples_mut()[[2, 2]] = 0.1 + 0.2;
        let header = full_header(2, 2, &panel);

        save_panel(&path, &header, &panel).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# version = 1"));
        let (h2, p2) = load_panel(&path).unwrap();
        assert_eq!(h2, header);
        for (a, b) in panel.samples().iter().zip(p2.samples().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bare_csv_with_header_row_loads() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("x.csv");
        let mut text = String::from("a,b,c,d\n");
        for i in 0..1000 {
            text.push_str(&format!("{0},{0},{0},{0}\n", i as f64 * 0.5));
        }
        std::fs::write(&path, &text).unwrap();
        let (h, p) = load_panel(&path).unwrap();
        assert_eq!((p.channels(), p.len()), (4, 1000));
        assert_eq!(h.channel_count, 4);
        assert_eq!(h.sample_rate_hz, 1000.0);
        assert_eq!(p.samples()[[2, 10]], 5.0);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("panel.egm");
        let panel = random_panel(4, 100, 3);
        let header = full_header(2, 2, &panel);
        save_panel(&path, &header, &panel).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        for cut in [3, 40, 63, bytes.len() - 9, bytes.len() - 1] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            match load_panel(&path) {
                Err(Error::CorruptFile(_)) => {}
                other => panic!("cut at {cut}: expected corrupt-file error, got {other:?}"),
            }
        }
    }

    #[test]
    fn unsupported_version_is_reported() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("panel.egm");
        let panel = random_panel(2, 10, 5);
        let header = full_header(1, 2, &panel);
        save_panel(&path, &header, &panel).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        match load_panel(&path) {
            Err(Error::UnsupportedVersion(9)) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn layout_channel_mismatch_is_rejected() {
        let panel = random_panel(5, 10, 9);
        let err = RecordingHeader::new(
            ArrayLayout::full(2, 2, 2.0),
            RecordingLabel::Synthetic,
            &panel,
        );
        assert!(err.is_err());

        let layout = ArrayLayout { rows: 2, cols: 3, pitch_mm: 2.0, inactive: vec![4] };
        let h = RecordingHeader::new(layout, RecordingLabel::SinusRhythm, &panel).unwrap();
        assert_eq!(h.channel_count, 5);
    }

    #[test]
    fn tensor_round_trips_both_kinds() {
        let dir = TempDir::new().unwrap();
        let panel = random_panel(6, 400, 13);
        let cfg = FrameConfig::new(100, 50, Window::Hann).unwrap().with_fft_bins(128).unwrap();
        let t = stft(&panel, &cfg).unwrap();

        let g = ElectrodeGraph::build_grid(2, 3, 2.0, &BTreeSet::new()).unwrap();
        let spec = crate::graph::eigendecompose(&g.laplacian()).unwrap();
        let j = joint_transform(&panel, &cfg, &spec).unwrap();

        let tp = dir.path().join("x.stft");
        save_stft(&tp, &t).unwrap();
        let t2 = load_stft(&tp).unwrap();
        assert_eq!(t2.frame_config(), t.frame_config());
        assert_eq!(t2.sample_rate_hz(), t.sample_rate_hz());
        for (a, b) in t.coeffs().iter().zip(t2.coeffs().iter()) {
            assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
        }

        let jp = dir.path().join("x.joint");
        save_joint(&jp, &j).unwrap();
        let j2 = load_joint(&jp).unwrap();
        for (a, b) in j.coeffs().iter().zip(j2.coeffs().iter()) {
            assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
        }

        match load_joint(&tp) {
            Err(Error::CorruptFile(msg)) => assert!(msg.contains("per-channel")),
            other => panic!("expected kind mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let dir = TempDir::new().unwrap();
        let panel = random_panel(3, 300, 17);
        let cfg = FrameConfig::new(100, 50, Window::Hann).unwrap();
        let t = stft(&panel, &cfg).unwrap();
        let path = dir.path().join("x.stft");
        save_stft(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        match load_stft(&path) {
            Err(Error::CorruptFile(_)) => {}
            other => panic!("expected corrupt-file error, got {other:?}"),
        }
    }

    #[test]
    fn joint_csv_export_has_expected_shape() {
        let dir = TempDir::new().unwrap();
        let panel = random_panel(4, 300, 19);
        let cfg = FrameConfig::new(100, 50, Window::Hann).unwrap();
        let g = ElectrodeGraph::build_grid(2, 2, 2.0, &BTreeSet::new()).unwrap();
        let spec = crate::graph::eigendecompose(&g.laplacian()).unwrap();
        let j = joint_transform(&panel, &cfg, &spec).unwrap();
        let path = dir.path().join("j.csv");
        export_joint_csv(&path, &j).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,tau,f_hz,re,im"));
        let expected = j.num_vertices() * j.num_frames() * j.one_sided_bins();
        assert_eq!(lines.count(), expected);
        // Bin spacing is rate / nfft = 10 Hz here.
        assert!(text.contains("0,0,10,"));
    }

    #[test]
    fn graph_document_round_trips_and_detects_tampering() {
        let dir = TempDir::new().unwrap();
        let inactive: BTreeSet<usize> = [5, 11].into_iter().collect();
        let g = ElectrodeGraph::build_grid(4, 6, 2.5, &inactive).unwrap();
        let path = dir.path().join("g.json");
        save_graph(&path, &g).unwrap();

        let g2 = load_graph(&path).unwrap();
        assert_eq!(g2.vertex_count(), g.vertex_count());
        assert_eq!(g2.adjacency(), g.adjacency());

        let text = std::fs::read_to_string(&path).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["weights"][0][2] = serde_json::json!(1.2345);
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        match load_graph(&path) {
            Err(Error::CorruptFile(msg)) => assert!(msg.contains("disagrees")),
            other => panic!("expected consistency failure, got {other:?}"),
        }
    }

    #[test]
    fn metric_report_shape_and_round_trip() {
        let dir = TempDir::new().unwrap();
        let truth = random_panel(3, 2000, 23);
        let estimate = random_panel(3, 2000, 29);
        let r_peaks = vec![vec![300usize, 900, 1500]; 3];
        let intervals = vec![vec![(250usize, 350usize), (850, 950), (1450, 1550)]; 3];
        let ann = BeatAnnotations::new(r_peaks, intervals).unwrap();

        let report =
            build_metric_report("gae", &estimate, Some(&truth), Some(&truth), Some(&ann))
                .unwrap();
        assert_eq!(report.method, "gae");
        assert!(report.nmse.is_some() && report.cc.is_some());
        assert!(report.vdr.is_some() && report.vr.is_some());
        assert_eq!(report.per_channel.len(), 3);

        let path = dir.path().join("report.json");
        save_metric_report(&path, &report).unwrap();
        let back = load_metric_report(&path).unwrap();
        assert_eq!(back, report);

        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = v.as_object().unwrap();
        for key in ["method", "nmse", "cc", "vdr", "vr", "per_channel", "warnings"] {
            assert!(obj.contains_key(key), "missing {key}");
        }

        // Without ground truth the intrusive metrics stay null.
        let partial = build_metric_report("abs", &estimate, None, None, Some(&ann)).unwrap();
        assert!(partial.nmse.is_none() && partial.cc.is_none() && partial.vdr.is_none());
        assert!(partial.vr.is_some());
        assert!(build_metric_report("abs", &estimate, None, None, None).is_err());
    }

    #[test]
    fn scenario_round_trips_through_render() {
        let mut s = Scenario::default_af().unwrap();
        s.seed = 99;
        s.duration_s = 2.5;
        s.foci.cycle_length_ms = 180.0;
        let text = render_scenario(&s);
        let s2 = parse_scenario(&text).unwrap();
        assert_eq!(s2.seed, 99);
        assert_eq!(s2.duration_s, 2.5);
        assert_eq!(s2.model, s.model);
        assert_eq!(s2.foci.sources, s.foci.sources);
        assert_eq!(s2.foci.cycle_length_ms, 180.0);
        assert_eq!(s2.tissue.d_long_cm2_ms(), s.tissue.d_long_cm2_ms());
        assert_eq!(s2.array, s.array);
        assert_eq!(s2.va_relative_amplitude, s.va_relative_amplitude);
    }

    #[test]
    fn scenario_rejects_bad_input() {
        assert!(matches!(
            parse_scenario("model = phenomenological\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("version = 3\n"),
            Err(Error::UnsupportedVersion(3))
        ));
        assert!(matches!(
            parse_scenario("version = 1\nbogus.key = 2\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("version = 1\nseed = 1\nseed = 2\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("version = 1\ntissue.cv_cm_s = 90\ntissue.d_long_cm2_ms = 1e-3\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(parse_scenario("version = 1\nfoci.sources = 4,4; 70,70\n").is_ok());
        assert!(parse_scenario("version = 1\nfoci.sources = 4\n").is_err());
    }

    #[test]
    fn explicit_diffusion_skips_calibration() {
        let s = parse_scenario(
            "version = 1\ntissue.d_long_cm2_ms = 0.0004\ntissue.rows = 40\ntissue.cols = 50\n",
        )
        .unwrap();
        assert_eq!(s.tissue.d_long_cm2_ms(), 0.0004);
        assert_eq!((s.tissue.ny(), s.tissue.nx()), (40, 50));
        // Foci default to the five staggered sources inside the grid.
        assert_eq!(s.foci.sources.len(), 5);
        assert!(s.foci.sources.iter().all(|&(r, c)| r < 40 && c < 50));
    }

    #[test]
    fn comparison_csv_is_long_form() {
        use crate::pipeline::{MethodScores, SegmentComparison};
        let seg = |i: usize| SegmentComparison {
            segment_index: i,
            episode_seed: i as u64,
            expected_beats: 7,
            detected_beats: 7,
            gae: MethodScores { nmse: 0.2, cc: 0.9, vdr_db: 3.5, vr: 0.01 },
            abs: MethodScores { nmse: 0.4, cc: 0.8, vdr_db: 2.0, vr: 0.02 },
            warnings: vec![],
        };
        let acl = AclComparison {
            acl_ms: 160.0,
            segments: vec![seg(0), seg(1)],
            gae_median: MethodScores { nmse: 0.2, cc: 0.9, vdr_db: 3.5, vr: 0.01 },
            abs_median: MethodScores { nmse: 0.4, cc: 0.8, vdr_db: 2.0, vr: 0.02 },
        };
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cmp.csv");
        export_comparison_csv(&path, &[acl]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "acl_ms,segment,method,metric,value");
        // 2 segments x 2 methods x 4 metrics.
        assert_eq!(lines.len(), 1 + 16);
        assert!(lines.contains(&"160,0,gae,vdr,3.5"));
        assert!(lines.contains(&"160,1,abs,nmse,0.4"));
    }

    #[test]
    fn map_csv_checks_axes() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("m.csv");
        let values = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64);
        let rows: Vec<f64> = vec![0.0, 1.0];
        let cols: Vec<f64> = vec![0.0, 10.0, 20.0];
        export_map_csv(&path, ("tau", "f_hz", "db"), &rows, &cols, &values).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("tau,f_hz,db\n0,0,0\n"));

        let bad = export_map_csv(&path, ("a", "b", "c"), &rows, &rows, &values);
        assert!(bad.is_err());
    }

    #[test]
    fn spectrum_csv_lists_every_mode() {
        let dir = TempDir::new().unwrap();
        let g = ElectrodeGraph::build_grid(2, 3, 2.0, &BTreeSet::new()).unwrap();
        let spec = crate::graph::eigendecompose(&g.laplacian()).unwrap();
        let path = dir.path().join("s.csv");
        export_spectrum_csv(&path, &spec).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "k,lambda,v0,v1,v2,v3,v4,v5");
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("out.bin");
        std::fs::write(&path, b"old").unwrap();
        atomic_write(&path, b"new content").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"new content");
        // No stray temp files left behind.
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(config_fingerprint(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(config_fingerprint(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_ne!(config_fingerprint(b"ab"), config_fingerprint(b"ba"));
    }
}
