//! End-to-end separation benchmark on simulator ground truth: generate
//! atrial panels from the tissue model, overlay a jittered ventricular
//! train, run both extraction methods, and score them against the known
//! atrial signal.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{abs_baseline, extract_atrial_with_spectrum, GAEParams};
use crate::graph::{eigendecompose, ElectrodeGraph, LaplacianSpectrum};
use crate::metrics::{cc, detect_beats, nmse, vdr, vr, BeatDetectConfig};
use crate::panel::SignalPanel;
use crate::sim::{
    calibrate_diffusion, run_af_episode, synthesize_va, ElectrodeArraySpec,
    ElectrodeProjector, FociSchedule, MitchellSchaeffer, TissueConfig, VaParams,
    OUTPUT_RATE_HZ,
};
use crate::transforms::{FrameConfig, Window};

/// Everything needed to reproduce one benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tissue: TissueConfig,
    pub array: ElectrodeArraySpec,
    pub segment_s: f64,
    pub segments_per_acl: usize,
    /// Ventricular R amplitude as a fraction of the atrial panel maximum.
    pub va_relative_amplitude: f64,
    pub va_amplitude_jitter: f64,
    pub va_width_jitter: f64,
    pub va_rate_bpm: f64,
    /// White sensor-noise floor as a fraction of the atrial panel maximum.
    /// Folded into the atrial panel; zero keeps the recording noise-free.
    #[serde(default)]
    pub noise_relative: f64,
    pub gae: GAEParams,
    pub beat_detect: BeatDetectConfig,
    pub seed: u64,
}

impl PipelineConfig {
    /// Benchmark layout: a 2x2 cm sheet at 0.25 mm spacing with diffusion
    /// calibrated for 100 cm/s along fibres, under the standard 8x8 array.
    pub fn benchmark() -> Result<Self> {
        let model = MitchellSchaeffer::default();
        let d = calibrate_diffusion(&model, 100.0, 0.025, 0.04)?;
        let tissue = TissueConfig::default()
            .with_resolution(0.025, 0.04)?
            .with_diffusion(d)?
            .with_grid(80, 80)?;
        Ok(Self {
            tissue,
            array: ElectrodeArraySpec::default(),
            segment_s: 10.0,
            segments_per_acl: 6,
            va_relative_amplitude: 0.65,
            va_amplitude_jitter: 0.2,
            va_width_jitter: 0.4,
            va_rate_bpm: 70.0,
            noise_relative: 0.0,
            gae: GAEParams::default(),
            beat_detect: BeatDetectConfig::default(),
            seed: 0x00c0_ffee,
        })
    }

    fn frame_config(&self) -> Result<FrameConfig> {
        // 0.1 s half-overlapped periodic Hann frames, zero-padded to 128.
        FrameConfig::new(100, 50, Window::Hann)?.with_fft_bins(128)
    }

    fn validate(&self) -> Result<()> {
        self.tissue.validate()?;
        if !(self.segment_s > 0.0) || self.segments_per_acl == 0 {
            return Err(Error::InvalidParameter(
                "benchmark needs a positive duration and at least one segment".into(),
            ));
        }
        if !(self.va_relative_amplitude > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "relative ventricular amplitude must be positive, got {}",
                self.va_relative_amplitude
            )));
        }
        if !(self.noise_relative >= 0.0 && self.noise_relative.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "relative noise floor must be finite and non-negative, got {}",
                self.noise_relative
            )));
        }
        Ok(())
    }
}

/// Scores for one method on one segment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodScores {
    pub nmse: f64,
    pub cc: f64,
    pub vdr_db: f64,
    pub vr: f64,
}

/// One mixed segment evaluated by both methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentComparison {
    pub segment_index: usize,
    pub episode_seed: u64,
    pub expected_beats: usize,
    pub detected_beats: usize,
    pub gae: MethodScores,
    pub abs: MethodScores,
    pub warnings: Vec<String>,
}

/// All segments of one atrial cycle length, plus per-method medians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AclComparison {
    pub acl_ms: f64,
    pub segments: Vec<SegmentComparison>,
    pub gae_median: MethodScores,
    pub abs_median: MethodScores,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn median_scores(segments: &[SegmentComparison], pick: impl Fn(&SegmentComparison) -> MethodScores) -> MethodScores {
    let mut n: Vec<f64> = segments.iter().map(|s| pick(s).nmse).collect();
    let mut c: Vec<f64> = segments.iter().map(|s| pick(s).cc).collect();
    let mut v: Vec<f64> = segments.iter().map(|s| pick(s).vdr_db).collect();
    let mut r: Vec<f64> = segments.iter().map(|s| pick(s).vr).collect();
    MethodScores {
        nmse: median(&mut n),
        cc: median(&mut c),
        vdr_db: median(&mut v),
        vr: median(&mut r),
    }
}

/// Ground truth and mixture for one segment.
pub struct SegmentData {
    pub atrial: SignalPanel,
    pub ventricular: SignalPanel,
    pub mixed: SignalPanel,
    pub r_peaks: Vec<usize>,
    pub episode_seed: u64,
}

/// Simulate one segment: an AF episode projected onto the array, plus a
/// scaled ventricular train.
pub fn generate_segment(
    cfg: &PipelineConfig,
    acl_ms: f64,
    segment_index: usize,
) -> Result<SegmentData> {
    cfg.validate()?;
    let model = MitchellSchaeffer::default();
    let foci = FociSchedule::five_sources(&cfg.tissue, acl_ms);
    let episode_seed = cfg
        .seed
        .wrapping_add((acl_ms.round() as u64) << 32)
        .wrapping_add(segment_index as u64);

    let mut proj = ElectrodeProjector::new(&cfg.array, &cfg.tissue)?;
    run_af_episode(&cfg.tissue, &model, &foci, cfg.segment_s, episode_seed, &mut proj)?;
    let mut atrial = proj.into_panel()?;
    let aa_max = atrial.max_abs();
    if !(aa_max > 0.0) {
        return Err(Error::InsufficientData(
            "episode produced a silent atrial panel".into(),
        ));
    }
    if cfg.noise_relative > 0.0 {
        // The clean peak sets both the ventricular scale and the noise floor;
        // the noise itself is folded into the atrial panel so the mixture
        // stays an exact sum of the two ground-truth panels.
        let noise = Normal::new(0.0, cfg.noise_relative * aa_max)
            .map_err(|e| Error::InvalidParameter(format!("noise floor: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed ^ 0x3737_3737_3737_3737);
        for s in atrial.samples_mut().iter_mut() {
            *s += noise.sample(&mut rng);
        }
    }

    let va_params = VaParams {
        rate_bpm: cfg.va_rate_bpm,
        amplitude: cfg.va_relative_amplitude * aa_max,
        amplitude_jitter: cfg.va_amplitude_jitter,
        width_jitter: cfg.va_width_jitter,
        first_beat_ms: 400.0,
    };
    let va = synthesize_va(
        cfg.array.rows,
        cfg.array.cols,
        atrial.len(),
        OUTPUT_RATE_HZ,
        &va_params,
        episode_seed ^ 0x5a5a_5a5a_5a5a_5a5a,
    )?;
    let mixed = atrial.mix(&va.panel)?;
    Ok(SegmentData {
        atrial,
        ventricular: va.panel,
        mixed,
        r_peaks: va.r_peaks,
        episode_seed,
    })
}

fn score_method(
    truth: &SignalPanel,
    mixed: &SignalPanel,
    estimate: &SignalPanel,
    ann: &crate::metrics::BeatAnnotations,
    warnings: &mut Vec<String>,
    tag: &str,
) -> Result<MethodScores> {
    let n = nmse(truth, estimate)?;
    let c = cc(truth, estimate)?;
    let d = vdr(mixed, estimate, ann)?;
    let r = vr(estimate, ann)?;
    for w in n
        .warnings
        .iter()
        .chain(&c.warnings)
        .chain(&d.warnings)
        .chain(&r.warnings)
    {
        warnings.push(format!("{tag}: {w}"));
    }
    Ok(MethodScores { nmse: n.value, cc: c.value, vdr_db: d.value, vr: r.value })
}

/// Run both methods on one segment and score them against ground truth.
/// The residual scored by the peak-reduction metric is the atrial estimate,
/// i.e. what remains of the mixture after cancellation.
pub fn evaluate_segment(
    cfg: &PipelineConfig,
    spectrum: &LaplacianSpectrum,
    acl_ms: f64,
    segment_index: usize,
) -> Result<SegmentComparison> {
    let data = generate_segment(cfg, acl_ms, segment_index)?;
    let frames = cfg.frame_config()?;
    let mut warnings = Vec::new();

    let ann = detect_beats(&data.mixed, &cfg.beat_detect)?;
    let detected = ann.num_beats();
    if detected != data.r_peaks.len() {
        warnings.push(format!(
            "beat detection found {detected} beats, schedule has {}",
            data.r_peaks.len()
        ));
    }

    let gae_sep = extract_atrial_with_spectrum(&data.mixed, spectrum, &frames, &cfg.gae)?;
    let half_width =
        (cfg.beat_detect.qrs_half_width_ms * data.mixed.sample_rate_hz() / 1000.0).round() as usize;
    let abs_sep = abs_baseline(&data.mixed, ann.r_peaks(), half_width)?;

    let gae = score_method(&data.atrial, &data.mixed, &gae_sep.atrial, &ann, &mut warnings, "gae")?;
    let abs = score_method(&data.atrial, &data.mixed, &abs_sep.atrial, &ann, &mut warnings, "abs")?;

    Ok(SegmentComparison {
        segment_index,
        episode_seed: data.episode_seed,
        expected_beats: data.r_peaks.len(),
        detected_beats: detected,
        gae,
        abs,
        warnings,
    })
}

/// Evaluate all segments of one atrial cycle length.
pub fn run_acl_comparison(cfg: &PipelineConfig, acl_ms: f64) -> Result<AclComparison> {
    cfg.validate()?;
    let graph = ElectrodeGraph::build_grid(
        cfg.array.rows,
        cfg.array.cols,
        cfg.array.pitch_mm,
        &BTreeSet::new(),
    )?;
    let spectrum = eigendecompose(&graph.laplacian())?;
    let segments: Vec<SegmentComparison> = (0..cfg.segments_per_acl)
        .map(|i| evaluate_segment(cfg, &spectrum, acl_ms, i))
        .collect::<Result<_>>()?;
    let gae_median = median_scores(&segments, |s| s.gae);
    let abs_median = median_scores(&segments, |s| s.abs);
    Ok(AclComparison { acl_ms, segments, gae_median, abs_median })
}

/// The full benchmark: both standard atrial cycle lengths.
pub fn run_benchmark(cfg: &PipelineConfig) -> Result<Vec<AclComparison>> {
    [160.0, 180.0]
        .iter()
        .map(|&acl| run_acl_comparison(cfg, acl))
        .collect()
}
