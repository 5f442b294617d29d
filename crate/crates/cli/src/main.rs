//! `egm`: one front end for the electrogram toolkit — build lattice graphs,
//! export spectral analyses, run atrial extraction, simulate fibrillation
//! episodes, score estimates, and reproduce the synthetic benchmark.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or processing
//! errors. `EGM_THREADS` caps worker parallelism; `--json-logs` switches
//! stderr diagnostics to line-delimited JSON.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use egm_core::error::{Error, Result};
use egm_core::extraction::{abs_baseline, extract_atrial_with_spectrum, GAEParams};
use egm_core::graph::{eigendecompose, ElectrodeGraph, LaplacianSpectrum};
use egm_core::io::{
    self, atomic_write, config_fingerprint, ArrayLayout, ModelChoice, RecordingHeader,
    RecordingLabel, Scenario,
};
use egm_core::metrics::{detect_beats, BeatAnnotations, BeatDetectConfig};
use egm_core::panel::SignalPanel;
use egm_core::pipeline::{run_acl_comparison, AclComparison, PipelineConfig};
use egm_core::sim::{
    run_af_episode, synthesize_va, Courtemanche, ElectrodeProjector, IonicModel,
    MitchellSchaeffer, VaParams, OUTPUT_RATE_HZ,
};
use egm_core::spectral::{
    band_average_variation, boundary_graph_frequency, gft_energy_linear, normalized_energy_db,
    quantize_levels, relevant_band, Level,
};
use egm_core::transforms::{joint_transform, stft, FrameConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "egm", version, about = "Electrogram analysis toolkit")]
struct Cli {
    /// Emit diagnostics as line-delimited JSON on stderr.
    #[arg(long, global = true)]
    json_logs: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an electrode lattice graph and write it as a JSON document.
    Graph(GraphArgs),
    /// Export spectral analyses of a panel as CSV or JSON.
    Analyze(AnalyzeArgs),
    /// Separate atrial activity from a mixed panel.
    Extract(ExtractArgs),
    /// Simulate a fibrillation episode with a ventricular overlay.
    Simulate(SimulateArgs),
    /// Score an atrial estimate into a metric report.
    Metrics(MetricsArgs),
    /// Grid-search the extraction parameters against a ground-truth panel.
    Tune(TuneArgs),
    /// Run the full synthetic benchmark and export its comparison tables.
    Repro(ReproArgs),
}

struct Diag {
    json: bool,
}

impl Diag {
    fn log(&self, level: &str, msg: &str) {
        if self.json {
            eprintln!("{}", serde_json::json!({ "level": level, "msg": msg }));
        } else {
            eprintln!("{level}: {msg}");
        }
    }

    fn info(&self, msg: &str) {
        self.log("info", msg);
    }

    fn warn(&self, msg: &str) {
        self.log("warn", msg);
    }

    fn error(&self, msg: &str) {
        self.log("error", msg);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let diag = Diag { json: cli.json_logs };
    if let Err(msg) = setup_threads(&diag) {
        diag.error(&msg);
        return ExitCode::from(EXIT_USAGE);
    }
    match run(cli.command, &diag) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            diag.error(&e.to_string());
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn setup_threads(diag: &Diag) -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("EGM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("EGM_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    diag.info(&format!("worker threads capped at {n}"));
    Ok(())
}

fn run(command: Command, diag: &Diag) -> Result<()> {
    match command {
        Command::Graph(a) => cmd_graph(a, diag),
        Command::Analyze(a) => cmd_analyze(a, diag),
        Command::Extract(a) => cmd_extract(a, diag),
        Command::Simulate(a) => cmd_simulate(a, diag),
        Command::Metrics(a) => cmd_metrics(a, diag),
        Command::Tune(a) => cmd_tune(a, diag),
        Command::Repro(a) => cmd_repro(a, diag),
    }
}

// ---------------------------------------------------------------------------
// graph

#[derive(Args)]
struct GraphArgs {
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    #[arg(long, default_value_t = 2.0)]
    pitch_mm: f64,
    /// Row-major lattice indices with no usable electrode.
    #[arg(long, value_delimiter = ',')]
    inactive: Vec<usize>,
    /// Graph document destination.
    #[arg(long)]
    out: PathBuf,
    /// Also export the Laplacian eigendecomposition as CSV.
    #[arg(long)]
    spectrum_csv: Option<PathBuf>,
}

fn cmd_graph(a: GraphArgs, diag: &Diag) -> Result<()> {
    let inactive: BTreeSet<usize> = a.inactive.iter().copied().collect();
    let g = ElectrodeGraph::build_grid(a.rows, a.cols, a.pitch_mm, &inactive)?;
    io::save_graph(&a.out, &g)?;
    diag.info(&format!(
        "wrote {}x{} lattice: {} vertices, {} edges",
        a.rows,
        a.cols,
        g.vertex_count(),
        g.edge_count()
    ));
    if let Some(path) = a.spectrum_csv {
        let spec = eigendecompose(&g.laplacian())?;
        io::export_spectrum_csv(&path, &spec)?;
        diag.info(&format!("wrote {} eigenpairs to {}", spec.len(), path.display()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeMode {
    /// Per-channel time-frequency coefficients, long-form CSV.
    Stft,
    /// Instantaneous graph-spectral energy, long-form CSV.
    Gft,
    /// Joint vertex/time-frequency coefficients, long-form CSV.
    Joint,
    /// Quantized energy levels of one channel's time-frequency map.
    Levels,
    /// Frequency band over which a level occurs, as JSON.
    Band,
    /// Graph frequency index holding a given energy fraction, as JSON.
    Boundary,
    /// Per-frame graph variation averaged over low and high temporal bands.
    BandVariation,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    mode: AnalyzeMode,
    #[arg(long)]
    input: PathBuf,
    /// Graph document; required by graph-aware modes.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Analysis window length in milliseconds.
    #[arg(long, default_value_t = 100.0)]
    window_ms: f64,
    /// Fractional window overlap in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// Channel for per-channel maps.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Energy fraction for --mode boundary.
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    /// Band split frequency in Hz for --mode band-variation.
    #[arg(long, default_value_t = 100.0)]
    split_hz: f64,
    /// Level for --mode band: l1 (within 1 dB), l2 (within 6 dB), l3.
    #[arg(long, default_value = "l1")]
    level: String,
}

fn frame_config(panel: &SignalPanel, window_ms: f64, overlap: f64) -> Result<FrameConfig> {
    let cfg = FrameConfig::hann_from_duration(panel.sample_rate_hz(), window_ms / 1000.0, overlap)?;
    cfg.with_fft_bins(cfg.window_len().next_power_of_two())
}

fn load_graph_spectrum(path: Option<&Path>) -> Result<(ElectrodeGraph, LaplacianSpectrum)> {
    let path = path.ok_or_else(|| {
        Error::InvalidParameter("this mode needs --graph <lattice document>".into())
    })?;
    let g = io::load_graph(path)?;
    let spec = eigendecompose(&g.laplacian())?;
    Ok((g, spec))
}

fn parse_level(s: &str) -> Result<Level> {
    match s.to_ascii_lowercase().as_str() {
        "l1" => Ok(Level::L1),
        "l2" => Ok(Level::L2),
        "l3" => Ok(Level::L3),
        other => Err(Error::InvalidParameter(format!(
            "unknown level {other:?}; expected l1, l2 or l3"
        ))),
    }
}

fn cmd_analyze(a: AnalyzeArgs, diag: &Diag) -> Result<()> {
    let (header, panel) = io::load_panel(&a.input)?;
    diag.info(&format!(
        "loaded {} channels x {} samples at {} Hz ({})",
        header.channel_count,
        header.duration_samples,
        header.sample_rate_hz,
        header.label.as_str()
    ));
    let cfg = frame_config(&panel, a.window_ms, a.overlap)?;

    match a.mode {
        AnalyzeMode::Stft => {
            let t = stft(&panel, &cfg)?;
            io::export_stft_csv(&a.out, &t)?;
        }
        AnalyzeMode::Joint => {
            let (_, spec) = load_graph_spectrum(a.graph.as_deref())?;
            let j = joint_transform(&panel, &cfg, &spec)?;
            io::export_joint_csv(&a.out, &j)?;
        }
        AnalyzeMode::Gft => {
            let (_, spec) = load_graph_spectrum(a.graph.as_deref())?;
            // Stored graph-major; exported (t, k, value) per the long form.
            let energy = gft_energy_linear(&panel, &spec)?;
            let t_axis: Vec<f64> = (0..panel.len()).map(|t| t as f64).collect();
            let k_axis: Vec<f64> = (0..spec.len()).map(|k| k as f64).collect();
            let by_time = energy.t().as_standard_layout().into_owned();
            io::export_map_csv(&a.out, ("t", "k", "energy"), &t_axis, &k_axis, &by_time)?;
        }
        AnalyzeMode::Levels => {
            let t = stft(&panel, &cfg)?;
            let map = normalized_energy_db(&t, a.channel)?;
            let lm = quantize_levels(&map);
            let bin_hz = t.bin_hz();
            let mut out = String::from("tau,f_hz,level\n");
            for (tau, row) in lm.labels().outer_iter().enumerate() {
                for (f, level) in row.iter().enumerate() {
                    out.push_str(&format!("{tau},{},{}\n", f as f64 * bin_hz, level.as_str()));
                }
            }
            atomic_write(&a.out, out.as_bytes())?;
        }
        AnalyzeMode::Band => {
            let t = stft(&panel, &cfg)?;
            let map = normalized_energy_db(&t, a.channel)?;
            let lm = quantize_levels(&map);
            let level = parse_level(&a.level)?;
            let band = relevant_band(&lm, level, t.bin_hz());
            let doc = serde_json::json!({ "level": level.as_str(), "band_hz": [band.0, band.1] });
            atomic_write(&a.out, serde_json::to_string_pretty(&doc)?.as_bytes())?;
        }
        AnalyzeMode::Boundary => {
            let (_, spec) = load_graph_spectrum(a.graph.as_deref())?;
            let energy = gft_energy_linear(&panel, &spec)?;
            let k_b = boundary_graph_frequency(&energy, a.p)?;
            let doc = serde_json::json!({ "p": a.p, "k_b": k_b });
            atomic_write(&a.out, serde_json::to_string_pretty(&doc)?.as_bytes())?;
        }
        AnalyzeMode::BandVariation => {
            let (_, spec) = load_graph_spectrum(a.graph.as_deref())?;
            let j = joint_transform(&panel, &cfg, &spec)?;
            let (low, high) = band_average_variation(&j, &spec, a.split_hz)?;
            let mut out = String::from("tau,band,variation\n");
            for (tau, v) in low.values().iter().enumerate() {
                out.push_str(&format!("{tau},low,{v}\n"));
            }
            for (tau, v) in high.values().iter().enumerate() {
                out.push_str(&format!("{tau},high,{v}\n"));
            }
            atomic_write(&a.out, out.as_bytes())?;
        }
    }
    diag.info(&format!("wrote {}", a.out.display()));
    Ok(())
}

// ---------------------------------------------------------------------------
// extract

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Graph-spectral shrinkage on flagged frames.
    Gae,
    /// Average beat subtraction around detected R peaks.
    Abs,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    /// Graph document; required for --method gae.
    #[arg(long, required_if_eq("method", "gae"))]
    graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    /// Smoothness weight of the ventricular estimate.
    #[arg(long, default_value_t = 0.14)]
    c: f64,
    /// Regularization strength; requires mu * c < 1.
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    /// Ventricular frame flagging threshold over the median zero-mode energy.
    #[arg(long, default_value_t = 4.0)]
    va_factor: f64,
    #[arg(long, default_value_t = 100.0)]
    window_ms: f64,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// Envelope threshold for beat detection (abs method).
    #[arg(long, default_value_t = 0.6)]
    threshold_frac: f64,
    /// Atrial estimate destination.
    #[arg(long)]
    out_aa: PathBuf,
    /// Ventricular estimate destination.
    #[arg(long)]
    out_va: PathBuf,
}

fn cmd_extract(a: ExtractArgs, diag: &Diag) -> Result<()> {
    let (header, panel) = io::load_panel(&a.input)?;
    let sep = match a.method {
        Method::Gae => {
            let params = GAEParams::new(a.c, a.mu, a.va_factor)?;
            let (_, spec) = load_graph_spectrum(a.graph.as_deref())?;
            let cfg = frame_config(&panel, a.window_ms, a.overlap)?;
            let sep = extract_atrial_with_spectrum(&panel, &spec, &cfg, &params)?;
            diag.info(&format!(
                "flagged {} of {} frames as ventricular",
                sep.va_frames.len(),
                cfg.num_frames(panel.len())
            ));
            sep
        }
        Method::Abs => {
            let detect = BeatDetectConfig { threshold_frac: a.threshold_frac, ..Default::default() };
            let ann = detect_beats(&panel, &detect)?;
            diag.info(&format!("detected {} beats", ann.num_beats()));
            let half_width =
                (detect.qrs_half_width_ms * panel.sample_rate_hz() / 1000.0).round() as usize;
            abs_baseline(&panel, ann.r_peaks(), half_width)?
        }
    };
    io::save_panel(&a.out_aa, &header, &sep.atrial)?;
    io::save_panel(&a.out_va, &header, &sep.ventricular)?;
    diag.info(&format!("wrote {} and {}", a.out_aa.display(), a.out_va.display()));
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config file.
    #[arg(long, required_unless_present = "print_config")]
    config: Option<PathBuf>,
    /// Print the default scenario with its full schema and exit.
    #[arg(long)]
    print_config: bool,
    /// Mixed-panel destination.
    #[arg(long, required_unless_present = "print_config")]
    out_mixed: Option<PathBuf>,
    /// Ground-truth atrial panel destination.
    #[arg(long)]
    out_aa: Option<PathBuf>,
    /// Ground-truth ventricular panel destination.
    #[arg(long)]
    out_va: Option<PathBuf>,
    /// Ground-truth R-peak indices as JSON.
    #[arg(long)]
    out_beats: Option<PathBuf>,
}

fn run_episode_with<M: IonicModel>(model: &M, s: &Scenario) -> Result<SignalPanel> {
    let mut proj = ElectrodeProjector::new(&s.array, &s.tissue)?;
    run_af_episode(&s.tissue, model, &s.foci, s.duration_s, s.seed, &mut proj)?;
    proj.into_panel()
}

fn run_episode(s: &Scenario) -> Result<SignalPanel> {
    match s.model {
        ModelChoice::Phenomenological => run_episode_with(&MitchellSchaeffer::default(), s),
        ModelChoice::AtrialRemodeled => run_episode_with(&Courtemanche::remodeled(), s),
        ModelChoice::AtrialBaseline => run_episode_with(&Courtemanche::baseline(), s),
    }
}

fn cmd_simulate(a: SimulateArgs, diag: &Diag) -> Result<()> {
    if a.print_config {
        print!("{}", io::render_scenario(&Scenario::default_af()?));
        return Ok(());
    }
    let config_path = a.config.expect("clap enforces --config");
    let s = io::load_scenario(&config_path)?;
    let fingerprint = config_fingerprint(io::render_scenario(&s).as_bytes());

    diag.info(&format!(
        "simulating {:.1} s on a {}x{} sheet ({}), seed {}",
        s.duration_s,
        s.tissue.ny(),
        s.tissue.nx(),
        s.model.as_str(),
        s.seed
    ));
    let atrial = run_episode(&s)?;
    let aa_max = atrial.max_abs();
    if !(aa_max > 0.0) {
        return Err(Error::InsufficientData("episode produced a silent atrial panel".into()));
    }

    let va_params = VaParams {
        amplitude: s.va_relative_amplitude * aa_max,
        ..s.va
    };
    let va = synthesize_va(
        s.array.rows,
        s.array.cols,
        atrial.len(),
        OUTPUT_RATE_HZ,
        &va_params,
        s.seed ^ 0x5a5a_5a5a_5a5a_5a5a,
    )?;
    let mixed = atrial.mix(&va.panel)?;

    let layout = ArrayLayout::full(s.array.rows, s.array.cols, s.array.pitch_mm);
    let header = RecordingHeader::new(layout, RecordingLabel::Synthetic, &mixed)?
        .with_provenance(s.seed, fingerprint);
    if let Some(path) = &a.out_mixed {
        io::save_panel(path, &header, &mixed)?;
    }
    if let Some(path) = &a.out_aa {
        io::save_panel(path, &header, &atrial)?;
    }
    if let Some(path) = &a.out_va {
        io::save_panel(path, &header, &va.panel)?;
    }
    if let Some(path) = &a.out_beats {
        let doc = serde_json::json!({ "r_peaks": va.r_peaks });
        atomic_write(path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    }
    diag.info(&format!(
        "episode done: {} overlay beats on {} channels",
        va.r_peaks.len(),
        mixed.channels()
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// metrics

#[derive(Args)]
struct MetricsArgs {
    /// Atrial estimate to score.
    #[arg(long)]
    estimate: PathBuf,
    /// Ground-truth atrial panel; enables NMSE and CC.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Mixed panel; beats are detected on it, enabling VDR and VR.
    #[arg(long)]
    mixed: Option<PathBuf>,
    /// Method name recorded in the report.
    #[arg(long, default_value = "gae")]
    method_label: String,
    #[arg(long, default_value_t = 0.6)]
    threshold_frac: f64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_metrics(a: MetricsArgs, diag: &Diag) -> Result<()> {
    let (_, estimate) = io::load_panel(&a.estimate)?;
    let truth = a.truth.as_deref().map(io::load_panel).transpose()?.map(|(_, p)| p);
    let mixed = a.mixed.as_deref().map(io::load_panel).transpose()?.map(|(_, p)| p);
    let ann: Option<BeatAnnotations> = match &mixed {
        Some(m) => {
            let detect = BeatDetectConfig { threshold_frac: a.threshold_frac, ..Default::default() };
            let ann = detect_beats(m, &detect)?;
            diag.info(&format!("detected {} beats on the mixed panel", ann.num_beats()));
            Some(ann)
        }
        None => None,
    };
    let report = io::build_metric_report(
        &a.method_label,
        &estimate,
        truth.as_ref(),
        mixed.as_ref(),
        ann.as_ref(),
    )?;
    for w in &report.warnings {
        diag.warn(w);
    }
    io::save_metric_report(&a.out, &report)?;
    diag.info(&format!("wrote {}", a.out.display()));
    Ok(())
}

// ---------------------------------------------------------------------------
// tune

#[derive(Args)]
struct TuneArgs {
    /// Mixed panel to extract from.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Ground-truth atrial panel scored against.
    #[arg(long)]
    oracle: PathBuf,
    /// Inclusive grid start:stop:count for the smoothness weight.
    #[arg(long, default_value = "0.05:0.35:7")]
    c_range: String,
    /// Inclusive grid start:stop:count for the regularization strength.
    #[arg(long, default_value = "0.5:4:8")]
    mu_range: String,
    #[arg(long, default_value_t = 4.0)]
    va_factor: f64,
    #[arg(long, default_value_t = 100.0)]
    window_ms: f64,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let err = || Error::InvalidParameter(format!("range {spec:?} is not start:stop:count"));
    if parts.len() != 3 {
        return Err(err());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| err())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| err())?;
    let count: usize = parts[2].trim().parse().map_err(|_| err())?;
    if count == 0 || !start.is_finite() || !stop.is_finite() {
        return Err(err());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn cmd_tune(a: TuneArgs, diag: &Diag) -> Result<()> {
    let (_, panel) = io::load_panel(&a.input)?;
    let (_, oracle) = io::load_panel(&a.oracle)?;
    let g = io::load_graph(&a.graph)?;
    let spec = eigendecompose(&g.laplacian())?;
    let cfg = frame_config(&panel, a.window_ms, a.overlap)?;

    let cs = parse_range(&a.c_range)?;
    let mus = parse_range(&a.mu_range)?;
    let mut out = String::from("c,mu,nmse,cc\n");
    let mut best: Option<(f64, f64, f64)> = None;
    let mut skipped = 0usize;
    for &c in &cs {
        for &mu in &mus {
            let params = match GAEParams::new(c, mu, a.va_factor) {
                Ok(p) => p,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            let sep = extract_atrial_with_spectrum(&panel, &spec, &cfg, &params)?;
            let n = egm_core::metrics::nmse(&oracle, &sep.atrial)?.value;
            let r = egm_core::metrics::cc(&oracle, &sep.atrial)?.value;
            out.push_str(&format!("{c},{mu},{n},{r}\n"));
            if best.is_none_or(|(_, _, bn)| n < bn) {
                best = Some((c, mu, n));
            }
        }
    }
    if skipped > 0 {
        diag.warn(&format!("skipped {skipped} infeasible combinations (mu * c >= 1)"));
    }
    let (bc, bmu, bn) =
        best.ok_or_else(|| Error::InvalidParameter("no feasible (c, mu) pair in the grid".into()))?;
    atomic_write(&a.out, out.as_bytes())?;
    diag.info(&format!("best: c = {bc}, mu = {bmu}, nmse = {bn:.4}"));
    println!("{}", serde_json::json!({ "c": bc, "mu": bmu, "nmse": bn }));
    Ok(())
}

// ---------------------------------------------------------------------------
// repro

#[derive(Args)]
struct ReproArgs {
    /// Atrial cycle length in ms; repeat the flag for several.
    #[arg(long = "acl", default_values_t = [160.0, 180.0])]
    acls: Vec<f64>,
    /// Segments per cycle length.
    #[arg(long, default_value_t = 6)]
    segments: usize,
    /// Segment duration in seconds.
    #[arg(long, default_value_t = 10.0)]
    segment_s: f64,
    /// Base seed; defaults to the stock benchmark seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Long-form comparison table destination.
    #[arg(long)]
    out_csv: PathBuf,
    /// Full per-segment results as JSON.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

fn cmd_repro(a: ReproArgs, diag: &Diag) -> Result<()> {
    let mut cfg = PipelineConfig::benchmark()?;
    cfg.segments_per_acl = a.segments;
    cfg.segment_s = a.segment_s;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let mut comparisons: Vec<AclComparison> = Vec::with_capacity(a.acls.len());
    for &acl in &a.acls {
        diag.info(&format!(
            "cycle length {acl} ms: {} segments x {:.1} s",
            cfg.segments_per_acl, cfg.segment_s
        ));
        let cmp = run_acl_comparison(&cfg, acl)?;
        for seg in &cmp.segments {
            for w in &seg.warnings {
                diag.warn(&format!("segment {}: {w}", seg.segment_index));
            }
        }
        let (g, b) = (&cmp.gae_median, &cmp.abs_median);
        println!(
            "acl {acl}: gae nmse {:.4} cc {:.4} vdr {:+.2} dB vr {:.4} | \
             abs nmse {:.4} cc {:.4} vdr {:+.2} dB vr {:.4}",
            g.nmse, g.cc, g.vdr_db, g.vr, b.nmse, b.cc, b.vdr_db, b.vr
        );
        comparisons.push(cmp);
    }
    io::export_comparison_csv(&a.out_csv, &comparisons)?;
    diag.info(&format!("wrote {}", a.out_csv.display()));
    if let Some(path) = &a.out_json {
        atomic_write(path, serde_json::to_string_pretty(&comparisons)?.as_bytes())?;
        diag.info(&format!("wrote {}", path.display()));
    }
    Ok(())
}
