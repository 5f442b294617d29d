//! Whole-system checks, one per headline claim of the toolkit. Each test
//! prints a single pass/fail line (visible with `--nocapture`); budgets are
//! asserted so regressions in runtime fail loudly too.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use egm_core::extraction::{gae_shrink, GAEParams};
use egm_core::graph::{eigendecompose, ElectrodeGraph};
use egm_core::metrics::{cc, nmse, vdr, vr, BeatAnnotations};
use egm_core::panel::SignalPanel;
use egm_core::pipeline::{generate_segment, run_benchmark, PipelineConfig};
use egm_core::sim::{
    calibrate_diffusion, measure_axis_speeds, measure_grid_planar_cv, run_af_episode,
    step_monodomain, ElectrodeArraySpec, ElectrodeProjector, FociSchedule, IonicModel,
    MitchellSchaeffer, TissueConfig, TissueState,
};
use egm_core::spectral::{band_average_variation, gft_energy_linear, quadratic_variation};
use egm_core::transforms::{inverse_joint, joint_transform, stft, FrameConfig, Window};

fn pass(n: usize, what: &str) {
    println!("[{n}/7] {what}: pass");
}

/// The stock benchmark configuration, calibrated once for the whole binary.
fn bench_config() -> &'static PipelineConfig {
    static CFG: OnceLock<PipelineConfig> = OnceLock::new();
    CFG.get_or_init(|| PipelineConfig::benchmark().expect("benchmark config"))
}

#[test]
fn joint_transform_round_trip_is_lossless() {
    let t0 = Instant::now();
    let graph = ElectrodeGraph::build_grid(8, 8, 2.0, &BTreeSet::new()).unwrap();
    let spectrum = eigendecompose(&graph.laplacian()).unwrap();
    let cfg = FrameConfig::new(100, 50, Window::Hann)
        .unwrap()
        .with_fft_bins(128)
        .unwrap();
    let mut rng = StdRng::seed_from_u64(11);

    for _ in 0..50 {
        let data = Array2::from_shape_fn((64, 2000), |_| rng.random_range(-1.0..1.0));
        let panel = SignalPanel::new(data, 1000.0).unwrap();
        let js = joint_transform(&panel, &cfg, &spectrum).unwrap();

        // The graph transform is orthonormal, so per (frame, bin) the energy
        // over graph frequencies must match the energy over channels.
        let st = stft(&panel, &cfg).unwrap();
        for tau in 0..js.num_frames() {
            for f in 0..js.num_bins() {
                let eg: f64 = (0..64).map(|k| js.coeffs()[[k, tau, f]].norm_sqr()).sum();
                let ec: f64 = (0..64).map(|ch| st.coeffs()[[ch, tau, f]].norm_sqr()).sum();
                let rel = (eg - ec).abs() / ec.max(1e-300);
                assert!(rel < 1e-9, "energy mismatch {rel} at frame {tau}, bin {f}");
            }
        }

        let (rec, interior) = inverse_joint(&js, &spectrum, Some(panel.len())).unwrap();
        let scale = panel.max_abs();
        let mut worst = 0.0f64;
        for ch in 0..64 {
            for i in interior.clone() {
                let d = (rec.samples()[[ch, i]] - panel.samples()[[ch, i]]).abs();
                worst = worst.max(d / scale);
            }
        }
        assert!(worst < 1e-8, "interior reconstruction error {worst}");
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "round-trip suite took {dt:?}");
    pass(1, "joint transform round-trip and per-bin energy conservation");
}

#[test]
fn eigenbasis_variation_matches_eigenvalues() {
    let graph = ElectrodeGraph::build_grid(8, 24, 2.0, &BTreeSet::new()).unwrap();
    let l = graph.laplacian();
    let spectrum = eigendecompose(&l).unwrap();
    assert_eq!(spectrum.len(), 192);

    let v: Vec<f64> = (0..spectrum.len())
        .map(|k| quadratic_variation(&l, spectrum.eigenvector(k)).unwrap())
        .collect();
    assert!(v[0].abs() < 1e-9, "constant mode has variation {}", v[0]);
    for (k, (&measured, &lambda)) in v.iter().zip(spectrum.lambdas()).enumerate() {
        assert!(
            (measured - lambda).abs() < 1e-9,
            "mode {k}: variation {measured} vs eigenvalue {lambda}"
        );
    }
    assert!(v[1] < v[9], "ordering broken: {} vs {}", v[1], v[9]);
    pass(2, "eigenvector variation equals its eigenvalue, ordered in k");
}

#[test]
fn spectral_shrinkage_matches_direct_solver() {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(23);
    let dims = [(2usize, 2usize), (2, 3), (2, 4), (2, 5), (2, 6), (3, 3), (3, 4), (4, 3)];

    for trial in 0..200 {
        let (rows, cols) = dims[rng.random_range(0..dims.len())];
        let k = rows * cols;
        let graph = ElectrodeGraph::build_grid(rows, cols, 2.0, &BTreeSet::new()).unwrap();
        let l = graph.laplacian();
        let spectrum = eigendecompose(&l).unwrap();

        let c = rng.random_range(0.02..0.4);
        let mu = rng.random_range(0.2..2.0);
        let params = GAEParams::new(c, mu, 4.0).unwrap();
        let y_tilde =
            Array1::from_shape_fn(k, |_| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });

        let closed = gae_shrink(y_tilde.view(), spectrum.lambdas(), &params).unwrap();

        // Independent route: solve (I + mu (L - c I)) v = y in the vertex
        // domain with a dense LU, then project back onto the eigenbasis.
        let a = nalgebra::DMatrix::from_fn(k, k, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id + mu * (l[[i, j]] - c * id)
        });
        let lu = a.lu();
        let synth = |part: fn(&Complex64) -> f64| -> nalgebra::DVector<f64> {
            let y_vertex: Vec<f64> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|m| spectrum.basis()[[i, m]] * part(&y_tilde[m]))
                        .sum()
                })
                .collect();
            lu.solve(&nalgebra::DVector::from_vec(y_vertex)).expect("positive definite")
        };
        let v_re = synth(|z| z.re);
        let v_im = synth(|z| z.im);

        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for m in 0..k {
            let mut o = Complex64::new(0.0, 0.0);
            for i in 0..k {
                o += spectrum.basis()[[i, m]] * Complex64::new(v_re[i], v_im[i]);
            }
            num += (closed[m] - o).norm_sqr();
            den += o.norm_sqr();
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-8, "trial {trial}: closed form vs solver differ by {rel}");
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "solver comparison took {dt:?}");
    pass(3, "closed-form shrinkage agrees with a dense constrained solver");
}

#[test]
fn simulator_conduction_and_determinism() {
    let t0 = Instant::now();
    let model = MitchellSchaeffer::default();
    let d = calibrate_diffusion(&model, 100.0, 0.025, 0.04).unwrap();

    let big = TissueConfig::new(100, 100, 0.025, 0.04)
        .unwrap()
        .with_diffusion(d)
        .unwrap();
    let cv = measure_grid_planar_cv(&big, &model).unwrap();
    assert!(
        (cv - 100.0).abs() / 100.0 < 0.02,
        "planar conduction velocity {cv} cm/s is off target"
    );

    let (along, across) = measure_axis_speeds(&big, &model).unwrap();
    let ratio = along.min(across) / along.max(across);
    assert!(
        (ratio - 0.5).abs() / 0.5 < 0.15,
        "axis speed ratio {ratio} (speeds {along} / {across})"
    );

    // Unstimulated tissue must not creep away from rest.
    let rest_cfg = TissueConfig::new(40, 40, 0.025, 0.04)
        .unwrap()
        .with_diffusion(d)
        .unwrap();
    let mut state = TissueState::resting(&rest_cfg, &model);
    let seconds = 2.0;
    let steps = (seconds * 1000.0 / rest_cfg.dt_ms()) as usize;
    for _ in 0..steps {
        step_monodomain(&mut state, &model, &rest_cfg, None).unwrap();
    }
    let worst = state
        .v_view()
        .iter()
        .map(|v| (v - model.resting_v_mv()).abs())
        .fold(0.0f64, f64::max);
    assert!(worst / seconds < 0.01, "resting drift {} mV/s", worst / seconds);

    // Re-running an episode reproduces every output bit.
    let episode = || {
        let cfg = rest_cfg.clone();
        let foci = FociSchedule::single_source(&cfg, 160.0);
        let array = ElectrodeArraySpec { rows: 4, cols: 4, pitch_mm: 2.0, height_mm: 0.5 };
        let mut proj = ElectrodeProjector::new(&array, &cfg).unwrap();
        run_af_episode(&cfg, &model, &foci, 1.0, 77, &mut proj).unwrap();
        proj.into_panel().unwrap()
    };
    let (a, b) = (episode(), episode());
    for (x, y) in a.samples().iter().zip(b.samples().iter()) {
        assert_eq!(x.to_bits(), y.to_bits(), "rerun diverged");
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 300.0, "simulator suite took {dt:?}");
    pass(4, "conduction speed, anisotropy, resting stability, determinism");
}

#[test]
fn benchmark_orders_methods_consistently() {
    let t0 = Instant::now();
    let results = run_benchmark(bench_config()).unwrap();
    assert_eq!(results.len(), 2);

    for cmp in &results {
        assert_eq!(cmp.segments.len(), 6, "cycle length {} segment count", cmp.acl_ms);
        let (g, b) = (&cmp.gae_median, &cmp.abs_median);
        assert!(
            g.nmse < b.nmse,
            "cycle length {}: median error {} vs {}",
            cmp.acl_ms,
            g.nmse,
            b.nmse
        );
        assert!(
            g.cc > b.cc,
            "cycle length {}: median correlation {} vs {}",
            cmp.acl_ms,
            g.cc,
            b.cc
        );
        assert!(
            g.vdr_db > b.vdr_db,
            "cycle length {}: median desynchronization {} vs {}",
            cmp.acl_ms,
            g.vdr_db,
            b.vdr_db
        );
        assert!(
            g.vr < b.vr,
            "cycle length {}: median ventricular residue {} vs {}",
            cmp.acl_ms,
            g.vr,
            b.vr
        );
        // The graph method also wins error and correlation on every single
        // segment, not just on the medians.
        for s in &cmp.segments {
            assert!(
                s.gae.nmse < s.abs.nmse && s.gae.cc > s.abs.cc,
                "cycle length {} segment {}: gae ({}, {}) vs abs ({}, {})",
                cmp.acl_ms,
                s.segment_index,
                s.gae.nmse,
                s.gae.cc,
                s.abs.nmse,
                s.abs.cc
            );
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1800.0, "benchmark took {dt:?}");
    pass(5, "extraction beats template subtraction on all four medians");
}

#[test]
fn af_graph_variation_and_overlay_smoothness() {
    let mut cfg = bench_config().clone();
    cfg.segment_s = 4.0;
    // A recorded electrogram carries a sensor noise floor; 1% of the atrial
    // peak is a conservative one.
    cfg.noise_relative = 0.01;
    let graph = ElectrodeGraph::build_grid(8, 8, 2.0, &BTreeSet::new()).unwrap();
    let spectrum = eigendecompose(&graph.laplacian()).unwrap();
    let fc = FrameConfig::new(100, 50, Window::Hann)
        .unwrap()
        .with_fft_bins(128)
        .unwrap();

    for acl in [160.0, 180.0] {
        let seg = generate_segment(&cfg, acl, 0).unwrap();

        let js = joint_transform(&seg.mixed, &fc, &spectrum).unwrap();
        let (low, high) = band_average_variation(&js, &spectrum, 100.0).unwrap();
        let frames = low.values().len();
        let wins = low
            .values()
            .iter()
            .zip(high.values())
            .filter(|(l, h)| h > l)
            .count();
        assert!(
            wins * 10 >= frames * 9,
            "cycle length {acl}: high band rougher on only {wins}/{frames} frames"
        );

        let e = gft_energy_linear(&seg.ventricular, &spectrum).unwrap();
        let total = e.sum();
        let smooth = e.row(0).sum();
        assert!(
            smooth > 0.8 * total,
            "cycle length {acl}: constant-mode share {}",
            smooth / total
        );
    }
    pass(6, "fibrillatory content is rough, the overlay smooth, over the graph");
}

#[test]
fn metric_identities_are_exact() {
    let mut rng = StdRng::seed_from_u64(31);
    let data = Array2::from_shape_fn((16, 1500), |_| rng.random_range(-1.0..1.0));
    let panel = SignalPanel::new(data, 1000.0).unwrap();

    let peaks = vec![300usize, 700, 1100];
    let intervals: Vec<(usize, usize)> = peaks.iter().map(|&p| (p - 50, p + 50)).collect();
    let ann = BeatAnnotations::new(
        vec![peaks.clone(); 16],
        vec![intervals.clone(); 16],
    )
    .unwrap();

    assert_eq!(nmse(&panel, &panel).unwrap().value, 0.0);
    assert_eq!(cc(&panel, &panel).unwrap().value, 1.0);
    assert_eq!(vdr(&panel, &panel, &ann).unwrap().value, 0.0);

    let mut silenced = panel.clone();
    for ch in 0..16 {
        for &(s, e) in &intervals {
            for i in s..=e {
                silenced.samples_mut()[[ch, i]] = 0.0;
            }
        }
    }
    assert_eq!(vr(&silenced, &ann).unwrap().value, 0.0);
    pass(7, "metric identities hold exactly");
}
