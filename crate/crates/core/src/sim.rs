//! Monodomain reaction-diffusion tissue simulator with ectopic foci, an
//! electrode forward model, and synthetic ventricular-activity generation.
//!
//! The simulator produces ground-truth atrial panels: a 2-D sheet of excitable
//! cells is driven by cyclically firing foci, the diffusive transmembrane
//! current is projected onto an electrode array through a volume-conductor
//! kernel, and a jittered QRS-like train is mixed on top.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SignalPanel;

/// Output sampling rate of episode recordings, in Hz.
pub const OUTPUT_RATE_HZ: f64 = 1000.0;

const BLOWUP_LIMIT_MV: f64 = 300.0;
const ACTIVATION_THRESHOLD_MV: f64 = -30.0;

/// Geometry, timing, membrane constants, and the voltage diffusion
/// coefficient of a rectangular tissue sheet. The x axis (columns) is the
/// fibre (longitudinal) direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TissueConfig {
    nx: usize,
    ny: usize,
    dx_cm: f64,
    dt_ms: f64,
    cv_longitudinal_cm_s: f64,
    anisotropy_ratio: f64,
    c_m_pf: f64,
    s_v_per_cm: f64,
    sigma_e_ms_per_cm: f64,
    d_long_cm2_ms: f64,
}

impl Default for TissueConfig {
    fn default() -> Self {
        Self {
            nx: 200,
            ny: 200,
            dx_cm: 0.01,
            dt_ms: 0.05,
            cv_longitudinal_cm_s: 100.0,
            anisotropy_ratio: 0.5,
            c_m_pf: 100.0,
            // 2/r for a 5 um cylindrical cell radius.
            s_v_per_cm: 4000.0,
            sigma_e_ms_per_cm: 20.0,
            d_long_cm2_ms: 4.5e-4,
        }
    }
}

impl TissueConfig {
    pub fn new(nx: usize, ny: usize, dx_cm: f64, dt_ms: f64) -> Result<Self> {
        let cfg = Self { nx, ny, dx_cm, dt_ms, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Largest diffusion coefficient along either axis; governs stability.
    pub fn d_max_cm2_ms(&self) -> f64 {
        self.d_long_cm2_ms * self.anisotropy_ratio.powi(2).max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidParameter("tissue grid must be nonempty".into()));
        }
        for (name, v) in [
            ("dx", self.dx_cm),
            ("dt", self.dt_ms),
            ("cv_longitudinal", self.cv_longitudinal_cm_s),
            ("C_m", self.c_m_pf),
            ("S_v", self.s_v_per_cm),
            ("sigma_e", self.sigma_e_ms_per_cm),
            ("diffusion coefficient", self.d_long_cm2_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.anisotropy_ratio > 0.0 && self.anisotropy_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "anisotropy ratio must be positive, got {}",
                self.anisotropy_ratio
            )));
        }
        // Explicit Euler stability for the 5-point stencil.
        let bound = self.dx_cm * self.dx_cm / (4.0 * self.d_max_cm2_ms());
        if self.dt_ms > bound {
            return Err(Error::InvalidParameter(format!(
                "dt = {} ms violates the stability bound {:.6} ms for diffusion {:.3e} cm^2/ms at dx = {} cm",
                self.dt_ms, bound, self.d_max_cm2_ms(), self.dx_cm
            )));
        }
        Ok(())
    }

    pub fn with_grid(mut self, nx: usize, ny: usize) -> Result<Self> {
        self.nx = nx;
        self.ny = ny;
        self.validate()?;
        Ok(self)
    }

    pub fn with_resolution(mut self, dx_cm: f64, dt_ms: f64) -> Result<Self> {
        self.dx_cm = dx_cm;
        self.dt_ms = dt_ms;
        self.validate()?;
        Ok(self)
    }

    pub fn with_diffusion(mut self, d_long_cm2_ms: f64) -> Result<Self> {
        self.d_long_cm2_ms = d_long_cm2_ms;
        self.validate()?;
        Ok(self)
    }

    pub fn with_anisotropy_ratio(mut self, ratio: f64) -> Result<Self> {
        self.anisotropy_ratio = ratio;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cv_target(mut self, cv_cm_s: f64) -> Result<Self> {
        self.cv_longitudinal_cm_s = cv_cm_s;
        self.validate()?;
        Ok(self)
    }

    pub fn with_conductivity(mut self, sigma_e_ms_per_cm: f64) -> Result<Self> {
        self.sigma_e_ms_per_cm = sigma_e_ms_per_cm;
        self.validate()?;
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dx_cm(&self) -> f64 {
        self.dx_cm
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn cv_longitudinal_cm_s(&self) -> f64 {
        self.cv_longitudinal_cm_s
    }

    /// Transversal-to-longitudinal conduction-velocity ratio (0.5 = "1:2").
    pub fn anisotropy_ratio(&self) -> f64 {
        self.anisotropy_ratio
    }

    pub fn c_m_pf(&self) -> f64 {
        self.c_m_pf
    }

    pub fn s_v_per_cm(&self) -> f64 {
        self.s_v_per_cm
    }

    pub fn sigma_e_ms_per_cm(&self) -> f64 {
        self.sigma_e_ms_per_cm
    }

    pub fn d_long_cm2_ms(&self) -> f64 {
        self.d_long_cm2_ms
    }

    /// Velocity scales with the square root of diffusion, so a velocity ratio
    /// r maps to a diffusion ratio r^2.
    pub fn d_trans_cm2_ms(&self) -> f64 {
        self.d_long_cm2_ms * self.anisotropy_ratio * self.anisotropy_ratio
    }
}

/// Pluggable membrane kinetics. `reaction` evaluates the ionic contribution
/// to dV/dt (mV/ms) at the current state and then advances the gate vector by
/// one step.
pub trait IonicModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn resting_v_mv(&self) -> f64;
    fn resting_gates(&self, gates: &mut [f64]);
    fn reaction(&self, v_mv: f64, gates: &mut [f64], dt_ms: f64) -> f64;
}

/// Two-variable phenomenological excitable-membrane model (Mitchell &
/// Schaeffer). The resting point (V_rest, h = 1) is an exact fixed point, and
/// action-potential duration is set directly by the closing time constant.
#[derive(Debug, Clone)]
pub struct MitchellSchaeffer {
    pub tau_in_ms: f64,
    pub tau_out_ms: f64,
    pub tau_open_ms: f64,
    pub tau_close_ms: f64,
    pub v_gate: f64,
    pub v_rest_mv: f64,
    pub v_amp_mv: f64,
}

impl Default for MitchellSchaeffer {
    fn default() -> Self {
        // Short-APD settings: full 1:1 capture down to ~140 ms cycle lengths.
        Self {
            tau_in_ms: 0.1,
            tau_out_ms: 2.4,
            tau_open_ms: 80.0,
            tau_close_ms: 45.0,
            v_gate: 0.13,
            v_rest_mv: -80.0,
            v_amp_mv: 100.0,
        }
    }
}

impl IonicModel for MitchellSchaeffer {
    fn name(&self) -> &'static str {
        "mitchell-schaeffer"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn resting_v_mv(&self) -> f64 {
        self.v_rest_mv
    }

    fn resting_gates(&self, gates: &mut [f64]) {
        gates[0] = 1.0;
    }

    #[inline]
    fn reaction(&self, v_mv: f64, gates: &mut [f64], dt_ms: f64) -> f64 {
        let u = (v_mv - self.v_rest_mv) / self.v_amp_mv;
        let h = gates[0];
        let dudt = h * u * u * (1.0 - u) / self.tau_in_ms - u / self.tau_out_ms;
        if u < self.v_gate {
            gates[0] = h + (1.0 - h) * (1.0 - (-dt_ms / self.tau_open_ms).exp());
        } else {
            gates[0] = h * (-dt_ms / self.tau_close_ms).exp();
        }
        dudt * self.v_amp_mv
    }
}

/// Conductance scalings applied to the human atrial model to emulate
/// fibrillation-induced electrical remodeling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RemodelingScalars {
    pub g_to: f64,
    pub g_kur: f64,
    pub g_cal: f64,
}

impl Default for RemodelingScalars {
    fn default() -> Self {
        Self { g_to: 0.5, g_kur: 0.5, g_cal: 0.3 }
    }
}

impl RemodelingScalars {
    pub fn none() -> Self {
        Self { g_to: 1.0, g_kur: 1.0, g_cal: 1.0 }
    }
}

/// Human atrial membrane kinetics (Courtemanche-style formulation) with
/// Rush-Larsen gate integration. Intracellular ion concentrations are held
/// fixed, so the model reduces to voltage plus twelve gates; the resting
/// potential is located at construction so that the rest state is stationary
/// to solver precision.
#[derive(Debug, Clone)]
pub struct Courtemanche {
    scal: RemodelingScalars,
    remodeled: bool,
    v_rest: f64,
    rest_gates: [f64; 12],
}

// Fixed concentrations (mM) and physical constants.
const CRN_NAI: f64 = 11.2;
const CRN_NAO: f64 = 140.0;
const CRN_KI: f64 = 139.0;
const CRN_KO: f64 = 5.4;
const CRN_CAI: f64 = 1.02e-4;
const CRN_CAO: f64 = 1.8;
const CRN_RT_F: f64 = 8.3143 * 310.0 / 96.4867;
const CRN_KQ10: f64 = 3.0;

impl Courtemanche {
    pub fn remodeled() -> Self {
        Self::with_scalars(RemodelingScalars::default(), true)
    }

    pub fn baseline() -> Self {
        Self::with_scalars(RemodelingScalars::none(), false)
    }

    pub fn with_scalars(scal: RemodelingScalars, remodeled: bool) -> Self {
        let mut model = Self { scal, remodeled, v_rest: -81.0, rest_gates: [0.0; 12] };
        // The total ionic current with gates at steady state is monotone
        // through zero in this bracket (inward-rectifier dominated).
        let (mut lo, mut hi) = (-95.0, -55.0);
        let mut gates = [0.0; 12];
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            Self::steady_gates(mid, &mut gates);
            if model.total_current(mid, &gates) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        model.v_rest = 0.5 * (lo + hi);
        Self::steady_gates(model.v_rest, &mut model.rest_gates);
        model
    }

    pub fn scalars(&self) -> RemodelingScalars {
        self.scal
    }

    fn steady_gates(v: f64, g: &mut [f64]) {
        for (k, gate) in GATE_TABLE.iter().enumerate() {
            g[k] = (gate.rates)(v).0;
        }
    }

    /// Sum of all membrane currents in pA/pF (= mV/ms given C_m scaling).
    fn total_current(&self, v: f64, g: &[f64]) -> f64 {
        let e_na = CRN_RT_F * (CRN_NAO / CRN_NAI).ln();
        let e_k = CRN_RT_F * (CRN_KO / CRN_KI).ln();
        let e_ca = 0.5 * CRN_RT_F * (CRN_CAO / CRN_CAI).ln();
        let (m, h, j, oa, oi, ua, ui, xr, xs, d, f, fca) =
            (g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8], g[9], g[10], g[11]);

        let i_na = 7.8 * m * m * m * h * j * (v - e_na);
        let i_k1 = 0.09 * (v - e_k) / (1.0 + (0.07 * (v + 80.0)).exp());
        let i_to = 0.1652 * self.scal.g_to * oa * oa * oa * oi * (v - e_k);
        let g_kur = 0.005 + 0.05 / (1.0 + (-(v - 15.0) / 13.0).exp());
        let i_kur = g_kur * self.scal.g_kur * ua * ua * ua * ui * (v - e_k);
        let i_kr = 0.029_411_765 * xr * (v - e_k) / (1.0 + ((v + 15.0) / 22.4).exp());
        let i_ks = 0.129_411_76 * xs * xs * (v - e_k);
        let i_cal = 0.123_75 * self.scal.g_cal * d * f * fca * (v - 65.0);

        let vf = v / CRN_RT_F;
        let sigma = ((CRN_NAO / 67.3).exp() - 1.0) / 7.0;
        let f_nak = 1.0 / (1.0 + 0.1245 * (-0.1 * vf).exp() + 0.0365 * sigma * (-vf).exp());
        let i_nak = 0.599_338_74 * f_nak * (CRN_KO / (CRN_KO + 1.5))
            / (1.0 + (10.0 / CRN_NAI).powf(1.5));

        let gamma = 0.35;
        let exp_g = (gamma * vf).exp();
        let exp_g1 = ((gamma - 1.0) * vf).exp();
        let i_naca = 1600.0
            * (exp_g * CRN_NAI.powi(3) * CRN_CAO - exp_g1 * CRN_NAO.powi(3) * CRN_CAI)
            / ((87.5f64.powi(3) + CRN_NAO.powi(3))
                * (1.38 + CRN_CAO)
                * (1.0 + 0.1 * exp_g1));

        let i_b_na = 0.000_674_437_5 * (v - e_na);
        let i_b_ca = 0.001_131 * (v - e_ca);
        let i_p_ca = 0.275 * CRN_CAI / (0.0005 + CRN_CAI);

        i_na + i_k1 + i_to + i_kur + i_kr + i_ks + i_cal + i_nak + i_naca + i_b_na + i_b_ca
            + i_p_ca
    }
}

struct GateSpec {
    /// Returns (steady-state value, time constant in ms) at a given voltage.
    rates: fn(f64) -> (f64, f64),
}

#[inline]
fn expm1_guard(num: f64, den: f64) -> f64 {
    // num/(1 - exp(-num/den)) style terms hit 0/0 at num = 0.
    if num.abs() < 1e-10 {
        den
    } else {
        num / (1.0 - (-num / den).exp())
    }
}

static GATE_TABLE: [GateSpec; 12] = [
    // m
    GateSpec {
        rates: |v| {
            let a = 0.32 * expm1_guard(v + 47.13, 10.0);
            let b = 0.08 * (-v / 11.0).exp();
            (a / (a + b), 1.0 / (a + b))
        },
    },
    // h
    GateSpec {
        rates: |v| {
            let (a, b) = if v >= -40.0 {
                (0.0, 1.0 / (0.13 * (1.0 + (-(v + 10.66) / 11.1).exp())))
            } else {
                (
                    0.135 * (-(v + 80.0) / 6.8).exp(),
                    3.56 * (0.079 * v).exp() + 3.1e5 * (0.35 * v).exp(),
                )
            };
            (a / (a + b), 1.0 / (a + b))
        },
    },
    // j
    GateSpec {
        rates: |v| {
            let (a, b) = if v >= -40.0 {
                (
                    0.0,
                    0.3 * (-2.535e-7 * v).exp() / (1.0 + (-0.1 * (v + 32.0)).exp()),
                )
            } else {
                (
                    (-1.2714e5 * (0.2444 * v).exp() - 3.474e-5 * (-0.04391 * v).exp())
                        * (v + 37.78)
                        / (1.0 + (0.311 * (v + 79.23)).exp()),
                    0.1212 * (-0.01052 * v).exp() / (1.0 + (-0.1378 * (v + 40.14)).exp()),
                )
            };
            (a / (a + b), 1.0 / (a + b))
        },
    },
    // oa
    GateSpec {
        rates: |v| {
            let a = 0.65 / ((-(v + 10.0) / 8.5).exp() + (-(v - 30.0) / 59.0).exp());
            let b = 0.65 / (2.5 + ((v + 82.0) / 17.0).exp());
            let inf = 1.0 / (1.0 + (-(v + 20.47) / 17.54).exp());
            (inf, 1.0 / ((a + b) * CRN_KQ10))
        },
    },
    // oi
    GateSpec {
        rates: |v| {
            let a = 1.0 / (18.53 + ((v + 113.7) / 10.95).exp());
            let b = 1.0 / (35.56 + (-(v + 1.26) / 7.44).exp());
            let inf = 1.0 / (1.0 + ((v + 43.1) / 5.3).exp());
            (inf, 1.0 / ((a + b) * CRN_KQ10))
        },
    },
    // ua
    GateSpec {
        rates: |v| {
            let a = 0.65 / ((-(v + 10.0) / 8.5).exp() + (-(v - 30.0) / 59.0).exp());
            let b = 0.65 / (2.5 + ((v + 82.0) / 17.0).exp());
            let inf = 1.0 / (1.0 + (-(v + 30.3) / 9.6).exp());
            (inf, 1.0 / ((a + b) * CRN_KQ10))
        },
    },
    // ui
    GateSpec {
        rates: |v| {
            let a = 1.0 / (21.0 + (-(v - 185.0) / 28.0).exp());
            let b = ((v - 158.0) / 16.0).exp();
            let inf = 1.0 / (1.0 + ((v - 99.45) / 27.48).exp());
            (inf, 1.0 / ((a + b) * CRN_KQ10))
        },
    },
    // xr
    GateSpec {
        rates: |v| {
            let a = 0.0003 * expm1_guard(v + 14.1, 5.0);
            let num = v - 3.3328;
            let b = if num.abs() < 1e-10 {
                7.3898e-5 * 5.1237
            } else {
                7.3898e-5 * num / ((num / 5.1237).exp() - 1.0)
            };
            let inf = 1.0 / (1.0 + (-(v + 14.1) / 6.5).exp());
            (inf, 1.0 / (a + b))
        },
    },
    // xs
    GateSpec {
        rates: |v| {
            let num = v - 19.9;
            let a = if num.abs() < 1e-10 {
                4e-5 * 17.0
            } else {
                4e-5 * num / (1.0 - (-num / 17.0).exp())
            };
            let b = if num.abs() < 1e-10 {
                3.5e-5 * 9.0
            } else {
                3.5e-5 * num / ((num / 9.0).exp() - 1.0)
            };
            let inf = 1.0 / (1.0 + (-num / 12.7).exp()).sqrt();
            (inf, 0.5 / (a + b))
        },
    },
    // d
    GateSpec {
        rates: |v| {
            let s = v + 10.0;
            let tau = if s.abs() < 1e-10 {
                1.0 / (0.035 * 6.24 * 2.0)
            } else {
                (1.0 - (-s / 6.24).exp()) / (0.035 * s * (1.0 + (-s / 6.24).exp()))
            };
            let inf = 1.0 / (1.0 + (-s / 8.0).exp());
            (inf, tau)
        },
    },
    // f
    GateSpec {
        rates: |v| {
            let inf = 1.0 / (1.0 + ((v + 28.0) / 6.9).exp());
            let tau = 9.0 / (0.0197 * (-(0.0337 * (v + 10.0)).powi(2)).exp() + 0.02);
            (inf, tau)
        },
    },
    // fca (constant steady state under fixed intracellular calcium)
    GateSpec {
        rates: |_| (1.0 / (1.0 + CRN_CAI / 0.00035), 2.0),
    },
];

impl IonicModel for Courtemanche {
    fn name(&self) -> &'static str {
        if self.remodeled {
            "courtemanche-remodeled"
        } else {
            "courtemanche"
        }
    }

    fn state_dim(&self) -> usize {
        12
    }

    fn resting_v_mv(&self) -> f64 {
        self.v_rest
    }

    fn resting_gates(&self, gates: &mut [f64]) {
        gates.copy_from_slice(&self.rest_gates);
    }

    fn reaction(&self, v_mv: f64, gates: &mut [f64], dt_ms: f64) -> f64 {
        let dvdt = -self.total_current(v_mv, gates);
        for (k, gate) in GATE_TABLE.iter().enumerate() {
            let (inf, tau) = (gate.rates)(v_mv);
            gates[k] = inf + (gates[k] - inf) * (-dt_ms / tau).exp();
        }
        dvdt
    }
}

/// Per-cell membrane voltage plus the ionic gate vectors, advanced in place.
#[derive(Debug, Clone)]
pub struct TissueState {
    ny: usize,
    nx: usize,
    dim: usize,
    v: Vec<f64>,
    scratch: Vec<f64>,
    gates: Vec<f64>,
    step: usize,
}

impl TissueState {
    pub fn resting<M: IonicModel>(cfg: &TissueConfig, model: &M) -> Self {
        let cells = cfg.cells();
        let dim = model.state_dim();
        let mut gates = vec![0.0; cells * dim];
        for g in gates.chunks_mut(dim) {
            model.resting_gates(g);
        }
        Self {
            ny: cfg.ny,
            nx: cfg.nx,
            dim,
            v: vec![model.resting_v_mv(); cells],
            scratch: vec![0.0; cells],
            gates,
            step: 0,
        }
    }

    pub fn v_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.ny, self.nx), &self.v).expect("state shape")
    }

    pub fn v_at(&self, row: usize, col: usize) -> f64 {
        self.v[row * self.nx + col]
    }

    pub fn set_v(&mut self, row: usize, col: usize, v_mv: f64) {
        self.v[row * self.nx + col] = v_mv;
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    fn check_compatible(&self, cfg: &TissueConfig, dim: usize) -> Result<()> {
        if (self.ny, self.nx) != (cfg.ny, cfg.nx) || self.dim != dim {
            return Err(Error::DimensionMismatch(format!(
                "state is {}x{} with {} gates, config wants {}x{} with {}",
                self.ny, self.nx, self.dim, cfg.ny, cfg.nx, dim
            )));
        }
        Ok(())
    }

    fn check_blowup(&self) -> Result<()> {
        for &v in &self.v {
            if !v.is_finite() || v.abs() > BLOWUP_LIMIT_MV {
                return Err(Error::SimulationBlowUp { step: self.step });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct StencilCoef {
    /// Longitudinal (x / column) diffusion divided by dx^2, in 1/ms.
    cl: f64,
    ct: f64,
}

impl StencilCoef {
    fn of(cfg: &TissueConfig) -> Self {
        let inv = 1.0 / (cfg.dx_cm * cfg.dx_cm);
        Self { cl: cfg.d_long_cm2_ms * inv, ct: cfg.d_trans_cm2_ms() * inv }
    }
}

/// Anisotropic 5-point Laplacian term D*lap(v) at (i, j) with mirrored
/// (zero-flux) boundaries.
#[inline(always)]
fn diffusion_at(v: &[f64], ny: usize, nx: usize, i: usize, j: usize, c: StencilCoef) -> f64 {
    let up = if i == 0 { 1.min(ny - 1) } else { i - 1 };
    let dn = if i + 1 == ny { ny.saturating_sub(2) } else { i + 1 };
    let l = if j == 0 { 1.min(nx - 1) } else { j - 1 };
    let r = if j + 1 == nx { nx.saturating_sub(2) } else { j + 1 };
    let vc = v[i * nx + j];
    c.cl * (v[i * nx + l] - 2.0 * vc + v[i * nx + r])
        + c.ct * (v[up * nx + j] - 2.0 * vc + v[dn * nx + j])
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn update_row<M: IonicModel>(
    model: &M,
    i: usize,
    out_row: &mut [f64],
    gate_row: &mut [f64],
    v: &[f64],
    stim: Option<&[f64]>,
    c: StencilCoef,
    dims: (usize, usize, usize),
    dt: f64,
) {
    let (ny, nx, dim) = dims;
    let base = i * nx;
    for j in 0..nx {
        let vc = v[base + j];
        let lap = diffusion_at(v, ny, nx, i, j, c);
        let s = stim.map_or(0.0, |s| s[base + j]);
        let react = model.reaction(vc, &mut gate_row[j * dim..(j + 1) * dim], dt);
        out_row[j] = vc + dt * (lap + s + react);
    }
}

const PAR_THRESHOLD_CELLS: usize = 4096;

fn advance<M: IonicModel>(state: &mut TissueState, model: &M, cfg: &TissueConfig, stim: Option<&[f64]>) {
    let (ny, nx, dim) = (state.ny, state.nx, state.dim);
    let c = StencilCoef::of(cfg);
    let dt = cfg.dt_ms;
    let v = &state.v;
    if ny * nx >= PAR_THRESHOLD_CELLS {
        state
            .scratch
            .par_chunks_mut(nx)
            .zip(state.gates.par_chunks_mut(nx * dim))
            .enumerate()
            .for_each(|(i, (out_row, gate_row))| {
                update_row(model, i, out_row, gate_row, v, stim, c, (ny, nx, dim), dt);
            });
    } else {
        for (i, (out_row, gate_row)) in state
            .scratch
            .chunks_mut(nx)
            .zip(state.gates.chunks_mut(nx * dim))
            .enumerate()
        {
            update_row(model, i, out_row, gate_row, v, stim, c, (ny, nx, dim), dt);
        }
    }
    std::mem::swap(&mut state.v, &mut state.scratch);
    state.step += 1;
}

/// Advance the sheet one explicit-Euler step:
/// dV/dt = D*lap(V) + stim + ionic, with zero-flux boundaries.
pub fn step_monodomain<M: IonicModel>(
    state: &mut TissueState,
    model: &M,
    cfg: &TissueConfig,
    stim: Option<&Array2<f64>>,
) -> Result<()> {
    cfg.validate()?;
    state.check_compatible(cfg, model.state_dim())?;
    let stim_slice = match stim {
        Some(s) => {
            if s.dim() != (cfg.ny, cfg.nx) {
                return Err(Error::DimensionMismatch(format!(
                    "stimulus field is {:?}, tissue is {}x{}",
                    s.dim(),
                    cfg.ny,
                    cfg.nx
                )));
            }
            Some(s.as_slice().ok_or_else(|| {
                Error::InvalidParameter("stimulus field must be contiguous".into())
            })?)
        }
        None => None,
    };
    advance(state, model, cfg, stim_slice);
    state.check_blowup()
}

/// Recorded transmembrane current per cell: (C_m / S_v) * D * lap(V).
/// The scale is consistent across cells; the forward model only relies on
/// linearity and relative amplitudes.
pub fn compute_itm(state: &TissueState, cfg: &TissueConfig, out: &mut Array2<f64>) -> Result<()> {
    if out.dim() != (state.ny, state.nx) {
        return Err(Error::DimensionMismatch(format!(
            "output is {:?}, tissue is {}x{}",
            out.dim(),
            state.ny,
            state.nx
        )));
    }
    let c = StencilCoef::of(cfg);
    let scale = cfg.c_m_pf / cfg.s_v_per_cm;
    let (ny, nx) = (state.ny, state.nx);
    let v = &state.v;
    let out_slice = out.as_slice_mut().expect("owned array");
    for i in 0..ny {
        for j in 0..nx {
            out_slice[i * nx + j] = scale * diffusion_at(v, ny, nx, i, j, c);
        }
    }
    Ok(())
}

/// Cyclically firing stimulus sources ("ectopic foci").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FociSchedule {
    /// (row, col) cell positions.
    pub sources: Vec<(usize, usize)>,
    pub radius_cells: f64,
    pub cycle_length_ms: f64,
    pub stimulus_duration_ms: f64,
    /// Added directly to dV/dt while a source fires, in mV/ms.
    pub stimulus_amplitude: f64,
    /// One offset per source; first firing times.
    pub phase_offsets_ms: Vec<f64>,
    /// Per-beat uniform jitter applied to the cycle length.
    pub timing_jitter_frac: f64,
}

impl FociSchedule {
    /// Five sources: four inset corners plus the centre, fired with staggered
    /// phases over one cycle.
    pub fn five_sources(cfg: &TissueConfig, cycle_length_ms: f64) -> Self {
        let pos = |fr: f64, fc: f64| {
            (
                (fr * (cfg.ny - 1) as f64).round() as usize,
                (fc * (cfg.nx - 1) as f64).round() as usize,
            )
        };
        let sources = vec![
            pos(0.2, 0.2),
            pos(0.2, 0.8),
            pos(0.8, 0.2),
            pos(0.8, 0.8),
            pos(0.5, 0.5),
        ];
        let n = sources.len();
        Self {
            sources,
            radius_cells: 2.0,
            cycle_length_ms,
            stimulus_duration_ms: 50.0,
            stimulus_amplitude: 8.0,
            phase_offsets_ms: (0..n).map(|i| i as f64 * cycle_length_ms / n as f64).collect(),
            timing_jitter_frac: 0.1,
        }
    }

    pub fn single_source(cfg: &TissueConfig, cycle_length_ms: f64) -> Self {
        let mut s = Self::five_sources(cfg, cycle_length_ms);
        s.sources.truncate(1);
        s.sources[0] = (cfg.ny / 2, cfg.nx / 2);
        s.phase_offsets_ms = vec![0.0];
        s.timing_jitter_frac = 0.0;
        s
    }

    pub fn validate(&self, cfg: &TissueConfig) -> Result<()> {
        if self.sources.is_empty() && !self.phase_offsets_ms.is_empty() {
            return Err(Error::InvalidParameter(
                "phase offsets given without sources".into(),
            ));
        }
        for &(r, c) in &self.sources {
            if r >= cfg.ny || c >= cfg.nx {
                return Err(Error::InvalidParameter(format!(
                    "focus ({r}, {c}) outside the {}x{} grid",
                    cfg.ny, cfg.nx
                )));
            }
        }
        if self.phase_offsets_ms.len() != self.sources.len() {
            return Err(Error::InvalidParameter(format!(
                "{} phase offsets for {} sources",
                self.phase_offsets_ms.len(),
                self.sources.len()
            )));
        }
        if !(self.cycle_length_ms > 0.0) || !(self.stimulus_duration_ms > 0.0) {
            return Err(Error::InvalidParameter(
                "cycle length and stimulus duration must be positive".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.timing_jitter_frac) {
            return Err(Error::InvalidParameter(format!(
                "timing jitter fraction must be in [0, 0.5), got {}",
                self.timing_jitter_frac
            )));
        }
        // Even the shortest jittered cycle must outlast the stimulus.
        if self.cycle_length_ms * (1.0 - self.timing_jitter_frac) <= self.stimulus_duration_ms {
            return Err(Error::InvalidParameter(format!(
                "cycle length {} ms (jitter {}) does not outlast the {} ms stimulus",
                self.cycle_length_ms, self.timing_jitter_frac, self.stimulus_duration_ms
            )));
        }
        if !(self.radius_cells >= 0.0) || !(self.stimulus_amplitude > 0.0) {
            return Err(Error::InvalidParameter(
                "stimulus radius must be nonnegative and amplitude positive".into(),
            ));
        }
        Ok(())
    }

    fn footprint(&self, cfg: &TissueConfig, which: usize) -> Vec<usize> {
        let (r0, c0) = self.sources[which];
        let rad = self.radius_cells;
        let reach = rad.ceil() as isize;
        let mut cells = Vec::new();
        for di in -reach..=reach {
            for dj in -reach..=reach {
                let (ri, cj) = (r0 as isize + di, c0 as isize + dj);
                if ri < 0 || cj < 0 || ri >= cfg.ny as isize || cj >= cfg.nx as isize {
                    continue;
                }
                if ((di * di + dj * dj) as f64) <= rad * rad {
                    cells.push(ri as usize * cfg.nx + cj as usize);
                }
            }
        }
        cells
    }
}

/// Receiver for the 1 kHz output stream of an episode: membrane voltages and
/// the recorded transmembrane current, one call per output sample.
pub trait EpisodeSink {
    fn on_sample(
        &mut self,
        index: usize,
        time_ms: f64,
        v_mv: ArrayView2<'_, f64>,
        itm: ArrayView2<'_, f64>,
    ) -> Result<()>;
}

/// Stores the transmembrane-current frames (and optionally voltages) of an
/// episode. Dense storage: duration * cells doubles; intended for desk-scale
/// runs and tests.
#[derive(Debug, Clone)]
pub struct ItmTrajectory {
    ny: usize,
    nx: usize,
    dx_cm: f64,
    frames: Vec<Array2<f64>>,
    keep_v: bool,
    v_frames: Vec<Array2<f64>>,
}

impl ItmTrajectory {
    pub fn new(cfg: &TissueConfig) -> Self {
        Self {
            ny: cfg.ny,
            nx: cfg.nx,
            dx_cm: cfg.dx_cm,
            frames: Vec::new(),
            keep_v: false,
            v_frames: Vec::new(),
        }
    }

    pub fn keeping_voltages(cfg: &TissueConfig) -> Self {
        Self { keep_v: true, ..Self::new(cfg) }
    }

    /// Direct construction for forward-model tests.
    pub fn from_frames(frames: Vec<Array2<f64>>, dx_cm: f64) -> Result<Self> {
        let (ny, nx) = frames
            .first()
            .map(|f| f.dim())
            .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
        if frames.iter().any(|f| f.dim() != (ny, nx)) {
            return Err(Error::DimensionMismatch("ragged trajectory frames".into()));
        }
        Ok(Self { ny, nx, dx_cm, frames, keep_v: false, v_frames: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Array2<f64>] {
        &self.frames
    }

    pub fn voltage_frames(&self) -> &[Array2<f64>] {
        &self.v_frames
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn dx_cm(&self) -> f64 {
        self.dx_cm
    }
}

impl EpisodeSink for ItmTrajectory {
    fn on_sample(
        &mut self,
        _index: usize,
        _time_ms: f64,
        v_mv: ArrayView2<'_, f64>,
        itm: ArrayView2<'_, f64>,
    ) -> Result<()> {
        self.frames.push(itm.to_owned());
        if self.keep_v {
            self.v_frames.push(v_mv.to_owned());
        }
        Ok(())
    }
}

/// Regular electrode grid floating `height` above the tissue plane, centred
/// over the sheet. Channel order is row-major, matching the electrode graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeArraySpec {
    pub rows: usize,
    pub cols: usize,
    pub pitch_mm: f64,
    pub height_mm: f64,
}

impl Default for ElectrodeArraySpec {
    fn default() -> Self {
        Self { rows: 8, cols: 8, pitch_mm: 2.0, height_mm: 0.5 }
    }
}

impl ElectrodeArraySpec {
    pub fn channels(&self) -> usize {
        self.rows * self.cols
    }

    /// Electrode centres in cm, (x, y, z) with the tissue plane at z = 0.
    pub fn positions_cm(&self, cfg: &TissueConfig) -> Result<Vec<[f64; 3]>> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGeometry("empty electrode array".into()));
        }
        if !(self.pitch_mm > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "electrode pitch must be positive, got {}",
                self.pitch_mm
            )));
        }
        let pitch = self.pitch_mm / 10.0;
        let height = self.height_mm / 10.0;
        let extent_x = (cfg.nx - 1) as f64 * cfg.dx_cm;
        let extent_y = (cfg.ny - 1) as f64 * cfg.dx_cm;
        let span_x = (self.cols - 1) as f64 * pitch;
        let span_y = (self.rows - 1) as f64 * pitch;
        if span_x > extent_x + 1e-12 || span_y > extent_y + 1e-12 {
            return Err(Error::InvalidGeometry(format!(
                "array footprint {span_x:.2}x{span_y:.2} cm exceeds tissue extent {extent_x:.2}x{extent_y:.2} cm"
            )));
        }
        let x0 = 0.5 * (extent_x - span_x);
        let y0 = 0.5 * (extent_y - span_y);
        let mut pos = Vec::with_capacity(self.channels());
        for r in 0..self.rows {
            for c in 0..self.cols {
                pos.push([x0 + c as f64 * pitch, y0 + r as f64 * pitch, height]);
            }
        }
        Ok(pos)
    }
}

/// Volume-conductor weights: w[e, cell] = dA / (4 pi sigma_e * distance).
fn electrode_weights(array: &ElectrodeArraySpec, cfg: &TissueConfig) -> Result<Array2<f64>> {
    let pos = array.positions_cm(cfg)?;
    let d_area = cfg.dx_cm * cfg.dx_cm;
    let prefactor = 1.0 / (4.0 * std::f64::consts::PI * cfg.sigma_e_ms_per_cm);
    let mut w = Array2::zeros((pos.len(), cfg.cells()));
    for (e, p) in pos.iter().enumerate() {
        for i in 0..cfg.ny {
            for j in 0..cfg.nx {
                let dx = p[0] - j as f64 * cfg.dx_cm;
                let dy = p[1] - i as f64 * cfg.dx_cm;
                let dist = (dx * dx + dy * dy + p[2] * p[2]).sqrt();
                if dist < 1e-9 {
                    return Err(Error::InvalidGeometry(format!(
                        "electrode {e} coincides with cell ({i}, {j})"
                    )));
                }
                w[[e, i * cfg.nx + j]] = prefactor * d_area / dist;
            }
        }
    }
    Ok(w)
}

/// Project a stored current trajectory onto the electrode array:
/// phi(z, t) = (1 / 4 pi sigma_e) * sum_cells itm(x, t) * dA / |z - x|.
pub fn electrode_potentials(
    traj: &ItmTrajectory,
    array: &ElectrodeArraySpec,
    cfg: &TissueConfig,
) -> Result<SignalPanel> {
    if traj.dims() != (cfg.ny, cfg.nx) {
        return Err(Error::DimensionMismatch(format!(
            "trajectory is {:?}, config grid is {}x{}",
            traj.dims(),
            cfg.ny,
            cfg.nx
        )));
    }
    let w = electrode_weights(array, cfg)?;
    let k = array.channels();
    let mut samples = Array2::zeros((k, traj.len()));
    for (t, frame) in traj.frames().iter().enumerate() {
        let flat = frame.as_slice().expect("owned frame");
        for e in 0..k {
            let row = w.row(e);
            let mut acc = 0.0;
            for (wi, &xi) in row.iter().zip(flat) {
                acc += wi * xi;
            }
            samples[[e, t]] = acc;
        }
    }
    SignalPanel::new(samples, OUTPUT_RATE_HZ)
}

/// Streams electrode potentials during an episode without storing the
/// per-cell current history.
pub struct ElectrodeProjector {
    weights: Array2<f64>,
    channels: Vec<Vec<f64>>,
}

impl ElectrodeProjector {
    pub fn new(array: &ElectrodeArraySpec, cfg: &TissueConfig) -> Result<Self> {
        let weights = electrode_weights(array, cfg)?;
        let k = weights.nrows();
        Ok(Self { weights, channels: vec![Vec::new(); k] })
    }

    pub fn into_panel(self) -> Result<SignalPanel> {
        let k = self.channels.len();
        let t = self.channels.first().map_or(0, Vec::len);
        let mut samples = Array2::zeros((k, t));
        for (e, ch) in self.channels.iter().enumerate() {
            for (i, &v) in ch.iter().enumerate() {
                samples[[e, i]] = v;
            }
        }
        SignalPanel::new(samples, OUTPUT_RATE_HZ)
    }
}

impl EpisodeSink for ElectrodeProjector {
    fn on_sample(
        &mut self,
        _index: usize,
        _time_ms: f64,
        _v_mv: ArrayView2<'_, f64>,
        itm: ArrayView2<'_, f64>,
    ) -> Result<()> {
        let flat = itm.as_slice().ok_or_else(|| {
            Error::InvalidParameter("current frame must be contiguous".into())
        })?;
        for (e, ch) in self.channels.iter_mut().enumerate() {
            let row = self.weights.row(e);
            let mut acc = 0.0;
            for (wi, &xi) in row.iter().zip(flat) {
                acc += wi * xi;
            }
            ch.push(acc);
        }
        Ok(())
    }
}

/// Drive the sheet with the foci schedule for `duration_s` seconds, emitting
/// voltages and transmembrane currents to `sink` at 1 kHz. Deterministic for
/// a fixed seed. Returns the final state.
pub fn run_af_episode<M: IonicModel, S: EpisodeSink>(
    cfg: &TissueConfig,
    model: &M,
    foci: &FociSchedule,
    duration_s: f64,
    seed: u64,
    sink: &mut S,
) -> Result<TissueState> {
    cfg.validate()?;
    foci.validate(cfg)?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "episode duration must be positive, got {duration_s}"
        )));
    }
    let sps_f = 1.0 / cfg.dt_ms;
    let sps = sps_f.round() as usize;
    if sps == 0 || (sps as f64 * cfg.dt_ms - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "dt = {} ms must divide the 1 ms output sampling interval",
            cfg.dt_ms
        )));
    }
    let n_samples = (duration_s * 1000.0).round() as usize;

    // Firing windows per focus, jitter drawn focus-major for determinism.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end_ms = duration_s * 1000.0 + foci.cycle_length_ms;
    let windows: Vec<Vec<(f64, f64)>> = (0..foci.sources.len())
        .map(|fi| {
            let mut t = foci.phase_offsets_ms[fi];
            let mut w = Vec::new();
            while t < end_ms {
                w.push((t, t + foci.stimulus_duration_ms));
                let u: f64 = rng.random_range(-1.0..=1.0);
                t += foci.cycle_length_ms * (1.0 + foci.timing_jitter_frac * u);
            }
            w
        })
        .collect();
    let footprints: Vec<Vec<usize>> =
        (0..foci.sources.len()).map(|fi| foci.footprint(cfg, fi)).collect();

    let mut state = TissueState::resting(cfg, model);
    let mut stim = vec![0.0f64; cfg.cells()];
    let mut active = vec![false; foci.sources.len()];
    let mut win_idx = vec![0usize; foci.sources.len()];
    let mut itm = Array2::zeros((cfg.ny, cfg.nx));

    for s_i in 0..n_samples {
        let t_sample = s_i as f64;
        state.check_blowup()?;
        compute_itm(&state, cfg, &mut itm)?;
        sink.on_sample(s_i, t_sample, state.v_view(), itm.view())?;
        if s_i + 1 == n_samples {
            break;
        }
        for k in 0..sps {
            let t_now = t_sample + k as f64 * cfg.dt_ms;
            for fi in 0..foci.sources.len() {
                if active[fi] {
                    let (_, end) = windows[fi][win_idx[fi]];
                    if t_now >= end {
                        for &cell in &footprints[fi] {
                            stim[cell] -= foci.stimulus_amplitude;
                        }
                        active[fi] = false;
                        win_idx[fi] += 1;
                    }
                } else if win_idx[fi] < windows[fi].len() {
                    let (start, end) = windows[fi][win_idx[fi]];
                    if t_now >= start && t_now < end {
                        for &cell in &footprints[fi] {
                            stim[cell] += foci.stimulus_amplitude;
                        }
                        active[fi] = true;
                    } else if t_now >= end {
                        win_idx[fi] += 1;
                    }
                }
            }
            advance(&mut state, model, cfg, Some(&stim));
        }
    }
    state.check_blowup()?;
    Ok(state)
}

fn first_crossing_time(
    prev: f64,
    cur: f64,
    t_prev_ms: f64,
    dt_ms: f64,
    threshold: f64,
) -> Option<f64> {
    if prev < threshold && cur >= threshold {
        let frac = (threshold - prev) / (cur - prev);
        Some(t_prev_ms + frac * dt_ms)
    } else {
        None
    }
}

/// Stimulate the first few columns across all rows and time threshold
/// crossings along `row` between 40% and 85% of the width. Returns 0 when
/// the wave dies out before reaching the far marker.
fn planar_cv_core<M: IonicModel>(cfg: &TissueConfig, model: &M, row: usize) -> Result<f64> {
    let (ny, nx) = (cfg.ny, cfg.nx);
    let mut state = TissueState::resting(cfg, model);
    let mut stim = vec![0.0f64; cfg.cells()];
    for i in 0..ny {
        for j in 0..4.min(nx) {
            stim[i * nx + j] = 40.0;
        }
    }
    let j1 = (0.4 * nx as f64) as usize;
    let j2 = (0.85 * nx as f64) as usize;
    let mut t_act = vec![f64::NAN; nx];
    let mut frontier = 0usize;
    let t_max_ms = 50.0 + nx as f64 * cfg.dx_cm / 0.01; // assumes >= 10 cm/s
    let stim_until_ms = 1.5;
    let mut prev = state.v.clone();
    let mut t_ms = 0.0;
    while t_ms < t_max_ms && frontier < nx {
        let s = if t_ms < stim_until_ms { Some(&stim[..]) } else { None };
        prev.copy_from_slice(&state.v);
        advance(&mut state, model, cfg, s);
        t_ms += cfg.dt_ms;
        state.check_blowup()?;
        while frontier < nx {
            match first_crossing_time(
                prev[row * nx + frontier],
                state.v[row * nx + frontier],
                t_ms - cfg.dt_ms,
                cfg.dt_ms,
                ACTIVATION_THRESHOLD_MV,
            ) {
                Some(t) => {
                    t_act[frontier] = t;
                    frontier += 1;
                }
                None => break,
            }
        }
    }
    if !(t_act[j1].is_finite() && t_act[j2].is_finite()) || t_act[j2] <= t_act[j1] {
        return Ok(0.0);
    }
    let cv_cm_ms = (j2 - j1) as f64 * cfg.dx_cm / (t_act[j2] - t_act[j1]);
    Ok(cv_cm_ms * 1000.0)
}

/// Planar-wave conduction velocity along the fibre axis, in cm/s, measured
/// on a thin strip. The time step is reduced below the stability bound when
/// the requested diffusion demands it.
pub fn measure_planar_cv<M: IonicModel>(
    model: &M,
    d_long_cm2_ms: f64,
    dx_cm: f64,
    dt_ms: f64,
    length_cells: usize,
) -> Result<f64> {
    if length_cells < 16 {
        return Err(Error::InvalidParameter(format!(
            "strip of {length_cells} cells is too short for a velocity fit"
        )));
    }
    let cfg = TissueConfig {
        nx: length_cells,
        ny: 1,
        dx_cm,
        dt_ms: dt_ms.min(0.8 * dx_cm * dx_cm / (4.0 * d_long_cm2_ms)),
        d_long_cm2_ms,
        ..TissueConfig::default()
    };
    cfg.validate()?;
    planar_cv_core(&cfg, model, 0)
}

/// Planar-wave conduction velocity along the fibre axis of the configured
/// 2-D sheet, timed along the centre row.
pub fn measure_grid_planar_cv<M: IonicModel>(cfg: &TissueConfig, model: &M) -> Result<f64> {
    cfg.validate()?;
    planar_cv_core(cfg, model, cfg.ny / 2)
}

/// Bisect the diffusion coefficient until the measured planar conduction
/// velocity matches `target_cv_cm_s` within 0.5%.
pub fn calibrate_diffusion<M: IonicModel>(
    model: &M,
    target_cv_cm_s: f64,
    dx_cm: f64,
    dt_ms: f64,
) -> Result<f64> {
    if !(target_cv_cm_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target conduction velocity must be positive, got {target_cv_cm_s}"
        )));
    }
    let strip = 240usize;
    let cv_of = |d: f64| measure_planar_cv(model, d, dx_cm, dt_ms, strip);
    let mut lo = 1e-5;
    let mut hi = 1e-3;
    while cv_of(hi)? < target_cv_cm_s {
        hi *= 2.0;
        if hi > 0.2 {
            return Err(Error::InvalidParameter(format!(
                "conduction velocity {target_cv_cm_s} cm/s unreachable for this model"
            )));
        }
    }
    while cv_of(lo)? > target_cv_cm_s {
        lo /= 4.0;
        if lo < 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "conduction velocity {target_cv_cm_s} cm/s below the model floor"
            )));
        }
    }
    let mut best = (hi, f64::INFINITY);
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        let cv = cv_of(mid)?;
        let rel = (cv - target_cv_cm_s).abs() / target_cv_cm_s;
        if rel < best.1 {
            best = (mid, rel);
        }
        if rel < 0.005 {
            return Ok(mid);
        }
        if cv < target_cv_cm_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

/// Wavefront speeds (cm/s) along the +x and +y axes from a centre point
/// stimulus, for verifying the anisotropy ratio on a full grid.
pub fn measure_axis_speeds<M: IonicModel>(cfg: &TissueConfig, model: &M) -> Result<(f64, f64)> {
    cfg.validate()?;
    let (r0, c0) = (cfg.ny / 2, cfg.nx / 2);
    let mut state = TissueState::resting(cfg, model);
    let mut stim_field = Array2::zeros((cfg.ny, cfg.nx));
    for i in r0.saturating_sub(2)..(r0 + 3).min(cfg.ny) {
        for j in c0.saturating_sub(2)..(c0 + 3).min(cfg.nx) {
            stim_field[[i, j]] = 40.0;
        }
    }
    let stim = stim_field.as_slice().expect("owned").to_vec();

    // Probe activation times along both half-axes.
    let reach_x = cfg.nx - c0 - 2;
    let reach_y = cfg.ny - r0 - 2;
    let mut t_x = vec![f64::NAN; reach_x];
    let mut t_y = vec![f64::NAN; reach_y];
    let mut prev = state.v.clone();
    let mut t_ms = 0.0;
    let t_max = 50.0 + (reach_x.max(reach_y)) as f64 * cfg.dx_cm / 0.01;
    while t_ms < t_max {
        let s = if t_ms < 1.5 { Some(&stim[..]) } else { None };
        prev.copy_from_slice(&state.v);
        advance(&mut state, model, cfg, s);
        t_ms += cfg.dt_ms;
        state.check_blowup()?;
        for (k, t) in t_x.iter_mut().enumerate() {
            let idx = r0 * cfg.nx + c0 + k;
            if t.is_nan() {
                if let Some(tc) = first_crossing_time(
                    prev[idx],
                    state.v[idx],
                    t_ms - cfg.dt_ms,
                    cfg.dt_ms,
                    ACTIVATION_THRESHOLD_MV,
                ) {
                    *t = tc;
                }
            }
        }
        for (k, t) in t_y.iter_mut().enumerate() {
            let idx = (r0 + k) * cfg.nx + c0;
            if t.is_nan() {
                if let Some(tc) = first_crossing_time(
                    prev[idx],
                    state.v[idx],
                    t_ms - cfg.dt_ms,
                    cfg.dt_ms,
                    ACTIVATION_THRESHOLD_MV,
                ) {
                    *t = tc;
                }
            }
        }
        if t_x.iter().all(|t| t.is_finite()) && t_y.iter().all(|t| t.is_finite()) {
            break;
        }
    }
    let fit_speed = |times: &[f64], window: Range<usize>| -> Result<f64> {
        let pts: Vec<(f64, f64)> = window
            .clone()
            .filter(|&k| times[k].is_finite())
            .map(|k| (k as f64 * cfg.dx_cm, times[k]))
            .collect();
        if pts.len() < 4 {
            return Err(Error::InsufficientData(
                "wavefront did not reach the measurement window".into(),
            ));
        }
        let n = pts.len() as f64;
        let (sx, st) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, mt) = (sx / n, st / n);
        let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| {
            (a.0 + (p.0 - mx) * (p.1 - mt), a.1 + (p.0 - mx) * (p.0 - mx))
        });
        let slope = num / den; // ms per cm
        if !(slope > 0.0) {
            return Err(Error::InsufficientData("degenerate activation fit".into()));
        }
        Ok(1000.0 / slope)
    };
    let wx = (reach_x / 4).max(3)..(reach_x * 3 / 4).max(4);
    let wy = (reach_y / 4).max(3)..(reach_y * 3 / 4).max(4);
    Ok((fit_speed(&t_x, wx)?, fit_speed(&t_y, wy)?))
}

/// Shape and jitter of the synthetic ventricular (QRS-like) train.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaParams {
    pub rate_bpm: f64,
    /// Nominal R-deflection peak amplitude, in panel units.
    pub amplitude: f64,
    /// Per-beat, per-deflection uniform amplitude jitter fraction.
    pub amplitude_jitter: f64,
    /// Per-beat, per-deflection uniform width jitter fraction.
    pub width_jitter: f64,
    pub first_beat_ms: f64,
}

impl Default for VaParams {
    fn default() -> Self {
        Self {
            rate_bpm: 70.0,
            amplitude: 1.0,
            amplitude_jitter: 0.25,
            width_jitter: 0.25,
            first_beat_ms: 400.0,
        }
    }
}

impl VaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_bpm > 0.0 && self.rate_bpm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beat rate must be positive, got {}",
                self.rate_bpm
            )));
        }
        for (name, v) in [
            ("amplitude jitter", self.amplitude_jitter),
            ("width jitter", self.width_jitter),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} fraction must be in [0, 1), got {v}"
                )));
            }
        }
        if !(self.amplitude > 0.0) || !(self.first_beat_ms >= 0.0) {
            return Err(Error::InvalidParameter(
                "amplitude must be positive and first beat nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// (offset from R in ms, width in ms, amplitude relative to R)
const VA_DEFLECTIONS: [(f64, f64, f64); 3] =
    [(-30.0, 9.0, -0.28), (0.0, 7.0, 1.0), (38.0, 16.0, -0.42)];

/// Synthetic ventricular panel: a jittered three-Gaussian Q/R/S train scaled
/// per channel by a smooth attenuation surface.
pub struct VaPanel {
    pub panel: SignalPanel,
    /// Per-channel attenuation, row-major over the electrode grid.
    pub attenuation: Array1<f64>,
    /// Ground-truth R-peak sample indices.
    pub r_peaks: Vec<usize>,
}

/// Smooth per-channel attenuation surface in [0.7, 1.0]: a low-order
/// sinusoidal hill with seeded placement, so the panel stays dominated by the
/// constant graph mode.
pub fn smooth_attenuation_map(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let (ph_r, ph_c) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let mut map: Array1<f64> = Array1::zeros(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let yn = if rows > 1 { r as f64 / (rows - 1) as f64 } else { 0.5 };
            let xn = if cols > 1 { c as f64 / (cols - 1) as f64 } else { 0.5 };
            let s = (std::f64::consts::PI * (0.8 * yn + ph_r)).sin()
                * (std::f64::consts::PI * (0.8 * xn + ph_c)).cos();
            map[r * cols + c] = 0.85 + 0.15 * s;
        }
    }
    map
}

/// Generate `n_samples` of a ventricular train over a `rows x cols` channel
/// grid. Deterministic per seed.
pub fn synthesize_va(
    rows: usize,
    cols: usize,
    n_samples: usize,
    sample_rate_hz: f64,
    params: &VaParams,
    seed: u64,
) -> Result<VaPanel> {
    params.validate()?;
    if rows == 0 || cols == 0 || n_samples == 0 {
        return Err(Error::InvalidParameter("empty panel requested".into()));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attenuation = smooth_attenuation_map(rows, cols, &mut rng);

    let period_ms = 60_000.0 / params.rate_bpm;
    let mut train: Array1<f64> = Array1::zeros(n_samples);
    let mut r_peaks = Vec::new();
    let mut beat_ms = params.first_beat_ms;
    let duration_ms = n_samples as f64 * 1000.0 / sample_rate_hz;
    while beat_ms < duration_ms {
        let r_idx = (beat_ms * sample_rate_hz / 1000.0).round() as usize;
        if r_idx < n_samples {
            r_peaks.push(r_idx);
        }
        // Same number of draws per beat regardless of placement.
        let draws: Vec<(f64, f64)> = VA_DEFLECTIONS
            .iter()
            .map(|_| {
                (
                    rng.random_range(-1.0..=1.0) * params.amplitude_jitter,
                    rng.random_range(-1.0..=1.0) * params.width_jitter,
                )
            })
            .collect();
        for ((off_ms, width_ms, rel), &(da, dw)) in VA_DEFLECTIONS.iter().zip(&draws) {
            let amp = params.amplitude * rel * (1.0 + da);
            let sigma_ms = width_ms * (1.0 + dw);
            let centre_ms = beat_ms + off_ms;
            let lo = ((centre_ms - 5.0 * sigma_ms) * sample_rate_hz / 1000.0).floor() as isize;
            let hi = ((centre_ms + 5.0 * sigma_ms) * sample_rate_hz / 1000.0).ceil() as isize;
            for t in lo.max(0)..=hi.min(n_samples as isize - 1) {
                let t_ms = t as f64 * 1000.0 / sample_rate_hz;
                let z = (t_ms - centre_ms) / sigma_ms;
                train[t as usize] += amp * (-0.5 * z * z).exp();
            }
        }
        beat_ms += period_ms;
    }

    let mut samples = Array2::zeros((rows * cols, n_samples));
    for ch in 0..rows * cols {
        let a = attenuation[ch];
        for t in 0..n_samples {
            samples[[ch, t]] = a * train[t];
        }
    }
    Ok(VaPanel { panel: SignalPanel::new(samples, sample_rate_hz)?, attenuation, r_peaks })
}
