//! Graph-time signal processing for multichannel atrial electrograms.
//!
//! The crate covers the full pipeline: electrode-grid graphs and their
//! Laplacian spectra, joint time/vertex spectral transforms, energy-map
//! analysis, atrial/ventricular source separation, a monodomain tissue
//! simulator with an electrode forward model, and separation metrics.

pub mod error;
pub mod extraction;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod panel;
pub mod pipeline;
pub mod sim;
pub mod spectral;
pub mod transforms;

pub use error::{Error, Result};
pub use graph::{eigendecompose, ElectrodeGraph, LaplacianSpectrum};
pub use panel::SignalPanel;
pub use sim::{
    run_af_episode, Courtemanche, ElectrodeArraySpec, FociSchedule, IonicModel,
    MitchellSchaeffer, TissueConfig, TissueState,
};
pub use transforms::{FrameConfig, JointSpectrum, StftTensor, Window};
