//! Pump-probe simulation of electronic coherence in a two-surface molecule
//! with a discretised ionisation continuum.
//!
//! Energies are in eV, times in fs and angular frequencies in rad/fs. The
//! vibrational coordinate is dimensionless and mass-weighted.

pub mod analysis;
pub mod analytic;
pub mod config;
pub mod error;
pub mod grid;
pub mod model;
pub mod propagator;
pub mod pulse;
pub mod scan;
pub mod units;

pub use analysis::{AnalysisResult, BeatSpectrum, ComplexEnvelope, DelayTrace, JitterEstimate, SinusoidFit};
pub use analytic::{CoherenceTrace, Overlap, OverlapTable, SpectralFilterOverlap, TwoStateParams};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::{SpatialGrid, TimeGrid, VibronicState};
pub use model::{benzene_preset, ContinuumSpec, PotentialSurface, SystemModel};
pub use propagator::{PropagationOptions, PropagationResult, SplitOperator};
pub use pulse::{PhaseMaskTerm, PulseSequence, SampledField, SpectralPulse};
pub use scan::{ConvergenceReport, IonizationTrace, Numerics, ScanOptions, ScanSpec, TraceMetadata};
