//! Modeling of spontaneous-emission control by plasmonic patch antennas.
//!
//! The crate covers four connected layers of physics:
//!
//! * planar (infinite-disk) dipole emission in the layered stack — Purcell
//!   factors, dissipation spectra and the photon/plasmon/quenching split
//!   ([`layered`]);
//! * the metal-insulator-metal gap plasmon and a radial Fabry-Perot
//!   surrogate for the disk resonances ([`gap_plasmon`]);
//! * far-field radiation patterns from a rim-scattering ring model, with
//!   off-center emitters and incoherent cluster averaging ([`radiation`]);
//! * the orientation statistics of quantum-dot decay rates — densities,
//!   decay-curve synthesis, instrument-response convolution and Monte Carlo
//!   sampling ([`decay`]) — plus maximum-likelihood extraction of the
//!   perpendicular/parallel Purcell factors from photon-count histograms
//!   ([`fit`]).

pub mod decay;
pub mod error;
pub mod fit;
pub mod gap_plasmon;
pub mod layered;
pub mod materials;
pub mod optim;
pub mod quad;
pub mod radiation;

pub use decay::{
    convolve_irf, decay_curve, gamma_of_theta, pi1, pi2, pi_gamma, rate_mixture, sample_decay_mc,
    synth_decay_histogram, time_to_fraction, DecayCurve, DecayHistogram, OrientationSample,
    PurcellPair, RateEnsemble, SynthConfig,
};
pub use error::{Error, Result};
pub use fit::{fit_antenna, fit_reference, neg_log_likelihood, FitOptions, FitResult};
pub use gap_plasmon::{
    gap_mode_for_geometry, purcell_vs_diameter, solve_gap_mode, solve_gap_mode_materials,
    spp_single_interface, spp_single_interface_materials, FabryPerotParams, GapPlasmonMode,
    PurcellCurve,
};
pub use layered::{
    decay_channels, dissipation_spectrum, half_stack_reflection, purcell_planar,
    purcell_planar_cfg, ChannelPartition, ChannelSplit, DipoleOrientation, DissipationSpectrum,
    HalfStack, PlanarConfig, Polarization, StackContext,
};
pub use materials::{
    build_patch_stack, parse_material_csv, permittivity_at, AntennaGeometry, Layer, Material,
    Permittivity, PlanarStack,
};
pub use radiation::{
    cluster_pattern, lobe_metrics, rim_far_field, rim_far_field_at, ClusterSpec, ElementFactor,
    LobeMetrics, Normalization, RadiationConfig, RadiationPattern,
};
