//! Run configuration: a single flat JSON document per invocation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use patch_antenna::{AntennaGeometry, ClusterSpec, DipoleOrientation, ElementFactor};
use serde::{Deserialize, Serialize};

/// Top-level command selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PurcellPlanar,
    QuenchSweep,
    GapMode,
    PurcellVsDiameter,
    Pattern,
    SynthDecay,
    FitDecay,
    Sweep,
}

/// Intrinsic-rate ensemble parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub gamma_c: f64,
    pub w_c: f64,
    pub truncate_at_zero: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            gamma_c: 0.055,
            w_c: 0.020,
            truncate_at_zero: true,
        }
    }
}

/// Purcell-factor pair used by decay synthesis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FpConfig {
    pub f_perp: f64,
    pub f_par: f64,
}

impl Default for FpConfig {
    fn default() -> Self {
        FpConfig {
            f_perp: 35.0,
            f_par: 5.0,
        }
    }
}

/// Uniform numeric grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.step <= 0.0 || self.stop < self.start {
            return out;
        }
        let n = ((self.stop - self.start) / self.step).round() as usize;
        for i in 0..=n {
            let v = self.start + i as f64 * self.step;
            if v <= self.stop + 1e-9 * self.step {
                out.push(v);
            }
        }
        out
    }
}

/// Fabry-Perot surrogate parameters; unset values fall back to the model
/// defaults (r = 0.9, phase = -pi/2, computed planar baseline, F_par = 4.5).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FabryPerotConfig {
    pub edge_reflectivity: Option<f64>,
    pub edge_phase: Option<f64>,
    pub planar_baseline: Option<f64>,
    pub parallel_value: Option<f64>,
}

/// Far-field pattern section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternConfig {
    pub emitter_offset_nm: f64,
    /// When set, the pattern is the incoherent cluster average.
    pub cluster: Option<ClusterSpec>,
    pub theta_step_deg: f64,
    pub phi_step_deg: f64,
    pub element_factor: ElementFactor,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            emitter_offset_nm: 0.0,
            cluster: None,
            theta_step_deg: 0.5,
            phi_step_deg: 2.0,
            element_factor: ElementFactor::Unity,
        }
    }
}

/// Synthetic-histogram section.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub window_ns: f64,
    pub bin_width_ns: f64,
    pub total_counts: usize,
    pub irf_fwhm_ns: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            window_ns: 400.0,
            bin_width_ns: 0.5,
            total_counts: 1_000_000,
            irf_fwhm_ns: 0.5,
        }
    }
}

/// Decay-fit section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSection {
    /// "reference" or "antenna".
    pub mode: FitMode,
    /// Histogram CSV (`time_ns, counts`) to fit.
    pub histogram: PathBuf,
    /// Instrument response convolved into the model; negative disables it.
    pub irf_fwhm_ns: f64,
    pub fit_background: bool,
    pub multistart: (usize, usize),
    pub max_evaluations: usize,
    pub f_bounds: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Reference,
    #[default]
    Antenna,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            mode: FitMode::Antenna,
            histogram: PathBuf::from("histogram.csv"),
            irf_fwhm_ns: 0.5,
            fit_background: true,
            multistart: (5, 5),
            max_evaluations: 2000,
            f_bounds: (0.1, 500.0),
        }
    }
}

/// One run = one command plus its inputs; a flat JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub geometry: AntennaGeometry,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub fp: FpConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for sweeps; 0 picks the machine default.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub orientation: Orientation,
    /// u grid for `purcell-planar` spectra.
    #[serde(default)]
    pub u_grid: Option<GridSpec>,
    /// Emitter heights for `quench-sweep`, nm.
    #[serde(default)]
    pub distances_nm: Option<Vec<f64>>,
    /// Diameter grid for `purcell-vs-diameter` and `sweep`, nm.
    #[serde(default)]
    pub diameters_nm: Option<GridSpec>,
    #[serde(default)]
    pub fabry_perot: FabryPerotConfig,
    #[serde(default)]
    pub pattern: PatternConfig,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub fit: FitSection,
    /// Named numeric overrides for solver tolerances.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Serde-friendly alias of the core orientation enum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Perp,
    Parallel,
}

impl From<Orientation> for DipoleOrientation {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::Perp => DipoleOrientation::Perp,
            Orientation::Parallel => DipoleOrientation::Parallel,
        }
    }
}
