//! Far-field radiation patterns of the patch antenna from a rim-scattering
//! ring model: the emitter launches the gap plasmon, which propagates to the
//! disk edge and scatters into free space. Supports off-center emitters and
//! incoherent averaging over emitter clusters.
//!
//! Only the perpendicular dipole feeds the ring source; its Purcell factor
//! dominates the parallel one, and in-plane-dipole radiation is neglected.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap_plasmon::GapPlasmonMode;
use crate::materials::AntennaGeometry;

/// How a pattern's intensity values are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Integral of I over the upper hemisphere equals 1 (grid quadrature).
    UnitIntegral,
    /// Peak intensity equals 1.
    UnitPeak,
}

/// Obliquity factor applied to the scattered intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ElementFactor {
    #[default]
    Unity,
    CosTheta,
}

/// Far-field intensity on a regular (theta, phi) grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiationPattern {
    /// Polar angles in degrees, 0..=90, uniform.
    pub theta_deg: Vec<f64>,
    /// Azimuthal angles in degrees, [0, 360), uniform.
    pub phi_deg: Vec<f64>,
    /// intensity[i][j] at (theta_deg[i], phi_deg[j]).
    pub intensity: Vec<Vec<f64>>,
    pub normalization: Normalization,
}

/// Grid and quadrature controls for pattern synthesis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RadiationConfig {
    pub theta_step_deg: f64,
    pub phi_step_deg: f64,
    /// Minimum rim-quadrature sampling density, points per phase wavelength.
    pub points_per_rim_wavelength: f64,
    pub element_factor: ElementFactor,
}

impl Default for RadiationConfig {
    fn default() -> Self {
        RadiationConfig {
            theta_step_deg: 0.5,
            phi_step_deg: 2.0,
            points_per_rim_wavelength: 16.0,
            element_factor: ElementFactor::Unity,
        }
    }
}

/// Cylindrical cluster of emitters under the disk.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub radius_nm: f64,
    pub height_nm: f64,
    /// Cluster-center distance from the disk center, nm (along phi = 0).
    pub center_offset_nm: f64,
    /// (radial, azimuthal, vertical) sample counts of the deterministic
    /// low-discrepancy lattice.
    pub sample_counts: (usize, usize, usize),
}

impl ClusterSpec {
    pub fn validate(&self, disk_radius_nm: f64) -> Result<()> {
        if self.radius_nm < 0.0 || self.height_nm < 0.0 || self.center_offset_nm < 0.0 {
            return Err(Error::Validation(
                "cluster radius, height and offset must be non-negative".into(),
            ));
        }
        if self.center_offset_nm + self.radius_nm >= disk_radius_nm {
            return Err(Error::Validation(format!(
                "cluster must fit under the disk: offset {} + radius {} >= disk radius {}",
                self.center_offset_nm, self.radius_nm, disk_radius_nm
            )));
        }
        let (nr, na, nv) = self.sample_counts;
        if nr == 0 || na == 0 || nv == 0 {
            return Err(Error::Validation("sample_counts must all be positive".into()));
        }
        Ok(())
    }
}

/// Main-lobe metrics of a pattern.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LobeMetrics {
    pub peak_theta_deg: f64,
    pub peak_phi_deg: f64,
    /// Angular separation of the first local minima bracketing the peak
    /// along the phi-cut through it; the grid span when no lobe is found.
    pub null_to_null_width_deg: f64,
    /// Peak over the largest secondary maximum along the same cut;
    /// infinite when no secondary maximum exists.
    pub peak_to_sidelobe_ratio: f64,
    /// False when no interior minimum brackets the peak.
    pub lobe_found: bool,
}

/// One point-emitter source position in polar disk coordinates.
#[derive(Debug, Clone, Copy)]
struct Emitter {
    offset_nm: f64,
    azimuth_rad: f64,
    weight: f64,
}

fn synthesize(
    geom: &AntennaGeometry,
    mode: &GapPlasmonMode,
    emitters: &[Emitter],
    cfg: &RadiationConfig,
) -> Result<RadiationPattern> {
    geom.validate()?;
    if !(cfg.theta_step_deg > 0.0 && cfg.theta_step_deg <= 1.0) {
        return Err(Error::Validation(format!(
            "theta_step_deg must lie in (0, 1], got {}",
            cfg.theta_step_deg
        )));
    }
    if !(cfg.phi_step_deg > 0.0) || (360.0 / cfg.phi_step_deg).fract().abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "phi_step_deg must divide 360, got {}",
            cfg.phi_step_deg
        )));
    }
    let radius = 0.5 * geom.disk_diameter_nm;
    let k0 = 2.0 * std::f64::consts::PI / geom.emission_wavelength_nm;
    let n_re = mode.n_eff.re;

    let n_theta = (90.0 / cfg.theta_step_deg).round() as usize + 1;
    let n_phi = (360.0 / cfg.phi_step_deg).round() as usize;
    let theta_deg: Vec<f64> = (0..n_theta).map(|i| i as f64 * cfg.theta_step_deg).collect();
    let phi_deg: Vec<f64> = (0..n_phi).map(|j| j as f64 * cfg.phi_step_deg).collect();

    // Rim sampling: enough points for the fastest phase variation along the
    // rim, aligned to the output phi grid so the free-space kernel can be
    // indexed by angle difference.
    let s_max = emitters
        .iter()
        .map(|e| e.offset_nm)
        .fold(0.0f64, f64::max)
        .min(radius * 0.999);
    let rate = k0 * (radius + n_re * s_max * radius / (radius - s_max));
    let min_points = (cfg.points_per_rim_wavelength * rate).ceil().max(64.0) as usize;
    let n_rim = n_phi * min_points.div_ceil(n_phi);

    // Per-emitter rim source amplitudes: gap-plasmon propagation from the
    // emitter to each rim point, with cylindrical 1/sqrt(rho) spreading.
    let sources: Vec<Vec<Complex64>> = emitters
        .iter()
        .map(|e| {
            (0..n_rim)
                .map(|m| {
                    let phi_m = 2.0 * std::f64::consts::PI * m as f64 / n_rim as f64;
                    let rho = (radius * radius + e.offset_nm * e.offset_nm
                        - 2.0 * radius * e.offset_nm * (phi_m - e.azimuth_rad).cos())
                    .sqrt();
                    (Complex64::i() * k0 * mode.n_eff * rho).exp() / rho.sqrt()
                })
                .collect()
        })
        .collect();

    let q = n_rim / n_phi;
    let intensity: Vec<Vec<f64>> = theta_deg
        .par_iter()
        .map(|&th_deg| {
            let sin_th = th_deg.to_radians().sin();
            let element = match cfg.element_factor {
                ElementFactor::Unity => 1.0,
                ElementFactor::CosTheta => th_deg.to_radians().cos(),
            };
            // Free-space phase kernel exp(i k0 R sin(theta) cos(dphi)),
            // shared by every emitter at this polar angle.
            let kernel: Vec<Complex64> = (0..n_rim)
                .map(|d| {
                    let dphi = 2.0 * std::f64::consts::PI * d as f64 / n_rim as f64;
                    (Complex64::i() * k0 * radius * sin_th * dphi.cos()).exp()
                })
                .collect();
            (0..n_phi)
                .map(|j| {
                    let mut total = 0.0;
                    for (e, src) in emitters.iter().zip(&sources) {
                        let mut field = Complex64::new(0.0, 0.0);
                        for (m, &s_m) in src.iter().enumerate() {
                            field += s_m * kernel[(m + n_rim - q * j) % n_rim];
                        }
                        total += e.weight * field.norm_sqr();
                    }
                    total * element
                })
                .collect()
        })
        .collect();

    let mut pattern = RadiationPattern {
        theta_deg,
        phi_deg,
        intensity,
        normalization: Normalization::UnitPeak,
    };
    pattern.normalize_unit_integral();
    Ok(pattern)
}

impl RadiationPattern {
    /// Hemisphere integral of I dOmega on this grid (trapezoid in theta,
    /// periodic sum in phi).
    pub fn integral(&self) -> f64 {
        let dth = (self.theta_deg[1] - self.theta_deg[0]).to_radians();
        let dph = (self.phi_deg[1] - self.phi_deg[0]).to_radians();
        let mut total = 0.0;
        for (i, &th) in self.theta_deg.iter().enumerate() {
            let w_th = if i == 0 || i == self.theta_deg.len() - 1 {
                0.5
            } else {
                1.0
            };
            let sin_th = th.to_radians().sin();
            let row_sum: f64 = self.intensity[i].iter().sum();
            total += w_th * sin_th * row_sum;
        }
        total * dth * dph
    }

    pub fn normalize_unit_integral(&mut self) {
        let norm = self.integral();
        for row in &mut self.intensity {
            for v in row {
                *v /= norm;
            }
        }
        self.normalization = Normalization::UnitIntegral;
    }

    pub fn normalize_unit_peak(&mut self) {
        let peak = self.peak_value();
        for row in &mut self.intensity {
            for v in row {
                *v /= peak;
            }
        }
        self.normalization = Normalization::UnitPeak;
    }

    pub fn peak_value(&self) -> f64 {
        self.intensity
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid indices of the global maximum.
    pub fn peak_indices(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for (i, row) in self.intensity.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > best_val {
                    best_val = v;
                    best = (i, j);
                }
            }
        }
        best
    }
}

/// Far-field pattern of a single point emitter `offset_nm` off the disk
/// center (offset along phi = 0).
pub fn rim_far_field(
    geom: &AntennaGeometry,
    emitter_offset_nm: f64,
    mode: &GapPlasmonMode,
    cfg: &RadiationConfig,
) -> Result<RadiationPattern> {
    rim_far_field_at(geom, emitter_offset_nm, 0.0, mode, cfg)
}

/// Same as [`rim_far_field`] with the offset direction given explicitly.
pub fn rim_far_field_at(
    geom: &AntennaGeometry,
    emitter_offset_nm: f64,
    azimuth_rad: f64,
    mode: &GapPlasmonMode,
    cfg: &RadiationConfig,
) -> Result<RadiationPattern> {
    let radius = 0.5 * geom.disk_diameter_nm;
    if !(emitter_offset_nm >= 0.0 && emitter_offset_nm < radius) {
        return Err(Error::Validation(format!(
            "emitter offset must satisfy 0 <= s < disk radius ({emitter_offset_nm} vs {radius})"
        )));
    }
    synthesize(
        geom,
        mode,
        &[Emitter {
            offset_nm: emitter_offset_nm,
            azimuth_rad,
            weight: 1.0,
        }],
        cfg,
    )
}

/// Incoherent average of point-emitter patterns over a cylindrical cluster,
/// sampled on a deterministic lattice (no RNG). Vertical-dipole launch only;
/// the pattern does not depend on the vertical position, so the vertical
/// samples collapse into weights.
pub fn cluster_pattern(
    geom: &AntennaGeometry,
    cluster: &ClusterSpec,
    mode: &GapPlasmonMode,
    cfg: &RadiationConfig,
) -> Result<RadiationPattern> {
    let radius = 0.5 * geom.disk_diameter_nm;
    cluster.validate(radius)?;
    let (nr, na, _nv) = cluster.sample_counts;
    let golden = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut emitters = Vec::with_capacity(nr * na);
    let weight = 1.0 / (nr * na) as f64;
    for i in 0..nr {
        // Equal-area radial rings, rotated ring-to-ring by the golden angle.
        let r = cluster.radius_nm * (((i as f64) + 0.5) / nr as f64).sqrt();
        for j in 0..na {
            let psi = 2.0 * std::f64::consts::PI * (((j as f64) + 0.5) / na as f64
                + (i as f64 * golden).fract());
            let x = cluster.center_offset_nm + r * psi.cos();
            let y = r * psi.sin();
            emitters.push(Emitter {
                offset_nm: (x * x + y * y).sqrt(),
                azimuth_rad: y.atan2(x),
                weight,
            });
        }
    }
    synthesize(geom, mode, &emitters, cfg)
}

/// Extracts main-lobe metrics from a pattern.
///
/// The cut through the peak runs from theta = -90 to +90 along the peak's
/// azimuth (negative thetas taken from phi + 180 deg).
pub fn lobe_metrics(pattern: &RadiationPattern) -> Result<LobeMetrics> {
    let n_theta = pattern.theta_deg.len();
    if n_theta < 3 {
        return Err(Error::Validation("pattern needs at least 3 theta rows".into()));
    }
    let step = pattern.theta_deg[1] - pattern.theta_deg[0];
    if step > 1.0 + 1e-9 {
        return Err(Error::Validation(format!(
            "lobe metrics need theta resolution <= 1 deg, got {step}"
        )));
    }
    let (i_pk, j_pk) = pattern.peak_indices();
    let n_phi = pattern.phi_deg.len();
    let j_opp = (j_pk + n_phi / 2) % n_phi;

    // Signed-theta cut through the peak: [-90, 90].
    let mut cut_theta = Vec::with_capacity(2 * n_theta - 1);
    let mut cut_val = Vec::with_capacity(2 * n_theta - 1);
    for i in (1..n_theta).rev() {
        cut_theta.push(-pattern.theta_deg[i]);
        cut_val.push(pattern.intensity[i][j_opp]);
    }
    for i in 0..n_theta {
        cut_theta.push(pattern.theta_deg[i]);
        cut_val.push(pattern.intensity[i][j_pk]);
    }
    let peak_idx = n_theta - 1 + i_pk;

    // Walk outward from the peak until the intensity turns back up.
    let walk = |dir: i64| -> Option<usize> {
        let mut k = peak_idx as i64;
        loop {
            let next = k + dir;
            if next < 0 || next as usize >= cut_val.len() {
                return None;
            }
            if cut_val[next as usize] > cut_val[k as usize] {
                return Some(k as usize);
            }
            k = next;
        }
    };
    let left = walk(-1);
    let right = walk(1);
    let lobe_found = left.is_some() && right.is_some();
    let null_to_null_width_deg = match (left, right) {
        (Some(l), Some(r)) => cut_theta[r] - cut_theta[l],
        _ => cut_theta[cut_theta.len() - 1] - cut_theta[0],
    };

    // Largest secondary maximum along the cut, outside the main lobe.
    let mut sidelobe = 0.0f64;
    if let (Some(l), Some(r)) = (left, right) {
        for k in 1..cut_val.len() - 1 {
            if k >= l && k <= r {
                continue;
            }
            if cut_val[k] >= cut_val[k - 1] && cut_val[k] >= cut_val[k + 1] {
                sidelobe = sidelobe.max(cut_val[k]);
            }
        }
    }
    let peak_val = cut_val[peak_idx];
    let peak_to_sidelobe_ratio = if sidelobe > 0.0 {
        peak_val / sidelobe
    } else {
        f64::INFINITY
    };

    Ok(LobeMetrics {
        peak_theta_deg: pattern.theta_deg[i_pk],
        peak_phi_deg: pattern.phi_deg[j_pk],
        null_to_null_width_deg,
        peak_to_sidelobe_ratio,
        lobe_found,
    })
}
