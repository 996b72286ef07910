//! Complex dispersion of the metal-insulator-metal gap plasmon and a radial
//! Fabry-Perot surrogate for the disk resonances that produce the oscillatory
//! Purcell-versus-diameter curve.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{permittivity_at, AntennaGeometry, Material};

/// Lowest symmetric bound mode of a metal/dielectric/metal gap.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapPlasmonMode {
    /// Complex effective index beta / k0.
    pub n_eff: Complex64,
    /// 1/e intensity propagation length, nm.
    pub propagation_length_nm: f64,
    pub wavelength_nm: f64,
    pub gap_thickness_nm: f64,
}

/// Controls for the Newton dispersion solve.
#[derive(Debug, Clone, Copy)]
pub struct GapModeConfig {
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for GapModeConfig {
    fn default() -> Self {
        GapModeConfig {
            residual_tol: 1e-12,
            max_iterations: 200,
        }
    }
}

/// Single-interface surface-plasmon effective index,
/// n_eff = sqrt(eps_m eps_d / (eps_m + eps_d)), principal branch.
///
/// Serves as the seed and the thick-gap limit of the gap-mode solver.
pub fn spp_single_interface(eps_metal: Complex64, eps_dielectric: f64) -> Result<Complex64> {
    if !(eps_dielectric > 0.0) {
        return Err(Error::Domain(format!(
            "dielectric permittivity must be positive, got {eps_dielectric}"
        )));
    }
    if eps_metal.re >= -eps_dielectric {
        return Err(Error::Domain(format!(
            "no bound interface mode: re(eps_metal) = {} must be below {}",
            eps_metal.re, -eps_dielectric
        )));
    }
    let mut n = (eps_metal * eps_dielectric / (eps_metal + eps_dielectric)).sqrt();
    if n.re < 0.0 {
        n = -n;
    }
    Ok(n)
}

/// Material-level convenience wrapper for [`spp_single_interface`].
pub fn spp_single_interface_materials(
    wavelength_nm: f64,
    metal: &Material,
    dielectric: &Material,
) -> Result<Complex64> {
    let eps_m = permittivity_at(metal, wavelength_nm)?.as_complex();
    let eps_d = permittivity_at(dielectric, wavelength_nm)?;
    spp_single_interface(eps_m, eps_d.re)
}

/// Symmetric-gap dispersion residual
/// g(n) = tanh(kappa_d k0 t/2) + eps_d kappa_m / (eps_m kappa_d)
/// with kappa_i = sqrt(n^2 - eps_i) in units of k0.
fn dispersion(n: Complex64, tau: f64, eps_m: Complex64, eps_d: f64) -> Complex64 {
    let kd = (n * n - eps_d).sqrt();
    let km = (n * n - eps_m).sqrt();
    (kd * tau).tanh() + eps_d * km / (eps_m * kd)
}

fn dispersion_derivative(n: Complex64, tau: f64, eps_m: Complex64, eps_d: f64) -> Complex64 {
    let kd = (n * n - eps_d).sqrt();
    let km = (n * n - eps_m).sqrt();
    let sech = 1.0 / (kd * tau).cosh();
    let d_tanh = tau * sech * sech * n / kd;
    let d_ratio = (eps_d / eps_m) * n * (eps_m - eps_d) / (km * kd * kd * kd);
    d_tanh + d_ratio
}

/// Solves the lowest symmetric gap mode by damped complex Newton iteration
/// seeded from the single-interface index, with a multi-start fallback.
pub fn solve_gap_mode(
    wavelength_nm: f64,
    gap_thickness_nm: f64,
    eps_metal: Complex64,
    eps_dielectric: f64,
    cfg: &GapModeConfig,
) -> Result<GapPlasmonMode> {
    if !(gap_thickness_nm > 0.0) {
        return Err(Error::Validation(format!(
            "gap thickness must be positive, got {gap_thickness_nm}"
        )));
    }
    let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;
    let tau = 0.5 * k0 * gap_thickness_nm;
    let spp = spp_single_interface(eps_metal, eps_dielectric)?;

    let mut best: Option<(Complex64, f64)> = None;
    let seed_scales = [1.0, 1.05, 1.15, 1.3, 1.6, 2.0, 2.8, 4.0];
    for &scale in &seed_scales {
        let mut n = spp * scale;
        let mut res = dispersion(n, tau, eps_metal, eps_dielectric).norm();
        for _ in 0..cfg.max_iterations {
            let g = dispersion(n, tau, eps_metal, eps_dielectric);
            let dg = dispersion_derivative(n, tau, eps_metal, eps_dielectric);
            if dg.norm() == 0.0 {
                break;
            }
            let full_step = g / dg;
            // Damped step: halve until the residual decreases.
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let trial = n - lambda * full_step;
                let trial_res = dispersion(trial, tau, eps_metal, eps_dielectric).norm();
                if trial_res < res {
                    n = trial;
                    res = trial_res;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted || res < cfg.residual_tol * 0.01 {
                break;
            }
        }
        match best {
            Some((_, best_res)) if best_res <= res => {}
            _ => best = Some((n, res)),
        }
        if res < cfg.residual_tol * 0.01 && n.re > eps_dielectric.sqrt() && n.im >= 0.0 {
            break;
        }
    }

    let (n_eff, residual) = best.expect("at least one seed was tried");
    let bound = n_eff.re > eps_dielectric.sqrt() && n_eff.im >= 0.0;
    if residual > cfg.residual_tol || !bound {
        return Err(Error::RootFinding {
            best_residual: residual,
        });
    }
    let propagation_length_nm = if n_eff.im > 0.0 {
        1.0 / (2.0 * k0 * n_eff.im)
    } else {
        f64::INFINITY
    };
    Ok(GapPlasmonMode {
        n_eff,
        propagation_length_nm,
        wavelength_nm,
        gap_thickness_nm,
    })
}

/// Material-level convenience wrapper for [`solve_gap_mode`].
pub fn solve_gap_mode_materials(
    wavelength_nm: f64,
    gap_thickness_nm: f64,
    metal: &Material,
    dielectric: &Material,
) -> Result<GapPlasmonMode> {
    let eps_m = permittivity_at(metal, wavelength_nm)?.as_complex();
    let eps_d = permittivity_at(dielectric, wavelength_nm)?;
    solve_gap_mode(
        wavelength_nm,
        gap_thickness_nm,
        eps_m,
        eps_d.re,
        &GapModeConfig::default(),
    )
}

/// Gap mode of the antenna's own gold/silica/gold gap.
pub fn gap_mode_for_geometry(geom: &AntennaGeometry) -> Result<GapPlasmonMode> {
    geom.validate()?;
    solve_gap_mode_materials(
        geom.emission_wavelength_nm,
        geom.spacer_thickness_nm,
        &Material::gold(),
        &Material::silica(),
    )
}

/// Parameters of the radial round-trip resonance surrogate.
///
/// `edge_reflectivity` and `edge_phase` are surrogate constants: the model
/// claims the oscillation period and the F_perp >> F_par ordering
/// quantitatively, the peak magnitudes only qualitatively.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FabryPerotParams {
    pub edge_reflectivity: f64,
    pub edge_phase: f64,
    /// Planar (infinite-disk) perpendicular Purcell factor.
    pub planar_baseline: f64,
    /// Diameter-independent parallel Purcell factor.
    pub parallel_value: f64,
}

impl FabryPerotParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_reflectivity > 0.0 && self.edge_reflectivity < 1.0) {
            return Err(Error::Validation(format!(
                "edge_reflectivity must lie in (0, 1), got {}",
                self.edge_reflectivity
            )));
        }
        if !(self.planar_baseline > 0.0) || !(self.parallel_value > 0.0) {
            return Err(Error::Validation(
                "planar_baseline and parallel_value must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Purcell factors versus disk diameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurcellCurve {
    pub diameters_nm: Vec<f64>,
    pub f_perp: Vec<f64>,
    pub f_par: Vec<f64>,
}

/// Oscillatory Purcell factor from the radial Fabry-Perot surrogate:
/// F_perp(D) = F_planar * (1 - rho^2) / |1 - rho exp(i phase)|^2 with
/// rho = r exp(-D / (2 L_prop)) and phase = k0 re(n_eff) D + edge_phase,
/// normalized so the resonance factor averages to 1 over one period.
pub fn purcell_vs_diameter(
    geom: &AntennaGeometry,
    diameters_nm: &[f64],
    params: &FabryPerotParams,
) -> Result<PurcellCurve> {
    params.validate()?;
    if diameters_nm.is_empty() || diameters_nm.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(
            "diameters must be a non-empty strictly increasing grid".into(),
        ));
    }
    let mode = gap_mode_for_geometry(geom)?;
    let k0 = 2.0 * std::f64::consts::PI / geom.emission_wavelength_nm;
    let f_perp: Vec<f64> = diameters_nm
        .iter()
        .map(|&d| {
            let z = params.edge_reflectivity
                * (Complex64::i() * (k0 * mode.n_eff * d + params.edge_phase)).exp();
            let rho2 = z.norm_sqr();
            params.planar_baseline * (1.0 - rho2) / (Complex64::new(1.0, 0.0) - z).norm_sqr()
        })
        .collect();
    let f_par = vec![params.parallel_value; diameters_nm.len()];
    Ok(PurcellCurve {
        diameters_nm: diameters_nm.to_vec(),
        f_perp,
        f_par,
    })
}

/// Indices of strict local maxima of `values`.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            peaks.push(i);
        }
    }
    peaks
}
