//! Optical constants and geometry for the gold/silica/gold patch stack.
//!
//! Sign conventions: fields go as exp(-i omega t), so passive media have
//! im(eps) >= 0 and all downstream branch choices follow from that.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative permittivity at a single wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Permittivity {
    pub re: f64,
    pub im: f64,
}

impl Permittivity {
    pub fn new(re: f64, im: f64) -> Self {
        Permittivity { re, im }
    }

    pub fn as_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    /// Complex refractive index, principal branch of sqrt(eps).
    pub fn refractive_index(self) -> Complex64 {
        self.as_complex().sqrt()
    }
}

/// Dispersive material model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Material {
    /// Non-dispersive dielectric with real index n; eps = n^2.
    ConstantIndex { n: f64 },
    /// Tabulated permittivity, linearly interpolated in wavelength.
    /// Wavelengths must be strictly increasing.
    Tabulated {
        name: String,
        wavelength_nm: Vec<f64>,
        eps: Vec<Permittivity>,
    },
    /// Drude metal: eps(w) = eps_inf - wp^2 / (w^2 + i gamma w), expressed
    /// through the plasma wavelength (nm) and damping rate (s^-1).
    Drude {
        eps_inf: f64,
        plasma_wavelength_nm: f64,
        damping_s_inv: f64,
    },
}

/// Speed of light in vacuum, m/s.
const C_M_PER_S: f64 = 2.99792458e8;

impl Material {
    pub fn constant_index(n: f64) -> Self {
        Material::ConstantIndex { n }
    }

    /// Silica spacer, n = 1.5.
    pub fn silica() -> Self {
        Material::ConstantIndex { n: 1.5 }
    }

    pub fn air() -> Self {
        Material::ConstantIndex { n: 1.0 }
    }

    /// Bundled gold dataset (Johnson & Christy 1972 ellipsometry values).
    pub fn gold() -> Self {
        parse_material_csv("Au", include_str!("../data/gold_johnson_christy.csv"))
            .expect("bundled gold table is well-formed")
    }

    /// Bundled silicon dataset (Aspnes & Studna 1983 values). The substrate
    /// sits behind 200 nm of gold, so its exact dispersion is inconsequential.
    pub fn silicon() -> Self {
        parse_material_csv("Si", include_str!("../data/silicon.csv"))
            .expect("bundled silicon table is well-formed")
    }

    /// Drude gold fallback for wavelengths outside the table.
    pub fn gold_drude() -> Self {
        Material::Drude {
            eps_inf: 9.0,
            plasma_wavelength_nm: 137.0,
            damping_s_inv: 1.0e14,
        }
    }

    /// Human-readable label used in validation messages.
    pub fn label(&self) -> String {
        match self {
            Material::ConstantIndex { n } => format!("n={n}"),
            Material::Tabulated { name, .. } => name.clone(),
            Material::Drude { .. } => "drude".into(),
        }
    }
}

/// Permittivity of `material` at `wavelength_nm`.
///
/// Tabulated materials interpolate re and im linearly and error outside the
/// table range; constant-index returns n^2; Drude evaluates the closed form.
pub fn permittivity_at(material: &Material, wavelength_nm: f64) -> Result<Permittivity> {
    match material {
        Material::ConstantIndex { n } => Ok(Permittivity::new(n * n, 0.0)),
        Material::Tabulated {
            wavelength_nm: wl,
            eps,
            ..
        } => {
            let min = wl[0];
            let max = wl[wl.len() - 1];
            if wavelength_nm < min || wavelength_nm > max {
                return Err(Error::WavelengthOutOfRange {
                    wavelength_nm,
                    min_nm: min,
                    max_nm: max,
                });
            }
            let idx = match wl.binary_search_by(|w| w.partial_cmp(&wavelength_nm).unwrap()) {
                Ok(i) => return Ok(eps[i]),
                Err(i) => i - 1,
            };
            let t = (wavelength_nm - wl[idx]) / (wl[idx + 1] - wl[idx]);
            Ok(Permittivity::new(
                eps[idx].re + t * (eps[idx + 1].re - eps[idx].re),
                eps[idx].im + t * (eps[idx + 1].im - eps[idx].im),
            ))
        }
        Material::Drude {
            eps_inf,
            plasma_wavelength_nm,
            damping_s_inv,
        } => {
            let omega = 2.0 * std::f64::consts::PI * C_M_PER_S / (wavelength_nm * 1e-9);
            let omega_p = 2.0 * std::f64::consts::PI * C_M_PER_S / (plasma_wavelength_nm * 1e-9);
            let eps = Complex64::new(*eps_inf, 0.0)
                - omega_p * omega_p / (Complex64::new(omega, 0.0) * Complex64::new(omega, *damping_s_inv));
            Ok(Permittivity::new(eps.re, eps.im))
        }
    }
}

/// Parses a `wavelength_nm, eps_re, eps_im` CSV with a mandatory header row.
pub fn parse_material_csv(name: &str, text: &str) -> Result<Material> {
    let mut wavelength_nm = Vec::new();
    let mut eps = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.to_lowercase().replace(' ', "").starts_with("wavelength_nm,") => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `wavelength_nm, eps_re, eps_im`".into(),
            })
        }
    }
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("bad number `{s}`: {e}"),
            })
        };
        let wl = parse(cols[0])?;
        if let Some(&last) = wavelength_nm.last() {
            if wl <= last {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("wavelengths must be strictly increasing ({last} then {wl})"),
                });
            }
        }
        wavelength_nm.push(wl);
        eps.push(Permittivity::new(parse(cols[1])?, parse(cols[2])?));
    }
    if wavelength_nm.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "table needs at least two rows".into(),
        });
    }
    Ok(Material::Tabulated {
        name: name.to_string(),
        wavelength_nm,
        eps,
    })
}

/// A homogeneous film of finite thickness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub material: Material,
    pub thickness_nm: f64,
}

impl Layer {
    pub fn new(material: Material, thickness_nm: f64) -> Result<Self> {
        if !(thickness_nm > 0.0) || !thickness_nm.is_finite() {
            return Err(Error::Validation(format!(
                "layer thickness must be finite and positive, got {thickness_nm}"
            )));
        }
        Ok(Layer {
            material,
            thickness_nm,
        })
    }
}

/// Planar layered environment of the emitter, split into the half-stacks
/// above and below the emitter plane.
///
/// `lower_layers` and `upper_layers` are ordered starting from the gap and
/// moving outward toward the respective half-space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanarStack {
    pub lower_halfspace: Material,
    pub lower_layers: Vec<Layer>,
    pub emitter_gap_material: Material,
    /// Distance from the emitter to the first lower interface, nm.
    pub d_lower_nm: f64,
    /// Distance from the emitter to the first upper interface, nm.
    pub d_upper_nm: f64,
    pub upper_layers: Vec<Layer>,
    pub upper_halfspace: Material,
    pub wavelength_nm: f64,
}

impl PlanarStack {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_lower_nm > 0.0) || !(self.d_upper_nm > 0.0) {
            return Err(Error::Validation(format!(
                "emitter must sit strictly inside the gap: d_lower = {}, d_upper = {}",
                self.d_lower_nm, self.d_upper_nm
            )));
        }
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::Validation(format!(
                "wavelength must be positive, got {}",
                self.wavelength_nm
            )));
        }
        Ok(())
    }

    /// Homogeneous environment of the given material; the trivial baseline.
    pub fn homogeneous(material: Material, d_nm: f64, wavelength_nm: f64) -> Self {
        PlanarStack {
            lower_halfspace: material.clone(),
            lower_layers: vec![],
            emitter_gap_material: material.clone(),
            d_lower_nm: d_nm,
            d_upper_nm: d_nm,
            upper_layers: vec![],
            upper_halfspace: material,
            wavelength_nm,
        }
    }

    /// Same stack upside down (emitter distances swapped accordingly).
    pub fn flipped(&self) -> Self {
        PlanarStack {
            lower_halfspace: self.upper_halfspace.clone(),
            lower_layers: self.upper_layers.clone(),
            emitter_gap_material: self.emitter_gap_material.clone(),
            d_lower_nm: self.d_upper_nm,
            d_upper_nm: self.d_lower_nm,
            upper_layers: self.lower_layers.clone(),
            upper_halfspace: self.lower_halfspace.clone(),
            wavelength_nm: self.wavelength_nm,
        }
    }
}

/// Patch-antenna geometry parameters (the infinite-disk planar limit plus
/// the disk diameter used by the cavity and far-field models).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AntennaGeometry {
    pub disk_diameter_nm: f64,
    pub disk_thickness_nm: f64,
    pub spacer_thickness_nm: f64,
    pub bottom_gold_thickness_nm: f64,
    /// Emitter height above the bottom gold surface, nm.
    pub emitter_height_nm: f64,
    pub emission_wavelength_nm: f64,
}

impl Default for AntennaGeometry {
    fn default() -> Self {
        AntennaGeometry {
            disk_diameter_nm: 1600.0,
            disk_thickness_nm: 20.0,
            spacer_thickness_nm: 30.0,
            bottom_gold_thickness_nm: 200.0,
            emitter_height_nm: 15.0,
            emission_wavelength_nm: 630.0,
        }
    }
}

impl AntennaGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.disk_diameter_nm > 0.0) {
            return Err(Error::Validation(format!(
                "disk_diameter_nm must be positive, got {}",
                self.disk_diameter_nm
            )));
        }
        if !(self.emitter_height_nm > 0.0 && self.emitter_height_nm < self.spacer_thickness_nm) {
            return Err(Error::Validation(format!(
                "emitter_height_nm must satisfy 0 < h < spacer_thickness ({} vs {})",
                self.emitter_height_nm, self.spacer_thickness_nm
            )));
        }
        for (name, v) in [
            ("disk_thickness_nm", self.disk_thickness_nm),
            ("spacer_thickness_nm", self.spacer_thickness_nm),
            ("bottom_gold_thickness_nm", self.bottom_gold_thickness_nm),
            ("emission_wavelength_nm", self.emission_wavelength_nm),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Infinite-patch planar stack for a given antenna geometry:
/// silicon / 200 nm gold / silica gap with the emitter inside / 20 nm gold / air.
pub fn build_patch_stack(geom: &AntennaGeometry) -> Result<PlanarStack> {
    geom.validate()?;
    Ok(PlanarStack {
        lower_halfspace: Material::silicon(),
        lower_layers: vec![Layer::new(Material::gold(), geom.bottom_gold_thickness_nm)?],
        emitter_gap_material: Material::silica(),
        d_lower_nm: geom.emitter_height_nm,
        d_upper_nm: geom.spacer_thickness_nm - geom.emitter_height_nm,
        upper_layers: vec![Layer::new(Material::gold(), geom.disk_thickness_nm)?],
        upper_halfspace: Material::air(),
        wavelength_nm: geom.emission_wavelength_nm,
    })
}
