//! Plane-wave decomposition of dipole emission inside the planar stack:
//! half-stack reflection coefficients, the dissipation spectrum dF/du over
//! the normalized in-plane wavevector u = k_rho / (k0 n_gap), total planar
//! Purcell factors, and the photon / plasmon / quenching channel split.
//!
//! Normalization baseline is the homogeneous gap medium (bulk silica for the
//! paper's stack), so the homogeneous spectrum integrates to exactly 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap_plasmon::{solve_gap_mode, GapModeConfig};
use crate::materials::{permittivity_at, Layer, Material, PlanarStack};
use crate::quad::{integrate, QuadResult};

/// Orientation of the emitter dipole relative to the stack plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DipoleOrientation {
    /// Dipole along the stack normal (z).
    Perp,
    /// Dipole in the stack plane.
    Parallel,
}

/// Plane-wave polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    S,
    P,
}

/// One half of the emitter's environment: the gap medium it is embedded in,
/// the finite layers ordered from the gap outward, and the terminating
/// half-space.
#[derive(Debug, Clone)]
pub struct HalfStack {
    pub gap: Material,
    pub layers: Vec<Layer>,
    pub halfspace: Material,
}

impl PlanarStack {
    pub fn lower_half(&self) -> HalfStack {
        HalfStack {
            gap: self.emitter_gap_material.clone(),
            layers: self.lower_layers.clone(),
            halfspace: self.lower_halfspace.clone(),
        }
    }

    pub fn upper_half(&self) -> HalfStack {
        HalfStack {
            gap: self.emitter_gap_material.clone(),
            layers: self.upper_layers.clone(),
            halfspace: self.upper_halfspace.clone(),
        }
    }
}

/// Half-stack with all permittivities resolved at one wavelength.
#[derive(Debug, Clone)]
struct ResolvedHalf {
    eps_gap: Complex64,
    /// (eps, thickness_nm) per finite layer, gap side first.
    films: Vec<(Complex64, f64)>,
    eps_out: Complex64,
}

fn resolve_half(half: &HalfStack, wavelength_nm: f64) -> Result<ResolvedHalf> {
    let films = half
        .layers
        .iter()
        .map(|l| {
            Ok((
                permittivity_at(&l.material, wavelength_nm)?.as_complex(),
                l.thickness_nm,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResolvedHalf {
        eps_gap: permittivity_at(&half.gap, wavelength_nm)?.as_complex(),
        films,
        eps_out: permittivity_at(&half.halfspace, wavelength_nm)?.as_complex(),
    })
}

/// Normal wavevector component in a medium of permittivity `eps` at in-plane
/// wavevector u (normalized to k0 n_gap). Principal branch: im(kz) >= 0 for
/// passive media, which makes evanescent phases decay.
fn kz(eps: Complex64, u: f64, k0: f64, eps_gap_re: f64) -> Complex64 {
    (eps - eps_gap_re * u * u).sqrt() * k0
}

/// Fresnel amplitude reflection for the interface a -> b.
///
/// Convention: both polarizations reduce to (n_a - n_b)/(n_a + n_b) at
/// normal incidence.
fn fresnel(
    pol: Polarization,
    eps_a: Complex64,
    kz_a: Complex64,
    eps_b: Complex64,
    kz_b: Complex64,
) -> Complex64 {
    match pol {
        Polarization::S => (kz_a - kz_b) / (kz_a + kz_b),
        Polarization::P => (eps_a * kz_b - eps_b * kz_a) / (eps_a * kz_b + eps_b * kz_a),
    }
}

fn reflection_resolved(half: &ResolvedHalf, pol: Polarization, u: f64, k0: f64) -> Complex64 {
    let eps_gap_re = half.eps_gap.re;
    // Media chain: gap, films..., half-space.
    let mut eps_chain = Vec::with_capacity(half.films.len() + 2);
    eps_chain.push(half.eps_gap);
    for &(e, _) in &half.films {
        eps_chain.push(e);
    }
    eps_chain.push(half.eps_out);
    let kzs: Vec<Complex64> = eps_chain
        .iter()
        .map(|&e| kz(e, u, k0, eps_gap_re))
        .collect();
    let n = half.films.len();
    // Backward recursion from the outermost interface; evanescent phase
    // factors have |exp| <= 1 so the recursion never overflows.
    let mut r = fresnel(pol, eps_chain[n], kzs[n], eps_chain[n + 1], kzs[n + 1]);
    for j in (0..n).rev() {
        let d = half.films[j].1;
        let phase = (Complex64::i() * 2.0 * kzs[j + 1] * d).exp();
        let rj = fresnel(pol, eps_chain[j], kzs[j], eps_chain[j + 1], kzs[j + 1]);
        r = (rj + r * phase) / (Complex64::new(1.0, 0.0) + rj * r * phase);
    }
    r
}

/// Amplitude reflection of a plane wave launched from the gap medium toward
/// one half-stack, including all multilayer interference. Evanescent u > 1
/// is handled through the im(kz) >= 0 branch.
pub fn half_stack_reflection(
    half: &HalfStack,
    pol: Polarization,
    u: f64,
    wavelength_nm: f64,
) -> Result<Complex64> {
    if u < 0.0 {
        return Err(Error::Validation(format!("u must be >= 0, got {u}")));
    }
    let resolved = resolve_half(half, wavelength_nm)?;
    let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;
    Ok(reflection_resolved(&resolved, pol, u, k0))
}

/// Dissipation spectrum dF/du on a user grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissipationSpectrum {
    pub u_grid: Vec<f64>,
    pub density: Vec<f64>,
    pub orientation: DipoleOrientation,
}

/// Photon / plasmon / quenching split of the total decay rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelSplit {
    pub photon_fraction: f64,
    pub plasmon_fraction: f64,
    pub quench_fraction: f64,
    pub total_purcell: f64,
}

/// Partition boundaries for [`decay_channels`], in units of u.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelPartition {
    pub u_photon_max: f64,
    pub u_plasmon_max: f64,
}

/// Numerical controls for the planar integrals.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanarConfig {
    /// Default upper integration limit in u; extended automatically until
    /// the evanescent tail bound falls below `tail_eps`.
    pub u_max: f64,
    /// Tail cutoff: integration stops once exp(-2 k0 n_gap sqrt(u^2-1) d_min)
    /// drops below this.
    pub tail_eps: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for PlanarConfig {
    fn default() -> Self {
        PlanarConfig {
            u_max: 50.0,
            tail_eps: 1e-12,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
        }
    }
}

/// Resolved evaluation context for one stack at its wavelength.
pub struct StackContext {
    k0: f64,
    n_gap: f64,
    lower: ResolvedHalf,
    upper: ResolvedHalf,
    d_lower: f64,
    d_upper: f64,
    /// Gap-plasmon pole location in u with a width estimate, when the stack
    /// has a metal next to the gap on at least one side.
    pole: Option<(f64, f64)>,
    /// Critical angles of every medium in units of u.
    critical_u: Vec<f64>,
}

impl StackContext {
    pub fn new(stack: &PlanarStack) -> Result<Self> {
        stack.validate()?;
        let wl = stack.wavelength_nm;
        let lower = resolve_half(&stack.lower_half(), wl)?;
        let upper = resolve_half(&stack.upper_half(), wl)?;
        let eps_gap = lower.eps_gap;
        if eps_gap.im.abs() > 1e-9 * eps_gap.re.abs() {
            return Err(Error::Validation(
                "gap medium must be lossless for the rate normalization".into(),
            ));
        }
        let n_gap = eps_gap.re.sqrt();
        let k0 = 2.0 * std::f64::consts::PI / wl;

        let mut critical_u = Vec::new();
        for half in [&lower, &upper] {
            for &(e, _) in half.films.iter().chain(std::iter::once(&(half.eps_out, 0.0))) {
                let n = e.sqrt().re;
                if n > 1e-6 {
                    critical_u.push(n / n_gap);
                }
            }
        }

        // Pole hint from the symmetric-gap dispersion, using the metal
        // adjacent to the gap (lower side preferred) and the full gap width.
        let gap_t = stack.d_lower_nm + stack.d_upper_nm;
        let adjacent_metal = |half: &ResolvedHalf| -> Option<Complex64> {
            let e = half.films.first().map(|f| f.0).unwrap_or(half.eps_out);
            (e.re < 0.0).then_some(e)
        };
        let pole = adjacent_metal(&lower)
            .or_else(|| adjacent_metal(&upper))
            .and_then(|eps_m| {
                solve_gap_mode_raw(wl, gap_t, eps_m, eps_gap.re).ok().map(|n_eff| {
                    let u_pole = n_eff.re / n_gap;
                    let width = (n_eff.im / n_gap).max(1e-4);
                    (u_pole, width)
                })
            });

        Ok(StackContext {
            k0,
            n_gap,
            lower,
            upper,
            d_lower: stack.d_lower_nm,
            d_upper: stack.d_upper_nm,
            pole,
            critical_u,
        })
    }

    /// u beyond which the evanescent tail is below `tail_eps` on both sides.
    fn u_tail_bound(&self, tail_eps: f64) -> f64 {
        let d_min = self.d_lower.min(self.d_upper);
        let x = -tail_eps.ln() / (2.0 * self.k0 * self.n_gap * d_min);
        (1.0 + x * x).sqrt()
    }

    /// Pointwise dissipation density dF/du (nudged off the u = 1 removable
    /// point so it is always finite).
    pub fn density(&self, orientation: DipoleOrientation, u: f64) -> f64 {
        let u = if (u - 1.0).abs() < 1e-9 {
            if u <= 1.0 {
                1.0 - 1e-9
            } else {
                1.0 + 1e-9
            }
        } else {
            u
        };
        if u <= 0.0 {
            return 0.0;
        }
        let one = Complex64::new(1.0, 0.0);
        // l = kz_gap / (k0 n_gap); +i sqrt(u^2-1) above the light line.
        let l = Complex64::new(1.0 - u * u, 0.0).sqrt();
        let kz1 = self.k0 * self.n_gap * l;
        let ph_lo = (Complex64::i() * 2.0 * kz1 * self.d_lower).exp();
        let ph_up = (Complex64::i() * 2.0 * kz1 * self.d_upper).exp();
        // The cavity formulas take the p reflection in the convention where a
        // perfect mirror has r_p = +1, i.e. the negative of `fresnel`'s.
        let rp_lo = -reflection_resolved(&self.lower, Polarization::P, u, self.k0);
        let rp_up = -reflection_resolved(&self.upper, Polarization::P, u, self.k0);
        let ap_lo = rp_lo * ph_lo;
        let ap_up = rp_up * ph_up;
        let denom_p = one - ap_lo * ap_up;
        match orientation {
            DipoleOrientation::Perp => {
                let bracket = (one + ap_up) * (one + ap_lo) / denom_p;
                1.5 * (Complex64::new(u * u * u, 0.0) / l * bracket).re
            }
            DipoleOrientation::Parallel => {
                let rs_lo = reflection_resolved(&self.lower, Polarization::S, u, self.k0);
                let rs_up = reflection_resolved(&self.upper, Polarization::S, u, self.k0);
                let as_lo = rs_lo * ph_lo;
                let as_up = rs_up * ph_up;
                let s_term = (one + as_up) * (one + as_lo) / (one - as_lo * as_up);
                let p_term = (one + (-ap_up)) * (one + (-ap_lo)) / denom_p * (1.0 - u * u);
                0.75 * (Complex64::new(u, 0.0) / l * (s_term + p_term)).re
            }
        }
    }

    /// Integral of dF/du over [u_lo, u_hi] using singularity-removing
    /// substitutions (u = sin s below the light line, u = cosh s above).
    fn integrate_band(
        &self,
        orientation: DipoleOrientation,
        u_lo: f64,
        u_hi: f64,
        cfg: &PlanarConfig,
    ) -> Result<QuadResult> {
        assert!(u_hi >= u_lo && u_lo >= 0.0);
        let mut total = 0.0;
        let mut err = 0.0;
        let mut evals = 0;

        let mut inner_breaks: Vec<f64> = self.critical_u.clone();
        if let Some((u_p, w)) = self.pole {
            for m in [-5.0, -1.0, 0.0, 1.0, 5.0] {
                inner_breaks.push(u_p + m * w);
            }
        }
        inner_breaks.push(self.u_tail_bound(cfg.tail_eps));

        // Below the light line: u = sin s.
        let a = u_lo.min(1.0);
        let b = u_hi.min(1.0);
        if b > a {
            let breaks: Vec<f64> = inner_breaks
                .iter()
                .filter(|&&x| x > a && x < b)
                .map(|&x| x.asin())
                .collect();
            let r = integrate(
                |s| self.density(orientation, s.sin()) * s.cos(),
                a.asin(),
                b.asin(),
                &breaks,
                cfg.abs_tol,
                cfg.rel_tol,
            )?;
            total += r.value;
            err += r.error_estimate;
            evals += r.evaluations;
        }
        // Above the light line: u = cosh s.
        let a = u_lo.max(1.0);
        let b = u_hi.max(1.0);
        if b > a {
            let breaks: Vec<f64> = inner_breaks
                .iter()
                .filter(|&&x| x > a && x < b)
                .map(|&x| x.acosh())
                .collect();
            let r = integrate(
                |s| self.density(orientation, s.cosh()) * s.sinh(),
                a.acosh(),
                b.acosh(),
                &breaks,
                cfg.abs_tol,
                cfg.rel_tol,
            )?;
            total += r.value;
            err += r.error_estimate;
            evals += r.evaluations;
        }
        Ok(QuadResult {
            value: total,
            error_estimate: err,
            evaluations: evals,
        })
    }

    fn u_top(&self, cfg: &PlanarConfig) -> f64 {
        cfg.u_max.max(self.u_tail_bound(cfg.tail_eps)).max(2.0)
    }
}

/// Dissipation spectrum on an explicit u grid.
pub fn dissipation_spectrum(
    stack: &PlanarStack,
    orientation: DipoleOrientation,
    u_grid: &[f64],
) -> Result<DissipationSpectrum> {
    if u_grid.is_empty() || u_grid[0] < 0.0 {
        return Err(Error::Validation("u_grid must start at u >= 0".into()));
    }
    if u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("u_grid must be strictly increasing".into()));
    }
    let ctx = StackContext::new(stack)?;
    let density: Vec<f64> = u_grid.iter().map(|&u| ctx.density(orientation, u)).collect();
    if density.iter().any(|d| !d.is_finite()) {
        return Err(Error::Validation(
            "dissipation density evaluated non-finite; stack inputs are unphysical".into(),
        ));
    }
    Ok(DissipationSpectrum {
        u_grid: u_grid.to_vec(),
        density,
        orientation,
    })
}

/// Total planar Purcell factor with explicit numerical controls.
pub fn purcell_planar_cfg(
    stack: &PlanarStack,
    orientation: DipoleOrientation,
    cfg: &PlanarConfig,
) -> Result<QuadResult> {
    let ctx = StackContext::new(stack)?;
    ctx.integrate_band(orientation, 0.0, ctx.u_top(cfg), cfg)
}

/// Total planar Purcell factor, normalized to the homogeneous gap medium.
pub fn purcell_planar(stack: &PlanarStack, orientation: DipoleOrientation) -> Result<f64> {
    Ok(purcell_planar_cfg(stack, orientation, &PlanarConfig::default())?.value)
}

impl ChannelPartition {
    /// Default partition: photons escape the top half-stack into its
    /// half-space; the plasmon band extends half a unit of u past the gap
    /// mode (or past the photon boundary when no gap mode exists).
    ///
    /// The gap-mode location is taken from the actual stack's dissipation
    /// peak rather than the symmetric-mirror dispersion root: a thin top
    /// mirror leaks into its cover half-space and shifts the true pole
    /// upward. The peak is searched on a cavity-symmetrized copy (emitter
    /// centered in the gap) so the partition depends only on the cavity,
    /// not on the emitter position.
    pub fn default_for(stack: &PlanarStack) -> Result<ChannelPartition> {
        let half_gap = 0.5 * (stack.d_lower_nm + stack.d_upper_nm);
        let mut centered = stack.clone();
        centered.d_lower_nm = half_gap;
        centered.d_upper_nm = half_gap;
        let ctx = StackContext::new(&centered)?;
        let n_top = ctx.upper.eps_out.sqrt().re;
        let u_photon_max = (n_top / ctx.n_gap).clamp(0.05, 1.0);
        let u_plasmon_max = match ctx.pole {
            Some((u_sym, _)) => {
                let u_hi = 1.6 * u_sym + 0.5;
                let n = ((u_hi - 1.0) / 2e-4).ceil() as usize;
                let mut best = (f64::NEG_INFINITY, u_sym);
                for i in 0..=n {
                    let u = 1.0 + (u_hi - 1.0) * i as f64 / n as f64;
                    let d = ctx.density(DipoleOrientation::Perp, u);
                    if d > best.0 {
                        best = (d, u);
                    }
                }
                best.1 + 0.5
            }
            None => u_photon_max + 0.5,
        };
        Ok(ChannelPartition {
            u_photon_max,
            u_plasmon_max,
        })
    }
}

/// Splits the total decay rate into photon, plasmon and quenching fractions.
pub fn decay_channels(
    stack: &PlanarStack,
    orientation: DipoleOrientation,
    partition: ChannelPartition,
) -> Result<ChannelSplit> {
    let cfg = PlanarConfig::default();
    let ctx = StackContext::new(stack)?;
    let u_top = ctx.u_top(&cfg);
    let ChannelPartition {
        u_photon_max,
        u_plasmon_max,
    } = partition;
    if !(0.0 < u_photon_max && u_photon_max < u_plasmon_max && u_plasmon_max < u_top) {
        return Err(Error::Validation(format!(
            "channel partition must satisfy 0 < u_photon_max < u_plasmon_max < {u_top}, \
             got ({u_photon_max}, {u_plasmon_max})"
        )));
    }
    let photon = ctx.integrate_band(orientation, 0.0, u_photon_max, &cfg)?.value;
    let plasmon = ctx
        .integrate_band(orientation, u_photon_max, u_plasmon_max, &cfg)?
        .value;
    let quench = ctx.integrate_band(orientation, u_plasmon_max, u_top, &cfg)?.value;
    let total = photon + plasmon + quench;
    Ok(ChannelSplit {
        photon_fraction: photon / total,
        plasmon_fraction: plasmon / total,
        quench_fraction: quench / total,
        total_purcell: total,
    })
}

/// Symmetric-gap dispersion solve on raw permittivities; thin wrapper kept
/// here so the pole hint does not need `Material` values.
fn solve_gap_mode_raw(
    wavelength_nm: f64,
    gap_thickness_nm: f64,
    eps_metal: Complex64,
    eps_gap: f64,
) -> Result<Complex64> {
    solve_gap_mode(
        wavelength_nm,
        gap_thickness_nm,
        eps_metal,
        eps_gap,
        &GapModeConfig::default(),
    )
    .map(|m| m.n_eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{build_patch_stack, AntennaGeometry};
    use approx::assert_relative_eq;

    fn silica_stack(d_nm: f64) -> PlanarStack {
        PlanarStack::homogeneous(Material::silica(), d_nm, 630.0)
    }

    #[test]
    fn zero_contrast_reflection_vanishes() {
        let half = HalfStack {
            gap: Material::silica(),
            layers: vec![Layer::new(Material::silica(), 100.0).unwrap()],
            halfspace: Material::silica(),
        };
        for u in [0.0, 0.5, 0.99, 1.5, 10.0] {
            for pol in [Polarization::S, Polarization::P] {
                let r = half_stack_reflection(&half, pol, u, 630.0).unwrap();
                assert!(r.norm() < 1e-14, "r = {r} at u = {u}");
            }
        }
    }

    #[test]
    fn normal_incidence_fresnel_against_gold() {
        let half = HalfStack {
            gap: Material::silica(),
            layers: vec![],
            halfspace: Material::gold(),
        };
        let n1 = Complex64::new(1.5, 0.0);
        let n2 = permittivity_at(&Material::gold(), 630.0)
            .unwrap()
            .as_complex()
            .sqrt();
        let expected = (n1 - n2) / (n1 + n2);
        for pol in [Polarization::S, Polarization::P] {
            let r = half_stack_reflection(&half, pol, 0.0, 630.0).unwrap();
            assert_relative_eq!(r.re, expected.re, epsilon = 1e-12);
            assert_relative_eq!(r.im, expected.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn thin_gold_film_matches_airy_formula() {
        // 20 nm gold film between silica (gap side) and air, normal incidence.
        let half = HalfStack {
            gap: Material::silica(),
            layers: vec![Layer::new(Material::gold(), 20.0).unwrap()],
            halfspace: Material::air(),
        };
        let wl = 630.0;
        let k0 = 2.0 * std::f64::consts::PI / wl;
        let n1 = Complex64::new(1.5, 0.0);
        let n2 = permittivity_at(&Material::gold(), wl).unwrap().as_complex().sqrt();
        let n3 = Complex64::new(1.0, 0.0);
        let r12 = (n1 - n2) / (n1 + n2);
        let r23 = (n2 - n3) / (n2 + n3);
        let phase = (Complex64::i() * 2.0 * n2 * k0 * 20.0).exp();
        let airy = (r12 + r23 * phase) / (Complex64::new(1.0, 0.0) + r12 * r23 * phase);
        for pol in [Polarization::S, Polarization::P] {
            let r = half_stack_reflection(&half, pol, 0.0, wl).unwrap();
            assert!(
                (r - airy).norm() / airy.norm() < 1e-10,
                "{pol:?}: {r} vs {airy}"
            );
        }
    }

    /// Independent transfer-matrix (field-matching) oracle for a two-film
    /// stack at oblique incidence, checked against the recursion.
    #[test]
    fn recursion_matches_matrix_product_oracle() {
        let wl = 630.0;
        let k0 = 2.0 * std::f64::consts::PI / wl;
        let films = [
            (Complex64::new(4.0, 0.02), 80.0),
            (Complex64::new(-11.0, 1.2), 30.0),
        ];
        let eps_gap = Complex64::new(2.25, 0.0);
        let eps_out = Complex64::new(1.0, 0.0);
        let half = HalfStack {
            gap: Material::silica(),
            layers: vec![
                Layer::new(
                    Material::Tabulated {
                        name: "film1".into(),
                        wavelength_nm: vec![400.0, 800.0],
                        eps: vec![
                            crate::materials::Permittivity::new(4.0, 0.02),
                            crate::materials::Permittivity::new(4.0, 0.02),
                        ],
                    },
                    80.0,
                )
                .unwrap(),
                Layer::new(
                    Material::Tabulated {
                        name: "film2".into(),
                        wavelength_nm: vec![400.0, 800.0],
                        eps: vec![
                            crate::materials::Permittivity::new(-11.0, 1.2),
                            crate::materials::Permittivity::new(-11.0, 1.2),
                        ],
                    },
                    30.0,
                )
                .unwrap(),
            ],
            halfspace: Material::air(),
        };
        for (pol, is_p) in [(Polarization::S, false), (Polarization::P, true)] {
            for u in [0.0, 0.4, 0.9] {
                // Matrix oracle: M = I01 P1 I12 P2 I23 with q-admittances;
                // this formulation uses the opposite p sign, flipped at the end.
                let kzv = |e: Complex64| (e - eps_gap.re * u * u).sqrt() * k0;
                let q = |e: Complex64| if is_p { kzv(e) / e } else { kzv(e) };
                let eps_chain = [eps_gap, films[0].0, films[1].0, eps_out];
                let qs: Vec<Complex64> = eps_chain.iter().map(|&e| q(e)).collect();
                let mut m = [
                    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
                ];
                let mat_mul = |a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]| {
                    let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
                        }
                    }
                    c
                };
                for j in 0..3 {
                    let rj = (qs[j] - qs[j + 1]) / (qs[j] + qs[j + 1]);
                    m = mat_mul(m, [[Complex64::new(1.0, 0.0), rj], [rj, Complex64::new(1.0, 0.0)]]);
                    if j < 2 {
                        let ph = Complex64::i() * kzv(eps_chain[j + 1]) * films[j].1;
                        m = mat_mul(
                            m,
                            [
                                [(-ph).exp(), Complex64::new(0.0, 0.0)],
                                [Complex64::new(0.0, 0.0), ph.exp()],
                            ],
                        );
                    }
                }
                let mut r_oracle = m[1][0] / m[0][0];
                if is_p {
                    r_oracle = -r_oracle;
                }
                let r = half_stack_reflection(&half, pol, u, wl).unwrap();
                assert!(
                    (r - r_oracle).norm() < 1e-12,
                    "{pol:?} u={u}: {r} vs {r_oracle}"
                );
            }
        }
    }

    #[test]
    fn homogeneous_spectrum_matches_free_space_form() {
        let ctx = StackContext::new(&silica_stack(100.0)).unwrap();
        for u in [0.1f64, 0.3, 0.6, 0.9] {
            let expected = 1.5 * u.powi(3) / (1.0 - u * u).sqrt();
            assert_relative_eq!(
                ctx.density(DipoleOrientation::Perp, u),
                expected,
                max_relative = 1e-12
            );
        }
        // Above the light line the homogeneous density vanishes.
        assert!(ctx.density(DipoleOrientation::Perp, 1.7).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_purcell_is_unity() {
        for orientation in [DipoleOrientation::Perp, DipoleOrientation::Parallel] {
            let f = purcell_planar(&silica_stack(123.0), orientation).unwrap();
            assert_relative_eq!(f, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn far_gold_mirror_returns_to_unity() {
        let wl = 630.0;
        let stack = PlanarStack {
            lower_halfspace: Material::gold(),
            lower_layers: vec![],
            emitter_gap_material: Material::silica(),
            d_lower_nm: 10.0 * wl,
            d_upper_nm: 10.0 * wl,
            upper_layers: vec![],
            upper_halfspace: Material::silica(),
            wavelength_nm: wl,
        };
        let f = purcell_planar(&stack, DipoleOrientation::Perp).unwrap();
        assert!((f - 1.0).abs() < 0.02, "F = {f}");
    }

    #[test]
    fn flipping_the_stack_preserves_purcell() {
        let geom = AntennaGeometry {
            emitter_height_nm: 10.0,
            ..AntennaGeometry::default()
        };
        let stack = build_patch_stack(&geom).unwrap();
        for orientation in [DipoleOrientation::Perp, DipoleOrientation::Parallel] {
            let f = purcell_planar(&stack, orientation).unwrap();
            let f_flipped = purcell_planar(&stack.flipped(), orientation).unwrap();
            assert_relative_eq!(f, f_flipped, max_relative = 1e-8);
        }
    }

    #[test]
    fn spectrum_grid_requires_monotone_u() {
        let stack = silica_stack(50.0);
        let err = dissipation_spectrum(&stack, DipoleOrientation::Perp, &[0.5, 0.4]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn spectrum_is_finite_across_the_light_line() {
        let stack = build_patch_stack(&AntennaGeometry::default()).unwrap();
        let grid: Vec<f64> = (0..200).map(|i| 0.9 + 0.001 * i as f64).collect();
        let spec = dissipation_spectrum(&stack, DipoleOrientation::Perp, &grid).unwrap();
        assert!(spec.density.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn spectrum_peak_tracks_gap_mode_root() {
        // Symmetric semi-infinite mirrors: the dissipation peak must sit at
        // the dispersion root of the symmetric gap mode.
        let sym = PlanarStack {
            lower_halfspace: Material::gold(),
            lower_layers: vec![],
            emitter_gap_material: Material::silica(),
            d_lower_nm: 15.0,
            d_upper_nm: 15.0,
            upper_layers: vec![],
            upper_halfspace: Material::gold(),
            wavelength_nm: 630.0,
        };
        let mode = crate::gap_plasmon::solve_gap_mode_materials(
            630.0,
            30.0,
            &Material::gold(),
            &Material::silica(),
        )
        .unwrap();
        let u_root = mode.n_eff.re / 1.5;
        let ctx = StackContext::new(&sym).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut u = 1.2;
        while u < 3.0 {
            let d = ctx.density(DipoleOrientation::Perp, u);
            if d > best.0 {
                best = (d, u);
            }
            u += 5e-4;
        }
        assert!(
            (best.1 - u_root).abs() < 0.005 * u_root,
            "peak {} vs root {u_root}",
            best.1
        );

        // Finite 20 nm top mirror leaks into the air side and shifts the
        // actual pole upward; it must stay pronounced and within 25%.
        let stack = build_patch_stack(&AntennaGeometry::default()).unwrap();
        let ctx = StackContext::new(&stack).unwrap();
        let mut best_patch = (f64::NEG_INFINITY, 0.0);
        let mut u = 1.2;
        while u < 3.0 {
            let d = ctx.density(DipoleOrientation::Perp, u);
            if d > best_patch.0 {
                best_patch = (d, u);
            }
            u += 5e-4;
        }
        assert!((best_patch.1 - u_root).abs() < 0.25 * u_root);
        assert!(best_patch.0 > 10.0 * ctx.density(DipoleOrientation::Perp, 1.4));
    }

    #[test]
    fn patch_stack_quench_fractions_shrink_with_distance() {
        let part = ChannelPartition::default_for(
            &build_patch_stack(&AntennaGeometry::default()).unwrap(),
        )
        .unwrap();
        let mut prev = 1.0;
        for h in [1.0, 2.5, 4.0, 5.5, 7.0, 8.5, 10.0, 11.5, 13.0, 14.5, 15.0] {
            let geom = AntennaGeometry {
                emitter_height_nm: h,
                ..AntennaGeometry::default()
            };
            let stack = build_patch_stack(&geom).unwrap();
            let split = decay_channels(&stack, DipoleOrientation::Perp, part).unwrap();
            assert!(
                split.quench_fraction < prev,
                "quench fraction not decreasing at h = {h}"
            );
            prev = split.quench_fraction;
        }
    }

    #[test]
    fn channel_fractions_partition_the_total() {
        let stack = build_patch_stack(&AntennaGeometry::default()).unwrap();
        let part = ChannelPartition::default_for(&stack).unwrap();
        let split = decay_channels(&stack, DipoleOrientation::Perp, part).unwrap();
        let sum = split.photon_fraction + split.plasmon_fraction + split.quench_fraction;
        assert_relative_eq!(sum, 1.0, epsilon = 1e-6);
        assert!(split.total_purcell > 10.0);
    }

    #[test]
    fn homogeneous_channels_are_all_photon() {
        let stack = silica_stack(80.0);
        let part = ChannelPartition::default_for(&stack).unwrap();
        let split = decay_channels(&stack, DipoleOrientation::Perp, part).unwrap();
        assert_relative_eq!(split.photon_fraction, 1.0, epsilon = 1e-6);
        assert!(split.plasmon_fraction.abs() < 1e-6);
        assert!(split.quench_fraction.abs() < 1e-6);
    }

    #[test]
    fn channel_partition_ordering_is_validated() {
        let stack = silica_stack(80.0);
        let err = decay_channels(
            &stack,
            DipoleOrientation::Perp,
            ChannelPartition {
                u_photon_max: 1.5,
                u_plasmon_max: 1.0,
            },
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
