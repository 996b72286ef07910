//! Frozen numerical anchors, each re-derived by an independent oracle that
//! runs alongside it: a fine-grid trapezoid integration for the planar
//! Purcell factor and a winding-number-certified zoom-grid scan for the gap
//! mode. The frozen constants guard against silent regressions; the oracles
//! guard the constants.

use num_complex::Complex64;
use patch_antenna::{
    build_patch_stack, gap_mode_for_geometry, permittivity_at, purcell_planar,
    spp_single_interface, AntennaGeometry, DipoleOrientation, Material, StackContext,
};

/// Planar perpendicular Purcell factor of the default stack, frozen from
/// the trapezoid oracle below.
const PLANAR_F_PERP_DEFAULT: f64 = 53.21816273406;

/// Lowest symmetric gap mode of 30 nm gold/silica/gold at 630 nm, frozen
/// from the damped-Newton solve and confirmed by the zoom-grid oracle.
const GAP_MODE_N_EFF: (f64, f64) = (2.869054892738548, 9.976071939224232e-2);

/// Single-interface gold/silica index at 630 nm, frozen from the closed
/// form with the bundled gold table.
const SPP_N_EFF: (f64, f64) = (1.668213228010585, 2.170186440435120e-2);

fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = 0.5 * (f(a) + f(b));
    for i in 1..n {
        sum += f(a + i as f64 * h);
    }
    sum * h
}

#[test]
fn planar_purcell_matches_frozen_trapezoid_oracle() {
    let stack = build_patch_stack(&AntennaGeometry::default()).unwrap();
    let ctx = StackContext::new(&stack).unwrap();
    // 10^6-point trapezoid in the substituted variables (u = sin s below the
    // light line, u = cosh s above, up to u = 50).
    let below = trapezoid(
        |s| ctx.density(DipoleOrientation::Perp, s.sin()) * s.cos(),
        0.0,
        std::f64::consts::FRAC_PI_2,
        300_000,
    );
    let above = trapezoid(
        |s| ctx.density(DipoleOrientation::Perp, s.cosh()) * s.sinh(),
        0.0,
        50.0f64.acosh(),
        700_000,
    );
    let oracle = below + above;
    assert!(
        (oracle - PLANAR_F_PERP_DEFAULT).abs() < 1e-9 * PLANAR_F_PERP_DEFAULT,
        "oracle drifted: {oracle} vs {PLANAR_F_PERP_DEFAULT}"
    );
    let adaptive = purcell_planar(&stack, DipoleOrientation::Perp).unwrap();
    assert!(
        (adaptive - PLANAR_F_PERP_DEFAULT).abs() < 1e-6 * PLANAR_F_PERP_DEFAULT,
        "adaptive {adaptive} vs frozen {PLANAR_F_PERP_DEFAULT}"
    );
}

fn dispersion_norm(n: Complex64, tau: f64, eps_m: Complex64, eps_d: f64) -> f64 {
    let kd = (n * n - eps_d).sqrt();
    let km = (n * n - eps_m).sqrt();
    ((kd * tau).tanh() + eps_d * km / (eps_m * kd)).norm()
}

#[test]
fn gap_mode_matches_frozen_winding_oracle() {
    let eps_m = permittivity_at(&Material::gold(), 630.0).unwrap().as_complex();
    let eps_d = 2.25;
    let k0 = 2.0 * std::f64::consts::PI / 630.0;
    let tau = 0.5 * k0 * 30.0;
    let g = |n: Complex64| {
        let kd = (n * n - eps_d).sqrt();
        let km = (n * n - eps_m).sqrt();
        (kd * tau).tanh() + eps_d * km / (eps_m * kd)
    };

    // Argument principle on the search rectangle: exactly one zero inside.
    let (x0, x1, y0, y1) = (1.55, 4.0, 1e-3, 0.8);
    let mut winding = 0.0;
    let mut prev_arg = g(Complex64::new(x0, y0)).arg();
    let per_side = 4000;
    let corners = [
        (Complex64::new(x0, y0), Complex64::new(x1, y0)),
        (Complex64::new(x1, y0), Complex64::new(x1, y1)),
        (Complex64::new(x1, y1), Complex64::new(x0, y1)),
        (Complex64::new(x0, y1), Complex64::new(x0, y0)),
    ];
    for (a, b) in corners {
        for i in 1..=per_side {
            let z = a + (b - a) * (i as f64 / per_side as f64);
            let arg = g(z).arg();
            let mut d = arg - prev_arg;
            if d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            } else if d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            winding += d;
            prev_arg = arg;
        }
    }
    let turns = winding / (2.0 * std::f64::consts::PI);
    assert!(
        (turns - 1.0).abs() < 0.01,
        "expected exactly one root in the rectangle, winding = {turns}"
    );

    // Zoom-grid localization of that root.
    let (mut ax, mut bx, mut ay, mut by) = (x0, x1, y0, y1);
    for _ in 0..14 {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=32 {
            for j in 0..=32 {
                let x = ax + (bx - ax) * i as f64 / 32.0;
                let y = ay + (by - ay) * j as f64 / 32.0;
                let v = dispersion_norm(Complex64::new(x, y), tau, eps_m, eps_d);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        let dx = (bx - ax) / 8.0;
        let dy = (by - ay) / 8.0;
        ax = best.1 - dx;
        bx = best.1 + dx;
        ay = best.2 - dy;
        by = best.2 + dy;
    }
    let oracle = Complex64::new(0.5 * (ax + bx), 0.5 * (ay + by));
    let frozen = Complex64::new(GAP_MODE_N_EFF.0, GAP_MODE_N_EFF.1);
    assert!(
        (oracle - frozen).norm() < 1e-8,
        "oracle {oracle} vs frozen {frozen}"
    );

    let solved = gap_mode_for_geometry(&AntennaGeometry::default()).unwrap();
    assert!(
        (solved.n_eff - frozen).norm() < 1e-10,
        "solver {} vs frozen {frozen}",
        solved.n_eff
    );
    assert!(dispersion_norm(solved.n_eff, tau, eps_m, eps_d) < 1e-10);
}

#[test]
fn spp_index_matches_frozen_closed_form() {
    let eps_m = permittivity_at(&Material::gold(), 630.0).unwrap().as_complex();
    let n = spp_single_interface(eps_m, 2.25).unwrap();
    let frozen = Complex64::new(SPP_N_EFF.0, SPP_N_EFF.1);
    assert!((n - frozen).norm() < 1e-12, "{n} vs {frozen}");
}
