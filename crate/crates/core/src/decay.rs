//! Orientation statistics of quantum-dot decay rates in the antenna and the
//! resulting decay curves.
//!
//! A dot with intrinsic rate gamma_q (its rate in bulk silica) and c-axis at
//! angle theta from the stack normal decays at
//! Gamma = gamma_q/2 [F_perp sin^2(theta) + F_par (1 + cos^2(theta))],
//! the double-dipole average of the two orthogonal dipoles perpendicular to
//! the c-axis. Random isotropic orientation (density sin theta) plus a
//! Gaussian spread of intrinsic rates turn this into the rate density
//! pi(Gamma) and the decay curve I(t), its Laplace transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, integrate};

/// Decay enhancements for dipoles perpendicular / parallel to the disk plane.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PurcellPair {
    pub f_perp: f64,
    pub f_par: f64,
}

impl PurcellPair {
    pub fn new(f_perp: f64, f_par: f64) -> Result<Self> {
        if !(f_perp > 0.0 && f_par > 0.0) {
            return Err(Error::Validation(format!(
                "Purcell factors must be positive, got ({f_perp}, {f_par})"
            )));
        }
        if f_perp < f_par {
            return Err(Error::Validation(format!(
                "F_perp must be >= F_par, got ({f_perp}, {f_par})"
            )));
        }
        Ok(PurcellPair { f_perp, f_par })
    }

    /// Bulk reference: no enhancement for either dipole.
    pub fn bulk() -> Self {
        PurcellPair {
            f_perp: 1.0,
            f_par: 1.0,
        }
    }

    /// True when the conditional density collapses to a delta and callers
    /// must use the degenerate path.
    pub fn is_degenerate(&self) -> bool {
        self.f_perp - self.f_par <= 1e-9 * self.f_perp
    }
}

/// Gaussian ensemble of intrinsic rates in silica.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateEnsemble {
    /// Mean intrinsic rate, ns^-1.
    pub gamma_c: f64,
    /// Gaussian standard deviation, ns^-1.
    pub w_c: f64,
    /// Truncate the density to gamma_q > 0 and renormalize (default on).
    pub truncate_at_zero: bool,
}

impl RateEnsemble {
    pub fn new(gamma_c: f64, w_c: f64) -> Result<Self> {
        if !(gamma_c > 0.0) || w_c < 0.0 {
            return Err(Error::Validation(format!(
                "rate ensemble needs gamma_c > 0 and w_c >= 0, got ({gamma_c}, {w_c})"
            )));
        }
        Ok(RateEnsemble {
            gamma_c,
            w_c,
            truncate_at_zero: true,
        })
    }

    /// The patch-antenna experiments' silica reference values.
    pub fn paper_reference() -> Self {
        RateEnsemble {
            gamma_c: 0.055,
            w_c: 0.020,
            truncate_at_zero: true,
        }
    }

    pub fn is_delta(&self) -> bool {
        self.w_c <= 1e-9 * self.gamma_c
    }

    /// Effective support [lo, hi] of the density (+- 8 sigma, truncated).
    fn support(&self) -> (f64, f64) {
        let lo = (self.gamma_c - 8.0 * self.w_c).max(1e-4 * self.gamma_c * 1e-2);
        (lo, self.gamma_c + 8.0 * self.w_c)
    }
}

/// Model decay curve I(t) on a time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCurve {
    pub t_grid_ns: Vec<f64>,
    pub intensity: Vec<f64>,
    pub i0: f64,
}

/// Binned photon counts versus delay after the excitation pulse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayHistogram {
    /// Uniform bin start times, ns.
    pub bin_start_ns: Vec<f64>,
    pub counts: Vec<u64>,
    /// Repetition window, ns (400 ns at 2.5 MHz).
    pub window_ns: f64,
}

impl DecayHistogram {
    pub fn bin_width_ns(&self) -> f64 {
        self.bin_start_ns[1] - self.bin_start_ns[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_start_ns.len() < 2 || self.bin_start_ns.len() != self.counts.len() {
            return Err(Error::Validation(
                "histogram needs >= 2 bins and matching counts".into(),
            ));
        }
        let w = self.bin_width_ns();
        if !(w > 0.0) {
            return Err(Error::Validation("bin width must be positive".into()));
        }
        for pair in self.bin_start_ns.windows(2) {
            if ((pair[1] - pair[0]) - w).abs() > 1e-6 * w {
                return Err(Error::Validation(format!(
                    "bins must be uniform: width {} vs {}",
                    pair[1] - pair[0],
                    w
                )));
            }
        }
        Ok(())
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One Monte Carlo draw of a dot's orientation and rates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrientationSample {
    pub theta_rad: f64,
    pub gamma_q: f64,
    pub gamma: f64,
}

/// Decay rate of a dot with c-axis angle `theta_rad` and intrinsic rate
/// `gamma_q`, per the double-dipole orientation model.
pub fn gamma_of_theta(gamma_q: f64, theta_rad: f64, fp: &PurcellPair) -> f64 {
    let s = theta_rad.sin();
    let c = theta_rad.cos();
    0.5 * gamma_q * (fp.f_perp * s * s + fp.f_par * (1.0 + c * c))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Density of intrinsic rates: a Gaussian with mean gamma_c and standard
/// deviation w_c, truncated to gamma_q > 0 and renormalized when configured.
pub fn pi1(gamma_q: f64, ens: &RateEnsemble) -> Result<f64> {
    if ens.w_c == 0.0 {
        return Err(Error::DeltaEnsemble {
            gamma_c: ens.gamma_c,
        });
    }
    if ens.truncate_at_zero && gamma_q <= 0.0 {
        return Ok(0.0);
    }
    let z = (gamma_q - ens.gamma_c) / ens.w_c;
    let gauss = (-0.5 * z * z).exp() / (ens.w_c * (2.0 * std::f64::consts::PI).sqrt());
    if ens.truncate_at_zero {
        Ok(gauss / normal_cdf(ens.gamma_c / ens.w_c))
    } else {
        Ok(gauss)
    }
}

/// Conditional density of the antenna rate `gamma` given the intrinsic rate
/// `gamma_q`, from the isotropic sin(theta) orientation density.
///
/// Support: F_par < gamma/gamma_q < (F_perp + F_par)/2, zero outside. The
/// inverse-square-root singularity at the upper edge is integrable and is
/// returned as computed.
pub fn pi2(gamma: f64, gamma_q: f64, fp: &PurcellPair) -> Result<f64> {
    if fp.is_degenerate() {
        return Err(Error::DegeneratePair {
            f_perp: fp.f_perp,
            f_par: fp.f_par,
        });
    }
    if !(gamma_q > 0.0) {
        return Err(Error::Validation(format!(
            "gamma_q must be positive, got {gamma_q}"
        )));
    }
    let x = gamma / gamma_q;
    if x < fp.f_par || x >= 0.5 * (fp.f_perp + fp.f_par) {
        return Ok(0.0);
    }
    let arg = (fp.f_perp - fp.f_par) * (fp.f_perp + fp.f_par - 2.0 * x);
    Ok(1.0 / (gamma_q * arg.sqrt()))
}

/// Marginal rate density pi(Gamma) = int pi2(Gamma; gq) pi1(gq) dgq, by
/// adaptive quadrature with a square-root substitution at the singular edge.
pub fn pi_gamma(gamma: f64, ens: &RateEnsemble, fp: &PurcellPair) -> Result<f64> {
    if fp.is_degenerate() {
        return Err(Error::DegeneratePair {
            f_perp: fp.f_perp,
            f_par: fp.f_par,
        });
    }
    if ens.is_delta() {
        return pi2(gamma, ens.gamma_c, fp);
    }
    if !(gamma > 0.0) {
        return Ok(0.0);
    }
    // gamma_q range where pi2 is non-zero, intersected with pi1's support.
    let gq_sing = 2.0 * gamma / (fp.f_perp + fp.f_par);
    let (ens_lo, ens_hi) = ens.support();
    let lo = gq_sing.max(ens_lo);
    let hi = (gamma / fp.f_par).min(ens_hi);
    if hi <= lo {
        return Ok(0.0);
    }
    // Substitute gq = gq_sing + w^2: the edge singularity of pi2 cancels.
    let w_lo = (lo - gq_sing).sqrt();
    let w_hi = (hi - gq_sing).sqrt();
    let r = integrate(
        |w| {
            let gq = gq_sing + w * w;
            let p2 = pi2(gamma, gq, fp).unwrap_or(0.0);
            let p1 = pi1(gq, ens).unwrap_or(0.0);
            2.0 * w * p2 * p1
        },
        w_lo,
        w_hi,
        &[],
        1e-12,
        1e-8,
    )?;
    Ok(r.value)
}

/// Quadrature nodes of the marginal rate density: pairs (weight, rate) such
/// that sums of weight * f(rate) approximate integrals of pi(Gamma) f(Gamma).
///
/// Shared by [`decay_curve`] and the model evaluations inside the fitting
/// module. Handles the degenerate pair and delta-ensemble paths.
pub fn rate_mixture(ens: &RateEnsemble, fp: &PurcellPair) -> Result<Vec<(f64, f64)>> {
    if fp.is_degenerate() {
        let f = 0.5 * (fp.f_perp + fp.f_par);
        if ens.is_delta() {
            return Ok(vec![(1.0, f * ens.gamma_c)]);
        }
        // 1-D mixture over the intrinsic-rate density.
        let (lo, hi) = ens.support();
        let (x, w) = gauss_legendre(96);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        return Ok(x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| {
                let gq = mid + half * xi;
                (wi * half * pi1(gq, ens).unwrap_or(0.0), f * gq)
            })
            .collect());
    }
    if ens.is_delta() {
        // Exact change of variables: c = cos(theta) is uniform on (0, 1) and
        // Gamma(c) = gq/2 [(F_perp + F_par) - (F_perp - F_par) c^2].
        let gq = ens.gamma_c;
        let (x, w) = gauss_legendre(128);
        return Ok(x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| {
                let c = 0.5 * (xi + 1.0);
                let rate =
                    0.5 * gq * ((fp.f_perp + fp.f_par) - (fp.f_perp - fp.f_par) * c * c);
                (0.5 * wi, rate)
            })
            .collect());
    }
    // General case: geometric panels over the rate support, Gauss-Legendre
    // nodes per panel, density values from pi_gamma.
    let (gq_lo, gq_hi) = ens.support();
    let rate_lo = fp.f_par * gq_lo;
    let rate_hi = 0.5 * (fp.f_perp + fp.f_par) * gq_hi;
    let panels = 56;
    let per_panel = 8;
    let (x, w) = gauss_legendre(per_panel);
    let ratio = (rate_hi / rate_lo).powf(1.0 / panels as f64);
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut a = rate_lo;
    for _ in 0..panels {
        let b = a * ratio;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (&xi, &wi) in x.iter().zip(&w) {
            let rate = mid + half * xi;
            nodes.push((wi * half * pi_gamma(rate, ens, fp)?, rate));
        }
        a = b;
    }
    Ok(nodes)
}

/// Decay curve I(t) = I0 int pi(Gamma) exp(-Gamma t) dGamma, evaluated as
/// the Laplace transform of the [`pi_gamma`] density over its quadrature
/// mixture.
pub fn decay_curve(
    t_grid_ns: &[f64],
    ens: &RateEnsemble,
    fp: &PurcellPair,
    i0: f64,
) -> Result<DecayCurve> {
    if t_grid_ns.is_empty() || t_grid_ns[0] < 0.0 {
        return Err(Error::Validation("t_grid must start at t >= 0".into()));
    }
    if t_grid_ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("t_grid must be strictly increasing".into()));
    }
    let mixture = rate_mixture(ens, fp)?;
    let intensity: Vec<f64> = t_grid_ns
        .iter()
        .map(|&t| i0 * mixture.iter().map(|&(w, g)| w * (-g * t).exp()).sum::<f64>())
        .collect();
    Ok(DecayCurve {
        t_grid_ns: t_grid_ns.to_vec(),
        intensity,
        i0,
    })
}

/// First time at which the curve drops to `fraction` of its initial value
/// (linear interpolation between grid points).
pub fn time_to_fraction(curve: &DecayCurve, fraction: f64) -> Option<f64> {
    let target = curve.intensity[0] * fraction;
    for k in 1..curve.intensity.len() {
        if curve.intensity[k] <= target {
            let (t0, t1) = (curve.t_grid_ns[k - 1], curve.t_grid_ns[k]);
            let (y0, y1) = (curve.intensity[k - 1], curve.intensity[k]);
            return Some(t0 + (t1 - t0) * (y0 - target) / (y0 - y1));
        }
    }
    None
}

/// Discrete Gaussian blur kernel, integrated over bins (unit sum).
fn irf_kernel(bin_width_ns: f64, fwhm_ns: f64) -> Vec<f64> {
    let sigma = fwhm_ns / (8.0 * 2.0f64.ln()).sqrt();
    if sigma < 1e-12 * bin_width_ns {
        return vec![1.0];
    }
    let half = ((6.0 * sigma / bin_width_ns).ceil() as usize).max(1);
    let mut kernel = Vec::with_capacity(2 * half + 1);
    for j in -(half as i64)..=(half as i64) {
        let a = (j as f64 - 0.5) * bin_width_ns / sigma;
        let b = (j as f64 + 0.5) * bin_width_ns / sigma;
        kernel.push(normal_cdf(b) - normal_cdf(a));
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Convolves a uniformly sampled curve with a unit-area Gaussian of the
/// given FWHM. The convolution is circular over the grid window, matching
/// the wrap-around of a periodically pulsed measurement, so the total
/// integral is preserved exactly.
pub fn convolve_irf(curve: &DecayCurve, irf_fwhm_ns: f64) -> Result<DecayCurve> {
    let n = curve.t_grid_ns.len();
    if n < 2 {
        return Err(Error::Validation("curve needs at least 2 samples".into()));
    }
    let dt = curve.t_grid_ns[1] - curve.t_grid_ns[0];
    for w in curve.t_grid_ns.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::Validation(
                "IRF convolution requires a uniform time grid".into(),
            ));
        }
    }
    if irf_fwhm_ns < 0.0 {
        return Err(Error::Validation("IRF FWHM must be non-negative".into()));
    }
    let kernel = irf_kernel(dt, irf_fwhm_ns);
    let out = convolve_circular(&curve.intensity, &kernel);
    Ok(DecayCurve {
        t_grid_ns: curve.t_grid_ns.clone(),
        intensity: out,
        i0: curve.i0,
    })
}

/// Circular convolution of `values` with a centered odd-length kernel.
fn convolve_circular(values: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = values.len();
    let half = (kernel.len() / 2) as i64;
    (0..n as i64)
        .map(|k| {
            kernel
                .iter()
                .enumerate()
                .map(|(ji, &kj)| {
                    let j = ji as i64 - half;
                    kj * values[(k - j).rem_euclid(n as i64) as usize]
                })
                .sum()
        })
        .collect()
}

fn draw_sample<R: Rng>(rng: &mut R, ens: &RateEnsemble, fp: &PurcellPair) -> OrientationSample {
    // Inverse CDF of the sin(theta) density on [0, pi/2].
    let theta = (1.0 - rng.gen::<f64>()).acos();
    let gamma_q = loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        // Box-Muller; rejection keeps the rate positive.
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let g = ens.gamma_c + ens.w_c * z;
        if g > 0.0 {
            break g;
        }
    };
    OrientationSample {
        theta_rad: theta,
        gamma_q,
        gamma: gamma_of_theta(gamma_q, theta, fp),
    }
}

/// Deterministic Monte Carlo sample of dot orientations and rates.
///
/// Samples are drawn in independent ChaCha streams of 65536 per batch, so
/// the output depends only on (n, seed).
pub fn sample_decay_mc(
    n: usize,
    seed: u64,
    ens: &RateEnsemble,
    fp: &PurcellPair,
) -> Result<Vec<OrientationSample>> {
    if n == 0 {
        return Err(Error::Validation("sample count must be positive".into()));
    }
    let batch = 1usize << 16;
    let mut out = Vec::with_capacity(n);
    for b in 0..n.div_ceil(batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let take = batch.min(n - b * batch);
        for _ in 0..take {
            out.push(draw_sample(&mut rng, ens, fp));
        }
    }
    Ok(out)
}

/// Controls for synthetic histogram generation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthConfig {
    pub window_ns: f64,
    pub bin_width_ns: f64,
    pub total_counts: usize,
    /// Gaussian arrival-time jitter FWHM; 0 disables it.
    pub irf_fwhm_ns: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            window_ns: 400.0,
            bin_width_ns: 0.5,
            total_counts: 1_000_000,
            irf_fwhm_ns: 0.5,
        }
    }
}

/// Synthesizes a photon-count histogram: each photon draws a fresh dot
/// orientation and intrinsic rate, an exponential delay at the resulting
/// rate, and an optional Gaussian jitter; times wrap modulo the window.
pub fn synth_decay_histogram(
    seed: u64,
    ens: &RateEnsemble,
    fp: &PurcellPair,
    cfg: &SynthConfig,
) -> Result<DecayHistogram> {
    if !(cfg.window_ns > 0.0 && cfg.bin_width_ns > 0.0) || cfg.total_counts == 0 {
        return Err(Error::Validation(
            "synth config needs positive window, bin width and counts".into(),
        ));
    }
    let n_bins = (cfg.window_ns / cfg.bin_width_ns).round() as usize;
    if ((cfg.window_ns / cfg.bin_width_ns) - n_bins as f64).abs() > 1e-9 {
        return Err(Error::Validation(
            "bin width must divide the window evenly".into(),
        ));
    }
    let sigma = cfg.irf_fwhm_ns / (8.0 * 2.0f64.ln()).sqrt();
    let mut counts = vec![0u64; n_bins];
    let batch = 1usize << 16;
    let n = cfg.total_counts;
    for b in 0..n.div_ceil(batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let take = batch.min(n - b * batch);
        for _ in 0..take {
            let s = draw_sample(&mut rng, ens, fp);
            let mut t = -rng.gen::<f64>().ln() / s.gamma;
            if sigma > 0.0 {
                let u1: f64 = rng.gen();
                let u2: f64 = rng.gen();
                t += sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            }
            let t = t.rem_euclid(cfg.window_ns);
            let bin = ((t / cfg.bin_width_ns) as usize).min(n_bins - 1);
            counts[bin] += 1;
        }
    }
    Ok(DecayHistogram {
        bin_start_ns: (0..n_bins).map(|k| k as f64 * cfg.bin_width_ns).collect(),
        counts,
        window_ns: cfg.window_ns,
    })
}
