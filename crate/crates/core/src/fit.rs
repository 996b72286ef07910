//! Maximum-likelihood extraction of model parameters from photon-count
//! histograms: (gamma_c, w_c) from silica reference decays and
//! (F_perp, F_par) from antenna decays.
//!
//! The loss is the Poisson negative log-likelihood (TCSPC bins are Poisson
//! and the tail bins are count-starved, so least squares on log-counts would
//! misweight them). Optimization is a bounded simplex with a log-spaced
//! multi-start grid; the model is the rate-mixture decay curve integrated
//! per bin, optionally blurred by the instrument response.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{rate_mixture, DecayCurve, DecayHistogram, PurcellPair, RateEnsemble};
use crate::error::{Error, Result};
use crate::optim::{minimize_bounded, SimplexOptions, SimplexResult};

/// Protocol and optimizer controls for the fits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Instrument-response FWHM convolved into the model; None disables it.
    pub irf_fwhm_ns: Option<f64>,
    /// Float a flat background (dark counts) alongside the amplitude.
    pub fit_background: bool,
    /// Multi-start grid dimensions over the two physical parameters.
    pub multistart: (usize, usize),
    /// Evaluation budget per start.
    pub max_evaluations: usize,
    /// Simplex convergence tolerance (box-relative diameter).
    pub simplex_tol: f64,
    /// Bounds for both Purcell factors in antenna fits.
    pub f_bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            irf_fwhm_ns: Some(0.5),
            fit_background: true,
            multistart: (5, 5),
            max_evaluations: 2000,
            simplex_tol: 1e-3,
            f_bounds: (0.1, 500.0),
        }
    }
}

/// Outcome of a fit: named parameters, 1-sigma confidence from the
/// likelihood curvature, and convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: BTreeMap<String, f64>,
    pub confidence: BTreeMap<String, f64>,
    pub nll: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Some fitted parameter sits on a bound.
    pub boundary_pinned: bool,
    /// |F_perp - F_par| is below the combined confidence width.
    pub near_degenerate: bool,
}

/// Poisson negative log-likelihood sum(mu_i - c_i ln mu_i) of a per-bin
/// expected-counts model against a histogram. The model grid must align
/// with the histogram bins; expectations are floored at 1e-12.
pub fn neg_log_likelihood(model: &DecayCurve, hist: &DecayHistogram) -> Result<f64> {
    hist.validate()?;
    if model.t_grid_ns.len() != hist.bin_start_ns.len() {
        return Err(Error::Validation(format!(
            "model grid has {} points but histogram has {} bins",
            model.t_grid_ns.len(),
            hist.bin_start_ns.len()
        )));
    }
    let tol = 1e-9 * hist.window_ns;
    for (t, b) in model.t_grid_ns.iter().zip(&hist.bin_start_ns) {
        if (t - b).abs() > tol {
            return Err(Error::Validation(format!(
                "model grid misaligned with histogram bins ({t} vs {b})"
            )));
        }
    }
    Ok(nll_of(&model.intensity, &hist.counts))
}

fn nll_of(mu: &[f64], counts: &[u64]) -> f64 {
    mu.iter()
        .zip(counts)
        .map(|(&m, &c)| {
            let m = m.max(1e-12);
            m - c as f64 * m.ln()
        })
        .sum()
}

/// Scaled complementary error function exp(x^2) erfc(x) for x >= 0,
/// overflow-free for all x.
fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 6.0 {
        (x * x).exp() * statrs::function::erf::erfc(x)
    } else {
        // Asymptotic series, relative error below 1e-13 at x >= 6.
        let inv2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            term *= -(2.0 * k as f64 - 1.0) * inv2;
            sum += term;
        }
        sum / (x * std::f64::consts::PI.sqrt())
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of Exp(rate) + N(0, sigma^2) at t, in the numerically stable
/// erfcx form: the exponential-times-Gaussian-tail product collapses to
/// exp(-t^2 / (2 sigma^2)) times a bounded factor.
fn emg_cdf(t: f64, rate: f64, sigma: f64) -> f64 {
    let z = t / sigma - sigma * rate;
    let gauss = (-0.5 * t * t / (sigma * sigma)).exp();
    if z <= 0.0 {
        normal_cdf(t / sigma) - 0.5 * erfcx(-z / std::f64::consts::SQRT_2) * gauss
    } else {
        let free = (-rate * t + 0.5 * rate * rate * sigma * sigma).exp();
        normal_cdf(t / sigma) - free + 0.5 * erfcx(z / std::f64::consts::SQRT_2) * gauss
    }
}

/// Per-bin probability masses of a rate mixture observed modulo the window,
/// each rate's delay blurred by a Gaussian of the given FWHM: the exact
/// distribution of (Exp(rate) + jitter) mod window, integrated over bins.
fn binned_unit_model(
    mixture: &[(f64, f64)],
    n_bins: usize,
    bin_width_ns: f64,
    window_ns: f64,
    irf_fwhm_ns: Option<f64>,
) -> Vec<f64> {
    let sigma = irf_fwhm_ns.unwrap_or(0.0) / (8.0 * 2.0f64.ln()).sqrt();
    let mut m = vec![0.0; n_bins];
    for &(w, rate) in mixture {
        if w == 0.0 {
            continue;
        }
        let s_half = 0.5 * rate * rate * sigma * sigma;
        let r_bin = (-rate * bin_width_ns).exp();
        // Wrapped pure-exponential mass for every period m >= 1:
        // geometric sum of exp(-rate (t + m W)) differences.
        let wrap_scale = w * (1.0 - r_bin) * (-rate * window_ns + s_half).exp()
            / (1.0 - (-rate * window_ns).exp());
        if sigma <= 0.0 {
            // No jitter: wrapped exponential exactly.
            let scale = w * (1.0 - r_bin) / (1.0 - (-rate * window_ns).exp());
            let mut head = 1.0;
            for slot in m.iter_mut() {
                *slot += scale * head;
                head *= r_bin;
            }
            continue;
        }
        // Period m = 0: exact EMG masses while the Gaussian edge matters,
        // then the saturated exponential marched geometrically.
        let t_sat = sigma * sigma * rate + 8.0 * sigma;
        let k_sat = ((t_sat / bin_width_ns).ceil() as usize).min(n_bins);
        let mut prev_cdf = emg_cdf(0.0, rate, sigma);
        for (k, slot) in m.iter_mut().enumerate().take(k_sat) {
            let next = emg_cdf((k + 1) as f64 * bin_width_ns, rate, sigma);
            *slot += w * (next - prev_cdf);
            prev_cdf = next;
        }
        if k_sat < n_bins {
            // F(t) = 1 - exp(-rate t + s_half) beyond saturation.
            let mut head = (-rate * (k_sat as f64 * bin_width_ns) + s_half).exp();
            let scale = w * (1.0 - r_bin);
            for slot in m.iter_mut().skip(k_sat) {
                *slot += scale * head;
                head *= r_bin;
            }
        }
        // Period m = -1: the jitter pre-tail wraps to the window end.
        let k_pre = ((8.0 * sigma / bin_width_ns).ceil() as usize + 1).min(n_bins);
        let mut prev_cdf = emg_cdf(-(k_pre as f64) * bin_width_ns, rate, sigma);
        for k in (n_bins - k_pre)..n_bins {
            let t_hi = (k + 1) as f64 * bin_width_ns - window_ns;
            let next = emg_cdf(t_hi, rate, sigma);
            m[k] += w * (next - prev_cdf);
            prev_cdf = next;
        }
        // Periods m >= 1 (multiple wraps of slow components).
        let mut head = 1.0;
        for slot in m.iter_mut() {
            *slot += wrap_scale * head;
            head *= r_bin;
        }
    }
    m
}

fn amplitude_background_init(hist: &DecayHistogram, fit_background: bool) -> (f64, f64) {
    let n = hist.counts.len();
    let total: f64 = hist.counts.iter().map(|&c| c as f64).sum();
    let mean = total / n as f64;
    let tail = (n / 20).max(1);
    // The late-time plateau contains genuine slow mixture components, so the
    // tail mean only seeds the background when it is a small share of the
    // signal; the optimizer owns the final split.
    let b0 = if fit_background {
        let tail_mean = hist.counts[n - tail..].iter().sum::<u64>() as f64 / tail as f64;
        tail_mean.min(0.1 * mean)
    } else {
        0.0
    };
    ((total - b0 * n as f64).max(1.0), b0.max(0.0))
}

struct FitEngine<'a> {
    hist: &'a DecayHistogram,
    opts: &'a FitOptions,
    names: [&'static str; 2],
}

impl FitEngine<'_> {
    /// Optimizer coordinates: [t0, t1, ln A, b] where (t0, t1) transform to
    /// the two physical parameters via `to_physical`.
    fn run(
        &self,
        starts: Vec<[f64; 2]>,
        lower2: [f64; 2],
        upper2: [f64; 2],
        unit_model: impl Fn(f64, f64) -> Result<Vec<f64>> + Sync,
        penalty: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<FitResult> {
        self.hist.validate()?;
        let nonzero = self.hist.counts.iter().filter(|&&c| c > 0).count();
        if nonzero < 50 {
            return Err(Error::Validation(format!(
                "histogram has only {nonzero} nonzero bins; need at least 50"
            )));
        }
        let counts = &self.hist.counts;
        let (a0, b0) = amplitude_background_init(self.hist, self.opts.fit_background);
        // Nuisance boxes: the amplitude is pinned to the total-count scale
        // and a flat background can never exceed the mean bin count; boxes
        // much wider than that let the nuisance axes dominate the simplex
        // diameter and stall convergence.
        let total: f64 = counts.iter().map(|&c| c as f64).sum();
        let mean = total / counts.len() as f64;
        let b_hi = if self.opts.fit_background {
            mean.max(1.0)
        } else {
            0.0
        };
        let lower = [lower2[0], lower2[1], (0.05 * a0).ln(), 0.0];
        let upper = [upper2[0], upper2[1], (20.0 * a0).ln(), b_hi];

        let objective = |y: &[f64]| -> f64 {
            let pen = penalty(y[0], y[1]);
            if pen > 0.0 {
                return 1e12 * (1.0 + pen);
            }
            match unit_model(y[0], y[1]) {
                Ok(unit) => {
                    let a = y[2].exp();
                    let b = y[3];
                    let mu: Vec<f64> = unit.iter().map(|&m| a * m + b).collect();
                    nll_of(&mu, counts)
                }
                Err(_) => f64::INFINITY,
            }
        };

        let simplex_opts = SimplexOptions {
            max_evaluations: self.opts.max_evaluations,
            relative_tol: self.opts.simplex_tol,
        };
        let results: Vec<SimplexResult> = starts
            .par_iter()
            .map(|s| {
                minimize_bounded(
                    objective,
                    &[s[0], s[1], a0.ln(), b0],
                    &lower,
                    &upper,
                    &simplex_opts,
                )
            })
            .collect();
        let evaluations: usize = results.iter().map(|r| r.evaluations).sum();
        let best_idx = (0..results.len())
            .min_by(|&i, &j| {
                results[i]
                    .value
                    .partial_cmp(&results[j].value)
                    .unwrap()
                    .then(i.cmp(&j))
            })
            .expect("at least one start");
        let best = &results[best_idx];
        let converged = best.converged && best.value.is_finite();

        // 1-sigma confidence from the numerical Hessian of the NLL in the
        // optimizer coordinates, mapped back through the transforms.
        let sigmas = hessian_sigmas(&objective, &best.x, &lower, &upper);
        let p0 = best.x[0];
        let p1 = best.x[1];
        let amplitude = best.x[2].exp();
        let background = best.x[3];

        let mut parameters = BTreeMap::new();
        let mut confidence = BTreeMap::new();
        // Both physical parameter transforms used below are exp for the
        // first coordinate-pair entries and identity/exp for the rest; the
        // caller-specific mapping happens in `finalize`.
        parameters.insert(self.names[0].to_string(), p0);
        parameters.insert(self.names[1].to_string(), p1);
        parameters.insert("amplitude".to_string(), amplitude);
        parameters.insert("background".to_string(), background);
        confidence.insert(self.names[0].to_string(), sigmas[0]);
        confidence.insert(self.names[1].to_string(), sigmas[1]);
        confidence.insert("amplitude".to_string(), sigmas[2] * amplitude);
        confidence.insert("background".to_string(), sigmas[3]);

        // Background resting at zero is the natural no-dark-counts solution,
        // not a pathology; every other bound hit is flagged.
        let pinned = (0..3).any(|i| {
            let span = (upper[i] - lower[i]).max(1e-12);
            (best.x[i] - lower[i]) < 1e-3 * span || (upper[i] - best.x[i]) < 1e-3 * span
        }) || (self.opts.fit_background && (upper[3] - best.x[3]) < 1e-3 * upper[3]);

        Ok(FitResult {
            parameters,
            confidence,
            nll: best.value,
            converged,
            evaluations,
            boundary_pinned: pinned,
            near_degenerate: false,
        })
    }
}

/// Diagonal 1-sigma estimates from the inverse Hessian (full 4x4, central
/// differences, clamped into bounds). Falls back to per-axis curvature when
/// the Hessian is not positive.
fn hessian_sigmas(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> [f64; 4] {
    let n = 4usize;
    let mut h = [0.0f64; 4];
    for i in 0..n {
        h[i] = (1e-3 * (upper[i] - lower[i])).max(1e-7);
    }
    let probe = |dx: [f64; 4]| -> f64 {
        let mut y = [0.0; 4];
        for i in 0..n {
            y[i] = (x[i] + dx[i]).clamp(lower[i], upper[i]);
        }
        f(&y)
    };
    let f0 = probe([0.0; 4]);
    let mut hess = [[0.0f64; 4]; 4];
    for i in 0..n {
        let mut dp = [0.0; 4];
        dp[i] = h[i];
        let mut dm = [0.0; 4];
        dm[i] = -h[i];
        hess[i][i] = (probe(dp) - 2.0 * f0 + probe(dm)) / (h[i] * h[i]);
        for j in (i + 1)..n {
            let mut dpp = [0.0; 4];
            dpp[i] = h[i];
            dpp[j] = h[j];
            let mut dpm = [0.0; 4];
            dpm[i] = h[i];
            dpm[j] = -h[j];
            let mut dmp = [0.0; 4];
            dmp[i] = -h[i];
            dmp[j] = h[j];
            let mut dmm = [0.0; 4];
            dmm[i] = -h[i];
            dmm[j] = -h[j];
            let v = (probe(dpp) - probe(dpm) - probe(dmp) + probe(dmm)) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    if let Some(inv_diag) = invert_diagonal(&hess) {
        let mut out = [0.0; 4];
        let mut ok = true;
        for i in 0..n {
            if inv_diag[i] > 0.0 {
                out[i] = inv_diag[i].sqrt();
            } else {
                ok = false;
            }
        }
        if ok {
            return out;
        }
    }
    let mut out = [0.0; 4];
    for i in 0..n {
        out[i] = 1.0 / hess[i][i].max(1e-12).sqrt();
    }
    out
}

/// Diagonal of the inverse of a symmetric 4x4 matrix by Gaussian
/// elimination; None when singular.
fn invert_diagonal(m: &[[f64; 4]; 4]) -> Option<[f64; 4]> {
    let n = 4;
    let mut a = *m;
    let mut inv = [[0.0f64; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for k in 0..n {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for row in 0..n {
            if row != col {
                let factor = a[row][col];
                for k in 0..n {
                    a[row][k] -= factor * a[col][k];
                    inv[row][k] -= factor * inv[col][k];
                }
            }
        }
    }
    Some([inv[0][0], inv[1][1], inv[2][2], inv[3][3]])
}

/// Fits the silica reference model I(t) = I0 int pi1(Gamma) exp(-Gamma t)
/// dGamma (+ background) for (gamma_c, w_c).
pub fn fit_reference(hist: &DecayHistogram, opts: &FitOptions) -> Result<FitResult> {
    let n_bins = hist.counts.len();
    let bin_w = hist.bin_width_ns();
    let window = hist.window_ns;
    // Moment estimate of the mean rate seeds the multi-start grid.
    let total: f64 = hist.counts.iter().map(|&c| c as f64).sum();
    let mean_t: f64 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * (k as f64 + 0.5) * bin_w)
        .sum::<f64>()
        / total.max(1.0);
    let gc0 = (1.0 / mean_t.max(1e-3)).clamp(1e-3, 10.0);

    let engine = FitEngine {
        hist,
        opts,
        names: ["gamma_c", "w_c"],
    };
    // Optimizer coordinates: [ln gamma_c, w_c].
    let (nx, ny) = opts.multistart;
    let mut starts = Vec::new();
    for i in 0..nx.max(1) {
        for j in 0..ny.max(1) {
            let gc = gc0 * 3.0f64.powf(i as f64 - (nx as f64 - 1.0) / 2.0);
            let wc = gc * (0.05 + 0.55 * j as f64 / ny.max(1) as f64);
            starts.push([gc.clamp(1e-3, 10.0).ln(), wc.min(0.99)]);
        }
    }
    let mut result = engine.run(
        starts,
        [(1e-3f64).ln(), 0.0],
        [10.0f64.ln(), 1.0],
        |ln_gc, wc| {
            let ens = RateEnsemble {
                gamma_c: ln_gc.exp(),
                w_c: wc.max(0.0),
                truncate_at_zero: true,
            };
            let mixture = rate_mixture(&ens, &PurcellPair::bulk())?;
            Ok(binned_unit_model(
                &mixture,
                n_bins,
                bin_w,
                window,
                opts.irf_fwhm_ns,
            ))
        },
        |_, _| 0.0,
    )?;
    // Map ln gamma_c back to natural units (w_c is already natural).
    let ln_gc = result.parameters["gamma_c"];
    let gc = ln_gc.exp();
    result.parameters.insert("gamma_c".into(), gc);
    let sig = result.confidence["gamma_c"] * gc;
    result.confidence.insert("gamma_c".into(), sig);
    Ok(result)
}

/// Fits the antenna decay model for (F_perp, F_par) at a fixed intrinsic
/// rate ensemble, with amplitude and flat background as nuisance parameters.
pub fn fit_antenna(
    hist: &DecayHistogram,
    ens: &RateEnsemble,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n_bins = hist.counts.len();
    let bin_w = hist.bin_width_ns();
    let window = hist.window_ns;
    let (f_lo, f_hi) = opts.f_bounds;
    if !(f_lo > 0.0 && f_hi > f_lo) {
        return Err(Error::Validation(format!(
            "Purcell bounds must satisfy 0 < lo < hi, got ({f_lo}, {f_hi})"
        )));
    }
    let engine = FitEngine {
        hist,
        opts,
        names: ["f_perp", "f_par"],
    };
    // Optimizer coordinates: [ln F_perp, ln F_par].
    let (nx, ny) = opts.multistart;
    let span = (f_hi / f_lo).ln();
    let mut starts = Vec::new();
    for i in 0..nx.max(1) {
        for j in 0..ny.max(1) {
            let fp = f_lo.ln() + span * (i as f64 + 0.5) / nx.max(1) as f64;
            let fpar = f_lo.ln() + span * (j as f64 + 0.5) / ny.max(1) as f64;
            starts.push([fp, fpar.min(fp - 1e-3)]);
        }
    }
    let ens = *ens;
    let mut result = engine.run(
        starts,
        [f_lo.ln(), f_lo.ln()],
        [f_hi.ln(), f_hi.ln()],
        |ln_fp, ln_fpar| {
            let fp = PurcellPair {
                f_perp: ln_fp.exp(),
                f_par: ln_fpar.exp(),
            };
            let mixture = rate_mixture(&ens, &fp)?;
            Ok(binned_unit_model(
                &mixture,
                n_bins,
                bin_w,
                window,
                opts.irf_fwhm_ns,
            ))
        },
        |ln_fp, ln_fpar| (ln_fpar - ln_fp).max(0.0),
    )?;
    for name in ["f_perp", "f_par"] {
        let ln_v = result.parameters[name];
        let v = ln_v.exp();
        result.parameters.insert(name.into(), v);
        let sig = result.confidence[name] * v;
        result.confidence.insert(name.into(), sig);
    }
    let f_perp = result.parameters["f_perp"];
    let f_par = result.parameters["f_par"];
    result.near_degenerate =
        (f_perp - f_par).abs() < result.confidence["f_perp"] + result.confidence["f_par"];
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_hist(counts: Vec<u64>) -> DecayHistogram {
        let n = counts.len();
        DecayHistogram {
            bin_start_ns: (0..n).map(|k| 0.5 * k as f64).collect(),
            counts,
            window_ns: 0.5 * n as f64,
        }
    }

    #[test]
    fn single_bin_nll_formula() {
        let hist = DecayHistogram {
            bin_start_ns: vec![0.0, 0.5],
            counts: vec![3, 0],
            window_ns: 1.0,
        };
        let model = DecayCurve {
            t_grid_ns: vec![0.0, 0.5],
            intensity: vec![2.0, 1e-12],
            i0: 1.0,
        };
        let nll = neg_log_likelihood(&model, &hist).unwrap();
        let expected = (2.0 - 3.0 * 2.0f64.ln()) + 1e-12 - 0.0;
        assert!((nll - expected).abs() < 1e-12);
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        let hist = toy_hist(vec![5; 10]);
        let model = DecayCurve {
            t_grid_ns: (0..10).map(|k| 0.4 * k as f64).collect(),
            intensity: vec![1.0; 10],
            i0: 1.0,
        };
        assert!(matches!(
            neg_log_likelihood(&model, &hist),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn matched_amplitude_is_the_mle_stationary_point() {
        // With mu = A m and m proportional to counts, the NLL gradient in A
        // vanishes at the matched amplitude.
        let counts: Vec<u64> = (0..100).map(|k| 1000 - 7 * k as u64).collect();
        let hist = toy_hist(counts.clone());
        let m: Vec<f64> = counts.iter().map(|&c| c as f64 / 500.0).collect();
        let nll_at = |a: f64| {
            let mu: Vec<f64> = m.iter().map(|&x| a * x).collect();
            nll_of(&mu, &hist.counts)
        };
        let a0 = 500.0;
        let eps = 1e-4;
        let grad = (nll_at(a0 * (1.0 + eps)) - nll_at(a0 * (1.0 - eps))) / (2.0 * eps * a0);
        assert!(grad.abs() < 1e-6 * nll_at(a0).abs(), "grad {grad}");
    }

    #[test]
    fn too_few_nonzero_bins_is_rejected() {
        let mut counts = vec![0u64; 200];
        counts[0] = 100;
        let hist = toy_hist(counts);
        let err = fit_reference(&hist, &FitOptions::default());
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
