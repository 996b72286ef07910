//! Bounded derivative-free simplex minimization (Nelder-Mead with
//! reflection, expansion, contraction and shrink; candidate points clamped
//! into the box).

/// Controls for one simplex run.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    /// Convergence: simplex diameter relative to the box extent.
    pub relative_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evaluations: 2000,
            relative_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Minimizes `f` over the box [lower, upper] starting from `x0`.
pub fn minimize_bounded<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    assert!(n >= 1 && lower.len() == n && upper.len() == n);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let eval = |x: &[f64], f: &mut F, evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus a 5% box step per coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp(&mut start, lower, upper);
    let v0 = eval(&start, &mut f, &mut evals);
    simplex.push((start.clone(), v0));
    for i in 0..n {
        let mut xi = start.clone();
        let step = 0.05 * (upper[i] - lower[i]).max(1e-12);
        xi[i] = if xi[i] + step <= upper[i] {
            xi[i] + step
        } else {
            xi[i] - step
        };
        clamp(&mut xi, lower, upper);
        let v = eval(&xi, &mut f, &mut evals);
        simplex.push((xi, v));
    }

    let diameter = |s: &[(Vec<f64>, f64)]| -> f64 {
        let best = &s[0].0;
        s.iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(best)
                    .enumerate()
                    .map(|(i, (a, b))| (a - b).abs() / (upper[i] - lower[i]).max(1e-12))
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max)
    };

    let mut converged = false;
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if diameter(&simplex) < opts.relative_tol {
            converged = true;
            break;
        }
        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += x[i] / n as f64;
            }
        }
        let worst = simplex[n].clone();

        let mut reflected = vec![0.0; n];
        for i in 0..n {
            reflected[i] = centroid[i] + alpha * (centroid[i] - worst.0[i]);
        }
        clamp(&mut reflected, lower, upper);
        let v_r = eval(&reflected, &mut f, &mut evals);

        if v_r < simplex[0].1 {
            // Try to expand.
            let mut expanded = vec![0.0; n];
            for i in 0..n {
                expanded[i] = centroid[i] + gamma * (reflected[i] - centroid[i]);
            }
            clamp(&mut expanded, lower, upper);
            let v_e = eval(&expanded, &mut f, &mut evals);
            simplex[n] = if v_e < v_r {
                (expanded, v_e)
            } else {
                (reflected, v_r)
            };
        } else if v_r < simplex[n - 1].1 {
            simplex[n] = (reflected, v_r);
        } else {
            // Contract toward the better of worst/reflected.
            let (toward, v_t) = if v_r < worst.1 {
                (&reflected, v_r)
            } else {
                (&worst.0, worst.1)
            };
            let mut contracted = vec![0.0; n];
            for i in 0..n {
                contracted[i] = centroid[i] + rho * (toward[i] - centroid[i]);
            }
            clamp(&mut contracted, lower, upper);
            let v_c = eval(&contracted, &mut f, &mut evals);
            if v_c < v_t {
                simplex[n] = (contracted, v_c);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for vert in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        vert.0[i] = best[i] + sigma * (vert.0[i] - best[i]);
                    }
                    clamp(&mut vert.0, lower, upper);
                    vert.1 = eval(&vert.0, &mut f, &mut evals);
                    if evals >= opts.max_evaluations {
                        break;
                    }
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    SimplexResult {
        x: simplex[0].0.clone(),
        value: simplex[0].1,
        evaluations: evals,
        converged,
    }
}
