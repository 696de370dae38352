//! Density of the deviation `z = |R - E|` for independent Gaussian `R` and `E`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::RunningStats;

const SPAN: f64 = 10.0;
const TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 48;
const PIECES: usize = 16;

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Density of `|X|` for `X ~ N(mean, var)`.
pub fn folded_normal_pdf(z: f64, mean: f64, var: f64) -> f64 {
    if z < 0.0 {
        return 0.0;
    }
    normal_pdf(z, mean, var) + normal_pdf(-z, mean, var)
}

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson over `[a, b]`, started from a uniform split so narrow peaks are seen.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == PIECES { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(f, lo, hi, fa, fm, fb, whole, TOL / PIECES as f64, MAX_DEPTH)
        })
        .sum()
}

fn check_inputs(var_r: f64, var_e: f64, grid: &[f64]) -> Result<()> {
    if !(var_r > 0.0 && var_e > 0.0) || !var_r.is_finite() || !var_e.is_finite() {
        return Err(Error::Input(format!("variances must be positive, got {var_r} and {var_e}")));
    }
    if let Some(z) = grid.iter().find(|z| !(**z >= 0.0) || !z.is_finite()) {
        return Err(Error::Input(format!("z grid must be finite and non-negative, got {z}")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("z grid must be increasing".into()));
    }
    Ok(())
}

/// The two branch integrals at every grid point:
/// `∫ f_R(E + z) f_E(E) dE` and `∫ f_R(E - z) f_E(E) dE`.
pub fn z_density_branches(mu_r: f64, var_r: f64, mu_e: f64, var_e: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_inputs(var_r, var_e, grid)?;
    let (sd_r, sd_e) = (var_r.sqrt(), var_e.sqrt());
    let branch = |z: f64, sign: f64| {
        // the R factor peaks at E = mu_r - sign*z; only the overlap of both ±10 sd supports matters
        let centre = mu_r - sign * z;
        let lo = (mu_e - SPAN * sd_e).max(centre - SPAN * sd_r);
        let hi = (mu_e + SPAN * sd_e).min(centre + SPAN * sd_r);
        let f = move |e: f64| normal_pdf(e + sign * z, mu_r, var_r) * normal_pdf(e, mu_e, var_e);
        integrate(&f, lo, hi)
    };
    Ok(grid.iter().map(|&z| (branch(z, 1.0), branch(z, -1.0))).collect())
}

/// Numeric density of `z` on `grid`, the sum of the two branches.
pub fn z_density_numeric(mu_r: f64, var_r: f64, mu_e: f64, var_e: f64, grid: &[f64]) -> Result<Vec<f64>> {
    Ok(z_density_branches(mu_r, var_r, mu_e, var_e, grid)?.into_iter().map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaZEstimate {
    /// Sample standard deviation of `R - E`.
    pub scale: f64,
    /// Mean of `|R - E|`.
    pub mean_abs: f64,
    pub n_draws: usize,
}

/// Monte Carlo estimate of the spread of `R - E` for independent zero-mean normals.
pub fn monte_carlo_sigma_z(sigma_r: f64, sigma_e: f64, n_draws: usize, seed: u64) -> Result<SigmaZEstimate> {
    if n_draws < 10_000 {
        return Err(Error::Input(format!("need at least 10000 draws, got {n_draws}")));
    }
    if !(sigma_r >= 0.0 && sigma_e >= 0.0) || !sigma_r.is_finite() || !sigma_e.is_finite() {
        return Err(Error::Input("standard deviations must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = RunningStats::<f64>::new();
    let mut abs_sum = 0.0;
    for _ in 0..n_draws {
        let r: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let d = sigma_r * r - sigma_e * e;
        stats.push(d)?;
        abs_sum += d.abs();
    }
    Ok(SigmaZEstimate { scale: stats.std_dev()?, mean_abs: abs_sum / n_draws as f64, n_draws })
}
