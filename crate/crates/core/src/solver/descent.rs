use nalgebra::{DMatrix, SymmetricEigen};

use super::{
    check_shapes, fitted_values, k_norm_theta, BlockUpdate, Coefficients, FitOptions, FitResult,
    Stage, Termination,
};
use crate::dataset::ScoreTensor;
use crate::error::{Error, Result};
use crate::kernels::EigenBasis;

/// `č_j = θ ⊙ (n⁻¹ Σ_i r_i s_ij)` with `r` the partial residual that
/// leaves predictor `j` out.
pub fn partial_target(
    scores: &ScoreTensor,
    y: &[f64],
    coeffs: &Coefficients,
    j: usize,
) -> Vec<f64> {
    let mut r = y.to_vec();
    let fitted = fitted_values(coeffs, scores);
    let m = scores.m();
    let b = coeffs.row(j);
    for (i, (ri, f)) in r.iter_mut().zip(&fitted).enumerate() {
        let own: f64 = scores.row(i, j).iter().zip(b).map(|(s, c)| s * c).sum();
        *ri -= f - own;
    }
    let theta = scores.basis().eigenvalues();
    let mut out = cross(scores.block(j), &r, m);
    for (c, t) in out.iter_mut().zip(theta) {
        *c *= t;
    }
    out
}

/// Functional soft-threshold: zero if `||check||_K ≤ λw`, otherwise
/// `check` scaled so its K-norm drops by exactly `λw`.
pub fn shrink_update(check: &[f64], basis: &EigenBasis, lambda: f64, weight: f64) -> Vec<f64> {
    shrink_theta(check, basis.eigenvalues(), lambda * weight)
}

fn shrink_theta(check: &[f64], theta: &[f64], threshold: f64) -> Vec<f64> {
    let nu = k_norm_theta(check, theta);
    if nu <= threshold {
        return vec![0.0; check.len()];
    }
    let factor = 1.0 - threshold / nu;
    check.iter().map(|c| factor * c).collect()
}

/// Largest penalty at which some predictor can enter from the empty model.
pub fn lambda_max(scores: &ScoreTensor, y: &[f64], weights: &[f64]) -> Result<f64> {
    check_shapes(scores, y, weights)?;
    let theta = scores.basis().eigenvalues();
    let m = scores.m();
    let mut best: f64 = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w.is_infinite() {
            continue;
        }
        let g = cross(scores.block(j), y, m);
        let norm = theta_norm(&g, theta);
        best = best.max(norm / w);
    }
    Ok(best)
}

/// Geometric grid from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_path(
    scores: &ScoreTensor,
    y: &[f64],
    weights: &[f64],
    count: usize,
    ratio: f64,
) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "path needs at least 2 values, got {count}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "path ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let top = lambda_max(scores, y, weights)?;
    if top <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|k| {
            if k == 0 {
                top
            } else {
                top * ratio.powf(k as f64 / last)
            }
        })
        .collect())
}

/// One penalized solve by cyclic block coordinate descent.
pub fn coordinate_descent(
    scores: &ScoreTensor,
    y: &[f64],
    lambda: f64,
    weights: &[f64],
    opts: &FitOptions,
    warm_start: Option<&Coefficients>,
) -> Result<FitResult> {
    let problem = Problem::new(scores, y, weights, opts.update)?;
    let start = match warm_start {
        Some(c) => c.clone(),
        None => Coefficients::zeros(scores.basis().clone(), scores.p()),
    };
    problem.solve(lambda, start, opts)
}

/// Solves along `lambdas` in order, each fit warm-started from the previous
/// one. Stops after the first fit that trips the kill switch.
pub fn fit_path(
    scores: &ScoreTensor,
    y: &[f64],
    weights: &[f64],
    lambdas: &[f64],
    opts: &FitOptions,
) -> Result<Vec<FitResult>> {
    let problem = Problem::new(scores, y, weights, opts.update)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let start = match fits.last() {
            Some(f) => f.coefficients.clone(),
            None => Coefficients::zeros(scores.basis().clone(), scores.p()),
        };
        let fit = problem.solve(lambda, start, opts)?;
        let killed = fit.termination == Termination::KillSwitch;
        fits.push(fit);
        if killed {
            break;
        }
    }
    Ok(fits)
}

/// The block minimizer for predictor `j` with every other row of `coeffs`
/// held fixed.
pub fn block_update(
    scores: &ScoreTensor,
    y: &[f64],
    coeffs: &Coefficients,
    j: usize,
    lambda: f64,
    weight: f64,
    update: BlockUpdate,
) -> Result<Vec<f64>> {
    let mut weights = vec![f64::INFINITY; scores.p()];
    weights[j] = weight;
    let problem = Problem::new(scores, y, &weights, update)?;
    let r = residual(scores, y, coeffs);
    let g = problem.gradient_target(j, &r, coeffs.row(j));
    Ok(problem.update(j, &g, lambda * weight))
}

/// `sqrt(Σ_l θ_l g_l²)`, the K-norm of `θ ⊙ g`.
#[inline]
fn theta_norm(g: &[f64], theta: &[f64]) -> f64 {
    g.iter()
        .zip(theta)
        .map(|(g, t)| t * g * g)
        .sum::<f64>()
        .sqrt()
}

/// `Sᵀ v / n` for an `n × m` block.
fn cross(block: &[f64], v: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (s, vi) in block.chunks_exact(m).zip(v) {
        for (o, x) in out.iter_mut().zip(s) {
            *o += x * vi;
        }
    }
    let n = v.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

pub(super) fn residual(scores: &ScoreTensor, y: &[f64], coeffs: &Coefficients) -> Vec<f64> {
    let fitted = fitted_values(coeffs, scores);
    y.iter().zip(&fitted).map(|(a, f)| a - f).collect()
}

/// Eigendecomposition of `Θ^{1/2} C_jj Θ^{1/2}`.
struct BlockSpectrum {
    values: Vec<f64>,
    /// Column-major eigenvectors.
    vectors: Vec<f64>,
}

/// Per-predictor quantities shared by every solve on one design.
pub(super) struct Problem<'a> {
    scores: &'a ScoreTensor,
    y: &'a [f64],
    weights: &'a [f64],
    theta: &'a [f64],
    sqrt_theta: Vec<f64>,
    /// Row-major `m × m` Gram blocks `S_jᵀ S_j / n`; empty for excluded
    /// predictors.
    grams: Vec<Vec<f64>>,
    spectra: Vec<Option<BlockSpectrum>>,
    update: BlockUpdate,
}

impl<'a> Problem<'a> {
    pub(super) fn new(
        scores: &'a ScoreTensor,
        y: &'a [f64],
        weights: &'a [f64],
        update: BlockUpdate,
    ) -> Result<Problem<'a>> {
        check_shapes(scores, y, weights)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        let (n, m) = (scores.n(), scores.m());
        let theta = scores.basis().eigenvalues();
        let sqrt_theta: Vec<f64> = theta.iter().map(|t| t.sqrt()).collect();
        let mut grams = Vec::with_capacity(scores.p());
        let mut spectra = Vec::with_capacity(scores.p());
        for (j, w) in weights.iter().enumerate() {
            if w.is_infinite() {
                grams.push(Vec::new());
                spectra.push(None);
                continue;
            }
            let mut gram = vec![0.0; m * m];
            for s in scores.block(j).chunks_exact(m) {
                for a in 0..m {
                    for b in a..m {
                        gram[a * m + b] += s[a] * s[b];
                    }
                }
            }
            for a in 0..m {
                for b in a..m {
                    gram[a * m + b] /= n as f64;
                    gram[b * m + a] = gram[a * m + b];
                }
            }
            let spectrum = match update {
                BlockUpdate::Exact => Some(block_spectrum(&gram, &sqrt_theta)?),
                BlockUpdate::Identity => None,
            };
            grams.push(gram);
            spectra.push(spectrum);
        }
        Ok(Problem {
            scores,
            y,
            weights,
            theta,
            sqrt_theta,
            grams,
            spectra,
            update,
        })
    }

    /// `n⁻¹ S_jᵀ r_partial` computed from the full residual.
    pub(super) fn gradient_target(&self, j: usize, r: &[f64], b: &[f64]) -> Vec<f64> {
        let m = self.scores.m();
        let mut g = cross(self.scores.block(j), r, m);
        let gram = &self.grams[j];
        for (a, ga) in g.iter_mut().enumerate() {
            *ga += (0..m).map(|c| gram[a * m + c] * b[c]).sum::<f64>();
        }
        g
    }

    pub(super) fn update(&self, j: usize, g: &[f64], threshold: f64) -> Vec<f64> {
        match self.update {
            BlockUpdate::Identity => {
                // ||θ ⊙ g||_K written the way lambda_max computes it, so the
                // zero threshold agrees with it to the last bit.
                let nu = theta_norm(g, self.theta);
                if nu <= threshold {
                    return vec![0.0; g.len()];
                }
                let factor = 1.0 - threshold / nu;
                g.iter()
                    .zip(self.theta)
                    .map(|(g, t)| factor * g * t)
                    .collect()
            }
            BlockUpdate::Exact => {
                let spectrum = self.spectra[j].as_ref().expect("candidate predictor");
                exact_update(g, self.theta, &self.sqrt_theta, spectrum, threshold)
            }
        }
    }

    pub(super) fn theta(&self) -> &[f64] {
        self.theta
    }

    pub(super) fn solve(
        &self,
        lambda: f64,
        start: Coefficients,
        opts: &FitOptions,
    ) -> Result<FitResult> {
        opts.validate()?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        let scores = self.scores;
        let (p, m) = (scores.p(), scores.m());
        if start.p() != p || start.m() != m {
            return Err(Error::InvalidArgument(
                "warm start does not match the scores".into(),
            ));
        }
        let mut coeffs = start;
        for j in 0..p {
            if self.weights[j].is_infinite() && !coeffs.is_zero_row(j) {
                coeffs.row_mut(j).iter_mut().for_each(|c| *c = 0.0);
            }
        }
        let mut r = residual(scores, self.y, &coeffs);
        let n = scores.n() as f64;
        let mut trace = Vec::new();
        let mut termination = Termination::MaxIterations;
        let mut sweeps = 0;

        while sweeps < opts.max_iter {
            let mut worst: f64 = 0.0;
            for j in 0..p {
                let w = self.weights[j];
                if w.is_infinite() {
                    continue;
                }
                let old = coeffs.row(j).to_vec();
                let g = self.gradient_target(j, &r, &old);
                let new = self.update(j, &g, lambda * w);
                let delta: Vec<f64> = new.iter().zip(&old).map(|(a, b)| a - b).collect();
                if delta.iter().any(|&d| d != 0.0) {
                    for (ri, s) in r.iter_mut().zip(scores.block(j).chunks_exact(m)) {
                        *ri -= s.iter().zip(&delta).map(|(s, d)| s * d).sum::<f64>();
                    }
                    coeffs.row_mut(j).copy_from_slice(&new);
                }
                let change =
                    k_norm_theta(&delta, self.theta) / (1.0 + k_norm_theta(&old, self.theta));
                worst = worst.max(change);
            }
            sweeps += 1;
            if !worst.is_finite() || r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { sweep: sweeps });
            }
            let rss: f64 = r.iter().map(|v| v * v).sum();
            let penalty: f64 = (0..p)
                .filter(|&j| self.weights[j].is_finite())
                .map(|j| self.weights[j] * k_norm_theta(coeffs.row(j), self.theta))
                .sum();
            trace.push(rss / (2.0 * n) + lambda * penalty);

            let active = (0..p).filter(|&j| !coeffs.is_zero_row(j)).count();
            if opts.kill_switch.is_some_and(|cap| active > cap) {
                termination = Termination::KillSwitch;
                break;
            }
            if worst < opts.tol {
                termination = Termination::Converged;
                break;
            }
        }

        let objective = super::objective_value(&coeffs, scores, self.y, lambda, self.weights)?;
        Ok(FitResult {
            active_set: coeffs.support(),
            coefficients: coeffs,
            lambda,
            weights: self.weights.to_vec(),
            n_iterations: sweeps,
            termination,
            objective,
            objective_trace: trace,
            stage: Stage::Plain,
            update: self.update,
            standardization: None,
        })
    }
}

fn block_spectrum(gram: &[f64], sqrt_theta: &[f64]) -> Result<BlockSpectrum> {
    let m = sqrt_theta.len();
    let a = DMatrix::from_fn(m, m, |r, c| sqrt_theta[r] * gram[r * m + c] * sqrt_theta[c]);
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("block eigendecomposition did not converge".into()))?;
    Ok(BlockSpectrum {
        values: eig.eigenvalues.iter().map(|v| v.max(0.0)).collect(),
        vectors: eig.eigenvectors.as_slice().to_vec(),
    })
}

/// Minimizes `½ aᵀAa − aᵀc + τ||a||` over `a = Θ^{-1/2} b`, where
/// `c = Θ^{1/2} g`. The solution is `a = (A + μI)⁻¹ c` with `μ||a|| = τ`.
fn exact_update(
    g: &[f64],
    theta: &[f64],
    sqrt_theta: &[f64],
    spectrum: &BlockSpectrum,
    threshold: f64,
) -> Vec<f64> {
    let m = g.len();
    let c: Vec<f64> = g.iter().zip(sqrt_theta).map(|(g, s)| g * s).collect();
    let c_norm = theta_norm(g, theta);
    if c_norm <= threshold {
        return vec![0.0; m];
    }
    let q = &spectrum.vectors;
    let lam = &spectrum.values;
    let ct: Vec<f64> = (0..m)
        .map(|k| (0..m).map(|r| q[k * m + r] * c[r]).sum())
        .collect();
    let top = lam.iter().cloned().fold(0.0, f64::max);
    let floor = top * 1e-14;

    let mu = if threshold == 0.0 {
        0.0
    } else {
        solve_multiplier(&ct, lam, threshold, c_norm)
    };
    let a: Vec<f64> = ct
        .iter()
        .zip(lam)
        .map(|(c, l)| {
            let d = l + mu;
            if d <= floor {
                0.0
            } else {
                c / d
            }
        })
        .collect();
    (0..m)
        .map(|r| sqrt_theta[r] * (0..m).map(|k| q[k * m + r] * a[k]).sum::<f64>())
        .collect()
}

/// Root of `ψ(μ) = ||μ (Λ + μ)⁻¹ c̃|| = τ`; ψ increases from 0 to `||c̃||`.
fn solve_multiplier(ct: &[f64], lam: &[f64], tau: f64, c_norm: f64) -> f64 {
    let psi = |mu: f64| -> (f64, f64) {
        let mut sq = 0.0;
        let mut dsq = 0.0;
        for (c, l) in ct.iter().zip(lam) {
            let d = l + mu;
            sq += c * c * mu * mu / (d * d);
            dsq += 2.0 * c * c * mu * l / (d * d * d);
        }
        let v = sq.sqrt();
        (v, if v > 0.0 { dsq / (2.0 * v) } else { 0.0 })
    };
    let gap = c_norm - tau;
    let lmax = lam.iter().cloned().fold(0.0, f64::max);
    let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = tau * lmin / gap;
    let mut hi = tau * lmax / gap;
    if hi <= lo {
        return hi;
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (v, dv) = psi(mu);
        let f = v - tau;
        if f == 0.0 {
            return mu;
        }
        if f > 0.0 {
            hi = mu;
        } else {
            lo = mu;
        }
        let newton = if dv > 0.0 { mu - f / dv } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - mu).abs() <= 1e-15 * mu || hi - lo <= 1e-15 * hi {
            return next;
        }
        mu = next;
    }
    mu
}
