//! Matérn-family kernels and the spectral decomposition of their integral
//! operators on a quadrature grid.
//!
//! The operator `(Kf)(t) = ∫ k(t, s) f(s) ds` is discretized with the grid's
//! trapezoid weights `D` and symmetrized as `D^{1/2} M D^{1/2}`, where `M` is
//! the Gram matrix. Eigenvectors `u` of that matrix map back to eigenfunctions
//! `v(t_g) = u_g / sqrt(w_g)`, which are orthonormal under the same quadrature
//! rule used by [`Grid::inner`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_space::{Grid, GridFunction};

/// Eigenvalues at or below `RELATIVE_FLOOR * θ_1` are discarded.
pub const RELATIVE_FLOOR: f64 = 1e-12;

/// Tolerance for negative eigenvalues of the symmetrized Gram matrix.
const PSD_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-d² / ρ)`, the ν → ∞ member.
    Gaussian,
    /// `exp(-d / ρ)`, ν = 1/2.
    Exponential,
    /// ν = 3/2.
    Matern32,
    /// ν = 5/2.
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Gaussian,
        KernelFamily::Exponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Exponential => "exponential",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel family `{s}`")))
    }
}

/// A kernel family together with its length scale `ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    rho: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, rho: f64) -> Result<KernelSpec> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel length scale must be positive, got {rho}"
            )));
        }
        Ok(KernelSpec { family, rho })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `k(t, s)`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        let d = (t - s).abs();
        let rho = self.rho;
        match self.family {
            KernelFamily::Gaussian => (-d * d / rho).exp(),
            KernelFamily::Exponential => (-d / rho).exp(),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * d / rho;
                (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * d / rho;
                (1.0 + a + 5.0 * d * d / (3.0 * rho * rho)) * (-a).exp()
            }
        }
    }

    /// Gram matrix `M[g, h] = k(t_g, t_h)` on the grid points.
    pub fn gram(&self, grid: &Grid) -> DMatrix<f64> {
        let t = grid.points();
        DMatrix::from_fn(t.len(), t.len(), |g, h| self.eval(t[g], t[h]))
    }
}

/// Truncated eigen-decomposition `(θ_l, v_l)` of the kernel integral operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    grid: Arc<Grid>,
    eigenvalues: Vec<f64>,
    /// Row-major `m × G`: row `l` holds `v_l` on the grid.
    eigenfunctions: Vec<f64>,
    total_trace: f64,
}

impl EigenBasis {
    /// Assembles a basis from precomputed parts. Eigenvalues must be positive
    /// and nonincreasing; `eigenfunctions` is row-major `m × G`.
    pub fn from_parts(
        grid: Arc<Grid>,
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<f64>,
        total_trace: f64,
    ) -> Result<EigenBasis> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument(
                "basis needs at least one component".into(),
            ));
        }
        if eigenfunctions.len() != eigenvalues.len() * grid.len() {
            return Err(Error::InvalidArgument(
                "eigenfunction table does not match the grid".into(),
            ));
        }
        if eigenvalues.iter().any(|&t| !(t.is_finite() && t > 0.0))
            || eigenvalues.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::InvalidArgument(
                "eigenvalues must be positive and nonincreasing".into(),
            ));
        }
        if eigenfunctions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eigenfunctions".into()));
        }
        Ok(EigenBasis {
            grid,
            eigenvalues,
            eigenfunctions,
            total_trace,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of retained components `m`.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Sum of every eigenvalue retained by [`build_basis`], before truncation.
    pub fn total_trace(&self) -> f64 {
        self.total_trace
    }

    /// `v_l` sampled on the grid (0-based `l`).
    pub fn eigenfunction(&self, l: usize) -> &[f64] {
        let g = self.grid.len();
        &self.eigenfunctions[l * g..(l + 1) * g]
    }

    pub fn eigenfunction_curve(&self, l: usize) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.eigenfunction(l).to_vec())
            .expect("eigenfunctions are finite and sized to the grid")
    }

    /// Keeps the smallest `m` whose leading eigenvalues explain `fraction` of
    /// the total trace, capped at the sample size `n`.
    pub fn truncate(&self, n: usize, fraction: f64) -> Result<EigenBasis> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "basis fraction must lie in (0, 1], got {fraction}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "sample size must be positive".into(),
            ));
        }
        let target = fraction * self.total_trace;
        let mut cumulative = 0.0;
        let mut m = self.len();
        for (l, theta) in self.eigenvalues.iter().enumerate() {
            cumulative += theta;
            if cumulative >= target {
                m = l + 1;
                break;
            }
        }
        Ok(self.leading(m.min(n)))
    }

    /// The first `m` components, with `total_trace` kept.
    pub fn leading(&self, m: usize) -> EigenBasis {
        let m = m.clamp(1, self.len());
        let g = self.grid.len();
        EigenBasis {
            grid: self.grid.clone(),
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenfunctions: self.eigenfunctions[..m * g].to_vec(),
            total_trace: self.total_trace,
        }
    }
}

/// Free-function form of [`EigenBasis::truncate`].
pub fn truncate_basis(basis: &EigenBasis, n: usize, fraction: f64) -> Result<EigenBasis> {
    basis.truncate(n, fraction)
}

/// Every eigenvalue of the symmetrized operator matrix, in descending order,
/// with the matching eigenvectors as columns.
fn operator_eigen(spec: &KernelSpec, grid: &Grid) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut a = spec.gram(grid);
    let g = grid.len();
    for r in 0..g {
        for c in 0..g {
            a[(r, c)] *= sqrt_w[r] * sqrt_w[c];
        }
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(g, g, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// All eigenvalues of the discretized operator, including those the basis
/// floors away. Mostly useful for diagnostics.
pub fn operator_spectrum(spec: &KernelSpec, grid: &Grid) -> Result<Vec<f64>> {
    operator_eigen(spec, grid).map(|(values, _)| values)
}

/// Nyström eigendecomposition of the kernel integral operator on `grid`.
pub fn build_basis(spec: &KernelSpec, grid: Arc<Grid>) -> Result<EigenBasis> {
    let (values, vectors) = operator_eigen(spec, &grid)?;
    let g = grid.len();
    let top = values[0];
    if !top.is_finite() || top <= 0.0 {
        return Err(Error::DegenerateKernel);
    }
    let smallest = values[g - 1];
    if smallest < -PSD_SLACK * top.max(1.0) {
        return Err(Error::Numeric(format!(
            "Gram matrix is not positive semidefinite (eigenvalue {smallest:e})"
        )));
    }
    let floor = RELATIVE_FLOOR * top;
    let m = values.iter().take_while(|&&theta| theta > floor).count();
    if m == 0 {
        return Err(Error::DegenerateKernel);
    }

    let inv_sqrt_w: Vec<f64> = grid.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut eigenfunctions = Vec::with_capacity(m * g);
    for l in 0..m {
        let u = vectors.column(l);
        // Components this small are sign-ambiguous rounding residue.
        let sign = u
            .iter()
            .find(|x| x.abs() > 1e-8)
            .map_or(1.0, |x| x.signum());
        eigenfunctions.extend(u.iter().zip(&inv_sqrt_w).map(|(x, s)| sign * x * s));
    }
    let eigenvalues = values[..m].to_vec();
    let total_trace = eigenvalues.iter().sum();
    Ok(EigenBasis {
        grid,
        eigenvalues,
        eigenfunctions,
        total_trace,
    })
}
