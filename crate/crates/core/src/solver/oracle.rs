use nalgebra::{DMatrix, DVector};

use super::Coefficients;
use crate::dataset::ScoreTensor;
use crate::error::{Error, Result};

/// Relative singular-value cutoff below which the design counts as rank
/// deficient.
const RANK_TOL: f64 = 1e-10;

/// Unpenalized least squares of `y` on the stacked scores of `active`.
pub fn oracle_fit(scores: &ScoreTensor, y: &[f64], active: &[usize]) -> Result<Coefficients> {
    let (n, p, m) = (scores.n(), scores.p(), scores.m());
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "response has {} entries, scores have {n} observations",
            y.len()
        )));
    }
    let mut active = active.to_vec();
    active.sort_unstable();
    active.dedup();
    if let Some(&j) = active.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!(
            "predictor {j} out of range (p = {p})"
        )));
    }
    let mut coeffs = Coefficients::zeros(scores.basis().clone(), p);
    if active.is_empty() {
        return Ok(coeffs);
    }
    let cols = active.len() * m;
    let design = DMatrix::from_fn(n, cols, |i, c| scores.get(i, active[c / m], c % m));
    let svd = design.svd(true, true);
    let sv = &svd.singular_values;
    let largest = sv.max();
    let smallest = if cols > n { 0.0 } else { sv.min() };
    if cols > n || smallest <= RANK_TOL * largest {
        return Err(Error::SingularDesign {
            smallest_singular_value: smallest,
        });
    }
    let rhs = DVector::from_column_slice(y);
    let solution = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?;
    for (k, &j) in active.iter().enumerate() {
        coeffs
            .row_mut(j)
            .copy_from_slice(&solution.as_slice()[k * m..(k + 1) * m]);
    }
    Ok(coeffs)
}
