//! Poisson probabilities and goodness-of-fit helpers for the simulator checks.

use crate::error::{domain, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn poisson_pmf(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-lambda + k as f64 * lambda.ln() - crate::oracle::ln_factorial(k as usize)).exp()
}

/// `P(Poisson(λ) > k)`, summed from the upper tail when it is small.
pub fn poisson_tail(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        return 1.0;
    }
    if (k as f64) > lambda {
        let mut acc = 0.0;
        let mut j = k + 1;
        loop {
            let p = poisson_pmf(j, lambda);
            acc += p;
            if p < 1e-18 * acc.max(1e-300) || p == 0.0 {
                return acc;
            }
            j += 1;
        }
    }
    1.0 - (0..=k).map(|j| poisson_pmf(j, lambda)).sum::<f64>()
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of `observed` counts against cell probabilities `expected` (which must sum to
/// one, the last cell absorbing the tail). Adjacent cells are pooled from the right until
/// each expected count is at least 5.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() || observed.is_empty() {
        return domain("observed and expected cells must match");
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for i in (0..observed.len()).rev() {
        o += observed[i] as f64;
        e += expected[i] * n;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return domain("too few cells for a chi-square test");
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| crate::error::Error::Numeric(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}
