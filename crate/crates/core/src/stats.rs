//! Small statistical toolkit used by the analysis layer and the tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use crate::error::{invalid, Result};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
/// distribution (Stephens' small-sample correction). Ties are handled by
/// evaluating both empirical CDFs only at distinct values, which makes the
/// test conservative for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("samples", "both samples must be nonempty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
    Ok(TestResult { statistic: d, p_value })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins after merging, as `(observed, expected)`.
    pub bins: Vec<(u64, f64)>,
}

/// Pearson goodness-of-fit test. Adjacent bins are merged left to right
/// until each expected count is at least 5; `fitted` parameters are
/// subtracted from the degrees of freedom.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], fitted: usize) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() {
        return Err(invalid("expected", "observed and expected lengths differ"));
    }
    let mut bins: Vec<(u64, f64)> = Vec::new();
    let (mut o, mut e) = (0u64, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0;
            e = 0.0;
        }
    }
    if o > 0 || e > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < fitted + 2 {
        return Err(invalid("expected", "too few bins with expected count >= 5"));
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o as f64 - e).powi(2) / e).sum();
    let dof = bins.len() - 1 - fitted;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        bins,
    })
}

/// Chi-square test that `counts` are Poisson(`mean`) draws.
pub fn poisson_gof(counts: &[u64], mean: f64) -> Result<ChiSquareResult> {
    if counts.is_empty() || !(mean > 0.0) {
        return Err(invalid("counts", "need samples and a positive mean"));
    }
    let law = Poisson::new(mean).map_err(|e| invalid("mean", e.to_string()))?;
    let top = *counts.iter().max().unwrap() as usize;
    let n = counts.len() as f64;
    let mut observed = vec![0u64; top + 2];
    for &c in counts {
        observed[c as usize] += 1;
    }
    let mut expected: Vec<f64> = (0..=top).map(|k| n * law.pmf(k as u64)).collect();
    expected.push(n * law.sf(top as u64));
    chi_square_gof(&observed, &expected, 0)
}

/// Index-of-dispersion test: `sum (x - mean)^2 / mean` is approximately
/// chi-square with `n - 1` degrees of freedom for Poisson data. Two-sided.
pub fn poisson_dispersion(counts: &[u64]) -> Result<TestResult> {
    if counts.len() < 2 {
        return Err(invalid("counts", "need at least two samples"));
    }
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mean, _) = mean_variance(&xs);
    if mean <= 0.0 {
        return Err(invalid("counts", "all counts are zero"));
    }
    let statistic = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / mean;
    let law = ChiSquared::new((counts.len() - 1) as f64).expect("positive dof");
    let p_value = (2.0 * law.cdf(statistic).min(law.sf(statistic))).min(1.0);
    Ok(TestResult { statistic, p_value })
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Sample mean and unbiased sample variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean and its standard error from non-overlapping blocks of `block`
/// consecutive values, which absorbs short-range correlation.
pub fn block_mean_se(xs: &[f64], block: usize) -> Result<(f64, f64)> {
    let block = block.max(1);
    let blocks: Vec<f64> = xs.chunks_exact(block).map(|c| c.iter().sum::<f64>() / block as f64).collect();
    if blocks.len() < 2 {
        return Err(invalid("block", "need at least two full blocks"));
    }
    let (mean, var) = mean_variance(&blocks);
    Ok((mean, (var / blocks.len() as f64).sqrt()))
}
