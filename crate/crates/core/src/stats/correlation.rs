use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

fn validate(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("lengths differ ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Domain("correlation needs at least 3 pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in correlation input".into()));
    }
    Ok(())
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    validate(x, y)?;
    pearson_unchecked(x, y).ok_or_else(|| Error::Domain("zero variance in correlation input".into()))
}

/// Pearson r with a percentile 95% interval from seeded paired resampling.
/// Resamples that happen to have zero variance are redrawn.
pub fn pearson_with_ci(x: &[f64], y: &[f64], resamples: usize, seed: u64) -> Result<CorrelationEstimate> {
    let r = pearson(x, y)?;
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rs = Vec::with_capacity(resamples);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let mut attempts = 0usize;
    while rs.len() < resamples {
        attempts += 1;
        if attempts > resamples.saturating_mul(20).max(1000) {
            return Err(Error::Domain("resampling keeps producing zero-variance samples".into()));
        }
        for i in 0..n {
            let j = rng.random_range(0..n);
            bx[i] = x[j];
            by[i] = y[j];
        }
        if let Some(v) = pearson_unchecked(&bx, &by) {
            rs.push(v);
        }
    }
    if rs.is_empty() {
        return Ok(CorrelationEstimate { r, ci_low: r, ci_high: r, n });
    }
    rs.sort_by(f64::total_cmp);
    Ok(CorrelationEstimate {
        r,
        ci_low: quantile(&rs, 0.025),
        ci_high: quantile(&rs, 0.975),
        n,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
