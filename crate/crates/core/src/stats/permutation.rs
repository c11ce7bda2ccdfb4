use crate::error::{Error, Result};

/// Largest sample size enumerated exactly (2^20 sign assignments).
pub const MAX_EXACT_PAIRS: usize = 20;

/// Exact two-sided paired sign-flip test on `mean(a - b)`.
///
/// Every one of the `2^n` sign assignments of the paired differences is
/// enumerated; the p-value is the fraction whose absolute statistic is at
/// least the observed one.
pub fn paired_permutation_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n == 0 || n > MAX_EXACT_PAIRS {
        return Err(Error::Domain(format!(
            "exact permutation test supports 1..={MAX_EXACT_PAIRS} pairs, got {n}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite paired difference".into()));
    }
    let observed = d.iter().sum::<f64>().abs();
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>();

    // Meet in the middle: every assignment is a low-half sum plus a high-half sum.
    let half = n / 2;
    let sums = |part: &[f64]| -> Vec<f64> {
        (0u32..1 << part.len())
            .map(|mask| {
                part.iter()
                    .enumerate()
                    .map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v })
                    .sum()
            })
            .collect()
    };
    let low = sums(&d[..half]);
    let high = sums(&d[half..]);
    let mut extreme: u64 = 0;
    for h in &high {
        for l in &low {
            if (l + h).abs() >= observed - tol {
                extreme += 1;
            }
        }
    }
    Ok(extreme as f64 / (1u64 << n) as f64)
}

/// Bonferroni adjustment for `m` comparisons, capped at 1.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m.max(1) as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_differences() {
        let p = paired_permutation_test(&[1.0; 10], &[0.0; 10]).unwrap();
        assert_eq!(p, 2.0 / 1024.0);
    }

    #[test]
    fn identical_samples() {
        let a = [0.3, -1.0, 2.0, 4.5];
        assert_eq!(paired_permutation_test(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn length_checks() {
        assert!(paired_permutation_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(paired_permutation_test(&[1.0; 21], &[0.0; 21]).is_err());
        assert!(paired_permutation_test(&[], &[]).is_err());
    }

    #[test]
    fn bonferroni_values() {
        assert!((bonferroni(0.001, 12) - 0.012).abs() < 1e-15);
        assert_eq!(bonferroni(0.2, 12), 1.0);
        assert_eq!(bonferroni(0.037, 1), 0.037);
    }
}
