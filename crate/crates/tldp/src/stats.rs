//! Small statistics helpers used by the harness and the acceptance checks.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two
/// observations.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One-sided paired t-test p-value for the alternative `mean(a - b) > 0`.
/// Degenerate cases: zero-variance differences give p = 0, 1 or 0.5 by the
/// sign of the mean difference.
pub fn paired_t_test_greater(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    assert!(a.len() >= 2, "need at least two pairs");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&diffs);
    let sd = sample_sd(&diffs);
    if sd == 0.0 {
        return if m > 0.0 {
            0.0
        } else if m < 0.0 {
            1.0
        } else {
            0.5
        };
    }
    let n = diffs.len() as f64;
    let t = m / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof");
    1.0 - dist.cdf(t)
}

/// Kolmogorov-Smirnov statistic of a sorted sample against a CDF:
/// `sup_r |F_n(r) - F(r)|` evaluated at the jump points.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_sd() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(mean(&xs), 2.5, max_relative = 1e-12);
        assert_relative_eq!(sample_sd(&xs), (5.0f64 / 3.0).sqrt(), max_relative = 1e-12);
        assert_eq!(sample_sd(&[1.0]), 0.0);
        assert_eq!(mean(&[]), 0.0);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn paired_t_test_matches_reference() {
        // Frozen against an independent implementation.
        let a = [2.1, 2.5, 1.9, 2.3, 2.8, 2.2, 2.6, 2.4, 2.0, 2.7];
        let b = [1.8, 2.2, 2.0, 1.9, 2.5, 2.1, 2.2, 2.3, 1.7, 2.4];
        let p = paired_t_test_greater(&a, &b);
        assert_relative_eq!(p, 0.000479655149561838, max_relative = 1e-9);

        // Perfectly symmetric differences: p = 0.5.
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [4.0, 3.0, 2.0, 1.0];
        assert_relative_eq!(paired_t_test_greater(&a, &b), 0.5, max_relative = 1e-9);

        // Constant positive difference: zero variance, p = 0.
        let a = [2.0, 3.0, 4.0];
        let b = [1.0, 2.0, 3.0];
        assert_eq!(paired_t_test_greater(&a, &b), 0.0);
    }

    #[test]
    fn ks_statistic_detects_shift() {
        // Exact uniform quantiles against the uniform CDF: D = 1/(2n) at
        // midpoints, so use offset quantiles and check the known value.
        let n = 100;
        let sorted: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&sorted, |x| x);
        assert_relative_eq!(d, 0.5 / n as f64, max_relative = 1e-9);

        // The same sample against a squared CDF must be far away.
        let d = ks_statistic(&sorted, |x| x * x);
        assert!(d > 0.2);
    }
}
