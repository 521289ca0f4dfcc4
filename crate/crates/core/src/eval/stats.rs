use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::EvalError;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Mean with a percentile-bootstrap 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub half_width: f64,
    pub n: usize,
    /// Fewer than two values: the interval collapses onto the mean.
    pub degenerate: bool,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap of the mean: `resamples` means of with-replacement
/// resamples, then their 2.5% and 97.5% quantiles.
pub fn bootstrap_interval<R: Rng>(values: &[f64], resamples: usize, rng: &mut R) -> Interval {
    let n = values.len();
    let m = mean(values);
    if n < 2 || resamples == 0 {
        return Interval {
            mean: m,
            lo: m,
            hi: m,
            half_width: 0.0,
            n,
            degenerate: true,
        };
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = quantile(&means, 0.025).min(m);
    let hi = quantile(&means, 0.975).max(m);
    Interval {
        mean: m,
        lo,
        hi,
        half_width: (hi - lo) / 2.0,
        n,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn two_tailed_t_pvalue(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// Welch's unequal-variance two-sample t-test, two-tailed.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    for sample in [a, b] {
        if sample.len() < 2 {
            return Err(EvalError::TooFewValues {
                needed: 2,
                got: sample.len(),
            });
        }
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        // Both samples constant.
        let (t, p) = if ma == mb {
            (0.0, 1.0)
        } else {
            ((ma - mb).signum() * f64::INFINITY, 0.0)
        };
        return Ok(TTest {
            t,
            df: na + nb - 2.0,
            p_value: p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest {
        t,
        df,
        p_value: two_tailed_t_pvalue(t, df),
    })
}

/// `**` below 0.01, `*` below 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn identical_samples() {
        let a = [0.2, 0.4, 0.6, 0.8];
        let r = welch_ttest(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separated_samples() {
        let a: Vec<f64> = (0..30).map(|i| 10.0 + (i % 3) as f64 * 0.1).collect();
        let b: Vec<f64> = (0..30).map(|i| (i % 5) as f64 * 0.1).collect();
        assert!(welch_ttest(&a, &b).unwrap().p_value < 1e-6);
    }

    #[test]
    fn constant_but_different() {
        let r = welch_ttest(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.t.is_infinite());
    }

    #[test]
    fn too_few_values() {
        assert!(matches!(
            welch_ttest(&[1.0], &[1.0, 2.0]),
            Err(EvalError::TooFewValues { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn known_value() {
        // t = 2.0 with 10 df: two-sided p = 0.07338803...
        assert!((two_tailed_t_pvalue(2.0, 10.0) - 0.073_388_034_770_740_7).abs() < 1e-12);
        // df = 1 is Cauchy: p = 1 - 2 atan(t) / pi.
        let t = 1.7_f64;
        let cauchy = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
        assert!((two_tailed_t_pvalue(t, 1.0) - cauchy).abs() < 1e-13);
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.005), "**");
        assert_eq!(significance_stars(0.05), "*");
        assert_eq!(significance_stars(0.5), "");
    }

    #[test]
    fn constant_values_have_zero_width() {
        let i = bootstrap_interval(&[0.6; 40], 1000, &mut rng(1));
        assert_eq!(i.half_width, 0.0);
        assert_eq!((i.lo, i.hi), (i.mean, i.mean));
        assert!((i.mean - 0.6).abs() < 1e-12);
        assert!(!i.degenerate);
    }

    #[test]
    fn single_value_is_flagged() {
        let i = bootstrap_interval(&[0.4], 1000, &mut rng(1));
        assert!(i.degenerate);
        assert_eq!(i.mean, 0.4);
        assert_eq!(i.half_width, 0.0);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = bootstrap_interval(&v, 500, &mut rng(3));
        let b = bootstrap_interval(&v, 500, &mut rng(3));
        assert_eq!(a, b);
        assert!(a.lo <= a.mean && a.mean <= a.hi);
    }
}
