//! Student-t distribution, confidence intervals, and one-sided two-sample
//! t-tests, plus the chi-square tail used by the sampler uniformity checks.

use crate::error::{EsbbError, Result};

/// Significance level used by the comparison protocol.
pub const SIGNIFICANCE: f64 = 0.05;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`; `y` must equal `1 − x` and is
/// passed separately so callers can supply it without cancellation.
fn incomplete_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, y) / b
    }
}

/// Regularized incomplete beta `I_x(a, b)` for `0 <= x <= 1`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    incomplete_beta(a, b, x, 1.0 - x)
}

/// `P(T <= t)` for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(EsbbError::InvalidArgument(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_nan() {
        return Err(EsbbError::InvalidArgument("t statistic is NaN".into()));
    }
    if t == f64::INFINITY {
        return Ok(1.0);
    }
    if t == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    let tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x, y);
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Inverse of [`student_t_cdf`] by bisection (absolute tolerance 1e-10 in t).
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EsbbError::InvalidArgument(format!("quantile level must be in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while student_t_cdf(hi, df)? < p.max(1.0 - p) {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let (mut lo, mut up) = (-hi, hi);
    while up - lo > 1e-10 * up.abs().max(1.0) {
        let mid = 0.5 * (lo + up);
        if student_t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Ok(0.5 * (lo + up))
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn sample_variance(sample: &[f64]) -> f64 {
    let m = mean(sample);
    sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sample.len() as f64 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// p-value of the alternative `mean(b) > mean(a)`.
    pub p_value_one_sided: f64,
}

impl TTestResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value_one_sided < level
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VarianceModel {
    /// Unequal variances with Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b − 2` degrees of freedom.
    Pooled,
}

/// One-sided Welch test of `H1: mean(b) > mean(a)`.
pub fn welch_one_sided(sample_a: &[f64], sample_b: &[f64]) -> Result<TTestResult> {
    t_test_one_sided(sample_a, sample_b, VarianceModel::Welch)
}

pub fn t_test_one_sided(sample_a: &[f64], sample_b: &[f64], model: VarianceModel) -> Result<TTestResult> {
    let (na, nb) = (sample_a.len(), sample_b.len());
    if na < 2 || nb < 2 {
        return Err(EsbbError::InvalidArgument(format!("t-test needs >= 2 values per sample, got {na} and {nb}")));
    }
    if sample_a.iter().chain(sample_b).any(|v| !v.is_finite()) {
        return Err(EsbbError::InvalidArgument("t-test samples must be finite".into()));
    }
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let (va, vb) = (sample_variance(sample_a), sample_variance(sample_b));
    let (na, nb) = (na as f64, nb as f64);
    let (se2, df) = match model {
        VarianceModel::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
            let df = if denom > 0.0 { se2 * se2 / denom } else { na + nb - 2.0 };
            (se2, df)
        }
        VarianceModel::Pooled => {
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            (pooled * (1.0 / na + 1.0 / nb), na + nb - 2.0)
        }
    };
    let diff = mb - ma;
    if se2 == 0.0 {
        let (t, p) = if diff == 0.0 {
            (0.0, 0.5)
        } else if diff > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        };
        return Ok(TTestResult { t_statistic: t, degrees_of_freedom: df, p_value_one_sided: p });
    }
    let t = diff / se2.sqrt();
    let p = (1.0 - student_t_cdf(t, df)?).clamp(0.0, 1.0);
    Ok(TTestResult { t_statistic: t, degrees_of_freedom: df, p_value_one_sided: p })
}

/// Two-sided one-sample t-test p-value of `H0: E[sample] = mu`.
pub fn one_sample_t_test(sample: &[f64], mu: f64) -> Result<f64> {
    if sample.len() < 2 {
        return Err(EsbbError::InvalidArgument("one-sample t-test needs >= 2 values".into()));
    }
    let n = sample.len() as f64;
    let diff = mean(sample) - mu;
    let se = (sample_variance(sample) / n).sqrt();
    if se == 0.0 {
        return Ok(if diff == 0.0 { 1.0 } else { 0.0 });
    }
    let t = diff / se;
    Ok((2.0 * student_t_cdf(-t.abs(), n - 1.0)?).min(1.0))
}

/// `(mean, half_width)` of the two-sided `level` t confidence interval.
pub fn mean_ci(sample: &[f64], level: f64) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(EsbbError::InvalidArgument("confidence interval needs >= 2 values".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EsbbError::InvalidArgument(format!("confidence level must be in (0, 1), got {level}")));
    }
    let n = sample.len() as f64;
    let m = mean(sample);
    let s = sample_variance(sample).sqrt();
    if s == 0.0 {
        return Ok((m, 0.0));
    }
    let q = student_t_quantile(0.5 * (1.0 + level), n - 1.0)?;
    Ok((m, q * s / n.sqrt()))
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut del = sum;
        let mut ap = a;
        for _ in 0..100_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (1.0 - sum * ln_front.exp()).max(0.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Pearson chi-square goodness-of-fit p-value against equal cell
/// probabilities.
pub fn chi_square_uniform_p_value(counts: &[u64]) -> f64 {
    let k = counts.len();
    if k < 2 {
        return 1.0;
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    regularized_gamma_q(0.5 * (k - 1) as f64, 0.5 * stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_closed_forms() {
        assert_eq!(student_t_cdf(0.0, 3.0).unwrap(), 0.5);
        assert!((student_t_cdf(1.0, 1.0).unwrap() - 0.75).abs() < 1e-14);
        // df = 2: F(t) = 1/2 + t / (2 sqrt(2 + t^2))
        for t in [-3.0f64, -0.4, 0.9, 5.5] {
            let exact = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0).unwrap() - exact).abs() < 1e-14);
        }
        assert!(student_t_cdf(1.0, 0.0).is_err());
        assert!(student_t_cdf(1.0, -2.0).is_err());
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for n in 1..30 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0));
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn welch_edge_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = welch_one_sided(&a, &a).unwrap();
        assert_eq!((r.t_statistic, r.p_value_one_sided), (0.0, 0.5));
        let b: Vec<f64> = a.iter().map(|x| x + 1000.0 * 1.29).collect();
        assert!(welch_one_sided(&a, &b).unwrap().p_value_one_sided < 1e-9);
        assert!(welch_one_sided(&a[..1], &b).is_err());
        let c = [2.0, 2.0, 2.0];
        assert_eq!(welch_one_sided(&c, &c).unwrap().p_value_one_sided, 0.5);
        assert_eq!(welch_one_sided(&c, &[3.0, 3.0]).unwrap().p_value_one_sided, 0.0);
        assert_eq!(welch_one_sided(&[3.0, 3.0], &c).unwrap().p_value_one_sided, 1.0);
    }

    #[test]
    fn pooled_matches_welch_for_equal_sizes_and_variances() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 3.0, 4.0];
        let w = t_test_one_sided(&a, &b, VarianceModel::Welch).unwrap();
        let p = t_test_one_sided(&a, &b, VarianceModel::Pooled).unwrap();
        assert!((w.t_statistic - p.t_statistic).abs() < 1e-14);
        assert_eq!(p.degrees_of_freedom, 4.0);
        assert!((w.degrees_of_freedom - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ci_cases() {
        assert_eq!(mean_ci(&[3.0, 3.0, 3.0], 0.95).unwrap(), (3.0, 0.0));
        let (m, h) = mean_ci(&[0.0, 2.0], 0.95).unwrap();
        assert_eq!(m, 1.0);
        assert!((h - 12.706_204_736_174_693).abs() < 1e-8, "{h}");
        let s = [1.0, 4.0, 2.5, 3.3, 0.2];
        let (_, h90) = mean_ci(&s, 0.90).unwrap();
        let (_, h95) = mean_ci(&s, 0.95).unwrap();
        let (_, h99) = mean_ci(&s, 0.99).unwrap();
        assert!(h90 < h95 && h95 < h99);
        assert!(mean_ci(&[1.0], 0.95).is_err());
        assert!(mean_ci(&s, 1.0).is_err());
    }

    #[test]
    fn one_sample_test() {
        assert_eq!(one_sample_t_test(&[0.0, 0.0], 0.0).unwrap(), 1.0);
        assert_eq!(one_sample_t_test(&[1.0, 1.0], 0.0).unwrap(), 0.0);
        // t = 1 with df = 1: two-sided p = 0.5
        let p = one_sample_t_test(&[0.0, 2.0], 0.0).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
    }

    #[test]
    fn chi_square_tail() {
        // Q(1/2, x/2) for df = 1 equals erfc(sqrt(x/2)); chi2(1) at 3.841458820694124 has tail 0.05
        let q = regularized_gamma_q(0.5, 3.841_458_820_694_124 / 2.0);
        assert!((q - 0.05).abs() < 1e-12, "{q}");
        // df = 2: Q(1, x/2) = exp(-x/2)
        for x in [0.1f64, 1.0, 7.3, 40.0] {
            assert!((regularized_gamma_q(1.0, x / 2.0) - (-x / 2.0).exp()).abs() < 1e-14);
        }
        assert_eq!(chi_square_uniform_p_value(&[10, 10, 10]), 1.0);
    }
}
