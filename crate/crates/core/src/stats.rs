//! Special functions and hypothesis tests.
//!
//! The incomplete beta function drives the t and F tails, the upper
//! incomplete gamma function drives the chi-squared tail. No continuity
//! correction is applied anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

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

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::DomainError(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

fn check_beta_args(a: f64, b: f64, x: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || !(0.0..=1.0).contains(&x) {
        return Err(Error::DomainError(format!(
            "incomplete beta needs a, b > 0 and x in [0, 1] (a={a}, b={b}, x={x})"
        )));
    }
    Ok(())
}

/// Log of the direct (non-reflected) branch, `ln I_x(a, b)`.
fn ln_beta_direct(a: f64, b: f64, x: f64) -> Result<f64> {
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b) - a.ln();
    Ok(ln_front + beta_cf(a, b, x)?.ln())
}

fn use_direct_branch(a: f64, b: f64, x: f64) -> bool {
    x < (a + 1.0) / (a + b + 2.0)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_beta_args(a, b, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let value = if use_direct_branch(a, b, x) {
        ln_beta_direct(a, b, x)?.exp()
    } else {
        1.0 - ln_beta_direct(b, a, 1.0 - x)?.exp()
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `ln I_x(a, b)`, accurate where `I_x(a, b)` itself underflows.
pub fn ln_reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_beta_args(a, b, x)?;
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    if use_direct_branch(a, b, x) {
        Ok(ln_beta_direct(a, b, x)?.min(0.0))
    } else {
        let upper = ln_beta_direct(b, a, 1.0 - x)?.exp();
        Ok((-upper).ln_1p().min(0.0))
    }
}

/// Regularized upper incomplete gamma function `Q(s, x)`.
pub fn reg_incomplete_gamma_upper(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) || !(x >= 0.0) {
        return Err(Error::DomainError(format!(
            "incomplete gamma needs s > 0 and x >= 0 (s={s}, x={x})"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let ln_front = -x + s * x.ln() - ln_gamma(s);
    let q = if x < s + 1.0 {
        // series for the lower function P
        let mut ap = s;
        let mut del = 1.0 / s;
        let mut sum = del;
        let mut converged = false;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::DomainError(
                "incomplete gamma series did not converge".into(),
            ));
        }
        1.0 - sum * ln_front.exp()
    } else {
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut converged = false;
        for i in 1..=MAX_ITER {
            let i = i as f64;
            let an = -i * (i - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::DomainError(
                "incomplete gamma continued fraction did not converge".into(),
            ));
        }
        ln_front.exp() * h
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64> {
    if t.is_nan() || !(df > 0.0) {
        return Err(Error::DomainError(format!("t tail with t={t}, df={df}")));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 0.0 } else { 1.0 });
    }
    let x = df / (df + t * t);
    let half = 0.5 * reg_incomplete_beta(0.5 * df, 0.5, x)?;
    Ok(if t >= 0.0 { half } else { 1.0 - half })
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> Result<f64> {
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    reg_incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))
}

/// `ln P(F > f)`; finite for statistics whose tail underflows `f64`.
pub fn ln_f_sf(f: f64, d1: f64, d2: f64) -> Result<f64> {
    if f <= 0.0 {
        return Ok(0.0);
    }
    if f.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    ln_reg_incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))
}

/// Upper tail of the chi-squared distribution with `k` degrees of freedom.
pub fn chi_squared_sf(x: f64, k: f64) -> Result<f64> {
    reg_incomplete_gamma_upper(0.5 * k, 0.5 * x.max(0.0))
}

/// (n, mean, standard deviation) triple; the sd uses the n - 1 denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl SampleSummary {
    pub fn new(n: usize, mean: f64, sd: f64) -> Self {
        Self { n, mean, sd }
    }

    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { n, mean, sd })
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

/// Direction of the alternative hypothesis. `Greater` means the first
/// sample's location exceeds the second's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreesOfFreedom {
    Single(f64),
    Pair(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub df: DegreesOfFreedom,
    pub p_value: f64,
    pub alternative: Alternative,
}

impl TestResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn t_p_value(t: f64, df: f64, alternative: Alternative) -> Result<f64> {
    let greater = student_t_sf(t, df)?;
    let less = student_t_sf(-t, df)?;
    let p = match alternative {
        Alternative::Greater => greater,
        Alternative::Less => less,
        Alternative::TwoSided => (2.0 * greater.min(less)).min(1.0),
    };
    Ok(p.clamp(0.0, 1.0))
}

fn require_two(s: &SampleSummary) -> Result<()> {
    if s.n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: s.n,
        });
    }
    Ok(())
}

/// Welch's unequal-variance t test on two summaries.
pub fn welch_t_test(
    a: &SampleSummary,
    b: &SampleSummary,
    alternative: Alternative,
) -> Result<TestResult> {
    require_two(a)?;
    require_two(b)?;
    let va = a.variance() / a.n as f64;
    let vb = b.variance() / b.n as f64;
    let se2 = va + vb;
    let diff = a.mean - b.mean;
    let (t, df) = if se2 == 0.0 {
        if diff == 0.0 {
            return Err(Error::DegenerateVariance);
        }
        (diff.signum() * f64::INFINITY, (a.n + b.n - 2) as f64)
    } else {
        let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
        (diff / se2.sqrt(), df)
    };
    Ok(TestResult {
        test: "welch_t".into(),
        statistic: t,
        df: DegreesOfFreedom::Single(df),
        p_value: t_p_value(t, df, alternative)?,
        alternative,
    })
}

pub fn welch_t_test_samples(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    welch_t_test(
        &SampleSummary::from_samples(a)?,
        &SampleSummary::from_samples(b)?,
        alternative,
    )
}

/// Pooled-variance Student t test on two summaries.
pub fn student_t_test(
    a: &SampleSummary,
    b: &SampleSummary,
    alternative: Alternative,
) -> Result<TestResult> {
    require_two(a)?;
    require_two(b)?;
    let df = (a.n + b.n - 2) as f64;
    let pooled = ((a.n - 1) as f64 * a.variance() + (b.n - 1) as f64 * b.variance()) / df;
    let se = (pooled * (1.0 / a.n as f64 + 1.0 / b.n as f64)).sqrt();
    let diff = a.mean - b.mean;
    let t = if se == 0.0 {
        if diff == 0.0 {
            return Err(Error::DegenerateVariance);
        }
        diff.signum() * f64::INFINITY
    } else {
        diff / se
    };
    Ok(TestResult {
        test: "student_t".into(),
        statistic: t,
        df: DegreesOfFreedom::Single(df),
        p_value: t_p_value(t, df, alternative)?,
        alternative,
    })
}

/// Two-sample pooled-variance t test on raw samples.
pub fn two_sample_t_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    student_t_test(
        &SampleSummary::from_samples(a)?,
        &SampleSummary::from_samples(b)?,
        alternative,
    )
}

/// Pearson chi-squared test of independence on a 2x2 table.
pub fn chi_squared_independence(table: [[u64; 2]; 2]) -> Result<TestResult> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::DegenerateMargin);
    }
    let total = (rows[0] + rows[1]) as f64;
    let mut chi2 = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &observed) in row.iter().enumerate() {
            let expected = rows[r] as f64 * cols[c] as f64 / total;
            chi2 += (observed as f64 - expected).powi(2) / expected;
        }
    }
    Ok(TestResult {
        test: "chi_squared_independence".into(),
        statistic: chi2,
        df: DegreesOfFreedom::Single(1.0),
        p_value: chi_squared_sf(chi2, 1.0)?,
        alternative: Alternative::TwoSided,
    })
}

pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// The 2x2 table behind Mood's median test: rows are the groups, columns
/// count values strictly above the pooled median and the rest.
pub fn median_table(a: &[f64], b: &[f64]) -> Option<[[u64; 2]; 2]> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let m = median(&pooled)?;
    let row = |s: &[f64]| {
        let above = s.iter().filter(|&&x| x > m).count() as u64;
        [above, s.len() as u64 - above]
    };
    Some([row(a), row(b)])
}

/// Mood's median test: chi-squared independence on the above/not-above
/// median table.
pub fn moods_median_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let n = a.len() + b.len();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let table = median_table(a, b).ok_or(Error::DegenerateMargin)?;
    let mut result = chi_squared_independence(table)?;
    result.test = "moods_median".into();
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Shape summary used to eyeball normality of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityDiagnostic {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman-Diaconis histogram plus moment skewness and excess kurtosis.
pub fn normality_diagnostic(samples: &[f64]) -> Result<NormalityDiagnostic> {
    const MIN_N: usize = 8;
    let n = samples.len();
    if n < MIN_N {
        return Err(Error::TooFewSamples {
            needed: MIN_N,
            got: n,
        });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let mut width = 2.0 * iqr / nf.cbrt();
    let mut n_bins = if width > 0.0 {
        ((hi - lo) / width).ceil() as usize
    } else {
        0
    };
    if n_bins == 0 || n_bins > n {
        // Sturges when the interquartile range collapses
        n_bins = (nf.log2().ceil() as usize + 1).max(1);
        width = (hi - lo) / n_bins as f64;
    }
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|k| HistogramBin {
            lower: lo + k as f64 * width,
            upper: lo + (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &x in &sorted {
        let k = (((x - lo) / width) as usize).min(n_bins - 1);
        bins[k].count += 1;
    }
    Ok(NormalityDiagnostic {
        n,
        mean,
        sd: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        bin_width: width,
        bins,
    })
}
