//! Nonparametric two-group comparison: one-sided Brunner-Munzel test,
//! probability of superiority with a Wald interval, Hodges-Lehmann shift
//! with its asymptotic interval, and the IQR-scaled effect size.
//!
//! The one-sided alternative is always "A is stochastically larger than B";
//! callers pick which group is A.

use std::fmt::Write as _;
use std::io::Write;

use log::warn;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Median with the mean-of-central-pair rule for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Quantile by linear interpolation between order statistics at the
/// 1-based position `1 + p (n - 1)`.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, p))
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// A labeled sample, e.g. the per-rotor median AC1 values of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { label, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.values.len() < needed {
            return Err(Error::GroupTooSmall {
                label: self.label.clone(),
                got: self.values.len(),
                needed,
            });
        }
        Ok(())
    }

    /// A copy with `f` applied to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            label: self.label.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Midranks (1-based, ties averaged) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end share the mean rank
        let r = (start + 1 + end) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Rank summaries shared by the test and the PS interval.
#[derive(Debug, Clone, Copy)]
struct Placements {
    n_a: f64,
    n_b: f64,
    rank_sum_a: f64,
    mean_rank_a: f64,
    mean_rank_b: f64,
    var_a: f64,
    var_b: f64,
}

impl Placements {
    fn compute(a: &[f64], b: &[f64]) -> Self {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(&pooled);
        let (ra, rb) = ranks.split_at(a.len());
        let wa = midranks(a);
        let wb = midranks(b);
        // placement of a_k among B: pooled rank minus within-group rank
        let pa: Vec<f64> = ra.iter().zip(&wa).map(|(r, w)| r - w).collect();
        let pb: Vec<f64> = rb.iter().zip(&wb).map(|(r, w)| r - w).collect();
        let (n_a, n_b) = (a.len() as f64, b.len() as f64);
        let rank_sum_a: f64 = ra.iter().sum();
        Self {
            n_a,
            n_b,
            rank_sum_a,
            mean_rank_a: rank_sum_a / n_a,
            mean_rank_b: rb.iter().sum::<f64>() / n_b,
            var_a: sample_variance(&pa),
            var_b: sample_variance(&pb),
        }
    }

    /// Mann-Whitney U of A over `nA * nB`. U is a half-integer, so this is a
    /// single rounding and equals the pairwise count exactly.
    fn ps(&self) -> f64 {
        (self.rank_sum_a - self.n_a * (self.n_a + 1.0) / 2.0) / (self.n_a * self.n_b)
    }

    /// Estimated variance of the PS estimator.
    fn ps_variance(&self) -> f64 {
        self.var_a / (self.n_a * self.n_b * self.n_b)
            + self.var_b / (self.n_b * self.n_a * self.n_a)
    }
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrunnerMunzel {
    /// Positive when A tends to exceed B.
    pub statistic: f64,
    pub df: f64,
    /// One-sided p-value for the alternative A > B.
    pub p_value: f64,
    /// True when the estimated df was non-finite and `min(nA, nB) - 1` was used.
    pub df_fallback: bool,
}

/// One-sided Brunner-Munzel test of "A stochastically larger than B", with
/// p from a t distribution on Satterthwaite-style estimated df.
pub fn brunner_munzel_one_sided(a: &SampleGroup, b: &SampleGroup) -> Result<BrunnerMunzel> {
    a.require(2)?;
    b.require(2)?;
    let p = Placements::compute(&a.values, &b.values);
    if p.var_a == 0.0 && p.var_b == 0.0 {
        return Err(Error::DegenerateVariance {
            a: a.label.clone(),
            b: b.label.clone(),
        });
    }
    let n = p.n_a + p.n_b;
    let sa = p.n_a * p.var_a;
    let sb = p.n_b * p.var_b;
    let statistic = p.n_a * p.n_b * (p.mean_rank_a - p.mean_rank_b) / (n * (sa + sb).sqrt());
    let mut df = (sa + sb).powi(2) / (sa * sa / (p.n_a - 1.0) + sb * sb / (p.n_b - 1.0));
    let mut df_fallback = false;
    if !(df.is_finite() && df > 0.0) {
        df = p.n_a.min(p.n_b) - 1.0;
        df_fallback = true;
        warn!(
            "Brunner-Munzel df not finite for '{}' vs '{}', using {df}",
            a.label, b.label
        );
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))?;
    let p_value = t.sf(statistic).clamp(0.0, 1.0);
    Ok(BrunnerMunzel {
        statistic,
        df,
        p_value,
        df_fallback,
    })
}

const Z_975: f64 = 1.959_963_984_540_054;

/// `P(A > B) + P(A = B) / 2` with a 95% Wald interval built from the
/// Brunner-Munzel variance estimate, clamped to [0, 1].
pub fn probability_of_superiority(a: &SampleGroup, b: &SampleGroup) -> Result<(f64, (f64, f64))> {
    a.require(2)?;
    b.require(2)?;
    let p = Placements::compute(&a.values, &b.values);
    let ps = p.ps();
    let se = p.ps_variance().max(0.0).sqrt();
    let ci = ((ps - Z_975 * se).max(0.0), (ps + Z_975 * se).min(1.0));
    Ok((ps, ci))
}

/// All pairwise differences `a - b`, sorted ascending.
pub fn pairwise_differences(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| x - y))
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Hodges-Lehmann shift (median of pairwise differences) and its 95%
/// interval from the normal approximation to the Mann-Whitney U statistic.
///
/// The interval endpoints are the `C`-th smallest and largest differences
/// with `C = floor(nm/2 - z * sqrt(nm(n+m+1)/12))`, at least 1. Accuracy
/// degrades below `nm < 100`.
pub fn hodges_lehmann_shift(a: &SampleGroup, b: &SampleGroup) -> Result<(f64, (f64, f64))> {
    a.require(2)?;
    b.require(2)?;
    let d = pairwise_differences(&a.values, &b.values);
    let hl = median(&d).expect("non-empty");
    let (n, m) = (a.len() as f64, b.len() as f64);
    let nm = d.len();
    let sigma = (n * m * (n + m + 1.0) / 12.0).sqrt();
    let c = ((n * m / 2.0 - Z_975 * sigma).floor() as i64).max(1) as usize;
    let c = c.min(nm.div_ceil(2));
    Ok((hl, (d[c - 1], d[nm - c])))
}

/// Inter-quartile range with linearly interpolated quartiles.
pub fn iqr(b: &SampleGroup) -> Result<f64> {
    b.require(4)?;
    let mut v = b.values.clone();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25))
}

/// One row of a group comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupComparison {
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub bm_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub ps: f64,
    pub ps_ci: (f64, f64),
    pub hl_shift: f64,
    pub hl_ci: (f64, f64),
    pub iqr_b: f64,
    /// `None` when IQR(B) is zero.
    pub hl_over_iqr: Option<f64>,
}

pub fn compare_groups(a: &SampleGroup, b: &SampleGroup) -> Result<GroupComparison> {
    let bm = brunner_munzel_one_sided(a, b)?;
    let (ps, ps_ci) = probability_of_superiority(a, b)?;
    let (hl_shift, hl_ci) = hodges_lehmann_shift(a, b)?;
    let iqr_b = iqr(b)?;
    Ok(GroupComparison {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        n_a: a.len(),
        n_b: b.len(),
        bm_statistic: bm.statistic,
        degrees_of_freedom: bm.df,
        p_value: bm.p_value,
        ps,
        ps_ci,
        hl_shift,
        hl_ci,
        iqr_b,
        hl_over_iqr: (iqr_b > 0.0).then(|| hl_shift / iqr_b),
    })
}

/// Standard normal quantile, used by tests and calibration helpers.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("valid").inverse_cdf(p)
}

pub const REPORT_HEADER: &str = "comparison,label_a,label_b,n_a,n_b,ps,ps_ci_lo,ps_ci_hi,hl_shift,hl_ci_lo,hl_ci_hi,hl_over_iqr,bm_statistic,df,p_value";

/// Writes one CSV row per named comparison.
pub fn write_report_csv<W: Write + ?Sized>(
    out: &mut W,
    rows: &[(String, GroupComparison)],
) -> Result<()> {
    let f = crate::series::fmt_float;
    writeln!(out, "{REPORT_HEADER}")?;
    for (name, c) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(name),
            csv_field(&c.label_a),
            csv_field(&c.label_b),
            c.n_a,
            c.n_b,
            f(c.ps),
            f(c.ps_ci.0),
            f(c.ps_ci.1),
            f(c.hl_shift),
            f(c.hl_ci.0),
            f(c.hl_ci.1),
            c.hl_over_iqr.map_or_else(|| "NaN".into(), f),
            f(c.bm_statistic),
            f(c.degrees_of_freedom),
            f(c.p_value),
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Aligned plain-text rendering of a report.
pub fn render_table(rows: &[(String, GroupComparison)]) -> String {
    let header = [
        "Comparison",
        "Num. A, Num. B",
        "PS [95% CI]",
        "HL shift [95% CI]",
        "HL/IQR(B)",
        "BM p-value",
    ];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|(name, c)| {
            [
                name.clone(),
                format!("{}, {}", c.n_a, c.n_b),
                format!("{:.2} [{:.2}, {:.2}]", c.ps, c.ps_ci.0, c.ps_ci.1),
                format!("{:.1e} [{:.1e}, {:.1e}]", c.hl_shift, c.hl_ci.0, c.hl_ci.1),
                c.hl_over_iqr
                    .map_or_else(|| "undef".into(), |v| format!("{v:.2}")),
                if c.p_value < 0.001 {
                    "< 0.001".into()
                } else {
                    format!("{:.3}", c.p_value)
                },
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &body {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(s, "{}", rule.join("  "));
    for r in &body {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut s, &cells);
    }
    s
}
