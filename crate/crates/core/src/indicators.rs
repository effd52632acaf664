//! Critical-slowing-down indicators: moving-average detrending followed by
//! sliding-window lag-1 autocorrelation (Pearson) and variance.
//!
//! Indicator values are attached to the sample that closes their window, so
//! the monitor is causal in trailing mode. Samples without a complete
//! window carry `None` rather than a NaN.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use log::warn;

use crate::error::{Error, Result};
use crate::preprocess::PreprocessConfig;
use crate::series::{MultiChannelRecord, UniformSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetrendMode {
    /// Mean over the window ending at the sample (causal).
    #[default]
    Trailing,
    /// Mean over a window centered on the sample (odd window).
    Centered,
}

impl std::str::FromStr for DetrendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trailing" => Ok(Self::Trailing),
            "centered" => Ok(Self::Centered),
            other => Err(Error::Config(format!("unknown detrend mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetrendConfig {
    pub window: usize,
    pub mode: DetrendMode,
}

impl DetrendConfig {
    pub fn trailing(window: usize) -> Self {
        Self {
            window,
            mode: DetrendMode::Trailing,
        }
    }

    pub fn centered(window: usize) -> Self {
        Self {
            window,
            mode: DetrendMode::Centered,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            DetrendMode::Trailing if self.window < 2 => Err(Error::Config(format!(
                "trailing detrend window must be >= 2, got {}",
                self.window
            ))),
            DetrendMode::Centered if self.window < 3 || self.window.is_multiple_of(2) => {
                Err(Error::Config(format!(
                    "centered detrend window must be odd and >= 3, got {}",
                    self.window
                )))
            }
            _ => Ok(()),
        }
    }

    /// Number of input samples before the first residual.
    pub fn leading_undefined(&self) -> usize {
        match self.mode {
            DetrendMode::Trailing => self.window - 1,
            DetrendMode::Centered => self.window / 2,
        }
    }

    /// Number of input samples after the last residual.
    pub fn trailing_undefined(&self) -> usize {
        match self.mode {
            DetrendMode::Trailing => 0,
            DetrendMode::Centered => self.window / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ac1Config {
    pub window: usize,
    /// Emit every `stride`-th window; 1 is dense.
    pub stride: usize,
}

impl Ac1Config {
    pub fn new(window: usize) -> Self {
        Self { window, stride: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 {
            return Err(Error::Config(format!(
                "AC1 window must be >= 3, got {}",
                self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-sample indicator values aligned to a source series.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub sample_rate_hz: f64,
    pub start_time: f64,
    pub values: Vec<Option<f64>>,
    /// Index of the first defined value, or `values.len()` if none is.
    pub first_valid_index: usize,
}

impl IndicatorSeries {
    fn from_values(sample_rate_hz: f64, start_time: f64, values: Vec<Option<f64>>) -> Self {
        let first_valid_index = values
            .iter()
            .position(Option::is_some)
            .unwrap_or(values.len());
        Self {
            sample_rate_hz,
            start_time,
            values,
            first_valid_index,
        }
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate_hz
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    pub fn defined_values(&self) -> Vec<f64> {
        self.defined().collect()
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn undefined_count(&self) -> usize {
        self.values.len() - self.defined_count()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn padded(mut self, front: usize, back: usize) -> Self {
        let mut values = vec![None; front];
        values.append(&mut self.values);
        values.extend(std::iter::repeat_n(None, back));
        let start = self.start_time - front as f64 / self.sample_rate_hz;
        Self::from_values(self.sample_rate_hz, start, values)
    }
}

/// Subtracts a moving average. The residual series only covers samples with
/// a complete window; its start time is shifted accordingly.
pub fn detrend_moving_average(input: &UniformSeries, cfg: &DetrendConfig) -> Result<UniformSeries> {
    cfg.validate()?;
    let x = input.values();
    if x.len() <= cfg.window {
        return Err(Error::TooShort {
            needed: cfg.window,
            got: x.len(),
        });
    }
    let w = cfg.window;
    let lead = cfg.leading_undefined();
    let n_out = x.len() - lead - cfg.trailing_undefined();
    let residual = (0..n_out)
        .map(|k| {
            let i = k + lead;
            let lo = i - lead;
            // x[i] - mean(window), written against x[i] so offsets cancel first
            let s: f64 = x[lo..lo + w].iter().map(|v| v - x[i]).sum();
            -s / w as f64
        })
        .collect();
    UniformSeries::new(input.sample_rate_hz(), input.time_at(lead), residual)
}

/// One-in/one-out lag-1 autocorrelation and variance over the last `window`
/// samples, O(window) memory.
///
/// Running sums are kept relative to an anchor that is reset to the window
/// mean (with an exact recomputation) every `window` pushes, which bounds
/// both drift and cancellation.
#[derive(Debug, Clone)]
pub struct StreamingAc1 {
    window: usize,
    buf: VecDeque<f64>,
    anchor: f64,
    sum: f64,
    sum_sq: f64,
    sum_lag: f64,
    // lengths of the runs of identical values ending at the newest and the
    // second-newest sample
    run: usize,
    prev_run: usize,
    since_anchor: usize,
}

impl StreamingAc1 {
    pub fn new(window: usize) -> Result<Self> {
        Ac1Config::new(window).validate()?;
        Ok(Self {
            window,
            buf: VecDeque::with_capacity(window + 1),
            anchor: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            sum_lag: 0.0,
            run: 0,
            prev_run: 0,
            since_anchor: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.window
    }

    pub fn push(&mut self, x: f64) {
        self.prev_run = self.run;
        self.run = match self.buf.back() {
            Some(&last) if last == x => self.run + 1,
            _ => 1,
        };
        if self.buf.is_empty() {
            self.anchor = x;
        }
        let y = x - self.anchor;
        if let Some(&last) = self.buf.back() {
            self.sum_lag += (last - self.anchor) * y;
        }
        self.sum += y;
        self.sum_sq += y * y;
        self.buf.push_back(x);
        if self.buf.len() > self.window {
            let old = self.buf.pop_front().unwrap() - self.anchor;
            let next = self.buf[0] - self.anchor;
            self.sum -= old;
            self.sum_sq -= old * old;
            self.sum_lag -= old * next;
        }
        self.since_anchor += 1;
        if self.since_anchor >= self.window && self.is_full() {
            self.reanchor();
        }
    }

    fn reanchor(&mut self) {
        let n = self.buf.len() as f64;
        self.anchor = self.buf.iter().sum::<f64>() / n;
        let (mut s, mut q, mut p) = (0.0, 0.0, 0.0);
        let mut prev: Option<f64> = None;
        for &v in &self.buf {
            let y = v - self.anchor;
            s += y;
            q += y * y;
            if let Some(pv) = prev {
                p += pv * y;
            }
            prev = Some(y);
        }
        self.sum = s;
        self.sum_sq = q;
        self.sum_lag = p;
        self.since_anchor = 0;
    }

    /// Pearson correlation of the window with itself lagged by one sample;
    /// `None` during warm-up or when either lagged sub-vector is constant.
    pub fn ac1(&self) -> Option<f64> {
        if !self.is_full() {
            return None;
        }
        let w = self.window;
        // sub-vector b is the newest w-1 samples; a is the oldest w-1
        if self.run >= w - 1 || self.prev_run >= w - 1 {
            return None;
        }
        let first = self.buf[0] - self.anchor;
        let last = self.buf[w - 1] - self.anchor;
        let n = (w - 1) as f64;
        let sa = self.sum - last;
        let sb = self.sum - first;
        let qa = self.sum_sq - last * last;
        let qb = self.sum_sq - first * first;
        let cov = self.sum_lag - sa * sb / n;
        let va = qa - sa * sa / n;
        let vb = qb - sb * sb / n;
        let r = if va > 0.0 && vb > 0.0 {
            cov / (va * vb).sqrt()
        } else {
            let v: Vec<f64> = self.buf.iter().copied().collect();
            pearson_lag1(&v)?
        };
        Some(r.clamp(-1.0, 1.0))
    }

    /// Unbiased sample variance of the full window.
    pub fn variance(&self) -> Option<f64> {
        if !self.is_full() {
            return None;
        }
        if self.run >= self.window {
            return Some(0.0);
        }
        let n = self.window as f64;
        let v = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        Some(v.max(0.0))
    }
}

/// Two-pass Pearson lag-1 correlation; `None` for a zero-variance sub-vector.
pub fn pearson_lag1(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let a = &x[..x.len() - 1];
    let b = &x[1..];
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (u, v) in a.iter().zip(b) {
        let (du, dv) = (u - ma, v - mb);
        sab += du * dv;
        saa += du * du;
        sbb += dv * dv;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn sliding<F>(residual: &UniformSeries, cfg: &Ac1Config, f: F) -> Result<IndicatorSeries>
where
    F: Fn(&StreamingAc1) -> Option<f64>,
{
    cfg.validate()?;
    let mut est = StreamingAc1::new(cfg.window)?;
    let w = cfg.window;
    let values = residual
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            est.push(x);
            if i + 1 >= w && (i + 1 - w).is_multiple_of(cfg.stride) {
                f(&est)
            } else {
                None
            }
        })
        .collect();
    Ok(IndicatorSeries::from_values(
        residual.sample_rate_hz(),
        residual.start_time(),
        values,
    ))
}

/// Sliding-window lag-1 autocorrelation. Each value is attached to the last
/// sample of its window.
pub fn sliding_ac1(residual: &UniformSeries, cfg: &Ac1Config) -> Result<IndicatorSeries> {
    let out = sliding(residual, cfg, StreamingAc1::ac1)?;
    if out.defined_count() == 0 {
        warn!(
            "sliding AC1 produced no defined values ({} samples, window {})",
            residual.len(),
            cfg.window
        );
    }
    Ok(out)
}

/// Sliding-window unbiased variance (divides by W - 1).
pub fn sliding_variance(residual: &UniformSeries, cfg: &Ac1Config) -> Result<IndicatorSeries> {
    sliding(residual, cfg, StreamingAc1::variance)
}

/// Median over defined values.
pub fn median_indicator(series: &IndicatorSeries) -> Result<f64> {
    crate::stats::median(&series.defined_values()).ok_or(Error::NoDefinedValues)
}

/// Indicators of one channel, aligned to the preprocessed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelIndicators {
    pub ac1: IndicatorSeries,
    pub variance: IndicatorSeries,
    pub median_ac1: f64,
}

/// Runs preprocessing, detrending and the sliding indicators on one series.
pub fn channel_pipeline(
    series: &UniformSeries,
    pre: &PreprocessConfig,
    detrend: &DetrendConfig,
    ac1: &Ac1Config,
) -> Result<ChannelIndicators> {
    detrend.validate()?;
    ac1.validate()?;
    let conditioned = pre.apply(series)?;
    let residual = detrend_moving_average(&conditioned, detrend)?;
    let (front, back) = (detrend.leading_undefined(), detrend.trailing_undefined());
    let ac1_series = sliding_ac1(&residual, ac1)?.padded(front, back);
    let variance = sliding_variance(&residual, ac1)?.padded(front, back);
    let median_ac1 = median_indicator(&ac1_series)?;
    Ok(ChannelIndicators {
        ac1: ac1_series,
        variance,
        median_ac1,
    })
}

/// Applies [`channel_pipeline`] to every channel independently. Channels
/// are never pooled here.
pub fn run_pipeline(
    record: &MultiChannelRecord,
    pre: &PreprocessConfig,
    detrend: &DetrendConfig,
    ac1: &Ac1Config,
) -> Result<BTreeMap<String, ChannelIndicators>> {
    if record.is_empty() {
        return Err(Error::Config("record has no channels".into()));
    }
    record
        .channels()
        .map(|(name, s)| Ok((name.to_string(), channel_pipeline(s, pre, detrend, ac1)?)))
        .collect()
}

/// Searches the AC1 window in `[lo, hi]` whose pooled median AC1 over the
/// given nominal series is closest to `target`, assuming the median grows
/// with the window (small-window estimates are biased low).
pub fn calibrate_ac1_window(
    nominal: &[UniformSeries],
    detrend: &DetrendConfig,
    target: f64,
    lo: usize,
    hi: usize,
) -> Result<usize> {
    let median_at = |w: usize| -> Result<f64> {
        let mut pooled = Vec::new();
        for s in nominal {
            let r = detrend_moving_average(s, detrend)?;
            pooled.extend(sliding_ac1(&r, &Ac1Config::new(w))?.defined());
        }
        crate::stats::median(&pooled).ok_or(Error::NoDefinedValues)
    };
    let (mut a, mut b) = (lo.max(3), hi);
    if a > b {
        return Err(Error::Config(format!("empty window range [{lo}, {hi}]")));
    }
    while b - a > 1 {
        let mid = (a + b) / 2;
        if median_at(mid)? < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (ma, mb) = (median_at(a)?, median_at(b)?);
    Ok(if (ma - target).abs() <= (mb - target).abs() {
        a
    } else {
        b
    })
}

/// Writes the indicator CSV: `t,channel,ac1,variance,defined`. Only rows
/// where either indicator is defined are emitted; undefined cells are `NaN`.
pub fn write_indicator_csv<W: Write>(
    out: &mut W,
    channels: &BTreeMap<String, ChannelIndicators>,
) -> Result<()> {
    writeln!(out, "t,channel,ac1,variance,defined")?;
    for (name, ind) in channels {
        for (i, (a, v)) in ind.ac1.values.iter().zip(&ind.variance.values).enumerate() {
            if a.is_none() && v.is_none() {
                continue;
            }
            let fmt = |x: &Option<f64>| x.map_or_else(|| "NaN".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{},{},{},{},{}",
                ind.ac1.time_at(i),
                name,
                fmt(a),
                fmt(v),
                u8::from(a.is_some())
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: Vec<f64>) -> UniformSeries {
        UniformSeries::new(10.0, 0.0, v).unwrap()
    }

    #[test]
    fn trailing_detrend_arithmetic() {
        let r = detrend_moving_average(
            &series(vec![1.0, 2.0, 3.0, 4.0]),
            &DetrendConfig::trailing(3),
        )
        .unwrap();
        assert_eq!(r.values(), &[1.0, 1.0]);
        assert!((r.start_time() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn centered_detrend_alignment() {
        let r = detrend_moving_average(
            &series(vec![1.0, 2.0, 4.0, 4.0, 5.0]),
            &DetrendConfig::centered(3),
        )
        .unwrap();
        // means at i = 1, 2, 3: 7/3, 10/3, 13/3
        let expect = [2.0 - 7.0 / 3.0, 4.0 - 10.0 / 3.0, 4.0 - 13.0 / 3.0];
        for (a, b) in r.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((r.start_time() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_input_detrends_to_zero() {
        let r =
            detrend_moving_average(&series(vec![7.25; 50]), &DetrendConfig::trailing(5)).unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn detrend_config_rules() {
        assert!(DetrendConfig::trailing(1).validate().is_err());
        assert!(DetrendConfig::centered(4).validate().is_err());
        assert!(DetrendConfig::centered(3).validate().is_ok());
        assert!(
            detrend_moving_average(&series(vec![1.0; 3]), &DetrendConfig::trailing(3)).is_err()
        );
        assert!(Ac1Config::new(2).validate().is_err());
    }

    #[test]
    fn alternating_is_perfectly_anticorrelated() {
        let v: Vec<f64> = (0..600)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let ind = sliding_ac1(&series(v.clone()), &Ac1Config::new(300)).unwrap();
        assert_eq!(ind.first_valid_index, 299);
        assert!(ind.defined().all(|r| r == -1.0));

        let var = sliding_variance(&series(v), &Ac1Config::new(300)).unwrap();
        for x in var.defined() {
            assert!((x - 300.0 / 299.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_window_is_undefined() {
        let mut v = vec![0.0; 40];
        v.extend((0..40).map(|i| (i as f64).sin()));
        let ind = sliding_ac1(&series(v.clone()), &Ac1Config::new(10)).unwrap();
        assert!(ind.values[..40].iter().all(Option::is_none));
        let var = sliding_variance(&series(v), &Ac1Config::new(10)).unwrap();
        assert_eq!(var.values[20], Some(0.0));
    }

    #[test]
    fn streaming_matches_two_pass() {
        let v: Vec<f64> = (0..2000)
            .map(|i| 1e4 + (i as f64 * 0.37).sin() * 3.0 + (i as f64 * 0.011).cos() * 50.0)
            .collect();
        let ind = sliding_ac1(&series(v.clone()), &Ac1Config::new(57)).unwrap();
        for (end, r) in ind.values.iter().enumerate() {
            if let Some(r) = r {
                let exact = pearson_lag1(&v[end + 1 - 57..=end]).unwrap();
                assert!((r - exact).abs() < 1e-9, "{end}: {r} vs {exact}");
            }
        }
    }

    #[test]
    fn stride_thins_output() {
        let v: Vec<f64> = (0..100).map(|i| ((i * 7919) % 13) as f64).collect();
        let cfg = Ac1Config {
            window: 10,
            stride: 5,
        };
        let ind = sliding_ac1(&series(v), &cfg).unwrap();
        let defined: Vec<usize> = ind
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(defined[0], 9);
        assert!(defined.windows(2).all(|w| w[1] - w[0] == 5));
    }

    #[test]
    fn medians_skip_undefined() {
        let s = IndicatorSeries::from_values(1.0, 0.0, vec![Some(0.2), Some(0.5), Some(0.9)]);
        assert_eq!(median_indicator(&s).unwrap(), 0.5);
        let s = IndicatorSeries::from_values(1.0, 0.0, vec![Some(0.2), None, Some(0.8), Some(0.4)]);
        assert_eq!(median_indicator(&s).unwrap(), 0.4);
        let s = IndicatorSeries::from_values(1.0, 0.0, vec![None, None]);
        assert!(matches!(median_indicator(&s), Err(Error::NoDefinedValues)));
    }

    #[test]
    fn pipeline_rejects_empty_record() {
        let rec = MultiChannelRecord::new();
        assert!(run_pipeline(
            &rec,
            &PreprocessConfig::none(),
            &DetrendConfig::trailing(3),
            &Ac1Config::new(10)
        )
        .is_err());
    }
}
