//! Measurement conditioning: Butterworth low-pass filtering realized as a
//! cascade of second-order sections, and integer decimation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::series::UniformSeries;

/// One biquad: `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl SecondOrderSection {
    /// Pole magnitudes of `z^2 + a1 z + a2`.
    pub fn pole_magnitudes(&self) -> [f64; 2] {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            let m = self.a2.sqrt();
            [m, m]
        } else {
            let s = disc.sqrt();
            [((-self.a1 + s) / 2.0).abs(), ((-self.a1 - s) / 2.0).abs()]
        }
    }

    fn response(&self, w: f64) -> (f64, f64) {
        // evaluate at z^-1 = e^{-jw}
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let nr = self.b0 + self.b1 * c1 + self.b2 * c2;
        let ni = self.b1 * s1 + self.b2 * s2;
        let dr = 1.0 + self.a1 * c1 + self.a2 * c2;
        let di = self.a1 * s1 + self.a2 * s2;
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }
}

/// A digital IIR filter as a cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    pub sections: Vec<SecondOrderSection>,
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl IirFilter {
    /// Complex frequency response at `freq_hz`, returned as (re, im).
    pub fn response(&self, freq_hz: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.sections.iter().fold((1.0, 0.0), |(ar, ai), s| {
            let (br, bi) = s.response(w);
            (ar * br - ai * bi, ar * bi + ai * br)
        })
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let (re, im) = self.response(freq_hz);
        re.hypot(im)
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections
            .iter()
            .all(|s| s.pole_magnitudes().iter().all(|m| *m < 1.0 - 1e-9))
    }

    /// Runs the cascade over raw samples with zero initial state.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        for s in &self.sections {
            // transposed direct form II
            let (mut z1, mut z2) = (0.0, 0.0);
            for x in out.iter_mut() {
                let y = s.b0 * *x + z1;
                z1 = s.b1 * *x - s.a1 * y + z2;
                z2 = s.b2 * *x - s.a2 * y;
                *x = y;
            }
        }
        out
    }
}

/// Designs a digital Butterworth low-pass of even `order` via the bilinear
/// transform with the cutoff prewarped, so `|H(cutoff)| = 1/sqrt(2)`.
pub fn design_butterworth_lowpass(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
) -> Result<IirFilter> {
    if order == 0 || !order.is_multiple_of(2) {
        return Err(Error::Design(format!(
            "unsupported order {order}: only even positive orders are supported"
        )));
    }
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::Design(format!(
            "invalid sample rate {sample_rate_hz}"
        )));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
        return Err(Error::Design(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }
    let k = 2.0 * sample_rate_hz;
    let wc = k * (PI * cutoff_hz / sample_rate_hz).tan();
    let wc2 = wc * wc;
    let sections = (0..order / 2)
        .map(|i| {
            // analog pole pair at wc * exp(±j(pi/2 + theta)), damping term 2 wc sin(theta)
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let a = 2.0 * wc * theta.sin();
            let a0 = k * k + a * k + wc2;
            let g = wc2 / a0;
            SecondOrderSection {
                b0: g,
                b1: 2.0 * g,
                b2: g,
                a1: 2.0 * (wc2 - k * k) / a0,
                a2: (k * k - a * k + wc2) / a0,
            }
        })
        .collect();
    Ok(IirFilter {
        sections,
        order,
        cutoff_hz,
        sample_rate_hz,
    })
}

/// Causal single-pass filtering with zero initial state.
pub fn filter_series(filter: &IirFilter, input: &UniformSeries) -> Result<UniformSeries> {
    let rate = input.sample_rate_hz();
    if (rate - filter.sample_rate_hz).abs() > 1e-9 * rate {
        return Err(Error::RateMismatch {
            expected: filter.sample_rate_hz,
            actual: rate,
        });
    }
    input.with_values(filter.apply(input.values()))
}

/// Keeps every `factor`-th sample starting at index 0. Does not filter.
pub fn decimate(input: &UniformSeries, factor: usize) -> Result<UniformSeries> {
    if factor == 0 {
        return Err(Error::Config("decimation factor must be >= 1".into()));
    }
    let values = input.values().iter().step_by(factor).copied().collect();
    UniformSeries::new(
        input.sample_rate_hz() / factor as f64,
        input.start_time(),
        values,
    )
}

/// Optional low-pass + decimation stage as used by the monitoring pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreprocessConfig {
    pub lowpass_hz: Option<f64>,
    pub filter_order: usize,
    pub decimate: usize,
}

impl PreprocessConfig {
    pub fn none() -> Self {
        Self {
            lowpass_hz: None,
            filter_order: 4,
            decimate: 1,
        }
    }

    pub fn apply(&self, input: &UniformSeries) -> Result<UniformSeries> {
        let filtered = match self.lowpass_hz {
            Some(fc) => {
                let f = design_butterworth_lowpass(self.filter_order, fc, input.sample_rate_hz())?;
                filter_series(&f, input)?
            }
            None => input.clone(),
        };
        if self.decimate > 1 {
            decimate(&filtered, self.decimate)
        } else if self.decimate == 0 {
            Err(Error::Config("decimation factor must be >= 1".into()))
        } else {
            Ok(filtered)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_filter() -> IirFilter {
        design_butterworth_lowpass(4, 100.0, 1000.0).unwrap()
    }

    #[test]
    fn dc_and_cutoff_gain() {
        let f = reference_filter();
        assert_eq!(f.sections.len(), 2);
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
        assert!((f.magnitude(100.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(f.is_stable());
    }

    #[test]
    fn stopband_matches_warped_analog_formula() {
        // bilinear maps 200 Hz to the analog frequency tan(0.2 pi) / tan(0.1 pi) * wc
        let ratio = (0.2 * PI).tan() / (0.1 * PI).tan();
        let expected_db = -10.0 * (1.0 + ratio.powi(8)).log10();
        let f = reference_filter();
        assert!((f.magnitude_db(200.0) - expected_db).abs() < 1e-6);
        assert!(f.magnitude_db(200.0) <= -23.0);
    }

    #[test]
    fn design_errors() {
        assert!(matches!(
            design_butterworth_lowpass(3, 100.0, 1000.0),
            Err(Error::Design(_))
        ));
        assert!(design_butterworth_lowpass(4, 500.0, 1000.0).is_err());
        assert!(design_butterworth_lowpass(4, 0.0, 1000.0).is_err());
    }

    #[test]
    fn constant_and_zero_inputs() {
        let f = reference_filter();
        let s = UniformSeries::new(1000.0, 0.0, vec![3.5; 2000]).unwrap();
        let y = filter_series(&f, &s).unwrap();
        assert_eq!(y.len(), 2000);
        assert!((y.values()[1999] - 3.5).abs() < 1e-6);

        let z = UniformSeries::new(1000.0, 0.0, vec![0.0; 100]).unwrap();
        assert!(filter_series(&f, &z)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn rate_mismatch() {
        let s = UniformSeries::new(500.0, 0.0, vec![0.0; 10]).unwrap();
        assert!(matches!(
            filter_series(&reference_filter(), &s),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn decimation_rules() {
        let s = UniformSeries::new(1000.0, 0.0, (0..1001).map(f64::from).collect()).unwrap();
        let d = decimate(&s, 2).unwrap();
        assert_eq!(d.sample_rate_hz(), 500.0);
        assert_eq!(d.len(), 501);
        assert_eq!(decimate(&s, 1).unwrap(), s);

        let short = UniformSeries::new(10.0, 0.0, vec![7.0, 8.0, 9.0]).unwrap();
        assert_eq!(decimate(&short, 5).unwrap().values(), &[7.0]);
        assert!(decimate(&short, 0).is_err());
    }
}
