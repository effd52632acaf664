//! Seeded synthetic data: AR(1) processes, a rotor-damage study with a
//! planted AC1 elevation, and multi-flight records for parameter sweeps.

use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::noise::{substream_seed, NormalStream};
use crate::error::{Error, Result};
use crate::indicators::{median_indicator, sliding_ac1, Ac1Config};
use crate::series::{MultiChannelRecord, UniformSeries};

/// `x[t+1] = phi x[t] + xi[t]` with unit innovations, started from the
/// stationary distribution.
pub fn ar1_series(phi: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = NormalStream::new(seed);
    ar1_with(&mut rng, phi, n)
}

fn ar1_with(rng: &mut NormalStream, phi: f64, n: usize) -> Result<Vec<f64>> {
    if !(phi.abs() < 1.0) {
        return Err(Error::Config(format!("AR(1) needs |phi| < 1, got {phi}")));
    }
    let mut x = rng.next_normal() / (1.0 - phi * phi).sqrt();
    Ok((0..n)
        .map(|_| {
            let out = x;
            x = phi * x + rng.next_normal();
            out
        })
        .collect())
}

/// Regime-switching AR(1): calm segments use `phi_calm` with unit
/// innovations, burst segments `phi_burst` with innovations scaled by
/// `burst_noise`. Regime durations are geometric with the given means (in
/// samples).
pub fn switching_ar1(
    rng: &mut NormalStream,
    phi_calm: f64,
    phi_burst: f64,
    burst_noise: f64,
    mean_calm: f64,
    mean_burst: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(phi_calm.abs() < 1.0 && phi_burst.abs() < 1.0)
        || !(mean_calm >= 1.0 && mean_burst >= 1.0)
        || !(burst_noise > 0.0)
    {
        return Err(Error::Config("invalid switching AR(1) parameters".into()));
    }
    let duty = mean_burst / (mean_burst + mean_calm);
    let mut burst = rng.uniform() < duty;
    let mut x = rng.next_normal() / (1.0 - phi_calm * phi_calm).sqrt();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        let (phi, scale, mean) = if burst {
            (phi_burst, burst_noise, mean_burst)
        } else {
            (phi_calm, 1.0, mean_calm)
        };
        x = phi * x + scale * rng.next_normal();
        if rng.uniform() < 1.0 / mean {
            burst = !burst;
        }
    }
    Ok(out)
}

/// Median sliding AC1 of a raw (undetrended) series.
pub fn median_ac1(values: &[f64], window: usize) -> Result<f64> {
    let s = UniformSeries::new(1.0, 0.0, values.to_vec())?;
    median_indicator(&sliding_ac1(&s, &Ac1Config::new(window))?)
}

/// Finds the AR(1) coefficient whose median AC1 (window `window`, no
/// detrending) over `n` seeded samples matches `target`. Every evaluation
/// reuses the same seed, which keeps the search monotone.
pub fn calibrate_ar1_phi(target: f64, window: usize, n: usize, seed: u64) -> Result<f64> {
    if !(-0.95..=0.95).contains(&target) {
        return Err(Error::Config(format!("target AC1 {target} out of range")));
    }
    let (mut lo, mut hi) = (-0.99, 0.99);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if median_ac1(&ar1_series(mid, n, seed)?, window)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Rotor positions of a quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rotor {
    FrontLeft,
    FrontRight,
    AftLeft,
    AftRight,
}

impl Rotor {
    pub const ALL: [Rotor; 4] = [
        Rotor::FrontLeft,
        Rotor::FrontRight,
        Rotor::AftLeft,
        Rotor::AftRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rotor::FrontLeft => "front_left",
            Rotor::FrontRight => "front_right",
            Rotor::AftLeft => "aft_left",
            Rotor::AftRight => "aft_right",
        }
    }

    pub fn end(self) -> &'static str {
        match self {
            Rotor::FrontLeft | Rotor::FrontRight => "front",
            _ => "aft",
        }
    }

    pub fn side(self) -> &'static str {
        match self {
            Rotor::FrontLeft | Rotor::AftLeft => "left",
            _ => "right",
        }
    }
}

/// One median AC1 value with the flight metadata used for grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub flight: usize,
    pub damage_pct: u32,
    /// Damaged rotor, `None` for nominal flights.
    pub location: Option<Rotor>,
    pub rotor: Rotor,
    pub median_ac1: f64,
}

pub const STUDY_HEADER: &str = "flight,damage,location,end,side,rotor,median_ac1";

/// Flight plan and effect sizes of the damage study.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageStudyConfig {
    pub samples_per_rotor: usize,
    pub ac1_window: usize,
    /// Target median AC1 of nominal flights.
    pub nominal_ac1: f64,
    /// Mean coefficient elevation per damage level, `(damage_pct, shift)`.
    pub shifts: Vec<(u32, f64)>,
    /// Per-flight coefficient jitter (standard deviation).
    pub flight_jitter: f64,
    /// Per-rotor coefficient jitter (standard deviation).
    pub rotor_jitter: f64,
    /// Number of flights per (damage, location); nominal uses `location = None`.
    pub flights: Vec<(u32, Option<Rotor>, usize)>,
    pub seed: u64,
}

impl DamageStudyConfig {
    /// 50 nominal flights and the per-location flight counts of the 10% and
    /// 15% campaigns (4 medians per flight). Damage elevations are sized for
    /// a weak (10%) and a strong (15%) effect.
    pub fn reference(seed: u64) -> Self {
        use Rotor::*;
        Self {
            samples_per_rotor: 3000,
            ac1_window: 300,
            nominal_ac1: 0.5,
            shifts: vec![(0, 0.0), (10, 0.012), (15, 0.028)],
            flight_jitter: 0.02,
            rotor_jitter: 0.01,
            flights: vec![
                (0, None, 50),
                (10, Some(FrontLeft), 15),
                (10, Some(FrontRight), 40),
                (10, Some(AftLeft), 25),
                (10, Some(AftRight), 25),
                (15, Some(FrontLeft), 17),
                (15, Some(FrontRight), 32),
                (15, Some(AftLeft), 18),
                (15, Some(AftRight), 25),
            ],
            seed,
        }
    }

    fn shift(&self, damage: u32) -> Result<f64> {
        self.shifts
            .iter()
            .find(|(d, _)| *d == damage)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::Config(format!("no shift configured for {damage}% damage")))
    }
}

/// Aft damage weighs more than front damage and left more than right.
fn location_factor(loc: Option<Rotor>) -> f64 {
    match loc {
        None => 0.0,
        Some(r) => {
            let end = if r.end() == "aft" { 1.2 } else { 0.8 };
            let side = if r.side() == "left" { 1.1 } else { 0.9 };
            end * side
        }
    }
}

/// Generates the study: one AR(1) series per rotor per flight, reduced to
/// its median sliding AC1. Flight `f` draws from
/// sub-stream `f` of the seed.
pub fn damage_study(cfg: &DamageStudyConfig) -> Result<Vec<StudyRow>> {
    let phi0 = calibrate_ar1_phi(cfg.nominal_ac1, cfg.ac1_window, 20_000, cfg.seed)?;
    let mut plan = Vec::new();
    for &(damage, loc, count) in &cfg.flights {
        let shift = cfg.shift(damage)?;
        for _ in 0..count {
            plan.push((
                damage,
                loc,
                shift
                    * if loc.is_some() {
                        location_factor(loc)
                    } else {
                        1.0
                    },
            ));
        }
    }
    let rows: Vec<Vec<StudyRow>> = plan
        .par_iter()
        .enumerate()
        .map(|(flight, &(damage, location, shift))| {
            let mut rng = NormalStream::new(substream_seed(cfg.seed, flight as u64));
            let flight_phi = phi0 + shift + cfg.flight_jitter * rng.next_normal();
            Rotor::ALL
                .iter()
                .map(|&rotor| {
                    let phi =
                        (flight_phi + cfg.rotor_jitter * rng.next_normal()).clamp(-0.99, 0.99);
                    let x = ar1_with(&mut rng, phi, cfg.samples_per_rotor)?;
                    Ok(StudyRow {
                        flight,
                        damage_pct: damage,
                        location,
                        rotor,
                        median_ac1: median_ac1(&x, cfg.ac1_window)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_study_csv<W: Write>(out: &mut W, rows: &[StudyRow]) -> Result<()> {
    writeln!(out, "{STUDY_HEADER}")?;
    for r in rows {
        let (loc, end, side) = match r.location {
            Some(l) => (l.name(), l.end(), l.side()),
            None => ("none", "none", "none"),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.flight,
            r.damage_pct,
            loc,
            end,
            side,
            r.rotor.name(),
            r.median_ac1
        )?;
    }
    Ok(())
}

/// The fourteen damage comparisons as a `comparison,group_a,group_b`
/// manifest of label filters over the study table.
pub fn damage_comparisons() -> String {
    let mut s = String::from("comparison,group_a,group_b\n");
    for d in [10, 15] {
        for (name, filt) in [
            ("all rotors", String::new()),
            ("front rotors only", ";end=front".into()),
            ("aft rotors only", ";end=aft".into()),
            ("right side rotors only", ";side=right".into()),
            ("left side rotors only", ";side=left".into()),
        ] {
            s += &format!("{d}% dmg > no dmg: {name},damage={d}{filt},damage=0\n");
        }
    }
    for d in [10, 15] {
        s += &format!("aft > front: {d}% damage,damage={d};end=aft,damage={d};end=front\n");
    }
    for d in [10, 15] {
        s += &format!("left > right: {d}% damage,damage={d};side=left,damage={d};side=right\n");
    }
    s
}

/// Multi-flight data for window sweeps. Damaged flights spend most of the
/// time in quiet, strongly autocorrelated segments separated by short
/// noisy calm segments. Short AC1 windows resolve the segments; long
/// windows are dominated by the high-variance calm segments, so the
/// elevation fades as the window grows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStudyConfig {
    pub flights_per_group: usize,
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub phi_nominal: f64,
    pub phi_burst: f64,
    pub burst_noise: f64,
    pub mean_calm: f64,
    pub mean_burst: f64,
    pub flight_jitter: f64,
    /// Constant added to every sample (e.g. a rotor speed).
    pub offset: f64,
    pub seed: u64,
}

impl SweepStudyConfig {
    pub fn reference(seed: u64) -> Self {
        Self {
            flights_per_group: 12,
            samples: 4000,
            sample_rate_hz: 500.0,
            phi_nominal: 0.5,
            phi_burst: 0.85,
            burst_noise: 0.4,
            mean_calm: 100.0,
            mean_burst: 300.0,
            flight_jitter: 0.15,
            offset: 1000.0,
            seed,
        }
    }
}

/// Returns `(group, record)` pairs: nominal flights first, then damaged
/// flights; each record holds the four rotor channels.
pub fn sweep_study(cfg: &SweepStudyConfig) -> Result<Vec<(String, MultiChannelRecord)>> {
    let n = cfg.flights_per_group;
    (0..2 * n)
        .into_par_iter()
        .map(|f| {
            let damaged = f >= n;
            let mut rng = NormalStream::new(substream_seed(cfg.seed, f as u64));
            let jitter = cfg.flight_jitter * rng.next_normal();
            let mut rec = MultiChannelRecord::new();
            for rotor in Rotor::ALL {
                let calm = (cfg.phi_nominal + jitter).clamp(-0.99, 0.99);
                let x = if damaged {
                    let burst = (cfg.phi_burst + jitter).clamp(-0.99, 0.99);
                    switching_ar1(
                        &mut rng,
                        calm,
                        burst,
                        cfg.burst_noise,
                        cfg.mean_calm,
                        cfg.mean_burst,
                        cfg.samples,
                    )?
                } else {
                    ar1_with(&mut rng, calm, cfg.samples)?
                };
                let x = x.into_iter().map(|v| v + cfg.offset).collect();
                rec.insert(
                    rotor.name(),
                    UniformSeries::new(cfg.sample_rate_hz, 0.0, x)?,
                )?;
            }
            rec.metadata.insert("flight".into(), f.to_string());
            let group = if damaged { "damaged" } else { "nominal" };
            Ok((group.to_string(), rec))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_is_seeded_and_stationary() {
        let a = ar1_series(0.6, 50_000, 3).unwrap();
        assert_eq!(a, ar1_series(0.6, 50_000, 3).unwrap());
        let var = a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
        assert!((var - 1.0 / (1.0 - 0.36)).abs() < 0.1);
        assert!(ar1_series(1.0, 10, 0).is_err());
    }

    #[test]
    fn calibrated_phi_hits_target() {
        let phi = calibrate_ar1_phi(0.5, 300, 20_000, 9).unwrap();
        assert!((phi - 0.5).abs() < 0.03, "phi {phi}");
        let m = median_ac1(&ar1_series(phi, 20_000, 9).unwrap(), 300).unwrap();
        assert!((m - 0.5).abs() < 1e-3);
    }

    #[test]
    fn switching_spends_time_in_both_regimes() {
        let mut rng = NormalStream::new(1);
        let x = switching_ar1(&mut rng, 0.0, 0.95, 1.0, 50.0, 50.0, 20_000).unwrap();
        let m = median_ac1(&x, 40).unwrap();
        assert!(m > 0.2 && m < 0.9);
    }

    #[test]
    fn manifest_has_fourteen_rows() {
        let m = damage_comparisons();
        assert_eq!(m.lines().count(), 15);
        assert!(m.contains("aft > front: 15% damage,damage=15;end=aft,damage=15;end=front"));
    }

    #[test]
    fn rotor_labels() {
        assert_eq!(Rotor::AftLeft.end(), "aft");
        assert_eq!(Rotor::AftLeft.side(), "left");
        assert_eq!(Rotor::FrontRight.name(), "front_right");
    }
}
