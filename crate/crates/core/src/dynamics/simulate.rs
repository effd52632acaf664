//! Fixed-step integrators (RK4, Euler, exact linear stepping),
//! Euler-Maruyama for diagonal-noise SDEs, and seeded batch runs.

use std::io::Write;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::linear::StateSpaceModel;
use super::models::{GrazingParams, MsdParams};
use super::noise::NormalStream;
use crate::error::{Error, Result};
use crate::series::{MultiChannelRecord, UniformSeries};

/// State norm beyond which a run is flagged diverged and truncated.
pub const DIVERGENCE_BOUND: f64 = 1e9;

/// Vector field `f(x) -> dx`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A fixed-step trajectory. `states[i]` is the state at `t0 + i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub labels: Vec<String>,
    pub states: Vec<Vec<f64>>,
    /// Row index at which the state norm first exceeded the bound.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least x0")
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[k]).collect()
    }

    /// One channel as a uniform series (sample rate `1/dt`).
    pub fn channel(&self, k: usize) -> Result<UniformSeries> {
        UniformSeries::new(1.0 / self.dt, self.t0, self.component(k))
    }

    /// All states as a record, so simulator output feeds the indicator
    /// pipeline directly.
    pub fn to_record(&self) -> Result<MultiChannelRecord> {
        let mut rec = MultiChannelRecord::new();
        for (k, name) in self.labels.iter().enumerate() {
            rec.insert(name.clone(), self.channel(k)?)?;
        }
        Ok(rec)
    }

    /// CSV with a `t` column and one column per state, in label order.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "t")?;
        for l in &self.labels {
            write!(out, ",{l}")?;
        }
        writeln!(out)?;
        for (i, s) in self.states.iter().enumerate() {
            write!(out, "{}", self.time_at(i))?;
            for v in s {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Number of steps `T / dt`, required to be an integer.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= dt) {
        return Err(Error::Config(format!(
            "need dt > 0 and T >= dt, got dt={dt}, T={t_end}"
        )));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::Config(format!(
            "T={t_end} is not a multiple of dt={dt}"
        )));
    }
    Ok(n as usize)
}

fn norm_exceeds(x: &[f64]) -> bool {
    x.iter().map(|v| v * v).sum::<f64>().sqrt() > DIVERGENCE_BOUND
        || x.iter().any(|v| !v.is_finite())
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Integration scheme for [`integrate_deterministic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Euler,
}

/// Fixed-step deterministic integration of `x' = f(x)`.
pub fn integrate_deterministic(
    f: &dyn Fn(&[f64], &mut [f64]),
    x0: &[f64],
    dt: f64,
    t_end: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    let steps = step_count(dt, t_end)?;
    let n = x0.len();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut diverged_at = None;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    for i in 1..=steps {
        match scheme {
            Scheme::Euler => {
                f(&x, &mut k1);
                for j in 0..n {
                    x[j] += dt * k1[j];
                }
            }
            Scheme::Rk4 => rk4_step(
                f,
                &mut x,
                dt,
                [&mut k1, &mut k2, &mut k3, &mut k4],
                &mut tmp,
            ),
        }
        states.push(x.clone());
        if norm_exceeds(&x) {
            diverged_at = Some(i);
            break;
        }
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        labels: default_labels(n),
        states,
        diverged_at,
    })
}

pub(crate) fn rk4_step(
    f: &dyn Fn(&[f64], &mut [f64]),
    x: &mut [f64],
    dt: f64,
    k: [&mut Vec<f64>; 4],
    tmp: &mut [f64],
) {
    let n = x.len();
    let [k1, k2, k3, k4] = k;
    f(x, k1);
    for j in 0..n {
        tmp[j] = x[j] + 0.5 * dt * k1[j];
    }
    f(tmp, k2);
    for j in 0..n {
        tmp[j] = x[j] + 0.5 * dt * k2[j];
    }
    f(tmp, k3);
    for j in 0..n {
        tmp[j] = x[j] + dt * k3[j];
    }
    f(tmp, k4);
    for j in 0..n {
        x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

/// Exact stepping of `x' = A x + B u` for constant input `u`, using the
/// one-step transition `e^{A dt}` and its input integral.
pub fn integrate_linear(
    model: &StateSpaceModel,
    x0: &[f64],
    input: &[f64],
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    let steps = step_count(dt, t_end)?;
    let n = model.order();
    let m = model.b.ncols();
    if x0.len() != n || input.len() != m {
        return Err(Error::Config("state or input dimension mismatch".into()));
    }
    // augmented [[A, B], [0, 0]] exponentiates to [[Phi, Gamma], [0, I]]
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&model.a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(&model.b * dt));
    let e = aug.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, m)).into_owned();
    let drive = &gamma * DVector::from_column_slice(input);

    let mut x = DVector::from_column_slice(x0);
    let mut states = vec![x0.to_vec()];
    let mut diverged_at = None;
    for i in 1..=steps {
        x = &phi * &x + &drive;
        states.push(x.iter().copied().collect());
        if norm_exceeds(x.as_slice()) {
            diverged_at = Some(i);
            break;
        }
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        labels: model.state_labels.clone(),
        states,
        diverged_at,
    })
}

/// A diagonal-noise SDE `dx = f(x) dt + g(x) dW` with independent Wiener
/// processes per state (`g` returns per-state amplitudes; zero means the
/// equation is noise-free).
#[derive(Clone)]
pub struct SdeScenario {
    pub drift: VectorField,
    pub diffusion: VectorField,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub labels: Vec<String>,
    /// Clamp negative states to zero after every step.
    pub clamp_nonnegative: bool,
}

impl std::fmt::Debug for SdeScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeScenario")
            .field("x0", &self.x0)
            .field("dt", &self.dt)
            .field("t_end", &self.t_end)
            .field("seed", &self.seed)
            .field("labels", &self.labels)
            .field("clamp_nonnegative", &self.clamp_nonnegative)
            .finish()
    }
}

impl SdeScenario {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Euler-Maruyama: `x += f(x) dt + g(x) sqrt(dt) xi`, one standard normal
/// per state per step drawn in state order.
pub fn simulate_sde(s: &SdeScenario) -> Result<Trajectory> {
    let steps = step_count(s.dt, s.t_end)?;
    let n = s.x0.len();
    if s.labels.len() != n {
        return Err(Error::Config("one label per state required".into()));
    }
    let mut rng = NormalStream::new(s.seed);
    let sq = s.dt.sqrt();
    let mut x = s.x0.clone();
    let (mut fx, mut gx, mut xi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x.clone());
    let mut diverged_at = None;
    for i in 1..=steps {
        (s.drift)(&x, &mut fx);
        (s.diffusion)(&x, &mut gx);
        rng.fill(&mut xi);
        for j in 0..n {
            x[j] += fx[j] * s.dt + gx[j] * sq * xi[j];
            if s.clamp_nonnegative && x[j] < 0.0 {
                x[j] = 0.0;
            }
        }
        states.push(x.clone());
        if norm_exceeds(&x) {
            diverged_at = Some(i);
            break;
        }
    }
    Ok(Trajectory {
        t0: 0.0,
        dt: s.dt,
        labels: s.labels.clone(),
        states,
        diverged_at,
    })
}

/// Runs `n_runs` copies of `template`, run `i` seeded with
/// `base_seed + i`. Results are ordered by run index.
pub fn run_batch(template: &SdeScenario, n_runs: usize, base_seed: u64) -> Result<Vec<Trajectory>> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|i| simulate_sde(&template.with_seed(base_seed.wrapping_add(i as u64))))
        .collect::<Result<Vec<_>>>()?;
    let diverged = runs.iter().filter(|t| t.diverged()).count();
    if diverged > 0 {
        warn!("{diverged} of {n_runs} runs diverged");
    }
    Ok(runs)
}

/// Closed-loop MSD with additive noise of intensity `sigma` on the x and
/// x' equations, started at rest.
pub fn msd_scenario(
    p: &MsdParams,
    sigma: f64,
    dt: f64,
    t_end: f64,
    seed: u64,
) -> Result<SdeScenario> {
    let model = super::models::msd_closed_loop(p)?;
    let a = model.a.clone();
    let drift: VectorField = Arc::new(move |x, dx| {
        for (i, d) in dx.iter_mut().enumerate() {
            *d = (0..3).map(|j| a[(i, j)] * x[j]).sum();
        }
    });
    let diffusion: VectorField = Arc::new(move |_, g| {
        g[0] = sigma;
        g[1] = sigma;
        g[2] = 0.0;
    });
    Ok(SdeScenario {
        drift,
        diffusion,
        x0: vec![0.0; 3],
        dt,
        t_end,
        seed,
        labels: model.state_labels,
        clamp_nonnegative: false,
    })
}

/// Grazing model with multiplicative noise `sigma V dW`, started at the
/// high-vegetation equilibrium (or the carrying capacity past the fold).
pub fn grazing_scenario(p: &GrazingParams, dt: f64, t_end: f64, seed: u64) -> Result<SdeScenario> {
    p.validate()?;
    let p = *p;
    let x0 = p.high_equilibrium().unwrap_or(p.capacity);
    Ok(SdeScenario {
        drift: Arc::new(move |x, dx| dx[0] = p.drift_unchecked(x[0].max(0.0))),
        diffusion: Arc::new(move |x, g| g[0] = p.sigma * x[0]),
        x0: vec![x0],
        dt,
        t_end,
        seed,
        labels: vec!["V".into()],
        clamp_nonnegative: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> impl Fn(&[f64], &mut [f64]) {
        |x: &[f64], dx: &mut [f64]| dx[0] = -x[0]
    }

    #[test]
    fn rk4_exponential() {
        let tr = integrate_deterministic(&decay(), &[1.0], 0.01, 1.0, Scheme::Rk4).unwrap();
        assert_eq!(tr.len(), 101);
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let exact = (-1.0f64).exp();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let tr = integrate_deterministic(&decay(), &[1.0], dt, 1.0, Scheme::Rk4).unwrap();
                (tr.last()[0] - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn step_count_rules() {
        assert_eq!(step_count(0.1, 50.0).unwrap(), 500);
        assert!(step_count(0.3, 1.0).is_err());
        assert!(step_count(0.0, 1.0).is_err());
        assert!(step_count(1.0, 0.5).is_err());
    }

    #[test]
    fn divergence_is_flagged_not_fatal() {
        let grow = |x: &[f64], dx: &mut [f64]| dx[0] = 5.0 * x[0];
        let tr = integrate_deterministic(&grow, &[1.0], 0.1, 100.0, Scheme::Rk4).unwrap();
        assert!(tr.diverged());
        assert_eq!(tr.len(), tr.diverged_at.unwrap() + 1);
    }

    #[test]
    fn zero_noise_reduces_to_euler() {
        let p = MsdParams::reference(1.0);
        let mut s = msd_scenario(&p, 0.0, 0.1, 10.0, 3).unwrap();
        s.x0 = vec![1.0, 0.0, 0.0];
        let sde = simulate_sde(&s).unwrap();
        let det = integrate_deterministic(&*s.drift, &s.x0, 0.1, 10.0, Scheme::Euler).unwrap();
        assert_eq!(sde.states, det.states);
    }

    #[test]
    fn batch_is_ordered_and_seeded() {
        let s = msd_scenario(&MsdParams::reference(1.0), 0.25, 0.1, 5.0, 0).unwrap();
        let a = run_batch(&s, 4, 100).unwrap();
        let b = run_batch(&s, 4, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[2], simulate_sde(&s.with_seed(102)).unwrap());
        assert_eq!(
            run_batch(&s, 1, 7).unwrap()[0],
            simulate_sde(&s.with_seed(7)).unwrap()
        );
        assert!(run_batch(&s, 0, 7).is_err());
    }

    #[test]
    fn grazing_never_goes_negative() {
        let mut p = GrazingParams::reference(2.0);
        p.sigma = 2.0;
        let tr = simulate_sde(&grazing_scenario(&p, 1.0, 200.0, 11).unwrap()).unwrap();
        assert!(tr.states.iter().all(|s| s[0] >= 0.0));
    }

    #[test]
    fn trajectory_csv_loads_back() {
        let s = msd_scenario(&MsdParams::reference(0.5), 0.25, 0.1, 2.0, 5).unwrap();
        let tr = simulate_sde(&s).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let rec = crate::series::load_csv(buf.as_slice(), &[]).unwrap();
        assert_eq!(
            rec.channel("xdot").unwrap().values(),
            tr.component(1).as_slice()
        );
        assert!((rec.sample_rate_hz().unwrap() - 10.0).abs() < 1e-9);
    }
}
