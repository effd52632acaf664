//! Benchmark systems: the actuated mass-spring-damper under proportional
//! feedback, the delay/sensor feedback loops, and the vegetation grazing
//! model with two alternative stable states.

use std::str::FromStr;

use nalgebra::DMatrix;

use super::linear::{
    tf_feedback, tf_feedback_with, tf_series, tf_to_state_space, Polynomial, StateSpaceModel,
    TransferFunction,
};
use crate::error::{Error, Result};

/// Mass-spring-damper with a first-order actuator and gain `k_gain` on
/// position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdParams {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    /// Actuator rate constant (s).
    pub tau: f64,
    /// Controller gain; positive gains regulate toward zero.
    pub k_gain: f64,
}

impl MsdParams {
    /// m = 1, d = 0.9, k = 0.8, tau = 5.
    pub fn reference(k_gain: f64) -> Self {
        Self {
            mass: 1.0,
            damping: 0.9,
            stiffness: 0.8,
            tau: 5.0,
            k_gain,
        }
    }

    pub fn with_gain(self, k_gain: f64) -> Self {
        Self { k_gain, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.mass, self.damping, self.stiffness, self.tau];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !self.k_gain.is_finite() {
            return Err(Error::Config(format!(
                "mass, damping, stiffness and tau must be > 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Closed-loop characteristic polynomial, monic:
    /// `s^3 + (d/m + 1/tau) s^2 + (k/m + d/(m tau)) s + (k + K)/(m tau)`.
    pub fn characteristic_polynomial(&self) -> Polynomial {
        let (m, d, k, tau) = (self.mass, self.damping, self.stiffness, self.tau);
        Polynomial::new(vec![
            1.0,
            d / m + 1.0 / tau,
            k / m + d / (m * tau),
            (k + self.k_gain) / (m * tau),
        ])
    }

    /// Position response to actuator output, `1 / (m s^2 + d s + k)`.
    pub fn plant(&self) -> TransferFunction {
        TransferFunction::new(vec![1.0], vec![self.mass, self.damping, self.stiffness])
            .expect("positive mass")
    }

    /// First-order actuator `1 / (tau s + 1)`.
    pub fn actuator(&self) -> TransferFunction {
        TransferFunction::new(vec![1.0], vec![self.tau, 1.0]).expect("positive tau")
    }

    /// Loop plant seen by the controller: actuator followed by the MSD.
    pub fn loop_plant(&self) -> TransferFunction {
        tf_series(&self.actuator(), &self.plant())
    }
}

/// Closed-loop state matrix over states (x, x', u) with the controller
/// `u~ = -K x` folded in. The input matrix injects independent noise into
/// the x and x' equations only.
pub fn msd_closed_loop(p: &MsdParams) -> Result<StateSpaceModel> {
    p.validate()?;
    let (m, d, k, tau, kg) = (p.mass, p.damping, p.stiffness, p.tau, p.k_gain);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(3, 3, &[
        0.0,          1.0,     0.0,
        -k / m,       -d / m,  1.0 / m,
        -kg / tau,    0.0,     -1.0 / tau,
    ]);
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(3, 2, &[
        1.0, 0.0,
        0.0, 1.0,
        0.0, 0.0,
    ]);
    let c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    let dm = DMatrix::zeros(1, 2);
    StateSpaceModel::new(a, b, c, dm, vec!["x".into(), "xdot".into(), "u".into()])
}

/// The feedback loops used to show how actuator lag and sensor resonance
/// destabilize a well-tuned PI loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoxSystem {
    /// PI control of the second-order plant.
    Box1Nominal,
    /// Same controller with a slow actuator `1/(2s+1)`.
    Box1Actuated,
    /// Second-order plant in the loop without extra dynamics.
    Box2Nominal,
    /// Fast actuator `1/(0.1s+1)` only.
    Box2DelayOnly,
    /// Resonant sensor in the return path only.
    Box2SensorOnly,
    /// Fast actuator and resonant sensor together.
    Box2Combined,
}

impl BoxSystem {
    pub const ALL: [BoxSystem; 6] = [
        BoxSystem::Box1Nominal,
        BoxSystem::Box1Actuated,
        BoxSystem::Box2Nominal,
        BoxSystem::Box2DelayOnly,
        BoxSystem::Box2SensorOnly,
        BoxSystem::Box2Combined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoxSystem::Box1Nominal => "box1_nominal",
            BoxSystem::Box1Actuated => "box1_actuated",
            BoxSystem::Box2Nominal => "box2_nominal",
            BoxSystem::Box2DelayOnly => "box2_delay_only",
            BoxSystem::Box2SensorOnly => "box2_sensor_only",
            BoxSystem::Box2Combined => "box2_combined",
        }
    }

    /// Reference-to-output closed-loop transfer function.
    pub fn closed_loop_tf(&self) -> Result<TransferFunction> {
        let plant = second_order(1.0, 0.5);
        let pi = TransferFunction::new(vec![4.5, 0.5], vec![1.0, 0.0])?;
        let slow_act = TransferFunction::new(vec![1.0], vec![2.0, 1.0])?;
        let fast_act = TransferFunction::new(vec![1.0], vec![0.1, 1.0])?;
        let sensor = TransferFunction::new(vec![4.5 * 4.5], vec![1.0, 1.35, 4.5 * 4.5])?;
        let forward = |act: Option<&TransferFunction>| match act {
            Some(a) => tf_series(&tf_series(&pi, a), &plant),
            None => tf_series(&pi, &plant),
        };
        match self {
            BoxSystem::Box1Nominal | BoxSystem::Box2Nominal => tf_feedback(&forward(None)),
            BoxSystem::Box1Actuated => tf_feedback(&forward(Some(&slow_act))),
            BoxSystem::Box2DelayOnly => tf_feedback(&forward(Some(&fast_act))),
            BoxSystem::Box2SensorOnly => tf_feedback_with(&forward(None), &sensor),
            BoxSystem::Box2Combined => tf_feedback_with(&forward(Some(&fast_act)), &sensor),
        }
    }
}

impl FromStr for BoxSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoxSystem::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown box system '{s}'")))
    }
}

/// `wn^2 / (s^2 + 2 zeta wn s + wn^2)`.
pub fn second_order(wn: f64, zeta: f64) -> TransferFunction {
    TransferFunction::new(vec![wn * wn], vec![1.0, 2.0 * zeta * wn, wn * wn]).expect("valid")
}

/// Closed-loop state-space realization of a named loop.
pub fn box_system(which: BoxSystem) -> Result<StateSpaceModel> {
    tf_to_state_space(&which.closed_loop_tf()?)
}

/// Logistic vegetation growth with saturating (Holling type III) grazing
/// and multiplicative noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrazingParams {
    /// Growth rate (1/day).
    pub r: f64,
    /// Carrying capacity.
    pub capacity: f64,
    /// Consumption rate; the critical parameter.
    pub c: f64,
    /// Half-saturation constant.
    pub h: f64,
    /// Noise intensity.
    pub sigma: f64,
}

impl GrazingParams {
    /// r = 1, K = 10, h = 1, sigma = 0.03.
    pub fn reference(c: f64) -> Self {
        Self {
            r: 1.0,
            capacity: 10.0,
            c,
            h: 1.0,
            sigma: 0.03,
        }
    }

    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.capacity, self.c, self.h];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!(
                "grazing parameters must be > 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn drift_unchecked(&self, v: f64) -> f64 {
        let v2 = v * v;
        self.r * v * (1.0 - v / self.capacity) - self.c * v2 / (v2 + self.h * self.h)
    }

    pub(crate) fn drift_slope(&self, v: f64) -> f64 {
        let h2 = self.h * self.h;
        let den = v * v + h2;
        self.r - 2.0 * self.r * v / self.capacity - self.c * 2.0 * v * h2 / (den * den)
    }

    /// Non-zero equilibria are the positive real roots of
    /// `-(r/K) V^3 + r V^2 - (r h^2 / K + c) V + r h^2`.
    pub fn equilibrium_cubic(&self) -> Polynomial {
        let (r, k, h2) = (self.r, self.capacity, self.h * self.h);
        Polynomial::new(vec![-r / k, r, -(r * h2 / k + self.c), r * h2])
    }

    /// Positive equilibria in ascending order, each with its stability.
    pub fn equilibria(&self) -> Vec<Equilibrium> {
        let cubic = self.equilibrium_cubic();
        let mut roots: Vec<f64> = cubic
            .roots()
            .into_iter()
            .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()) && z.re > 0.0)
            .map(|z| polish_root(&cubic, z.re))
            .collect();
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        roots
            .into_iter()
            .map(|v| Equilibrium {
                value: v,
                stable: self.drift_slope(v) < 0.0,
            })
            .collect()
    }

    /// The stable equilibrium on the high-vegetation branch, i.e. above the
    /// fold with the largest `c`. `None` once that fold has been passed.
    pub fn high_equilibrium(&self) -> Option<f64> {
        let floor = self.folds().last().map(|&(_, v)| v).unwrap_or(0.0);
        self.equilibria()
            .into_iter()
            .rev()
            .find(|e| e.stable && e.value > floor)
            .map(|e| e.value)
    }

    /// Saddle-node folds `(c, V)` where an equilibrium pair appears or
    /// vanishes, ordered by `c`.
    ///
    /// Along the equilibrium curve `c(V) = r (1 - V/K)(V^2 + h^2) / V`,
    /// folds are the stationary points, i.e. positive roots of
    /// `(2/K) V^3 - V^2 + h^2`.
    pub fn folds(&self) -> Vec<(f64, f64)> {
        let h2 = self.h * self.h;
        let cubic = Polynomial::new(vec![2.0 / self.capacity, -1.0, 0.0, h2]);
        let mut out: Vec<(f64, f64)> = cubic
            .roots()
            .into_iter()
            .filter(|z| z.im.abs() <= 1e-7 && z.re > 0.0)
            .map(|z| {
                let v = polish_root(&cubic, z.re);
                let c = self.r * (1.0 - v / self.capacity) * (v * v + h2) / v;
                (c, v)
            })
            .filter(|(c, _)| *c > 0.0)
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub value: f64,
    pub stable: bool,
}

fn polish_root(p: &Polynomial, mut x: f64) -> f64 {
    let dp = p.derivative();
    for _ in 0..8 {
        let d = dp.eval_real(x);
        if d == 0.0 {
            break;
        }
        let step = p.eval_real(x) / d;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// `dV/dt = r V (1 - V/K) - c V^2 / (V^2 + h^2)`.
pub fn grazing_drift(v: f64, p: &GrazingParams) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("biomass must be >= 0, got {v}")));
    }
    Ok(p.drift_unchecked(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msd_matrix_entries() {
        let m = msd_closed_loop(&MsdParams::reference(0.0)).unwrap();
        assert_eq!(
            m.a.row(2).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, -0.2]
        );
        assert_eq!(m.b.ncols(), 2);
        assert_eq!(m.state_labels, vec!["x", "xdot", "u"]);
    }

    #[test]
    fn msd_characteristic_polynomial() {
        let p = MsdParams::reference(2.0).characteristic_polynomial();
        let expect = [1.0, 1.1, 0.98, 0.16 + 0.4];
        for (a, b) in p.coeffs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn msd_validation() {
        let mut p = MsdParams::reference(1.0);
        p.tau = 0.0;
        assert!(msd_closed_loop(&p).is_err());
    }

    #[test]
    fn box_loop_polynomials() {
        let t = BoxSystem::Box1Nominal.closed_loop_tf().unwrap();
        assert_eq!(t.den.coeffs(), &[1.0, 1.0, 5.5, 0.5]);
        let t = BoxSystem::Box1Actuated.closed_loop_tf().unwrap();
        assert_eq!(t.den.coeffs(), &[2.0, 3.0, 3.0, 5.5, 0.5]);
        assert_eq!(
            "box2_combined".parse::<BoxSystem>().unwrap(),
            BoxSystem::Box2Combined
        );
        assert!("box3".parse::<BoxSystem>().is_err());
    }

    #[test]
    fn grazing_drift_values() {
        let p = GrazingParams::reference(2.0);
        assert_eq!(grazing_drift(0.0, &p).unwrap(), 0.0);
        let v = grazing_drift(10.0, &p).unwrap();
        assert!((v - (-200.0 / 101.0)).abs() < 1e-12);
        assert!(grazing_drift(-0.1, &p).is_err());
    }

    #[test]
    fn grazing_equilibria_structure() {
        let one = GrazingParams::reference(1.0).equilibria();
        assert_eq!(one.len(), 1);
        assert!(one[0].stable && (one[0].value - 8.889).abs() < 1e-3);
        let two = GrazingParams::reference(2.0).equilibria();
        assert_eq!(two.len(), 3);
        assert_eq!(
            two.iter().map(|e| e.stable).collect::<Vec<_>>(),
            vec![true, false, true]
        );
        assert!(GrazingParams::reference(3.0).high_equilibrium().is_none());
        assert!(GrazingParams::reference(3.0).equilibria()[0].value < 1.0);
        let hi = GrazingParams::reference(1.0).high_equilibrium().unwrap();
        assert!((hi - one[0].value).abs() < 1e-12);
    }
}
