//! Model-based resilience measures: eigenvalue stability, the critical
//! gain of the MSD loop, disk margins and backward reachable sets.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::linear::{tf_series, StateSpaceModel, TransferFunction, C64};
use crate::dynamics::models::{msd_closed_loop, GrazingParams, MsdParams};
use crate::dynamics::simulate::rk4_step;
use crate::error::{Error, Result};

/// Real-part threshold below which an eigenvalue counts as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// All eigenvalues of a small dense matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(a.complex_eigenvalues().iter().copied().collect())
}

pub fn max_real_part(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_stable(model: &StateSpaceModel) -> bool {
    eigenvalues(&model.a)
        .map(|ev| ev.iter().all(|l| l.re < -STABILITY_MARGIN))
        .unwrap_or(false)
}

/// Upper stability boundary of the MSD loop in the gain `K`, where the
/// Hurwitz condition `a2 a1 = a0` of the closed-loop cubic becomes tight.
pub fn critical_gain(p: &MsdParams) -> Result<f64> {
    p.validate()?;
    let (m, d, k, tau) = (p.mass, p.damping, p.stiffness, p.tau);
    let a2 = d / m + 1.0 / tau;
    let a1 = d / (m * tau) + k / m;
    Ok(m * tau * a2 * a1 - k)
}

/// Lower stability boundary: the constant coefficient vanishes at `K = -k`.
pub fn lower_gain_bound(p: &MsdParams) -> Result<f64> {
    p.validate()?;
    Ok(-p.stiffness)
}

/// Critical gain located by bisection on the largest eigenvalue real part.
pub fn critical_gain_bisection(p: &MsdParams, tol: f64) -> Result<f64> {
    let re = |k: f64| -> Result<f64> { max_real_part(&msd_closed_loop(&p.with_gain(k))?.a) };
    let mut lo = lower_gain_bound(p)? / 2.0;
    if re(lo)? >= 0.0 {
        return Err(Error::Domain(
            "loop is unstable at the bisection start".into(),
        ));
    }
    let mut hi = 1.0f64.max(lo + 1.0);
    while re(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain("no upper stability boundary found".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if re(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `S = 1 / (1 + plant * controller)`, with common factors cancelled.
pub fn sensitivity_function(
    plant: &TransferFunction,
    controller: &TransferFunction,
) -> Result<TransferFunction> {
    let l = tf_series(plant, controller);
    if !l.is_proper() {
        return Err(Error::Improper {
            num: l.num.degree(),
            den: l.den.degree(),
        });
    }
    if l.num.is_zero() {
        return Ok(TransferFunction::gain(1.0));
    }
    let s = TransferFunction {
        num: l.den.clone(),
        den: l.den.add(&l.num),
    };
    if s.den.is_zero() {
        return Err(Error::ZeroDenominator);
    }
    s.reduced(1e-7).map(|s| s.normalized())
}

/// MSD sensitivity for gain `K` acting on actuator and plant.
pub fn msd_sensitivity(p: &MsdParams) -> Result<TransferFunction> {
    p.validate()?;
    sensitivity_function(&p.loop_plant(), &TransferFunction::gain(p.k_gain))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskMarginResult {
    /// `1 / peak_magnitude`, or 0 for an unstable loop.
    pub dm: f64,
    /// Frequency (rad/s) of the peak; infinite if the peak is the
    /// high-frequency limit, NaN for unstable loops.
    pub peak_frequency: f64,
    /// `sup |S(jw) - 1/2|`; infinite for unstable loops.
    pub peak_magnitude: f64,
    pub unstable: bool,
}

const DM_GRID_POINTS: usize = 4000;
const DM_LOG_LO: f64 = -3.0;
const DM_LOG_HI: f64 = 3.0;

/// Balanced disk margin `1 / ||S - 1/2||_inf`.
///
/// The peak is searched on a log grid over 1e-3..1e3 rad/s, refined by
/// golden-section search around the best grid point, and compared with the
/// DC and high-frequency limits.
pub fn disk_margin(s: &TransferFunction) -> Result<DiskMarginResult> {
    if !s.is_proper() {
        return Err(Error::Improper {
            num: s.num.degree(),
            den: s.den.degree(),
        });
    }
    if s.poles().iter().any(|p| p.re >= -STABILITY_MARGIN) {
        return Ok(DiskMarginResult {
            dm: 0.0,
            peak_frequency: f64::NAN,
            peak_magnitude: f64::INFINITY,
            unstable: true,
        });
    }
    let half = C64::new(0.5, 0.0);
    let mag = |lw: f64| (s.freq_response(10f64.powf(lw)) - half).norm();

    let step = (DM_LOG_HI - DM_LOG_LO) / (DM_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..DM_GRID_POINTS)
        .into_par_iter()
        .map(|i| mag(DM_LOG_LO + i as f64 * step))
        .collect();
    let (best, _) =
        grid.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );

    let mut a = DM_LOG_LO + best.saturating_sub(1) as f64 * step;
    let mut b = DM_LOG_LO + (best + 1).min(DM_GRID_POINTS - 1) as f64 * step;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (mag(c), mag(d));
    // bracket in log10 frequency; 1e-6 decades is far below 1e-4 relative
    while b - a > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = mag(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = mag(d);
        }
    }
    let lw = 0.5 * (a + b);
    let mut peak = (mag(lw).max(grid[best]), 10f64.powf(lw));
    if grid[best] > peak.0 {
        peak = (grid[best], 10f64.powf(DM_LOG_LO + best as f64 * step));
    }
    let dc = (s.eval(C64::new(0.0, 0.0)) - half).norm();
    if dc > peak.0 {
        peak = (dc, 0.0);
    }
    let hf = if s.num.degree() == s.den.degree() && !s.num.is_zero() {
        (s.num.leading() / s.den.leading() - 0.5).abs()
    } else {
        0.5
    };
    if hf > peak.0 {
        peak = (hf, f64::INFINITY);
    }
    Ok(DiskMarginResult {
        dm: 1.0 / peak.0,
        peak_frequency: peak.1,
        peak_magnitude: peak.0,
        unstable: false,
    })
}

/// Evenly spaced coordinates along one state axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub points: Vec<f64>,
}

impl GridAxis {
    /// `n` nodes from `lo` to `hi` inclusive.
    pub fn nodes(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        let points = match n {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self {
            name: name.into(),
            points,
        }
    }

    /// Centers of `n` equal cells covering `[lo, hi]`.
    pub fn cells(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        let w = (hi - lo) / n as f64;
        Self {
            name: name.into(),
            points: (0..n).map(|i| lo + (i as f64 + 0.5) * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Membership of grid cells in a backward reachable set. For two axes the
/// membership vector is row-major with the first axis varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachableSetGrid {
    pub axes: Vec<GridAxis>,
    pub membership: Vec<bool>,
    pub horizon: f64,
    pub tolerance: f64,
    pub parameter: f64,
    /// Set when the target equilibrium no longer exists.
    pub past_fold: bool,
}

impl ReachableSetGrid {
    pub fn member_count(&self) -> usize {
        self.membership.iter().filter(|&&m| m).count()
    }

    pub fn cell_count(&self) -> usize {
        self.membership.len()
    }

    /// Coordinates of cell `idx`.
    pub fn cell(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut out = vec![0.0; self.axes.len()];
        for (k, ax) in self.axes.iter().enumerate().rev() {
            out[k] = ax.points[rem % ax.len()];
            rem /= ax.len();
        }
        out
    }

    pub fn is_member_at(&self, idx: &[usize]) -> bool {
        let flat = idx
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, ax)| acc * ax.len() + i);
        self.membership[flat]
    }

    pub fn header(&self) -> String {
        let mut h: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        h.extend(["member", "parameter", "horizon"]);
        h.join(",")
    }

    /// Cell centers plus membership, parameter and horizon columns.
    pub fn write_csv<W: Write>(&self, out: &mut W, with_header: bool) -> Result<()> {
        if with_header {
            writeln!(out, "{}", self.header())?;
        }
        for (i, &m) in self.membership.iter().enumerate() {
            for v in self.cell(i) {
                write!(out, "{v},")?;
            }
            writeln!(out, "{},{},{}", u8::from(m), self.parameter, self.horizon)?;
        }
        Ok(())
    }
}

/// Default terminal tolerance: 1% of the half-extent of the first axis.
pub fn default_tolerance(axis: &GridAxis) -> f64 {
    let lo = axis.points.first().copied().unwrap_or(0.0);
    let hi = axis.points.last().copied().unwrap_or(0.0);
    0.01 * (hi - lo).abs() / 2.0
}

/// Sampling step (model time units) of the linear reachable-set check.
pub const BRS_SAMPLE_STEP: f64 = 0.01;

/// Longest time an unstable loop is followed to see a state leave the box.
const ESCAPE_HORIZON: f64 = 5000.0;

/// Largest induced inf-norm of `e^{A t}` over `t >= 0`, sampled until the
/// norm has decayed below 1e-9. `None` for loops that are not stable.
fn transient_peak(a: &DMatrix<f64>) -> Result<Option<f64>> {
    if max_real_part(a)? >= -STABILITY_MARGIN {
        return Ok(None);
    }
    let step = (a * BRS_SAMPLE_STEP).exp();
    let mut phi = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let inf_norm = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut peak: f64 = 1.0;
    loop {
        phi = &step * phi;
        let n = inf_norm(&phi);
        peak = peak.max(n);
        if n < 1e-9 {
            return Ok(Some(peak));
        }
    }
}

/// Linear BRS on a 2-D slice of the state space: the first two states are
/// taken from the grid, the rest are fixed at `rest`. A cell is a member
/// when the full state has been captured by the target box by time `T`:
/// `||e^{A t} x0||_inf <= eps` for every `t >= T`.
///
/// The condition is checked at `T` and then at multiples of
/// [`BRS_SAMPLE_STEP`]. A stable trajectory counts as captured once its
/// norm times the transient peak of `e^{A t}` is inside the box. An
/// unstable one is followed for a long fixed time and, on a generic grid,
/// only the origin survives. Membership never shrinks as `T` grows.
pub fn brs_linear(
    model: &StateSpaceModel,
    horizon: f64,
    axes: (&GridAxis, &GridAxis),
    tolerance: f64,
    rest: &[f64],
    parameter: f64,
) -> Result<ReachableSetGrid> {
    let n = model.order();
    if n < 2 || rest.len() != n - 2 {
        return Err(Error::Config(format!(
            "need {} fixed states for a {n}-state model",
            n.saturating_sub(2)
        )));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) || !(tolerance >= 0.0) {
        return Err(Error::Config("horizon and tolerance must be >= 0".into()));
    }
    let peak = transient_peak(&model.a)?;
    let step = (&model.a * BRS_SAMPLE_STEP).exp();
    // first sampling instant strictly after T, so grids of different
    // horizons share their samples
    let k0 = (horizon / BRS_SAMPLE_STEP + 1e-9).floor() + 1.0;
    let phi_t = (&model.a * horizon).exp();
    let phi_first = (&model.a * (k0 * BRS_SAMPLE_STEP)).exp();
    let max_samples = (ESCAPE_HORIZON / BRS_SAMPLE_STEP) as usize;
    let captured = |x0: &DVector<f64>| {
        if (&phi_t * x0).amax() > tolerance {
            return false;
        }
        let mut x = &phi_first * x0;
        for _ in 0..max_samples {
            let m = x.amax();
            if m > tolerance {
                return false;
            }
            if peak.is_some_and(|p| m * p <= tolerance) {
                return true;
            }
            x = &step * x;
        }
        peak.is_none() || x.amax() <= tolerance
    };
    let (ax, ay) = axes;
    let membership: Vec<bool> = ax
        .points
        .par_iter()
        .flat_map_iter(|&x| {
            let captured = &captured;
            ay.points.iter().map(move |&y| {
                let mut x0 = DVector::zeros(n);
                x0[0] = x;
                x0[1] = y;
                for (k, r) in rest.iter().enumerate() {
                    x0[k + 2] = *r;
                }
                captured(&x0)
            })
        })
        .collect();
    Ok(ReachableSetGrid {
        axes: vec![ax.clone(), ay.clone()],
        membership,
        horizon,
        tolerance,
        parameter,
        past_fold: false,
    })
}

/// MSD BRS on the default (x, x') grid: [-5, 5]^2 at 101 x 101 nodes,
/// actuator state 0, tolerance 0.05.
pub fn msd_brs(p: &MsdParams, horizon: f64) -> Result<ReachableSetGrid> {
    let x = GridAxis::nodes("x", -5.0, 5.0, 101);
    let v = GridAxis::nodes("xdot", -5.0, 5.0, 101);
    let eps = default_tolerance(&x);
    brs_linear(
        &msd_closed_loop(p)?,
        horizon,
        (&x, &v),
        eps,
        &[0.0],
        p.k_gain,
    )
}

/// One-dimensional nonlinear BRS: every cell is integrated with RK4 and is
/// a member at a horizon once it has come within `tolerance` of `target`
/// at some step up to that horizon. `target = None` marks the
/// parameter as past the fold and yields empty sets.
pub fn brs_nonlinear(
    drift: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    axis: &GridAxis,
    target: Option<f64>,
    horizons: &[f64],
    dt: f64,
    tolerance: f64,
    parameter: f64,
) -> Result<Vec<ReachableSetGrid>> {
    if horizons.is_empty() {
        return Err(Error::Config("at least one horizon required".into()));
    }
    let steps: Vec<usize> = horizons
        .iter()
        .map(|&h| crate::dynamics::simulate::step_count(dt, h))
        .collect::<Result<_>>()?;
    let grid = |membership: Vec<bool>, h: f64, past_fold: bool| ReachableSetGrid {
        axes: vec![axis.clone()],
        membership,
        horizon: h,
        tolerance,
        parameter,
        past_fold,
    };
    let Some(target) = target else {
        return Ok(horizons
            .iter()
            .map(|&h| grid(vec![false; axis.len()], h, true))
            .collect());
    };
    let max_steps = steps.iter().copied().max().unwrap_or(0);
    // per cell: first step at which the target was reached
    let hits: Vec<Option<usize>> = axis
        .points
        .par_iter()
        .map(|&v0| {
            let mut x = vec![v0];
            let mut ks = [vec![0.0], vec![0.0], vec![0.0], vec![0.0]];
            let mut tmp = vec![0.0];
            for i in 0..=max_steps {
                if (x[0] - target).abs() <= tolerance {
                    return Some(i);
                }
                if i < max_steps {
                    let [a, b, c, d] = &mut ks;
                    rk4_step(drift, &mut x, dt, [a, b, c, d], &mut tmp);
                }
            }
            None
        })
        .collect();
    Ok(horizons
        .iter()
        .zip(&steps)
        .map(|(&h, &s)| {
            let m = hits.iter().map(|hit| hit.is_some_and(|i| i <= s)).collect();
            grid(m, h, false)
        })
        .collect())
}

/// Grazing BRS on V in [0, 12] (241 cells), target the high-vegetation
/// equilibrium, tolerance 0.06, RK4 with dt = 0.1 days.
pub fn grazing_brs(p: &GrazingParams, horizons: &[f64]) -> Result<Vec<ReachableSetGrid>> {
    p.validate()?;
    let axis = GridAxis::cells("V", 0.0, 12.0, 241);
    let eps = 0.01 * 6.0;
    let q = *p;
    let drift = move |x: &[f64], dx: &mut [f64]| dx[0] = q.drift_unchecked(x[0]);
    brs_nonlinear(&drift, &axis, p.high_equilibrium(), horizons, 0.1, eps, p.c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(num: &[f64], den: &[f64]) -> TransferFunction {
        TransferFunction::new(num.to_vec(), den.to_vec()).unwrap()
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        let d = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let mut ev: Vec<f64> = eigenvalues(&d).unwrap().iter().map(|l| l.re).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![-2.0, -1.0]);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        for l in eigenvalues(&r).unwrap() {
            assert!(l.re.abs() < 1e-12 && (l.im.abs() - 1.0).abs() < 1e-12);
        }
        assert!(eigenvalues(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn msd_eigenvalues_at_gain_three() {
        let ev = eigenvalues(&msd_closed_loop(&MsdParams::reference(3.0)).unwrap().a).unwrap();
        let real = ev.iter().find(|l| l.im.abs() < 1e-9).unwrap();
        let pair = ev.iter().find(|l| l.im > 0.0).unwrap();
        assert!((real.re + 0.92).abs() < 0.01);
        assert!((pair.re + 0.09).abs() < 0.01 && (pair.im - 0.905).abs() < 0.01);
    }

    #[test]
    fn critical_gain_values() {
        let p = MsdParams::reference(0.0);
        assert!((critical_gain(&p).unwrap() - 4.59).abs() < 1e-12);
        assert_eq!(lower_gain_bound(&p).unwrap(), -0.8);
        assert!((critical_gain_bisection(&p, 1e-10).unwrap() - 4.59).abs() < 1e-6);
        let fast = MsdParams { tau: 0.01, ..p };
        assert!(critical_gain(&fast).unwrap() > 50.0);
    }

    #[test]
    fn sensitivity_cases() {
        let s =
            sensitivity_function(&tf(&[1.0], &[1.0, 0.0]), &TransferFunction::gain(0.0)).unwrap();
        assert_eq!(s, TransferFunction::gain(1.0));
        let s =
            sensitivity_function(&tf(&[1.0], &[1.0, 0.0]), &TransferFunction::gain(1.0)).unwrap();
        assert_eq!(s.num.coeffs(), &[1.0, 0.0]);
        assert_eq!(s.den.coeffs(), &[1.0, 1.0]);
        let p = MsdParams::reference(2.0);
        let s = msd_sensitivity(&p).unwrap();
        let cp = p.characteristic_polynomial();
        for (a, b) in s.den.coeffs().iter().zip(cp.coeffs()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(
            sensitivity_function(&tf(&[1.0, 0.0, 0.0], &[1.0]), &TransferFunction::gain(1.0))
                .is_err()
        );
    }

    #[test]
    fn disk_margin_identities() {
        let r = disk_margin(&TransferFunction::gain(1.0)).unwrap();
        assert!((r.dm - 2.0).abs() < 1e-12);
        let r = disk_margin(&tf(&[1.0, 0.0], &[1.0, 1.0])).unwrap();
        assert!((r.dm - 2.0).abs() < 1e-9);
        assert!((r.dm * r.peak_magnitude - 1.0).abs() < 1e-12);
        let r = disk_margin(&tf(&[1.0, 0.0], &[1.0, -1.0])).unwrap();
        assert!(r.unstable && r.dm == 0.0);
    }

    #[test]
    fn msd_disk_margins_match_dense_sweep() {
        let frozen = [
            (0.5, 1.48600),
            (1.0, 1.10614),
            (1.5, 0.82271),
            (3.0, 0.30048),
        ];
        for (k, want) in frozen {
            let r = disk_margin(&msd_sensitivity(&MsdParams::reference(k)).unwrap()).unwrap();
            assert!(
                (r.dm - want).abs() / want < 1e-3,
                "K={k}: {} vs {want}",
                r.dm
            );
        }
        let r = disk_margin(&msd_sensitivity(&MsdParams::reference(5.0)).unwrap()).unwrap();
        assert!(r.unstable);
    }

    #[test]
    fn msd_brs_counts() {
        let frozen = [(0.5, 5855), (1.0, 913), (1.5, 213), (3.0, 13)];
        for (k, want) in frozen {
            let g = msd_brs(&MsdParams::reference(k), 12.0).unwrap();
            assert_eq!(g.member_count(), want, "K={k}");
            assert!(g.is_member_at(&[50, 50]));
        }
        let g = msd_brs(&MsdParams::reference(5.0), 12.0).unwrap();
        assert_eq!(g.member_count(), 1);
    }

    #[test]
    fn grazing_brs_counts() {
        let frozen = [
            (1.0, [218, 241, 241]),
            (1.5, [190, 241, 241]),
            (1.75, [172, 216, 241]),
            (2.0, [151, 200, 201]),
        ];
        for (c, want) in frozen {
            let sets = grazing_brs(&GrazingParams::reference(c), &[10.0, 25.0, 50.0]).unwrap();
            let got: Vec<usize> = sets.iter().map(|s| s.member_count()).collect();
            assert_eq!(got, want, "c={c}");
        }
        let past = grazing_brs(&GrazingParams::reference(3.0), &[10.0]).unwrap();
        assert!(past[0].past_fold && past[0].member_count() == 0);
    }

    #[test]
    fn grid_csv_layout() {
        let x = GridAxis::nodes("x", -1.0, 1.0, 3);
        let y = GridAxis::nodes("xdot", -1.0, 1.0, 2);
        let g = ReachableSetGrid {
            axes: vec![x, y],
            membership: vec![false, true, false, false, false, false],
            horizon: 2.0,
            tolerance: 0.1,
            parameter: 0.5,
            past_fold: false,
        };
        let mut buf = Vec::new();
        g.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,xdot,member,parameter,horizon");
        assert_eq!(lines[2], "-1,1,1,0.5,2");
        assert_eq!(lines.len(), 7);
    }
}
