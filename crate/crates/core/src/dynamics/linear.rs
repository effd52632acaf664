//! Polynomials, SISO transfer functions and state-space realizations.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Real polynomial, coefficients in descending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    /// Drops leading zeros; the zero polynomial becomes `[0.0]`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let first = coeffs.iter().position(|c| *c != 0.0);
        match first {
            Some(i) => Self(coeffs[i..].to_vec()),
            None => Self(vec![0.0]),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn leading(&self) -> f64 {
        self.0[0]
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.0.len().max(other.0.len());
        let pad = |p: &[f64]| {
            let mut v = vec![0.0; n - p.len()];
            v.extend_from_slice(p);
            v
        };
        let (a, b) = (pad(&self.0), pad(&other.0));
        Self::new(a.iter().zip(&b).map(|(x, y)| x + y).collect())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.0.iter().map(|c| c * k).collect())
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.0
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, c| acc * s + C64::new(*c, 0.0))
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.0.iter().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return Self::constant(0.0);
        }
        Self::new(
            self.0[..n]
                .iter()
                .enumerate()
                .map(|(i, c)| c * (n - i) as f64)
                .collect(),
        )
    }

    /// Roots as eigenvalues of the companion matrix.
    pub fn roots(&self) -> Vec<C64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let mut comp = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            comp[(0, j)] = -self.0[j + 1] / lead;
        }
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        comp.complex_eigenvalues().iter().copied().collect()
    }

    /// Monic polynomial with the given roots (conjugates must come in pairs).
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut c = vec![C64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (i, a) in c.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            c = next;
        }
        Self::new(c.iter().map(|z| z.re).collect())
    }
}

/// SISO transfer function `num(s) / den(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Polynomial,
    pub den: Polynomial,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let den = Polynomial::new(den);
        if den.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(Self {
            num: Polynomial::new(num),
            den,
        })
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::constant(1.0),
        }
    }

    pub fn is_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() <= self.den.degree()
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.num.eval(s) / self.den.eval(s)
    }

    /// Frequency response at `omega` rad/s.
    pub fn freq_response(&self, omega: f64) -> C64 {
        self.eval(C64::new(0.0, omega))
    }

    pub fn poles(&self) -> Vec<C64> {
        self.den.roots()
    }

    /// Scales so the denominator is monic.
    pub fn normalized(&self) -> Self {
        let l = self.den.leading();
        Self {
            num: self.num.scale(1.0 / l),
            den: self.den.scale(1.0 / l),
        }
    }

    /// Cancels numerator/denominator roots that coincide within `tol`
    /// (relative). Fails when a cancelled root lies on the imaginary axis.
    pub fn reduced(&self, tol: f64) -> Result<Self> {
        if self.num.is_zero() {
            return Ok(Self {
                num: Polynomial::constant(0.0),
                den: Polynomial::constant(1.0),
            });
        }
        let mut zeros = self.num.roots();
        let mut poles = self.den.roots();
        let mut cancelled = false;
        let mut i = 0;
        while i < zeros.len() {
            let z = zeros[i];
            let hit = poles
                .iter()
                .position(|p| (p - z).norm() <= tol * (1.0 + z.norm()));
            if let Some(j) = hit {
                if z.re.abs() <= tol * (1.0 + z.norm()) {
                    return Err(Error::IllPosed(format!(
                        "pole-zero cancellation on the imaginary axis at {z}"
                    )));
                }
                zeros.remove(i);
                poles.remove(j);
                cancelled = true;
            } else {
                i += 1;
            }
        }
        if !cancelled {
            return Ok(self.clone());
        }
        let k = self.num.leading() / self.den.leading();
        Ok(Self {
            num: Polynomial::from_roots(&zeros).scale(k),
            den: Polynomial::from_roots(&poles),
        })
    }
}

/// Series connection `a * b`.
pub fn tf_series(a: &TransferFunction, b: &TransferFunction) -> TransferFunction {
    TransferFunction {
        num: a.num.mul(&b.num),
        den: a.den.mul(&b.den),
    }
}

/// Unity negative feedback closure `L / (1 + L)`.
pub fn tf_feedback(open_loop: &TransferFunction) -> Result<TransferFunction> {
    tf_feedback_with(open_loop, &TransferFunction::gain(1.0))
}

/// Negative feedback with `feedback` in the return path: `G / (1 + G H)`.
pub fn tf_feedback_with(
    forward: &TransferFunction,
    feedback: &TransferFunction,
) -> Result<TransferFunction> {
    let num = forward.num.mul(&feedback.den);
    let den = forward
        .den
        .mul(&feedback.den)
        .add(&forward.num.mul(&feedback.num));
    if den.is_zero() {
        return Err(Error::ZeroDenominator);
    }
    Ok(TransferFunction { num, den })
}

/// Continuous-time state-space model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub state_labels: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        state_labels: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let ok = b.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == b.ncols()
            && state_labels.len() == n;
        if !ok {
            return Err(Error::Config("inconsistent state-space dimensions".into()));
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .chain(d.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("state-space entries must be finite".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            state_labels,
        })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Transfer from input `j` to output `i` at `s`.
    pub fn eval(&self, s: C64, i: usize, j: usize) -> C64 {
        let n = self.order();
        let d = C64::new(self.d[(i, j)], 0.0);
        if n == 0 {
            return d;
        }
        let m = DMatrix::<C64>::from_fn(n, n, |r, c| {
            let v = C64::new(-self.a[(r, c)], 0.0);
            if r == c {
                v + s
            } else {
                v
            }
        });
        let rhs = DVector::<C64>::from_fn(n, |r, _| C64::new(self.b[(r, j)], 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::from_element(n, C64::new(f64::NAN, 0.0)));
        (0..n).fold(d, |acc, k| acc + x[k] * self.c[(i, k)])
    }
}

/// Controllable canonical realization of a proper transfer function.
pub fn tf_to_state_space(tf: &TransferFunction) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return Err(Error::Improper {
            num: tf.num.degree(),
            den: tf.den.degree(),
        });
    }
    let tf = tf.normalized();
    let n = tf.den.degree();
    let den = tf.den.coeffs();
    let mut num = vec![0.0; n + 1 - tf.num.coeffs().len()];
    num.extend_from_slice(tf.num.coeffs());
    let d0 = num[0];

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        // last row: -a_n ... -a_1
        a[(n - 1, j)] = -den[n - j];
    }
    let mut b = DMatrix::<f64>::zeros(n, 1);
    if n > 0 {
        b[(n - 1, 0)] = 1.0;
    }
    let c = DMatrix::<f64>::from_fn(1, n, |_, j| num[n - j] - den[n - j] * d0);
    let d = DMatrix::<f64>::from_element(1, 1, d0);
    let labels = (1..=n).map(|i| format!("x{i}")).collect();
    StateSpaceModel::new(a, b, c, d, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_basics() {
        let p = Polynomial::new(vec![0.0, 1.0, 2.0]);
        assert_eq!(p.coeffs(), &[1.0, 2.0]);
        let q = p.mul(&Polynomial::new(vec![1.0, -2.0]));
        assert_eq!(q.coeffs(), &[1.0, 0.0, -4.0]);
        let mut r: Vec<f64> = q.roots().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        assert!((r[0] + 2.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
        assert_eq!(q.derivative().coeffs(), &[2.0, 0.0]);
    }

    #[test]
    fn series_identity_and_unit_feedback() {
        let h = TransferFunction::new(vec![1.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(tf_series(&h, &TransferFunction::gain(1.0)), h);
        let t = tf_feedback(&TransferFunction::gain(1.0)).unwrap();
        assert!((t.eval(C64::new(0.3, 0.7)).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(matches!(
            TransferFunction::new(vec![1.0], vec![0.0, 0.0]),
            Err(Error::ZeroDenominator)
        ));
    }

    #[test]
    fn improper_realization_rejected() {
        let tf = TransferFunction::new(vec![1.0, 0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            tf_to_state_space(&tf),
            Err(Error::Improper { .. })
        ));
    }

    #[test]
    fn realization_matches_transfer_function() {
        let tf = TransferFunction::new(vec![2.0, 3.0, 1.0, 4.0], vec![2.0, 1.0, 5.0, 0.5]).unwrap();
        let ss = tf_to_state_space(&tf).unwrap();
        for k in 0..50 {
            let w = 10f64.powf(-2.0 + 4.0 * k as f64 / 49.0);
            let s = C64::new(0.0, w);
            let (a, b) = (tf.eval(s), ss.eval(s, 0, 0));
            assert!((a - b).norm() <= 1e-8 * a.norm(), "w={w}");
        }
    }

    #[test]
    fn reduction_cancels_common_factor() {
        // (s+2)(s+1) / ((s+2)(s+3))
        let tf = TransferFunction::new(vec![1.0, 3.0, 2.0], vec![1.0, 5.0, 6.0]).unwrap();
        let r = tf.reduced(1e-8).unwrap();
        assert_eq!(r.num.degree(), 1);
        assert_eq!(r.den.degree(), 1);
        assert!((r.eval(C64::new(0.0, 1.0)) - tf.eval(C64::new(0.0, 1.0))).norm() < 1e-12);

        let bad = TransferFunction::new(vec![1.0, 0.0], vec![1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(bad.reduced(1e-8), Err(Error::IllPosed(_))));
    }
}
