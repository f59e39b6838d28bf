//! Inverse branches of tent-shaped interval maps.
//!
//! A tent system is given by two monotone C² maps of the unit interval: an
//! increasing branch `a` with an indifferent fixed point at 0 (`a(0) = 0`,
//! `a'(0) = 1`) and a decreasing branch `b` with `b(0) = 1`. Both branches
//! end at the same subdivision point `c = a(1) = b(1)`.
//!
//! The increasing branch is written `a(x) = x - u(x)` where the defect `u`
//! has derivative `u'(x) = x^γ V(x)`. For the log-power family
//! `V(x) = A |log(x/2)|^δ` the defect is evaluated in closed form when δ is a
//! nonnegative integer and through the upper incomplete gamma function
//! otherwise.

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::special::upper_gamma;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default validation grid size.
pub const DEFAULT_GRID: usize = 4096;

/// Fraction of the admissible amplitude `1/A_{γ,δ}` used when none is given.
pub const DEFAULT_AMPLITUDE_FRACTION: f64 = 0.99;

/// Default constant `V₀` for δ = 0 sources built without an explicit function.
pub const DEFAULT_V0: f64 = 0.99;

const HEAD_SPLIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

/// The slowly varying factor for δ = 0.
#[derive(Clone)]
pub enum V0 {
    Constant(f64),
    /// `(2 + x)/(1 + x)²`, which turns `a` into the Farey branch `x/(1+x)` for γ = 1.
    Farey,
    Custom(RealFn),
}

impl fmt::Debug for V0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            V0::Constant(c) => write!(f, "Constant({c})"),
            V0::Farey => write!(f, "Farey"),
            V0::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl V0 {
    fn eval(&self, x: f64) -> f64 {
        match self {
            V0::Constant(c) => *c,
            V0::Farey => (2.0 + x) / ((1.0 + x) * (1.0 + x)),
            V0::Custom(f) => f(x),
        }
    }
}

/// Parameters of a DRIL(γ, δ) increasing branch.
#[derive(Debug, Clone)]
pub struct DrilParams {
    pub gamma: f64,
    pub delta: f64,
    /// Amplitude `A` of `V_δ(x) = A |log(x/2)|^δ`; only used for δ ≠ 0.
    pub amplitude: Option<f64>,
    /// `V₀`; only used for δ = 0.
    pub v0: Option<V0>,
}

impl DrilParams {
    pub fn new(gamma: f64, delta: f64) -> Self {
        Self {
            gamma,
            delta,
            amplitude: None,
            v0: None,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = Some(amplitude);
        self
    }

    pub fn with_v0(mut self, v0: V0) -> Self {
        self.v0 = Some(v0);
        self
    }
}

/// `(γ, δ) ∈ Γ_S = (]1, ∞[ × ℝ) ∪ ({1} × ]−∞, 0])`.
pub fn in_gamma_s(gamma: f64, delta: f64) -> bool {
    (gamma > 1.0 && delta.is_finite()) || (gamma == 1.0 && delta <= 0.0)
}

/// Maximum of `x^γ |log(x/2)|^δ` over the unit interval.
pub fn a_gamma_delta_bound(gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::InvalidParameter(
            "A_{gamma,delta} is only defined for finite delta != 0; delta = 0 uses V0 directly".into(),
        ));
    }
    if delta >= LN_2 * gamma {
        Ok(2f64.powf(gamma) * (-delta).exp() * (delta / gamma).powf(delta))
    } else {
        Ok(LN_2.powf(delta))
    }
}

/// The defect `u` of an increasing branch `a = id - u`.
#[derive(Clone)]
enum Defect {
    /// `u(x) = x^{γ+1} Σ_j coeffs[j] L^j`, `u'(x) = amp x^γ L^k`, `L = log 2 − log x`.
    LogPoly {
        gamma: f64,
        amp: f64,
        power: i32,
        coeffs: Vec<f64>,
    },
    /// `u(x) = x²/(1+x)`.
    Farey,
    /// `u(x) = amp 2^{γ+1} (γ+1)^{−δ−1} Γ(δ+1, (γ+1) L)`, `L = log(2/x)`.
    IncompleteGamma { gamma: f64, amp: f64, delta: f64 },
    /// `u'(x) = x^γ V₀(x)` with `V₀` arbitrary; adaptive quadrature.
    Quadrature { gamma: f64, v0: RealFn },
}

impl Defect {
    fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Defect::LogPoly { gamma, coeffs, .. } => {
                let l = LN_2 - x.ln();
                let mut p = 0.0;
                for c in coeffs.iter().rev() {
                    p = p * l + c;
                }
                x.powf(gamma + 1.0) * p
            }
            Defect::Farey => x * x / (1.0 + x),
            Defect::IncompleteGamma { gamma, amp, delta } => {
                let g1 = gamma + 1.0;
                let l = LN_2 - x.ln();
                // checked at construction; the fraction converges for every z > 0
                let tail = upper_gamma(delta + 1.0, g1 * l).unwrap_or(f64::NAN);
                amp * (g1 * LN_2 - (delta + 1.0) * g1.ln()).exp() * tail
            }
            Defect::Quadrature { gamma, v0 } => {
                let f = |t: f64| t.powf(*gamma) * v0(t);
                let head_end = x.min(HEAD_SPLIT);
                // leading-order antiderivative on the head
                let head = head_end.powf(gamma + 1.0) / (gamma + 1.0) * v0(head_end);
                if x <= HEAD_SPLIT {
                    return head;
                }
                // construction already verified convergence on a grid
                head + quad::adaptive(f, HEAD_SPLIT, x, 1e-12).unwrap_or(f64::NAN)
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Defect::LogPoly {
                gamma, amp, power, ..
            } => {
                let l = LN_2 - x.ln();
                amp * x.powf(*gamma) * l.powi(*power)
            }
            Defect::Farey => {
                let s = 1.0 + x;
                x * (2.0 + x) / (s * s)
            }
            Defect::IncompleteGamma { gamma, amp, delta } => amp * x.powf(*gamma) * (LN_2 - x.ln()).powf(*delta),
            Defect::Quadrature { gamma, v0 } => x.powf(*gamma) * v0(x),
        }
    }
}

#[derive(Clone)]
enum Shape {
    Defect(Defect),
    FareyB,
    LinearB { c: f64 },
    Custom {
        eval: RealFn,
        deriv: RealFn,
        inverse: Option<RealFn>,
    },
}

/// A strictly monotone C² map of the unit interval into itself.
#[derive(Clone)]
pub struct Branch {
    shape: Shape,
    monotonicity: Monotonicity,
    label: String,
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Branch")
            .field("label", &self.label)
            .field("monotonicity", &self.monotonicity)
            .finish()
    }
}

impl Branch {
    /// A branch from arbitrary evaluators. `inverse`, when given, must be the exact inverse.
    pub fn custom(
        label: impl Into<String>,
        monotonicity: Monotonicity,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: Option<RealFn>,
    ) -> Self {
        Self {
            shape: Shape::Custom {
                eval: Arc::new(eval),
                deriv: Arc::new(deriv),
                inverse,
            },
            monotonicity,
            label: label.into(),
        }
    }

    /// The Farey increasing branch `x/(1+x)`.
    pub fn farey_a() -> Self {
        Self {
            shape: Shape::Defect(Defect::Farey),
            monotonicity: Monotonicity::Increasing,
            label: "farey".into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Defect(Defect::Farey) => x / (1.0 + x),
            Shape::Defect(d) => x - d.value(x),
            Shape::FareyB => 1.0 / (1.0 + x),
            Shape::LinearB { c } => 1.0 - (1.0 - c) * x,
            Shape::Custom { eval, .. } => eval(x),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Defect(Defect::Farey) => {
                let s = 1.0 + x;
                1.0 / (s * s)
            }
            Shape::Defect(d) => 1.0 - d.derivative(x),
            Shape::FareyB => {
                let s = 1.0 + x;
                -1.0 / (s * s)
            }
            Shape::LinearB { c } => -(1.0 - c),
            Shape::Custom { deriv, .. } => deriv(x),
        }
    }

    /// `(eval(x), deriv(x))`, sharing work where the closed form allows it.
    #[inline]
    pub fn eval_deriv(&self, x: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Defect(Defect::LogPoly {
                gamma,
                amp,
                power,
                coeffs,
            }) if x > 0.0 => {
                let l = LN_2 - x.ln();
                let xg = x.powf(*gamma);
                let mut p = 0.0;
                for c in coeffs.iter().rev() {
                    p = p * l + c;
                }
                (x - x * xg * p, 1.0 - amp * xg * l.powi(*power))
            }
            Shape::Defect(Defect::Farey) => {
                let s = 1.0 + x;
                (x / s, 1.0 / (s * s))
            }
            Shape::FareyB => {
                let s = 1.0 + x;
                (1.0 / s, -1.0 / (s * s))
            }
            _ => (self.eval(x), self.deriv(x)),
        }
    }

    /// `x − a(x)` for increasing branches with a known defect, computed without cancellation.
    pub fn defect(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Defect(d) => d.value(x),
            _ => x - self.eval(x),
        }
    }

    /// `1 − a'(x)`, computed without cancellation where possible.
    pub fn defect_deriv(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Defect(d) => d.derivative(x),
            _ => 1.0 - self.deriv(x),
        }
    }

    /// Closed-form inverse, when the branch has one.
    #[inline]
    pub fn closed_inverse(&self, y: f64) -> Option<f64> {
        match &self.shape {
            Shape::Defect(Defect::Farey) => Some(y / (1.0 - y)),
            Shape::FareyB => Some(1.0 / y - 1.0),
            Shape::LinearB { c } => Some((1.0 - y) / (1.0 - c)),
            Shape::Custom {
                inverse: Some(inv), ..
            } => Some(inv(y)),
            _ => None,
        }
    }

    /// Image of the endpoints: `(br(0), br(1))`.
    pub fn endpoints(&self) -> (f64, f64) {
        (self.eval(0.0), self.eval(1.0))
    }

    /// Checks monotonicity, derivative consistency and range on a uniform grid.
    pub fn check_invariants(&self, grid_n: usize) -> Result<()> {
        let n = grid_n.max(1000);
        let sign = match self.monotonicity {
            Monotonicity::Increasing => 1.0,
            Monotonicity::Decreasing => -1.0,
        };
        let mut prev = self.eval(0.0);
        if !(-1e-15..=1.0 + 1e-15).contains(&prev) {
            return Err(Error::TentViolation {
                inequality: "0 <= br(x) <= 1",
                x: 0.0,
                value: prev,
            });
        }
        let h = 1e-6;
        for i in 1..=n {
            let x = i as f64 / n as f64;
            let y = self.eval(x);
            if !(-1e-15..=1.0 + 1e-15).contains(&y) {
                return Err(Error::TentViolation {
                    inequality: "0 <= br(x) <= 1",
                    x,
                    value: y,
                });
            }
            if sign * (y - prev) <= 0.0 {
                return Err(Error::TentViolation {
                    inequality: "strict monotonicity",
                    x,
                    value: y - prev,
                });
            }
            prev = y;
            if i < n && x > h {
                let fd = (self.eval(x + h) - self.eval(x - h)) / (2.0 * h);
                let d = self.deriv(x);
                if (fd - d).abs() > 1e-6 {
                    return Err(Error::TentViolation {
                        inequality: "deriv matches finite difference",
                        x,
                        value: fd - d,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Builds the increasing branch `a(x) = x − u(x)` of the DRIL(γ, δ) family.
pub fn make_dril_a(params: &DrilParams) -> Result<Branch> {
    let DrilParams { gamma, delta, .. } = *params;
    if !in_gamma_s(gamma, delta) {
        return Err(Error::Domain {
            set: "Gamma_S",
            beta: gamma,
            delta,
            detail: "DRIL requires gamma > 1, or gamma = 1 with delta <= 0".into(),
        });
    }
    let label = format!("dril({gamma}, {delta})");
    let defect = if delta == 0.0 {
        let v0 = params.v0.clone().unwrap_or(V0::Constant(DEFAULT_V0));
        for i in 0..=DEFAULT_GRID {
            let x = i as f64 / DEFAULT_GRID as f64;
            let up = x.powf(gamma) * v0.eval(x);
            if !(0.0..=1.0).contains(&up) || !up.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "x^gamma V0(x) = {up} leaves [0, 1] at x = {x}"
                )));
            }
            if x > 0.0 && v0.eval(x) <= 0.0 {
                return Err(Error::InvalidParameter(format!("V0 must be positive, V0({x}) <= 0")));
            }
        }
        match v0 {
            V0::Constant(c) => Defect::LogPoly {
                gamma,
                amp: c,
                power: 0,
                coeffs: vec![c / (gamma + 1.0)],
            },
            V0::Farey if gamma == 1.0 => Defect::Farey,
            other => {
                let f: RealFn = match other {
                    V0::Custom(f) => f,
                    V0::Farey => Arc::new(|x: f64| (2.0 + x) / ((1.0 + x) * (1.0 + x))),
                    V0::Constant(_) => unreachable!(),
                };
                let g = gamma;
                let probe = f.clone();
                quad::adaptive(move |t: f64| t.powf(g) * probe(t), HEAD_SPLIT, 1.0, 1e-12)?;
                Defect::Quadrature { gamma, v0: f }
            }
        }
    } else {
        let bound = a_gamma_delta_bound(gamma, delta)?;
        let amp = params
            .amplitude
            .unwrap_or(DEFAULT_AMPLITUDE_FRACTION / bound);
        if !(amp > 0.0) || amp * bound >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "amplitude {amp} must lie in ]0, 1/A_gamma_delta = {}[",
                1.0 / bound
            )));
        }
        if delta > 0.0 && delta.fract() == 0.0 && delta <= 64.0 {
            // repeated integration by parts:
            // ∫₀ˣ t^γ L^k = x^{γ+1} Σ_j k!/(k−j)! L^{k−j} / (γ+1)^{j+1}
            let k = delta as usize;
            let g1 = gamma + 1.0;
            let mut coeffs = vec![0.0; k + 1];
            let mut falling = 1.0;
            for j in 0..=k {
                coeffs[k - j] = amp * falling / g1.powi(j as i32 + 1);
                falling *= (k - j) as f64;
            }
            Defect::LogPoly {
                gamma,
                amp,
                power: k as i32,
                coeffs,
            }
        } else {
            let defect = Defect::IncompleteGamma { gamma, amp, delta };
            for &x in &[1.0, 0.5, 1e-3, 1e-12] {
                let g1 = gamma + 1.0;
                upper_gamma(delta + 1.0, g1 * (LN_2 - f64::ln(x)))?;
                let u = defect.value(x);
                if !(u.is_finite() && u >= 0.0) {
                    return Err(Error::Quadrature(format!("log-power defect evaluates to {u} at x = {x}")));
                }
            }
            defect
        }
    };
    Ok(Branch {
        shape: Shape::Defect(defect),
        monotonicity: Monotonicity::Increasing,
        label,
    })
}

/// Kinds of decreasing branch.
#[derive(Clone)]
pub enum BKind {
    Farey,
    LinearTo(f64),
    Custom { eval: RealFn, deriv: RealFn },
}

/// Builds the decreasing branch `b` with `b(0) = 1`.
pub fn make_b(kind: BKind) -> Result<Branch> {
    match kind {
        BKind::Farey => Ok(Branch {
            shape: Shape::FareyB,
            monotonicity: Monotonicity::Decreasing,
            label: "farey".into(),
        }),
        BKind::LinearTo(c) => {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::InvalidParameter(format!("linear b needs c in ]0, 1[, got {c}")));
            }
            Ok(Branch {
                shape: Shape::LinearB { c },
                monotonicity: Monotonicity::Decreasing,
                label: format!("linear({c})"),
            })
        }
        BKind::Custom { eval, deriv } => {
            let br = Branch {
                shape: Shape::Custom {
                    eval,
                    deriv,
                    inverse: None,
                },
                monotonicity: Monotonicity::Decreasing,
                label: "custom".into(),
            };
            for i in 0..=DEFAULT_GRID {
                let x = i as f64 / DEFAULT_GRID as f64;
                let d = br.deriv(x);
                if !(-1.0..0.0).contains(&d) {
                    return Err(Error::TentViolation {
                        inequality: "-1 <= b'(x) < 0",
                        x,
                        value: d,
                    });
                }
            }
            br.check_invariants(DEFAULT_GRID)?;
            Ok(br)
        }
    }
}

/// Strong (`|b'(0)| < 1`) or weak (`b'(0) = −1`) tent class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TentClass {
    #[serde(rename = "DRI_s")]
    Strong,
    #[serde(rename = "DRI_w")]
    Weak,
}

#[derive(Debug, Clone, Serialize)]
pub struct TentDiagnostics {
    pub class: TentClass,
    pub c: f64,
    pub grid_n: usize,
    pub b_deriv_at_zero: f64,
    pub max_a_deriv: f64,
    pub min_b_deriv: f64,
}

/// Verifies the tent inequalities on a uniform grid and classifies the system.
pub fn validate_tent(a: &Branch, b: &Branch, grid_n: usize) -> Result<TentDiagnostics> {
    let n = grid_n.max(2);
    let fail = |inequality, x, value| Err(Error::TentViolation { inequality, x, value });
    if a.eval(0.0).abs() > 1e-15 {
        return fail("a(0) = 0", 0.0, a.eval(0.0));
    }
    if (b.eval(0.0) - 1.0).abs() > 1e-15 {
        return fail("b(0) = 1", 0.0, b.eval(0.0));
    }
    let (ca, cb) = (a.eval(1.0), b.eval(1.0));
    if (ca - cb).abs() > 1e-12 {
        return fail("a(1) = b(1)", 1.0, ca - cb);
    }
    if !(ca > 0.0 && ca < 1.0) {
        return fail("0 < c < 1", 1.0, ca);
    }
    let mut max_a = f64::NEG_INFINITY;
    let mut min_b = f64::INFINITY;
    let (mut pa, mut pb) = (a.eval(0.0), b.eval(0.0));
    for i in 0..=n {
        let x = i as f64 / n as f64;
        let da = a.deriv(x);
        let db = b.deriv(x);
        max_a = max_a.max(da);
        min_b = min_b.min(db);
        if !(da > 0.0 && da <= 1.0) {
            return fail("0 < a'(x) <= 1", x, da);
        }
        if x > 0.0 && !(a.defect_deriv(x) > 0.0) {
            return fail("a'(x) < 1 for x > 0", x, da);
        }
        if !(-1.0..0.0).contains(&db) {
            return fail("-1 <= b'(x) < 0", x, db);
        }
        if i > 0 {
            let (ya, yb) = (a.eval(x), b.eval(x));
            if ya <= pa {
                return fail("a increasing", x, ya - pa);
            }
            if yb >= pb {
                return fail("b decreasing", x, yb - pb);
            }
            pa = ya;
            pb = yb;
        }
    }
    let b0 = b.deriv(0.0);
    let class = if b0.abs() < 1.0 - 1e-12 {
        TentClass::Strong
    } else {
        TentClass::Weak
    };
    Ok(TentDiagnostics {
        class,
        c: ca,
        grid_n: n,
        b_deriv_at_zero: b0,
        max_a_deriv: max_a,
        min_b_deriv: min_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gl_oracle(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        // independent composite Gauss–Legendre on a geometric mesh toward 0
        let rule = quad::gauss_legendre(30);
        let mut edges = vec![hi];
        let mut e = hi;
        while e > lo.max(1e-30) {
            e *= 0.5;
            edges.push(e.max(lo));
        }
        edges.reverse();
        edges
            .windows(2)
            .map(|w| quad::composite(&rule, w[0], w[1], 1, &f))
            .sum()
    }

    #[test]
    fn amplitude_bound_branches() {
        assert_relative_eq!(a_gamma_delta_bound(1.0, 1.0).unwrap(), 2.0 / std::f64::consts::E, max_relative = 1e-14);
        assert_relative_eq!(a_gamma_delta_bound(2.0, 0.5).unwrap(), 0.832_554_611_157_697_7, max_relative = 1e-12);
        let d = 2.0 * LN_2;
        let upper = 2f64.powf(2.0) * (-d).exp() * (d / 2.0).powf(d);
        assert!((upper - LN_2.powf(d)).abs() < 1e-12);
        assert!((a_gamma_delta_bound(2.0, d).unwrap() - upper).abs() < 1e-12);
        assert!(a_gamma_delta_bound(2.0, 0.0).is_err());
    }

    #[test]
    fn dril_farey_v0_is_farey_branch() {
        let a = make_dril_a(&DrilParams::new(1.0, 0.0).with_v0(V0::Farey)).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert_relative_eq!(a.eval(x), x / (1.0 + x), max_relative = 1e-15);
        }
        // the same V0 through the quadrature path
        let custom = make_dril_a(
            &DrilParams::new(1.0, 0.0).with_v0(V0::Custom(Arc::new(|x| (2.0 + x) / ((1.0 + x) * (1.0 + x))))),
        )
        .unwrap();
        for &x in &[0.01, 0.3, 0.77, 1.0] {
            assert_relative_eq!(custom.eval(x), x / (1.0 + x), max_relative = 1e-11);
        }
    }

    #[test]
    fn indifferent_fixed_point() {
        for p in [
            DrilParams::new(2.0, 1.0),
            DrilParams::new(1.4, 1.0),
            DrilParams::new(2.0, 0.0),
            DrilParams::new(1.0, -1.5),
            DrilParams::new(3.0, 0.5),
        ] {
            let a = make_dril_a(&p).unwrap();
            assert_eq!(a.eval(0.0), 0.0);
            assert_eq!(a.deriv(0.0), 1.0);
        }
    }

    #[test]
    fn closed_form_matches_quadrature_oracle() {
        let amp = 0.5 / a_gamma_delta_bound(2.0, 1.0).unwrap();
        let a = make_dril_a(&DrilParams::new(2.0, 1.0).with_amplitude(amp)).unwrap();
        let integrand = |t: f64| amp * t * t * (LN_2 - t.ln());
        let oracle = gl_oracle(integrand, 0.0, 1.0);
        assert!((a.defect(1.0) - oracle).abs() < 1e-10, "{} vs {oracle}", a.defect(1.0));
        for i in 1..=1000 {
            let x = i as f64 / 1000.0;
            let o = gl_oracle(integrand, 0.0, x);
            assert!((a.defect(x) - o).abs() < 1e-10 * o.max(1e-300) + 1e-16);
        }
    }

    #[test]
    fn incomplete_gamma_defect_matches_oracle() {
        for (g, d) in [(1.0, -1.0), (2.0, 1.5), (1.4, -0.5), (4.0, 2.5)] {
            let a = make_dril_a(&DrilParams::new(g, d)).unwrap();
            let amp = DEFAULT_AMPLITUDE_FRACTION / a_gamma_delta_bound(g, d).unwrap();
            let integrand = move |t: f64| amp * t.powf(g) * (LN_2 - t.ln()).powf(d);
            for &x in &[1.0, 0.25, 1e-3] {
                let o = gl_oracle(integrand, 0.0, x);
                assert_relative_eq!(a.defect(x), o, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn dril_invariants_on_grid() {
        for p in [
            DrilParams::new(2.0, 2.0),
            DrilParams::new(1.4, 1.0),
            DrilParams::new(2.0, 0.0),
            DrilParams::new(1.0, -2.0),
        ] {
            let a = make_dril_a(&p).unwrap();
            a.check_invariants(DEFAULT_GRID).unwrap();
            let mut max_up = 0.0f64;
            for i in 0..=DEFAULT_GRID {
                let x = i as f64 / DEFAULT_GRID as f64;
                let up = a.defect_deriv(x);
                assert!(up >= 0.0);
                max_up = max_up.max(up);
            }
            assert!(max_up <= 1.0);
        }
    }

    #[test]
    fn concave_below_critical_point() {
        let (g, d) = (2.0, 2.0);
        let a = make_dril_a(&DrilParams::new(g, d)).unwrap();
        let x0 = 2.0 * (-d / g).exp();
        assert!(x0 <= 1.0);
        let h = 1e-4;
        let mut x = h;
        while x + h <= x0 {
            let second = a.eval(x + h) - 2.0 * a.eval(x) + a.eval(x - h);
            assert!(second <= 1e-9, "second difference {second} at {x}");
            x += 1e-3;
        }
    }

    #[test]
    fn amplitude_out_of_range_rejected() {
        let bound = a_gamma_delta_bound(2.0, 1.0).unwrap();
        assert!(make_dril_a(&DrilParams::new(2.0, 1.0).with_amplitude(1.01 / bound)).is_err());
        assert!(make_dril_a(&DrilParams::new(1.0, 0.5)).is_err());
        assert!(make_dril_a(&DrilParams::new(0.8, -1.0)).is_err());
    }

    #[test]
    fn b_branches() {
        let b = make_b(BKind::Farey).unwrap();
        assert_relative_eq!(b.eval(0.5), 2.0 / 3.0);
        assert_eq!(b.deriv(0.0), -1.0);
        let l = make_b(BKind::LinearTo(0.5)).unwrap();
        assert_eq!(l.eval(1.0), 0.5);
        assert!(make_b(BKind::LinearTo(1.5)).is_err());
        let steep = make_b(BKind::Custom {
            eval: Arc::new(|x| 1.0 - 1.5 * x + x * x),
            deriv: Arc::new(|x| -1.5 + 2.0 * x),
        });
        assert!(steep.is_err());
    }

    #[test]
    fn tent_classes() {
        let fa = Branch::farey_a();
        let d = validate_tent(&fa, &make_b(BKind::Farey).unwrap(), DEFAULT_GRID).unwrap();
        assert_eq!(d.class, TentClass::Weak);
        assert_relative_eq!(d.c, 0.5);
        let d = validate_tent(&fa, &make_b(BKind::LinearTo(0.5)).unwrap(), DEFAULT_GRID).unwrap();
        assert_eq!(d.class, TentClass::Strong);
    }

    #[test]
    fn injected_slope_violation_is_located() {
        // a'(x) pushed above 1 on a narrow bump around 0.3
        let bump = |x: f64| 0.8 * (-((x - 0.3) / 0.01).powi(2)).exp();
        let bad = Branch::custom(
            "bad",
            Monotonicity::Increasing,
            |x| x / (1.0 + x),
            move |x| 1.0 / ((1.0 + x) * (1.0 + x)) + bump(x),
            None,
        );
        match validate_tent(&bad, &make_b(BKind::Farey).unwrap(), 1000) {
            Err(Error::TentViolation { inequality, x, .. }) => {
                assert_eq!(inequality, "0 < a'(x) <= 1");
                assert!((x - 0.3).abs() < 0.02, "{x}");
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }
}
