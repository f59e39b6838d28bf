//! Tent sources: a tent system paired with an initial probability measure,
//! binary encoding of trajectories, cylinder intervals and fundamental
//! probabilities in log space.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use crate::branches::{self, Branch, BKind, DrilParams, Monotonicity, RealFn, TentClass, TentDiagnostics};
use crate::error::{Error, Result};

/// Interval length below which cylinders switch to tangent mode.
pub const DEGENERATE_WIDTH: f64 = 1e-7;

/// Residual tolerance of the inverse-branch solver.
pub const ROOT_TOL: f64 = 1e-14;

/// Tent-shaped system `(a, b)` with subdivision point `c = a(1) = b(1)`.
#[derive(Debug, Clone)]
pub struct TentSource {
    a: Branch,
    b: Branch,
    c: f64,
    diagnostics: TentDiagnostics,
}

impl TentSource {
    pub fn new(a: Branch, b: Branch) -> Result<Self> {
        let diagnostics = branches::validate_tent(&a, &b, branches::DEFAULT_GRID)?;
        Ok(Self {
            c: diagnostics.c,
            a,
            b,
            diagnostics,
        })
    }

    /// The Farey system `x/(1+x)`, `1/(1+x)`.
    pub fn farey() -> Self {
        Self::new(Branch::farey_a(), branches::make_b(BKind::Farey).expect("farey b"))
            .expect("farey is a valid tent")
    }

    /// A DRIL source whose decreasing branch is linear onto `c = a(1)`.
    pub fn dril_linear(params: &DrilParams) -> Result<Self> {
        let a = branches::make_dril_a(params)?;
        let b = branches::make_b(BKind::LinearTo(a.eval(1.0)))?;
        Self::new(a, b)
    }

    pub fn a(&self) -> &Branch {
        &self.a
    }

    pub fn b(&self) -> &Branch {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn class(&self) -> TentClass {
        self.diagnostics.class
    }

    pub fn diagnostics(&self) -> &TentDiagnostics {
        &self.diagnostics
    }

    #[inline]
    pub fn branch(&self, bit: u8) -> &Branch {
        if bit == 0 {
            &self.a
        } else {
            &self.b
        }
    }

    /// `v(x) = (x − a(x))/x`.
    pub fn v(&self, x: f64) -> f64 {
        self.a.defect(x) / x
    }

    /// The direct map `T`, with the left-closed tie rule at `c`.
    #[inline]
    pub fn step(&self, y: f64) -> Result<(u8, f64)> {
        let (bit, br) = if y <= self.c { (0, &self.a) } else { (1, &self.b) };
        // inside [0, 1] the branch images cover y, so closed forms skip the range check
        if (0.0..=1.0).contains(&y) {
            if let Some(x) = br.closed_inverse(y) {
                return Ok((bit, x.clamp(0.0, 1.0)));
            }
        }
        Ok((bit, invert_branch(br, y)?))
    }
}

#[derive(Clone)]
enum MeasureKind {
    Uniform,
    Lin,
    Exp,
    Polynomial { coeffs: Vec<f64> },
    Tabulated { nodes: Vec<f64>, values: Vec<f64>, cum: Vec<f64> },
    Custom { phi: RealFn, cdf: RealFn, inv: RealFn },
}

/// An absolutely continuous probability measure on the unit interval.
#[derive(Clone)]
pub struct Measure {
    kind: MeasureKind,
    label: String,
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Measure({})", self.label)
    }
}

const EXP_NORM: f64 = E / (2.0 * (E - 1.0));

impl Measure {
    pub fn uniform() -> Self {
        Self {
            kind: MeasureKind::Uniform,
            label: "uniform".into(),
        }
    }

    /// Density `(1 + 2x)/2`.
    pub fn lin() -> Self {
        Self {
            kind: MeasureKind::Lin,
            label: "lin".into(),
        }
    }

    /// Density proportional to `1 + x e^{−x}`.
    pub fn exp() -> Self {
        Self {
            kind: MeasureKind::Exp,
            label: "exp".into(),
        }
    }

    /// Density proportional to the polynomial `Σ coeffs[k] x^k`, which must be positive on [0, 1].
    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("empty polynomial density".into()));
        }
        let mass: f64 = coeffs.iter().enumerate().map(|(k, c)| c / (k as f64 + 1.0)).sum();
        let coeffs: Vec<f64> = coeffs.iter().map(|c| c / mass).collect();
        let m = Self {
            kind: MeasureKind::Polynomial { coeffs },
            label: "polynomial".into(),
        };
        for i in 0..=branches::DEFAULT_GRID {
            let x = i as f64 / branches::DEFAULT_GRID as f64;
            if !(m.density(x) > 0.0) {
                return Err(Error::InvalidParameter(format!("density not positive at x = {x}")));
            }
        }
        Ok(m)
    }

    /// Piecewise-linear density through `(nodes[i], values[i])`, renormalized to mass 1.
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::InvalidParameter("tabulated density needs matching nodes and values".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("nodes must increase from 0 to 1".into()));
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("tabulated density must be positive".into()));
        }
        let mut cum = vec![0.0; nodes.len()];
        for i in 1..nodes.len() {
            cum[i] = cum[i - 1] + 0.5 * (values[i] + values[i - 1]) * (nodes[i] - nodes[i - 1]);
        }
        let total = *cum.last().unwrap();
        let values: Vec<f64> = values.iter().map(|v| v / total).collect();
        let cum: Vec<f64> = cum.iter().map(|v| v / total).collect();
        Ok(Self {
            kind: MeasureKind::Tabulated { nodes, values, cum },
            label: "tabulated".into(),
        })
    }

    /// A measure from an explicit `(φ, F, F⁻¹)` triple.
    pub fn custom(label: impl Into<String>, phi: RealFn, cdf: RealFn, inv: RealFn) -> Self {
        Self {
            kind: MeasureKind::Custom { phi, cdf, inv },
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Uniform => 1.0,
            MeasureKind::Lin => 0.5 + x,
            MeasureKind::Exp => EXP_NORM * (1.0 + x * (-x).exp()),
            MeasureKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |p, c| p * x + c),
            MeasureKind::Tabulated { nodes, values, .. } => {
                let (i, t) = locate(nodes, x);
                values[i] * (1.0 - t) + values[i + 1] * t
            }
            MeasureKind::Custom { phi, .. } => phi(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.kind {
            MeasureKind::Uniform => x,
            MeasureKind::Lin => 0.5 * (x + x * x),
            MeasureKind::Exp => EXP_NORM * (x - (-x).exp_m1() - x * (-x).exp()),
            MeasureKind::Polynomial { coeffs } => {
                x * coeffs
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |p, (k, c)| p * x + c / (k as f64 + 1.0))
            }
            MeasureKind::Tabulated { nodes, values, cum } => {
                let (i, t) = locate(nodes, x);
                let h = nodes[i + 1] - nodes[i];
                cum[i] + h * t * (values[i] + 0.5 * t * (values[i + 1] - values[i]))
            }
            MeasureKind::Custom { cdf, .. } => cdf(x),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            MeasureKind::Uniform => u,
            MeasureKind::Lin => 4.0 * u / (1.0 + (1.0 + 8.0 * u).sqrt()),
            MeasureKind::Custom { inv, .. } => inv(u),
            MeasureKind::Tabulated { nodes, values, cum } => {
                let i = match cum.binary_search_by(|c| c.total_cmp(&u)) {
                    Ok(i) => return nodes[i],
                    Err(i) => i.clamp(1, nodes.len() - 1) - 1,
                };
                let h = nodes[i + 1] - nodes[i];
                let (f0, f1) = (values[i], values[i + 1]);
                // solve h t (f0 + t (f1 − f0)/2) = u − cum[i] for t in [0, 1]
                let r = u - cum[i];
                let qa = 0.5 * h * (f1 - f0);
                let qb = h * f0;
                let t = if qa.abs() < 1e-300 {
                    r / qb
                } else {
                    2.0 * r / (qb + (qb * qb + 4.0 * qa * r).max(0.0).sqrt())
                };
                (nodes[i] + h * t.clamp(0.0, 1.0)).clamp(0.0, 1.0)
            }
            _ => solve_increasing(|x| (self.cdf(x), self.density(x)), u, (0.0, 1.0), u.clamp(0.0, 1.0))
                .unwrap_or(f64::NAN),
        }
    }

    pub fn phi_at_zero(&self) -> f64 {
        self.density(0.0)
    }

    /// Checks `F(0) = 0`, `F(1) = 1`, strict increase, `F' ≈ φ` and `φ > 0` on a grid.
    pub fn check_invariants(&self, grid_n: usize) -> Result<()> {
        if self.cdf(0.0).abs() > 1e-12 || (self.cdf(1.0) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "{}: F(0) = {}, F(1) = {}",
                self.label,
                self.cdf(0.0),
                self.cdf(1.0)
            )));
        }
        let h = 1e-6;
        let mut prev = 0.0;
        for i in 1..=grid_n {
            let x = i as f64 / grid_n as f64;
            let f = self.cdf(x);
            if f <= prev || !(self.density(x) > 0.0) {
                return Err(Error::InvalidParameter(format!("{}: not strictly increasing at {x}", self.label)));
            }
            prev = f;
            if x > h && x < 1.0 - h {
                let fd = (self.cdf(x + h) - self.cdf(x - h)) / (2.0 * h);
                if (fd - self.density(x)).abs() > 1e-6 {
                    return Err(Error::InvalidParameter(format!("{}: F' != phi at {x}", self.label)));
                }
            }
        }
        Ok(())
    }
}

fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let i = match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.clamp(1, n - 1) - 1,
    };
    let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
    (i, t.clamp(0.0, 1.0))
}

/// Safeguarded Newton for an increasing function given as `x ↦ (f(x), f'(x))`.
fn solve_increasing<F: Fn(f64) -> (f64, f64)>(f: F, target: f64, bracket: (f64, f64), start: f64) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        let r = fx - target;
        if r.abs() <= 2.0 * f64::EPSILON * target.abs() {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - r / dfx;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi.abs() {
            let x_best = if (f(next).0 - target).abs() < r.abs() { next } else { x };
            return Ok(x_best);
        }
        x = next;
    }
    Err(Error::RootFinding {
        target,
        detail: format!("no convergence within 200 iterations, bracket [{lo}, {hi}]"),
    })
}

/// Returns `x` with `br(x) = y` to within [`ROOT_TOL`].
pub fn invert_branch(br: &Branch, y: f64) -> Result<f64> {
    let (y0, y1) = br.endpoints();
    let (ylo, yhi) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
    if !(y >= ylo - 1e-15 && y <= yhi + 1e-15) {
        return Err(Error::RootFinding {
            target: y,
            detail: format!("outside the image [{ylo}, {yhi}] of branch {}", br.label()),
        });
    }
    if let Some(x) = br.closed_inverse(y) {
        return Ok(x.clamp(0.0, 1.0));
    }
    let x = match br.monotonicity() {
        Monotonicity::Increasing => {
            // a(x) = x − u(x) ⇒ x ≈ y + u(y)
            let guess = y + br.defect(y);
            solve_increasing(|x| br.eval_deriv(x), y, (0.0, 1.0), guess)?
        }
        Monotonicity::Decreasing => {
            let guess = (y0 - y) / (y0 - y1);
            solve_increasing(
                |x| {
                    let (v, d) = br.eval_deriv(x);
                    (-v, -d)
                },
                -y,
                (0.0, 1.0),
                guess,
            )?
        }
    };
    let res = (br.eval(x) - y).abs();
    if res > ROOT_TOL {
        return Err(Error::RootFinding {
            target: y,
            detail: format!("residual {res:e} at x = {x}"),
        });
    }
    Ok(x)
}

/// A finite binary word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    bits: Vec<u8>,
}

impl Word {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|b| *b > 1) {
            return Err(Error::InvalidParameter("word bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones_count(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    pub fn push(&mut self, bit: u8) {
        assert!(bit <= 1);
        self.bits.push(bit);
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word {
            bits: self.bits[..n.min(self.len())].to_vec(),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::InvalidParameter(format!("invalid word character {:?}", c as char))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|bits| Word { bits })
    }
}

/// Image `h_w([0, 1])` of the unit interval under an inverse-branch composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderInterval {
    pub lo: f64,
    pub hi: f64,
    pub log_length: f64,
    pub anchor: f64,
    pub degenerate: bool,
}

impl CylinderInterval {
    pub fn unit() -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            log_length: 0.0,
            anchor: 0.5,
            degenerate: false,
        }
    }

    /// Image of this interval under `br`, i.e. the cylinder of `s·w` from that of `w`.
    #[inline]
    pub fn apply(&self, br: &Branch) -> Self {
        let (ylo, yhi) = match br.monotonicity() {
            Monotonicity::Increasing => (br.eval(self.lo), br.eval(self.hi)),
            Monotonicity::Decreasing => (br.eval(self.hi), br.eval(self.lo)),
        };
        let width = yhi - ylo;
        if !self.degenerate && width >= DEGENERATE_WIDTH {
            return Self {
                lo: ylo,
                hi: yhi,
                log_length: width.ln(),
                anchor: 0.5 * (ylo + yhi),
                degenerate: false,
            };
        }
        let (ya, da) = br.eval_deriv(self.anchor);
        Self {
            lo: ylo,
            hi: yhi.max(ylo),
            log_length: self.log_length + da.abs().ln(),
            anchor: ya,
            degenerate: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Cylinder of a bit slice: `h_{w₁} ∘ … ∘ h_{w_k}([0, 1])`.
pub fn cylinder_of_bits(src: &TentSource, bits: &[u8]) -> CylinderInterval {
    bits.iter()
        .rev()
        .fold(CylinderInterval::unit(), |cyl, &bit| cyl.apply(src.branch(bit)))
}

pub fn cylinder(src: &TentSource, w: &Word) -> CylinderInterval {
    cylinder_of_bits(src, w.bits())
}

/// `log μ(I)` of a cylinder interval.
#[inline]
pub fn log_prob_of_interval(mu: &Measure, cyl: &CylinderInterval) -> f64 {
    if !cyl.degenerate {
        let p = match mu.kind {
            MeasureKind::Uniform => cyl.hi - cyl.lo,
            _ => mu.cdf(cyl.hi) - mu.cdf(cyl.lo),
        };
        if p > 0.0 {
            return p.ln().min(0.0);
        }
    }
    (mu.density(cyl.anchor).ln() + cyl.log_length).min(0.0)
}

pub fn log_prob_bits(src: &TentSource, mu: &Measure, bits: &[u8]) -> f64 {
    log_prob_of_interval(mu, &cylinder_of_bits(src, bits))
}

/// `log p_μ(w)`.
pub fn log_prob(src: &TentSource, mu: &Measure, w: &Word) -> f64 {
    log_prob_bits(src, mu, w.bits())
}

/// The first `n` symbols of the trajectory of `x`.
pub fn encode(src: &TentSource, x: f64, n: usize) -> Result<Word> {
    let mut bits = Vec::with_capacity(n);
    encode_into(src, x, n, &mut bits)?;
    Ok(Word { bits })
}

/// Encodes into a reusable buffer (cleared first).
pub fn encode_into(src: &TentSource, x: f64, n: usize, bits: &mut Vec<u8>) -> Result<()> {
    bits.clear();
    let mut y = x;
    for k in 0..n {
        let bit = if y <= src.c { 0 } else { 1 };
        bits.push(bit);
        if k + 1 < n {
            y = invert_branch(src.branch(bit), y)?;
        }
    }
    Ok(())
}

pub fn sample(mu: &Measure, u: f64) -> f64 {
    mu.inverse_cdf(u)
}
