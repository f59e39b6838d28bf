//! The induced block system `T̂` with inverse branches `g_m = a^{m−1} ∘ b`,
//! its invariant density, Rohlin entropy, mean block length, the invariant
//! function of the original system and Good Class diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad;
use crate::source::{Measure, TentSource};
use crate::wtd::{fit_law, LawFit, MeasureTag, WtdSequence};

/// Default bound on the neglected tail mass `q(M_max)`.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Hard cap on the number of block branches.
pub const M_CAP: usize = 1_000_000;

/// Maximum number of power-iteration sweeps.
pub const MAX_SWEEPS: usize = 10_000;

const ENTROPY_PANELS: usize = 4;
const ENTROPY_ORDER: usize = 16;
const DIAG_GRID: usize = 65;
const DIAG_DEPTH2: usize = 50;

/// Truncated block system: branches `g_1, …, g_{M_max}` and `q(0..=M_max)`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    src: TentSource,
    q: Vec<f64>,
    tail_tol: f64,
}

impl BlockSystem {
    /// Truncates at the smallest `M` with `q(M) < tail_tol`, capped at [`M_CAP`].
    pub fn new(src: &TentSource, tail_tol: f64) -> Result<Self> {
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("tail tolerance must lie in ]0, 1[, got {tail_tol}")));
        }
        let a = src.a();
        let mut q = vec![1.0];
        let mut x = 1.0;
        while x >= tail_tol && q.len() <= M_CAP {
            x -= a.defect(x);
            q.push(x);
        }
        Ok(Self {
            src: src.clone(),
            q,
            tail_tol,
        })
    }

    /// Truncates at exactly `m_max` branches.
    pub fn with_m_max(src: &TentSource, m_max: usize) -> Result<Self> {
        if m_max == 0 {
            return Err(Error::InvalidParameter("need at least one block branch".into()));
        }
        let a = src.a();
        let mut q = Vec::with_capacity(m_max + 1);
        let mut x = 1.0;
        q.push(x);
        for _ in 0..m_max {
            x -= a.defect(x);
            q.push(x);
        }
        Ok(Self {
            src: src.clone(),
            tail_tol: x,
            q,
        })
    }

    pub fn source(&self) -> &TentSource {
        &self.src
    }

    pub fn m_max(&self) -> usize {
        self.q.len() - 1
    }

    /// `q(M_max)`, the mass of the branches left out.
    pub fn tail_mass(&self) -> f64 {
        self.q[self.m_max()]
    }

    /// Whether the tail mass met the requested tolerance before the cap.
    pub fn tail_within_tolerance(&self) -> bool {
        self.tail_mass() <= self.tail_tol
    }

    /// `q(0), …, q(M_max)` under the uniform measure.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `|J_m| = q(m−1) − q(m)`.
    pub fn interval_length(&self, m: usize) -> f64 {
        self.q[m - 1] - self.q[m]
    }

    /// The stream `(m, g_m(x), g_m'(x))` for `m = 1..=M_max`.
    pub fn branches_at(&self, x: f64) -> BranchStream<'_> {
        BranchStream {
            src: &self.src,
            x,
            m: 0,
            m_max: self.m_max(),
            y: 0.0,
            d: 0.0,
        }
    }
}

/// Incremental evaluation of all block branches at one point.
pub struct BranchStream<'a> {
    src: &'a TentSource,
    x: f64,
    m: usize,
    m_max: usize,
    y: f64,
    d: f64,
}

impl Iterator for BranchStream<'_> {
    type Item = (usize, f64, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        if self.m >= self.m_max {
            return None;
        }
        if self.m == 0 {
            let (y, d) = self.src.b().eval_deriv(self.x);
            self.y = y;
            self.d = d;
        } else {
            let (y, d) = self.src.a().eval_deriv(self.y);
            self.d *= d;
            self.y = y;
        }
        self.m += 1;
        Some((self.m, self.y, self.d))
    }
}

/// `(m, g_m(x), g_m'(x))` for every `m ≤ M_max`.
pub fn block_branch_all(bs: &BlockSystem, x: f64) -> BranchStream<'_> {
    bs.branches_at(x)
}

/// A piecewise-linear density on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub sweeps: usize,
    /// Sup-distance between the last two iterates.
    pub residual: f64,
}

fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

#[inline]
fn interp_weights(y: f64, n: usize) -> (usize, f64) {
    let s = y.clamp(0.0, 1.0) * (n - 1) as f64;
    let j = (s.floor() as usize).min(n - 2);
    (j, s - j as f64)
}

fn trapezoid(values: &[f64]) -> f64 {
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

impl DensityEstimate {
    /// Linear interpolation.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let (j, t) = interp_weights(x, n);
        self.values[j] * (1.0 - t) + self.values[j + 1] * t
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values)
    }

    /// `ψ(0)`, read off the first node.
    pub fn at_zero(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The probability measure with this density.
    pub fn to_measure(&self) -> Result<Measure> {
        let mut m = Measure::tabulated(self.nodes.clone(), self.values.clone())?;
        m.set_label("block_invariant");
        Ok(m)
    }
}

/// The collocated density transformer `f ↦ Σ_m |g_m'| f∘g_m` on `grid_n` uniform nodes.
#[derive(Debug, Clone)]
pub struct CollocatedOperator {
    n: usize,
    matrix: Vec<f64>,
}

impl CollocatedOperator {
    pub fn new(bs: &BlockSystem, grid_n: usize) -> Result<Self> {
        if grid_n < 2 {
            return Err(Error::InvalidParameter(format!("grid needs at least 2 nodes, got {grid_n}")));
        }
        let nodes = uniform_grid(grid_n);
        let mut matrix = vec![0.0; grid_n * grid_n];
        matrix.par_chunks_mut(grid_n).zip(nodes.par_iter()).for_each(|(row, &x)| {
            for (_, y, d) in bs.branches_at(x) {
                let (j, t) = interp_weights(y, grid_n);
                let w = d.abs();
                row[j] += w * (1.0 - t);
                row[j + 1] += w * t;
            }
        });
        Ok(Self { n: grid_n, matrix })
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> Vec<f64> {
        uniform_grid(self.n)
    }

    /// Nodal values of the transformed interpolant.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        self.matrix
            .par_chunks(self.n)
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let mass = trapezoid(&v);
    v.iter_mut().for_each(|x| *x /= mass);
    v
}

/// Power iteration for the invariant density of the collocated operator.
pub fn invariant_density_with(op: &CollocatedOperator, tol: f64, max_sweeps: usize) -> Result<DensityEstimate> {
    let n = op.grid_n();
    let mut f = vec![1.0; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let g = normalized(op.apply(&f));
        residual = g.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        f = g;
        if residual < tol {
            if f.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Consistency("invariant density has nonpositive nodal values".into()));
            }
            return Ok(DensityEstimate {
                nodes: op.nodes(),
                values: f,
                sweeps: sweep,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "power iteration for the block density",
        iterations: max_sweeps,
        residual,
    })
}

/// Invariant density `ψ` on `grid_n ≥ 64` nodes, iterated until the sup-change drops below `tol`.
pub fn invariant_density(bs: &BlockSystem, grid_n: usize, tol: f64) -> Result<DensityEstimate> {
    if grid_n < 64 {
        return Err(Error::InvalidParameter(format!("grid_n must be at least 64, got {grid_n}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let op = CollocatedOperator::new(bs, grid_n)?;
    invariant_density_with(&op, tol, MAX_SWEEPS)
}

/// `ψ(0)` at `grid_n` and `2·grid_n` nodes with the Richardson combination `(4ψ_{2n} − ψ_n)/3`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Psi0Refinement {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

pub fn psi0_refinement(bs: &BlockSystem, grid_n: usize, tol: f64) -> Result<Psi0Refinement> {
    let coarse = invariant_density(bs, grid_n, tol)?.at_zero();
    let fine = invariant_density(bs, 2 * grid_n - 1, tol)?.at_zero();
    Ok(Psi0Refinement {
        coarse,
        fine,
        extrapolated: (4.0 * fine - coarse) / 3.0,
    })
}

/// Power law `|J_m| ≈ C m^{−s}` fitted on the last two decades of branches.
fn interval_law(bs: &BlockSystem) -> Option<(f64, f64)> {
    let m_max = bs.m_max();
    if m_max < 4 {
        return None;
    }
    let lo = (m_max / 100).max(2);
    let pts: Vec<(f64, f64)> = geometric_indices(lo, m_max, 64)
        .into_iter()
        .filter_map(|m| {
            let len = bs.interval_length(m);
            (len > 0.0).then(|| ((m as f64).ln(), len.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(((my - slope * mx).exp(), -slope))
}

fn geometric_indices(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (count.max(2) - 1) as f64);
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for k in 0..count {
        let m = ((lo as f64 * ratio.powi(k as i32)).round() as usize).clamp(lo, hi);
        if out.last() != Some(&m) {
            out.push(m);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockEntropy {
    pub value: f64,
    /// Bound on the contribution of branches beyond `M_max`.
    pub tail_bound: f64,
    pub m_max: usize,
}

/// Rohlin entropy `Σ_m ∫ |g_m'| log(1/|g_m'|) ψ∘g_m`, truncated at `M_max`.
pub fn block_entropy(bs: &BlockSystem, psi: &DensityEstimate) -> Result<BlockEntropy> {
    let rule = quad::gauss_legendre(ENTROPY_ORDER);
    let panel = 1.0 / ENTROPY_PANELS as f64;
    let mut points = Vec::with_capacity(ENTROPY_PANELS * ENTROPY_ORDER);
    for p in 0..ENTROPY_PANELS {
        let mid = (p as f64 + 0.5) * panel;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            points.push((mid + 0.5 * panel * x, 0.5 * panel * w));
        }
    }
    let value: f64 = points
        .par_iter()
        .map(|&(y, w)| {
            let mut acc = 0.0;
            for (_, g, d) in bs.branches_at(y) {
                let s = d.abs();
                if s > 0.0 {
                    acc -= s * s.ln() * psi.eval(g);
                }
            }
            w * acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    if value < -1e-12 {
        return Err(Error::Consistency(format!("block entropy is negative ({value})")));
    }
    Ok(BlockEntropy {
        value: value.max(0.0),
        tail_bound: entropy_tail_bound(bs, psi),
        m_max: bs.m_max(),
    })
}

fn entropy_tail_bound(bs: &BlockSystem, psi: &DensityEstimate) -> f64 {
    let m = bs.m_max() as f64;
    let tail = bs.tail_mass();
    let log_cost = match interval_law(bs) {
        Some((c, s)) if s > 1.0 => {
            // ∫_M^∞ C t^{−s} (s log t − log C) dt
            let head = c * m.powf(1.0 - s) / (s - 1.0);
            return psi.max_value() * head * (s * m.ln() + s / (s - 1.0) - c.ln()).max(0.0);
        }
        _ => -bs.interval_length(bs.m_max()).ln(),
    };
    psi.max_value() * tail * log_cost.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTimeClass {
    Finite,
    Divergent,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockTime {
    pub class: BlockTimeClass,
    /// Extrapolated `E_ν[W]` when finite.
    pub value: Option<f64>,
    pub tail_estimate: Option<f64>,
    /// `(M, Σ_{m≤M} m ν(J_m))` at geometric `M`.
    pub partial_sums: Vec<(usize, f64)>,
    /// Law fitted to `q_ν` when the tail is not geometric.
    pub fitted: Option<LawFit>,
    /// Tail ratio `q_ν(M)/q_ν(M−1)` used for the geometric test.
    pub tail_ratio: f64,
}

/// Width of the band around `β = 1` where the log exponent decides.
pub const BETA_BAND: f64 = 0.02;

/// `E_ν[W] = Σ_m m ν(J_m) = Σ_n q_ν(n)`, or a divergence flag.
pub fn expected_block_time(bs: &BlockSystem, psi: &DensityEstimate) -> Result<BlockTime> {
    let mu = psi.to_measure()?;
    let qnu: Vec<f64> = bs.q().iter().map(|&x| mu.cdf(x)).collect();
    let m_max = bs.m_max();
    let mut partial_sums = Vec::new();
    let mut acc = 0.0;
    let mut next = 1usize;
    for m in 1..=m_max {
        acc += m as f64 * (qnu[m - 1] - qnu[m]);
        if m == next || m == m_max {
            partial_sums.push((m, acc));
            next = (next * 2).max(m + 1);
        }
    }
    let head: f64 = qnu[..m_max].iter().sum();
    let last = qnu[m_max];
    let tail_ratio = if m_max >= 1 && qnu[m_max - 1] > 0.0 {
        last / qnu[m_max - 1]
    } else {
        0.0
    };
    if tail_ratio < 0.95 {
        let rho = tail_ratio;
        let tail = last / (1.0 - rho);
        return Ok(BlockTime {
            class: BlockTimeClass::Finite,
            value: Some(head + tail),
            tail_estimate: Some(tail),
            partial_sums,
            fitted: None,
            tail_ratio,
        });
    }
    if m_max < 160 {
        return Ok(BlockTime {
            class: BlockTimeClass::Indeterminate,
            value: None,
            tail_estimate: None,
            partial_sums,
            fitted: None,
            tail_ratio,
        });
    }
    let seq = WtdSequence::from_fn(m_max as u64, MeasureTag::BlockInvariant, |n| qnu[n as usize]);
    let n_lo = (m_max / 1000).max(16) as u64;
    let fit = fit_law(&seq, n_lo, m_max as u64)?;
    let (beta, delta) = (fit.beta, fit.delta);
    let mf = m_max as f64;
    let law_at_m = fit.k * mf.powf(-beta) * mf.ln().powf(delta);
    let class = if beta < 1.0 - BETA_BAND {
        BlockTimeClass::Divergent
    } else if beta > 1.0 + BETA_BAND {
        BlockTimeClass::Finite
    } else if delta > -0.7 {
        BlockTimeClass::Divergent
    } else if delta < -1.3 {
        BlockTimeClass::Finite
    } else {
        BlockTimeClass::Indeterminate
    };
    let tail = match class {
        BlockTimeClass::Finite if beta > 1.0 + BETA_BAND => Some(law_at_m * mf / (beta - 1.0)),
        BlockTimeClass::Finite => Some(fit.k * mf.ln().powf(delta + 1.0) / (-delta - 1.0)),
        _ => None,
    };
    Ok(BlockTime {
        class,
        value: tail.map(|t| head + t),
        tail_estimate: tail,
        partial_sums,
        fitted: Some(fit),
        tail_ratio,
    })
}

/// Truncated invariant function `φ₀^{(N)} = Σ_{n<N} (aⁿ)' ψ∘aⁿ` of the original system.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantFunction {
    pub n_trunc: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `sup |L[φ₀^{(N)}] − φ₀^{(N)}|` over the residual grid in `[0.1, 1]`.
    pub residual: f64,
    /// `∫ φ₀^{(N)} = Σ_{n<N} q_ν(n)`.
    pub integral: f64,
}

/// Pointwise `φ₀^{(N)}(y)`.
pub fn phi0_at(src: &TentSource, psi: &DensityEstimate, n_trunc: usize, y: f64) -> f64 {
    let a = src.a();
    let mut x = y;
    let mut d = 1.0;
    let mut acc = 0.0;
    for _ in 0..n_trunc {
        acc += d * psi.eval(x);
        let (nx, da) = a.eval_deriv(x);
        d *= da;
        x = nx;
    }
    acc
}

/// `L[f](y) = a'(y) f(a(y)) + |b'(y)| f(b(y))` applied to `φ₀^{(N)}`, minus `φ₀^{(N)}(y)`.
pub fn phi0_residual_at(src: &TentSource, psi: &DensityEstimate, n_trunc: usize, y: f64) -> f64 {
    let (ya, da) = src.a().eval_deriv(y);
    let (yb, db) = src.b().eval_deriv(y);
    da * phi0_at(src, psi, n_trunc, ya) + db.abs() * phi0_at(src, psi, n_trunc, yb) - phi0_at(src, psi, n_trunc, y)
}

/// Evaluates `φ₀^{(N)}` on `grid` (points in `]0, 1]`) and its fixed-point residual on `[0.1, 1]`.
pub fn invariant_function_original(
    bs: &BlockSystem,
    psi: &DensityEstimate,
    n_trunc: usize,
    grid: &[f64],
) -> Result<InvariantFunction> {
    if n_trunc < 1 {
        return Err(Error::InvalidParameter("N_trunc must be at least 1".into()));
    }
    if grid.iter().any(|&y| !(y > 0.0 && y <= 1.0)) {
        return Err(Error::InvalidParameter("grid points must lie in ]0, 1]".into()));
    }
    let src = bs.source();
    let values: Vec<f64> = grid.par_iter().map(|&y| phi0_at(src, psi, n_trunc, y)).collect();
    let residual_grid: Vec<f64> = (0..=90).map(|i| 0.1 + 0.01 * i as f64).collect();
    let residual = residual_grid
        .par_iter()
        .map(|&y| phi0_residual_at(src, psi, n_trunc, y).abs())
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    let mu = psi.to_measure()?;
    let mut integral = 0.0;
    let mut x = 1.0;
    let a = src.a();
    for _ in 0..n_trunc {
        integral += mu.cdf(x);
        x -= a.defect(x);
    }
    Ok(InvariantFunction {
        n_trunc,
        grid: grid.to_vec(),
        values,
        residual,
        integral,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GoodClassDiagnostics {
    /// `1/s` for the fitted decay `|J_m| ∼ C m^{−s}`; 0 when the decay is faster than any power.
    pub abscissa_estimate: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub distortion_l: f64,
}

/// Finite-range estimates of the Good Class quantities.
pub fn good_class_diagnostics(bs: &BlockSystem) -> GoodClassDiagnostics {
    let grid = uniform_grid(DIAG_GRID);
    let m_max = bs.m_max();
    let abscissa_estimate = match interval_law(bs) {
        Some((_, s)) if s > 0.0 && bs.q()[m_max] > 0.0 => {
            let ratio = bs.q()[m_max] / bs.q()[m_max - 1];
            if ratio < 0.95 {
                0.0
            } else {
                1.0 / s
            }
        }
        _ => 0.0,
    };
    // per-branch extremes of |g_m'| over the grid
    let (lo, hi) = grid
        .par_iter()
        .map(|&x| {
            let mut lo = vec![f64::INFINITY; m_max];
            let mut hi = vec![0.0f64; m_max];
            for (m, _, d) in bs.branches_at(x) {
                lo[m - 1] = d.abs();
                hi[m - 1] = d.abs();
            }
            (lo, hi)
        })
        .reduce(
            || (vec![f64::INFINITY; m_max], vec![0.0; m_max]),
            |(mut l1, mut h1), (l2, h2)| {
                for i in 0..m_max {
                    l1[i] = l1[i].min(l2[i]);
                    h1[i] = h1[i].max(h2[i]);
                }
                (l1, h1)
            },
        );
    let eta1 = hi.iter().copied().fold(0.0, f64::max);
    let distortion_l = lo
        .iter()
        .zip(&hi)
        .filter(|(l, _)| **l > 0.0)
        .map(|(l, h)| h / l)
        .fold(1.0, f64::max);
    let depth = DIAG_DEPTH2.min(m_max);
    let eta2 = grid
        .iter()
        .map(|&x| {
            let mut best: f64 = 0.0;
            for (_, y2, d2) in bs.branches_at(x).take(depth) {
                for (_, _, d1) in bs.branches_at(y2).take(depth) {
                    best = best.max((d1 * d2).abs());
                }
            }
            best
        })
        .fold(0.0, f64::max);
    GoodClassDiagnostics {
        abscissa_estimate,
        eta1,
        eta2,
        distortion_l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branches::{make_b, Branch, BKind, DrilParams, Monotonicity, V0};
    use std::f64::consts::{LN_2, PI};

    fn gauss(x: f64) -> f64 {
        1.0 / ((1.0 + x) * LN_2)
    }

    #[test]
    fn farey_branches_are_gauss_branches() {
        let bs = BlockSystem::with_m_max(&TentSource::farey(), 10).unwrap();
        let v: Vec<_> = block_branch_all(&bs, 0.5).collect();
        assert_eq!(v.len(), 10);
        assert!((v[2].1 - 1.0 / 3.5).abs() < 1e-15);
        let (m, y, d) = block_branch_all(&bs, 0.0).nth(1).unwrap();
        assert_eq!(m, 2);
        assert!((y - 0.5).abs() < 1e-15 && (d + 0.25).abs() < 1e-15);
        let (m, y, d) = block_branch_all(&bs, 0.3).next().unwrap();
        assert_eq!(m, 1);
        let b = bs.source().b();
        assert_eq!((y, d), (b.eval(0.3), b.deriv(0.3)));
        for (m, y, d) in block_branch_all(&bs, 0.7) {
            let m = m as f64;
            assert!((y - 1.0 / (m + 0.7)).abs() < 1e-14);
            assert!((d + 1.0 / ((m + 0.7) * (m + 0.7))).abs() < 1e-14);
        }
    }

    #[test]
    fn truncation_and_partition() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-4).unwrap();
        assert!((9_999..=10_000).contains(&bs.m_max()));
        assert!(bs.tail_within_tolerance());
        let total: f64 = (1..=bs.m_max()).map(|m| bs.interval_length(m)).sum::<f64>() + bs.tail_mass();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_density_small_grid() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-5).unwrap();
        let psi = invariant_density(&bs, 257, 1e-12).unwrap();
        assert!((psi.integral() - 1.0).abs() < 1e-10);
        assert!(psi.values.iter().all(|v| *v > 0.0));
        let err = psi
            .nodes
            .iter()
            .zip(&psi.values)
            .map(|(x, v)| (v - gauss(*x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "sup error {err}");
        assert!(invariant_density(&bs, 32, 1e-10).is_err());
    }

    #[test]
    fn fixed_point_residual_and_mass() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-4).unwrap();
        let op = CollocatedOperator::new(&bs, 129).unwrap();
        let tol = 1e-11;
        let psi = invariant_density_with(&op, tol, MAX_SWEEPS).unwrap();
        let g = normalized(op.apply(&psi.values));
        let res = g.iter().zip(&psi.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(res < 10.0 * tol);
        // ∫ G[f_h] = ∫_{q(M)}^1 f_h for piecewise-linear f_h
        let nodes = op.nodes();
        let rule = quad::gauss_legendre(8);
        for k in 0..3 {
            let fh: Vec<f64> = nodes.iter().map(|x| x.powi(k)).collect();
            let f = DensityEstimate {
                nodes: nodes.clone(),
                values: fh.clone(),
                sweeps: 0,
                residual: 0.0,
            };
            let mut lhs = 0.0;
            for cell in 0..nodes.len() - 1 {
                lhs += quad::composite(&rule, nodes[cell], nodes[cell + 1], 1, |x| {
                    bs.branches_at(x).map(|(_, y, d)| d.abs() * f.eval(y)).sum::<f64>()
                });
            }
            let rhs = trapezoid(&fh) - quad::composite(&rule, 0.0, bs.tail_mass(), 1, |x| f.eval(x));
            assert!((lhs - rhs).abs() < 1e-8, "k = {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gauss_entropy() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-5).unwrap();
        let psi = invariant_density(&bs, 257, 1e-12).unwrap();
        let h = block_entropy(&bs, &psi).unwrap();
        let exact = PI * PI / (6.0 * LN_2);
        assert!((h.value - exact).abs() < 5e-3, "{}", h.value);
        assert!(h.tail_bound > 0.0 && h.tail_bound < 1e-2);
    }

    #[test]
    fn gauss_block_time_diverges() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-5).unwrap();
        let psi = invariant_density(&bs, 129, 1e-10).unwrap();
        let t = expected_block_time(&bs, &psi).unwrap();
        assert_eq!(t.class, BlockTimeClass::Divergent);
        assert!(t.value.is_none());
        let sums: Vec<f64> = t.partial_sums.iter().map(|p| p.1).collect();
        assert!(sums.windows(2).all(|w| w[1] > w[0]));
    }

    fn linear_tent() -> TentSource {
        let a = Branch::custom("half", Monotonicity::Increasing, |x| 0.5 * x, |_| 0.5, None);
        let b = make_b(BKind::LinearTo(0.5)).unwrap();
        TentSource::new(a, b).unwrap()
    }

    #[test]
    fn contracting_tent_block_time_is_finite() {
        // q(n) = 2^{−n}, ψ ≡ 1, E_ν[W] = Σ 2^{−n} = 2
        let bs = BlockSystem::new(&linear_tent(), 1e-12).unwrap();
        let psi = invariant_density(&bs, 65, 1e-12).unwrap();
        assert!(psi.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let t = expected_block_time(&bs, &psi).unwrap();
        assert_eq!(t.class, BlockTimeClass::Finite);
        assert!((t.value.unwrap() - 2.0).abs() < 1e-9);
        let h = block_entropy(&bs, &psi).unwrap();
        // Σ_m 2^{−m} · m log 2 = 2 log 2
        assert!((h.value - 2.0 * LN_2).abs() < 1e-6);
    }

    #[test]
    fn invariant_function_farey() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-4).unwrap();
        let psi = invariant_density(&bs, 257, 1e-12).unwrap();
        let one = invariant_function_original(&bs, &psi, 1, &[0.25, 0.5]).unwrap();
        assert!((one.values[0] - psi.eval(0.25)).abs() < 1e-15);
        let f = invariant_function_original(&bs, &psi, 1000, &[1e-3, 0.5]).unwrap();
        assert!(f.values[0] > 10.0 * f.values[1]);
        // φ₀ = 1/(x log 2) for the Farey map, up to truncation
        assert!((f.values[1] - 2.0 / LN_2).abs() < 0.01 * 2.0 / LN_2);
        let g = invariant_function_original(&bs, &psi, 2000, &[0.5]).unwrap();
        assert!(g.residual < f.residual);
        assert!(g.integral > f.integral);
    }

    #[test]
    fn diagnostics_farey() {
        let bs = BlockSystem::new(&TentSource::farey(), 1e-4).unwrap();
        let d = good_class_diagnostics(&bs);
        assert!((d.abscissa_estimate - 0.5).abs() < 0.01, "{}", d.abscissa_estimate);
        assert!((d.eta1 - 1.0).abs() < 1e-12);
        assert!(d.eta2 < 1.0);
        assert!(d.distortion_l >= 1.0 && d.distortion_l <= 4.0 + 1e-9);
        assert!(d.eta1 >= bs.source().b().deriv(0.0).abs());
    }

    #[test]
    fn dril_weak_class_contracts_in_two_steps() {
        let src = TentSource::dril_linear(&DrilParams::new(2.0, 0.0).with_v0(V0::Constant(0.9))).unwrap();
        let bs = BlockSystem::with_m_max(&src, 2000).unwrap();
        let d = good_class_diagnostics(&bs);
        assert!(d.eta2 < 1.0);
        assert!(d.eta1 >= src.b().deriv(0.0).abs());
    }
}
