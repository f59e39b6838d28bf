//! Waiting-time tails `q(n) = μ[W > n]` and law fitting.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::branches::Branch;
use crate::error::{Error, Result};
use crate::law::AsymptoticLaw;
use crate::source::{Measure, TentSource};

/// Sequences are stored densely up to this index.
pub const DENSE_LIMIT: u64 = 1 << 16;

/// Ratio between consecutive stored checkpoints beyond [`DENSE_LIMIT`].
pub const CHECKPOINT_RATIO: f64 = 1.010_889_286_051_700_5; // 2^{1/64}

/// Target number of regression points in [`fit_law`].
pub const FIT_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureTag {
    Uniform,
    Custom,
    BlockInvariant,
}

/// `q(0..=n_max)`, dense up to [`DENSE_LIMIT`] and at geometric checkpoints beyond.
#[derive(Debug, Clone)]
pub struct WtdSequence {
    dense: Vec<f64>,
    sparse: Vec<(u64, f64)>,
    n_max: u64,
    tag: MeasureTag,
}

fn next_checkpoint(n: u64) -> u64 {
    ((n as f64 * CHECKPOINT_RATIO).ceil() as u64).max(n + 1)
}

impl WtdSequence {
    /// Runs `step` from `q(0) = start`, storing values according to the layout.
    fn iterate(start: f64, n_max: u64, dense_limit: u64, tag: MeasureTag, mut step: impl FnMut(f64) -> f64) -> Self {
        let dense_len = n_max.min(dense_limit) as usize + 1;
        let mut dense = Vec::with_capacity(dense_len);
        let mut q = start;
        dense.push(q);
        for _ in 1..dense_len {
            q = step(q);
            dense.push(q);
        }
        let mut sparse = Vec::new();
        let mut n = dense_limit;
        let mut next = next_checkpoint(n);
        while n < n_max {
            q = step(q);
            n += 1;
            if n == next || n == n_max {
                sparse.push((n, q));
                next = next_checkpoint(n);
            }
        }
        Self { dense, sparse, n_max, tag }
    }

    /// A sequence given by a closed formula, stored with the same layout.
    pub fn from_fn(n_max: u64, tag: MeasureTag, f: impl Fn(u64) -> f64) -> Self {
        let dense: Vec<f64> = (0..=n_max.min(DENSE_LIMIT)).map(&f).collect();
        let mut sparse = Vec::new();
        let mut n = DENSE_LIMIT;
        while n < n_max {
            n = next_checkpoint(n).min(n_max);
            sparse.push((n, f(n)));
        }
        Self { dense, sparse, n_max, tag }
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn tag(&self) -> MeasureTag {
        self.tag
    }

    /// The densely stored head `q(0), q(1), …`.
    pub fn dense(&self) -> &[f64] {
        &self.dense
    }

    /// `q(n)` if `n` is stored.
    pub fn get(&self, n: u64) -> Option<f64> {
        if n < self.dense.len() as u64 {
            return Some(self.dense[n as usize]);
        }
        self.sparse
            .binary_search_by_key(&n, |p| p.0)
            .ok()
            .map(|i| self.sparse[i].1)
    }

    /// All stored `(n, q(n))` in increasing `n`.
    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.dense
            .iter()
            .enumerate()
            .map(|(n, &q)| (n as u64, q))
            .chain(self.sparse.iter().copied())
    }

    /// `r(n) = q(n−1) − q(n)` over the dense head, `n ≥ 1`.
    pub fn r(&self) -> Vec<f64> {
        self.dense.windows(2).map(|w| w[0] - w[1]).collect()
    }

    fn map_values(&self, tag: MeasureTag, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dense: self.dense.iter().map(|&q| f(q)).collect(),
            sparse: self.sparse.iter().map(|&(n, q)| (n, f(q))).collect(),
            n_max: self.n_max,
            tag,
        }
    }
}

/// `q(n) = aⁿ(1)`, the tail under the uniform measure.
pub fn wtd_uniform(a: &Branch, n_max: u64) -> WtdSequence {
    WtdSequence::iterate(1.0, n_max, DENSE_LIMIT, MeasureTag::Uniform, |q| q - a.defect(q))
}

/// [`wtd_uniform`] with every `q(n)` stored.
pub fn wtd_uniform_dense(a: &Branch, n_max: u64) -> WtdSequence {
    WtdSequence::iterate(1.0, n_max, n_max, MeasureTag::Uniform, |q| q - a.defect(q))
}

/// `q_μ(n) = F(q_τ(n))` for the cumulative distribution `F` of `μ`.
pub fn wtd_pushforward(q_tau: &WtdSequence, mu: &Measure, tag: MeasureTag) -> Result<WtdSequence> {
    if q_tau.tag != MeasureTag::Uniform {
        return Err(Error::InvalidParameter(
            "pushforward needs the tail sequence under the uniform measure".into(),
        ));
    }
    Ok(q_tau.map_values(tag, |q| mu.cdf(q)))
}

/// A fitted law together with its fitting window and residual.
#[derive(Debug, Clone, Serialize)]
pub struct LawFit {
    #[serde(rename = "K")]
    pub k: f64,
    pub beta: f64,
    pub delta: f64,
    pub n_lo: u64,
    pub n_hi: u64,
    /// Root-mean-square residual of `log q` over the regression points.
    pub residual: f64,
    pub points: usize,
}

impl LawFit {
    pub fn law(&self) -> AsymptoticLaw {
        AsymptoticLaw::fitted(self.k, self.beta, self.delta)
    }
}

/// Least-squares fit of `log q(n)` on `(1, log n, log log n)` at geometrically spaced `n`.
pub fn fit_law(q: &WtdSequence, n_lo: u64, n_hi: u64) -> Result<LawFit> {
    if n_lo < 16 || n_hi <= n_lo {
        return Err(Error::InvalidParameter(format!(
            "fit window needs n_hi > n_lo >= 16, got [{n_lo}, {n_hi}]"
        )));
    }
    if n_hi > q.n_max {
        return Err(Error::InsufficientData(format!(
            "fit window ends at {n_hi} but the sequence stops at {}",
            q.n_max
        )));
    }
    let stored: Vec<(u64, f64)> = q.points().filter(|&(n, _)| n >= n_lo && n <= n_hi).collect();
    let ratio = (n_hi as f64 / n_lo as f64).powf(1.0 / (FIT_POINTS - 1) as f64);
    let mut chosen: Vec<(u64, f64)> = Vec::with_capacity(FIT_POINTS);
    for k in 0..FIT_POINTS {
        let target = (n_lo as f64 * ratio.powi(k as i32)).min(n_hi as f64);
        let i = stored.partition_point(|p| (p.0 as f64) < target);
        let pick = match (i.checked_sub(1).map(|j| stored[j]), stored.get(i).copied()) {
            (Some(lo), Some(hi)) => {
                if target - lo.0 as f64 <= hi.0 as f64 - target {
                    lo
                } else {
                    hi
                }
            }
            (Some(p), None) | (None, Some(p)) => p,
            (None, None) => continue,
        };
        if chosen.last().is_none_or(|p| p.0 != pick.0) {
            chosen.push(pick);
        }
    }
    if chosen.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "only {} distinct sample points in [{n_lo}, {n_hi}], need 8",
            chosen.len()
        )));
    }
    let rows = chosen.len();
    let mut design = DMatrix::<f64>::zeros(rows, 3);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (i, &(n, v)) in chosen.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::InsufficientData(format!("q({n}) = {v} is not positive")));
        }
        let ln = (n as f64).ln();
        design[(i, 0)] = 1.0;
        design[(i, 1)] = ln;
        design[(i, 2)] = ln.ln();
        rhs[i] = v.ln();
    }
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Consistency(format!("least squares: {e}")))?;
    let fitted = &design * &coef;
    let residual = ((&rhs - fitted).norm_squared() / rows as f64).sqrt();
    Ok(LawFit {
        k: coef[0].exp(),
        beta: -coef[1],
        delta: coef[2],
        n_lo,
        n_hi,
        residual,
        points: rows,
    })
}

/// Deviation of `γ n v(q(n))` from 1.
#[derive(Debug, Clone, Serialize)]
pub struct VDeviation {
    /// `(n, |γ n v(q(n)) − 1|)` at the stored `n` in range.
    pub samples: Vec<(u64, f64)>,
    pub max_deviation: f64,
    pub argmax: u64,
    /// Maximum over each successive decade of the range.
    pub decade_maxima: Vec<(u64, f64)>,
    /// Whether the decade maxima strictly decrease.
    pub decreasing: bool,
    /// Log-log slope of the deviation over the last decade.
    pub final_trend: f64,
}

pub fn check_v_asymptotic(src: &TentSource, q: &WtdSequence, gamma: f64, n_lo: u64, n_hi: u64) -> Result<VDeviation> {
    if n_lo < 1 || n_hi < n_lo {
        return Err(Error::InvalidParameter(format!("need 1 <= n_lo <= n_hi, got [{n_lo}, {n_hi}]")));
    }
    let samples: Vec<(u64, f64)> = q
        .points()
        .filter(|&(n, _)| n >= n_lo && n <= n_hi)
        .map(|(n, qn)| (n, (gamma * n as f64 * src.v(qn) - 1.0).abs()))
        .collect();
    let Some(&(_, first)) = samples.first() else {
        return Err(Error::InsufficientData(format!("no stored values in [{n_lo}, {n_hi}]")));
    };
    let (mut argmax, mut max_deviation) = (samples[0].0, first);
    for &(n, d) in &samples {
        if d > max_deviation {
            max_deviation = d;
            argmax = n;
        }
    }
    let mut decade_maxima = Vec::new();
    let mut start = n_lo;
    while start < n_hi {
        let end = start.saturating_mul(10).min(n_hi);
        let m = samples
            .iter()
            .filter(|p| p.0 >= start && p.0 <= end)
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max);
        if m.is_finite() {
            decade_maxima.push((start, m));
        }
        start = end;
    }
    let decreasing = decade_maxima.windows(2).all(|w| w[1].1 < w[0].1);
    let last = samples[samples.len() - 1];
    let anchor = samples
        .iter()
        .rev()
        .find(|p| p.0 as f64 <= last.0 as f64 / 10.0)
        .copied()
        .unwrap_or(samples[0]);
    let final_trend = if anchor.0 < last.0 && anchor.1 > 0.0 && last.1 > 0.0 {
        (last.1 / anchor.1).ln() / (last.0 as f64 / anchor.0 as f64).ln()
    } else {
        0.0
    };
    Ok(VDeviation {
        samples,
        max_deviation,
        argmax,
        decade_maxima,
        decreasing,
        final_trend,
    })
}

/// Constants `(Ã, A)` making `Ã n^{−1/(γ−ε)} ≤ q(n) ≤ A n^{−1/(γ+ε)}` over the stored `n ≥ n_lo`.
pub fn sandwich_constants(q: &WtdSequence, gamma: f64, eps: f64, n_lo: u64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < gamma) {
        return Err(Error::InvalidParameter(format!("need 0 < eps < gamma, got eps = {eps}")));
    }
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for (n, v) in q.points().filter(|&(n, _)| n >= n_lo.max(1)) {
        let ln = (n as f64).ln();
        lower = lower.min(v * (ln / (gamma - eps)).exp());
        upper = upper.max(v * (ln / (gamma + eps)).exp());
    }
    if !lower.is_finite() {
        return Err(Error::InsufficientData(format!("no stored values beyond {n_lo}")));
    }
    Ok((lower, upper))
}
