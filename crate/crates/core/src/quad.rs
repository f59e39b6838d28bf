//! Quadrature rules: Golub–Welsch Gauss–Legendre tables
//! and an adaptive Gauss–Kronrod (7, 15) integrator.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// A fixed quadrature rule given by nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    let mut rule = golub_welsch(&diag, &off, 2.0);
    // symmetrize to remove eigensolver noise
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
    rule
}

/// Composite Gauss–Legendre sum of `f` over [lo, hi] split into `panels` equal panels.
pub fn composite<F: FnMut(f64) -> f64>(rule: &Rule, lo: f64, hi: f64, panels: usize, mut f: F) -> f64 {
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let mid = a + 0.5 * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            s += w * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

// QUADPACK qk15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn qk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * half, ((resk - resg) * half).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b] to relative tolerance `rel_tol`.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 2000;
    let (v, e) = qk15(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err <= 1e-300 {
            return Ok(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} exceeds tolerance on [{a}, {b}] after {MAX_INTERVALS} subdivisions"
            )));
        }
        let (k, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval at machine resolution; accept what we have
            return Ok(total);
        }
        let (v1, e1) = qk15(&mut f, lo, mid);
        let (v2, e2) = qk15(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}
