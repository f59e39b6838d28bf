//! Shannon weights `m(n) = Σ_{|w|=n} p(w)|log p(w)|` and mean ones-counts,
//! by exact cylinder enumeration or Monte Carlo, and the truncated function `Λ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::source::{cylinder_of_bits, encode_into, log_prob_of_interval, sample, CylinderInterval, Measure, TentSource};

/// Largest depth for exhaustive enumeration of the weight profile.
pub const EXACT_MAX_DEPTH: usize = 26;

/// Largest depth for exhaustive evaluation of `Λ`.
pub const LAMBDA_MAX_DEPTH: usize = 22;

/// Largest depth accepted by the Monte Carlo estimator.
pub const MC_MAX_DEPTH: usize = 100_000;

/// Smallest accepted Monte Carlo budget.
pub const MC_MIN_SAMPLES: usize = 1_000;

/// Samples per parallel work unit; fixes the summation order.
pub const MC_CHUNK: usize = 1024;

const SPLIT_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightProfile {
    pub depths: Vec<usize>,
    /// Shannon weights in nats.
    pub m: Vec<f64>,
    pub nbar: Vec<f64>,
    pub method: ProfileMethod,
    pub stderr_m: Option<Vec<f64>>,
    pub stderr_nbar: Option<Vec<f64>>,
    /// 0.999 quantile of `−log p` per depth (Monte Carlo only).
    pub quantile_999: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

/// The uniform variate of sample `index` under `seed`; independent of evaluation order.
pub fn stream_uniform(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.gen::<f64>()
}

#[derive(Clone)]
struct DepthSums {
    plogp: Vec<f64>,
    pones: Vec<f64>,
}

fn enumerate(
    src: &TentSource,
    mu: &Measure,
    cyl: &CylinderInterval,
    depth: usize,
    ones: usize,
    n_max: usize,
    acc: &mut DepthSums,
) {
    let lp = log_prob_of_interval(mu, cyl);
    let p = lp.exp();
    acc.plogp[depth] -= p * lp;
    acc.pones[depth] += p * ones as f64;
    if depth == n_max {
        return;
    }
    for bit in [0u8, 1] {
        let child = cyl.apply(src.branch(bit));
        enumerate(src, mu, &child, depth + 1, ones + bit as usize, n_max, acc);
    }
}

/// Words of length `depth` as bit vectors, in lexicographic order.
fn all_prefixes(depth: usize) -> Vec<Vec<u8>> {
    (0..1usize << depth)
        .map(|k| (0..depth).map(|i| ((k >> (depth - 1 - i)) & 1) as u8).collect())
        .collect()
}

/// Exhaustive profile over all words of length `≤ n_max`.
pub fn exact_profile(src: &TentSource, mu: &Measure, n_max: usize) -> Result<WeightProfile> {
    if n_max > EXACT_MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "exact enumeration is limited to depth {EXACT_MAX_DEPTH}, got {n_max}"
        )));
    }
    let zero = DepthSums {
        plogp: vec![0.0; n_max + 1],
        pones: vec![0.0; n_max + 1],
    };
    let split = SPLIT_DEPTH.min(n_max);
    // words are built by prepending symbols: I_{s·w} = h_s(I_w)
    let parts: Vec<DepthSums> = all_prefixes(split)
        .into_par_iter()
        .map(|root| {
            let mut acc = zero.clone();
            let mut cyl = CylinderInterval::unit();
            for &bit in root.iter().rev() {
                cyl = cyl.apply(src.branch(bit));
            }
            let ones = root.iter().filter(|&&b| b == 1).count();
            enumerate(src, mu, &cyl, split, ones, n_max, &mut acc);
            acc
        })
        .collect();
    let mut total = zero;
    for part in &parts {
        for d in split..=n_max {
            total.plogp[d] += part.plogp[d];
            total.pones[d] += part.pones[d];
        }
    }
    for d in 0..split {
        let mut s = DepthSums {
            plogp: vec![0.0; d + 1],
            pones: vec![0.0; d + 1],
        };
        enumerate(src, mu, &CylinderInterval::unit(), 0, 0, d, &mut s);
        total.plogp[d] = s.plogp[d];
        total.pones[d] = s.pones[d];
    }
    Ok(WeightProfile {
        depths: (0..=n_max).collect(),
        m: total.plogp,
        nbar: total.pones,
        method: ProfileMethod::Exact,
        stderr_m: None,
        stderr_nbar: None,
        quantile_999: None,
        samples: None,
        seed: None,
    })
}

struct ChunkStats {
    sum_m: Vec<f64>,
    sum_m2: Vec<f64>,
    sum_n: Vec<f64>,
    sum_n2: Vec<f64>,
    costs: Vec<Vec<f64>>,
}

/// Monte Carlo profile at the requested depths from `samples` independent draws of `μ`.
pub fn mc_profile(src: &TentSource, mu: &Measure, depths: &[usize], samples: usize, seed: u64) -> Result<WeightProfile> {
    if samples < MC_MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo needs at least {MC_MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    if max_depth > MC_MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo depth is limited to {MC_MAX_DEPTH}, got {max_depth}"
        )));
    }
    let nd = depths.len();
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Result<ChunkStats>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * MC_CHUNK;
            let end = (start + MC_CHUNK).min(samples);
            let mut st = ChunkStats {
                sum_m: vec![0.0; nd],
                sum_m2: vec![0.0; nd],
                sum_n: vec![0.0; nd],
                sum_n2: vec![0.0; nd],
                costs: vec![Vec::with_capacity(end - start); nd],
            };
            let mut bits = Vec::with_capacity(max_depth);
            for i in start..end {
                let x = sample(mu, stream_uniform(seed, i as u64));
                encode_into(src, x, max_depth, &mut bits)?;
                for (j, &d) in depths.iter().enumerate() {
                    let cost = -log_prob_of_interval(mu, &cylinder_of_bits(src, &bits[..d]));
                    let ones = bits[..d].iter().filter(|&&b| b == 1).count() as f64;
                    st.sum_m[j] += cost;
                    st.sum_m2[j] += cost * cost;
                    st.sum_n[j] += ones;
                    st.sum_n2[j] += ones * ones;
                    st.costs[j].push(cost);
                }
            }
            Ok(st)
        })
        .collect();
    let mut sum_m = vec![0.0; nd];
    let mut sum_m2 = vec![0.0; nd];
    let mut sum_n = vec![0.0; nd];
    let mut sum_n2 = vec![0.0; nd];
    let mut costs: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); nd];
    for part in parts {
        let part = part?;
        for j in 0..nd {
            sum_m[j] += part.sum_m[j];
            sum_m2[j] += part.sum_m2[j];
            sum_n[j] += part.sum_n[j];
            sum_n2[j] += part.sum_n2[j];
            costs[j].extend_from_slice(&part.costs[j]);
        }
    }
    let n = samples as f64;
    let moments = |s: &[f64], s2: &[f64]| -> (Vec<f64>, Vec<f64>) {
        s.iter()
            .zip(s2)
            .map(|(&a, &b)| {
                let mean = a / n;
                let var = ((b - a * mean) / (n - 1.0)).max(0.0);
                (mean, (var / n).sqrt())
            })
            .unzip()
    };
    let (m, stderr_m) = moments(&sum_m, &sum_m2);
    let (nbar, stderr_nbar) = moments(&sum_n, &sum_n2);
    let quantile_999 = costs
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            let k = ((0.999 * (v.len() - 1) as f64).round() as usize).min(v.len() - 1);
            v[k]
        })
        .collect();
    Ok(WeightProfile {
        depths: depths.to_vec(),
        m,
        nbar,
        method: ProfileMethod::MonteCarlo,
        stderr_m: Some(stderr_m),
        stderr_nbar: Some(stderr_nbar),
        quantile_999: Some(quantile_999),
        samples: Some(samples),
        seed: Some(seed),
    })
}

fn lambda_walk(
    src: &TentSource,
    mu: &Measure,
    cyl: &CylinderInterval,
    depth: usize,
    weight: f64,
    params: (f64, f64, f64),
    n_max: usize,
) -> f64 {
    let (v, t, s) = params;
    let p_s = (s * log_prob_of_interval(mu, cyl)).exp();
    let mut acc = weight * p_s;
    if depth == n_max || v == 0.0 {
        return acc;
    }
    for bit in [0u8, 1] {
        let child = cyl.apply(src.branch(bit));
        let w = weight * v * if bit == 1 { t } else { 1.0 };
        acc += lambda_walk(src, mu, &child, depth + 1, w, params, n_max);
    }
    acc
}

/// `Σ_{|w| ≤ n_max} v^{|w|} t^{n(w)} p(w)^s`.
pub fn lambda_truncated(src: &TentSource, mu: &Measure, v: f64, t: f64, s: f64, n_max: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("Lambda needs 0 <= v < 1, got {v}")));
    }
    if n_max > LAMBDA_MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "Lambda enumeration is limited to depth {LAMBDA_MAX_DEPTH}, got {n_max}"
        )));
    }
    Ok(lambda_walk(src, mu, &CylinderInterval::unit(), 0, 1.0, (v, t, s), n_max))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightRatio {
    pub depths: Vec<usize>,
    /// `m(n) / (E_B · nbar(n))`.
    pub ratios: Vec<f64>,
    /// `|ratio − 1|` per depth.
    pub distances: Vec<f64>,
    /// Mean distance from 1 over the last quarter of the depths.
    pub trend: f64,
    /// Whether the distance from 1 strictly decreases with depth.
    pub monotone_toward_one: bool,
}

pub fn weight_ratio(profile: &WeightProfile, block_entropy: f64) -> Result<WeightRatio> {
    let mut depths = Vec::new();
    let mut ratios = Vec::new();
    for ((&d, &m), &nb) in profile.depths.iter().zip(&profile.m).zip(&profile.nbar) {
        if nb > 0.0 {
            depths.push(d);
            ratios.push(m / (block_entropy * nb));
        }
    }
    if ratios.is_empty() {
        return Err(Error::InsufficientData("no depth with nbar > 0".into()));
    }
    let distances: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let q = (distances.len() / 4).max(1);
    let tail = &distances[distances.len() - q..];
    let trend = tail.iter().sum::<f64>() / q as f64;
    let monotone_toward_one = distances.windows(2).all(|w| w[1] < w[0]);
    Ok(WeightRatio {
        depths,
        ratios,
        distances,
        trend,
        monotone_toward_one,
    })
}
