//! Generating functions of coefficient sequences, the Abelian/Tauberian round
//! trip, slowly varying partial-sum transforms, the renewal product, the
//! parameter maps between sources, wtd laws and Shannon weights, predicted
//! weights and source synthesis from prescribed weight exponents.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::branches::DrilParams;
use crate::error::{Error, Result};
use crate::law::{AsymptoticLaw, Domain};
use crate::source::{Measure, TentSource};
use crate::weights::{stream_uniform, MC_CHUNK};
use crate::wtd::{fit_law, wtd_uniform, LawFit};

/// Truncation criterion `vⁿ < CUTOFF` for generating-function sums.
pub const CUTOFF: f64 = 1e-12;

/// Largest number of terms summed for one generating-function value.
pub const MAX_TERMS: usize = 10_000_000;

/// Smallest Monte Carlo budget for the renewal check.
pub const RENEWAL_MIN_SAMPLES: usize = 100_000;

/// Fitted `β` within this distance of 1 is treated as `β = 1` when mapping back.
pub const BETA_SNAP: f64 = 0.02;

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Number of terms `N` with `v^N < CUTOFF`, capped at [`MAX_TERMS`].
pub fn terms_for(v: f64) -> usize {
    if v <= 0.0 {
        return 1;
    }
    ((CUTOFF.ln() / v.ln()).ceil() as usize).clamp(1, MAX_TERMS)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GfEvaluation {
    pub v: f64,
    pub value: f64,
    /// Index of the last summed coefficient.
    pub truncation_n: usize,
    /// `law(N) v^{N+1}/(1−v)`, present when a law was supplied.
    pub tail_bound: Option<f64>,
}

fn check_v(v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("generating functions need 0 <= v < 1, got {v}")));
    }
    Ok(())
}

/// `Σ_{k ≤ N} c_k v^k` over the stored coefficients.
pub fn gf_eval(coeffs: &[f64], v: f64, law: Option<&AsymptoticLaw>) -> Result<GfEvaluation> {
    if coeffs.is_empty() {
        return Err(Error::InsufficientData("empty coefficient sequence".into()));
    }
    gf_eval_fn(|k| coeffs[k], coeffs.len(), v, law)
}

/// [`gf_eval`] for coefficients given by a function of the index, over `n_terms` terms.
pub fn gf_eval_fn(c: impl Fn(usize) -> f64, n_terms: usize, v: f64, law: Option<&AsymptoticLaw>) -> Result<GfEvaluation> {
    check_v(v)?;
    if n_terms == 0 {
        return Err(Error::InsufficientData("no coefficients to sum".into()));
    }
    let mut acc = Kahan::default();
    let mut p = 1.0;
    for k in 0..n_terms {
        acc.add(c(k) * p);
        p *= v;
    }
    let n = n_terms - 1;
    let tail_bound = law.map(|l| l.eval((n as f64).max(2.0)) * p / (1.0 - v));
    Ok(GfEvaluation {
        v,
        value: acc.sum,
        truncation_n: n,
        tail_bound,
    })
}

/// The coefficient sequence `q(n) = K n^{−β}(log n)^δ` with the head clamped where `log n` vanishes.
pub fn law_sequence(law: &AsymptoticLaw) -> impl Fn(usize) -> f64 + '_ {
    let first = if law.delta == 0.0 { 1 } else { 2 };
    move |n| law.eval(n.max(first) as f64)
}

/// The slowly varying `U` with `Q(v) ∼ U(1/(1−v)) (1−v)^{−ρ}`, `ρ = 1 − β`.
pub fn sv_u(law: &AsymptoticLaw, x: f64) -> f64 {
    let l = x.ln();
    let (k, beta, delta) = (law.k, law.beta, law.delta);
    if beta == 1.0 {
        k * l.powf(delta + 1.0) / (delta + 1.0)
    } else if beta == 0.0 {
        k * l.powf(delta)
    } else {
        k * gamma(1.0 - beta) * l.powf(delta)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    /// `v` or `n`.
    pub at: f64,
    pub value: f64,
    pub reference: f64,
    /// `value/reference − 1`.
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTripReport {
    pub rho: f64,
    /// `Q(v) (1−v)^ρ` against `U(1/(1−v))`.
    pub generating: Vec<CurvePoint>,
    /// `Q_n Γ(ρ+1)` against `n^ρ U(n)`.
    pub partial: Vec<CurvePoint>,
}

/// Checks both directions of the Abelian/Tauberian correspondence on the law's own sequence.
pub fn abelian_tauberian_roundtrip(law: &AsymptoticLaw, v_list: &[f64], n_list: &[usize]) -> Result<RoundTripReport> {
    Domain::GammaQ.check(law.beta, law.delta)?;
    let rho = 1.0 - law.beta;
    let q = law_sequence(law);
    let generating = v_list
        .iter()
        .map(|&v| {
            let g = gf_eval_fn(&q, terms_for(v), v, Some(law))?;
            let value = g.value * (1.0 - v).powf(rho);
            let reference = sv_u(law, 1.0 / (1.0 - v));
            Ok(CurvePoint {
                at: v,
                value,
                reference,
                deviation: value / reference - 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<usize> = n_list.to_vec();
    sorted.sort_unstable();
    let mut partial = Vec::with_capacity(sorted.len());
    let mut acc = Kahan::default();
    let mut k = 0usize;
    for &n in &sorted {
        while k < n {
            acc.add(q(k));
            k += 1;
        }
        let nf = n as f64;
        let value = acc.sum * gamma(rho + 1.0);
        let reference = nf.powf(rho) * sv_u(law, nf);
        partial.push(CurvePoint {
            at: nf,
            value,
            reference,
            deviation: value / reference - 1.0,
        });
    }
    Ok(RoundTripReport {
        rho,
        generating,
        partial,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SvTransform {
    /// `Ṽ_n` for `n = 1..=len`.
    pub values: Vec<f64>,
    /// `Ṽ_n (1−β)/V_n` when `β < 1`.
    pub ratio: Option<Vec<f64>>,
}

/// `Ṽ_n = n^{β−1} Σ_{k<n} V_k k^{−β}`; the `k = 0` term enters only when `β = 0`.
pub fn sv_partial_sum_transform(v: &[f64], beta: f64) -> Result<SvTransform> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    let mut values = Vec::with_capacity(v.len());
    let mut acc = Kahan::default();
    for n in 1..=v.len() {
        let k = n - 1;
        if k > 0 || beta == 0.0 {
            acc.add(v[k] * (k as f64).powf(-beta));
        }
        values.push((n as f64).powf(beta - 1.0) * acc.sum);
    }
    let ratio = (beta < 1.0).then(|| {
        values
            .iter()
            .enumerate()
            .map(|(i, t)| t * (1.0 - beta) / v[(i + 1).min(v.len() - 1)])
            .collect()
    });
    Ok(SvTransform { values, ratio })
}

/// `Ṽ_n` at selected `n` for a sequence given by a function; memory independent of `n`.
pub fn sv_transform_at(v: impl Fn(usize) -> f64, beta: f64, ns: &[usize]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    let mut sorted: Vec<usize> = ns.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = Kahan::default();
    let mut k = 0usize;
    for &n in &sorted {
        while k < n {
            if k > 0 || beta == 0.0 {
                acc.add(v(k) * (k as f64).powf(-beta));
            }
            k += 1;
        }
        out.push((n as f64).powf(beta - 1.0) * acc.sum);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RenewalPoint {
    pub v: f64,
    /// `Σ_{k≥1} μ[T^{−k}J] v^k` (Monte Carlo).
    pub occupation: f64,
    pub occupation_stderr: f64,
    /// `1 − Σ_{k≥1} r(k) v^k`.
    pub waiting: f64,
    pub product: f64,
    pub product_stderr: f64,
    /// `|product − D_μ| / D_μ`.
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalReport {
    pub d_mu: f64,
    pub samples: usize,
    pub seed: u64,
    pub points: Vec<RenewalPoint>,
    /// Whether the deviation strictly decreases as `v` increases.
    pub deviation_decreasing: bool,
}

const LANES: usize = 8;

struct OccupationSums {
    sum: Vec<f64>,
    sum2: Vec<f64>,
}

/// Per-sample occupation sums `Σ_{k=1}^{K_v} 1[T^k x ∈ J] v^k` for each `v`.
fn occupation_sums(src: &TentSource, mu: &Measure, vs: &[f64], samples: usize, seed: u64) -> Result<OccupationSums> {
    let nv = vs.len();
    let cut: Vec<usize> = vs.iter().map(|&v| if v == 0.0 { 0 } else { terms_for(v) }).collect();
    let k_max = cut.iter().copied().max().unwrap_or(0);
    let c = src.c();
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Result<OccupationSums>> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut out = OccupationSums {
                sum: vec![0.0; nv],
                sum2: vec![0.0; nv],
            };
            let ln_v: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
            let end = ((ch + 1) * MC_CHUNK).min(samples);
            let mut hits: Vec<Vec<usize>> = vec![Vec::new(); LANES];
            let mut start = ch * MC_CHUNK;
            while start < end {
                // independent trajectories in lockstep so their divisions overlap
                let lanes = (end - start).min(LANES);
                let mut y = [0.0; LANES];
                for l in 0..lanes {
                    y[l] = mu.inverse_cdf(stream_uniform(seed, (start + l) as u64));
                    hits[l].clear();
                }
                for k in 1..=k_max {
                    for l in 0..lanes {
                        y[l] = src.step(y[l])?.1;
                        if y[l] > c {
                            hits[l].push(k);
                        }
                    }
                }
                for h in &hits[..lanes] {
                    for j in 0..nv {
                        let s: f64 = h
                            .iter()
                            .take_while(|&&k| k <= cut[j])
                            .map(|&k| (k as f64 * ln_v[j]).exp())
                            .sum();
                        out.sum[j] += s;
                        out.sum2[j] += s * s;
                    }
                }
                start += lanes;
            }
            Ok(out)
        })
        .collect();
    let mut total = OccupationSums {
        sum: vec![0.0; nv],
        sum2: vec![0.0; nv],
    };
    for p in parts {
        let p = p?;
        for j in 0..nv {
            total.sum[j] += p.sum[j];
            total.sum2[j] += p.sum2[j];
        }
    }
    Ok(total)
}

/// The renewal product `(Σ μ[T^{−k}J]v^k)(1 − Σ r(k)v^k)` against `D_μ = φ(0)/ψ(0)`.
pub fn renewal_check(
    src: &TentSource,
    mu: &Measure,
    v_list: &[f64],
    mc_samples: usize,
    seed: u64,
    psi_at_zero: Option<f64>,
) -> Result<RenewalReport> {
    let psi0 = match psi_at_zero {
        Some(p) if p > 0.0 && p.is_finite() => p,
        _ => {
            return Err(Error::InvalidParameter(
                "renewal check needs the block density at 0".into(),
            ))
        }
    };
    if mc_samples < RENEWAL_MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "renewal check needs at least {RENEWAL_MIN_SAMPLES} samples, got {mc_samples}"
        )));
    }
    for &v in v_list {
        check_v(v)?;
    }
    let d_mu = mu.phi_at_zero() / psi0;
    let occ = occupation_sums(src, mu, v_list, mc_samples, seed)?;
    let n = mc_samples as f64;
    let a = src.a();
    let mut points = Vec::with_capacity(v_list.len());
    for (j, &v) in v_list.iter().enumerate() {
        // 1 − Σ_{k≥1} (q(k−1) − q(k)) v^k = (1 − v) Σ_{k≥0} q(k) v^k, since q(0) = 1
        let terms = terms_for(v);
        let mut acc = Kahan::default();
        let (mut x, mut p) = (1.0, 1.0);
        for _ in 0..terms {
            acc.add(mu.cdf(x) * p);
            x -= a.defect(x);
            p *= v;
        }
        let waiting = (1.0 - v) * acc.sum;
        let mean = occ.sum[j] / n;
        let var = ((occ.sum2[j] - occ.sum[j] * mean) / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        let product = mean * waiting;
        points.push(RenewalPoint {
            v,
            occupation: mean,
            occupation_stderr: se,
            waiting,
            product,
            product_stderr: se * waiting,
            deviation: (product - d_mu).abs() / d_mu,
        });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &k| points[i].v.total_cmp(&points[k].v));
    let deviation_decreasing = order.windows(2).all(|w| points[w[1]].deviation < points[w[0]].deviation);
    Ok(RenewalReport {
        d_mu,
        samples: mc_samples,
        seed,
        points,
        deviation_decreasing,
    })
}

/// `(γ, δ) ↦ (1/γ, −δ/γ)`.
pub fn map_s_to_q(gamma: f64, delta: f64) -> Result<(f64, f64)> {
    Domain::GammaS.check(gamma, delta)?;
    Ok((1.0 / gamma, -delta / gamma))
}

/// `β_M = β_Q`; `δ_M = −δ_Q` for `β_Q < 1`, `−(δ_Q + 1)` for `β_Q = 1`.
pub fn map_q_to_m(beta_q: f64, delta_q: f64) -> Result<(f64, f64)> {
    Domain::GammaQ.check(beta_q, delta_q)?;
    let delta_m = if beta_q == 1.0 { -(delta_q + 1.0) } else { -delta_q };
    Ok((beta_q, delta_m))
}

/// Inverse of the composition `(Q → M) ∘ (S → Q)`: `γ = 1/β_M`, `δ = δ_M/β_M` for `β_M < 1`,
/// `δ = δ_M + 1` for `β_M = 1`.
pub fn map_m_to_s(beta_m: f64, delta_m: f64) -> Result<(f64, f64)> {
    if !(beta_m.is_finite() && delta_m.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite pair ({beta_m}, {delta_m})")));
    }
    let unreachable = |detail: &str| Error::Domain {
        set: Domain::GammaMStar.name(),
        beta: beta_m,
        delta: delta_m,
        detail: detail.into(),
    };
    if beta_m == 0.0 || (beta_m == 1.0 && delta_m > -1.0 && delta_m < 0.0) {
        return Err(unreachable(
            "excluded case (beta_M = 1, delta_M in ]-1,0[) or beta_M = 0: does not provide a DRIL source",
        ));
    }
    if !Domain::GammaMStar.contains(beta_m, delta_m) {
        return Err(unreachable(&format!(
            "outside {}, no DRIL source has these weight exponents",
            Domain::GammaMStar.description()
        )));
    }
    let gamma_s = 1.0 / beta_m;
    let delta_s = if beta_m == 1.0 { delta_m + 1.0 } else { delta_m / beta_m };
    Ok((gamma_s, delta_s))
}

/// Whether an error is the rejection of an unreachable weight-exponent pair.
pub fn is_unreachable(err: &Error) -> bool {
    matches!(err, Error::Domain { set, .. } if *set == Domain::GammaMStar.name())
}

/// Leading-order Shannon weight `m(n)` predicted from the block-invariant wtd law.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum PredictedWeights {
    /// `β = 1`: `(E_B/K)(δ+1) n/(log n)^{δ+1}`.
    Critical { scale: f64, delta: f64 },
    /// `0 ≤ β < 1`: `(E_B/K) n^β/((log n)^δ Γ(β+1)Γ(1−β))`.
    Subcritical { scale: f64, beta: f64, delta: f64 },
    /// Finite mean block length: `(E_B/E_ν[W]) n`.
    Finite { slope: f64 },
}

impl PredictedWeights {
    pub fn at(&self, n: f64) -> f64 {
        match *self {
            PredictedWeights::Critical { scale, delta } => scale * (delta + 1.0) * n / n.ln().powf(delta + 1.0),
            PredictedWeights::Subcritical { scale, beta, delta } => {
                scale * n.powf(beta) / (n.ln().powf(delta) * gamma(beta + 1.0) * gamma(1.0 - beta))
            }
            PredictedWeights::Finite { slope } => slope * n,
        }
    }
}

/// Prediction from `q_ν ∼ K n^{−β}(log n)^δ` in `Γ_Q`, or from a finite `E_ν[W]` when given.
pub fn predicted_weights(law_q: Option<&AsymptoticLaw>, e_b: f64, finite_mean: Option<f64>) -> Result<PredictedWeights> {
    if let Some(w) = finite_mean {
        if !(w >= 1.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!("mean block length must be finite and >= 1, got {w}")));
        }
        return Ok(PredictedWeights::Finite { slope: e_b / w });
    }
    let law = law_q.ok_or_else(|| Error::InvalidParameter("need a wtd law or a finite mean block length".into()))?;
    Domain::GammaQ.check(law.beta, law.delta)?;
    let scale = e_b / law.k;
    Ok(if law.beta == 1.0 {
        PredictedWeights::Critical {
            scale,
            delta: law.delta,
        }
    } else {
        PredictedWeights::Subcritical {
            scale,
            beta: law.beta,
            delta: law.delta,
        }
    })
}

/// Length of the waiting-time sequence used to validate a synthesized source.
pub const SYNTH_N: u64 = 1_000_000;

/// Fitting window for the validation fit.
pub const SYNTH_FIT: (u64, u64) = (10_000, 1_000_000);

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub beta_m: f64,
    pub delta_m: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `(S → Q)` image of `(γ, δ)`.
    pub beta_q: f64,
    pub delta_q: f64,
    pub fit: LawFit,
    pub beta_error: f64,
    pub delta_error: f64,
    /// Fitted law mapped through `(Q → M)`, with `β` snapped to 1 within [`BETA_SNAP`].
    pub recovered_beta_m: f64,
    pub recovered_delta_m: f64,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub params: DrilParams,
    pub source: TentSource,
    pub report: SynthesisReport,
}

/// A DRIL source whose Shannon weights grow like `n^{β_M}(log n)^{δ_M}`, with a fitted validation.
pub fn synthesize_source(beta_m: f64, delta_m: f64) -> Result<Synthesis> {
    let (gamma_s, delta_s) = map_m_to_s(beta_m, delta_m)?;
    let params = DrilParams::new(gamma_s, delta_s);
    let source = TentSource::dril_linear(&params)?;
    let (beta_q, delta_q) = map_s_to_q(gamma_s, delta_s)?;
    let q = wtd_uniform(source.a(), SYNTH_N);
    let fit = fit_law(&q, SYNTH_FIT.0, SYNTH_FIT.1)?;
    let fitted_beta = if (fit.beta - 1.0).abs() <= BETA_SNAP { 1.0 } else { fit.beta };
    let (recovered_beta_m, recovered_delta_m) = if Domain::GammaQ.contains(fitted_beta, fit.delta) {
        map_q_to_m(fitted_beta, fit.delta)?
    } else {
        (f64::NAN, f64::NAN)
    };
    let report = SynthesisReport {
        beta_m,
        delta_m,
        gamma: gamma_s,
        delta: delta_s,
        beta_q,
        delta_q,
        beta_error: (fit.beta - beta_q).abs(),
        delta_error: (fit.delta - delta_q).abs(),
        fit,
        recovered_beta_m,
        recovered_delta_m,
    };
    Ok(Synthesis { params, source, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn geometric_series() {
        let c = vec![1.0; 31];
        let g = gf_eval(&c, 0.5, None).unwrap();
        assert_eq!(g.truncation_n, 30);
        assert!((g.value - (2.0 - 0.5f64.powi(30))).abs() < 1e-15);
        assert!(gf_eval(&c, 1.0, None).is_err());
        assert!(gf_eval(&c, -0.1, None).is_err());
    }

    #[test]
    fn farey_gf_closed_form() {
        let v = 1.0 - 1e-3;
        let g = gf_eval_fn(|n| 1.0 / (n as f64 + 1.0), 100_000, v, None).unwrap();
        let exact = -(1.0 - v).ln() / v;
        assert!((g.value / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn half_power_gf() {
        let v = 1.0 - 1e-4;
        let law = AsymptoticLaw::new(1.0, 0.5, 0.0, Domain::GammaQ).unwrap();
        let g = gf_eval_fn(law_sequence(&law), 10_000_000, v, Some(&law)).unwrap();
        assert!((g.value * (1.0 - v).sqrt() / PI.sqrt() - 1.0).abs() < 0.01);
        assert!(g.tail_bound.unwrap() >= 0.0 && g.tail_bound.unwrap() < 1e-300);
    }

    #[test]
    fn tail_bound_dominates_tail() {
        let law = AsymptoticLaw::new(1.0, 0.5, 0.0, Domain::GammaQ).unwrap();
        let q = law_sequence(&law);
        let v = 0.999;
        let head = gf_eval_fn(&q, 2000, v, Some(&law)).unwrap();
        let full = gf_eval_fn(&q, 60_000, v, None).unwrap();
        let tail = full.value - head.value;
        assert!(tail > 0.0 && tail <= head.tail_bound.unwrap());
    }

    #[test]
    fn roundtrips() {
        let law = AsymptoticLaw::new(1.0, 0.5, 0.0, Domain::GammaQ).unwrap();
        let r = abelian_tauberian_roundtrip(&law, &[0.99, 0.999], &[1000, 1_000_000]).unwrap();
        assert!(r.partial[1].deviation.abs() < 1e-2);
        assert!(r.generating[1].deviation.abs() < r.generating[0].deviation.abs());
        let law = AsymptoticLaw::new(1.0, 1.0, 1.0, Domain::GammaQ).unwrap();
        let r = abelian_tauberian_roundtrip(&law, &[], &[10_000_000]).unwrap();
        assert!(r.partial[0].deviation.abs() < 0.15);
        let outside = AsymptoticLaw::fitted(1.0, 1.0, -1.5);
        assert!(matches!(
            abelian_tauberian_roundtrip(&outside, &[0.9], &[10]),
            Err(Error::Domain { set: "Gamma_Q", .. })
        ));
    }

    #[test]
    fn constant_sequence_partial_sums() {
        let g = gf_eval_fn(|_| 1.0, terms_for(0.9), 0.9, None).unwrap();
        assert!((g.value * 0.1 - 1.0).abs() < 1e-11);
        let t = sv_partial_sum_transform(&vec![1.0; 1000], 0.0).unwrap();
        assert!(t.values.iter().all(|x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sv_transforms() {
        let t = sv_partial_sum_transform(&vec![1.0; 1_000_000], 0.5).unwrap();
        assert!((t.values[999_999] - 2.0).abs() < 0.02);
        let ratio = t.ratio.unwrap();
        assert!((ratio[999_999] - 1.0).abs() < 0.01);
        let ln = |k: usize| if k >= 2 { (k as f64).ln() } else { 0.0 };
        let n = 10_000_000;
        let got = sv_transform_at(ln, 1.0, &[n]).unwrap()[0];
        assert!((2.0 * got / (n as f64).ln().powi(2) - 1.0).abs() < 0.1);
        assert!(sv_partial_sum_transform(&[1.0], 1.5).is_err());
    }

    #[test]
    fn maps() {
        assert_eq!(map_s_to_q(1.0, 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(map_s_to_q(2.0, 2.0).unwrap(), (0.5, -1.0));
        assert_eq!(map_s_to_q(4.0, 1.0).unwrap(), (0.25, -0.25));
        assert!(matches!(map_s_to_q(0.5, 0.0), Err(Error::Domain { set: "Gamma_S", .. })));
        assert_eq!(map_q_to_m(1.0, 0.0).unwrap(), (1.0, -1.0));
        assert_eq!(map_q_to_m(0.5, -1.0).unwrap(), (0.5, 1.0));
        assert_eq!(map_q_to_m(0.25, -0.25).unwrap(), (0.25, 0.25));
        assert!(matches!(map_q_to_m(1.0, -2.0), Err(Error::Domain { set: "Gamma_Q", .. })));
        assert_eq!(map_m_to_s(1.0, -1.0).unwrap(), (1.0, 0.0));
        assert_eq!(map_m_to_s(0.5, 1.0).unwrap(), (2.0, 2.0));
        assert_eq!(map_m_to_s(0.5, -1.0).unwrap(), (2.0, -2.0));
        let e = map_m_to_s(1.0, -0.5).unwrap_err();
        assert!(is_unreachable(&e) && e.to_string().contains("does not provide a DRIL source"));
        let e = map_m_to_s(0.0, 1.0).unwrap_err();
        assert!(is_unreachable(&e) && e.to_string().contains("does not provide a DRIL source"));
        assert!(is_unreachable(&map_m_to_s(1.0, 0.5).unwrap_err()));
    }

    proptest! {
        #[test]
        fn map_roundtrip_on_gamma_m_star(beta in 0.01f64..1.0, delta in -5.0f64..5.0, critical in any::<bool>()) {
            let (b, d) = if critical { (1.0, -1.0 - delta.abs()) } else { (beta, delta) };
            prop_assume!(Domain::GammaMStar.contains(b, d));
            let (g, ds) = map_m_to_s(b, d).unwrap();
            let (bq, dq) = map_s_to_q(g, ds).unwrap();
            let (bm, dm) = map_q_to_m(bq, dq).unwrap();
            prop_assert!((bm - b).abs() <= 1e-12 * b.abs().max(1.0));
            prop_assert!((dm - d).abs() <= 1e-12 * d.abs().max(1.0));
        }

        #[test]
        fn s_image_is_gamma_q_star(gamma in 1.0f64..8.0, delta in -5.0f64..5.0, edge in any::<bool>()) {
            let (g, d) = if edge { (1.0, -delta.abs()) } else { (gamma, delta) };
            prop_assume!(Domain::GammaS.contains(g, d));
            let (bq, dq) = map_s_to_q(g, d).unwrap();
            prop_assert!(Domain::GammaQStar.contains(bq, dq));
            prop_assert!(Domain::GammaQ.contains(bq, dq));
        }

        #[test]
        fn gf_monotone_in_v(v1 in 0.0f64..0.99, dv in 0.0f64..0.009, seed in 0u64..1000) {
            let coeffs: Vec<f64> = (0..500).map(|k| ((k as u64 * 2654435761 + seed) % 97) as f64 / 97.0).collect();
            let a = gf_eval(&coeffs, v1, None).unwrap().value;
            let b = gf_eval(&coeffs, v1 + dv, None).unwrap().value;
            prop_assert!(b >= a - 1e-12 * a.abs());
        }
    }

    #[test]
    fn predictions() {
        let ln2 = std::f64::consts::LN_2;
        let law = AsymptoticLaw::new(1.0 / ln2, 1.0, 0.0, Domain::GammaQ).unwrap();
        let p = predicted_weights(Some(&law), PI * PI / (6.0 * ln2), None).unwrap();
        let n: f64 = 1e4;
        assert!((p.at(n) / (PI * PI / 6.0 * n / n.ln()) - 1.0).abs() < 1e-12);
        let law = AsymptoticLaw::new(1.0, 0.5, 0.0, Domain::GammaQ).unwrap();
        let p = predicted_weights(Some(&law), 1.0, None).unwrap();
        assert!((p.at(n) - 2.0 * n.sqrt() / PI).abs() < 1e-10);
        let p = predicted_weights(None, ln2, Some(2.0)).unwrap();
        assert!((p.at(n) - ln2 / 2.0 * n).abs() < 1e-10);
        assert!(predicted_weights(None, 1.0, None).is_err());
    }

    #[test]
    fn renewal_preconditions() {
        let src = TentSource::farey();
        let mu = Measure::uniform();
        assert!(renewal_check(&src, &mu, &[0.9], 100_000, 1, None).is_err());
        assert!(renewal_check(&src, &mu, &[0.9], 1000, 1, Some(1.0)).is_err());
        assert!(renewal_check(&src, &mu, &[1.0], 100_000, 1, Some(1.0)).is_err());
        let r = renewal_check(&src, &mu, &[0.0], 100_000, 1, Some(1.0 / std::f64::consts::LN_2)).unwrap();
        assert_eq!(r.points[0].product, 0.0);
    }

    #[test]
    fn synthesis_rejections() {
        assert!(is_unreachable(&synthesize_source(0.0, 1.0).unwrap_err()));
        assert!(is_unreachable(&synthesize_source(1.0, -0.5).unwrap_err()));
    }
}
