use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use zeroent::asymptotics::{self, RenewalReport, RoundTripReport};
use zeroent::blocksys::{self, BlockSystem};
use zeroent::config::SourceSpec;
use zeroent::law::{AsymptoticLaw, Domain};
use zeroent::weights::{self, WeightProfile};
use zeroent::wtd::{self, MeasureTag};
use zeroent::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNREACHABLE: u8 = 3;

#[derive(Parser)]
#[command(name = "zeroent", version, about = "Zero-entropy dynamical sources: wtd, block systems, Shannon weights")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Source spec JSON (default: Farey with the uniform measure).
    #[arg(long, global = true)]
    source: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (falls back to ZEROENT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Waiting-time distribution and an optional law fit.
    Wtd {
        #[arg(long, value_parser = count, default_value = "1e6")]
        n_max: u64,
        /// Fit window `lo:hi`.
        #[arg(long, value_parser = window)]
        fit: Option<(u64, u64)>,
    },
    /// Block-system density, entropy, mean block length and diagnostics.
    Block {
        #[arg(long, value_parser = count, default_value = "1024")]
        grid: u64,
        #[arg(long, default_value_t = blocksys::DEFAULT_TAIL_TOL)]
        tail_tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Shannon-weight and ones-count profiles.
    Weights {
        #[arg(long, conflicts_with = "mc")]
        exact: bool,
        #[arg(long)]
        mc: bool,
        /// Maximum depth (exact) or single depth (Monte Carlo).
        #[arg(long, value_parser = count)]
        depth: Option<u64>,
        /// Comma-separated depths (Monte Carlo).
        #[arg(long, value_parser = count, value_delimiter = ',')]
        depths: Option<Vec<u64>>,
        #[arg(long, value_parser = count, default_value = "1e5")]
        samples: u64,
    },
    /// Truncated Lambda(v, t, s) for every truncation depth up to n-max.
    Lambda {
        #[arg(long)]
        v: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long, value_parser = count, default_value = "12")]
        n_max: u64,
    },
    /// A DRIL source with prescribed Shannon-weight exponents.
    Synthesize {
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
    },
    /// Numerical checks with pass/fail reports.
    Checks {
        /// Comma-separated subset of renewal, tauberian, v, lambda.
        #[arg(long, value_delimiter = ',', default_value = "renewal,tauberian,v,lambda")]
        which: Vec<String>,
        /// Monte Carlo samples for the renewal check.
        #[arg(long, value_parser = count, default_value = "1e6")]
        samples: u64,
    },
}

/// Non-negative integer given in plain or scientific notation (`1e6`).
fn count(s: &str) -> Result<u64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if !(x >= 0.0 && x.fract() == 0.0 && x <= 9.007_199_254_740_992e15) {
        return Err(format!("expected a non-negative integer, got {s}"));
    }
    Ok(x as u64)
}

fn window(s: &str) -> Result<(u64, u64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s}"))?;
    Ok((count(lo)?, count(hi)?))
}

enum Failure {
    Usage(String),
    Unreachable(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Spec(_) => Failure::Usage(e.to_string()),
            _ if asymptotics::is_unreachable(&e) => Failure::Unreachable(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Failed(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Writes CSV and JSON artifacts stamped with the source spec hash and seed.
struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

enum Cell {
    Int(u64),
    Real(f64),
    Empty,
}

impl Output {
    fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> std::io::Result<()> {
        let mut s = format!("# spec_sha256={} seed={}\n{}\n", self.hash, self.seed, header.join(","));
        for row in rows {
            let cells: Vec<String> = row
                .into_iter()
                .map(|c| match c {
                    Cell::Int(n) => n.to_string(),
                    Cell::Real(x) => fmt_f(x),
                    Cell::Empty => String::new(),
                })
                .collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        fs::write(self.dir.join(name), s)
    }

    fn json(&self, name: &str, body: impl Serialize) -> std::io::Result<()> {
        let mut v = serde_json::to_value(body).map_err(std::io::Error::other)?;
        let meta = json!({"spec_sha256": self.hash, "seed": self.seed});
        match &mut v {
            Value::Object(map) => {
                map.insert("spec_sha256".into(), meta["spec_sha256"].clone());
                map.insert("seed".into(), meta["seed"].clone());
            }
            other => *other = json!({"value": other.clone(), "spec_sha256": self.hash, "seed": self.seed}),
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)
    }
}

fn load_spec(path: Option<&Path>) -> Result<SourceSpec, Failure> {
    match path {
        Some(p) => Ok(SourceSpec::from_path(p)?),
        None => Ok(SourceSpec::farey()),
    }
}

fn cmd_wtd(spec: &SourceSpec, out: &Output, n_max: u64, fit: Option<(u64, u64)>) -> CmdResult {
    let n_max = fit.map_or(n_max, |(_, hi)| n_max.max(hi));
    let src = spec.build_source()?;
    let mu = spec.build_measure()?;
    let q = wtd::wtd_uniform(src.a(), n_max);
    let qmu = wtd::wtd_pushforward(&q, &mu, MeasureTag::Custom)?;
    let r = q.r();
    let rows = q.points().zip(qmu.points()).map(|((n, qt), (_, qm))| {
        let rn = if n >= 1 && (n as usize) <= r.len() {
            Cell::Real(r[n as usize - 1])
        } else {
            Cell::Empty
        };
        vec![Cell::Int(n), Cell::Real(qt), Cell::Real(qm), rn]
    });
    out.csv("wtd.csv", &["n", "q_tau", "q_mu", "r"], rows)?;
    if let Some((lo, hi)) = fit {
        let f = wtd::fit_law(&q, lo, hi)?;
        out.json(
            "wtd_law.json",
            json!({"fit": f, "in_gamma_q": Domain::GammaQ.contains(f.beta, f.delta)}),
        )?;
    }
    Ok(())
}

fn cmd_block(spec: &SourceSpec, out: &Output, grid: usize, tail_tol: f64, tol: f64) -> CmdResult {
    let src = spec.build_source()?;
    let bs = BlockSystem::new(&src, tail_tol)?;
    let psi = blocksys::invariant_density(&bs, grid, tol)?;
    out.csv(
        "density.csv",
        &["node", "value"],
        psi.nodes.iter().zip(&psi.values).map(|(&x, &v)| vec![Cell::Real(x), Cell::Real(v)]),
    )?;
    let entropy = blocksys::block_entropy(&bs, &psi)?;
    let time = blocksys::expected_block_time(&bs, &psi)?;
    let diag = blocksys::good_class_diagnostics(&bs);
    out.json(
        "block.json",
        json!({
            "grid": grid,
            "m_max": bs.m_max(),
            "tail_mass": bs.tail_mass(),
            "tail_within_tolerance": bs.tail_within_tolerance(),
            "sweeps": psi.sweeps,
            "residual": psi.residual,
            "psi_at_zero": psi.at_zero(),
            "entropy": entropy,
            "expected_block_time": time,
            "diagnostics": diag,
        }),
    )?;
    Ok(())
}

fn profile_rows(p: &WeightProfile) -> Vec<Vec<Cell>> {
    let opt = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map_or(Cell::Empty, |v| Cell::Real(v[i]));
    p.depths
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let n = d as f64;
            let ratio = if d >= 2 { Cell::Real(p.m[i] * n.ln() / n) } else { Cell::Empty };
            vec![
                Cell::Int(d as u64),
                Cell::Real(p.m[i]),
                opt(&p.stderr_m, i),
                Cell::Real(p.nbar[i]),
                opt(&p.stderr_nbar, i),
                p.samples.map_or(Cell::Empty, |s| Cell::Int(s as u64)),
                ratio,
            ]
        })
        .collect()
}

fn cmd_weights(
    spec: &SourceSpec,
    out: &Output,
    exact: bool,
    mc: bool,
    depth: Option<u64>,
    depths: Option<Vec<u64>>,
    samples: u64,
) -> CmdResult {
    if exact == mc {
        return Err(Failure::Usage("choose exactly one of --exact and --mc".into()));
    }
    let src = spec.build_source()?;
    let mu = spec.build_measure()?;
    let profile = if exact {
        let d = depth.ok_or_else(|| Failure::Usage("--exact needs --depth".into()))? as usize;
        if depths.is_some() {
            return Err(Failure::Usage("--depths is for --mc".into()));
        }
        if d > weights::EXACT_MAX_DEPTH {
            return Err(Failure::Usage(format!(
                "exact enumeration is limited to depth {}",
                weights::EXACT_MAX_DEPTH
            )));
        }
        weights::exact_profile(&src, &mu, d)?
    } else {
        let list: Vec<usize> = match (depth, depths) {
            (Some(d), None) => vec![d as usize],
            (None, Some(ds)) if !ds.is_empty() => ds.into_iter().map(|d| d as usize).collect(),
            _ => return Err(Failure::Usage("--mc needs exactly one of --depth and --depths".into())),
        };
        if list.iter().any(|&d| d > weights::MC_MAX_DEPTH) {
            return Err(Failure::Usage(format!("depths are limited to {}", weights::MC_MAX_DEPTH)));
        }
        if (samples as usize) < weights::MC_MIN_SAMPLES {
            return Err(Failure::Usage(format!("--samples must be at least {}", weights::MC_MIN_SAMPLES)));
        }
        weights::mc_profile(&src, &mu, &list, samples as usize, out.seed)?
    };
    out.csv(
        "weights.csv",
        &["depth", "m", "stderr_m", "nbar", "stderr_nbar", "samples", "m_logn_over_n"],
        profile_rows(&profile),
    )?;
    out.json(
        "weights.json",
        json!({
            "method": profile.method,
            "samples": profile.samples,
            "depths": profile.depths,
            "quantile_999": profile.quantile_999,
            "source": serde_json::from_str::<Value>(&spec.canonical_json()).expect("canonical json"),
        }),
    )?;
    Ok(())
}

fn cmd_lambda(spec: &SourceSpec, out: &Output, v: f64, t: f64, s: f64, n_max: usize) -> CmdResult {
    if n_max > weights::LAMBDA_MAX_DEPTH {
        return Err(Failure::Usage(format!(
            "Lambda enumeration is limited to depth {}",
            weights::LAMBDA_MAX_DEPTH
        )));
    }
    let src = spec.build_source()?;
    let mu = spec.build_measure()?;
    let identity = t == 1.0 && s == 1.0;
    let mut rows = Vec::new();
    let mut report = Vec::new();
    for n in 0..=n_max {
        let value = weights::lambda_truncated(&src, &mu, v, t, s, n)?;
        let reference = identity.then(|| (1.0 - v.powi(n as i32 + 1)) / (1.0 - v));
        rows.push(vec![
            Cell::Int(n as u64),
            Cell::Real(value),
            reference.map_or(Cell::Empty, Cell::Real),
        ]);
        report.push(json!({"n_max": n, "value": value, "reference": reference}));
    }
    out.csv("lambda.csv", &["n_max", "value", "reference"], rows)?;
    out.json("lambda.json", json!({"v": v, "t": t, "s": s, "values": report}))?;
    Ok(())
}

fn cmd_synthesize(out: &Output, beta: f64, delta: f64) -> CmdResult {
    let syn = asymptotics::synthesize_source(beta, delta)?;
    let spec = SourceSpec::dril(syn.report.gamma, syn.report.delta);
    let mut text = serde_json::to_string_pretty(&spec).map_err(|e| Failure::Failed(e.to_string()))?;
    text.push('\n');
    fs::write(out.dir.join("synthesized_source.json"), text)?;
    let out = Output {
        dir: out.dir.clone(),
        hash: spec.sha256(),
        seed: out.seed,
    };
    out.json("synthesis.json", &syn.report)?;
    Ok(())
}

fn curve_rows(points: &[asymptotics::CurvePoint]) -> Vec<Vec<Cell>> {
    points
        .iter()
        .map(|p| vec![Cell::Real(p.at), Cell::Real(p.value), Cell::Real(p.reference), Cell::Real(p.deviation)])
        .collect()
}

/// Tolerances of the checks.
const RENEWAL_BAND: f64 = 0.2;
const TAUBERIAN_TOL: f64 = 0.01;
const LAMBDA_TOL: f64 = 1e-12;

fn check_renewal(spec: &SourceSpec, out: &Output, samples: usize) -> Result<bool, Failure> {
    let src = spec.build_source()?;
    let mu = spec.build_measure()?;
    let bs = BlockSystem::new(&src, blocksys::DEFAULT_TAIL_TOL)?;
    let psi0 = blocksys::psi0_refinement(&bs, 513, 1e-12)?;
    let vs = [0.9, 0.99, 0.999];
    let r: RenewalReport = asymptotics::renewal_check(&src, &mu, &vs, samples, out.seed, Some(psi0.extrapolated))?;
    let last = r.points.last().expect("points").deviation;
    let pass = r.deviation_decreasing && last < RENEWAL_BAND;
    out.csv(
        "check_renewal.csv",
        &["v", "value", "reference", "deviation"],
        r.points
            .iter()
            .map(|p| vec![Cell::Real(p.v), Cell::Real(p.product), Cell::Real(r.d_mu), Cell::Real(p.deviation)]),
    )?;
    out.json(
        "check_renewal.json",
        json!({"pass": pass, "band": RENEWAL_BAND, "psi_at_zero": psi0, "report": r}),
    )?;
    Ok(pass)
}

fn check_tauberian(out: &Output) -> Result<bool, Failure> {
    let law = AsymptoticLaw::new(1.0, 0.5, 0.0, Domain::GammaQ)?;
    let r: RoundTripReport = asymptotics::abelian_tauberian_roundtrip(&law, &[0.9, 0.99, 0.999, 1.0 - 1e-4], &[1000, 1_000_000])?;
    let last_g = r.generating.last().expect("points").deviation.abs();
    let last_p = r.partial.last().expect("points").deviation.abs();
    let pass = last_g < TAUBERIAN_TOL && last_p < TAUBERIAN_TOL;
    out.csv("check_tauberian_gf.csv", &["v", "value", "reference", "deviation"], curve_rows(&r.generating))?;
    out.csv("check_tauberian_partial.csv", &["n", "value", "reference", "deviation"], curve_rows(&r.partial))?;
    out.json("check_tauberian.json", json!({"pass": pass, "tolerance": TAUBERIAN_TOL, "report": r}))?;
    Ok(pass)
}

fn check_v(spec: &SourceSpec, out: &Output) -> Result<bool, Failure> {
    let src = spec.build_source()?;
    let q = wtd::wtd_uniform(src.a(), 1_000_000);
    let d = wtd::check_v_asymptotic(&src, &q, spec.gamma(), 1000, 1_000_000)?;
    let pass = d.decreasing;
    out.json("check_v.json", json!({"pass": pass, "gamma": spec.gamma(), "report": d}))?;
    Ok(pass)
}

fn check_lambda(spec: &SourceSpec, out: &Output) -> Result<bool, Failure> {
    let src = spec.build_source()?;
    let mu = spec.build_measure()?;
    let mut cases = Vec::new();
    let mut worst: f64 = 0.0;
    for v in [0.3, 0.7, 0.95] {
        for n in [4usize, 8, 12] {
            let value = weights::lambda_truncated(&src, &mu, v, 1.0, 1.0, n)?;
            let reference = (1.0 - v.powi(n as i32 + 1)) / (1.0 - v);
            let err = (value - reference).abs();
            worst = worst.max(err);
            cases.push(json!({"v": v, "n_max": n, "value": value, "reference": reference, "error": err}));
        }
    }
    let pass = worst < LAMBDA_TOL;
    out.json("check_lambda.json", json!({"pass": pass, "tolerance": LAMBDA_TOL, "max_error": worst, "cases": cases}))?;
    Ok(pass)
}

fn cmd_checks(spec: &SourceSpec, out: &Output, which: &[String], samples: u64) -> CmdResult {
    let mut failed = Vec::new();
    for name in which {
        let pass = match name.as_str() {
            "renewal" => check_renewal(spec, out, samples as usize)?,
            "tauberian" => check_tauberian(out)?,
            "v" => check_v(spec, out)?,
            "lambda" => check_lambda(spec, out)?,
            other => return Err(Failure::Usage(format!("unknown check {other}"))),
        };
        println!("{name}: {}", if pass { "pass" } else { "FAIL" });
        if !pass {
            failed.push(name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Failed(format!("checks failed: {}", failed.join(", "))))
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ZEROENT_THREADS") {
            Ok(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Failure::Usage(format!("ZEROENT_THREADS must be a positive integer, got {s}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Failed(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    configure_threads(cli.common.threads)?;
    let spec = load_spec(cli.common.source.as_deref())?;
    // numeric construction errors in the source spec are usage errors too
    spec.build_source().map_err(|e| Failure::Usage(format!("source spec: {e}")))?;
    spec.build_measure().map_err(|e| Failure::Usage(format!("source spec: {e}")))?;
    fs::create_dir_all(&cli.common.out)?;
    let out = Output {
        dir: cli.common.out.clone(),
        hash: spec.sha256(),
        seed: cli.common.seed,
    };
    match cli.cmd {
        Cmd::Wtd { n_max, fit } => cmd_wtd(&spec, &out, n_max, fit),
        Cmd::Block { grid, tail_tol, tol } => cmd_block(&spec, &out, grid as usize, tail_tol, tol),
        Cmd::Weights {
            exact,
            mc,
            depth,
            depths,
            samples,
        } => cmd_weights(&spec, &out, exact, mc, depth, depths, samples),
        Cmd::Lambda { v, t, s, n_max } => cmd_lambda(&spec, &out, v, t, s, n_max as usize),
        Cmd::Synthesize { beta, delta } => cmd_synthesize(&out, beta, delta),
        Cmd::Checks { which, samples } => cmd_checks(&spec, &out, &which, samples),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Unreachable(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_UNREACHABLE)
        }
        Err(Failure::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
