//! Drivers behind the `adleg` command line: compression sweeps, column decay
//! profiles, adaptive solves from JSON configs and randomized self-checks.
//! Every driver writes data files only (CSV / JSON / JSON lines).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::adaptive::{
    coarse, coefficient_fields, dorfler, fpc_adleg, AdaptiveTrace, Discretization, GalerkinState,
    ManufacturedSpec, Problem, ProblemSpec, SolverConfig, TailSpec,
};
use crate::compress::{compress, write_sweep_csv, CompressedFactor, Strategy, SweepRow};
use crate::error::{Error, Result};
use crate::index_space::{pi_map, ParityBlock};
use crate::operator_assembly::CoefficientSpec;
use crate::orthonormalize::{
    cholesky, column_decay_profile, modified_gram_schmidt, write_decay_csv, BlockBasis, ColumnProfile,
};
use crate::sparse::SparseMatrix;
use crate::sparsity::{
    best_n_term_curve, fit_gevrey, fitted_cardinality_constant, residual_class, write_curve_csv, GevreyFit,
};

/// Largest degree accepted by the basis driver.
pub const DEFAULT_MAX_DEGREE: u32 = 120;
/// Environment variable overriding the default cache directory.
pub const CACHE_ENV: &str = "ADLEGS_CACHE";
const DEFAULT_CACHE_DIR: &str = ".adleg-cache";

/// Process exit status for an error: 1 for usage / configuration / I/O
/// problems, 2 for `p_max` exhaustion, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::PmaxExhausted { .. } => 2,
        Error::InvalidIndex(..)
        | Error::OutOfRange { .. }
        | Error::InvalidArgument(_)
        | Error::Config { .. }
        | Error::Format(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 1,
        Error::DimensionMismatch { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::NoConvergence { .. }
        | Error::InsufficientQuadrature { .. }
        | Error::Overflow(_)
        | Error::RieszAssumption(_)
        | Error::BisectionBracket { .. }
        | Error::FitFailure(_) => 3,
    }
}

/// Cache directory: an explicit path wins, then `ADLEGS_CACHE`, then
/// `.adleg-cache` in the working directory.
pub fn resolve_cache_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_CACHE_DIR),
    }
}

/// Hex SHA-256 of `(p, tol_G, strategy, parity)`; `tol_G` enters through its
/// exact bit pattern.
pub fn cache_key(p: u32, tol_g: f64, strategy: Strategy, block: ParityBlock) -> String {
    let mut h = Sha256::new();
    h.update(b"adleg-factor-v1");
    h.update(p.to_le_bytes());
    h.update(tol_g.to_bits().to_le_bytes());
    h.update(strategy.as_str().as_bytes());
    h.update(block.symbol().as_bytes());
    hex::encode(h.finalize())
}

pub fn cache_path(dir: &Path, p: u32, tol_g: f64, strategy: Strategy, block: ParityBlock) -> PathBuf {
    dir.join(format!("{}.adcf", &cache_key(p, tol_g, strategy, block)[..24]))
}

/// Reads a cached factor if one exists and matches the request.
pub fn load_cached_factor(dir: &Path, p: u32, tol_g: f64, strategy: Strategy, block: ParityBlock) -> Result<Option<CompressedFactor>> {
    let path = cache_path(dir, p, tol_g, strategy, block);
    if !path.exists() {
        return Ok(None);
    }
    let f = CompressedFactor::read_binary(BufReader::new(File::open(&path)?))?;
    let matches = f.p == p && f.tol_g.to_bits() == tol_g.to_bits() && f.strategy == strategy && f.block == block;
    Ok(matches.then_some(f))
}

pub fn store_factor(dir: &Path, factor: &CompressedFactor) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, factor.p, factor.tol_g, factor.strategy, factor.block);
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        factor.write_binary(&mut w)?;
        std::io::Write::flush(&mut w)?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Cached factor, or a freshly built and stored one. The flag reports a
/// cache hit.
pub fn factor_for(dir: &Path, p: u32, tol_g: f64, strategy: Strategy, block: ParityBlock) -> Result<(CompressedFactor, bool)> {
    if let Some(f) = load_cached_factor(dir, p, tol_g, strategy, block)? {
        return Ok((f, true));
    }
    let basis = BlockBasis::build(p, block)?;
    let f = compress(&basis, strategy, tol_g)?;
    store_factor(dir, &f)?;
    Ok((f, false))
}

#[derive(Debug, Clone)]
pub struct BasisOptions {
    pub p: u32,
    /// First degree of the sweep (defaults to `min(20, p)`).
    pub from: Option<u32>,
    pub step: u32,
    pub tol_g: f64,
    pub strategy: Strategy,
    pub block: ParityBlock,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub max_degree: u32,
}

/// Compression sweep over the degrees `from, from + step, ..., p` (always
/// ending at `p`), using sections of the factorization at `p`. Writes
/// `sweep_<strategy>_<block>.csv`; compressed factors are read from the cache
/// when present and stored otherwise.
pub fn cmd_basis(opts: &BasisOptions) -> Result<(Vec<SweepRow>, PathBuf)> {
    if opts.p > opts.max_degree {
        return Err(Error::InvalidArgument(format!("p = {} exceeds the configured maximum {}", opts.p, opts.max_degree)));
    }
    if opts.step == 0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if !(opts.tol_g > 0.0 && opts.tol_g < 1.0) {
        return Err(Error::InvalidArgument(format!("tol_G = {} outside (0,1)", opts.tol_g)));
    }
    let from = opts.from.unwrap_or(opts.p.min(20)).min(opts.p);
    let mut degrees: Vec<u32> = (from..=opts.p).step_by(opts.step as usize).collect();
    if degrees.last() != Some(&opts.p) {
        degrees.push(opts.p);
    }
    let top = BlockBasis::build(opts.p, opts.block)?;
    let mut rows = Vec::new();
    for &q in &degrees {
        let basis = top.section(q)?;
        let factor = match load_cached_factor(&opts.cache, q, opts.tol_g, opts.strategy, opts.block)? {
            Some(f) => f,
            None => {
                let f = compress(&basis, opts.strategy, opts.tol_g)?;
                store_factor(&opts.cache, &f)?;
                f
            }
        };
        rows.push(SweepRow::evaluate(&basis, &factor)?);
    }
    fs::create_dir_all(&opts.out)?;
    let name = format!("sweep_{}_{}.csv", opts.strategy, block_tag(opts.block));
    let path = opts.out.join(name);
    write_sweep_csv(&rows, BufWriter::new(File::create(&path)?))?;
    Ok((rows, path))
}

/// File-name-safe tag of a parity block (`ee`, `eo`, `oe`, `oo`).
pub fn block_tag(block: ParityBlock) -> &'static str {
    match block {
        ParityBlock::EvenEven => "ee",
        ParityBlock::EvenOdd => "eo",
        ParityBlock::OddEven => "oe",
        ParityBlock::OddOdd => "oo",
    }
}

/// Column decay profiles of `G` (1-based column numbers), written to
/// `decay_p<p>_<block>.csv`.
pub fn cmd_decay(p: u32, block: ParityBlock, columns: &[usize], out: &Path) -> Result<(Vec<ColumnProfile>, PathBuf)> {
    let basis = BlockBasis::build(p, block)?;
    let profiles = columns
        .iter()
        .map(|&c| column_decay_profile(&basis.g, &basis.set, c))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let path = out.join(format!("decay_p{p}_{}.csv", block_tag(block)));
    write_decay_csv(&profiles, BufWriter::new(File::create(&path)?))?;
    Ok((profiles, path))
}

/// Sparsity diagnostics of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SparsityReport {
    /// Gevrey fit of the exact solution (manufactured problems) or of the
    /// final iterate.
    pub solution_fit: Option<GevreyFit>,
    /// Which vector `solution_fit` describes.
    pub solution_source: &'static str,
    /// Gevrey fit of the initial residual `f` (in the dual norm).
    pub residual_fit: Option<GevreyFit>,
    /// Class predicted for residuals from `solution_fit` and the decay rate
    /// of `A_phi`; `None` when the transfer precondition fails.
    pub predicted_residual_class: Option<(f64, f64)>,
    /// Smallest constant making the cardinality bound hold along the run.
    pub cardinality_constant: Option<f64>,
    /// `(|supp u_n|, ||u - u_n||)` for `n >= 1`.
    pub support_error_pairs: Vec<(usize, f64)>,
    pub notes: Vec<String>,
}

/// Computes the sparsity report of a finished run.
pub fn sparsity_report(disc: &Discretization, problem: &Problem, state: &GalerkinState, trace: &AdaptiveTrace) -> SparsityReport {
    let mut notes = Vec::new();
    let (vec, source) = match &problem.exact {
        Some(c) => (c.clone(), "exact"),
        None => (state.coefficients.clone(), "final_iterate"),
    };
    let solution_fit = match fit_gevrey(&best_n_term_curve(&vec, &disc.d_phi)) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("solution fit: {e}"));
            None
        }
    };
    let inv_d: Vec<f64> = disc.d_phi.iter().map(|d| 1.0 / d).collect();
    let residual_fit = match fit_gevrey(&best_n_term_curve(&problem.fhat, &inv_d)) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("residual fit: {e}"));
            None
        }
    };
    let predicted_residual_class = solution_fit.as_ref().and_then(|f| {
        residual_class(f.gamma, f.q, None, disc.a_class.gamma)
            .map_err(|e| notes.push(format!("residual class: {e}")))
            .ok()
    });
    let support_error_pairs: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter(|r| r.error_kind == "exact")
        .map(|r| (r.lambda_next, r.error_next))
        .collect();
    let cardinality_constant = solution_fit
        .as_ref()
        .filter(|_| !support_error_pairs.is_empty())
        .map(|f| fitted_cardinality_constant(f, &support_error_pairs));
    SparsityReport {
        solution_fit,
        solution_source: source,
        residual_fit,
        predicted_residual_class,
        cardinality_constant,
        support_error_pairs,
        notes,
    }
}

/// Everything a solve produces.
#[derive(Debug)]
pub struct SolveOutcome {
    pub config: SolverConfig,
    pub discretization: Discretization,
    pub problem: Problem,
    pub state: GalerkinState,
    pub trace: AdaptiveTrace,
    pub report: SparsityReport,
    pub factor_cached: bool,
}

/// Builds the discretization for a config (reusing a cached factor) and runs
/// the adaptive loop.
pub fn run_config(cfg: &SolverConfig, cache: &Path) -> Result<SolveOutcome> {
    cfg.validate()?;
    let (nu, sigma) = coefficient_fields(&cfg.problem)?;
    let (factor, factor_cached) = factor_for(cache, cfg.p_max, cfg.tol_g, cfg.strategy, cfg.parity_block)?;
    let disc = Discretization::new(factor, &nu, &sigma)?;
    let problem = Problem::from_spec(&disc, &cfg.problem)?;
    let (state, trace) = fpc_adleg(&disc, &problem, cfg.theta, cfg.delta, cfg.tol)?;
    let report = sparsity_report(&disc, &problem, &state, &trace);
    Ok(SolveOutcome {
        config: cfg.clone(),
        discretization: disc,
        problem,
        state,
        trace,
        report,
        factor_cached,
    })
}

/// Reads a JSON config, runs it and writes `trace.jsonl`, `summary.csv`,
/// `sparsity.json` and `solution_curve.csv` to `out`.
pub fn cmd_solve(config: &Path, out: &Path, cache: &Path) -> Result<SolveOutcome> {
    let text = fs::read_to_string(config)?;
    let cfg = SolverConfig::from_json(&text)?;
    let outcome = run_config(&cfg, cache)?;
    write_solve_outputs(&outcome, out)?;
    Ok(outcome)
}

pub fn write_solve_outputs(outcome: &SolveOutcome, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    outcome.trace.write_jsonl(BufWriter::new(File::create(out.join("trace.jsonl"))?))?;
    outcome.trace.write_summary_csv(BufWriter::new(File::create(out.join("summary.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("sparsity.json"))?), &outcome.report)?;
    let disc = &outcome.discretization;
    let curve = best_n_term_curve(&outcome.state.coefficients, &disc.d_phi);
    write_curve_csv(&curve, BufWriter::new(File::create(out.join("solution_curve.csv"))?))?;
    Ok(())
}

/// The manufactured Laplacian problem used by the examples and the
/// acceptance suite: the analytic tail `0.5 exp(-0.8 (||k||_1 - 4))` on the
/// whole block plus twenty low-degree even-even modes
/// `+-exp(-0.8 (||k||_1 - 4))` with alternating signs.
pub fn manufactured_laplacian() -> ProblemSpec {
    let modes = [
        (2, 2), (4, 2), (2, 4), (4, 4), (6, 2), (2, 6), (6, 4), (4, 6), (8, 2), (2, 8),
        (6, 6), (8, 4), (4, 8), (10, 2), (2, 10), (8, 6), (6, 8), (10, 4), (4, 10), (12, 2),
    ];
    let modes = modes
        .iter()
        .enumerate()
        .map(|(i, &(k1, k2))| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            (k1, k2, sign * (-0.8 * (k1 + k2 - 4) as f64).exp())
        })
        .collect();
    ProblemSpec {
        nu: CoefficientSpec::Constant { value: 1.0 },
        sigma: None,
        f: None,
        manufactured_u: Some(ManufacturedSpec {
            modes,
            tail: Some(TailSpec { scale: 0.5 * 3.2f64.exp(), gamma: 0.8 }),
        }),
    }
}

/// Outcome of one randomized check family.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn subset_masks(n: usize) -> impl Iterator<Item = u32> {
    0u32..(1u32 << n)
}

/// Randomized self-checks against brute-force oracles: DORFLER and COARSE
/// minimality, best N-term curves, the C-to-B permutation and Gram-Schmidt
/// against the inverse transposed Cholesky factor.
pub fn cmd_check(seed: u64, cases: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut fail = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let r: Vec<(usize, f64)> = (0..n).map(|k| (k, rng.random_range(-2.0..2.0))).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let theta = rng.random_range(0.05..0.99);
        let w = |m: u32| (0..n).filter(|i| m & (1 << i) != 0).map(|i| r[i].1 * r[i].1 / d[i]).sum::<f64>();
        let total = w(u32::MAX >> (32 - n));
        let best = subset_masks(n).filter(|&m| w(m) >= theta * theta * total).map(|m| m.count_ones()).min().unwrap_or(0);
        if dorfler(&r, &d, theta).len() != best as usize {
            fail += 1;
        }
    }
    out.push(CheckResult { name: "dorfler_minimality", cases, failures: fail });

    let mut fail = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let w: Vec<(usize, f64)> = (0..n).map(|k| (k, rng.random_range(-2.0..2.0))).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let e = |m: u32| (0..n).filter(|i| m & (1 << i) == 0).map(|i| w[i].1 * w[i].1 * d[i]).sum::<f64>();
        let target = (rng.random_range(0.0..1.0) * e(0)).sqrt();
        let best = subset_masks(n).filter(|&m| e(m) <= target * target).map(|m| m.count_ones()).min().unwrap_or(0);
        if coarse(&w, &d, target).len() != best as usize {
            fail += 1;
        }
    }
    out.push(CheckResult { name: "coarse_minimality", cases, failures: fail });

    let mut fail = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=10);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let curve = best_n_term_curve(&v, &d);
        for (k, ek) in curve.iter().enumerate() {
            let best = subset_masks(n)
                .filter(|m| m.count_ones() as usize == k)
                .map(|m| (0..n).filter(|i| m & (1 << i) == 0).map(|i| v[i] * v[i] * d[i]).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            if (ek - best).abs() > 1e-12 * (1.0 + best) {
                fail += 1;
                break;
            }
        }
    }
    out.push(CheckResult { name: "best_n_term_curve", cases, failures: fail });

    let mut fail = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12usize);
        let mut seen = vec![false; n * n + 1];
        let ok = (1..=n * n).all(|u| match pi_map(u, n) {
            Ok(a) if (1..=n * n).contains(&a) && !seen[a] => {
                seen[a] = true;
                true
            }
            _ => false,
        });
        if !ok {
            fail += 1;
        }
    }
    out.push(CheckResult { name: "pi_map_bijection", cases, failures: fail });

    let mut fail = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12usize);
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 1.0));
            for j in 0..i {
                let v: f64 = rng.random_range(-0.5..0.5) / n as f64;
                trip.push((i, j, v));
                trip.push((j, i, v));
            }
        }
        let s = SparseMatrix::from_triplets(n, n, trip).with_symmetric(true);
        let ok = match (modified_gram_schmidt(&s), cholesky(&s)) {
            (Ok(g), Ok(l)) => match l.clone().try_inverse() {
                Some(li) => (g - li.transpose()).abs().max() < 1e-8,
                None => false,
            },
            _ => false,
        };
        if !ok {
            fail += 1;
        }
    }
    out.push(CheckResult { name: "gram_schmidt_vs_cholesky", cases, failures: fail });
    out
}
