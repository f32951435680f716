//! Command-line driver: compression sweeps, decay profiles, adaptive solves
//! and randomized self-checks. Exit status: 0 ok, 1 usage, 2 `p_max`
//! exhaustion, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adleg::compress::Strategy;
use adleg::error::Error;
use adleg::experiments::{
    cmd_basis, cmd_check, cmd_decay, cmd_solve, exit_code, resolve_cache_dir, BasisOptions, DEFAULT_MAX_DEGREE,
};
use adleg::index_space::ParityBlock;

#[derive(Parser)]
#[command(name = "adleg", version, about = "Adaptive Legendre-Galerkin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and compress the orthonormalizing factor; write a sweep CSV.
    Basis {
        #[arg(long)]
        p: u32,
        /// First degree of the sweep (default: min(20, p)).
        #[arg(long)]
        from: Option<u32>,
        #[arg(long, default_value_t = 20)]
        step: u32,
        #[arg(long = "tol-g", default_value_t = 0.5)]
        tol_g: f64,
        #[arg(long, default_value = "threshold")]
        strategy: Strategy,
        #[arg(long, default_value = "++", allow_hyphen_values = true)]
        block: ParityBlock,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long = "max-degree", default_value_t = DEFAULT_MAX_DEGREE)]
        max_degree: u32,
    },
    /// Column decay profiles of G with slow/fast classification.
    Decay {
        #[arg(long)]
        p: u32,
        /// 1-based column numbers (default: 1 and the last column).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<usize>,
        #[arg(long, default_value = "++", allow_hyphen_values = true)]
        block: ParityBlock,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run FPC-ADLEG from a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Randomized checks against brute-force oracles.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Basis { p, from, step, tol_g, strategy, block, out, cache, max_degree } => {
            let opts = BasisOptions {
                p,
                from,
                step,
                tol_g,
                strategy,
                block,
                out,
                cache: resolve_cache_dir(cache.as_deref()),
                max_degree,
            };
            let (rows, path) = cmd_basis(&opts)?;
            for r in &rows {
                println!(
                    "p={:<4} n={:<6} r={:.4} lte={:.4} lambda=[{:.4}, {:.4}]",
                    r.p, r.dim, r.compression_ratio, r.lte_norm, r.lambda_min, r.lambda_max
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Decay { p, columns, block, out } => {
            let columns = if columns.is_empty() {
                let n = adleg::index_space::IndexSet::total_degree(p, Some(block)).len();
                vec![1, n.max(1)]
            } else {
                columns
            };
            let (profiles, path) = cmd_decay(p, block, &columns, &out)?;
            for pr in &profiles {
                println!("column {:<5} k=({},{}) {}", pr.column, pr.index.k1, pr.index.k2, pr.class.as_str());
            }
            println!("wrote {}", path.display());
        }
        Command::Solve { config, out, cache } => {
            let outcome = cmd_solve(&config, &out, &resolve_cache_dir(cache.as_deref()))?;
            let k = &outcome.trace.constants;
            println!("rho = {:.4}, J_theta = {}, iterations = {}", k.rho, k.j_theta, outcome.trace.records.len());
            for r in &outcome.trace.records {
                println!(
                    "n={:<3} |Lambda|={:<5} est={:.3e} err({})={:.3e} ratio={}",
                    r.n,
                    r.lambda_next,
                    r.est_next,
                    r.error_kind,
                    r.error_next,
                    r.ratio.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            for w in &outcome.trace.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", out.display());
        }
        Command::Check { seed, cases } => {
            let results = cmd_check(seed, cases);
            let mut ok = true;
            for r in &results {
                println!("{} {} ({} cases, {} failures)", if r.passed() { "PASS" } else { "FAIL" }, r.name, r.cases, r.failures);
                ok &= r.passed();
            }
            return Ok(if ok { 0 } else { 3 });
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
