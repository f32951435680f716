//! Runs FPC-ADLEG on a JSON problem description and prints the iteration
//! table: support sizes, estimator, true error (manufactured problems) and
//! the observed contraction ratio against the guaranteed factor `rho`.
//!
//! ```text
//! cargo run --release --example adaptive_solve -- crates/core/examples/configs/laplacian_manufactured.json
//! ```

use std::path::PathBuf;

use adleg::adaptive::SolverConfig;
use adleg::experiments::{resolve_cache_dir, run_config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/laplacian_manufactured.json")));
    let cfg = SolverConfig::from_json(&std::fs::read_to_string(&path)?)?;
    let outcome = run_config(&cfg, &resolve_cache_dir(None))?;
    let k = &outcome.trace.constants;
    println!(
        "theta = {}, delta = {}, tol = {:.1e}, tol_G = {}, p_max = {}",
        k.theta, k.delta, k.tol, k.tol_g, k.p_max
    );
    println!(
        "alpha in [{:.4}, {:.4}], beta in [{:.4}, {:.4}], rho = {:.4}, J_theta = {}",
        k.alpha_lower, k.alpha_upper, k.beta_lower, k.beta_upper, k.rho, k.j_theta
    );
    println!("{:>3} {:>6} {:>6} {:>6} {:>11} {:>11} {:>8}", "n", "|L_n|", "|M|", "|L+|", "Est", "error", "ratio");
    for r in &outcome.trace.records {
        println!(
            "{:>3} {:>6} {:>6} {:>6} {:>11.3e} {:>11.3e} {:>8}",
            r.n,
            r.lambda_n,
            r.dorfler,
            r.lambda_next,
            r.est_next,
            r.error_next,
            r.ratio.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    if let Some(c) = outcome.report.cardinality_constant {
        println!("smallest cardinality constant along the run: {c:.3}");
    }
    for w in &outcome.trace.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
