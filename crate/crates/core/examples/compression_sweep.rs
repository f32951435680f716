//! Builds the orthonormalizing factor of the even-even block for a range of
//! degrees, compresses it with both strategies and prints one line per
//! degree: compression ratio, threshold / retained diagonals, `||L^T E||`
//! and the extreme generalized eigenvalues of the compressed stiffness.
//!
//! ```text
//! cargo run --release --example compression_sweep -- 20 100 20
//! ```

use std::time::Instant;

use adleg::compress::{compress, Strategy, SweepRow};
use adleg::index_space::ParityBlock;
use adleg::orthonormalize::BlockBasis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u32> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (from, to, step) = match args.as_slice() {
        [a, b, c] => (*a, *b, *c),
        _ => (20, 60, 20),
    };
    let tol_g = 0.5;
    let start = Instant::now();
    let top = BlockBasis::build(to, ParityBlock::EvenEven)?;
    println!("built G for p = {to} (n = {}) in {:.2?}", top.len(), start.elapsed());
    println!("{:>4} {:>6} {:>9} {:>8} {:>10} {:>7} {:>7} {:>7}", "p", "n", "strategy", "r", "t|diags", "|L'E|", "lmin", "lmax");
    let mut p = from;
    while p <= to {
        let basis = top.section(p)?;
        for strategy in [Strategy::Diagonal, Strategy::Threshold] {
            let t0 = Instant::now();
            let f = compress(&basis, strategy, tol_g)?;
            let row = SweepRow::evaluate(&basis, &f)?;
            let knob = match strategy {
                Strategy::Diagonal => format!("{}", f.diagonals.unwrap_or(0)),
                Strategy::Threshold => format!("{:.3e}", f.threshold.unwrap_or(f64::NAN)),
            };
            println!(
                "{:>4} {:>6} {:>9} {:>8.4} {:>10} {:>7.4} {:>7.4} {:>7.4}   ({:.2?})",
                p, row.dim, strategy, row.compression_ratio, knob, row.lte_norm, row.lambda_min, row.lambda_max, t0.elapsed()
            );
        }
        p += step;
    }
    Ok(())
}
