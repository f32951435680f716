//! Best N-term approximation of the manufactured solution in the compressed
//! basis, its Gevrey-class fit and the cardinality bound it implies,
//! compared with the supports actually produced by the adaptive loop.
//!
//! The loop reports errors in the energy norm while the best N-term curve
//! uses the diagonally weighted norm; the two agree up to the Riesz
//! constants, so `|supp|` may dip one below `best-N`.
//!
//! ```text
//! cargo run --release --example sparsity_fit
//! ```

use adleg::adaptive::{coefficient_fields, fpc_adleg, Discretization, Problem};
use adleg::compress::{compress, Strategy};
use adleg::experiments::manufactured_laplacian;
use adleg::index_space::ParityBlock;
use adleg::orthonormalize::BlockBasis;
use adleg::sparsity::{best_n_term_curve, cardinality_bound, fit_gevrey, minimal_cardinality};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = manufactured_laplacian();
    let (nu, sigma) = coefficient_fields(&spec)?;
    let basis = BlockBasis::build(60, ParityBlock::EvenEven)?;
    let disc = Discretization::new(compress(&basis, Strategy::Threshold, 0.01)?, &nu, &sigma)?;
    let problem = Problem::from_spec(&disc, &spec)?;
    let exact = problem.exact.clone().ok_or("manufactured problem without exact solution")?;

    let curve = best_n_term_curve(&exact, &disc.d_phi);
    let fit = fit_gevrey(&curve)?;
    println!(
        "fit: gamma = {:.4}, q = {:.1}, class norm = {:.3}, rss = {:.3} over {} points",
        fit.gamma, fit.q, fit.class_norm, fit.rss, fit.points
    );

    let (_, trace) = fpc_adleg(&disc, &problem, 0.999, 0.02, 1e-8)?;
    println!("{:>11} {:>8} {:>8} {:>8}", "error", "|supp|", "best-N", "bound");
    for r in &trace.records {
        let best = minimal_cardinality(&curve, r.error_next);
        let bound = cardinality_bound(fit.gamma, fit.q, fit.class_norm, r.error_next)?;
        println!("{:>11.3e} {:>8} {:>8} {:>8}", r.error_next, r.lambda_next, best, bound);
    }
    Ok(())
}
