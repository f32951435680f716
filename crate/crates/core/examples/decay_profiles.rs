//! Column decay of the orthonormalizing factor `G` and of the operator
//! `A_phi`: prints a few columns of `G` (largest magnitude per offset decade)
//! together with the fitted exponential envelope of `A_phi` by index
//! distance.
//!
//! ```text
//! cargo run --release --example decay_profiles -- 40
//! ```

use adleg::compress::{compress, Strategy};
use adleg::index_space::ParityBlock;
use adleg::operator_assembly::{
    assemble_a_eta, assemble_a_phi, distance_profile, fit_decay_class, CoefficientField, CoefficientSpec,
};
use adleg::orthonormalize::{column_decay_profile, BlockBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p: u32 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(40);
    let basis = BlockBasis::build(p, ParityBlock::EvenEven)?;
    let n = basis.len();
    println!("even-even block, p = {p}, n = {n}");
    for column in [1, n / 4, n / 2, n] {
        let prof = column_decay_profile(&basis.g, &basis.set, column.max(1))?;
        let samples: Vec<String> = [0usize, 1, 2, 5, 10, 20, 50, 100]
            .iter()
            .filter(|&&o| o < prof.magnitudes.len())
            .map(|&o| format!("{o}:{:.1e}", prof.magnitudes[o]))
            .collect();
        println!("column {column:>4} k={} ({}): {}", prof.index, prof.class.as_str(), samples.join(" "));
    }

    let factor = compress(&basis, Strategy::Threshold, 0.5)?;
    let nu = CoefficientField::new(CoefficientSpec::Runge { scale: 1.0, a: 1.0, offset: 0.5 })?;
    let sigma = CoefficientField::constant(1.0);
    let a_eta = assemble_a_eta(&basis.set, &nu, &sigma)?;
    let a_phi = assemble_a_phi(&factor.g_t, &a_eta, &basis.scaling)?;
    let class = fit_decay_class(&a_phi, &basis.set)?;
    println!("A_phi envelope: c = {:.3}, gamma = {:.4}", class.c, class.gamma);
    for (dist, max) in distance_profile(&a_phi, &basis.set).iter().step_by(4) {
        println!("  distance {dist:>3}: max |a| = {max:.2e}, envelope {:.2e}", class.envelope(*dist));
    }
    Ok(())
}
