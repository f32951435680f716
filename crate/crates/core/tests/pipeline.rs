//! Cross-module invariants of the basis -> compression -> operator -> solver
//! pipeline on small random instances.

use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use proptest::sample::select;

use adleg::adaptive::{coefficient_fields, fpc_adleg, gal, Discretization, Problem, ProblemSpec};
use adleg::compress::{compress, eig_bounds_corollary, Strategy, SweepRow};
use adleg::index_space::ParityBlock;
use adleg::operator_assembly::{CoefficientField, CoefficientSpec};
use adleg::orthonormalize::BlockBasis;

fn laplacian(p: u32, tol_g: f64) -> Discretization {
    let basis = BlockBasis::build(p, ParityBlock::EvenEven).unwrap();
    let factor = compress(&basis, Strategy::Threshold, tol_g).unwrap();
    Discretization::new(factor, &CoefficientField::constant(1.0), &CoefficientField::constant(0.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn compressed_spectrum_lies_in_the_corollary_bracket(
        p in 8u32..=32,
        tol_g in 0.05f64..0.6,
        block in select(vec![ParityBlock::EvenEven, ParityBlock::EvenOdd, ParityBlock::OddOdd]),
        strategy in select(vec![Strategy::Threshold, Strategy::Diagonal]),
    ) {
        let basis = BlockBasis::build(p, block).unwrap();
        let factor = compress(&basis, strategy, tol_g).unwrap();
        prop_assert!(factor.lte_norm <= tol_g * (1.0 + 1e-9));
        let row = SweepRow::evaluate(&basis, &factor).unwrap();
        let (lo, hi) = eig_bounds_corollary(factor.lte_norm).unwrap();
        prop_assert!(row.lambda_min >= lo * (1.0 - 1e-9), "{} < {lo}", row.lambda_min);
        prop_assert!(row.lambda_max <= hi * (1.0 + 1e-9), "{} > {hi}", row.lambda_max);
    }

    #[test]
    fn galerkin_solution_is_the_energy_projection(
        seed in 0u64..1000,
        size in 1usize..12,
    ) {
        let disc = laplacian(16, 0.3);
        let n = disc.len();
        let support: Vec<usize> = (0..size).map(|i| ((seed as usize) * 7 + i * 11) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let fhat: Vec<f64> = (0..n).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect();
        let u = gal(&disc, &support, &fhat).unwrap();
        let au = disc.a_phi.matvec(&u);
        for (i, ui) in u.iter().enumerate() {
            if support.contains(&i) {
                prop_assert!((au[i] - fhat[i]).abs() <= 1e-8 * (1.0 + fhat[i].abs()));
            } else {
                prop_assert!(*ui == 0.0);
            }
        }
    }
}

#[test]
fn adaptive_errors_decrease_and_meet_the_tolerance() {
    let spec = ProblemSpec {
        nu: CoefficientSpec::Constant { value: 1.0 },
        sigma: Some(CoefficientSpec::Constant { value: 2.0 }),
        f: Some(CoefficientSpec::Poly { terms: vec![[1.0, 0.0, 0.0], [-1.0, 2.0, 0.0], [-1.0, 0.0, 2.0], [1.0, 2.0, 2.0]] }),
        manufactured_u: None,
    };
    let (nu, sigma) = coefficient_fields(&spec).unwrap();
    let basis = BlockBasis::build(60, ParityBlock::EvenEven).unwrap();
    let disc = Discretization::new(compress(&basis, Strategy::Threshold, 0.01).unwrap(), &nu, &sigma).unwrap();
    let problem = Problem::from_spec(&disc, &spec).unwrap();
    let tol = 1e-5;
    let delta = 0.02;
    let (state, trace) = fpc_adleg(&disc, &problem, 0.999, delta, tol).unwrap();
    let k = &trace.constants;
    assert!(k.rho < 1.0);
    let est: Vec<f64> = trace.records.iter().map(|r| r.est_next).collect();
    assert!(est.windows(2).all(|w| w[1] <= k.rho * w[0] * (1.0 + 1e-9) + 1e-15), "{est:?}");
    assert!(state.estimate() <= tol / (1.0 + delta));
    let supports: Vec<usize> = trace.records.iter().map(|r| r.lambda_next).collect();
    assert!(*supports.last().unwrap() < disc.len(), "adaptive support is a strict subset: {supports:?}");
}
