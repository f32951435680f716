//! Laplacian stiffness matrix of the tensorized Babuška-Shen basis.
//!
//! With `M` the 1-D mass matrix of the BS functions and the 1-D stiffness
//! equal to the identity, the 2-D stiffness entry for indices `k`, `m` is
//! `delta(k1, m1) M(k2, m2) + M(k1, m1) delta(k2, m2)`. Since `M` is
//! pentadiagonal with zero first off-diagonals, every row has at most nine
//! nonzeros.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::index_space::{IndexOrdering, IndexSet, MultiIndex, ParityBlock};
use crate::legendre1d::bs_mass_entry;
use crate::linalg::{lanczos_largest, EnvelopeCholesky, PowerOptions};
use crate::sparse::SparseMatrix;

/// Default relative tolerance for [`extreme_eigs`].
pub const DEFAULT_EIG_TOL: f64 = 1e-10;
/// Iteration cap for the power and inverse iterations.
pub const MAX_EIG_ITER: usize = 10_000;

/// `S_eta` restricted to `set`, rows and columns in the set's order.
pub fn assemble_s_eta(set: &IndexSet) -> SparseMatrix {
    let mut triplets = Vec::with_capacity(9 * set.len());
    for (i, k) in set.indices().iter().enumerate() {
        for d in [-2i64, 0, 2] {
            // same k1, k2 shifted
            let m2 = k.k2 as i64 + d;
            if m2 >= 2 {
                let m = MultiIndex { k1: k.k1, k2: m2 as u32 };
                if let Some(j) = set.position(&m) {
                    let mut v = bs_mass_entry(k.k2 as usize, m.k2 as usize);
                    if d == 0 {
                        v += bs_mass_entry(k.k1 as usize, k.k1 as usize);
                    }
                    triplets.push((i, j, v));
                }
            }
            if d != 0 {
                let m1 = k.k1 as i64 + d;
                if m1 >= 2 {
                    let m = MultiIndex { k1: m1 as u32, k2: k.k2 };
                    if let Some(j) = set.position(&m) {
                        triplets.push((i, j, bs_mass_entry(k.k1 as usize, m.k1 as usize)));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(set.len(), set.len(), triplets).with_symmetric(true)
}

/// Index set used for a given ordering: the total-degree set `K^p` for the
/// A-ordering, the square `{2..=p}^2` for B and C.
pub fn index_set_for(p: u32, ordering: IndexOrdering, block: Option<ParityBlock>) -> Result<IndexSet> {
    if p < 4 {
        return Err(Error::InvalidArgument(format!("degree p = {p} must be at least 4")));
    }
    Ok(match ordering {
        IndexOrdering::A => IndexSet::total_degree(p, block),
        IndexOrdering::B | IndexOrdering::C => IndexSet::square(p, ordering, block),
    })
}

/// Convenience wrapper: builds the index set and assembles `S_eta` on it.
pub fn assemble_s_eta_degree(
    p: u32,
    ordering: IndexOrdering,
    block: Option<ParityBlock>,
) -> Result<(IndexSet, SparseMatrix)> {
    let set = index_set_for(p, ordering, block)?;
    let s = assemble_s_eta(&set);
    Ok((set, s))
}

/// 1-D BS mass matrix for degrees `2..=p`.
pub fn mass_matrix_1d(p: usize) -> DMatrix<f64> {
    let n = p.saturating_sub(1);
    DMatrix::from_fn(n, n, |i, j| bs_mass_entry(i + 2, j + 2))
}

/// `M kron I + I kron M` with the first factor indexing `k2` (slow index) so
/// that the result matches the B-ordering.
pub fn kronecker_sum(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    m.kronecker(&id) + id.kronecker(m)
}

/// `D^{-1/2}` for `D = diag(S)`.
pub fn diagonal_scaling(s: &SparseMatrix) -> Result<Vec<f64>> {
    s.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::NotPositiveDefinite { position: i, pivot: d })
            }
        })
        .collect()
}

/// `D^{-1/2} S D^{-1/2}`: the stiffness matrix of the H1_0-normalized basis.
pub fn normalize(s: &SparseMatrix) -> Result<SparseMatrix> {
    let scale = diagonal_scaling(s)?;
    Ok(s.scale_symmetric(&scale))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeEigs {
    pub min: f64,
    pub max: f64,
}

impl ExtremeEigs {
    pub fn condition_number(&self) -> f64 {
        self.max / self.min
    }
}

/// Envelope Cholesky factor of a symmetric sparse matrix.
pub fn sparse_cholesky(s: &SparseMatrix) -> Result<EnvelopeCholesky> {
    EnvelopeCholesky::factor(s.nrows(), |i| s.row(i).filter(move |&(j, _)| j <= i))
}

/// Extreme eigenvalues of an SPD matrix: Lanczos on `S` for the largest and
/// on `S^{-1}` (envelope Cholesky) for the smallest, with Lanczos on the
/// shifted operator `lambda_max I - S` as fallback when the factorization
/// breaks down.
pub fn extreme_eigs(s: &SparseMatrix, tol: f64) -> Result<ExtremeEigs> {
    let n = s.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let opts = PowerOptions {
        tol,
        max_iter: MAX_EIG_ITER,
    };
    let top = lanczos_largest(n, |x, y| s.matvec_into(x, y), opts)?;
    let max = top.value;
    let min = match sparse_cholesky(s) {
        Ok(chol) => 1.0 / lanczos_largest(n, |x, y| chol.solve_into(x, y), opts)?.value,
        Err(_) => {
            let shifted = lanczos_largest(
                n,
                |x, y| {
                    s.matvec_into(x, y);
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi = max * xi - *yi;
                    }
                },
                opts,
            )?;
            max - shifted.value
        }
    };
    Ok(ExtremeEigs { min, max })
}

/// Extreme eigenvalues of the pencil `S x = lambda D x`, `D = diag(S)`.
pub fn generalized_extreme_eigs(s: &SparseMatrix, tol: f64) -> Result<ExtremeEigs> {
    extreme_eigs(&normalize(s)?, tol)
}
