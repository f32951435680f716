//! Orthonormalization of the (normalized, parity-blocked) tensorized BS
//! basis: the upper-triangular factor `G` with `G^T S G = I`, the Cholesky
//! factor `L = G^{-T}`, and decay diagnostics for the columns of `G`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::index_space::{lexicographic_coordinates, pi_map, IndexOrdering, IndexSet, MultiIndex, ParityBlock};
use crate::sparse::SparseMatrix;
use crate::tensor_stiffness::{assemble_s_eta, diagonal_scaling, extreme_eigs, index_set_for, sparse_cholesky, DEFAULT_EIG_TOL};

/// Modified Gram-Schmidt in the `S`-inner product applied to the unit
/// vectors `e_1, e_2, ...` in order. Column `k` of the result holds the
/// coefficients of the `k`-th orthonormal function.
///
/// The products `S q_j` are kept alongside `G` so that each projection costs
/// a dot product rather than a sparse matrix-vector product.
pub fn modified_gram_schmidt(s: &SparseMatrix) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: s.ncols() });
    }
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut sq = DMatrix::<f64>::zeros(n, n);
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n {
        v[..=k].iter_mut().for_each(|x| *x = 0.0);
        v[k] = 1.0;
        w.iter_mut().for_each(|x| *x = 0.0);
        for (i, a) in s.row(k) {
            w[i] = a;
        }
        for j in 0..k {
            let gj = g.column(j);
            let r: f64 = gj.rows(0, j + 1).iter().zip(&w[..=j]).map(|(a, b)| a * b).sum();
            if r != 0.0 {
                for (vi, gi) in v[..=j].iter_mut().zip(gj.rows(0, j + 1).iter()) {
                    *vi -= r * gi;
                }
                for (wi, si) in w.iter_mut().zip(sq.column(j).iter()) {
                    *wi -= r * si;
                }
            }
        }
        let nrm2: f64 = v[..=k].iter().zip(&w[..=k]).map(|(a, b)| a * b).sum();
        if !(nrm2 > 0.0) {
            return Err(Error::NotPositiveDefinite { position: k, pivot: nrm2 });
        }
        let inv = 1.0 / nrm2.sqrt();
        for i in 0..=k {
            g[(i, k)] = v[i] * inv;
        }
        for i in 0..n {
            sq[(i, k)] = w[i] * inv;
        }
    }
    Ok(g)
}

/// Dense lower-triangular Cholesky factor `L` with `L L^T = S`.
pub fn cholesky(s: &SparseMatrix) -> Result<DMatrix<f64>> {
    Ok(sparse_cholesky(s)?.to_dense_lower())
}

/// `max |(G^T S G - I)_{ij}|`.
pub fn orthonormality_residual(g: &DMatrix<f64>, s: &SparseMatrix) -> f64 {
    let sg = sparse_times_dense(s, g);
    let mut m = g.transpose() * sg;
    for i in 0..m.nrows() {
        m[(i, i)] -= 1.0;
    }
    m.abs().max()
}

pub(crate) fn sparse_times_dense(s: &SparseMatrix, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(s.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col = s.matvec(b.column(c).as_slice());
        out.set_column(c, &nalgebra::DVector::from_vec(col));
    }
    out
}

/// Everything that depends only on the degree and the parity block: the
/// index set in A-ordering, the raw and normalized stiffness blocks, `G`
/// and `L` of the normalized block.
#[derive(Debug, Clone)]
pub struct BlockBasis {
    pub p: u32,
    pub block: ParityBlock,
    pub set: IndexSet,
    /// Unnormalized `S_eta` on the block.
    pub s_eta: SparseMatrix,
    /// `D^{-1/2}` with `D = diag(S_eta)`.
    pub scaling: Vec<f64>,
    /// Normalized block (unit diagonal).
    pub s: SparseMatrix,
    pub g: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl BlockBasis {
    pub fn build(p: u32, block: ParityBlock) -> Result<Self> {
        let set = index_set_for(p, IndexOrdering::A, Some(block))?;
        if set.is_empty() {
            return Err(Error::InvalidArgument(format!("block {block} of K^{p} is empty")));
        }
        let s_eta = assemble_s_eta(&set);
        let scaling = diagonal_scaling(&s_eta)?;
        let s = s_eta.scale_symmetric(&scaling);
        let g = modified_gram_schmidt(&s)?;
        let l = cholesky(&s)?;
        Ok(Self { p, block, set, s_eta, scaling, s, g, l })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// The basis for a lower degree `q <= p`, obtained by taking upper-left
    /// sections; exact because the A-ordering nests the index sets and Gram-
    /// Schmidt processes columns in order.
    pub fn section(&self, q: u32) -> Result<Self> {
        if q > self.p {
            return Err(Error::InvalidArgument(format!("section degree {q} exceeds {}", self.p)));
        }
        let set = index_set_for(q, IndexOrdering::A, Some(self.block))?;
        let m = set.len();
        Ok(Self {
            p: q,
            block: self.block,
            s_eta: self.s_eta.section(m),
            scaling: self.scaling[..m].to_vec(),
            s: self.s.section(m),
            g: self.g.view((0, 0), (m, m)).into_owned(),
            l: self.l.view((0, 0), (m, m)).into_owned(),
            set,
        })
    }
}

/// Qualitative decay type of a column of `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnDecay {
    Slow,
    Intermediate,
    Fast,
}

impl ColumnDecay {
    /// Columns whose index has `k1` close to `k2` decay slowly, those with
    /// very different components decay fast.
    pub fn classify(k: MultiIndex) -> Self {
        let ratio = (k.k1 as f64 - k.k2 as f64).abs() / (k.k1 + k.k2) as f64;
        if ratio <= 0.1 {
            Self::Slow
        } else if ratio >= 0.5 {
            Self::Fast
        } else {
            Self::Intermediate
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Slow => "slow",
            Self::Intermediate => "intermediate",
            Self::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnProfile {
    /// 1-based column number within the block.
    pub column: usize,
    pub index: MultiIndex,
    pub class: ColumnDecay,
    /// `|g_{mk}|` for `m = k, k-1, ..., 1`; entry `o` has offset `k - m = o`.
    pub magnitudes: Vec<f64>,
}

/// Magnitudes of column `column` (1-based) of `G`, from the diagonal upward.
pub fn column_decay_profile(g: &DMatrix<f64>, set: &IndexSet, column: usize) -> Result<ColumnProfile> {
    if column == 0 || column > g.ncols() {
        return Err(Error::OutOfRange { index: column, max: g.ncols() });
    }
    let k = column - 1;
    let magnitudes = (0..=k).rev().map(|m| g[(m, k)].abs()).collect();
    let index = set.get(k);
    Ok(ColumnProfile {
        column,
        index,
        class: ColumnDecay::classify(index),
        magnitudes,
    })
}

/// CSV with columns `column,k1,k2,class,offset,magnitude`.
pub fn write_decay_csv<W: Write>(profiles: &[ColumnProfile], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["column", "k1", "k2", "class", "offset", "magnitude"])?;
    for prof in profiles {
        for (offset, mag) in prof.magnitudes.iter().enumerate() {
            out.write_record([
                prof.column.to_string(),
                prof.index.k1.to_string(),
                prof.index.k2.to_string(),
                prof.class.as_str().to_string(),
                offset.to_string(),
                format!("{mag:.6e}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `(2 / lambda_min) rho^offset` with
/// `rho = ((sqrt(kappa) - 1) / (sqrt(kappa) + 1))^(2 / b)`.
pub fn benzi_tuma_envelope(lambda_min: f64, lambda_max: f64, bandwidth: usize, offset: usize) -> Result<f64> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min && lambda_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid spectrum [{lambda_min}, {lambda_max}]"
        )));
    }
    if bandwidth == 0 {
        return Err(Error::InvalidArgument("bandwidth must be at least 1".into()));
    }
    let sk = (lambda_max / lambda_min).sqrt();
    let rho = ((sk - 1.0) / (sk + 1.0)).powf(2.0 / bandwidth as f64);
    Ok(2.0 / lambda_min * rho.powi(offset as i32))
}

/// Envelope parameters for a normalized block, plus the largest ratio of a
/// measured entry of `G` to the envelope.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopeCheck {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub bandwidth: usize,
    pub worst_ratio: f64,
}

pub fn check_benzi_tuma(basis: &BlockBasis) -> Result<EnvelopeCheck> {
    let eig = extreme_eigs(&basis.s, DEFAULT_EIG_TOL)?;
    let bandwidth = basis.s.bandwidth().max(1);
    let n = basis.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            let env = benzi_tuma_envelope(eig.min, eig.max, bandwidth, j - i)?;
            let g = basis.g[(i, j)].abs();
            if g > 0.0 {
                worst = worst.max(if env > 0.0 { g / env } else { f64::INFINITY });
            }
        }
    }
    Ok(EnvelopeCheck {
        lambda_min: eig.min,
        lambda_max: eig.max,
        bandwidth,
        worst_ratio: worst,
    })
}

/// Outcome of the C-ordering inverse-decay estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseDecayBound {
    /// `p_tilde / sqrt(n)`; the unknown constant `gamma` is left out.
    Bounded { value: f64, distance: i64, v_star: usize },
    /// The modified grid distance is not positive: no claim is made.
    Unbounded { v_star: usize },
}

/// Modified grid distance between lexicographic positions `alpha`, `beta`
/// on an `n x n` grid: `|l - i| + |m - j| - 1` when the points share a row
/// or column, `... - 2` otherwise.
pub fn modified_grid_distance(alpha: usize, beta: usize, n: usize) -> i64 {
    let (l, m) = lexicographic_coordinates(alpha, n);
    let (i, j) = lexicographic_coordinates(beta, n);
    let d = (l as i64 - i as i64).abs() + (m as i64 - j as i64).abs();
    if l == i || m == j {
        d - 1
    } else {
        d - 2
    }
}

/// Shape of the bound `|(G_C)_{u,v}| <= gamma p_tilde / sqrt(n(pi(u), pi(v*)))`
/// for C-ordering positions `u`, `v` (1-based) on an `n x n` grid, where
/// `p_tilde = floor((n + 1) / 2)` and `v*` minimizes the distance over
/// `v <= w <= v + p_tilde - 1`.
pub fn inverse_decay_bound(u: usize, v: usize, n: usize) -> Result<InverseDecayBound> {
    let p_tilde = n.div_ceil(2);
    let pu = pi_map(u, n)?;
    pi_map(v, n)?;
    let hi = (v + p_tilde.max(1) - 1).min(n * n);
    let mut best: Option<(i64, usize)> = None;
    for w in v..=hi {
        let dist = modified_grid_distance(pu, pi_map(w, n)?, n);
        if best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, w));
        }
    }
    let (distance, v_star) = best.expect("window is non-empty");
    Ok(if distance <= 0 {
        InverseDecayBound::Unbounded { v_star }
    } else {
        InverseDecayBound::Bounded {
            value: p_tilde as f64 / (distance as f64).sqrt(),
            distance,
            v_star,
        }
    })
}
