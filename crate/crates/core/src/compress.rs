//! Compression of the orthonormalizing factor `G` into a sparse `G_t`
//! (the nearly-orthonormal basis), certification of the resulting Riesz
//! constants, and caching of the result.
//!
//! With `E = G_t - G` and `S = L L^T`, the stiffness matrix of the
//! compressed basis is `S_phi = G_t^T S G_t = (I + L^T E)^T (I + L^T E)`, so
//! every spectral statement reduces to the operator norm of `L^T E`.
//!
//! Binary cache layout (little-endian):
//!
//! ```text
//! magic      8 bytes  b"ADLGCF01"
//! version    u32      currently 1
//! p          u32
//! block      u8       0 = ++, 1 = +-, 2 = -+, 3 = --
//! strategy   u8       0 = diagonal, 1 = threshold
//! tol_G      f64
//! t          f64      NaN for the diagonal strategy
//! diagonals  u64      u64::MAX for the threshold strategy
//! lte_norm   f64
//! ratio      f64
//! payload    G_t as a sparse matrix file (see `sparse`)
//! ```

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_space::ParityBlock;
use crate::linalg::{lower_mul, lower_transpose_mul, power_iteration, PowerOptions};
use crate::orthonormalize::BlockBasis;
use crate::sparse::{read_f64, read_u64, SparseMatrix};
use crate::tensor_stiffness::{extreme_eigs, normalize, ExtremeEigs};

const MAGIC: &[u8; 8] = b"ADLGCF01";
const VERSION: u32 = 1;

/// Default Riesz tolerance `tol_G`.
pub const DEFAULT_TOL_G: f64 = 0.5;
/// Relative accuracy of the `||L^T E||` power iteration.
pub const LTE_TOL: f64 = 1e-9;

const BISECT_LO: f64 = 1e-16;
const BISECT_REL_WIDTH: f64 = 1e-3;
const BISECT_MAX_ITER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Keep the main diagonal and the nearest super-diagonals.
    Diagonal,
    /// Drop entries small relative to their column's diagonal entry.
    Threshold,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Diagonal => "diagonal",
            Self::Threshold => "threshold",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "threshold" => Ok(Self::Threshold),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy `{other}` (expected diagonal or threshold)"
            ))),
        }
    }
}

/// The compressed factor `G_t` and its certification data.
#[derive(Debug, Clone)]
pub struct CompressedFactor {
    pub p: u32,
    pub block: ParityBlock,
    pub strategy: Strategy,
    pub tol_g: f64,
    /// Threshold `t` (threshold strategy only).
    pub threshold: Option<f64>,
    /// Number of retained diagonals including the main one (diagonal
    /// strategy only).
    pub diagonals: Option<usize>,
    /// Upper-triangular compressed factor.
    pub g_t: SparseMatrix,
    /// `||L^T E||_2`.
    pub lte_norm: f64,
    /// `nnz(G_t) / nnz(G)`.
    pub compression_ratio: f64,
}

impl CompressedFactor {
    pub fn dim(&self) -> usize {
        self.g_t.nrows()
    }

    /// `(d_*, d^*) = ((1 - l)^2, 1 + l^2)` with `l = ||L^T E||`.
    pub fn diagonal_bounds(&self) -> (f64, f64) {
        let l = self.lte_norm;
        ((1.0 - l).powi(2), 1.0 + l * l)
    }

    /// Certified bracket for the generalized eigenvalues of `(S_phi, D_phi)`.
    pub fn eigen_bracket(&self) -> Result<(f64, f64)> {
        eig_bounds_corollary(self.lte_norm)
    }

    /// `(beta_*, beta^*) = (lambda_hi^{-1/2}, lambda_lo^{-1/2})` from the
    /// certified bracket.
    pub fn beta_constants(&self) -> Result<(f64, f64)> {
        let (lo, hi) = self.eigen_bracket()?;
        Ok((hi.powf(-0.5), lo.powf(-0.5)))
    }

    /// Number of nonzeros in column `k` (0-based) of `G_t`.
    pub fn column_nnz(&self, k: usize) -> usize {
        (0..=k).filter(|&m| self.g_t.get(m, k) != 0.0).count()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.p.to_le_bytes())?;
        w.write_all(&[block_code(self.block), self.strategy as u8])?;
        w.write_all(&self.tol_g.to_le_bytes())?;
        w.write_all(&self.threshold.unwrap_or(f64::NAN).to_le_bytes())?;
        w.write_all(&self.diagonals.map(|d| d as u64).unwrap_or(u64::MAX).to_le_bytes())?;
        w.write_all(&self.lte_norm.to_le_bytes())?;
        w.write_all(&self.compression_ratio.to_le_bytes())?;
        self.g_t.write_binary(w)
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a compressed-factor file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let p = u32::from_le_bytes(b4);
        let mut codes = [0u8; 2];
        r.read_exact(&mut codes)?;
        let block = *ParityBlock::ALL
            .get(codes[0] as usize)
            .ok_or_else(|| Error::Format(format!("bad block code {}", codes[0])))?;
        let strategy = match codes[1] {
            0 => Strategy::Diagonal,
            1 => Strategy::Threshold,
            c => return Err(Error::Format(format!("bad strategy code {c}"))),
        };
        let tol_g = read_f64(&mut r)?;
        let t = read_f64(&mut r)?;
        let d = read_u64(&mut r)?;
        let lte_norm = read_f64(&mut r)?;
        let compression_ratio = read_f64(&mut r)?;
        let g_t = SparseMatrix::read_binary(r)?;
        Ok(Self {
            p,
            block,
            strategy,
            tol_g,
            threshold: (!t.is_nan()).then_some(t),
            diagonals: (d != u64::MAX).then_some(d as usize),
            g_t,
            lte_norm,
            compression_ratio,
        })
    }
}

fn block_code(b: ParityBlock) -> u8 {
    ParityBlock::ALL.iter().position(|x| *x == b).expect("block listed") as u8
}

fn nnz_upper(g: &DMatrix<f64>) -> usize {
    let n = g.ncols();
    (0..n).map(|k| (0..=k).filter(|&m| g[(m, k)] != 0.0).count()).sum()
}

/// `||L^T E||_2` by power iteration on `(L^T E)^T (L^T E)`.
pub fn lte_operator_norm(l: &DMatrix<f64>, e: &SparseMatrix) -> Result<f64> {
    lte_norm_warm(l, e, None).map(|(n, _)| n)
}

fn lte_norm_warm(l: &DMatrix<f64>, e: &SparseMatrix, start: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    if e.nnz() == 0 {
        return Ok((0.0, Vec::new()));
    }
    if l.nrows() != e.nrows() {
        return Err(Error::DimensionMismatch { expected: l.nrows(), got: e.nrows() });
    }
    let est = power_iteration(
        e.ncols(),
        |x, y| {
            let ex = e.matvec(x);
            let ltex = lower_transpose_mul(l, &ex);
            let back = lower_mul(l, &ltex);
            y.copy_from_slice(&e.transpose_matvec(&back));
        },
        start,
        PowerOptions {
            tol: LTE_TOL,
            max_iter: 100_000,
        },
    )?;
    Ok((est.value.max(0.0).sqrt(), est.vector))
}

/// `E = G_t - G` on the upper triangle given the dropped set.
fn error_matrix(g: &DMatrix<f64>, keep: impl Fn(usize, usize) -> bool) -> SparseMatrix {
    let n = g.ncols();
    let mut t = Vec::new();
    for k in 0..n {
        for m in 0..k {
            let v = g[(m, k)];
            if v != 0.0 && !keep(m, k) {
                t.push((m, k, -v));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t)
}

fn kept_factor(g: &DMatrix<f64>, keep: impl Fn(usize, usize) -> bool) -> SparseMatrix {
    let n = g.ncols();
    let mut t = Vec::new();
    for k in 0..n {
        for m in 0..=k {
            let v = g[(m, k)];
            if v != 0.0 && (m == k || keep(m, k)) {
                t.push((m, k, v));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t)
}

fn check_tol(tol_g: f64) -> Result<()> {
    if tol_g > 0.0 && tol_g < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tol_G = {tol_g} must lie in (0, 1)")))
    }
}

/// Retains the main diagonal plus as few super-diagonals as needed for
/// `||L^T E|| <= tol_G`. The count is found by bisection, which assumes the
/// norm does not increase when a diagonal is added.
pub fn compress_diagonalwise(basis: &BlockBasis, tol_g: f64) -> Result<CompressedFactor> {
    check_tol(tol_g)?;
    let (g, l) = (&basis.g, &basis.l);
    let n = g.ncols();
    let mut cache: Vec<Option<f64>> = vec![None; n + 1];
    let mut warm: Option<Vec<f64>> = None;
    let mut norm_for = |diags: usize, warm: &mut Option<Vec<f64>>| -> Result<f64> {
        if let Some(v) = cache[diags] {
            return Ok(v);
        }
        let e = error_matrix(g, |m, k| k - m < diags);
        let (v, vec) = lte_norm_warm(l, &e, warm.as_deref())?;
        if !vec.is_empty() {
            *warm = Some(vec);
        }
        cache[diags] = Some(v);
        Ok(v)
    };
    // diags = n keeps everything, so E = 0 and the norm is 0.
    let (mut lo, mut hi) = (1usize, n.max(1));
    if norm_for(hi, &mut warm)? > tol_g {
        return Err(Error::BisectionBracket {
            tol_g,
            norm: norm_for(hi, &mut warm)?,
        });
    }
    if norm_for(lo, &mut warm)? <= tol_g {
        hi = lo;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if norm_for(mid, &mut warm)? <= tol_g {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let diags = hi;
    let lte_norm = norm_for(diags, &mut warm)?;
    let g_t = kept_factor(g, |m, k| k - m < diags);
    Ok(CompressedFactor {
        p: basis.p,
        block: basis.block,
        strategy: Strategy::Diagonal,
        tol_g,
        threshold: None,
        diagonals: Some(diags),
        compression_ratio: g_t.nnz() as f64 / nnz_upper(g) as f64,
        g_t,
        lte_norm,
    })
}

/// Drops the off-diagonal entries with `|g_mk| / |g_kk| < t`, choosing the
/// largest `t` in `(1e-16, 1]` (log-scale bisection to relative width
/// `1e-3`) for which `||L^T E|| <= tol_G`.
pub fn compress_threshold(basis: &BlockBasis, tol_g: f64) -> Result<CompressedFactor> {
    check_tol(tol_g)?;
    let (g, l) = (&basis.g, &basis.l);
    let rel = |m: usize, k: usize| g[(m, k)].abs() / g[(k, k)].abs();
    let mut warm: Option<Vec<f64>> = None;
    let norm_for = |t: f64, warm: &mut Option<Vec<f64>>| -> Result<f64> {
        let e = error_matrix(g, |m, k| rel(m, k) >= t);
        let (v, vec) = lte_norm_warm(l, &e, warm.as_deref())?;
        if !vec.is_empty() {
            *warm = Some(vec);
        }
        Ok(v)
    };
    let mut lo = BISECT_LO;
    let mut hi = 1.0;
    let t = if norm_for(hi, &mut warm)? <= tol_g {
        hi
    } else {
        let at_lo = norm_for(lo, &mut warm)?;
        if at_lo > tol_g {
            return Err(Error::BisectionBracket { tol_g, norm: at_lo });
        }
        let mut it = 0;
        while (hi - lo) / hi >= BISECT_REL_WIDTH && it < BISECT_MAX_ITER {
            let mid = (lo * hi).sqrt();
            if norm_for(mid, &mut warm)? <= tol_g {
                lo = mid;
            } else {
                hi = mid;
            }
            it += 1;
        }
        lo
    };
    let e = error_matrix(g, |m, k| rel(m, k) >= t);
    let lte_norm = lte_operator_norm(l, &e)?;
    let g_t = kept_factor(g, |m, k| rel(m, k) >= t);
    Ok(CompressedFactor {
        p: basis.p,
        block: basis.block,
        strategy: Strategy::Threshold,
        tol_g,
        threshold: Some(t),
        diagonals: None,
        compression_ratio: g_t.nnz() as f64 / nnz_upper(g) as f64,
        g_t,
        lte_norm,
    })
}

pub fn compress(basis: &BlockBasis, strategy: Strategy, tol_g: f64) -> Result<CompressedFactor> {
    match strategy {
        Strategy::Diagonal => compress_diagonalwise(basis, tol_g),
        Strategy::Threshold => compress_threshold(basis, tol_g),
    }
}

/// `E = G_t - G` for a constructed factor.
pub fn error_of(basis: &BlockBasis, factor: &CompressedFactor) -> SparseMatrix {
    let g_t = &factor.g_t;
    error_matrix(&basis.g, |m, k| g_t.get(m, k) != 0.0)
}

/// `((1 - l)^2 / (1 + l^2), 1 / (1 - l)^2)`.
pub fn eig_bounds_corollary(lte_norm: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&lte_norm) {
        return Err(Error::RieszAssumption(lte_norm));
    }
    let l = lte_norm;
    Ok(((1.0 - l).powi(2) / (1.0 + l * l), 1.0 / (1.0 - l).powi(2)))
}

/// Sharper bracket
/// `(1 - ||L^T E||)^2 / (1 + max_i ||L^T E e_i||^2) <= lambda <= (1 + ||L^T E D^{-1/2}||)^2`.
pub fn proposition_bounds(l: &DMatrix<f64>, e: &SparseMatrix, d_phi: &[f64]) -> Result<(f64, f64)> {
    let lte = lte_operator_norm(l, e)?;
    if lte >= 1.0 {
        return Err(Error::RieszAssumption(lte));
    }
    if d_phi.len() != e.ncols() {
        return Err(Error::DimensionMismatch { expected: e.ncols(), got: d_phi.len() });
    }
    let max_col = max_column_norm(l, e);
    let scale: Vec<f64> = d_phi.iter().map(|d| d.powf(-0.5)).collect();
    let e_scaled = SparseMatrix::from_triplets(e.nrows(), e.ncols(), e.iter().map(|(i, j, v)| (i, j, v * scale[j])));
    let scaled = lte_operator_norm(l, &e_scaled)?;
    Ok(((1.0 - lte).powi(2) / (1.0 + max_col * max_col), (1.0 + scaled).powi(2)))
}

/// `max_i ||L^T E e_i||`.
pub fn max_column_norm(l: &DMatrix<f64>, e: &SparseMatrix) -> f64 {
    let et = e.transpose();
    let n = e.ncols();
    let mut best: f64 = 0.0;
    for i in 0..n {
        let col: Vec<(usize, f64)> = et.row(i).collect();
        if col.is_empty() {
            continue;
        }
        // (L^T c)_r = sum_{m >= r} L[m, r] c_m; only rows r <= max m matter.
        let top = col.iter().map(|&(m, _)| m).max().unwrap_or(0);
        let mut s = 0.0;
        for r in 0..=top {
            let lc = l.column(r);
            let v: f64 = col.iter().filter(|&&(m, _)| m >= r).map(|&(m, c)| lc[m] * c).sum();
            s += v * v;
        }
        best = best.max(s.sqrt());
    }
    best
}

/// `S_phi = G_t^T S G_t` with its diagonal and `(d_*, d^*)`.
#[derive(Debug, Clone)]
pub struct NobsStiffness {
    pub s_phi: SparseMatrix,
    pub d_phi: Vec<f64>,
    pub d_lower: f64,
    pub d_upper: f64,
}

pub fn assemble_s_phi(g_t: &SparseMatrix, s: &SparseMatrix, lte_norm: f64) -> Result<NobsStiffness> {
    if g_t.nrows() != s.nrows() {
        return Err(Error::DimensionMismatch { expected: s.nrows(), got: g_t.nrows() });
    }
    let s_phi = s.triple_product(g_t).with_symmetric(true);
    let d_phi = s_phi.diagonal();
    if let Some((i, &d)) = d_phi.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::NotPositiveDefinite { position: i, pivot: d });
    }
    Ok(NobsStiffness {
        s_phi,
        d_phi,
        d_lower: (1.0 - lte_norm).powi(2),
        d_upper: 1.0 + lte_norm * lte_norm,
    })
}

/// Extreme generalized eigenvalues of `(S_phi, D_phi)`.
pub fn generalized_eigs(stiff: &NobsStiffness, tol: f64) -> Result<ExtremeEigs> {
    extreme_eigs(&normalize(&stiff.s_phi)?, tol)
}

/// One row of a compression sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub p: u32,
    pub block: String,
    pub strategy: Strategy,
    pub tol_g: f64,
    pub dim: usize,
    /// Retained diagonals (diagonal strategy) or empty.
    pub diagonals: Option<usize>,
    /// Retained-diagonal percentage (diagonal strategy) or empty.
    pub diagonal_percent: Option<f64>,
    /// Threshold `t` (threshold strategy) or empty.
    pub threshold: Option<f64>,
    pub nnz_g_t: usize,
    pub compression_ratio: f64,
    pub lte_norm: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub bound_lower: f64,
    pub bound_upper: f64,
}

impl SweepRow {
    pub fn evaluate(basis: &BlockBasis, factor: &CompressedFactor) -> Result<Self> {
        let stiff = assemble_s_phi(&factor.g_t, &basis.s, factor.lte_norm)?;
        let eig = generalized_eigs(&stiff, 1e-10)?;
        let (lo, hi) = factor.eigen_bracket()?;
        Ok(Self {
            p: factor.p,
            block: factor.block.symbol().to_string(),
            strategy: factor.strategy,
            tol_g: factor.tol_g,
            dim: factor.dim(),
            diagonals: factor.diagonals,
            diagonal_percent: factor.diagonals.map(|d| 100.0 * d as f64 / factor.dim() as f64),
            threshold: factor.threshold,
            nnz_g_t: factor.g_t.nnz(),
            compression_ratio: factor.compression_ratio,
            lte_norm: factor.lte_norm,
            lambda_min: eig.min,
            lambda_max: eig.max,
            bound_lower: lo,
            bound_upper: hi,
        })
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn dense_gen_eigs(s_phi: &DMatrix<f64>) -> (f64, f64) {
        let d = s_phi.diagonal().map(|x| 1.0 / x.sqrt());
        let dm = DMatrix::from_diagonal(&d);
        let e = SymmetricEigen::new(&dm * s_phi * &dm);
        (e.eigenvalues.min(), e.eigenvalues.max())
    }

    #[test]
    fn corollary_values() {
        assert_eq!(eig_bounds_corollary(0.0).unwrap(), (1.0, 1.0));
        let (lo, hi) = eig_bounds_corollary(0.5).unwrap();
        assert!((lo - 0.2).abs() < 1e-15 && (hi - 4.0).abs() < 1e-15);
        assert!(matches!(eig_bounds_corollary(1.0), Err(Error::RieszAssumption(_))));
    }

    #[test]
    fn lte_norm_oracles() {
        let b = BlockBasis::build(20, ParityBlock::EvenEven).unwrap();
        let n = b.len();
        assert_eq!(lte_operator_norm(&b.l, &SparseMatrix::from_triplets(n, n, vec![])).unwrap(), 0.0);
        // rank one: alpha e_1 e_2^T
        let alpha = 0.37;
        let e = SparseMatrix::from_triplets(n, n, vec![(0, 1, alpha)]);
        let want = alpha * b.l.row(0).norm();
        assert!((lte_operator_norm(&b.l, &e).unwrap() - want).abs() < 1e-10);
        // dense SVD oracle on a realistic E
        let f = compress_threshold(&b, 0.5).unwrap();
        let e = error_of(&b, &f);
        let dense = b.l.transpose() * e.to_dense();
        let sv = dense.singular_values().max();
        assert!((f.lte_norm - sv).abs() < 1e-8, "{} vs {sv}", f.lte_norm);
    }

    #[test]
    fn exact_factor_gives_identity() {
        let b = BlockBasis::build(16, ParityBlock::OddEven).unwrap();
        let g = SparseMatrix::from_dense(&b.g, 0.0);
        let st = assemble_s_phi(&g, &b.s, 0.0).unwrap();
        let dev = (st.s_phi.to_dense() - DMatrix::identity(b.len(), b.len())).abs().max();
        assert!(dev < 1e-8);
    }

    #[test]
    fn compressed_factors_are_certified() {
        let b = BlockBasis::build(20, ParityBlock::EvenEven).unwrap();
        for strategy in [Strategy::Diagonal, Strategy::Threshold] {
            let f = compress(&b, strategy, 0.5).unwrap();
            assert!(f.lte_norm <= 0.5 && f.compression_ratio > 0.0 && f.compression_ratio <= 1.0);
            for k in 0..f.dim() {
                assert_eq!(f.g_t.get(k, k), b.g[(k, k)]);
            }
            let st = assemble_s_phi(&f.g_t, &b.s, f.lte_norm).unwrap();
            // triple product vs dense
            let gd = f.g_t.to_dense();
            let dense = gd.transpose() * b.s.to_dense() * &gd;
            assert!((st.s_phi.to_dense() - &dense).abs().max() < 1e-10);
            assert!(st.d_phi.iter().all(|&d| d >= st.d_lower && d <= st.d_upper));
            let (lo, hi) = dense_gen_eigs(&dense);
            let (cl, ch) = f.eigen_bracket().unwrap();
            assert!(lo >= cl && hi <= ch, "{strategy}: [{lo}, {hi}] vs [{cl}, {ch}]");
            let e = error_of(&b, &f);
            let (pl, ph) = proposition_bounds(&b.l, &e, &st.d_phi).unwrap();
            assert!(lo >= pl - 1e-12 && hi <= ph + 1e-12);
            assert!(pl >= cl - 1e-12 && ph <= ch + 1e-12);
            assert!(max_column_norm(&b.l, &e) <= f.lte_norm + 1e-10);
            let ge = generalized_eigs(&st, 1e-12).unwrap();
            assert!((ge.min - lo).abs() < 1e-8 && (ge.max - hi).abs() < 1e-8);
        }
    }

    #[test]
    fn threshold_is_tight_from_below() {
        let b = BlockBasis::build(24, ParityBlock::EvenEven).unwrap();
        let f = compress_threshold(&b, 0.5).unwrap();
        let t = f.threshold.unwrap();
        // Slightly above the accepted threshold the tolerance must fail.
        let t_up = t * (1.0 + 2.0 * BISECT_REL_WIDTH);
        if t_up < 1.0 {
            let e = error_matrix(&b.g, |m, k| b.g[(m, k)].abs() / b.g[(k, k)].abs() >= t_up);
            assert!(lte_operator_norm(&b.l, &e).unwrap() > 0.5);
        }
    }

    #[test]
    fn diagonal_strategy_is_minimal() {
        let b = BlockBasis::build(20, ParityBlock::EvenEven).unwrap();
        let f = compress_diagonalwise(&b, 0.5).unwrap();
        let d = f.diagonals.unwrap();
        // linear scan: every smaller diagonal count is infeasible
        for c in 1..d {
            let e = error_matrix(&b.g, |m, k| k - m < c);
            assert!(lte_operator_norm(&b.l, &e).unwrap() > 0.5, "{c} of {d} diagonals already feasible");
        }
        // close to 1 with nearly diagonal S: only the main diagonal
        let s = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 2, 0.01), (2, 0, 0.01)]);
        let mut bb = b.section(6).unwrap();
        bb.s = s.clone();
        bb.g = crate::orthonormalize::modified_gram_schmidt(&s).unwrap();
        bb.l = crate::orthonormalize::cholesky(&s).unwrap();
        let f = compress_diagonalwise(&bb, 0.9).unwrap();
        assert_eq!(f.diagonals, Some(1));
    }

    #[test]
    fn binary_roundtrip() {
        let b = BlockBasis::build(16, ParityBlock::EvenEven).unwrap();
        for strategy in [Strategy::Diagonal, Strategy::Threshold] {
            let f = compress(&b, strategy, 0.5).unwrap();
            let mut buf = Vec::new();
            f.write_binary(&mut buf).unwrap();
            let g = CompressedFactor::read_binary(buf.as_slice()).unwrap();
            assert_eq!(g.g_t, f.g_t);
            assert_eq!(g.threshold, f.threshold);
            assert_eq!(g.diagonals, f.diagonals);
            assert_eq!(g.lte_norm, f.lte_norm);
            assert_eq!(g.strategy, f.strategy);
            assert_eq!(g.block, f.block);
        }
        assert!(CompressedFactor::read_binary(&b"ADLGCF01\x09\0\0\0"[..]).is_err());
    }

    #[test]
    fn sweep_csv_has_header() {
        let b = BlockBasis::build(12, ParityBlock::EvenEven).unwrap();
        let f = compress(&b, Strategy::Threshold, 0.5).unwrap();
        let row = SweepRow::evaluate(&b, &f).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,block,strategy,tol_g,dim,diagonals"));
    }
}
