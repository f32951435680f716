//! Compressed-row sparse matrices with the handful of operations the
//! pipeline needs, plus coordinate-text and binary export.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"ADLGMAT1"
//! 8       8     nrows  u64
//! 16      8     ncols  u64
//! 24      8     nnz    u64
//! 32      1     symmetric flag (0 or 1)
//! 33      24*nnz  (row u64, col u64, value f64) triplets, row-major order
//! ```

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, PowerOptions};

const MAGIC: &[u8; 8] = b"ADLGMAT1";

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        t.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut rows: Vec<usize> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            if let (Some(&li), Some(&lj)) = (rows.last(), col_idx.last()) {
                if li == i && lj == j {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            col_idx.push(j);
            values.push(v);
        }
        let keep: Vec<bool> = values.iter().map(|v| *v != 0.0).collect();
        let mut c2 = Vec::with_capacity(col_idx.len());
        let mut v2 = Vec::with_capacity(values.len());
        for (n, &k) in keep.iter().enumerate() {
            if k {
                row_ptr[rows[n] + 1] += 1;
                c2.push(col_idx[n]);
                v2.push(values[n]);
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx: c2,
            values: v2,
            symmetric: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n]).with_symmetric(true)
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_triplets(n, n, d.iter().enumerate().map(|(i, &v)| (i, i, v))).with_symmetric(true)
    }

    /// Keeps entries with `|a_ij| > drop_tol`.
    pub fn from_dense(a: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                let v = a[(i, j)];
                if v.abs() > drop_tol {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn is_flagged_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(col, value)` pairs in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            a[(i, j)] = v;
        }
        a
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    /// `A^T x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v)))
            .with_symmetric(self.symmetric)
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut t = Vec::new();
        for i in 0..self.nrows {
            cols.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &cols {
                t.push((i, j, acc[j]));
            }
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// `B^T A B` for `A = self`.
    pub fn triple_product(&self, b: &SparseMatrix) -> Self {
        let out = b.transpose().mul(&self.mul(b));
        let sym = self.symmetric;
        out.with_symmetric(sym)
    }

    /// `diag(d) A diag(d)`.
    pub fn scale_symmetric(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in out.row_ptr[i]..out.row_ptr[i + 1] {
                out.values[p] *= d[i] * d[out.col_idx[p]];
            }
        }
        out
    }

    /// Keeps the entries for which `keep(i, j, value)` holds.
    pub fn filter<F: Fn(usize, usize, f64) -> bool>(&self, keep: F) -> Self {
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().filter(|&(i, j, v)| keep(i, j, v)),
        )
        .with_symmetric(self.symmetric)
    }

    /// Upper-left `n x n` section.
    pub fn section(&self, n: usize) -> Self {
        let mut s = self.filter(|i, j, _| i < n && j < n);
        s.nrows = n.min(self.nrows);
        s.ncols = n.min(self.ncols);
        s.row_ptr.truncate(s.nrows + 1);
        s
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.iter().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    /// Maximum relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// Spectral norm estimate by power iteration on `A^T A`.
    pub fn operator_norm(&self, opts: PowerOptions) -> Result<f64> {
        if self.nnz() == 0 {
            return Ok(0.0);
        }
        let est = power_iteration(
            self.ncols,
            |x, y| {
                let ax = self.matvec(x);
                let aty = self.transpose_matvec(&ax);
                y.copy_from_slice(&aty);
            },
            None,
            opts,
        )?;
        Ok(est.value.max(0.0).sqrt())
    }

    /// Coordinate text: a `%`-comment header with dimensions, then one
    /// `row col value` line per entry (1-based indices).
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "% adleg coordinate matrix: rows cols nnz")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    pub fn read_coordinate<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| match l {
            Ok(s) => !s.trim_start().starts_with('%') && !s.trim().is_empty(),
            Err(_) => true,
        });
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("missing coordinate header".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::Format(format!("bad header `{header}`")));
        }
        let mut t = Vec::with_capacity(dims[2]);
        for line in lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let parse_err = || Error::Format(format!("bad entry `{line}`"));
            let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let j: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            if i == 0 || j == 0 || i > dims[0] || j > dims[1] {
                return Err(parse_err());
            }
            t.push((i - 1, j - 1, v));
        }
        Ok(Self::from_triplets(dims[0], dims[1], t))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.nrows as u64).to_le_bytes())?;
        w.write_all(&(self.ncols as u64).to_le_bytes())?;
        w.write_all(&(self.nnz() as u64).to_le_bytes())?;
        w.write_all(&[self.symmetric as u8])?;
        for (i, j, v) in self.iter() {
            w.write_all(&(i as u64).to_le_bytes())?;
            w.write_all(&(j as u64).to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an adleg matrix file".into()));
        }
        let nrows = read_u64(&mut r)? as usize;
        let ncols = read_u64(&mut r)? as usize;
        let nnz = read_u64(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut t = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = read_u64(&mut r)? as usize;
            let j = read_u64(&mut r)? as usize;
            let v = read_f64(&mut r)?;
            if i >= nrows || j >= ncols {
                return Err(Error::Format(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
            }
            t.push((i, j, v));
        }
        Ok(Self::from_triplets(nrows, ncols, t).with_symmetric(flag[0] == 1))
    }
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
