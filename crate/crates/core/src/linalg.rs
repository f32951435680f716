//! Small numerical kernels: power and inverse iteration, conjugate gradients
//! and an envelope (skyline) Cholesky factorization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Stopping parameters for [`power_iteration`].
#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    /// Relative accuracy requested for the eigenvalue.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Deterministic start vector with no special alignment.
fn start_vector(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((i as f64) * 0.7548776662).sin()).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// power iteration with Rayleigh quotients.
///
/// Stops once both the last increment and an Aitken-type extrapolation of
/// the remaining error fall below `tol` relative to the current estimate.
pub fn power_iteration<F>(
    n: usize,
    mut apply: F,
    start: Option<&[f64]>,
    opts: PowerOptions,
) -> Result<EigenEstimate>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if n == 0 {
        return Ok(EigenEstimate {
            value: 0.0,
            vector: Vec::new(),
            iterations: 0,
        });
    }
    let mut x = match start {
        Some(s) if s.len() == n && norm(s) > 0.0 => {
            let s_norm = norm(s);
            s.iter().map(|v| v / s_norm).collect()
        }
        _ => start_vector(n),
    };
    let mut y = vec![0.0; n];
    let mut lambda = f64::NAN;
    let mut prev_delta = f64::NAN;
    for it in 1..=opts.max_iter {
        apply(&x, &mut y);
        let rq = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(EigenEstimate {
                value: 0.0,
                vector: x,
                iterations: it,
            });
        }
        let delta = (rq - lambda).abs();
        lambda = rq;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        let scale = lambda.abs().max(f64::MIN_POSITIVE);
        if delta.is_finite() && prev_delta.is_finite() {
            let q = if prev_delta > 0.0 {
                (delta / prev_delta).min(0.999_999)
            } else {
                0.0
            };
            let tail = delta * q / (1.0 - q);
            if delta <= opts.tol * scale && tail <= opts.tol * scale {
                return Ok(EigenEstimate {
                    value: lambda,
                    vector: x,
                    iterations: it,
                });
            }
        }
        prev_delta = delta;
    }
    Err(Error::NoConvergence {
        method: "power iteration",
        iterations: opts.max_iter,
        estimate: lambda,
    })
}

/// Largest eigenvalue of a symmetric operator by restarted Lanczos with full
/// reorthogonalization.
///
/// Robust where power iteration stalls on clustered spectra. Convergence is
/// declared when `min(r, r^2 / gap)` falls below `tol` relative to the Ritz
/// value, with `r` the Ritz residual norm and `gap` the distance to the next
/// Ritz value. `opts.max_iter` caps the total number of operator applications.
pub fn lanczos_largest<F>(n: usize, mut apply: F, opts: PowerOptions) -> Result<EigenEstimate>
where
    F: FnMut(&[f64], &mut [f64]),
{
    const MAX_BASIS: usize = 200;
    const CHECK_EVERY: usize = 8;
    if n == 0 {
        return Ok(EigenEstimate {
            value: 0.0,
            vector: Vec::new(),
            iterations: 0,
        });
    }
    let m_max = MAX_BASIS.min(n);
    let mut start = start_vector(n);
    let mut applications = 0usize;
    let mut best = f64::NAN;
    let mut w = vec![0.0; n];
    while applications < opts.max_iter {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut ritz: Option<(f64, Vec<f64>)> = None;
        for j in 0..m_max {
            apply(&basis[j], &mut w);
            applications += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(&w, v);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let b = norm(&w);
            let last = j + 1 == m_max || applications >= opts.max_iter;
            let exhausted = b <= 1e-14 * a.abs().max(f64::MIN_POSITIVE);
            if exhausted || last || (j + 1) % CHECK_EVERY == 0 {
                let k = alpha.len();
                let t = DMatrix::from_fn(k, k, |r, c| {
                    if r == c {
                        alpha[r]
                    } else if r.abs_diff(c) == 1 {
                        beta[r.min(c)]
                    } else {
                        0.0
                    }
                });
                let eig = nalgebra::SymmetricEigen::new(t);
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
                let top = order[0];
                let theta = eig.eigenvalues[top];
                let s: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
                let residual = if exhausted { 0.0 } else { b * s[k - 1].abs() };
                let gap = if k > 1 { theta - eig.eigenvalues[order[1]] } else { f64::INFINITY };
                let err = if gap > 0.0 { residual.min(residual * residual / gap) } else { residual };
                best = theta;
                let converged = err <= opts.tol * theta.abs().max(f64::MIN_POSITIVE);
                if converged || last || exhausted {
                    let mut x = vec![0.0; n];
                    for (v, c) in basis.iter().zip(&s) {
                        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
                    }
                    let nx = norm(&x);
                    x.iter_mut().for_each(|xi| *xi /= nx);
                    if converged || exhausted {
                        return Ok(EigenEstimate {
                            value: theta,
                            vector: x,
                            iterations: applications,
                        });
                    }
                    ritz = Some((theta, x));
                    break;
                }
            }
            beta.push(b);
            basis.push(w.iter().map(|wi| wi / b).collect());
        }
        match ritz {
            Some((_, x)) => start = x,
            None => break,
        }
    }
    Err(Error::NoConvergence {
        method: "Lanczos iteration",
        iterations: applications,
        estimate: best,
    })
}

/// Smallest eigenvalue of an SPD matrix via power iteration on its inverse.
pub fn inverse_iteration(chol: &EnvelopeCholesky, opts: PowerOptions) -> Result<EigenEstimate> {
    let mut est = power_iteration(chol.dim(), |x, y| chol.solve_into(x, y), None, opts)?;
    est.value = 1.0 / est.value;
    Ok(est)
}

/// Result of [`conjugate_gradient`].
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for an SPD operator, starting from `x0`.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgResult>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    let mut x = match x0 {
        Some(v) if v.len() == n => v.to_vec(),
        _ => vec![0.0; n],
    };
    if b_norm == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let rel = rr.sqrt() / b_norm;
        if rel <= rel_tol {
            return Ok(CgResult {
                x,
                iterations: it,
                relative_residual: rel,
            });
        }
        if it == max_iter {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                position: it,
                pivot: pap,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        method: "conjugate gradients",
        iterations: max_iter,
        estimate: rr.sqrt() / b_norm,
    })
}

/// Cholesky factor `A = L L^T` stored row-wise over the envelope of `A`:
/// row `i` keeps columns `first[i]..=i`, which is exactly where fill can
/// occur.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factorizes a symmetric matrix given by its lower-triangle rows:
    /// `row(i)` yields `(j, a_ij)` for `j <= i` (entries above the diagonal
    /// are ignored).
    pub fn factor<R, I>(n: usize, row: R) -> Result<Self>
    where
        R: Fn(usize) -> I,
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut first = vec![0usize; n];
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        for (i, fi) in first.iter_mut().enumerate() {
            let entries: Vec<(usize, f64)> = row(i).into_iter().filter(|&(j, _)| j <= i).collect();
            *fi = entries.iter().map(|&(j, _)| j).min().unwrap_or(i);
            rows.push(entries);
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (i, entries) in rows.iter().enumerate() {
            for &(j, v) in entries {
                data[offset[i] + j - first[i]] += v;
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &done[offset[j]..offset[j] + (j - fj + 1)];
                let k0 = fi.max(fj);
                let mut s = row_i[j - fi];
                for k in k0..j {
                    s -= row_i[k - fi] * row_j[k - fj];
                }
                row_i[j - fi] = s / row_j[j - fj];
            }
            let mut d = row_i[i - fi];
            for k in fi..i {
                d -= row_i[k - fi] * row_i[k - fi];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    position: i,
                    pivot: d,
                });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self {
            first,
            offset,
            data,
        })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor(a.nrows(), |i| (0..=i).filter_map(move |j| {
            let v = a[(i, j)];
            (v != 0.0).then_some((j, v))
        }))
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Number of stored entries in the envelope.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i || j < self.first[i] {
            0.0
        } else {
            self.data[self.offset[i] + j - self.first[i]]
        }
    }

    pub fn to_dense_lower(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in self.first[i]..=i {
                l[(i, j)] = self.entry(i, j);
            }
        }
        l
    }

    /// Solves `A x = b`.
    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.dim();
        x.copy_from_slice(b);
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = x[i];
            for k in fi..i {
                s -= row[k - fi] * x[k];
            }
            x[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for k in fi..i {
                x[k] -= row[k - fi] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.solve_into(b, &mut x);
        x
    }
}

/// `L^T y` for a dense lower-triangular `L`.
pub fn lower_transpose_mul(l: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    (0..n)
        .map(|r| {
            let col = l.column(r);
            (r..n).map(|m| col[m] * y[m]).sum()
        })
        .collect()
}

/// `L x` for a dense lower-triangular `L`.
pub fn lower_mul(l: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = vec![0.0; n];
    for (r, &xr) in x.iter().enumerate().take(n) {
        if xr != 0.0 {
            let col = l.column(r);
            for m in r..n {
                y[m] += col[m] * xr;
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn spd(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let d = (i as f64 - j as f64).abs();
            if i == j {
                4.0 + i as f64 * 0.1
            } else if d <= 3.0 {
                1.0 / (1.0 + d)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn envelope_cholesky_matches_dense() {
        let a = spd(40);
        let ch = EnvelopeCholesky::from_dense(&a).unwrap();
        let l = ch.to_dense_lower();
        assert!((&l * l.transpose() - &a).abs().max() < 1e-12);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let x = ch.solve(&b);
        let r = &a * nalgebra::DVector::from_column_slice(&x) - nalgebra::DVector::from_column_slice(&b);
        assert!(r.norm() < 1e-12);
        assert!(ch.envelope_size() < 40 * 41 / 2);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            EnvelopeCholesky::from_dense(&a),
            Err(Error::NotPositiveDefinite { position: 1, .. })
        ));
    }

    #[test]
    fn extreme_eigenvalues_match_dense_oracle() {
        let a = spd(60);
        let eig = SymmetricEigen::new(a.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let top = power_iteration(
            60,
            |x, y| {
                let v = &a * nalgebra::DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            },
            None,
            PowerOptions::default(),
        )
        .unwrap();
        assert!((top.value - max).abs() < 1e-9 * max, "{} vs {max}", top.value);
        let ch = EnvelopeCholesky::from_dense(&a).unwrap();
        let bottom = inverse_iteration(&ch, PowerOptions::default()).unwrap();
        assert!((bottom.value - min).abs() < 1e-9 * max, "{} vs {min}", bottom.value);
    }

    #[test]
    fn lanczos_resolves_clustered_top_of_spectrum() {
        // Diagonal spectrum whose top eigenvalues are separated by 1e-6:
        // power iteration needs ~1e6 steps, Lanczos a few dozen.
        let n = 500;
        let d: Vec<f64> = (0..n).map(|i| if i < 5 { 2.0 - 1e-6 * i as f64 } else { 1.9 * i as f64 / n as f64 }).collect();
        let opts = PowerOptions { tol: 1e-12, max_iter: 5_000 };
        let est = lanczos_largest(n, |x, y| y.iter_mut().zip(x).zip(&d).for_each(|((yi, xi), di)| *yi = di * xi), opts)
            .unwrap();
        assert!((est.value - 2.0).abs() < 1e-11, "{}", est.value);
        let a = spd(60);
        let max = SymmetricEigen::new(a.clone()).eigenvalues.max();
        let est = lanczos_largest(
            60,
            |x, y| {
                let v = &a * nalgebra::DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            },
            PowerOptions::default(),
        )
        .unwrap();
        assert!((est.value - max).abs() < 1e-10 * max, "{} vs {max}", est.value);
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = spd(50);
        let b: Vec<f64> = (0..50).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let res = conjugate_gradient(
            |x, y| {
                let v = &a * nalgebra::DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            },
            &b,
            None,
            1e-12,
            500,
        )
        .unwrap();
        let r = &a * nalgebra::DVector::from_column_slice(&res.x) - nalgebra::DVector::from_column_slice(&b);
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn triangular_products() {
        let l = DMatrix::from_fn(5, 5, |i, j| if j <= i { (i + 2 * j + 1) as f64 } else { 0.0 });
        let y = [1.0, -1.0, 2.0, 0.5, 3.0];
        let got = lower_transpose_mul(&l, &y);
        let want = l.transpose() * nalgebra::DVector::from_column_slice(&y);
        assert!(got.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-13));
        let got = lower_mul(&l, &y);
        let want = &l * nalgebra::DVector::from_column_slice(&y);
        assert!(got.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-13));
    }
}
