//! Univariate Legendre and Babuška-Shen kernels.
//!
//! The Babuška-Shen (BS) functions `eta_k = (L_{k-2} - L_k) / sqrt(4k - 2)`,
//! `k >= 2`, are the primitives of the Legendre polynomials normalized to be
//! orthonormal in `H^1_0(-1, 1)`. Their `L^2` Gram matrix is pentadiagonal
//! with closed-form entries, which is what the tensorized stiffness assembly
//! is built from.

use std::sync::{OnceLock, RwLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// A finite Legendre expansion `sum_k c_k L_k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreSeries {
    pub coeffs: Vec<f64>,
}

impl LegendreSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Coefficient of `L_k` (zero beyond the stored degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Evaluates the series by running the three-term recurrence once.
    pub fn eval(&self, x: f64) -> f64 {
        let x = clamp_unit(x);
        let mut sum = 0.0;
        let (mut prev, mut cur) = (0.0, 1.0);
        for (k, &c) in self.coeffs.iter().enumerate() {
            sum += c * cur;
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
        }
        sum
    }
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `L_k(x)` via the three-term recurrence. Arguments marginally outside
/// `[-1, 1]` are clamped.
pub fn eval_legendre(k: usize, x: f64) -> f64 {
    let x = clamp_unit(x);
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for j in 1..k {
                let jf = j as f64;
                let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// All values `L_0(x), ..., L_n(x)`.
pub fn legendre_values(n: usize, x: f64) -> Vec<f64> {
    let x = clamp_unit(x);
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * out[j] - jf * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// `(L_n(x), L_n'(x))`. Used for Newton polishing of quadrature nodes, so no
/// clamping is applied.
pub fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    let (mut dprev, mut dcur) = (0.0, 1.0);
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
        let dnext = dprev + (2.0 * jf + 1.0) * cur;
        prev = cur;
        cur = next;
        dprev = dcur;
        dcur = dnext;
    }
    (cur, dcur)
}

/// Babuška-Shen function `eta_k(x)`, `k >= 2`.
pub fn eval_bs(k: usize, x: f64) -> f64 {
    assert!(k >= 2, "Babuška-Shen functions start at k = 2");
    let vals = legendre_values(k, x);
    (vals[k - 2] - vals[k]) / ((4 * k - 2) as f64).sqrt()
}

/// `eta_k'(x) = -sqrt(k - 1/2) L_{k-1}(x)`.
pub fn eval_bs_deriv(k: usize, x: f64) -> f64 {
    assert!(k >= 2, "Babuška-Shen functions start at k = 2");
    -((k as f64) - 0.5).sqrt() * eval_legendre(k - 1, x)
}

/// `(eta_k, eta_m)_{L^2(-1,1)}` from the closed form; the Gram matrix is
/// pentadiagonal with only the `m = k` and `|m - k| = 2` entries nonzero.
pub fn bs_mass_entry(k: usize, m: usize) -> f64 {
    assert!(k >= 2 && m >= 2, "Babuška-Shen indices start at 2");
    if k == m {
        let kf = k as f64;
        2.0 / ((2.0 * kf - 3.0) * (2.0 * kf + 1.0))
    } else if k.abs_diff(m) == 2 {
        let s = k.min(m) as f64;
        -1.0 / ((2.0 * s + 1.0) * ((2.0 * s - 1.0) * (2.0 * s + 3.0)).sqrt())
    } else {
        0.0
    }
}

/// `(eta_k, eta_m)_{H^1_0(-1,1)} = delta_km`.
pub fn bs_stiffness_entry(k: usize, m: usize) -> f64 {
    if k == m {
        1.0
    } else {
        0.0
    }
}

fn log_a_table() -> &'static RwLock<Vec<f64>> {
    static TABLE: OnceLock<RwLock<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(vec![0.0]))
}

/// `log A_m` with `A_m = (2m)! / (2^m (m!)^2) = 1*3*5*...*(2m-1) / m!`.
///
/// Equals `ln Gamma(2m+1) - m ln 2 - 2 ln Gamma(m+1)`; evaluated as the
/// running sum of `ln((2i-1)/i)`, which never forms a large intermediate.
pub fn log_a(m: usize) -> f64 {
    {
        let table = log_a_table().read().expect("log A table poisoned");
        if let Some(&v) = table.get(m) {
            return v;
        }
    }
    let mut table = log_a_table().write().expect("log A table poisoned");
    while table.len() <= m {
        let i = table.len() as f64;
        let last = *table.last().unwrap();
        table.push(last + ((2.0 * i - 1.0) / i).ln());
    }
    table[m]
}

/// Coefficient `A^r_{m,n}` of `L_{m+n-2r}` in the product `L_m L_n`.
pub fn product_coefficient(m: usize, n: usize, r: usize) -> Result<f64> {
    debug_assert!(r <= m.min(n));
    let log_ratio = log_a(m - r) + log_a(r) + log_a(n - r) - log_a(m + n - r);
    let ratio = log_ratio.exp();
    if !ratio.is_finite() {
        return Err(Error::Overflow("Legendre product linearization"));
    }
    let s = (m + n) as f64;
    let rf = r as f64;
    Ok(ratio * (2.0 * s - 4.0 * rf + 1.0) / (2.0 * s - 2.0 * rf + 1.0))
}

/// Linearization `L_m L_n = sum_r A^r_{m,n} L_{m+n-2r}` returned as a
/// Legendre series of degree `m + n`.
pub fn linearize_product(m: usize, n: usize) -> Result<LegendreSeries> {
    let mut coeffs = vec![0.0; m + n + 1];
    for r in 0..=m.min(n) {
        coeffs[m + n - 2 * r] = product_coefficient(m, n, r)?;
    }
    Ok(LegendreSeries::new(coeffs))
}

/// Two-dimensional Legendre coefficients of `f` on `[-1,1]^2` up to
/// coordinate degree `p`, using `p + 2` Gauss nodes per direction.
pub fn legendre_transform<F: Fn(f64, f64) -> f64>(f: F, p: usize) -> Result<DMatrix<f64>> {
    legendre_transform_with_nodes(f, p, p + 2)
}

/// As [`legendre_transform`] with an explicit node count (at least `p + 2`).
///
/// `nu[(k1, k2)] = (2k1+1)(2k2+1)/4 * int int f L_k1 L_k2`, exact for
/// polynomial `f` of coordinate degree `<= p`.
pub fn legendre_transform_with_nodes<F: Fn(f64, f64) -> f64>(
    f: F,
    p: usize,
    nodes: usize,
) -> Result<DMatrix<f64>> {
    if nodes < p + 2 {
        return Err(Error::InsufficientQuadrature { nodes, degree: p });
    }
    let rule = gauss_legendre(nodes);
    let x = rule.nodes();
    let w = rule.weights();
    let nq = x.len();
    // weighted Vandermonde: vw[(i, k)] = w_i L_k(x_i) (2k+1)/2
    let mut vw = DMatrix::<f64>::zeros(nq, p + 1);
    for (i, &xi) in x.iter().enumerate() {
        for (k, lk) in legendre_values(p, xi).into_iter().enumerate() {
            vw[(i, k)] = w[i] * lk * (2.0 * k as f64 + 1.0) / 2.0;
        }
    }
    let fv = DMatrix::from_fn(nq, nq, |i, j| f(x[i], x[j]));
    Ok(vw.transpose() * fv * vw)
}
