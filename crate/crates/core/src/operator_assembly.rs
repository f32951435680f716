//! Variable-coefficient operators `a(u, v) = int nu grad u . grad v + sigma u v`
//! in the tensorized BS basis and in the compressed basis, plus the
//! exponential-decay-class calculus used by the adaptive solver.
//!
//! Coefficients are expanded in tensor Legendre series
//! `nu = sum nu_ab L_a(x1) L_b(x2)`. Every 1-D integral
//! `int L_a w_k w_m` with `w` a BS function or its derivative is a finite
//! combination of Legendre product-linearization coefficients, so each entry
//! of `A_eta` is a short exact contraction against `nu_ab` and `sigma_ab`.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_space::{IndexSet, MultiIndex};
use crate::legendre1d::{legendre_transform_with_nodes, legendre_values, product_coefficient};
use crate::linalg::PowerOptions;
use crate::quadrature::gauss_legendre;
use crate::sparse::SparseMatrix;

/// Legendre tail (sum of discarded absolute coefficients) accepted when
/// truncating a coefficient expansion.
pub const COEFF_TAIL_TOL: f64 = 1e-12;
const MAX_COEFF_DEGREE: usize = 256;
/// Entries below this fraction of the largest one are treated as round-off
/// when fitting decay classes.
pub const FIT_NOISE_FLOOR: f64 = 1e-13;

/// A coefficient (or right-hand side) given by a named closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// `value`
    Constant { value: f64 },
    /// `sum c x1^i x2^j` over `terms = [[c, i, j], ...]`.
    Poly { terms: Vec<[f64; 3]> },
    /// `offset + scale * exp(a1 x1 + a2 x2)`.
    ExpSum {
        scale: f64,
        a1: f64,
        a2: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + scale / (1 + a (x1^2 + x2^2))`.
    Runge {
        scale: f64,
        a: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl CoefficientSpec {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Poly { terms } => terms
                .iter()
                .map(|[c, i, j]| c * x1.powi(*i as i32) * x2.powi(*j as i32))
                .sum(),
            Self::ExpSum { scale, a1, a2, offset } => offset + scale * (a1 * x1 + a2 * x2).exp(),
            Self::Runge { scale, a, offset } => offset + scale / (1.0 + a * (x1 * x1 + x2 * x2)),
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |message: String| Err(Error::Config { field: field.to_string(), message });
        match self {
            Self::Poly { terms } => {
                for t in terms {
                    if t[1] < 0.0 || t[2] < 0.0 || t[1].fract() != 0.0 || t[2].fract() != 0.0 {
                        return bad(format!("exponents must be non-negative integers, got {t:?}"));
                    }
                }
                Ok(())
            }
            Self::Runge { a, .. } if *a <= -0.5 => bad(format!("runge parameter a = {a} makes the field singular")),
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant { value } => *value == 0.0,
            Self::Poly { terms } => terms.iter().all(|t| t[0] == 0.0),
            _ => false,
        }
    }
}

/// Exponential decay class `|a_mn| <= c exp(-gamma ||m - n||_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayClass {
    pub c: f64,
    pub gamma: f64,
}

impl DecayClass {
    pub fn envelope(&self, distance: u32) -> f64 {
        self.c * (-self.gamma * distance as f64).exp()
    }

    /// Schur-test bound on `||A - A_J||_2` for a symmetric matrix in the
    /// class on the 2-D index lattice (at most `4 l` indices at distance `l`):
    /// `4 c sum_{l > J} l q^l` with `q = exp(-gamma)`.
    pub fn truncation_bound(&self, j: u32) -> f64 {
        let q = (-self.gamma).exp();
        let jf = j as f64 + 1.0;
        4.0 * self.c * q.powf(jf) * (jf / (1.0 - q) + q / (1.0 - q).powi(2))
    }

    /// Constant `C_A` with `truncation_bound(J) <= C_A exp(-gamma J)` for
    /// all `J < diameter` (beyond the diameter the truncation is exact).
    pub fn truncation_constant(&self, diameter: u32) -> f64 {
        let q = (-self.gamma).exp();
        4.0 * self.c * q * ((diameter.max(1)) as f64 / (1.0 - q) + q / (1.0 - q).powi(2))
    }

    /// Every entry of `a` (indexed by `set`) lies under the envelope,
    /// up to a relative slack.
    pub fn dominates(&self, a: &SparseMatrix, set: &IndexSet, slack: f64) -> bool {
        a.iter().all(|(i, j, v)| {
            v.abs() <= self.envelope(set.get(i).l1_distance(&set.get(j))) * (1.0 + slack)
        })
    }

    /// Least-squares fit of `log M_l` against `l`, where `M_l` is the largest
    /// magnitude at distance `l`; `c` is then raised until the envelope
    /// dominates every point. A single distance gets `gamma = 1`.
    pub fn fit_points(points: &[(u32, f64)]) -> Result<Self> {
        let top = points.iter().map(|p| p.1).fold(0.0, f64::max);
        if !(top > 0.0) {
            return Err(Error::FitFailure("all entries vanish".into()));
        }
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.1 > FIT_NOISE_FLOOR * top)
            .map(|&(l, m)| (l as f64, m.ln()))
            .collect();
        let gamma = if pts.len() < 2 {
            1.0
        } else {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            -sxy / sxx
        };
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::FitFailure(format!("entries do not decay (fitted rate {gamma})")));
        }
        let log_c = pts.iter().map(|&(l, lm)| lm + gamma * l).fold(f64::NEG_INFINITY, f64::max);
        // Points under the noise floor are covered explicitly.
        let floor_c = points
            .iter()
            .map(|&(l, m)| if m > 0.0 { m.ln() + gamma * l as f64 } else { f64::NEG_INFINITY })
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { c: log_c.max(floor_c).exp(), gamma })
    }
}

impl DecayClass {
    /// Among all classes whose envelope dominates every point, the one whose
    /// envelope first drops to `level`: for each trial rate `gamma` the
    /// smallest admissible `c(gamma) = max_l M_l e^{gamma l}` is used, and the
    /// rate minimizing `log(c(gamma) / level) / gamma` wins.
    pub fn fit_for_level(points: &[(u32, f64)], level: f64) -> Result<Self> {
        if !(level > 0.0) {
            return Err(Error::InvalidArgument(format!("level must be positive, got {level}")));
        }
        let top = points.iter().map(|p| p.1).fold(0.0, f64::max);
        if !(top > 0.0) {
            return Err(Error::FitFailure("all entries vanish".into()));
        }
        let log_c = |gamma: f64| {
            points
                .iter()
                .filter(|p| p.1 > 0.0)
                .map(|&(l, m)| m.ln() + gamma * l as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let mut best: Option<(f64, Self)> = None;
        for i in 0..=600 {
            let gamma = 1e-3 * 10f64.powf(i as f64 / 150.0);
            let lc = log_c(gamma);
            let reach = ((lc - level.ln()) / gamma).max(0.0);
            if best.as_ref().is_none_or(|b| reach < b.0 || (reach == b.0 && gamma > b.1.gamma)) {
                best = Some((reach, Self { c: lc.exp(), gamma }));
            }
        }
        Ok(best.expect("non-empty grid").1)
    }
}

/// Largest magnitude per l1 distance.
pub fn distance_profile(a: &SparseMatrix, set: &IndexSet) -> Vec<(u32, f64)> {
    let mut by_dist: HashMap<u32, f64> = HashMap::new();
    for (i, j, v) in a.iter() {
        let d = set.get(i).l1_distance(&set.get(j));
        let e = by_dist.entry(d).or_insert(0.0);
        *e = e.max(v.abs());
    }
    let mut out: Vec<(u32, f64)> = by_dist.into_iter().collect();
    out.sort_by_key(|p| p.0);
    out
}

pub fn fit_decay_class(a: &SparseMatrix, set: &IndexSet) -> Result<DecayClass> {
    if a.nrows() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: a.nrows() });
    }
    DecayClass::fit_points(&distance_profile(a, set))
}

/// Keeps the entries with `||m - n||_1 <= J`.
pub fn truncate_by_distance(a: &SparseMatrix, set: &IndexSet, j: u32) -> SparseMatrix {
    a.filter(|r, c, _| set.get(r).l1_distance(&set.get(c)) <= j)
}

/// A coefficient function together with its truncated Legendre expansion
/// and sampled bounds.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub spec: CoefficientSpec,
    /// `coeffs[(a, b)]` multiplies `L_a(x1) L_b(x2)`.
    pub coeffs: DMatrix<f64>,
    /// Sum of the discarded coefficient magnitudes (a sup-norm bound).
    pub tail: f64,
    /// Sampled lower bound (minimum times 0.99, or minus 1% for negatives).
    pub lower: f64,
    /// Sampled upper bound (maximum plus 1%).
    pub upper: f64,
    pub decay: Option<DecayClass>,
}

impl CoefficientField {
    pub fn new(spec: CoefficientSpec) -> Result<Self> {
        spec.validate("coefficient")?;
        let mut trial = 8usize;
        let (coeffs, tail) = loop {
            let full = legendre_transform_with_nodes(|x, y| spec.eval(x, y), trial, trial + 16)?;
            if let Some((qc, tail)) = truncation_degree(&full) {
                if qc + 4 <= trial || trial >= MAX_COEFF_DEGREE {
                    break (full.view((0, 0), (qc + 1, qc + 1)).into_owned(), tail);
                }
            }
            if trial >= MAX_COEFF_DEGREE {
                return Err(Error::FitFailure(format!(
                    "coefficient expansion not resolved to {COEFF_TAIL_TOL:e} at degree {MAX_COEFF_DEGREE}"
                )));
            }
            trial *= 2;
        };
        Ok(Self::from_coefficients(spec, coeffs, tail))
    }

    fn from_coefficients(spec: CoefficientSpec, coeffs: DMatrix<f64>, tail: f64) -> Self {
        let rule = gauss_legendre(64);
        let q = coeffs.nrows() - 1;
        let vals: Vec<Vec<f64>> = rule.nodes().iter().map(|&x| legendre_values(q, x)).collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v1 in &vals {
            for v2 in &vals {
                let mut s = 0.0;
                for a in 0..=q {
                    for b in 0..=q {
                        s += coeffs[(a, b)] * v1[a] * v2[b];
                    }
                }
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        let points: Vec<(u32, f64)> = {
            let mut by: HashMap<u32, f64> = HashMap::new();
            for a in 0..=q {
                for b in 0..=q {
                    let e = by.entry((a + b) as u32).or_insert(0.0);
                    *e = e.max(coeffs[(a, b)].abs());
                }
            }
            let mut v: Vec<_> = by.into_iter().collect();
            v.sort_by_key(|p| p.0);
            v
        };
        let decay = DecayClass::fit_points(&points).ok();
        Self {
            spec,
            coeffs,
            tail,
            lower: lo - 0.01 * lo.abs(),
            upper: hi + 0.01 * hi.abs(),
            decay,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_coefficients(CoefficientSpec::Constant { value }, DMatrix::from_element(1, 1, value), 0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.nrows() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Evaluates the truncated expansion.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let q = self.degree();
        let v1 = legendre_values(q, x1);
        let v2 = legendre_values(q, x2);
        let mut s = 0.0;
        for (a, va) in v1.iter().enumerate().take(q + 1) {
            for (b, vb) in v2.iter().enumerate().take(q + 1) {
                s += self.coeffs[(a, b)] * va * vb;
            }
        }
        s
    }

    /// Whether only even-degree coefficients are present, i.e. the operator
    /// does not couple different parity blocks.
    pub fn is_parity_even(&self) -> bool {
        let q = self.degree();
        let floor = FIT_NOISE_FLOOR * self.coeffs.abs().max();
        (0..=q).all(|a| (0..=q).all(|b| (a % 2 == 0 && b % 2 == 0) || self.coeffs[(a, b)].abs() <= floor))
    }

    /// CSV with columns `a,b,l1,coefficient,envelope`.
    pub fn write_decay_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["a", "b", "l1", "coefficient", "envelope"])?;
        let q = self.degree();
        for a in 0..=q {
            for b in 0..=q {
                let env = self.decay.map(|d| d.envelope((a + b) as u32)).unwrap_or(f64::NAN);
                out.write_record([
                    a.to_string(),
                    b.to_string(),
                    (a + b).to_string(),
                    format!("{:.6e}", self.coeffs[(a, b)]),
                    format!("{env:.6e}"),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Smallest `q` whose discarded tail is below [`COEFF_TAIL_TOL`], with the
/// tail value.
fn truncation_degree(c: &DMatrix<f64>) -> Option<(usize, f64)> {
    let n = c.nrows();
    // shell[q] = sum of |c_ab| with max(a, b) = q
    let mut shell = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            shell[a.max(b)] += c[(a, b)].abs();
        }
    }
    let mut tail = 0.0;
    for q in (0..n).rev() {
        if tail + shell[q] > COEFF_TAIL_TOL {
            return (q + 1 < n).then_some((q, tail));
        }
        tail += shell[q];
    }
    Some((0, tail))
}

/// `int L_a w_k w_m dx` for `a = 0..=q`, where `w` is the BS function
/// (`derivative = false`) or its derivative.
fn one_d_moments(k: usize, m: usize, q: usize, derivative: bool) -> Result<Vec<f64>> {
    let mut out = vec![0.0; q + 1];
    let mut add = |i: usize, j: usize, scale: f64| -> Result<()> {
        let lo = i.abs_diff(j);
        let mut a = lo;
        while a <= q.min(i + j) {
            let r = (i + j - a) / 2;
            out[a] += scale * product_coefficient(i, j, r)? * 2.0 / (2 * a + 1) as f64;
            a += 2;
        }
        Ok(())
    };
    if derivative {
        let s = ((k as f64 - 0.5) * (m as f64 - 0.5)).sqrt();
        add(k - 1, m - 1, s)?;
    } else {
        let s = 1.0 / (((4 * k - 2) * (4 * m - 2)) as f64).sqrt();
        add(k - 2, m - 2, s)?;
        add(k - 2, m, -s)?;
        add(k, m - 2, -s)?;
        add(k, m, s)?;
    }
    Ok(out)
}

/// Memo of 1-D moments keyed by `(k, m, derivative)`.
struct MomentTable {
    q: usize,
    memo: HashMap<(usize, usize, bool), Vec<f64>>,
}

impl MomentTable {
    fn new(q: usize) -> Self {
        Self { q, memo: HashMap::new() }
    }

    fn get(&mut self, k: usize, m: usize, derivative: bool) -> Result<&[f64]> {
        let key = (k.min(m), k.max(m), derivative);
        if !self.memo.contains_key(&key) {
            let v = one_d_moments(key.0, key.1, self.q, derivative)?;
            self.memo.insert(key, v);
        }
        Ok(&self.memo[&key])
    }
}

fn contract(c: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let q = c.nrows();
    let mut s = 0.0;
    for a in 0..q {
        if x[a] == 0.0 {
            continue;
        }
        let mut t = 0.0;
        for b in 0..q {
            t += c[(a, b)] * y[b];
        }
        s += x[a] * t;
    }
    s
}

/// `A_eta` on `set` (rows and columns in set order) for diffusion `nu` and
/// reaction `sigma`.
pub fn assemble_a_eta(set: &IndexSet, nu: &CoefficientField, sigma: &CoefficientField) -> Result<SparseMatrix> {
    let qn = nu.degree();
    let qs = if sigma.is_zero() { 0 } else { sigma.degree() };
    let q = qn.max(qs);
    let pad = |c: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(q + 1, q + 1);
        m.view_mut((0, 0), (c.nrows(), c.ncols())).copy_from(c);
        m
    };
    let nu_c = pad(&nu.coeffs);
    let sigma_c = pad(&sigma.coeffs);
    let has_sigma = !sigma.is_zero();
    let has_nu = !nu.is_zero();
    let mut table = MomentTable::new(q);
    let reach = (q + 2) as i64;
    let mut triplets = Vec::new();
    for (i, k) in set.indices().iter().enumerate() {
        for d1 in -reach..=reach {
            let m1 = k.k1 as i64 + d1;
            if m1 < 2 {
                continue;
            }
            for d2 in -reach..=reach {
                let m2 = k.k2 as i64 + d2;
                if m2 < 2 {
                    continue;
                }
                let m = MultiIndex { k1: m1 as u32, k2: m2 as u32 };
                let Some(j) = set.position(&m) else { continue };
                if j < i {
                    continue;
                }
                let (k1, k2, m1, m2) = (k.k1 as usize, k.k2 as usize, m.k1 as usize, m.k2 as usize);
                let w0x = table.get(k1, m1, false)?.to_vec();
                let w0y = table.get(k2, m2, false)?.to_vec();
                let mut v = 0.0;
                if has_nu {
                    let w1x = table.get(k1, m1, true)?.to_vec();
                    let w1y = table.get(k2, m2, true)?.to_vec();
                    v += contract(&nu_c, &w1x, &w0y) + contract(&nu_c, &w0x, &w1y);
                }
                if has_sigma {
                    v += contract(&sigma_c, &w0x, &w0y);
                }
                if v != 0.0 {
                    triplets.push((i, j, v));
                    if i != j {
                        triplets.push((j, i, v));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(set.len(), set.len(), triplets).with_symmetric(true))
}

/// `G_t^T (D^{-1/2} A_eta D^{-1/2}) G_t`, where `scaling = D^{-1/2}` is the
/// normalization of the BS basis.
pub fn assemble_a_phi(g_t: &SparseMatrix, a_eta: &SparseMatrix, scaling: &[f64]) -> Result<SparseMatrix> {
    if a_eta.nrows() != g_t.nrows() || scaling.len() != g_t.nrows() {
        return Err(Error::DimensionMismatch { expected: g_t.nrows(), got: a_eta.nrows() });
    }
    Ok(a_eta.scale_symmetric(scaling).triple_product(g_t).with_symmetric(true))
}

/// Spectral norm of `A - A_J`.
pub fn truncation_error(a: &SparseMatrix, set: &IndexSet, j: u32) -> Result<f64> {
    let rest = a.filter(|r, c, _| set.get(r).l1_distance(&set.get(c)) > j);
    rest.operator_norm(PowerOptions { tol: 1e-10, max_iter: 100_000 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_space::IndexOrdering;
    use crate::legendre1d::{eval_bs, eval_bs_deriv};
    use crate::tensor_stiffness::assemble_s_eta;

    fn quadrature_entry(k: MultiIndex, m: MultiIndex, nu: &dyn Fn(f64, f64) -> f64, sigma: &dyn Fn(f64, f64) -> f64) -> f64 {
        let rule = gauss_legendre(48);
        let (x, w) = (rule.nodes(), rule.weights());
        let mut s = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            for (j, &yj) in x.iter().enumerate() {
                let (a1, a2) = (eval_bs(k.k1 as usize, xi), eval_bs(k.k2 as usize, yj));
                let (b1, b2) = (eval_bs(m.k1 as usize, xi), eval_bs(m.k2 as usize, yj));
                let (da1, da2) = (eval_bs_deriv(k.k1 as usize, xi), eval_bs_deriv(k.k2 as usize, yj));
                let (db1, db2) = (eval_bs_deriv(m.k1 as usize, xi), eval_bs_deriv(m.k2 as usize, yj));
                let grad = da1 * a2 * db1 * b2 + a1 * da2 * b1 * db2;
                s += w[i] * w[j] * (nu(xi, yj) * grad + sigma(xi, yj) * a1 * a2 * b1 * b2);
            }
        }
        s
    }

    #[test]
    fn laplacian_reproduces_stiffness() {
        let set = IndexSet::total_degree(20, None);
        let a = assemble_a_eta(&set, &CoefficientField::constant(1.0), &CoefficientField::constant(0.0)).unwrap();
        let s = assemble_s_eta(&set);
        assert!((a.to_dense() - s.to_dense()).abs().max() < 1e-12);
    }

    #[test]
    fn reaction_only_gives_tensor_mass() {
        let set = IndexSet::total_degree(10, None);
        let a = assemble_a_eta(&set, &CoefficientField::constant(0.0), &CoefficientField::constant(1.0)).unwrap();
        assert!((a.get(0, 0) - 4.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn variable_coefficients_match_quadrature() {
        let nu_spec = CoefficientSpec::Poly { terms: vec![[1.0, 0.0, 0.0], [0.5, 1.0, 1.0]] };
        let sigma_spec = CoefficientSpec::ExpSum { scale: 1.0, a1: 1.0, a2: 1.0, offset: 0.0 };
        let nu = CoefficientField::new(nu_spec).unwrap();
        let sigma = CoefficientField::new(sigma_spec).unwrap();
        assert_eq!(nu.degree(), 1);
        assert!(sigma.tail <= COEFF_TAIL_TOL);
        let set = IndexSet::total_degree(12, None);
        let a = assemble_a_eta(&set, &nu, &sigma).unwrap();
        let mut worst: f64 = 0.0;
        for (i, k) in set.indices().iter().enumerate() {
            for (j, m) in set.indices().iter().enumerate() {
                let q = quadrature_entry(*k, *m, &|x, y| 1.0 + x * y / 2.0, &|x, y| (x + y).exp());
                worst = worst.max((q - a.get(i, j)).abs());
            }
        }
        assert!(worst < 1e-9, "{worst}");
        assert!(a.asymmetry() < 1e-12);
    }

    #[test]
    fn coefficient_bounds_and_parity() {
        let f = CoefficientField::new(CoefficientSpec::Runge { scale: 1.0, a: 1.0, offset: 0.5 }).unwrap();
        // minimum 0.5 + 1/3 at the corners, maximum 1.5 at the origin
        assert!(f.lower <= 0.5 + 1.0 / 3.0 && f.lower > 0.8);
        assert!(f.upper >= 1.5 && f.upper < 1.6);
        assert!(f.is_parity_even());
        let g = CoefficientField::new(CoefficientSpec::ExpSum { scale: 1.0, a1: 1.0, a2: 0.0, offset: 1.0 }).unwrap();
        assert!(!g.is_parity_even());
        assert!((g.eval(0.3, -0.2) - (1.0 + 0.3f64.exp())).abs() < 1e-12);
        let d = g.decay.unwrap();
        assert!(d.gamma > 0.0);
        let mut buf = Vec::new();
        g.write_decay_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("a,b,l1,coefficient,envelope"));
    }

    #[test]
    fn spec_json_roundtrip_and_validation() {
        let s: CoefficientSpec = serde_json::from_str(r#"{"type":"exp_sum","scale":2,"a1":1,"a2":-1}"#).unwrap();
        assert_eq!(s, CoefficientSpec::ExpSum { scale: 2.0, a1: 1.0, a2: -1.0, offset: 0.0 });
        assert!(serde_json::from_str::<CoefficientSpec>(r#"{"type":"bogus"}"#).is_err());
        let bad = CoefficientSpec::Poly { terms: vec![[1.0, 0.5, 0.0]] };
        assert!(matches!(bad.validate("nu"), Err(Error::Config { .. })));
    }

    #[test]
    fn decay_class_fit_and_truncation() {
        // banded: S_eta has entries only at distances 0 and 2
        let set = IndexSet::square(12, IndexOrdering::A, None);
        let s = assemble_s_eta(&set);
        let dc = fit_decay_class(&s, &set).unwrap();
        assert!(dc.gamma > 0.0 && dc.dominates(&s, &set, 1e-12));
        assert_eq!(truncate_by_distance(&s, &set, 0).nnz(), set.len());
        assert_eq!(truncate_by_distance(&s, &set, set.l1_diameter()), s);
        for j in 0..=4 {
            let err = truncation_error(&s, &set, j).unwrap();
            assert!(err <= dc.truncation_bound(j) * (1.0 + 1e-9));
            assert!(dc.truncation_bound(j) <= dc.truncation_constant(set.l1_diameter()) * (-dc.gamma * j as f64).exp() * (1.0 + 1e-12));
        }
        let zero = SparseMatrix::from_triplets(3, 3, vec![]);
        assert!(fit_decay_class(&zero, &IndexSet::total_degree(5, None)).is_err());
    }

    #[test]
    fn inverse_stiffness_section_decays() {
        let set = IndexSet::total_degree(30, Some(crate::index_space::ParityBlock::EvenEven));
        let s = assemble_s_eta(&set);
        let inv = s.to_dense().try_inverse().unwrap();
        let inv = SparseMatrix::from_dense(&inv, 0.0);
        let dc = fit_decay_class(&inv, &set).unwrap();
        assert!(dc.gamma > 0.0);
    }
}
