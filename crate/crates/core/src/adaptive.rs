//! The FPC-ADLEG adaptive loop on one parity block of `K^{p_max}`.
//!
//! All vectors live on the block of `K^{p_max}` in A-ordering: a coefficient
//! vector `v_hat` holds NOBS coordinates, a dual vector holds
//! `r_k = <r, phi_k>`. Supports are sorted lists of positions in that
//! ordering, so ties in every sort are broken by A-ordering rank.
//!
//! One pass of the loop (`n = 0, 1, ...`):
//!
//! ```text
//! dLambda_n   = E-DORFLER(r_n, theta)
//! Lambda_hat  = Lambda_n  u  dLambda_n
//! u_hat       = GAL(Lambda_hat)
//! Lambda_n+1  = COARSE(u_hat, 3 (beta^*/alpha_*) sqrt(1 - theta^2) ||r_n||)
//! u_n+1       = GAL(Lambda_n+1)
//! r_n+1       = F-RES(u_n+1, delta)
//! ```
//!
//! repeated while `||r_n+1||_{phi*} > tol / (1 + delta)`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::compress::{assemble_s_phi, CompressedFactor, Strategy, DEFAULT_TOL_G};
use crate::error::{Error, Result};
use crate::index_space::{enrich, IndexOrdering, IndexSet, MultiIndex, ParityBlock};
use crate::legendre1d::eval_bs;
use crate::linalg::conjugate_gradient;
use crate::operator_assembly::{
    assemble_a_eta, assemble_a_phi, distance_profile, fit_decay_class, CoefficientField, CoefficientSpec, DecayClass,
};
use crate::quadrature::gauss_legendre;
use crate::sparse::SparseMatrix;
use crate::tensor_stiffness::{assemble_s_eta, diagonal_scaling, index_set_for};

/// Relative residual of the Galerkin solves.
pub const GAL_TOL: f64 = 1e-10;
/// Safety factor in the F-RES acceptance test.
pub const FRES_SAFETY: f64 = 0.05;
/// Hard cap on the number of outer iterations.
pub const MAX_ITERATIONS: usize = 500;
/// Largest block on which the inverse decay class is fitted from a dense
/// inverse; larger blocks use their upper-left section of this size.
const INVERSE_FIT_MAX_DIM: usize = 1500;

fn default_block() -> ParityBlock {
    ParityBlock::EvenEven
}

fn default_strategy() -> Strategy {
    Strategy::Threshold
}

fn default_tol_g() -> f64 {
    DEFAULT_TOL_G
}

/// Manufactured solution in NOBS coordinates: explicit modes plus an
/// analytic tail `scale * exp(-gamma ||k||_1)` on every index of the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedSpec {
    /// `[k1, k2, coefficient]` triples.
    #[serde(default)]
    pub modes: Vec<(u32, u32, f64)>,
    #[serde(default)]
    pub tail: Option<TailSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub scale: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub nu: CoefficientSpec,
    #[serde(default)]
    pub sigma: Option<CoefficientSpec>,
    #[serde(default)]
    pub f: Option<CoefficientSpec>,
    #[serde(default)]
    pub manufactured_u: Option<ManufacturedSpec>,
}

/// Run configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub theta: f64,
    pub delta: f64,
    pub tol: f64,
    #[serde(rename = "tol_G", alias = "tol_g", default = "default_tol_g")]
    pub tol_g: f64,
    pub p_max: u32,
    #[serde(default = "default_block")]
    pub parity_block: ParityBlock,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    pub problem: ProblemSpec,
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl SolverConfig {
    /// Parses and validates a JSON configuration.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(config_error("theta", format!("must lie in (0,1), got {}", self.theta)));
        }
        let cap = (1.0 - self.theta * self.theta).sqrt();
        if !(self.delta > 0.0 && self.delta < cap) {
            return Err(config_error(
                "delta",
                format!("must lie in (0, sqrt(1 - theta^2)) = (0, {cap:.6}), got {}", self.delta),
            ));
        }
        if !(self.tol >= 0.0) || !self.tol.is_finite() {
            return Err(config_error("tol", format!("must be a finite non-negative number, got {}", self.tol)));
        }
        if !(self.tol_g > 0.0 && self.tol_g < 1.0) {
            return Err(config_error("tol_G", format!("must lie in (0,1), got {}", self.tol_g)));
        }
        if self.p_max < 4 {
            return Err(config_error("p_max", format!("must be at least 4, got {}", self.p_max)));
        }
        let pr = &self.problem;
        pr.nu.validate("problem.nu")?;
        if let Some(s) = &pr.sigma {
            s.validate("problem.sigma")?;
        }
        match (&pr.f, &pr.manufactured_u) {
            (Some(f), None) => f.validate("problem.f")?,
            (None, Some(m)) => {
                for (i, &(k1, k2, c)) in m.modes.iter().enumerate() {
                    let field = format!("problem.manufactured_u.modes[{i}]");
                    let k = MultiIndex::new(k1, k2).map_err(|e| config_error(&field, e.to_string()))?;
                    if !self.parity_block.contains(&k) {
                        return Err(config_error(&field, format!("index ({k1},{k2}) is not in block {}", self.parity_block)));
                    }
                    if k.total() > self.p_max {
                        return Err(config_error(&field, format!("degree {} exceeds p_max = {}", k.total(), self.p_max)));
                    }
                    if !c.is_finite() {
                        return Err(config_error(&field, "coefficient must be finite"));
                    }
                }
                if let Some(t) = m.tail {
                    if !(t.gamma > 0.0) || !t.scale.is_finite() {
                        return Err(config_error("problem.manufactured_u.tail", "needs finite scale and gamma > 0"));
                    }
                }
            }
            (Some(_), Some(_)) => {
                return Err(config_error("problem", "give either f or manufactured_u, not both"));
            }
            (None, None) => return Err(config_error("problem", "one of f or manufactured_u is required")),
        }
        Ok(())
    }
}

/// `(alpha_*, alpha^*)` for `a(u, v) = int nu grad u . grad v + sigma u v` in
/// the `H^1_0` seminorm, from sampled coefficient bounds and the Poincare
/// constant `2 / pi^2` of the square.
pub fn coercivity_constants(nu: &CoefficientField, sigma: &CoefficientField) -> Result<(f64, f64)> {
    let poincare = 2.0 / (PI * PI);
    let lo = nu.lower + sigma.lower.min(0.0) * poincare;
    let hi = nu.upper + sigma.upper.max(0.0) * poincare;
    if !(lo > 0.0) {
        return Err(config_error(
            "problem.nu",
            format!("operator is not coercive (sampled lower bound {lo:.3e})"),
        ));
    }
    Ok((lo, hi))
}

/// All constants of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub theta: f64,
    pub delta: f64,
    pub tol: f64,
    pub tol_g: f64,
    pub p_max: u32,
    pub rho: f64,
    pub beta_lower: f64,
    pub beta_upper: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub j_theta: u32,
    pub d_lower: f64,
    pub d_upper: f64,
    pub lte_norm: f64,
    /// Decay class of `A_phi`.
    pub a_class: DecayClass,
    /// Decay class fitted to a finite section of `A_phi^{-1}`.
    pub inverse_class: DecayClass,
}

/// `rho = 9 (alpha^*/alpha_*) (beta^*/beta_*) sqrt(1 - theta^2) / (1 - delta)`.
pub fn contraction_factor(theta: f64, delta: f64, alpha: (f64, f64), beta: (f64, f64)) -> f64 {
    9.0 * (alpha.1 / alpha.0) * (beta.1 / beta.0) * (1.0 - theta * theta).sqrt() / (1.0 - delta)
}

/// Smallest `J >= 0` with
/// `C e^{-gamma J} <= (beta_*^2 / d^*) sqrt((1 - theta^2) / (alpha_* alpha^*))`.
pub fn enrichment_radius(inverse: DecayClass, theta: f64, alpha: (f64, f64), beta_lower: f64, d_upper: f64) -> u32 {
    let rhs = beta_lower * beta_lower / d_upper * ((1.0 - theta * theta) / (alpha.0 * alpha.1)).sqrt();
    if inverse.c <= rhs {
        return 0;
    }
    let j = ((inverse.c / rhs).ln() / inverse.gamma).ceil();
    // guard against round-off just above an integer
    let j = j as u32;
    if j > 0 && inverse.envelope(j - 1) <= rhs {
        j - 1
    } else {
        j
    }
}

/// The discrete problem on one parity block of `K^{p_max}`: `A_phi`, the
/// NOBS stiffness `S_phi`, dual weights and fitted decay classes.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub p_max: u32,
    pub block: ParityBlock,
    pub set: IndexSet,
    /// `D^{-1/2}` normalization of the BS basis on the block.
    pub scaling: Vec<f64>,
    pub factor: CompressedFactor,
    pub a_phi: SparseMatrix,
    pub s_phi: SparseMatrix,
    /// `d_k = (S_phi)_kk`.
    pub d_phi: Vec<f64>,
    pub a_class: DecayClass,
    /// Largest magnitude of `A_phi^{-1}` (on a finite section) per l1
    /// distance.
    pub inverse_profile: Vec<(u32, f64)>,
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub d_bounds: (f64, f64),
}

impl Discretization {
    pub fn new(factor: CompressedFactor, nu: &CoefficientField, sigma: &CoefficientField) -> Result<Self> {
        if !nu.is_parity_even() || !sigma.is_parity_even() {
            return Err(config_error(
                "problem",
                "coefficients couple parity blocks; only parity-even coefficients are supported",
            ));
        }
        let p_max = factor.p;
        let block = factor.block;
        let set = index_set_for(p_max, IndexOrdering::A, Some(block))?;
        if set.len() != factor.dim() {
            return Err(Error::DimensionMismatch { expected: set.len(), got: factor.dim() });
        }
        let s_eta = assemble_s_eta(&set);
        let scaling = diagonal_scaling(&s_eta)?;
        let s = s_eta.scale_symmetric(&scaling);
        let stiff = assemble_s_phi(&factor.g_t, &s, factor.lte_norm)?;
        let a_eta = assemble_a_eta(&set, nu, sigma)?;
        let a_phi = assemble_a_phi(&factor.g_t, &a_eta, &scaling)?;
        let a_class = fit_decay_class(&a_phi, &set)?;
        let alpha = coercivity_constants(nu, sigma)?;
        let beta = factor.beta_constants()?;
        let inverse_profile = inverse_distance_profile(&a_phi, &set)?;
        Ok(Self {
            p_max,
            block,
            scaling,
            a_phi,
            s_phi: stiff.s_phi,
            d_phi: stiff.d_phi,
            d_bounds: (stiff.d_lower, stiff.d_upper),
            a_class,
            inverse_profile,
            alpha,
            beta,
            set,
            factor,
        })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Right side `(beta_*^2 / d^*) sqrt((1 - theta^2) / (alpha_* alpha^*))` of
    /// the inequality defining `J_theta`.
    pub fn enrichment_level(&self, theta: f64) -> f64 {
        let (a0, a1) = self.alpha;
        self.beta.0 * self.beta.0 / self.d_bounds.1 * ((1.0 - theta * theta) / (a0 * a1)).sqrt()
    }

    /// Class `(C_{A^{-1}}, gamma_bar)` of the inverse: the dominating envelope
    /// that reaches [`Self::enrichment_level`] at the smallest distance.
    pub fn inverse_class(&self, theta: f64) -> Result<DecayClass> {
        DecayClass::fit_for_level(&self.inverse_profile, self.enrichment_level(theta))
    }

    pub fn constants(&self, theta: f64, delta: f64, tol: f64) -> Result<Constants> {
        let inverse_class = self.inverse_class(theta)?;
        Ok(Constants {
            theta,
            delta,
            tol,
            tol_g: self.factor.tol_g,
            p_max: self.p_max,
            rho: contraction_factor(theta, delta, self.alpha, self.beta),
            beta_lower: self.beta.0,
            beta_upper: self.beta.1,
            alpha_lower: self.alpha.0,
            alpha_upper: self.alpha.1,
            j_theta: enrichment_radius(inverse_class, theta, self.alpha, self.beta.0, self.d_bounds.1),
            d_lower: self.d_bounds.0,
            d_upper: self.d_bounds.1,
            lte_norm: self.factor.lte_norm,
            a_class: self.a_class,
            inverse_class,
        })
    }

    /// Dual norm `sqrt(sum r_k^2 / d_k)`.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.d_phi).map(|(x, d)| x * x / d).sum::<f64>().sqrt()
    }

    /// Weighted norm `sqrt(sum v_k^2 d_k)`.
    pub fn primal_norm(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.d_phi).map(|(x, d)| x * x * d).sum::<f64>().sqrt()
    }

    /// `H^1_0` seminorm `sqrt(v^T S_phi v)` of a NOBS coefficient vector.
    pub fn energy_norm(&self, v: &[f64]) -> f64 {
        let sv = self.s_phi.matvec(v);
        sv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// `r = f - A_J v` where `A_J` keeps entries with `||m - n||_1 <= J`.
    pub fn truncated_residual(&self, fhat: &[f64], v: &[f64], support: &[usize], j: u32) -> Vec<f64> {
        let mut r = fhat.to_vec();
        for &c in support {
            let vc = v[c];
            if vc == 0.0 {
                continue;
            }
            let kc = self.set.get(c);
            // A_phi is symmetric: column c equals row c.
            for (i, a) in self.a_phi.row(c) {
                if j >= self.set.degree() * 2 || self.set.get(i).l1_distance(&kc) <= j {
                    r[i] -= a * vc;
                }
            }
        }
        r
    }

    /// Right-hand side dual coefficients `f_k = <f, phi_k>` of a closed-form
    /// `f`, from Gauss quadrature with `2 p_max` nodes per direction.
    pub fn load_vector(&self, f: &CoefficientSpec) -> Result<Vec<f64>> {
        let p = self.p_max as usize;
        let rule = gauss_legendre((2 * p).max(p + 2));
        let (x, w) = (rule.nodes(), rule.weights());
        let nq = x.len();
        // table[k][i] = w_i eta_k(x_i)
        let table: Vec<Vec<f64>> = (0..=p)
            .map(|k| if k < 2 { vec![0.0; nq] } else { (0..nq).map(|i| w[i] * eval_bs(k, x[i])).collect() })
            .collect();
        let fx = DMatrix::from_fn(nq, nq, |i, j| f.eval(x[i], x[j]));
        // moments[(k1, j)] = sum_i w_i eta_k1(x_i) f(x_i, x_j)
        let b = DMatrix::from_fn(p + 1, nq, |k, i| table[k][i]);
        let bf = &b * &fx;
        let mut eta_moments = vec![0.0; self.len()];
        for (pos, k) in self.set.indices().iter().enumerate() {
            let row = bf.row(k.k1 as usize);
            let t = &table[k.k2 as usize];
            eta_moments[pos] = self.scaling[pos] * (0..nq).map(|j| row[j] * t[j]).sum::<f64>();
        }
        Ok(self.factor.g_t.transpose_matvec(&eta_moments))
    }

    /// NOBS coefficient vector of a manufactured solution.
    pub fn manufactured_coefficients(&self, spec: &ManufacturedSpec) -> Result<Vec<f64>> {
        let mut c = vec![0.0; self.len()];
        if let Some(t) = spec.tail {
            for (pos, k) in self.set.indices().iter().enumerate() {
                c[pos] = t.scale * (-t.gamma * k.total() as f64).exp();
            }
        }
        for &(k1, k2, v) in &spec.modes {
            let k = MultiIndex::new(k1, k2)?;
            let pos = self.set.position(&k).ok_or_else(|| {
                config_error("problem.manufactured_u.modes", format!("({k1},{k2}) is outside block {} of K^{}", self.block, self.p_max))
            })?;
            c[pos] += v;
        }
        Ok(c)
    }
}

/// Distance profile of the dense inverse of (a section of) `A_phi`.
fn inverse_distance_profile(a: &SparseMatrix, set: &IndexSet) -> Result<Vec<(u32, f64)>> {
    let m = a.nrows().min(INVERSE_FIT_MAX_DIM);
    let dense = a.section(m).to_dense();
    let chol = nalgebra::Cholesky::new(dense).ok_or(Error::NotPositiveDefinite { position: 0, pivot: 0.0 })?;
    let inv = SparseMatrix::from_dense(&chol.inverse(), 0.0);
    let sub = IndexSet::from_indices(set.indices()[..m].iter().copied());
    Ok(distance_profile(&inv, &sub))
}

/// Minimal set with `sum_{k in set} w_k >= theta^2 sum_k w_k` for the weights
/// `w_k = r_k^2 / d_k`; ties broken by position. Zero residual gives the
/// empty set.
pub fn dorfler(r: &[(usize, f64)], d: &[f64], theta: f64) -> Vec<usize> {
    let mut w: Vec<(usize, f64)> = r.iter().map(|&(k, v)| (k, v * v / d[k])).filter(|p| p.1 > 0.0).collect();
    let total: f64 = w.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return Vec::new();
    }
    w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let target = theta * theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for (k, wk) in w {
        out.push(k);
        acc += wk;
        if acc >= target {
            break;
        }
    }
    out.sort_unstable();
    out
}

/// Minimal set `Lambda` with `sum_{k not in Lambda} w_k^2 d_k <= target^2`;
/// ties broken by position.
pub fn coarse(w: &[(usize, f64)], d: &[f64], target: f64) -> Vec<usize> {
    let mut e: Vec<(usize, f64)> = w.iter().map(|&(k, v)| (k, v * v * d[k])).filter(|p| p.1 > 0.0).collect();
    e.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let budget = target * target;
    // tail[n] = sum of e[n..]
    let mut tail = vec![0.0; e.len() + 1];
    for n in (0..e.len()).rev() {
        tail[n] = tail[n + 1] + e[n].1;
    }
    let keep = tail.iter().position(|&t| t <= budget).unwrap_or(e.len());
    let mut out: Vec<usize> = e[..keep].iter().map(|p| p.0).collect();
    out.sort_unstable();
    out
}

/// Galerkin solution on `support`: conjugate gradients on the section of
/// `A_phi`, to relative residual [`GAL_TOL`]. Returns a vector over the
/// whole block, zero off the support.
pub fn gal(disc: &Discretization, support: &[usize], fhat: &[f64]) -> Result<Vec<f64>> {
    let n = disc.len();
    let mut u = vec![0.0; n];
    if support.is_empty() {
        return Ok(u);
    }
    let mut local = vec![usize::MAX; n];
    for (i, &k) in support.iter().enumerate() {
        local[k] = i;
    }
    let m = support.len();
    let mut sub = DMatrix::zeros(m, m);
    for (i, &k) in support.iter().enumerate() {
        for (c, v) in disc.a_phi.row(k) {
            if local[c] != usize::MAX {
                sub[(i, local[c])] = v;
            }
        }
    }
    let b: Vec<f64> = support.iter().map(|&k| fhat[k]).collect();
    let res = conjugate_gradient(
        |x, y| {
            let v = &sub * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        },
        &b,
        None,
        GAL_TOL,
        10 * m + 100,
    )?;
    for (i, &k) in support.iter().enumerate() {
        u[k] = res.x[i];
    }
    Ok(u)
}

/// Output of [`f_res`].
#[derive(Debug, Clone)]
pub struct Residual {
    /// Dual coefficients over the block.
    pub values: Vec<f64>,
    /// Positions with nonzero coefficients.
    pub support: Vec<usize>,
    /// `||r_tilde||_{phi*}`.
    pub estimate: f64,
    /// Truncation radius used.
    pub radius: u32,
    /// Certified bound on `||r - r_tilde||_{phi*}`.
    pub bound: f64,
}

impl Residual {
    pub fn sparse(&self) -> Vec<(usize, f64)> {
        self.support.iter().map(|&k| (k, self.values[k])).collect()
    }
}

/// `r_tilde = f - A_J v` with `J` doubled from an initial guess until
/// `d_*^{-1/2} psi_A(J) ||v||_2 <= delta ||r_tilde||_{phi*} / (1 + safety)`,
/// with `psi_A(J) = C_A e^{-gamma J}`. At the block diameter the residual is
/// exact and the bound is zero.
pub fn f_res(disc: &Discretization, fhat: &[f64], v: &[f64], support: &[usize], delta: f64, reference: f64) -> Residual {
    let diameter = disc.set.l1_diameter();
    let c_a = disc.a_class.truncation_constant(diameter);
    let gamma = disc.a_class.gamma;
    let v_norm = support.iter().map(|&k| v[k] * v[k]).sum::<f64>().sqrt();
    let scale = c_a * v_norm / disc.d_bounds.0.sqrt();
    let psi = |j: u32| if j >= diameter { 0.0 } else { scale * (-gamma * j as f64).exp() };
    let mut j = if scale == 0.0 {
        0
    } else if reference > 0.0 {
        let want = delta / 4.0 * reference;
        ((scale / want).ln() / gamma).ceil().clamp(1.0, diameter as f64) as u32
    } else {
        diameter
    };
    loop {
        let values = disc.truncated_residual(fhat, v, support, j);
        let estimate = disc.dual_norm(&values);
        let bound = psi(j);
        if bound <= delta * estimate / (1.0 + FRES_SAFETY) || j >= diameter {
            let support = (0..values.len()).filter(|&k| values[k] != 0.0).collect();
            return Residual { values, support, estimate, radius: j, bound };
        }
        j = (j.max(1) * 2).min(diameter);
    }
}

/// `ENRICH(DORFLER(r, theta), J)` restricted to the block; any enriched
/// index beyond degree `p_max` is a typed failure.
pub fn e_dorfler(disc: &Discretization, r: &Residual, theta: f64, radius: u32) -> Result<(Vec<usize>, usize)> {
    let marked = dorfler(&r.sparse(), &disc.d_phi, theta);
    let idx: Vec<MultiIndex> = marked.iter().map(|&k| disc.set.get(k)).collect();
    let enriched: BTreeSet<MultiIndex> = enrich(idx.iter(), radius);
    let mut out = Vec::with_capacity(enriched.len());
    for k in enriched.into_iter().filter(|k| disc.block.contains(k)) {
        match disc.set.position(&k) {
            Some(pos) => out.push(pos),
            None => {
                return Err(Error::PmaxExhausted { index: k, degree: k.total(), p_max: disc.p_max });
            }
        }
    }
    out.sort_unstable();
    Ok((out, marked.len()))
}

/// Right-hand side of a run and, when known, the exact solution.
#[derive(Debug, Clone)]
pub struct Problem {
    pub fhat: Vec<f64>,
    pub exact: Option<Vec<f64>>,
}

impl Problem {
    pub fn from_spec(disc: &Discretization, spec: &ProblemSpec) -> Result<Self> {
        match (&spec.f, &spec.manufactured_u) {
            (_, Some(m)) => {
                let c = disc.manufactured_coefficients(m)?;
                Ok(Self { fhat: disc.a_phi.matvec(&c), exact: Some(c) })
            }
            (Some(f), None) => Ok(Self { fhat: disc.load_vector(f)?, exact: None }),
            (None, None) => Err(config_error("problem", "one of f or manufactured_u is required")),
        }
    }
}

/// Final iterate of a run.
#[derive(Debug, Clone)]
pub struct GalerkinState {
    /// `Lambda` as sorted positions in the block.
    pub support: Vec<usize>,
    /// NOBS coefficients over the block (zero off `Lambda`).
    pub coefficients: Vec<f64>,
    pub residual: Residual,
}

impl GalerkinState {
    pub fn indices(&self, disc: &Discretization) -> Vec<MultiIndex> {
        self.support.iter().map(|&k| disc.set.get(k)).collect()
    }

    pub fn estimate(&self) -> f64 {
        self.residual.estimate
    }
}

/// One pass of the loop.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    /// `|Lambda_n|`
    pub lambda_n: usize,
    /// `|DORFLER(r_n)|` before enrichment.
    pub dorfler: usize,
    /// `|dLambda_n|`
    pub marked: usize,
    /// `|Lambda_hat_{n+1}|`
    pub enriched: usize,
    /// `|Lambda_{n+1}|`
    pub lambda_next: usize,
    pub est_n: f64,
    pub est_next: f64,
    /// Energy error of `u_n` (or the estimator surrogate).
    pub error_n: f64,
    pub error_next: f64,
    /// `error_next / error_n`.
    pub ratio: Option<f64>,
    /// `"exact"` or `"estimator"`.
    pub error_kind: &'static str,
    pub coarse_tolerance: f64,
    pub fres_radius: u32,
    pub fres_bound: f64,
    /// Largest total degree in `Lambda_{n+1}`.
    pub max_degree: u32,
    pub contraction_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptiveTrace {
    pub constants: Constants,
    pub records: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

impl AdaptiveTrace {
    /// JSON lines: a constants record, then one record per iteration.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Constants(&'a Constants),
            Iteration(&'a IterationRecord),
        }
        serde_json::to_writer(&mut w, &Line::Constants(&self.constants))?;
        writeln!(w)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Iteration(r))?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "n", "lambda_n", "dorfler", "marked", "enriched", "lambda_next", "est_n", "est_next", "error_n",
            "error_next", "ratio", "error_kind", "fres_radius", "max_degree",
        ])?;
        for r in &self.records {
            out.write_record([
                r.n.to_string(),
                r.lambda_n.to_string(),
                r.dorfler.to_string(),
                r.marked.to_string(),
                r.enriched.to_string(),
                r.lambda_next.to_string(),
                format!("{:.6e}", r.est_n),
                format!("{:.6e}", r.est_next),
                format!("{:.6e}", r.error_n),
                format!("{:.6e}", r.error_next),
                r.ratio.map(|x| format!("{x:.6}")).unwrap_or_default(),
                r.error_kind.to_string(),
                r.fres_radius.to_string(),
                r.max_degree.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the adaptive loop.
pub fn fpc_adleg(disc: &Discretization, problem: &Problem, theta: f64, delta: f64, tol: f64) -> Result<(GalerkinState, AdaptiveTrace)> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta = {theta} outside (0,1)")));
    }
    if !(delta > 0.0 && delta < (1.0 - theta * theta).sqrt()) {
        return Err(Error::InvalidArgument(format!("delta = {delta} violates 0 < delta < sqrt(1 - theta^2)")));
    }
    if problem.fhat.len() != disc.len() {
        return Err(Error::DimensionMismatch { expected: disc.len(), got: problem.fhat.len() });
    }
    let constants = disc.constants(theta, delta, tol)?;
    let (beta_lo, beta_hi) = disc.beta;
    let alpha_lo = disc.alpha.0;
    let error_of = |u: &[f64], est: f64| match &problem.exact {
        Some(c) => {
            let e: Vec<f64> = c.iter().zip(u).map(|(a, b)| a - b).collect();
            disc.energy_norm(&e)
        }
        None => est,
    };
    let error_kind = if problem.exact.is_some() { "exact" } else { "estimator" };

    let n_dofs = disc.len();
    let mut support: Vec<usize> = Vec::new();
    let mut u = vec![0.0; n_dofs];
    let mut r = f_res(disc, &problem.fhat, &u, &support, delta, 0.0);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let stop = tol / (1.0 + delta);
    let mut n = 0usize;
    loop {
        if n >= MAX_ITERATIONS {
            return Err(Error::NoConvergence {
                method: "FPC-ADLEG",
                iterations: n,
                estimate: r.estimate,
            });
        }
        let est_n = r.estimate;
        let error_n = error_of(&u, est_n);
        let (marked, dorfler_size) = e_dorfler(disc, &r, theta, constants.j_theta)?;
        let mut hat: Vec<usize> = support.iter().chain(&marked).copied().collect::<BTreeSet<_>>().into_iter().collect();
        hat.sort_unstable();
        let u_hat = gal(disc, &hat, &problem.fhat)?;
        let eps = 3.0 * (beta_hi / alpha_lo) * (1.0 - theta * theta).sqrt() * est_n;
        let w: Vec<(usize, f64)> = hat.iter().map(|&k| (k, u_hat[k])).collect();
        let next = coarse(&w, &disc.d_phi, 2.0 * beta_lo * eps);
        let u_next = gal(disc, &next, &problem.fhat)?;
        let r_next = f_res(disc, &problem.fhat, &u_next, &next, delta, est_n);
        let error_next = error_of(&u_next, r_next.estimate);
        let ratio = (error_n > 0.0).then(|| error_next / error_n);
        let contraction_ok = !(constants.rho < 1.0 && problem.exact.is_some() && ratio.is_some_and(|q| q > constants.rho));
        if !contraction_ok {
            warnings.push(format!(
                "iteration {n}: error ratio {:.4} exceeds rho = {:.4}",
                ratio.unwrap_or(f64::NAN),
                constants.rho
            ));
        }
        records.push(IterationRecord {
            n,
            lambda_n: support.len(),
            dorfler: dorfler_size,
            marked: marked.len(),
            enriched: hat.len(),
            lambda_next: next.len(),
            est_n,
            est_next: r_next.estimate,
            error_n,
            error_next,
            ratio,
            error_kind,
            coarse_tolerance: eps,
            fres_radius: r_next.radius,
            fres_bound: r_next.bound,
            max_degree: next.iter().map(|&k| disc.set.get(k).total()).max().unwrap_or(0),
            contraction_ok,
        });
        support = next;
        u = u_next;
        r = r_next;
        n += 1;
        if r.estimate <= stop {
            break;
        }
    }
    Ok((
        GalerkinState { support, coefficients: u, residual: r },
        AdaptiveTrace { constants, records, warnings },
    ))
}

/// Builds the coefficient fields of a problem.
pub fn coefficient_fields(spec: &ProblemSpec) -> Result<(CoefficientField, CoefficientField)> {
    let nu = CoefficientField::new(spec.nu.clone())?;
    let sigma = match &spec.sigma {
        Some(s) if !s.is_zero() => CoefficientField::new(s.clone())?,
        _ => CoefficientField::constant(0.0),
    };
    Ok((nu, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::compress;
    use crate::orthonormalize::BlockBasis;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn laplacian(p: u32, tol_g: f64) -> Discretization {
        let basis = BlockBasis::build(p, ParityBlock::EvenEven).unwrap();
        let factor = compress(&basis, Strategy::Threshold, tol_g).unwrap();
        let (nu, sigma) = coefficient_fields(&ProblemSpec {
            nu: CoefficientSpec::Constant { value: 1.0 },
            sigma: None,
            f: None,
            manufactured_u: None,
        })
        .unwrap();
        Discretization::new(factor, &nu, &sigma).unwrap()
    }

    fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
        (0u32..(1 << n)).map(move |m| (0..n).filter(|i| m & (1 << i) != 0).collect())
    }

    #[test]
    fn dorfler_small_example() {
        let d = [1.0; 3];
        let r = [(0, 3.0), (1, 2.0), (2, 1.0)];
        assert_eq!(dorfler(&r, &d, 0.8), vec![0]);
        assert_eq!(dorfler(&r, &d, 0.85), vec![0, 1]);
        assert_eq!(dorfler(&r, &d, 0.999_999), vec![0, 1, 2]);
        assert!(dorfler(&[(0, 0.0)], &d, 0.5).is_empty());
        // ties go to the lower position
        assert_eq!(dorfler(&[(2, 1.0), (1, 1.0)], &d, 0.5), vec![1]);
    }

    proptest! {
        #[test]
        fn dorfler_is_minimal(vals in proptest::collection::vec(-3.0f64..3.0, 1..=12),
                              ds in proptest::collection::vec(0.5f64..1.5, 12),
                              theta in 0.05f64..0.99) {
            let r: Vec<(usize, f64)> = vals.iter().copied().enumerate().collect();
            let w = |s: &[usize]| s.iter().map(|&k| vals[k] * vals[k] / ds[k]).sum::<f64>();
            let total = w(&(0..vals.len()).collect::<Vec<_>>());
            let got = dorfler(&r, &ds, theta);
            prop_assert!(w(&got) >= theta * theta * total * (1.0 - 1e-12));
            let best = subsets(vals.len())
                .filter(|s| w(s) >= theta * theta * total)
                .map(|s| s.len())
                .min()
                .unwrap();
            prop_assert_eq!(got.len(), best);
        }

        #[test]
        fn coarse_is_minimal(vals in proptest::collection::vec(-3.0f64..3.0, 1..=12),
                             ds in proptest::collection::vec(0.5f64..1.5, 12),
                             frac in 0.0f64..1.0) {
            let w: Vec<(usize, f64)> = vals.iter().copied().enumerate().collect();
            let e = |s: &[usize]| (0..vals.len()).filter(|k| !s.contains(k)).map(|k| vals[k] * vals[k] * ds[k]).sum::<f64>();
            let total = e(&[]);
            let target = (frac * total).sqrt();
            let got = coarse(&w, &ds, target);
            prop_assert!(e(&got) <= target * target);
            for drop in 0..got.len() {
                let mut fewer = got.clone();
                let k = fewer.remove(drop);
                if vals[k] != 0.0 {
                    prop_assert!(e(&fewer) > target * target);
                }
            }
            let best = subsets(vals.len()).filter(|s| e(s) <= target * target).map(|s| s.len()).min().unwrap();
            prop_assert_eq!(got.len(), best);
        }
    }

    #[test]
    fn coarse_limits() {
        let w = [(0, 1.0), (3, -2.0)];
        let d = [1.0; 4];
        assert!(coarse(&w, &d, 10.0).is_empty());
        assert_eq!(coarse(&w, &d, 0.0), vec![0, 3]);
    }

    #[test]
    fn enrichment_radius_values() {
        let class = DecayClass { c: 10.0, gamma: 1.0 };
        // choose constants so that the right side equals 0.1
        let alpha = (1.0, 1.0);
        let theta = (1.0f64 - 0.01).sqrt();
        assert_eq!(enrichment_radius(class, theta, alpha, 1.0, 1.0), 5);
        assert_eq!(enrichment_radius(DecayClass { c: 0.05, gamma: 1.0 }, theta, alpha, 1.0, 1.0), 0);
        assert!((contraction_factor(0.6, 0.1, (1.0, 2.0), (1.0, 1.5)) - 9.0 * 2.0 * 1.5 * 0.8 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let good = r#"{"theta":0.9,"delta":0.1,"tol":1e-4,"tol_G":0.3,"p_max":20,
            "problem":{"nu":{"type":"constant","value":1.0},"manufactured_u":{"modes":[[2,2,1.0]]}}}"#;
        let cfg = SolverConfig::from_json(good).unwrap();
        assert_eq!(cfg.parity_block, ParityBlock::EvenEven);
        assert_eq!(cfg.tol_g, 0.3);
        let bad_delta = good.replace("\"delta\":0.1", "\"delta\":0.5");
        assert!(matches!(SolverConfig::from_json(&bad_delta), Err(Error::Config { field, .. }) if field == "delta"));
        let bad_mode = good.replace("[[2,2,1.0]]", "[[2,3,1.0]]");
        assert!(matches!(SolverConfig::from_json(&bad_mode), Err(Error::Config { .. })));
        let unknown = good.replace("\"tol\"", "\"tolerance\"");
        assert!(SolverConfig::from_json(&unknown).is_err());
        let both = good.replace("\"manufactured_u\"", "\"f\":{\"type\":\"constant\",\"value\":1.0},\"manufactured_u\"");
        assert!(matches!(SolverConfig::from_json(&both), Err(Error::Config { field, .. }) if field == "problem"));
    }

    #[test]
    fn gal_recovers_single_mode_and_is_optimal() {
        let disc = laplacian(16, 0.3);
        assert!(gal(&disc, &[], &vec![1.0; disc.len()]).unwrap().iter().all(|x| *x == 0.0));
        let mut e = vec![0.0; disc.len()];
        e[0] = 1.0;
        let fhat = disc.a_phi.matvec(&e);
        let u = gal(&disc, &[0], &fhat).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12);
        // best approximation in the energy norm on nested sets
        let c: Vec<f64> = (0..disc.len()).map(|k| 1.0 / (1.0 + k as f64).powi(2)).collect();
        let fhat = disc.a_phi.matvec(&c);
        let mut prev = f64::INFINITY;
        for m in [1, 3, 6, 10, disc.len()] {
            let s: Vec<usize> = (0..m).collect();
            let u = gal(&disc, &s, &fhat).unwrap();
            let err: Vec<f64> = c.iter().zip(&u).map(|(a, b)| a - b).collect();
            let en = disc.energy_norm(&err);
            assert!(en <= prev * (1.0 + 1e-9), "{en} > {prev}");
            prev = en;
            // Galerkin orthogonality
            let r = disc.truncated_residual(&fhat, &u, &s, u32::MAX);
            let rmax = s.iter().map(|&k| r[k].abs()).fold(0.0, f64::max);
            assert!(rmax <= 1e-8 * fhat.iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn f_res_meets_relative_accuracy() {
        let disc = laplacian(24, 0.3);
        let c: Vec<f64> = (0..disc.len()).map(|k| (-0.4 * disc.set.get(k).total() as f64).exp()).collect();
        let fhat = disc.a_phi.matvec(&c);
        let support: Vec<usize> = (0..10).collect();
        let u = gal(&disc, &support, &fhat).unwrap();
        let delta = 0.1;
        let r = f_res(&disc, &fhat, &u, &support, delta, 1.0);
        let exact = disc.truncated_residual(&fhat, &u, &support, u32::MAX);
        let diff: Vec<f64> = exact.iter().zip(&r.values).map(|(a, b)| a - b).collect();
        assert!(disc.dual_norm(&diff) <= delta * r.estimate);
        assert!(r.bound <= delta * r.estimate);
    }

    #[test]
    fn zero_load_terminates_immediately() {
        let disc = laplacian(12, 0.3);
        let problem = Problem { fhat: vec![0.0; disc.len()], exact: Some(vec![0.0; disc.len()]) };
        let (state, trace) = fpc_adleg(&disc, &problem, 0.9, 0.1, 1e-8).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].n, 0);
        assert!(state.support.is_empty() && state.coefficients.iter().all(|x| *x == 0.0));
        assert!(state.estimate() == 0.0);
    }

    #[test]
    fn manufactured_run_converges_with_bracketed_estimator() {
        let disc = laplacian(40, 0.1);
        let spec = ManufacturedSpec {
            modes: vec![(2, 2, 1.0), (4, 2, -0.5), (2, 4, 0.5), (6, 6, 0.2)],
            tail: Some(TailSpec { scale: 0.5, gamma: 1.2 }),
        };
        let problem = Problem::from_spec(
            &disc,
            &ProblemSpec {
                nu: CoefficientSpec::Constant { value: 1.0 },
                sigma: None,
                f: None,
                manufactured_u: Some(spec),
            },
        )
        .unwrap();
        let (theta, delta, tol) = (0.999, 0.02, 1e-6);
        let (state, trace) = fpc_adleg(&disc, &problem, theta, delta, tol).unwrap();
        let k = trace.constants;
        assert!(state.estimate() <= tol / (1.0 + delta));
        for r in &trace.records {
            let lo = (1.0 - delta) * k.beta_lower / k.alpha_upper * r.est_next;
            let hi = (1.0 + delta) * k.beta_upper / k.alpha_lower * r.est_next;
            assert!(lo <= r.error_next && r.error_next <= hi, "{lo} {} {hi}", r.error_next);
        }
        assert!(trace.warnings.is_empty(), "{:?}", trace.warnings);
    }
}
