//! Best N-term approximation, Gevrey sparsity classes and the cardinality
//! bounds derived from them.
//!
//! A function `v` belongs to the Gevrey class with parameters `(gamma, q)`
//! when `E_N(v) exp(gamma (N/2)^{q/2})` stays bounded; the supremum is the
//! class (quasi-)norm.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Grid of exponents `q` tried by [`fit_gevrey`]: `0.1, 0.2, ..., 2.0`.
pub fn q_grid() -> impl Iterator<Item = f64> {
    (1..=20).map(|i| i as f64 / 10.0)
}

/// `E_N` for `N = 0..=|supp v|` in the weighted norm `sum v_k^2 d_k`.
pub fn best_n_term_curve(v: &[f64], d: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), d.len());
    let mut w: Vec<f64> = v
        .iter()
        .zip(d)
        .filter(|(x, _)| **x != 0.0)
        .map(|(x, dk)| x * x * dk)
        .collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let mut curve = vec![0.0; w.len() + 1];
    let mut acc = 0.0;
    // suffix sums from the smallest term up keep round-off low
    for n in (0..w.len()).rev() {
        acc += w[n];
        curve[n] = acc.sqrt();
    }
    curve
}

/// Smallest `N` with `E_N <= eps`.
pub fn minimal_cardinality(curve: &[f64], eps: f64) -> usize {
    curve.iter().position(|&e| e <= eps).unwrap_or(curve.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct GevreyFit {
    pub gamma: f64,
    pub q: f64,
    /// `sup_N E_N exp(gamma (N/2)^{q/2})` over the fitted points; a lower
    /// bound for the true class norm.
    pub class_norm: f64,
    /// Residual sum of squares of the log-linear fit at the chosen `q`.
    pub rss: f64,
    /// Number of curve points used.
    pub points: usize,
}

/// Least-squares fit of `log E_N = a - gamma (N/2)^{q/2}` for each `q` on the
/// grid; the `q` with the smallest residual wins. Points at the round-off
/// level (`E_N <= 1e-14 E_0`) are ignored.
pub fn fit_gevrey(curve: &[f64]) -> Result<GevreyFit> {
    let e0 = curve.first().copied().unwrap_or(0.0);
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 1e-14 * e0 && e > 0.0)
        .map(|(n, &e)| (n as f64, e.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::FitFailure(format!(
            "need at least 5 positive curve values, got {}",
            pts.len()
        )));
    }
    let mut best: Option<GevreyFit> = None;
    for q in q_grid() {
        let xs: Vec<f64> = pts.iter().map(|p| (p.0 / 2.0).powf(q / 2.0)).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&pts).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
        let gamma = -sxy / sxx;
        if !(gamma > 1e-12) || !gamma.is_finite() {
            continue;
        }
        let a = my + gamma * mx;
        let rss: f64 = xs.iter().zip(&pts).map(|(x, p)| (p.1 - (a - gamma * x)).powi(2)).sum();
        if best.as_ref().is_none_or(|b| rss < b.rss) {
            let class_norm = xs.iter().zip(&pts).map(|(x, p)| (p.1 + gamma * x).exp()).fold(0.0, f64::max);
            best = Some(GevreyFit {
                gamma,
                q,
                class_norm,
                rss,
                points: pts.len(),
            });
        }
    }
    best.ok_or_else(|| Error::FitFailure("curve does not decay".into()))
}

/// `ceil((2 / gamma^{2/q}) log(class_norm / eps)^{2/q} + 1)`, or 1 when
/// `eps >= class_norm`.
pub fn cardinality_bound(gamma: f64, q: f64, class_norm: f64, eps: f64) -> Result<usize> {
    if !(gamma > 0.0 && q > 0.0 && eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cardinality bound needs positive gamma, q, eps (got {gamma}, {q}, {eps})"
        )));
    }
    if eps >= class_norm {
        return Ok(1);
    }
    let e = 2.0 / q;
    let v = 2.0 / gamma.powf(e) * (class_norm / eps).ln().powf(e) + 1.0;
    Ok((v - 1e-12).ceil() as usize)
}

/// `zeta(q) = ((1 + q) / (8 2^q))^{q / (2 (1 + q))}`.
pub fn zeta(q: f64) -> f64 {
    ((1.0 + q) / (8.0 * 2f64.powf(q))).powf(q / (2.0 * (1.0 + q)))
}

/// Class of the residual `f - A v` given the class `(gamma, q)` of the
/// solution: for a banded operator with half-bandwidth `m`,
/// `(gamma / (2m + 1)^{q/2}, q)`; for an operator in the exponential class
/// with rate `gamma_l`, `(zeta(q) gamma, q / (1 + q))`, which requires
/// `gamma < 2^{q/2} gamma_l`.
pub fn residual_class(gamma: f64, q: f64, banded: Option<u32>, gamma_l: f64) -> Result<(f64, f64)> {
    match banded {
        Some(m) => Ok((gamma / ((2 * m + 1) as f64).powf(q / 2.0), q)),
        None => {
            if !(gamma < 2f64.powf(q / 2.0) * gamma_l) {
                return Err(Error::InvalidArgument(format!(
                    "residual class needs gamma < 2^(q/2) gamma_L (gamma = {gamma}, q = {q}, gamma_L = {gamma_l})"
                )));
            }
            Ok((zeta(q) * gamma, q / (1.0 + q)))
        }
    }
}

/// Smallest `C >= 1` such that
/// `|supp u_n| <= (2 / gamma^{2/q}) (log(norm / err_n) + log C)^{2/q} + 1`
/// for every `(|supp u_n|, err_n)` pair.
pub fn fitted_cardinality_constant(fit: &GevreyFit, pairs: &[(usize, f64)]) -> f64 {
    let mut log_c: f64 = 0.0;
    for &(card, err) in pairs {
        if card <= 1 || !(err > 0.0) {
            continue;
        }
        let need = ((card as f64 - 1.0) * fit.gamma.powf(2.0 / fit.q) / 2.0).powf(fit.q / 2.0);
        log_c = log_c.max(need - (fit.class_norm / err).ln());
    }
    log_c.exp()
}

/// Right-hand side of the iteration-count bound for a given constant.
pub fn cardinality_envelope(fit: &GevreyFit, err: f64, c: f64) -> f64 {
    let arg = ((fit.class_norm / err).ln() + c.ln()).max(0.0);
    2.0 / fit.gamma.powf(2.0 / fit.q) * arg.powf(2.0 / fit.q) + 1.0
}

/// CSV with columns `N,E_N`.
pub fn write_curve_csv<W: Write>(curve: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["N", "E_N"])?;
    for (n, e) in curve.iter().enumerate() {
        out.write_record([n.to_string(), format!("{e:.10e}")])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exhaustive_best(v: &[f64], d: &[f64], n: usize) -> f64 {
        let len = v.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << len) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let tail: f64 = (0..len).filter(|i| mask & (1 << i) == 0).map(|i| v[i] * v[i] * d[i]).sum();
            best = best.min(tail.sqrt());
        }
        best
    }

    #[test]
    fn curve_basics() {
        let v = [3.0, 0.0, -1.0];
        let d = [1.0, 1.0, 4.0];
        let c = best_n_term_curve(&v, &d);
        assert_eq!(c.len(), 3);
        assert!((c[0] - 13f64.sqrt()).abs() < 1e-15);
        assert!((c[1] - 2.0).abs() < 1e-15);
        assert_eq!(c[2], 0.0);
        assert_eq!(best_n_term_curve(&[2.0], &[1.0]), vec![2.0, 0.0]);
        assert_eq!(minimal_cardinality(&c, 2.5), 1);
    }

    proptest! {
        #[test]
        fn curve_matches_exhaustive_search(
            v in proptest::collection::vec(-5.0f64..5.0, 1..=10),
            dseed in proptest::collection::vec(0.5f64..1.5, 10),
        ) {
            let d = &dseed[..v.len()];
            let c = best_n_term_curve(&v, d);
            prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(*c.last().unwrap(), 0.0);
            for (n, e) in c.iter().enumerate() {
                let ex = exhaustive_best(&v, d, n);
                prop_assert!((e - ex).abs() <= 1e-12 * (1.0 + ex));
            }
        }
    }

    #[test]
    fn gevrey_fit_recovers_parameters() {
        let curve: Vec<f64> = (0..40).map(|n| (-(n as f64) / 2.0).exp()).collect();
        let fit = fit_gevrey(&curve).unwrap();
        assert!((fit.q - 2.0).abs() < 0.2 && (fit.gamma - 1.0).abs() < 0.1, "{fit:?}");
        let curve: Vec<f64> = (0..200).map(|n| 3.0 * (-0.7 * (n as f64 / 2.0).sqrt()).exp()).collect();
        let fit = fit_gevrey(&curve).unwrap();
        assert!((fit.q - 1.0).abs() < 1e-9 && (fit.gamma - 0.7).abs() < 1e-9);
        assert!((fit.class_norm - 3.0).abs() < 1e-9);
        assert!(fit_gevrey(&[1.0; 10]).is_err());
        assert!(fit_gevrey(&[1.0, 0.5, 0.1]).is_err());
    }

    #[test]
    fn cardinality_bound_values() {
        assert_eq!(cardinality_bound(1.0, 2.0, 5.0, 5.0).unwrap(), 1);
        assert_eq!(cardinality_bound(1.0, 2.0, std::f64::consts::E, 1.0).unwrap(), 3);
        // the bound dominates the minimal N on synthetic class data
        let curve: Vec<f64> = (0..60).map(|n| 2.0 * (-0.8 * (n as f64 / 2.0).powf(0.75)).exp()).collect();
        let fit = fit_gevrey(&curve).unwrap();
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let n = minimal_cardinality(&curve, eps);
            assert!(n <= cardinality_bound(fit.gamma, fit.q, fit.class_norm, eps).unwrap());
        }
    }

    #[test]
    fn residual_class_transfer() {
        let (g, q) = residual_class(0.9, 2.0, Some(1), 1.0).unwrap();
        assert!((g - 0.3).abs() < 1e-15 && q == 2.0);
        assert!((zeta(1.0) - 0.594604).abs() < 1e-6);
        let (g, q) = residual_class(0.5, 1.0, None, 1.0).unwrap();
        assert!((q - 0.5).abs() < 1e-15 && (g - 0.5 * zeta(1.0)).abs() < 1e-15);
        assert!(residual_class(3.0, 1.0, None, 1.0).is_err());
        for qq in q_grid() {
            let (gb, qb) = residual_class(0.5, qq, None, 1.0).unwrap();
            assert!(gb <= 0.5 && qb <= qq);
        }
    }

    #[test]
    fn fitted_constant_is_minimal() {
        let fit = GevreyFit { gamma: 1.0, q: 1.0, class_norm: 1.0, rss: 0.0, points: 10 };
        let pairs = [(5usize, 1e-2), (9, 1e-3), (20, 1e-4)];
        let c = fitted_cardinality_constant(&fit, &pairs);
        for &(n, e) in &pairs {
            assert!(n as f64 <= cardinality_envelope(&fit, e, c) * (1.0 + 1e-12));
        }
        let tight = pairs.iter().any(|&(n, e)| (n as f64 - cardinality_envelope(&fit, e, c)).abs() < 1e-9);
        assert!(tight || c == 1.0);
    }
}
