//! Gauss-Legendre rules on `[-1, 1]`.
//!
//! Nodes come from the Golub-Welsch eigenproblem for the Legendre Jacobi
//! matrix and are then polished with one or two Newton steps on `L_n`, which
//! brings both nodes and weights to full double precision for the orders used
//! here (a few hundred at most). Rules are cached per order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::legendre1d::legendre_and_derivative;

/// An `n`-point Gauss-Legendre rule, exact for polynomials of degree `2n - 1`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule from scratch (bypassing the cache).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![2.0],
            };
        }
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
            jacobi[(k - 1, k)] = beta;
            jacobi[(k, k - 1)] = beta;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], 2.0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (x0, _) in pairs {
            let mut x = x0;
            for _ in 0..2 {
                let (l, dl) = legendre_and_derivative(n, x);
                let step = l / dl;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dl) = legendre_and_derivative(n, x);
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dl * dl));
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Tensor-product rule on `[-1, 1]^2`.
    pub fn integrate_2d<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let mut total = 0.0;
        for (&x1, &w1) in self.nodes.iter().zip(&self.weights) {
            let mut row = 0.0;
            for (&x2, &w2) in self.nodes.iter().zip(&self.weights) {
                row += w2 * f(x1, x2);
            }
            total += w1 * row;
        }
        total
    }
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<GaussLegendre>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached `n`-point Gauss-Legendre rule.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    if let Some(rule) = cache().lock().expect("quadrature cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    // Built outside the lock; a concurrent duplicate build is harmless.
    let rule = Arc::new(GaussLegendre::new(n));
    cache()
        .lock()
        .expect("quadrature cache poisoned")
        .entry(n)
        .or_insert(rule)
        .clone()
}
