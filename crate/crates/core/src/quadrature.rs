//! Gauss-Hermite quadrature for expectations against a standard normal.
//!
//! Rules are computed once per node count with the Golub-Welsch algorithm
//! (eigenvalues of the symmetric tridiagonal Jacobi matrix, weights from the
//! first eigenvector components) and cached process-wide. All integrands in
//! this crate are smooth log-sum-exp expressions, so a short ladder of
//! near-doubling node counts either converges quickly or reports failure.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

/// Node-count ladder used by [`expect_normal`]: starts at 61 nodes and
/// roughly doubles until two consecutive rules agree.
pub const NODE_LADDER: [usize; 8] = [61, 127, 255, 511, 1023, 2047, 4095, 8191];

/// Absolute agreement required between consecutive ladder rungs.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature not converged: last delta {delta:e} above tolerance {tol:e} at {nodes} nodes")]
    NotConverged { delta: f64, tol: f64, nodes: usize },
}

/// Physicists' Gauss-Hermite rule: integrates f against exp(-x^2) dx.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// E[g(Z)] for Z ~ N(0,1): (1/sqrt(pi)) sum w_i g(sqrt(2) x_i).
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(std::f64::consts::SQRT_2 * x);
        }
        acc * inv_sqrt_pi
    }
}

fn cache() -> &'static RwLock<HashMap<usize, Arc<GaussHermite>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Fetch (building and caching on first use) the n-point Gauss-Hermite rule.
pub fn gauss_hermite(n: usize) -> Arc<GaussHermite> {
    assert!(n >= 1, "need at least one quadrature node");
    if let Some(rule) = cache().read().unwrap().get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(build_rule(n));
    cache().write().unwrap().entry(n).or_insert(rule.clone());
    rule
}

/// Adaptive expectation of g against N(0,1): walks [`NODE_LADDER`] until two
/// consecutive rules agree within `tol` in absolute terms, relaxed to
/// relative agreement once the result magnitude exceeds one (an absolute
/// 1e-10 on a quantity of size 1e3 would sit below f64 resolution).
pub fn expect_normal<F: FnMut(f64) -> f64>(
    mut g: F,
    tol: f64,
) -> Result<f64, QuadratureError> {
    let mut prev = gauss_hermite(NODE_LADDER[0]).expect(&mut g);
    let mut delta = f64::INFINITY;
    for &n in &NODE_LADDER[1..] {
        let cur = gauss_hermite(n).expect(&mut g);
        delta = (cur - prev).abs();
        if delta <= tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(QuadratureError::NotConverged {
        delta,
        tol,
        nodes: *NODE_LADDER.last().unwrap(),
    })
}

/// Build the n-point rule via Golub-Welsch.
///
/// Jacobi matrix for physicists' Hermite: zero diagonal, off-diagonal
/// sqrt((i+1)/2). Nodes are its eigenvalues; weight_i = sqrt(pi) * q_i^2
/// where q_i is the first component of the i-th normalized eigenvector.
fn build_rule(n: usize) -> GaussHermite {
    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n]; // off[i] couples i and i+1; off[n-1] unused
    for i in 0..n.saturating_sub(1) {
        off[i] = (((i + 1) as f64) / 2.0).sqrt();
    }
    // First-row accumulator of the eigenvector matrix.
    let mut q0 = vec![0.0f64; n];
    q0[0] = 1.0;

    tridiag_ql(&mut diag, &mut off, &mut q0);

    let mu0 = std::f64::consts::PI.sqrt();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
    let mut nodes: Vec<f64> = idx.iter().map(|&i| diag[i]).collect();
    let mut weights: Vec<f64> = idx.iter().map(|&i| mu0 * q0[i] * q0[i]).collect();

    // Enforce the exact symmetry of the Hermite rule; this also pins the
    // middle node of an odd rule to 0.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussHermite { nodes, weights }
}

/// Implicit-shift QL iteration for a symmetric tridiagonal matrix,
/// accumulating rotations into a single row `q0` of the eigenvector matrix.
fn tridiag_ql(d: &mut [f64], e: &mut [f64], q0: &mut [f64]) {
    let n = d.len();
    if n <= 1 {
        return;
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find a small off-diagonal element to split the problem.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 50, "tridiagonal QL failed to converge");

            // Wilkinson-style shift from the leading 2x2 block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let sgn = if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + sgn);
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflowed = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // Rotate the tracked eigenvector row.
                f = q0[i + 1];
                q0[i + 1] = s * q0[i] + c * f;
                q0[i] = c * q0[i] - s * f;
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}
