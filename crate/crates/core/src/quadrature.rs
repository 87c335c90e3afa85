//! Gauss-Hermite and Gauss-Legendre rules.
//!
//! Hermite nodes are seeded from the Jacobi matrix eigenvalues and polished
//! by Newton iteration on the orthonormal three-term recurrence.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

const NEWTON_EPS: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 200;

/// A one-dimensional quadrature rule `∫ f(x) dx ≈ Σ w_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Hermite nodes `t_i` and weights `w_i` for `∫ e^{-t²} g(t) dt`.
///
/// Returns nodes in ascending order.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0, "gauss_hermite needs at least one node");
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
        return rule.clone();
    }
    let rule = compute_gauss_hermite(n);
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(n, rule.clone());
    rule
}

fn compute_gauss_hermite(n: usize) -> Rule {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    // Golub-Welsch seeds: eigenvalues of the Jacobi matrix, off-diagonal sqrt(k/2)
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut seeds: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().cloned().collect();
    seeds.sort_by(f64::total_cmp);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    // polish the non-negative half by Newton and mirror it
    let half: Vec<f64> = seeds[n / 2..].to_vec();
    let mut upper = Vec::with_capacity(half.len());
    for mut z in half {
        let mut pp = 1.0;
        for _ in 0..NEWTON_MAX_ITER {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= NEWTON_EPS * z.abs().max(1.0) {
                break;
            }
        }
        upper.push((z.abs(), 2.0 / (pp * pp)));
    }
    if n % 2 == 1 {
        upper[0].0 = 0.0;
    }
    for &(z, w) in upper.iter().rev() {
        if n % 2 == 1 && z == 0.0 {
            continue;
        }
        nodes.push(-z);
        weights.push(w);
    }
    for &(z, w) in &upper {
        nodes.push(z);
        weights.push(w);
    }
    Rule { nodes, weights }
}

/// Gauss-Hermite rule rescaled for plain integrals `∫ f(x) dx` whose
/// integrand carries a Gaussian envelope of width ~`scale`.
///
/// Node `x_i = scale·t_i`, weight `scale·w_i·e^{t_i²}`, so polynomial ×
/// `exp(-x²/scale²)` integrands are integrated exactly up to degree `2n-1`.
pub fn scaled_hermite(n: usize, scale: f64) -> Rule {
    let base = gauss_hermite(n);
    let nodes = base.nodes.iter().map(|t| scale * t).collect();
    let weights = base
        .nodes
        .iter()
        .zip(&base.weights)
        .map(|(t, w)| scale * (w.ln() + t * t).exp())
        .collect();
    Rule { nodes, weights }
}

/// Gauss-Legendre rule on `[a, b]`, nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= NEWTON_EPS {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
            // recompute derivative at the exact centre
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
        }
        x[i] = xm - xl * z;
        x[n - 1 - i] = xm + xl * z;
        w[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    Rule { nodes: x, weights: w }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for n in [1, 2, 5, 20, 58, 116, 200, 300] {
            let r = gauss_hermite(n);
            let m0: f64 = r.weights.iter().sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-13, "n={n} m0={m0}");
            if n >= 2 {
                // ∫ t² e^{-t²} = √π/2
                let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(t, w)| w * t * t).sum();
                assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12, "n={n}");
            }
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn scaled_hermite_integrates_gaussian() {
        let r = scaled_hermite(30, 2.5);
        let v = r.integrate(|x| (-(x * x) / 4.0).exp());
        assert!((v - (4.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn legendre_polynomial_exactness() {
        let r = gauss_legendre(7, -1.0, 3.0);
        // exact for degree 13
        let v = r.integrate(|x| x.powi(13) - 2.0 * x.powi(4));
        let exact = (3f64.powi(14) - 1.0) / 14.0 - 2.0 * (3f64.powi(5) + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
        let one = gauss_legendre(1, -0.5, 0.5);
        assert_eq!(one.nodes, vec![0.0]);
        assert!((one.weights[0] - 1.0).abs() < 1e-15);
        let r33 = gauss_legendre(33, 0.0, PI);
        assert!((r33.integrate(f64::sin) - 2.0).abs() < 1e-14);
    }
}
