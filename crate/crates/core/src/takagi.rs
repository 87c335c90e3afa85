//! Takagi factorization `K = U diag(Λ_k e^{iθ_k}) Uᵀ` of complex symmetric
//! matrices.
//!
//! Each block of `K` that is decoupled from the rest (for instance the
//! parity classes of a centred pump) is factorized separately through the
//! real symmetric embedding
//!
//! ```text
//! M = [ Re K   Im K ]
//!     [ Im K  -Re K ]
//! ```
//!
//! whose eigenpairs come in `±Λ` pairs; an eigenvector `[a; b]` with
//! eigenvalue `Λ > 0` gives a Takagi vector `u = a + ib` with
//! `K ū = Λ u`. Unlike pairing left and right singular vectors, this stays
//! well defined when singular values are degenerate.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::Complex;

/// Relative asymmetry `‖K - Kᵀ‖/‖K‖` accepted before symmetrizing.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Entries below this fraction of `max|K|` do not couple blocks.
const BLOCK_TOLERANCE: f64 = 1e-13;
/// Singular values below this fraction of the largest are treated as zero.
const NULL_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Takagi {
    /// Nonnegative, descending.
    pub values: Vec<f64>,
    /// Phase of each term, in `(-π, π]`.
    pub phases: Vec<f64>,
    /// Unitary; column `k` is the k-th vector, its largest entry real positive.
    pub vectors: DMatrix<Complex>,
}

impl Takagi {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U diag(Λ e^{iθ}) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<Complex> {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let f = Complex::from_polar(self.values[k], self.phases[k]);
            for i in 0..n {
                scaled[(i, k)] *= f;
            }
        }
        scaled * self.vectors.transpose()
    }

    /// Reorders terms: descending value, and inside runs of values within
    /// `tie_tolerance·Λ_max` by ascending `key(column)`.
    pub fn sort_with_ties<K: Ord, F: Fn(usize, &[Complex]) -> K>(&mut self, tie_tolerance: f64, key: F) {
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]));
        let scale = self.values.iter().cloned().fold(0.0, f64::max);
        let cols: Vec<Vec<Complex>> = (0..n)
            .map(|k| self.vectors.column(k).iter().cloned().collect())
            .collect();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n
                && self.values[order[end - 1]] - self.values[order[end]] <= tie_tolerance * scale
            {
                end += 1;
            }
            order[start..end].sort_by_key(|&k| key(k, &cols[k]));
            start = end;
        }
        let values = order.iter().map(|&k| self.values[k]).collect();
        let phases = order.iter().map(|&k| self.phases[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| cols[order[j]][i]);
        *self = Takagi {
            values,
            phases,
            vectors,
        };
    }
}

/// Relative asymmetry `‖K - Kᵀ‖_F / ‖K‖_F` (0 for the zero matrix).
pub fn asymmetry(k: &DMatrix<Complex>) -> f64 {
    let norm = k.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (k - k.transpose()).norm() / norm
}

/// Takagi factorization of a complex symmetric matrix.
///
/// Terms are sorted by descending `Λ`; exact ties keep the order of their
/// largest entry's index.
pub fn takagi(k: &DMatrix<Complex>) -> Result<Takagi> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(crate::error::invalid("matrix", "must be square"));
    }
    let asym = asymmetry(k);
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(crate::error::invalid("matrix", "has non-finite entries"));
    }
    let sym = (k + k.transpose()) * Complex::new(0.5, 0.0);

    let mut values = vec![0.0; n];
    let mut vectors = DMatrix::<Complex>::zeros(n, n);
    let mut slot = 0;
    let max_entry = sym.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for block in blocks(&sym, max_entry * BLOCK_TOLERANCE) {
        let (vals, vecs) = factor_block(&sym, &block);
        for (j, val) in vals.into_iter().enumerate() {
            values[slot] = val;
            for (bi, &gi) in block.iter().enumerate() {
                vectors[(gi, slot)] = vecs[(bi, j)];
            }
            slot += 1;
        }
    }

    let mut phases = vec![0.0; n];
    for (col, phase) in phases.iter_mut().enumerate() {
        let pivot = dominant_index(vectors.column(col).iter());
        let phi = vectors[(pivot, col)].arg();
        let rot = Complex::from_polar(1.0, -phi);
        for i in 0..n {
            vectors[(i, col)] *= rot;
        }
        vectors[(pivot, col)] = Complex::new(vectors[(pivot, col)].norm(), 0.0);
        *phase = wrap_phase(2.0 * phi);
    }

    let mut out = Takagi {
        values,
        phases,
        vectors,
    };
    out.sort_with_ties(1e-12, |_, col| dominant_index(col.iter()));
    Ok(out)
}

/// Index of the largest-modulus entry; near-ties go to the lowest index.
pub fn dominant_index<'a, I: Iterator<Item = &'a Complex>>(col: I) -> usize {
    let mags: Vec<f64> = col.map(|z| z.norm()).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    mags.iter().position(|&m| m >= max * (1.0 - 1e-12)).unwrap_or(0)
}

fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = p.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Connected components of the coupling graph, each sorted ascending.
fn blocks(k: &DMatrix<Complex>, threshold: f64) -> Vec<Vec<usize>> {
    let n = k.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if k[(i, j)].norm() > threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
}

fn factor_block(k: &DMatrix<Complex>, idx: &[usize]) -> (Vec<f64>, DMatrix<Complex>) {
    let b = idx.len();
    let mut m = DMatrix::<f64>::zeros(2 * b, 2 * b);
    for (i, &gi) in idx.iter().enumerate() {
        for (j, &gj) in idx.iter().enumerate() {
            let z = k[(gi, gj)];
            m[(i, j)] = z.re;
            m[(i, j + b)] = z.im;
            m[(i + b, j)] = z.im;
            m[(i + b, j + b)] = -z.re;
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..2 * b).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut vals = Vec::with_capacity(b);
    let mut vecs: Vec<Vec<Complex>> = Vec::with_capacity(b);
    for &e in order.iter().take(b) {
        let lambda = eig.eigenvalues[e];
        if lambda <= NULL_TOLERANCE * top {
            break;
        }
        let v = eig.eigenvectors.column(e);
        vecs.push((0..b).map(|i| Complex::new(v[i], v[i + b])).collect());
        vals.push(lambda);
    }
    gram_schmidt(&mut vecs);
    // null space: orthogonal complement of the kept vectors
    let mut unit = 0;
    while vecs.len() < b && unit < b {
        let mut cand = vec![Complex::new(0.0, 0.0); b];
        cand[unit] = Complex::new(1.0, 0.0);
        unit += 1;
        for _ in 0..2 {
            for v in &vecs {
                let proj: Complex = v.iter().zip(&cand).map(|(a, c)| a.conj() * c).sum();
                for (c, a) in cand.iter_mut().zip(v) {
                    *c -= proj * a;
                }
            }
        }
        let norm = cand.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            for c in cand.iter_mut() {
                *c /= norm;
            }
            vecs.push(cand);
            vals.push(0.0);
        }
    }
    let mat = DMatrix::from_fn(b, b, |i, j| vecs[j][i]);
    (vals, mat)
}

/// Modified Gram-Schmidt, in order.
fn gram_schmidt(vecs: &mut [Vec<Complex>]) {
    for j in 0..vecs.len() {
        let (done, rest) = vecs.split_at_mut(j);
        let v = &mut rest[0];
        for u in done.iter() {
            let proj: Complex = u.iter().zip(v.iter()).map(|(a, c)| a.conj() * c).sum();
            for (c, a) in v.iter_mut().zip(u) {
                *c -= proj * a;
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in v.iter_mut() {
            *c /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn rel_err(a: &DMatrix<Complex>, b: &DMatrix<Complex>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn diagonal_cases() {
        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]));
        let t = takagi(&k).unwrap();
        assert_eq!(t.values, vec![2.0, 1.0]);
        assert_eq!(t.phases, vec![0.0, 0.0]);
        assert!((&t.vectors - DMatrix::<Complex>::identity(2, 2)).norm() < 1e-15);

        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        let t = takagi(&k).unwrap();
        assert_eq!(t.values, vec![1.0, 1.0]);
        assert!(t.phases[0].abs() < 1e-15);
        assert!((t.phases[1] - PI).abs() < 1e-15);
        assert!(rel_err(&t.reconstruct(), &k) < 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let k = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(takagi(&k), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn rank_deficient_matrix() {
        // u uᵀ with complex u has one nonzero value
        let u = [c(0.6, 0.2), c(-0.3, 0.5), c(0.1, -0.4)];
        let k = DMatrix::from_fn(3, 3, |i, j| u[i] * u[j]);
        let t = takagi(&k).unwrap();
        let norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        assert!((t.values[0] - norm2).abs() < 1e-14);
        assert_eq!(&t.values[1..], &[0.0, 0.0]);
        let gram = t.vectors.adjoint() * &t.vectors;
        assert!((gram - DMatrix::<Complex>::identity(3, 3)).norm() < 1e-12);
        assert!(rel_err(&t.reconstruct(), &k) < 1e-13);
    }

    #[test]
    fn zero_matrix() {
        let t = takagi(&DMatrix::<Complex>::zeros(3, 3)).unwrap();
        assert_eq!(t.values, vec![0.0; 3]);
        let gram = t.vectors.adjoint() * &t.vectors;
        assert!((gram - DMatrix::<Complex>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn block_structure_separates_degenerate_pair() {
        // two decoupled blocks with identical spectra
        let a = [[c(1.0, 0.1), c(0.3, 0.0)], [c(0.3, 0.0), c(0.5, -0.2)]];
        let mut k = DMatrix::<Complex>::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                k[(2 * i, 2 * j)] = a[i][j];
                k[(2 * i + 1, 2 * j + 1)] = a[i][j];
            }
        }
        let t = takagi(&k).unwrap();
        assert!((t.values[0] - t.values[1]).abs() < 1e-14);
        // each vector lives on one parity class only
        for col in 0..4 {
            let even: f64 = (0..2).map(|i| t.vectors[(2 * i, col)].norm_sqr()).sum();
            assert!(even < 1e-20 || (even - 1.0).abs() < 1e-14);
        }
        assert!(rel_err(&t.reconstruct(), &k) < 1e-14);
    }
}
