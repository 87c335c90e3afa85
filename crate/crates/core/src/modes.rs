//! Hermite-Gauss transverse basis: field evaluation, Gouy phases and
//! quadrature overlaps.
//!
//! Fields are unit-normalized (`∫∫ |u|² dx dy = 1`) and carrier-free: the
//! plane-wave factor `e^{ikz}` is never included. Phase convention is
//! `e^{i(kz - ωt)}`, so a beam past its waist carries `exp(+ikρ²/2R)` and a
//! Gouy lag `exp(-i(m+n+1)·ψ)`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{require_positive, Error, Result};
use crate::quadrature::{scaled_hermite, Rule};
use crate::Complex;

/// Waist, wavelength and waist location of a paraxial beam family.
///
/// `wavelength` is the wavelength in the propagation medium; use
/// [`BeamGeometry::in_medium`] to go from vacuum to a crystal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    pub waist_radius: f64,
    pub wavelength: f64,
    pub waist_position: f64,
}

impl BeamGeometry {
    pub fn new(waist_radius: f64, wavelength: f64, waist_position: f64) -> Result<Self> {
        require_positive("waist_radius", waist_radius)?;
        require_positive("wavelength", wavelength)?;
        if !waist_position.is_finite() {
            return Err(crate::error::invalid("waist_position", "must be finite"));
        }
        Ok(Self {
            waist_radius,
            wavelength,
            waist_position,
        })
    }

    /// Same beam inside a medium of refractive index `index`.
    pub fn in_medium(&self, index: f64) -> Self {
        Self {
            wavelength: self.wavelength / index,
            ..*self
        }
    }

    pub fn with_waist(&self, waist_radius: f64) -> Self {
        Self {
            waist_radius,
            ..*self
        }
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist_radius * self.waist_radius / self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Beam radius `w(z)`.
    pub fn radius_at(&self, z: f64) -> f64 {
        let u = (z - self.waist_position) / self.rayleigh_range();
        self.waist_radius * (1.0 + u * u).sqrt()
    }

    /// Wavefront curvature `1/R(z)`; zero at the waist.
    pub fn inverse_curvature_at(&self, z: f64) -> f64 {
        let dz = z - self.waist_position;
        let zr = self.rayleigh_range();
        dz / (dz * dz + zr * zr)
    }

    /// Fundamental-mode Gouy angle `arctan((z - z0)/z_R)`.
    pub fn gouy_angle(&self, z: f64) -> f64 {
        ((z - self.waist_position) / self.rayleigh_range()).atan()
    }
}

/// Transverse mode label `TEM_mn`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub m: usize,
    pub n: usize,
}

impl ModeIndex {
    pub const fn new(m: usize, n: usize) -> Self {
        Self { m, n }
    }

    pub fn order(&self) -> usize {
        self.m + self.n
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TEM{}{}", self.m, self.n)
    }
}

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = 2.0 * x;
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Normalized Hermite functions `ψ_0..=ψ_max(t)` with
/// `ψ_k(t) = H_k(t) e^{-t²/2} / sqrt(2^k k! √π)`.
///
/// Uses the normalized form of the same recurrence so orders past 100 do
/// not overflow.
pub fn hermite_functions(max_order: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_order + 1);
    let psi0 = PI.powf(-0.25) * (-0.5 * t * t).exp();
    out.push(psi0);
    if max_order == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * t * psi0);
    for k in 1..max_order {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * t * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// One-axis Hermite-Gauss envelopes `u_0..=u_max(x, z)` including the
/// half-order Gouy share `(m + 1/2)·ψ` and wavefront curvature.
pub fn hg_1d(max_order: usize, beam: &BeamGeometry, x: f64, z: f64) -> Vec<Complex> {
    let w = beam.radius_at(z);
    let t = std::f64::consts::SQRT_2 * x / w;
    let scale = (std::f64::consts::SQRT_2 / w).sqrt();
    let psi = beam.gouy_angle(z);
    let curvature = 0.5 * beam.wavenumber() * x * x * beam.inverse_curvature_at(z);
    hermite_functions(max_order, t)
        .into_iter()
        .enumerate()
        .map(|(m, h)| Complex::from_polar(scale * h, curvature - (m as f64 + 0.5) * psi))
        .collect()
}

/// Unit-normalized `HG_mn` envelope at `(x, y, z)`.
pub fn hg_field(idx: ModeIndex, beam: &BeamGeometry, x: f64, y: f64, z: f64) -> Complex {
    let ux = hg_1d(idx.m, beam, x, z)[idx.m];
    let uy = hg_1d(idx.n, beam, y, z)[idx.n];
    ux * uy
}

/// Round-trip-free Gouy phase `(m+n+1)·arctan((z - z0)/z_R)`.
pub fn gouy_phase(idx: ModeIndex, beam: &BeamGeometry, z: f64) -> f64 {
    (idx.order() + 1) as f64 * beam.gouy_angle(z)
}

/// Tensor-product transverse quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransverseGrid {
    rule: Rule,
    scale: f64,
}

/// Identity of a grid, carried by every [`SampledField`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridKey {
    nodes: usize,
    scale: f64,
}

impl TransverseGrid {
    /// Grid with `nodes` Gauss-Hermite points per axis whose Gaussian weight
    /// is `exp(-(x²+y²)/scale²)`.
    pub fn new(nodes: usize, scale: f64) -> Result<Self> {
        require_positive("grid scale", scale)?;
        if nodes == 0 {
            return Err(crate::error::invalid("grid nodes", "must be at least 1"));
        }
        Ok(Self {
            rule: scaled_hermite(nodes, scale),
            scale,
        })
    }

    /// Grid matched to an integrand whose envelope is the product of the
    /// given Gaussian amplitudes `exp(-x²/w_i²)`: `1/scale² = Σ 1/w_i²`.
    pub fn for_envelopes(nodes: usize, waists: &[f64]) -> Result<Self> {
        let inv: f64 = waists.iter().map(|w| 1.0 / (w * w)).sum();
        Self::new(nodes, 1.0 / inv.sqrt())
    }

    /// Default node count for modes up to `max_order` per axis.
    pub fn default_nodes(max_order: usize) -> usize {
        2 * (max_order + 1) + 16
    }

    pub fn key(&self) -> GridKey {
        GridKey {
            nodes: self.rule.len(),
            scale: self.scale,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn axis(&self) -> &Rule {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.rule.len() * self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    /// Iterates `(x, y, weight)` row-major in x.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let r = &self.rule;
        r.nodes.iter().zip(&r.weights).flat_map(move |(&x, &wx)| {
            r.nodes
                .iter()
                .zip(&r.weights)
                .map(move |(&y, &wy)| (x, y, wx * wy))
        })
    }

    /// Samples `f(x, y)` at every grid node.
    pub fn sample<F: FnMut(f64, f64) -> Complex>(&self, mut f: F) -> SampledField {
        SampledField {
            key: self.key(),
            values: self.points().map(|(x, y, _)| f(x, y)).collect(),
        }
    }

    /// Samples `HG_mn` of `beam` in the plane `z`.
    pub fn sample_mode(&self, idx: ModeIndex, beam: &BeamGeometry, z: f64) -> SampledField {
        let xs: Vec<Complex> = self
            .rule
            .nodes
            .iter()
            .map(|&x| hg_1d(idx.m, beam, x, z)[idx.m])
            .collect();
        let ys: Vec<Complex> = self
            .rule
            .nodes
            .iter()
            .map(|&y| hg_1d(idx.n, beam, y, z)[idx.n])
            .collect();
        SampledField {
            key: self.key(),
            values: xs
                .iter()
                .flat_map(|ux| ys.iter().map(move |uy| ux * uy))
                .collect(),
        }
    }

    /// `∫∫ f dx dy` for a real integrand.
    pub fn integrate<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> f64 {
        self.points().map(|(x, y, w)| w * f(x, y)).sum()
    }
}

/// Complex field values at the nodes of a [`TransverseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    key: GridKey,
    values: Vec<Complex>,
}

impl SampledField {
    pub fn values(&self) -> &[Complex] {
        &self.values
    }

    pub fn key(&self) -> GridKey {
        self.key
    }

    pub fn scaled(&self, factor: Complex) -> Self {
        Self {
            key: self.key,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &SampledField) -> Result<Self> {
        if self.key != other.key {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            key: self.key,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// `∫∫ A*(r) B(r) d²r` by grid quadrature.
pub fn overlap(a: &SampledField, b: &SampledField, grid: &TransverseGrid) -> Result<Complex> {
    let key = grid.key();
    if a.key != key || b.key != key {
        return Err(Error::GridMismatch);
    }
    Ok(grid
        .points()
        .zip(a.values.iter().zip(&b.values))
        .map(|((_, _, w), (va, vb))| va.conj() * vb * w)
        .sum())
}

/// `∫∫ |A|² d²r`.
pub fn norm_squared(a: &SampledField, grid: &TransverseGrid) -> Result<f64> {
    overlap(a, a, grid).map(|c| c.re)
}

/// Real overlap matrix `O[i][j] = ∫ u_i(x; w_a) u_j(x; w_b) dx` between
/// one-axis HG functions of two waists, both evaluated at their waist.
///
/// Integrands are polynomial × Gaussian, so the scaled rule is exact.
pub fn cross_waist_overlap(rows: usize, waist_a: f64, cols: usize, waist_b: f64) -> DMatrix<f64> {
    let scale = 1.0 / (1.0 / (waist_a * waist_a) + 1.0 / (waist_b * waist_b)).sqrt();
    let rule = scaled_hermite((rows + cols) / 2 + 8, scale);
    let mut out = DMatrix::zeros(rows, cols);
    let ta = std::f64::consts::SQRT_2 / waist_a;
    let tb = std::f64::consts::SQRT_2 / waist_b;
    let na = ta.sqrt();
    let nb = tb.sqrt();
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let ha = hermite_functions(rows.saturating_sub(1), ta * x);
        let hb = hermite_functions(cols.saturating_sub(1), tb * x);
        for i in 0..rows {
            let wi = w * na * nb * ha[i];
            for j in 0..cols {
                out[(i, j)] += wi * hb[j];
            }
        }
    }
    out
}

/// Truncated HG basis with `(n_max + 1)²` modes, flattened as
/// `m·(n_max + 1) + n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HgBasis {
    pub beam: BeamGeometry,
    pub n_max: usize,
}

impl HgBasis {
    pub fn new(beam: BeamGeometry, n_max: usize) -> Self {
        Self { beam, n_max }
    }

    pub fn per_axis(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.per_axis() * self.per_axis()
    }

    pub fn index_of(&self, idx: ModeIndex) -> Option<usize> {
        (idx.m <= self.n_max && idx.n <= self.n_max).then(|| idx.m * self.per_axis() + idx.n)
    }

    pub fn mode_at(&self, flat: usize) -> ModeIndex {
        ModeIndex::new(flat / self.per_axis(), flat % self.per_axis())
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.dim()).map(|i| self.mode_at(i))
    }

    /// Field `Σ c_j u_j(x, y, z)` of a coefficient vector.
    pub fn field(&self, coeffs: &[Complex], x: f64, y: f64, z: f64) -> Complex {
        let ux = hg_1d(self.n_max, &self.beam, x, z);
        let uy = hg_1d(self.n_max, &self.beam, y, z);
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let idx = self.mode_at(j);
                c * ux[idx.m] * uy[idx.n]
            })
            .sum()
    }

    /// Projects a sampled field onto the basis in the plane `z`.
    pub fn project(&self, field: &SampledField, grid: &TransverseGrid, z: f64) -> Result<Vec<Complex>> {
        if field.key != grid.key() {
            return Err(Error::GridMismatch);
        }
        let nodes = &grid.axis().nodes;
        let table: Vec<Vec<Complex>> = nodes
            .iter()
            .map(|&x| hg_1d(self.n_max, &self.beam, x, z))
            .collect();
        let weights = &grid.axis().weights;
        let p = nodes.len();
        let mut out = vec![Complex::new(0.0, 0.0); self.dim()];
        for (j, slot) in out.iter_mut().enumerate() {
            let idx = self.mode_at(j);
            let mut acc = Complex::new(0.0, 0.0);
            for ix in 0..p {
                let ux = table[ix][idx.m].conj() * weights[ix];
                for iy in 0..p {
                    acc += ux * table[iy][idx.n].conj() * weights[iy] * field.values[ix * p + iy];
                }
            }
            *slot = acc;
        }
        Ok(out)
    }
}

/// Writes a field on a uniform square grid as CSV `x,y,re,im`.
pub fn write_profile_csv<W: Write, F: Fn(f64, f64) -> Complex>(
    out: &mut W,
    half_width: f64,
    points: usize,
    field: F,
) -> std::io::Result<()> {
    writeln!(out, "x,y,re,im")?;
    let step = if points > 1 {
        2.0 * half_width / (points - 1) as f64
    } else {
        0.0
    };
    for i in 0..points {
        let x = -half_width + step * i as f64;
        for j in 0..points {
            let y = -half_width + step * j as f64;
            let v = field(x, y);
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", x, y, v.re, v.im)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beam(w: f64) -> BeamGeometry {
        BeamGeometry::new(w, 1.064e-6, 0.0).unwrap()
    }

    #[test]
    fn peak_of_fundamental() {
        let b = beam(90e-6);
        let u = hg_field(ModeIndex::new(0, 0), &b, 0.0, 0.0, 0.0);
        assert!((u.re - (2.0 / PI).sqrt() / 90e-6).abs() < 1e-9 * u.re);
        assert_eq!(u.im, 0.0);
    }

    #[test]
    fn odd_mode_vanishes_on_axis() {
        let b = beam(50e-6);
        for y in [-1e-4, 0.0, 3e-5] {
            assert_eq!(hg_field(ModeIndex::new(1, 0), &b, 0.0, y, 0.0).norm(), 0.0);
        }
    }

    #[test]
    fn gouy_examples() {
        let b = beam(100e-6);
        let zr = b.rayleigh_range();
        assert_eq!(gouy_phase(ModeIndex::new(0, 0), &b, 0.0), 0.0);
        assert!((gouy_phase(ModeIndex::new(0, 0), &b, zr) - PI / 4.0).abs() < 1e-15);
        assert!((gouy_phase(ModeIndex::new(1, 1), &b, zr) - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn hermite_matches_closed_forms() {
        let x = 0.7;
        assert_eq!(hermite(0, x), 1.0);
        assert!((hermite(3, x) - (8.0 * x.powi(3) - 12.0 * x)).abs() < 1e-14);
        assert!((hermite(4, x) - (16.0 * x.powi(4) - 48.0 * x * x + 12.0)).abs() < 1e-13);
    }

    #[test]
    fn hermite_functions_stable_at_high_order() {
        let t = 3.3;
        let psi = hermite_functions(60, t);
        assert!(psi.iter().all(|v| v.is_finite() && v.abs() < 1.0));
        // compare against the unnormalized polynomial at moderate order
        let k = 12;
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let direct = hermite(k, t) * (-0.5 * t * t).exp() / (2f64.powi(k as i32) * fact * PI.sqrt()).sqrt();
        assert!((psi[k] - direct).abs() < 1e-12);
    }

    #[test]
    fn fundamental_normalized_on_grid() {
        let b = beam(80e-6);
        let grid = TransverseGrid::for_envelopes(24, &[80e-6, 80e-6]).unwrap();
        let total = grid.integrate(|x, y| hg_field(ModeIndex::new(0, 0), &b, x, y, 0.0).norm_sqr());
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn overlaps_and_grid_mismatch() {
        let w = 60e-6;
        let b = beam(w);
        let grid = TransverseGrid::for_envelopes(30, &[w, 2.0 * w]).unwrap();
        let u00 = grid.sample_mode(ModeIndex::new(0, 0), &b, 0.0);
        let u10 = grid.sample_mode(ModeIndex::new(1, 0), &b, 0.0);
        let wide = grid.sample_mode(ModeIndex::new(0, 0), &b.with_waist(2.0 * w), 0.0);
        assert!((overlap(&u00, &u00, &grid).unwrap() - 1.0).norm() < 1e-10);
        assert!(overlap(&u00, &u10, &grid).unwrap().norm() < 1e-10);
        assert!((overlap(&u00, &wide, &grid).unwrap().re - 0.8).abs() < 1e-9);

        let other = TransverseGrid::new(12, w).unwrap();
        let foreign = other.sample_mode(ModeIndex::new(0, 0), &b, 0.0);
        assert!(matches!(overlap(&u00, &foreign, &grid), Err(Error::GridMismatch)));
    }

    #[test]
    fn cross_waist_matrix_identity_and_gaussian() {
        let o = cross_waist_overlap(6, 1.0, 6, 1.0);
        assert!((o - DMatrix::<f64>::identity(6, 6)).amax() < 1e-13);
        let o = cross_waist_overlap(1, 1.0, 1, 2.0);
        // 1-D: sqrt(2 w1 w2 / (w1² + w2²))
        assert!((o[(0, 0)] - (4.0f64 / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn projection_recovers_coefficients() {
        let w = 70e-6;
        let basis = HgBasis::new(beam(w), 4);
        let grid = TransverseGrid::for_envelopes(TransverseGrid::default_nodes(4), &[w, w]).unwrap();
        let mut coeffs = vec![Complex::new(0.0, 0.0); basis.dim()];
        coeffs[basis.index_of(ModeIndex::new(1, 2)).unwrap()] = Complex::new(0.6, 0.0);
        coeffs[basis.index_of(ModeIndex::new(3, 0)).unwrap()] = Complex::new(0.0, 0.8);
        let z = 0.002;
        let field = grid.sample(|x, y| basis.field(&coeffs, x, y, z));
        let back = basis.project(&field, &grid, z).unwrap();
        for (a, b) in back.iter().zip(&coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
