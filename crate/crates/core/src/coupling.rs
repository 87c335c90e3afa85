//! Parametric coupling matrix over the HG basis and its squeezed
//! eigenmodes.
//!
//! ```text
//! K_pq = g ∫ dz e^{iΔk z} ∫∫ d²ρ α(ρ, z) ū_p(ρ, z) ū_q(ρ, z)
//! ```
//!
//! The crystal spans `[-l_c/2, l_c/2]`. Pump and signal propagate with
//! their wavelengths divided by `n_s`. The signal envelopes enter complex
//! conjugated, so the curvature and Gouy phases of a generated pair are
//! matched against the pump's (the pair is emitted into the modes the pump
//! drives). With a Gaussian pump the transverse integral factorizes per
//! axis, which is how the matrix is assembled:
//!
//! ```text
//! K = g √P Σ_z w_z e^{iΔk z} X(z) ⊗ X(z),   X_mm'(z) = ∫ a(x, z) ū_m ū_m' dx
//! ```

use std::cmp::Reverse;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, require_positive, Error, Result};
use crate::modes::{cross_waist_overlap, hg_1d, BeamGeometry, HgBasis, ModeIndex, SampledField, TransverseGrid};
use crate::quadrature::{gauss_legendre, scaled_hermite};
use crate::takagi::{dominant_index, takagi};
use crate::Complex;

/// Default `Λ_k/Λ_0` threshold of [`mode_count`].
pub const DEFAULT_MODE_CUTOFF: f64 = 0.2;
pub const DEFAULT_Z_NODES: usize = 33;
/// Largest accepted relative entry change when quadrature nodes are doubled.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;
/// Largest accepted relative change of `Λ_k` when the truncation grows by 5.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;
/// Gains within this fraction of `Λ_0` count as degenerate.
const TIE_TOLERANCE: f64 = 1e-9;
const WAIST_TOLERANCE: f64 = 0.1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalParams {
    pub length: f64,
    pub signal_index: f64,
    /// Residual `Δk` after quasi-phase-matching (1/m).
    pub phase_mismatch: f64,
    /// Overall gain scale `g`.
    pub gain_scale: f64,
}

impl CrystalParams {
    /// Phase-matched crystal with unit gain scale.
    pub fn new(length: f64, signal_index: f64) -> Result<Self> {
        let c = Self {
            length,
            signal_index,
            phase_mismatch: 0.0,
            gain_scale: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("crystal length", self.length)?;
        if !(self.signal_index.is_finite() && self.signal_index > 1.0) {
            return Err(invalid("signal index", format!("must be > 1, got {}", self.signal_index)));
        }
        if !self.phase_mismatch.is_finite() {
            return Err(invalid("phase mismatch", "must be finite"));
        }
        require_positive("gain scale", self.gain_scale)?;
        Ok(())
    }
}

/// Transverse pump shape.
#[derive(Debug, Clone, PartialEq)]
pub enum PumpShape {
    Gaussian,
    /// Unit-norm HG coefficients (flattened as in [`HgBasis`]) of a sampled
    /// pump image, expanded on the pump waist.
    Sampled { coefficients: Vec<Complex>, max_order: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PumpProfile {
    pub waist: f64,
    /// Vacuum wavelength.
    pub wavelength: f64,
    pub power: f64,
    pub waist_position: f64,
    pub shape: PumpShape,
}

impl PumpProfile {
    pub fn gaussian(waist: f64, wavelength: f64, power: f64) -> Result<Self> {
        let p = Self {
            waist,
            wavelength,
            power,
            waist_position: 0.0,
            shape: PumpShape::Gaussian,
        };
        p.validate()?;
        Ok(p)
    }

    /// Pump whose transverse profile is the field sampled on `grid` in its
    /// waist plane, expanded on HG modes of the pump waist up to
    /// `max_order` per axis and renormalized.
    pub fn sampled(
        waist: f64,
        wavelength: f64,
        power: f64,
        field: &SampledField,
        grid: &TransverseGrid,
        max_order: usize,
    ) -> Result<Self> {
        let beam = BeamGeometry::new(waist, wavelength, 0.0)?;
        let mut coefficients = HgBasis::new(beam, max_order).project(field, grid, 0.0)?;
        let norm = coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(invalid("pump image", "has no weight on the pump HG basis"));
        }
        coefficients.iter_mut().for_each(|c| *c /= norm);
        let p = Self {
            waist,
            wavelength,
            power,
            waist_position: 0.0,
            shape: PumpShape::Sampled { coefficients, max_order },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_power(&self, power: f64) -> Self {
        Self { power, ..self.clone() }
    }

    pub fn with_waist(&self, waist: f64) -> Self {
        Self { waist, ..self.clone() }
    }

    pub fn beam(&self) -> Result<BeamGeometry> {
        BeamGeometry::new(self.waist, self.wavelength, self.waist_position)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("pump waist", self.waist)?;
        require_positive("pump wavelength", self.wavelength)?;
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(invalid("pump power", format!("must be >= 0, got {}", self.power)));
        }
        if !self.waist_position.is_finite() {
            return Err(invalid("pump waist position", "must be finite"));
        }
        Ok(())
    }

    fn max_order(&self) -> usize {
        match &self.shape {
            PumpShape::Gaussian => 0,
            PumpShape::Sampled { max_order, .. } => *max_order,
        }
    }

    fn coefficient(&self, a: usize, b: usize) -> Complex {
        match &self.shape {
            PumpShape::Gaussian => Complex::new(1.0, 0.0),
            PumpShape::Sampled { coefficients, max_order } => coefficients[a * (max_order + 1) + b],
        }
    }
}

/// `l_coh = √(λ l_c / (π n_s))`.
pub fn coherence_length(signal_wavelength: f64, crystal_length: f64, signal_index: f64) -> Result<f64> {
    require_positive("signal wavelength", signal_wavelength)?;
    require_positive("crystal length", crystal_length)?;
    require_positive("signal index", signal_index)?;
    Ok((signal_wavelength * crystal_length / (PI * signal_index)).sqrt())
}

/// Cooperativity estimate `(w_p / l_coh)²`.
pub fn cooperativity(pump_waist: f64, coherence_length: f64) -> f64 {
    (pump_waist / coherence_length).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    /// Gauss-Legendre nodes along the crystal. One node evaluates the
    /// thin-crystal limit at `z = 0` with weight `l_c`.
    pub z_nodes: usize,
    /// Gauss-Hermite nodes per transverse axis; `None` picks a default
    /// from the truncation.
    pub transverse_nodes: Option<usize>,
    /// Rebuild with doubled nodes and fail if any entry moves by more than
    /// [`QUADRATURE_TOLERANCE`]·max|K|. With a single z node only the
    /// transverse nodes are doubled.
    pub check_convergence: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            z_nodes: DEFAULT_Z_NODES,
            transverse_nodes: None,
            check_convergence: true,
        }
    }
}

impl CouplingOptions {
    pub fn thin_crystal() -> Self {
        Self {
            z_nodes: 1,
            ..Self::default()
        }
    }

    pub fn unchecked(self) -> Self {
        Self {
            check_convergence: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub matrix: DMatrix<Complex>,
    /// Signal basis; its wavelength is the vacuum wavelength.
    pub basis: HgBasis,
    pub pump_power: f64,
    /// Relative entry change against the doubled-node rebuild, if checked.
    pub quadrature_change: Option<f64>,
}

impl CouplingMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Assembles `K` over `basis` (`(N+1)²` modes, `N = basis.n_max`).
pub fn build_coupling_matrix(
    crystal: &CrystalParams,
    pump: &PumpProfile,
    basis: &HgBasis,
    options: &CouplingOptions,
) -> Result<CouplingMatrix> {
    crystal.validate()?;
    pump.validate()?;
    if pump.waist_position.abs() > 0.5 * crystal.length {
        return Err(invalid(
            "pump waist position",
            format!("{} m lies outside the crystal", pump.waist_position),
        ));
    }
    if options.z_nodes == 0 {
        return Err(invalid("z nodes", "must be at least 1"));
    }
    let x_nodes = options
        .transverse_nodes
        .unwrap_or_else(|| TransverseGrid::default_nodes(basis.n_max + pump.max_order()));
    if x_nodes == 0 {
        return Err(invalid("transverse nodes", "must be at least 1"));
    }
    let matrix = assemble(crystal, pump, basis, options.z_nodes, x_nodes)?;
    let quadrature_change = if options.check_convergence {
        let z2 = if options.z_nodes == 1 { 1 } else { 2 * options.z_nodes };
        let fine = assemble(crystal, pump, basis, z2, 2 * x_nodes)?;
        let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let change = if scale > 0.0 {
            (&fine - &matrix).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
        } else {
            0.0
        };
        if change > QUADRATURE_TOLERANCE {
            return Err(Error::NonConvergence(format!(
                "coupling quadrature at N={} ({} z nodes, {} transverse nodes): \
                 doubling the nodes moves entries by {change:.3e} of max|K|",
                basis.n_max, options.z_nodes, x_nodes
            )));
        }
        Some(change)
    } else {
        None
    };
    Ok(CouplingMatrix {
        matrix,
        basis: *basis,
        pump_power: pump.power,
        quadrature_change,
    })
}

/// Per-plane one-axis factors: `(w_z e^{iΔk z}, X_a, Y_a)` with
/// `Y_a = Σ_b p_ab X_b`.
type Slice = (Complex, Vec<DMatrix<Complex>>, Vec<DMatrix<Complex>>);

fn assemble(
    crystal: &CrystalParams,
    pump: &PumpProfile,
    basis: &HgBasis,
    z_nodes: usize,
    x_nodes: usize,
) -> Result<DMatrix<Complex>> {
    let half = 0.5 * crystal.length;
    let zrule = gauss_legendre(z_nodes, -half, half);
    let signal = basis.beam.in_medium(crystal.signal_index);
    let pump_beam = pump.beam()?.in_medium(crystal.signal_index);
    let nb = basis.per_axis();
    let m_max = pump.max_order();
    let np = m_max + 1;

    let slices: Vec<Slice> = zrule
        .nodes
        .par_iter()
        .zip(&zrule.weights)
        .map(|(&z, &wz)| {
            let ws = signal.radius_at(z);
            let wp = pump_beam.radius_at(z);
            let scale = 1.0 / (2.0 / (ws * ws) + 1.0 / (wp * wp)).sqrt();
            let rule = scaled_hermite(x_nodes, scale);
            let mut xs = vec![DMatrix::<Complex>::zeros(nb, nb); np];
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let u: Vec<Complex> = hg_1d(basis.n_max, &signal, x, z).iter().map(|c| c.conj()).collect();
                let v = hg_1d(m_max, &pump_beam, x, z);
                for (a, xa) in xs.iter_mut().enumerate() {
                    let va = v[a] * w;
                    for m in 0..nb {
                        let f = va * u[m];
                        for mp in m..nb {
                            xa[(m, mp)] += f * u[mp];
                        }
                    }
                }
            }
            for xa in xs.iter_mut() {
                for m in 0..nb {
                    for mp in 0..m {
                        xa[(m, mp)] = xa[(mp, m)];
                    }
                }
            }
            let ys: Vec<DMatrix<Complex>> = (0..np)
                .map(|a| {
                    let mut y = DMatrix::<Complex>::zeros(nb, nb);
                    for (b, xb) in xs.iter().enumerate() {
                        y += xb * pump.coefficient(a, b);
                    }
                    y
                })
                .collect();
            (Complex::from_polar(wz, crystal.phase_mismatch * z), xs, ys)
        })
        .collect();

    let prefactor = crystal.gain_scale * pump.power.sqrt();
    let d = basis.dim();
    let rows: Vec<Vec<Complex>> = (0..d)
        .into_par_iter()
        .map(|p| {
            let (m, n) = (p / nb, p % nb);
            let mut row = vec![Complex::new(0.0, 0.0); d];
            for (c, xs, ys) in &slices {
                for a in 0..np {
                    for mp in 0..nb {
                        let f = c * xs[a][(m, mp)];
                        if f == Complex::new(0.0, 0.0) {
                            continue;
                        }
                        for np_ in 0..nb {
                            row[mp * nb + np_] += f * ys[a][(n, np_)];
                        }
                    }
                }
            }
            row
        })
        .collect();
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j] * prefactor))
}

/// Basis waist maximizing `|K_00,00|`: golden-section search to 0.1 µm
/// seeded at `√(l_coh·w_p)`.
pub fn optimize_basis_waist(crystal: &CrystalParams, pump: &PumpProfile, signal_wavelength: f64) -> Result<f64> {
    let l_coh = coherence_length(signal_wavelength, crystal.length, crystal.signal_index)?;
    let seed = (l_coh * pump.waist).sqrt();
    let objective = |w: f64| -> Result<f64> {
        let basis = HgBasis::new(BeamGeometry::new(w, signal_wavelength, 0.0)?, 0);
        let k = assemble(crystal, &pump.with_power(1.0), &basis, DEFAULT_Z_NODES, 24)?;
        Ok(k[(0, 0)].norm())
    };
    golden_max(objective, 0.25 * seed, 4.0 * seed, WAIST_TOLERANCE)
}

/// Golden-section maximization on `[lo, hi]` down to an interval of `tol`.
fn golden_max<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Squeezed eigenmodes of a coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDecomposition {
    /// `Λ_k`, nonnegative and descending.
    pub gains: Vec<f64>,
    /// `θ_k` in `(-π, π]`.
    pub angles: Vec<f64>,
    /// Column `k` holds eigenmode `k` over the basis.
    pub vectors: DMatrix<Complex>,
    /// Largest HG component of each eigenmode.
    pub dominant: Vec<ModeIndex>,
    /// `|⟨HG_dominant|eigenmode⟩|²` at the basis waist; see
    /// [`eigenmode_hg_overlap`] for the waist-optimized value.
    pub hg_overlaps: Vec<f64>,
    pub basis: HgBasis,
}

impl ModeDecomposition {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Coefficients of eigenmode `k`.
    pub fn mode(&self, k: usize) -> Vec<Complex> {
        self.vectors.column(k).iter().cloned().collect()
    }

    /// `U diag(Λ e^{iθ}) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<Complex> {
        let mut scaled = self.vectors.clone();
        for k in 0..self.len() {
            let f = Complex::from_polar(self.gains[k], self.angles[k]);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= f);
        }
        scaled * self.vectors.transpose()
    }

    /// Synthetic decomposition with the given gains, zero angles and
    /// identity vectors over a single-mode basis label.
    pub fn from_gains(gains: &[f64], basis: HgBasis) -> Self {
        let n = gains.len();
        Self {
            gains: gains.to_vec(),
            angles: vec![0.0; n],
            vectors: DMatrix::identity(n, n),
            dominant: vec![ModeIndex::default(); n],
            hg_overlaps: vec![1.0; n],
            basis,
        }
    }

    /// Keeps only the listed eigenmodes, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.len()) {
            return Err(invalid("mode index", format!("{bad} out of range ({})", self.len())));
        }
        let rows = self.vectors.nrows();
        Ok(Self {
            gains: keep.iter().map(|&k| self.gains[k]).collect(),
            angles: keep.iter().map(|&k| self.angles[k]).collect(),
            vectors: DMatrix::from_fn(rows, keep.len(), |i, j| self.vectors[(i, keep[j])]),
            dominant: keep.iter().map(|&k| self.dominant[k]).collect(),
            hg_overlaps: keep.iter().map(|&k| self.hg_overlaps[k]).collect(),
            basis: self.basis,
        })
    }
}

/// Takagi factorization of `K` with HG-aware tie-breaking: degenerate
/// gains are ordered by ascending total order of the dominant HG
/// component, then by descending x-order (`TEM10` before `TEM01`).
pub fn takagi_decompose(k: &CouplingMatrix) -> Result<ModeDecomposition> {
    if k.matrix.nrows() != k.basis.dim() {
        return Err(invalid("coupling matrix", "dimension does not match its basis"));
    }
    let mut t = takagi(&k.matrix)?;
    let basis = k.basis;
    t.sort_with_ties(TIE_TOLERANCE, |_, col| {
        let idx = basis.mode_at(dominant_index(col.iter()));
        (idx.order(), Reverse(idx.m))
    });
    let mut dominant = Vec::with_capacity(t.dim());
    let mut hg_overlaps = Vec::with_capacity(t.dim());
    for c in 0..t.dim() {
        let j = dominant_index(t.vectors.column(c).iter());
        dominant.push(basis.mode_at(j));
        hg_overlaps.push(t.vectors[(j, c)].norm_sqr());
    }
    Ok(ModeDecomposition {
        gains: t.values,
        angles: t.phases,
        vectors: t.vectors,
        dominant,
        hg_overlaps,
        basis,
    })
}

/// `#{k : Λ_k/Λ_0 ≥ cutoff}`.
pub fn mode_count(dec: &ModeDecomposition, cutoff: f64) -> Result<usize> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(invalid("cutoff", format!("must lie in (0, 1), got {cutoff}")));
    }
    let l0 = *dec
        .gains
        .first()
        .ok_or_else(|| Error::Missing("mode decomposition is empty".into()))?;
    if l0 <= 0.0 {
        return Ok(0);
    }
    Ok(dec.gains.iter().filter(|&&g| g / l0 >= cutoff).count())
}

/// Best single-HG match of an eigenmode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HgMatch {
    pub overlap: f64,
    pub index: ModeIndex,
    pub waist: f64,
}

/// `max |⟨HG_mn(w)|eigenmode_k⟩|²` over `m, n ≤ N` and waists `w` within a
/// factor 4 of the basis waist, evaluated in the basis waist plane.
pub fn eigenmode_hg_overlap(dec: &ModeDecomposition, k: usize) -> Result<HgMatch> {
    if k >= dec.len() {
        return Err(invalid("mode index", format!("{k} out of range ({})", dec.len())));
    }
    let nb = dec.basis.per_axis();
    let w0 = dec.basis.beam.waist_radius;
    let c = DMatrix::from_fn(nb, nb, |m, n| dec.vectors[(m * nb + n, k)]);
    let eval = |w: f64| -> (f64, ModeIndex) {
        let o = cross_waist_overlap(nb, w, nb, w0).map(|x| Complex::new(x, 0.0));
        let p = &o * &c * o.transpose();
        let mut best = (0.0, ModeIndex::new(0, 0));
        for m in 0..nb {
            for n in 0..nb {
                let v = p[(m, n)].norm_sqr();
                if v > best.0 {
                    best = (v, ModeIndex::new(m, n));
                }
            }
        }
        best
    };
    const STEPS: usize = 48;
    let ratio: f64 = 16f64.powf(1.0 / STEPS as f64);
    let grid: Vec<f64> = (0..=STEPS).map(|i| w0 * 0.25 * ratio.powi(i as i32)).collect();
    let scored: Vec<(f64, ModeIndex)> = grid.iter().map(|&w| eval(w)).collect();
    let (i_best, _) = scored
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.0 > acc.1 { (i, s.0) } else { acc });
    let index = scored[i_best].1;
    let lo = grid[i_best.saturating_sub(1)];
    let hi = grid[(i_best + 1).min(STEPS)];
    let single = |w: f64| -> Result<f64> {
        let o = cross_waist_overlap(index.m.max(index.n) + 1, w, nb, w0);
        let row_m: Vec<f64> = o.row(index.m).iter().cloned().collect();
        let row_n: Vec<f64> = o.row(index.n).iter().cloned().collect();
        let mut acc = Complex::new(0.0, 0.0);
        for a in 0..nb {
            for b in 0..nb {
                acc += c[(a, b)] * row_m[a] * row_n[b];
            }
        }
        Ok(acc.norm_sqr())
    };
    let waist = golden_max(single, lo, hi, 1e-6 * w0)?;
    let overlap = single(waist)?.max(scored[i_best].0);
    Ok(HgMatch { overlap, index, waist })
}

/// Outcome of growing the truncation by 5 orders per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationCheck {
    pub n_max: usize,
    /// `max_k |Λ_k(N+5) − Λ_k(N)| / Λ_k(N)` over `k ≤ 10`.
    pub max_relative_change: f64,
    pub converged: bool,
}

pub const TRUNCATION_STEP: usize = 5;
const CHECKED_GAINS: usize = 11;

/// Compares the leading gains at `basis.n_max` and `basis.n_max + 5`.
pub fn truncation_convergence(
    crystal: &CrystalParams,
    pump: &PumpProfile,
    basis: &HgBasis,
    options: &CouplingOptions,
) -> Result<TruncationCheck> {
    let gains = |n: usize| -> Result<Vec<f64>> {
        let b = HgBasis::new(basis.beam, n);
        Ok(takagi_decompose(&build_coupling_matrix(crystal, pump, &b, options)?)?.gains)
    };
    let coarse = gains(basis.n_max)?;
    let fine = gains(basis.n_max + TRUNCATION_STEP)?;
    let floor = coarse.first().copied().unwrap_or(0.0) * 1e-12;
    let max_relative_change = coarse
        .iter()
        .zip(&fine)
        .take(CHECKED_GAINS)
        .filter(|(c, _)| **c > floor)
        .map(|(c, f)| (f - c).abs() / c)
        .fold(0.0, f64::max);
    Ok(TruncationCheck {
        n_max: basis.n_max,
        max_relative_change,
        converged: max_relative_change < TRUNCATION_TOLERANCE,
    })
}

/// Smallest `N` in `start, start+5, …, limit` whose leading gains are
/// converged.
pub fn auto_truncation(
    crystal: &CrystalParams,
    pump: &PumpProfile,
    beam: &BeamGeometry,
    options: &CouplingOptions,
    start: usize,
    limit: usize,
) -> Result<TruncationCheck> {
    let mut n = start;
    loop {
        let check = truncation_convergence(crystal, pump, &HgBasis::new(*beam, n), options)?;
        if check.converged {
            return Ok(check);
        }
        if n + TRUNCATION_STEP > limit {
            return Err(Error::NonConvergence(format!(
                "truncation: gains still move by {:.3e} at N={n} (limit {limit})",
                check.max_relative_change
            )));
        }
        n += TRUNCATION_STEP;
    }
}

/// CSV `k,lambda_k,theta_k_rad,dominant_hg_m,dominant_hg_n,hg_overlap`.
pub fn write_spectrum_csv<W: Write>(out: &mut W, dec: &ModeDecomposition, matches: &[HgMatch]) -> std::io::Result<()> {
    writeln!(out, "k,lambda_k,theta_k_rad,dominant_hg_m,dominant_hg_n,hg_overlap")?;
    for (k, m) in matches.iter().enumerate().take(dec.len()) {
        writeln!(
            out,
            "{k},{:.16e},{:.16e},{},{},{:.16e}",
            dec.gains[k], dec.angles[k], m.index.m, m.index.n, m.overlap
        )?;
    }
    Ok(())
}

/// [`eigenmode_hg_overlap`] for the first `count` eigenmodes, in parallel.
pub fn hg_matches(dec: &ModeDecomposition, count: usize) -> Result<Vec<HgMatch>> {
    (0..count.min(dec.len()))
        .into_par_iter()
        .map(|k| eigenmode_hg_overlap(dec, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1e-6;
    const LAMBDA: f64 = 1.064e-6;

    fn crystal() -> CrystalParams {
        CrystalParams::new(10e-3, 1.8).unwrap()
    }

    fn basis(w: f64, n: usize) -> HgBasis {
        HgBasis::new(BeamGeometry::new(w, LAMBDA, 0.0).unwrap(), n)
    }

    #[test]
    fn coherence_length_values() {
        let l = coherence_length(LAMBDA, 10e-3, 1.8).unwrap();
        assert!((l - 43.38e-6).abs() < 0.01e-6, "{l}");
        let l4 = coherence_length(LAMBDA, 40e-3, 1.8).unwrap();
        assert!((l4 / l - 2.0).abs() < 1e-14);
        let short = coherence_length(LAMBDA, 2.5e-3, 1.8).unwrap();
        assert!((short - 21.69e-6).abs() < 0.01e-6);
        assert!(coherence_length(0.0, 1.0, 1.8).is_err());
        assert!(coherence_length(LAMBDA, -1.0, 1.8).is_err());
    }

    #[test]
    fn plane_wave_thin_crystal_is_identity() {
        let pump = PumpProfile::gaussian(1.0, LAMBDA / 2.0, 1.0).unwrap();
        let k = build_coupling_matrix(&crystal(), &pump, &basis(50.0 * UM, 3), &CouplingOptions::thin_crystal()).unwrap();
        let k00 = k.matrix[(0, 0)];
        for i in 0..k.dim() {
            for j in 0..k.dim() {
                let want = if i == j { k00 } else { Complex::new(0.0, 0.0) };
                assert!((k.matrix[(i, j)] - want).norm() < 1e-7 * k00.norm(), "{i},{j}");
            }
        }
    }

    #[test]
    fn sampled_gaussian_pump_matches_analytic() {
        let wp = 120.0 * UM;
        let gauss = PumpProfile::gaussian(wp, LAMBDA / 2.0, 0.5).unwrap();
        let pb = gauss.beam().unwrap();
        let grid = TransverseGrid::for_envelopes(30, &[wp]).unwrap();
        let field = grid.sample(|x, y| crate::modes::hg_field(ModeIndex::new(0, 0), &pb, x, y, 0.0));
        let sampled = PumpProfile::sampled(wp, LAMBDA / 2.0, 0.5, &field, &grid, 2).unwrap();
        let b = basis(70.0 * UM, 4);
        let opts = CouplingOptions::default().unchecked();
        let a = build_coupling_matrix(&crystal(), &gauss, &b, &opts).unwrap();
        let s = build_coupling_matrix(&crystal(), &sampled, &b, &opts).unwrap();
        let diff = (&a.matrix - &s.matrix).norm() / a.matrix.norm();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn pump_outside_crystal_rejected() {
        let mut pump = PumpProfile::gaussian(120.0 * UM, LAMBDA / 2.0, 1.0).unwrap();
        pump.waist_position = 6e-3;
        let err = build_coupling_matrix(&crystal(), &pump, &basis(70.0 * UM, 1), &CouplingOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn too_few_nodes_flagged() {
        let pump = PumpProfile::gaussian(120.0 * UM, LAMBDA / 2.0, 1.0).unwrap();
        let opts = CouplingOptions {
            z_nodes: 2,
            transverse_nodes: Some(4),
            check_convergence: true,
        };
        let err = build_coupling_matrix(&crystal(), &pump, &basis(70.0 * UM, 6), &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)), "{err}");
    }

    #[test]
    fn mode_count_edge_cases() {
        let b = basis(50.0 * UM, 1);
        let dec = |gains: Vec<f64>| ModeDecomposition {
            angles: vec![0.0; gains.len()],
            vectors: DMatrix::identity(4, 4),
            dominant: b.modes().collect(),
            hg_overlaps: vec![1.0; 4],
            basis: b,
            gains,
        };
        assert_eq!(mode_count(&dec(vec![1.0; 4]), 0.2).unwrap(), 4);
        assert_eq!(mode_count(&dec(vec![1.0, 0.0, 0.0, 0.0]), 0.2).unwrap(), 1);
        assert!(mode_count(&dec(vec![1.0; 4]), 1.0).is_err());
        let empty = ModeDecomposition {
            gains: vec![],
            angles: vec![],
            vectors: DMatrix::zeros(4, 0),
            dominant: vec![],
            hg_overlaps: vec![],
            basis: b,
        };
        assert!(mode_count(&empty, 0.2).is_err());
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let x = golden_max(|x| Ok(-(x - 1.3) * (x - 1.3)), 0.0, 4.0, 1e-9).unwrap();
        assert!((x - 1.3).abs() < 1e-8);
    }

    #[test]
    fn hg_overlap_recovers_rescaled_mode() {
        // a pure HG_21 of waist 1.4·w0 expanded on the w0 basis
        let w0 = 50.0 * UM;
        let b = basis(w0, 20);
        let nb = b.per_axis();
        let o = cross_waist_overlap(nb, w0, 3, 1.4 * w0);
        let v = DMatrix::from_fn(b.dim(), 1, |p, _| Complex::new(o[(p / nb, 2)] * o[(p % nb, 1)], 0.0));
        let norm = v.norm();
        let dec = ModeDecomposition {
            gains: vec![1.0],
            angles: vec![0.0],
            vectors: v / Complex::new(norm, 0.0),
            dominant: vec![ModeIndex::new(2, 1)],
            hg_overlaps: vec![0.0],
            basis: b,
        };
        let m = eigenmode_hg_overlap(&dec, 0).unwrap();
        assert_eq!(m.index, ModeIndex::new(2, 1));
        assert!((m.waist / w0 - 1.4).abs() < 1e-4, "{}", m.waist / w0);
        assert!(m.overlap > 1.0 - 1e-7, "{}", m.overlap);
    }
}
