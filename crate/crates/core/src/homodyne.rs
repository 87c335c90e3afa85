//! Mode-selective homodyne detection: LO projection, phase-swept variance
//! and Monte Carlo traces.
//!
//! Quadrature convention: eigenmode `k` is squeezed at LO phase `θ_k/2`.
//! An LO overlapping eigenmode `k` with coefficient `c_k` measures that
//! mode at the shifted phase `θ + arg c_k`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coupling::ModeDecomposition;
use crate::error::{invalid, require_positive, Error, Result};
use crate::modes::{cross_waist_overlap, norm_squared, ModeIndex, SampledField, TransverseGrid};
use crate::squeezing::{to_decibels, variance_spectrum, EfficiencyChain, OpoDynamics, Quadratures};
use crate::Complex;

pub const DEFAULT_BINS: usize = 36;
pub const DEFAULT_CALIBRATION_FRACTION: f64 = 0.1;
pub const MIN_WINDOW_SAMPLES: usize = 100;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

/// Transverse shape of the local oscillator.
#[derive(Debug, Clone, PartialEq)]
pub enum LoShape {
    /// `HG_mn` at its waist, located in the basis waist plane. `None` uses
    /// the basis waist.
    Hg { index: ModeIndex, waist: Option<f64> },
    /// Coefficients over the decomposition's HG basis (normalized here).
    Coefficients(Vec<Complex>),
    /// A field sampled in the basis waist plane.
    Sampled { field: SampledField, grid: TransverseGrid },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOscillator {
    pub shape: LoShape,
    /// Duration of one linear `0 → 2π` phase ramp (s).
    pub sweep_period: f64,
}

impl LocalOscillator {
    pub fn hg(index: ModeIndex, waist: Option<f64>, sweep_period: f64) -> Result<Self> {
        require_positive("sweep period", sweep_period)?;
        Ok(Self {
            shape: LoShape::Hg { index, waist },
            sweep_period,
        })
    }

    pub fn with_shape(shape: LoShape, sweep_period: f64) -> Result<Self> {
        require_positive("sweep period", sweep_period)?;
        Ok(Self { shape, sweep_period })
    }

    /// LO phase at time `t` of the sweep, in `[0, 2π)`.
    pub fn phase_at(&self, t: f64) -> f64 {
        2.0 * PI * (t / self.sweep_period).rem_euclid(1.0)
    }
}

/// LO content on the eigenmodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LoProjection {
    /// `c_k = ⟨eigenmode_k|LO⟩`.
    pub coefficients: Vec<Complex>,
    /// `1 − Σ|c_k|²`: LO power on modes outside the basis (vacuum).
    pub residual: f64,
}

/// Projects the unit-normalized LO onto the eigenmodes of `dec`.
pub fn lo_projection(lo: &LocalOscillator, dec: &ModeDecomposition) -> Result<LoProjection> {
    let basis = &dec.basis;
    let nb = basis.per_axis();
    let on_basis: Vec<Complex> = match &lo.shape {
        LoShape::Hg { index, waist } => {
            let w = waist.unwrap_or(basis.beam.waist_radius);
            require_positive("LO waist", w)?;
            let o = cross_waist_overlap(nb, basis.beam.waist_radius, index.m.max(index.n) + 1, w);
            (0..basis.dim())
                .map(|j| {
                    let idx = basis.mode_at(j);
                    Complex::new(o[(idx.m, index.m)] * o[(idx.n, index.n)], 0.0)
                })
                .collect()
        }
        LoShape::Coefficients(c) => {
            if c.len() != basis.dim() {
                return Err(invalid("LO coefficients", format!("expected {} entries, got {}", basis.dim(), c.len())));
            }
            let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(invalid("local oscillator", "has zero norm"));
            }
            c.iter().map(|z| z / norm).collect()
        }
        LoShape::Sampled { field, grid } => {
            let norm = norm_squared(field, grid)?.sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(invalid("local oscillator", "has zero norm"));
            }
            basis
                .project(field, grid, basis.beam.waist_position)?
                .into_iter()
                .map(|z| z / norm)
                .collect()
        }
    };
    let b = DMatrix::from_column_slice(basis.dim(), 1, &on_basis);
    let c = dec.vectors.adjoint() * b;
    let coefficients: Vec<Complex> = c.iter().cloned().collect();
    let captured: f64 = coefficients.iter().map(|z| z.norm_sqr()).sum();
    Ok(LoProjection {
        coefficients,
        residual: (1.0 - captured).max(0.0),
    })
}

/// Phase-dependent variance seen by one LO.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    weights: Vec<f64>,
    offsets: Vec<f64>,
    quadratures: Vec<Quadratures>,
    residual: f64,
}

impl PhaseModel {
    /// `quadratures[k]` and `angles[k]` belong to eigenmode `k`.
    pub fn new(projection: &LoProjection, quadratures: &[Quadratures], angles: &[f64]) -> Result<Self> {
        let n = projection.coefficients.len();
        if quadratures.len() < n || angles.len() < n {
            return Err(invalid("spectra", "need one entry per eigenmode"));
        }
        let total: f64 = projection.coefficients.iter().map(|c| c.norm_sqr()).sum();
        if total > 1.0 + 1e-9 {
            return Err(invalid("LO projection", format!("Σ|c_k|² = {total} exceeds 1")));
        }
        Ok(Self {
            weights: projection.coefficients.iter().map(|c| c.norm_sqr()).collect(),
            offsets: projection
                .coefficients
                .iter()
                .zip(angles)
                .map(|(c, t)| c.arg() - 0.5 * t)
                .collect(),
            quadratures: quadratures[..n].to_vec(),
            residual: projection.residual,
        })
    }

    /// From the dynamics and efficiency at analysis frequency `omega`.
    pub fn from_dynamics(
        projection: &LoProjection,
        dynamics: &OpoDynamics,
        eff: &EfficiencyChain,
        omega: f64,
    ) -> Result<Self> {
        let dec = dynamics.decomposition;
        let quads: Vec<Quadratures> = (0..dec.len())
            .map(|k| variance_spectrum(dynamics, eff, k, omega))
            .collect::<Result<_>>()?;
        Self::new(projection, &quads, &dec.angles)
    }

    /// `Σ|c_k|²[V−cos²(θ + arg c_k − θ_k/2) + V+ sin²(…)] + residual`.
    pub fn variance(&self, theta: f64) -> f64 {
        let mut v = self.residual;
        for ((w, off), q) in self.weights.iter().zip(&self.offsets).zip(&self.quadratures) {
            if *w == 0.0 {
                continue;
            }
            let (s, c) = (theta + off).sin_cos();
            v += w * (q.v_minus * c * c + q.v_plus * s * s);
        }
        v
    }
}

/// Variance at LO phase `theta`; see [`PhaseModel::variance`].
pub fn variance_vs_phase(projection: &LoProjection, quadratures: &[Quadratures], angles: &[f64], theta: f64) -> Result<f64> {
    Ok(PhaseModel::new(projection, quadratures, angles)?.variance(theta))
}

/// Layout and seed of a simulated trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    /// Demodulated samples per window.
    pub window_samples: usize,
    pub windows_per_sweep: usize,
    pub sweeps: usize,
    /// Fraction of the trace spent in the pump-off calibration segment.
    pub calibration_fraction: f64,
    pub seed: u64,
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_samples < MIN_WINDOW_SAMPLES {
            return Err(invalid(
                "window samples",
                format!("need at least {MIN_WINDOW_SAMPLES}, got {}", self.window_samples),
            ));
        }
        if self.windows_per_sweep == 0 {
            return Err(invalid("windows per sweep", "must be at least 1"));
        }
        if self.sweeps < 2 {
            return Err(invalid("sweeps", format!("trace must span at least 2 sweeps, got {}", self.sweeps)));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(invalid("calibration fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn calibration_windows(&self) -> usize {
        let measured = (self.sweeps * self.windows_per_sweep) as f64;
        (measured * self.calibration_fraction / (1.0 - self.calibration_fraction)).round().max(1.0) as usize
    }
}

/// Windowed variance estimates along a swept-phase measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneTrace {
    /// Window centre times (s).
    pub times: Vec<f64>,
    /// LO phase per window; NaN in the calibration segment.
    pub phases: Vec<f64>,
    /// Unbiased sample variance per window, shot noise = 1.
    pub variances: Vec<f64>,
    /// Number of leading pump-off windows.
    pub calibration_windows: usize,
    pub window_samples: usize,
    pub seed: u64,
}

/// Draws a trace: a pump-off calibration segment, then `sweeps` linear
/// phase ramps. Window `i` uses its own ChaCha stream `i` of `seed`, so the
/// result does not depend on thread scheduling.
pub fn simulate_trace(model: &PhaseModel, lo: &LocalOscillator, config: &TraceConfig) -> Result<HomodyneTrace> {
    config.validate()?;
    let n_cal = config.calibration_windows();
    let n_meas = config.sweeps * config.windows_per_sweep;
    let dt = lo.sweep_period / config.windows_per_sweep as f64;
    let plan: Vec<(f64, f64, f64)> = (0..n_cal + n_meas)
        .map(|i| {
            let t = (i as f64 + 0.5) * dt;
            if i < n_cal {
                (t, f64::NAN, 1.0)
            } else {
                let phase = lo.phase_at(t - n_cal as f64 * dt);
                (t, phase, model.variance(phase))
            }
        })
        .collect();
    let n = config.window_samples;
    let variances: Vec<f64> = plan
        .par_iter()
        .enumerate()
        .map(|(i, &(_, _, v))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let sd = v.sqrt();
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..n {
                let x: f64 = StandardNormal.sample(&mut rng);
                let x = sd * x;
                sum += x;
                sum2 += x * x;
            }
            let mean = sum / n as f64;
            (sum2 - n as f64 * mean * mean) / (n as f64 - 1.0)
        })
        .collect();
    Ok(HomodyneTrace {
        times: plan.iter().map(|p| p.0).collect(),
        phases: plan.iter().map(|p| p.1).collect(),
        variances,
        calibration_windows: n_cal,
        window_samples: n,
        seed: config.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBin {
    /// Bin centre in `[0, 2π)`.
    pub phase: f64,
    /// Mean calibrated variance.
    pub mean: f64,
    /// 95% interval of the mean.
    pub lower: f64,
    pub upper: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub bins: Vec<PhaseBin>,
    /// Raw mean of the calibration windows (ideally 1).
    pub calibration_mean: f64,
    pub min_db: f64,
    pub max_db: f64,
}

/// Bins windows by LO phase, normalizes by the calibration mean and returns
/// per-bin means with 95% intervals.
pub fn estimate_noise_power(trace: &HomodyneTrace, bins: usize) -> Result<NoiseEstimate> {
    if bins == 0 {
        return Err(invalid("bins", "must be at least 1"));
    }
    if trace.calibration_windows == 0 || trace.calibration_windows > trace.variances.len() {
        return Err(Error::Missing("trace has no calibration segment".into()));
    }
    let cal = &trace.variances[..trace.calibration_windows];
    let calibration_mean = cal.iter().sum::<f64>() / cal.len() as f64;
    require_positive("calibration mean", calibration_mean)?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for (phase, v) in trace.phases.iter().zip(&trace.variances).skip(trace.calibration_windows) {
        let b = ((phase.rem_euclid(2.0 * PI) / (2.0 * PI)) * bins as f64) as usize;
        groups[b.min(bins - 1)].push(v / calibration_mean);
    }
    let width = 2.0 * PI / bins as f64;
    let out: Vec<PhaseBin> = groups
        .iter()
        .enumerate()
        .map(|(b, g)| {
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            let half = if g.len() > 1 {
                let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Z95 * (var / n).sqrt()
            } else {
                f64::NAN
            };
            PhaseBin {
                phase: (b as f64 + 0.5) * width,
                mean,
                lower: mean - half,
                upper: mean + half,
                windows: g.len(),
            }
        })
        .collect();
    let filled: Vec<f64> = out.iter().filter(|b| b.windows > 0).map(|b| b.mean).collect();
    if filled.is_empty() {
        return Err(Error::Missing("trace has no swept windows".into()));
    }
    let min = filled.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = filled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(NoiseEstimate {
        bins: out,
        calibration_mean,
        min_db: to_decibels(min)?,
        max_db: to_decibels(max)?,
    })
}

/// CSV `t_s,phase_rad,variance,variance_db`.
pub fn write_trace_csv<W: Write>(out: &mut W, trace: &HomodyneTrace) -> Result<()> {
    writeln!(out, "t_s,phase_rad,variance,variance_db")?;
    for ((t, p), v) in trace.times.iter().zip(&trace.phases).zip(&trace.variances) {
        writeln!(out, "{t:.16e},{p:.16e},{v:.16e},{:.16e}", to_decibels(*v)?)?;
    }
    Ok(())
}

/// CSV `mode,min_db,max_db`.
pub fn write_summary_csv<W: Write>(out: &mut W, rows: &[(String, &NoiseEstimate)]) -> Result<()> {
    writeln!(out, "mode,min_db,max_db")?;
    for (mode, est) in rows {
        writeln!(out, "{mode},{:.16e},{:.16e}", est.min_db, est.max_db)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v_minus: f64, v_plus: f64) -> Quadratures {
        Quadratures {
            v_minus,
            v_plus,
            divergent: false,
        }
    }

    fn single(c: Complex, residual: f64) -> LoProjection {
        LoProjection {
            coefficients: vec![c],
            residual,
        }
    }

    #[test]
    fn single_mode_phase_curve() {
        let p = single(Complex::new(1.0, 0.0), 0.0);
        let model = PhaseModel::new(&p, &[q(0.5, 2.0)], &[0.8]).unwrap();
        assert!((model.variance(0.4) - 0.5).abs() < 1e-15);
        assert!((model.variance(0.4 + PI / 2.0) - 2.0).abs() < 1e-14);
        let avg: f64 = (0..1000).map(|i| model.variance(2.0 * PI * i as f64 / 1000.0)).sum::<f64>() / 1000.0;
        assert!((avg - 1.25).abs() < 1e-12);
        for th in [0.0, 0.3, 2.0] {
            assert!((model.variance(th + PI) - model.variance(th)).abs() < 1e-14);
        }
    }

    #[test]
    fn half_overlap_mixes_with_vacuum() {
        let p = single(Complex::new(0.5f64.sqrt(), 0.0), 0.5);
        let v = variance_vs_phase(&p, &[q(0.759, 1.4)], &[0.0], 0.0).unwrap();
        assert!((v - 0.8795).abs() < 1e-12);
        assert!((to_decibels(v).unwrap() + 0.557).abs() < 1e-3);
    }

    #[test]
    fn lo_phase_shifts_the_curve() {
        let p = single(Complex::from_polar(1.0, 0.3), 0.0);
        let model = PhaseModel::new(&p, &[q(0.5, 2.0)], &[0.0]).unwrap();
        assert!((model.variance(-0.3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overfull_projection_rejected() {
        let p = single(Complex::new(1.1, 0.0), 0.0);
        assert!(PhaseModel::new(&p, &[q(0.5, 2.0)], &[0.0]).is_err());
    }

    #[test]
    fn trace_layout_and_validation() {
        let lo = LocalOscillator::hg(ModeIndex::new(0, 0), None, 1e-3).unwrap();
        let model = PhaseModel::new(&single(Complex::new(1.0, 0.0), 0.0), &[q(1.0, 1.0)], &[0.0]).unwrap();
        let cfg = TraceConfig {
            window_samples: 200,
            windows_per_sweep: 36,
            sweeps: 2,
            calibration_fraction: 0.1,
            seed: 7,
        };
        let trace = simulate_trace(&model, &lo, &cfg).unwrap();
        assert_eq!(trace.calibration_windows, 8);
        assert_eq!(trace.variances.len(), 80);
        assert!(trace.phases[..8].iter().all(|p| p.is_nan()));
        assert!(trace.phases[8..].iter().all(|p| (0.0..2.0 * PI).contains(p)));
        for bad in [
            TraceConfig { window_samples: 99, ..cfg },
            TraceConfig { sweeps: 1, ..cfg },
            TraceConfig { windows_per_sweep: 0, ..cfg },
        ] {
            assert!(simulate_trace(&model, &lo, &bad).is_err());
        }
        let mut no_cal = trace.clone();
        no_cal.calibration_windows = 0;
        assert!(matches!(estimate_noise_power(&no_cal, 36), Err(Error::Missing(_))));
    }

    #[test]
    fn vacuum_trace_is_shot_noise() {
        let lo = LocalOscillator::hg(ModeIndex::new(0, 0), None, 1e-3).unwrap();
        let model = PhaseModel::new(&single(Complex::new(1.0, 0.0), 0.0), &[q(1.0, 1.0)], &[0.0]).unwrap();
        let cfg = TraceConfig {
            window_samples: 20_000,
            windows_per_sweep: 72,
            sweeps: 3,
            calibration_fraction: 0.1,
            seed: 11,
        };
        let trace = simulate_trace(&model, &lo, &cfg).unwrap();
        let tol = 3.0 * (2.0 / 20_000f64).sqrt();
        assert!(trace.variances.iter().all(|v| (v - 1.0).abs() < 1.5 * tol));
        let est = estimate_noise_power(&trace, DEFAULT_BINS).unwrap();
        assert!(est.bins.iter().all(|b| b.windows == 6));
        assert!(est.min_db.abs() < 0.1 && est.max_db.abs() < 0.1);
        let again = simulate_trace(&model, &lo, &cfg).unwrap();
        assert_eq!(trace.variances, again.variances);
        assert_eq!(trace.times, again.times);
    }
}
