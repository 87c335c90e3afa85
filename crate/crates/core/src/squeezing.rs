//! Below-threshold quadrature variances of the squeezed eigenmodes.
//!
//! Each eigenmode obeys `dS/dt = −γS + Λ_k e^{iθ_k} S† + √(2γ) S_in`. The
//! output variances at analysis frequency `Ω`, relative to shot noise, are
//!
//! ```text
//! V∓(Ω) = 1 ∓ η·4σ / ((1 ± σ)² + (Ω/γ)²),   σ = r·Λ_k/Λ_0
//! ```
//!
//! `γ` is the field half-width: `γ = π·FWHM` with the FWHM in Hz.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;
use std::io::Write;

use crate::coupling::ModeDecomposition;
use crate::error::{invalid, require_positive, Error, Result};

/// `V_plus` above this is reported as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Calibration accuracy on the target variance.
pub const CALIBRATION_TOLERANCE: f64 = 1e-6;

/// Cavity decay, pump ratio and the gains they act on.
#[derive(Debug, Clone, Copy)]
pub struct OpoDynamics<'a> {
    /// Field decay rate `γ` (s⁻¹).
    pub cavity_decay: f64,
    /// Pump power relative to the threshold of eigenmode 0.
    pub pump_ratio: f64,
    pub decomposition: &'a ModeDecomposition,
}

impl<'a> OpoDynamics<'a> {
    pub fn new(decomposition: &'a ModeDecomposition, cavity_decay: f64, pump_ratio: f64) -> Result<Self> {
        require_positive("cavity decay", cavity_decay)?;
        if !(0.0..=1.0).contains(&pump_ratio) {
            return Err(invalid("pump ratio", format!("must lie in [0, 1], got {pump_ratio}")));
        }
        Ok(Self {
            cavity_decay,
            pump_ratio,
            decomposition,
        })
    }

    /// `γ = π·bandwidth_fwhm`.
    pub fn from_bandwidth(decomposition: &'a ModeDecomposition, bandwidth_fwhm: f64, pump_ratio: f64) -> Result<Self> {
        require_positive("cavity bandwidth", bandwidth_fwhm)?;
        Self::new(decomposition, PI * bandwidth_fwhm, pump_ratio)
    }

    pub fn with_pump_ratio(&self, pump_ratio: f64) -> Result<Self> {
        Self::new(self.decomposition, self.cavity_decay, pump_ratio)
    }

    /// Normalized pump `σ_k = r·Λ_k/Λ_0` of eigenmode `k`.
    pub fn sigma(&self, k: usize) -> Result<f64> {
        let gains = &self.decomposition.gains;
        let l0 = *gains
            .first()
            .ok_or_else(|| Error::Missing("mode decomposition is empty".into()))?;
        if l0 <= 0.0 {
            return Err(invalid("Λ_0", "must be > 0 (no parametric gain)"));
        }
        let lk = *gains
            .get(k)
            .ok_or_else(|| invalid("mode index", format!("{k} out of range ({})", gains.len())))?;
        Ok(self.pump_ratio * lk / l0)
    }
}

/// Detection efficiency factors; visibility enters squared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyChain {
    pub escape: f64,
    pub propagation: f64,
    pub detector_quantum: f64,
    pub homodyne_visibility: f64,
}

impl EfficiencyChain {
    pub fn new(escape: f64, propagation: f64, detector_quantum: f64, homodyne_visibility: f64) -> Result<Self> {
        let chain = Self {
            escape,
            propagation,
            detector_quantum,
            homodyne_visibility,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub const IDEAL: Self = Self {
        escape: 1.0,
        propagation: 1.0,
        detector_quantum: 1.0,
        homodyne_visibility: 1.0,
    };

    /// All loss lumped into the escape factor.
    pub fn lumped(total: f64) -> Result<Self> {
        Self::new(total, 1.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("escape efficiency", self.escape),
            ("propagation efficiency", self.propagation),
            ("detector quantum efficiency", self.detector_quantum),
            ("homodyne visibility", self.homodyne_visibility),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// `η = escape·propagation·detector·visibility²`.
    pub fn total(&self) -> f64 {
        self.escape * self.propagation * self.detector_quantum * self.homodyne_visibility.powi(2)
    }
}

/// Squeezed and anti-squeezed variances of one mode at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratures {
    pub v_minus: f64,
    pub v_plus: f64,
    /// `v_plus` exceeds [`DIVERGENCE_LIMIT`] (or is infinite at threshold).
    pub divergent: bool,
}

/// `(Λ_0 − Λ_k)/(Λ_0 + Λ_k)`.
pub fn min_variance_paper(dec: &ModeDecomposition, k: usize) -> Result<f64> {
    let l0 = *dec
        .gains
        .first()
        .ok_or_else(|| Error::Missing("mode decomposition is empty".into()))?;
    if l0 <= 0.0 {
        return Err(invalid("Λ_0", "must be > 0 (no parametric gain)"));
    }
    let lk = *dec
        .gains
        .get(k)
        .ok_or_else(|| invalid("mode index", format!("{k} out of range ({})", dec.len())))?;
    Ok((l0 - lk) / (l0 + lk))
}

/// Variances for normalized pump `sigma`, efficiency `eta` and
/// `x = Ω/γ`.
///
/// Evaluated as `(1 − η) + η·((1 ∓ σ)² + x²)/((1 ± σ)² + x²)`, which is the
/// same expression without the cancellation near threshold.
pub fn quadratures(sigma: f64, eta: f64, x: f64) -> Result<Quadratures> {
    if !(sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
    }
    if sigma > 1.0 {
        return Err(Error::AboveThreshold { sigma });
    }
    let x2 = x * x;
    let lo = (1.0 - sigma).powi(2) + x2;
    let hi = (1.0 + sigma).powi(2) + x2;
    let v_minus = (1.0 - eta) + eta * lo / hi;
    let v_plus = if lo == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - eta) + eta * hi / lo
    };
    Ok(Quadratures {
        v_minus,
        v_plus,
        divergent: !(v_plus <= DIVERGENCE_LIMIT),
    })
}

/// Output variances of eigenmode `k` at angular frequency `omega`.
pub fn variance_spectrum(dynamics: &OpoDynamics, eff: &EfficiencyChain, k: usize, omega: f64) -> Result<Quadratures> {
    eff.validate()?;
    if !omega.is_finite() {
        return Err(invalid("analysis frequency", "must be finite"));
    }
    quadratures(dynamics.sigma(k)?, eff.total(), omega / dynamics.cavity_decay)
}

/// `10·log10(V)`.
pub fn to_decibels(v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(invalid("variance", format!("must be > 0 for dB, got {v}")));
    }
    Ok(10.0 * v.log10())
}

pub fn from_decibels(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Which parameter is held fixed during calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pinned {
    /// Efficiency fixed; the pump ratio is solved by bisection.
    Efficiency(EfficiencyChain),
    /// Pump ratio fixed; the total efficiency is solved and lumped.
    PumpRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub efficiency: EfficiencyChain,
    pub pump_ratio: f64,
    /// Variance of the target mode at the calibrated point.
    pub variance: f64,
}

/// Solves for the free parameter so that `V_minus` of `target_mode` at
/// `omega` equals `10^(target_db/10)` within [`CALIBRATION_TOLERANCE`].
pub fn calibrate_to_measurement(
    dec: &ModeDecomposition,
    cavity_decay: f64,
    pinned: Pinned,
    target_mode: usize,
    target_db: f64,
    omega: f64,
) -> Result<Calibration> {
    if !(target_db <= 0.0) {
        return Err(invalid("target", format!("squeezing target must be <= 0 dB, got {target_db}")));
    }
    let target = from_decibels(target_db);
    let x = omega / cavity_decay;
    let probe = OpoDynamics::new(dec, cavity_decay, 1.0)?;
    let sigma_max = probe.sigma(target_mode)?;
    match pinned {
        Pinned::Efficiency(eff) => {
            eff.validate()?;
            let eta = eff.total();
            let best = quadratures(sigma_max, eta, x)?.v_minus;
            if target < best - CALIBRATION_TOLERANCE {
                return Err(Error::Unachievable {
                    target_db,
                    bound_db: if best > 0.0 { to_decibels(best)? } else { f64::NEG_INFINITY },
                });
            }
            if target_db == 0.0 {
                return Ok(Calibration {
                    efficiency: eff,
                    pump_ratio: 0.0,
                    variance: 1.0,
                });
            }
            // V_minus decreases monotonically in r
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let v = quadratures(mid * sigma_max, eta, x)?.v_minus;
                if v > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            let r = 0.5 * (lo + hi);
            let variance = quadratures(r * sigma_max, eta, x)?.v_minus;
            Ok(Calibration {
                efficiency: eff,
                pump_ratio: r,
                variance,
            })
        }
        Pinned::PumpRatio(r) => {
            let dynamics = probe.with_pump_ratio(r)?;
            let ideal = quadratures(dynamics.sigma(target_mode)?, 1.0, x)?.v_minus;
            let depth = 1.0 - ideal;
            if target_db == 0.0 {
                return Err(invalid("target", "0 dB needs no efficiency; pin the efficiency instead"));
            }
            let eta = (1.0 - target) / depth;
            if !(depth > 0.0) || eta > 1.0 {
                return Err(Error::Unachievable {
                    target_db,
                    bound_db: if depth > 0.0 { to_decibels(ideal)? } else { 0.0 },
                });
            }
            let efficiency = EfficiencyChain::lumped(eta)?;
            let variance = quadratures(dynamics.sigma(target_mode)?, eta, x)?.v_minus;
            Ok(Calibration {
                efficiency,
                pump_ratio: r,
                variance,
            })
        }
    }
}

/// CSV `k,omega_hz,v_minus,v_plus,v_minus_db` for modes `0..modes` and
/// analysis frequencies `omegas` (angular); `omega_hz` is `Ω/2π`.
pub fn write_spectrum_csv<W: Write>(
    out: &mut W,
    dynamics: &OpoDynamics,
    eff: &EfficiencyChain,
    modes: usize,
    omegas: &[f64],
) -> Result<()> {
    writeln!(out, "k,omega_hz,v_minus,v_plus,v_minus_db")?;
    for k in 0..modes.min(dynamics.decomposition.len()) {
        for &omega in omegas {
            let q = variance_spectrum(dynamics, eff, k, omega)?;
            writeln!(
                out,
                "{k},{:.16e},{:.16e},{:.16e},{:.16e}",
                omega / (2.0 * PI),
                q.v_minus,
                q.v_plus,
                to_decibels(q.v_minus)?
            )?;
        }
    }
    Ok(())
}
