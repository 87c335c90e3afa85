//! Ray-matrix model of the plane mirror / lens / curved mirror resonator.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Mul;

use rayon::prelude::*;

use crate::error::{invalid, require_positive, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Orders listed in a plain [`cavity_report`].
pub const DEFAULT_REPORT_ORDERS: usize = 4;

/// A 2×2 paraxial ray-transfer matrix `[[A, B], [C, D]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl RayMatrix {
    pub const IDENTITY: Self = Self {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn free_space(length: f64) -> Self {
        Self {
            b: length,
            ..Self::IDENTITY
        }
    }

    /// Thin lens; an infinite focal length is a no-op.
    pub fn thin_lens(focal_length: f64) -> Self {
        Self {
            c: -1.0 / focal_length,
            ..Self::IDENTITY
        }
    }

    /// Reflection from a concave mirror of radius `radius` (unfolded).
    pub fn curved_mirror(radius: f64) -> Self {
        Self {
            c: -2.0 / radius,
            ..Self::IDENTITY
        }
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }
}

impl Mul for RayMatrix {
    type Output = RayMatrix;

    fn mul(self, r: RayMatrix) -> RayMatrix {
        RayMatrix {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

/// Element positions, optics and losses of the resonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    /// Lens focal length; `f64::INFINITY` removes the lens.
    pub focal_length: f64,
    /// Curved mirror radius; `f64::INFINITY` makes it plane.
    pub mirror_radius: f64,
    /// Plane mirror to lens.
    pub l1: f64,
    /// Lens to curved mirror.
    pub l2: f64,
    pub output_transmission: f64,
    pub extra_loss: f64,
    pub crystal_length: f64,
    pub crystal_index: f64,
    pub include_crystal_optical_path: bool,
}

impl CavityGeometry {
    /// Geometry at the exact self-imaging lengths for `f` and `R`.
    pub fn self_imaging(focal_length: f64, mirror_radius: f64) -> Result<Self> {
        let (l1, l2) = self_imaging_lengths(focal_length, mirror_radius)?;
        Ok(Self {
            focal_length,
            mirror_radius,
            l1,
            l2,
            output_transmission: 0.0,
            extra_loss: 0.0,
            crystal_length: 0.0,
            crystal_index: 1.0,
            include_crystal_optical_path: false,
        })
    }

    /// Sets coupler transmission and parasitic loss from a finesse and an
    /// escape efficiency: total loss `2π/F` split as `η : 1-η`.
    pub fn with_finesse(mut self, finesse: f64, escape_efficiency: f64) -> Result<Self> {
        let (t, l) = losses_for(finesse, escape_efficiency)?;
        self.output_transmission = t;
        self.extra_loss = l;
        Ok(self)
    }

    pub fn detuned(&self, dl1: f64, dl2: f64) -> Self {
        Self {
            l1: self.l1 + dl1,
            l2: self.l2 + dl2,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be > 0, got {v}")))
            }
        };
        positive("focal_length", self.focal_length)?;
        positive("mirror_radius", self.mirror_radius)?;
        require_positive("l1", self.l1)?;
        require_positive("l2", self.l2)?;
        if !(0.0..1.0).contains(&self.output_transmission) {
            return Err(invalid("output_transmission", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.extra_loss) {
            return Err(invalid("extra_loss", "must lie in [0, 1)"));
        }
        if self.crystal_length < 0.0 || !self.crystal_length.is_finite() {
            return Err(invalid("crystal_length", "must be finite and >= 0"));
        }
        if self.crystal_index < 1.0 {
            return Err(invalid("crystal_index", "must be >= 1"));
        }
        Ok(())
    }

    /// One-way optical length used for the free spectral range.
    pub fn optical_length(&self) -> f64 {
        let extra = if self.include_crystal_optical_path {
            (self.crystal_index - 1.0) * self.crystal_length
        } else {
            0.0
        };
        self.l1 + self.l2 + extra
    }
}

/// `L1 = f + f²/R`, `L2 = f + R`.
pub fn self_imaging_lengths(focal_length: f64, mirror_radius: f64) -> Result<(f64, f64)> {
    let f = require_positive("focal_length", focal_length)?;
    let r = require_positive("mirror_radius", mirror_radius)?;
    Ok((f + f * f / r, f + r))
}

/// Inverts `F = 2π/(T + L)` and `η = T/(T + L)`.
pub fn losses_for(finesse: f64, escape_efficiency: f64) -> Result<(f64, f64)> {
    require_positive("finesse", finesse)?;
    if !(escape_efficiency > 0.0 && escape_efficiency <= 1.0) {
        return Err(invalid("escape_efficiency", "must lie in (0, 1]"));
    }
    let total = 2.0 * PI / finesse;
    Ok((total * escape_efficiency, total * (1.0 - escape_efficiency)))
}

/// Round trip starting and ending at the plane mirror.
pub fn round_trip_abcd(geom: &CavityGeometry) -> RayMatrix {
    let p1 = RayMatrix::free_space(geom.l1);
    let lens = RayMatrix::thin_lens(geom.focal_length);
    let p2 = RayMatrix::free_space(geom.l2);
    let mirror = RayMatrix::curved_mirror(geom.mirror_radius);
    // rightmost element acts first
    p1 * lens * p2 * mirror * p2 * lens * p1
}

/// Slack on `1 - ((A+D)/2)²` below which the round trip still counts as
/// stable; absorbs rounding exactly at the degeneracy point.
const STABILITY_SLACK: f64 = 1e-12;

/// Round-trip Gouy phase `θ_G` with `cos θ_G = (A+D)/2`, or `None` when
/// `|A+D| > 2`.
///
/// `sin² θ_G` is evaluated as `-BC - (A-D)²/4` (equal to `1 - ((A+D)/2)²`
/// for a unimodular matrix), which stays accurate where `acos` loses half
/// the digits near `θ_G = 0`.
pub fn round_trip_gouy(m: &RayMatrix) -> Option<f64> {
    let half_diff = 0.5 * (m.a - m.d);
    let sin2 = -m.b * m.c - half_diff * half_diff;
    (sin2 >= -STABILITY_SLACK).then(|| sin2.max(0.0).sqrt().atan2(0.5 * m.trace()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityReport {
    pub free_spectral_range: f64,
    pub finesse: f64,
    pub bandwidth_fwhm: f64,
    pub escape_efficiency: f64,
    /// `None` when `|A + D| > 2`.
    pub round_trip_gouy: Option<f64>,
    /// `(order q, q·θ_G/2π·FSR)` in Hz; empty when unstable.
    pub order_detunings: Vec<(usize, f64)>,
}

impl CavityReport {
    pub fn is_stable(&self) -> bool {
        self.round_trip_gouy.is_some()
    }

    /// Distance of an offset to the nearest longitudinal resonance.
    fn folded(&self, offset: f64) -> f64 {
        let r = offset.rem_euclid(self.free_spectral_range);
        r.min(self.free_spectral_range - r)
    }

    /// Whether order `q` lies within half a linewidth of the fundamental.
    pub fn is_co_resonant(&self, q: usize) -> bool {
        self.order_detunings
            .iter()
            .find(|(o, _)| *o == q)
            .is_some_and(|(_, off)| self.folded(*off) < 0.5 * self.bandwidth_fwhm)
    }

    /// Number of consecutive orders starting at 0 that are co-resonant.
    pub fn degenerate_orders(&self) -> usize {
        self.order_detunings
            .iter()
            .take_while(|(q, _)| self.is_co_resonant(*q))
            .count()
    }

    /// Only the fundamental order resonates.
    pub fn is_effectively_single_mode(&self) -> bool {
        self.is_stable() && !self.is_co_resonant(1)
    }
}

fn report_with_orders(geom: &CavityGeometry, max_order: usize) -> Result<CavityReport> {
    geom.validate()?;
    let loss = geom.output_transmission + geom.extra_loss;
    if loss <= 0.0 {
        return Err(invalid(
            "output_transmission + extra_loss",
            "lossless cavity has undefined finesse",
        ));
    }
    let fsr = SPEED_OF_LIGHT / (2.0 * geom.optical_length());
    let finesse = 2.0 * PI / loss;
    let round_trip_gouy = round_trip_gouy(&round_trip_abcd(geom));
    let order_detunings = match round_trip_gouy {
        Some(theta) => (0..=max_order)
            .map(|q| (q, q as f64 * theta / (2.0 * PI) * fsr))
            .collect(),
        None => Vec::new(),
    };
    Ok(CavityReport {
        free_spectral_range: fsr,
        finesse,
        bandwidth_fwhm: fsr / finesse,
        escape_efficiency: geom.output_transmission / loss,
        round_trip_gouy,
        order_detunings,
    })
}

/// Free spectral range, finesse, linewidth, escape efficiency and the
/// transverse-order resonance offsets of the low orders.
pub fn cavity_report(geom: &CavityGeometry) -> Result<CavityReport> {
    report_with_orders(geom, DEFAULT_REPORT_ORDERS)
}

/// One point of a length-detuning scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub dl1: f64,
    pub dl2: f64,
    pub report: CavityReport,
}

/// Evaluates the cavity on the grid `dl1s × dl2s` (row-major in `dl1`).
///
/// Points are computed in parallel; the output order is deterministic.
pub fn degeneracy_scan(
    geom: &CavityGeometry,
    dl1s: &[f64],
    dl2s: &[f64],
    max_order: usize,
) -> Result<Vec<ScanPoint>> {
    geom.validate()?;
    if dl1s.iter().chain(dl2s).any(|d| !d.is_finite()) {
        return Err(invalid("detuning range", "must be finite"));
    }
    let grid: Vec<(f64, f64)> = dl1s
        .iter()
        .flat_map(|&a| dl2s.iter().map(move |&b| (a, b)))
        .collect();
    grid.par_iter()
        .map(|&(dl1, dl2)| {
            let report = report_with_orders(&geom.detuned(dl1, dl2), max_order)?;
            Ok(ScanPoint { dl1, dl2, report })
        })
        .collect()
}

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// CSV `dL1,dL2,stable,gouy_rad,order,offset_hz`; unstable points get one
/// row with empty order fields.
pub fn write_scan_csv<W: Write>(out: &mut W, points: &[ScanPoint]) -> std::io::Result<()> {
    writeln!(out, "dL1,dL2,stable,gouy_rad,order,offset_hz")?;
    for p in points {
        match p.report.round_trip_gouy {
            Some(g) => {
                for (q, off) in &p.report.order_detunings {
                    writeln!(
                        out,
                        "{:.16e},{:.16e},true,{:.16e},{},{:.16e}",
                        p.dl1, p.dl2, g, q, off
                    )?;
                }
            }
            None => writeln!(out, "{:.16e},{:.16e},false,nan,,", p.dl1, p.dl2)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MM: f64 = 1e-3;

    fn paper() -> CavityGeometry {
        CavityGeometry::self_imaging(30.0 * MM, 50.0 * MM)
            .unwrap()
            .with_finesse(250.0, 0.6)
            .unwrap()
    }

    #[test]
    fn self_imaging_examples() {
        let (l1, l2) = self_imaging_lengths(30.0 * MM, 50.0 * MM).unwrap();
        assert!((l1 - 48.0 * MM).abs() < 1e-15);
        assert!((l2 - 80.0 * MM).abs() < 1e-15);
        let (l1, l2) = self_imaging_lengths(40.0 * MM, 40.0 * MM).unwrap();
        assert!((l1 - 80.0 * MM).abs() < 1e-15 && (l2 - 80.0 * MM).abs() < 1e-15);
        let (l1, l2) = self_imaging_lengths(25.0 * MM, 100.0 * MM).unwrap();
        assert!((l1 - 31.25 * MM).abs() < 1e-15);
        assert!((l2 - 125.0 * MM).abs() < 1e-15);
        assert!(self_imaging_lengths(0.0, 1.0).is_err());
        assert!(self_imaging_lengths(1.0, -2.0).is_err());
    }

    #[test]
    fn round_trip_is_identity_at_degeneracy() {
        let m = round_trip_abcd(&paper());
        assert!((m.trace().abs() - 2.0).abs() < 1e-9);
        assert!((m.determinant() - 1.0).abs() < 1e-12);
        assert!((m.a - 1.0).abs() < 1e-9 && m.b.abs() < 1e-9 && m.c.abs() < 1e-9);
    }

    #[test]
    fn plane_plane_limit() {
        let mut g = paper();
        g.focal_length = f64::INFINITY;
        g.mirror_radius = f64::INFINITY;
        let m = round_trip_abcd(&g);
        let l = g.l1 + g.l2;
        assert_eq!((m.a, m.c, m.d), (1.0, 0.0, 1.0));
        assert!((m.b - 2.0 * l).abs() < 1e-15);
    }

    #[test]
    fn report_numbers() {
        let r = cavity_report(&paper()).unwrap();
        assert!((r.free_spectral_range - 1.1710643e9).abs() < 1e3);
        assert!((r.bandwidth_fwhm - 4.684257e6).abs() < 10.0);
        assert!((r.bandwidth_fwhm * r.finesse / r.free_spectral_range - 1.0).abs() < 1e-12);
        assert!((r.escape_efficiency - 0.6).abs() < 1e-12);
        assert!(r.order_detunings.iter().all(|(_, off)| off.abs() <= 1.0));

        let (t, l) = losses_for(250.0, 0.6).unwrap();
        assert!((t - 0.015080).abs() < 1e-6 && (l - 0.010053).abs() < 1e-6);

        let mut g = paper();
        g.output_transmission = 0.02;
        g.extra_loss = 0.0;
        assert_eq!(cavity_report(&g).unwrap().escape_efficiency, 1.0);
        g.output_transmission = 0.0;
        assert!(cavity_report(&g).is_err());
    }

    #[test]
    fn crystal_path_lowers_fsr() {
        let mut g = paper();
        g.crystal_length = 10.0 * MM;
        g.crystal_index = 1.8;
        let base = cavity_report(&g).unwrap().free_spectral_range;
        g.include_crystal_optical_path = true;
        let corrected = cavity_report(&g).unwrap().free_spectral_range;
        assert!((corrected - SPEED_OF_LIGHT / (2.0 * 0.136)).abs() < 1.0);
        assert!(corrected < base);
    }

    #[test]
    fn detuned_cavity_is_single_mode() {
        let pts = degeneracy_scan(&paper(), &[0.0], &[-0.5 * MM], 3).unwrap();
        let r = &pts[0].report;
        assert!(r.is_stable());
        let off1 = r.order_detunings[1].1;
        // independent evaluation of the composed matrix: cos θ_G = 0.9998
        assert!((off1 - 3_742_293.87).abs() < 1.0, "offset {off1}");
        assert!(off1 > 0.5 * r.bandwidth_fwhm);
        assert!(r.is_effectively_single_mode());
        assert_eq!(r.degenerate_orders(), 1);
        // lengthening L1 alone keeps |A+D| = 2
        let pts = degeneracy_scan(&paper(), &[0.5 * MM], &[0.0], 3).unwrap();
        assert!(pts[0].report.order_detunings.iter().all(|(_, o)| o.abs() < 10.0));
    }

    #[test]
    fn scan_flags_instability_and_keeps_order() {
        let dl = linspace(-2.0 * MM, 2.0 * MM, 9);
        let pts = degeneracy_scan(&paper(), &dl, &dl, 2).unwrap();
        assert_eq!(pts.len(), 81);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(p.dl1, dl[i / 9]);
            assert_eq!(p.dl2, dl[i % 9]);
            let m = round_trip_abcd(&paper().detuned(p.dl1, p.dl2));
            if (m.trace().abs() - 2.0).abs() > 1e-9 {
                assert_eq!(p.report.is_stable(), m.trace().abs() < 2.0);
            }
        }
        assert!(pts.iter().any(|p| !p.report.is_stable()));
        let zero = pts.iter().find(|p| p.dl1 == 0.0 && p.dl2 == 0.0).unwrap();
        assert!(zero.report.order_detunings.iter().all(|(_, o)| o.abs() <= 1.0));
    }
}
