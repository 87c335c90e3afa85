//! TOML experiment configuration with unit-suffixed quantities.
//!
//! Dimensional values are strings such as `"30 mm"`, `"4.68 MHz"` or
//! `"120 um"`; a bare number is only accepted where the quantity is
//! dimensionless. Every field error names its `section.key`.
//!
//! [`ExperimentConfig::to_toml`] writes the fully resolved configuration in
//! SI units; reading it back yields an identical configuration. Its SHA-256
//! is the config hash stamped on every output file.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::cavity::{losses_for, self_imaging_lengths, CavityGeometry};
use crate::coupling::CrystalParams;
use crate::error::{Error, Result};
use crate::homodyne::{DEFAULT_BINS, DEFAULT_CALIBRATION_FRACTION};
use crate::modes::ModeIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lengths {
    SelfImaging,
    Explicit { l1: f64, l2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Losses {
    Finesse { finesse: f64, escape_efficiency: f64 },
    Transmission { output_transmission: f64, extra_loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig {
    pub focal_length: f64,
    pub mirror_radius: f64,
    pub lengths: Lengths,
    pub losses: Losses,
    pub include_crystal_optical_path: bool,
}

impl CavityConfig {
    pub fn geometry(&self, crystal: &CrystalParams) -> Result<CavityGeometry> {
        let (l1, l2) = match self.lengths {
            Lengths::SelfImaging => self_imaging_lengths(self.focal_length, self.mirror_radius)?,
            Lengths::Explicit { l1, l2 } => (l1, l2),
        };
        let (output_transmission, extra_loss) = match self.losses {
            Losses::Finesse {
                finesse,
                escape_efficiency,
            } => losses_for(finesse, escape_efficiency)?,
            Losses::Transmission {
                output_transmission,
                extra_loss,
            } => (output_transmission, extra_loss),
        };
        let g = CavityGeometry {
            focal_length: self.focal_length,
            mirror_radius: self.mirror_radius,
            l1,
            l2,
            output_transmission,
            extra_loss,
            crystal_length: crystal.length,
            crystal_index: crystal.signal_index,
            include_crystal_optical_path: self.include_crystal_optical_path,
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpConfig {
    pub wavelength: f64,
    pub waist: f64,
    pub power: f64,
    pub waist_position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Fixed(usize),
    /// Grow from 10 in steps of 5 until the leading gains converge.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig {
    pub truncation: Truncation,
    /// `None`: optimized.
    pub waist: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyConfig {
    /// `None`: taken from the cavity, `T/(T + L)`.
    pub escape: Option<f64>,
    pub propagation: f64,
    pub detector_quantum: f64,
    pub homodyne_visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatingPoint {
    PumpRatio(f64),
    /// Pump ratio solved so `mode` shows `db` at the analysis frequency.
    Target { mode: usize, db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingConfig {
    /// Hz.
    pub analysis_frequency: f64,
    pub operating_point: OperatingPoint,
    /// Hz.
    pub spectrum_max_frequency: f64,
    pub spectrum_points: usize,
    pub reported_modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoWaist {
    /// Waist of the best single-HG match of the eigenmode it selects.
    Matched,
    /// The signal basis waist.
    Basis,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneConfig {
    pub lo_modes: Vec<ModeIndex>,
    pub lo_waist: LoWaist,
    pub window_samples: usize,
    pub windows_per_sweep: usize,
    pub sweeps: usize,
    /// s.
    pub sweep_period: f64,
    pub calibration_fraction: f64,
    pub bins: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignConfig {
    pub scan_half_range: f64,
    pub scan_points: usize,
    pub max_order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    pub profile_modes: usize,
    pub profile_points: usize,
    /// `None`: three basis waists.
    pub profile_half_width: Option<f64>,
}

/// Fully resolved experiment description, SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cavity: CavityConfig,
    pub crystal: CrystalParams,
    pub pump: PumpConfig,
    pub signal_wavelength: f64,
    pub basis: BasisConfig,
    pub efficiency: EfficiencyConfig,
    pub squeezing: SqueezingConfig,
    pub homodyne: HomodyneConfig,
    pub design: DesignConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

pub const DEFAULT_TRUNCATION: usize = 20;
pub const DEFAULT_ESCAPE_EFFICIENCY: f64 = 0.6;

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        field: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
        field: "<file>".into(),
        reason: e.message().to_string(),
    })?;
    const SECTIONS: [&str; 10] = [
        "cavity",
        "crystal",
        "pump",
        "signal",
        "basis",
        "efficiency",
        "squeezing",
        "homodyne",
        "design",
        "output",
    ];
    for (k, v) in &root {
        if !SECTIONS.contains(&k.as_str()) {
            return Err(field_err(k, "unknown section"));
        }
        if !v.is_table() {
            return Err(field_err(k, "must be a table"));
        }
    }
    let section = |name: &'static str| Section::new(name, root.get(name).and_then(Value::as_table));
    let mut warnings = Vec::new();

    let s = section("cavity");
    let focal_length = s.required(|s| s.quantity("focal_length", Dim::Length))?;
    let mirror_radius = s.required(|s| s.quantity("mirror_radius", Dim::Length))?;
    let mode = s.string("lengths")?;
    let l1 = s.quantity("l1", Dim::Length)?;
    let l2 = s.quantity("l2", Dim::Length)?;
    let lengths = match (mode.as_deref(), l1, l2) {
        (None | Some("self-imaging"), None, None) => Lengths::SelfImaging,
        (None | Some("explicit"), Some(l1), Some(l2)) => Lengths::Explicit { l1, l2 },
        (Some("self-imaging"), _, _) => return Err(field_err("cavity.l1", "not allowed with lengths = \"self-imaging\"")),
        (Some(other), _, _) if other != "explicit" => {
            return Err(field_err("cavity.lengths", "must be \"self-imaging\" or \"explicit\""))
        }
        _ => return Err(field_err("cavity.l1", "l1 and l2 must be given together")),
    };
    let finesse = s.number("finesse")?;
    let escape = s.number("escape_efficiency")?;
    let transmission = s.number("output_transmission")?;
    let extra_loss = s.number("extra_loss")?;
    let losses = match (finesse, transmission) {
        (Some(finesse), None) => {
            if extra_loss.is_some() {
                return Err(field_err("cavity.extra_loss", "use escape_efficiency together with finesse"));
            }
            Losses::Finesse {
                finesse,
                escape_efficiency: escape.unwrap_or(DEFAULT_ESCAPE_EFFICIENCY),
            }
        }
        (None, Some(output_transmission)) => {
            if escape.is_some() {
                return Err(field_err("cavity.escape_efficiency", "use extra_loss together with output_transmission"));
            }
            Losses::Transmission {
                output_transmission,
                extra_loss: extra_loss.unwrap_or(0.0),
            }
        }
        (Some(_), Some(_)) => return Err(field_err("cavity.finesse", "give either finesse or output_transmission")),
        (None, None) => return Err(field_err("cavity.finesse", "missing (or give output_transmission)")),
    };
    let include_crystal_optical_path = s.boolean("include_crystal_optical_path")?.unwrap_or(false);
    s.finish()?;
    let cavity = CavityConfig {
        focal_length,
        mirror_radius,
        lengths,
        losses,
        include_crystal_optical_path,
    };

    let s = section("crystal");
    let crystal = CrystalParams {
        length: s.required(|s| s.quantity("length", Dim::Length))?,
        signal_index: s.required(|s| s.number("signal_index"))?,
        phase_mismatch: s.quantity("phase_mismatch", Dim::InverseLength)?.unwrap_or(0.0),
        gain_scale: s.number("gain_scale")?.unwrap_or(1.0),
    };
    s.finish()?;
    crystal.validate().map_err(|e| at("crystal", e))?;

    let s = section("signal");
    let signal_wavelength = s.quantity("wavelength", Dim::Length)?;
    s.finish()?;
    let s = section("pump");
    let pump_wavelength = s.quantity("wavelength", Dim::Length)?;
    let (signal_wavelength, pump_wavelength) = match (signal_wavelength, pump_wavelength) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, a / 2.0),
        (None, Some(b)) => (2.0 * b, b),
        (None, None) => (1.064e-6, 0.532e-6),
    };
    let pump = PumpConfig {
        wavelength: pump_wavelength,
        waist: s.required(|s| s.quantity("waist", Dim::Length))?,
        power: s.quantity("power", Dim::Power)?.unwrap_or(1.0),
        waist_position: s.quantity("waist_position", Dim::Length)?.unwrap_or(0.0),
    };
    s.finish()?;
    if ((pump.wavelength - signal_wavelength / 2.0) / pump.wavelength).abs() > 1e-9 {
        warnings.push(format!(
            "pump wavelength {} m is not half the signal wavelength {} m (non-degenerate operation is not modelled)",
            pump.wavelength, signal_wavelength
        ));
    }
    if pump.waist_position.abs() > 0.5 * crystal.length {
        return Err(field_err("pump.waist_position", "must lie inside the crystal"));
    }

    let s = section("basis");
    let truncation = match s.get("truncation") {
        None => Truncation::Fixed(DEFAULT_TRUNCATION),
        Some(Value::String(t)) if t == "auto" => Truncation::Auto,
        Some(Value::Integer(n)) if *n >= 0 => Truncation::Fixed(*n as usize),
        Some(_) => return Err(field_err("basis.truncation", "must be a nonnegative integer or \"auto\"")),
    };
    let waist = match s.get("waist") {
        None => None,
        Some(Value::String(t)) if t == "auto" => None,
        Some(_) => s.quantity("waist", Dim::Length)?,
    };
    s.finish()?;
    let basis = BasisConfig { truncation, waist };

    let s = section("efficiency");
    let escape = match s.get("escape") {
        None => None,
        Some(Value::String(t)) if t == "cavity" => None,
        Some(_) => s.number("escape")?,
    };
    let efficiency = EfficiencyConfig {
        escape,
        propagation: s.number("propagation")?.unwrap_or(1.0),
        detector_quantum: s.number("detector_quantum")?.unwrap_or(1.0),
        homodyne_visibility: s.number("homodyne_visibility")?.unwrap_or(1.0),
    };
    s.finish()?;
    for (k, v) in [
        ("efficiency.escape", efficiency.escape.unwrap_or(1.0)),
        ("efficiency.propagation", efficiency.propagation),
        ("efficiency.detector_quantum", efficiency.detector_quantum),
        ("efficiency.homodyne_visibility", efficiency.homodyne_visibility),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(field_err(k, "must lie in (0, 1]"));
        }
    }

    let s = section("squeezing");
    let ratio = s.number("pump_ratio")?;
    let target = s.quantity("target", Dim::Decibel)?;
    let target_mode = s.integer("target_mode")?;
    let operating_point = match (ratio, target) {
        (Some(r), None) => {
            if target_mode.is_some() {
                return Err(field_err("squeezing.target_mode", "only used with squeezing.target"));
            }
            if !(0.0..=1.0).contains(&r) {
                return Err(field_err("squeezing.pump_ratio", "must lie in [0, 1]"));
            }
            OperatingPoint::PumpRatio(r)
        }
        (None, Some(db)) => {
            if db > 0.0 {
                return Err(field_err("squeezing.target", "must be <= 0 dB"));
            }
            OperatingPoint::Target {
                mode: target_mode.unwrap_or(0) as usize,
                db,
            }
        }
        (None, None) => OperatingPoint::PumpRatio(0.5),
        (Some(_), Some(_)) => return Err(field_err("squeezing.pump_ratio", "give either pump_ratio or target")),
    };
    let squeezing = SqueezingConfig {
        analysis_frequency: s.quantity("analysis_frequency", Dim::Frequency)?.unwrap_or(3e6),
        operating_point,
        spectrum_max_frequency: s.quantity("spectrum_max_frequency", Dim::Frequency)?.unwrap_or(20e6),
        spectrum_points: s.integer("spectrum_points")?.unwrap_or(201) as usize,
        reported_modes: s.integer("reported_modes")?.unwrap_or(10) as usize,
    };
    s.finish()?;
    if squeezing.spectrum_points < 2 {
        return Err(field_err("squeezing.spectrum_points", "must be at least 2"));
    }

    let s = section("homodyne");
    let lo_modes = match s.get("lo_modes") {
        None => vec![ModeIndex::new(0, 0)],
        Some(Value::Array(items)) if !items.is_empty() => items
            .iter()
            .map(parse_mode_index)
            .collect::<std::result::Result<Vec<_>, String>>()
            .map_err(|r| field_err("homodyne.lo_modes", &r))?,
        Some(_) => return Err(field_err("homodyne.lo_modes", "must be a nonempty array")),
    };
    let lo_waist = match s.get("lo_waist") {
        None => LoWaist::Matched,
        Some(Value::String(t)) if t == "matched" => LoWaist::Matched,
        Some(Value::String(t)) if t == "basis" => LoWaist::Basis,
        Some(_) => LoWaist::Fixed(s.quantity("lo_waist", Dim::Length)?.unwrap_or_default()),
    };
    let homodyne = HomodyneConfig {
        lo_modes,
        lo_waist,
        window_samples: s.integer("window_samples")?.unwrap_or(10_000) as usize,
        windows_per_sweep: s.integer("windows_per_sweep")?.unwrap_or(360) as usize,
        sweeps: s.integer("sweeps")?.unwrap_or(10) as usize,
        sweep_period: s.quantity("sweep_period", Dim::Time)?.unwrap_or(1e-3),
        calibration_fraction: s.number("calibration_fraction")?.unwrap_or(DEFAULT_CALIBRATION_FRACTION),
        bins: s.integer("bins")?.unwrap_or(DEFAULT_BINS as u64) as usize,
        seed: s.integer("seed")?.unwrap_or(0),
    };
    s.finish()?;
    if homodyne.window_samples < crate::homodyne::MIN_WINDOW_SAMPLES {
        return Err(field_err("homodyne.window_samples", "must be at least 100"));
    }
    if homodyne.sweeps < 2 {
        return Err(field_err("homodyne.sweeps", "must be at least 2"));
    }
    if homodyne.windows_per_sweep == 0 || homodyne.bins == 0 {
        return Err(field_err("homodyne.windows_per_sweep", "windows_per_sweep and bins must be >= 1"));
    }
    if !(homodyne.calibration_fraction > 0.0 && homodyne.calibration_fraction < 1.0) {
        return Err(field_err("homodyne.calibration_fraction", "must lie in (0, 1)"));
    }

    let s = section("design");
    let design = DesignConfig {
        scan_half_range: s.quantity("scan_half_range", Dim::Length)?.unwrap_or(1e-3),
        scan_points: s.integer("scan_points")?.unwrap_or(41) as usize,
        max_order: s.integer("max_order")?.unwrap_or(4) as usize,
    };
    s.finish()?;
    if design.scan_points == 0 {
        return Err(field_err("design.scan_points", "must be at least 1"));
    }

    let s = section("output");
    let output = OutputConfig {
        directory: s.string("directory")?.map(PathBuf::from),
        profile_modes: s.integer("profile_modes")?.unwrap_or(6) as usize,
        profile_points: s.integer("profile_points")?.unwrap_or(65) as usize,
        profile_half_width: s.quantity("profile_half_width", Dim::Length)?,
    };
    s.finish()?;
    if output.profile_points < 2 {
        return Err(field_err("output.profile_points", "must be at least 2"));
    }

    let config = ExperimentConfig {
        cavity,
        crystal,
        pump,
        signal_wavelength,
        basis,
        efficiency,
        squeezing,
        homodyne,
        design,
        output,
    };
    config.cavity.geometry(&config.crystal).map_err(|e| at("cavity", e))?;
    Ok(LoadedConfig { config, warnings })
}

impl ExperimentConfig {
    /// Resolved configuration as TOML, SI units, shortest round-trip
    /// number formatting.
    pub fn to_toml(&self) -> String {
        let mut o = String::new();
        let c = &self.cavity;
        let _ = writeln!(o, "[cavity]");
        let _ = writeln!(o, "focal_length = \"{} m\"", c.focal_length);
        let _ = writeln!(o, "mirror_radius = \"{} m\"", c.mirror_radius);
        match c.lengths {
            Lengths::SelfImaging => {
                let _ = writeln!(o, "lengths = \"self-imaging\"");
            }
            Lengths::Explicit { l1, l2 } => {
                let _ = writeln!(o, "lengths = \"explicit\"\nl1 = \"{l1} m\"\nl2 = \"{l2} m\"");
            }
        }
        match c.losses {
            Losses::Finesse {
                finesse,
                escape_efficiency,
            } => {
                let _ = writeln!(o, "finesse = {}\nescape_efficiency = {}", num(finesse), num(escape_efficiency));
            }
            Losses::Transmission {
                output_transmission,
                extra_loss,
            } => {
                let _ = writeln!(
                    o,
                    "output_transmission = {}\nextra_loss = {}",
                    num(output_transmission),
                    num(extra_loss)
                );
            }
        }
        let _ = writeln!(o, "include_crystal_optical_path = {}", c.include_crystal_optical_path);

        let k = &self.crystal;
        let _ = writeln!(
            o,
            "\n[crystal]\nlength = \"{} m\"\nsignal_index = {}\nphase_mismatch = \"{} 1/m\"\ngain_scale = {}",
            k.length,
            num(k.signal_index),
            k.phase_mismatch,
            num(k.gain_scale)
        );
        let p = &self.pump;
        let _ = writeln!(
            o,
            "\n[pump]\nwavelength = \"{} m\"\nwaist = \"{} m\"\npower = \"{} W\"\nwaist_position = \"{} m\"",
            p.wavelength, p.waist, p.power, p.waist_position
        );
        let _ = writeln!(o, "\n[signal]\nwavelength = \"{} m\"", self.signal_wavelength);

        let _ = writeln!(o, "\n[basis]");
        match self.basis.truncation {
            Truncation::Fixed(n) => {
                let _ = writeln!(o, "truncation = {n}");
            }
            Truncation::Auto => {
                let _ = writeln!(o, "truncation = \"auto\"");
            }
        }
        match self.basis.waist {
            Some(w) => {
                let _ = writeln!(o, "waist = \"{w} m\"");
            }
            None => {
                let _ = writeln!(o, "waist = \"auto\"");
            }
        }

        let e = &self.efficiency;
        let _ = writeln!(o, "\n[efficiency]");
        match e.escape {
            Some(v) => {
                let _ = writeln!(o, "escape = {}", num(v));
            }
            None => {
                let _ = writeln!(o, "escape = \"cavity\"");
            }
        }
        let _ = writeln!(
            o,
            "propagation = {}\ndetector_quantum = {}\nhomodyne_visibility = {}",
            num(e.propagation),
            num(e.detector_quantum),
            num(e.homodyne_visibility)
        );

        let q = &self.squeezing;
        let _ = writeln!(o, "\n[squeezing]\nanalysis_frequency = \"{} Hz\"", q.analysis_frequency);
        match q.operating_point {
            OperatingPoint::PumpRatio(r) => {
                let _ = writeln!(o, "pump_ratio = {}", num(r));
            }
            OperatingPoint::Target { mode, db } => {
                let _ = writeln!(o, "target = \"{db} dB\"\ntarget_mode = {mode}");
            }
        }
        let _ = writeln!(
            o,
            "spectrum_max_frequency = \"{} Hz\"\nspectrum_points = {}\nreported_modes = {}",
            q.spectrum_max_frequency, q.spectrum_points, q.reported_modes
        );

        let h = &self.homodyne;
        let modes: Vec<String> = h.lo_modes.iter().map(|m| format!("[{}, {}]", m.m, m.n)).collect();
        let _ = writeln!(o, "\n[homodyne]\nlo_modes = [{}]", modes.join(", "));
        match h.lo_waist {
            LoWaist::Matched => {
                let _ = writeln!(o, "lo_waist = \"matched\"");
            }
            LoWaist::Basis => {
                let _ = writeln!(o, "lo_waist = \"basis\"");
            }
            LoWaist::Fixed(w) => {
                let _ = writeln!(o, "lo_waist = \"{w} m\"");
            }
        }
        let _ = writeln!(
            o,
            "window_samples = {}\nwindows_per_sweep = {}\nsweeps = {}\nsweep_period = \"{} s\"\n\
             calibration_fraction = {}\nbins = {}\nseed = {}",
            h.window_samples,
            h.windows_per_sweep,
            h.sweeps,
            h.sweep_period,
            num(h.calibration_fraction),
            h.bins,
            h.seed
        );

        let d = &self.design;
        let _ = writeln!(
            o,
            "\n[design]\nscan_half_range = \"{} m\"\nscan_points = {}\nmax_order = {}",
            d.scan_half_range, d.scan_points, d.max_order
        );

        let out = &self.output;
        let _ = writeln!(o, "\n[output]");
        if let Some(dir) = &out.directory {
            let _ = writeln!(o, "directory = {}", Value::String(dir.display().to_string()));
        }
        let _ = writeln!(o, "profile_modes = {}\nprofile_points = {}", out.profile_modes, out.profile_points);
        if let Some(w) = out.profile_half_width {
            let _ = writeln!(o, "profile_half_width = \"{w} m\"");
        }
        o
    }

    /// First 16 hex digits of SHA-256 over [`Self::to_toml`], ignoring
    /// the output directory.
    pub fn hash(&self) -> String {
        let mut physics = self.clone();
        physics.output.directory = None;
        Sha256::digest(physics.to_toml().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Float as a TOML number that always carries a decimal point or exponent.
fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E']) || !v.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

fn field_err(field: &str, reason: &str) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

fn at(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::Config {
            field: format!("{section}.{}", name.replace(' ', "_")),
            reason,
        },
        other => other,
    }
}

fn parse_mode_index(v: &Value) -> std::result::Result<ModeIndex, String> {
    match v {
        Value::Array(a) if a.len() == 2 => {
            let m = a[0].as_integer().filter(|x| *x >= 0);
            let n = a[1].as_integer().filter(|x| *x >= 0);
            match (m, n) {
                (Some(m), Some(n)) => Ok(ModeIndex::new(m as usize, n as usize)),
                _ => Err("mode indices must be nonnegative integers".into()),
            }
        }
        Value::String(s) => {
            let digits = s.strip_prefix("TEM").or_else(|| s.strip_prefix("HG")).unwrap_or("");
            let d: Vec<u32> = digits.chars().filter_map(|c| c.to_digit(10)).collect();
            if d.len() == 2 && digits.len() == 2 {
                Ok(ModeIndex::new(d[0] as usize, d[1] as usize))
            } else {
                Err(format!("cannot read mode {s:?}; use \"TEM10\" or [m, n]"))
            }
        }
        _ => Err("modes are \"TEMmn\" strings or [m, n] pairs".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dim {
    Length,
    InverseLength,
    Frequency,
    Power,
    Time,
    Decibel,
}

impl Dim {
    /// Accepted suffixes with their SI power-of-ten exponents, longest first.
    fn units(self) -> &'static [(&'static str, i32)] {
        match self {
            Dim::Length => &[
                ("µm", -6),
                ("μm", -6),
                ("um", -6),
                ("nm", -9),
                ("mm", -3),
                ("cm", -2),
                ("m", 0),
            ],
            Dim::InverseLength => &[("rad/mm", 3), ("rad/m", 0), ("1/mm", 3), ("1/m", 0)],
            Dim::Frequency => &[("GHz", 9), ("MHz", 6), ("kHz", 3), ("Hz", 0)],
            Dim::Power => &[("µW", -6), ("μW", -6), ("uW", -6), ("mW", -3), ("W", 0)],
            Dim::Time => &[
                ("µs", -6),
                ("μs", -6),
                ("us", -6),
                ("ns", -9),
                ("ms", -3),
                ("s", 0),
            ],
            Dim::Decibel => &[("dB", 0)],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dim::Length => "length",
            Dim::InverseLength => "inverse length",
            Dim::Frequency => "frequency",
            Dim::Power => "power",
            Dim::Time => "time",
            Dim::Decibel => "level",
        }
    }
}

fn parse_quantity(text: &str, dim: Dim) -> std::result::Result<f64, String> {
    let t = text.trim();
    for (suffix, exponent) in dim.units() {
        if let Some(number) = t.strip_suffix(suffix) {
            let number = number.trim();
            if let Ok(v) = number.parse::<f64>() {
                if !v.is_finite() {
                    return Err("must be finite".into());
                }
                // exact powers of ten keep "30 mm" equal to 0.03
                let scale = 10f64.powi(exponent.abs());
                return Ok(if *exponent < 0 { v / scale } else { v * scale });
            }
        }
    }
    let units: Vec<&str> = dim.units().iter().map(|u| u.0).collect();
    Err(format!(
        "cannot read {text:?} as a {}; expected a number followed by one of {}",
        dim.name(),
        units.join(", ")
    ))
}

/// One TOML section; tracks which keys were read so leftovers are errors.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: RefCell<Vec<&'static str>>,
}

impl<'a> Section<'a> {
    fn new(name: &'static str, table: Option<&'a Table>) -> Self {
        Self {
            name,
            table,
            used: RefCell::new(Vec::new()),
        }
    }

    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &'static str) -> Option<&'a Value> {
        self.used.borrow_mut().push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn required<T, F: FnOnce(&Self) -> Result<Option<T>>>(&self, f: F) -> Result<T> {
        let before = self.used.borrow().len();
        let v = f(self)?;
        let key = self.used.borrow()[before];
        v.ok_or_else(|| field_err(&self.field(key), "missing"))
    }

    fn quantity(&self, key: &'static str, dim: Dim) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => parse_quantity(s, dim)
                .map(Some)
                .map_err(|r| field_err(&self.field(key), &r)),
            Some(Value::Integer(_) | Value::Float(_)) => Err(field_err(
                &self.field(key),
                &format!("needs a unit, e.g. \"{}\"", example(dim)),
            )),
            Some(_) => Err(field_err(&self.field(key), "must be a string with a unit")),
        }
    }

    fn number(&self, key: &'static str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(v)) if v.is_finite() => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(field_err(&self.field(key), "must be a finite number")),
        }
    }

    fn integer(&self, key: &'static str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(_) => Err(field_err(&self.field(key), "must be a nonnegative integer")),
        }
    }

    fn string(&self, key: &'static str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(field_err(&self.field(key), "must be a string")),
        }
    }

    fn boolean(&self, key: &'static str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(field_err(&self.field(key), "must be true or false")),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            let used = self.used.borrow();
            if let Some(k) = t.keys().find(|k| !used.contains(&k.as_str())) {
                return Err(field_err(&self.field(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn example(dim: Dim) -> &'static str {
    match dim {
        Dim::Length => "30 mm",
        Dim::InverseLength => "0 1/m",
        Dim::Frequency => "3 MHz",
        Dim::Power => "1 W",
        Dim::Time => "1 ms",
        Dim::Decibel => "-1.2 dB",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[cavity]
focal_length = "30 mm"
mirror_radius = "50 mm"
finesse = 250

[crystal]
length = "10 mm"
signal_index = 1.8

[pump]
waist = "120 um"
"#;

    #[test]
    fn minimal_config_resolves_defaults() {
        let loaded = parse_config(MINIMAL).unwrap();
        assert!(loaded.warnings.is_empty());
        let c = loaded.config;
        assert_eq!(c.cavity.lengths, Lengths::SelfImaging);
        let g = c.cavity.geometry(&c.crystal).unwrap();
        assert!((g.l1 - 0.048).abs() < 1e-15 && (g.l2 - 0.08).abs() < 1e-15);
        assert_eq!(c.basis.truncation, Truncation::Fixed(DEFAULT_TRUNCATION));
        assert!((c.pump.wavelength - 532e-9).abs() < 1e-20);
        assert_eq!(c.homodyne.bins, 36);
    }

    #[test]
    fn quantities_and_units() {
        assert_eq!(parse_quantity("30 mm", Dim::Length).unwrap(), 0.03);
        assert_eq!(parse_quantity("120µm", Dim::Length).unwrap(), 120e-6);
        assert_eq!(parse_quantity("4.68 MHz", Dim::Frequency).unwrap(), 4.68e6);
        assert_eq!(parse_quantity("-1.2 dB", Dim::Decibel).unwrap(), -1.2);
        assert_eq!(parse_quantity("1e-3 m", Dim::Length).unwrap(), 1e-3);
        assert!(parse_quantity("48 MHz", Dim::Length).is_err());
        assert!(parse_quantity("mm", Dim::Length).is_err());
    }

    #[test]
    fn field_level_errors() {
        let bad_unit = MINIMAL.replace("[crystal]", "l1 = \"48 MHz\"\nl2 = \"80 mm\"\n\n[crystal]");
        match parse_config(&bad_unit).unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "cavity.l1"),
            e => panic!("{e}"),
        }
        let bare = MINIMAL.replace("\"120 um\"", "0.00012");
        match parse_config(&bare).unwrap_err() {
            Error::Config { field, reason } => {
                assert_eq!(field, "pump.waist");
                assert!(reason.contains("unit"));
            }
            e => panic!("{e}"),
        }
        let typo = MINIMAL.replace("finesse = 250", "finese = 250");
        assert!(matches!(parse_config(&typo), Err(Error::Config { .. })));
        let missing = MINIMAL.replace("signal_index = 1.8", "");
        match parse_config(&missing).unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "crystal.signal_index"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wavelength_mismatch_warns() {
        let text = format!("{MINIMAL}wavelength = \"540 nm\"\n[signal]\nwavelength = \"1064 nm\"\n");
        let loaded = parse_config(&text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let text = format!(
            "{MINIMAL}power = \"150 mW\"\n[squeezing]\ntarget = \"-1.2 dB\"\n[homodyne]\nlo_modes = [\"TEM00\", [1, 0]]\nseed = 9\n"
        );
        let c = parse_config(&text).unwrap().config;
        let echo = c.to_toml();
        let back = parse_config(&echo).unwrap().config;
        assert_eq!(c, back);
        assert_eq!(echo, back.to_toml());
        assert_eq!(c.hash(), back.hash());
        assert_eq!(c.hash().len(), 16);
    }
}
