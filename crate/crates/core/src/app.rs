//! Subcommand orchestration and deterministic file output.
//!
//! Every CSV starts with `# selfimaging-opo <version> config <hash>`
//! followed by its header row. Numbers are written with 17 significant
//! digits. Identical configuration and seed give identical bytes.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cavity::{cavity_report, degeneracy_scan, linspace, write_scan_csv, CavityGeometry, CavityReport};
use crate::config::{parse_config, ExperimentConfig, LoWaist, LoadedConfig, OperatingPoint, Truncation};
use crate::coupling::{
    auto_truncation, build_coupling_matrix, coherence_length, hg_matches, optimize_basis_waist, takagi_decompose,
    write_spectrum_csv, CouplingMatrix, CouplingOptions, CrystalParams, HgMatch, ModeDecomposition, PumpProfile,
    TruncationCheck,
};
use crate::error::{Error, Result};
use crate::homodyne::{
    estimate_noise_power, lo_projection, simulate_trace, write_summary_csv, write_trace_csv, LocalOscillator,
    NoiseEstimate, PhaseModel, TraceConfig,
};
use crate::modes::{write_profile_csv, BeamGeometry, HgBasis, ModeIndex};
use crate::reproduce::reproduce;
use crate::squeezing::{
    calibrate_to_measurement, to_decibels, variance_spectrum, EfficiencyChain, OpoDynamics, Pinned,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Configuration used when none is given.
pub const PAPER_CONFIG: &str = include_str!("../data/paper.toml");
const AUTO_TRUNCATION_START: usize = 10;
const AUTO_TRUNCATION_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Design,
    Spectrum,
    Modes,
    Homodyne,
    ReproducePaper,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] = [
        Subcommand::Design,
        Subcommand::Spectrum,
        Subcommand::Modes,
        Subcommand::Homodyne,
        Subcommand::ReproducePaper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Design => "design",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Modes => "modes",
            Subcommand::Homodyne => "homodyne",
            Subcommand::ReproducePaper => "reproduce-paper",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| crate::error::invalid("subcommand", format!("unknown subcommand {s:?}")))
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub truncation: Option<usize>,
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Report rows that failed (`reproduce-paper` only).
    pub failures: usize,
    pub exit_code: i32,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_REPRODUCTION: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

/// Short machine-readable error class.
pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidParameter { .. } => "invalid-parameter",
        Error::Config { .. } => "config",
        Error::GridMismatch => "grid-mismatch",
        Error::NotSymmetric { .. } => "not-symmetric",
        Error::NonConvergence(_) => "non-convergence",
        Error::AboveThreshold { .. } => "above-threshold",
        Error::Unachievable { .. } => "unachievable",
        Error::Missing(_) => "missing",
        Error::Io(_) => "io",
    }
}

/// One-line error record: `error kind=<kind> exit=<code> message=<quoted>`.
pub fn error_record(err: &Error) -> String {
    format!("error kind={} exit={} message={:?}", error_kind(err), exit_code(err), err.to_string())
}

/// Loads a config file, or the built-in configuration when `path` is `None`.
pub fn load(path: Option<&Path>) -> Result<LoadedConfig> {
    match path {
        Some(p) => crate::config::load_config(p),
        None => parse_config(PAPER_CONFIG),
    }
}

/// Applies the seed and truncation overrides. The output directory is not
/// part of the echoed configuration, so `--out` leaves outputs unchanged.
pub fn apply_overrides(config: &ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    let mut c = config.clone();
    if let Some(seed) = opts.seed {
        c.homodyne.seed = seed;
    }
    if let Some(n) = opts.truncation {
        c.basis.truncation = Truncation::Fixed(n);
    }
    c
}

/// Everything derived from a configuration that the subcommands share.
#[derive(Debug, Clone)]
pub struct Model {
    pub geometry: CavityGeometry,
    pub cavity: CavityReport,
    pub crystal: CrystalParams,
    pub pump: PumpProfile,
    pub coupling: CouplingMatrix,
    pub decomposition: ModeDecomposition,
    pub truncation: Option<TruncationCheck>,
    pub efficiency: EfficiencyChain,
    pub pump_ratio: f64,
    /// `γ = π·FWHM` (s⁻¹).
    pub cavity_decay: f64,
    /// Analysis frequency as an angular frequency.
    pub omega: f64,
}

impl Model {
    pub fn dynamics(&self) -> Result<OpoDynamics<'_>> {
        OpoDynamics::new(&self.decomposition, self.cavity_decay, self.pump_ratio)
    }

    pub fn basis(&self) -> &HgBasis {
        &self.decomposition.basis
    }
}

pub fn cavity_of(config: &ExperimentConfig) -> Result<(CavityGeometry, CavityReport)> {
    let geometry = config.cavity.geometry(&config.crystal)?;
    let report = cavity_report(&geometry)?;
    Ok((geometry, report))
}

/// Cavity, coupling matrix, decomposition and operating point.
pub fn solve_model(config: &ExperimentConfig) -> Result<Model> {
    let (geometry, cavity) = cavity_of(config)?;
    let crystal = config.crystal;
    let mut pump = PumpProfile::gaussian(config.pump.waist, config.pump.wavelength, config.pump.power)?;
    pump.waist_position = config.pump.waist_position;
    let waist = match config.basis.waist {
        Some(w) => w,
        None => optimize_basis_waist(&crystal, &pump, config.signal_wavelength)?,
    };
    let beam = BeamGeometry::new(waist, config.signal_wavelength, 0.0)?;
    let options = CouplingOptions::default();
    let (n_max, truncation) = match config.basis.truncation {
        Truncation::Fixed(n) => (n, None),
        Truncation::Auto => {
            let check = auto_truncation(
                &crystal,
                &pump,
                &beam,
                &options,
                AUTO_TRUNCATION_START,
                AUTO_TRUNCATION_LIMIT,
            )?;
            (check.n_max, Some(check))
        }
    };
    let coupling = build_coupling_matrix(&crystal, &pump, &HgBasis::new(beam, n_max), &options)?;
    let decomposition = takagi_decompose(&coupling)?;
    let e = &config.efficiency;
    let efficiency = EfficiencyChain::new(
        e.escape.unwrap_or(cavity.escape_efficiency),
        e.propagation,
        e.detector_quantum,
        e.homodyne_visibility,
    )?;
    let cavity_decay = PI * cavity.bandwidth_fwhm;
    let omega = 2.0 * PI * config.squeezing.analysis_frequency;
    let pump_ratio = match config.squeezing.operating_point {
        OperatingPoint::PumpRatio(r) => r,
        OperatingPoint::Target { mode, db } => {
            calibrate_to_measurement(&decomposition, cavity_decay, Pinned::Efficiency(efficiency), mode, db, omega)?
                .pump_ratio
        }
    };
    Ok(Model {
        geometry,
        cavity,
        crystal,
        pump,
        coupling,
        decomposition,
        truncation,
        efficiency,
        pump_ratio,
        cavity_decay,
        omega,
    })
}

/// Runs one subcommand and writes its files under the output directory.
pub fn run(command: Subcommand, config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let config = apply_overrides(config, opts);
    let dir = opts
        .out_dir
        .clone()
        .or_else(|| config.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let mut out = Output::new(&dir, &config);
    out.write_raw("resolved_config.toml", config.to_toml().into_bytes())?;
    let mut failures = 0;
    match command {
        Subcommand::Design => design(&config, &mut out, opts.quiet)?,
        Subcommand::Spectrum => spectrum(&config, &mut out, opts.quiet)?,
        Subcommand::Modes => modes(&config, &mut out, opts.quiet)?,
        Subcommand::Homodyne => homodyne(&config, &mut out, opts.quiet)?,
        Subcommand::ReproducePaper => {
            let report = reproduce(&config)?;
            out.csv("reproduction_report.csv", |w| report.write_csv(w))?;
            if !opts.quiet {
                print!("{}", report.render_table());
            }
            failures = report.failures();
        }
    }
    Ok(RunOutcome {
        files: out.files,
        failures,
        exit_code: if failures > 0 { EXIT_REPRODUCTION } else { EXIT_OK },
    })
}

/// Collects CSV files with the version/hash comment line.
pub struct Output {
    dir: PathBuf,
    stamp: String,
    pub files: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, config: &ExperimentConfig) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stamp: csv_stamp(config),
            files: Vec::new(),
        }
    }

    pub fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, name: &str, body: F) -> Result<()> {
        let mut buf = self.stamp.clone().into_bytes();
        body(&mut buf)?;
        self.write_raw(name, buf)
    }

    fn write_raw(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

/// `# selfimaging-opo <version> config <hash>\n`.
pub fn csv_stamp(config: &ExperimentConfig) -> String {
    format!("# selfimaging-opo {VERSION} config {}\n", config.hash())
}

fn say(quiet: bool, line: impl AsRef<str>) {
    if !quiet {
        println!("{}", line.as_ref());
    }
}

fn design(config: &ExperimentConfig, out: &mut Output, quiet: bool) -> Result<()> {
    let (geometry, report) = cavity_of(config)?;
    let l_coh = coherence_length(config.signal_wavelength, config.crystal.length, config.crystal.signal_index)?;
    let mut rows: Vec<(&str, f64)> = vec![
        ("l1_m", geometry.l1),
        ("l2_m", geometry.l2),
        ("total_length_m", geometry.l1 + geometry.l2),
        ("optical_length_m", geometry.optical_length()),
        ("free_spectral_range_hz", report.free_spectral_range),
        ("finesse", report.finesse),
        ("bandwidth_fwhm_hz", report.bandwidth_fwhm),
        ("escape_efficiency", report.escape_efficiency),
        ("output_transmission", geometry.output_transmission),
        ("extra_loss", geometry.extra_loss),
        ("round_trip_gouy_rad", report.round_trip_gouy.unwrap_or(f64::NAN)),
        ("degenerate_orders", report.degenerate_orders() as f64),
        ("coherence_length_m", l_coh),
    ];
    rows.push(("cooperativity", crate::coupling::cooperativity(config.pump.waist, l_coh)));
    out.csv("design.csv", |w| {
        use std::io::Write;
        writeln!(w, "quantity,value")?;
        for (k, v) in &rows {
            writeln!(w, "{k},{v:.16e}")?;
        }
        Ok(())
    })?;
    let d = &config.design;
    let span = linspace(-d.scan_half_range, d.scan_half_range, d.scan_points);
    let scan = degeneracy_scan(&geometry, &span, &span, d.max_order)?;
    out.csv("degeneracy_scan.csv", |w| Ok(write_scan_csv(w, &scan)?))?;
    say(
        quiet,
        format!(
            "L1 = {:.3} mm, L2 = {:.3} mm, total {:.3} mm, FSR {:.4} MHz, bandwidth {:.4} MHz, escape {:.3}",
            geometry.l1 * 1e3,
            geometry.l2 * 1e3,
            (geometry.l1 + geometry.l2) * 1e3,
            report.free_spectral_range * 1e-6,
            report.bandwidth_fwhm * 1e-6,
            report.escape_efficiency
        ),
    );
    say(quiet, format!("coherence length {:.2} um", l_coh * 1e6));
    Ok(())
}

fn spectrum(config: &ExperimentConfig, out: &mut Output, quiet: bool) -> Result<()> {
    let model = solve_model(config)?;
    let dec = &model.decomposition;
    let matches = hg_matches(dec, dec.len())?;
    out.csv("eigenvalues.csv", |w| Ok(write_spectrum_csv(w, dec, &matches)?))?;
    let q = &config.squeezing;
    let omegas: Vec<f64> = linspace(0.0, 2.0 * PI * q.spectrum_max_frequency, q.spectrum_points);
    let dynamics = model.dynamics()?;
    out.csv("squeezing_spectrum.csv", |w| {
        crate::squeezing::write_spectrum_csv(w, &dynamics, &model.efficiency, q.reported_modes, &omegas)
    })?;
    let count = crate::coupling::mode_count(dec, crate::coupling::DEFAULT_MODE_CUTOFF)?;
    say(quiet, format!("basis_waist_m={:.16e}", dec.basis.beam.waist_radius));
    say(quiet, format!("truncation={}", dec.basis.n_max));
    say(quiet, format!("modes_above_cutoff={count}"));
    say(quiet, format!("total_efficiency={:.16e}", model.efficiency.total()));
    say(quiet, format!("pump_ratio={:.16e}", model.pump_ratio));
    say(quiet, format!("cavity_decay_per_s={:.16e}", model.cavity_decay));
    for (k, m) in matches.iter().enumerate().take(q.reported_modes) {
        let v = variance_spectrum(&dynamics, &model.efficiency, k, model.omega)?;
        say(quiet, format!("mode_{k}_v_minus_db={:.6} ({})", to_decibels(v.v_minus)?, m.index));
    }
    Ok(())
}

fn modes(config: &ExperimentConfig, out: &mut Output, quiet: bool) -> Result<()> {
    let model = solve_model(config)?;
    let dec = &model.decomposition;
    let basis = *model.basis();
    let o = &config.output;
    let half = o.profile_half_width.unwrap_or(3.0 * basis.beam.waist_radius);
    let z = basis.beam.waist_position;
    for k in 0..o.profile_modes.min(dec.len()) {
        let coeffs = dec.mode(k);
        out.csv(&format!("mode_{k}.csv"), |w| {
            Ok(write_profile_csv(w, half, o.profile_points, |x, y| basis.field(&coeffs, x, y, z))?)
        })?;
        say(quiet, format!("mode {k}: Λ/Λ0 = {:.5}, {}", dec.gains[k] / dec.gains[0], dec.dominant[k]));
    }
    Ok(())
}

/// LO waist for measuring `index` under the configured policy.
pub fn lo_waist_for(config: &ExperimentConfig, matches: &[HgMatch], basis: &HgBasis, index: ModeIndex) -> f64 {
    match config.homodyne.lo_waist {
        LoWaist::Fixed(w) => w,
        LoWaist::Basis => basis.beam.waist_radius,
        LoWaist::Matched => matches
            .iter()
            .find(|m| m.index == index)
            .map(|m| m.waist)
            .unwrap_or(basis.beam.waist_radius),
    }
}

/// Trace layout for LO number `i`: the seed is offset by `i`.
pub fn trace_config(config: &ExperimentConfig, i: usize) -> TraceConfig {
    let h = &config.homodyne;
    TraceConfig {
        window_samples: h.window_samples,
        windows_per_sweep: h.windows_per_sweep,
        sweeps: h.sweeps,
        calibration_fraction: h.calibration_fraction,
        seed: h.seed.wrapping_add(i as u64),
    }
}

/// Simulated trace and its binned estimate for each configured LO mode.
pub fn homodyne_runs(
    config: &ExperimentConfig,
    model: &Model,
) -> Result<Vec<(ModeIndex, crate::homodyne::HomodyneTrace, NoiseEstimate)>> {
    let dec = &model.decomposition;
    let matches = hg_matches(dec, (4 * config.homodyne.lo_modes.len() + 8).min(dec.len()))?;
    let dynamics = model.dynamics()?;
    let mut runs = Vec::new();
    for (i, &index) in config.homodyne.lo_modes.iter().enumerate() {
        let waist = lo_waist_for(config, &matches, model.basis(), index);
        let lo = LocalOscillator::hg(index, Some(waist), config.homodyne.sweep_period)?;
        let projection = lo_projection(&lo, dec)?;
        let phase_model = PhaseModel::from_dynamics(&projection, &dynamics, &model.efficiency, model.omega)?;
        let trace = simulate_trace(&phase_model, &lo, &trace_config(config, i))?;
        let estimate = estimate_noise_power(&trace, config.homodyne.bins)?;
        runs.push((index, trace, estimate));
    }
    Ok(runs)
}

fn homodyne(config: &ExperimentConfig, out: &mut Output, quiet: bool) -> Result<()> {
    let model = solve_model(config)?;
    let runs = homodyne_runs(config, &model)?;
    for (index, trace, _) in &runs {
        out.csv(&format!("homodyne_{index}.csv"), |w| write_trace_csv(w, trace))?;
    }
    let rows: Vec<(String, &NoiseEstimate)> = runs.iter().map(|(i, _, e)| (i.to_string(), e)).collect();
    out.csv("homodyne_summary.csv", |w| write_summary_csv(w, &rows))?;
    for (mode, est) in &rows {
        say(quiet, format!("{mode}: min {:.3} dB, max {:.3} dB", est.min_db, est.max_db));
    }
    Ok(())
}
