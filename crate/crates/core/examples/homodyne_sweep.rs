//! Swept-phase homodyne measurement of the three lowest eigenmodes with a
//! mode-matched local oscillator, plus one deliberately mismatched LO.
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example homodyne_sweep
//! ```

use selfimaging_opo::app::{load, solve_model, trace_config};
use selfimaging_opo::coupling::hg_matches;
use selfimaging_opo::homodyne::{estimate_noise_power, lo_projection, simulate_trace, LocalOscillator, PhaseModel};
use selfimaging_opo::modes::ModeIndex;

fn main() -> selfimaging_opo::Result<()> {
    let config = load(None)?.config;
    let model = solve_model(&config)?;
    let dec = &model.decomposition;
    let dynamics = model.dynamics()?;
    let matches = hg_matches(dec, 3)?;
    let layout = trace_config(&config, 0);

    let mut los: Vec<(String, LocalOscillator)> = matches
        .iter()
        .map(|m| Ok((format!("{} matched", m.index), LocalOscillator::hg(m.index, Some(m.waist), 1e-3)?)))
        .collect::<selfimaging_opo::Result<_>>()?;
    let w = matches[0].waist * 1.5;
    los.push(("TEM00 at 1.5 w".into(), LocalOscillator::hg(ModeIndex::new(0, 0), Some(w), 1e-3)?));

    println!("LO                 |c_0|^2  |c_1|^2  |c_2|^2  residual   min dB   max dB");
    for (name, lo) in &los {
        let proj = lo_projection(lo, dec)?;
        let model = PhaseModel::from_dynamics(&proj, &dynamics, &model.efficiency, model.omega)?;
        let est = estimate_noise_power(&simulate_trace(&model, lo, &layout)?, config.homodyne.bins)?;
        let c: Vec<f64> = proj.coefficients.iter().take(3).map(|c| c.norm_sqr()).collect();
        println!(
            "{name:18} {:.4}   {:.4}   {:.4}   {:.4}   {:+.3}   {:+.3}",
            c[0], c[1], c[2], proj.residual, est.min_db, est.max_db
        );
    }
    Ok(())
}
