//! Calibrates the pump ratio so the fundamental eigenmode shows -1.2 dB at
//! 3 MHz, then prints the predicted squeezing of the next modes and a
//! short spectrum of the fundamental.
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example squeezing_ladder
//! ```

use std::f64::consts::PI;

use selfimaging_opo::app::{load, solve_model};
use selfimaging_opo::squeezing::{min_variance_paper, to_decibels, variance_spectrum};

fn main() -> selfimaging_opo::Result<()> {
    let config = load(None)?.config;
    let model = solve_model(&config)?;
    let dynamics = model.dynamics()?;
    let dec = &model.decomposition;
    println!(
        "total efficiency {:.4}, pump ratio {:.4}, cavity decay {:.3e} 1/s",
        model.efficiency.total(),
        model.pump_ratio,
        model.cavity_decay
    );

    println!("\n k   mode    Λ_k/Λ_0   V- at 3 MHz (dB)   ideal bound (dB)");
    for k in 0..8 {
        let q = variance_spectrum(&dynamics, &model.efficiency, k, model.omega)?;
        let bound = min_variance_paper(dec, k)?;
        let bound_db = if bound > 0.0 { format!("{:.2}", to_decibels(bound)?) } else { "-inf".into() };
        println!(
            "{k:2}   {:6}  {:.4}    {:+.3}             {bound_db}",
            dec.dominant[k].to_string(),
            dec.gains[k] / dec.gains[0],
            to_decibels(q.v_minus)?
        );
    }

    println!("\n f (MHz)   V- (dB)   V+ (dB)");
    for f in [0.0, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0] {
        let q = variance_spectrum(&dynamics, &model.efficiency, 0, 2.0 * PI * f * 1e6)?;
        println!("{f:7.1}   {:+.3}    {:+.3}", to_decibels(q.v_minus)?, to_decibels(q.v_plus)?);
    }
    Ok(())
}
