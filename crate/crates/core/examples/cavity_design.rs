//! Self-imaging lengths, linewidth and the degeneracy of the first
//! transverse orders as the lens-to-mirror spacing is detuned.
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example cavity_design
//! ```

use selfimaging_opo::cavity::{cavity_report, CavityGeometry};

fn main() -> selfimaging_opo::Result<()> {
    let geom = CavityGeometry::self_imaging(30e-3, 50e-3)?.with_finesse(250.0, 0.6)?;
    let report = cavity_report(&geom)?;
    println!(
        "L1 = {:.1} mm  L2 = {:.1} mm  total {:.1} mm",
        geom.l1 * 1e3,
        geom.l2 * 1e3,
        (geom.l1 + geom.l2) * 1e3
    );
    println!(
        "FSR {:.2} MHz  finesse {:.0}  bandwidth {:.3} MHz  escape {:.2}",
        report.free_spectral_range * 1e-6,
        report.finesse,
        report.bandwidth_fwhm * 1e-6,
        report.escape_efficiency
    );

    println!("\n dL2 (um)   Gouy (mrad)   co-resonant orders");
    for dl2 in [0.0, 5e-6, 20e-6, 100e-6, 500e-6, -500e-6] {
        let r = cavity_report(&geom.detuned(0.0, dl2))?;
        match r.round_trip_gouy {
            Some(g) => println!("{:9.0}   {:11.4}   {}", dl2 * 1e6, g * 1e3, r.degenerate_orders()),
            None => println!("{:9.0}   unstable", dl2 * 1e6),
        }
    }
    Ok(())
}
