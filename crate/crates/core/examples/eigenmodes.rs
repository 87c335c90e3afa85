//! Squeezed eigenmodes of the 120 µm pump / 10 mm crystal configuration.
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example eigenmodes
//! ```

use std::time::Instant;

use selfimaging_opo::coupling::{
    build_coupling_matrix, coherence_length, cooperativity, eigenmode_hg_overlap, mode_count, optimize_basis_waist,
    takagi_decompose, CouplingOptions, CrystalParams, PumpProfile, DEFAULT_MODE_CUTOFF,
};
use selfimaging_opo::modes::{BeamGeometry, HgBasis};

fn main() -> selfimaging_opo::Result<()> {
    let lambda = 1.064e-6;
    let crystal = CrystalParams::new(10e-3, 1.8)?;
    let pump = PumpProfile::gaussian(120e-6, lambda / 2.0, 1.0)?;
    let n_max = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);

    let start = Instant::now();
    let waist = optimize_basis_waist(&crystal, &pump, lambda)?;
    let basis = HgBasis::new(BeamGeometry::new(waist, lambda, 0.0)?, n_max);
    let k = build_coupling_matrix(&crystal, &pump, &basis, &CouplingOptions::default())?;
    let dec = takagi_decompose(&k)?;
    println!(
        "basis waist {:.2} um, N = {n_max}, quadrature change {:.1e}, {:.2?}",
        waist * 1e6,
        k.quadrature_change.unwrap_or(0.0),
        start.elapsed()
    );

    println!(" k   Λ_k/Λ_0    θ_k      dominant  overlap  (waist)");
    for i in 0..12 {
        let m = eigenmode_hg_overlap(&dec, i)?;
        println!(
            "{i:2}   {:.5}   {:+.4}   {:8}  {:.5}  ({:.1} um)",
            dec.gains[i] / dec.gains[0],
            dec.angles[i],
            m.index.to_string(),
            m.overlap,
            m.waist * 1e6
        );
    }
    let l_coh = coherence_length(lambda, crystal.length, crystal.signal_index)?;
    println!(
        "modes above {DEFAULT_MODE_CUTOFF}: {}   cooperativity (w_p/l_coh)^2 = {:.2}",
        mode_count(&dec, DEFAULT_MODE_CUTOFF)?,
        cooperativity(pump.waist, l_coh)
    );
    Ok(())
}
