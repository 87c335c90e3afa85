//! Writes the intensity of the first six eigenmodes as ASCII art and to
//! `mode_k.csv` files in a temporary directory.
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example mode_profiles
//! ```

use selfimaging_opo::coupling::{
    build_coupling_matrix, optimize_basis_waist, takagi_decompose, CouplingOptions, CrystalParams, PumpProfile,
};
use selfimaging_opo::modes::{write_profile_csv, BeamGeometry, HgBasis};

fn main() -> selfimaging_opo::Result<()> {
    let lambda = 1.064e-6;
    let crystal = CrystalParams::new(10e-3, 1.8)?;
    let pump = PumpProfile::gaussian(120e-6, lambda / 2.0, 1.0)?;
    let waist = optimize_basis_waist(&crystal, &pump, lambda)?;
    let basis = HgBasis::new(BeamGeometry::new(waist, lambda, 0.0)?, 12);
    let dec = takagi_decompose(&build_coupling_matrix(&crystal, &pump, &basis, &CouplingOptions::default())?)?;

    let dir = std::env::temp_dir().join("sopo_mode_profiles");
    std::fs::create_dir_all(&dir)?;
    let half = 2.5 * waist;
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for k in 0..6 {
        let coeffs = dec.mode(k);
        let field = |x: f64, y: f64| basis.field(&coeffs, x, y, 0.0);
        let mut file = std::fs::File::create(dir.join(format!("mode_{k}.csv")))?;
        write_profile_csv(&mut file, half, 41, field)?;

        println!("mode {k} ({}), Λ/Λ0 = {:.3}", dec.dominant[k], dec.gains[k] / dec.gains[0]);
        let n = 21;
        let grid: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..2 * n)
                    .map(|j| {
                        let y = half * (1.0 - 2.0 * i as f64 / (n - 1) as f64);
                        let x = half * (2.0 * j as f64 / (2 * n - 1) as f64 - 1.0);
                        field(x, y).norm_sqr()
                    })
                    .collect()
            })
            .collect();
        let peak = grid.iter().flatten().cloned().fold(0.0, f64::max);
        for line in grid {
            let s: String = line.iter().map(|v| shades[((v / peak) * 9.0).round() as usize]).collect();
            println!("  {s}");
        }
    }
    println!("profiles written to {}", dir.display());
    Ok(())
}
