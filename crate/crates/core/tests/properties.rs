use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use selfimaging_opo::coupling::{
    build_coupling_matrix, takagi_decompose, CouplingOptions, CrystalParams, ModeDecomposition, PumpProfile,
};
use selfimaging_opo::homodyne::{lo_projection, LocalOscillator, PhaseModel};
use selfimaging_opo::modes::{BeamGeometry, HgBasis, ModeIndex};
use selfimaging_opo::reproduce::{parity_violation, random_symmetric, separability_error};
use selfimaging_opo::squeezing::{quadratures, Quadratures};
use selfimaging_opo::takagi::{asymmetry, takagi};

const SIGNAL: f64 = 1.064e-6;

fn max_abs(m: &nalgebra::DMatrix<selfimaging_opo::Complex>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn small_decomposition() -> &'static ModeDecomposition {
    static DEC: OnceLock<ModeDecomposition> = OnceLock::new();
    DEC.get_or_init(|| {
        let crystal = CrystalParams::new(10e-3, 1.8).unwrap();
        let pump = PumpProfile::gaussian(120e-6, SIGNAL / 2.0, 1.0).unwrap();
        let basis = HgBasis::new(BeamGeometry::new(50e-6, SIGNAL, 0.0).unwrap(), 6);
        takagi_decompose(&build_coupling_matrix(&crystal, &pump, &basis, &CouplingOptions::default()).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn takagi_reconstructs_random_symmetric(n in 1usize..=36, seed in any::<u64>()) {
        let m = random_symmetric(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let t = takagi(&m).unwrap();
        prop_assert!(max_abs(&(t.reconstruct() - &m)) / max_abs(&m) < 1e-10);
        prop_assert!(t.values.windows(2).all(|w| w[0] >= w[1]) && t.values.iter().all(|&v| v >= 0.0));
        let unitary = t.vectors.adjoint() * &t.vectors;
        prop_assert!((unitary - nalgebra::DMatrix::identity(n, n)).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn coupling_is_symmetric_with_parity_selection(
        w_p in 60e-6f64..400e-6,
        l_c in 2e-3f64..20e-3,
        dk in -500.0f64..500.0,
        offset in -0.4f64..0.4,
        w_s in 30e-6f64..90e-6,
    ) {
        let crystal = CrystalParams { phase_mismatch: dk, ..CrystalParams::new(l_c, 1.8).unwrap() };
        let mut pump = PumpProfile::gaussian(w_p, SIGNAL / 2.0, 1.0).unwrap();
        pump.waist_position = offset * l_c;
        let basis = HgBasis::new(BeamGeometry::new(w_s, SIGNAL, 0.0).unwrap(), 4);
        let k = build_coupling_matrix(&crystal, &pump, &basis, &CouplingOptions::default().unchecked()).unwrap();
        prop_assert!(asymmetry(&k.matrix) <= 1e-12);
        prop_assert!(parity_violation(&k.matrix, &basis) <= 1e-12);
    }

    #[test]
    fn thin_crystal_coupling_separates(w_p in 60e-6f64..400e-6, w_s in 30e-6f64..90e-6) {
        let crystal = CrystalParams::new(10e-3, 1.8).unwrap();
        let pump = PumpProfile::gaussian(w_p, SIGNAL / 2.0, 1.0).unwrap();
        let basis = HgBasis::new(BeamGeometry::new(w_s, SIGNAL, 0.0).unwrap(), 5);
        let k = build_coupling_matrix(&crystal, &pump, &basis, &CouplingOptions::thin_crystal()).unwrap();
        prop_assert!(separability_error(&k.matrix, &basis) < 1e-9);
    }

    #[test]
    fn gains_scale_with_pump_amplitude(c in 0.05f64..20.0) {
        let crystal = CrystalParams::new(10e-3, 1.8).unwrap();
        let pump = PumpProfile::gaussian(120e-6, SIGNAL / 2.0, 1.0).unwrap();
        let basis = HgBasis::new(BeamGeometry::new(50e-6, SIGNAL, 0.0).unwrap(), 4);
        let opts = CouplingOptions::default().unchecked();
        let a = takagi_decompose(&build_coupling_matrix(&crystal, &pump, &basis, &opts).unwrap()).unwrap();
        let b = takagi_decompose(&build_coupling_matrix(&crystal, &pump.with_power(c), &basis, &opts).unwrap()).unwrap();
        for (x, y) in a.gains.iter().zip(&b.gains).take(10) {
            prop_assert!(((y / (x * c.sqrt())) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn squeezing_bounds(sigma in 0.0f64..0.999, eta in 0.0f64..=1.0, x in 0.0f64..10.0) {
        let q = quadratures(sigma, eta, x).unwrap();
        prop_assert!(q.v_minus <= 1.0 + 1e-15 && q.v_plus >= 1.0 - 1e-15);
        prop_assert!(q.v_minus >= 1.0 - eta - 1e-15);
        let pure = quadratures(sigma, 1.0, x).unwrap();
        prop_assert!((pure.v_minus * pure.v_plus - 1.0).abs() < 1e-12);
        let stronger = quadratures((sigma + 0.1).min(1.0), eta, x).unwrap();
        prop_assert!(stronger.v_minus <= q.v_minus + 1e-15);
    }

    #[test]
    fn homodyne_energy_and_period(m in 0usize..4, n in 0usize..4, scale in 0.7f64..1.4, theta in 0.0f64..(2.0 * PI)) {
        let dec = small_decomposition();
        let lo = LocalOscillator::hg(ModeIndex::new(m, n), Some(scale * dec.basis.beam.waist_radius), 1e-3).unwrap();
        let proj = lo_projection(&lo, dec).unwrap();
        let captured: f64 = proj.coefficients.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((captured + proj.residual - 1.0).abs() < 1e-9);

        let quads: Vec<Quadratures> = (0..dec.len())
            .map(|k| quadratures(0.5 * dec.gains[k] / dec.gains[0], 0.8, 0.3).unwrap())
            .collect();
        let model = PhaseModel::new(&proj, &quads, &dec.angles).unwrap();
        let v = model.variance(theta);
        prop_assert!((model.variance(theta + PI) - v).abs() < 1e-12 * v);
        let lo_bound = quads.iter().map(|q| q.v_minus).fold(f64::INFINITY, f64::min).min(1.0);
        let hi_bound = quads.iter().map(|q| q.v_plus).fold(0.0, f64::max).max(1.0);
        prop_assert!(v >= lo_bound - 1e-12 && v <= hi_bound + 1e-12);
    }
}

#[test]
fn vacuum_lo_sees_shot_noise() {
    let dec = small_decomposition();
    let lo = LocalOscillator::hg(ModeIndex::new(0, 0), None, 1e-3).unwrap();
    let proj = lo_projection(&lo, dec).unwrap();
    let vacuum = vec![quadratures(0.0, 1.0, 0.0).unwrap(); dec.len()];
    let model = PhaseModel::new(&proj, &vacuum, &dec.angles).unwrap();
    for i in 0..16 {
        assert!((model.variance(i as f64 * 0.4) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn threshold_scales_with_pump_area() {
    let crystal = CrystalParams::new(10e-3, 1.8).unwrap();
    let basis = HgBasis::new(BeamGeometry::new(50e-6, SIGNAL, 0.0).unwrap(), 4);
    let lead = |w: f64| {
        let pump = PumpProfile::gaussian(w, SIGNAL / 2.0, 1.0).unwrap();
        takagi_decompose(&build_coupling_matrix(&crystal, &pump, &basis, &CouplingOptions::default()).unwrap())
            .unwrap()
            .gains[0]
    };
    // Threshold power ∝ 1/Λ_0², so Λ_0 ∝ 1/w_p means threshold ∝ w_p².
    let ratio = 2.0 * lead(2e-3) / lead(1e-3);
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}
