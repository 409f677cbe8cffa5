use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tddbp::channel::{ssfm_forward, LinkParams, Scheme, SsfmPlan};
use tddbp::dbp::{dbp_run, DbpConfig, Nonlinearity};
use tddbp::filter::{design_grid, lsco_design, FilterBank, LscoParams};
use tddbp::fixed::{requantize_product, Fixed, FixedFormat};
use tddbp::signal::{pulse_shape, ComplexSignal};
use tddbp::C64;

fn qpsk_waveform(n: usize, seed: u64) -> ComplexSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<C64> = (0..n)
        .map(|_| C64::new(if rng.random() { 1.0 } else { -1.0 }, if rng.random() { 1.0 } else { -1.0 }) * 0.5f64.sqrt())
        .collect();
    pulse_shape(&s, 20e9, 2, 0.1, 64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lossless_linear_fiber_conserves_energy(seed in 0u64..1000, beta2_ps2_km in -30.0f64..30.0, steps in 1usize..6) {
        let link = LinkParams {
            beta2: beta2_ps2_km * 1e-27,
            gamma: 0.0,
            alpha_db_per_km: 0.0,
            ase_noise_figure_db: None,
            num_spans: 2,
            ..LinkParams::default()
        };
        let x = qpsk_waveform(256, seed);
        let plan = SsfmPlan::uniform(&link, steps, Scheme::Symmetric).unwrap();
        let y = ssfm_forward(&x, &link, &plan, seed).unwrap();
        let (ex, ey) = (x.power(), y.power());
        prop_assert!((ey / ex - 1.0).abs() < 1e-12, "{ex} vs {ey}");
    }

    #[test]
    fn impulse_bank_is_transparent(seed in 0u64..1000, filters in 2usize..6, taps in (0usize..6).prop_map(|k| 2 * k + 1)) {
        let x = qpsk_waveform(128, seed);
        let bank = FilterBank::identity(filters, taps).unwrap();
        let cfg = DbpConfig::new(bank, vec![0.3; filters - 1], Nonlinearity::Off).unwrap();
        let y = dbp_run(&x, &cfg).unwrap();
        prop_assert_eq!(y.samples, x.samples);
    }

    #[test]
    fn products_are_deterministic_and_in_range(a in -32i64..32, b in -32i64..32, ea in -6i32..2, eb in -6i32..2, out_exp in -8i32..0) {
        let fa = FixedFormat::new(6, ea).unwrap();
        let fb = FixedFormat::new(6, eb).unwrap();
        let out = FixedFormat::new(6, out_exp).unwrap();
        let x = Fixed { raw: a, fmt: fa };
        let y = Fixed { raw: b, fmt: fb };
        let p = requantize_product(x, y, out);
        prop_assert_eq!(p, requantize_product(x, y, out));
        prop_assert!(p.raw >= out.min_raw() && p.raw <= out.max_raw());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lsco_is_symmetric_deterministic_and_bounded(k in 2usize..10, delta_km in 20.0f64..120.0) {
        let p = LscoParams {
            num_taps: 2 * k + 1,
            beta2: -21.7e-27,
            delta: delta_km * 1e3,
            sample_rate: 40e9,
            passband_fraction: 0.55,
            magnitude_bound: 1.001,
        };
        let a = lsco_design(&p).unwrap();
        let b = lsco_design(&p).unwrap();
        prop_assert_eq!(a.unique(), b.unique());
        let full = a.full();
        for i in 0..full.len() {
            prop_assert_eq!(full[i], full[full.len() - 1 - i]);
        }
        for w in design_grid(p.num_taps) {
            prop_assert!(a.response_at(w).norm() <= 1.001 + 1e-9);
        }
    }
}
