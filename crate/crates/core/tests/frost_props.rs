use hsic::cube::{CubeHeader, Dtype, HyperCube, SpectralBand};
use hsic::frost::*;
use proptest::prelude::*;

fn band_strategy(max_side: usize) -> impl Strategy<Value = SpectralBand> {
    (3..=max_side, 3..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f32..255.0, w * h).prop_map(move |px| SpectralBand::new(0, w, h, px))
    })
}

fn window_strategy() -> impl Strategy<Value = usize> {
    prop_oneof![Just(3usize), Just(5), Just(7)]
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn output_stays_within_window_range(band in band_strategy(10), n in window_strategy(), k in 0.1f64..5.0) {
        let cfg = FrostConfig { window: n, damping: k, beta_mode: BetaMode::Damped };
        let out = filter_plane(&band, &cfg);
        let h = (n / 2) as isize;
        for y in 0..band.height {
            for x in 0..band.width {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for dy in -h..=h {
                    for dx in -h..=h {
                        let v = f64::from(band.get_clamped(x as isize + dx, y as isize + dy));
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                let v = out[y * band.width + x];
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn mask_is_normalized_and_symmetric(beta in 0.0f64..20.0, n in window_strategy()) {
        let stats = WindowStats { mean: 1.0, stddev: 0.0, beta };
        let mask = frost_weights(&stats, n);
        prop_assert!((mask.alpha * mask.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h = (n / 2) as isize;
        for dy in -h..=h {
            for dx in -h..=h {
                prop_assert_eq!(mask.weight(dx, dy), mask.weight(-dx, -dy));
            }
        }
    }

    #[test]
    fn more_damping_keeps_more_of_the_centre(band in band_strategy(8), k in 0.1f64..4.0, extra in 0.1f64..4.0) {
        let lo = FrostConfig { window: 3, damping: k, beta_mode: BetaMode::Damped };
        let hi = FrostConfig { damping: k + extra, ..lo };
        let (x, y) = (band.width / 2, band.height / 2);
        let a = frost_weights(&window_stats(&band, x, y, &lo), 3).center_share();
        let b = frost_weights(&window_stats(&band, x, y, &hi), 3).center_share();
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn constant_band_is_a_fixed_point(v in 0.0f32..255.0, n in window_strategy(), literal in any::<bool>()) {
        let band = SpectralBand::filled(0, 9, 6, v);
        let beta_mode = if literal { BetaMode::Literal } else { BetaMode::Damped };
        let out = filter_plane(&band, &FrostConfig { window: n, damping: 2.0, beta_mode });
        prop_assert!(out.iter().all(|&o| (o - f64::from(v)).abs() < 1e-9));
    }
}

#[test]
fn cube_filtering_ignores_thread_count() {
    let bands: Vec<SpectralBand> = (0..6)
        .map(|i| SpectralBand::from_fn(i, 20, 17, |x, y| ((x * 31 + y * 17 + i * 7) % 97) as f32 + 1.0))
        .collect();
    let cube = HyperCube::new(CubeHeader::new(20, 17, 6, Dtype::F32, 255.0), bands).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| filter_cube(&cube, &FrostConfig::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(8));
    assert_eq!(one.bands[2], filter_band(&cube.bands[2], &FrostConfig::default()));
}
