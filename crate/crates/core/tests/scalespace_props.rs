use hsic::cube::SpectralBand;
use hsic::scalespace::*;
use proptest::prelude::*;

fn image_strategy(side: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..1.0, side * side).prop_map(move |d| Image::new(side, side, d))
}

/// Straight 26-neighbour scan over every interior sample of every middle DoG level.
fn brute_force_extrema(ss: &ScaleSpace, threshold: f64) -> Vec<(usize, usize, usize, usize)> {
    let mut found = Vec::new();
    for (o, oct) in ss.octaves.iter().enumerate() {
        let n = oct.dog.len();
        for l in 1..n.saturating_sub(1) {
            let img = &oct.dog[l];
            for y in 1..img.height - 1 {
                for x in 1..img.width - 1 {
                    let v = img.get(x, y);
                    if v.abs() < threshold {
                        continue;
                    }
                    let mut neighbours = Vec::with_capacity(26);
                    for dl in [l - 1, l, l + 1] {
                        for ny in y - 1..=y + 1 {
                            for nx in x - 1..=x + 1 {
                                if dl == l && nx == x && ny == y {
                                    continue;
                                }
                                neighbours.push(oct.dog[dl].get(nx, ny));
                            }
                        }
                    }
                    if neighbours.iter().all(|&u| v > u) || neighbours.iter().all(|&u| v < u) {
                        found.push((o, l, x << o, y << o));
                    }
                }
            }
        }
    }
    found.sort();
    found
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kernel_is_normalized_and_even(sigma in 0.3f64..6.0) {
        let k = gaussian_kernel(sigma).unwrap();
        prop_assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let n = k.len();
        for i in 0..n / 2 {
            prop_assert_eq!(k[i], k[n - 1 - i]);
        }
    }

    #[test]
    fn dog_is_the_level_difference(img in image_strategy(32)) {
        let cfg = ScaleSpaceConfig { octaves: 2, ..ScaleSpaceConfig::default() };
        let ss = build_scale_space(&img, &cfg).unwrap();
        for oct in &ss.octaves {
            prop_assert_eq!(oct.dog.len(), oct.blurred.len() - 1);
            for (i, d) in oct.dog.iter().enumerate() {
                prop_assert_eq!(d, &oct.blurred[i + 1].sub(&oct.blurred[i]));
            }
        }
    }

    #[test]
    fn extrema_match_brute_force(img in image_strategy(32), threshold in 0.0f64..0.02) {
        let cfg = ScaleSpaceConfig { octaves: 2, contrast_threshold: threshold, ..ScaleSpaceConfig::default() };
        let ss = build_scale_space(&img, &cfg).unwrap();
        let mut got: Vec<_> = detect_extrema(&ss, &cfg).iter().map(|k| (k.octave, k.level, k.x, k.y)).collect();
        got.sort();
        prop_assert_eq!(got, brute_force_extrema(&ss, threshold));
    }

    #[test]
    fn feature_vector_invariants(px in prop::collection::vec(0.0f32..255.0, 32 * 32)) {
        let band = SpectralBand::new(0, 32, 32, px);
        let cfg = ScaleSpaceConfig { octaves: 2, ..ScaleSpaceConfig::default() };
        let f = extract_band_features(&band, 255.0, &cfg).unwrap();
        prop_assert_eq!(f.values.len(), FEATURE_DIM);
        prop_assert!(f.values.iter().all(|v| v.is_finite()));
        prop_assert!((f.histogram().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        if f.keypoint_density() == 0.0 {
            prop_assert!(f.descriptor_mean().iter().all(|&v| v == 0.0));
        }
        prop_assert!((0.0..=1.0).contains(&f.intensity_mean()));
    }

    #[test]
    fn repeated_pattern_gives_repeated_descriptors(seed in prop::collection::vec(0.0f64..1.0, 16 * 16)) {
        // A 16-periodic image: patches one period apart are identical.
        let img = Image::from_fn(64, 48, |x, y| seed[(y % 16) * 16 + x % 16]);
        let field = gradients(&img);
        let kp = |x: usize, y: usize| Keypoint { x, y, octave: 0, level: 1, sigma: 2.0, dog_value: 0.1 };
        let a = build_descriptor(&kp(20, 20), &field);
        let b = build_descriptor(&kp(36, 20), &field);
        let c = build_descriptor(&kp(20, 36), &field);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
        let norm = a.norm();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6);
    }
}

#[test]
fn single_blob_yields_one_keypoint_near_its_centre() {
    let img = Image::from_fn(32, 32, |x, y| {
        let (dx, dy) = (x as f64 - 16.0, y as f64 - 16.0);
        (-(dx * dx + dy * dy) / 8.0).exp()
    });
    let cfg = ScaleSpaceConfig { octaves: 2, base_sigma: std::f64::consts::SQRT_2, ..ScaleSpaceConfig::default() };
    let ss = build_scale_space(&img, &cfg).unwrap();
    let kps = detect_extrema(&ss, &cfg);
    assert_eq!(kps.len(), 1, "{kps:?}");
    let (dx, dy) = (kps[0].x as f64 - 16.0, kps[0].y as f64 - 16.0);
    assert!((dx * dx + dy * dy).sqrt() <= 2.0);
}
