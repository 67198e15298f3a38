use std::fs;

use hsic::cube::*;
use proptest::prelude::*;

fn cube_strategy() -> impl Strategy<Value = HyperCube> {
    (1usize..6, 1usize..6, 1usize..4, 0usize..3).prop_flat_map(|(w, h, n, d)| {
        let (dtype, max) = [(Dtype::U8, 255.0), (Dtype::U16, 65535.0), (Dtype::F32, 1000.0)][d];
        prop::collection::vec(0.0f64..=1.0, w * h * n).prop_map(move |vals| {
            let bands = (0..n)
                .map(|b| {
                    let px = vals[b * w * h..(b + 1) * w * h]
                        .iter()
                        .map(|v| if dtype == Dtype::F32 { (v * max) as f32 } else { (v * max).round() as f32 })
                        .collect();
                    SpectralBand::new(b, w, h, px)
                })
                .collect();
            HyperCube::new(CubeHeader::new(w, h, n, dtype, max), bands).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn save_load_save_is_stable(cube in cube_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        save_cube_prefix(&cube, &a).unwrap();
        let loaded = load_cube_prefix(&a).unwrap();
        prop_assert_eq!(&loaded, &cube);
        save_cube_prefix(&loaded, &b).unwrap();
        let pa = CubePaths::from_prefix(&a);
        let pb = CubePaths::from_prefix(&b);
        prop_assert_eq!(fs::read(&pa.data).unwrap(), fs::read(&pb.data).unwrap());
        prop_assert_eq!(fs::read(&pa.header).unwrap(), fs::read(&pb.header).unwrap());
    }

    #[test]
    fn speckle_stays_within_its_bound(v in 1.0f32..200.0, rho in 0.0f64..0.9, seed in any::<u64>()) {
        let band = SpectralBand::filled(0, 8, 8, v);
        let out = add_speckle(&band, rho, 255.0, seed);
        let (lo, hi) = (f64::from(v) * (1.0 - rho), (f64::from(v) * (1.0 + rho)).min(255.0));
        for &p in &out.pixels {
            prop_assert!(f64::from(p) >= lo - 1e-3 && f64::from(p) <= hi + 1e-3);
        }
    }
}

#[test]
fn hand_written_u8_file_is_row_major() {
    let dir = tempfile::tempdir().unwrap();
    let (hp, dp) = (dir.path().join("t.hsch"), dir.path().join("t.bsq"));
    fs::write(&hp, CubeHeader::new(2, 2, 1, Dtype::U8, 255.0).to_text()).unwrap();
    fs::write(&dp, [0u8, 1, 2, 3]).unwrap();
    let cube = load_cube(&hp, &dp).unwrap();
    assert_eq!(cube.bands[0].pixels, vec![0.0, 1.0, 2.0, 3.0]);
    assert_eq!(cube.bands[0].get(0, 1), 2.0);
}

#[test]
fn labels_round_trip_through_text() {
    let (_, labels) = generate_synthetic(&SynthSpec::new(3, 4, 16, 16, 0.1, 9)).unwrap();
    let path = std::path::Path::new("l.labels");
    let back = LabelFile::parse(&labels.to_csv(), path).unwrap();
    assert_eq!(back, labels);
}
