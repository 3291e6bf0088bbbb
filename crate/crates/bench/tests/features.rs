use celldet_bench::features::{extract_features, features_of_input, FeatureConfig};
use celldet_core::imgproc::gaussian_blur;
use celldet_core::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Raster {
    Raster::from_vec(h, w, c, (0..h * w * c).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

#[test]
fn constant_image_gives_constant_blurs_and_zero_std() {
    let cfg = FeatureConfig::default();
    let img = Raster::from_vec(20, 24, 3, vec![0.375; 20 * 24 * 3]).unwrap();
    let f = extract_features(&img, None, &cfg).unwrap();
    let blurs = 3 * (1 + cfg.blur_sigmas.len());
    for k in 0..blurs {
        assert!(f.plane(k).iter().all(|&v| (v - 0.375).abs() < 1e-12), "feature {k}");
    }
    for k in blurs..f.channels() {
        assert!(f.plane(k).iter().all(|&v| v.abs() < 1e-6), "feature {k}");
    }
}

#[test]
fn feature_counts() {
    let cfg = FeatureConfig::default();
    let img = Raster::zeros(16, 16, 3);
    assert_eq!(extract_features(&img, None, &cfg).unwrap().channels(), cfg.base_count());
    assert_eq!(cfg.base_count(), 18);
    let with = cfg.clone().with_tissue(true);
    let tissue = Raster::zeros(16, 16, 2);
    assert_eq!(extract_features(&img, Some(&tissue), &with).unwrap().channels(), cfg.base_count() + 2);
}

#[test]
fn blur_features_match_gaussian_blur_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = FeatureConfig::default();
    let img = random_image(&mut rng, 31, 27, 3);
    let f = extract_features(&img, None, &cfg).unwrap();
    assert_eq!(f.channel_range(0, 3), img);
    for (i, &s) in cfg.blur_sigmas.iter().enumerate() {
        let expect = gaussian_blur(&img, s).unwrap();
        assert_eq!(f.channel_range(3 * (i + 1), 3 * (i + 2)).data(), expect.data(), "sigma {s}");
    }
}

#[test]
fn tissue_channels_are_appended_verbatim() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = FeatureConfig::default().with_tissue(true);
    let img = random_image(&mut rng, 16, 16, 3);
    let tissue = random_image(&mut rng, 16, 16, 2);
    let input = Raster::stack(&[&img, &tissue]).unwrap();
    let f = features_of_input(&input, &cfg).unwrap();
    let n = f.channels();
    assert_eq!(f.channel_range(n - 2, n), tissue);
}

#[test]
fn misaligned_inputs_are_rejected() {
    let cfg = FeatureConfig::default().with_tissue(true);
    let img = Raster::zeros(16, 16, 3);
    assert!(extract_features(&img, None, &cfg).is_err());
    assert!(extract_features(&img, Some(&Raster::zeros(8, 8, 2)), &cfg).is_err());
    assert!(extract_features(&Raster::zeros(16, 16, 1), None, &FeatureConfig::default()).is_err());
    assert!(features_of_input(&img, &cfg).is_err());
}
