//! Raster primitives checked against brute-force reference implementations.

use celldet_core::imgproc::{
    connected_components, euclidean_distance_transform, gaussian_blur, otsu_threshold, peak_local_max,
    remove_small_objects_and_fill_holes, watershed,
};
use celldet_core::{BinaryMask, Raster};
use celldet_oracles::imgproc as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn edt_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..50 {
        let m = if trial % 2 == 0 {
            let d = rng.gen_range(0.3..0.95);
            oracle::random_mask(&mut rng, 24, 24, d)
        } else {
            oracle::disc_mask(&mut rng, 24, 24, 6)
        };
        if m.count() == 24 * 24 {
            continue;
        }
        let got = euclidean_distance_transform(&m);
        assert_eq!(got.plane(0), oracle::edt(&m).as_slice(), "trial {trial}");
    }
}

#[test]
fn edt_all_foreground_is_diagonal() {
    let m = BinaryMask::from_fn(3, 4, |_, _| true);
    assert!(euclidean_distance_transform(&m).data().iter().all(|&v| v == 5.0));
}

#[test]
fn otsu_equals_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..60 {
        let n = 400;
        let values: Vec<f64> = match trial % 3 {
            0 => (0..n).map(|_| rng.gen::<f64>()).collect(),
            1 => (0..n)
                .map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.6..0.9) } else { rng.gen_range(0.0..0.3) })
                .collect(),
            _ => (0..n).map(|_| rng.gen_range(0..5) as f64).collect(),
        };
        let r = Raster::from_vec(20, 20, 1, values.clone()).unwrap();
        assert_eq!(otsu_threshold(&r).unwrap(), oracle::otsu(&values), "trial {trial}");
    }
}

#[test]
fn peaks_equal_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for trial in 0..60 {
        let (h, w) = (rng.gen_range(8..30), rng.gen_range(8..30));
        let quantized = trial % 2 == 1;
        let noise: Vec<f64> = (0..h * w)
            .map(|_| if quantized { rng.gen_range(0..6) as f64 / 5.0 } else { rng.gen() })
            .collect();
        let r = Raster::from_vec(h, w, 1, noise).unwrap();
        let r = if trial % 3 == 0 { gaussian_blur(&r, 1.5).unwrap() } else { r };
        let md = rng.gen_range(1..6);
        let thr = rng.gen_range(0.0..0.6);
        assert_eq!(peak_local_max(&r, md, thr), oracle::peaks(&r, md, thr), "trial {trial}");
    }
}

#[test]
fn components_equal_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let d = rng.gen_range(0.2..0.7);
        let m = oracle::random_mask(&mut rng, 20, 27, d);
        assert_eq!(connected_components(&m).labels(), oracle::components(&m).as_slice());
    }
}

#[test]
fn small_object_removal_and_hole_fill_equal_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let d = rng.gen_range(0.3..0.8);
        let m = oracle::random_mask(&mut rng, 16, 18, d);
        let min_area = rng.gen_range(1..12);
        let got = remove_small_objects_and_fill_holes(&m, min_area);
        assert_eq!(got.bits(), oracle::remove_small_and_fill(&m, min_area).as_slice());
    }
}

#[test]
fn watershed_equals_priority_flood() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for trial in 0..50 {
        let Some((elev, markers, mask)) = oracle::watershed_instance(&mut rng, trial) else {
            continue;
        };
        let got = watershed(&elev, &markers, &mask).unwrap();
        assert_eq!(got.labels(), oracle::watershed(&elev, &markers, &mask).as_slice(), "trial {trial}");
    }
}
