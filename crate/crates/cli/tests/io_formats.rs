//! File formats: CSV rows, 16-bit maps, label PNGs, scenes and config files.

use std::fs;

use celldet::config::RunConfig;
use celldet::error::CliError;
use celldet::io::*;
use celldet::pool::parallel_map;
use celldet_core::{CellClass, CellPoint, Detection, LabelMap, PointAnnotations, Raster};
use proptest::prelude::*;

fn class(b: bool) -> CellClass {
    if b {
        CellClass::TumorCell
    } else {
        CellClass::BackgroundCell
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn annotations_round_trip(pts in prop::collection::vec((0usize..500, 0usize..500, any::<bool>()), 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let ann = PointAnnotations::new(pts.iter().map(|&(x, y, t)| CellPoint::new(x, y, class(t))).collect(), 0.2);
        write_annotations(&path, &ann).unwrap();
        prop_assert_eq!(read_annotations(&path, 0.2).unwrap(), ann);
    }

    #[test]
    fn detections_round_trip(dets in prop::collection::vec((0usize..500, 0usize..500, any::<bool>(), 0.0f64..1.0), 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let dets: Vec<Detection> = dets
            .iter()
            .map(|&(x, y, t, confidence)| Detection { x, y, class: class(t), confidence })
            .collect();
        write_detections(&path, &dets).unwrap();
        prop_assert_eq!(read_detections(&path).unwrap(), dets);
    }

    #[test]
    fn maps_round_trip_within_quantization(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = Raster::from_vec(h, w, 3, (0..h * w * 3).map(|_| rng.gen()).collect()).unwrap().with_mpp(0.2);
        let dir = tempfile::tempdir().unwrap();
        write_maps(dir.path(), &r, &CELL_CHANNELS, Some("soft_is")).unwrap();
        let (back, index) = read_maps(dir.path()).unwrap();
        prop_assert_eq!(back.dims(), (h, w));
        prop_assert_eq!(index.format.as_deref(), Some("soft_is"));
        prop_assert_eq!(back.mpp, Some(0.2));
        prop_assert!(back.max_abs_diff(&r) <= 1.0 / 65535.0);
    }
}

#[test]
fn bad_class_id_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    fs::write(&path, "x,y,class_id\n1,2,1\n3,4,2\n5,6,5\n").unwrap();
    let err = read_annotations(&path, 0.2).unwrap_err();
    match &err {
        CliError::Parse { line, message, .. } => {
            assert_eq!(*line, Some(4));
            assert!(message.contains("class_id 5"), "{message}");
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn malformed_rows_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "x,y,class_id,confidence\n1,2,1,0.5\n-3,4,2,0.1\n").unwrap();
    assert!(matches!(read_detections(&path), Err(CliError::Parse { line: Some(3), .. })));
    assert!(matches!(read_detections(&dir.path().join("none.csv")), Err(CliError::Io { .. })));
}

#[test]
fn exact_map_values_survive() {
    let r = Raster::from_vec(1, 4, 1, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_maps(dir.path(), &r, &["p"], None).unwrap();
    let (back, _) = read_maps(dir.path()).unwrap();
    assert_eq!(back.data()[0], 0.0);
    assert_eq!(back.data()[1], 1.0);
}

#[test]
fn label_pngs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = LabelMap::from_vec(3, 4, vec![0, 1, 2, 3, 300, 65535, 0, 0, 7, 7, 7, 1]).unwrap();
    write_instances(&dir.path().join("i.png"), &inst).unwrap();
    assert_eq!(read_instances(&dir.path().join("i.png")).unwrap(), inst);
    let tissue = LabelMap::from_vec(2, 3, vec![1, 2, 255, 255, 2, 1]).unwrap();
    write_tissue_labels(&dir.path().join("t.png"), &tissue).unwrap();
    assert_eq!(read_tissue_labels(&dir.path().join("t.png")).unwrap(), tissue);
}

#[test]
fn config_defaults_and_overrides() {
    let p = std::path::Path::new("run.toml");
    let cfg = RunConfig::from_toml(p, "").unwrap();
    assert_eq!(cfg, RunConfig::default());
    let cfg = RunConfig::from_toml(p, "seed = 9\nn_train = 3\n[synth]\ncell_size = 48\n").unwrap();
    assert_eq!((cfg.seed, cfg.experiment.n_train, cfg.experiment.synth.cell_size), (9, 3, 48));
    assert_eq!(cfg.experiment.n_test, RunConfig::default().experiment.n_test);
    assert_eq!(cfg.seeds(3), vec![9, 10, 11]);
    match RunConfig::from_toml(p, "seed = 1\nn_train = \"many\"\n") {
        Err(CliError::Parse { line: Some(2), .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    let bad = RunConfig::from_toml(p, "n_seeds = 0\n").unwrap();
    assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn parallel_map_keeps_order_and_first_error() {
    let items: Vec<u32> = (0..57).collect();
    for workers in [1, 3, 8] {
        let out: Result<Vec<u32>, String> = parallel_map(&items, workers, |i, &v| Ok(v * 2 + i as u32));
        assert_eq!(out.unwrap(), items.iter().map(|v| v * 3).collect::<Vec<_>>());
        let err: Result<Vec<u32>, String> =
            parallel_map(&items, workers, |_, &v| if v % 20 == 7 { Err(format!("bad {v}")) } else { Ok(v) });
        assert_eq!(err.unwrap_err(), "bad 7");
    }
}
