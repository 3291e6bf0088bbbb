use celldet_bench::experiments::{
    ensemble, run_ctm_experiment, run_format_experiment, run_format_experiment_on, run_sigma_ablation, synth_dataset,
    tissue_labels, tissue_target, Dataset, ExperimentConfig, CTM_ROWS,
};
use celldet_bench::scene::SynthParams;
use celldet_core::geometry::{leak_tissue_labels, TISSUE_BACKGROUND, TISSUE_CANCER};
use celldet_core::Raster;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synth = SynthParams {
        cell_size: 48,
        tissue_size: 48,
        min_cells: 3,
        max_cells: 5,
        ..SynthParams::default()
    };
    cfg.n_train = 4;
    cfg.n_test = 2;
    cfg.train.epochs = 3;
    cfg.tissue_train.epochs = 3;
    cfg
}

fn arithmetic_mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

#[test]
fn format_table_rows_and_means() {
    let cfg = tiny();
    let t = run_format_experiment(&cfg, &[0, 1]).unwrap();
    let names: Vec<&str> = t.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["circle", "hard_is", "soft_is"]);
    for r in &t.rows {
        assert_eq!(r.seeds.len(), 2);
        let f1: Vec<f64> = r.seeds.iter().map(|s| s.mean_f1).collect();
        assert!((r.mean_f1 - arithmetic_mean(&f1)).abs() < 1e-12);
        let d = (f1[0] - f1[1]).abs() / 2f64.sqrt();
        assert!((r.std_f1 - d).abs() < 1e-12);
        assert!(r.fold_std_f1.is_none());
    }
}

#[test]
fn one_seed_on_fixed_scenes_has_zero_spread() {
    let cfg = tiny();
    let data: Dataset = synth_dataset(&cfg, 3).unwrap();
    let t = run_format_experiment_on(&data, &cfg, &[7]).unwrap();
    assert!(t.rows.iter().all(|r| r.std_f1 == 0.0 && r.seeds.len() == 1));
}

#[test]
fn experiments_repeat_exactly() {
    let mut cfg = tiny();
    cfg.train.k_folds = 2;
    let a = run_format_experiment(&cfg, &[4]).unwrap();
    let b = run_format_experiment(&cfg, &[4]).unwrap();
    assert_eq!(a, b);
    assert!(a.rows.iter().all(|r| r.seeds[0].fold_f1.len() == 2 && r.fold_std_f1.is_some()));
}

#[test]
fn sigma_table_reports_counts_consistently() {
    let mut cfg = tiny();
    cfg.sigmas_um = vec![1.0, 4.0];
    let t = run_sigma_ablation(&cfg, &[0, 1]).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[1].sigma_px, 20.0);
    for row in &t.rows {
        for s in &row.row.seeds {
            let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
            let p = (ratio(s.counts[0].tp, s.counts[0].fp) + ratio(s.counts[1].tp, s.counts[1].fp)) / 2.0;
            let r = (ratio(s.counts[0].tp, s.counts[0].fn_) + ratio(s.counts[1].tp, s.counts[1].fn_)) / 2.0;
            assert!((p - s.mean_precision).abs() < 1e-9);
            assert!((r - s.mean_recall).abs() < 1e-9);
        }
    }
    cfg.sigmas_um = vec![2.0];
    assert_eq!(run_sigma_ablation(&cfg, &[0]).unwrap().rows.len(), 1);
}

#[test]
fn ctm_table_layout_and_organ_breakdown() {
    let cfg = tiny();
    let t = run_ctm_experiment(&cfg, &[0]).unwrap();
    let names: Vec<&str> = t.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, CTM_ROWS);
    assert_eq!(t.tissue_f1.len(), 1);
    assert!((0.0..=1.0).contains(&t.tissue_f1[0]));
    assert_eq!(t.organs.len(), CTM_ROWS.len());
    for (_, report) in &t.organs {
        assert_eq!(report.overall.n, cfg.n_test);
        assert_eq!(report.rows.iter().map(|r| r.n).sum::<usize>(), cfg.n_test);
    }
}

#[test]
fn leaked_tissue_equals_mask_select() {
    let cfg = tiny();
    let data = synth_dataset(&cfg, 5).unwrap();
    for s in &data.test {
        let n = s.tissue_img.plane_len();
        let pred = Raster::from_fn(s.tissue_img.height(), s.tissue_img.width(), |x, y| ((x * 7 + y * 3) % 10) as f64 / 10.0);
        let pred = Raster::stack(&[&pred.map(|v| 1.0 - v), &pred]).unwrap();
        let leaked = leak_tissue_labels(&pred, &s.tissue_gt).unwrap();
        let onehot = tissue_target(&s.tissue_gt);
        for i in 0..n {
            let known = onehot.data()[i] + onehot.data()[n + i] > 0.0;
            for c in 0..2 {
                let expect = if known { onehot.data()[c * n + i] } else { pred.data()[c * n + i] };
                assert_eq!(leaked.data()[c * n + i], expect);
            }
        }
    }
}

#[test]
fn tissue_helpers_round_trip_known_labels() {
    let cfg = tiny();
    let data = synth_dataset(&cfg, 6).unwrap();
    let s = &data.train[0];
    let labels = tissue_labels(&tissue_target(&s.tissue_truth));
    assert_eq!(labels, s.tissue_truth);
    assert!(labels.labels().iter().all(|&l| l == TISSUE_BACKGROUND || l == TISSUE_CANCER));
}

#[test]
fn ensemble_rejects_empty_model_lists() {
    assert!(ensemble(&[], &Raster::zeros(4, 4, 3), false).is_err());
}
