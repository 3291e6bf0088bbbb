//! Experiment harnesses: ground-truth format comparison, soft-IS sigma
//! ablation and the cell/tissue context comparison.

use celldet_core::augment::{oversample_weights_cells, AugmentParams};
use celldet_core::eval::{f1_scores, group_report, match_detections, tissue_f1, ClassCounts, EvalConfig, GroupReport, MatchResult};
use celldet_core::geometry::{
    compose_ctm_input, ensemble_predict, leak_tissue_labels, EnsembleOrder, TISSUE_BACKGROUND, TISSUE_CANCER,
};
use celldet_core::annotation::PointAnnotations;
use celldet_core::groundtruth::{circle_gt, hard_is_gt, soft_is_gt, GtFormat, InstanceGroundTruth};
use celldet_core::postprocess::{detect_cells, DetectMode, PostprocParams};
use celldet_core::{LabelMap, Raster};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::features::FeatureConfig;
use crate::model::PixelModel;
use crate::scene::{synth_scene, SynthParams, SynthScene};
use crate::train::{train_kfold, LossKind, TrainConfig, TrainOptions, TrainSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub synth: SynthParams,
    pub n_train: usize,
    pub n_test: usize,
    pub features: FeatureConfig,
    /// Cell-model training; the loss is chosen per ground-truth format.
    pub train: TrainConfig,
    pub tissue_train: TrainConfig,
    pub postproc: PostprocParams,
    pub eval: EvalConfig,
    pub circle_radius_px: usize,
    pub soft_sigma_um: f64,
    pub sigmas_um: Vec<f64>,
    pub oversample_cells: bool,
    pub augment: Option<AugmentParams>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthParams::default(),
            n_train: 20,
            n_test: 10,
            features: FeatureConfig::default(),
            train: TrainConfig {
                k_folds: 1,
                ..TrainConfig::default()
            },
            tissue_train: TrainConfig {
                loss: LossKind::CrossEntropy,
                k_folds: 1,
                epochs: 15,
                ..TrainConfig::default()
            },
            postproc: PostprocParams::default(),
            eval: EvalConfig::default(),
            circle_radius_px: 7,
            soft_sigma_um: 3.0,
            sigmas_um: vec![1.0, 2.0, 3.0, 4.0],
            oversample_cells: false,
            augment: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.tissue_train.validate()?;
        self.postproc.validate()?;
        self.eval.validate()?;
        if self.n_train == 0 || self.n_test == 0 {
            return Err(BenchError::Config("n_train and n_test must be positive".into()));
        }
        if self.sigmas_um.is_empty() || self.sigmas_um.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(BenchError::Config("sigmas_um must be a non-empty list of positive values".into()));
        }
        if !(self.soft_sigma_um > 0.0) || self.circle_radius_px == 0 {
            return Err(BenchError::Config("soft sigma and circle radius must be positive".into()));
        }
        Ok(())
    }

    pub fn soft_sigma_px(&self, sigma_um: f64) -> f64 {
        sigma_um / self.synth.cell_mpp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<SynthScene>,
    pub test: Vec<SynthScene>,
}

impl Dataset {
    fn train_tags(&self) -> Vec<String> {
        self.train.iter().map(|s| s.organ_tag.clone()).collect()
    }

    fn test_tags(&self) -> Vec<String> {
        self.test.iter().map(|s| s.organ_tag.clone()).collect()
    }
}

/// Scenes generated from their own stream of `seed`.
pub fn synth_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut gen = |n: usize| (0..n).map(|_| synth_scene(&mut rng, &cfg.synth)).collect::<Result<Vec<_>>>();
    let train = gen(cfg.n_train)?;
    let test = gen(cfg.n_test)?;
    Ok(Dataset { train, test })
}

/// Training config for one experiment seed.
pub fn run_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: cfg.seed ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Pooled over the held-out scenes, indexed by cell class.
    pub counts: [ClassCounts; 2],
    /// Held-out mean F1 of every fold model on its own.
    pub fold_f1: Vec<f64>,
}

impl SeedScore {
    fn new(seed: u64, pooled: &MatchResult, fold_f1: Vec<f64>) -> Self {
        let s = f1_scores(pooled);
        Self {
            seed,
            mean_f1: s.mean_f1,
            mean_precision: s.mean_precision,
            mean_recall: s.mean_recall,
            counts: pooled.counts,
            fold_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub seeds: Vec<SeedScore>,
    pub mean_f1: f64,
    /// Across seeds; zero for a single seed.
    pub std_f1: f64,
    /// Spread of single-fold models around their ensemble, averaged over
    /// seeds; `None` without k-fold training.
    pub fold_std_f1: Option<f64>,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; zero below two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl TableRow {
    pub fn from_seeds(name: impl Into<String>, seeds: Vec<SeedScore>) -> Self {
        let col = |f: fn(&SeedScore) -> f64| seeds.iter().map(f).collect::<Vec<_>>();
        let f1 = col(|s| s.mean_f1);
        let fold: Vec<f64> = seeds
            .iter()
            .filter(|s| s.fold_f1.len() > 1)
            .map(|s| std_dev(&s.fold_f1))
            .collect();
        Self {
            name: name.into(),
            mean_f1: mean(&f1),
            std_f1: std_dev(&f1),
            fold_std_f1: if fold.is_empty() { None } else { Some(mean(&fold)) },
            mean_precision: mean(&col(|s| s.mean_precision)),
            mean_recall: mean(&col(|s| s.mean_recall)),
            seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatTable {
    /// Circle, hard IS, soft IS.
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma_um: f64,
    pub sigma_px: f64,
    pub row: TableRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaTable {
    pub rows: Vec<SigmaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmTable {
    /// Cell-only, SoftCTM, SoftCTM+TTA, TLLM, TLLM+TTA.
    pub rows: Vec<TableRow>,
    /// Held-out tissue F1 of the tissue model per seed.
    pub tissue_f1: Vec<f64>,
    /// Per-organ scores for every row, over all seeds' held-out scenes.
    pub organs: Vec<(String, GroupReport)>,
}

fn to_core(e: BenchError) -> celldet_core::Error {
    match e {
        BenchError::Core(c) => c,
        other => celldet_core::Error::Parameter(other.to_string()),
    }
}

fn predictor(m: &PixelModel) -> impl Fn(&Raster) -> celldet_core::Result<Raster> + '_ {
    move |x: &Raster| m.predict(x).map_err(to_core)
}

/// Fold-averaged (optionally TTA) prediction of a model ensemble.
pub fn ensemble(models: &[PixelModel], input: &Raster, tta: bool) -> Result<Raster> {
    let fs: Vec<_> = models.iter().map(predictor).collect();
    Ok(ensemble_predict(&fs, input, tta, EnsembleOrder::TtaInside)?)
}

/// Target maps of `format` from point annotations and their instances.
pub fn target_maps(
    pts: &PointAnnotations,
    inst: &InstanceGroundTruth,
    h: usize,
    w: usize,
    format: GtFormat,
    radius_px: usize,
    sigma_px: f64,
) -> Result<Raster> {
    let maps = match format {
        GtFormat::Circle => circle_gt(pts, h, w, radius_px)?,
        GtFormat::HardIs => hard_is_gt(inst, pts, h, w, radius_px)?,
        GtFormat::SoftIs => soft_is_gt(pts, Some(inst), h, w, sigma_px)?,
    };
    Ok(maps.maps)
}

/// Cell target maps of `format` for a scene.
pub fn cell_target(cfg: &ExperimentConfig, scene: &SynthScene, format: GtFormat, sigma_um: f64) -> Result<Raster> {
    let (h, w) = scene.cell_img.dims();
    let sigma_px = cfg.soft_sigma_px(sigma_um);
    target_maps(&scene.annotations, &scene.instances(), h, w, format, cfg.circle_radius_px, sigma_px)
}

/// Loss paired with a ground-truth format.
pub fn format_loss(format: GtFormat) -> LossKind {
    match format {
        GtFormat::Circle | GtFormat::HardIs => LossKind::Dice,
        GtFormat::SoftIs => LossKind::WeightedMse,
    }
}

/// Detector paired with a ground-truth format.
pub fn format_detector(format: GtFormat) -> DetectMode {
    match format {
        GtFormat::Circle | GtFormat::SoftIs => DetectMode::Soft,
        GtFormat::HardIs => DetectMode::Hard,
    }
}

/// Trains cell models on `inputs` against targets of `format`.
fn fit_cells(
    cfg: &ExperimentConfig,
    data: &Dataset,
    inputs: &[Raster],
    features: &FeatureConfig,
    format: GtFormat,
    sigma_um: f64,
    seed: u64,
) -> Result<Vec<PixelModel>> {
    let samples = data
        .train
        .iter()
        .zip(inputs)
        .map(|(s, x)| {
            TrainSample::new(
                x.clone(),
                cell_target(cfg, s, format, sigma_um)?,
                format == GtFormat::SoftIs,
                features,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let tcfg = TrainConfig {
        loss: format_loss(format),
        ..run_seed(&cfg.train, seed)
    };
    let opts = TrainOptions {
        weighting: cfg.oversample_cells.then(|| {
            let pts: Vec<_> = data.train.iter().map(|s| s.annotations.clone()).collect();
            oversample_weights_cells(&pts)
        }),
        augment: cfg.augment.clone(),
    };
    let template = PixelModel::new(features.clone(), 3);
    let outcomes = train_kfold(&template, &samples, &data.train_tags(), &tcfg, &opts)?;
    Ok(outcomes.into_iter().map(|o| o.model).collect())
}

/// Per-scene match results of an ensemble on held-out inputs.
fn score_scenes(
    cfg: &ExperimentConfig,
    data: &Dataset,
    models: &[PixelModel],
    inputs: &[Raster],
    mode: DetectMode,
    tta: bool,
) -> Result<Vec<MatchResult>> {
    data.test
        .iter()
        .zip(inputs)
        .map(|(s, x)| {
            let pred = ensemble(models, x, tta)?;
            let dets = detect_cells(&pred, mode, &cfg.postproc)?;
            Ok(match_detections(&dets, &s.annotations, &cfg.eval))
        })
        .collect()
}

fn pooled(results: &[MatchResult]) -> MatchResult {
    let mut p = MatchResult::default();
    for r in results {
        p.pool(r);
    }
    p
}

/// Ensemble score plus the individual fold-model scores.
fn seed_score(
    cfg: &ExperimentConfig,
    data: &Dataset,
    models: &[PixelModel],
    inputs: &[Raster],
    mode: DetectMode,
    tta: bool,
    seed: u64,
) -> Result<(SeedScore, Vec<MatchResult>)> {
    let per_scene = score_scenes(cfg, data, models, inputs, mode, tta)?;
    let fold_f1 = if models.len() > 1 {
        models
            .iter()
            .map(|m| {
                let r = score_scenes(cfg, data, std::slice::from_ref(m), inputs, mode, false)?;
                Ok(f1_scores(&pooled(&r)).mean_f1)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok((SeedScore::new(seed, &pooled(&per_scene), fold_f1), per_scene))
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(BenchError::Config("at least one seed is required".into()));
    }
    Ok(())
}

fn cell_inputs(scenes: &[SynthScene]) -> Vec<Raster> {
    scenes.iter().map(|s| s.cell_img.clone()).collect()
}

fn format_scores(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Vec<SeedScore>> {
    let train_in = cell_inputs(&data.train);
    let test_in = cell_inputs(&data.test);
    GtFormat::ALL
        .iter()
        .map(|&f| {
            let models = fit_cells(cfg, data, &train_in, &cfg.features, f, cfg.soft_sigma_um, seed)?;
            Ok(seed_score(cfg, data, &models, &test_in, format_detector(f), false, seed)?.0)
        })
        .collect()
}

fn format_table(per_seed: Vec<Vec<SeedScore>>) -> FormatTable {
    let rows = GtFormat::ALL
        .iter()
        .enumerate()
        .map(|(i, f)| TableRow::from_seeds(f.name(), per_seed.iter().map(|s| s[i].clone()).collect()))
        .collect();
    FormatTable { rows }
}

/// Circle, hard-IS and soft-IS models per seed, each scored with its own
/// postprocessing on held-out scenes generated from that seed.
pub fn run_format_experiment(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<FormatTable> {
    cfg.validate()?;
    check_seeds(seeds)?;
    let per_seed = seeds
        .iter()
        .map(|&seed| format_scores(cfg, &synth_dataset(cfg, seed)?, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(format_table(per_seed))
}

/// As [`run_format_experiment`], on fixed scenes; seeds only vary training.
pub fn run_format_experiment_on(data: &Dataset, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<FormatTable> {
    cfg.validate()?;
    check_seeds(seeds)?;
    let per_seed = seeds
        .iter()
        .map(|&seed| format_scores(cfg, data, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(format_table(per_seed))
}

/// Soft-IS models for every sigma (in microns) and seed.
pub fn run_sigma_ablation(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<SigmaTable> {
    cfg.validate()?;
    check_seeds(seeds)?;
    let mut scores = vec![Vec::with_capacity(seeds.len()); cfg.sigmas_um.len()];
    for &seed in seeds {
        let data = synth_dataset(cfg, seed)?;
        let train_in = cell_inputs(&data.train);
        let test_in = cell_inputs(&data.test);
        for (i, &sigma) in cfg.sigmas_um.iter().enumerate() {
            let models = fit_cells(cfg, &data, &train_in, &cfg.features, GtFormat::SoftIs, sigma, seed)?;
            scores[i].push(seed_score(cfg, &data, &models, &test_in, DetectMode::Soft, false, seed)?.0);
        }
    }
    let rows = cfg
        .sigmas_um
        .iter()
        .zip(scores)
        .map(|(&s, sc)| SigmaRow {
            sigma_um: s,
            sigma_px: cfg.soft_sigma_px(s),
            row: TableRow::from_seeds(format!("sigma={s}um"), sc),
        })
        .collect();
    Ok(SigmaTable { rows })
}

/// Two-channel one-hot tissue target; unknown pixels stay all-zero.
pub fn tissue_target(gt: &LabelMap) -> Raster {
    let (h, w) = gt.dims();
    let mut out = Raster::zeros(h, w, 2);
    let n = h * w;
    let d = out.data_mut();
    for (i, &l) in gt.labels().iter().enumerate() {
        match l {
            TISSUE_BACKGROUND => d[i] = 1.0,
            TISSUE_CANCER => d[n + i] = 1.0,
            _ => {}
        }
    }
    out
}

/// Per-pixel argmax of a two-channel tissue prediction as tissue labels.
pub fn tissue_labels(pred: &Raster) -> LabelMap {
    let (h, w) = pred.dims();
    let n = h * w;
    let d = pred.data();
    let labels = (0..n)
        .map(|i| if d[n + i] > d[i] { TISSUE_CANCER } else { TISSUE_BACKGROUND })
        .collect();
    LabelMap::from_vec(h, w, labels).expect("dimensions match")
}

/// Tissue models trained with cross-entropy on the training scenes.
pub fn fit_tissue(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Vec<PixelModel>> {
    let samples = data
        .train
        .iter()
        .map(|s| TrainSample::new(s.tissue_img.clone(), tissue_target(&s.tissue_gt), false, &cfg.features))
        .collect::<Result<Vec<_>>>()?;
    let tcfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        ..run_seed(&cfg.tissue_train, seed ^ 0x5151)
    };
    let template = PixelModel::new(cfg.features.clone().with_tissue(false), 2);
    let outcomes = train_kfold(&template, &samples, &data.train_tags(), &tcfg, &TrainOptions::default())?;
    Ok(outcomes.into_iter().map(|o| o.model).collect())
}

pub const CTM_ROWS: [&str; 5] = ["cell-only", "SoftCTM", "SoftCTM+TTA", "TLLM", "TLLM+TTA"];

/// Cell-only versus tissue-context models on soft-IS targets. The SoftCTM
/// rows feed the tissue model's prediction; the TLLM rows feed the same
/// model the tissue ground truth wherever it is known.
pub fn run_ctm_experiment(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<CtmTable> {
    cfg.validate()?;
    check_seeds(seeds)?;
    let mut scores: Vec<Vec<SeedScore>> = vec![Vec::new(); CTM_ROWS.len()];
    let mut scene_results: Vec<Vec<MatchResult>> = vec![Vec::new(); CTM_ROWS.len()];
    let mut tags = Vec::new();
    let mut tissue_scores = Vec::with_capacity(seeds.len());
    let ctm_features = cfg.features.clone().with_tissue(true);
    for &seed in seeds {
        let data = synth_dataset(cfg, seed)?;
        let tissue_models = fit_tissue(cfg, &data, seed)?;
        let predict_tissue = |s: &SynthScene| ensemble(&tissue_models, &s.tissue_img, false);
        let train_tissue = data.train.iter().map(predict_tissue).collect::<Result<Vec<_>>>()?;
        let test_tissue = data.test.iter().map(predict_tissue).collect::<Result<Vec<_>>>()?;
        let tf1 = data
            .test
            .iter()
            .zip(&test_tissue)
            .map(|(s, p)| Ok(tissue_f1(&tissue_labels(p), &s.tissue_gt)?))
            .collect::<Result<Vec<_>>>()?;
        tissue_scores.push(mean(&tf1));

        let compose = |scenes: &[SynthScene], tissue: &[Raster]| {
            scenes
                .iter()
                .zip(tissue)
                .map(|(s, t)| Ok(compose_ctm_input(&s.cell_img, t, &s.registration)?))
                .collect::<Result<Vec<_>>>()
        };
        let leaked = data
            .test
            .iter()
            .zip(&test_tissue)
            .map(|(s, t)| Ok(leak_tissue_labels(t, &s.tissue_gt)?))
            .collect::<Result<Vec<_>>>()?;
        let ctm_train = compose(&data.train, &train_tissue)?;
        let ctm_test = compose(&data.test, &test_tissue)?;
        let tllm_test = compose(&data.test, &leaked)?;

        let sigma = cfg.soft_sigma_um;
        let cell_models = fit_cells(cfg, &data, &cell_inputs(&data.train), &cfg.features, GtFormat::SoftIs, sigma, seed)?;
        let ctm_models = fit_cells(cfg, &data, &ctm_train, &ctm_features, GtFormat::SoftIs, sigma, seed)?;
        let cell_test = cell_inputs(&data.test);
        let runs: [(&[PixelModel], &[Raster], bool); 5] = [
            (&cell_models, &cell_test, false),
            (&ctm_models, &ctm_test, false),
            (&ctm_models, &ctm_test, true),
            (&ctm_models, &tllm_test, false),
            (&ctm_models, &tllm_test, true),
        ];
        for (i, (models, inputs, tta)) in runs.into_iter().enumerate() {
            let (score, per_scene) = seed_score(cfg, &data, models, inputs, DetectMode::Soft, tta, seed)?;
            scores[i].push(score);
            scene_results[i].extend(per_scene);
        }
        tags.extend(data.test_tags());
    }
    let organs = CTM_ROWS
        .iter()
        .zip(&scene_results)
        .map(|(name, r)| Ok((name.to_string(), group_report(r, &tags)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = CTM_ROWS
        .iter()
        .zip(scores)
        .map(|(name, s)| TableRow::from_seeds(*name, s))
        .collect();
    Ok(CtmTable {
        rows,
        tissue_f1: tissue_scores,
        organs,
    })
}
