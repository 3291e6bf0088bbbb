//! Subcommand implementations. Each one writes into its `--out` directory
//! and reports the files it read and wrote so a manifest can be built.

use std::path::{Path, PathBuf};

use celldet_bench::experiments::{
    ensemble, format_loss, run_ctm_experiment, run_format_experiment, run_seed, run_sigma_ablation,
    std_dev, target_maps, tissue_labels, tissue_target, TableRow,
};
use celldet_bench::train::{train_kfold, EpochLoss, TrainOptions};
use celldet_bench::{synth_scene, LossKind, PixelModel, SynthScene, TrainConfig, TrainSample};
use celldet_core::augment::oversample_weights_cells;
use celldet_core::eval::{f1_scores, group_report, match_detections, EvalConfig, GroupReport, MatchResult};
use celldet_core::geometry::{compose_ctm_input, leak_tissue_labels};
use celldet_core::groundtruth::{GtFormat, InstanceGroundTruth};
use celldet_core::postprocess::detect_cells;
use celldet_core::{CellClass, Detection, PointAnnotations, Raster};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cli::*;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::*;
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::pool::parallel_map;

/// Files a command read and wrote.
#[derive(Debug, Default)]
pub struct RunFiles {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

/// Printed on stdout after a successful run.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub out: String,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_matched: Option<bool>,
}

/// Runs a command and writes its manifest next to the outputs.
pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<RunSummary> {
    if let Command::Replay(a) = cmd {
        return replay(a);
    }
    let (manifest, _) = run_recorded(cmd, cfg)?;
    Ok(summary(cmd, &manifest, None))
}

fn summary(cmd: &Command, m: &Manifest, replay_matched: Option<bool>) -> RunSummary {
    RunSummary {
        command: cmd.name(),
        out: cmd.out().display().to_string(),
        outputs: m.outputs.iter().map(|d| d.path.clone()).collect(),
        replay_matched,
    }
}

fn run_recorded(cmd: &Command, cfg: &RunConfig) -> Result<(Manifest, PathBuf)> {
    let out = cmd.out().clone();
    create_dir(&out)?;
    let files = run(cmd, cfg)?;
    let manifest = Manifest::new(cmd.clone(), cfg.clone(), &files.inputs, &out, &files.outputs)?;
    let path = out.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok((manifest, path))
}

fn run(cmd: &Command, cfg: &RunConfig) -> Result<RunFiles> {
    match cmd {
        Command::Synth(a) => synth(a, cfg),
        Command::Gt(a) => gt(a, cfg),
        Command::Train(a) => train(a, cfg),
        Command::Predict(a) => predict(a, cfg),
        Command::Postprocess(a) => postprocess(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Experiment(a) => experiment(a, cfg),
        Command::Render(a) => render(a),
        Command::Replay(_) => Err(CliError::Config("replay cannot be nested".into())),
    }
}

fn replay(a: &ReplayArgs) -> Result<RunSummary> {
    let recorded: Manifest = read_json(&a.manifest)?;
    let changed = recorded.changed_inputs()?;
    if !changed.is_empty() {
        return Err(CliError::Replay(format!("inputs changed since the run: {}", changed.join(", "))));
    }
    let mut cmd = recorded.command.clone();
    cmd.set_out(a.out.clone());
    recorded.config.validate()?;
    let (fresh, _) = run_recorded(&cmd, &recorded.config)?;
    let differing: Vec<String> = recorded
        .outputs
        .iter()
        .filter(|d| !fresh.outputs.contains(d))
        .map(|d| d.path.clone())
        .chain(
            fresh
                .outputs
                .iter()
                .filter(|d| !recorded.outputs.iter().any(|r| r.path == d.path))
                .map(|d| d.path.clone()),
        )
        .collect();
    if !differing.is_empty() {
        return Err(CliError::Replay(format!("outputs differ: {}", differing.join(", "))));
    }
    Ok(summary(&cmd, &fresh, Some(true)))
}

// ---- scenes ----

fn scene_data(s: &SynthScene) -> SceneData {
    let r = s.registration;
    SceneData {
        cell_img: s.cell_img.clone(),
        tissue_img: s.tissue_img.clone(),
        annotations: s.annotations.clone(),
        instances: s.instance_labels.clone(),
        tissue_gt: s.tissue_gt.clone(),
        meta: SceneMeta {
            cell_mpp: r.cell_mpp,
            tissue_mpp: r.tissue_mpp,
            cell_offset_in_tissue: [r.cell_offset_in_tissue.0, r.cell_offset_in_tissue.1],
            cell_extent_in_tissue: [r.cell_extent_in_tissue.0, r.cell_extent_in_tissue.1],
            organ_tag: s.organ_tag.clone(),
        },
    }
}

fn scene_instances(dir: &Path, s: &SceneData) -> Result<InstanceGroundTruth> {
    InstanceGroundTruth::from_annotations(&s.instances, &s.annotations)
        .map_err(|e| CliError::parse(&dir.join(scene_files::INSTANCES), None, e.to_string()))
}

fn synth(a: &SynthArgs, cfg: &RunConfig) -> Result<RunFiles> {
    if a.count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let idx: Vec<usize> = (0..a.count).collect();
    let scenes = parallel_map(&idx, cfg.worker_count(), |_, &i| -> Result<SynthScene> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        Ok(synth_scene(&mut rng, &cfg.experiment.synth)?)
    })?;
    let mut files = RunFiles::default();
    for (i, s) in scenes.iter().enumerate() {
        let dir = a.out.join(format!("scene_{i:04}"));
        files.outputs.extend(write_scene(&dir, &scene_data(s))?);
    }
    Ok(files)
}

fn gt(a: &GtArgs, cfg: &RunConfig) -> Result<RunFiles> {
    let s = read_scene(&a.scene)?;
    let inst = scene_instances(&a.scene, &s)?;
    let ex = &cfg.experiment;
    let sigma_um = a.sigma_um.unwrap_or(ex.soft_sigma_um);
    if !(sigma_um > 0.0 && sigma_um.is_finite()) {
        return Err(CliError::Config("--sigma-um must be positive".into()));
    }
    let radius = a.radius_px.unwrap_or(ex.circle_radius_px);
    let (h, w) = s.cell_img.dims();
    let format = GtFormat::from(a.format);
    let maps = target_maps(&s.annotations, &inst, h, w, format, radius, sigma_um / s.meta.cell_mpp)?
        .with_mpp(s.meta.cell_mpp);
    let outputs = write_maps(&a.out, &maps, &CELL_CHANNELS, Some(format.name()))?;
    Ok(RunFiles {
        inputs: scene_paths(&a.scene),
        outputs,
    })
}

// ---- models ----

/// A trained fold model with what it expects as input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub target: TargetArg,
    pub format: Option<FormatArg>,
    pub tissue: TissueArg,
    pub fold: usize,
    pub model: PixelModel,
}

pub fn model_file_name(fold: usize) -> String {
    format!("model_{fold}.json")
}

/// Fold models in `dir` ordered by fold, optionally only the first `n`.
pub fn load_models(dir: &Path, n: Option<usize>) -> Result<(Vec<ModelFile>, Vec<PathBuf>)> {
    let mut paths = Vec::new();
    for fold in 0.. {
        let p = dir.join(model_file_name(fold));
        if !p.exists() || n.is_some_and(|n| fold >= n) {
            break;
        }
        paths.push(p);
    }
    if paths.is_empty() {
        return Err(CliError::MissingInput(dir.join(model_file_name(0)).display().to_string()));
    }
    if let Some(n) = n {
        if n == 0 || paths.len() < n {
            return Err(CliError::Config(format!("{} holds {} fold models, {n} requested", dir.display(), paths.len())));
        }
    }
    let models = paths.iter().map(|p| read_json::<ModelFile>(p)).collect::<Result<Vec<_>>>()?;
    let first = &models[0];
    if models
        .iter()
        .any(|m| m.target != first.target || m.tissue != first.tissue || m.format != first.format)
    {
        return Err(CliError::Config(format!("fold models in {} disagree on their inputs", dir.display())));
    }
    Ok((models, paths))
}

fn bare(models: &[ModelFile]) -> Vec<PixelModel> {
    models.iter().map(|m| m.model.clone()).collect()
}

/// Cell-model input for a scene under the given tissue context.
fn cell_input(s: &SceneData, tissue: TissueArg, tissue_models: &[PixelModel]) -> Result<Raster> {
    if tissue == TissueArg::None {
        return Ok(s.cell_img.clone());
    }
    let pred = ensemble(tissue_models, &s.tissue_img, false)?;
    let context = match tissue {
        TissueArg::Leaked => leak_tissue_labels(&pred, &s.tissue_gt)?,
        _ => pred,
    };
    Ok(compose_ctm_input(&s.cell_img, &context, &s.meta.registration())?)
}

fn tissue_models_for(tissue: TissueArg, dir: Option<&Path>) -> Result<(Vec<PixelModel>, Vec<PathBuf>)> {
    match (tissue, dir) {
        (TissueArg::None, None) => Ok((Vec::new(), Vec::new())),
        (TissueArg::None, Some(_)) => Err(CliError::Config("--tissue-models given without --tissue".into())),
        (_, None) => Err(CliError::Config("--tissue predicted|leaked needs --tissue-models".into())),
        (_, Some(d)) => {
            let (m, p) = load_models(d, None)?;
            if m[0].target != TargetArg::Tissue {
                return Err(CliError::Config(format!("{} does not hold tissue models", d.display())));
            }
            Ok((bare(&m), p))
        }
    }
}

fn read_scenes(root: &Path, workers: usize) -> Result<(Vec<PathBuf>, Vec<SceneData>)> {
    let dirs = list_scenes(root)?;
    let scenes = parallel_map(&dirs, workers, |_, d| read_scene(d))?;
    Ok((dirs, scenes))
}

fn train(a: &TrainArgs, cfg: &RunConfig) -> Result<RunFiles> {
    let ex = &cfg.experiment;
    let workers = cfg.worker_count();
    let (dirs, scenes) = read_scenes(&a.scenes, workers)?;
    let mut inputs: Vec<PathBuf> = dirs.iter().flat_map(|d| scene_paths(d)).collect();
    let tags: Vec<String> = scenes.iter().map(|s| s.meta.organ_tag.clone()).collect();
    let (template, samples, tcfg, opts, format) = match a.target {
        TargetArg::Tissue => {
            if a.tissue != TissueArg::None || a.tissue_models.is_some() {
                return Err(CliError::Config("tissue models take no tissue context".into()));
            }
            let features = ex.features.clone().with_tissue(false);
            let samples = parallel_map(&scenes, workers, |_, s| {
                Ok::<_, CliError>(TrainSample::new(s.tissue_img.clone(), tissue_target(&s.tissue_gt), false, &features)?)
            })?;
            let tcfg = TrainConfig {
                loss: LossKind::CrossEntropy,
                ..ex.tissue_train.clone()
            };
            (PixelModel::new(features, 2), samples, tcfg, TrainOptions::default(), None)
        }
        TargetArg::Cells => {
            let (tissue_models, tissue_paths) = tissue_models_for(a.tissue, a.tissue_models.as_deref())?;
            inputs.extend(tissue_paths);
            let features = ex.features.clone().with_tissue(a.tissue != TissueArg::None);
            let format = GtFormat::from(a.format);
            let samples = parallel_map(&scenes, workers, |i, s| {
                let inst = scene_instances(&dirs[i], s)?;
                let (h, w) = s.cell_img.dims();
                let sigma_px = ex.soft_sigma_um / s.meta.cell_mpp;
                let target = target_maps(&s.annotations, &inst, h, w, format, ex.circle_radius_px, sigma_px)?;
                let input = cell_input(s, a.tissue, &tissue_models)?;
                Ok::<_, CliError>(TrainSample::new(input, target, format == GtFormat::SoftIs, &features)?)
            })?;
            let tcfg = TrainConfig {
                loss: format_loss(format),
                ..ex.train.clone()
            };
            let opts = TrainOptions {
                weighting: ex.oversample_cells.then(|| {
                    let pts: Vec<PointAnnotations> = scenes.iter().map(|s| s.annotations.clone()).collect();
                    oversample_weights_cells(&pts)
                }),
                augment: ex.augment.clone(),
            };
            (PixelModel::new(features, 3), samples, tcfg, opts, Some(a.format))
        }
    };
    let tcfg = TrainConfig {
        k_folds: a.folds.unwrap_or(tcfg.k_folds),
        ..run_seed(&tcfg, cfg.seed)
    };
    tcfg.validate()?;
    if tcfg.k_folds > scenes.len() {
        return Err(CliError::Config(format!("{} folds over {} scenes", tcfg.k_folds, scenes.len())));
    }
    let outcomes = train_kfold(&template, &samples, &tags, &tcfg, &opts)?;
    let mut outputs = Vec::new();
    for (fold, o) in outcomes.into_iter().enumerate() {
        let mf = ModelFile {
            target: a.target,
            format,
            tissue: a.tissue,
            fold,
            model: o.model,
        };
        let mp = a.out.join(model_file_name(fold));
        write_json(&mp, &mf)?;
        let cp = a.out.join(format!("curve_{fold}.csv"));
        write_table(&cp, &["epoch", "train_loss", "valid_loss"], &curve_rows(&o.curve))?;
        outputs.extend([mp, cp]);
    }
    Ok(RunFiles { inputs, outputs })
}

fn curve_rows(curve: &[EpochLoss]) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.train.to_string(),
                e.valid.map(|v| v.to_string()).unwrap_or_default(),
            ]
        })
        .collect()
}

fn predict(a: &PredictArgs, _cfg: &RunConfig) -> Result<RunFiles> {
    let s = read_scene(&a.scene)?;
    let (models, mut inputs) = load_models(&a.models, a.folds)?;
    inputs.extend(scene_paths(&a.scene));
    let kind = &models[0];
    let mut outputs = Vec::new();
    match kind.target {
        TargetArg::Tissue => {
            if a.tissue != TissueArg::None || a.tissue_models.is_some() {
                return Err(CliError::Config("tissue models take no tissue context".into()));
            }
            let pred = ensemble(&bare(&models), &s.tissue_img, a.tta)?.with_mpp(s.meta.tissue_mpp);
            outputs.extend(write_maps(&a.out, &pred, &TISSUE_CHANNELS, None)?);
            let lp = a.out.join("tissue_labels.png");
            write_tissue_labels(&lp, &tissue_labels(&pred))?;
            outputs.push(lp);
        }
        TargetArg::Cells => {
            let wants_tissue = kind.tissue != TissueArg::None;
            if wants_tissue != (a.tissue != TissueArg::None) {
                return Err(CliError::Config(format!(
                    "models were trained with tissue context {:?}; --tissue must {}be none",
                    kind.tissue,
                    if wants_tissue { "not " } else { "" }
                )));
            }
            let (tissue_models, tissue_paths) = tissue_models_for(a.tissue, a.tissue_models.as_deref())?;
            inputs.extend(tissue_paths);
            let input = cell_input(&s, a.tissue, &tissue_models)?;
            let pred = ensemble(&bare(&models), &input, a.tta)?.with_mpp(s.meta.cell_mpp);
            let format = kind.format.map(|f| GtFormat::from(f).name());
            outputs.extend(write_maps(&a.out, &pred, &CELL_CHANNELS, format)?);
        }
    }
    Ok(RunFiles { inputs, outputs })
}

fn postprocess(a: &PostprocessArgs, cfg: &RunConfig) -> Result<RunFiles> {
    let (pred, index) = read_maps(&a.pred)?;
    if pred.channels() != 3 {
        return Err(CliError::Config(format!(
            "{} holds {} channels; cell maps have 3",
            a.pred.display(),
            pred.channels()
        )));
    }
    let dets = detect_cells(&pred, a.mode.into(), &cfg.experiment.postproc)?;
    let path = a.out.join("detections.csv");
    write_detections(&path, &dets)?;
    let mut inputs = vec![a.pred.join(CHANNEL_INDEX_FILE)];
    inputs.extend(index.channels.iter().map(|c| a.pred.join(&c.file)));
    Ok(RunFiles {
        inputs,
        outputs: vec![path],
    })
}

// ---- evaluation ----

#[derive(Debug, Serialize)]
struct SampleMetrics {
    detections: String,
    annotations: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    organ: Option<String>,
    scores: celldet_core::eval::F1Scores,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    match_radius_px: u32,
    pooled: celldet_core::eval::F1Scores,
    samples: Vec<SampleMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    organs: Option<GroupReport>,
}

fn score_rows(name: &str, s: &celldet_core::eval::F1Scores) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for class in [CellClass::BackgroundCell, CellClass::TumorCell] {
        let c = &s.per_class[class.index()];
        rows.push(vec![
            name.to_string(),
            class.id().to_string(),
            c.counts.tp.to_string(),
            c.counts.fp.to_string(),
            c.counts.fn_.to_string(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
        ]);
    }
    rows.push(vec![
        name.to_string(),
        "mean".into(),
        String::new(),
        String::new(),
        String::new(),
        s.mean_precision.to_string(),
        s.mean_recall.to_string(),
        s.mean_f1.to_string(),
    ]);
    rows
}

const SCORE_HEADER: [&str; 8] = ["sample", "class", "tp", "fp", "fn", "precision", "recall", "f1"];

fn group_rows(label: &str, g: &GroupReport) -> Vec<Vec<String>> {
    g.rows
        .iter()
        .chain(std::iter::once(&g.overall))
        .map(|r| {
            vec![
                label.to_string(),
                r.group.clone(),
                r.n.to_string(),
                r.macro_f1.to_string(),
                r.micro_f1.to_string(),
            ]
        })
        .collect()
}

const GROUP_HEADER: [&str; 5] = ["model", "organ", "n", "macro_f1", "micro_f1"];

fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<RunFiles> {
    if a.detections.len() != a.annotations.len() {
        return Err(CliError::Config(format!(
            "{} detection files but {} annotation files",
            a.detections.len(),
            a.annotations.len()
        )));
    }
    if !a.organs.is_empty() && a.organs.len() != a.annotations.len() {
        return Err(CliError::Config(format!(
            "{} organ tags for {} samples",
            a.organs.len(),
            a.annotations.len()
        )));
    }
    let ecfg = EvalConfig {
        match_radius_px: a.radius_px.unwrap_or(cfg.experiment.eval.match_radius_px),
    };
    ecfg.validate()?;
    let pairs: Vec<(PathBuf, PathBuf)> = a.detections.iter().cloned().zip(a.annotations.iter().cloned()).collect();
    let results = parallel_map(&pairs, cfg.worker_count(), |_, (d, g)| -> Result<MatchResult> {
        let dets: Vec<Detection> = read_detections(d)?;
        let gts = read_annotations(g, cfg.experiment.synth.cell_mpp)?;
        Ok(match_detections(&dets, &gts, &ecfg))
    })?;
    let mut pooled = MatchResult::default();
    for r in &results {
        pooled.pool(r);
    }
    let organs = if a.organs.is_empty() {
        None
    } else {
        Some(group_report(&results, &a.organs)?)
    };
    let samples: Vec<SampleMetrics> = pairs
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(i, ((d, g), r))| SampleMetrics {
            detections: d.display().to_string(),
            annotations: g.display().to_string(),
            organ: a.organs.get(i).cloned(),
            scores: f1_scores(r),
        })
        .collect();
    let report = EvalReport {
        match_radius_px: ecfg.match_radius_px,
        pooled: f1_scores(&pooled),
        samples,
        organs,
    };
    let mut outputs = Vec::new();
    let jp = a.out.join("metrics.json");
    write_json(&jp, &report)?;
    let mut rows = score_rows("pooled", &report.pooled);
    for (i, s) in report.samples.iter().enumerate() {
        rows.extend(score_rows(&i.to_string(), &s.scores));
    }
    let cp = a.out.join("metrics.csv");
    write_table(&cp, &SCORE_HEADER, &rows)?;
    outputs.extend([jp, cp]);
    if let Some(g) = &report.organs {
        let op = a.out.join("organs.csv");
        write_table(&op, &GROUP_HEADER, &group_rows("detections", g))?;
        outputs.push(op);
    }
    let inputs = a.detections.iter().chain(&a.annotations).cloned().collect();
    Ok(RunFiles { inputs, outputs })
}

// ---- experiments ----

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

const ROW_HEADER: [&str; 7] = ["model", "n_seeds", "f1_mean", "f1_std", "f1_fold_std", "precision_mean", "recall_mean"];

fn table_row(r: &TableRow) -> Vec<String> {
    vec![
        r.name.clone(),
        r.seeds.len().to_string(),
        r.mean_f1.to_string(),
        r.std_f1.to_string(),
        opt(r.fold_std_f1),
        r.mean_precision.to_string(),
        r.mean_recall.to_string(),
    ]
}

fn seed_rows(rows: &[&TableRow]) -> Vec<Vec<String>> {
    rows.iter()
        .flat_map(|r| {
            r.seeds.iter().map(|s| {
                vec![
                    r.name.clone(),
                    s.seed.to_string(),
                    s.mean_f1.to_string(),
                    s.mean_precision.to_string(),
                    s.mean_recall.to_string(),
                ]
            })
        })
        .collect()
}

const SEED_HEADER: [&str; 5] = ["model", "seed", "f1", "precision", "recall"];

fn experiment(a: &ExperimentArgs, cfg: &RunConfig) -> Result<RunFiles> {
    let n = a.seeds.unwrap_or(cfg.n_seeds);
    if n == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let seeds = cfg.seeds(n);
    let ex = &cfg.experiment;
    let table = a.out.join("table.csv");
    let per_seed = a.out.join("seeds.csv");
    let metrics = a.out.join("metrics.json");
    let mut outputs = vec![table.clone(), per_seed.clone(), metrics.clone()];
    match a.which {
        WhichArg::Formats => {
            let t = run_format_experiment(ex, &seeds)?;
            write_table(&table, &ROW_HEADER, &t.rows.iter().map(table_row).collect::<Vec<_>>())?;
            write_table(&per_seed, &SEED_HEADER, &seed_rows(&t.rows.iter().collect::<Vec<_>>()))?;
            write_json(&metrics, &t)?;
        }
        WhichArg::Sigma => {
            let t = run_sigma_ablation(ex, &seeds)?;
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    let col = |f: fn(&celldet_bench::experiments::SeedScore) -> f64| {
                        r.row.seeds.iter().map(f).collect::<Vec<_>>()
                    };
                    let p = col(|s| s.mean_precision);
                    let rc = col(|s| s.mean_recall);
                    vec![
                        r.sigma_um.to_string(),
                        r.sigma_px.to_string(),
                        r.row.mean_precision.to_string(),
                        std_dev(&p).to_string(),
                        r.row.mean_recall.to_string(),
                        std_dev(&rc).to_string(),
                        r.row.mean_f1.to_string(),
                        r.row.std_f1.to_string(),
                    ]
                })
                .collect::<Vec<_>>();
            write_table(
                &table,
                &[
                    "sigma_um",
                    "sigma_px",
                    "precision_mean",
                    "precision_std",
                    "recall_mean",
                    "recall_std",
                    "f1_mean",
                    "f1_std",
                ],
                &rows,
            )?;
            write_table(&per_seed, &SEED_HEADER, &seed_rows(&t.rows.iter().map(|r| &r.row).collect::<Vec<_>>()))?;
            write_json(&metrics, &t)?;
        }
        WhichArg::Ctm => {
            let t = run_ctm_experiment(ex, &seeds)?;
            write_table(&table, &ROW_HEADER, &t.rows.iter().map(table_row).collect::<Vec<_>>())?;
            write_table(&per_seed, &SEED_HEADER, &seed_rows(&t.rows.iter().collect::<Vec<_>>()))?;
            write_json(&metrics, &t)?;
            let organs = a.out.join("organs.csv");
            let rows = t.organs.iter().flat_map(|(name, g)| group_rows(name, g)).collect::<Vec<_>>();
            write_table(&organs, &GROUP_HEADER, &rows)?;
            outputs.push(organs);
        }
    }
    Ok(RunFiles {
        inputs: Vec::new(),
        outputs,
    })
}

// ---- rendering ----

fn class_color(c: CellClass) -> [f64; 3] {
    match c {
        CellClass::BackgroundCell => [0.1, 0.5, 1.0],
        CellClass::TumorCell => [1.0, 0.85, 0.0],
    }
}

fn paint(img: &mut Raster, x: i64, y: i64, rgb: [f64; 3]) {
    let (h, w) = img.dims();
    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
        return;
    }
    for (c, v) in rgb.iter().enumerate() {
        img.set(c, y as usize, x as usize, *v);
    }
}

fn render(a: &RenderArgs) -> Result<RunFiles> {
    let s = read_scene(&a.scene)?;
    let mut img = s.cell_img.clone();
    let mut inputs = scene_paths(&a.scene);
    if !a.no_gt {
        // Rings of radius 5 around annotated centroids.
        for p in &s.annotations.points {
            let rgb = class_color(p.class);
            for t in 0..64 {
                let ang = t as f64 * std::f64::consts::TAU / 64.0;
                let x = p.x as f64 + 5.0 * ang.cos();
                let y = p.y as f64 + 5.0 * ang.sin();
                paint(&mut img, x.round() as i64, y.round() as i64, rgb);
            }
        }
    }
    if let Some(d) = &a.detections {
        for det in read_detections(d)? {
            let rgb = class_color(det.class);
            let (x, y) = (det.x as i64, det.y as i64);
            for k in -2..=2 {
                paint(&mut img, x + k, y, rgb);
                paint(&mut img, x, y + k, rgb);
            }
        }
        inputs.push(d.clone());
    }
    let path = a.out.join("overlay.png");
    write_rgb(&path, &img)?;
    Ok(RunFiles {
        inputs,
        outputs: vec![path],
    })
}
