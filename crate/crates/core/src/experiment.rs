//! Reproducible experiments: configuration, the search-evaluation pipeline,
//! and the commands behind the CLI (`gradcheck`, `gen`, `train`, `eval`,
//! `sweep`). Every command is a pure function of its configuration; one
//! master seed fixes every random stream.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::{embed, EmbedderParams};
use crate::error::{Error, Result};
use crate::eval::{
    average_precision, build_protocol, cmc_topk, detection_recall_precision, ground_truths, mean,
    rank_gallery, QueryResult, SearchProtocol,
};
use crate::oim::FeatureVec;
use crate::synth::{
    gen_world, read_world_records, simulate_detections, threshold_detections,
    write_detection_records, write_world_records, Detection, DetectorConfig, Split, SynthConfig,
    SynthWorld,
};
use crate::trainer::{
    checkpoint_load, checkpoint_save, train, windowed_accuracy, windowed_loss, write_metrics_csv,
    TrainConfig, TrainState,
};

/// Steps averaged when reporting a training accuracy or loss "at" an iteration.
pub const METRIC_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub gallery_sizes: Vec<usize>,
    pub ks: Vec<usize>,
    pub iou_threshold: f64,
    /// Gallery detections scoring below this are discarded.
    pub score_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            gallery_sizes: vec![10, 20, 40],
            ks: vec![1, 5, 10],
            iou_threshold: crate::eval::DEFAULT_IOU_THRESHOLD,
            score_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub synth: SynthConfig,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            synth: SynthConfig::default(),
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

/// Named sub-streams of the master seed.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    World = 1,
    Train = 2,
    Detector = 3,
    Protocol = 4,
}

/// SplitMix64 finalizer over `(master, stream)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// The configuration actually run: sub-seeds derived from the master
    /// seed and the trainer's identity count tied to the world's.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        c.synth.seed = derive_seed(self.seed, Stream::World as u64);
        c.train.seed = derive_seed(self.seed, Stream::Train as u64);
        c.train.oim.num_labeled = c.synth.num_labeled;
        c
    }

    pub fn detector_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Detector as u64)
    }

    pub fn protocol_seed(&self, replicate: u64) -> u64 {
        derive_seed(derive_seed(self.seed, Stream::Protocol as u64), replicate)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.detector.validate()?;
        self.train.validate()?;
        if self.eval.ks.contains(&0) {
            return Err(Error::InvalidConfig("K values must be >= 1".into()));
        }
        Ok(())
    }
}

/// Runs the detector over every test scene with one seeded stream.
pub fn simulate_test_detections(
    world: &SynthWorld,
    det: &DetectorConfig,
    seed: u64,
) -> Result<Vec<Detection>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for scene in world.scenes_in(Split::Test) {
        out.extend(simulate_detections(scene, world.raw_dim(), det, &mut rng)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMetrics {
    pub gallery_size: usize,
    pub seed: u64,
    pub cmc: BTreeMap<usize, f64>,
    pub map: f64,
    pub per_query_ap: Vec<f64>,
}

/// Embedded gallery detections, indexed by scene, ready to answer queries.
pub struct SearchIndex<'w> {
    world: &'w SynthWorld,
    by_scene: Vec<Vec<(Detection, FeatureVec)>>,
    embedder: &'w EmbedderParams,
}

impl<'w> SearchIndex<'w> {
    pub fn new(
        world: &'w SynthWorld,
        embedder: &'w EmbedderParams,
        detections: &[Detection],
    ) -> Result<Self> {
        let mut by_scene: Vec<Vec<(Detection, FeatureVec)>> = vec![Vec::new(); world.scenes.len()];
        for d in detections {
            let slot = by_scene.get_mut(d.scene_id).ok_or_else(|| {
                Error::Record(format!("detection for unknown scene {}", d.scene_id))
            })?;
            slot.push((d.clone(), embed(&d.raw, embedder)?));
        }
        Ok(Self {
            world,
            by_scene,
            embedder,
        })
    }

    pub fn query_results(&self, protocol: &SearchProtocol) -> Result<Vec<QueryResult>> {
        protocol
            .queries
            .iter()
            .map(|q| {
                let person = &self.world.scenes[q.query.scene_id].persons[q.query.person];
                let qf = embed(&person.raw, self.embedder)?;
                let gallery = q
                    .gallery()
                    .flat_map(|sid| self.by_scene[sid].iter().map(|(d, f)| (d, f)));
                rank_gallery(&qf, gallery, ground_truths(self.world, q))
            })
            .collect()
    }

    pub fn evaluate(
        &self,
        protocol: &SearchProtocol,
        seed: u64,
        settings: &EvalSettings,
    ) -> Result<SearchMetrics> {
        let results = self.query_results(protocol)?;
        let per_query_ap = results
            .iter()
            .map(|r| average_precision(r, settings.iou_threshold))
            .collect::<Result<Vec<_>>>()?;
        if per_query_ap.is_empty() {
            return Err(Error::Empty("queries"));
        }
        let cmc = settings
            .ks
            .iter()
            .map(|&k| Ok((k, cmc_topk(&results, k, settings.iou_threshold)?)))
            .collect::<Result<_>>()?;
        Ok(SearchMetrics {
            gallery_size: protocol.gallery_size,
            seed,
            cmc,
            map: mean(&per_query_ap),
            per_query_ap,
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    w.write_all(b"\n")?;
    Ok(())
}

/// Generates the world, or reads it from a record file when given.
pub fn load_world(cfg: &ExperimentConfig, world_file: Option<&Path>) -> Result<SynthWorld> {
    match world_file {
        Some(p) => read_world_records(BufReader::new(fs::File::open(p)?)),
        None => gen_world(&cfg.synth),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenReport {
    pub config: ExperimentConfig,
    pub world_file: PathBuf,
    pub detections_file: PathBuf,
    pub scenes: usize,
    pub detections: usize,
    pub separation: f64,
}

/// Writes `world.jsonl` and `detections.jsonl` (test scenes) to the output dir.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<GenReport> {
    let cfg = cfg.effective();
    cfg.validate()?;
    let world = gen_world(&cfg.synth)?;
    let dets = simulate_test_detections(&world, &cfg.detector, cfg.detector_seed())?;
    fs::create_dir_all(&cfg.out_dir)?;
    let world_file = cfg.out_dir.join("world.jsonl");
    let detections_file = cfg.out_dir.join("detections.jsonl");
    write_world_records(&world, BufWriter::new(fs::File::create(&world_file)?))?;
    write_detection_records(&dets, BufWriter::new(fs::File::create(&detections_file)?))?;
    let report = GenReport {
        world_file,
        detections_file,
        scenes: world.scenes.len(),
        detections: dets.len(),
        separation: world.separation,
        config: cfg.clone(),
    };
    write_json(&cfg.out_dir.join("gen_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: ExperimentConfig,
    pub checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub final_train_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub skipped_steps: usize,
    pub train_seconds: f64,
}

/// Trains under `cfg` and persists `checkpoint.json` and `metrics.csv`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(TrainReport, TrainState)> {
    let cfg = cfg.effective();
    cfg.validate()?;
    let world = gen_world(&cfg.synth)?;
    let start = Instant::now();
    let state = train(&cfg.train, &world)?;
    let train_seconds = start.elapsed().as_secs_f64();
    fs::create_dir_all(&cfg.out_dir)?;
    let checkpoint = cfg.out_dir.join("checkpoint.json");
    let metrics_csv = cfg.out_dir.join("metrics.csv");
    checkpoint_save(&state, &checkpoint)?;
    write_metrics_csv(
        &state.history,
        BufWriter::new(fs::File::create(&metrics_csv)?),
    )?;
    let n = state.iteration;
    let report = TrainReport {
        checkpoint,
        metrics_csv,
        final_train_accuracy: windowed_accuracy(&state.history, n, METRIC_WINDOW),
        final_loss: windowed_loss(&state.history, n, METRIC_WINDOW),
        skipped_steps: state.history.iter().filter(|m| m.skipped()).count(),
        train_seconds,
        config: cfg.clone(),
    };
    write_json(&cfg.out_dir.join("train_report.json"), &report)?;
    Ok((report, state))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MedianMetrics {
    pub map: f64,
    pub cmc: BTreeMap<usize, f64>,
}

impl MedianMetrics {
    fn of(runs: &[SearchMetrics]) -> Self {
        let map = median(&runs.iter().map(|r| r.map).collect::<Vec<_>>());
        let mut cmc = BTreeMap::new();
        if let Some(first) = runs.first() {
            for &k in first.cmc.keys() {
                cmc.insert(
                    k,
                    median(&runs.iter().map(|r| r.cmc[&k]).collect::<Vec<_>>()),
                );
            }
        }
        Self { map, cmc }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GalleryRow {
    pub gallery_size: usize,
    pub per_seed: Vec<SearchMetrics>,
    /// Present when more than one seed was evaluated.
    pub median: Option<MedianMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub checkpoint: PathBuf,
    pub protocol_seeds: Vec<u64>,
    pub detection_recall: f64,
    pub detection_precision: f64,
    pub rows: Vec<GalleryRow>,
    pub eval_seconds: f64,
}

/// Evaluates an embedder on every gallery size for each protocol replicate.
pub fn evaluate_model(
    cfg: &ExperimentConfig,
    world: &SynthWorld,
    embedder: &EmbedderParams,
    detections: &[Detection],
    replicates: usize,
) -> Result<Vec<GalleryRow>> {
    let index = SearchIndex::new(world, embedder, detections)?;
    let seeds: Vec<u64> = (0..replicates.max(1) as u64)
        .map(|r| cfg.protocol_seed(r))
        .collect();
    cfg.eval
        .gallery_sizes
        .iter()
        .map(|&g| {
            let per_seed = seeds
                .iter()
                .map(|&s| index.evaluate(&build_protocol(world, g, s)?, s, &cfg.eval))
                .collect::<Result<Vec<_>>>()?;
            let median = (per_seed.len() > 1).then(|| MedianMetrics::of(&per_seed));
            Ok(GalleryRow {
                gallery_size: g,
                per_seed,
                median,
            })
        })
        .collect()
}

/// Loads a checkpoint and reports CMC/mAP per gallery size.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    world_file: Option<&Path>,
    seeds: usize,
) -> Result<EvalReport> {
    let cfg = cfg.effective();
    cfg.validate()?;
    if !checkpoint.exists() {
        return Err(Error::Checkpoint(format!(
            "missing checkpoint {}",
            checkpoint.display()
        )));
    }
    let start = Instant::now();
    let world = load_world(&cfg, world_file)?;
    // only the embedder is used here, so any loss kind evaluates
    let state = checkpoint_load(checkpoint)?;
    if state.raw_dim != world.raw_dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects raw_dim {}, world has {}",
            state.raw_dim,
            world.raw_dim()
        )));
    }
    let dets = simulate_test_detections(&world, &cfg.detector, cfg.detector_seed())?;
    let dets = threshold_detections(&dets, cfg.eval.score_threshold);
    let (detection_recall, detection_precision) =
        detection_recall_precision(&world, &dets, cfg.eval.iou_threshold);
    let rows = evaluate_model(&cfg, &world, &state.embedder, &dets, seeds)?;
    let report = EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        protocol_seeds: (0..seeds.max(1) as u64)
            .map(|r| cfg.protocol_seed(r))
            .collect(),
        detection_recall,
        detection_precision,
        rows,
        eval_seconds: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    write_json(&cfg.out_dir.join("eval_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Subsample,
    Recall,
    GallerySize,
    Dimension,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Subsample => "subsample",
            SweepAxis::Recall => "recall",
            SweepAxis::GallerySize => "gallery_size",
            SweepAxis::Dimension => "dimension",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subsample" => Ok(SweepAxis::Subsample),
            "recall" => Ok(SweepAxis::Recall),
            "gallery_size" | "gallery-size" => Ok(SweepAxis::GallerySize),
            "dimension" => Ok(SweepAxis::Dimension),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {other:?}; expected subsample, recall, gallery_size or dimension"
            ))),
        }
    }
}

/// One point on a sweep axis. `full` means no sub-sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Full(FullMarker),
    Count(usize),
    Real(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullMarker {
    Full,
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Full(_) => f.write_str("full"),
            SweepValue::Count(n) => write!(f, "{n}"),
            SweepValue::Real(x) => write!(f, "{x}"),
        }
    }
}

pub fn parse_sweep_values(axis: SweepAxis, values: &str) -> Result<Vec<SweepValue>> {
    let bad = |v: &str| Error::InvalidConfig(format!("bad value {v:?} for axis {axis:?}"));
    values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match axis {
            SweepAxis::Subsample if v == "full" => Ok(SweepValue::Full(FullMarker::Full)),
            SweepAxis::Subsample | SweepAxis::GallerySize | SweepAxis::Dimension => v
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .map(SweepValue::Count)
                .ok_or_else(|| bad(v)),
            SweepAxis::Recall => v.parse::<f64>().map(SweepValue::Real).map_err(|_| bad(v)),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: SweepValue,
    pub master_seed: u64,
    pub map: f64,
    pub cmc: BTreeMap<usize, f64>,
    /// Detection recall/precision at this point (recall axis only).
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    /// Per-step training metrics for axes that retrain per value.
    pub metrics_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMedian {
    pub value: SweepValue,
    pub map: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<SweepValue>,
    pub seeds: Vec<u64>,
    /// mAP is evaluated at this gallery size on every axis but `gallery_size`.
    pub gallery_size: usize,
    pub points: Vec<SweepPoint>,
    pub median: Vec<SweepMedian>,
    pub sweep_seconds: f64,
}

fn sweep_config(
    base: &ExperimentConfig,
    axis: SweepAxis,
    value: SweepValue,
    seed: u64,
) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    c.seed = seed;
    match (axis, value) {
        (SweepAxis::Subsample, SweepValue::Full(_)) => {
            c.train.oim.subsample_labeled = None;
            c.train.oim.subsample_unlabeled = None;
        }
        (SweepAxis::Subsample, SweepValue::Count(k)) => {
            c.train.oim.subsample_labeled = Some(k.min(c.synth.num_labeled));
            c.train.oim.subsample_unlabeled = Some(k.min(c.train.oim.queue_capacity).max(1));
        }
        (SweepAxis::Dimension, SweepValue::Count(d)) => c.train.oim.feature_dim = d,
        (SweepAxis::GallerySize | SweepAxis::Recall, _) => {}
        _ => {
            return Err(Error::InvalidConfig(format!(
                "value {value} does not fit axis {axis:?}"
            )))
        }
    }
    Ok(c.effective())
}

/// Trains and evaluates along one axis, for every master seed in `seeds`.
///
/// Sub-sampling and dimension retrain per value; gallery size and detector
/// threshold reuse one trained model per seed.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[SweepValue],
    seeds: &[u64],
) -> Result<SweepReport> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("sweep values or seeds"));
    }
    let start = Instant::now();
    let gallery_size = *cfg
        .eval
        .gallery_sizes
        .first()
        .ok_or(Error::Empty("gallery sizes"))?;
    let retrain = matches!(axis, SweepAxis::Subsample | SweepAxis::Dimension);
    let jobs: Vec<(usize, u64)> = if retrain {
        (0..values.len())
            .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
            .collect()
    } else {
        seeds.iter().map(|&s| (usize::MAX, s)).collect()
    };
    let outcome: Vec<Vec<SweepPoint>> = jobs
        .par_iter()
        .map(|&(vi, seed)| {
            let value = if retrain { values[vi] } else { values[0] };
            let run = sweep_config(cfg, axis, value, seed)?;
            run.validate()?;
            let world = gen_world(&run.synth)?;
            let state = train(&run.train, &world)?;
            let accuracy = windowed_accuracy(&state.history, state.iteration, METRIC_WINDOW);
            let all_dets = simulate_test_detections(&world, &run.detector, run.detector_seed())?;
            let protocol_seed = run.protocol_seed(0);
            let eval_at = |dets: &[Detection], g: usize| -> Result<SearchMetrics> {
                let index = SearchIndex::new(&world, &state.embedder, dets)?;
                index.evaluate(
                    &build_protocol(&world, g, protocol_seed)?,
                    protocol_seed,
                    &run.eval,
                )
            };
            let point = |value, m: SearchMetrics, recall, precision, metrics_csv| SweepPoint {
                value,
                master_seed: seed,
                map: m.map,
                cmc: m.cmc,
                recall,
                precision,
                final_train_accuracy: accuracy,
                metrics_csv,
            };
            match axis {
                SweepAxis::Subsample | SweepAxis::Dimension => {
                    let dir = cfg
                        .out_dir
                        .join(axis.name())
                        .join(value.to_string())
                        .join(format!("seed_{seed}"));
                    fs::create_dir_all(&dir)?;
                    let csv = dir.join("metrics.csv");
                    write_metrics_csv(&state.history, BufWriter::new(fs::File::create(&csv)?))?;
                    let dets = threshold_detections(&all_dets, run.eval.score_threshold);
                    Ok(vec![point(
                        value,
                        eval_at(&dets, gallery_size)?,
                        None,
                        None,
                        Some(csv),
                    )])
                }
                SweepAxis::GallerySize => {
                    let dets = threshold_detections(&all_dets, run.eval.score_threshold);
                    values
                        .iter()
                        .map(|&v| {
                            let SweepValue::Count(g) = v else {
                                return Err(Error::InvalidConfig(format!(
                                    "gallery size {v} must be a count"
                                )));
                            };
                            Ok(point(v, eval_at(&dets, g)?, None, None, None))
                        })
                        .collect()
                }
                SweepAxis::Recall => values
                    .iter()
                    .map(|&v| {
                        let SweepValue::Real(thr) = v else {
                            return Err(Error::InvalidConfig(format!(
                                "threshold {v} must be real"
                            )));
                        };
                        let dets = threshold_detections(&all_dets, thr);
                        let (r, p) =
                            detection_recall_precision(&world, &dets, run.eval.iou_threshold);
                        Ok(point(
                            v,
                            eval_at(&dets, gallery_size)?,
                            Some(r),
                            Some(p),
                            None,
                        ))
                    })
                    .collect(),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<SweepPoint> = outcome.into_iter().flatten().collect();
    let median = values
        .iter()
        .map(|v| {
            let at: Vec<&SweepPoint> = points.iter().filter(|p| p.value == *v).collect();
            let recalls: Vec<f64> = at.iter().filter_map(|p| p.recall).collect();
            SweepMedian {
                value: *v,
                map: median(&at.iter().map(|p| p.map).collect::<Vec<_>>()),
                recall: (!recalls.is_empty()).then(|| median(&recalls)),
            }
        })
        .collect();
    let report = SweepReport {
        config: cfg.clone(),
        axis,
        values: values.to_vec(),
        seeds: seeds.to_vec(),
        gallery_size,
        points,
        median,
        sweep_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(
        &cfg.out_dir.join(format!("sweep_{}.json", axis.name())),
        &report,
    )?;
    write_sweep_csv(
        &report,
        &cfg.out_dir.join(format!("sweep_{}.csv", axis.name())),
    )?;
    Ok(report)
}

fn write_sweep_csv(report: &SweepReport, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "value,seed,map,recall,precision,final_train_accuracy")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in &report.points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.value,
            p.master_seed,
            p.map,
            opt(p.recall),
            opt(p.precision),
            opt(p.final_train_accuracy)
        )?;
    }
    Ok(())
}

/// Convenience for callers that already hold a world and a trained state.
pub fn train_and_index(cfg: &ExperimentConfig) -> Result<(SynthWorld, TrainState, Vec<Detection>)> {
    let cfg = cfg.effective();
    cfg.validate()?;
    let world = gen_world(&cfg.synth)?;
    let state = train(&cfg.train, &world)?;
    let dets = simulate_test_detections(&world, &cfg.detector, cfg.detector_seed())?;
    Ok((
        world,
        state,
        threshold_detections(&dets, cfg.eval.score_threshold),
    ))
}
