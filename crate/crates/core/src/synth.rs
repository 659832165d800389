//! Synthetic scenes standing in for an annotated person-search dataset, and a
//! parametric detector that corrupts them with misses, false alarms, and box
//! jitter.
//!
//! Identity information lives entirely in the raw feature vectors; boxes only
//! carry geometry used for IoU matching.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, normalized};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Labeled identities in the training split (lookup-table size).
    pub num_labeled: usize,
    /// Labeled identities in the test split, disjoint from the training ones.
    pub num_test_identities: usize,
    pub num_unlabeled_pool: usize,
    pub raw_dim: usize,
    pub scenes_train: usize,
    pub scenes_test: usize,
    /// Inclusive range of instances (distinct scenes) per labeled identity.
    pub instances_per_identity: (usize, usize),
    /// Mean people (labeled + unlabeled) per training scene; unlabeled
    /// people make up the difference.
    pub persons_per_scene: f64,
    /// Mean clutter entries per scene.
    pub background_per_scene: f64,
    /// Per-coordinate std of the Gaussian perturbation around a prototype.
    pub noise_sigma: f64,
    pub scene_extent: f64,
    /// Box width range; height is twice the width.
    pub box_scale_range: (f64, f64),
    /// Minimum nearest-prototype accuracy demanded of the generated
    /// instances; 0 disables the check.
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_labeled: 32,
            num_test_identities: 50,
            num_unlabeled_pool: 32,
            raw_dim: 64,
            scenes_train: 100,
            scenes_test: 200,
            instances_per_identity: (2, 5),
            persons_per_scene: 3.0,
            background_per_scene: 2.0,
            noise_sigma: 0.1,
            scene_extent: 200.0,
            box_scale_range: (8.0, 20.0),
            min_separation: 0.99,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_labeled == 0 || self.num_test_identities == 0 || self.raw_dim == 0 {
            return bad("identity counts and raw_dim must be positive".into());
        }
        if self.scenes_train == 0 || self.scenes_test == 0 {
            return bad("scene counts must be positive".into());
        }
        let (lo, hi) = self.instances_per_identity;
        if lo < 2 || hi < lo {
            return bad(format!(
                "instances_per_identity must satisfy 2 <= min <= max, got ({lo}, {hi})"
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !(self.persons_per_scene >= 0.0 && self.background_per_scene >= 0.0) {
            return bad("per-scene means must be >= 0".into());
        }
        let (bmin, bmax) = self.box_scale_range;
        if !(bmin > 0.0 && bmax >= bmin && 2.0 * bmax < self.scene_extent) {
            return bad(format!(
                "box_scale_range {:?} does not fit extent {}",
                self.box_scale_range, self.scene_extent
            ));
        }
        if hi > self.scenes_test || hi > self.scenes_train {
            return Err(Error::Infeasible(format!(
                "{hi} instances per identity need at least {hi} scenes per split"
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box in corner format. Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x1, y1, x2, y2]: [f64; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidConfig(format!(
                "degenerate box {:?}",
                [x1, y1, x2, y2]
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x2 > self.x1
            && self.y2 > self.y1
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &Self) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection(other);
        if inter <= 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    fn within(&self, extent: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= extent && self.y2 <= extent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum PersonKind {
    /// Annotated identity. Training identities use ids `0..num_labeled`
    /// (their class ids); test identities follow.
    Labeled(usize),
    /// Member of the unlabeled pool.
    Unlabeled(usize),
    Background,
}

impl PersonKind {
    pub fn is_person(&self) -> bool {
        !matches!(self, PersonKind::Background)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(flatten)]
    pub kind: PersonKind,
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScene {
    pub scene_id: usize,
    pub split: Split,
    pub extent: f64,
    pub persons: Vec<Person>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub config: SynthConfig,
    /// Indexed by labeled identity id (training ids first, then test ids).
    pub labeled_prototypes: Vec<Vec<f64>>,
    pub unlabeled_prototypes: Vec<Vec<f64>>,
    pub scenes: Vec<SynthScene>,
    /// Nearest-prototype accuracy of all identity instances.
    pub separation: f64,
}

impl SynthWorld {
    pub fn num_labeled(&self) -> usize {
        self.config.num_labeled
    }

    pub fn raw_dim(&self) -> usize {
        self.config.raw_dim
    }

    pub fn scenes_in(&self, split: Split) -> impl Iterator<Item = &SynthScene> {
        self.scenes.iter().filter(move |s| s.split == split)
    }

    pub fn train_scene_ids(&self) -> Vec<usize> {
        self.scenes_in(Split::Train).map(|s| s.scene_id).collect()
    }

    pub fn test_scene_ids(&self) -> Vec<usize> {
        self.scenes_in(Split::Test).map(|s| s.scene_id).collect()
    }

    pub fn test_identities(&self) -> std::ops::Range<usize> {
        self.config.num_labeled..self.config.num_labeled + self.config.num_test_identities
    }
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = normalized(&v) {
            return u;
        }
    }
}

fn instance_feature<R: Rng + ?Sized>(rng: &mut R, prototype: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return prototype.to_vec();
    }
    let noise = Normal::new(0.0, sigma).expect("sigma validated");
    let v: Vec<f64> = prototype.iter().map(|p| p + noise.sample(rng)).collect();
    normalized(&v).unwrap_or_else(|_| prototype.to_vec())
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

const MAX_PLACEMENT_TRIES: usize = 1000;
const MAX_PLACEMENT_IOU: f64 = 0.1;

fn place_box<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SynthConfig,
    placed: &[BoundingBox],
) -> Result<BoundingBox> {
    let (wmin, wmax) = cfg.box_scale_range;
    for _ in 0..MAX_PLACEMENT_TRIES {
        let w = rng.random_range(wmin..=wmax);
        let h = 2.0 * w;
        let x1 = rng.random_range(0.0..=cfg.scene_extent - w);
        let y1 = rng.random_range(0.0..=cfg.scene_extent - h);
        let b = BoundingBox {
            x1,
            y1,
            x2: x1 + w,
            y2: y1 + h,
        };
        if placed.iter().all(|p| p.iou(&b) < MAX_PLACEMENT_IOU) {
            return Ok(b);
        }
    }
    Err(Error::Infeasible(format!(
        "cannot place {} boxes in a scene of extent {}",
        placed.len() + 1,
        cfg.scene_extent
    )))
}

/// Assigns every identity in `ids` to a random number of distinct scenes.
fn distribute<R: Rng + ?Sized>(
    rng: &mut R,
    ids: std::ops::Range<usize>,
    num_scenes: usize,
    range: (usize, usize),
) -> Vec<Vec<usize>> {
    let mut per_scene = vec![Vec::new(); num_scenes];
    for id in ids {
        let count = rng.random_range(range.0..=range.1);
        for s in sample(rng, num_scenes, count) {
            per_scene[s].push(id);
        }
    }
    per_scene
}

pub fn gen_world(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let num_labeled_total = cfg.num_labeled + cfg.num_test_identities;
    let labeled_prototypes: Vec<Vec<f64>> = (0..num_labeled_total)
        .map(|_| unit_gaussian(&mut rng, cfg.raw_dim))
        .collect();
    let unlabeled_prototypes: Vec<Vec<f64>> = (0..cfg.num_unlabeled_pool)
        .map(|_| unit_gaussian(&mut rng, cfg.raw_dim))
        .collect();

    let train_ids = distribute(
        &mut rng,
        0..cfg.num_labeled,
        cfg.scenes_train,
        cfg.instances_per_identity,
    );
    let test_ids = distribute(
        &mut rng,
        cfg.num_labeled..num_labeled_total,
        cfg.scenes_test,
        cfg.instances_per_identity,
    );

    let labeled_per_train_scene =
        train_ids.iter().map(Vec::len).sum::<usize>() as f64 / cfg.scenes_train as f64;
    let unlabeled_mean = (cfg.persons_per_scene - labeled_per_train_scene).max(0.0);

    let mut scenes = Vec::with_capacity(cfg.scenes_train + cfg.scenes_test);
    let layouts = train_ids
        .into_iter()
        .map(|ids| (Split::Train, ids))
        .chain(test_ids.into_iter().map(|ids| (Split::Test, ids)));
    for (scene_id, (split, ids)) in layouts.enumerate() {
        let mut kinds: Vec<PersonKind> = ids.into_iter().map(PersonKind::Labeled).collect();
        if split == Split::Train && cfg.num_unlabeled_pool > 0 {
            let n = poisson(&mut rng, unlabeled_mean).min(cfg.num_unlabeled_pool);
            kinds.extend(
                sample(&mut rng, cfg.num_unlabeled_pool, n)
                    .into_iter()
                    .map(PersonKind::Unlabeled),
            );
        }
        let n_bg = poisson(&mut rng, cfg.background_per_scene);
        kinds.extend(std::iter::repeat_n(PersonKind::Background, n_bg));

        let mut persons: Vec<Person> = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let placed: Vec<BoundingBox> = persons.iter().map(|p| p.bbox).collect();
            let bbox = place_box(&mut rng, cfg, &placed)?;
            let raw = match kind {
                PersonKind::Labeled(id) => {
                    instance_feature(&mut rng, &labeled_prototypes[id], cfg.noise_sigma)
                }
                PersonKind::Unlabeled(id) => {
                    instance_feature(&mut rng, &unlabeled_prototypes[id], cfg.noise_sigma)
                }
                PersonKind::Background => unit_gaussian(&mut rng, cfg.raw_dim),
            };
            persons.push(Person { bbox, kind, raw });
        }
        scenes.push(SynthScene {
            scene_id,
            split,
            extent: cfg.scene_extent,
            persons,
        });
    }

    let mut world = SynthWorld {
        config: cfg.clone(),
        labeled_prototypes,
        unlabeled_prototypes,
        scenes,
        separation: 0.0,
    };
    world.separation = nearest_prototype_accuracy(&world);
    if world.separation < cfg.min_separation {
        return Err(Error::Infeasible(format!(
            "nearest-prototype accuracy {:.4} below required {:.4}; lower noise_sigma",
            world.separation, cfg.min_separation
        )));
    }
    Ok(world)
}

/// Brute-force nearest-prototype classification accuracy over every
/// labeled and unlabeled instance in the world.
pub fn nearest_prototype_accuracy(world: &SynthWorld) -> f64 {
    let protos: Vec<(PersonKind, &Vec<f64>)> = world
        .labeled_prototypes
        .iter()
        .enumerate()
        .map(|(i, p)| (PersonKind::Labeled(i), p))
        .chain(
            world
                .unlabeled_prototypes
                .iter()
                .enumerate()
                .map(|(i, p)| (PersonKind::Unlabeled(i), p)),
        )
        .collect();
    let mut total = 0usize;
    let mut correct = 0usize;
    for person in world
        .scenes
        .iter()
        .flat_map(|s| &s.persons)
        .filter(|p| p.kind.is_person())
    {
        total += 1;
        let best = protos.iter().map(|(k, p)| (k, dot(p, &person.raw))).fold(
            (None, f64::NEG_INFINITY),
            |acc, (k, s)| if s > acc.1 { (Some(*k), s) } else { acc },
        );
        if best.0 == Some(person.kind) {
            correct += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Probability that a scene entry is not detected.
    pub miss_rate: f64,
    /// Mean number of spurious boxes per scene.
    pub false_alarm_rate: f64,
    /// Corner noise std as a fraction of box width (x) or height (y).
    pub jitter_sigma: f64,
    /// Std of the Gaussian noise added to true-detection scores.
    pub score_noise: f64,
    /// Clutter and false-alarm scores are uniform on `[0, false_alarm_score_max]`.
    pub false_alarm_score_max: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            miss_rate: 0.05,
            false_alarm_rate: 1.0,
            jitter_sigma: 0.03,
            score_noise: 0.1,
            false_alarm_score_max: 0.6,
        }
    }
}

impl DetectorConfig {
    /// Reproduces the annotations exactly.
    pub fn perfect() -> Self {
        Self {
            miss_rate: 0.0,
            false_alarm_rate: 0.0,
            jitter_sigma: 0.0,
            score_noise: 0.0,
            false_alarm_score_max: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::InvalidConfig(format!(
                "miss_rate {} outside [0,1]",
                self.miss_rate
            )));
        }
        for (name, v) in [
            ("false_alarm_rate", self.false_alarm_rate),
            ("jitter_sigma", self.jitter_sigma),
            ("score_noise", self.score_noise),
            ("false_alarm_score_max", self.false_alarm_score_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub scene_id: usize,
    /// Position within the scene's detection list; used for tie-breaking.
    pub index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
    pub raw: Vec<f64>,
    /// Index of the annotated entry this detection came from, if any.
    pub source: Option<usize>,
}

fn jitter_box<R: Rng + ?Sized>(
    rng: &mut R,
    b: &BoundingBox,
    sigma: f64,
    extent: f64,
) -> (BoundingBox, f64) {
    if sigma == 0.0 {
        return (*b, 0.0);
    }
    let (w, h) = (b.width(), b.height());
    let n = Normal::new(0.0, sigma).expect("sigma validated");
    let d: [f64; 4] = std::array::from_fn(|_| n.sample(rng));
    let magnitude = d.iter().map(|v| v.abs()).sum::<f64>() / 4.0;
    let mut x1 = (b.x1 + d[0] * w).clamp(0.0, extent);
    let mut y1 = (b.y1 + d[1] * h).clamp(0.0, extent);
    let mut x2 = (b.x2 + d[2] * w).clamp(0.0, extent);
    let mut y2 = (b.y2 + d[3] * h).clamp(0.0, extent);
    if x2 < x1 {
        std::mem::swap(&mut x1, &mut x2);
    }
    if y2 < y1 {
        std::mem::swap(&mut y1, &mut y2);
    }
    let min_side = 1e-3 * w.min(h);
    if x2 - x1 < min_side {
        x2 = x1 + min_side;
    }
    if y2 - y1 < min_side {
        y2 = y1 + min_side;
    }
    (BoundingBox { x1, y1, x2, y2 }, magnitude)
}

fn random_box<R: Rng + ?Sized>(rng: &mut R, extent: f64, scale: (f64, f64)) -> BoundingBox {
    let w = rng.random_range(scale.0..=scale.1).min(extent / 2.0);
    let h = 2.0 * w;
    let x1 = rng.random_range(0.0..=extent - w);
    let y1 = rng.random_range(0.0..=extent - h);
    BoundingBox {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
    }
}

/// Runs the simulated detector over one scene.
///
/// Every annotated entry (clutter included) survives with probability
/// `1 − miss_rate`. People score `1 − jitter + noise`; clutter and false
/// alarms score uniformly in `[0, false_alarm_score_max]`.
pub fn simulate_detections<R: Rng + ?Sized>(
    scene: &SynthScene,
    raw_dim: usize,
    det: &DetectorConfig,
    rng: &mut R,
) -> Result<Vec<Detection>> {
    det.validate()?;
    if let Some(p) = scene.persons.iter().find(|p| p.raw.len() != raw_dim) {
        return Err(Error::DimensionMismatch {
            expected: raw_dim,
            got: p.raw.len(),
        });
    }
    let mut out = Vec::new();
    let mut scale = (f64::INFINITY, 0.0f64);
    for (i, person) in scene.persons.iter().enumerate() {
        scale = (
            scale.0.min(person.bbox.width()),
            scale.1.max(person.bbox.width()),
        );
        let u: f64 = rng.random();
        let (bbox, magnitude) = jitter_box(rng, &person.bbox, det.jitter_sigma, scene.extent);
        let score = if person.kind.is_person() {
            let noise: f64 = rng.sample(StandardNormal);
            1.0 - magnitude + det.score_noise * noise
        } else {
            rng.random_range(0.0..=det.false_alarm_score_max)
        };
        if u < det.miss_rate {
            continue;
        }
        out.push(Detection {
            scene_id: scene.scene_id,
            index: out.len(),
            bbox,
            score,
            raw: person.raw.clone(),
            source: Some(i),
        });
    }
    let n_fa = poisson(rng, det.false_alarm_rate);
    if n_fa > 0 {
        if !scale.0.is_finite() {
            scale = (scene.extent / 20.0, scene.extent / 10.0);
        }
        for _ in 0..n_fa {
            let bbox = random_box(rng, scene.extent, scale);
            let raw = unit_gaussian(rng, raw_dim);
            let score = rng.random_range(0.0..=det.false_alarm_score_max);
            out.push(Detection {
                scene_id: scene.scene_id,
                index: out.len(),
                bbox,
                score,
                raw,
                source: None,
            });
        }
    }
    Ok(out)
}

/// Keeps detections scoring at least `threshold`.
pub fn threshold_detections(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.score >= threshold)
        .cloned()
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    World {
        version: u32,
        config: SynthConfig,
        labeled_prototypes: Vec<Vec<f64>>,
        unlabeled_prototypes: Vec<Vec<f64>>,
        separation: f64,
    },
    Scene(SynthScene),
    Detection(Detection),
}

fn write_record<W: Write>(w: &mut W, rec: &Record) -> Result<()> {
    serde_json::to_writer(&mut *w, rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_records<R: BufRead>(r: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Record(format!("line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// One `world` header line followed by one `scene` line per scene.
pub fn write_world_records<W: Write>(world: &SynthWorld, mut w: W) -> Result<()> {
    write_record(
        &mut w,
        &Record::World {
            version: RECORD_VERSION,
            config: world.config.clone(),
            labeled_prototypes: world.labeled_prototypes.clone(),
            unlabeled_prototypes: world.unlabeled_prototypes.clone(),
            separation: world.separation,
        },
    )?;
    for scene in &world.scenes {
        write_record(&mut w, &Record::Scene(scene.clone()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_world_records<R: BufRead>(r: R) -> Result<SynthWorld> {
    let mut records = read_records(r)?.into_iter();
    let Some(Record::World {
        version,
        config,
        labeled_prototypes,
        unlabeled_prototypes,
        separation,
    }) = records.next()
    else {
        return Err(Error::Record(
            "first record must be the world header".into(),
        ));
    };
    if version != RECORD_VERSION {
        return Err(Error::Record(format!(
            "unsupported record version {version}"
        )));
    }
    let mut scenes = Vec::new();
    for rec in records {
        match rec {
            Record::Scene(s) => {
                if s.scene_id != scenes.len() {
                    return Err(Error::Record(format!("scene {} out of order", s.scene_id)));
                }
                scenes.push(s)
            }
            _ => return Err(Error::Record("unexpected record in world file".into())),
        }
    }
    for s in &scenes {
        if let Some(p) = s
            .persons
            .iter()
            .find(|p| !p.bbox.is_valid() || !p.bbox.within(s.extent))
        {
            return Err(Error::Record(format!(
                "scene {}: invalid box {:?}",
                s.scene_id, p.bbox
            )));
        }
    }
    Ok(SynthWorld {
        config,
        labeled_prototypes,
        unlabeled_prototypes,
        scenes,
        separation,
    })
}

pub fn write_detection_records<W: Write>(dets: &[Detection], mut w: W) -> Result<()> {
    for d in dets {
        write_record(&mut w, &Record::Detection(d.clone()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_detection_records<R: BufRead>(r: R) -> Result<Vec<Detection>> {
    read_records(r)?
        .into_iter()
        .map(|rec| match rec {
            Record::Detection(d) if d.bbox.is_valid() && d.score.is_finite() => Ok(d),
            Record::Detection(d) => Err(Error::Record(format!(
                "invalid detection in scene {}",
                d.scene_id
            ))),
            _ => Err(Error::Record("expected only detection records".into())),
        })
        .collect()
}
