//! Person-search evaluation: per-query galleries, cosine ranking, CMC top-K
//! and detection-style average precision.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::oim::FeatureVec;
use crate::synth::{BoundingBox, Detection, PersonKind, Split, SynthWorld};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// The annotated person used as a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRef {
    pub identity: usize,
    pub scene_id: usize,
    /// Index into the scene's `persons`.
    pub person: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub query: QueryRef,
    /// Scenes holding other instances of the identity, ascending.
    pub positives: Vec<usize>,
    /// Random scenes without the identity, in draw order.
    pub fillers: Vec<usize>,
}

impl SearchQuery {
    pub fn gallery(&self) -> impl Iterator<Item = usize> + '_ {
        self.positives.iter().chain(&self.fillers).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchProtocol {
    pub gallery_size: usize,
    pub queries: Vec<SearchQuery>,
}

/// Builds one query per test identity.
///
/// A gallery holds every test scene with another instance of the identity,
/// topped up with random scenes that do not contain it. The query's own
/// scene is never in its gallery, so a gallery saturates at
/// `num_test_scenes − 1` scenes; asking for `num_test_scenes` yields that
/// saturated gallery. Filler draws depend on the seed and the query but not
/// on `gallery_size`, so galleries at different sizes are nested.
pub fn build_protocol(
    world: &SynthWorld,
    gallery_size: usize,
    seed: u64,
) -> Result<SearchProtocol> {
    if gallery_size == 0 {
        return Err(Error::Infeasible("gallery_size must be at least 1".into()));
    }
    let test_scenes = world.test_scene_ids();
    if gallery_size > test_scenes.len() {
        return Err(Error::Infeasible(format!(
            "gallery_size {gallery_size} exceeds the {} test scenes",
            test_scenes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::new();
    for identity in world.test_identities() {
        let instances: Vec<(usize, usize)> = test_scenes
            .iter()
            .flat_map(|&sid| {
                world.scenes[sid]
                    .persons
                    .iter()
                    .enumerate()
                    .filter(move |(_, p)| p.kind == PersonKind::Labeled(identity))
                    .map(move |(pi, _)| (sid, pi))
            })
            .collect();
        if instances.len() < 2 {
            return Err(Error::Infeasible(format!(
                "test identity {identity} has {} instances; need at least 2",
                instances.len()
            )));
        }
        let (q_scene, q_person) = instances[rng.random_range(0..instances.len())];
        let positives: Vec<usize> = instances
            .iter()
            .map(|&(s, _)| s)
            .filter(|&s| s != q_scene)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if positives.len() > gallery_size {
            return Err(Error::Infeasible(format!(
                "identity {identity} needs {} gallery scenes but gallery_size is {gallery_size}",
                positives.len()
            )));
        }
        let mut pool: Vec<usize> = test_scenes
            .iter()
            .copied()
            .filter(|&s| s != q_scene && positives.binary_search(&s).is_err())
            .collect();
        // seeded per query so that the filler order ignores gallery_size
        let mut filler_rng = ChaCha8Rng::seed_from_u64(rng.random());
        pool.shuffle(&mut filler_rng);
        pool.truncate(gallery_size - positives.len());
        queries.push(SearchQuery {
            query: QueryRef {
                identity,
                scene_id: q_scene,
                person: q_person,
            },
            positives,
            fillers: pool,
        });
    }
    Ok(SearchProtocol {
        gallery_size,
        queries,
    })
}

/// Ground-truth boxes of a query: the identity's instances in its gallery.
pub fn ground_truths(world: &SynthWorld, query: &SearchQuery) -> Vec<(usize, BoundingBox)> {
    query
        .positives
        .iter()
        .flat_map(|&sid| {
            world.scenes[sid]
                .persons
                .iter()
                .filter(|p| p.kind == PersonKind::Labeled(query.query.identity))
                .map(move |p| (sid, p.bbox))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDetection {
    pub scene_id: usize,
    pub index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub ranked: Vec<RankedDetection>,
    pub ground_truths: Vec<(usize, BoundingBox)>,
}

/// Sorts gallery detections by cosine similarity to the query, descending;
/// ties fall back to `(scene_id, index)`.
pub fn rank_gallery<'a, I>(
    query: &FeatureVec,
    gallery: I,
    ground_truths: Vec<(usize, BoundingBox)>,
) -> Result<QueryResult>
where
    I: IntoIterator<Item = (&'a Detection, &'a FeatureVec)>,
{
    let mut ranked = Vec::new();
    for (det, feat) in gallery {
        if feat.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                expected: query.dim(),
                got: feat.dim(),
            });
        }
        ranked.push(RankedDetection {
            scene_id: det.scene_id,
            index: det.index,
            bbox: det.bbox,
            similarity: dot(query.as_slice(), feat.as_slice()),
        });
    }
    ranked.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(Ordering::Equal)
            .then(a.scene_id.cmp(&b.scene_id))
            .then(a.index.cmp(&b.index))
    });
    Ok(QueryResult {
        ranked,
        ground_truths,
    })
}

fn hits_any(det: &RankedDetection, gts: &[(usize, BoundingBox)], thr: f64) -> bool {
    gts.iter()
        .any(|(sid, gt)| *sid == det.scene_id && iou(&det.bbox, gt) >= thr)
}

/// Fraction of queries with a correct detection among their top `k`.
pub fn cmc_topk(results: &[QueryResult], k: usize, iou_threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("query results"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let hits = results
        .iter()
        .filter(|r| {
            r.ranked
                .iter()
                .take(k)
                .any(|d| hits_any(d, &r.ground_truths, iou_threshold))
        })
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Marks each ranked detection as a true positive via greedy matching: a
/// detection claims the best-overlapping still-unclaimed ground truth in its
/// scene with IoU at least `iou_threshold`.
pub fn match_detections(result: &QueryResult, iou_threshold: f64) -> Vec<bool> {
    let mut claimed = vec![false; result.ground_truths.len()];
    result
        .ranked
        .iter()
        .map(|det| {
            let mut best: Option<(usize, f64)> = None;
            for (g, (sid, gt)) in result.ground_truths.iter().enumerate() {
                if claimed[g] || *sid != det.scene_id {
                    continue;
                }
                let o = iou(&det.bbox, gt);
                if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, _)) => {
                    claimed[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Average precision with all-points accumulation: the mean, over ground
/// truths, of the precision at the rank where each was recovered. Ground
/// truths that are never recovered contribute zero.
///
/// The precision sum is kept as an exact fraction while it fits in `u128`,
/// so the result is the correctly rounded AP in the usual case.
pub fn average_precision(result: &QueryResult, iou_threshold: f64) -> Result<f64> {
    if result.ground_truths.is_empty() {
        return Err(Error::Empty("ground truths"));
    }
    let hits = match_detections(result, iou_threshold);
    let n_gt = result.ground_truths.len() as u128;
    let mut exact = Some((0u128, 1u128));
    let mut tp = 0u128;
    for (rank, hit) in hits.iter().enumerate() {
        if *hit {
            tp += 1;
            exact = exact.and_then(|acc| add_fraction(acc, (tp, rank as u128 + 1)));
        }
    }
    if let Some((num, den)) = exact.and_then(|(n, d)| Some((n, d.checked_mul(n_gt)?))) {
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        const EXACT: u128 = 1 << 53;
        if num < EXACT && den < EXACT {
            return Ok(num as f64 / den as f64);
        }
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, hit) in hits.into_iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / result.ground_truths.len() as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn add_fraction((an, ad): (u128, u128), (bn, bd): (u128, u128)) -> Option<(u128, u128)> {
    let g = gcd(ad, bd);
    let den = (ad / g).checked_mul(bd)?;
    let num = an
        .checked_mul(bd / g)?
        .checked_add(bn.checked_mul(ad / g)?)?;
    let r = gcd(num, den);
    Some((num / r, den / r))
}

pub fn mean_ap(results: &[QueryResult], iou_threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("query results"));
    }
    let aps = results
        .iter()
        .map(|r| average_precision(r, iou_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&aps))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Detection recall and precision against the annotated people (clutter
/// excluded) of the test split, with greedy IoU matching per scene.
pub fn detection_recall_precision(
    world: &SynthWorld,
    dets: &[Detection],
    iou_threshold: f64,
) -> (f64, f64) {
    let mut gt_total = 0usize;
    let mut matched = 0usize;
    let mut det_total = 0usize;
    for scene in world.scenes_in(Split::Test) {
        let gts: Vec<BoundingBox> = scene
            .persons
            .iter()
            .filter(|p| p.kind.is_person())
            .map(|p| p.bbox)
            .collect();
        let mut scene_dets: Vec<&Detection> = dets
            .iter()
            .filter(|d| d.scene_id == scene.scene_id)
            .collect();
        scene_dets.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.index.cmp(&b.index))
        });
        let mut claimed = vec![false; gts.len()];
        for d in &scene_dets {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(g, gt)| !claimed[*g] && iou(&d.bbox, gt) >= iou_threshold)
                .max_by(|a, b| {
                    iou(&d.bbox, a.1)
                        .partial_cmp(&iou(&d.bbox, b.1))
                        .unwrap_or(Ordering::Equal)
                });
            if let Some((g, _)) = best {
                claimed[g] = true;
                matched += 1;
            }
        }
        gt_total += gts.len();
        det_total += scene_dets.len();
    }
    let recall = if gt_total == 0 {
        0.0
    } else {
        matched as f64 / gt_total as f64
    };
    let precision = if det_total == 0 {
        1.0
    } else {
        matched as f64 / det_total as f64
    };
    (recall, precision)
}
