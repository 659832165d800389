//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's math; only its data types are shared.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;

use oimsearch::eval::{QueryResult, RankedDetection};
use oimsearch::synth::{BoundingBox, SynthConfig};

pub fn unit_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// `log p_t` computed from scratch by log-sum-exp over the chosen entries.
pub fn naive_log_prob(
    x: &[f64],
    labeled: &[Vec<f64>],
    unlabeled: &[Vec<f64>],
    tau: f64,
    target: usize,
    keep_labeled: &[usize],
    keep_unlabeled: &[usize],
) -> f64 {
    let logit = |v: &Vec<f64>| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / tau;
    let all: Vec<f64> = keep_labeled
        .iter()
        .map(|&i| logit(&labeled[i]))
        .chain(keep_unlabeled.iter().map(|&k| logit(&unlabeled[k])))
        .collect();
    let m = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + all.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logit(&labeled[target]) - lse
}

pub fn central_diff(point: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..point.len())
        .map(|i| {
            let mut up = point.to_vec();
            let mut down = point.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(1.0, f64::max);
    diff / scale
}

pub fn naive_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    inter / union
}

/// Exact AP: walk the ranking, build the precision-recall points, and sum
/// precision times each recall increment.
pub fn brute_ap(result: &QueryResult, thr: f64) -> BigRational {
    let n_gt = result.ground_truths.len();
    let mut used = vec![false; n_gt];
    let mut tp = 0i64;
    let mut points = Vec::new();
    for (rank, det) in result.ranked.iter().enumerate() {
        let candidates: Vec<(usize, f64)> = result
            .ground_truths
            .iter()
            .enumerate()
            .filter(|(g, (sid, _))| !used[*g] && *sid == det.scene_id)
            .map(|(g, (_, gt))| (g, naive_iou(&det.bbox, gt)))
            .filter(|&(_, o)| o >= thr)
            .collect();
        // highest overlap wins; the earliest ground truth on ties
        let best = candidates
            .iter()
            .fold(None::<(usize, f64)>, |acc, &c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            });
        if let Some((g, _)) = best {
            used[g] = true;
            tp += 1;
        }
        let precision = BigRational::new(BigInt::from(tp), BigInt::from(rank as i64 + 1));
        let recall = BigRational::new(BigInt::from(tp), BigInt::from(n_gt as i64));
        points.push((recall, precision));
    }
    let mut area = BigRational::zero();
    let mut prev_recall = BigRational::zero();
    for (r, p) in points {
        if r > prev_recall {
            area += (&r - &prev_recall) * p;
            prev_recall = r;
        }
    }
    area
}

pub fn brute_map(results: &[QueryResult], thr: f64) -> f64 {
    let aps: Vec<f64> = results
        .iter()
        .map(|r| brute_ap(r, thr).to_f64().unwrap())
        .collect();
    let mut total = 0.0;
    for ap in &aps {
        total += ap;
    }
    total / aps.len() as f64
}

fn grid_box<R: Rng>(rng: &mut R) -> BoundingBox {
    let x = rng.random_range(0..4) as f64 * 5.0;
    let y = rng.random_range(0..4) as f64 * 5.0;
    let w = rng.random_range(1..4) as f64 * 5.0;
    let h = rng.random_range(1..4) as f64 * 5.0;
    BoundingBox {
        x1: x,
        y1: y,
        x2: x + w,
        y2: y + h,
    }
}

/// A random ranking over a handful of scenes with boxes on a coarse grid,
/// so that IoU ties, duplicates and misses all occur.
pub fn random_query_result<R: Rng>(rng: &mut R, max_len: usize) -> QueryResult {
    let scenes = rng.random_range(1..=4);
    let n_gt = rng.random_range(1..=4);
    let ground_truths = (0..n_gt)
        .map(|_| (rng.random_range(0..scenes), grid_box(rng)))
        .collect();
    let n = rng.random_range(0..=max_len);
    let mut sims: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ranked = sims
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankedDetection {
            scene_id: rng.random_range(0..scenes),
            index: i,
            bbox: grid_box(rng),
            similarity: s,
        })
        .collect();
    QueryResult {
        ranked,
        ground_truths,
    }
}

/// A world small enough for debug-mode tests.
pub fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        num_labeled: 8,
        num_test_identities: 10,
        num_unlabeled_pool: 8,
        raw_dim: 16,
        scenes_train: 30,
        scenes_test: 40,
        seed,
        ..SynthConfig::default()
    }
}
