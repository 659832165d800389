//! Finite-difference verification of the hand-written gradients.
//!
//! Each check draws random configurations, compares the analytic gradient
//! with central differences, and keeps the worst case. The error measure is
//! `max|analytic − numeric| / max(1, max|analytic|, max|numeric|)`, i.e.
//! relative for gradients above unit scale and absolute below it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedder::{
    embed_backward, embed_forward, softmax_cls_loss, EmbedderParams, SoftmaxClassifierParams,
};
use crate::error::Result;
use crate::linalg::{dot, normalized, Matrix};
use crate::oim::{
    oim_forward, oim_grad_x, oim_loss, CircularQueue, FeatureVec, LookupTable, OimConfig,
};

pub const FD_STEP: f64 = 1e-6;
pub const TAUS: [f64; 3] = [0.05, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub oim_cases: usize,
    pub composite_cases: usize,
    pub classifier_cases: usize,
    /// Scales every analytic gradient by 1.01; a negative control that
    /// must make the checks fail.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            oim_cases: 100,
            composite_cases: 20,
            classifier_cases: 20,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    /// Configuration that produced `max_rel_error`.
    pub worst_case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub options: GradcheckOptions,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(1.0, f64::max);
    diff / scale
}

fn central_diff(point: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = normalized(&v) {
            return u;
        }
    }
}

struct OimCase {
    cfg: OimConfig,
    lut: LookupTable,
    queue: CircularQueue,
    target: usize,
}

impl OimCase {
    fn random<R: Rng>(rng: &mut R, dim: usize) -> Self {
        let l = rng.random_range(1..=16);
        let q = rng.random_range(0..=32);
        let tau = TAUS[rng.random_range(0..TAUS.len())];
        let cols: Vec<Vec<f64>> = (0..l)
            .map(|_| {
                if rng.random_bool(0.1) {
                    vec![0.0; dim]
                } else {
                    unit(rng, dim)
                }
            })
            .collect();
        let mut queue = CircularQueue::new(q, dim);
        let entries: Vec<FeatureVec> = (0..q)
            .map(|_| FeatureVec::new(unit(rng, dim)).unwrap())
            .collect();
        queue.push(&entries).expect("unit entries");
        Self {
            cfg: OimConfig {
                tau,
                queue_capacity: q,
                feature_dim: dim,
                num_labeled: l,
                ..OimConfig::default()
            },
            lut: LookupTable::from_columns(&cols).expect("unit or zero columns"),
            queue,
            target: rng.random_range(0..l),
        }
    }

    fn loss_at(&self, x: &[f64]) -> f64 {
        let x = FeatureVec::from_unchecked(x.to_vec());
        let s = oim_forward(&x, &self.lut, &self.queue, &self.cfg, None).expect("valid case");
        oim_loss(&s, self.target).expect("positive probability")
    }

    fn describe(&self) -> String {
        format!(
            "L={} Q={} D={} tau={} target={}",
            self.cfg.num_labeled,
            self.cfg.queue_capacity,
            self.cfg.feature_dim,
            self.cfg.tau,
            self.target
        )
    }
}

fn finish(name: &str, cases: usize, tolerance: f64, worst: (f64, String)) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        cases,
        tolerance,
        max_rel_error: worst.0,
        passed: worst.0 <= tolerance,
        worst_case: worst.1,
    }
}

fn track(worst: &mut (f64, String), err: f64, what: impl FnOnce() -> String) {
    if err > worst.0 || err.is_nan() {
        *worst = (if err.is_nan() { f64::INFINITY } else { err }, what());
    }
}

/// Gradient of the OIM loss with respect to the sample feature.
pub fn check_oim_grad(opts: &GradcheckOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = (0.0, String::new());
    for _ in 0..opts.oim_cases {
        let dim = rng.random_range(2..=32);
        let case = OimCase::random(&mut rng, dim);
        let x = FeatureVec::new(unit(&mut rng, dim))?;
        let scores = oim_forward(&x, &case.lut, &case.queue, &case.cfg, None)?;
        let mut g = oim_grad_x(&scores, case.target, &case.lut, &case.queue, &case.cfg)?;
        if opts.corrupt {
            g.iter_mut().for_each(|v| *v *= 1.01);
        }
        let fd = central_diff(x.as_slice(), |p| case.loss_at(p));
        track(&mut worst, rel_error(&g, &fd), || case.describe());
    }
    Ok(finish("oim_grad_x", opts.oim_cases, 1e-6, worst))
}

/// Gradient of `raw → embed → OIM loss` with respect to the projection.
pub fn check_composite_grad(opts: &GradcheckOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0FFEE);
    let mut worst = (0.0, String::new());
    for _ in 0..opts.composite_cases {
        let in_dim = rng.random_range(2..=24);
        let out_dim = rng.random_range(2..=16);
        let case = OimCase::random(&mut rng, out_dim);
        let params = EmbedderParams::init(&mut rng, in_dim, out_dim);
        let raw = unit(&mut rng, in_dim);
        let (z, cache) = embed_forward(&raw, &params)?;
        let scores = oim_forward(&z, &case.lut, &case.queue, &case.cfg, None)?;
        let dz = oim_grad_x(&scores, case.target, &case.lut, &case.queue, &case.cfg)?;
        let (dw, _) = embed_backward(&params, &cache, &dz)?;
        let mut analytic = dw.as_slice().to_vec();
        if opts.corrupt {
            analytic.iter_mut().for_each(|v| *v *= 1.01);
        }
        let fd = central_diff(params.weight.as_slice(), |w| {
            let p = EmbedderParams {
                weight: Matrix::from_vec(out_dim, in_dim, w.to_vec()).unwrap(),
            };
            let (z, _) = embed_forward(&raw, &p).expect("nonzero projection");
            case.loss_at(z.as_slice())
        });
        track(&mut worst, rel_error(&analytic, &fd), || {
            format!("in_dim={in_dim} {}", case.describe())
        });
    }
    Ok(finish("embed+oim dW", opts.composite_cases, 1e-5, worst))
}

/// Embedder backward pass against a linear probe loss `c·z`.
pub fn check_embed_backward(opts: &GradcheckOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xE3BED);
    let mut worst = (0.0, String::new());
    for _ in 0..opts.composite_cases {
        let in_dim = rng.random_range(2..=24);
        let out_dim = rng.random_range(2..=16);
        let params = EmbedderParams::init(&mut rng, in_dim, out_dim);
        let raw: Vec<f64> = (0..in_dim).map(|_| rng.sample(StandardNormal)).collect();
        let probe: Vec<f64> = (0..out_dim).map(|_| rng.sample(StandardNormal)).collect();
        let (_, cache) = embed_forward(&raw, &params)?;
        let (dw, draw) = embed_backward(&params, &cache, &probe)?;
        let mut analytic: Vec<f64> = dw.as_slice().iter().chain(&draw).copied().collect();
        if opts.corrupt {
            analytic.iter_mut().for_each(|v| *v *= 1.01);
        }
        let n_w = out_dim * in_dim;
        let point: Vec<f64> = params
            .weight
            .as_slice()
            .iter()
            .chain(&raw)
            .copied()
            .collect();
        let fd = central_diff(&point, |p| {
            let w = EmbedderParams {
                weight: Matrix::from_vec(out_dim, in_dim, p[..n_w].to_vec()).unwrap(),
            };
            let (z, _) = embed_forward(&p[n_w..], &w).expect("nonzero projection");
            dot(z.as_slice(), &probe)
        });
        track(&mut worst, rel_error(&analytic, &fd), || {
            format!("in_dim={in_dim} out_dim={out_dim}")
        });
    }
    Ok(finish(
        "embed_backward (dW, draw)",
        opts.composite_cases,
        1e-6,
        worst,
    ))
}

/// Softmax classifier gradients with respect to `z`, `W` and `b`.
pub fn check_softmax_classifier(opts: &GradcheckOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x50F7);
    let mut worst = (0.0, String::new());
    for _ in 0..opts.classifier_cases {
        let classes = rng.random_range(2..=16);
        let dim = rng.random_range(2..=16);
        let params = SoftmaxClassifierParams {
            weight: Matrix::from_vec(
                classes,
                dim,
                (0..classes * dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect(),
            )
            .unwrap(),
            bias: (0..classes).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let z = unit(&mut rng, dim);
        let t = rng.random_range(0..classes);
        let out = softmax_cls_loss(&z, t, &params)?;
        let mut analytic: Vec<f64> = out
            .dz
            .iter()
            .chain(out.grads.weight.as_slice())
            .chain(&out.grads.bias)
            .copied()
            .collect();
        if opts.corrupt {
            analytic.iter_mut().for_each(|v| *v *= 1.01);
        }
        let n_w = classes * dim;
        let point: Vec<f64> = z
            .iter()
            .chain(params.weight.as_slice())
            .chain(&params.bias)
            .copied()
            .collect();
        let fd = central_diff(&point, |p| {
            let pr = SoftmaxClassifierParams {
                weight: Matrix::from_vec(classes, dim, p[dim..dim + n_w].to_vec()).unwrap(),
                bias: p[dim + n_w..].to_vec(),
            };
            softmax_cls_loss(&p[..dim], t, &pr)
                .expect("valid case")
                .loss
        });
        track(&mut worst, rel_error(&analytic, &fd), || {
            format!("classes={classes} dim={dim} target={t}")
        });
    }
    Ok(finish(
        "softmax classifier (dz, dW, db)",
        opts.classifier_cases,
        1e-6,
        worst,
    ))
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let checks = vec![
        check_oim_grad(opts)?,
        check_composite_grad(opts)?,
        check_embed_backward(opts)?,
        check_softmax_classifier(opts)?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckReport {
        options: opts.clone(),
        checks,
        passed,
    })
}
