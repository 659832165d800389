mod common;

use oimsearch::embedder::{
    embed, embed_backward, embed_forward, sgd_step, softmax_cls_loss, EmbedderParams,
    OptimizerState, SoftmaxClassifierParams,
};
use oimsearch::linalg::{norm, Matrix};
use oimsearch::oim::{
    oim_forward, oim_grad_x, queue_push, CircularQueue, FeatureVec, LookupTable, OimConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{central_diff, max_rel_error, naive_log_prob, unit_vec};

fn project(w: &[f64], rows: usize, raw: &[f64]) -> Vec<f64> {
    let cols = raw.len();
    let y: Vec<f64> = (0..rows)
        .map(|r| (0..cols).map(|c| w[r * cols + c] * raw[c]).sum())
        .collect();
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    y.into_iter().map(|v| v / n).collect()
}

fn naive_cross_entropy(z: &[f64], w: &[f64], b: &[f64], t: usize) -> f64 {
    let d = z.len();
    let logits: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(k, bk)| bk + (0..d).map(|j| w[k * d + j] * z[j]).sum::<f64>())
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() - logits[t]
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn two_class_symmetric_loss() {
    let params = SoftmaxClassifierParams {
        weight: Matrix::zeros(2, 3),
        bias: vec![0.0, 0.0],
    };
    let out = softmax_cls_loss(&[1.0, 0.0, 0.0], 1, &params).unwrap();
    assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
    let sure = SoftmaxClassifierParams {
        weight: Matrix::zeros(2, 3),
        bias: vec![0.0, 60.0],
    };
    assert!(softmax_cls_loss(&[1.0, 0.0, 0.0], 1, &sure).unwrap().loss < 1e-25);
}

#[test]
fn composite_gradient_matches_finite_differences_on_20_cases() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let in_dim = rng.random_range(2..=24);
        let out_dim = rng.random_range(2..=16);
        let l = rng.random_range(1..=16);
        let q = rng.random_range(0..=32);
        let tau = [0.05, 0.1, 1.0][rng.random_range(0..3)];
        let labeled: Vec<Vec<f64>> = (0..l).map(|_| unit_vec(&mut rng, out_dim)).collect();
        let unlabeled: Vec<Vec<f64>> = (0..q).map(|_| unit_vec(&mut rng, out_dim)).collect();
        let target = rng.random_range(0..l);
        let params = EmbedderParams::init(&mut rng, in_dim, out_dim);
        let raw = unit_vec(&mut rng, in_dim);

        let lut = LookupTable::from_columns(&labeled).unwrap();
        let mut cq = CircularQueue::new(q, out_dim);
        let feats: Vec<FeatureVec> = unlabeled
            .iter()
            .map(|u| FeatureVec::new(u.clone()).unwrap())
            .collect();
        queue_push(&mut cq, &feats).unwrap();
        let cfg = OimConfig {
            tau,
            feature_dim: out_dim,
            num_labeled: l,
            queue_capacity: q,
            ..OimConfig::default()
        };

        let (z, cache) = embed_forward(&raw, &params).unwrap();
        let s = oim_forward(&z, &lut, &cq, &cfg, None).unwrap();
        let dz = oim_grad_x(&s, target, &lut, &cq, &cfg).unwrap();
        let (dw, _) = embed_backward(&params, &cache, &dz).unwrap();

        let (li, ui): (Vec<usize>, Vec<usize>) = ((0..l).collect(), (0..q).collect());
        let fd = central_diff(params.weight.as_slice(), 1e-6, |w| {
            let z = project(w, out_dim, &raw);
            -naive_log_prob(&z, &labeled, &unlabeled, tau, target, &li, &ui)
        });
        let err = max_rel_error(dw.as_slice(), &fd);
        assert!(err <= 1e-5, "seed {seed}: rel error {err:e}");
    }
}

#[test]
fn softmax_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.random_range(2..=10);
        let dim = rng.random_range(2..=10);
        let w = gaussian(&mut rng, classes * dim);
        let b = gaussian(&mut rng, classes);
        let z = unit_vec(&mut rng, dim);
        let t = rng.random_range(0..classes);
        let params = SoftmaxClassifierParams {
            weight: Matrix::from_vec(classes, dim, w.clone()).unwrap(),
            bias: b.clone(),
        };
        let out = softmax_cls_loss(&z, t, &params).unwrap();
        assert!((out.loss - naive_cross_entropy(&z, &w, &b, t)).abs() < 1e-12);

        let fd_z = central_diff(&z, 1e-6, |z| naive_cross_entropy(z, &w, &b, t));
        let fd_w = central_diff(&w, 1e-6, |w| naive_cross_entropy(&z, w, &b, t));
        let fd_b = central_diff(&b, 1e-6, |b| naive_cross_entropy(&z, &w, b, t));
        assert!(max_rel_error(&out.dz, &fd_z) <= 1e-6);
        assert!(max_rel_error(out.grads.weight.as_slice(), &fd_w) <= 1e-6);
        assert!(max_rel_error(&out.grads.bias, &fd_b) <= 1e-6);
    }
}

#[test]
fn momentum_recurrence_over_three_steps() {
    let mut p = vec![1.0, -2.0];
    let mut state = OptimizerState::new(0.9, 0.1, &[2]);
    let grads = [[0.5, 1.0], [0.25, -1.0], [0.0, 2.0]];
    let (mut v, mut expect) = ([0.0f64; 2], [1.0f64, -2.0]);
    for g in &grads {
        sgd_step(&mut [&mut p], &[g], &mut state).unwrap();
        for i in 0..2 {
            v[i] = 0.9 * v[i] + g[i];
            expect[i] -= 0.1 * v[i];
        }
        assert_eq!(p, expect.to_vec());
    }
    assert!(sgd_step(&mut [&mut p], &[&[f64::NAN, 0.0]], &mut state).is_err());
}

proptest! {
    #[test]
    fn embeddings_are_unit_norm(seed in any::<u64>(), in_dim in 1usize..40, out_dim in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = EmbedderParams::init(&mut rng, in_dim, out_dim);
        let raw = gaussian(&mut rng, in_dim);
        let z = embed(&raw, &params).unwrap();
        prop_assert!((norm(z.as_slice()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scaling_the_projection_keeps_similarities(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = EmbedderParams::init(&mut rng, 12, 6);
        let mut scaled = params.clone();
        scaled.weight.scale(c);
        let a = gaussian(&mut rng, 12);
        let b = gaussian(&mut rng, 12);
        let (za, zb) = (embed(&a, &params).unwrap(), embed(&b, &params).unwrap());
        let (sa, sb) = (embed(&a, &scaled).unwrap(), embed(&b, &scaled).unwrap());
        for (x, y) in za.as_slice().iter().zip(sa.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        let cos = |u: &FeatureVec, v: &FeatureVec| u.as_slice().iter().zip(v.as_slice()).map(|(p, q)| p * q).sum::<f64>();
        prop_assert!((cos(&za, &zb) - cos(&sa, &sb)).abs() <= 1e-9);
    }
}
