//! Linear projection onto the unit sphere, trained by hand-written backprop,
//! plus the parametric softmax classifier used as the baseline loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix, NORM_FLOOR};
use crate::oim::FeatureVec;

fn uniform_fan_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderParams {
    /// `out_dim × in_dim`
    pub weight: Matrix,
}

impl EmbedderParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: uniform_fan_init(rng, out_dim, in_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Values saved by [`embed_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    pub raw: Vec<f64>,
    pub y: Vec<f64>,
    pub y_norm: f64,
    pub z: FeatureVec,
}

/// `z = W·raw / ‖W·raw‖`
pub fn embed_forward(raw: &[f64], params: &EmbedderParams) -> Result<(FeatureVec, EmbedCache)> {
    if raw.len() != params.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.in_dim(),
            got: raw.len(),
        });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw feature"));
    }
    let y = params.weight.matvec(raw);
    let y_norm = norm(&y);
    if y_norm < NORM_FLOOR {
        return Err(Error::ZeroNorm(y_norm));
    }
    let z = FeatureVec::normalize(&y)?;
    Ok((
        z.clone(),
        EmbedCache {
            raw: raw.to_vec(),
            y,
            y_norm,
            z,
        },
    ))
}

/// Embeds without keeping a cache.
pub fn embed(raw: &[f64], params: &EmbedderParams) -> Result<FeatureVec> {
    embed_forward(raw, params).map(|(z, _)| z)
}

/// Backprop through normalization and projection.
///
/// `dy = (dz − (z·dz) z) / ‖y‖`, `dW = dy rawᵀ`, `draw = Wᵀ dy`.
pub fn embed_backward(
    params: &EmbedderParams,
    cache: &EmbedCache,
    dz: &[f64],
) -> Result<(Matrix, Vec<f64>)> {
    if dz.len() != params.out_dim() || cache.y.len() != params.out_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dz of length {} for embedding dim {}",
            dz.len(),
            params.out_dim()
        )));
    }
    if cache.raw.len() != params.in_dim() {
        return Err(Error::ShapeMismatch(format!(
            "cached raw of length {} for input dim {}",
            cache.raw.len(),
            params.in_dim()
        )));
    }
    let dy = normalize_backward(cache.z.as_slice(), cache.y_norm, dz);
    let mut dw = Matrix::zeros(params.out_dim(), params.in_dim());
    dw.add_outer(1.0, &dy, &cache.raw);
    let draw = params.weight.matvec_t(&dy);
    Ok((dw, draw))
}

/// Vector-Jacobian product of `y ↦ y/‖y‖`.
pub(crate) fn normalize_backward(z: &[f64], y_norm: f64, dz: &[f64]) -> Vec<f64> {
    let radial = dot(z, dz);
    z.iter()
        .zip(dz)
        .map(|(zi, gi)| (gi - radial * zi) / y_norm)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifierParams {
    /// `num_classes × feature_dim`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl SoftmaxClassifierParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, num_classes: usize, feature_dim: usize) -> Self {
        Self {
            weight: uniform_fan_init(rng, num_classes, feature_dim),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        let mut l = self.weight.matvec(z);
        l.iter_mut().zip(&self.bias).for_each(|(li, bi)| *li += bi);
        l
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SoftmaxOutput {
    pub loss: f64,
    pub dz: Vec<f64>,
    pub grads: SoftmaxGrads,
    pub probs: Vec<f64>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

/// Cross-entropy over `W z + b`.
pub fn softmax_cls_loss(
    z: &[f64],
    target: usize,
    params: &SoftmaxClassifierParams,
) -> Result<SoftmaxOutput> {
    let n = params.num_classes();
    if target >= n {
        return Err(Error::ClassOutOfRange { id: target, len: n });
    }
    if z.len() != params.weight.cols() {
        return Err(Error::DimensionMismatch {
            expected: params.weight.cols(),
            got: z.len(),
        });
    }
    let logits = params.logits(z);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[target];
    let probs = softmax(&logits);
    let mut dlogits = probs.clone();
    dlogits[target] -= 1.0;
    let dz = params.weight.matvec_t(&dlogits);
    let mut dw = Matrix::zeros(n, z.len());
    dw.add_outer(1.0, &dlogits, z);
    Ok(SoftmaxOutput {
        loss,
        dz,
        grads: SoftmaxGrads {
            weight: dw,
            bias: dlogits,
        },
        probs,
    })
}

/// SGD with heavy-ball momentum: `v ← μ v + g`, `p ← p − lr v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub momentum: f64,
    pub learning_rate: f64,
    velocity: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// One zeroed velocity buffer per parameter tensor of the given sizes.
    pub fn new(momentum: f64, learning_rate: f64, sizes: &[usize]) -> Self {
        Self {
            momentum,
            learning_rate,
            velocity: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn velocity(&self, slot: usize) -> &[f64] {
        &self.velocity[slot]
    }

    pub fn num_slots(&self) -> usize {
        self.velocity.len()
    }
}

pub fn sgd_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
) -> Result<()> {
    if params.len() != state.velocity.len() || grads.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor of {} with gradient of {} and velocity of {}",
                p.len(),
                g.len(),
                v.len()
            )));
        }
    }
    if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("gradient"));
    }
    let (mu, lr) = (state.momentum, state.learning_rate);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_projection_keeps_unit_raw() {
        let raw = vec![0.6, 0.0, -0.8];
        let p = EmbedderParams {
            weight: Matrix::identity(3),
        };
        let (z, _) = embed_forward(&raw, &p).unwrap();
        assert_eq!(z.as_slice(), raw.as_slice());
        let mut w2 = Matrix::identity(3);
        w2.scale(2.0);
        let (z2, _) = embed_forward(&raw, &EmbedderParams { weight: w2 }).unwrap();
        assert_eq!(z2.as_slice(), raw.as_slice());
    }

    #[test]
    fn random_projection_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EmbedderParams::init(&mut rng, 16, 8);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (z, _) = embed_forward(&raw, &p).unwrap();
            assert!((norm(z.as_slice()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_projection_errors() {
        let p = EmbedderParams {
            weight: Matrix::zeros(2, 3),
        };
        assert!(matches!(
            embed_forward(&[1.0, 0.0, 0.0], &p),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = EmbedderParams::init(&mut rng, 64, 32);
        let a = (6.0f64 / 96.0).sqrt();
        assert!(p.weight.as_slice().iter().all(|w| w.abs() <= a));
    }

    #[test]
    fn radial_and_zero_dz_give_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = EmbedderParams::init(&mut rng, 6, 4);
        let raw: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (z, cache) = embed_forward(&raw, &p).unwrap();
        let dz: Vec<f64> = z.as_slice().iter().map(|v| 3.0 * v).collect();
        let (dw, draw) = embed_backward(&p, &cache, &dz).unwrap();
        assert!(dw.as_slice().iter().all(|v| v.abs() < 1e-14));
        assert!(draw.iter().all(|v| v.abs() < 1e-14));
        let (dw, draw) = embed_backward(&p, &cache, &[0.0; 4]).unwrap();
        assert!(dw.as_slice().iter().all(|&v| v == 0.0));
        assert!(draw.iter().all(|&v| v == 0.0));
        assert!(embed_backward(&p, &cache, &[0.0; 3]).is_err());
    }

    #[test]
    fn softmax_symmetric_loss() {
        let p = SoftmaxClassifierParams {
            weight: Matrix::zeros(2, 3),
            bias: vec![0.0, 0.0],
        };
        let out = softmax_cls_loss(&[1.0, 0.0, 0.0], 0, &p).unwrap();
        assert!((out.loss - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            softmax_cls_loss(&[1.0, 0.0, 0.0], 2, &p),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn softmax_confident_limit() {
        let p = SoftmaxClassifierParams {
            weight: Matrix::zeros(3, 2),
            bias: vec![60.0, 0.0, 0.0],
        };
        let out = softmax_cls_loss(&[1.0, 0.0], 0, &p).unwrap();
        assert!(out.loss < 1e-20 && out.loss >= 0.0);
    }

    #[test]
    fn sgd_identities() {
        let mut w = vec![1.0, -2.0, 3.0];
        let g = vec![0.5, 0.5, 0.5];
        let mut st = OptimizerState::new(0.9, 0.0, &[3]);
        sgd_step(&mut [&mut w], &[&g], &mut st).unwrap();
        assert_eq!(w, vec![1.0, -2.0, 3.0]);

        let mut w = vec![1.0, -2.0, 3.0];
        let g = w.clone();
        let mut st = OptimizerState::new(0.0, 1.0, &[3]);
        sgd_step(&mut [&mut w], &[&g], &mut st).unwrap();
        assert_eq!(w, vec![0.0; 3]);
    }

    #[test]
    fn sgd_two_step_recurrence() {
        let (mu, lr) = (0.9, 0.1);
        let p0 = 2.0;
        let (g1, g2) = (0.4, -1.5);
        // hand-unrolled: v1 = g1, p1 = p0 - lr g1; v2 = mu g1 + g2, p2 = p1 - lr v2
        let v1 = g1;
        let p1 = p0 - lr * v1;
        let v2 = mu * v1 + g2;
        let p2 = p1 - lr * v2;
        let mut w = vec![p0];
        let mut st = OptimizerState::new(mu, lr, &[1]);
        sgd_step(&mut [&mut w], &[&[g1]], &mut st).unwrap();
        assert_eq!(w[0], p1);
        sgd_step(&mut [&mut w], &[&[g2]], &mut st).unwrap();
        assert_eq!(w[0], p2);
        assert_eq!(st.velocity(0), &[v2]);
    }

    #[test]
    fn sgd_rejects_nonfinite_and_shapes() {
        let mut w = vec![1.0];
        let mut st = OptimizerState::new(0.9, 0.1, &[1]);
        assert!(matches!(
            sgd_step(&mut [&mut w], &[&[f64::NAN]], &mut st),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(w, vec![1.0]);
        assert!(sgd_step(&mut [&mut w], &[&[1.0, 2.0]], &mut st).is_err());
    }
}
