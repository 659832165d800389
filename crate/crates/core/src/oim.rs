//! Online instance matching.
//!
//! A sample feature `x` is scored against two external buffers: a lookup
//! table holding one running feature per labeled identity, and a circular
//! queue holding recent features of unlabeled identities. Both buffers are
//! plain state, not parameters; no gradient ever flows into them.
//!
//! Class ids are zero-based throughout (`0..num_labeled`).

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, is_unit, norm, normalized, NORM_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OimConfig {
    /// Softmax temperature.
    pub tau: f64,
    /// Lookup-table momentum: `v ← γ v + (1 − γ) x`.
    pub gamma: f64,
    pub queue_capacity: usize,
    pub feature_dim: usize,
    pub num_labeled: usize,
    pub subsample_labeled: Option<usize>,
    pub subsample_unlabeled: Option<usize>,
}

impl Default for OimConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            gamma: 0.5,
            queue_capacity: 128,
            feature_dim: 32,
            num_labeled: 32,
            subsample_labeled: None,
            subsample_unlabeled: None,
        }
    }
}

impl OimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0,1], got {}",
                self.gamma
            )));
        }
        if self.feature_dim == 0 || self.num_labeled == 0 {
            return Err(Error::InvalidConfig(
                "feature_dim and num_labeled must be positive".into(),
            ));
        }
        match self.subsample_labeled {
            Some(0) => {
                return Err(Error::InvalidConfig(
                    "subsample_labeled must be positive".into(),
                ))
            }
            Some(k) if k > self.num_labeled => {
                return Err(Error::InvalidConfig(format!(
                    "subsample_labeled {k} exceeds num_labeled {}",
                    self.num_labeled
                )))
            }
            _ => {}
        }
        match self.subsample_unlabeled {
            Some(0) => Err(Error::InvalidConfig(
                "subsample_unlabeled must be positive".into(),
            )),
            Some(k) if k > self.queue_capacity => Err(Error::InvalidConfig(format!(
                "subsample_unlabeled {k} exceeds queue_capacity {}",
                self.queue_capacity
            ))),
            _ => Ok(()),
        }
    }
}

/// A unit-L2-norm feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    /// Wraps a vector that must already be unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature"));
        }
        if !is_unit(&values) {
            return Err(Error::NotNormalized(norm(&values)));
        }
        Ok(Self(values))
    }

    /// Wraps `values` without checking the norm. The loss and its gradient
    /// are defined off the sphere too; finite-difference probes need this.
    pub fn from_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Scales `values` onto the unit sphere.
    pub fn normalize(values: &[f64]) -> Result<Self> {
        normalized(values).map(Self)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Running features of the labeled identities, one row per class id.
///
/// Rows start at zero and become unit norm after their first update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    dim: usize,
    num_classes: usize,
    data: Vec<f64>,
}

impl LookupTable {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            num_classes,
            data: vec![0.0; num_classes * dim],
        }
    }

    /// Builds a table from explicit columns; each must be zero or unit norm.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(columns.len() * dim);
        for col in columns {
            if col.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: col.len(),
                });
            }
            if !(col.iter().all(|&v| v == 0.0) || is_unit(col)) {
                return Err(Error::NotNormalized(norm(col)));
            }
            data.extend_from_slice(col);
        }
        Ok(Self {
            dim,
            num_classes: columns.len(),
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data
            .chunks_exact(self.dim.max(1))
            .take(self.num_classes)
    }

    /// `v_t ← normalize(γ v_t + (1 − γ) x)`. On a cancelled blend the column
    /// is left untouched and an error is returned.
    pub fn update(&mut self, t: usize, x: &FeatureVec, gamma: f64) -> Result<()> {
        if t >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                id: t,
                len: self.num_classes,
            });
        }
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let blended: Vec<f64> = self
            .column(t)
            .iter()
            .zip(x.as_slice())
            .map(|(v, xi)| gamma * v + (1.0 - gamma) * xi)
            .collect();
        let n = norm(&blended);
        if n < NORM_FLOOR {
            return Err(Error::ZeroNorm(n));
        }
        let dim = self.dim;
        for (dst, b) in self.data[t * dim..(t + 1) * dim].iter_mut().zip(&blended) {
            *dst = b / n;
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO of unlabeled-identity features, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularQueue {
    dim: usize,
    capacity: usize,
    entries: VecDeque<FeatureVec>,
}

impl CircularQueue {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            dim,
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&FeatureVec> {
        self.entries.get(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureVec> {
        self.entries.iter()
    }

    /// Appends `features` in order and evicts from the front down to
    /// capacity. Inputs are validated up front; on error nothing is pushed.
    pub fn push<'a, I>(&mut self, features: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a FeatureVec>,
        I::IntoIter: Clone,
    {
        let features = features.into_iter();
        for f in features.clone() {
            if f.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: f.dim(),
                });
            }
            if !is_unit(f.as_slice()) {
                return Err(Error::NotNormalized(norm(f.as_slice())));
            }
        }
        for f in features {
            if self.capacity == 0 {
                break;
            }
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(f.clone());
        }
        Ok(())
    }
}

/// Index sets selecting which lookup-table rows and queue entries enter the
/// softmax denominator.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Subset {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScores {
    /// Probabilities over labeled classes (zero outside the subset).
    pub p: Vec<f64>,
    /// Probabilities over queue entries (zero outside the subset).
    pub q: Vec<f64>,
    pub logits_labeled: Vec<f64>,
    pub logits_unlabeled: Vec<f64>,
}

impl MatchScores {
    /// Index of the most probable entry over `[p, q]`, first wins on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, &v) in self.p.iter().chain(&self.q).enumerate() {
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        best
    }

    pub fn total_mass(&self) -> f64 {
        self.p.iter().sum::<f64>() + self.q.iter().sum::<f64>()
    }
}

/// Temperature-scaled joint softmax of `x` against the table and the queue.
pub fn oim_forward(
    x: &FeatureVec,
    lut: &LookupTable,
    cq: &CircularQueue,
    cfg: &OimConfig,
    subset: Option<&Subset>,
) -> Result<MatchScores> {
    if x.dim() != lut.dim() {
        return Err(Error::DimensionMismatch {
            expected: lut.dim(),
            got: x.dim(),
        });
    }
    if cq.dim() != lut.dim() {
        return Err(Error::DimensionMismatch {
            expected: lut.dim(),
            got: cq.dim(),
        });
    }
    let inv_tau = 1.0 / cfg.tau;
    let logits_labeled: Vec<f64> = lut
        .columns()
        .map(|v| dot(v, x.as_slice()) * inv_tau)
        .collect();
    let logits_unlabeled: Vec<f64> = cq
        .iter()
        .map(|u| dot(u.as_slice(), x.as_slice()) * inv_tau)
        .collect();

    let (labeled, unlabeled): (Vec<usize>, Vec<usize>) = match subset {
        Some(s) => {
            if let Some(&bad) = s.labeled.iter().find(|&&i| i >= logits_labeled.len()) {
                return Err(Error::ClassOutOfRange {
                    id: bad,
                    len: logits_labeled.len(),
                });
            }
            if let Some(&bad) = s.unlabeled.iter().find(|&&i| i >= logits_unlabeled.len()) {
                return Err(Error::ShapeMismatch(format!(
                    "queue index {bad} with {} entries",
                    logits_unlabeled.len()
                )));
            }
            (s.labeled.clone(), s.unlabeled.clone())
        }
        None => (
            (0..logits_labeled.len()).collect(),
            (0..logits_unlabeled.len()).collect(),
        ),
    };
    if labeled.is_empty() && unlabeled.is_empty() {
        return Err(Error::EmptySubset);
    }

    let max = labeled
        .iter()
        .map(|&i| logits_labeled[i])
        .chain(unlabeled.iter().map(|&k| logits_unlabeled[k]))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut p = vec![0.0; logits_labeled.len()];
    let mut q = vec![0.0; logits_unlabeled.len()];
    let mut denom = 0.0;
    for &i in &labeled {
        p[i] = (logits_labeled[i] - max).exp();
        denom += p[i];
    }
    for &k in &unlabeled {
        q[k] = (logits_unlabeled[k] - max).exp();
        denom += q[k];
    }
    for &i in &labeled {
        p[i] /= denom;
    }
    for &k in &unlabeled {
        q[k] /= denom;
    }
    Ok(MatchScores {
        p,
        q,
        logits_labeled,
        logits_unlabeled,
    })
}

/// Negative log-likelihood `−log p_t`.
pub fn oim_loss(scores: &MatchScores, target: usize) -> Result<f64> {
    let pt = *scores.p.get(target).ok_or(Error::ClassOutOfRange {
        id: target,
        len: scores.p.len(),
    })?;
    if pt <= 0.0 {
        return Err(Error::DegenerateProbability);
    }
    Ok(-pt.ln())
}

/// Gradient of `−log p_t` with respect to `x`:
/// `(1/τ) [ Σ_j p_j v_j + Σ_k q_k u_k − v_t ]`.
pub fn oim_grad_x(
    scores: &MatchScores,
    target: usize,
    lut: &LookupTable,
    cq: &CircularQueue,
    cfg: &OimConfig,
) -> Result<Vec<f64>> {
    if scores.p.len() != lut.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} labeled scores for {} table rows",
            scores.p.len(),
            lut.num_classes()
        )));
    }
    if scores.q.len() != cq.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} unlabeled scores for {} queue entries",
            scores.q.len(),
            cq.len()
        )));
    }
    if target >= lut.num_classes() {
        return Err(Error::ClassOutOfRange {
            id: target,
            len: lut.num_classes(),
        });
    }
    let mut g = vec![0.0; lut.dim()];
    for (v, &pj) in lut.columns().zip(&scores.p) {
        if pj != 0.0 {
            axpy(pj, v, &mut g);
        }
    }
    for (u, &qk) in cq.iter().zip(&scores.q) {
        if qk != 0.0 {
            axpy(qk, u.as_slice(), &mut g);
        }
    }
    axpy(-1.0, lut.column(target), &mut g);
    let inv_tau = 1.0 / cfg.tau;
    g.iter_mut().for_each(|gi| *gi *= inv_tau);
    Ok(g)
}

pub fn lut_update(lut: &mut LookupTable, target: usize, x: &FeatureVec, gamma: f64) -> Result<()> {
    lut.update(target, x, gamma)
}

pub fn queue_push(cq: &mut CircularQueue, features: &[FeatureVec]) -> Result<()> {
    cq.push(features)
}

/// Draws `keep` distinct indices from `0..total` uniformly, always including
/// `must_include`. Result is sorted ascending.
pub fn subsample_indices<R: Rng + ?Sized>(
    rng: &mut R,
    total: usize,
    keep: usize,
    must_include: Option<usize>,
) -> Result<Vec<usize>> {
    if keep > total {
        return Err(Error::SubsampleTooLarge { keep, total });
    }
    let mut out = match must_include {
        Some(m) => {
            if m >= total {
                return Err(Error::ClassOutOfRange { id: m, len: total });
            }
            if keep == 0 {
                return Err(Error::InvalidConfig(
                    "keep = 0 cannot include a forced index".into(),
                ));
            }
            // sample among the other total-1 indices, skipping over m
            let mut v: Vec<usize> = rand::seq::index::sample(rng, total - 1, keep - 1)
                .into_iter()
                .map(|i| if i >= m { i + 1 } else { i })
                .collect();
            v.push(m);
            v
        }
        None => rand::seq::index::sample(rng, total, keep).into_vec(),
    };
    out.sort_unstable();
    Ok(out)
}

/// Builds the per-sample denominator subset from the configured sub-sampling
/// sizes; `None` when neither buffer is sub-sampled.
pub fn sample_subset<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &OimConfig,
    target: usize,
    queue_len: usize,
) -> Result<Option<Subset>> {
    if cfg.subsample_labeled.is_none() && cfg.subsample_unlabeled.is_none() {
        return Ok(None);
    }
    let labeled = match cfg.subsample_labeled {
        Some(k) => subsample_indices(rng, cfg.num_labeled, k, Some(target))?,
        None => (0..cfg.num_labeled).collect(),
    };
    let unlabeled = match cfg.subsample_unlabeled {
        Some(k) => subsample_indices(rng, queue_len, k.min(queue_len), None)?,
        None => (0..queue_len).collect(),
    };
    Ok(Some(Subset { labeled, unlabeled }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVec {
        FeatureVec::new(v.to_vec()).unwrap()
    }

    fn cfg(tau: f64, l: usize, q: usize, d: usize) -> OimConfig {
        OimConfig {
            tau,
            gamma: 0.5,
            queue_capacity: q,
            feature_dim: d,
            num_labeled: l,
            subsample_labeled: None,
            subsample_unlabeled: None,
        }
    }

    fn two_dim_setup() -> (FeatureVec, LookupTable, CircularQueue, OimConfig) {
        let lut = LookupTable::from_columns(&[vec![1.0, 0.0]]).unwrap();
        let mut cq = CircularQueue::new(1, 2);
        cq.push(&[fv(&[0.0, 1.0])]).unwrap();
        (fv(&[1.0, 0.0]), lut, cq, cfg(1.0, 1, 1, 2))
    }

    #[test]
    fn forward_two_logits() {
        let (x, lut, cq, c) = two_dim_setup();
        let s = oim_forward(&x, &lut, &cq, &c, None).unwrap();
        let e = std::f64::consts::E;
        assert!((s.p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((s.q[0] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((s.p[0] - 0.73106).abs() < 1e-5);
        assert!((s.q[0] - 0.26894).abs() < 1e-5);
        assert_eq!(s.logits_labeled, vec![1.0]);
        assert_eq!(s.logits_unlabeled, vec![0.0]);
        let loss = oim_loss(&s, 0).unwrap();
        assert!((loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn orthogonal_x_is_uniform() {
        let x = fv(&[0.0, 0.0, 1.0]);
        let lut =
            LookupTable::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0; 3]])
                .unwrap();
        let mut cq = CircularQueue::new(4, 3);
        cq.push(&[fv(&[1.0, 0.0, 0.0]), fv(&[0.0, -1.0, 0.0])])
            .unwrap();
        let s = oim_forward(&x, &lut, &cq, &cfg(0.1, 3, 4, 3), None).unwrap();
        for &v in s.p.iter().chain(&s.q) {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_loss_is_log_count() {
        let n = 24;
        let s = MatchScores {
            p: vec![1.0 / n as f64; 8],
            q: vec![1.0 / n as f64; 16],
            logits_labeled: vec![0.0; 8],
            logits_unlabeled: vec![0.0; 16],
        };
        assert!((oim_loss(&s, 3).unwrap() - 24f64.ln()).abs() < 1e-12);
        assert!((24f64.ln() - 3.17805).abs() < 1e-5);
    }

    #[test]
    fn loss_errors() {
        let s = MatchScores {
            p: vec![1.0, 0.0],
            q: vec![],
            logits_labeled: vec![0.0; 2],
            logits_unlabeled: vec![],
        };
        assert_eq!(oim_loss(&s, 0).unwrap(), 0.0);
        assert!(matches!(oim_loss(&s, 1), Err(Error::DegenerateProbability)));
        assert!(matches!(
            oim_loss(&s, 2),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn forward_errors() {
        let (_, lut, cq, c) = two_dim_setup();
        let x3 = fv(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            oim_forward(&x3, &lut, &cq, &c, None),
            Err(Error::DimensionMismatch { .. })
        ));
        let x = fv(&[1.0, 0.0]);
        let empty = Subset::default();
        assert!(matches!(
            oim_forward(&x, &lut, &cq, &c, Some(&empty)),
            Err(Error::EmptySubset)
        ));
    }

    #[test]
    fn subset_zeroes_excluded_entries() {
        let (x, lut, cq, c) = two_dim_setup();
        let s = oim_forward(
            &x,
            &lut,
            &cq,
            &c,
            Some(&Subset {
                labeled: vec![0],
                unlabeled: vec![],
            }),
        )
        .unwrap();
        assert_eq!(s.p, vec![1.0]);
        assert_eq!(s.q, vec![0.0]);
    }

    #[test]
    fn grad_zero_when_certain() {
        let lut = LookupTable::from_columns(&[vec![0.6, 0.8]]).unwrap();
        let cq = CircularQueue::new(0, 2);
        let c = cfg(0.1, 1, 0, 2);
        let x = fv(&[0.6, 0.8]);
        let s = oim_forward(&x, &lut, &cq, &c, None).unwrap();
        assert_eq!(s.p, vec![1.0]);
        let g = oim_grad_x(&s, 0, &lut, &cq, &c).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_shape_mismatch() {
        let (x, lut, cq, c) = two_dim_setup();
        let mut s = oim_forward(&x, &lut, &cq, &c, None).unwrap();
        s.q.push(0.0);
        assert!(matches!(
            oim_grad_x(&s, 0, &lut, &cq, &c),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn lut_update_cases() {
        let mut lut = LookupTable::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let before = lut.clone();
        let x = fv(&[0.0, 1.0]);
        lut.update(0, &x, 1.0).unwrap();
        assert_eq!(lut, before);
        lut.update(0, &x, 0.5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((lut.column(0)[0] - h).abs() < 1e-15 && (lut.column(0)[1] - h).abs() < 1e-15);
        assert_eq!(lut.column(1), before.column(1));
        lut.update(1, &fv(&[0.6, -0.8]), 0.0).unwrap();
        assert_eq!(lut.column(1), &[0.6, -0.8]);
    }

    #[test]
    fn lut_update_cancellation_leaves_column() {
        let mut lut = LookupTable::from_columns(&[vec![1.0, 0.0]]).unwrap();
        let err = lut.update(0, &fv(&[-1.0, 0.0]), 0.5);
        assert!(matches!(err, Err(Error::ZeroNorm(_))));
        assert_eq!(lut.column(0), &[1.0, 0.0]);
    }

    #[test]
    fn queue_fifo_examples() {
        let a = fv(&[1.0, 0.0]);
        let b = fv(&[0.0, 1.0]);
        let c = fv(&[-1.0, 0.0]);
        let d = fv(&[0.0, -1.0]);
        let e = fv(&[0.6, 0.8]);
        let mut q = CircularQueue::new(3, 2);
        q.push(&[a.clone(), b.clone(), c.clone()]).unwrap();
        q.push(&[d.clone(), e.clone()]).unwrap();
        assert_eq!(
            q.iter().cloned().collect::<Vec<_>>(),
            vec![c.clone(), d.clone(), e.clone()]
        );
        let snapshot = q.clone();
        q.push(&[]).unwrap();
        assert_eq!(q, snapshot);

        let mut q = CircularQueue::new(3, 2);
        q.push(&[a, b.clone(), c.clone(), d.clone()]).unwrap();
        assert_eq!(q.iter().cloned().collect::<Vec<_>>(), vec![b, c, d]);
    }

    #[test]
    fn queue_rejects_unnormalized() {
        let bad = FeatureVec::from_unchecked(vec![2.0, 0.0]);
        let mut q = CircularQueue::new(3, 2);
        assert!(matches!(
            q.push(&[fv(&[1.0, 0.0]), bad]),
            Err(Error::NotNormalized(_))
        ));
        assert!(q.is_empty());
    }

    #[test]
    fn subsample_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            subsample_indices(&mut rng, 10, 10, None).unwrap(),
            (0..10).collect::<Vec<_>>()
        );
        assert_eq!(
            subsample_indices(&mut rng, 100, 1, Some(7)).unwrap(),
            vec![7]
        );
        let a = subsample_indices(&mut ChaCha8Rng::seed_from_u64(11), 50, 5, None).unwrap();
        let b = subsample_indices(&mut ChaCha8Rng::seed_from_u64(11), 50, 5, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(matches!(
            subsample_indices(&mut rng, 3, 4, None),
            Err(Error::SubsampleTooLarge { keep: 4, total: 3 })
        ));
    }

    #[test]
    fn subsample_forced_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let v = subsample_indices(&mut rng, 20, 6, Some(13)).unwrap();
            assert_eq!(v.len(), 6);
            assert!(v.contains(&13));
            assert!(v.windows(2).all(|w| w[0] < w[1]));
            assert!(v.iter().all(|&i| i < 20));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = OimConfig::default();
        assert!(c.validate().is_ok());
        c.subsample_labeled = Some(c.num_labeled + 1);
        assert!(c.validate().is_err());
        let c = OimConfig {
            tau: 0.0,
            ..OimConfig::default()
        };
        assert!(c.validate().is_err());
        let c = OimConfig {
            gamma: 1.5,
            ..OimConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
