//! How well group membership can be read off learned embeddings.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::audit::FoldPlan;
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::kernel;
use crate::learner::{gap_features, LearnerModel};
use crate::{rng, GroupId};

/// `N x d` embedding matrix with one group id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: Vec<f64>,
    groups: Vec<GroupId>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, vectors: Vec<f64>, groups: Vec<GroupId>) -> Result<Self> {
        if dim == 0 || vectors.len() != dim * groups.len() {
            return Err(Error::Config("embedding matrix does not match group count".into()));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("embeddings must be finite".into()));
        }
        Ok(Self { dim, vectors, groups })
    }

    /// Pooled hidden activations of every sample.
    pub fn from_model(model: &LearnerModel, samples: &[LabeledSample<'_>]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(samples.len() * model.hidden_dim());
        for s in samples {
            vectors.extend(gap_features(model, s.image));
        }
        Self::new(model.hidden_dim(), vectors, samples.iter().map(|s| s.group).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    /// The two group ids in ascending order.
    fn pair(&self) -> Result<(GroupId, GroupId)> {
        let mut ids = self.groups.clone();
        ids.sort_unstable();
        ids.dedup();
        match ids.as_slice() {
            [a, b] => Ok((*a, *b)),
            [a] => Err(Error::GroupTooSmall(*a)),
            _ => Err(Error::Config(alloc::format!("expected two groups, found {}", ids.len()))),
        }
    }

    /// Row indices of each group; the second group is the positive class.
    fn split(&self) -> Result<[Vec<usize>; 2]> {
        let (a, _) = self.pair()?;
        let mut out = [Vec::new(), Vec::new()];
        for (i, g) in self.groups.iter().enumerate() {
            out[usize::from(*g != a)].push(i);
        }
        Ok(out)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(dist2(a, b))
}

fn mean_of(e: &EmbeddingSet, rows: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; e.dim];
    for &i in rows {
        for (a, b) in m.iter_mut().zip(e.row(i)) {
            *a += b;
        }
    }
    for a in &mut m {
        *a /= rows.len() as f64;
    }
    m
}

/// Rank-based area under the ROC curve; ties count one half.
pub fn auroc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

pub const PROBE_ITERS: usize = 500;
pub const PROBE_LR: f64 = 0.1;
pub const PROBE_L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeScore {
    pub accuracy: f64,
    pub auroc: f64,
}

/// Logistic regression on standardized features, full-batch gradient descent.
fn fit_logistic(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..PROBE_ITERS {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let r = 1.0 / (1.0 + libm::exp(-z)) - yi;
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += r * v;
            }
            gb += r;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= PROBE_LR * (g / n + PROBE_L2 * *wj);
        }
        b -= PROBE_LR * gb / n;
    }
    (w, b)
}

/// K-fold cross-validated probe predicting group from embedding. Returns
/// mean held-out accuracy and mean held-out AUROC.
pub fn linear_probe(e: &EmbeddingSet, k: usize, seed: u64) -> Result<ProbeScore> {
    let split = e.split()?;
    if e.len() < 2 * k {
        return Err(Error::Config(alloc::format!(
            "probe needs at least {} samples, got {}",
            2 * k,
            e.len()
        )));
    }
    let (_, positive_group) = e.pair()?;
    let plan = FoldPlan::stratified(&e.groups, k, seed)?;
    let (mut acc, mut auc) = (0.0, 0.0);
    for fold in 0..k {
        let train = plan.training(fold);
        let test = plan.held_out(fold);
        for (rows, name) in [(&train, "training"), (&test, "held-out")] {
            for side in &split {
                if !rows.iter().any(|r| side.contains(r)) {
                    return Err(Error::FoldDegenerate {
                        fold,
                        reason: alloc::format!("{name} split misses a group"),
                    });
                }
            }
        }
        let mean = mean_of(e, &train);
        let mut std = vec![0.0; e.dim];
        for &i in &train {
            for ((s, v), m) in std.iter_mut().zip(e.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = libm::sqrt(*s / train.len() as f64);
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        let standardize = |i: usize| -> Vec<f64> {
            e.row(i)
                .iter()
                .zip(&mean)
                .zip(&std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        };
        let xs: Vec<Vec<f64>> = train.iter().map(|&i| standardize(i)).collect();
        let ys: Vec<f64> = train.iter().map(|&i| f64::from(u8::from(e.groups[i] == positive_group))).collect();
        let (w, b) = fit_logistic(&xs, &ys);
        let scores: Vec<f64> = test
            .iter()
            .map(|&i| b + standardize(i).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let truth: Vec<bool> = test.iter().map(|&i| e.groups[i] == positive_group).collect();
        let correct = scores.iter().zip(&truth).filter(|(&s, &t)| (s > 0.0) == t).count();
        acc += correct as f64 / test.len() as f64;
        auc += auroc(&scores, &truth);
    }
    Ok(ProbeScore {
        accuracy: acc / k as f64,
        auroc: auc / k as f64,
    })
}

/// Mean silhouette with groups as clusters and Euclidean distance.
pub fn silhouette(e: &EmbeddingSet) -> Result<f64> {
    let split = e.split()?;
    for (side, rows) in split.iter().enumerate() {
        if rows.len() < 2 {
            let (a, b) = e.pair()?;
            return Err(Error::GroupTooSmall(if side == 0 { a } else { b }));
        }
    }
    let mut total = 0.0;
    for side in 0..2 {
        for &i in &split[side] {
            let own: f64 = split[side].iter().filter(|&&j| j != i).map(|&j| dist(e.row(i), e.row(j))).sum();
            let a = own / (split[side].len() - 1) as f64;
            let other: f64 = split[1 - side].iter().map(|&j| dist(e.row(i), e.row(j))).sum();
            let b = other / split[1 - side].len() as f64;
            let m = a.max(b);
            total += if m > 0.0 { (b - a) / m } else { 0.0 };
        }
    }
    Ok(total / e.len() as f64)
}

fn trace_ratio(e: &EmbeddingSet, labels: &[bool]) -> (f64, f64) {
    let rows: [Vec<usize>; 2] = [
        (0..e.len()).filter(|&i| !labels[i]).collect(),
        (0..e.len()).filter(|&i| labels[i]).collect(),
    ];
    let all: Vec<usize> = (0..e.len()).collect();
    let mu = mean_of(e, &all);
    let (mut between, mut within) = (0.0, 0.0);
    for r in &rows {
        let m = mean_of(e, r);
        between += r.len() as f64 * dist2(&m, &mu);
        for &i in r {
            within += dist2(e.row(i), &m);
        }
    }
    (between, within)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherScore {
    /// `trace(S_B) / trace(S_W)`; infinite when the within scatter vanishes.
    pub ratio: f64,
    pub p_value: f64,
    pub zero_within: bool,
}

/// Between/within scatter trace ratio with a label-permutation p-value.
pub fn fisher_ratio(e: &EmbeddingSet, n_perm: usize, seed: u64) -> Result<FisherScore> {
    let split = e.split()?;
    if split.iter().any(|r| r.len() < 2) {
        let (a, b) = e.pair()?;
        return Err(Error::GroupTooSmall(if split[0].len() < 2 { a } else { b }));
    }
    let ratio_of = |labels: &[bool]| {
        let (b, w) = trace_ratio(e, labels);
        if w > 0.0 {
            b / w
        } else if b > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let mut labels: Vec<bool> = vec![false; e.len()];
    for &i in &split[1] {
        labels[i] = true;
    }
    let (_, within) = trace_ratio(e, &labels);
    let observed = ratio_of(&labels);
    let mut r = rng::seeded(seed);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        labels.shuffle(&mut r);
        if ratio_of(&labels) >= observed {
            exceed += 1;
        }
    }
    Ok(FisherScore {
        ratio: observed,
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        zero_within: !(within > 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MmdScore {
    pub mmd2: f64,
    pub sigma0: f64,
    pub degenerate_bandwidth: bool,
}

/// Multi-scale Gaussian MMD^2 between the two groups.
pub fn mmd2(e: &EmbeddingSet) -> Result<MmdScore> {
    let split = e.split()?;
    let (a, b) = e.pair()?;
    for (side, g) in [(0, a), (1, b)] {
        if split[side].len() < 2 {
            return Err(Error::GroupTooSmall(g));
        }
    }
    let x: Vec<&[f64]> = split[0].iter().map(|&i| e.row(i)).collect();
    let y: Vec<&[f64]> = split[1].iter().map(|&i| e.row(i)).collect();
    let r = kernel::mmd2(&x, &y, false);
    Ok(MmdScore {
        mmd2: r.value,
        sigma0: r.sigma0,
        degenerate_bandwidth: r.degenerate_bandwidth,
    })
}

/// Distance between the two group means.
pub fn centroid_distance(e: &EmbeddingSet) -> Result<f64> {
    let split = e.split()?;
    Ok(dist(&mean_of(e, &split[0]), &mean_of(e, &split[1])))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Projection {
    /// `(pc1, pc2)` per row.
    pub coords: Vec<[f64; 2]>,
    /// Variance along each component.
    pub variance: [f64; 2],
    /// Covariance rank below two; missing components are zero.
    pub rank_deficient: bool,
}

const POWER_ITERS: usize = 10_000;

/// Dominant eigenpair of a symmetric positive semi-definite matrix.
fn power_iteration(c: &[f64], d: usize) -> (f64, Vec<f64>) {
    // start from the column with the largest diagonal entry
    let j = (0..d).max_by(|&a, &b| c[a * d + a].total_cmp(&c[b * d + b])).unwrap_or(0);
    let mut v: Vec<f64> = (0..d).map(|i| c[i * d + j]).collect();
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if !(norm > 0.0) {
        return (0.0, vec![0.0; d]);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let mut next = vec![0.0; d];
        for a in 0..d {
            next[a] = (0..d).map(|b| c[a * d + b] * v[b]).sum();
        }
        let n = libm::sqrt(next.iter().map(|x| x * x).sum());
        if !(n > 0.0) {
            return (0.0, vec![0.0; d]);
        }
        next.iter_mut().for_each(|x| *x /= n);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        lambda = n;
        if delta < 1e-13 {
            break;
        }
    }
    // largest-magnitude coordinate positive, first one on ties
    let big = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
    if v[big] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (lambda, v)
}

/// Projection onto the top two principal components.
pub fn pca_2d(e: &EmbeddingSet) -> Result<Projection> {
    let (n, d) = (e.len(), e.dim);
    if n < 3 || d < 2 {
        return Err(Error::Config("PCA needs at least 3 rows and 2 dimensions".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let mu = mean_of(e, &all);
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = e.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (r[a] - mu[a]) * (r[b] - mu[b]);
            }
        }
    }
    cov.iter_mut().for_each(|x| *x /= (n - 1) as f64);
    let scale = (0..d).map(|i| cov[i * d + i]).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);

    let (l1, v1) = power_iteration(&cov, d);
    let mut deflated = cov.clone();
    for a in 0..d {
        for b in 0..d {
            deflated[a * d + b] -= l1 * v1[a] * v1[b];
        }
    }
    let (mut l2, mut v2) = power_iteration(&deflated, d);
    let rank_deficient = !(l1 > tol) || !(l2 > tol);
    if !(l2 > tol) {
        l2 = 0.0;
        v2 = vec![0.0; d];
    }
    let coords = (0..n)
        .map(|i| {
            let r = e.row(i);
            let p = |v: &[f64]| (0..d).map(|a| (r[a] - mu[a]) * v[a]).sum::<f64>();
            [p(&v1), p(&v2)]
        })
        .collect();
    Ok(Projection {
        coords,
        variance: [if l1 > tol { l1 } else { 0.0 }, l2],
        rank_deficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SeparabilityConfig {
    pub probe_folds: usize,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for SeparabilityConfig {
    fn default() -> Self {
        Self {
            probe_folds: 5,
            n_perm: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeparabilityReport {
    pub probe: ProbeScore,
    pub silhouette: f64,
    pub fisher: FisherScore,
    pub mmd: MmdScore,
    pub centroid_distance: f64,
    pub pca: Projection,
}

/// Runs every metric.
pub fn analyze(e: &EmbeddingSet, config: &SeparabilityConfig) -> Result<SeparabilityReport> {
    Ok(SeparabilityReport {
        probe: linear_probe(e, config.probe_folds, config.seed)?,
        silhouette: silhouette(e)?,
        fisher: fisher_ratio(e, config.n_perm, config.seed)?,
        mmd: mmd2(e)?,
        centroid_distance: centroid_distance(e)?,
        pca: pca_2d(e)?,
    })
}
