//! Agglomerative clustering (Ward linkage) and cluster-validity indices.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::Month;
use crate::regime::{label_two_groups, Detector, RegimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Manhattan,
    Euclidean,
}

impl DistanceMetric {
    fn between(self, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
        match self {
            DistanceMetric::Manhattan => a.zip(b).map(|(x, y)| (x - y).abs()).sum(),
            DistanceMetric::Euclidean => a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "vectors of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.between(a.iter().copied(), b.iter().copied()))
    }

    fn rows(self, points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        self.between(points.row(i).iter().copied(), points.row(j).iter().copied())
    }
}

pub fn manhattan_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    DistanceMetric::Manhattan.distance(a, b)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    DistanceMetric::Euclidean.distance(a, b)
}

/// Full `T x T` matrix of pairwise distances between rows.
pub fn distance_matrix(points: &DMatrix<f64>, metric: DistanceMetric) -> DMatrix<f64> {
    let t = points.nrows();
    let mut d = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..i {
            let v = metric.rows(points, i, j);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// The smaller of the two merged node ids.
    pub a: usize,
    pub b: usize,
    pub height: f64,
    /// Leaves are `0..T`; the merge at step `s` creates node `T + s`.
    pub node: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_count: usize,
    pub metric: DistanceMetric,
    pub merges: Vec<Merge>,
}

/// Ward agglomeration. Squared base distances are updated with the
/// Lance-Williams recurrence and the merge height is the updated
/// dissimilarity itself, so two singletons join at their squared base
/// distance. Ties go to the lexicographically smallest pair of node ids.
pub fn agnes(points: &DMatrix<f64>, metric: DistanceMetric) -> Result<Dendrogram> {
    let t = points.nrows();
    if t < 2 {
        return Err(Error::TooShort {
            what: "agglomerative clustering".into(),
            needed: 2,
            got: t,
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points contain non-finite values"));
    }
    let total = 2 * t - 1;
    let mut d = vec![vec![0.0f64; total]; total];
    for i in 0..t {
        for j in 0..i {
            let v = metric.rows(points, i, j).powi(2);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut size = vec![0usize; total];
    size[..t].fill(1);
    let mut active: Vec<usize> = (0..t).collect();
    let mut merges = Vec::with_capacity(t - 1);

    for step in 0..t - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                if d[i][j] < best.2 {
                    best = (i, j, d[i][j]);
                }
            }
        }
        let (i, j, cost) = best;
        let node = t + step;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        active.retain(|&k| k != i && k != j);
        for &k in &active {
            let nk = size[k] as f64;
            let v = ((ni + nk) * d[k][i] + (nj + nk) * d[k][j] - nk * cost) / (ni + nj + nk);
            let v = v.max(0.0);
            d[k][node] = v;
            d[node][k] = v;
        }
        size[node] = size[i] + size[j];
        active.push(node);
        merges.push(Merge {
            a: i,
            b: j,
            height: cost.max(0.0),
            node,
            size: size[node],
        });
    }
    Ok(Dendrogram {
        leaf_count: t,
        metric,
        merges,
    })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Dendrogram {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Labels `1..=k` obtained by undoing the `k - 1` last merges. Labels are
    /// numbered in order of first appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let t = self.leaf_count;
        if k == 0 || k > t {
            return Err(Error::invalid(format!("cut k = {k} outside 1..={t}")));
        }
        let mut parent: Vec<usize> = (0..2 * t - 1).collect();
        for m in &self.merges[..t - k] {
            parent[m.a] = m.node;
            parent[m.b] = m.node;
        }
        let mut ids = std::collections::HashMap::new();
        Ok((0..t)
            .map(|leaf| {
                let root = find(&mut parent, leaf);
                let next = ids.len() + 1;
                *ids.entry(root).or_insert(next)
            })
            .collect())
    }

    /// Leaves in dendrogram order (left-to-right traversal from the root).
    pub fn leaf_order(&self) -> Vec<usize> {
        let t = self.leaf_count;
        if t == 1 {
            return vec![0];
        }
        let mut out = Vec::with_capacity(t);
        let mut stack = vec![2 * t - 2];
        while let Some(node) = stack.pop() {
            if node < t {
                out.push(node);
            } else {
                let m = &self.merges[node - t];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out
    }
}

/// Pairwise distance matrix with rows and columns permuted into `order`
/// (the data behind an ordered dissimilarity image).
pub fn ordered_dissimilarity(
    points: &DMatrix<f64>,
    order: &[usize],
    metric: DistanceMetric,
) -> Result<DMatrix<f64>> {
    let t = points.nrows();
    let mut seen = vec![false; t];
    if order.len() != t || order.iter().any(|&i| i >= t || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::invalid("order is not a permutation of the rows"));
    }
    let d = distance_matrix(points, metric);
    Ok(DMatrix::from_fn(t, t, |i, j| d[(order[i], order[j])]))
}

pub fn default_hopkins_sample(t: usize) -> usize {
    (t / 10).min(t.saturating_sub(1)).max(1)
}

/// Hopkins statistic `H = sum(u) / (sum(u) + sum(w))`: `u` are nearest-data
/// distances of uniform pseudo-points in the bounding box, `w` are
/// nearest-neighbour distances of sampled data points. Euclidean distances.
pub fn hopkins(points: &DMatrix<f64>, sample_size: usize, seed: u64) -> Result<f64> {
    let (t, k) = points.shape();
    if sample_size == 0 || sample_size >= t {
        return Err(Error::invalid(format!(
            "Hopkins sample size {sample_size} must be in 1..{t}"
        )));
    }
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for row in points.row_iter() {
        for (j, v) in row.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    if let Some(j) = (0..k).find(|&j| !(hi[j] > lo[j])) {
        return Err(Error::ZeroVariance(format!(
            "bounding box has zero width in dimension {j}"
        )));
    }
    let nearest = |p: &[f64], skip: Option<usize>| {
        (0..t)
            .filter(|i| Some(*i) != skip)
            .map(|i| {
                DistanceMetric::Euclidean.between(p.iter().copied(), points.row(i).iter().copied())
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w_sum = 0.0;
    for i in sample(&mut rng, t, sample_size).iter() {
        let p: Vec<f64> = points.row(i).iter().copied().collect();
        w_sum += nearest(&p, Some(i));
    }
    let mut u_sum = 0.0;
    for _ in 0..sample_size {
        let p: Vec<f64> = (0..k).map(|j| rng.random_range(lo[j]..hi[j])).collect();
        u_sum += nearest(&p, None);
    }
    if u_sum + w_sum == 0.0 {
        return Ok(0.5);
    }
    Ok(u_sum / (u_sum + w_sum))
}

fn cluster_ids(labels: &[usize]) -> Vec<usize> {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Per-observation silhouette values. Singleton clusters score 0.
pub fn silhouette(points: &DMatrix<f64>, labels: &[usize], metric: DistanceMetric) -> Result<Vec<f64>> {
    let t = points.nrows();
    if labels.len() != t {
        return Err(Error::DimensionMismatch(format!("{} labels for {t} points", labels.len())));
    }
    let ids = cluster_ids(labels);
    if ids.len() < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    let d = distance_matrix(points, metric);
    let sizes: Vec<usize> = ids
        .iter()
        .map(|c| labels.iter().filter(|l| *l == c).count())
        .collect();
    let pos = |l: usize| ids.binary_search(&l).unwrap();
    Ok((0..t)
        .map(|i| {
            let own = pos(labels[i]);
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; ids.len()];
            for j in 0..t {
                sums[pos(labels[j])] += d[(i, j)];
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..ids.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect())
}

/// Minimum inter-cluster distance over maximum cluster diameter. When every
/// diameter is zero the value is `+inf` and the flag is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DunnIndex {
    pub value: f64,
    pub infinite: bool,
}

pub fn dunn(points: &DMatrix<f64>, labels: &[usize], metric: DistanceMetric) -> Result<DunnIndex> {
    let t = points.nrows();
    if labels.len() != t {
        return Err(Error::DimensionMismatch(format!("{} labels for {t} points", labels.len())));
    }
    if cluster_ids(labels).len() < 2 {
        return Err(Error::invalid("Dunn index needs at least two clusters"));
    }
    let mut min_between = f64::INFINITY;
    let mut max_diameter = 0.0f64;
    for i in 0..t {
        for j in 0..i {
            let v = metric.rows(points, i, j);
            if labels[i] == labels[j] {
                max_diameter = max_diameter.max(v);
            } else {
                min_between = min_between.min(v);
            }
        }
    }
    if max_diameter == 0.0 {
        return Ok(DunnIndex {
            value: f64::INFINITY,
            infinite: true,
        });
    }
    Ok(DunnIndex {
        value: min_between / max_diameter,
        infinite: false,
    })
}

/// The cut size in `2..=k_max` with the largest Dunn index (ties: smaller k).
pub fn select_k_by_dunn(
    dendrogram: &Dendrogram,
    points: &DMatrix<f64>,
    metric: DistanceMetric,
    k_max: usize,
) -> Result<(usize, f64)> {
    let k_max = k_max.min(dendrogram.leaf_count);
    if k_max < 2 {
        return Err(Error::invalid("need at least two points to choose a cut"));
    }
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..=k_max {
        let v = dunn(points, &dendrogram.cut(k)?, metric)?.value;
        if v > best.1 {
            best = (k, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterValidation {
    pub hopkins: f64,
    pub hopkins_sample_size: usize,
    pub silhouette_values: Vec<f64>,
    pub mean_silhouette: f64,
    pub negative_silhouette_share: f64,
    /// `None` when every cluster has zero diameter.
    pub dunn: Option<f64>,
}

pub fn validate(
    points: &DMatrix<f64>,
    labels: &[usize],
    metric: DistanceMetric,
    hopkins_sample: Option<usize>,
    seed: u64,
) -> Result<ClusterValidation> {
    let m = hopkins_sample.unwrap_or_else(|| default_hopkins_sample(points.nrows()));
    let h = hopkins(points, m, seed)?;
    let s = silhouette(points, labels, metric)?;
    let dn = dunn(points, labels, metric)?;
    let negative = s.iter().filter(|v| **v < 0.0).count() as f64 / s.len() as f64;
    Ok(ClusterValidation {
        hopkins: h,
        hopkins_sample_size: m,
        mean_silhouette: s.iter().sum::<f64>() / s.len() as f64,
        silhouette_values: s,
        negative_silhouette_share: negative,
        dunn: if dn.infinite { None } else { Some(dn.value) },
    })
}

/// Maps a two-cluster cut onto Calm / HighVol by mean covariance trace.
pub fn label_regimes_cluster(labels: &[usize], traces: &[f64], months: &[Month]) -> Result<RegimeSeries> {
    if labels.len() != months.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} months",
            labels.len(),
            months.len()
        )));
    }
    let ids = cluster_ids(labels);
    if ids.len() > 2 {
        return Err(Error::invalid(format!("expected at most two clusters, got {}", ids.len())));
    }
    let second = ids.last().copied().unwrap_or(0);
    let group: Vec<bool> = labels.iter().map(|l| ids.len() == 2 && *l == second).collect();
    let mut labeling = label_two_groups(&group, traces)?;
    let high = labeling.labels.iter().filter(|r| r.is_high_vol()).count();
    if 2 * high > labels.len() {
        labeling.warnings.push(format!(
            "high-vol cluster holds {high} of {} months (the majority)",
            labels.len()
        ));
    }
    Ok(RegimeSeries {
        detector: Detector::Agnes,
        months: months.to_vec(),
        labels: labeling.labels,
        transition_values: None,
        warnings: labeling.warnings,
    })
}

/// Distance triples `(i, j, k)` with `d(i,k) > d(i,j) + d(j,k) + tol`.
pub fn triangle_violations(d: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize, usize)> {
    let n = d.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for k in i + 1..n {
            for j in 0..n {
                if j != i && j != k && d[(i, k)] > d[(i, j)] + d[(j, k)] + tol {
                    out.push((i, j, k));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::regime::Regime;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand_distr::{Distribution, StandardNormal};

    fn uniform(t: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, k, |_, _| rng.random::<f64>())
    }

    fn blobs(per: usize, sep: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = DMatrix::from_fn(2 * per, 2, |i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + if i >= per { sep / 2f64.sqrt() } else { 0.0 }
        });
        (pts, (0..2 * per).map(|i| if i < per { 1 } else { 2 }).collect())
    }

    /// Recomputes every candidate merge cost from cluster membership:
    /// `W(C) = sum_{a,b in C} D(a,b) / (2|C|)` with `D` the squared base
    /// distance, and cost `2 (W(A u B) - W(A) - W(B))`.
    fn brute_force_ward(points: &DMatrix<f64>, metric: DistanceMetric) -> Vec<(usize, usize, f64)> {
        let t = points.nrows();
        let base = distance_matrix(points, metric);
        let w = |c: &[usize]| {
            let mut s = 0.0;
            for a in c {
                for b in c {
                    s += base[(*a, *b)].powi(2);
                }
            }
            s / (2.0 * c.len() as f64)
        };
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..t).map(|i| (i, vec![i])).collect();
        let mut out = Vec::new();
        for step in 0..t - 1 {
            let mut best = (0, 0, f64::INFINITY, (usize::MAX, usize::MAX));
            for x in 0..clusters.len() {
                for y in 0..clusters.len() {
                    if x == y {
                        continue;
                    }
                    let (ia, ib) = (clusters[x].0, clusters[y].0);
                    if ia > ib {
                        continue;
                    }
                    let mut union = clusters[x].1.clone();
                    union.extend(&clusters[y].1);
                    let cost = 2.0 * (w(&union) - w(&clusters[x].1) - w(&clusters[y].1));
                    if cost < best.2 - 1e-12 || ((cost - best.2).abs() <= 1e-12 && (ia, ib) < best.3) {
                        best = (x, y, cost, (ia, ib));
                    }
                }
            }
            let (x, y, cost, (ia, ib)) = best;
            let mut union = clusters[x].1.clone();
            union.extend(&clusters[y].1);
            let (hi, lo) = (x.max(y), x.min(y));
            clusters.remove(hi);
            clusters.remove(lo);
            clusters.push((t + step, union));
            out.push((ia, ib, cost.max(0.0)));
        }
        out
    }

    #[test]
    fn distance_examples() {
        assert_eq!(manhattan_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(manhattan_distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(manhattan_distance(&[1.0, -2.0, 3.0], &[-1.0, 2.0, 0.0]).unwrap(), 9.0);
        assert!(manhattan_distance(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn two_points_merge_at_their_squared_distance() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 2.0]);
        let d = agnes(&p, DistanceMetric::Manhattan).unwrap();
        assert_eq!(d.merges.len(), 1);
        assert_eq!(d.merges[0].height, 9.0);
        assert_eq!((d.merges[0].a, d.merges[0].b, d.merges[0].node), (0, 1, 2));
    }

    #[test]
    fn matches_brute_force_oracle() {
        for seed in 0..50 {
            let t = 2 + (seed as usize % 7);
            let pts = uniform(t, 3, seed);
            for metric in [DistanceMetric::Manhattan, DistanceMetric::Euclidean] {
                let d = agnes(&pts, metric).unwrap();
                let oracle = brute_force_ward(&pts, metric);
                for (m, o) in d.merges.iter().zip(&oracle) {
                    assert_eq!((m.a, m.b), (o.0, o.1), "seed {seed}");
                    assert!((m.height - o.2).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn blobs_separate() {
        let (pts, truth) = blobs(20, 10.0, 7);
        let d = agnes(&pts, DistanceMetric::Manhattan).unwrap();
        let h = d.heights();
        let last = *h.last().unwrap();
        let intra = h[..h.len() - 1].iter().cloned().fold(0.0, f64::max);
        assert!(last > 10.0 * intra, "{last} vs {intra}");
        assert_eq!(d.cut(2).unwrap(), truth);
        assert_eq!(select_k_by_dunn(&d, &pts, DistanceMetric::Manhattan, 6).unwrap().0, 2);
        let (tight, _) = blobs(20, 50.0, 7);
        assert!(hopkins(&tight, 4, 1).unwrap() > 0.8);
        let s = silhouette(&tight, &truth, DistanceMetric::Manhattan).unwrap();
        assert!(s.iter().all(|v| *v > 0.8));
    }

    #[test]
    fn cut_extremes() {
        let pts = uniform(6, 2, 3);
        let d = agnes(&pts, DistanceMetric::Manhattan).unwrap();
        assert!(d.cut(1).unwrap().iter().all(|l| *l == 1));
        assert_eq!(d.cut(6).unwrap(), vec![1, 2, 3, 4, 5, 6]);
        assert!(d.cut(0).is_err() && d.cut(7).is_err());
        let mut order = d.leaf_order();
        order.sort();
        assert_eq!(order, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn hopkins_on_uniform_data_is_near_half() {
        let hs: Vec<f64> = (0..100)
            .map(|seed| hopkins(&uniform(500, 2, seed), 50, seed + 1000).unwrap())
            .collect();
        let med = linalg::median(&hs);
        assert!((med - 0.5).abs() < 0.1, "{med}");
    }

    #[test]
    fn hopkins_degenerate_and_deterministic() {
        let flat = DMatrix::from_fn(10, 2, |i, j| if j == 0 { i as f64 } else { 1.0 });
        assert!(hopkins(&flat, 2, 0).is_err());
        let pts = uniform(50, 2, 9);
        assert_eq!(hopkins(&pts, 5, 3).unwrap(), hopkins(&pts, 5, 3).unwrap());
        assert!(hopkins(&pts, 50, 3).is_err());
        assert_eq!(default_hopkins_sample(500), 50);
        assert_eq!(default_hopkins_sample(5), 1);
    }

    #[test]
    fn silhouette_cases() {
        let (pts, mut labels) = blobs(10, 20.0, 4);
        labels[0] = 2;
        let s = silhouette(&pts, &labels, DistanceMetric::Manhattan).unwrap();
        assert!(s[0] < 0.0);
        let two = DMatrix::from_row_slice(2, 1, &[0.0, 5.0]);
        assert_eq!(silhouette(&two, &[1, 2], DistanceMetric::Manhattan).unwrap(), vec![0.0, 0.0]);
        assert!(silhouette(&two, &[1, 1], DistanceMetric::Manhattan).is_err());
    }

    #[test]
    fn dunn_cases() {
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0]);
        let d = dunn(&pts, &[1, 1, 2, 2], DistanceMetric::Manhattan).unwrap();
        assert_eq!(d.value, 10.0);
        let two = DMatrix::from_row_slice(2, 1, &[0.0, 5.0]);
        let d = dunn(&two, &[1, 2], DistanceMetric::Manhattan).unwrap();
        assert!(d.infinite && d.value.is_infinite());
    }

    #[test]
    fn cluster_labeling_by_trace() {
        let months: Vec<Month> = (0..4).map(|i| Month::new(2021, 1).unwrap().offset(i)).collect();
        let r = label_regimes_cluster(&[1, 2, 1, 1], &[1.0, 10.0, 1.0, 1.0], &months).unwrap();
        assert_eq!(r.labels, [Regime::Calm, Regime::HighVol, Regime::Calm, Regime::Calm]);
        let r = label_regimes_cluster(&[1, 2, 2, 2], &[1.0; 4], &months).unwrap();
        assert_eq!(r.labels[0], Regime::HighVol);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn triangle_checker_finds_known_violation() {
        // 1 - rho^2 with rho12 = rho23 = 0.9, rho13 = 0.65
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.19, 0.5775, 0.19, 0.0, 0.19, 0.5775, 0.19, 0.0]);
        assert_eq!(triangle_violations(&d, 1e-12), vec![(0, 1, 2)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn heights_monotone(seed in 0u64..100_000, t in 2usize..30) {
            let d = agnes(&uniform(t, 3, seed), DistanceMetric::Manhattan).unwrap();
            prop_assert!(d.heights().windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }

        #[test]
        fn permutation_keeps_partitions(seed in 0u64..100_000, k in 1usize..5) {
            let pts = uniform(12, 2, seed);
            let mut perm: Vec<usize> = (0..12).collect();
            perm.reverse();
            perm.swap(0, 5);
            let shuffled = DMatrix::from_fn(12, 2, |i, j| pts[(perm[i], j)]);
            let a = agnes(&pts, DistanceMetric::Manhattan).unwrap().cut(k).unwrap();
            let b = agnes(&shuffled, DistanceMetric::Manhattan).unwrap().cut(k).unwrap();
            for i in 0..12 {
                for j in 0..12 {
                    prop_assert_eq!(a[perm[i]] == a[perm[j]], b[i] == b[j]);
                }
            }
        }

        #[test]
        fn correct_labels_beat_single_swaps(seed in 0u64..100_000, idx in 0usize..20) {
            let (pts, truth) = blobs(10, 10.0, seed);
            let mean = |l: &[usize]| {
                let s = silhouette(&pts, l, DistanceMetric::Manhattan).unwrap();
                s.iter().sum::<f64>() / s.len() as f64
            };
            let mut swapped = truth.clone();
            swapped[idx] = 3 - swapped[idx];
            prop_assert!(mean(&truth) >= mean(&swapped));
        }
    }
}
