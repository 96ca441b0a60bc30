//! k-means over the signal space, k selection, and a 2-D t-SNE embedding of
//! centroid neighbourhoods.
//!
//! All randomness comes from seeded ChaCha streams. Reductions run in a fixed
//! order so results do not depend on the rayon pool size.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point<const D: usize> = [f64; D];

#[inline]
pub fn sq_dist<const D: usize>(a: &Point<D>, b: &Point<D>) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

#[inline]
pub fn dist<const D: usize>(a: &Point<D>, b: &Point<D>) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Derives an independent stream seed from a base seed and a stream index
/// (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// Points are L2-normalised, then clustered with Euclidean distance.
    Cosine,
}

/// Applies the distance choice and optional per-dimension standardization.
pub fn prepare_points<const D: usize>(points: &[Point<D>], distance: Distance, standardize: bool) -> Vec<Point<D>> {
    let mut out = points.to_vec();
    if standardize && !out.is_empty() {
        let n = out.len() as f64;
        for d in 0..D {
            let mean = out.iter().map(|p| p[d]).sum::<f64>() / n;
            let var = out.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for p in out.iter_mut() {
                p[d] = if sd > 0.0 { (p[d] - mean) / sd } else { 0.0 };
            }
        }
    }
    if distance == Distance::Cosine {
        for p in out.iter_mut() {
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in p.iter_mut() {
                    *x /= norm;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel<const D: usize> {
    pub k: usize,
    #[serde(with = "points_serde")]
    pub centroids: Vec<Point<D>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub rng_seed: u64,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

mod points_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[[f64; D]], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = v.iter().map(|p| p.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<Vec<[f64; D]>, De::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        rows.into_iter()
            .map(|r| r.try_into().map_err(|_| serde::de::Error::custom("wrong point dimension")))
            .collect()
    }
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest<const D: usize>(p: &Point<D>, centroids: &[Point<D>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign<const D: usize>(points: &[Point<D>], centroids: &[Point<D>]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest(p, centroids)).unzip()
}

fn kmeans_pp_init<const D: usize>(points: &[Point<D>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point<D>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from a seeded k-means++ start.
///
/// Stops when no centroid moves more than `tol` or after `max_iters`
/// updates. An empty cluster is re-seeded at the point farthest from its
/// current centroid. Final assignments are nearest-centroid for the returned
/// centroids.
pub fn kmeans<const D: usize>(points: &[Point<D>], k: usize, rng_seed: u64, max_iters: usize, tol: f64) -> Result<ClusterModel<D>> {
    if k == 0 || k > points.len() {
        return Err(Error::Param(format!("k must be in [1, {}], got {k}", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let (mut labels, mut d2) = assign(points, &centroids);
    trace.push(d2.iter().sum());
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![[0.0; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for d in 0..D {
                sums[l][d] += p[d];
            }
        }
        let mut next = centroids.clone();
        let mut used = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..D {
                    next[c][d] = sums[c][d] / counts[c] as f64;
                }
            } else {
                // farthest point from its own centroid, not already taken
                let far = d2
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used.contains(i))
                    .fold((0, -1.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
                used.push(far.0);
                next[c] = points[far.0];
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max(dist(a, b)));
        centroids = next;
        (labels, d2) = assign(points, &centroids);
        trace.push(d2.iter().sum());
        if shift < tol {
            break;
        }
    }
    Ok(ClusterModel {
        k,
        centroids,
        assignments: labels,
        inertia: d2.iter().sum(),
        iterations,
        rng_seed,
        inertia_trace: trace,
    })
}

/// Best-inertia model over `n_init` seeded restarts.
pub fn kmeans_restarts<const D: usize>(
    points: &[Point<D>],
    k: usize,
    rng_seed: u64,
    n_init: usize,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel<D>> {
    let runs: Vec<Result<ClusterModel<D>>> = (0..n_init.max(1) as u64)
        .map(|r| kmeans(points, k, derive_seed(rng_seed, r), max_iters, tol))
        .collect();
    let mut best: Option<ClusterModel<D>> = None;
    for r in runs {
        let m = r?;
        if best.as_ref().is_none_or(|b| m.inertia < b.inertia) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Mean silhouette coefficient. Points in singleton clusters contribute 0.
pub fn silhouette<const D: usize>(points: &[Point<D>], assignments: &[usize]) -> Result<f64> {
    if points.len() != assignments.len() {
        return Err(Error::Param("points and assignments differ in length".into()));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let non_empty = sizes.iter().filter(|&&s| s > 0).count();
    if non_empty < 2 {
        return Err(Error::Param("silhouette needs at least two non-empty clusters".into()));
    }
    let scores: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (q, &l) in points.iter().zip(assignments) {
                sums[l] += dist(p, q);
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCurveRow {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionCurve {
    pub rows: Vec<KCurveRow>,
    pub elbow: usize,
    pub best_silhouette_k: usize,
    pub chosen_k: usize,
}

impl KSelectionCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,inertia,silhouette\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.k, r.inertia, r.silhouette));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub n_init: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

/// Relative silhouette slack within which the elbow is accepted.
pub const ELBOW_SILHOUETTE_SLACK: f64 = 0.05;

/// Picks k from the elbow of the inertia curve (largest second difference),
/// keeping it only if its silhouette is within 5% of the best silhouette in
/// range; otherwise the silhouette argmax wins.
pub fn select_k<const D: usize>(
    points: &[Point<D>],
    k_range: std::ops::RangeInclusive<usize>,
    rng_seed: u64,
    params: &KMeansParams,
) -> Result<KSelectionCurve> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi < lo || hi > points.len() {
        return Err(Error::Param(format!("k range [{lo}, {hi}] not within [2, {}]", points.len())));
    }
    let mut rows = Vec::new();
    for k in k_range {
        let m = kmeans_restarts(points, k, derive_seed(rng_seed, k as u64), params.n_init, params.max_iters, params.tol)?;
        let s = silhouette(points, &m.assignments).unwrap_or(0.0);
        rows.push(KCurveRow {
            k,
            inertia: m.inertia,
            silhouette: s,
        });
    }
    let best_sil = rows
        .iter()
        .fold(&rows[0], |b, r| if r.silhouette > b.silhouette { r } else { b });
    let best_silhouette_k = best_sil.k;
    let elbow = if rows.len() >= 3 {
        (1..rows.len() - 1)
            .map(|i| (rows[i].k, rows[i - 1].inertia - 2.0 * rows[i].inertia + rows[i + 1].inertia))
            .fold((rows[1].k, f64::NEG_INFINITY), |b, (k, d)| if d > b.1 { (k, d) } else { b })
            .0
    } else {
        best_silhouette_k
    };
    let elbow_sil = rows.iter().find(|r| r.k == elbow).map(|r| r.silhouette).unwrap_or(f64::NEG_INFINITY);
    let chosen_k = if elbow_sil >= best_sil.silhouette - ELBOW_SILHOUETTE_SLACK * best_sil.silhouette.abs() {
        elbow
    } else {
        best_silhouette_k
    };
    Ok(KSelectionCurve {
        rows,
        elbow,
        best_silhouette_k,
        chosen_k,
    })
}

/// For each cluster, the indices of its `n` members nearest the centroid,
/// nearest first; ties broken by id.
pub fn centroid_neighbors<const D: usize, S: AsRef<str>>(
    model: &ClusterModel<D>,
    points: &[Point<D>],
    ids: &[S],
    n: usize,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Param("neighbour count must be >= 1".into()));
    }
    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); model.k];
    for (i, (p, &c)) in points.iter().zip(&model.assignments).enumerate() {
        members[c].push((sq_dist(p, &model.centroids[c]), i));
    }
    Ok(members
        .into_iter()
        .map(|mut m| {
            m.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| ids[a.1].as_ref().cmp(ids[b.1].as_ref())));
            m.truncate(n);
            m.into_iter().map(|(_, i)| i).collect()
        })
        .collect())
}

/// Relabels clusters so that index 0 is the centroid with the highest
/// `c_retweets` (dimension 2), ties broken by `qc_tweets` (dimension 0), both
/// descending. Returns the old→new index map.
pub fn canonical_order(model: &mut ClusterModel<4>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.k).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&model.centroids[a], &model.centroids[b]);
        cb[2].total_cmp(&ca[2]).then(cb[0].total_cmp(&ca[0])).then(a.cmp(&b))
    });
    let mut old_to_new = vec![0; model.k];
    for (new, &old) in order.iter().enumerate() {
        old_to_new[old] = new;
    }
    model.centroids = order.iter().map(|&o| model.centroids[o]).collect();
    for a in model.assignments.iter_mut() {
        *a = old_to_new[*a];
    }
    old_to_new
}

/// Cluster letter: 0 → "A", 1 → "B", ...
pub fn cluster_letter(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("C{i}")
    }
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *ra.entry(x).or_insert(0) += 1;
        *rb.entry(y).or_insert(0) += 1;
    }
    let c2 = |x: u64| (x as f64) * (x as f64 - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / (n * (n - 1.0) / 2.0);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    #[serde(with = "points_serde")]
    pub coords: Vec<Point<2>>,
    pub kl_divergence: f64,
}

/// Conditional affinities p(j|i) for one row with the Gaussian bandwidth set
/// by bisection so the row entropy matches ln(perplexity).
fn row_affinities(d2_row: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
    let mut p = vec![0.0; d2_row.len()];
    let dmin = d2_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(f64::INFINITY, |m, (_, &d)| m.min(d));
    for _ in 0..200 {
        let mut sum = 0.0;
        for (j, &d) in d2_row.iter().enumerate() {
            p[j] = if j == i { 0.0 } else { (-(d - dmin) * beta).exp() };
            sum += p[j];
        }
        let mut h = 0.0;
        for (j, pj) in p.iter_mut().enumerate() {
            *pj /= sum;
            if *pj > 0.0 {
                h += beta * (d2_row[j] - dmin) * *pj;
            }
        }
        h += sum.ln();
        let diff = h - target;
        if diff.abs() < 1e-10 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

/// Exact t-SNE into two dimensions.
pub fn tsne_embed<const D: usize>(points: &[Point<D>], rng_seed: u64, params: &TsneParams) -> Result<TsneResult> {
    let n = points.len();
    if !(params.perplexity > 0.0) || (n as f64) < 3.0 * params.perplexity || n < 2 {
        return Err(Error::Param(format!(
            "perplexity {} infeasible for {n} points (need n >= 3 * perplexity)",
            params.perplexity
        )));
    }
    // symmetric joint affinities, row-major n x n
    let cond: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = points.iter().map(|q| sq_dist(&points[i], q)).collect();
            row_affinities(&row, i, params.perplexity)
        })
        .collect();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
        p[i * n + i] = 0.0;
    }
    drop(cond);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<Point<2>> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];

    for it in 0..params.iters {
        let exaggeration = if it < params.exaggeration_iters { params.early_exaggeration } else { 1.0 };
        let momentum = if it < params.exaggeration_iters { 0.5 } else { 0.8 };
        // per row: kernel sum, attractive and repulsive parts in one pass
        let rows: Vec<(f64, Point<2>, Point<2>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut s, mut att, mut rep) = (0.0, [0.0; 2], [0.0; 2]);
                let pi = &p[i * n..(i + 1) * n];
                for (j, yj) in y.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let dx = y[i][0] - yj[0];
                    let dy = y[i][1] - yj[1];
                    let num = 1.0 / (1.0 + dx * dx + dy * dy);
                    s += num;
                    let a = pi[j] * num;
                    att[0] += a * dx;
                    att[1] += a * dy;
                    let r = num * num;
                    rep[0] += r * dx;
                    rep[1] += r * dy;
                }
                (s, att, rep)
            })
            .collect();
        let z: f64 = rows.iter().map(|r| r.0).sum();
        let grads: Vec<Point<2>> = rows
            .iter()
            .map(|(_, a, r)| [4.0 * (exaggeration * a[0] - r[0] / z), 4.0 * (exaggeration * a[1] - r[1] / z)])
            .collect();
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grads[i][d] > 0.0) == (velocity[i][d] > 0.0);
                gains[i][d] = if same_sign { (gains[i][d] * 0.8f64).max(0.01) } else { gains[i][d] + 0.2 };
                velocity[i][d] = momentum * velocity[i][d] - params.learning_rate * gains[i][d] * grads[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        let mut mean = [0.0; 2];
        for q in &y {
            mean[0] += q[0];
            mean[1] += q[1];
        }
        for q in y.iter_mut() {
            q[0] -= mean[0] / n as f64;
            q[1] -= mean[1] / n as f64;
        }
    }

    let row_z: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i).map(|j| 1.0 / (1.0 + sq_dist(&y[i], &y[j]))).sum())
        .collect();
    let z: f64 = row_z.iter().sum();
    let row_kl: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let pij = p[i * n + j];
                    let qij = (1.0 / (1.0 + sq_dist(&y[i], &y[j])) / z).max(1e-300);
                    pij * (pij / qij).ln()
                })
                .sum()
        })
        .collect();
    let kl = row_kl.iter().sum();
    if y.iter().any(|q| !q[0].is_finite() || !q[1].is_finite()) {
        return Err(Error::Data("t-SNE diverged".into()));
    }
    Ok(TsneResult { coords: y, kl_divergence: kl })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(centers: &[[f64; 4]], per: usize, spread: f64, seed: u64) -> (Vec<[f64; 4]>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spread).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                let mut p = *center;
                for x in p.iter_mut() {
                    *x += normal.sample(&mut rng);
                }
                pts.push(p);
                labels.push(c);
            }
        }
        (pts, labels)
    }

    #[test]
    fn k1_is_mean() {
        let pts = vec![[0.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0], [4.0, 3.0, 0.0, 1.0]];
        let m = kmeans(&pts, 1, 7, 100, 1e-9).unwrap();
        let mean = [2.0, 1.0, 0.0, 1.0 / 3.0];
        for d in 0..4 {
            assert!((m.centroids[0][d] - mean[d]).abs() < 1e-12);
        }
        let var: f64 = pts.iter().map(|p| sq_dist(p, &mean)).sum();
        assert!((m.inertia - var).abs() < 1e-12);
    }

    #[test]
    fn separable_pairs() {
        let pts = vec![[0.0, 0.0, 0.0, 0.0], [0.1, 0.0, 0.0, 0.0], [10.0, 10.0, 0.0, 0.0], [10.1, 10.0, 0.0, 0.0]];
        let m = kmeans(&pts, 2, 3, 100, 1e-9).unwrap();
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_eq!(m.assignments[2], m.assignments[3]);
        assert_ne!(m.assignments[0], m.assignments[2]);
    }

    #[test]
    fn k_bounds() {
        let pts = vec![[0.0; 4]; 3];
        assert!(kmeans(&pts, 4, 0, 10, 1e-6).is_err());
        assert!(kmeans(&pts, 0, 0, 10, 1e-6).is_err());
        // all-duplicate points still produce a model
        let m = kmeans(&pts, 2, 0, 10, 1e-6).unwrap();
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn deterministic_and_fixed_point() {
        let (pts, _) = blobs(&[[0.0; 4], [1.0, 1.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0]], 40, 0.2, 11);
        let a = kmeans(&pts, 3, 5, 300, 1e-9).unwrap();
        let b = kmeans(&pts, 3, 5, 300, 1e-9).unwrap();
        assert_eq!(a, b);
        for (p, &l) in pts.iter().zip(&a.assignments) {
            assert_eq!(nearest(p, &a.centroids).0, l);
        }
        for w in a.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn silhouette_separated_blobs() {
        let (pts, labels) = blobs(&[[0.0; 4], [10.0, 0.0, 0.0, 0.0]], 20, 0.1, 1);
        assert!(silhouette(&pts, &labels).unwrap() > 0.9);
        assert!(silhouette(&pts, &vec![0; pts.len()]).is_err());
    }

    #[test]
    fn silhouette_singleton_contributes_zero() {
        let pts = vec![[0.0; 4], [1.0, 0.0, 0.0, 0.0], [10.0, 0.0, 0.0, 0.0]];
        let s = silhouette(&pts, &[0, 0, 1]).unwrap();
        // a = 1, b = 10 and 9: s0 = 0.9, s1 = 8/9, s2 = 0
        assert!((s - (0.9 + 8.0 / 9.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn select_k_single_blob_defined() {
        let (pts, _) = blobs(&[[0.0; 4]], 60, 1.0, 2);
        let curve = select_k(&pts, 2..=6, 9, &KMeansParams::default()).unwrap();
        assert_eq!(curve.rows.len(), 5);
        assert!(curve.rows.iter().all(|r| r.silhouette < 0.5));
    }

    #[test]
    fn neighbours() {
        let pts = vec![[0.0; 4], [1.0, 0.0, 0.0, 0.0], [3.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]];
        let ids = ["a", "b", "c", "d"];
        let model = ClusterModel {
            k: 1,
            centroids: vec![[0.0; 4]],
            assignments: vec![0; 4],
            inertia: 0.0,
            iterations: 0,
            rng_seed: 0,
            inertia_trace: vec![],
        };
        assert_eq!(centroid_neighbors(&model, &pts, &ids, 1).unwrap(), vec![vec![0]]);
        // b and d tie at distance 1; id order decides
        assert_eq!(centroid_neighbors(&model, &pts, &ids, 3).unwrap(), vec![vec![0, 1, 3]]);
        assert_eq!(centroid_neighbors(&model, &pts, &ids, 10).unwrap()[0].len(), 4);
        assert!(centroid_neighbors(&model, &pts, &ids, 0).is_err());
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(ari < 0.0);
    }

    #[test]
    fn canonical_order_sorts_by_c_retweets() {
        let mut m = ClusterModel {
            k: 3,
            centroids: vec![[0.5, 0.0, 0.1, 0.0], [0.1, 0.0, 0.9, 0.0], [0.9, 0.0, 0.1, 0.0]],
            assignments: vec![0, 1, 2],
            inertia: 0.0,
            iterations: 0,
            rng_seed: 0,
            inertia_trace: vec![],
        };
        canonical_order(&mut m);
        assert_eq!(m.assignments, vec![2, 0, 1]);
        assert_eq!(m.centroids[0][2], 0.9);
        assert_eq!(cluster_letter(0), "A");
        assert_eq!(cluster_letter(5), "F");
    }

    #[test]
    fn tsne_params_checked() {
        let pts = vec![[0.0; 4]; 10];
        assert!(tsne_embed(&pts, 0, &TsneParams::default()).is_err());
    }

    #[test]
    fn cosine_preparation_normalises() {
        let p = prepare_points(&[[3.0, 4.0, 0.0, 0.0], [0.0; 4]], Distance::Cosine, false);
        assert!((p[0][0] - 0.6).abs() < 1e-15 && (p[0][1] - 0.8).abs() < 1e-15);
        assert_eq!(p[1], [0.0; 4]);
        let s = prepare_points(&[[1.0, 5.0, 0.0, 0.0], [3.0, 5.0, 0.0, 0.0]], Distance::Euclidean, true);
        assert_eq!(s[0][0], -1.0);
        assert_eq!(s[0][1], 0.0);
    }
}
