//! Cluster characterization and the inter-cluster retweet null model.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::clustering::{cluster_letter, derive_seed};
use crate::corpus::{Period, UserAggregate};
use crate::error::{Error, Result};
use crate::seeds::{Leaning, LeaningResult};
use crate::signals::{UserSignals, SIGNAL_NAMES};

/// Pairwise Pearson correlations with two-sided p-values. Entries involving a
/// zero-variance signal are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonMatrix {
    pub n: usize,
    pub r: Vec<Vec<Option<f64>>>,
    pub p: Vec<Vec<Option<f64>>>,
}

pub fn pearson_matrix<const D: usize>(vectors: &[[f64; D]]) -> Result<PearsonMatrix> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Param("correlation needs at least two users".into()));
    }
    let mut mean = [0.0; D];
    for v in vectors {
        for d in 0..D {
            mean[d] += v[d];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = [[0.0; D]; D];
    for v in vectors {
        for a in 0..D {
            let da = v[a] - mean[a];
            for b in a..D {
                cov[a][b] += da * (v[b] - mean[b]);
            }
        }
    }
    let t = (n > 2).then(|| StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("dof > 0"));
    let mut r = vec![vec![None; D]; D];
    let mut p = vec![vec![None; D]; D];
    for a in 0..D {
        for b in a..D {
            if cov[a][a] <= 0.0 || cov[b][b] <= 0.0 {
                continue;
            }
            let rab = if a == b {
                1.0
            } else {
                (cov[a][b] / (cov[a][a].sqrt() * cov[b][b].sqrt())).clamp(-1.0, 1.0)
            };
            let pab = match &t {
                _ if rab.abs() >= 1.0 => Some(0.0),
                Some(t) => {
                    let stat = rab * ((n - 2) as f64 / (1.0 - rab * rab)).sqrt();
                    Some(2.0 * (1.0 - t.cdf(stat.abs())))
                }
                None => None,
            };
            r[a][b] = Some(rab);
            r[b][a] = Some(rab);
            p[a][b] = pab;
            p[b][a] = pab;
        }
    }
    Ok(PearsonMatrix { n, r, p })
}

impl PearsonMatrix {
    pub fn to_csv(&self, names: &[&str]) -> String {
        let fmt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let mut s = String::from("signal_a,signal_b,r,p\n");
        for (a, na) in names.iter().enumerate() {
            for (b, nb) in names.iter().enumerate() {
                s.push_str(&format!("{na},{nb},{},{}\n", fmt(self.r[a][b]), fmt(self.p[a][b])));
            }
        }
        s
    }
}

/// Share of active days with QAnon content.
pub fn persistence(agg: &UserAggregate) -> Result<f64> {
    if agg.active_days.is_empty() {
        return Err(Error::UndefinedSignal("persistence: no active days"));
    }
    Ok(agg.qanon_days.len() as f64 / agg.active_days.len() as f64)
}

pub fn unique_keywords(agg: &UserAggregate) -> usize {
    agg.keywords_used.len()
}

pub fn retweet_ratio(agg: &UserAggregate) -> Result<f64> {
    let total = agg.total_tweets();
    if total == 0 {
        return Err(Error::UndefinedSignal("retweet_ratio: no tweets"));
    }
    Ok(agg.retweets() as f64 / total as f64)
}

/// Retweet-weighted mean QC_tweets of retweeted users present in `qc`.
pub fn mean_retweeted_qc(agg: &UserAggregate, qc: &HashMap<&str, f64>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0u64);
    for (t, c) in &agg.retweet_targets {
        if let Some(&q) = qc.get(t.as_str()) {
            num += q * c.total() as f64;
            den += c.total() as u64;
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// (r - u) / (r + u) over reliable and unreliable URL counts.
pub fn url_credibility_counts(reliable: u32, unreliable: u32) -> Option<f64> {
    let total = reliable + unreliable;
    (total > 0).then(|| (reliable as f64 - unreliable as f64) / total as f64)
}

pub fn url_credibility(agg: &UserAggregate) -> Option<f64> {
    url_credibility_counts(agg.reliable_urls, agg.unreliable_urls)
}

/// Counts retweets from row cluster to column cluster.
pub fn interaction_counts(edges: &[(usize, usize, u64)], labels: &[usize], k: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; k]; k];
    for &(s, t, w) in edges {
        m[labels[s]][labels[t]] += w;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub period: Period,
    pub k: usize,
    pub permutations: usize,
    pub observed: Vec<Vec<u64>>,
    pub null_mean: Vec<Vec<f64>>,
    pub null_std: Vec<Vec<f64>>,
    /// `None` where the null distribution has zero spread and the observed
    /// count differs from its mean.
    pub z: Vec<Vec<Option<f64>>>,
    pub p: Vec<Vec<f64>>,
}

/// Significance level used to label cells.
pub const SIGNIFICANCE: f64 = 0.05;

/// Summary statistics of an observed matrix against sampled null matrices.
/// Standard deviations are population (divide by R).
pub fn interaction_stats(period: Period, observed: Vec<Vec<u64>>, nulls: &[Vec<Vec<u64>>]) -> InteractionMatrix {
    let k = observed.len();
    let r = nulls.len() as f64;
    let mut mean = vec![vec![0.0; k]; k];
    let mut std = vec![vec![0.0; k]; k];
    let mut z = vec![vec![None; k]; k];
    let mut p = vec![vec![1.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let m = nulls.iter().map(|n| n[a][b] as f64).sum::<f64>() / r;
            let var = nulls.iter().map(|n| (n[a][b] as f64 - m).powi(2)).sum::<f64>() / r;
            let sd = var.sqrt();
            let obs = observed[a][b] as f64;
            let dev = (obs - m).abs();
            z[a][b] = if sd > 0.0 {
                Some((obs - m) / sd)
            } else if dev == 0.0 {
                Some(0.0)
            } else {
                None
            };
            let tol = 1e-9 * dev.max(1.0);
            let extreme = nulls.iter().filter(|n| (n[a][b] as f64 - m).abs() >= dev - tol).count();
            p[a][b] = (1 + extreme) as f64 / (nulls.len() + 1) as f64;
            mean[a][b] = m;
            std[a][b] = sd;
        }
    }
    InteractionMatrix {
        period,
        k,
        permutations: nulls.len(),
        observed,
        null_mean: mean,
        null_std: std,
        z,
        p,
    }
}

/// Observed inter-cluster retweet counts against `permutations` label
/// shuffles with cluster sizes fixed. Edges are `(source, target, weight)`
/// indices into `labels`. Shuffle `i` uses a stream seeded from
/// `(rng_seed, i)`, so results do not depend on scheduling.
pub fn interaction_zscores(
    edges: &[(usize, usize, u64)],
    labels: &[usize],
    k: usize,
    period: Period,
    permutations: usize,
    rng_seed: u64,
) -> Result<InteractionMatrix> {
    if permutations == 0 {
        return Err(Error::Param("need at least one permutation".into()));
    }
    if labels.iter().any(|&l| l >= k) {
        return Err(Error::Param("label out of range".into()));
    }
    if edges.iter().any(|&(s, t, _)| s >= labels.len() || t >= labels.len()) {
        return Err(Error::Param("edge endpoint without assignment".into()));
    }
    let observed = interaction_counts(edges, labels, k);
    let nulls: Vec<Vec<Vec<u64>>> = (0..permutations as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, i));
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut rng);
            interaction_counts(edges, &shuffled, k)
        })
        .collect();
    Ok(interaction_stats(period, observed, &nulls))
}

impl InteractionMatrix {
    fn grid_csv<T>(&self, cell: impl Fn(&T) -> String, rows: &[Vec<T>]) -> String {
        let mut s = String::from("from");
        for b in 0..self.k {
            s.push(',');
            s.push_str(&cluster_letter(b));
        }
        s.push('\n');
        for (a, row) in rows.iter().enumerate() {
            s.push_str(&cluster_letter(a));
            for v in row {
                s.push(',');
                s.push_str(&cell(v));
            }
            s.push('\n');
        }
        s
    }

    pub fn observed_csv(&self) -> String {
        self.grid_csv(|v: &u64| v.to_string(), &self.observed)
    }

    pub fn z_csv(&self) -> String {
        self.grid_csv(|v: &Option<f64>| v.map_or(String::new(), |x| x.to_string()), &self.z)
    }

    pub fn p_csv(&self) -> String {
        self.grid_csv(|v: &f64| v.to_string(), &self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountStatus {
    Active,
    Suspended,
    Deleted,
}

/// Parses `user_id,status` rows; a header row is skipped when present.
pub fn parse_account_status(text: &str) -> Result<HashMap<String, AccountStatus>> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (user, status) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Data(format!("status file line {}: expected user_id,status", n + 1)))?;
        let status = match status.trim().to_lowercase().as_str() {
            "active" => AccountStatus::Active,
            "suspended" => AccountStatus::Suspended,
            "deleted" => AccountStatus::Deleted,
            "status" if n == 0 => continue,
            other => return Err(Error::Data(format!("status file line {}: unknown status {other:?}", n + 1))),
        };
        out.insert(user.trim().to_string(), status);
    }
    Ok(out)
}

/// Five-number summary plus mean and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster: String,
    pub index: usize,
    pub size: usize,
    pub proportion_left: f64,
    pub proportion_right: f64,
    pub proportion_suspended: f64,
    pub proportion_deleted: f64,
    pub signals: BTreeMap<String, Option<Distribution>>,
    pub qc_tweets_self_drafted: Option<Distribution>,
    pub retweet_ratio: Option<Distribution>,
    pub persistence: Option<Distribution>,
    pub unique_keywords: Option<Distribution>,
    pub url_credibility: Option<Distribution>,
    pub mean_retweeted_qc: Option<Distribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub population: usize,
    pub clusters: Vec<ClusterStats>,
}

/// Per-cluster proportions and distributions. Users missing from the status
/// map count as active; users whose descriptor is undefined are left out of
/// that descriptor's distribution only.
pub fn cluster_summary(
    assignments: &BTreeMap<String, usize>,
    k: usize,
    users: &BTreeMap<String, UserAggregate>,
    signals: &BTreeMap<String, UserSignals>,
    leanings: &LeaningResult,
    status: &HashMap<String, AccountStatus>,
) -> ClusterSummary {
    let qc: HashMap<&str, f64> = signals.iter().map(|(u, s)| (u.as_str(), s.signals.qc_tweets)).collect();
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); k];
    for (u, &c) in assignments {
        members[c].push(u);
    }
    let clusters = members
        .iter()
        .enumerate()
        .map(|(c, ids)| {
            let size = ids.len();
            let share = |pred: &dyn Fn(&str) -> bool| {
                if size == 0 {
                    0.0
                } else {
                    ids.iter().filter(|u| pred(u)).count() as f64 / size as f64
                }
            };
            let mut sig: Vec<Vec<f64>> = vec![Vec::new(); 4];
            let mut self_qc = Vec::new();
            let (mut rr, mut pers, mut uk, mut cred, mut mrq) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for u in ids {
                if let Some(s) = signals.get(*u) {
                    for (d, v) in s.signals.to_array().into_iter().enumerate() {
                        sig[d].push(v);
                    }
                    self_qc.push(s.qc_tweets_self_drafted);
                }
                if let Some(a) = users.get(*u) {
                    if let Ok(x) = retweet_ratio(a) {
                        rr.push(x);
                    }
                    if let Ok(x) = persistence(a) {
                        pers.push(x);
                    }
                    uk.push(unique_keywords(a) as f64);
                    if let Some(x) = url_credibility(a) {
                        cred.push(x);
                    }
                    if let Some(x) = mean_retweeted_qc(a, &qc) {
                        mrq.push(x);
                    }
                }
            }
            ClusterStats {
                cluster: cluster_letter(c),
                index: c,
                size,
                proportion_left: share(&|u| leanings.label(u) == Leaning::Left),
                proportion_right: share(&|u| leanings.label(u) == Leaning::Right),
                proportion_suspended: share(&|u| status.get(u) == Some(&AccountStatus::Suspended)),
                proportion_deleted: share(&|u| status.get(u) == Some(&AccountStatus::Deleted)),
                signals: SIGNAL_NAMES
                    .iter()
                    .zip(&sig)
                    .map(|(n, v)| (n.to_string(), Distribution::of(v)))
                    .collect(),
                qc_tweets_self_drafted: Distribution::of(&self_qc),
                retweet_ratio: Distribution::of(&rr),
                persistence: Distribution::of(&pers),
                unique_keywords: Distribution::of(&uk),
                url_credibility: Distribution::of(&cred),
                mean_retweeted_qc: Distribution::of(&mrq),
            }
        })
        .collect();
    ClusterSummary {
        population: assignments.len(),
        clusters,
    }
}
