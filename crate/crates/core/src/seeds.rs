//! Persistent promoter selection and political-leaning validation.
//!
//! Leanings come from soft label propagation over the undirected, weighted
//! retweet graph. Users whose shared outlet links lean one way are fixed at
//! -1 (left) or +1 (right); every other node repeatedly takes the weighted
//! mean of its neighbours (synchronous Jacobi sweeps).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnalysisWindow, UserAggregate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedConfig {
    pub weekly_min_tweets: u32,
    pub seed_weeks: u32,
    pub require_self_drafted_overall: bool,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            weekly_min_tweets: 10,
            seed_weeks: 5,
            require_self_drafted_overall: true,
        }
    }
}

/// Whether one user meets both persistence conditions.
pub fn is_persistent(agg: &UserAggregate, config: &SeedConfig) -> bool {
    if config.require_self_drafted_overall && agg.hits(crate::corpus::Scope::SelfDrafted) == 0 {
        return false;
    }
    let weeks = config.seed_weeks as usize;
    agg.weeks.len() >= weeks
        && agg.weeks[..weeks]
            .iter()
            .all(|w| w.tweets() > config.weekly_min_tweets && w.hits() > 0)
}

/// Users with self-drafted QAnon content over the window and, in every one of
/// the first `seed_weeks` weeks, more than `weekly_min_tweets` tweets with at
/// least one hit.
pub fn select_persistent<'a, I>(users: I, window: &AnalysisWindow, config: &SeedConfig) -> Result<BTreeSet<String>>
where
    I: IntoIterator<Item = &'a UserAggregate>,
{
    if config.weekly_min_tweets == 0 {
        return Err(Error::Param("weekly_min_tweets must be >= 1".into()));
    }
    if config.seed_weeks == 0 || config.seed_weeks > window.n_weeks {
        return Err(Error::Param(format!(
            "seed_weeks must be in [1, {}], got {}",
            window.n_weeks, config.seed_weeks
        )));
    }
    Ok(users
        .into_iter()
        .filter(|a| is_persistent(a, config))
        .map(|a| a.user_id.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leaning {
    Left,
    Right,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaningScore {
    pub user_id: String,
    pub score: f64,
    pub label: Leaning,
    pub is_seed_label: bool,
}

pub fn label_for(score: f64, threshold: f64) -> Leaning {
    if score > threshold && score > 0.0 {
        Leaning::Right
    } else if score < -threshold && score < 0.0 {
        Leaning::Left
    } else {
        Leaning::Unknown
    }
}

/// Weighted retweet edge: `source` retweeted `target` `weight` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetweetEdge {
    pub source: String,
    pub target: String,
    pub weight: u64,
}

/// Retweet edges over both periods.
pub fn retweet_edges<'a, I>(users: I) -> Vec<RetweetEdge>
where
    I: IntoIterator<Item = &'a UserAggregate>,
{
    let mut out = Vec::new();
    for u in users {
        for (t, c) in &u.retweet_targets {
            if c.total() > 0 {
                out.push(RetweetEdge {
                    source: u.user_id.clone(),
                    target: t.clone(),
                    weight: c.total() as u64,
                });
            }
        }
    }
    out
}

/// +1 for users sharing more right-leaning than left-leaning outlet links,
/// -1 for the reverse; ties and users without outlet links get no seed label.
pub fn domain_bias_seeds<'a, I>(users: I) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = &'a UserAggregate>,
{
    users
        .into_iter()
        .filter_map(|u| match u.right_links.cmp(&u.left_links) {
            std::cmp::Ordering::Greater => Some((u.user_id.clone(), 1.0)),
            std::cmp::Ordering::Less => Some((u.user_id.clone(), -1.0)),
            std::cmp::Ordering::Equal => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub max_iters: usize,
    pub tolerance: f64,
    pub threshold: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tolerance: 1e-6,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaningResult {
    pub scores: BTreeMap<String, LeaningScore>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest |score| observed at any iteration.
    pub max_abs_score: f64,
}

impl LeaningResult {
    pub fn label(&self, user: &str) -> Leaning {
        self.scores.get(user).map_or(Leaning::Unknown, |s| s.label)
    }
}

/// Undirected weighted graph with node ids sorted for determinism.
#[derive(Debug, Clone)]
pub struct UndirectedGraph {
    pub nodes: Vec<String>,
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl UndirectedGraph {
    pub fn from_edges(edges: &[RetweetEdge], extra_nodes: impl IntoIterator<Item = String>) -> Self {
        let mut ids: BTreeSet<String> = extra_nodes.into_iter().collect();
        for e in edges {
            ids.insert(e.source.clone());
            ids.insert(e.target.clone());
        }
        let nodes: Vec<String> = ids.into_iter().collect();
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nodes.len()];
        for e in edges {
            let (a, b) = (index[e.source.as_str()], index[e.target.as_str()]);
            if a == b || e.weight == 0 {
                continue;
            }
            *merged[a].entry(b).or_insert(0.0) += e.weight as f64;
            *merged[b].entry(a).or_insert(0.0) += e.weight as f64;
        }
        let adjacency = merged.into_iter().map(|m| m.into_iter().collect()).collect();
        Self { nodes, adjacency }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }
}

/// Propagates seed leanings over the retweet graph until the largest score
/// change drops below the tolerance or `max_iters` sweeps have run.
pub fn infer_leanings(edges: &[RetweetEdge], seeds: &BTreeMap<String, f64>, config: &PropagationConfig) -> LeaningResult {
    let graph = UndirectedGraph::from_edges(edges, seeds.keys().cloned());
    let n = graph.nodes.len();
    let mut fixed = vec![None; n];
    for (id, &s) in seeds {
        let i = graph.index_of(id).expect("seed is a node");
        fixed[i] = Some(s.clamp(-1.0, 1.0));
    }
    let mut scores: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let mut max_abs = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                if let Some(s) = fixed[i] {
                    return s;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for &(j, w) in &graph.adjacency[i] {
                    num += w * scores[j];
                    den += w;
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect();
        iterations += 1;
        let change = next
            .iter()
            .zip(&scores)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        max_abs = next.iter().fold(max_abs, |m, s| m.max(s.abs()));
        scores = next;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    let scores = graph
        .nodes
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (id, score))| {
            let rec = LeaningScore {
                user_id: id.clone(),
                score,
                label: label_for(score, config.threshold),
                is_seed_label: fixed[i].is_some(),
            };
            (id.clone(), rec)
        })
        .collect();
    LeaningResult {
        scores,
        iterations,
        converged,
        max_abs_score: max_abs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedValidation {
    pub total: usize,
    pub left: usize,
    pub right: usize,
    pub unknown: usize,
    /// Left-labeled share of candidates, a proxy for false positives.
    pub left_proportion: f64,
    pub filtered: BTreeSet<String>,
}

/// Keeps only the right-labeled candidates.
pub fn validate_seed_set(candidates: &BTreeSet<String>, leanings: &LeaningResult) -> SeedValidation {
    let mut v = SeedValidation {
        total: candidates.len(),
        left: 0,
        right: 0,
        unknown: 0,
        left_proportion: 0.0,
        filtered: BTreeSet::new(),
    };
    for c in candidates {
        match leanings.label(c) {
            Leaning::Left => v.left += 1,
            Leaning::Right => {
                v.right += 1;
                v.filtered.insert(c.clone());
            }
            Leaning::Unknown => v.unknown += 1,
        }
    }
    if v.total > 0 {
        v.left_proportion = v.left as f64 / v.total as f64;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WeekCounts;
    use chrono::NaiveDate;

    fn window() -> AnalysisWindow {
        AnalysisWindow::new(
            NaiveDate::from_ymd_opt(2020, 6, 20).unwrap(),
            11,
            NaiveDate::from_ymd_opt(2020, 7, 21).unwrap(),
            5,
        )
        .unwrap()
    }

    fn user(weekly_tweets: u32, weekly_hits: u32, self_hits: u32) -> UserAggregate {
        let mut a = UserAggregate::new("u", 11);
        for w in a.weeks.iter_mut().take(5) {
            *w = WeekCounts {
                retweet: weekly_tweets,
                keyword_hits: weekly_hits,
                ..Default::default()
            };
        }
        a.weeks[6].original = 1;
        a.weeks[6].keyword_hits = self_hits;
        a.weeks[6].keyword_hits_self = self_hits;
        a
    }

    fn selected(a: &UserAggregate) -> bool {
        !select_persistent([a], &window(), &SeedConfig::default()).unwrap().is_empty()
    }

    #[test]
    fn selection_examples() {
        assert!(selected(&user(11, 1, 1)));
        let mut ten = user(11, 1, 1);
        ten.weeks[2].retweet = 10;
        assert!(!selected(&ten));
        assert!(!selected(&user(11, 1, 0)));
        let mut quiet = user(11, 1, 1);
        quiet.weeks[4].keyword_hits = 0;
        assert!(!selected(&quiet));
    }

    #[test]
    fn selection_parameter_errors() {
        let a = user(11, 1, 1);
        let bad = SeedConfig {
            seed_weeks: 12,
            ..Default::default()
        };
        assert!(select_persistent([&a], &window(), &bad).is_err());
        let zero = SeedConfig {
            weekly_min_tweets: 0,
            ..Default::default()
        };
        assert!(select_persistent([&a], &window(), &zero).is_err());
    }

    fn edge(s: &str, t: &str, w: u64) -> RetweetEdge {
        RetweetEdge {
            source: s.into(),
            target: t.into(),
            weight: w,
        }
    }

    #[test]
    fn one_step_propagation() {
        let seeds = BTreeMap::from([("r".to_string(), 1.0)]);
        let res = infer_leanings(&[edge("x", "r", 3)], &seeds, &PropagationConfig::default());
        assert_eq!(res.scores["x"].score, 1.0);
        assert_eq!(res.scores["x"].label, Leaning::Right);
        assert!(!res.scores["x"].is_seed_label);
        assert!(res.scores["r"].is_seed_label);
        assert!(res.converged);
    }

    #[test]
    fn symmetric_neighbours_cancel() {
        let seeds = BTreeMap::from([("r".to_string(), 1.0), ("l".to_string(), -1.0)]);
        let res = infer_leanings(&[edge("x", "r", 2), edge("l", "x", 2)], &seeds, &PropagationConfig::default());
        assert_eq!(res.scores["x"].score, 0.0);
        assert_eq!(res.scores["x"].label, Leaning::Unknown);
        assert_eq!(res.scores["l"].label, Leaning::Left);
    }

    #[test]
    fn seedless_component_is_unknown() {
        let seeds = BTreeMap::from([("r".to_string(), 1.0)]);
        let res = infer_leanings(&[edge("a", "b", 1), edge("x", "r", 1)], &seeds, &PropagationConfig::default());
        assert_eq!(res.label("a"), Leaning::Unknown);
        assert_eq!(res.label("b"), Leaning::Unknown);
        assert_eq!(res.label("nobody"), Leaning::Unknown);
    }

    #[test]
    fn bias_seeds_majority() {
        let mut a = UserAggregate::new("a", 1);
        a.right_links = 3;
        a.left_links = 1;
        let mut b = UserAggregate::new("b", 1);
        b.left_links = 2;
        let mut c = UserAggregate::new("c", 1);
        c.left_links = 2;
        c.right_links = 2;
        let s = domain_bias_seeds([&a, &b, &c]);
        assert_eq!(s, BTreeMap::from([("a".to_string(), 1.0), ("b".to_string(), -1.0)]));
    }

    #[test]
    fn validation_counts() {
        let seeds = BTreeMap::from([("r".to_string(), 1.0), ("l".to_string(), -1.0)]);
        let res = infer_leanings(&[edge("x", "r", 1), edge("y", "l", 1)], &seeds, &PropagationConfig::default());
        let cands: BTreeSet<String> = ["x", "y", "z"].map(String::from).into();
        let v = validate_seed_set(&cands, &res);
        assert_eq!((v.total, v.left, v.right, v.unknown), (3, 1, 1, 1));
        assert_eq!(v.filtered, BTreeSet::from(["x".to_string()]));
        assert!((v.left_proportion - 1.0 / 3.0).abs() < 1e-15);

        let all_right: BTreeSet<String> = ["x", "r"].map(String::from).into();
        assert_eq!(validate_seed_set(&all_right, &res).filtered, all_right);
    }
}
