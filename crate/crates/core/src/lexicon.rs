//! Weighted log-odds contrast between the seed corpus and the background
//! corpus, and extraction of the filtered top-fraction lexicon.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::UserAggregate;
use crate::error::{Error, Result};
use crate::matchers::{lexicon_token_filter, Stopwords};

/// Token counts of one corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl CorpusCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, token: &str, n: u64) {
        if n == 0 {
            return;
        }
        match self.counts.get_mut(token) {
            Some(c) => *c += n,
            None => {
                self.counts.insert(token.to_string(), n);
            }
        }
        self.total += n;
    }

    pub fn from_counts<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut c = Self::new();
        for (t, n) in items {
            c.add(t.as_ref(), n);
        }
        c
    }

    pub fn add_user(&mut self, agg: &UserAggregate) {
        for (t, &n) in &agg.tokens {
            self.add(t, n as u64);
        }
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Seed corpus (self-drafted tokens of seed users) and background corpus
/// (self-drafted tokens of every other user).
pub fn split_corpora<'a, I>(users: I, seeds: &std::collections::BTreeSet<String>) -> (CorpusCounts, CorpusCounts)
where
    I: IntoIterator<Item = &'a UserAggregate>,
{
    let mut seed = CorpusCounts::new();
    let mut background = CorpusCounts::new();
    for u in users {
        if seeds.contains(&u.user_id) {
            seed.add_user(u);
        } else {
            background.add_user(u);
        }
    }
    (seed, background)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsEntry {
    pub token: String,
    pub y1: u64,
    pub y2: u64,
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
}

impl LogOddsEntry {
    pub fn is_hashtag(&self) -> bool {
        self.token.starts_with('#')
    }
}

/// Log-odds difference with a uniform Dirichlet prior of `alpha` per
/// vocabulary token, standardized by its approximate variance. One entry per
/// token of the joint vocabulary, in token order.
pub fn weighted_log_odds(seed: &CorpusCounts, background: &CorpusCounts, alpha: f64) -> Result<Vec<LogOddsEntry>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    if seed.total() == 0 || background.total() == 0 {
        return Err(Error::Data("log-odds needs two non-empty corpora".into()));
    }
    let mut vocab: Vec<&str> = seed.vocabulary().chain(background.vocabulary()).collect();
    vocab.sort_unstable();
    vocab.dedup();
    if vocab.len() < 2 {
        return Err(Error::Data("log-odds needs at least two distinct tokens".into()));
    }
    let alpha0 = alpha * vocab.len() as f64;
    let (n1, n2) = (seed.total() as f64, background.total() as f64);
    Ok(vocab
        .into_iter()
        .map(|token| {
            let y1 = seed.get(token);
            let y2 = background.get(token);
            let (a1, a2) = (y1 as f64 + alpha, y2 as f64 + alpha);
            let delta = (a1 / (n1 + alpha0 - a1)).ln() - (a2 / (n2 + alpha0 - a2)).ln();
            let variance = 1.0 / a1 + 1.0 / a2;
            LogOddsEntry {
                token: token.to_string(),
                y1,
                y2,
                delta,
                variance,
                z: delta / variance.sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    #[default]
    Z,
    Delta,
}

/// Number of entries kept before filtering: the ceiling of
/// `top_fraction * vocab`, guarded against floating-point overshoot.
pub fn top_count(top_fraction: f64, vocab: usize) -> usize {
    let raw = top_fraction * vocab as f64;
    let c = (raw - 1e-9 * raw.max(1.0)).ceil();
    (c.max(0.0) as usize).min(vocab)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LexiconData")]
pub struct Lexicon {
    /// Retained entries, best first.
    pub entries: Vec<LogOddsEntry>,
    pub hashtag_count: usize,
    pub pre_filter_size: usize,
    pub vocabulary_size: usize,
    #[serde(skip)]
    tokens: HashSet<String>,
}

#[derive(Deserialize)]
struct LexiconData {
    entries: Vec<LogOddsEntry>,
    pre_filter_size: usize,
    vocabulary_size: usize,
}

impl From<LexiconData> for Lexicon {
    fn from(d: LexiconData) -> Self {
        Self::from_entries(d.entries, d.pre_filter_size, d.vocabulary_size)
    }
}

impl Lexicon {
    fn from_entries(entries: Vec<LogOddsEntry>, pre_filter_size: usize, vocabulary_size: usize) -> Self {
        let tokens = entries.iter().map(|e| e.token.clone()).collect();
        let hashtag_count = entries.iter().filter(|e| e.is_hashtag()).count();
        Self {
            entries,
            hashtag_count,
            pre_filter_size,
            vocabulary_size,
            tokens,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.token.as_str())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("token\ty1\ty2\tdelta\tz\tis_hashtag\n");
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{}", e.token, e.y1, e.y2, e.delta, e.z, e.is_hashtag());
        }
        s
    }

    /// Reads a lexicon written by [`to_tsv`](Self::to_tsv). Variances are
    /// recomputed from the counts with the given prior.
    pub fn from_tsv(text: &str, alpha: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Data(format!("lexicon line {}: malformed", n + 1));
            if f.len() != 6 {
                return Err(bad());
            }
            let y1: u64 = f[1].parse().map_err(|_| bad())?;
            let y2: u64 = f[2].parse().map_err(|_| bad())?;
            entries.push(LogOddsEntry {
                token: f[0].to_string(),
                y1,
                y2,
                delta: f[3].parse().map_err(|_| bad())?,
                variance: 1.0 / (y1 as f64 + alpha) + 1.0 / (y2 as f64 + alpha),
                z: f[4].parse().map_err(|_| bad())?,
            });
        }
        let n = entries.len();
        Ok(Self::from_entries(entries, n, n))
    }
}

fn rank_cmp(rank_by: RankBy) -> impl Fn(&LogOddsEntry, &LogOddsEntry) -> std::cmp::Ordering {
    move |a, b| {
        let (sa, sb) = match rank_by {
            RankBy::Z => (a.z, b.z),
            RankBy::Delta => (a.delta, b.delta),
        };
        sb.total_cmp(&sa).then(b.y1.cmp(&a.y1)).then(a.token.cmp(&b.token))
    }
}

/// Keeps the top `top_fraction` of the vocabulary by score, then drops
/// tokens failing [`lexicon_token_filter`].
pub fn build_lexicon(
    mut entries: Vec<LogOddsEntry>,
    top_fraction: f64,
    rank_by: RankBy,
    stopwords: &Stopwords,
) -> Result<Lexicon> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::Param(format!("top_fraction must be in (0,1), got {top_fraction}")));
    }
    let vocab = entries.len();
    let keep = top_count(top_fraction, vocab);
    entries.sort_by(rank_cmp(rank_by));
    entries.truncate(keep);
    entries.retain(|e| lexicon_token_filter(&e.token, stopwords));
    Ok(Lexicon::from_entries(entries, keep, vocab))
}
