//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's matching, tokenizing or statistics
//! code; the oracles work straight from raw records with the simplest
//! algorithm that is obviously right for the inputs the tests feed them.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use radsignals::corpus::{TweetKind, TweetRecord};

pub const DAY: i64 = 86_400;
pub const WEEK: i64 = 7 * DAY;

pub fn entries(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn bundled(file: &str) -> String {
    let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Keyword list split into `#` entries and plain entries.
pub struct Keywords {
    pub tags: HashSet<String>,
    pub plain: HashSet<String>,
}

impl Keywords {
    pub fn new(list: &[String]) -> Self {
        let (tags, plain): (Vec<_>, Vec<_>) = list.iter().cloned().partition(|k| k.starts_with('#'));
        Self {
            tags: tags.into_iter().collect(),
            plain: plain.into_iter().collect(),
        }
    }
}

fn is_url(piece: &str) -> bool {
    piece.starts_with("http://") || piece.starts_with("https://") || piece.starts_with("www.")
}

fn trim_punct(piece: &str) -> &str {
    piece.trim_end_matches([',', '!', '.', '?', ';', ':'])
}

/// Keyword occurrences in text made of whitespace-separated single words,
/// hashtags, handles and URLs. A hashtag counts once for a `#` entry equal
/// to it and once for a plain entry equal to its body.
pub fn keyword_hits(text: &str, kw: &Keywords) -> u64 {
    let lower = text.to_lowercase();
    let mut n = 0;
    for piece in lower.split_whitespace() {
        if piece.starts_with('@') || is_url(piece) {
            continue;
        }
        let p = trim_punct(piece);
        if let Some(body) = p.strip_prefix('#') {
            n += kw.tags.contains(p) as u64 + kw.plain.contains(body) as u64;
        } else {
            n += kw.plain.contains(p) as u64;
        }
    }
    n
}

pub fn host(url: &str) -> Option<String> {
    let lower = url.to_lowercase();
    let rest = lower.split_once("://").map_or(lower.as_str(), |(_, r)| r);
    let host = rest.split(['/', '?', '#']).next()?.split(':').next()?;
    let host = host.strip_prefix("www.").unwrap_or(host);
    (!host.is_empty()).then(|| host.to_string())
}

pub fn domain_listed(host: &str, list: &[String]) -> bool {
    list.iter().any(|d| host == d || host.ends_with(&format!(".{d}")))
}

/// Tokens of a self-drafted tweet: lowercase, handles dropped, URLs kept
/// whole, trailing punctuation removed.
pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .filter(|p| !p.starts_with('@'))
        .map(|p| if is_url(p) { p } else { trim_punct(p) })
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Matched character fraction of a profile made of whitespace-separated
/// keywords, hashtags, bare hosts and ordinary words.
pub fn profile_fraction(profile: &str, kw: &Keywords, domains: &[String]) -> f64 {
    let lower = profile.to_lowercase();
    let total = lower.chars().count();
    if total == 0 {
        return 0.0;
    }
    let mut matched = 0;
    for piece in lower.split_whitespace() {
        let p = trim_punct(piece);
        if kw.tags.contains(p) || kw.plain.contains(p) {
            matched += p.chars().count();
        } else if let Some(body) = p.strip_prefix('#').filter(|b| kw.plain.contains(*b)) {
            matched += body.chars().count();
        } else if host(p).is_some_and(|h| domain_listed(&h, domains)) && (p.contains('.')) {
            matched += p.chars().count();
        }
    }
    matched as f64 / total as f64
}

#[derive(Debug, Default, Clone)]
pub struct RawUser {
    pub tweets: u64,
    pub hits: u64,
    pub self_drafted: u64,
    pub self_hits: u64,
    pub retweets: u64,
    /// (tweets, hits) per week.
    pub weeks: Vec<(u64, u64)>,
    pub retweet_targets: BTreeMap<String, u64>,
    pub tokens: HashMap<String, u64>,
    pub token_total: u64,
    pub days: BTreeSet<i64>,
    pub qanon_days: BTreeSet<i64>,
    pub reliable: u64,
    pub unreliable: u64,
    /// text -> (count, first timestamp)
    pub profiles: BTreeMap<String, (u64, i64)>,
}

impl RawUser {
    pub fn profile(&self) -> &str {
        self.profiles
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)).then(b.0.cmp(a.0)))
            .map_or("", |(p, _)| p.as_str())
    }
}

pub struct Lists {
    pub keywords: Keywords,
    pub qanon: Vec<String>,
    pub reliable: Vec<String>,
    pub unreliable: Vec<String>,
}

/// Per-user recount straight from records; records outside
/// `[start, start + n_weeks)` are ignored.
pub fn recount(records: &[TweetRecord], start: i64, n_weeks: usize, lists: &Lists) -> BTreeMap<String, RawUser> {
    let mut out: BTreeMap<String, RawUser> = BTreeMap::new();
    for r in records {
        if r.timestamp < start || r.timestamp >= start + n_weeks as i64 * WEEK {
            continue;
        }
        let u = out.entry(r.user_id.clone()).or_insert_with(|| RawUser {
            weeks: vec![(0, 0); n_weeks],
            ..RawUser::default()
        });
        let week = ((r.timestamp - start) / WEEK) as usize;
        let hosts: Vec<String> = r.urls.iter().filter_map(|x| host(x)).collect();
        let hits = keyword_hits(&r.text, &lists.keywords) + hosts.iter().filter(|h| domain_listed(h, &lists.qanon)).count() as u64;
        u.tweets += 1;
        u.hits += hits;
        u.weeks[week].0 += 1;
        u.weeks[week].1 += hits;
        let self_drafted = r.kind != TweetKind::Retweet;
        if self_drafted {
            u.self_drafted += 1;
            u.self_hits += hits;
            for t in tokens(&r.text) {
                *u.tokens.entry(t).or_insert(0) += 1;
                u.token_total += 1;
            }
        } else {
            u.retweets += 1;
            *u.retweet_targets.entry(r.retweeted_user_id.clone().expect("retweet target")).or_insert(0) += 1;
        }
        let day = r.timestamp.div_euclid(DAY);
        u.days.insert(day);
        if hits > 0 {
            u.qanon_days.insert(day);
        }
        u.reliable += hosts.iter().filter(|h| domain_listed(h, &lists.reliable)).count() as u64;
        u.unreliable += hosts.iter().filter(|h| domain_listed(h, &lists.unreliable)).count() as u64;
        let e = u.profiles.entry(r.profile_description.clone()).or_insert((0, r.timestamp));
        e.0 += 1;
        e.1 = e.1.min(r.timestamp);
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col].abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Harmonic extension of fixed scores over an undirected weighted graph:
/// each free node equals the weighted mean of its neighbours. Free nodes
/// without any path to a fixed node are not supported.
pub fn harmonic_scores(n: usize, edges: &[(usize, usize, f64)], fixed: &BTreeMap<usize, f64>) -> Vec<f64> {
    let mut w = vec![vec![0.0; n]; n];
    for &(a, b, x) in edges {
        if a != b {
            w[a][b] += x;
            w[b][a] += x;
        }
    }
    let free: Vec<usize> = (0..n).filter(|i| !fixed.contains_key(i)).collect();
    let pos: HashMap<usize, usize> = free.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut a = vec![vec![0.0; free.len()]; free.len()];
    let mut b = vec![0.0; free.len()];
    for (r, &i) in free.iter().enumerate() {
        a[r][r] = w[i].iter().sum();
        for j in 0..n {
            if w[i][j] == 0.0 {
                continue;
            }
            match fixed.get(&j) {
                Some(s) => b[r] += w[i][j] * s,
                None => a[r][pos[&j]] -= w[i][j],
            }
        }
    }
    let x = solve(a, b);
    (0..n).map(|i| fixed.get(&i).copied().unwrap_or_else(|| x[pos[&i]])).collect()
}

/// Two-pass Pearson correlation; `None` for a constant column.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the contingency table.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(a.len() as u64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

/// Deterministic decorations that exercise case folding, punctuation,
/// handles, in-text URLs, `www.` prefixes, subdomains and hashtags built
/// from plain keywords.
pub fn decorate(records: &mut [TweetRecord]) {
    for r in records.iter_mut() {
        let id: u64 = r.tweet_id.parse().unwrap_or(0);
        if id % 7 == 0 {
            r.text = r.text.to_uppercase();
        }
        if id % 11 == 0 {
            r.text.push_str(" @wwg1wga_fan");
        }
        if id % 13 == 0 {
            r.text.push_str(" https://qanon.pub/post/1");
        }
        if id % 17 == 0 {
            if let Some(sp) = r.text.find(' ') {
                r.text.insert(sp, ',');
            }
        }
        if id % 29 == 0 {
            r.text.push_str(" #WWG1WGA!");
        }
        if id % 19 == 0 {
            r.urls.push("https://www.qanon.pub/x".into());
        }
        if id % 23 == 0 {
            r.urls.push("https://news.redherald.example/y".into());
        }
        if id % 31 == 0 {
            r.urls.push("https://notqanon.pub/z".into());
        }
    }
}
