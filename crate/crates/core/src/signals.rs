//! The four per-user radicalization signals and the clustering feature set.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_profile, Scope, UserAggregate};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::matchers::{keyword_matches_lower, url_spans_lower, DomainList, KeywordList};

pub const SIGNAL_NAMES: [&str; 4] = ["qc_tweets", "qc_profile", "c_retweets", "c_lexical"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalVector {
    pub qc_tweets: f64,
    pub qc_profile: f64,
    pub c_retweets: f64,
    pub c_lexical: f64,
}

impl SignalVector {
    pub fn to_array(self) -> [f64; 4] {
        [self.qc_tweets, self.qc_profile, self.c_retweets, self.c_lexical]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            qc_tweets: a[0],
            qc_profile: a[1],
            c_retweets: a[2],
            c_lexical: a[3],
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        self.qc_tweets.is_finite() && self.qc_tweets >= 0.0 && unit(self.qc_profile) && unit(self.c_retweets) && unit(self.c_lexical)
    }
}

/// Keyword plus QAnon-URL hits per tweet within `scope`.
pub fn qc_tweets(agg: &UserAggregate, scope: Scope) -> Result<f64> {
    let n = agg.tweets(scope);
    if n == 0 {
        return Err(Error::UndefinedSignal("qc_tweets: no tweets in scope"));
    }
    Ok(agg.hits(scope) as f64 / n as f64)
}

/// Matched and total character counts of a profile description.
///
/// Candidate spans are keyword matches and URL-like chunks whose host is in
/// the domain list. Spans are chosen longest first without overlap.
pub fn profile_match_chars(profile: &str, keywords: &KeywordList, domains: &DomainList) -> (usize, usize) {
    let lower = profile.to_lowercase();
    let total = lower.chars().count();
    if total == 0 {
        return (0, 0);
    }
    let mut spans: Vec<(usize, usize)> = keyword_matches_lower(&lower, keywords)
        .into_iter()
        .map(|m| (m.start, m.end))
        .collect();
    spans.extend(
        url_spans_lower(&lower)
            .into_iter()
            .filter(|&(a, b)| domains.matches_url(&lower[a..b]) == Some(true)),
    );
    let chars = |(a, b): (usize, usize)| lower[a..b].chars().count();
    spans.sort_by(|&x, &y| chars(y).cmp(&chars(x)).then(x.0.cmp(&y.0)));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut matched = 0;
    for s in spans {
        if taken.iter().all(|&(a, b)| s.1 <= a || s.0 >= b) {
            matched += chars(s);
            taken.push(s);
        }
    }
    (matched, total)
}

/// Fraction of profile characters inside QAnon keyword or URL spans. Empty
/// profiles score 0.
pub fn qc_profile(profile: &str, keywords: &KeywordList, domains: &DomainList) -> f64 {
    match profile_match_chars(profile, keywords, domains) {
        (_, 0) => 0.0,
        (m, t) => m as f64 / t as f64,
    }
}

pub fn c_retweets(agg: &UserAggregate, seeds: &BTreeSet<String>) -> Result<f64> {
    let total = agg.retweet_target_total();
    if total == 0 {
        return Err(Error::UndefinedSignal("c_retweets: no retweets"));
    }
    let to_seeds: u64 = agg
        .retweet_targets
        .iter()
        .filter(|(t, _)| seeds.contains(*t))
        .map(|(_, c)| c.total() as u64)
        .sum();
    Ok(to_seeds as f64 / total as f64)
}

/// Fraction of self-drafted tokens (with repeats) that are lexicon tokens.
pub fn c_lexical(agg: &UserAggregate, lexicon: &Lexicon) -> Result<f64> {
    if agg.token_total == 0 {
        return Err(Error::UndefinedSignal("c_lexical: no self-drafted tokens"));
    }
    let hits: u64 = agg
        .tokens
        .iter()
        .filter(|(t, _)| lexicon.contains(t))
        .map(|(_, &c)| c as u64)
        .sum();
    Ok(hits as f64 / agg.token_total as f64)
}

/// One row of the per-user metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSignals {
    pub user_id: String,
    pub signals: SignalVector,
    pub qc_tweets_self_drafted: f64,
    pub total_tweets: u64,
    pub retweets: u64,
    pub self_drafted: u64,
    pub tokens: u64,
}

/// Signals for every user with at least one retweet and one self-drafted
/// tweet. A user whose self-drafted tweets yield no tokens gets
/// `c_lexical = 0`.
pub fn feature_matrix<'a, I>(
    users: I,
    seeds: &BTreeSet<String>,
    lexicon: &Lexicon,
    keywords: &KeywordList,
    domains: &DomainList,
) -> BTreeMap<String, UserSignals>
where
    I: IntoIterator<Item = &'a UserAggregate>,
{
    let eligible: Vec<&UserAggregate> = users
        .into_iter()
        .filter(|a| a.retweet_target_total() > 0 && a.self_drafted() > 0)
        .collect();
    eligible
        .par_iter()
        .map(|a| {
            let signals = SignalVector {
                qc_tweets: qc_tweets(a, Scope::All).expect("eligible user has tweets"),
                qc_profile: qc_profile(canonical_profile(a), keywords, domains),
                c_retweets: c_retweets(a, seeds).expect("eligible user has retweets"),
                c_lexical: c_lexical(a, lexicon).unwrap_or(0.0),
            };
            let row = UserSignals {
                user_id: a.user_id.clone(),
                signals,
                qc_tweets_self_drafted: qc_tweets(a, Scope::SelfDrafted).expect("eligible user has self-drafted tweets"),
                total_tweets: a.total_tweets(),
                retweets: a.retweets(),
                self_drafted: a.self_drafted(),
                tokens: a.token_total,
            };
            (a.user_id.clone(), row)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn signals_csv(rows: &BTreeMap<String, UserSignals>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "user_id",
        "qc_tweets",
        "qc_tweets_self_drafted",
        "qc_profile",
        "c_retweets",
        "c_lexical",
        "total_tweets",
        "retweets",
        "self_drafted",
        "tokens",
    ])
    .expect("in-memory write");
    for r in rows.values() {
        let s = r.signals;
        w.write_record([
            r.user_id.clone(),
            s.qc_tweets.to_string(),
            r.qc_tweets_self_drafted.to_string(),
            s.qc_profile.to_string(),
            s.c_retweets.to_string(),
            s.c_lexical.to_string(),
            r.total_tweets.to_string(),
            r.retweets.to_string(),
            r.self_drafted.to_string(),
            r.tokens.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn parse_signals_csv(text: &str) -> Result<BTreeMap<String, UserSignals>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("signals.csv row {}: {e}", n + 2)))?;
        let bad = || Error::Data(format!("signals.csv row {}: malformed", n + 2));
        let f = |i: usize| rec.get(i).ok_or_else(bad)?.parse::<f64>().map_err(|_| bad());
        let u = |i: usize| rec.get(i).ok_or_else(bad)?.parse::<u64>().map_err(|_| bad());
        let row = UserSignals {
            user_id: rec.get(0).ok_or_else(bad)?.to_string(),
            signals: SignalVector {
                qc_tweets: f(1)?,
                qc_profile: f(3)?,
                c_retweets: f(4)?,
                c_lexical: f(5)?,
            },
            qc_tweets_self_drafted: f(2)?,
            total_tweets: u(6)?,
            retweets: u(7)?,
            self_drafted: u(8)?,
            tokens: u(9)?,
        };
        out.insert(row.user_id.clone(), row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PeriodCounts, WeekCounts};
    use crate::lexicon::{build_lexicon, weighted_log_odds, CorpusCounts, RankBy};
    use crate::matchers::Stopwords;

    fn agg_with(week: WeekCounts) -> UserAggregate {
        let mut a = UserAggregate::new("u", 1);
        a.weeks[0] = week;
        a
    }

    #[test]
    fn qc_tweets_arithmetic() {
        let a = agg_with(WeekCounts {
            original: 10,
            keyword_hits: 2,
            keyword_hits_self: 2,
            url_hits: 1,
            url_hits_self: 1,
            ..Default::default()
        });
        assert!((qc_tweets(&a, Scope::All).unwrap() - 0.3).abs() < 1e-15);
        let b = agg_with(WeekCounts {
            original: 10,
            keyword_hits: 12,
            keyword_hits_self: 12,
            ..Default::default()
        });
        assert!((qc_tweets(&b, Scope::All).unwrap() - 1.2).abs() < 1e-15);
        let only_rt = agg_with(WeekCounts {
            retweet: 4,
            ..Default::default()
        });
        assert!(qc_tweets(&only_rt, Scope::SelfDrafted).is_err());
        assert!(qc_tweets(&UserAggregate::new("e", 1), Scope::All).is_err());
    }

    #[test]
    fn qc_profile_examples() {
        let k = KeywordList::parse(crate::matchers::DEFAULT_KEYWORDS).unwrap();
        let d = DomainList::parse(crate::matchers::DEFAULT_QANON_DOMAINS).unwrap();
        assert_eq!(qc_profile("wwg1wga", &k, &d), 1.0);
        assert_eq!(qc_profile("", &k, &d), 0.0);
        assert!((qc_profile("I stand with wwg1wga", &k, &d) - 0.35).abs() < 1e-15);
        // URL span: "qanon.pub" is 9 of 14 chars
        assert!((qc_profile("read qanon.pub", &k, &d) - 9.0 / 14.0).abs() < 1e-15);
        let both = KeywordList::new(["qanon", "#qanon"]).unwrap();
        assert_eq!(profile_match_chars("#qanon", &both, &d), (6, 6));
    }

    fn with_targets(targets: &[(&str, u32)]) -> UserAggregate {
        let mut a = UserAggregate::new("u", 1);
        for (t, c) in targets {
            a.retweet_targets.insert(t.to_string(), PeriodCounts { pre: *c, post: 0 });
            a.weeks[0].retweet += c;
        }
        a
    }

    #[test]
    fn c_retweets_cases() {
        let a = with_targets(&[("s1", 2), ("s2", 1), ("x", 7)]);
        let seeds: BTreeSet<String> = ["s1", "s2"].map(String::from).into();
        assert!((c_retweets(&a, &seeds).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(c_retweets(&a, &BTreeSet::new()).unwrap(), 0.0);
        let all: BTreeSet<String> = ["s1", "s2", "x"].map(String::from).into();
        assert_eq!(c_retweets(&a, &all).unwrap(), 1.0);
        assert!(c_retweets(&UserAggregate::new("e", 1), &seeds).is_err());
    }

    fn lexicon_of(tokens: &[&str]) -> Lexicon {
        let seed = CorpusCounts::from_counts(tokens.iter().map(|t| (*t, 100)));
        let mut bg: Vec<(String, u64)> = tokens.iter().map(|t| (t.to_string(), 1)).collect();
        bg.extend((0..400).map(|i| (format!("filler{i}"), 50)));
        let e = weighted_log_odds(&seed, &CorpusCounts::from_counts(bg), 0.01).unwrap();
        let frac = tokens.len() as f64 / e.len() as f64;
        build_lexicon(e, frac, RankBy::Z, &Stopwords::default()).unwrap()
    }

    #[test]
    fn c_lexical_counts_repeats() {
        let lex = lexicon_of(&["god", "wins"]);
        let mut a = UserAggregate::new("u", 1);
        for t in ["god", "wins", "hello"] {
            a.tokens.insert(t.into(), 1);
        }
        a.token_total = 3;
        assert!((c_lexical(&a, &lex).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        a.tokens.insert("god".into(), 4);
        a.token_total = 6;
        assert!((c_lexical(&a, &lex).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let mut none = UserAggregate::new("n", 1);
        none.tokens.insert("hello".into(), 2);
        none.token_total = 2;
        assert_eq!(c_lexical(&none, &lex).unwrap(), 0.0);
        assert!(c_lexical(&UserAggregate::new("e", 1), &lex).is_err());
    }

    #[test]
    fn feature_matrix_inclusion() {
        let lex = lexicon_of(&["god"]);
        let k = KeywordList::default();
        let d = DomainList::default();
        let mut both = with_targets(&[("s", 1)]);
        both.user_id = "both".into();
        both.weeks[0].original = 1;
        let mut rt_only = with_targets(&[("s", 3)]);
        rt_only.user_id = "rt_only".into();
        let mut self_only = UserAggregate::new("self_only", 1);
        self_only.weeks[0].original = 5;
        let users = [both, rt_only, self_only];
        let fm = feature_matrix(&users, &BTreeSet::new(), &lex, &k, &d);
        assert_eq!(fm.keys().collect::<Vec<_>>(), ["both"]);
        let row = &fm["both"];
        assert!(row.signals.is_valid());
        assert_eq!(row.signals.c_lexical, 0.0);
        assert_eq!(row.signals.qc_profile, 0.0);
    }

    #[test]
    fn csv_roundtrip() {
        let mut rows = BTreeMap::new();
        rows.insert(
            "a,b".to_string(),
            UserSignals {
                user_id: "a,b".into(),
                signals: SignalVector::from_array([1.25, 0.1, 0.3, 1.0 / 3.0]),
                qc_tweets_self_drafted: 0.7,
                total_tweets: 4,
                retweets: 2,
                self_drafted: 2,
                tokens: 9,
            },
        );
        assert_eq!(parse_signals_csv(&signals_csv(&rows)).unwrap(), rows);
    }
}
