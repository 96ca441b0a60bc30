//! Tweet stream ingestion and per-user aggregation.
//!
//! Records are parsed and matched in parallel chunks, then folded into
//! [`UserAggregate`]s in input order. Aggregates form a commutative monoid
//! under [`UserAggregate::merge`], so any partition of a duplicate-free stream
//! aggregates to the same result.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matchers::{keyword_matches_lower, Matchers};

const SECS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TweetKind {
    Original,
    Reply,
    Quote,
    Retweet,
}

impl TweetKind {
    pub const ALL: [TweetKind; 4] = [TweetKind::Original, TweetKind::Reply, TweetKind::Quote, TweetKind::Retweet];

    pub fn is_self_drafted(self) -> bool {
        self != TweetKind::Retweet
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "original" => Some(TweetKind::Original),
            "reply" => Some(TweetKind::Reply),
            "quote" => Some(TweetKind::Quote),
            "retweet" => Some(TweetKind::Retweet),
            _ => None,
        }
    }
}

/// Epoch seconds, serialized as an RFC 3339 UTC string. Integers are also
/// accepted on input.
pub mod timestamp {
    use super::*;

    pub fn serialize<S: Serializer>(ts: &i64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_ts(*ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<i64, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        parse_ts(&v).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {v}")))
    }
}

pub fn format_ts(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn parse_ts(v: &serde_json::Value) -> Option<i64> {
    match v {
        serde_json::Value::Number(n) => n.as_i64(),
        serde_json::Value::String(s) => DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp()),
        _ => None,
    }
}

/// One tweet event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    #[serde(with = "timestamp")]
    pub timestamp: i64,
    pub kind: TweetKind,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub urls: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweeted_user_id: Option<String>,
    #[serde(default)]
    pub profile_description: String,
}

/// Reasons a record is dropped during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    InvalidJson,
    MissingField,
    UnknownKind,
    BadTimestamp,
    MissingRetweetedUser,
    OutOfWindow,
    DuplicateTweetId,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::InvalidJson => "invalid_json",
            DropReason::MissingField => "missing_field",
            DropReason::UnknownKind => "unknown_kind",
            DropReason::BadTimestamp => "bad_timestamp",
            DropReason::MissingRetweetedUser => "missing_retweeted_user",
            DropReason::OutOfWindow => "out_of_window",
            DropReason::DuplicateTweetId => "duplicate_tweet_id",
        }
    }
}

/// Parses one JSON line. Field-level problems map to a [`DropReason`]
/// rather than a generic JSON error.
pub fn parse_record(line: &str) -> std::result::Result<TweetRecord, DropReason> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|_| DropReason::InvalidJson)?;
    let obj = v.as_object().ok_or(DropReason::InvalidJson)?;
    let str_field = |name: &str| -> std::result::Result<String, DropReason> {
        match obj.get(name) {
            Some(serde_json::Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
            _ => Err(DropReason::MissingField),
        }
    };
    let tweet_id = str_field("tweet_id")?;
    let user_id = str_field("user_id")?;
    let kind = match obj.get("kind") {
        Some(serde_json::Value::String(s)) => TweetKind::parse(s).ok_or(DropReason::UnknownKind)?,
        None => return Err(DropReason::MissingField),
        _ => return Err(DropReason::UnknownKind),
    };
    let timestamp = parse_ts(obj.get("timestamp").ok_or(DropReason::MissingField)?).ok_or(DropReason::BadTimestamp)?;
    let text = match obj.get("text") {
        None | Some(serde_json::Value::Null) => String::new(),
        Some(serde_json::Value::String(s)) => s.clone(),
        _ => return Err(DropReason::InvalidJson),
    };
    let urls = match obj.get("urls") {
        None | Some(serde_json::Value::Null) => Vec::new(),
        Some(serde_json::Value::Array(a)) => a
            .iter()
            .map(|u| u.as_str().map(str::to_string).ok_or(DropReason::InvalidJson))
            .collect::<std::result::Result<_, _>>()?,
        _ => return Err(DropReason::InvalidJson),
    };
    let retweeted_user_id = match obj.get("retweeted_user_id") {
        Some(serde_json::Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(serde_json::Value::Number(n)) => Some(n.to_string()),
        _ => None,
    };
    if kind == TweetKind::Retweet && retweeted_user_id.is_none() {
        return Err(DropReason::MissingRetweetedUser);
    }
    let profile_description = obj
        .get("profile_description")
        .and_then(|p| p.as_str())
        .unwrap_or_default()
        .to_string();
    Ok(TweetRecord {
        tweet_id,
        user_id,
        timestamp,
        kind,
        text,
        urls,
        retweeted_user_id,
        profile_description,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Pre,
    Post,
}

/// Observation window split into UTC weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisWindow {
    pub start: NaiveDate,
    pub n_weeks: u32,
    pub intervention_date: NaiveDate,
    pub seed_weeks: u32,
}

impl AnalysisWindow {
    pub fn new(start: NaiveDate, n_weeks: u32, intervention_date: NaiveDate, seed_weeks: u32) -> Result<Self> {
        let w = Self {
            start,
            n_weeks,
            intervention_date,
            seed_weeks,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_weeks == 0 {
            return Err(Error::Param("n_weeks must be positive".into()));
        }
        if self.seed_weeks == 0 || self.seed_weeks > self.n_weeks {
            return Err(Error::Param(format!(
                "seed_weeks must be in [1, {}], got {}",
                self.n_weeks, self.seed_weeks
            )));
        }
        let end = self.start + chrono::Days::new(7 * self.n_weeks as u64);
        if self.intervention_date < self.start || self.intervention_date >= end {
            return Err(Error::Param(format!(
                "intervention date {} outside window [{}, {})",
                self.intervention_date, self.start, end
            )));
        }
        Ok(())
    }

    pub fn start_ts(&self) -> i64 {
        date_ts(self.start)
    }

    pub fn end_ts(&self) -> i64 {
        self.start_ts() + 7 * SECS_PER_DAY * self.n_weeks as i64
    }

    pub fn intervention_ts(&self) -> i64 {
        date_ts(self.intervention_date)
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start_ts() && ts < self.end_ts()
    }

    /// 0-based week index of an in-window timestamp.
    pub fn week_of(&self, ts: i64) -> Result<usize> {
        if !self.contains(ts) {
            return Err(Error::OutOfWindow(ts));
        }
        Ok(((ts - self.start_ts()).div_euclid(7 * SECS_PER_DAY)) as usize)
    }

    pub fn period_of(&self, ts: i64) -> Period {
        if ts < self.intervention_ts() {
            Period::Pre
        } else {
            Period::Post
        }
    }
}

pub fn date_ts(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()
}

/// UTC day number (days since the Unix epoch).
pub fn day_of(ts: i64) -> i32 {
    ts.div_euclid(SECS_PER_DAY) as i32
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekCounts {
    pub original: u32,
    pub reply: u32,
    pub quote: u32,
    pub retweet: u32,
    pub keyword_hits: u32,
    pub keyword_hits_self: u32,
    pub url_hits: u32,
    pub url_hits_self: u32,
}

impl WeekCounts {
    pub fn tweets(&self) -> u32 {
        self.original + self.reply + self.quote + self.retweet
    }

    /// Keyword plus QAnon-URL hits over all kinds.
    pub fn hits(&self) -> u32 {
        self.keyword_hits + self.url_hits
    }

    fn kind_mut(&mut self, kind: TweetKind) -> &mut u32 {
        match kind {
            TweetKind::Original => &mut self.original,
            TweetKind::Reply => &mut self.reply,
            TweetKind::Quote => &mut self.quote,
            TweetKind::Retweet => &mut self.retweet,
        }
    }

    pub fn kind(&self, kind: TweetKind) -> u32 {
        match kind {
            TweetKind::Original => self.original,
            TweetKind::Reply => self.reply,
            TweetKind::Quote => self.quote,
            TweetKind::Retweet => self.retweet,
        }
    }

    pub fn add(&mut self, o: &WeekCounts) {
        self.original += o.original;
        self.reply += o.reply;
        self.quote += o.quote;
        self.retweet += o.retweet;
        self.keyword_hits += o.keyword_hits;
        self.keyword_hits_self += o.keyword_hits_self;
        self.url_hits += o.url_hits;
        self.url_hits_self += o.url_hits_self;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCounts {
    pub pre: u32,
    pub post: u32,
}

impl PeriodCounts {
    pub fn total(&self) -> u32 {
        self.pre + self.post
    }

    pub fn get(&self, p: Period) -> u32 {
        match p {
            Period::Pre => self.pre,
            Period::Post => self.post,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSeen {
    pub count: u32,
    pub first_seen: i64,
}

/// Per-user rollup of everything the signals and analyses read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAggregate {
    pub user_id: String,
    pub weeks: Vec<WeekCounts>,
    /// Token multiset of self-drafted tweets.
    pub tokens: BTreeMap<String, u32>,
    pub token_total: u64,
    pub retweet_targets: BTreeMap<String, PeriodCounts>,
    pub profiles: BTreeMap<String, ProfileSeen>,
    pub active_days: BTreeSet<i32>,
    pub qanon_days: BTreeSet<i32>,
    pub keywords_used: BTreeSet<String>,
    pub reliable_urls: u32,
    pub unreliable_urls: u32,
    pub left_links: u32,
    pub right_links: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    SelfDrafted,
}

impl UserAggregate {
    pub fn new(user_id: impl Into<String>, n_weeks: usize) -> Self {
        Self {
            user_id: user_id.into(),
            weeks: vec![WeekCounts::default(); n_weeks],
            tokens: BTreeMap::new(),
            token_total: 0,
            retweet_targets: BTreeMap::new(),
            profiles: BTreeMap::new(),
            active_days: BTreeSet::new(),
            qanon_days: BTreeSet::new(),
            keywords_used: BTreeSet::new(),
            reliable_urls: 0,
            unreliable_urls: 0,
            left_links: 0,
            right_links: 0,
        }
    }

    pub fn totals(&self) -> WeekCounts {
        let mut t = WeekCounts::default();
        for w in &self.weeks {
            t.add(w);
        }
        t
    }

    pub fn total_tweets(&self) -> u64 {
        self.weeks.iter().map(|w| w.tweets() as u64).sum()
    }

    pub fn retweets(&self) -> u64 {
        self.weeks.iter().map(|w| w.retweet as u64).sum()
    }

    pub fn self_drafted(&self) -> u64 {
        self.total_tweets() - self.retweets()
    }

    pub fn tweets(&self, scope: Scope) -> u64 {
        match scope {
            Scope::All => self.total_tweets(),
            Scope::SelfDrafted => self.self_drafted(),
        }
    }

    /// Keyword plus QAnon-URL hits within a scope.
    pub fn hits(&self, scope: Scope) -> u64 {
        self.weeks
            .iter()
            .map(|w| match scope {
                Scope::All => (w.keyword_hits + w.url_hits) as u64,
                Scope::SelfDrafted => (w.keyword_hits_self + w.url_hits_self) as u64,
            })
            .sum()
    }

    /// Retweets counted towards the community signal. Equals
    /// [`retweets`](Self::retweets) unless quotes were ingested as retweets.
    pub fn retweet_target_total(&self) -> u64 {
        self.retweet_targets.values().map(|c| c.total() as u64).sum()
    }

    pub fn merge(&mut self, other: &UserAggregate) {
        debug_assert_eq!(self.user_id, other.user_id);
        if self.weeks.len() < other.weeks.len() {
            self.weeks.resize(other.weeks.len(), WeekCounts::default());
        }
        for (a, b) in self.weeks.iter_mut().zip(&other.weeks) {
            a.add(b);
        }
        for (t, c) in &other.tokens {
            *self.tokens.entry(t.clone()).or_insert(0) += c;
        }
        self.token_total += other.token_total;
        for (t, c) in &other.retweet_targets {
            let e = self.retweet_targets.entry(t.clone()).or_default();
            e.pre += c.pre;
            e.post += c.post;
        }
        for (p, s) in &other.profiles {
            self.profiles
                .entry(p.clone())
                .and_modify(|e| {
                    e.count += s.count;
                    e.first_seen = e.first_seen.min(s.first_seen);
                })
                .or_insert(*s);
        }
        self.active_days.extend(other.active_days.iter().copied());
        self.qanon_days.extend(other.qanon_days.iter().copied());
        self.keywords_used.extend(other.keywords_used.iter().cloned());
        self.reliable_urls += other.reliable_urls;
        self.unreliable_urls += other.unreliable_urls;
        self.left_links += other.left_links;
        self.right_links += other.right_links;
    }

    fn add_facts(&mut self, f: &RecordFacts, opts: &IngestOptions) {
        let w = &mut self.weeks[f.week];
        *w.kind_mut(f.kind) += 1;
        let kw = f.keywords.len() as u32;
        w.keyword_hits += kw;
        w.url_hits += f.qanon_urls;
        if f.kind.is_self_drafted() {
            w.keyword_hits_self += kw;
            w.url_hits_self += f.qanon_urls;
            for t in &f.tokens {
                match self.tokens.get_mut(t.as_str()) {
                    Some(c) => *c += 1,
                    None => {
                        self.tokens.insert(t.clone(), 1);
                    }
                }
            }
            self.token_total += f.tokens.len() as u64;
        }
        let counts_as_retweet = f.kind == TweetKind::Retweet || (opts.quotes_as_retweets && f.kind == TweetKind::Quote);
        if counts_as_retweet {
            if let Some(target) = &f.target {
                let e = self.retweet_targets.entry(target.clone()).or_default();
                match f.period {
                    Period::Pre => e.pre += 1,
                    Period::Post => e.post += 1,
                }
            }
        }
        self.profiles
            .entry(f.profile.clone())
            .and_modify(|e| {
                e.count += 1;
                e.first_seen = e.first_seen.min(f.timestamp);
            })
            .or_insert(ProfileSeen {
                count: 1,
                first_seen: f.timestamp,
            });
        self.active_days.insert(f.day);
        if kw + f.qanon_urls > 0 {
            self.qanon_days.insert(f.day);
        }
        self.keywords_used.extend(f.keywords.iter().cloned());
        self.reliable_urls += f.reliable;
        self.unreliable_urls += f.unreliable;
        self.left_links += f.left;
        self.right_links += f.right;
    }
}

/// The profile description seen most often; ties go to the earliest first
/// sighting, then to the lexicographically smaller text.
pub fn canonical_profile(agg: &UserAggregate) -> &str {
    agg.profiles
        .iter()
        .max_by(|a, b| {
            a.1.count
                .cmp(&b.1.count)
                .then(b.1.first_seen.cmp(&a.1.first_seen))
                .then(b.0.cmp(a.0))
        })
        .map(|(p, _)| p.as_str())
        .unwrap_or("")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Count quote tweets towards retweet-target tallies as well.
    pub quotes_as_retweets: bool,
}

/// Everything derived from one record before it touches an aggregate.
#[derive(Debug, Clone)]
struct RecordFacts {
    tweet_id: String,
    user_id: String,
    timestamp: i64,
    week: usize,
    day: i32,
    period: Period,
    kind: TweetKind,
    keywords: Vec<String>,
    qanon_urls: u32,
    unparsable_urls: u32,
    tokens: Vec<String>,
    target: Option<String>,
    profile: String,
    reliable: u32,
    unreliable: u32,
    left: u32,
    right: u32,
}

fn analyze_record(rec: TweetRecord, window: &AnalysisWindow, m: &Matchers) -> std::result::Result<RecordFacts, DropReason> {
    let week = window.week_of(rec.timestamp).map_err(|_| DropReason::OutOfWindow)?;
    let lower = rec.text.to_lowercase();
    let keywords = keyword_matches_lower(&lower, &m.keywords)
        .into_iter()
        .map(|k| m.keywords.entries()[k.entry].clone())
        .collect();
    let mut facts = RecordFacts {
        week,
        day: day_of(rec.timestamp),
        period: window.period_of(rec.timestamp),
        kind: rec.kind,
        keywords,
        qanon_urls: 0,
        unparsable_urls: 0,
        tokens: if rec.kind.is_self_drafted() {
            crate::matchers::tokenize(&rec.text).tokens
        } else {
            Vec::new()
        },
        target: match rec.kind {
            TweetKind::Retweet | TweetKind::Quote => rec.retweeted_user_id,
            _ => None,
        },
        profile: rec.profile_description,
        reliable: 0,
        unreliable: 0,
        left: 0,
        right: 0,
        tweet_id: rec.tweet_id,
        user_id: rec.user_id,
        timestamp: rec.timestamp,
    };
    for u in &rec.urls {
        match crate::matchers::host_of(u) {
            None => facts.unparsable_urls += 1,
            Some(h) => {
                facts.qanon_urls += m.qanon_domains.contains_host(&h) as u32;
                facts.reliable += m.reliable.contains_host(&h) as u32;
                facts.unreliable += m.unreliable.contains_host(&h) as u32;
                facts.left += m.left_outlets.contains_host(&h) as u32;
                facts.right += m.right_outlets.contains_host(&h) as u32;
            }
        }
    }
    Ok(facts)
}

/// Ingestion bookkeeping, serialized as the dropped-record report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_read: u64,
    pub accepted: u64,
    pub dropped: BTreeMap<String, u64>,
    pub unparsable_urls: u64,
    pub kind_totals: BTreeMap<String, u64>,
}

impl IngestReport {
    fn drop(&mut self, reason: DropReason) {
        *self.dropped.entry(reason.as_str().to_string()).or_insert(0) += 1;
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }
}

/// Incremental aggregator. Feed records (or raw lines) in stream order.
pub struct Aggregator<'a> {
    window: AnalysisWindow,
    matchers: &'a Matchers,
    opts: IngestOptions,
    seen: HashSet<String>,
    users: BTreeMap<String, UserAggregate>,
    report: IngestReport,
}

/// Result of ingestion: aggregates keyed by user id plus the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingested {
    pub users: BTreeMap<String, UserAggregate>,
    pub report: IngestReport,
}

const CHUNK: usize = 8192;

impl<'a> Aggregator<'a> {
    pub fn new(window: AnalysisWindow, matchers: &'a Matchers, opts: IngestOptions) -> Self {
        Self {
            window,
            matchers,
            opts,
            seen: HashSet::new(),
            users: BTreeMap::new(),
            report: IngestReport::default(),
        }
    }

    fn absorb(&mut self, item: std::result::Result<RecordFacts, DropReason>) {
        self.report.records_read += 1;
        let facts = match item {
            Ok(f) => f,
            Err(r) => return self.report.drop(r),
        };
        if !self.seen.insert(facts.tweet_id.clone()) {
            return self.report.drop(DropReason::DuplicateTweetId);
        }
        self.report.accepted += 1;
        self.report.unparsable_urls += facts.unparsable_urls as u64;
        *self
            .report
            .kind_totals
            .entry(format!("{:?}", facts.kind).to_lowercase())
            .or_insert(0) += 1;
        let n_weeks = self.window.n_weeks as usize;
        let agg = match self.users.get_mut(&facts.user_id) {
            Some(a) => a,
            None => self
                .users
                .entry(facts.user_id.clone())
                .or_insert_with(|| UserAggregate::new(facts.user_id.clone(), n_weeks)),
        };
        agg.add_facts(&facts, &self.opts);
    }

    pub fn push_records<I: IntoIterator<Item = TweetRecord>>(&mut self, records: I) {
        let mut buf = Vec::with_capacity(CHUNK);
        for r in records {
            buf.push(r);
            if buf.len() == CHUNK {
                self.flush_records(std::mem::take(&mut buf));
            }
        }
        self.flush_records(buf);
    }

    fn flush_records(&mut self, buf: Vec<TweetRecord>) {
        let (w, m) = (self.window, self.matchers);
        let facts: Vec<_> = buf.into_par_iter().map(|r| analyze_record(r, &w, m)).collect();
        for f in facts {
            self.absorb(f);
        }
    }

    fn flush_lines(&mut self, lines: &[String]) {
        let (w, m) = (self.window, self.matchers);
        let facts: Vec<_> = lines
            .par_iter()
            .map(|l| parse_record(l).and_then(|r| analyze_record(r, &w, m)))
            .collect();
        for f in facts {
            self.absorb(f);
        }
    }

    /// Reads JSON lines. Blank lines are ignored; unreadable bytes abort.
    pub fn push_reader<R: BufRead>(&mut self, reader: R) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(CHUNK);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            buf.push(line);
            if buf.len() == CHUNK {
                self.flush_lines(&buf);
                buf.clear();
            }
        }
        self.flush_lines(&buf);
        Ok(())
    }

    pub fn finish(self) -> Ingested {
        Ingested {
            users: self.users,
            report: self.report,
        }
    }
}

/// Aggregates an in-memory record stream.
pub fn ingest<I: IntoIterator<Item = TweetRecord>>(
    records: I,
    window: &AnalysisWindow,
    matchers: &Matchers,
    opts: IngestOptions,
) -> Ingested {
    let mut agg = Aggregator::new(*window, matchers, opts);
    agg.push_records(records);
    agg.finish()
}

/// Opens a JSON-lines file, transparently decompressing gzip input.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = f.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::with_capacity(1 << 20, MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 20, f)))
    }
}

pub fn ingest_paths<P: AsRef<Path>>(
    paths: &[P],
    window: &AnalysisWindow,
    matchers: &Matchers,
    opts: IngestOptions,
) -> Result<Ingested> {
    let mut agg = Aggregator::new(*window, matchers, opts);
    for p in paths {
        let p = p.as_ref();
        let reader = open_input(p)?;
        agg.push_reader(reader).map_err(|e| Error::io(p, e))?;
    }
    Ok(agg.finish())
}

impl Ingested {
    /// Merges a disjoint shard. Tweet-id deduplication does not cross shards.
    pub fn merge(&mut self, other: Ingested) {
        for (id, agg) in other.users {
            match self.users.get_mut(&id) {
                Some(a) => a.merge(&agg),
                None => {
                    self.users.insert(id, agg);
                }
            }
        }
        let r = &mut self.report;
        r.records_read += other.report.records_read;
        r.accepted += other.report.accepted;
        r.unparsable_urls += other.report.unparsable_urls;
        for (k, v) in other.report.dropped {
            *r.dropped.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.report.kind_totals {
            *r.kind_totals.entry(k).or_insert(0) += v;
        }
    }
}

/// Users with at least `min_tweets` tweets in the window.
pub fn filter_active(users: &BTreeMap<String, UserAggregate>, min_tweets: u64) -> Result<BTreeSet<String>> {
    if min_tweets == 0 {
        return Err(Error::Param("min_tweets must be >= 1".into()));
    }
    Ok(users
        .iter()
        .filter(|(_, a)| a.total_tweets() >= min_tweets)
        .map(|(id, _)| id.clone())
        .collect())
}
