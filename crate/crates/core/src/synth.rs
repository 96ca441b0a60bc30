//! Synthetic tweet corpora with planted user populations.
//!
//! Each population fixes tweet volume, tweet-kind mix, keyword and URL rates,
//! planted vocabulary, profile templates, retweet-target preferences and
//! outlet mix. Generation is a pure function of the spec and the seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::analysis::AccountStatus;
use crate::clustering::derive_seed;
use crate::corpus::{date_ts, AnalysisWindow, TweetKind, TweetRecord};
use crate::error::{Error, Result};
use crate::matchers::{Stopwords, DEFAULT_KEYWORDS, DEFAULT_QANON_DOMAINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub name: String,
    pub users: usize,
    /// Every active week has at least this many tweets...
    pub weekly_tweets_min: u32,
    /// ...plus a Poisson number with this mean.
    pub weekly_tweets_extra: f64,
    /// Active weeks `[from, to)`; all weeks when absent.
    #[serde(default)]
    pub active_weeks: Option<(u32, u32)>,
    pub retweet_share: f64,
    pub reply_share: f64,
    pub quote_share: f64,
    /// Mean keyword occurrences per tweet.
    pub keyword_rate: f64,
    /// Mean QAnon-domain URLs per tweet.
    pub qanon_url_rate: f64,
    /// Share of text words drawn from the planted vocabulary.
    #[serde(default)]
    pub planted_share: f64,
    /// Planted-token index range `[from, to)` this population draws from.
    #[serde(default)]
    pub planted_range: (usize, usize),
    pub profiles: Vec<String>,
    /// Population name to relative weight.
    #[serde(default)]
    pub retweet_targets: BTreeMap<String, f64>,
    #[serde(default)]
    pub left_link_rate: f64,
    #[serde(default)]
    pub right_link_rate: f64,
    #[serde(default)]
    pub reliable_url_rate: f64,
    #[serde(default)]
    pub unreliable_url_rate: f64,
    #[serde(default)]
    pub suspended: f64,
    #[serde(default)]
    pub deleted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub start: NaiveDate,
    pub n_weeks: u32,
    pub intervention_date: NaiveDate,
    pub seed_weeks: u32,
    pub vocabulary: usize,
    pub zipf_exponent: f64,
    pub planted_tokens: usize,
    pub words_per_tweet: u32,
    pub populations: Vec<PopulationSpec>,
}

pub const LEFT_OUTLETS: [&str; 2] = ["leftpost.example", "bluewire.example"];
pub const RIGHT_OUTLETS: [&str; 2] = ["redherald.example", "patriotdaily.example"];
pub const RELIABLE: [&str; 3] = ["leftpost.example", "redherald.example", "newsdesk.example"];
pub const UNRELIABLE: [&str; 2] = ["patriotdaily.example", "truthbeacon.example"];

/// Outlet bias CSV matching the generator's outlet domains.
pub fn bias_csv() -> String {
    let mut s = String::from("domain,leaning\n");
    for d in LEFT_OUTLETS {
        s.push_str(&format!("{d},left\n"));
    }
    for d in RIGHT_OUTLETS {
        s.push_str(&format!("{d},right\n"));
    }
    s
}

fn lines(items: &[&str]) -> String {
    items.iter().map(|d| format!("{d}\n")).collect()
}

fn check_rate(pop: &str, name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Param(format!("population {pop}: {name} must be a finite non-negative number, got {v}")));
    }
    Ok(())
}

fn check_share(pop: &str, name: &str, v: f64) -> Result<()> {
    check_rate(pop, name, v)?;
    if v > 1.0 {
        return Err(Error::Param(format!("population {pop}: {name} must be <= 1, got {v}")));
    }
    Ok(())
}

impl SynthSpec {
    pub fn window(&self) -> Result<AnalysisWindow> {
        AnalysisWindow::new(self.start, self.n_weeks, self.intervention_date, self.seed_weeks)
    }

    pub fn total_users(&self) -> usize {
        self.populations.iter().map(|p| p.users).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.window()?;
        if self.vocabulary == 0 || self.words_per_tweet == 0 {
            return Err(Error::Param("vocabulary and words_per_tweet must be positive".into()));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::Param("zipf_exponent must be non-negative".into()));
        }
        let names: BTreeMap<&str, usize> = self.populations.iter().map(|p| (p.name.as_str(), p.users)).collect();
        if names.len() != self.populations.len() {
            return Err(Error::Param("population names must be unique".into()));
        }
        for p in &self.populations {
            let n = p.name.as_str();
            check_rate(n, "weekly_tweets_extra", p.weekly_tweets_extra)?;
            check_rate(n, "keyword_rate", p.keyword_rate)?;
            check_rate(n, "qanon_url_rate", p.qanon_url_rate)?;
            check_rate(n, "left_link_rate", p.left_link_rate)?;
            check_rate(n, "right_link_rate", p.right_link_rate)?;
            check_rate(n, "reliable_url_rate", p.reliable_url_rate)?;
            check_rate(n, "unreliable_url_rate", p.unreliable_url_rate)?;
            for (name, v) in [
                ("retweet_share", p.retweet_share),
                ("reply_share", p.reply_share),
                ("quote_share", p.quote_share),
                ("planted_share", p.planted_share),
                ("suspended", p.suspended),
                ("deleted", p.deleted),
            ] {
                check_share(n, name, v)?;
            }
            if p.retweet_share + p.reply_share + p.quote_share > 1.0 + 1e-12 {
                return Err(Error::Param(format!("population {n}: kind shares exceed 1")));
            }
            if p.suspended + p.deleted > 1.0 + 1e-12 {
                return Err(Error::Param(format!("population {n}: status shares exceed 1")));
            }
            if let Some((a, b)) = p.active_weeks {
                if a >= b || b > self.n_weeks {
                    return Err(Error::Param(format!("population {n}: active_weeks must satisfy from < to <= n_weeks")));
                }
            }
            let (a, b) = p.planted_range;
            if p.planted_share > 0.0 && (a >= b || b > self.planted_tokens) {
                return Err(Error::Param(format!("population {n}: planted_range outside the planted vocabulary")));
            }
            if p.profiles.is_empty() {
                return Err(Error::Param(format!("population {n}: needs at least one profile template")));
            }
            for (t, w) in &p.retweet_targets {
                check_rate(n, "retweet target weight", *w)?;
                match names.get(t.as_str()) {
                    None => return Err(Error::Param(format!("population {n}: unknown retweet target {t}"))),
                    Some(0) if *w > 0.0 => {
                        return Err(Error::Param(format!("population {n}: retweet target {t} has no users")))
                    }
                    _ => {}
                }
            }
            let needs_targets = p.retweet_share + p.quote_share > 0.0;
            if needs_targets && p.retweet_targets.values().all(|w| *w <= 0.0) {
                return Err(Error::Param(format!("population {n}: retweets need at least one target population")));
            }
        }
        Ok(())
    }

    /// Six populations with distinct signal profiles: neutral, amplifiers
    /// (retweet promoters), self-declared (keyword profiles), hyper-active
    /// (keyword-heavy, active only after the seed weeks), promoters
    /// (persistent, right-leaning, planted vocabulary) and a lexical group
    /// sharing part of the promoter vocabulary.
    pub fn archetypes(users_per_population: usize) -> Self {
        let pop = |name: &str| PopulationSpec {
            name: name.into(),
            users: users_per_population,
            weekly_tweets_min: 1,
            weekly_tweets_extra: 4.0,
            active_weeks: None,
            retweet_share: 0.5,
            reply_share: 0.15,
            quote_share: 0.05,
            keyword_rate: 0.0,
            qanon_url_rate: 0.0,
            planted_share: 0.0,
            planted_range: (0, 0),
            profiles: vec!["coffee, dogs and long walks".into(), "proud dad | runner".into(), "".into(), "news junkie".into()],
            retweet_targets: BTreeMap::from([("neutral".into(), 1.0)]),
            left_link_rate: 0.0,
            right_link_rate: 0.0,
            reliable_url_rate: 0.0,
            unreliable_url_rate: 0.0,
            suspended: 0.01,
            deleted: 0.01,
        };
        let neutral = PopulationSpec {
            left_link_rate: 0.2,
            reliable_url_rate: 0.2,
            ..pop("neutral")
        };
        let amplifiers = PopulationSpec {
            weekly_tweets_min: 2,
            weekly_tweets_extra: 5.0,
            retweet_share: 0.8,
            reply_share: 0.1,
            quote_share: 0.0,
            keyword_rate: 0.1,
            qanon_url_rate: 0.02,
            profiles: vec!["patriot. god. family.".into(), "maga".into(), "".into()],
            retweet_targets: BTreeMap::from([("promoters".into(), 0.85), ("neutral".into(), 0.15)]),
            right_link_rate: 0.2,
            unreliable_url_rate: 0.2,
            suspended: 0.2,
            deleted: 0.05,
            ..pop("amplifiers")
        };
        let self_declared = PopulationSpec {
            keyword_rate: 0.15,
            profiles: vec![
                "wwg1wga #qanon deepstate".into(),
                "#qanon wwg1wga thegreatawakening".into(),
                "#wwg1wga #savethechildren q".into(),
                "#taketheoath wwg1wga #qarmy".into(),
            ],
            retweet_targets: BTreeMap::from([("promoters".into(), 0.3), ("neutral".into(), 0.7)]),
            right_link_rate: 0.1,
            unreliable_url_rate: 0.1,
            suspended: 0.15,
            deleted: 0.05,
            ..pop("self_declared")
        };
        let hyper_active = PopulationSpec {
            weekly_tweets_min: 15,
            weekly_tweets_extra: 10.0,
            active_weeks: Some((5, 11)),
            retweet_share: 0.3,
            keyword_rate: 1.5,
            qanon_url_rate: 0.3,
            planted_share: 0.05,
            planted_range: (30, 60),
            profiles: vec!["patriot".into(), "".into()],
            retweet_targets: BTreeMap::from([("hyper_active".into(), 0.5), ("neutral".into(), 0.5)]),
            right_link_rate: 0.1,
            unreliable_url_rate: 0.3,
            suspended: 0.3,
            deleted: 0.05,
            ..pop("hyper_active")
        };
        let promoters = PopulationSpec {
            weekly_tweets_min: 12,
            weekly_tweets_extra: 8.0,
            retweet_share: 0.35,
            reply_share: 0.1,
            quote_share: 0.05,
            keyword_rate: 0.8,
            qanon_url_rate: 0.2,
            planted_share: 0.4,
            planted_range: (0, 60),
            profiles: vec!["digital soldier".into(), "trust the plan".into(), "patriot".into()],
            retweet_targets: BTreeMap::from([
                ("promoters".into(), 0.7),
                ("amplifiers".into(), 0.1),
                ("neutral".into(), 0.2),
            ]),
            right_link_rate: 0.3,
            unreliable_url_rate: 0.3,
            suspended: 0.4,
            deleted: 0.05,
            ..pop("promoters")
        };
        let lexical = PopulationSpec {
            keyword_rate: 0.05,
            planted_share: 0.85,
            planted_range: (30, 60),
            profiles: vec!["just asking questions".into(), "do your own research".into()],
            retweet_targets: BTreeMap::from([("neutral".into(), 0.6), ("lexical".into(), 0.4)]),
            ..pop("lexical")
        };
        Self {
            start: NaiveDate::from_ymd_opt(2020, 6, 20).expect("valid date"),
            n_weeks: 11,
            intervention_date: NaiveDate::from_ymd_opt(2020, 7, 21).expect("valid date"),
            seed_weeks: 5,
            vocabulary: 12_000,
            zipf_exponent: 1.0,
            planted_tokens: 60,
            words_per_tweet: 8,
            populations: vec![neutral, amplifiers, self_declared, hyper_active, promoters, lexical],
        }
    }

    /// Adds left-leaning critics who mention QAnon keywords every week and
    /// so pass the activity conditions without being promoters.
    pub fn with_critics(mut self, users: usize) -> Self {
        let base = self.populations[0].clone();
        self.populations.push(PopulationSpec {
            name: "critics".into(),
            users,
            weekly_tweets_min: 12,
            weekly_tweets_extra: 4.0,
            keyword_rate: 0.4,
            profiles: vec!["debunking conspiracy theories".into(), "disinfo researcher".into()],
            retweet_targets: BTreeMap::from([("neutral".into(), 1.0)]),
            left_link_rate: 0.5,
            reliable_url_rate: 0.3,
            ..base
        });
        self
    }
}

/// Background vocabulary word `i`: consonant-vowel syllables, base 70.
fn base_word(mut i: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut s = String::new();
    for _ in 0..3 {
        let syl = i % 70;
        i /= 70;
        s.push(C[syl / 5] as char);
        s.push(V[syl % 5] as char);
    }
    s
}

pub fn vocabulary(n: usize) -> Vec<String> {
    let stop = Stopwords::default();
    (0..).map(base_word).filter(|w| !stop.contains(w)).take(n).collect()
}

/// Planted token `i`; odd indices are hashtags.
pub fn planted_token(i: usize) -> String {
    let w = format!("qq{}", base_word(i));
    if i % 2 == 1 {
        format!("#{w}")
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub user_id: String,
    pub population: String,
    pub population_index: usize,
    pub status: AccountStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub populations: Vec<String>,
    pub users: Vec<TruthRow>,
    pub tweets: u64,
}

impl GroundTruth {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("user_id,population,population_index,status\n");
        for r in &self.users {
            let status = serde_json::to_value(r.status).expect("status serializes");
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.user_id,
                r.population,
                r.population_index,
                status.as_str().unwrap_or_default()
            ));
        }
        s
    }

    pub fn status_csv(&self) -> String {
        let mut s = String::from("user_id,status\n");
        for r in &self.users {
            if r.status != AccountStatus::Active {
                let status = serde_json::to_value(r.status).expect("status serializes");
                s.push_str(&format!("{},{}\n", r.user_id, status.as_str().unwrap_or_default()));
            }
        }
        s
    }

    pub fn population_of(&self) -> BTreeMap<&str, usize> {
        self.users.iter().map(|r| (r.user_id.as_str(), r.population_index)).collect()
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("validated rate").sample(rng) as u32
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    words: Vec<String>,
    planted: Vec<String>,
    keywords: Vec<&'static str>,
    qanon_domains: Vec<&'static str>,
    zipf: Zipf<f64>,
    /// First global user index of each population.
    offsets: Vec<usize>,
    target_dists: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>>,
}

fn user_id(i: usize) -> String {
    format!("u{i:07}")
}

impl<'a> Generator<'a> {
    fn new(spec: &'a SynthSpec) -> Self {
        let index: BTreeMap<&str, usize> = spec.populations.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        let mut offsets = Vec::new();
        let mut acc = 0;
        for p in &spec.populations {
            offsets.push(acc);
            acc += p.users;
        }
        let target_dists = spec
            .populations
            .iter()
            .map(|p| {
                let (pops, weights): (Vec<usize>, Vec<f64>) = p
                    .retweet_targets
                    .iter()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(t, w)| (index[t.as_str()], *w))
                    .unzip();
                WeightedIndex::new(&weights).ok().map(|d| (pops, d))
            })
            .collect();
        let entries = |text: &'static str| text.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>();
        Self {
            spec,
            words: vocabulary(spec.vocabulary),
            planted: (0..spec.planted_tokens).map(planted_token).collect(),
            keywords: entries(DEFAULT_KEYWORDS),
            qanon_domains: entries(DEFAULT_QANON_DOMAINS),
            zipf: Zipf::new(spec.vocabulary as f64, spec.zipf_exponent).expect("validated zipf"),
            offsets,
            target_dists,
        }
    }

    fn text(&self, rng: &mut ChaCha8Rng, p: &PopulationSpec) -> String {
        let mut words: Vec<&str> = (0..self.spec.words_per_tweet)
            .map(|_| {
                if p.planted_share > 0.0 && rng.random::<f64>() < p.planted_share {
                    self.planted[rng.random_range(p.planted_range.0..p.planted_range.1)].as_str()
                } else {
                    let r = self.zipf.sample(rng) as usize;
                    self.words[r.clamp(1, self.words.len()) - 1].as_str()
                }
            })
            .collect();
        for _ in 0..poisson(rng, p.keyword_rate) {
            let kw = self.keywords[rng.random_range(0..self.keywords.len())];
            let at = rng.random_range(0..=words.len());
            words.insert(at, kw);
        }
        words.join(" ")
    }

    fn urls(&self, rng: &mut ChaCha8Rng, p: &PopulationSpec) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |rng: &mut ChaCha8Rng, pool: &[&str], mean: f64| {
            for _ in 0..poisson(rng, mean) {
                let d = pool[rng.random_range(0..pool.len())];
                out.push(format!("https://{d}/a/{}", rng.random_range(0..100_000u32)));
            }
        };
        push(rng, &self.qanon_domains, p.qanon_url_rate);
        push(rng, &LEFT_OUTLETS, p.left_link_rate);
        push(rng, &RIGHT_OUTLETS, p.right_link_rate);
        push(rng, &RELIABLE, p.reliable_url_rate);
        push(rng, &UNRELIABLE, p.unreliable_url_rate);
        out
    }

    fn target(&self, rng: &mut ChaCha8Rng, pop: usize, me: usize) -> String {
        let (pops, dist) = self.target_dists[pop].as_ref().expect("validated targets");
        let mut pick = || {
            let tp = pops[dist.sample(rng)];
            self.offsets[tp] + rng.random_range(0..self.spec.populations[tp].users)
        };
        let mut t = pick();
        if t == me {
            t = pick();
        }
        user_id(t)
    }

    fn user<F: FnMut(TweetRecord) -> Result<()>>(
        &self,
        seed: u64,
        pop: usize,
        global: usize,
        next_id: &mut u64,
        sink: &mut F,
    ) -> Result<AccountStatus> {
        let p = &self.spec.populations[pop];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, global as u64));
        let uid = user_id(global);
        let profile = p.profiles[rng.random_range(0..p.profiles.len())].clone();
        let r: f64 = rng.random();
        let status = if r < p.suspended {
            AccountStatus::Suspended
        } else if r < p.suspended + p.deleted {
            AccountStatus::Deleted
        } else {
            AccountStatus::Active
        };
        let start = date_ts(self.spec.start);
        let (from, to) = p.active_weeks.unwrap_or((0, self.spec.n_weeks));
        for week in from..to {
            let n = p.weekly_tweets_min + poisson(&mut rng, p.weekly_tweets_extra);
            for _ in 0..n {
                let u: f64 = rng.random();
                let kind = if u < p.retweet_share {
                    TweetKind::Retweet
                } else if u < p.retweet_share + p.quote_share {
                    TweetKind::Quote
                } else if u < p.retweet_share + p.quote_share + p.reply_share {
                    TweetKind::Reply
                } else {
                    TweetKind::Original
                };
                let timestamp = start + week as i64 * 7 * 86_400 + rng.random_range(0..7 * 86_400);
                let retweeted_user_id = matches!(kind, TweetKind::Retweet | TweetKind::Quote).then(|| self.target(&mut rng, pop, global));
                let text = self.text(&mut rng, p);
                let urls = self.urls(&mut rng, p);
                *next_id += 1;
                sink(TweetRecord {
                    tweet_id: next_id.to_string(),
                    user_id: uid.clone(),
                    timestamp,
                    kind,
                    text,
                    urls,
                    retweeted_user_id,
                    profile_description: profile.clone(),
                })?;
            }
        }
        Ok(status)
    }
}

/// Streams records to `sink` population by population and returns the
/// ground truth.
pub fn generate<F: FnMut(TweetRecord) -> Result<()>>(spec: &SynthSpec, seed: u64, mut sink: F) -> Result<GroundTruth> {
    spec.validate()?;
    let g = Generator::new(spec);
    let mut users = Vec::with_capacity(spec.total_users());
    let mut next_id = 0u64;
    for (pi, p) in spec.populations.iter().enumerate() {
        for j in 0..p.users {
            let global = g.offsets[pi] + j;
            let status = g.user(seed, pi, global, &mut next_id, &mut sink)?;
            users.push(TruthRow {
                user_id: user_id(global),
                population: p.name.clone(),
                population_index: pi,
                status,
            });
        }
    }
    Ok(GroundTruth {
        populations: spec.populations.iter().map(|p| p.name.clone()).collect(),
        users,
        tweets: next_id,
    })
}

pub fn generate_records(spec: &SynthSpec, seed: u64) -> Result<(Vec<TweetRecord>, GroundTruth)> {
    let mut records = Vec::new();
    let truth = generate(spec, seed, |r| {
        records.push(r);
        Ok(())
    })?;
    Ok((records, truth))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub truth: PathBuf,
    pub status: PathBuf,
    pub bias: PathBuf,
    pub reliable: PathBuf,
    pub unreliable: PathBuf,
}

/// Writes the corpus (`tweets.jsonl`), ground truth, account status and the
/// outlet lists the generator uses into `dir`.
pub fn write_corpus(spec: &SynthSpec, seed: u64, dir: &Path) -> Result<(SynthFiles, GroundTruth)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles {
        corpus: dir.join("tweets.jsonl"),
        truth: dir.join("truth.csv"),
        status: dir.join("account_status.csv"),
        bias: dir.join("outlet_bias.csv"),
        reliable: dir.join("reliable_domains.txt"),
        unreliable: dir.join("unreliable_domains.txt"),
    };
    let f = fs::File::create(&files.corpus).map_err(|e| Error::io(&files.corpus, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, f);
    let path = files.corpus.clone();
    let truth = generate(spec, seed, |r| {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))
    })?;
    w.flush().map_err(|e| Error::io(&files.corpus, e))?;
    let write = |p: &Path, text: String| fs::write(p, text).map_err(|e| Error::io(p, e));
    write(&files.truth, truth.to_csv())?;
    write(&files.status, truth.status_csv())?;
    write(&files.bias, bias_csv())?;
    write(&files.reliable, lines(&RELIABLE))?;
    write(&files.unreliable, lines(&UNRELIABLE))?;
    Ok((files, truth))
}
