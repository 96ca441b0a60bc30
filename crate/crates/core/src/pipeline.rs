//! Staged end-to-end runs with cached stage outputs and a run manifest.
//!
//! Stages run in a fixed order. Each one writes its files plus a stamp under
//! `.stages/` holding a fingerprint of its configuration, its upstream
//! fingerprint and the digests of what it wrote. A stage whose stamp matches
//! and whose files are untouched is not re-run; its outputs are read back.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    cluster_summary, interaction_zscores, mean_retweeted_qc, parse_account_status, pearson_matrix, persistence,
    retweet_ratio, unique_keywords, url_credibility, ClusterSummary, InteractionMatrix, SIGNIFICANCE,
};
use crate::clustering::{
    canonical_order, centroid_neighbors, cluster_letter, derive_seed, kmeans_restarts, prepare_points, select_k,
    tsne_embed, ClusterModel, Distance, KMeansParams, KSelectionCurve, TsneParams,
};
use crate::corpus::{
    filter_active, ingest_paths, AnalysisWindow, IngestOptions, IngestReport, Ingested, Period, UserAggregate,
};
use crate::error::{Error, Result};
use crate::figures;
use crate::lexicon::{build_lexicon, split_corpora, weighted_log_odds, Lexicon, RankBy};
use crate::matchers::{
    parse_bias_csv, DomainList, KeywordList, Matchers, Stopwords, DEFAULT_KEYWORDS, DEFAULT_QANON_DOMAINS,
    STOPWORDS_VERSION,
};
use crate::seeds::{
    domain_bias_seeds, infer_leanings, retweet_edges, select_persistent, validate_seed_set, LeaningResult,
    PropagationConfig, SeedConfig, SeedValidation,
};
use crate::signals::{feature_matrix, parse_signals_csv, signals_csv, UserSignals, SIGNAL_NAMES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Filter,
    Seeds,
    Validate,
    Lexicon,
    Signals,
    Cluster,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Seeds,
        Stage::Validate,
        Stage::Lexicon,
        Stage::Signals,
        Stage::Cluster,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Seeds => "seeds",
            Stage::Validate => "validate",
            Stage::Lexicon => "lexicon",
            Stage::Signals => "signals",
            Stage::Cluster => "cluster",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: NaiveDate,
    pub n_weeks: u32,
    pub intervention_date: NaiveDate,
    pub seed_weeks: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2020, 6, 20).expect("valid date"),
            n_weeks: 11,
            intervention_date: NaiveDate::from_ymd_opt(2020, 7, 21).expect("valid date"),
            seed_weeks: 5,
        }
    }
}

/// Resource files; `None` selects the bundled list (keywords, QAnon domains,
/// stopwords) or an empty one (bias, credibility, account status).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    pub keywords: Option<PathBuf>,
    pub qanon_domains: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub bias: Option<PathBuf>,
    pub reliable: Option<PathBuf>,
    pub unreliable: Option<PathBuf>,
    pub account_status: Option<PathBuf>,
}

impl ResourcePaths {
    fn entries(&self) -> [(&'static str, &Option<PathBuf>); 7] {
        [
            ("keywords", &self.keywords),
            ("qanon_domains", &self.qanon_domains),
            ("stopwords", &self.stopwords),
            ("bias", &self.bias),
            ("reliable", &self.reliable),
            ("unreliable", &self.unreliable),
            ("account_status", &self.account_status),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub enabled: bool,
    /// Points per cluster nearest its centroid.
    pub neighbors: usize,
    pub perplexity: f64,
    pub iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            neighbors: 300,
            perplexity: 30.0,
            iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub window: WindowConfig,
    pub min_tweets: u64,
    pub weekly_min_tweets: u32,
    pub require_self_drafted_overall: bool,
    pub quotes_as_retweets: bool,
    pub propagation: PropagationConfig,
    pub alpha: f64,
    pub top_fraction: f64,
    pub rank_by: RankBy,
    pub k_range: (usize, usize),
    /// Fixes k instead of selecting it from `k_range`.
    pub k: Option<usize>,
    pub kmeans: KMeansParams,
    pub distance: Distance,
    pub standardize: bool,
    pub tsne: TsneConfig,
    pub permutations: usize,
    pub rng_seed: u64,
    pub threads: Option<usize>,
    pub svg: bool,
    pub resources: ResourcePaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            out: PathBuf::from("out"),
            window: WindowConfig::default(),
            min_tweets: 20,
            weekly_min_tweets: 10,
            require_self_drafted_overall: true,
            quotes_as_retweets: false,
            propagation: PropagationConfig::default(),
            alpha: 0.01,
            top_fraction: 0.005,
            rank_by: RankBy::Z,
            k_range: (2, 20),
            k: None,
            kmeans: KMeansParams::default(),
            distance: Distance::Euclidean,
            standardize: false,
            tsne: TsneConfig::default(),
            permutations: 1000,
            rng_seed: 42,
            threads: None,
            svg: false,
            resources: ResourcePaths::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.inputs.iter_mut() {
            resolve(base, p);
        }
        resolve(base, &mut cfg.out);
        let r = &mut cfg.resources;
        for p in [
            &mut r.keywords,
            &mut r.qanon_domains,
            &mut r.stopwords,
            &mut r.bias,
            &mut r.reliable,
            &mut r.unreliable,
            &mut r.account_status,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn analysis_window(&self) -> Result<AnalysisWindow> {
        let w = self.window;
        AnalysisWindow::new(w.start, w.n_weeks, w.intervention_date, w.seed_weeks)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed_config(&self) -> SeedConfig {
        SeedConfig {
            weekly_min_tweets: self.weekly_min_tweets,
            seed_weeks: self.window.seed_weeks,
            require_self_drafted_overall: self.require_self_drafted_overall,
        }
    }

    /// Checks parameter ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.analysis_window()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.inputs.is_empty() {
            return bad("no input files given".into());
        }
        for p in &self.inputs {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        for (_, p) in self.resources.entries() {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::MissingFile(p.clone()));
                }
            }
        }
        if self.min_tweets == 0 {
            return bad("min_tweets must be >= 1".into());
        }
        if self.weekly_min_tweets == 0 {
            return bad("weekly_min_tweets must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return bad(format!("top_fraction must be in (0,1), got {}", self.top_fraction));
        }
        let (lo, hi) = self.k_range;
        if lo < 2 || hi < lo {
            return bad(format!("k_range must satisfy 2 <= lo <= hi, got [{lo}, {hi}]"));
        }
        if self.k == Some(0) {
            return bad("k must be >= 1".into());
        }
        if self.kmeans.n_init == 0 || self.kmeans.max_iters == 0 || !(self.kmeans.tol >= 0.0) {
            return bad("kmeans needs n_init >= 1, max_iters >= 1 and tol >= 0".into());
        }
        if self.permutations == 0 {
            return bad("permutations must be >= 1".into());
        }
        if self.propagation.max_iters == 0 || !(self.propagation.threshold >= 0.0) {
            return bad("propagation needs max_iters >= 1 and threshold >= 0".into());
        }
        if self.tsne.neighbors == 0 || !(self.tsne.perplexity > 0.0) {
            return bad("tsne needs neighbors >= 1 and perplexity > 0".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }
}

/// Loaded resource lists plus the digest of what was loaded.
pub struct Resources {
    pub matchers: Matchers,
    pub stopwords: Stopwords,
    pub account_status: HashMap<String, crate::analysis::AccountStatus>,
    pub versions: BTreeMap<String, ResourceVersion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceVersion {
    pub source: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<(String, u64)> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((hex::encode(h.finalize()), total))
}

impl Resources {
    pub fn load(paths: &ResourcePaths) -> Result<Self> {
        let mut versions = BTreeMap::new();
        let mut text = |name: &str, p: &Option<PathBuf>, bundled: Option<&str>| -> Result<Option<String>> {
            let (source, body) = match (p, bundled) {
                (Some(p), _) => {
                    if !p.exists() {
                        return Err(Error::MissingFile(p.clone()));
                    }
                    (p.display().to_string(), fs::read_to_string(p).map_err(|e| Error::io(p, e))?)
                }
                (None, Some(b)) => ("bundled".to_string(), b.to_string()),
                (None, None) => return Ok(None),
            };
            versions.insert(
                name.to_string(),
                ResourceVersion {
                    source,
                    sha256: sha256_hex(body.as_bytes()),
                },
            );
            Ok(Some(body))
        };
        let keywords = KeywordList::parse(&text("keywords", &paths.keywords, Some(DEFAULT_KEYWORDS))?.expect("bundled"))?;
        let qanon_domains =
            DomainList::parse(&text("qanon_domains", &paths.qanon_domains, Some(DEFAULT_QANON_DOMAINS))?.expect("bundled"))?;
        let stopwords = match text("stopwords", &paths.stopwords, None)? {
            Some(t) => Stopwords::parse(&t),
            None => Stopwords::default(),
        };
        let (left_outlets, right_outlets) = match text("bias", &paths.bias, None)? {
            Some(t) => parse_bias_csv(&t)?,
            None => (DomainList::default(), DomainList::default()),
        };
        let list = |t: Option<String>| t.map_or_else(|| Ok(DomainList::default()), |t| DomainList::parse(&t));
        let reliable = list(text("reliable", &paths.reliable, None)?)?;
        let unreliable = list(text("unreliable", &paths.unreliable, None)?)?;
        let account_status = match text("account_status", &paths.account_status, None)? {
            Some(t) => parse_account_status(&t)?,
            None => HashMap::new(),
        };
        if paths.stopwords.is_none() {
            versions.insert(
                "stopwords".into(),
                ResourceVersion {
                    source: format!("bundled {STOPWORDS_VERSION}"),
                    sha256: String::new(),
                },
            );
        }
        Ok(Self {
            matchers: Matchers {
                keywords,
                qanon_domains,
                reliable,
                unreliable,
                left_outlets,
                right_outlets,
            },
            stopwords,
            account_status,
            versions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// `ran` or `cached`.
    pub status: String,
    pub seconds: f64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedsUsed {
    pub rng_seed: u64,
    /// k-means restarts for a given k use streams derived from this seed and k.
    pub kmeans: u64,
    pub permutations_pre: u64,
    pub permutations_post: u64,
    pub tsne: u64,
}

impl SeedsUsed {
    fn from_base(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            kmeans: rng_seed,
            permutations_pre: derive_seed(rng_seed, 1),
            permutations_post: derive_seed(rng_seed, 2),
            tsne: derive_seed(rng_seed, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// `complete`, `partial` (stopped before the last stage) or `failed`.
    pub status: String,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub resources: BTreeMap<String, ResourceVersion>,
    pub seeds: SeedsUsed,
    pub methods: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub records: Option<IngestReport>,
    pub counts: BTreeMap<String, u64>,
    /// Digest of every output file written so far, keyed by relative path.
    pub outputs: BTreeMap<String, String>,
}

fn methods(cfg: &RunConfig) -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "leaning_propagation".into(),
            "soft label propagation, synchronous Jacobi sweeps on the undirected retweet graph weighted by retweet count; outlet-majority users fixed at -1/+1".into(),
        ),
        (
            "k_selection".into(),
            format!("elbow = largest second difference of inertia; kept if its silhouette is within {}% of the best, else silhouette argmax", crate::clustering::ELBOW_SILHOUETTE_SLACK * 100.0),
        ),
        ("lexicon_ranking".into(), format!("{:?}", cfg.rank_by).to_lowercase()),
        (
            "quotes".into(),
            if cfg.quotes_as_retweets { "self-drafted and counted as retweets" } else { "self-drafted only" }.into(),
        ),
        ("period_split".into(), "pre iff timestamp < intervention date 00:00 UTC".into()),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Stamp {
    fingerprint: String,
    outputs: BTreeMap<String, String>,
}

/// Everything the cluster stage produces, cached as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    pub ids: Vec<String>,
    pub model: ClusterModel<4>,
    pub curve: Option<KSelectionCurve>,
    pub embedding: Option<Embedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub indices: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    pub kl_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeedsCache {
    leanings: LeaningResult,
    validation: SeedValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub summary: ClusterSummary,
    pub interactions: Vec<InteractionMatrix>,
}

/// Pipeline state; each field is filled by its stage or read back from its
/// cached outputs.
#[derive(Default)]
struct State {
    ingested: Option<Ingested>,
    active: Option<BTreeSet<String>>,
    candidates: Option<BTreeSet<String>>,
    seeds: Option<SeedsCache>,
    lexicon: Option<Lexicon>,
    signals: Option<BTreeMap<String, UserSignals>>,
    cluster: Option<ClusterOutput>,
    analysis: Option<AnalysisOutput>,
}

pub struct Pipeline {
    cfg: RunConfig,
    res: Resources,
    manifest: RunManifest,
    state: State,
    fingerprint: String,
}

fn write(out: &Path, rel: &str, body: &[u8], written: &mut BTreeMap<String, String>) -> Result<()> {
    let p = out.join(rel);
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    written.insert(rel.to_string(), sha256_hex(body));
    Ok(())
}

fn read(out: &Path, rel: &str) -> Result<String> {
    let p = out.join(rel);
    fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
}

fn id_lines<'a>(ids: impl IntoIterator<Item = &'a String>) -> String {
    ids.into_iter().map(|s| format!("{s}\n")).collect()
}

fn parse_id_lines(text: &str) -> BTreeSet<String> {
    text.lines().filter(|l| !l.is_empty()).map(String::from).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn weekly_csv(window: &AnalysisWindow, users: &mut dyn Iterator<Item = &UserAggregate>) -> String {
    let n = window.n_weeks as usize;
    let mut tot = vec![crate::corpus::WeekCounts::default(); n];
    let mut engaged = vec![0u64; n];
    for u in users {
        for (w, c) in u.weeks.iter().enumerate() {
            tot[w].add(c);
            engaged[w] += (c.hits() > 0) as u64;
        }
    }
    let mut s = String::from(
        "week,start,original,reply,quote,retweet,keyword_hits,url_hits,keyword_hits_self_drafted,url_hits_self_drafted,users_with_hits,qc_tweets\n",
    );
    for (w, c) in tot.iter().enumerate() {
        let start = chrono::DateTime::from_timestamp(window.start_ts() + w as i64 * 7 * 86_400, 0)
            .expect("in range")
            .date_naive();
        let qc = if c.tweets() > 0 { Some(c.hits() as f64 / c.tweets() as f64) } else { None };
        let _ = writeln!(
            s,
            "{w},{start},{},{},{},{},{},{},{},{},{},{}",
            c.original,
            c.reply,
            c.quote,
            c.retweet,
            c.keyword_hits,
            c.url_hits,
            c.keyword_hits_self,
            c.url_hits_self,
            engaged[w],
            opt(qc)
        );
    }
    s
}

impl Pipeline {
    /// Validates the config and loads resources; input digests are taken
    /// here so the manifest pins exactly what was read.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let res = Resources::load(&cfg.resources)?;
        let mut inputs = Vec::new();
        for p in &cfg.inputs {
            let (sha256, bytes) = file_digest(p)?;
            inputs.push(FileDigest {
                path: p.display().to_string(),
                sha256,
                bytes,
            });
        }
        let manifest = RunManifest {
            tool: "radsignals".into(),
            version: VERSION.into(),
            status: "partial".into(),
            failed_stage: None,
            error: None,
            config: cfg.clone(),
            inputs,
            resources: res.versions.clone(),
            seeds: SeedsUsed::from_base(cfg.rng_seed),
            methods: methods(&cfg),
            stages: Vec::new(),
            records: None,
            counts: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        Ok(Self {
            cfg,
            res,
            manifest,
            state: State::default(),
            fingerprint: String::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Runs every stage up to and including `last`, then writes the
    /// manifest. On failure the manifest is still written, marked failed.
    pub fn run_until(&mut self, last: Stage) -> Result<&RunManifest> {
        fs::create_dir_all(&self.cfg.out).map_err(|e| Error::io(&self.cfg.out, e))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
            let started = Instant::now();
            let outcome = pool.install(|| self.step(stage));
            match outcome {
                Ok(cached) => {
                    let seconds = started.elapsed().as_secs_f64();
                    log::info!("{}: {} in {seconds:.2}s", stage.name(), if cached { "cached" } else { "done" });
                    self.manifest.stages.push(StageRecord {
                        stage,
                        status: if cached { "cached" } else { "ran" }.into(),
                        seconds,
                        fingerprint: self.fingerprint.clone(),
                    });
                }
                Err(e) => {
                    self.manifest.status = "failed".into();
                    self.manifest.failed_stage = Some(stage);
                    self.manifest.error = Some(e.to_string());
                    let _ = self.write_manifest();
                    return Err(Error::Stage {
                        stage: stage.name(),
                        source: Box::new(e),
                    });
                }
            }
        }
        self.manifest.status = if last == Stage::Report { "complete" } else { "partial" }.into();
        self.write_manifest()?;
        Ok(&self.manifest)
    }

    fn write_manifest(&self) -> Result<()> {
        let p = self.cfg.out.join("manifest.json");
        let body = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&p, body + "\n").map_err(|e| Error::io(&p, e))
    }

    fn stage_params(&self, stage: Stage) -> serde_json::Value {
        let c = &self.cfg;
        let v = &self.manifest.resources;
        match stage {
            Stage::Ingest => serde_json::json!({
                "inputs": self.manifest.inputs.iter().map(|d| &d.sha256).collect::<Vec<_>>(),
                "window": c.window,
                "quotes_as_retweets": c.quotes_as_retweets,
                "resources": [v.get("keywords"), v.get("qanon_domains"), v.get("bias"), v.get("reliable"), v.get("unreliable")],
            }),
            Stage::Filter => serde_json::json!({ "min_tweets": c.min_tweets }),
            Stage::Seeds => serde_json::json!({ "seed": c.seed_config() }),
            Stage::Validate => serde_json::json!({ "propagation": c.propagation }),
            Stage::Lexicon => serde_json::json!({
                "alpha": c.alpha, "top_fraction": c.top_fraction, "rank_by": c.rank_by, "stopwords": v.get("stopwords"),
            }),
            Stage::Signals => serde_json::Value::Null,
            Stage::Cluster => serde_json::json!({
                "k_range": c.k_range, "k": c.k, "kmeans": c.kmeans, "distance": c.distance,
                "standardize": c.standardize, "tsne": c.tsne, "rng_seed": c.rng_seed,
            }),
            Stage::Analyze => serde_json::json!({
                "permutations": c.permutations, "rng_seed": c.rng_seed, "account_status": v.get("account_status"),
            }),
            Stage::Report => serde_json::json!({ "svg": c.svg }),
        }
    }

    /// Runs or restores one stage; returns whether the cache was used.
    fn step(&mut self, stage: Stage) -> Result<bool> {
        let params = self.stage_params(stage);
        self.fingerprint = sha256_hex(format!("{VERSION}|{}|{}|{params}", self.fingerprint, stage.name()).as_bytes());
        let stamp_rel = format!(".stages/{}.json", stage.name());
        let stamp: Option<Stamp> = read(&self.cfg.out, &stamp_rel)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        if let Some(st) = stamp.filter(|s| s.fingerprint == self.fingerprint && self.outputs_intact(&s.outputs)) {
            if self.restore(stage).is_ok() {
                self.manifest.outputs.extend(st.outputs);
                return Ok(true);
            }
        }
        let mut written = BTreeMap::new();
        self.execute(stage, &mut written)?;
        let st = Stamp {
            fingerprint: self.fingerprint.clone(),
            outputs: written.clone(),
        };
        let mut ignored = BTreeMap::new();
        write(&self.cfg.out, &stamp_rel, serde_json::to_string_pretty(&st)?.as_bytes(), &mut ignored)?;
        self.manifest.outputs.extend(written);
        Ok(false)
    }

    fn outputs_intact(&self, outputs: &BTreeMap<String, String>) -> bool {
        outputs.iter().all(|(rel, digest)| {
            file_digest(&self.cfg.out.join(rel))
                .map(|(d, _)| &d == digest)
                .unwrap_or(false)
        })
    }

    fn users(&mut self) -> Result<&BTreeMap<String, UserAggregate>> {
        if self.state.ingested.is_none() {
            self.restore(Stage::Ingest)?;
        }
        Ok(&self.state.ingested.as_ref().expect("restored").users)
    }

    fn need<T>(v: &Option<T>, what: Stage) -> Result<&T> {
        v.as_ref()
            .ok_or_else(|| Error::Data(format!("{} output unavailable", what.name())))
    }

    fn restore(&mut self, stage: Stage) -> Result<()> {
        let out = self.cfg.out.clone();
        match stage {
            Stage::Ingest => {
                let users: BTreeMap<String, UserAggregate> = serde_json::from_str(&read(&out, "cache/aggregates.json")?)?;
                let report: IngestReport = serde_json::from_str(&read(&out, "ingest_report.json")?)?;
                self.note_ingest(&report, users.len());
                self.state.ingested = Some(Ingested { users, report });
            }
            Stage::Filter => {
                let active = parse_id_lines(&read(&out, "active_users.txt")?);
                self.manifest.counts.insert("active_users".into(), active.len() as u64);
                self.state.active = Some(active);
            }
            Stage::Seeds => {
                let c = parse_id_lines(&read(&out, "seed_candidates.txt")?);
                self.manifest.counts.insert("seed_candidates".into(), c.len() as u64);
                self.state.candidates = Some(c);
            }
            Stage::Validate => {
                let cache: SeedsCache = serde_json::from_str(&read(&out, "cache/leanings.json")?)?;
                self.manifest.counts.insert("seeds".into(), cache.validation.filtered.len() as u64);
                self.state.seeds = Some(cache);
            }
            Stage::Lexicon => {
                let lex: Lexicon = serde_json::from_str(&read(&out, "cache/lexicon.json")?)?;
                self.manifest.counts.insert("lexicon_tokens".into(), lex.len() as u64);
                self.state.lexicon = Some(lex);
            }
            Stage::Signals => {
                let s = parse_signals_csv(&read(&out, "signals.csv")?)?;
                self.manifest.counts.insert("feature_users".into(), s.len() as u64);
                self.state.signals = Some(s);
            }
            Stage::Cluster => {
                let c: ClusterOutput = serde_json::from_str(&read(&out, "cache/cluster.json")?)?;
                self.manifest.counts.insert("k".into(), c.model.k as u64);
                self.state.cluster = Some(c);
            }
            Stage::Analyze => {
                self.state.analysis = Some(serde_json::from_str(&read(&out, "cache/analysis.json")?)?);
            }
            Stage::Report => {
                read(&out, "report.md")?;
            }
        }
        Ok(())
    }

    fn note_ingest(&mut self, report: &IngestReport, users: usize) {
        self.manifest.records = Some(report.clone());
        self.manifest.counts.insert("users".into(), users as u64);
    }

    fn execute(&mut self, stage: Stage, written: &mut BTreeMap<String, String>) -> Result<()> {
        let out = self.cfg.out.clone();
        let window = self.cfg.analysis_window()?;
        match stage {
            Stage::Ingest => {
                let opts = IngestOptions {
                    quotes_as_retweets: self.cfg.quotes_as_retweets,
                };
                let ing = ingest_paths(&self.cfg.inputs, &window, &self.res.matchers, opts)?;
                if ing.users.is_empty() {
                    return Err(Error::Data("no in-window records in the input".into()));
                }
                write(&out, "cache/aggregates.json", &serde_json::to_vec(&ing.users)?, written)?;
                write(&out, "ingest_report.json", serde_json::to_string_pretty(&ing.report)?.as_bytes(), written)?;
                write(&out, "weekly.csv", weekly_csv(&window, &mut ing.users.values()).as_bytes(), written)?;
                self.note_ingest(&ing.report, ing.users.len());
                self.state.ingested = Some(ing);
            }
            Stage::Filter => {
                let min = self.cfg.min_tweets;
                let active = filter_active(self.users()?, min)?;
                write(&out, "active_users.txt", id_lines(&active).as_bytes(), written)?;
                self.manifest.counts.insert("active_users".into(), active.len() as u64);
                self.state.active = Some(active);
            }
            Stage::Seeds => {
                let sc = self.cfg.seed_config();
                self.users()?;
                let users = &self.state.ingested.as_ref().expect("loaded").users;
                let active = Self::need(&self.state.active, Stage::Filter)?;
                let c = select_persistent(active.iter().filter_map(|u| users.get(u)), &window, &sc)?;
                write(&out, "seed_candidates.txt", id_lines(&c).as_bytes(), written)?;
                self.manifest.counts.insert("seed_candidates".into(), c.len() as u64);
                self.state.candidates = Some(c);
            }
            Stage::Validate => {
                self.users()?;
                let users = &self.state.ingested.as_ref().expect("loaded").users;
                let candidates = Self::need(&self.state.candidates, Stage::Seeds)?;
                let edges = retweet_edges(users.values());
                let bias = domain_bias_seeds(users.values());
                let leanings = infer_leanings(&edges, &bias, &self.cfg.propagation);
                let validation = validate_seed_set(candidates, &leanings);
                let mut csv = String::from("user_id,score,label,is_seed_label\n");
                for s in leanings.scores.values() {
                    let label = serde_json::to_value(s.label)?;
                    let _ = writeln!(csv, "{},{},{},{}", s.user_id, s.score, label.as_str().unwrap_or_default(), s.is_seed_label);
                }
                write(&out, "leanings.csv", csv.as_bytes(), written)?;
                write(&out, "seed_validation.json", serde_json::to_string_pretty(&validation)?.as_bytes(), written)?;
                write(&out, "seeds.txt", id_lines(&validation.filtered).as_bytes(), written)?;
                let seed_weekly = weekly_csv(&window, &mut validation.filtered.iter().filter_map(|u| users.get(u)));
                write(&out, "seed_weekly.csv", seed_weekly.as_bytes(), written)?;
                let cache = SeedsCache { leanings, validation };
                write(&out, "cache/leanings.json", &serde_json::to_vec(&cache)?, written)?;
                self.manifest.counts.insert("seeds".into(), cache.validation.filtered.len() as u64);
                self.state.seeds = Some(cache);
            }
            Stage::Lexicon => {
                self.users()?;
                let users = &self.state.ingested.as_ref().expect("loaded").users;
                let active = Self::need(&self.state.active, Stage::Filter)?;
                let seeds = &Self::need(&self.state.seeds, Stage::Validate)?.validation.filtered;
                if seeds.is_empty() {
                    return Err(Error::Data("seed set is empty after validation; no lexicon can be built".into()));
                }
                let (seed_c, bg) = split_corpora(active.iter().filter_map(|u| users.get(u)), seeds);
                let entries = weighted_log_odds(&seed_c, &bg, self.cfg.alpha)?;
                let lex = build_lexicon(entries, self.cfg.top_fraction, self.cfg.rank_by, &self.res.stopwords)?;
                write(&out, "lexicon.tsv", lex.to_tsv().as_bytes(), written)?;
                write(&out, "cache/lexicon.json", &serde_json::to_vec(&lex)?, written)?;
                self.manifest.counts.insert("lexicon_tokens".into(), lex.len() as u64);
                self.state.lexicon = Some(lex);
            }
            Stage::Signals => {
                self.users()?;
                let users = &self.state.ingested.as_ref().expect("loaded").users;
                let active = Self::need(&self.state.active, Stage::Filter)?;
                let seeds = &Self::need(&self.state.seeds, Stage::Validate)?.validation.filtered;
                let lex = Self::need(&self.state.lexicon, Stage::Lexicon)?;
                let m = &self.res.matchers;
                let rows = feature_matrix(active.iter().filter_map(|u| users.get(u)), seeds, lex, &m.keywords, &m.qanon_domains);
                write(&out, "signals.csv", signals_csv(&rows).as_bytes(), written)?;
                self.manifest.counts.insert("feature_users".into(), rows.len() as u64);
                self.state.signals = Some(rows);
            }
            Stage::Cluster => {
                let rows = Self::need(&self.state.signals, Stage::Signals)?;
                let c = cluster_stage(&self.cfg, rows)?;
                write_cluster_outputs(&out, &c, written)?;
                write(&out, "cache/cluster.json", &serde_json::to_vec(&c)?, written)?;
                self.manifest.counts.insert("k".into(), c.model.k as u64);
                self.state.cluster = Some(c);
            }
            Stage::Analyze => {
                self.users()?;
                let a = self.analyze_stage()?;
                self.write_analysis(&a, written)?;
                write(&out, "cache/analysis.json", &serde_json::to_vec(&a)?, written)?;
                self.state.analysis = Some(a);
            }
            Stage::Report => {
                self.report_stage(written)?;
            }
        }
        Ok(())
    }

    fn analyze_stage(&self) -> Result<AnalysisOutput> {
        let users = &self.state.ingested.as_ref().expect("loaded").users;
        let c = Self::need(&self.state.cluster, Stage::Cluster)?;
        let signals = Self::need(&self.state.signals, Stage::Signals)?;
        let seeds = Self::need(&self.state.seeds, Stage::Validate)?;
        let k = c.model.k;
        let assignments: BTreeMap<String, usize> =
            c.ids.iter().cloned().zip(c.model.assignments.iter().copied()).collect();
        let summary = cluster_summary(&assignments, k, users, signals, &seeds.leanings, &self.res.account_status);
        let index: HashMap<&str, usize> = c.ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let mut interactions = Vec::new();
        for (period, seed) in [
            (Period::Pre, self.manifest.seeds.permutations_pre),
            (Period::Post, self.manifest.seeds.permutations_post),
        ] {
            let mut edges = Vec::new();
            for (i, id) in c.ids.iter().enumerate() {
                if let Some(a) = users.get(id) {
                    for (t, n) in &a.retweet_targets {
                        let w = n.get(period) as u64;
                        if let (true, Some(&j)) = (w > 0, index.get(t.as_str())) {
                            edges.push((i, j, w));
                        }
                    }
                }
            }
            interactions.push(interaction_zscores(&edges, &c.model.assignments, k, period, self.cfg.permutations, seed)?);
        }
        Ok(AnalysisOutput { summary, interactions })
    }

    fn write_analysis(&self, a: &AnalysisOutput, written: &mut BTreeMap<String, String>) -> Result<()> {
        let out = &self.cfg.out;
        let users = &self.state.ingested.as_ref().expect("loaded").users;
        let c = Self::need(&self.state.cluster, Stage::Cluster)?;
        let signals = Self::need(&self.state.signals, Stage::Signals)?;
        let vectors: Vec<[f64; 4]> = c.ids.iter().map(|u| signals[u].signals.to_array()).collect();
        if vectors.len() >= 2 {
            let corr = pearson_matrix(&vectors)?;
            write(out, "correlations.csv", corr.to_csv(&SIGNAL_NAMES).as_bytes(), written)?;
        }
        let qc: HashMap<&str, f64> = signals.iter().map(|(u, s)| (u.as_str(), s.signals.qc_tweets)).collect();
        let mut m = String::from("user_id,cluster,retweet_ratio,persistence,unique_keywords,url_credibility,mean_retweeted_qc\n");
        for (id, &cl) in c.ids.iter().zip(&c.model.assignments) {
            if let Some(agg) = users.get(id) {
                let _ = writeln!(
                    m,
                    "{id},{},{},{},{},{},{}",
                    cluster_letter(cl),
                    opt(retweet_ratio(agg).ok()),
                    opt(persistence(agg).ok()),
                    unique_keywords(agg),
                    opt(url_credibility(agg)),
                    opt(mean_retweeted_qc(agg, &qc))
                );
            }
        }
        write(out, "user_metrics.csv", m.as_bytes(), written)?;
        write(out, "cluster_summary.json", serde_json::to_string_pretty(&a.summary)?.as_bytes(), written)?;
        for im in &a.interactions {
            let p = match im.period {
                Period::Pre => "pre",
                Period::Post => "post",
            };
            write(out, &format!("interactions_{p}_observed.csv"), im.observed_csv().as_bytes(), written)?;
            write(out, &format!("interactions_{p}_z.csv"), im.z_csv().as_bytes(), written)?;
            write(out, &format!("interactions_{p}_p.csv"), im.p_csv().as_bytes(), written)?;
        }
        Ok(())
    }

    fn report_stage(&mut self, written: &mut BTreeMap<String, String>) -> Result<()> {
        let out = self.cfg.out.clone();
        let c = Self::need(&self.state.cluster, Stage::Cluster)?;
        let a = Self::need(&self.state.analysis, Stage::Analyze)?;
        let seeds = Self::need(&self.state.seeds, Stage::Validate)?;
        let lex = Self::need(&self.state.lexicon, Stage::Lexicon)?;
        let mut r = String::from("# Run report\n\n");
        let counts = &self.manifest.counts;
        let count = |k: &str| counts.get(k).copied().unwrap_or(0);
        if let Some(rec) = &self.manifest.records {
            let _ = writeln!(r, "- records read: {}, accepted: {}, dropped: {}", rec.records_read, rec.accepted, rec.dropped_total());
        }
        let _ = writeln!(r, "- users: {}, active: {}", count("users"), count("active_users"));
        let v = &seeds.validation;
        let _ = writeln!(
            r,
            "- seed candidates: {} (left {}, right {}, unknown {}; {:.3}% left), retained: {}",
            v.total,
            v.left,
            v.right,
            v.unknown,
            v.left_proportion * 100.0,
            v.filtered.len()
        );
        let _ = writeln!(r, "- lexicon: {} tokens ({} hashtags) from {} candidates", lex.len(), lex.hashtag_count, lex.pre_filter_size);
        let _ = writeln!(r, "- feature users: {}, k = {}", c.ids.len(), c.model.k);
        if let Some(curve) = &c.curve {
            let _ = writeln!(r, "- elbow k = {}, best-silhouette k = {}", curve.elbow, curve.best_silhouette_k);
        }
        if let Some(e) = &c.embedding {
            let _ = writeln!(r, "- embedding: {} points, KL divergence {:.4}", e.coords.len(), e.kl_divergence);
        }
        r.push_str("\n## Clusters\n\n| cluster | size | left | suspended | deleted | qc_tweets | qc_profile | c_retweets | c_lexical |\n|---|---|---|---|---|---|---|---|---|\n");
        for (cs, cen) in a.summary.clusters.iter().zip(&c.model.centroids) {
            let _ = writeln!(
                r,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
                cs.cluster, cs.size, cs.proportion_left, cs.proportion_suspended, cs.proportion_deleted, cen[0], cen[1], cen[2], cen[3]
            );
        }
        for im in &a.interactions {
            let _ = writeln!(r, "\n## Retweet z-scores, {:?} (* p < {SIGNIFICANCE})\n", im.period);
            let letters: Vec<String> = (0..im.k).map(cluster_letter).collect();
            let _ = writeln!(r, "| from \\ to | {} |", letters.join(" | "));
            let _ = writeln!(r, "|---|{}", "---|".repeat(im.k));
            for (i, row) in im.z.iter().enumerate() {
                let cells: Vec<String> = row
                    .iter()
                    .zip(&im.p[i])
                    .map(|(z, p)| match z {
                        Some(z) => format!("{z:.2}{}", if *p < SIGNIFICANCE { "*" } else { "" }),
                        None => "n/a".into(),
                    })
                    .collect();
                let _ = writeln!(r, "| {} | {} |", letters[i], cells.join(" | "));
            }
        }
        write(&out, "report.md", r.as_bytes(), written)?;
        if self.cfg.svg {
            if let Some(curve) = &c.curve {
                let xs: Vec<f64> = curve.rows.iter().map(|r| r.k as f64).collect();
                let svg = figures::line_chart(
                    "k selection",
                    "k",
                    &xs,
                    &[
                        ("inertia", curve.rows.iter().map(|r| r.inertia).collect()),
                        ("silhouette", curve.rows.iter().map(|r| r.silhouette).collect()),
                    ],
                );
                write(&out, "figures/k_curve.svg", svg.as_bytes(), written)?;
            }
            if let Some(e) = &c.embedding {
                let groups: Vec<usize> = e.indices.iter().map(|&i| c.model.assignments[i]).collect();
                let names: Vec<String> = (0..c.model.k).map(cluster_letter).collect();
                let svg = figures::scatter("centroid neighbourhoods", &e.coords, &groups, &names);
                write(&out, "figures/embedding.svg", svg.as_bytes(), written)?;
            }
            for im in &a.interactions {
                let labels: Vec<String> = (0..im.k).map(cluster_letter).collect();
                let marked: Vec<Vec<bool>> = im.p.iter().map(|r| r.iter().map(|p| *p < SIGNIFICANCE).collect()).collect();
                let name = format!("{:?}", im.period).to_lowercase();
                let svg = figures::heatmap(&format!("retweet z-scores ({name})"), &labels, &im.z, &marked);
                write(&out, &format!("figures/interactions_{name}.svg"), svg.as_bytes(), written)?;
            }
        }
        Ok(())
    }
}

/// k selection (or a fixed k), the final model in canonical cluster order,
/// and the optional embedding of centroid neighbourhoods.
pub fn cluster_stage(cfg: &RunConfig, rows: &BTreeMap<String, UserSignals>) -> Result<ClusterOutput> {
    let ids: Vec<String> = rows.keys().cloned().collect();
    let raw: Vec<[f64; 4]> = rows.values().map(|r| r.signals.to_array()).collect();
    if raw.len() < 2 {
        return Err(Error::Data(format!("{} users in the feature matrix; clustering needs at least 2", raw.len())));
    }
    let points = prepare_points(&raw, cfg.distance, cfg.standardize);
    let (k, curve) = match cfg.k {
        Some(k) => (k, None),
        None => {
            let hi = cfg.k_range.1.min(points.len());
            if hi < cfg.k_range.0 {
                return Err(Error::Data(format!("{} users cannot fill k range {:?}", points.len(), cfg.k_range)));
            }
            let curve = select_k(&points, cfg.k_range.0..=hi, cfg.rng_seed, &cfg.kmeans)?;
            (curve.chosen_k, Some(curve))
        }
    };
    let p = &cfg.kmeans;
    let mut model = kmeans_restarts(&points, k, derive_seed(cfg.rng_seed, k as u64), p.n_init, p.max_iters, p.tol)?;
    canonical_order(&mut model);
    let embedding = if cfg.tsne.enabled {
        let groups = centroid_neighbors(&model, &points, &ids, cfg.tsne.neighbors)?;
        let indices: Vec<usize> = groups.into_iter().flatten().collect();
        let sub: Vec<[f64; 4]> = indices.iter().map(|&i| points[i]).collect();
        let params = TsneParams {
            perplexity: cfg.tsne.perplexity,
            iters: cfg.tsne.iters,
            ..TsneParams::default()
        };
        if (sub.len() as f64) < 3.0 * params.perplexity {
            log::warn!("embedding skipped: {} points is too few for perplexity {}", sub.len(), params.perplexity);
            None
        } else {
            let r = tsne_embed(&sub, derive_seed(cfg.rng_seed, 3), &params)?;
            Some(Embedding {
                indices,
                coords: r.coords,
                kl_divergence: r.kl_divergence,
            })
        }
    } else {
        None
    };
    Ok(ClusterOutput {
        ids,
        model,
        curve,
        embedding,
    })
}

fn write_cluster_outputs(out: &Path, c: &ClusterOutput, written: &mut BTreeMap<String, String>) -> Result<()> {
    if let Some(curve) = &c.curve {
        write(out, "k_curve.csv", curve.to_csv().as_bytes(), written)?;
    }
    let mut a = String::from("user_id,cluster\n");
    for (id, &cl) in c.ids.iter().zip(&c.model.assignments) {
        let _ = writeln!(a, "{id},{}", cluster_letter(cl));
    }
    write(out, "assignments.csv", a.as_bytes(), written)?;
    let mut cen = format!("cluster,size,{}\n", SIGNAL_NAMES.join(","));
    for (i, p) in c.model.centroids.iter().enumerate() {
        let size = c.model.assignments.iter().filter(|&&x| x == i).count();
        let _ = writeln!(cen, "{},{size},{},{},{},{}", cluster_letter(i), p[0], p[1], p[2], p[3]);
    }
    write(out, "centroids.csv", cen.as_bytes(), written)?;
    if let Some(e) = &c.embedding {
        let mut s = String::from("user_id,cluster,x,y\n");
        for (&i, xy) in e.indices.iter().zip(&e.coords) {
            let _ = writeln!(s, "{},{},{},{}", c.ids[i], cluster_letter(c.model.assignments[i]), xy[0], xy[1]);
        }
        write(out, "embedding.csv", s.as_bytes(), written)?;
    }
    Ok(())
}

/// Runs the whole pipeline.
pub fn run_pipeline(cfg: RunConfig) -> Result<RunManifest> {
    let mut p = Pipeline::new(cfg)?;
    p.run_until(Stage::Report).cloned()
}
