//! Keyword matching, domain matching and tweet tokenization.
//!
//! Everything here is a pure function of its inputs. Text is lowercased before
//! matching; URLs and `@handle` mentions are masked out of keyword matching so
//! that only the domain list decides whether a link is QAnon-related.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
pub const DEFAULT_KEYWORDS: &str = include_str!("../data/keywords.txt");
pub const DEFAULT_QANON_DOMAINS: &str = include_str!("../data/qanon_domains.txt");

/// Version tag of the bundled stopword list. Bump when the file changes.
pub const STOPWORDS_VERSION: &str = "en-179-v1";

fn read_lines(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn entry_lines(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
}

/// Keyword entries, either plain terms or `#`-prefixed hashtag terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordList {
    entries: Vec<String>,
    // indices into `entries`, longest entry first
    by_length: Vec<usize>,
}

impl KeywordList {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for e in entries {
            let e = e.as_ref().trim().to_lowercase();
            if e.is_empty() || e == "#" {
                return Err(Error::Data("empty keyword entry".into()));
            }
            if seen.insert(e.clone()) {
                out.push(e);
            }
        }
        let mut by_length: Vec<usize> = (0..out.len()).collect();
        by_length.sort_by(|&a, &b| out[b].len().cmp(&out[a].len()).then(out[a].cmp(&out[b])));
        Ok(Self {
            entries: out,
            by_length,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(entry_lines(text))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_lines(path)?)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Registrable domains or host names. Matching is by whole DNS labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainList {
    entries: HashSet<String>,
}

impl DomainList {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for e in entries {
            let raw = e.as_ref().trim();
            let host = normalize_host(raw)
                .ok_or_else(|| Error::Data(format!("invalid domain entry {raw:?}")))?;
            set.insert(host);
        }
        Ok(Self { entries: set })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(entry_lines(text))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_lines(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_host(&self, host: &str) -> bool {
        let mut h = host;
        loop {
            if self.entries.contains(h) {
                return true;
            }
            match h.find('.') {
                Some(i) => h = &h[i + 1..],
                None => return false,
            }
        }
    }

    /// Whether a URL (or bare host) points into this list. `None` when the
    /// URL cannot be parsed.
    pub fn matches_url(&self, url: &str) -> Option<bool> {
        host_of(url).map(|h| self.contains_host(&h))
    }

    pub fn sorted_entries(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.entries.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Strips scheme, credentials, port, path and a leading `www.` from a domain
/// list entry.
fn normalize_host(raw: &str) -> Option<String> {
    if raw.is_empty() {
        return None;
    }
    let host = host_of(raw)?;
    if host.is_empty() {
        None
    } else {
        Some(host)
    }
}

/// Lowercased host of a URL or bare host name with any `www.` prefix removed.
pub fn host_of(url: &str) -> Option<String> {
    let url = url.trim();
    if url.is_empty() || url.chars().any(char::is_whitespace) {
        return None;
    }
    let parsed = if url.contains("://") {
        url::Url::parse(url).ok()?
    } else {
        url::Url::parse(&format!("http://{url}")).ok()?
    };
    let host = parsed.host_str()?.trim_end_matches('.').to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host).to_string();
    if host.is_empty() {
        None
    } else {
        Some(host)
    }
}

/// Result of matching a list of URLs against a domain list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UrlTally {
    pub hits: u32,
    pub unparsable: u32,
}

pub fn count_qanon_urls<S: AsRef<str>>(urls: &[S], domains: &DomainList) -> UrlTally {
    let mut tally = UrlTally::default();
    for u in urls {
        match domains.matches_url(u.as_ref()) {
            Some(true) => tally.hits += 1,
            Some(false) => {}
            None => tally.unparsable += 1,
        }
    }
    tally
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_handle_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Pictographic code points. Not the full Unicode emoji property but covers
/// the blocks that appear in tweets.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2300..=0x23FF
        | 0x2B00..=0x2BFF
        | 0x2190..=0x21FF
        | 0x25A0..=0x25FF
        | 0x3030 | 0x303D | 0x3297 | 0x3299
        | 0x00A9 | 0x00AE | 0x203C | 0x2049 | 0x2122 | 0x2139 | 0x24C2)
}

// Skin tones, variation selectors, ZWJ and keycap combiners. Never tokens.
fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32, 0x1F3FB..=0x1F3FF | 0xFE00..=0xFE0F | 0x200D | 0x20E3)
}

/// Span classes recognised while scanning lowercased text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpanKind {
    Url,
    Handle,
    Hashtag,
    Word,
    Emoji,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    kind: SpanKind,
    start: usize,
    end: usize,
}

fn starts_url(rest: &str) -> bool {
    rest.starts_with("http://") || rest.starts_with("https://") || rest.starts_with("www.")
}

const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\'', '\u{2019}', '\u{201D}', '>'];

/// Scans lowercased text into spans. Punctuation and whitespace are skipped.
fn scan(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut spans = Vec::new();
    let mut i = 0;
    let mut prev: Option<char> = None;
    while i < chars.len() {
        let (b, c) = chars[i];
        let prev_word = prev.is_some_and(is_word_char);
        if c.is_whitespace() {
            prev = Some(c);
            i += 1;
            continue;
        }
        if !prev_word && starts_url(&text[b..]) {
            let mut j = i;
            while j < chars.len() && !chars[j].1.is_whitespace() {
                j += 1;
            }
            let mut end = j;
            while end > i + 1 && URL_TRAILING.contains(&chars[end - 1].1) {
                end -= 1;
            }
            spans.push(Span {
                kind: SpanKind::Url,
                start: b,
                end: byte_at(end),
            });
            prev = Some(chars[j - 1].1);
            i = j;
            continue;
        }
        let next = chars.get(i + 1).map(|&(_, c)| c);
        if c == '@' && !prev_word && next.is_some_and(is_handle_char) {
            let mut j = i + 1;
            while j < chars.len() && is_handle_char(chars[j].1) {
                j += 1;
            }
            spans.push(Span {
                kind: SpanKind::Handle,
                start: b,
                end: byte_at(j),
            });
            prev = Some(chars[j - 1].1);
            i = j;
            continue;
        }
        if c == '#' && !prev_word && next.is_some_and(is_word_char) {
            let mut j = i + 1;
            while j < chars.len() && is_word_char(chars[j].1) {
                j += 1;
            }
            spans.push(Span {
                kind: SpanKind::Hashtag,
                start: b,
                end: byte_at(j),
            });
            prev = Some(chars[j - 1].1);
            i = j;
            continue;
        }
        if is_word_char(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_word_char(cj) {
                    j += 1;
                } else if is_apostrophe(cj) && chars.get(j + 1).is_some_and(|&(_, n)| is_word_char(n)) {
                    j += 2;
                } else {
                    break;
                }
            }
            spans.push(Span {
                kind: SpanKind::Word,
                start: b,
                end: byte_at(j),
            });
            prev = Some(chars[j - 1].1);
            i = j;
            continue;
        }
        if is_emoji(c) && !is_emoji_modifier(c) {
            spans.push(Span {
                kind: SpanKind::Emoji,
                start: b,
                end: byte_at(i + 1),
            });
        }
        prev = Some(c);
        i += 1;
    }
    spans
}

/// Ordered lowercase tokens of one tweet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Splits a tweet into lowercase tokens: handles are dropped, hashtags and
/// URLs stay whole, each emoji becomes its own token, and words keep their
/// intra-word apostrophes (normalised to `'`).
pub fn tokenize(text: &str) -> TokenStream {
    let lower = text.to_lowercase();
    let tokens = scan(&lower)
        .into_iter()
        .filter(|s| s.kind != SpanKind::Handle)
        .map(|s| {
            let t = &lower[s.start..s.end];
            if s.kind == SpanKind::Word {
                t.replace('\u{2019}', "'")
            } else {
                t.to_string()
            }
        })
        .collect();
    TokenStream { tokens }
}

/// A keyword match on lowercased text, byte offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeywordMatch {
    pub start: usize,
    pub end: usize,
    pub entry: usize,
}

/// All keyword matches in already-lowercased text.
///
/// Candidate start positions are word starts (plain entries) and hashtag
/// starts (`#` entries) outside URLs and handles. At each start only the
/// longest matching entry counts; matches at different starts may overlap.
pub fn keyword_matches_lower(lower: &str, keywords: &KeywordList) -> Vec<KeywordMatch> {
    let mut out = Vec::new();
    if keywords.is_empty() {
        return out;
    }
    for span in scan(lower) {
        match span.kind {
            SpanKind::Url | SpanKind::Handle | SpanKind::Emoji => {}
            SpanKind::Hashtag => {
                match_at(lower, span.start, keywords, true, &mut out);
                match_at(lower, span.start + 1, keywords, false, &mut out);
            }
            SpanKind::Word => match_at(lower, span.start, keywords, false, &mut out),
        }
    }
    out
}

fn match_at(lower: &str, start: usize, keywords: &KeywordList, hashtag: bool, out: &mut Vec<KeywordMatch>) {
    let rest = &lower[start..];
    for &idx in &keywords.by_length {
        let entry = &keywords.entries[idx];
        if entry.starts_with('#') != hashtag || !rest.starts_with(entry.as_str()) {
            continue;
        }
        let end = start + entry.len();
        if lower[end..].chars().next().is_some_and(is_word_char) {
            continue;
        }
        out.push(KeywordMatch { start, end, entry: idx });
        return;
    }
}

pub fn keyword_matches(text: &str, keywords: &KeywordList) -> Vec<KeywordMatch> {
    keyword_matches_lower(&text.to_lowercase(), keywords)
}

/// Total keyword occurrences (not distinct) in `text`.
pub fn count_keyword_hits(text: &str, keywords: &KeywordList) -> usize {
    keyword_matches(text, keywords).len()
}

/// Byte ranges of URL-like chunks in lowercased text: explicit URLs plus
/// whitespace-delimited bare host names such as `qanon.pub`.
pub fn url_spans_lower(lower: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for chunk in lower.split_inclusive(char::is_whitespace) {
        let start = offset;
        offset += chunk.len();
        let trimmed = chunk.trim_end();
        let lead = trimmed.len() - trimmed.trim_start_matches(['(', '[', '"', '\'', '<']).len();
        let body = trimmed[lead..].trim_end_matches(URL_TRAILING);
        if body.is_empty() || body.starts_with('@') || body.starts_with('#') {
            continue;
        }
        let looks_like_url = starts_url(body)
            || (body.contains('.')
                && body.split('.').all(|l| !l.is_empty())
                && body.split('/').next().is_some_and(|h| {
                    h.rsplit('.').next().is_some_and(|tld| tld.len() >= 2 && tld.chars().all(|c| c.is_ascii_alphabetic()))
                }));
        if looks_like_url {
            out.push((start + lead, start + lead + body.len()));
        }
    }
    out
}

/// English stopword list used by the lexicon filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        Self {
            words: entry_lines(text).collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::parse(&read_lines(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Whether a token may enter the lexicon: not a stopword, at least three
/// characters, at least one alphabetic character. Hashtags are judged on the
/// text after `#`.
pub fn lexicon_token_filter(token: &str, stopwords: &Stopwords) -> bool {
    let body = token.strip_prefix('#').unwrap_or(token);
    body.chars().count() >= 3 && body.chars().any(char::is_alphabetic) && !stopwords.contains(body)
}

/// Every resource the per-record matching needs, bundled for ingestion.
#[derive(Debug, Clone, Default)]
pub struct Matchers {
    pub keywords: KeywordList,
    pub qanon_domains: DomainList,
    pub reliable: DomainList,
    pub unreliable: DomainList,
    pub left_outlets: DomainList,
    pub right_outlets: DomainList,
}

impl Default for KeywordList {
    fn default() -> Self {
        Self::new(Vec::<String>::new()).expect("empty list is valid")
    }
}

impl Matchers {
    /// Keywords and QAnon domains from the bundled sample lists; no
    /// credibility or bias lists.
    pub fn bundled() -> Self {
        Self {
            keywords: KeywordList::parse(DEFAULT_KEYWORDS).expect("bundled keywords"),
            qanon_domains: DomainList::parse(DEFAULT_QANON_DOMAINS).expect("bundled domains"),
            ..Default::default()
        }
    }
}

/// Parses a `domain,leaning` CSV into left and right outlet lists. A header
/// row is skipped when present.
pub fn parse_bias_csv(text: &str) -> Result<(DomainList, DomainList)> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (domain, leaning) = line
            .split_once(',')
            .ok_or_else(|| Error::Data(format!("bias file line {}: expected domain,leaning", n + 1)))?;
        match leaning.trim().to_lowercase().as_str() {
            "left" => left.push(domain.trim().to_string()),
            "right" => right.push(domain.trim().to_string()),
            "leaning" if n == 0 => {}
            other => {
                return Err(Error::Data(format!("bias file line {}: unknown leaning {other:?}", n + 1)));
            }
        }
    }
    Ok((DomainList::new(left)?, DomainList::new(right)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(entries: &[&str]) -> KeywordList {
        KeywordList::new(entries.iter().copied()).unwrap()
    }

    #[test]
    fn keyword_hits_case_insensitive() {
        let k = kw(&["wwg1wga", "#qanon"]);
        assert_eq!(count_keyword_hits("WWG1WGA! #QAnon #qanon", &k), 3);
    }

    #[test]
    fn keyword_token_boundary() {
        assert_eq!(count_keyword_hits("dandelion", &kw(&["lion"])), 0);
        assert_eq!(count_keyword_hits("lion's den", &kw(&["lion"])), 1);
        assert_eq!(count_keyword_hits("lions", &kw(&["lion"])), 0);
    }

    #[test]
    fn plain_keyword_matches_hashtag_body_but_not_reverse() {
        assert_eq!(count_keyword_hits("#deepstate rising", &kw(&["deepstate"])), 1);
        assert_eq!(count_keyword_hits("qanon is here", &kw(&["#qanon"])), 0);
        // both entries: the hashtag span and its body are distinct spans
        assert_eq!(count_keyword_hits("#qanon", &kw(&["qanon", "#qanon"])), 2);
    }

    #[test]
    fn longest_entry_wins_at_same_start() {
        let k = kw(&["deep", "deep state"]);
        assert_eq!(count_keyword_hits("the deep state", &k), 1);
        let m = keyword_matches("the deep state", &k);
        assert_eq!(k.entries()[m[0].entry], "deep state");
    }

    #[test]
    fn keywords_inside_urls_and_handles_ignored() {
        let k = kw(&["qanon"]);
        assert_eq!(count_keyword_hits("see https://qanon.pub/qanon now", &k), 0);
        assert_eq!(count_keyword_hits("cc @qanon", &k), 0);
    }

    #[test]
    fn url_domain_rules() {
        let d = DomainList::new(["qanon.pub"]).unwrap();
        assert_eq!(count_qanon_urls(&["https://qanon.pub/x"], &d).hits, 1);
        assert_eq!(count_qanon_urls(&["https://sub.qanon.pub/y"], &d).hits, 1);
        assert_eq!(count_qanon_urls(&["https://notqanon.pub/"], &d).hits, 0);
        assert_eq!(count_qanon_urls(&["http://WWW.QANON.PUB:8080/a?b=c#d"], &d).hits, 1);
        assert_eq!(count_qanon_urls(&["qanon.pub"], &d).hits, 1);
        let t = count_qanon_urls(&["http://", "not a url"], &d);
        assert_eq!(t, UrlTally { hits: 0, unparsable: 2 });
    }

    #[test]
    fn domain_entries_normalized() {
        let d = DomainList::new(["https://www.Example.com/path"]).unwrap();
        assert_eq!(d.sorted_entries(), vec!["example.com"]);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Follow @alice #WWG1WGA 🙏🙏").tokens, ["follow", "#wwg1wga", "🙏", "🙏"]);
        assert_eq!(tokenize("God wins.").tokens, ["god", "wins"]);
        assert_eq!(tokenize("Don’t stop, it's https://x.co/AbC!").tokens, ["don't", "stop", "it's", "https://x.co/abc"]);
        assert_eq!(tokenize("👍🏽🇺🇸").tokens, ["👍", "🇺", "🇸"]);
        assert_eq!(tokenize("mail me@example.com").tokens, ["mail", "me", "example", "com"]);
    }

    #[test]
    fn lexicon_filter_rules() {
        let s = Stopwords::default();
        assert_eq!(s.len(), 179);
        assert!(!lexicon_token_filter("🙏", &s));
        assert!(lexicon_token_filter("ifb", &s));
        assert!(!lexicon_token_filter("the", &s));
        assert!(!lexicon_token_filter("#the", &s));
        assert!(lexicon_token_filter("#wwg1wga", &s));
        assert!(!lexicon_token_filter("#go", &s));
        assert!(!lexicon_token_filter("2020", &s));
        assert!(!lexicon_token_filter("qa", &s));
    }

    #[test]
    fn keyword_list_dedupes_and_lowercases() {
        let k = kw(&["QAnon", "qanon", "#Q"]);
        assert_eq!(k.entries(), ["qanon", "#q"]);
        assert!(KeywordList::new([""]).is_err());
    }

    #[test]
    fn bias_csv() {
        let (l, r) = parse_bias_csv("domain,leaning\nnyt.com,left\nfoxnews.com,Right\n").unwrap();
        assert!(l.contains_host("nyt.com"));
        assert!(r.contains_host("foxnews.com"));
        assert!(parse_bias_csv("a.com,center").is_err());
    }

    #[test]
    fn url_spans_find_bare_hosts() {
        let s = "visit qanon.pub or https://x.com/a. ok";
        let spans: Vec<&str> = url_spans_lower(s).into_iter().map(|(a, b)| &s[a..b]).collect();
        assert_eq!(spans, ["qanon.pub", "https://x.com/a"]);
        assert!(url_spans_lower("end. of sentence 3.14").is_empty());
    }
}
