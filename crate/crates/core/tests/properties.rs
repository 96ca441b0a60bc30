mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use proptest::prelude::*;

use radsignals::analysis::{interaction_zscores, pearson_matrix};
use radsignals::clustering::adjusted_rand_index;
use radsignals::corpus::{ingest, AnalysisWindow, IngestOptions, Period, TweetKind, TweetRecord};
use radsignals::lexicon::{weighted_log_odds, CorpusCounts};
use radsignals::matchers::{tokenize, DomainList, Matchers};
use radsignals::signals::c_retweets;

use common::{DAY, WEEK};

fn window() -> AnalysisWindow {
    AnalysisWindow::new(
        NaiveDate::from_ymd_opt(2020, 6, 20).unwrap(),
        11,
        NaiveDate::from_ymd_opt(2020, 7, 21).unwrap(),
        5,
    )
    .unwrap()
}

const WORDS: [&str; 12] = [
    "trust", "the", "plan", "#wwg1wga", "Storm", "coffee", "@someone", "https://qanon.pub/a", "hello,", "don't", "🙂", "#MAGA",
];

fn record() -> impl Strategy<Value = (u8, u8, i64, Vec<usize>, u8, u8)> {
    (0u8..6, 0u8..4, 0..(11 * WEEK + 2 * DAY), prop::collection::vec(0..WORDS.len(), 0..8), 0u8..6, 0u8..3)
}

fn build(raw: &[(u8, u8, i64, Vec<usize>, u8, u8)]) -> Vec<TweetRecord> {
    let start = window().start_ts() - DAY;
    raw.iter()
        .enumerate()
        .map(|(i, (user, kind, offset, words, target, profile))| {
            let kind = [TweetKind::Original, TweetKind::Reply, TweetKind::Quote, TweetKind::Retweet][*kind as usize];
            TweetRecord {
                tweet_id: format!("t{i}"),
                user_id: format!("u{user}"),
                timestamp: start + offset,
                kind,
                text: words.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" "),
                urls: if i % 3 == 0 { vec!["https://www.QAnon.pub/x".into()] } else { vec![] },
                retweeted_user_id: (kind == TweetKind::Retweet).then(|| format!("u{target}")),
                profile_description: ["", "Trust the plan", "dad. coffee."][*profile as usize].into(),
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_is_a_monoid(raw in prop::collection::vec(record(), 0..60), cut in 0usize..60, seed in any::<u64>()) {
        let records = build(&raw);
        let m = Matchers::bundled();
        let whole = ingest(records.clone(), &window(), &m, IngestOptions::default());

        let cut = cut.min(records.len());
        let mut left = ingest(records[..cut].to_vec(), &window(), &m, IngestOptions::default());
        left.merge(ingest(records[cut..].to_vec(), &window(), &m, IngestOptions::default()));
        prop_assert_eq!(&left.users, &whole.users);

        let mut shuffled = records;
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 1) >> 7) as usize % (i + 1));
        }
        let reordered = ingest(shuffled, &window(), &m, IngestOptions::default());
        prop_assert_eq!(&reordered.users, &whole.users);
    }

    #[test]
    fn tokenize_is_idempotent(words in prop::collection::vec(0..WORDS.len(), 0..12)) {
        let text = words.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" ");
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join()), once.clone());
        prop_assert!(once.iter().all(|t| !t.starts_with('@') && t.to_lowercase() == t));
    }

    #[test]
    fn domain_match_ignores_case_www_and_path(sub in "[a-z]{1,8}", path in "[a-z0-9/]{0,12}", upper in any::<bool>()) {
        let list = DomainList::new(["qanon.pub"]).unwrap();
        let mut host = format!("{sub}.qanon.pub");
        if upper {
            host = host.to_uppercase();
        }
        prop_assert_eq!(list.matches_url(&format!("https://{host}/{path}")), Some(true));
        prop_assert_eq!(list.matches_url(&format!("https://www.qanon.pub/{path}")), Some(true));
        prop_assert_eq!(list.matches_url(&format!("https://{sub}qanon.pub/{path}")), Some(false));
    }

    #[test]
    fn c_retweets_grows_with_the_seed_set(raw in prop::collection::vec(record(), 1..60), picks in prop::collection::vec(0u8..6, 0..6), extra in 0u8..6) {
        let users = ingest(build(&raw), &window(), &Matchers::bundled(), IngestOptions::default()).users;
        let small: BTreeSet<String> = picks.iter().map(|p| format!("u{p}")).collect();
        let mut large = small.clone();
        large.insert(format!("u{extra}"));
        for agg in users.values() {
            match (c_retweets(agg, &small), c_retweets(agg, &large)) {
                (Ok(a), Ok(b)) => prop_assert!((0.0..=1.0).contains(&a) && a <= b && b <= 1.0),
                (Err(_), Err(_)) => prop_assert_eq!(agg.retweet_target_total(), 0),
                _ => prop_assert!(false, "definedness changed with the seed set"),
            }
        }
    }

    #[test]
    fn log_odds_is_antisymmetric(a in prop::collection::btree_map("[a-e]", 1u64..50, 2..5), b in prop::collection::btree_map("[a-e]", 1u64..50, 1..5)) {
        let (ca, cb) = (CorpusCounts::from_counts(a), CorpusCounts::from_counts(b));
        let fwd = weighted_log_odds(&ca, &cb, 0.01).unwrap();
        let rev = weighted_log_odds(&cb, &ca, 0.01).unwrap();
        for (x, y) in fwd.iter().zip(&rev) {
            prop_assert_eq!(&x.token, &y.token);
            prop_assert!((x.delta + y.delta).abs() < 1e-12 && x.variance == y.variance && x.variance > 0.0);
        }
        let single = CorpusCounts::from_counts([("a", 3u64)]);
        prop_assert!(weighted_log_odds(&single, &single, 0.01).is_err());
    }

    #[test]
    fn pearson_is_bounded(rows in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 3..40)) {
        let m = pearson_matrix(&rows).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                if let Some(r) = m.r[a][b] {
                    prop_assert!((-1.0..=1.0).contains(&r));
                    prop_assert!(m.p[a][b].is_some_and(|p| (0.0..=1.0).contains(&p)));
                }
            }
        }
    }

    #[test]
    fn ari_ignores_label_names(labels in prop::collection::vec(0usize..4, 2..50), other in prop::collection::vec(0usize..4, 2..50)) {
        let n = labels.len().min(other.len());
        let (a, b) = (&labels[..n], &other[..n]);
        let renamed: Vec<usize> = a.iter().map(|l| (l + 1) % 4 + 10).collect();
        prop_assert!((adjusted_rand_index(a, &renamed) - 1.0).abs() < 1e-12);
        prop_assert!((adjusted_rand_index(a, b) - adjusted_rand_index(&renamed, b)).abs() < 1e-12);
        prop_assert!((adjusted_rand_index(a, b) - adjusted_rand_index(b, a)).abs() < 1e-12);
    }
}

fn edge_graph() -> impl Strategy<Value = (Vec<usize>, Vec<(usize, usize, u64)>)> {
    (prop::collection::vec(0usize..3, 6..30), prop::collection::vec((0usize..1000, 0usize..1000, 1u64..4), 1..60)).prop_map(
        |(labels, raw)| {
            let n = labels.len();
            (labels, raw.into_iter().map(|(s, t, w)| (s % n, t % n, w)).collect())
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permutations_keep_cluster_sizes(g in edge_graph(), seed in any::<u64>()) {
        let (labels, edges) = g;
        let m = interaction_zscores(&edges, &labels, 3, Period::Pre, 50, seed).unwrap();
        let weight: u64 = edges.iter().map(|e| e.2).sum();
        let observed: u64 = m.observed.iter().flatten().sum();
        let null: f64 = m.null_mean.iter().flatten().sum();
        prop_assert_eq!(observed, weight);
        prop_assert!((null - weight as f64).abs() < 1e-9 * weight as f64);
        // a cluster with no members can never send or receive
        let sizes: BTreeMap<usize, usize> = labels.iter().fold(BTreeMap::new(), |mut s, &l| { *s.entry(l).or_default() += 1; s });
        for a in 0..3 {
            if !sizes.contains_key(&a) {
                prop_assert!(m.null_mean[a].iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn relabelling_clusters_permutes_the_matrix(g in edge_graph(), seed in any::<u64>()) {
        let (labels, edges) = g;
        let pi = [2usize, 0, 1];
        let relabelled: Vec<usize> = labels.iter().map(|&l| pi[l]).collect();
        let a = interaction_zscores(&edges, &labels, 3, Period::Post, 60, seed).unwrap();
        let b = interaction_zscores(&edges, &relabelled, 3, Period::Post, 60, seed).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                prop_assert_eq!(a.z[x][y], b.z[pi[x]][pi[y]]);
                prop_assert_eq!(a.p[x][y], b.p[pi[x]][pi[y]]);
            }
        }
    }
}
