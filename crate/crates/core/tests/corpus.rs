use std::collections::BTreeSet;

use metasynth_core::{
    compute_stats, split_corpus, Corpus, CorpusError, MeasureUnit, MetaRecord, SplitSpec, SupportAbstract,
};
use proptest::prelude::*;

fn synthetic(n: usize) -> Corpus {
    let records = (0..n)
        .map(|i| MetaRecord {
            id: format!("m{i:04}"),
            meta_abstract: format!("meta abstract {i}"),
            supports: (0..1 + i % 5)
                .map(|j| SupportAbstract {
                    id: format!("s{j}"),
                    text: format!("support {j} of record {i}"),
                })
                .collect(),
            source_tag: None,
        })
        .collect();
    Corpus::new("mad", records).unwrap()
}

fn ids(c: &Corpus) -> BTreeSet<String> {
    c.records().iter().map(|r| r.id.clone()).collect()
}

#[test]
fn split_400_175_50() {
    let corpus = synthetic(625);
    let spec = SplitSpec { train_count: 400, val_count: 175, test_count: 50, shuffle_seed: 42 };
    let s = split_corpus(&corpus, &spec).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (400, 175, 50));
    let (a, b, c) = (ids(&s.train), ids(&s.val), ids(&s.test));
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    assert_eq!(a.len() + b.len() + c.len(), 625);
    assert_eq!(split_corpus(&corpus, &spec).unwrap(), s);
    let other = split_corpus(&corpus, &SplitSpec { shuffle_seed: 43, ..spec }).unwrap();
    assert_ne!(ids(&other.test), c);
}

#[test]
fn oversized_split_fails() {
    let spec = SplitSpec { train_count: 10, val_count: 0, test_count: 0, shuffle_seed: 0 };
    assert_eq!(
        split_corpus(&synthetic(5), &spec),
        Err(CorpusError::SplitTooLarge { requested: 10, available: 5 })
    );
}

#[test]
fn stats_count_supports() {
    let corpus = synthetic(10);
    let stats = compute_stats(&corpus, MeasureUnit::WhitespaceToken);
    assert_eq!(stats.total_records, 10);
    assert_eq!(stats.total_supports, corpus.total_supports());
    assert_eq!(stats.support_count_histogram.values().sum::<usize>(), 10);
}

proptest! {
    #[test]
    fn splits_are_disjoint_and_sized(n in 1usize..80, a in 0usize..80, b in 0usize..80, seed in any::<u64>()) {
        let corpus = synthetic(n);
        let train = a.min(n);
        let val = b.min(n - train);
        let test = n - train - val;
        let s = split_corpus(&corpus, &SplitSpec { train_count: train, val_count: val, test_count: test, shuffle_seed: seed }).unwrap();
        let all: BTreeSet<String> = ids(&s.train).union(&ids(&s.val)).cloned().collect::<BTreeSet<_>>().union(&ids(&s.test)).cloned().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (train, val, test));
    }
}
