//! Randomized index operations checked against linear scans.

use std::collections::{BTreeMap, BTreeSet};

use gramprof_core::corpus::LevelSet;
use gramprof_core::fixtures::{random_documents, RANDOM_TAGS};
use gramprof_core::index::{DocumentIndex, DocumentRecord, Query};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_queries(levels: &LevelSet) -> Vec<Query> {
    let gis = RANDOM_TAGS.iter().map(|t| Some(t.to_string())).chain([None, Some("absent".into())]);
    let mut out = Vec::new();
    for gi in gis {
        for level in levels.names().iter().map(|l| Some(l.clone())).chain([None]) {
            for lang in [None, Some("en".to_string()), Some("zh".to_string()), Some("fr".to_string())] {
                out.push(Query {
                    gi: gi.clone(),
                    level: level.clone(),
                    lang,
                });
            }
        }
    }
    out
}

fn linear_scan(docs: &BTreeMap<String, DocumentRecord>, levels: &LevelSet, q: &Query) -> Vec<String> {
    let mut hits: Vec<(usize, String)> = docs
        .values()
        .filter(|d| q.gi.as_ref().is_none_or(|g| d.gi_set.contains(g)))
        .filter(|d| q.level.as_ref().is_none_or(|l| *l == d.difficulty))
        .filter(|d| q.lang.as_ref().is_none_or(|l| *l == d.lang))
        .map(|d| (levels.ordinal(&d.difficulty).unwrap(), d.id.clone()))
        .collect();
    hits.sort();
    hits.into_iter().map(|(_, id)| id).collect()
}

fn check(index: &DocumentIndex, model: &BTreeMap<String, DocumentRecord>, queries: &[Query]) {
    assert_eq!(index.len(), model.len());
    for q in queries {
        let got: Vec<String> = index.search(q).unwrap().iter().map(|d| d.id.clone()).collect();
        assert_eq!(got, linear_scan(model, index.levels(), q), "{q:?}");
    }
    let tags: BTreeSet<&str> = model.values().flat_map(|d| d.gi_set.iter().map(String::as_str)).collect();
    assert_eq!(index.tags(), tags);
}

#[test]
fn random_operation_sequences_match_linear_scans() {
    let levels = LevelSet::cefr();
    let queries = all_queries(&levels);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_documents(60, seed, &levels);
        let mut index = DocumentIndex::new(levels.clone());
        let mut model = BTreeMap::new();
        for step in 0..150 {
            let doc = pool[rng.random_range(0..pool.len())].clone();
            match rng.random_range(0..4) {
                0 => {
                    let removed = index.remove(&doc.id);
                    assert_eq!(removed, model.remove(&doc.id));
                }
                1 => {
                    // Overwrite under an existing id with another document's content.
                    let mut other = pool[rng.random_range(0..pool.len())].clone();
                    other.id = doc.id.clone();
                    index.insert(other.clone(), true).unwrap();
                    model.insert(other.id.clone(), other);
                }
                _ => {
                    let existed = model.contains_key(&doc.id);
                    assert_eq!(index.insert(doc.clone(), false).is_err(), existed);
                    model.entry(doc.id.clone()).or_insert(doc);
                }
            }
            if step % 25 == 0 {
                check(&index, &model, &queries);
            }
        }
        check(&index, &model, &queries);

        let mut buf = Vec::new();
        index.write(&mut buf).unwrap();
        let reloaded = DocumentIndex::read(&buf[..]).unwrap();
        assert_eq!(reloaded, index);
        check(&reloaded, &model, &queries);
    }
}

#[test]
fn unknown_level_is_an_error_unknown_tag_is_empty() {
    let levels = LevelSet::cefr();
    let mut index = DocumentIndex::new(levels.clone());
    for doc in random_documents(10, 9, &levels) {
        index.insert(doc, false).unwrap();
    }
    let q = |gi: Option<&str>, level: Option<&str>| Query {
        gi: gi.map(str::to_string),
        level: level.map(str::to_string),
        lang: None,
    };
    assert!(index.search(&q(None, Some("D1"))).is_err());
    assert!(index.search(&q(Some("absent"), None)).unwrap().is_empty());
}
