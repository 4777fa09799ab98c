use std::collections::{BTreeMap, HashMap};

use logicscan::aggregate::{aggregate_invariants, majority_threshold, union_template};
use logicscan::bsl::{ActionName, BslSpec, ConditionName};
use logicscan::knowledge::{antonym_of, canonicalize, rank_conditions, SynonymDictionary};
use logicscan_testkit::oracle;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(s: &str) -> ConditionName {
    ConditionName::new(s).unwrap()
}

fn spec(checks: &[String], action: &str) -> BslSpec {
    BslSpec::new(checks.iter().map(|x| c(x)).collect(), ActionName::new(action).unwrap())
}

/// A random dictionary over the vocabulary `t0..t{vocab}`: some terms become
/// aliases of canonical terms, and up to three disjoint canonical pairs are
/// declared antonyms.
fn random_dictionary(rng: &mut impl Rng, vocab: usize) -> (BTreeMap<String, String>, Vec<(String, String)>) {
    let mut terms: Vec<String> = (0..vocab).map(|i| format!("t{i}")).collect();
    terms.shuffle(rng);
    let n_canonical = rng.random_range(1..=vocab);
    let (canonical, rest) = terms.split_at(n_canonical);
    let aliases: BTreeMap<String, String> =
        rest.iter().map(|a| (a.clone(), canonical[rng.random_range(0..canonical.len())].clone())).collect();
    let mut pool = canonical.to_vec();
    pool.shuffle(rng);
    let n_pairs = rng.random_range(0..=3).min(pool.len() / 2);
    let pairs = (0..n_pairs).map(|i| (pool[2 * i].clone(), pool[2 * i + 1].clone())).collect();
    (aliases, pairs)
}

fn build(aliases: &BTreeMap<String, String>, pairs: &[(String, String)]) -> SynonymDictionary {
    SynonymDictionary::new(
        aliases.iter().map(|(a, b)| (c(a), c(b))).collect(),
        pairs.iter().map(|(a, b)| (c(a), c(b))).collect(),
    )
    .unwrap()
}

fn observed(specs: &[BslSpec], d: &SynonymDictionary) -> Vec<(String, usize)> {
    aggregate_invariants(specs, d).unwrap().invariants.into_iter().map(|i| (i.name.to_string(), i.support)).collect()
}

#[test]
fn five_hundred_random_sets_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa66);
    for round in 0..500 {
        let k = [1, 3, 4, 5, 7][round % 5];
        let vocab = rng.random_range(1..=10);
        let (aliases, pairs) = random_dictionary(&mut rng, vocab);
        let d = build(&aliases, &pairs);
        let raw: Vec<Vec<String>> = (0..k)
            .map(|_| (0..rng.random_range(0..=5)).map(|_| format!("t{}", rng.random_range(0..vocab))).collect())
            .collect();
        let specs: Vec<BslSpec> = raw.iter().map(|r| spec(r, "act")).collect();
        let expected = oracle::aggregate(&raw, &aliases, &pairs);
        assert_eq!(observed(&specs, &d), expected, "round {round}: {raw:?} {aliases:?} {pairs:?}");

        let template = aggregate_invariants(&specs, &d).unwrap();
        assert_eq!(template.k, k);
        assert!(template.invariants.iter().all(|i| i.support >= majority_threshold(k) && i.support <= k));
        for i in &template.invariants {
            if let Some(other) = antonym_of(&i.name, &d) {
                assert!(template.names().all(|n| *n != other), "both sides of an antonym pair survived");
            }
        }

        let mut shuffled = specs.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(aggregate_invariants(&shuffled, &d).unwrap(), template);
    }
}

#[test]
fn majority_threshold_at_five() {
    let specs: Vec<BslSpec> = [
        &["a", "b"][..],
        &["a", "b"][..],
        &["a", "b"][..],
        &["a"][..],
        &["a"][..],
    ]
    .iter()
    .map(|v| spec(&v.iter().map(|s| s.to_string()).collect::<Vec<_>>(), "x"))
    .collect();
    let mut with_c = specs.clone();
    with_c[0].checks.push(c("z"));
    with_c[1].checks.push(c("z"));
    let got = observed(&with_c, &SynonymDictionary::default());
    assert_eq!(got, [("a".to_string(), 5), ("b".to_string(), 3)]);
}

#[test]
fn balanced_antonyms_are_both_removed() {
    let d = build(&BTreeMap::new(), &[("paused".into(), "not_paused".into())]);
    let specs: Vec<BslSpec> = [&["paused", "a"][..], &["paused", "a"][..], &["not_paused", "a"][..], &["not_paused", "a"][..]]
        .iter()
        .map(|v| spec(&v.iter().map(|s| s.to_string()).collect::<Vec<_>>(), "x"))
        .collect();
    assert_eq!(observed(&specs, &d), [("a".to_string(), 4)]);
}

#[test]
fn aliases_vote_as_one_term() {
    let d = SynonymDictionary::seed();
    let specs: Vec<BslSpec> = ["only_owner", "is_owner", "caller_is_owner"]
        .iter()
        .map(|a| spec(&[a.to_string(), a.to_string()], "withdraw"))
        .collect();
    assert_eq!(observed(&specs, &d), [("caller_is_owner".to_string(), 3)]);
    let union = union_template(&specs, &d).unwrap();
    assert_eq!(union.invariants.len(), 1);
}

fn dictionary_and_name() -> impl Strategy<Value = (u64, String)> {
    (any::<u64>(), prop_oneof!["t[0-9]", "[a-z][a-z0-9_]{0,8}"])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn canonicalize_is_idempotent((seed, name) in dictionary_and_name()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (aliases, pairs) = random_dictionary(&mut rng, 10);
        let d = build(&aliases, &pairs);
        let once = canonicalize(&c(&name), &d);
        prop_assert_eq!(canonicalize(&once, &d), once.clone());
        let seed_dict = SynonymDictionary::seed();
        let once = canonicalize(&c(&name), &seed_dict);
        prop_assert_eq!(canonicalize(&once, &seed_dict), once);
    }

    #[test]
    fn antonyms_are_symmetric_and_irreflexive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (aliases, pairs) = random_dictionary(&mut rng, 10);
        let d = build(&aliases, &pairs);
        for dict in [&d, &SynonymDictionary::seed()] {
            for term in dict.terms() {
                if let Some(other) = antonym_of(term, dict) {
                    prop_assert_ne!(&other, term);
                    let back = antonym_of(&other, dict);
                    prop_assert_eq!(back.as_ref(), Some(term));
                }
            }
        }
    }

    #[test]
    fn rank_matches_multiset_counter(
        raw in prop::collection::vec(prop::collection::vec("[a-e]", 0..6), 0..30),
        top_n in 0usize..8,
    ) {
        let specs: Vec<BslSpec> = raw.iter().map(|r| spec(r, "act")).collect();
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for r in &raw {
            for x in r {
                *counts.entry(x).or_default() += 1;
            }
        }
        let mut expected: Vec<(String, u64)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        expected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        expected.truncate(top_n);
        let got: Vec<(String, u64)> =
            rank_conditions(&specs, top_n).entries.into_iter().map(|(n, v)| (n.to_string(), v)).collect();
        prop_assert_eq!(got, expected);
    }
}
