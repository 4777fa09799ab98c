//! Synonym dictionary, antonym pairs and condition frequency ranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bsl::{BslSpec, ConditionName};

/// Default cut-off for [`rank_conditions`].
pub const DEFAULT_TOP_N: usize = 2000;

pub const SEED_DICTIONARY: &str = include_str!("../data/dictionary.json");

#[derive(Debug, thiserror::Error)]
pub enum DictionaryError {
    #[error("dictionary JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("alias {alias} maps to {target}, which is itself an alias of {next}")]
    ChainedAlias { alias: String, target: String, next: String },
    #[error("antonym pair member {0} is an alias, not a canonical term")]
    NonCanonicalAntonym(String),
    #[error("{0} is paired with itself")]
    ReflexiveAntonym(String),
    #[error("{0} appears in more than one antonym pair")]
    AmbiguousAntonym(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    #[serde(default)]
    canonical: BTreeMap<ConditionName, ConditionName>,
    #[serde(default)]
    antonyms: Vec<(ConditionName, ConditionName)>,
}

/// Alias-to-canonical map plus unordered antonym pairs over canonical terms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymDictionary {
    canonical: BTreeMap<ConditionName, ConditionName>,
    antonyms: BTreeMap<ConditionName, ConditionName>,
    pairs: Vec<(ConditionName, ConditionName)>,
}

impl SynonymDictionary {
    pub fn new(
        canonical: BTreeMap<ConditionName, ConditionName>,
        pairs: Vec<(ConditionName, ConditionName)>,
    ) -> Result<Self, DictionaryError> {
        let mut canonical = canonical;
        // identity entries are allowed on input but carry no information
        canonical.retain(|alias, target| alias != target);
        for (alias, target) in &canonical {
            if let Some(next) = canonical.get(target) {
                return Err(DictionaryError::ChainedAlias {
                    alias: alias.to_string(),
                    target: target.to_string(),
                    next: next.to_string(),
                });
            }
        }
        let mut antonyms = BTreeMap::new();
        for (a, b) in &pairs {
            if a == b {
                return Err(DictionaryError::ReflexiveAntonym(a.to_string()));
            }
            for term in [a, b] {
                if canonical.contains_key(term) {
                    return Err(DictionaryError::NonCanonicalAntonym(term.to_string()));
                }
                if antonyms.contains_key(term) {
                    return Err(DictionaryError::AmbiguousAntonym(term.to_string()));
                }
            }
            antonyms.insert(a.clone(), b.clone());
            antonyms.insert(b.clone(), a.clone());
        }
        Ok(Self { canonical, antonyms, pairs })
    }

    pub fn from_json(text: &str) -> Result<Self, DictionaryError> {
        let file: DictionaryFile = serde_json::from_str(text)?;
        Self::new(file.canonical, file.antonyms)
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn seed() -> Self {
        Self::from_json(SEED_DICTIONARY).expect("seed dictionary is valid")
    }

    pub fn to_json(&self) -> String {
        let file = DictionaryFile { canonical: self.canonical.clone(), antonyms: self.pairs.clone() };
        serde_json::to_string_pretty(&file).expect("dictionary serializes")
    }

    pub fn aliases(&self) -> impl Iterator<Item = (&ConditionName, &ConditionName)> {
        self.canonical.iter()
    }

    pub fn antonym_pairs(&self) -> &[(ConditionName, ConditionName)] {
        &self.pairs
    }

    /// Every term the dictionary mentions, aliases and canonical forms alike.
    pub fn terms(&self) -> BTreeSet<&ConditionName> {
        self.canonical.keys().chain(self.canonical.values()).chain(self.antonyms.keys()).collect()
    }
}

pub fn canonicalize(name: &ConditionName, d: &SynonymDictionary) -> ConditionName {
    d.canonical.get(name).unwrap_or(name).clone()
}

pub fn antonym_of(name: &ConditionName, d: &SynonymDictionary) -> Option<ConditionName> {
    d.antonyms.get(name).cloned()
}

/// Conditions ordered by occurrence count descending, then name ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub entries: Vec<(ConditionName, u64)>,
}

impl FrequencyReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["condition", "count"]).expect("in-memory write");
        for (name, count) in &self.entries {
            w.write_record([name.as_str(), &count.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Counts every check occurrence across `specs` and keeps the `top_n` most
/// frequent.
pub fn rank_conditions<'a>(specs: impl IntoIterator<Item = &'a BslSpec>, top_n: usize) -> FrequencyReport {
    let mut counts: HashMap<&ConditionName, u64> = HashMap::new();
    for spec in specs {
        for check in &spec.checks {
            *counts.entry(check).or_default() += 1;
        }
    }
    let mut entries: Vec<_> = counts.into_iter().map(|(n, c)| (n.clone(), c)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(top_n);
    FrequencyReport { entries }
}
