//! Majority-vote aggregation of retrieved specifications.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bsl::{ActionName, BslSpec, ConditionName};
use crate::knowledge::{antonym_of, canonicalize, SynonymDictionary};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("cannot aggregate an empty template set")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportedInvariant {
    pub name: ConditionName,
    pub support: usize,
}

/// Consensus conditions over `k` templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonTemplate {
    pub invariants: Vec<SupportedInvariant>,
    pub k: usize,
    pub action_modes: BTreeMap<ActionName, usize>,
}

impl CommonTemplate {
    pub fn names(&self) -> impl Iterator<Item = &ConditionName> {
        self.invariants.iter().map(|i| &i.name)
    }

    /// Copy without `name`; used to compare audits under a smaller checklist.
    pub fn without(&self, name: &ConditionName) -> Self {
        let mut t = self.clone();
        t.invariants.retain(|i| &i.name != name);
        t
    }
}

pub fn majority_threshold(k: usize) -> usize {
    k.div_ceil(2)
}

/// Canonicalizes, counts support per distinct template, prunes below
/// `ceil(k/2)` and resolves surviving antonym pairs (equal support drops
/// both, otherwise the minority side is dropped).
pub fn aggregate_invariants(specs: &[BslSpec], d: &SynonymDictionary) -> Result<CommonTemplate, AggregateError> {
    aggregate_with_threshold(specs, d, majority_threshold(specs.len()))
}

/// Every canonical condition any template enforces, with no voting or
/// conflict filtering. Baseline for measuring what aggregation suppresses.
pub fn union_template(specs: &[BslSpec], d: &SynonymDictionary) -> Result<CommonTemplate, AggregateError> {
    let support = support_counts(specs, d)?;
    let invariants = sorted(support.into_iter().map(|(name, support)| SupportedInvariant { name, support }).collect());
    Ok(CommonTemplate { invariants, k: specs.len(), action_modes: action_modes(specs) })
}

fn aggregate_with_threshold(
    specs: &[BslSpec],
    d: &SynonymDictionary,
    threshold: usize,
) -> Result<CommonTemplate, AggregateError> {
    let mut support = support_counts(specs, d)?;
    support.retain(|_, s| *s >= threshold);

    let mut dropped = BTreeSet::new();
    for (name, &s) in &support {
        let Some(other) = antonym_of(name, d) else { continue };
        let Some(&t) = support.get(&other) else { continue };
        if s <= t {
            dropped.insert(name.clone());
        }
    }
    support.retain(|name, _| !dropped.contains(name));

    let invariants = sorted(support.into_iter().map(|(name, support)| SupportedInvariant { name, support }).collect());
    Ok(CommonTemplate { invariants, k: specs.len(), action_modes: action_modes(specs) })
}

fn support_counts(specs: &[BslSpec], d: &SynonymDictionary) -> Result<BTreeMap<ConditionName, usize>, AggregateError> {
    if specs.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let mut support = BTreeMap::new();
    for spec in specs {
        let distinct: BTreeSet<ConditionName> = spec.checks.iter().map(|c| canonicalize(c, d)).collect();
        for name in distinct {
            *support.entry(name).or_insert(0) += 1;
        }
    }
    Ok(support)
}

fn action_modes(specs: &[BslSpec]) -> BTreeMap<ActionName, usize> {
    let mut modes = BTreeMap::new();
    for spec in specs {
        *modes.entry(spec.action.clone()).or_insert(0) += 1;
    }
    modes
}

fn sorted(mut v: Vec<SupportedInvariant>) -> Vec<SupportedInvariant> {
    v.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.name.cmp(&b.name)));
    v
}
