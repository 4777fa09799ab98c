//! Brute-force reference implementations.
//!
//! Each function here answers the same question as a library routine by
//! the most direct method available (a regular expression, a double sort,
//! an exhaustive count), trading speed for obviousness.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;

const WS: &str = r"[ \t\n\r\x0c]*";
const IDENT: &str = "[a-z][a-z0-9_]*";

fn bsl_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let pattern = format!(
            r"\A{WS}order{WS}\({WS}check{WS}\[{WS}(?:{IDENT}(?:{WS},{WS}{IDENT})*)?{WS}\]{WS},{WS}{IDENT}{WS}\){WS}\z"
        );
        Regex::new(&pattern).expect("valid pattern")
    })
}

/// Whether `text` is a well-formed BSL spec.
pub fn bsl_accepts(text: &str) -> bool {
    bsl_regex().is_match(text)
}

/// Number of conditions in a well-formed spec, counted by splitting the
/// bracketed list on commas.
pub fn bsl_check_count(text: &str) -> Option<usize> {
    if !bsl_accepts(text) {
        return None;
    }
    let open = text.find('[')?;
    let close = text.find(']')?;
    let inner = text[open + 1..close].trim();
    Some(if inner.is_empty() { 0 } else { inner.split(',').count() })
}

/// A random identifier drawn from `[a-z][a-z0-9_]{0,len}`.
pub fn random_ident(rng: &mut impl Rng, max_len: usize) -> String {
    const TAIL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
    let mut s = String::new();
    s.push((b'a' + rng.random_range(0..26u8)) as char);
    for _ in 0..rng.random_range(0..=max_len) {
        s.push(TAIL[rng.random_range(0..TAIL.len())] as char);
    }
    s
}

/// One random edit of `text`: a deletion, an insertion of a structural or
/// illegal character, a swap of adjacent characters, or an upper-casing.
pub fn mutate(text: &str, rng: &mut impl Rng) -> String {
    const INSERTS: &[char] = &['(', ')', '[', ']', ',', ' ', 'A', '-', '.', '0', '_', ';', '"'];
    let mut chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return "(".into();
    }
    let i = rng.random_range(0..chars.len());
    match rng.random_range(0..4) {
        0 => {
            chars.remove(i);
        }
        1 => chars.insert(i, INSERTS[rng.random_range(0..INSERTS.len())]),
        2 if chars.len() > 1 => {
            let j = if i + 1 < chars.len() { i + 1 } else { i - 1 };
            chars.swap(i, j);
        }
        _ => chars[i] = chars[i].to_ascii_uppercase(),
    }
    chars.into_iter().collect()
}

/// Smallest `m` with `m >= p * n` (allowing for a 1e-9 rounding slack),
/// clamped to `1..=n`.
pub fn top_count(n: usize, p: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let target = p * n as f64;
    let mut m = 0usize;
    while (m as f64) < target - 1e-9 {
        m += 1;
    }
    m.clamp(1, n)
}

/// Indices of rows in the top `p` fraction by both deployment age and
/// transaction count, in input order. Rows are `(address, days, txs)`;
/// ties go to the lexicographically smaller address.
pub fn filter_indices(rows: &[(String, u64, u64)], p: f64) -> Vec<usize> {
    let m = top_count(rows.len(), p);
    let top = |key: fn(&(String, u64, u64)) -> u64| -> BTreeSet<usize> {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.sort_by(|&a, &b| key(&rows[b]).cmp(&key(&rows[a])).then_with(|| rows[a].0.cmp(&rows[b].0)));
        idx.into_iter().take(m).collect()
    };
    let by_age = top(|r| r.1);
    let by_txs = top(|r| r.2);
    (0..rows.len()).filter(|i| by_age.contains(i) && by_txs.contains(i)).collect()
}

/// Consensus conditions of `specs` by exhaustive counting.
///
/// `aliases` maps an alias to its canonical term; every term in `antonyms`
/// is canonical and belongs to at most one pair. Returns `(name, support)`
/// sorted by support descending, then name.
pub fn aggregate(
    specs: &[Vec<String>],
    aliases: &BTreeMap<String, String>,
    antonyms: &[(String, String)],
) -> Vec<(String, usize)> {
    let canon = |c: &String| aliases.get(c).cloned().unwrap_or_else(|| c.clone());
    let k = specs.len();
    let vocabulary: BTreeSet<String> = specs.iter().flatten().map(canon).collect();
    let mut kept: BTreeMap<String, usize> = BTreeMap::new();
    for term in vocabulary {
        let support = specs.iter().filter(|s| s.iter().any(|c| canon(c) == term)).count();
        if 2 * support >= k {
            kept.insert(term, support);
        }
    }
    let mut drop = Vec::new();
    for (a, b) in antonyms {
        if let (Some(&sa), Some(&sb)) = (kept.get(a), kept.get(b)) {
            if sa <= sb {
                drop.push(a.clone());
            }
            if sb <= sa {
                drop.push(b.clone());
            }
        }
    }
    for d in drop {
        kept.remove(&d);
    }
    let mut out: Vec<(String, usize)> = kept.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// A stored vector with the fields retrieval filters on.
#[derive(Debug, Clone)]
pub struct Item {
    pub id: String,
    pub vector: Vec<f32>,
    pub major: Option<u32>,
    pub category: String,
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Top `k` items by cosine similarity among those matching `major` and
/// (when given) `category` with similarity at least `min_sim`; ties by id.
/// Similarities are compared at six decimals.
pub fn linear_scan(
    items: &[Item],
    query: &[f32],
    major: u32,
    category: Option<&str>,
    k: usize,
    min_sim: f64,
) -> Vec<(String, f64)> {
    let mut hits: Vec<(String, f64)> = items
        .iter()
        .filter(|it| it.major == Some(major) && category.is_none_or(|c| it.category == c))
        .map(|it| (it.id.clone(), (cosine(&it.vector, query) * 1e6).round() / 1e6))
        .filter(|(_, s)| *s >= min_sim)
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits.truncate(k);
    hits
}

/// `[precision, recall, f1, fpr]` straight from the confusion counts.
/// Precision is left undefined on label sets without positives.
pub fn metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> [Option<f64>; 4] {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let precision = if tp + fp == 0.0 || tp + fn_ == 0.0 { None } else { Some(tp / (tp + fp)) };
    let recall = if tp + fn_ == 0.0 { None } else { Some(tp / (tp + fn_)) };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let fpr = if fp + tn == 0.0 { None } else { Some(fp / (fp + tn)) };
    [precision, recall, f1, fpr]
}

/// `fp / (fp + tn)`, undefined on an empty negative class.
pub fn fpr(fp: u64, tn: u64) -> Option<f64> {
    (fp + tn > 0).then(|| fp as f64 / (fp + tn) as f64)
}

/// Percentage with one decimal, or `--`.
pub fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x * 100.0),
        None => "--".into(),
    }
}

/// Names of functions in `source` whose text assigns, increments,
/// decrements or deletes one of `vars`, found with regular expressions
/// over the raw text of each function.
pub fn writers_by_regex(functions: &[(String, String)], vars: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for var in vars {
        let v = regex::escape(var);
        let pattern = format!(
            r"(?:\b{v}\s*(?:\[[^\]]*\]\s*|\.\w+\s*)*(?:[-+*/%|&^]|<<|>>)?=[^=]|\b{v}\s*(?:\[[^\]]*\]\s*)*(?:\+\+|--)|(?:\+\+|--)\s*{v}\b|\bdelete\s+{v}\b)"
        );
        let re = Regex::new(&pattern).expect("valid pattern");
        for (name, text) in functions {
            if re.is_match(text) {
                out.insert(name.clone());
            }
        }
    }
    out
}
