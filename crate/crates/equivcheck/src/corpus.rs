//! Benchmark data model, JSONL interchange, dataset statistics, and
//! tag-aware train/val/test splitting.
//!
//! The interchange format is one JSON object per line with the fields of
//! [`BenchmarkItem`]; unknown fields round-trip untouched so corpora from
//! other tools stay intact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dafny::{self, AnnotationCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Leetcode,
    Tagcomp,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub source: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTest {
    pub input: String,
    pub expected: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagTriple {
    #[serde(default)]
    pub domain: Vec<String>,
    #[serde(default)]
    pub data_structure: Vec<String>,
    #[serde(default)]
    pub algorithm: Vec<String>,
}

impl TagTriple {
    pub fn all_tags(&self) -> impl Iterator<Item = &str> {
        self.domain
            .iter()
            .chain(&self.data_structure)
            .chain(&self.algorithm)
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub query: Option<String>,
    pub reference_solution: Option<ReferenceSolution>,
    pub dafny_strong: Option<String>,
    pub dafny_weak: Option<String>,
    #[serde(default)]
    pub unit_tests: Vec<UnitTest>,
    #[serde(default)]
    pub tags: TagTriple,
    pub difficulty: Difficulty,
    pub provenance: Provenance,
    /// Fields this tool does not interpret, preserved on round-trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl BenchmarkItem {
    pub fn variant(&self, variant: Variant) -> Option<&str> {
        match variant {
            Variant::Strong => self.dafny_strong.as_deref(),
            Variant::Weak => self.dafny_weak.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Strong,
    Weak,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Strong => "strong",
            Variant::Weak => "weak",
        })
    }
}

/// A non-fatal problem tied to a corpus line or item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDiagnostic {
    /// 1-based line number, 0 when the diagnostic is not line-specific.
    pub line: usize,
    pub item_id: Option<String>,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Load a JSONL corpus. Malformed or invalid lines become diagnostics, not
/// errors; only an unreadable file aborts.
pub fn load_corpus(path: &Path) -> Result<(Vec<BenchmarkItem>, Vec<CorpusDiagnostic>), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: BenchmarkItem = match serde_json::from_str(line) {
            Ok(item) => item,
            Err(e) => {
                diagnostics.push(CorpusDiagnostic {
                    line: lineno,
                    item_id: None,
                    message: format!("invalid record: {e}"),
                });
                continue;
            }
        };
        if item.id.is_empty() {
            diagnostics.push(CorpusDiagnostic {
                line: lineno,
                item_id: None,
                message: "record has empty `id`".to_string(),
            });
            continue;
        }
        if !seen_ids.insert(item.id.clone()) {
            diagnostics.push(CorpusDiagnostic {
                line: lineno,
                item_id: Some(item.id.clone()),
                message: format!("duplicate id `{}`", item.id),
            });
            continue;
        }
        if item.dafny_strong.is_none() && item.dafny_weak.is_none() {
            diagnostics.push(CorpusDiagnostic {
                line: lineno,
                item_id: Some(item.id.clone()),
                message: "neither dafny_strong nor dafny_weak present".to_string(),
            });
            continue;
        }
        if item.dafny_strong.as_deref() == Some("") || item.dafny_weak.as_deref() == Some("") {
            diagnostics.push(CorpusDiagnostic {
                line: lineno,
                item_id: Some(item.id.clone()),
                message: "empty-string Dafny variant; use null for absent".to_string(),
            });
            continue;
        }
        items.push(item);
    }
    Ok((items, diagnostics))
}

/// Write items as JSONL. `load(save(load(x)))` is structurally equal to
/// `load(x)`.
pub fn save_corpus(path: &Path, items: &[BenchmarkItem]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub id: String,
    pub counts: AnnotationCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStats {
    pub functions: f64,
    pub methods: f64,
    pub invariants: f64,
    pub ensures: f64,
    pub decreases: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_item: Vec<ItemStats>,
    pub mean: MeanStats,
    pub diagnostics: Vec<CorpusDiagnostic>,
}

/// Per-item annotation counts for the requested Dafny variant, plus means.
/// Items missing the variant (or failing to parse) are skipped with a
/// diagnostic and excluded from the means.
pub fn compute_stats(items: &[BenchmarkItem], variant: Variant) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for item in items {
        let Some(source) = item.variant(variant) else {
            stats.diagnostics.push(CorpusDiagnostic {
                line: 0,
                item_id: Some(item.id.clone()),
                message: format!("item lacks the {variant} variant; skipped"),
            });
            continue;
        };
        match dafny::parse_unit(source) {
            Ok(unit) => stats.per_item.push(ItemStats {
                id: item.id.clone(),
                counts: unit.count_annotations(),
            }),
            Err(e) => stats.diagnostics.push(CorpusDiagnostic {
                line: 0,
                item_id: Some(item.id.clone()),
                message: format!("{variant} variant does not parse: {e}; skipped"),
            }),
        }
    }
    let n = stats.per_item.len() as f64;
    if n > 0.0 {
        let sum = |f: fn(&AnnotationCounts) -> usize| {
            stats.per_item.iter().map(|s| f(&s.counts) as f64).sum::<f64>()
        };
        stats.mean = MeanStats {
            functions: sum(|c| c.functions) / n,
            methods: sum(|c| c.methods) / n,
            invariants: sum(|c| c.invariants) / n,
            ensures: sum(|c| c.ensures) / n,
            decreases: sum(|c| c.decreases) / n,
        };
    }
    stats
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagOntology {
    pub domain: Vec<String>,
    pub data_structure: Vec<String>,
    pub algorithm: Vec<String>,
}

/// The ontology shipped with the crate (53 domain / 68 data-structure /
/// 480 algorithm tags).
pub const BUNDLED_ONTOLOGY_JSON: &str = include_str!("../assets/tag_ontology.json");

impl TagOntology {
    pub fn bundled() -> TagOntology {
        serde_json::from_str(BUNDLED_ONTOLOGY_JSON).expect("bundled ontology is valid")
    }

    pub fn load(path: &Path) -> Result<TagOntology, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    pub fn pool(&self, category: TagCategory) -> &[String] {
        match category {
            TagCategory::Domain => &self.domain,
            TagCategory::DataStructure => &self.data_structure,
            TagCategory::Algorithm => &self.algorithm,
        }
    }

    /// Tags on `items` that are not in any pool. A warning-level check:
    /// published corpora may use tags outside the bundled asset.
    pub fn unknown_tags(&self, items: &[BenchmarkItem]) -> Vec<CorpusDiagnostic> {
        let known: BTreeSet<&str> = self
            .domain
            .iter()
            .chain(&self.data_structure)
            .chain(&self.algorithm)
            .map(String::as_str)
            .collect();
        let mut out = Vec::new();
        for item in items {
            for tag in item.tags.all_tags() {
                if !known.contains(tag) {
                    out.push(CorpusDiagnostic {
                        line: 0,
                        item_id: Some(item.id.clone()),
                        message: format!("tag `{tag}` not in ontology"),
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagCategory {
    Domain,
    DataStructure,
    Algorithm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<BenchmarkItem>,
    pub val: Vec<BenchmarkItem>,
    pub test: Vec<BenchmarkItem>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("train_n + val_n = {requested} exceeds corpus size {available}")]
    TooFewItems { requested: usize, available: usize },
    #[error(
        "cannot hold out any tag: the least common tag `{tag}` is carried by \
         {carriers} items, leaving too few for a train set of {train_n}"
    )]
    Unsatisfiable {
        tag: String,
        carriers: usize,
        train_n: usize,
    },
    #[error("test items must carry at least one tag, but item `{0}` has none")]
    Untagged(String),
}

/// Deterministic train/val/test split where every test item carries at
/// least one tag no train item has ("held-out" tags).
///
/// Held-out tags are chosen greedily by ascending carrier count, which
/// keeps the excluded-from-train set as small as possible; carriers not
/// drawn into test go to val (val has no tag constraint).
pub fn split_by_tags(
    items: &[BenchmarkItem],
    train_n: usize,
    val_n: usize,
    seed: u64,
) -> Result<Split, SplitError> {
    if train_n + val_n > items.len() {
        return Err(SplitError::TooFewItems {
            requested: train_n + val_n,
            available: items.len(),
        });
    }
    let test_n = items.len() - train_n - val_n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if test_n == 0 {
        // No test set, no constraint: plain seeded shuffle.
        let mut idx: Vec<usize> = (0..items.len()).collect();
        idx.shuffle(&mut rng);
        let (train_idx, val_idx) = idx.split_at(train_n);
        return Ok(Split {
            train: pick(items, train_idx),
            val: pick(items, val_idx),
            test: Vec::new(),
        });
    }

    // tag -> indices of items carrying it, deterministic order.
    let mut carriers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        for tag in item.tags.all_tags() {
            carriers.entry(tag).or_default().push(i);
        }
    }
    if let Some(untagged) = items.iter().find(|i| i.tags.all_tags().next().is_none()) {
        return Err(SplitError::Untagged(untagged.id.clone()));
    }

    let mut order: Vec<(&str, &Vec<usize>)> = carriers.iter().map(|(t, c)| (*t, c)).collect();
    order.sort_by_key(|(t, c)| (c.len(), *t));

    // Grow the held-out carrier set until it can supply test_n items while
    // still leaving train_n items that carry no held-out tag.
    let mut held_out: BTreeSet<usize> = BTreeSet::new();
    let mut feasible = false;
    for (_, tag_carriers) in &order {
        held_out.extend(tag_carriers.iter().copied());
        if held_out.len() >= test_n {
            feasible = items.len() - held_out.len() >= train_n;
            break;
        }
    }
    if !feasible {
        let (tag, c) = &order[0];
        return Err(SplitError::Unsatisfiable {
            tag: tag.to_string(),
            carriers: c.len(),
            train_n,
        });
    }

    let mut held: Vec<usize> = held_out.iter().copied().collect();
    let mut rest: Vec<usize> = (0..items.len()).filter(|i| !held_out.contains(i)).collect();
    held.shuffle(&mut rng);
    rest.shuffle(&mut rng);

    let (test_idx, spill) = held.split_at(test_n);
    let mut train_pool = rest;
    // Carriers beyond test_n cannot enter train; route them to val.
    let mut val_idx: Vec<usize> = spill.to_vec();
    let train_idx: Vec<usize> = train_pool.drain(..train_n).collect();
    val_idx.extend(train_pool);
    debug_assert_eq!(val_idx.len(), val_n);

    Ok(Split {
        train: pick(items, &train_idx),
        val: pick(items, &val_idx),
        test: pick(items, test_idx),
    })
}

fn pick(items: &[BenchmarkItem], idx: &[usize]) -> Vec<BenchmarkItem> {
    idx.iter().map(|&i| items[i].clone()).collect()
}
