//! The accuracy function g(·): a lookup from dropped-block sets to expected
//! network accuracy, loaded from a measured table.
//!
//! Profile documents are TOML:
//!
//! ```toml
//! # free-form comments
//! source_label = "user-measured"
//! max_drop_size = 2            # optional, default 2
//!
//! [[entry]]
//! drop = []                    # sorted 1-based block ids; [] is the baseline
//! accuracy = 0.9473
//!
//! [[entry]]
//! drop = [3]
//! accuracy = 0.90
//! memory_gain_bytes = 4816896  # optional, cross-checked against the model
//! compute_gain_mults = 218365952
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{effective_edges, BlockKind, MemoryMode, ResNetGraph};

pub const DEFAULT_MAX_DROP_SIZE: usize = 2;
pub const SYNTHETIC_LABEL: &str = "synthetic-default";
/// Test accuracy of the unmodified network.
pub const SYNTHETIC_BASELINE: f64 = 0.9473;
const SYNTHETIC_SINGLE: f64 = 0.90;
const SYNTHETIC_PAIR: f64 = 0.82;

/// Sorted, duplicate-free set of 1-based block ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DropSet(Vec<usize>);

impl DropSet {
    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Blocks with `keep[j] == false`.
    pub fn from_keep(keep: &[bool]) -> Self {
        Self(
            keep.iter()
                .enumerate()
                .filter(|(_, &k)| !k)
                .map(|(i, _)| i + 1)
                .collect(),
        )
    }

    pub fn to_keep(&self, m: usize) -> Vec<bool> {
        let mut keep = vec![true; m];
        for &id in &self.0 {
            keep[id - 1] = false;
        }
        keep
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn is_subset(&self, other: &DropSet) -> bool {
        self.0.iter().all(|&id| other.contains(id))
    }
}

impl fmt::Display for DropSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_char('{')?;
        for (k, id) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_char(',')?;
            }
            write!(f, "{id}")?;
        }
        f.write_char('}')
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub drop_set: DropSet,
    pub accuracy: f64,
    pub memory_gain: Option<u64>,
    pub compute_gain: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyProfile {
    baseline: f64,
    entries: BTreeMap<DropSet, ProfileEntry>,
    source_label: String,
    max_drop_size: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    source_label: String,
    #[serde(default = "default_max_drop")]
    max_drop_size: usize,
    #[serde(rename = "entry", default)]
    entries: Vec<EntryDoc>,
}

fn default_max_drop() -> usize {
    DEFAULT_MAX_DROP_SIZE
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    drop: Vec<usize>,
    accuracy: f64,
    memory_gain_bytes: Option<u64>,
    compute_gain_mults: Option<u64>,
}

impl AccuracyProfile {
    /// Validates a set of entries against `graph`. Exactly one entry must
    /// have the empty drop set; it defines the baseline.
    pub fn new(
        source_label: impl Into<String>,
        entries: Vec<ProfileEntry>,
        max_drop_size: usize,
        graph: &ResNetGraph,
        mode: MemoryMode,
    ) -> Result<Self> {
        let source_label = source_label.into();
        if source_label.trim().is_empty() {
            return Err(Error::Parse("source_label must not be empty".into()));
        }
        let m = graph.len();
        let mut map = BTreeMap::new();
        for entry in entries {
            let name = entry.drop_set.to_string();
            let invalid = |reason: String| Error::Validation {
                entry: name.clone(),
                reason,
            };
            if !(0.0..=1.0).contains(&entry.accuracy) {
                return Err(invalid(format!("accuracy {} outside [0, 1]", entry.accuracy)));
            }
            if entry.drop_set.len() > max_drop_size {
                return Err(invalid(format!("drops more than {max_drop_size} blocks")));
            }
            if let Some(&bad) = entry.drop_set.ids().iter().find(|&&id| id < 2 || id > m) {
                return Err(invalid(format!("block {bad} outside 2..={m}")));
            }
            effective_edges(graph, &entry.drop_set.to_keep(m)).map_err(|e| invalid(e.to_string()))?;
            if let Some(gain) = entry.memory_gain {
                let expected: u64 = entry.drop_set.ids().iter().map(|&id| graph.memory_load(id, mode)).sum();
                if gain != expected {
                    return Err(invalid(format!(
                        "memory gain {gain} disagrees with the model ({expected})"
                    )));
                }
            }
            if let Some(gain) = entry.compute_gain {
                let expected: u64 = entry.drop_set.ids().iter().map(|&id| graph.compute_load(id)).sum();
                if gain != expected {
                    return Err(invalid(format!(
                        "compute gain {gain} disagrees with the model ({expected})"
                    )));
                }
            }
            if map.contains_key(&entry.drop_set) {
                return Err(invalid("duplicate drop set".into()));
            }
            map.insert(entry.drop_set.clone(), entry);
        }
        let baseline = match map.get(&DropSet::empty()) {
            Some(e) => e.accuracy,
            None => {
                return Err(Error::Validation {
                    entry: "{}".into(),
                    reason: "profile lacks the empty (baseline) drop set".into(),
                })
            }
        };
        if let Some(e) = map.values().find(|e| e.accuracy > baseline) {
            return Err(Error::Validation {
                entry: e.drop_set.to_string(),
                reason: format!("accuracy {} exceeds the baseline {baseline}", e.accuracy),
            });
        }
        Ok(Self {
            baseline,
            entries: map,
            source_label,
            max_drop_size,
        })
    }

    /// Parses and validates a profile document.
    pub fn parse(text: &str, graph: &ResNetGraph, mode: MemoryMode) -> Result<Self> {
        let doc: ProfileDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let entries = doc
            .entries
            .into_iter()
            .map(|e| {
                let drop_set = DropSet::new(e.drop.iter().copied());
                if drop_set.len() != e.drop.len() {
                    return Err(Error::Validation {
                        entry: drop_set.to_string(),
                        reason: "repeated block id".into(),
                    });
                }
                Ok(ProfileEntry {
                    drop_set,
                    accuracy: e.accuracy,
                    memory_gain: e.memory_gain_bytes,
                    compute_gain: e.compute_gain_mults,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.source_label, entries, doc.max_drop_size, graph, mode)
    }

    pub fn load(path: &Path, graph: &ResNetGraph, mode: MemoryMode) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text, graph, mode)
    }

    /// Synthetic stand-in for a measured table: every identity block may be
    /// dropped alone (0.90) and every adjacent identity pair together (0.82).
    /// These numbers are illustrative, not measurements.
    pub fn synthetic_default(graph: &ResNetGraph) -> Self {
        let identity: Vec<usize> = graph
            .blocks
            .iter()
            .filter(|b| b.kind == BlockKind::IdentityBlock && b.droppable)
            .map(|b| b.block_id)
            .collect();
        let entry = |ids: Vec<usize>, accuracy| ProfileEntry {
            drop_set: DropSet::new(ids),
            accuracy,
            memory_gain: None,
            compute_gain: None,
        };
        let mut entries = vec![entry(vec![], SYNTHETIC_BASELINE)];
        entries.extend(identity.iter().map(|&j| entry(vec![j], SYNTHETIC_SINGLE)));
        entries.extend(
            identity
                .windows(2)
                .filter(|w| w[1] == w[0] + 1)
                .map(|w| entry(vec![w[0], w[1]], SYNTHETIC_PAIR)),
        );
        Self::new(
            SYNTHETIC_LABEL,
            entries,
            DEFAULT_MAX_DROP_SIZE,
            graph,
            MemoryMode::Inputs,
        )
        .expect("synthetic profile is valid for any ResNet graph")
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn max_drop_size(&self) -> usize {
        self.max_drop_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ProfileEntry> {
        self.entries.values()
    }

    pub fn accuracy_of(&self, drop_set: &DropSet) -> Option<f64> {
        self.entries.get(drop_set).map(|e| e.accuracy)
    }

    /// g(y): accuracy for the blocks dropped by `keep`, or `None` when that
    /// combination was never measured.
    pub fn g_lookup(&self, keep: &[bool]) -> Option<f64> {
        self.accuracy_of(&DropSet::from_keep(keep))
    }

    /// Profiled drop sets meeting `threshold`, best accuracy first, then
    /// fewest dropped blocks, then lexicographic.
    pub fn allowed_drop_sets(&self, threshold: f64) -> Result<Vec<ProfileEntry>> {
        if self.baseline < threshold {
            return Err(Error::EmptyFeasibleSet {
                threshold,
                baseline: self.baseline,
            });
        }
        let mut allowed: Vec<ProfileEntry> = self
            .entries
            .values()
            .filter(|e| e.accuracy >= threshold)
            .cloned()
            .collect();
        allowed.sort_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then(a.drop_set.len().cmp(&b.drop_set.len()))
                .then(a.drop_set.cmp(&b.drop_set))
        });
        Ok(allowed)
    }

    /// Serializes to the documented TOML schema.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        out.push_str("# Accuracy profile: expected network accuracy per dropped-block set.\n");
        out.push_str("# Block ids are 1-based; block 1 (the stem) is never dropped.\n");
        if self.source_label == SYNTHETIC_LABEL {
            out.push_str("# SYNTHETIC: illustrative values, not measured accuracies.\n");
        }
        let _ = writeln!(out, "source_label = {:?}", self.source_label);
        let _ = writeln!(out, "max_drop_size = {}", self.max_drop_size);
        let mut ordered: Vec<&ProfileEntry> = self.entries.values().collect();
        ordered.sort_by(|a, b| {
            a.drop_set
                .len()
                .cmp(&b.drop_set.len())
                .then(a.drop_set.cmp(&b.drop_set))
        });
        for e in ordered {
            let ids: Vec<String> = e.drop_set.ids().iter().map(|id| id.to_string()).collect();
            let _ = write!(
                out,
                "\n[[entry]]\ndrop = [{}]\naccuracy = {:?}\n",
                ids.join(", "),
                e.accuracy
            );
            if let Some(g) = e.memory_gain {
                let _ = writeln!(out, "memory_gain_bytes = {g}");
            }
            if let Some(g) = e.compute_gain {
                let _ = writeln!(out, "compute_gain_mults = {g}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_resnet50;

    fn graph() -> ResNetGraph {
        build_resnet50(224).unwrap()
    }

    #[test]
    fn baseline_only_profile() {
        let text = "source_label = \"user-measured\"\n[[entry]]\ndrop = []\naccuracy = 0.9473\n";
        let p = AccuracyProfile::parse(text, &graph(), MemoryMode::Inputs).unwrap();
        assert_eq!(p.baseline(), 0.9473);
        assert_eq!(p.len(), 1);
        assert_eq!(p.source_label(), "user-measured");
    }

    #[test]
    fn entry_above_baseline_is_rejected() {
        let text =
            "source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9473\n[[entry]]\ndrop = [5]\naccuracy = 0.96\n";
        let err = AccuracyProfile::parse(text, &graph(), MemoryMode::Inputs).unwrap_err();
        assert!(
            matches!(err, Error::Validation { ref entry, .. } if entry == "{5}"),
            "{err}"
        );
    }

    #[test]
    fn malformed_documents() {
        let g = graph();
        let cases = [
            ("not toml [", "parse"),
            ("source_label = \"x\"\n[[entry]]\ndrop = [3]\naccuracy = 0.9\n", "no baseline"),
            ("source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9\n[[entry]]\ndrop = [1]\naccuracy = 0.5\n", "stem"),
            ("source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9\n[[entry]]\ndrop = [18]\naccuracy = 0.5\n", "range"),
            ("source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9\n[[entry]]\ndrop = [3,4,6]\naccuracy = 0.5\n", "too many"),
            ("source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9\n[[entry]]\ndrop = [3]\naccuracy = 0.5\n[[entry]]\ndrop = [3]\naccuracy = 0.4\n", "duplicate"),
            ("source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 1.5\n", "accuracy range"),
            ("source_label = \"x\"\nbogus = 1\n[[entry]]\ndrop = []\naccuracy = 0.9\n", "unknown key"),
            ("source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9\n[[entry]]\ndrop = [3]\naccuracy = 0.5\ncompute_gain_mults = 7\n", "gain"),
        ];
        for (text, why) in cases {
            assert!(AccuracyProfile::parse(text, &g, MemoryMode::Inputs).is_err(), "{why}");
        }
    }

    #[test]
    fn consistent_gains_are_accepted() {
        let g = graph();
        let text = format!(
            "source_label = \"x\"\n[[entry]]\ndrop = []\naccuracy = 0.9\n[[entry]]\ndrop = [3]\naccuracy = 0.8\nmemory_gain_bytes = {}\ncompute_gain_mults = {}\n",
            g.memory_load(3, MemoryMode::Inputs),
            g.compute_load(3)
        );
        let p = AccuracyProfile::parse(&text, &g, MemoryMode::Inputs).unwrap();
        assert_eq!(p.accuracy_of(&DropSet::new([3])), Some(0.8));
    }

    #[test]
    fn synthetic_default_contents() {
        let g = graph();
        let p = AccuracyProfile::synthetic_default(&g);
        assert_eq!(p.source_label(), SYNTHETIC_LABEL);
        assert_eq!(p.baseline(), 0.9473);
        // 12 identity singles + 8 adjacent identity pairs + baseline
        assert_eq!(p.len(), 21);
        let mut keep = vec![true; 17];
        assert_eq!(p.g_lookup(&keep), Some(0.9473));
        keep[4] = false; // block 5 is a convolutional block
        assert_eq!(p.g_lookup(&keep), None);
        keep[4] = true;
        keep[5] = false;
        assert_eq!(p.g_lookup(&keep), Some(0.90));
        keep[6] = false;
        assert_eq!(p.g_lookup(&keep), Some(0.82));
        keep[7] = false;
        assert_eq!(p.g_lookup(&keep), None);
    }

    #[test]
    fn allowed_sets_filter_and_order() {
        let g = graph();
        let p = AccuracyProfile::synthetic_default(&g);
        let all = p.allowed_drop_sets(0.80).unwrap();
        assert_eq!(all.len(), 21);
        assert!(all[0].drop_set.is_empty());
        assert!(all[1..13].iter().all(|e| e.drop_set.len() == 1));
        assert!(all[13..].iter().all(|e| e.drop_set.len() == 2));
        assert_eq!(p.allowed_drop_sets(0.85).unwrap().len(), 13);
        assert_eq!(p.allowed_drop_sets(0.0).unwrap().len(), 21);
        assert!(matches!(p.allowed_drop_sets(0.95), Err(Error::EmptyFeasibleSet { .. })));
    }

    #[test]
    fn toml_round_trip_preserves_lookup() {
        let g = graph();
        let p = AccuracyProfile::synthetic_default(&g);
        let q = AccuracyProfile::parse(&p.to_toml(), &g, MemoryMode::Inputs).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn shipped_profile_matches_generator() {
        let g = graph();
        let shipped = include_str!("../../../profiles/synthetic-default.toml");
        assert_eq!(shipped, AccuracyProfile::synthetic_default(&g).to_toml());
    }

    #[test]
    fn drop_set_helpers() {
        let d = DropSet::new([6, 3, 3]);
        assert_eq!(d.ids(), &[3, 6]);
        assert_eq!(d.to_string(), "{3,6}");
        assert_eq!(DropSet::from_keep(&d.to_keep(8)), d);
        assert!(DropSet::new([3]).is_subset(&d));
        assert!(!DropSet::new([4]).is_subset(&d));
        assert_eq!(DropSet::empty().to_string(), "{}");
    }
}
