use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{GaussianMixture, HmmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKind {
    /// Rising transient into a steady state.
    Onset,
    /// Steady state.
    Rhyme,
    /// Falling transient out of a steady state.
    Offset,
    /// Merged onset/offset class.
    Transient,
    /// Merged class of unrestricted kind.
    Generic,
    Silence,
}

impl UnitKind {
    fn prefix(self) -> &'static str {
        match self {
            UnitKind::Onset => "OS",
            UnitKind::Rhyme => "RH",
            UnitKind::Offset => "OF",
            UnitKind::Transient => "TR",
            UnitKind::Generic => "AU",
            UnitKind::Silence => "SIL",
        }
    }

    pub fn is_transient(self) -> bool {
        matches!(self, UnitKind::Onset | UnitKind::Offset | UnitKind::Transient)
    }
}

/// Unit identifier such as `OS_3`, `RH_3`, `OF_3` or `SIL`.
///
/// Ordered by cluster index, then kind, with silence last; decoding breaks
/// score ties by this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnitLabel {
    pub kind: UnitKind,
    pub index: usize,
}

impl UnitLabel {
    pub const SILENCE: UnitLabel = UnitLabel { kind: UnitKind::Silence, index: 0 };

    pub fn new(kind: UnitKind, index: usize) -> Self {
        Self { kind, index }
    }

    pub fn is_silence(&self) -> bool {
        self.kind == UnitKind::Silence
    }
}

impl Ord for UnitLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.is_silence(), self.index, self.kind).cmp(&(other.is_silence(), other.index, other.kind))
    }
}

impl PartialOrd for UnitLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UnitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_silence() {
            f.write_str("SIL")
        } else {
            write!(f, "{}_{}", self.kind.prefix(), self.index)
        }
    }
}

impl FromStr for UnitLabel {
    type Err = HmmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "SIL" {
            return Ok(UnitLabel::SILENCE);
        }
        let bad = || HmmError::UnknownLabel(s.to_string());
        let (prefix, idx) = s.split_once('_').ok_or_else(bad)?;
        let kind = match prefix {
            "OS" => UnitKind::Onset,
            "RH" => UnitKind::Rhyme,
            "OF" => UnitKind::Offset,
            "TR" => UnitKind::Transient,
            "AU" => UnitKind::Generic,
            _ => return Err(bad()),
        };
        Ok(UnitLabel { kind, index: idx.parse().map_err(|_| bad())? })
    }
}

impl Serialize for UnitLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Left-to-right HMM without skips. `transitions[s] = [stay, advance]`; the
/// last state's advance is the exit probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmUnit {
    pub label: UnitLabel,
    pub states: Vec<GaussianMixture>,
    pub transitions: Vec<[f64; 2]>,
    /// Frames assigned to each state at the last (re-)estimation.
    pub occupancy: Vec<f64>,
}

impl HmmUnit {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub stage: String,
    pub iteration: usize,
    /// Total log-likelihood of the alignments produced with the current model.
    pub log_likelihood: f64,
    /// The same alignments rescored after re-estimation.
    pub rescored_log_likelihood: f64,
    pub frames: usize,
    /// Set on the iteration at which the relative-gain test stopped the loop.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InventoryMeta {
    pub stage: String,
    pub iterations: Vec<IterationRecord>,
    /// States that received no frames in the last re-estimation, as `LABEL/state`.
    pub unvisited_states: Vec<String>,
    pub seed: Option<u64>,
    /// Unit index to source cluster id, for cluster-derived inventories.
    pub cluster_of_index: BTreeMap<usize, usize>,
}

/// The trained set of unit models.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitInventory {
    pub units: BTreeMap<UnitLabel, HmmUnit>,
    pub feature_dim: usize,
    pub variance_floor: Vec<f64>,
    pub meta: InventoryMeta,
}

pub const INVENTORY_FORMAT: &str = "aud-inventory";
pub const INVENTORY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InventoryDoc {
    format: String,
    version: u32,
    feature_dim: usize,
    variance_floor: Vec<f64>,
    units: Vec<HmmUnit>,
    meta: InventoryMeta,
}

impl UnitInventory {
    pub fn new(feature_dim: usize, variance_floor: Vec<f64>) -> Self {
        Self { units: BTreeMap::new(), feature_dim, variance_floor, meta: InventoryMeta::default() }
    }

    pub fn insert(&mut self, unit: HmmUnit) {
        self.units.insert(unit.label, unit);
    }

    pub fn get(&self, label: &UnitLabel) -> Result<&HmmUnit, HmmError> {
        self.units.get(label).ok_or_else(|| HmmError::UnknownLabel(label.to_string()))
    }

    pub fn labels(&self) -> Vec<UnitLabel> {
        self.units.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Checks the structural invariants of every unit.
    pub fn validate(&self) -> Result<(), HmmError> {
        for u in self.units.values() {
            if u.transitions.len() != u.states.len() || u.states.is_empty() {
                return Err(HmmError::Invalid(format!("{}: state/transition count", u.label)));
            }
            for row in &u.transitions {
                if (row[0] + row[1] - 1.0).abs() > 1e-9 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(HmmError::Invalid(format!("{}: transition row {row:?}", u.label)));
                }
            }
            for g in &u.states {
                if g.dim() != self.feature_dim {
                    return Err(HmmError::DimensionMismatch { expected: self.feature_dim, actual: g.dim() });
                }
                let wsum: f64 = g.weights.iter().sum();
                if (wsum - 1.0).abs() > 1e-9 || g.weights.iter().any(|w| *w < 0.0) {
                    return Err(HmmError::Invalid(format!("{}: weights sum {wsum}", u.label)));
                }
                for var in &g.variances {
                    for (v, f) in var.iter().zip(&self.variance_floor) {
                        if !(*v >= *f && *f > 0.0) {
                            return Err(HmmError::Invalid(format!("{}: variance {v} below floor {f}", u.label)));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = InventoryDoc {
            format: INVENTORY_FORMAT.into(),
            version: INVENTORY_VERSION,
            feature_dim: self.feature_dim,
            variance_floor: self.variance_floor.clone(),
            units: self.units.values().cloned().collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("inventory serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HmmError> {
        let doc: InventoryDoc = serde_json::from_str(s).map_err(|e| HmmError::Invalid(e.to_string()))?;
        if doc.format != INVENTORY_FORMAT || doc.version != INVENTORY_VERSION {
            return Err(HmmError::Invalid(format!("unsupported inventory {} v{}", doc.format, doc.version)));
        }
        let inv = UnitInventory {
            units: doc.units.into_iter().map(|u| (u.label, u)).collect(),
            feature_dim: doc.feature_dim,
            variance_floor: doc.variance_floor,
            meta: doc.meta,
        };
        inv.validate()?;
        Ok(inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_text_round_trip() {
        for s in ["OS_0", "RH_12", "OF_3", "TR_1", "AU_7", "SIL"] {
            assert_eq!(s.parse::<UnitLabel>().unwrap().to_string(), s);
        }
        assert!("XX_1".parse::<UnitLabel>().is_err());
        assert!("RH_x".parse::<UnitLabel>().is_err());
    }

    #[test]
    fn label_order_groups_by_cluster_with_silence_last() {
        let mut v: Vec<UnitLabel> = ["SIL", "OF_1", "RH_0", "OS_1", "OS_0"].iter().map(|s| s.parse().unwrap()).collect();
        v.sort();
        let names: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["OS_0", "RH_0", "OS_1", "OF_1", "SIL"]);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let mut inv = UnitInventory::new(1, vec![1e-3]);
        inv.insert(HmmUnit {
            label: UnitLabel::SILENCE,
            states: vec![GaussianMixture::single(vec![0.25], vec![0.5])],
            transitions: vec![[0.75, 0.25]],
            occupancy: vec![4.0],
        });
        let text = inv.to_json();
        assert_eq!(UnitInventory::from_json(&text).unwrap(), inv);
        let bumped = text.replace("\"version\": 1", "\"version\": 9");
        assert!(UnitInventory::from_json(&bumped).is_err());
    }
}
