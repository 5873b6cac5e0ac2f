//! Label domain types: motion states, the semantic class table, fused
//! semantic motion labels and the four discrepancy categories.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IngestError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Motion {
    Static,
    Dynamic,
}

impl Motion {
    pub fn is_dynamic(self) -> bool {
        self == Motion::Dynamic
    }
}

/// How a semantic class relates to motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    StaticByDefinition,
    PotentiallyDynamic,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub motion: MotionKind,
}

/// Maps semantic class ids to a name and a [`MotionKind`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticClassTable {
    entries: BTreeMap<u16, ClassEntry>,
    fallback: Option<MotionKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassTableFile {
    fallback: Option<MotionKind>,
    classes: BTreeMap<String, ClassEntry>,
}

const SEMANTIC_KITTI_TABLE: &str = include_str!("../config/semantic_kitti_classes.toml");

impl SemanticClassTable {
    pub fn new(entries: BTreeMap<u16, ClassEntry>, fallback: Option<MotionKind>) -> Self {
        Self { entries, fallback }
    }

    /// The shipped SemanticKITTI table.
    pub fn semantic_kitti() -> Self {
        Self::parse(SEMANTIC_KITTI_TABLE).expect("bundled class table is valid")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let file: ClassTableFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut entries = BTreeMap::new();
        for (key, entry) in file.classes {
            let id: u16 = key
                .trim()
                .parse()
                .map_err(|_| format!("class id {key:?} is not a 16-bit integer"))?;
            entries.insert(id, entry);
        }
        Ok(Self {
            entries,
            fallback: file.fallback,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Self::parse(&text).map_err(|reason| IngestError::InvalidConfig {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn get(&self, id: u16) -> Option<&ClassEntry> {
        self.entries.get(&id)
    }

    /// Motion kind for `id`, routing unknown ids to the fallback.
    pub fn kind(&self, id: u16) -> Result<MotionKind, Error> {
        match self.entries.get(&id) {
            Some(e) => Ok(e.motion),
            None => self.fallback.ok_or(Error::UnknownClassId(id)),
        }
    }

    pub fn name(&self, id: u16) -> Option<&str> {
        self.entries.get(&id).map(|e| e.name.as_str())
    }

    pub fn fallback(&self) -> Option<MotionKind> {
        self.fallback
    }

    pub fn iter(&self) -> impl Iterator<Item = (u16, &ClassEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}

/// A semantic class together with a motion state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SemanticMotionLabel {
    pub class_id: u16,
    pub motion: Motion,
}

/// Point-wise agreement between the supervised (sv) and self-supervised
/// (ssv) motion labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiscrepancyCategory {
    /// green
    AgreeStatic,
    /// blue
    AgreeDynamic,
    /// red
    SvStaticSsvDynamic,
    /// yellow
    SvDynamicSsvStatic,
}

impl DiscrepancyCategory {
    pub const ALL: [DiscrepancyCategory; 4] = [
        DiscrepancyCategory::AgreeStatic,
        DiscrepancyCategory::AgreeDynamic,
        DiscrepancyCategory::SvStaticSsvDynamic,
        DiscrepancyCategory::SvDynamicSsvStatic,
    ];

    pub fn from_motions(sv: Motion, ssv: Motion) -> Self {
        match (sv, ssv) {
            (Motion::Static, Motion::Static) => DiscrepancyCategory::AgreeStatic,
            (Motion::Dynamic, Motion::Dynamic) => DiscrepancyCategory::AgreeDynamic,
            (Motion::Static, Motion::Dynamic) => DiscrepancyCategory::SvStaticSsvDynamic,
            (Motion::Dynamic, Motion::Static) => DiscrepancyCategory::SvDynamicSsvStatic,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DiscrepancyCategory::AgreeStatic => 0,
            DiscrepancyCategory::AgreeDynamic => 1,
            DiscrepancyCategory::SvStaticSsvDynamic => 2,
            DiscrepancyCategory::SvDynamicSsvStatic => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn color(self) -> &'static str {
        match self {
            DiscrepancyCategory::AgreeStatic => "green",
            DiscrepancyCategory::AgreeDynamic => "blue",
            DiscrepancyCategory::SvStaticSsvDynamic => "red",
            DiscrepancyCategory::SvDynamicSsvStatic => "yellow",
        }
    }

    pub fn is_contradiction(self) -> bool {
        matches!(
            self,
            DiscrepancyCategory::SvStaticSsvDynamic | DiscrepancyCategory::SvDynamicSsvStatic
        )
    }
}

impl fmt::Display for DiscrepancyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.color())
    }
}

impl FromStr for DiscrepancyCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.color() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// All label layers for one scan. Layers are optional; validity masks record
/// which points each stream actually labeled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledScan {
    pub frame_id: u32,
    pub n_points: usize,
    pub semantic: Option<Vec<u16>>,
    pub motion_sv: Option<Vec<Motion>>,
    pub fused: Option<Vec<SemanticMotionLabel>>,
    pub motion_ssv: Option<Vec<Motion>>,
    pub valid_sv: Vec<bool>,
    pub valid_ssv: Vec<bool>,
    pub discrepancy: Option<Vec<Option<DiscrepancyCategory>>>,
}

impl LabeledScan {
    pub fn new(frame_id: u32, n_points: usize) -> Self {
        Self {
            frame_id,
            n_points,
            valid_sv: vec![false; n_points],
            valid_ssv: vec![false; n_points],
            ..Default::default()
        }
    }

    /// Checks layer lengths and that discrepancy labels only appear where
    /// both streams are valid.
    pub fn validate(&self) -> Result<(), Error> {
        let n = self.n_points;
        let check = |what, len: Option<usize>| match len {
            Some(l) if l != n => Err(Error::LengthMismatch { what, expected: n, actual: l }),
            _ => Ok(()),
        };
        check("semantic", self.semantic.as_ref().map(Vec::len))?;
        check("motion_sv", self.motion_sv.as_ref().map(Vec::len))?;
        check("fused", self.fused.as_ref().map(Vec::len))?;
        check("motion_ssv", self.motion_ssv.as_ref().map(Vec::len))?;
        check("valid_sv", Some(self.valid_sv.len()))?;
        check("valid_ssv", Some(self.valid_ssv.len()))?;
        check("discrepancy", self.discrepancy.as_ref().map(Vec::len))?;
        if let Some(disc) = &self.discrepancy {
            for (i, d) in disc.iter().enumerate() {
                let both = self.valid_sv[i] && self.valid_ssv[i];
                if d.is_some() != both {
                    return Err(Error::InvalidParameter {
                        name: "discrepancy",
                        reason: format!("point {i} labeled={} but both-valid={both}", d.is_some()),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrepancy_mapping_is_total_and_injective() {
        let mut seen = std::collections::HashSet::new();
        for sv in [Motion::Static, Motion::Dynamic] {
            for ssv in [Motion::Static, Motion::Dynamic] {
                assert!(seen.insert(DiscrepancyCategory::from_motions(sv, ssv)));
            }
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn codes_round_trip() {
        for c in DiscrepancyCategory::ALL {
            assert_eq!(DiscrepancyCategory::from_code(c.code()), Some(c));
            assert_eq!(c.color().parse::<DiscrepancyCategory>().unwrap(), c);
        }
        assert_eq!(DiscrepancyCategory::from_code(4), None);
    }

    #[test]
    fn default_table_covers_kitti_examples() {
        let t = SemanticClassTable::semantic_kitti();
        assert_eq!(t.kind(50).unwrap(), MotionKind::StaticByDefinition); // building
        assert_eq!(t.kind(31).unwrap(), MotionKind::PotentiallyDynamic); // bicyclist
        assert_eq!(t.kind(10).unwrap(), MotionKind::PotentiallyDynamic); // car
        assert_eq!(t.kind(0).unwrap(), MotionKind::Ignore);
        assert_eq!(t.name(31), Some("bicyclist"));
    }

    #[test]
    fn unknown_id_uses_fallback_or_errors() {
        let strict = SemanticClassTable::parse("[classes]\n1 = { name = \"a\", motion = \"ignore\" }\n").unwrap();
        assert_eq!(strict.kind(7), Err(Error::UnknownClassId(7)));
        let lenient = SemanticClassTable::parse(
            "fallback = \"potentially_dynamic\"\n[classes]\n1 = { name = \"a\", motion = \"ignore\" }\n",
        )
        .unwrap();
        assert_eq!(lenient.kind(7).unwrap(), MotionKind::PotentiallyDynamic);
    }

    #[test]
    fn bad_table_is_rejected() {
        assert!(SemanticClassTable::parse("[classes]\nx = { name = \"a\", motion = \"ignore\" }\n").is_err());
        assert!(SemanticClassTable::parse("[classes]\n1 = { name = \"a\", motion = \"wobbly\" }\n").is_err());
    }

    #[test]
    fn labeled_scan_validation() {
        let mut scan = LabeledScan::new(0, 3);
        scan.valid_sv = vec![true, true, false];
        scan.valid_ssv = vec![true, false, false];
        scan.discrepancy = Some(vec![Some(DiscrepancyCategory::AgreeStatic), None, None]);
        scan.validate().unwrap();
        scan.discrepancy = Some(vec![Some(DiscrepancyCategory::AgreeStatic), Some(DiscrepancyCategory::AgreeStatic), None]);
        assert!(scan.validate().is_err());
        scan.discrepancy = Some(vec![None; 2]);
        assert!(matches!(scan.validate(), Err(Error::LengthMismatch { .. })));
    }
}
