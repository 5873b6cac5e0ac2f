//! Supervised stream: semantic classes fused with motion-segmentation output
//! into semantic motion labels.

use crate::error::{check_len, Error};
use crate::labels::{Motion, MotionKind, SemanticClassTable, SemanticMotionLabel};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusedLabels {
    /// `None` where the point is outside the supervised validity mask.
    pub labels: Vec<Option<SemanticMotionLabel>>,
}

impl FusedLabels {
    pub fn motion(&self) -> Vec<Option<Motion>> {
        self.labels.iter().map(|l| l.map(|l| l.motion)).collect()
    }

    pub fn valid(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fuses per-point class ids with per-point motion labels.
///
/// Static-by-definition classes are forced static, potentially dynamic
/// classes take the motion label, and ignore classes are masked out. A point
/// whose motion label is missing is masked out as well.
pub fn fuse(
    semantic: &[u16],
    motion_sv: &[Option<Motion>],
    table: &SemanticClassTable,
) -> Result<FusedLabels, Error> {
    check_len("motion_sv", semantic.len(), motion_sv.len())?;
    let labels = semantic
        .iter()
        .zip(motion_sv)
        .map(|(&class_id, &motion)| {
            let kind = table.kind(class_id)?;
            Ok(match (kind, motion) {
                (MotionKind::Ignore, _) | (_, None) => None,
                (MotionKind::StaticByDefinition, Some(_)) => Some(SemanticMotionLabel {
                    class_id,
                    motion: Motion::Static,
                }),
                (MotionKind::PotentiallyDynamic, Some(m)) => Some(SemanticMotionLabel { class_id, motion: m }),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(FusedLabels { labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BUILDING: u16 = 50;
    const BICYCLIST: u16 = 31;
    const UNLABELED: u16 = 0;

    #[test]
    fn building_stays_static() {
        let t = SemanticClassTable::semantic_kitti();
        let f = fuse(&[BUILDING], &[Some(Motion::Dynamic)], &t).unwrap();
        assert_eq!(f.labels, vec![Some(SemanticMotionLabel { class_id: BUILDING, motion: Motion::Static })]);
    }

    #[test]
    fn bicyclist_takes_motion() {
        let t = SemanticClassTable::semantic_kitti();
        let f = fuse(&[BICYCLIST, BICYCLIST], &[Some(Motion::Dynamic), Some(Motion::Static)], &t).unwrap();
        assert_eq!(f.motion(), vec![Some(Motion::Dynamic), Some(Motion::Static)]);
    }

    #[test]
    fn ignore_and_missing_motion_are_masked() {
        let t = SemanticClassTable::semantic_kitti();
        let f = fuse(&[UNLABELED, BUILDING], &[Some(Motion::Static), None], &t).unwrap();
        assert_eq!(f.valid(), vec![false, false]);
    }

    #[test]
    fn unknown_class_without_fallback() {
        let t = SemanticClassTable::parse("[classes]\n50 = { name = \"building\", motion = \"static_by_definition\" }\n").unwrap();
        assert_eq!(fuse(&[12], &[Some(Motion::Static)], &t), Err(Error::UnknownClassId(12)));
    }

    #[test]
    fn length_mismatch() {
        let t = SemanticClassTable::semantic_kitti();
        assert!(matches!(fuse(&[1, 2], &[None], &t), Err(Error::LengthMismatch { .. })));
    }

    fn arb_motion() -> impl Strategy<Value = Option<Motion>> {
        prop_oneof![Just(None), Just(Some(Motion::Static)), Just(Some(Motion::Dynamic))]
    }

    proptest! {
        #[test]
        fn fusion_properties(items in prop::collection::vec(
            (prop::sample::select(vec![0u16, 1, 10, 11, 30, 31, 40, 50, 70, 80, 252, 254, 999]), arb_motion()), 0..100)) {
            let t = SemanticClassTable::semantic_kitti();
            let classes: Vec<u16> = items.iter().map(|x| x.0).collect();
            let motion: Vec<Option<Motion>> = items.iter().map(|x| x.1).collect();
            let fused = fuse(&classes, &motion, &t).unwrap();

            for (i, l) in fused.labels.iter().enumerate() {
                if let Some(l) = l {
                    // class never changes
                    prop_assert_eq!(l.class_id, classes[i]);
                    // dynamic implies potentially dynamic
                    if l.motion.is_dynamic() {
                        prop_assert_eq!(t.kind(l.class_id).unwrap(), MotionKind::PotentiallyDynamic);
                    }
                }
            }

            // idempotence on the valid subset
            let valid: Vec<usize> = (0..classes.len()).filter(|&i| fused.labels[i].is_some()).collect();
            let again = fuse(
                &valid.iter().map(|&i| classes[i]).collect::<Vec<_>>(),
                &valid.iter().map(|&i| fused.labels[i].map(|l| l.motion)).collect::<Vec<_>>(),
                &t,
            ).unwrap();
            prop_assert_eq!(again.labels, valid.iter().map(|&i| fused.labels[i]).collect::<Vec<_>>());
        }
    }
}
