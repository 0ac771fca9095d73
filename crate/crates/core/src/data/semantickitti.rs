//! SemanticKITTI `.label` files: one little-endian `u32` per point, semantic
//! id in the low 16 bits and instance id in the high 16 bits.

use std::collections::HashMap;

use super::cloud::{Label, IGNORE_LABEL};
use crate::error::{Error, Result};

pub const CLASS_NAMES: [&str; 19] = [
    "car",
    "bicycle",
    "motorcycle",
    "truck",
    "other-vehicle",
    "person",
    "bicyclist",
    "motorcyclist",
    "road",
    "parking",
    "sidewalk",
    "other-ground",
    "building",
    "fence",
    "vegetation",
    "trunk",
    "terrain",
    "pole",
    "traffic-sign",
];

pub fn parse_semantickitti_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::ByteFormat {
            offset: bytes.len() - bytes.len() % 4,
            msg: format!("label file length {} is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|w| u32::from_le_bytes(w.try_into().expect("4-byte chunk")))
        .collect())
}

pub fn serialize_semantickitti_labels(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn semantic_id(word: u32) -> u16 {
    (word & 0xFFFF) as u16
}

pub fn instance_id(word: u32) -> u16 {
    (word >> 16) as u16
}

pub fn pack_label(semantic: u16, instance: u16) -> u32 {
    ((instance as u32) << 16) | semantic as u32
}

/// Raw semantic id → class index table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub table: HashMap<u16, Label>,
}

impl LabelMap {
    /// The standard 19-class mapping; raw ids that map to "unlabeled" become
    /// [`IGNORE_LABEL`].
    pub fn semantickitti() -> Self {
        // (raw id, class index + 1); 0 is unlabeled
        const MAP: [(u16, u16); 34] = [
            (0, 0),
            (1, 0),
            (10, 1),
            (11, 2),
            (13, 5),
            (15, 3),
            (16, 5),
            (18, 4),
            (20, 5),
            (30, 6),
            (31, 7),
            (32, 8),
            (40, 9),
            (44, 10),
            (48, 11),
            (49, 12),
            (50, 13),
            (51, 14),
            (52, 0),
            (60, 9),
            (70, 15),
            (71, 16),
            (72, 17),
            (80, 18),
            (81, 19),
            (99, 0),
            (252, 1),
            (253, 7),
            (254, 6),
            (255, 8),
            (256, 5),
            (257, 5),
            (258, 4),
            (259, 5),
        ];
        LabelMap {
            table: MAP
                .iter()
                .map(|&(raw, c)| (raw, if c == 0 { IGNORE_LABEL } else { c - 1 }))
                .collect(),
        }
    }

    /// Smallest raw id mapping to `class`, used when writing predictions.
    pub fn raw_id(&self, class: Label) -> Option<u16> {
        self.table.iter().filter(|(_, &c)| c == class).map(|(&r, _)| r).min()
    }

    /// Maps every word's semantic id; unknown ids become [`IGNORE_LABEL`] and
    /// are counted.
    pub fn remap(&self, words: &[u32]) -> (Vec<Label>, usize) {
        let mut unknown = 0;
        let labels = words
            .iter()
            .map(|w| match self.table.get(&semantic_id(*w)) {
                Some(c) => *c,
                None => {
                    unknown += 1;
                    IGNORE_LABEL
                }
            })
            .collect();
        if unknown > 0 {
            log::warn!("{unknown} points carry unknown semantic ids");
        }
        (labels, unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bit_fields() {
        assert_eq!(semantic_id(0), 0);
        let w = 0x0001_000A;
        assert_eq!(semantic_id(w), 10);
        assert_eq!(instance_id(w), 1);
        assert_eq!(pack_label(10, 1), w);
    }

    #[test]
    fn misaligned_is_an_error() {
        assert!(matches!(
            parse_semantickitti_labels(&[1, 2, 3]),
            Err(Error::ByteFormat { offset: 0, .. })
        ));
    }

    #[test]
    fn remap_standard_and_unknown() {
        let m = LabelMap::semantickitti();
        let (l, unknown) = m.remap(&[pack_label(10, 3), pack_label(40, 0), pack_label(0, 0), pack_label(77, 0)]);
        assert_eq!(l, vec![0, 8, IGNORE_LABEL, IGNORE_LABEL]);
        assert_eq!(unknown, 1);
        assert_eq!(CLASS_NAMES[3], "truck");
        assert_eq!(m.remap(&[pack_label(258, 0)]).0, vec![3]);
    }

    #[test]
    fn raw_ids_map_back_to_their_class() {
        let m = LabelMap::semantickitti();
        for class in 0..CLASS_NAMES.len() as Label {
            let raw = m.raw_id(class).unwrap();
            assert_eq!(m.remap(&[pack_label(raw, 0)]).0, vec![class]);
        }
        assert_eq!(m.raw_id(0), Some(10));
        assert_eq!(m.raw_id(IGNORE_LABEL), Some(0));
    }

    proptest! {
        #[test]
        fn roundtrip(words in proptest::collection::vec(any::<u32>(), 0..64)) {
            let bytes = serialize_semantickitti_labels(&words);
            prop_assert_eq!(parse_semantickitti_labels(&bytes).unwrap(), words);
        }
    }
}
