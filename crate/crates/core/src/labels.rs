//! The 10-bit degradation indicator shared by ground-truth labels and perception output.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Bit order of every degradation vector.
pub const LABEL_NAMES: [&str; 10] = [
    "NI-L", "NI-M", "NI-H", "JP", "RA", "HA", "MB", "DB", "LL", "LR",
];

/// Index into a [`DegradationVector`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(usize)]
pub enum LabelBit {
    NoiseLow = 0,
    NoiseMid = 1,
    NoiseHigh = 2,
    Jpeg = 3,
    Rain = 4,
    Haze = 5,
    MotionBlur = 6,
    DefocusBlur = 7,
    LowLight = 8,
    LowRes = 9,
}

impl LabelBit {
    pub const ALL: [LabelBit; 10] = [
        LabelBit::NoiseLow,
        LabelBit::NoiseMid,
        LabelBit::NoiseHigh,
        LabelBit::Jpeg,
        LabelBit::Rain,
        LabelBit::Haze,
        LabelBit::MotionBlur,
        LabelBit::DefocusBlur,
        LabelBit::LowLight,
        LabelBit::LowRes,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        LABEL_NAMES[self.index()]
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_noise(self) -> bool {
        self.index() <= 2
    }
}

/// Binary vector over [`LABEL_NAMES`]. At most one noise bit may be set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct DegradationVector {
    bits: [bool; 10],
}

/// Ground-truth vector derived from a recipe.
pub type LabelVector = DegradationVector;
/// Vector produced by a perceiver.
pub type PerceptionVector = DegradationVector;

impl DegradationVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Fails if more than one noise bit is set.
    pub fn from_bits(bits: [bool; 10]) -> Option<Self> {
        (bits[..3].iter().filter(|&&b| b).count() <= 1).then_some(Self { bits })
    }

    #[inline]
    pub fn get(&self, bit: LabelBit) -> bool {
        self.bits[bit.index()]
    }

    /// Sets `bit`; setting a noise bit clears the other two.
    pub fn set(&mut self, bit: LabelBit) {
        if bit.is_noise() {
            self.bits[..3].iter_mut().for_each(|b| *b = false);
        }
        self.bits[bit.index()] = true;
    }

    pub fn clear(&mut self, bit: LabelBit) {
        self.bits[bit.index()] = false;
    }

    pub fn bits(&self) -> [bool; 10] {
        self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.popcount() == 0
    }

    pub fn iter_set(&self) -> impl Iterator<Item = LabelBit> + '_ {
        LabelBit::ALL.into_iter().filter(|b| self.get(*b))
    }

    pub fn as_ints(&self) -> [u8; 10] {
        self.bits.map(u8::from)
    }
}

impl fmt::Display for DegradationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter_set().map(|b| b.name()).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

impl Serialize for DegradationVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_ints().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DegradationVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ints = <[u8; 10]>::deserialize(d)?;
        if ints.iter().any(|&v| v > 1) {
            return Err(serde::de::Error::custom("label entries must be 0 or 1"));
        }
        Self::from_bits(ints.map(|v| v == 1))
            .ok_or_else(|| serde::de::Error::custom("more than one noise bit set"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_bits_mutually_exclusive() {
        let mut v = DegradationVector::empty();
        v.set(LabelBit::NoiseLow);
        v.set(LabelBit::NoiseHigh);
        assert!(!v.get(LabelBit::NoiseLow));
        assert!(v.get(LabelBit::NoiseHigh));
        assert_eq!(v.popcount(), 1);
        let mut bits = [false; 10];
        bits[0] = true;
        bits[1] = true;
        assert!(DegradationVector::from_bits(bits).is_none());
    }

    #[test]
    fn json_form_is_ten_ints() {
        let mut v = DegradationVector::empty();
        v.set(LabelBit::Haze);
        v.set(LabelBit::NoiseMid);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[0,1,0,0,0,1,0,0,0,0]");
        let back: DegradationVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<DegradationVector>("[1,1,0,0,0,0,0,0,0,0]").is_err());
    }
}
