use std::fmt;
use std::str::FromStr;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Smallest valid SDG number.
pub const SDG_MIN: u8 = 1;
/// Largest valid SDG number.
pub const SDG_MAX: u8 = 17;

/// A set of SDG identifiers, each in `1..=17`.
///
/// Stored as a bitmask so sets are `Copy`, cheap to compare, and always
/// iterate in ascending order. The empty set is a legal value and means
/// "no SDG".
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SdgLabelSet(u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SDG label {0} is outside 1..=17")]
pub struct InvalidSdg(pub i64);

impl SdgLabelSet {
    pub const fn empty() -> Self {
        SdgLabelSet(0)
    }

    /// All seventeen goals.
    pub const fn all() -> Self {
        SdgLabelSet(((1u32 << 18) - 1) & !1)
    }

    pub fn single(sdg: u8) -> Result<Self, InvalidSdg> {
        let mut set = Self::empty();
        set.insert(sdg)?;
        Ok(set)
    }

    pub fn is_valid(sdg: i64) -> bool {
        (SDG_MIN as i64..=SDG_MAX as i64).contains(&sdg)
    }

    /// Inserts a label, returning whether it was newly added.
    pub fn insert(&mut self, sdg: u8) -> Result<bool, InvalidSdg> {
        if !Self::is_valid(sdg as i64) {
            return Err(InvalidSdg(sdg as i64));
        }
        let bit = 1u32 << sdg;
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        Ok(fresh)
    }

    pub fn remove(&mut self, sdg: u8) -> bool {
        if !Self::is_valid(sdg as i64) {
            return false;
        }
        let bit = 1u32 << sdg;
        let had = self.0 & bit != 0;
        self.0 &= !bit;
        had
    }

    pub fn contains(&self, sdg: u8) -> bool {
        Self::is_valid(sdg as i64) && self.0 & (1u32 << sdg) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn intersection(&self, other: &Self) -> Self {
        SdgLabelSet(self.0 & other.0)
    }

    pub fn union(&self, other: &Self) -> Self {
        SdgLabelSet(self.0 | other.0)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        let bits = self.0;
        (SDG_MIN..=SDG_MAX).filter(move |s| bits & (1u32 << s) != 0)
    }

    pub fn to_vec(&self) -> Vec<u8> {
        self.iter().collect()
    }

    /// Semicolon-joined form used in CSV files, e.g. `3;7;12`.
    pub fn to_semicolon_string(&self) -> String {
        self.iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Parses a list of integers separated by `;`, `,` or whitespace.
    /// An empty string yields the empty set.
    pub fn parse_list(raw: &str) -> Result<Self, ParseLabelError> {
        let mut set = Self::empty();
        for part in raw
            .split(|c: char| c == ';' || c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
        {
            let trimmed = part
                .trim_start_matches(|c: char| c.is_ascii_alphabetic())
                .trim();
            let value: i64 = trimmed
                .parse()
                .map_err(|_| ParseLabelError::NotANumber(part.to_string()))?;
            if !Self::is_valid(value) {
                return Err(ParseLabelError::OutOfRange(InvalidSdg(value)));
            }
            set.insert(value as u8).expect("range checked");
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseLabelError {
    #[error("`{0}` is not an SDG number")]
    NotANumber(String),
    #[error(transparent)]
    OutOfRange(#[from] InvalidSdg),
}

impl FromStr for SdgLabelSet {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_list(s)
    }
}

impl TryFrom<&[i64]> for SdgLabelSet {
    type Error = InvalidSdg;

    fn try_from(values: &[i64]) -> Result<Self, Self::Error> {
        let mut set = Self::empty();
        for &v in values {
            if !Self::is_valid(v) {
                return Err(InvalidSdg(v));
            }
            set.insert(v as u8)?;
        }
        Ok(set)
    }
}

impl FromIterator<u8> for SdgLabelSet {
    /// Collects labels, silently skipping values outside `1..=17`.
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut set = Self::empty();
        for sdg in iter {
            let _ = set.insert(sdg);
        }
        set
    }
}

impl fmt::Debug for SdgLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for SdgLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, sdg) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{sdg}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for SdgLabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for SdgLabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LabelVisitor;

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = SdgLabelSet;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of integers in 1..=17")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<SdgLabelSet, A::Error> {
                let mut set = SdgLabelSet::empty();
                while let Some(value) = seq.next_element::<i64>()? {
                    if !SdgLabelSet::is_valid(value) {
                        return Err(de::Error::custom(InvalidSdg(value)));
                    }
                    set.insert(value as u8).map_err(de::Error::custom)?;
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(LabelVisitor)
    }
}
