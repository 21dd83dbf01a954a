use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// DSM-5 autism criterion used as a sentence label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criterion {
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
    B4,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::A1,
        Criterion::A2,
        Criterion::A3,
        Criterion::B1,
        Criterion::B2,
        Criterion::B3,
        Criterion::B4,
    ];

    pub const A_GROUP: [Criterion; 3] = [Criterion::A1, Criterion::A2, Criterion::A3];

    pub const B_GROUP: [Criterion; 4] = [Criterion::B1, Criterion::B2, Criterion::B3, Criterion::B4];

    /// Position in [`Criterion::ALL`]; also the head index of a transparent model.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Criterion> {
        Self::ALL.get(index).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Criterion::A1 => "A1",
            Criterion::A2 => "A2",
            Criterion::A3 => "A3",
            Criterion::B1 => "B1",
            Criterion::B2 => "B2",
            Criterion::B3 => "B3",
            Criterion::B4 => "B4",
        }
    }

    pub fn is_a(self) -> bool {
        matches!(self, Criterion::A1 | Criterion::A2 | Criterion::A3)
    }

    pub fn is_b(self) -> bool {
        !self.is_a()
    }

    /// DSM-5 wording of the criterion.
    pub fn description(self) -> &'static str {
        match self {
            Criterion::A1 => "Deficits in social-emotional reciprocity",
            Criterion::A2 => "Deficits in nonverbal communicative behaviors used for social interaction",
            Criterion::A3 => "Deficits in developing, maintaining, and understanding relationships",
            Criterion::B1 => "Stereotyped or repetitive motor movements, use of objects, or speech",
            Criterion::B2 => {
                "Insistence on sameness, inflexible adherence to routines, or ritualized patterns of verbal or nonverbal behavior"
            }
            Criterion::B3 => "Highly restricted, fixated interests that are abnormal in intensity or focus",
            Criterion::B4 => {
                "Hyper- or hyporeactivity to sensory input or unusual interests in sensory aspects of the environment"
            }
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Criterion {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| CorpusError::UnknownCriterion {
                code: s.to_string(),
                line: None,
            })
    }
}

impl Serialize for Criterion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Criterion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        code.parse()
            .map_err(|_| de::Error::custom(format!("unknown criterion code {code:?}")))
    }
}

/// A set of criteria, stored as a 7-bit mask. Iterates in `A1..B4` order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CriterionSet(u8);

impl CriterionSet {
    pub const EMPTY: CriterionSet = CriterionSet(0);
    pub const FULL: CriterionSet = CriterionSet(0b111_1111);

    pub fn from_bits(bits: u8) -> CriterionSet {
        CriterionSet(bits & Self::FULL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, c: Criterion) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn insert(&mut self, c: Criterion) -> bool {
        let fresh = !self.contains(c);
        self.0 |= 1 << c.index();
        fresh
    }

    pub fn remove(&mut self, c: Criterion) -> bool {
        let present = self.contains(c);
        self.0 &= !(1 << c.index());
        present
    }

    pub fn with(mut self, c: Criterion) -> CriterionSet {
        self.insert(c);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: CriterionSet) -> CriterionSet {
        CriterionSet(self.0 | other.0)
    }

    pub fn intersection(self, other: CriterionSet) -> CriterionSet {
        CriterionSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: CriterionSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn a_count(self) -> usize {
        Criterion::A_GROUP.iter().filter(|c| self.contains(**c)).count()
    }

    pub fn b_count(self) -> usize {
        Criterion::B_GROUP.iter().filter(|c| self.contains(**c)).count()
    }

    pub fn iter(self) -> impl Iterator<Item = Criterion> {
        Criterion::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl FromIterator<Criterion> for CriterionSet {
    fn from_iter<I: IntoIterator<Item = Criterion>>(iter: I) -> Self {
        let mut set = CriterionSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Debug for CriterionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for CriterionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<&str> = self.iter().map(Criterion::code).collect();
        write!(f, "{{{}}}", codes.join(","))
    }
}

impl Serialize for CriterionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for c in self.iter() {
            seq.serialize_element(&c)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for CriterionSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SetVisitor;

        impl<'de> Visitor<'de> for SetVisitor {
            type Value = CriterionSet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of criterion codes")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<CriterionSet, A::Error> {
                let mut set = CriterionSet::EMPTY;
                while let Some(c) = seq.next_element::<Criterion>()? {
                    set.insert(c);
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(SetVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_partition_the_seven_criteria() {
        assert_eq!(Criterion::ALL.len(), 7);
        assert!(Criterion::A_GROUP.iter().all(|c| c.is_a()));
        assert!(Criterion::B_GROUP.iter().all(|c| c.is_b()));
        for (i, c) in Criterion::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.code().parse::<Criterion>().unwrap(), *c);
        }
    }

    #[test]
    fn unknown_code_is_rejected() {
        assert!(matches!(
            "C9".parse::<Criterion>(),
            Err(CorpusError::UnknownCriterion { .. })
        ));
    }

    #[test]
    fn set_operations() {
        let mut s = CriterionSet::EMPTY;
        assert!(s.insert(Criterion::B3));
        assert!(!s.insert(Criterion::B3));
        s.insert(Criterion::A1);
        assert_eq!(s.len(), 2);
        assert_eq!(s.a_count(), 1);
        assert_eq!(s.b_count(), 1);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![Criterion::A1, Criterion::B3]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["A1","B3"]"#);
        let back: CriterionSet = serde_json::from_str(r#"["B3","A1","A1"]"#).unwrap();
        assert_eq!(back, s);
        assert!(s.remove(Criterion::A1));
        assert!(!s.contains(Criterion::A1));
    }
}
