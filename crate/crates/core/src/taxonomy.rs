//! The three normative schools and their fifteen subtheories.
//!
//! Canonical orderings: schools are (consequentialism, virtue ethics,
//! deontology), i.e. (alpha, beta, gamma); subtheories are indexed 0..14 in
//! school-major order. Every vector layout in the crate uses these orders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const NUM_SCHOOLS: usize = 3;
pub const NUM_SUBTHEORIES: usize = 15;
pub const SUBTHEORIES_PER_SCHOOL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormativeSchool {
    Consequentialism,
    VirtueEthics,
    Deontology,
}

impl NormativeSchool {
    pub const ALL: [NormativeSchool; NUM_SCHOOLS] = [
        NormativeSchool::Consequentialism,
        NormativeSchool::VirtueEthics,
        NormativeSchool::Deontology,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            NormativeSchool::Consequentialism => "Consequentialism",
            NormativeSchool::VirtueEthics => "Virtue Ethics",
            NormativeSchool::Deontology => "Deontology",
        }
    }

    /// Prior component symbol.
    pub fn symbol(self) -> &'static str {
        match self {
            NormativeSchool::Consequentialism => "alpha",
            NormativeSchool::VirtueEthics => "beta",
            NormativeSchool::Deontology => "gamma",
        }
    }

    pub fn subtheories(self) -> [Subtheory; SUBTHEORIES_PER_SCHOOL] {
        let base = self.index() * SUBTHEORIES_PER_SCHOOL;
        std::array::from_fn(|i| Subtheory::ALL[base + i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subtheory {
    ActUtilitarianism,
    RuleUtilitarianism,
    PreferenceUtilitarianism,
    NegativeUtilitarianism,
    EthicalEgoism,
    AristotelianVirtueEthics,
    StoicVirtueEthics,
    ConfucianVirtueEthics,
    ThomisticVirtueEthics,
    EthicsOfCare,
    KantianDeontology,
    RossPrimaFacieDuties,
    DivineCommandTheory,
    Contractualism,
    RightsBasedDeontology,
}

impl Subtheory {
    pub const ALL: [Subtheory; NUM_SUBTHEORIES] = [
        Subtheory::ActUtilitarianism,
        Subtheory::RuleUtilitarianism,
        Subtheory::PreferenceUtilitarianism,
        Subtheory::NegativeUtilitarianism,
        Subtheory::EthicalEgoism,
        Subtheory::AristotelianVirtueEthics,
        Subtheory::StoicVirtueEthics,
        Subtheory::ConfucianVirtueEthics,
        Subtheory::ThomisticVirtueEthics,
        Subtheory::EthicsOfCare,
        Subtheory::KantianDeontology,
        Subtheory::RossPrimaFacieDuties,
        Subtheory::DivineCommandTheory,
        Subtheory::Contractualism,
        Subtheory::RightsBasedDeontology,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn school(self) -> NormativeSchool {
        NormativeSchool::ALL[self.index() / SUBTHEORIES_PER_SCHOOL]
    }

    pub fn name(self) -> &'static str {
        use Subtheory::*;
        match self {
            ActUtilitarianism => "Act Utilitarianism",
            RuleUtilitarianism => "Rule Utilitarianism",
            PreferenceUtilitarianism => "Preference Utilitarianism",
            NegativeUtilitarianism => "Negative Utilitarianism",
            EthicalEgoism => "Ethical Egoism",
            AristotelianVirtueEthics => "Aristotelian Virtue Ethics",
            StoicVirtueEthics => "Stoic Virtue Ethics",
            ConfucianVirtueEthics => "Confucian Virtue Ethics",
            ThomisticVirtueEthics => "Thomistic Virtue Ethics",
            EthicsOfCare => "Ethics of Care",
            KantianDeontology => "Kantian Deontology",
            RossPrimaFacieDuties => "Ross's Prima Facie Duties",
            DivineCommandTheory => "Divine Command Theory",
            Contractualism => "Contractualism",
            RightsBasedDeontology => "Rights-Based Deontology",
        }
    }

    /// One-line gloss used in annotation prompts.
    pub fn gloss(self) -> &'static str {
        use Subtheory::*;
        match self {
            ActUtilitarianism => "each individual act is judged by the total welfare it produces",
            RuleUtilitarianism => "acts are judged by whether they follow rules whose general adoption maximizes welfare",
            PreferenceUtilitarianism => "the right act best satisfies the preferences of those affected",
            NegativeUtilitarianism => "reducing suffering takes priority over increasing happiness",
            EthicalEgoism => "agents ought to act in their own rational self-interest",
            AristotelianVirtueEthics => "right action flows from virtuous character guided by practical wisdom",
            StoicVirtueEthics => "virtue is rational self-mastery and discipline over passions",
            ConfucianVirtueEthics => "morality is cultivated through roles, ritual propriety, and social harmony",
            ThomisticVirtueEthics => "natural virtues are completed by theological virtues and natural law",
            EthicsOfCare => "moral attention centers on relationships, empathy, and responsiveness to need",
            KantianDeontology => "duties follow from universalizable maxims and respect for persons as ends",
            RossPrimaFacieDuties => "several prima facie duties compete and must be weighed in context",
            DivineCommandTheory => "moral obligation derives from the commands of a divine authority",
            Contractualism => "acts are wrong if disallowed by principles no one could reasonably reject",
            RightsBasedDeontology => "individual rights act as side constraints that may not be violated",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        use Subtheory::*;
        match self {
            AristotelianVirtueEthics => &["aristotelianethics", "aristotelian"],
            StoicVirtueEthics => &["stoicism", "stoic"],
            ConfucianVirtueEthics => &["confucianethics", "confucian"],
            ThomisticVirtueEthics => &["thomisticethics", "thomistic"],
            EthicsOfCare => &["careethics"],
            KantianDeontology => &["kantianethics", "kantian"],
            RossPrimaFacieDuties => &["rossprimafacieduties", "primafacieduties", "ross"],
            DivineCommandTheory => &["divinecommand"],
            RightsBasedDeontology => &["rightsbased"],
            _ => &[],
        }
    }
}

/// Lowercases and strips everything except ASCII letters and digits, plus a
/// trailing possessive `s` after an apostrophe, so "Ross’s Prima Facie Duties",
/// "RossPrimaFacieDuties" and "ross_prima_facie_duties" compare equal.
fn normalize_label(raw: &str) -> String {
    let cleaned = raw.replace(['\'', '\u{2019}'], "'").replace("'s", "");
    cleaned
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label `{}`", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for Subtheory {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_label(s);
        Subtheory::ALL
            .iter()
            .copied()
            .find(|sub| {
                normalize_label(sub.name()) == key
                    || normalize_label(&format!("{sub:?}")) == key
                    || sub.aliases().contains(&key.as_str())
            })
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl FromStr for NormativeSchool {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_label(s);
        NormativeSchool::ALL
            .iter()
            .copied()
            .find(|school| normalize_label(school.name()) == key || school.symbol() == key)
            .or(match key.as_str() {
                "virtue" => Some(NormativeSchool::VirtueEthics),
                "deontological" => Some(NormativeSchool::Deontology),
                "consequentialist" => Some(NormativeSchool::Consequentialism),
                _ => None,
            })
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl fmt::Display for Subtheory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for NormativeSchool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! serde_by_name {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_by_name!(Subtheory);
serde_by_name!(NormativeSchool);

pub fn school_of(sub: Subtheory) -> NormativeSchool {
    sub.school()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parent_schools_follow_the_taxonomy() {
        assert_eq!(school_of(Subtheory::ActUtilitarianism), NormativeSchool::Consequentialism);
        assert_eq!(school_of(Subtheory::KantianDeontology), NormativeSchool::Deontology);
        assert_eq!(school_of(Subtheory::EthicsOfCare), NormativeSchool::VirtueEthics);
        assert_eq!(school_of(Subtheory::DivineCommandTheory), NormativeSchool::Deontology);
        assert_eq!(school_of(Subtheory::EthicalEgoism), NormativeSchool::Consequentialism);
    }

    #[test]
    fn five_children_per_school() {
        let mut sizes = [0usize; NUM_SCHOOLS];
        for sub in Subtheory::ALL {
            sizes[sub.school().index()] += 1;
        }
        assert_eq!(sizes, [5, 5, 5]);
        for school in NormativeSchool::ALL {
            assert!(school.subtheories().iter().all(|s| s.school() == school));
        }
    }

    #[test]
    fn canonical_indices_round_trip() {
        for (i, sub) in Subtheory::ALL.iter().enumerate() {
            assert_eq!(sub.index(), i);
            assert_eq!(Subtheory::from_index(i), Some(*sub));
        }
        assert_eq!(Subtheory::from_index(15), None);
    }

    #[test]
    fn label_parsing_is_lenient() {
        assert_eq!("Ross’s Prima Facie Duties".parse(), Ok(Subtheory::RossPrimaFacieDuties));
        assert_eq!("RossPrimaFacieDuties".parse(), Ok(Subtheory::RossPrimaFacieDuties));
        assert_eq!("rights_based_deontology".parse(), Ok(Subtheory::RightsBasedDeontology));
        assert_eq!("Care Ethics".parse(), Ok(Subtheory::EthicsOfCare));
        assert_eq!("virtue ethics".parse(), Ok(NormativeSchool::VirtueEthics));
        assert_eq!("gamma".parse(), Ok(NormativeSchool::Deontology));
        assert!("Nihilism".parse::<Subtheory>().is_err());
        for sub in Subtheory::ALL {
            assert_eq!(sub.name().parse(), Ok(sub));
        }
    }
}
