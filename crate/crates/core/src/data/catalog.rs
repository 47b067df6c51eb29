use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ProbabilitySequence;

/// Annotation scale: single repetitions (micro) or whole exercise bouts (macro).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Micro,
    Macro,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Micro => "micro",
            Scale::Macro => "macro",
        }
    }

    pub fn catalog(self) -> &'static ClassCatalog {
        match self {
            Scale::Micro => &MICRO,
            Scale::Macro => &MACRO,
        }
    }
}

/// Ordered class names of one scale. Id 0 is always "others".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCatalog {
    pub scale: Scale,
    pub names: &'static [&'static str],
}

pub static MACRO: ClassCatalog = ClassCatalog {
    scale: Scale::Macro,
    names: &["others", "ankle plantarflexors", "knee bends", "abdominal muscles", "chair rising"],
};

pub static MICRO: ClassCatalog = ClassCatalog {
    scale: Scale::Micro,
    names: &[
        "others",
        "micro ankle plantarflexors",
        "micro knee bends",
        "micro abdominal muscles",
        "sit-to-stand",
        "stand-to-sit",
    ],
};

impl ClassCatalog {
    pub const OTHERS: usize = 0;

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Result<&'static str> {
        self.names
            .get(id)
            .copied()
            .ok_or(Error::UnknownClass { scale: self.scale.as_str(), id })
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::UnknownClassName(name.into()))
    }

    /// Macro class that contains a micro class. Sit-to-stand and stand-to-sit
    /// both belong to chair rising.
    pub fn macro_of_micro(micro: usize) -> Result<usize> {
        match micro {
            0..=3 => Ok(micro),
            4 | 5 => Ok(4),
            _ => Err(Error::UnknownClass { scale: "micro", id: micro }),
        }
    }
}

/// One-hot indicator matrix (`classes x T`) of a class track.
pub fn one_hot(track: &[usize], catalog: &ClassCatalog) -> Result<ProbabilitySequence> {
    if let Some(&bad) = track.iter().find(|&&c| c >= catalog.len()) {
        return Err(Error::UnknownClass { scale: catalog.scale.as_str(), id: bad });
    }
    ProbabilitySequence::one_hot(track, catalog.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn catalogs_have_expected_sizes() {
        assert_eq!(MACRO.len(), 5);
        assert_eq!(MICRO.len(), 6);
        assert_eq!(MACRO.name(0).unwrap(), "others");
        assert_eq!(MICRO.id("stand-to-sit").unwrap(), 5);
        assert_eq!(ClassCatalog::macro_of_micro(5).unwrap(), 4);
        assert!(MICRO.name(6).is_err());
    }

    #[test]
    fn one_hot_of_others_track() {
        let oh = one_hot(&[0, 0, 0], &MACRO).unwrap();
        assert_eq!(oh.as_sequence().row(0), &[1.0, 1.0, 1.0]);
        assert!(one_hot(&[0, 5], &MACRO).is_err());
        let track = vec![0, 3, 3, 1, 4, 0];
        let oh = one_hot(&track, &MACRO).unwrap();
        let back = crate::model::predict_labels(&oh);
        assert_eq!(back, track);
    }
}
