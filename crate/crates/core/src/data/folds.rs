use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::recording::{Recording, Scenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldProtocol {
    /// Leave-one-subject-out over the lab cohort.
    LabLosocv,
    /// Each home subject held out in turn; trains on all lab recordings plus
    /// the remaining home recordings.
    HomeGeneralization,
}

/// Identity of a recording, enough to plan folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingInfo {
    pub id: String,
    pub subject: String,
    pub scenario: Scenario,
}

impl From<&Recording> for RecordingInfo {
    fn from(r: &Recording) -> Self {
        RecordingInfo { id: r.id().into(), subject: r.subject().into(), scenario: r.scenario() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub test_subject: String,
    pub test_recordings: Vec<String>,
    pub train_recordings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub protocol: FoldProtocol,
    pub folds: Vec<Fold>,
}

/// Plans folds, ordered by subject id.
pub fn build_folds(recordings: &[RecordingInfo], protocol: FoldProtocol) -> Result<FoldPlan> {
    let mut seen = BTreeSet::new();
    let mut subjects: BTreeMap<&str, (Scenario, Vec<&str>)> = BTreeMap::new();
    for r in recordings {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Duplicate { kind: "recording", id: r.id.clone() });
        }
        let entry = subjects.entry(r.subject.as_str()).or_insert((r.scenario, Vec::new()));
        if entry.0 != r.scenario {
            return Err(Error::Duplicate { kind: "subject", id: r.subject.clone() });
        }
        entry.1.push(r.id.as_str());
    }
    for (_, ids) in subjects.values_mut() {
        ids.sort_unstable();
    }
    let of = |scenario: Scenario| -> Vec<(&str, &Vec<&str>)> {
        subjects
            .iter()
            .filter(|(_, (s, _))| *s == scenario)
            .map(|(k, (_, ids))| (*k, ids))
            .collect()
    };
    let lab = of(Scenario::Lab);
    let home = of(Scenario::Home);
    let owned = |ids: &[&str]| ids.iter().map(|s| String::from(*s)).collect::<Vec<_>>();

    let folds = match protocol {
        FoldProtocol::LabLosocv => {
            if lab.len() < 2 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "leave-one-subject-out needs at least 2 lab subjects, found {}",
                    lab.len()
                )));
            }
            lab.iter()
                .enumerate()
                .map(|(index, (subject, test))| {
                    let train: Vec<&str> = lab
                        .iter()
                        .filter(|(s, _)| s != subject)
                        .flat_map(|(_, ids)| ids.iter().copied())
                        .collect();
                    Fold {
                        index,
                        test_subject: String::from(*subject),
                        test_recordings: owned(test),
                        train_recordings: owned(&train),
                    }
                })
                .collect()
        }
        FoldProtocol::HomeGeneralization => {
            if home.is_empty() || lab.len() + home.len() < 2 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "home generalization needs at least one home subject and two subjects overall (lab {}, home {})",
                    lab.len(),
                    home.len()
                )));
            }
            let lab_ids: Vec<&str> = lab.iter().flat_map(|(_, ids)| ids.iter().copied()).collect();
            home.iter()
                .enumerate()
                .map(|(index, (subject, test))| {
                    let mut train = lab_ids.clone();
                    train.extend(
                        home.iter()
                            .filter(|(s, _)| s != subject)
                            .flat_map(|(_, ids)| ids.iter().copied()),
                    );
                    Fold {
                        index,
                        test_subject: String::from(*subject),
                        test_recordings: owned(test),
                        train_recordings: owned(&train),
                    }
                })
                .collect()
        }
    };
    Ok(FoldPlan { protocol, folds })
}
