use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::catalog::{ClassCatalog, Scale};
use crate::error::{Error, Result};
use crate::numerics::ChannelSequence;
use crate::IMU_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Lab,
    Home,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Lab => "lab",
            Scenario::Home => "home",
        }
    }
}

/// One annotated run `[start, end)` of a single class at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnotationSegment {
    pub scale: Scale,
    pub class_id: usize,
    pub start: usize,
    pub end: usize,
}

/// A subject's six-channel IMU recording with per-sample micro and macro
/// class tracks. Immutable after construction; construction validates.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    id: String,
    subject: String,
    scenario: Scenario,
    imu: ChannelSequence,
    micro_track: Vec<usize>,
    macro_track: Vec<usize>,
}

impl Recording {
    /// Expands segment annotations into tracks. Unannotated samples are "others".
    pub fn from_segments(
        id: impl Into<String>,
        subject: impl Into<String>,
        scenario: Scenario,
        imu: ChannelSequence,
        segments: &[AnnotationSegment],
    ) -> Result<Self> {
        check_imu(&imu)?;
        let t_len = imu.len();
        let mut micro = vec![0usize; t_len];
        let mut macro_ = vec![0usize; t_len];
        for scale in [Scale::Micro, Scale::Macro] {
            let catalog = scale.catalog();
            let mut segs: Vec<&AnnotationSegment> = segments.iter().filter(|s| s.scale == scale).collect();
            segs.sort_by_key(|s| (s.start, s.end));
            let mut prev: Option<&AnnotationSegment> = None;
            for s in segs {
                catalog.name(s.class_id)?;
                if s.start >= s.end || s.end > t_len {
                    return Err(Error::Annotation(format!(
                        "{} segment [{}, {}) of class {} is out of range for {} samples",
                        scale.as_str(), s.start, s.end, s.class_id, t_len
                    )));
                }
                if let Some(p) = prev {
                    if s.start < p.end {
                        return Err(Error::Annotation(format!(
                            "{} segments [{}, {}) and [{}, {}) overlap",
                            scale.as_str(), p.start, p.end, s.start, s.end
                        )));
                    }
                    if scale == Scale::Micro && s.class_id != 0 && s.class_id == p.class_id && s.start == p.end {
                        return Err(Error::Annotation(format!(
                            "micro segments [{}, {}) and [{}, {}) of class {} are not separated by an others sample",
                            p.start, p.end, s.start, s.end, s.class_id
                        )));
                    }
                }
                let track = if scale == Scale::Micro { &mut micro } else { &mut macro_ };
                track[s.start..s.end].fill(s.class_id);
                prev = Some(s);
            }
        }
        Self::from_tracks(id, subject, scenario, imu, micro, macro_)
    }

    pub fn from_tracks(
        id: impl Into<String>,
        subject: impl Into<String>,
        scenario: Scenario,
        imu: ChannelSequence,
        micro_track: Vec<usize>,
        macro_track: Vec<usize>,
    ) -> Result<Self> {
        check_imu(&imu)?;
        let rec = Recording {
            id: id.into(),
            subject: subject.into(),
            scenario,
            imu,
            micro_track,
            macro_track,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Checks track lengths, class ranges and micro-in-macro nesting.
    pub fn validate(&self) -> Result<()> {
        let t_len = self.imu.len();
        for (scale, track) in [(Scale::Micro, &self.micro_track), (Scale::Macro, &self.macro_track)] {
            if track.len() != t_len {
                return Err(Error::shape("Recording", "track length", t_len, track.len()));
            }
            let catalog = scale.catalog();
            if let Some(&bad) = track.iter().find(|&&c| c >= catalog.len()) {
                return Err(Error::UnknownClass { scale: scale.as_str(), id: bad });
            }
        }
        for seg in runs(&self.micro_track, Scale::Micro) {
            let want = ClassCatalog::macro_of_micro(seg.class_id)?;
            if let Some(off) = self.macro_track[seg.start..seg.end].iter().position(|&m| m != want) {
                return Err(Error::Annotation(format!(
                    "micro segment [{}, {}) of class {} is not inside a macro segment of class {} (sample {} has macro class {})",
                    seg.start,
                    seg.end,
                    seg.class_id,
                    want,
                    seg.start + off,
                    self.macro_track[seg.start + off]
                )));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn imu(&self) -> &ChannelSequence {
        &self.imu
    }

    pub fn micro_track(&self) -> &[usize] {
        &self.micro_track
    }

    pub fn macro_track(&self) -> &[usize] {
        &self.macro_track
    }

    pub fn track(&self, scale: Scale) -> &[usize] {
        match scale {
            Scale::Micro => &self.micro_track,
            Scale::Macro => &self.macro_track,
        }
    }

    pub fn len(&self) -> usize {
        self.imu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imu.is_empty()
    }

    /// Non-"others" segments of both scales, macro first, each sorted by start.
    pub fn segments(&self) -> Vec<AnnotationSegment> {
        let mut out = runs(&self.macro_track, Scale::Macro);
        out.extend(runs(&self.micro_track, Scale::Micro));
        out
    }
}

fn check_imu(imu: &ChannelSequence) -> Result<()> {
    if imu.channels() != IMU_CHANNELS {
        return Err(Error::shape("Recording", "imu channels", IMU_CHANNELS, imu.channels()));
    }
    Ok(())
}

/// Maximal runs of a nonzero class.
pub(crate) fn runs(track: &[usize], scale: Scale) -> Vec<AnnotationSegment> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < track.len() {
        let c = track[t];
        let start = t;
        while t < track.len() && track[t] == c {
            t += 1;
        }
        if c != 0 {
            out.push(AnnotationSegment { scale, class_id: c, start, end: t });
        }
    }
    out
}
