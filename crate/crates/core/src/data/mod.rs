//! Recordings, dual-scale annotations, slicing into training windows and
//! leave-one-subject-out fold construction.

mod catalog;
mod folds;
mod normalize;
mod recording;
mod slicing;

pub use catalog::{one_hot, ClassCatalog, Scale, MACRO, MICRO};
pub use folds::{build_folds, Fold, FoldPlan, FoldProtocol, RecordingInfo};
pub use normalize::Normalizer;
pub use recording::{AnnotationSegment, Recording, Scenario};
pub use slicing::{reconstruct_tracks, slice_recording, Slice, SliceSet, SLICE_HOP, SLICE_LEN};
