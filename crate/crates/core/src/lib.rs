//! Non-neural core of a center-keypoint oriented object detector that
//! describes boxes by box-boundary-aware vectors (BBAVectors).
//!
//! * [`geometry`]: canonical oriented boxes, edge vectors, rotated IOU
//! * [`codec`]: ground truth to dense target maps and back to detections
//! * [`losses`]: heatmap focal loss, smooth-L1 regression, orientation BCE
//! * [`postprocess`]: rotated NMS and rotated-IOU mAP
//! * [`tiling`]: patch cropping and global merge for large images
//! * [`dota_io`]: DOTA label and submission formats
//! * [`mapfile`]: binary serialization of target maps
//! * [`synth`]: synthetic scenes and noisy "predictions" for end-to-end runs

pub mod codec;
pub mod dota_io;
pub mod geometry;
pub mod losses;
pub mod mapfile;
pub mod postprocess;
pub mod synth;
pub mod tiling;

pub use codec::{decode, encode, DecodeParams, Detection, TargetMaps};
pub use dota_io::{AnnotationRecord, Category};
pub use geometry::{canonicalize, rotated_iou, BbaVectors, GeometryError, OrientedBox, Point2};
pub use postprocess::{evaluate_map, rotated_nms, MatchResult};
pub use tiling::TileSpec;
