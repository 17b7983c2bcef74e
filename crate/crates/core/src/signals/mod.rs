//! Signal transformations and construction of the multi-task dataset.
//!
//! Each selected window yields nine records: the original with all-zero
//! transformation flags, then one copy per transformation with exactly that
//! flag set. Activity labels are copied from the source window.

mod multitask;
mod transforms;

pub use multitask::{build_multitask_dataset, build_transformation_dataset, TransformRecord};
pub use transforms::{apply_transform, random_rotation, TransformKind, TransformParams};
