//! Dataset plumbing: the `DGAN` container format, domain/case splits, the
//! standard augmentation stack, and a synthetic glyph corpus for tests and
//! demos.
//!
//! Images are stored as flat `f32` slices in CHW order with values in
//! `[0, 1]`. Containers are little-endian and bit-exact: packing the same
//! tree twice yields identical bytes.

pub mod augment;
pub mod container;
pub mod dataset;
pub mod glyphs;
pub mod split;

pub use augment::{standard_augment, AugmentChoices, MAX_SHIFT, NOISE_SIGMA};
pub use container::{container_bytes, load_container, pack_dataset, save_container, PackOptions};
pub use dataset::{batch_tensor, CaseTag, ClassRecord, Dataset, Domain, ImageShape, LabeledImageSet};
pub use glyphs::synth_glyph_set;
pub use split::{split_cases, split_domains, SplitOrder, SplitSpec};
