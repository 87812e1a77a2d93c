use dagan_nn::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};

/// Image geometry. Storage is CHW, so a flat image slice has length
/// `c * h * w` with channel planes laid out contiguously.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ImageShape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        ImageShape { c, h, w }
    }

    /// Elements per image.
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A class-indexed image collection, the unit the container format stores.
/// `classes[k][i]` is image `i` of class `k`, flat CHW in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub shape: ImageShape,
    pub classes: Vec<Vec<Vec<f32>>>,
}

impl Dataset {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn total_images(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    /// Checks the structural invariants: at least one class, every class
    /// nonempty, every image of the right length with finite pixels in
    /// `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if self.shape.is_empty() {
            return Err(data_err!("degenerate image shape {:?}", self.shape));
        }
        if self.classes.is_empty() {
            return Err(data_err!("dataset has no classes"));
        }
        let len = self.shape.len();
        for (k, class) in self.classes.iter().enumerate() {
            if class.is_empty() {
                return Err(data_err!("class {k} has no images"));
            }
            for (i, image) in class.iter().enumerate() {
                if image.len() != len {
                    return Err(data_err!(
                        "class {k} image {i}: {} pixels, shape {:?} wants {len}",
                        image.len(),
                        self.shape
                    ));
                }
                if let Some(p) = image.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
                    return Err(data_err!("class {k} image {i}: pixel {p} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Which role a class plays in the cross-domain protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Validation,
    Target,
}

/// Which role an individual image plays within its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseTag {
    Train,
    Val,
    Test,
    Unused,
}

/// One class after domain assignment. `original_class` records where the
/// class sat in the pre-shuffle dataset so assignments stay auditable.
/// `case_tags` parallels `images`; freshly split classes are wholly
/// `Train` until a case split is applied.
#[derive(Clone, Debug)]
pub struct ClassRecord {
    pub images: Vec<Vec<f32>>,
    pub domain: Domain,
    pub case_tags: Vec<CaseTag>,
    pub original_class: usize,
}

/// A dataset with domain and case labels attached.
#[derive(Clone, Debug)]
pub struct LabeledImageSet {
    pub shape: ImageShape,
    pub classes: Vec<ClassRecord>,
}

impl LabeledImageSet {
    /// Indices of classes in `domain`.
    pub fn classes_in(&self, domain: Domain) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&k| self.classes[k].domain == domain)
            .collect()
    }

    /// `(class, image)` indices carrying `tag`, restricted to `domain`.
    pub fn cases(&self, domain: Domain, tag: CaseTag) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, class) in self.classes.iter().enumerate() {
            if class.domain != domain {
                continue;
            }
            for (i, &t) in class.case_tags.iter().enumerate() {
                if t == tag {
                    out.push((k, i));
                }
            }
        }
        out
    }

    pub fn image(&self, class: usize, index: usize) -> &[f32] {
        &self.classes[class].images[index]
    }
}

/// Stacks flat CHW images into an `[N, C, H, W]` tensor (no grad).
pub fn batch_tensor<T: Scalar>(images: &[&[f32]], shape: ImageShape) -> Tensor<T> {
    let per = shape.len();
    let mut data = Vec::with_capacity(images.len() * per);
    for image in images {
        assert_eq!(image.len(), per, "image length does not match shape {shape:?}");
        data.extend(image.iter().map(|&p| T::cast(p as f64)));
    }
    Tensor::from_vec(&[images.len(), shape.c, shape.h, shape.w], data)
}
