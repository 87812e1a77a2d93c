use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::dataset::{CaseTag, ClassRecord, Dataset, Domain, LabeledImageSet};
use crate::error::{data_err, Result};

/// Domain layout of the three class segments after the shuffle. Most
/// datasets put validation classes in the middle; the face profile swaps
/// the last two segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitOrder {
    SourceValTarget,
    SourceTargetVal,
}

impl SplitOrder {
    fn segments(self) -> [Domain; 3] {
        match self {
            SplitOrder::SourceValTarget => [Domain::Source, Domain::Validation, Domain::Target],
            SplitOrder::SourceTargetVal => [Domain::Source, Domain::Target, Domain::Validation],
        }
    }
}

/// Recipe for carving a dataset's classes into the three domains.
/// Boundaries are half-open: segment one is `[0, first_end)`, segment two
/// `[first_end, second_end)`, segment three `[second_end, class_count)`.
#[derive(Clone, Debug)]
pub struct SplitSpec {
    pub dataset_name: String,
    /// Shuffle classes with this seed before partitioning; `None` keeps
    /// the stored order (for corpora already randomized upstream).
    pub shuffle_seed: Option<u64>,
    pub first_end: usize,
    pub second_end: usize,
    /// Keep at most this many images per class (the first N in stored
    /// order); the later case split randomizes within what remains.
    pub samples_per_class: Option<usize>,
    pub order: SplitOrder,
}

impl SplitSpec {
    /// 1623 handwritten-character classes: 1200 source, 212 validation,
    /// 211 target.
    pub fn omniglot() -> Self {
        SplitSpec {
            dataset_name: "omniglot".into(),
            shuffle_seed: None,
            first_end: 1200,
            second_end: 1412,
            samples_per_class: None,
            order: SplitOrder::SourceValTarget,
        }
    }

    /// Balanced handwritten digits/letters: 35 source classes, 7
    /// validation, the rest target, 100 samples per class. The total class
    /// count comes from the dataset at split time, so reduced variants
    /// work unchanged.
    pub fn emnist() -> Self {
        SplitSpec {
            dataset_name: "emnist".into(),
            shuffle_seed: None,
            first_end: 35,
            second_end: 42,
            samples_per_class: Some(100),
            order: SplitOrder::SourceValTarget,
        }
    }

    /// Curated face identities: 1802 source, 498 target, 96 validation
    /// (validation classes come last here), 100 samples per class.
    pub fn vgg_face() -> Self {
        SplitSpec {
            dataset_name: "vgg-face".into(),
            shuffle_seed: None,
            first_end: 1802,
            second_end: 2300,
            samples_per_class: Some(100),
            order: SplitOrder::SourceTargetVal,
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        if !(0 < self.first_end && self.first_end < self.second_end && self.second_end <= class_count)
        {
            return Err(data_err!(
                "{}: boundaries ({}, {}) do not fit {} classes",
                self.dataset_name,
                self.first_end,
                self.second_end,
                class_count
            ));
        }
        Ok(())
    }
}

/// Shuffles classes by the spec seed, partitions them into the three
/// domains, and applies the per-class sample cap. Every class lands in
/// exactly one domain; `original_class` records the pre-shuffle index of
/// each. Case tags start out all-`Train`.
pub fn split_domains(dataset: &Dataset, spec: &SplitSpec) -> Result<LabeledImageSet> {
    dataset.validate()?;
    spec.validate(dataset.class_count())?;
    let mut order: Vec<usize> = (0..dataset.class_count()).collect();
    if let Some(seed) = spec.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let segments = spec.order.segments();
    let mut classes = Vec::with_capacity(order.len());
    for (position, &original) in order.iter().enumerate() {
        let domain = if position < spec.first_end {
            segments[0]
        } else if position < spec.second_end {
            segments[1]
        } else {
            segments[2]
        };
        let mut images = dataset.classes[original].clone();
        if let Some(cap) = spec.samples_per_class {
            images.truncate(cap);
        }
        let tags = vec![CaseTag::Train; images.len()];
        classes.push(ClassRecord { images, domain, case_tags: tags, original_class: original });
    }
    Ok(LabeledImageSet { shape: dataset.shape, classes })
}

/// Tags one class's images: 2 test, 3 val, `train_count` train, remainder
/// unused, assigned over a fresh shuffle of the image indices.
pub fn split_cases<R: Rng>(image_count: usize, train_count: usize, rng: &mut R) -> Result<Vec<CaseTag>> {
    let needed = train_count + 5;
    if image_count < needed {
        return Err(data_err!(
            "class of {image_count} images cannot supply {train_count} train + 3 val + 2 test cases"
        ));
    }
    let mut order: Vec<usize> = (0..image_count).collect();
    order.shuffle(rng);
    let mut tags = vec![CaseTag::Unused; image_count];
    for (position, &i) in order.iter().enumerate() {
        tags[i] = if position < 2 {
            CaseTag::Test
        } else if position < 5 {
            CaseTag::Val
        } else if position < needed {
            CaseTag::Train
        } else {
            CaseTag::Unused
        };
    }
    Ok(tags)
}

impl LabeledImageSet {
    /// Applies [`split_cases`] to every class in `domain`.
    pub fn apply_case_split<R: Rng>(
        &mut self,
        domain: Domain,
        train_count: usize,
        rng: &mut R,
    ) -> Result<()> {
        for class in self.classes.iter_mut().filter(|c| c.domain == domain) {
            class.case_tags = split_cases(class.images.len(), train_count, rng)?;
        }
        Ok(())
    }
}
