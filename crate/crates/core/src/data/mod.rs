//! Dataset ingestion, labeled/unlabeled splits and paired augmentation.

mod augment;
mod corpus;
mod randaugment;
mod sample;
mod split;
mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use augment::{
    draw_aug_params, get_aug, AugParams, AugPolicy, AugRealization, GroupViews, StrongOp, StrongOpApplied,
};
pub use corpus::{load_cifar10_binary, load_image_folder, CorpusFormat};
pub use sample::{Image, LabeledCorpus, Sample};
pub use split::{split_dataset, write_manifest, DatasetSplit, ManifestRecord, SplitOptions};
pub use synthetic::{generate_synthetic, Generator, SyntheticData, SyntheticSpec};

/// Which of the two augmentation families a view or realization belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugKind {
    Weak,
    Strong,
}

impl fmt::Display for AugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AugKind::Weak => "weak",
            AugKind::Strong => "strong",
        })
    }
}
