use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::{LabeledCorpus, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Keep the labeled images in the unlabeled stream too (with their labels
    /// dropped). Off by default: the two sets are disjoint.
    pub include_labeled_in_unlabeled: bool,
}

/// Labeled and unlabeled training pools.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub labeled: Vec<(Sample, usize)>,
    pub unlabeled: Vec<Sample>,
    pub num_classes: usize,
    /// Labeled examples per class.
    pub class_counts: Vec<usize>,
    /// Positions in the source corpus, when split from one.
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
}

impl DatasetSplit {
    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.labeled.iter().map(|(_, y)| *y)
    }
}

/// Draw a class-balanced labeled subset of `n_labels` items.
///
/// Every class gets `n_labels / C` items; the remainder goes to randomly
/// chosen classes, one each. The result depends only on the corpus order,
/// `n_labels` and `seed`.
pub fn split_dataset(
    source: &LabeledCorpus,
    n_labels: usize,
    seed: u64,
    options: SplitOptions,
) -> Result<DatasetSplit> {
    let c = source.num_classes;
    if c == 0 {
        return Err(Error::config("corpus has no classes"));
    }
    if n_labels < c {
        return Err(Error::config(format!(
            "n_labels = {n_labels} is smaller than the number of classes ({c})"
        )));
    }
    if n_labels > source.len() {
        return Err(Error::config(format!(
            "n_labels = {n_labels} exceeds the corpus size ({})",
            source.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quota = vec![n_labels / c; c];
    let mut classes: Vec<usize> = (0..c).collect();
    classes.shuffle(&mut rng);
    for &k in classes.iter().take(n_labels % c) {
        quota[k] += 1;
    }

    let mut chosen = Vec::with_capacity(n_labels);
    for (class, &want) in quota.iter().enumerate() {
        let mut members: Vec<usize> = (0..source.len()).filter(|&i| source.labels[i] == class).collect();
        if members.len() < want {
            return Err(Error::config(format!(
                "class {class} has {} items, a balanced split needs {want}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..want]);
    }
    chosen.sort_unstable();

    let mut is_labeled = vec![false; source.len()];
    for &i in &chosen {
        is_labeled[i] = true;
    }
    let unlabeled_indices: Vec<usize> = (0..source.len())
        .filter(|&i| options.include_labeled_in_unlabeled || !is_labeled[i])
        .collect();

    Ok(DatasetSplit {
        labeled: chosen
            .iter()
            .map(|&i| (source.samples[i].clone(), source.labels[i]))
            .collect(),
        unlabeled: unlabeled_indices.iter().map(|&i| source.samples[i].clone()).collect(),
        num_classes: c,
        class_counts: quota,
        labeled_indices: chosen,
        unlabeled_indices,
    })
}

/// One line of a split manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub role: crate::layout::Role,
    pub label: Option<usize>,
}

/// Write the split as line-delimited JSON records, labeled entries first.
pub fn write_manifest<W: Write>(split: &DatasetSplit, mut out: W) -> std::io::Result<()> {
    let labeled = split
        .labeled_indices
        .iter()
        .zip(split.labels())
        .map(|(&index, y)| ManifestRecord {
            index,
            role: crate::layout::Role::Labeled,
            label: Some(y),
        });
    let unlabeled = split.unlabeled_indices.iter().map(|&index| ManifestRecord {
        index,
        role: crate::layout::Role::Unlabeled,
        label: None,
    });
    for rec in labeled.chain(unlabeled) {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
