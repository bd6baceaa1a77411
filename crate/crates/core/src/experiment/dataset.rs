use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_cifar10_binary, load_image_folder, split_dataset, CorpusFormat, DatasetSplit, Generator,
    LabeledCorpus, Sample, SplitOptions, SyntheticSpec,
};
use crate::error::{Error, Result};

/// Where an experiment's examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Generated 2-D points; the run seed also seeds the generator.
    Synthetic {
        generator: Generator,
        n_labeled: usize,
        n_unlabeled: usize,
        n_test: usize,
        #[serde(default)]
        noise: f64,
        /// Label the unlabeled pool too.
        #[serde(default)]
        all_labeled: bool,
    },
    /// An on-disk corpus split per seed.
    Corpus {
        format: CorpusFormat,
        path: PathBuf,
        /// Test images for `image-folder`; CIFAR ships its own.
        #[serde(default)]
        test_path: Option<PathBuf>,
        n_labels: usize,
        #[serde(default)]
        include_labeled_in_unlabeled: bool,
        #[serde(default)]
        all_labeled: bool,
    },
}

/// A data source whose files, if any, have been read.
#[derive(Clone, Debug)]
pub enum LoadedData {
    Synthetic(DataSpec),
    Corpus {
        train: LabeledCorpus,
        test: LabeledCorpus,
        n_labels: usize,
        options: SplitOptions,
        all_labeled: bool,
    },
}

impl DataSpec {
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSpec::Synthetic { .. } => Ok(LoadedData::Synthetic(self.clone())),
            DataSpec::Corpus {
                format,
                path,
                test_path,
                n_labels,
                include_labeled_in_unlabeled,
                all_labeled,
            } => {
                let (train, test) = match format {
                    CorpusFormat::Cifar10Binary => load_cifar10_binary(path)?,
                    CorpusFormat::ImageFolder => {
                        let tp = test_path
                            .as_ref()
                            .ok_or_else(|| Error::config("data.test_path is required for image-folder corpora"))?;
                        let (train, names) = load_image_folder(path)?;
                        let (test, test_names) = load_image_folder(tp)?;
                        if names != test_names {
                            return Err(Error::data("train and test folders have different classes"));
                        }
                        (train, test)
                    }
                };
                Ok(LoadedData::Corpus {
                    train,
                    test,
                    n_labels: *n_labels,
                    options: SplitOptions {
                        include_labeled_in_unlabeled: *include_labeled_in_unlabeled,
                    },
                    all_labeled: *all_labeled,
                })
            }
        }
    }
}

impl LoadedData {
    /// Training split and test set for one seed.
    pub fn materialize(&self, seed: u64) -> Result<(DatasetSplit, Vec<(Sample, usize)>)> {
        match self {
            LoadedData::Synthetic(DataSpec::Synthetic {
                generator,
                n_labeled,
                n_unlabeled,
                n_test,
                noise,
                all_labeled,
            }) => {
                let (n_l, n_u) = if *all_labeled {
                    (n_labeled + n_unlabeled, 1)
                } else {
                    (*n_labeled, *n_unlabeled)
                };
                let mut d = generate_synthetic(&SyntheticSpec {
                    generator: *generator,
                    n_labeled: n_l,
                    n_unlabeled: n_u,
                    n_test: *n_test,
                    noise: *noise,
                    seed,
                })?;
                if *all_labeled {
                    d.split.unlabeled.clear();
                    d.split.unlabeled_indices.clear();
                }
                Ok((d.split, d.test))
            }
            LoadedData::Synthetic(_) => unreachable!("synthetic holds a synthetic spec"),
            LoadedData::Corpus {
                train,
                test,
                n_labels,
                options,
                all_labeled,
            } => {
                let n = if *all_labeled { train.len() } else { *n_labels };
                let split = split_dataset(train, n, seed, *options)?;
                Ok((split, test.pairs()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moons(all_labeled: bool) -> DataSpec {
        DataSpec::Synthetic {
            generator: Generator::TwoMoons,
            n_labeled: 4,
            n_unlabeled: 100,
            n_test: 50,
            noise: 0.1,
            all_labeled,
        }
    }

    #[test]
    fn synthetic_counts() {
        let (split, test) = moons(false).load().unwrap().materialize(0).unwrap();
        assert_eq!(split.labeled.len(), 4);
        assert_eq!(split.unlabeled.len(), 100);
        assert_eq!(test.len(), 50);
    }

    #[test]
    fn all_labeled_drops_unlabeled_pool() {
        let (split, _) = moons(true).load().unwrap().materialize(0).unwrap();
        assert_eq!(split.labeled.len(), 104);
        assert!(split.unlabeled.is_empty());
    }

    #[test]
    fn missing_corpus_is_a_data_error() {
        let spec = DataSpec::Corpus {
            format: CorpusFormat::Cifar10Binary,
            path: "/nonexistent/cifar".into(),
            test_path: None,
            n_labels: 40,
            include_labeled_in_unlabeled: false,
            all_labeled: false,
        };
        assert_eq!(spec.load().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn parses_from_toml() {
        let d: DataSpec = toml::from_str(
            "source = \"synthetic\"\ngenerator = \"two-moons\"\nn_labeled = 4\nn_unlabeled = 10\nn_test = 10\n",
        )
        .unwrap();
        assert!(matches!(d, DataSpec::Synthetic { noise, .. } if noise == 0.0));
        assert!(toml::from_str::<DataSpec>("source = \"synthetic\"\nbogus = 1\n").is_err());
    }
}
