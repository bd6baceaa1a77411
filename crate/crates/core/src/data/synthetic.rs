use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sample::Sample;
use super::split::DatasetSplit;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Two isotropic blobs centred at `(−1, 0)` and `(1, 0)`.
    TwoGaussians,
    /// Two interleaving half circles.
    TwoMoons,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::TwoGaussians => "two-gaussians",
            Generator::TwoMoons => "two-moons",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-gaussians" => Ok(Generator::TwoGaussians),
            "two-moons" => Ok(Generator::TwoMoons),
            other => Err(Error::config(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub split: DatasetSplit,
    pub test: Vec<(Sample, usize)>,
}

fn point(generator: Generator, class: usize, rng: &mut ChaCha8Rng, noise: &Option<Normal<f64>>) -> Vec<f64> {
    let (x, y) = match generator {
        Generator::TwoGaussians => (if class == 0 { -1.0 } else { 1.0 }, 0.0),
        Generator::TwoMoons => {
            let t = rng.random_range(0.0..PI);
            if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            }
        }
    };
    match noise {
        Some(n) => vec![x + n.sample(rng), y + n.sample(rng)],
        None => vec![x, y],
    }
}

/// Generate a two-class 2-D problem. Labels alternate within each pool so
/// every pool is balanced to within one example.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.n_labeled == 0 || spec.n_unlabeled == 0 || spec.n_test == 0 {
        return Err(Error::config("synthetic counts must all be positive"));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::config(format!("noise must be >= 0, got {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise > 0.0)
        .then(|| Normal::new(0.0, spec.noise))
        .transpose()
        .map_err(|e| Error::config(e.to_string()))?;
    let mut pool = |n: usize| -> Vec<(Sample, usize)> {
        (0..n)
            .map(|i| {
                let class = i % 2;
                (Sample::Vector(point(spec.generator, class, &mut rng, &noise)), class)
            })
            .collect()
    };
    let labeled = pool(spec.n_labeled);
    let unlabeled: Vec<Sample> = pool(spec.n_unlabeled).into_iter().map(|(s, _)| s).collect();
    let test = pool(spec.n_test);

    let mut class_counts = vec![0; 2];
    for (_, y) in &labeled {
        class_counts[*y] += 1;
    }
    let n_l = labeled.len();
    Ok(SyntheticData {
        split: DatasetSplit {
            labeled,
            num_classes: 2,
            class_counts,
            labeled_indices: (0..n_l).collect(),
            unlabeled_indices: (n_l..n_l + unlabeled.len()).collect(),
            unlabeled,
        },
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(generator: Generator, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            generator,
            n_labeled: 4,
            n_unlabeled: 2000,
            n_test: 500,
            noise: 0.1,
            seed,
        }
    }

    #[test]
    fn two_moons_counts() {
        let d = generate_synthetic(&spec(Generator::TwoMoons, 0)).unwrap();
        assert_eq!(d.split.class_counts, vec![2, 2]);
        assert_eq!(d.split.unlabeled.len(), 2000);
        assert_eq!(d.test.len(), 500);
    }

    #[test]
    fn determinism_under_seed() {
        let a = generate_synthetic(&spec(Generator::TwoMoons, 0)).unwrap();
        let b = generate_synthetic(&spec(Generator::TwoMoons, 0)).unwrap();
        let c = generate_synthetic(&spec(Generator::TwoMoons, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.split.unlabeled, c.split.unlabeled);
    }

    #[test]
    fn noiseless_gaussians_are_separable() {
        let mut s = spec(Generator::TwoGaussians, 0);
        s.noise = 0.0;
        let d = generate_synthetic(&s).unwrap();
        // the threshold x = 0 classifies everything
        for (x, y) in &d.test {
            let Sample::Vector(v) = x else { unreachable!() };
            assert_eq!((v[0] > 0.0) as usize, *y);
        }
    }

    #[test]
    fn unknown_generator_and_bad_counts() {
        assert!(matches!("three-spirals".parse::<Generator>(), Err(Error::Config(_))));
        let mut s = spec(Generator::TwoMoons, 0);
        s.n_test = 0;
        assert!(generate_synthetic(&s).is_err());
    }
}
