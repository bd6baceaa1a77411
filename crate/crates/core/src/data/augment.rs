//! Augmentation realizations.
//!
//! A realization is a fully resolved parameter record. Drawing one consumes
//! randomness, applying one does not, so the same realization can be replayed
//! on the labeled image and on all `μ` unlabeled images of its group.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::randaugment as ops;
use super::sample::{Image, Sample};
use super::AugKind;
use crate::error::{Error, Result};

/// How realizations are drawn for a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AugPolicy {
    /// Flip + reflection-padded crop for the weak view; the same followed by
    /// `n_ops` RandAugment operations and a cutout square for the strong
    /// view.
    Image {
        height: usize,
        width: usize,
        pad: usize,
        n_ops: usize,
        magnitude: u32,
        /// Cutout side as a fraction of the image width; 0 disables it.
        cutout: f64,
    },
    /// Additive isotropic Gaussian offsets for feature vectors.
    Jitter {
        dim: usize,
        sigma_weak: f64,
        sigma_strong: f64,
    },
}

impl AugPolicy {
    /// Image defaults: pad 4, two ops at magnitude 10, cutout of half the
    /// width.
    pub fn image(height: usize, width: usize) -> Self {
        AugPolicy::Image {
            height,
            width,
            pad: 4,
            n_ops: 2,
            magnitude: 10,
            cutout: 0.5,
        }
    }

    /// Strong jitter is three times the weak one.
    pub fn jitter(dim: usize, sigma_weak: f64) -> Self {
        AugPolicy::Jitter {
            dim,
            sigma_weak,
            sigma_strong: 3.0 * sigma_weak,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongOp {
    AutoContrast,
    Brightness,
    Color,
    Contrast,
    Equalize,
    Identity,
    Posterize,
    Rotate,
    Sharpness,
    ShearX,
    ShearY,
    Solarize,
    TranslateX,
    TranslateY,
}

impl StrongOp {
    pub const POOL: [StrongOp; 14] = [
        StrongOp::AutoContrast,
        StrongOp::Brightness,
        StrongOp::Color,
        StrongOp::Contrast,
        StrongOp::Equalize,
        StrongOp::Identity,
        StrongOp::Posterize,
        StrongOp::Rotate,
        StrongOp::Sharpness,
        StrongOp::ShearX,
        StrongOp::ShearY,
        StrongOp::Solarize,
        StrongOp::TranslateX,
        StrongOp::TranslateY,
    ];

    fn signed(self) -> bool {
        matches!(
            self,
            StrongOp::Rotate | StrongOp::ShearX | StrongOp::ShearY | StrongOp::TranslateX | StrongOp::TranslateY
        )
    }
}

/// One selected strong operation with its resolved magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongOpApplied {
    pub op: StrongOp,
    /// Integer level in `[1, magnitude]`.
    pub level: u32,
    pub negate: bool,
}

impl StrongOpApplied {
    fn apply(&self, img: &Image, max_level: u32) -> Image {
        let frac = self.level as f64 / max_level.max(1) as f64;
        let sign = if self.negate { -1.0 } else { 1.0 };
        // enhancement factors in [0.05, 0.95]
        let factor = 0.9 * frac + 0.05;
        match self.op {
            StrongOp::AutoContrast => ops::auto_contrast(img),
            StrongOp::Brightness => ops::brightness(img, factor),
            StrongOp::Color => ops::color(img, factor),
            StrongOp::Contrast => ops::contrast(img, factor),
            StrongOp::Equalize => ops::equalize(img),
            StrongOp::Identity => img.clone(),
            StrongOp::Posterize => ops::posterize(img, (4.0 * frac) as u32 + 4),
            StrongOp::Rotate => ops::rotate(img, sign * 30.0 * frac),
            StrongOp::Sharpness => ops::sharpness(img, factor),
            StrongOp::ShearX => ops::shear_x(img, sign * 0.3 * frac),
            StrongOp::ShearY => ops::shear_y(img, sign * 0.3 * frac),
            StrongOp::Solarize => ops::solarize(img, 256 - (256.0 * frac) as u32),
            StrongOp::TranslateX => ops::translate_x(img, sign * 0.3 * frac * img.width as f64),
            StrongOp::TranslateY => ops::translate_y(img, sign * 0.3 * frac * img.height as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AugParams {
    /// Crop offsets index the padded image; `dx = dy = pad` is no shift.
    FlipCrop {
        flip: bool,
        pad: usize,
        dx: usize,
        dy: usize,
    },
    RandAugment {
        flip: bool,
        pad: usize,
        dx: usize,
        dy: usize,
        ops: Vec<StrongOpApplied>,
        magnitude: u32,
        /// `(cx, cy, size)` of the cutout square.
        cutout: Option<(usize, usize, usize)>,
    },
    Jitter {
        offset: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugRealization {
    pub kind: AugKind,
    pub params: AugParams,
    pub seed: u64,
}

impl AugRealization {
    /// Resolve a realization of `kind` deterministically from `seed`.
    pub fn from_seed(policy: &AugPolicy, kind: AugKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = match (policy, kind) {
            (&AugPolicy::Image { pad, .. }, AugKind::Weak) => AugParams::FlipCrop {
                flip: rng.random_bool(0.5),
                pad,
                dx: rng.random_range(0..=2 * pad),
                dy: rng.random_range(0..=2 * pad),
            },
            (
                &AugPolicy::Image {
                    height,
                    width,
                    pad,
                    n_ops,
                    magnitude,
                    cutout,
                },
                AugKind::Strong,
            ) => {
                let flip = rng.random_bool(0.5);
                let dx = rng.random_range(0..=2 * pad);
                let dy = rng.random_range(0..=2 * pad);
                let mut selected = Vec::with_capacity(n_ops);
                for _ in 0..n_ops {
                    let op = StrongOp::POOL[rng.random_range(0..StrongOp::POOL.len())];
                    let level = rng.random_range(1..=magnitude.max(1));
                    let negate = op.signed() && rng.random_bool(0.5);
                    // each sampled op fires with probability 1/2
                    if rng.random_bool(0.5) {
                        selected.push(StrongOpApplied { op, level, negate });
                    }
                }
                let size = (cutout * width as f64) as usize;
                let cut = (size > 0).then(|| {
                    (
                        rng.random_range(0..width.max(1)),
                        rng.random_range(0..height.max(1)),
                        size,
                    )
                });
                AugParams::RandAugment {
                    flip,
                    pad,
                    dx,
                    dy,
                    ops: selected,
                    magnitude,
                    cutout: cut,
                }
            }
            (
                &AugPolicy::Jitter {
                    dim,
                    sigma_weak,
                    sigma_strong,
                },
                kind,
            ) => {
                let sigma = if kind == AugKind::Weak {
                    sigma_weak
                } else {
                    sigma_strong
                };
                let offset = match Normal::new(0.0, sigma.max(0.0)) {
                    Ok(n) => (0..dim).map(|_| n.sample(&mut rng)).collect(),
                    Err(_) => vec![0.0; dim],
                };
                AugParams::Jitter { offset }
            }
        };
        AugRealization { kind, params, seed }
    }

    /// The no-op weak image realization.
    pub fn identity_image() -> Self {
        AugRealization {
            kind: AugKind::Weak,
            params: AugParams::FlipCrop {
                flip: false,
                pad: 0,
                dx: 0,
                dy: 0,
            },
            seed: 0,
        }
    }

    pub fn apply(&self, sample: &Sample) -> Result<Sample> {
        match (&self.params, sample) {
            (&AugParams::FlipCrop { flip, pad, dx, dy }, Sample::Image(img)) => {
                Ok(Sample::Image(flip_crop(img, flip, pad, dx, dy)?))
            }
            (
                AugParams::RandAugment {
                    flip,
                    pad,
                    dx,
                    dy,
                    ops: selected,
                    magnitude,
                    cutout,
                },
                Sample::Image(img),
            ) => {
                let mut out = flip_crop(img, *flip, *pad, *dx, *dy)?;
                for op in selected {
                    out = op.apply(&out, *magnitude);
                }
                if let Some((cx, cy, size)) = *cutout {
                    out = ops::cutout(&out, cx, cy, size);
                }
                Ok(Sample::Image(out))
            }
            (AugParams::Jitter { offset }, Sample::Vector(v)) => {
                if offset.len() != v.len() {
                    return Err(Error::data(format!(
                        "jitter of dimension {} applied to a {}-dimensional vector",
                        offset.len(),
                        v.len()
                    )));
                }
                Ok(Sample::Vector(v.iter().zip(offset).map(|(a, b)| a + b).collect()))
            }
            _ => Err(Error::data("augmentation realization does not match the sample type")),
        }
    }
}

fn flip_crop(img: &Image, flip: bool, pad: usize, dx: usize, dy: usize) -> Result<Image> {
    if dx > 2 * pad || dy > 2 * pad {
        return Err(Error::data(format!(
            "crop offset ({dx}, {dy}) outside the padded range for pad {pad}"
        )));
    }
    let flipped = if flip { ops::flip_horizontal(img) } else { img.clone() };
    Ok(if pad == 0 {
        flipped
    } else {
        ops::pad_crop(&flipped, pad, dx, dy)
    })
}

/// Draw one weak and one strong realization.
pub fn draw_aug_params<R: RngCore + ?Sized>(policy: &AugPolicy, rng: &mut R) -> (AugRealization, AugRealization) {
    let weak_seed = rng.next_u64();
    let strong_seed = rng.next_u64();
    (
        AugRealization::from_seed(policy, AugKind::Weak, weak_seed),
        AugRealization::from_seed(policy, AugKind::Strong, strong_seed),
    )
}

/// Weak and strong views of one labeled sample and its `μ` unlabeled
/// companions.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupViews {
    pub labeled_w: Sample,
    pub labeled_s: Sample,
    pub unlabeled_w: Vec<Sample>,
    pub unlabeled_s: Vec<Sample>,
}

/// Apply `weak` to the labeled sample and all group members, then `strong`
/// likewise.
pub fn get_aug(
    labeled: &Sample,
    group: &[Sample],
    mu: usize,
    weak: &AugRealization,
    strong: &AugRealization,
) -> Result<GroupViews> {
    if group.len() != mu {
        return Err(Error::batch(format!(
            "unlabeled group has {} members, expected mu = {mu}",
            group.len()
        )));
    }
    Ok(GroupViews {
        labeled_w: weak.apply(labeled)?,
        labeled_s: strong.apply(labeled)?,
        unlabeled_w: group.iter().map(|u| weak.apply(u)).collect::<Result<_>>()?,
        unlabeled_s: group.iter().map(|u| strong.apply(u)).collect::<Result<_>>()?,
    })
}
