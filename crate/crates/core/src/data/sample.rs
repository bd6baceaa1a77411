use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// CIFAR-10 channel statistics, applied to every 3-channel image
const RGB_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
const RGB_STD: [f64; 3] = [0.2471, 0.2435, 0.2616];

/// 8-bit image in interleaved HWC order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * channels || channels == 0 {
            return Err(Error::data(format!(
                "image buffer of {} bytes does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Normalised features in CHW order.
    pub fn features(&self) -> Vec<f64> {
        let (h, w, ch) = (self.height, self.width, self.channels);
        let mut out = Vec::with_capacity(h * w * ch);
        for c in 0..ch {
            let (mean, std) = if ch == 3 {
                (RGB_MEAN[c], RGB_STD[c])
            } else {
                (0.5, 0.25)
            };
            for y in 0..h {
                for x in 0..w {
                    out.push((self.get(y, x, c) as f64 / 255.0 - mean) / std);
                }
            }
        }
        out
    }
}

/// One input example: an image, or a plain feature vector for the
/// low-dimensional synthetic problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    Image(Image),
    Vector(Vec<f64>),
}

impl Sample {
    pub fn features(&self) -> Vec<f64> {
        match self {
            Sample::Image(img) => img.features(),
            Sample::Vector(v) => v.clone(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Sample::Image(img) => img.height * img.width * img.channels,
            Sample::Vector(v) => v.len(),
        }
    }
}

/// A fully labeled source collection, before any split.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCorpus {
    pub samples: Vec<Sample>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledCorpus {
    pub fn new(samples: Vec<Sample>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::data(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledCorpus {
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(sample, label)` pairs, e.g. for use as a test set.
    pub fn pairs(&self) -> Vec<(Sample, usize)> {
        self.samples.iter().cloned().zip(self.labels.iter().copied()).collect()
    }
}
