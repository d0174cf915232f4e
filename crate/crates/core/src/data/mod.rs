//! Image pairs, change masks, and everything that produces them.

mod augment;
mod dataset;
pub mod netpbm;
mod split;
mod synth;

pub use augment::{augment, crop_or_pad, flip_horizontal, flip_vertical, resize_nearest, rotate90, AugmentPolicy};
pub use dataset::{load_dataset, write_dataset};
pub use split::{fold_ranges, kfold_split};
pub use synth::{generate_dataset, generate_pair, Scene, Shape, ShapeKind, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Co-registered RGB images, each `3×H×W` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub image_a: Tensor<f32>,
    pub image_b: Tensor<f32>,
    pub name: String,
}

impl ImagePair {
    pub fn new(image_a: Tensor<f32>, image_b: Tensor<f32>, name: impl Into<String>) -> Result<Self> {
        if image_a.shape() != image_b.shape() || image_a.shape().len() != 3 || image_a.shape()[0] != 3 {
            return Err(Error::shape(
                "image pair",
                format!("{:?} vs {:?}", image_a.shape(), image_b.shape()),
            ));
        }
        Ok(ImagePair { image_a, image_b, name: name.into() })
    }

    pub fn height(&self) -> usize {
        self.image_a.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image_a.shape()[2]
    }
}

/// Binary `H×W` map: 0 = non-change, 1 = change.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChangeMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ChangeMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("mask", format!("{height}x{width} needs {} values, got {}", height * width, data.len())));
        }
        if let Some(&v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::shape("mask", format!("value {v} is not binary")));
        }
        Ok(ChangeMask { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ChangeMask { height, width, data: vec![0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    /// Class indices for the cross-entropy loss.
    pub fn targets(&self) -> Vec<usize> {
        self.data.iter().map(|&v| v as usize).collect()
    }

    pub fn change_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pair: ImagePair,
    pub mask: ChangeMask,
}

impl Sample {
    pub fn new(pair: ImagePair, mask: ChangeMask) -> Result<Self> {
        if (pair.height(), pair.width()) != (mask.height(), mask.width()) {
            return Err(Error::shape(
                "sample",
                format!("images {}x{}, mask {}x{}", pair.height(), pair.width(), mask.height(), mask.width()),
            ));
        }
        Ok(Sample { pair, mask })
    }

    pub fn name(&self) -> &str {
        &self.pair.name
    }
}
