//! In-memory labelled image sets shared by the trainer and the window builder.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Axis-aligned pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x as f64 + self.w as f64 / 2.0
    }
}

/// Where a sample was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub image_id: String,
    pub rect: Rect,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Unique within its dataset; preserved by splits and subsets.
    pub id: usize,
    /// `C·H·W` values in channel-major order.
    pub pixels: Vec<f64>,
    pub label: usize,
    pub source: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_shape: [usize; 3],
    num_classes: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(input_shape: [usize; 3], num_classes: usize) -> Result<Self> {
        if input_shape.contains(&0) || num_classes == 0 {
            return arg_err(format!(
                "dataset needs non-empty input shape and classes, got {input_shape:?} / {num_classes}"
            ));
        }
        Ok(Self {
            input_shape,
            num_classes,
            samples: Vec::new(),
        })
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        let want: usize = self.input_shape.iter().product();
        if sample.pixels.len() != want {
            return shape_err(format!(
                "sample {} has {} values, input shape {:?} needs {want}",
                sample.id,
                sample.pixels.len(),
                self.input_shape
            ));
        }
        if sample.label >= self.num_classes {
            return arg_err(format!(
                "sample {} has label {} outside [0, {})",
                sample.id, sample.label, self.num_classes
            ));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Stacks the samples at `indices` into an `[N, C, H, W]` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let [c, h, w] = self.input_shape;
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| crate::Error::InvalidArgument(format!("sample index {i} out of range")))?;
            data.extend_from_slice(&s.pixels);
            labels.push(s.label);
        }
        Ok((Tensor::new(&[indices.len(), c, h, w], data)?, labels))
    }
}
