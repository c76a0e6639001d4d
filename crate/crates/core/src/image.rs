//! Batched image and binary mask tensors.
//!
//! Images are `B×C×H×W` real tensors with a nominal value range of
//! `[-1, 1]`; masks are `B×1×H×W` tensors that are strictly `{0, 1}`.
//! Both are plain `f64` arrays underneath so they can move freely between
//! the sampler, the autodiff graph, and the metric code.

use ndarray::{Array4, ArrayView4, Axis};

use crate::error::{Error, Result};

/// A batch of images, shape `(B, C, H, W)`, values nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    data: Array4<f64>,
}

impl ImageBatch {
    /// Wraps an array, rejecting NaN and infinity.
    pub fn new(data: Array4<f64>) -> Result<Self> {
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "image batch contains a non-finite value at flat index {bad}"
            )));
        }
        Ok(Self { data })
    }

    /// Wraps an array that is already known to be finite.
    pub(crate) fn from_raw(data: Array4<f64>) -> Self {
        Self { data }
    }

    /// All-zero batch.
    pub fn zeros(b: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            data: Array4::zeros((b, c, h, w)),
        }
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView4<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array4<f64> {
        self.data
    }

    /// `(B, C, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn batch_size(&self) -> usize {
        self.data.dim().0
    }

    /// Errors unless `other` has exactly the same shape.
    pub fn check_same_shape(&self, other: &ImageBatch, what: &str) -> Result<()> {
        if self.data.dim() != other.data.dim() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.data.dim(),
                other.data.dim()
            )));
        }
        Ok(())
    }

    /// Errors if any value is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Extracts one image of the batch as a `1×C×H×W` batch.
    pub fn slice_one(&self, index: usize) -> ImageBatch {
        let view = self.data.index_axis(Axis(0), index);
        ImageBatch::from_raw(view.insert_axis(Axis(0)).to_owned())
    }
}

/// A batch of binary anomaly masks, shape `(B, 1, H, W)`, values in `{0, 1}`.
///
/// 1 marks anomaly foreground (regenerated), 0 marks background (frozen).
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMask {
    data: Array4<f64>,
}

impl AnomalyMask {
    /// Wraps an array, rejecting anything that is not exactly 0 or 1.
    pub fn new(data: Array4<f64>) -> Result<Self> {
        if data.dim().1 != 1 {
            return Err(Error::Shape(format!(
                "mask must have exactly one channel, got {}",
                data.dim().1
            )));
        }
        Self::check_binary_array(&data)?;
        Ok(Self { data })
    }

    pub fn zeros(b: usize, h: usize, w: usize) -> Self {
        Self {
            data: Array4::zeros((b, 1, h, w)),
        }
    }

    pub fn ones(b: usize, h: usize, w: usize) -> Self {
        Self {
            data: Array4::ones((b, 1, h, w)),
        }
    }

    fn check_binary_array(data: &Array4<f64>) -> Result<()> {
        if let Some(bad) = data.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::NonBinaryMask(format!("found value {bad}")));
        }
        Ok(())
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array4<f64> {
        self.data
    }

    /// `(B, 1, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    /// Errors unless the mask matches `(B, H, W)` of the image batch.
    pub fn check_matches(&self, img: &ImageBatch, what: &str) -> Result<()> {
        let (mb, _, mh, mw) = self.data.dim();
        let (ib, _, ih, iw) = img.dims();
        if mb != ib || mh != ih || mw != iw {
            return Err(Error::Shape(format!(
                "{what}: mask {:?} does not pair with image {:?}",
                self.data.dim(),
                img.dims()
            )));
        }
        Ok(())
    }

    /// Fraction of foreground pixels over the whole batch.
    pub fn coverage(&self) -> f64 {
        self.data.sum() / self.data.len() as f64
    }

    /// Extracts one mask of the batch as a `1×1×H×W` mask.
    pub fn slice_one(&self, index: usize) -> AnomalyMask {
        let view = self.data.index_axis(Axis(0), index);
        AnomalyMask {
            data: view.insert_axis(Axis(0)).to_owned(),
        }
    }
}
