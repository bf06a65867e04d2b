//! Sparse multi-scale feature fusion.
//!
//! Candidate keypoints found on the 1/4-resolution heatmap are mapped onto
//! the 1/8 and 1/16 feature maps, the three `D`-channel feature vectors are
//! gathered and concatenated into a `K x 3D` embedding, and a single linear
//! layer (a 1x1 convolution over `K` points) regresses the box parameters.
//! Only `K` rows ever touch the regression head instead of every pixel of
//! the dense output grid.

use crate::error::{Error, Result};
use crate::geometry::GridIndex;
use crate::heatmap::KeypointSet;

/// Pyramid level, named by its stride relative to the input image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Quarter,
    Eighth,
    Sixteenth,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Quarter, Level::Eighth, Level::Sixteenth];

    pub fn stride(self) -> usize {
        4 * self.factor()
    }

    /// Downscale factor relative to the 1/4 grid.
    pub fn factor(self) -> usize {
        match self {
            Level::Quarter => 1,
            Level::Eighth => 2,
            Level::Sixteenth => 4,
        }
    }
}

/// How fractional indices are discretized when moving to a coarser level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexRounding {
    #[default]
    Floor,
    Round,
}

fn scale_coord(x: usize, factor: usize, rounding: IndexRounding) -> usize {
    match rounding {
        IndexRounding::Floor => x / factor,
        IndexRounding::Round => (x + factor / 2) / factor,
    }
}

/// Maps a 1/4-grid index onto `level`.
pub fn map_index(index: GridIndex, level: Level, rounding: IndexRounding) -> GridIndex {
    let f = level.factor();
    GridIndex::new(
        scale_coord(index.u, f, rounding),
        scale_coord(index.v, f, rounding),
    )
}

/// Floor-mapped indices of `indices` on `level`.
pub fn map_indices(indices: &[GridIndex], level: Level) -> Vec<GridIndex> {
    indices
        .iter()
        .map(|&i| map_index(i, level, IndexRounding::Floor))
        .collect()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `H x W x D` feature grid, channels contiguous per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} feature map needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, index: GridIndex) -> Option<&[f64]> {
        if index.u >= self.width || index.v >= self.height {
            return None;
        }
        let start = (index.v * self.width + index.u) * self.channels;
        Some(&self.data[start..start + self.channels])
    }

    pub fn pixel_mut(&mut self, index: GridIndex) -> Option<&mut [f64]> {
        if index.u >= self.width || index.v >= self.height {
            return None;
        }
        let start = (index.v * self.width + index.u) * self.channels;
        Some(&mut self.data[start..start + self.channels])
    }
}

/// Feature maps at strides 4, 8 and 16.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    levels: [FeatureMap; 3],
}

impl FeaturePyramid {
    /// Coarser levels must be ceiling-halvings of the 1/4 level, so every
    /// 1/4 pixel maps inside them, and all levels must share the channel count.
    pub fn new(quarter: FeatureMap, eighth: FeatureMap, sixteenth: FeatureMap) -> Result<Self> {
        let (h, w, d) = (quarter.height, quarter.width, quarter.channels);
        if d == 0 {
            return Err(Error::InvalidArgument("pyramid needs D >= 1".into()));
        }
        for (map, f) in [(&eighth, 2), (&sixteenth, 4)] {
            let (eh, ew) = (h.div_ceil(f), w.div_ceil(f));
            if map.height != eh || map.width != ew || map.channels != d {
                return Err(Error::ShapeMismatch(format!(
                    "level 1/{} is {}x{}x{}, expected {}x{}x{d}",
                    4 * f,
                    map.height,
                    map.width,
                    map.channels,
                    eh,
                    ew
                )));
            }
        }
        if [&quarter, &eighth, &sixteenth]
            .iter()
            .any(|m| m.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self {
            levels: [quarter, eighth, sixteenth],
        })
    }

    /// Zero pyramid whose 1/4 level is `height x width`.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            levels: [
                FeatureMap::zeros(height, width, channels),
                FeatureMap::zeros(height.div_ceil(2), width.div_ceil(2), channels),
                FeatureMap::zeros(height.div_ceil(4), width.div_ceil(4), channels),
            ],
        }
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels
    }

    pub fn level(&self, level: Level) -> &FeatureMap {
        &self.levels[level_slot(level)]
    }

    pub fn level_mut(&mut self, level: Level) -> &mut FeatureMap {
        &mut self.levels[level_slot(level)]
    }
}

fn level_slot(level: Level) -> usize {
    match level {
        Level::Quarter => 0,
        Level::Eighth => 1,
        Level::Sixteenth => 2,
    }
}

/// `K x 3D` embedding, levels ordered finest to coarsest.
pub fn gather_fuse(pyramid: &FeaturePyramid, keypoints: &KeypointSet) -> Result<Matrix> {
    gather_fuse_with(pyramid, &keypoints.indices(), IndexRounding::Floor)
}

pub fn gather_fuse_with(
    pyramid: &FeaturePyramid,
    indices: &[GridIndex],
    rounding: IndexRounding,
) -> Result<Matrix> {
    let d = pyramid.channels();
    let mut out = Matrix::zeros(indices.len(), 3 * d);
    for (row, &index) in indices.iter().enumerate() {
        let dst = out.row_mut(row);
        for (slot, level) in Level::ALL.iter().enumerate() {
            let mapped = map_index(index, *level, rounding);
            let src = pyramid.level(*level).pixel(mapped).ok_or_else(|| {
                Error::OutOfBounds(format!(
                    "keypoint ({}, {}) maps to ({}, {}) outside level 1/{}",
                    index.u,
                    index.v,
                    mapped.u,
                    mapped.v,
                    level.stride()
                ))
            })?;
            dst[slot * d..(slot + 1) * d].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Linear regression layer: `inputs x outputs` weights plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHead {
    weights: Matrix,
    bias: Vec<f64>,
}

impl RegressionHead {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.cols != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "head has {} outputs but bias of length {}",
                weights.cols,
                bias.len()
            )));
        }
        if weights.data.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite head parameter".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `out = bias + x . W`, accumulated input by input.
    #[inline]
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        let r = self.bias.len();
        for (j, &xj) in x.iter().enumerate() {
            let w = &self.weights.data[j * r..(j + 1) * r];
            for (o, wk) in out.iter_mut().zip(w) {
                *o += xj * wk;
            }
        }
    }

    /// Largest absolute parameter difference to `other`.
    pub fn max_abs_diff(&self, other: &RegressionHead) -> f64 {
        let b = self
            .bias
            .iter()
            .zip(&other.bias)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.weights.max_abs_diff(&other.weights).max(b)
    }
}

/// Applies the head to every embedding row.
pub fn regress(embedding: &Matrix, head: &RegressionHead) -> Result<Matrix> {
    if embedding.cols != head.inputs() {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} columns, head expects {}",
            embedding.cols,
            head.inputs()
        )));
    }
    let mut out = Matrix::zeros(embedding.rows, head.outputs());
    for i in 0..embedding.rows {
        let (src, dst) = (
            embedding.row(i),
            &mut out.data[i * head.outputs()..(i + 1) * head.outputs()],
        );
        head.apply_into(src, dst);
    }
    Ok(out)
}

/// Applies a single-scale head at every pixel of `features`, producing the
/// dense `H x W x R` regression map.
pub fn dense_regress(features: &FeatureMap, head: &RegressionHead) -> Result<FeatureMap> {
    if features.channels != head.inputs() {
        return Err(Error::ShapeMismatch(format!(
            "feature map has {} channels, head expects {}",
            features.channels,
            head.inputs()
        )));
    }
    let r = head.outputs();
    let mut out = FeatureMap::zeros(features.height, features.width, r);
    let d = features.channels;
    for (src, dst) in features
        .data
        .chunks_exact(d.max(1))
        .zip(out.data.chunks_exact_mut(r.max(1)))
    {
        head.apply_into(src, dst);
    }
    Ok(out)
}

/// Dense baseline: regress every pixel, then sample the keypoints.
pub fn dense_regress_then_gather(
    features: &FeatureMap,
    head: &RegressionHead,
    indices: &[GridIndex],
) -> Result<Matrix> {
    let dense = dense_regress(features, head)?;
    let r = head.outputs();
    let mut out = Matrix::zeros(indices.len(), r);
    for (i, &index) in indices.iter().enumerate() {
        let src = dense
            .pixel(index)
            .ok_or_else(|| Error::OutOfBounds(format!("keypoint ({}, {}) outside grid", index.u, index.v)))?;
        out.row_mut(i).copy_from_slice(src);
    }
    Ok(out)
}

/// Sparse counterpart restricted to one level: gather then regress.
pub fn gather_then_regress_single(
    features: &FeatureMap,
    head: &RegressionHead,
    indices: &[GridIndex],
) -> Result<Matrix> {
    let d = features.channels;
    let mut emb = Matrix::zeros(indices.len(), d);
    for (i, &index) in indices.iter().enumerate() {
        let src = features
            .pixel(index)
            .ok_or_else(|| Error::OutOfBounds(format!("keypoint ({}, {}) outside grid", index.u, index.v)))?;
        emb.row_mut(i).copy_from_slice(src);
    }
    regress(&emb, head)
}
