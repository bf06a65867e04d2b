//! Keypoint heatmaps: Gaussian ground-truth splatting and top-K proposal.

use crate::error::{Error, Result};
use crate::geometry::GridIndex;

/// Default overlap used to size the Gaussian radius.
pub const DEFAULT_MIN_OVERLAP: f64 = 0.7;
/// Default number of proposals.
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatmapShape {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl HeatmapShape {
    pub fn new(height: usize, width: usize, classes: usize) -> Result<Self> {
        if height == 0 || width == 0 || classes == 0 {
            return Err(Error::InvalidArgument(format!(
                "heatmap shape must be positive, got {height}x{width}x{classes}"
            )));
        }
        Ok(Self {
            height,
            width,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index `c*H*W + v*W + u`, also used for tie-breaking.
    pub fn flat_index(&self, class: usize, u: usize, v: usize) -> usize {
        class * self.height * self.width + v * self.width + u
    }

    pub fn contains(&self, class: usize, u: usize, v: usize) -> bool {
        class < self.classes && u < self.width && v < self.height
    }
}

/// Per-class probability grid stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    shape: HeatmapShape,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(shape: HeatmapShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: HeatmapShape, value: f64) -> Result<Self> {
        Self::from_values(shape, vec![value; shape.len()])
    }

    /// Values must be finite and in `[0, 1]`.
    pub fn from_values(shape: HeatmapShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "heatmap expects {} values, got {}",
                shape.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "heatmap value {bad} outside [0, 1]"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> HeatmapShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, class: usize, u: usize, v: usize) -> Option<f64> {
        self.shape
            .contains(class, u, v)
            .then(|| self.values[self.shape.flat_index(class, u, v)])
    }

    fn channel(&self, class: usize) -> &[f64] {
        let n = self.shape.height * self.shape.width;
        &self.values[class * n..(class + 1) * n]
    }
}

/// One Gaussian splat on the output grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub center: GridIndex,
    pub sigma: f64,
    pub class: usize,
    /// Peak value; ground truth uses 1.
    pub amplitude: f64,
}

impl GaussianSpec {
    pub fn new(center: GridIndex, sigma: f64, class: usize) -> Self {
        Self {
            center,
            sigma,
            class,
            amplitude: 1.0,
        }
    }
}

/// CornerNet-style radius: the largest corner displacement for which a box of
/// the given size keeps at least `min_overlap` IoU, taken as the minimum over
/// the three displacement cases.
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let (h, w, o) = (height, width, min_overlap);
    // both corners shifted by r in the same direction
    let b1 = h + w;
    let c1 = w * h * (1.0 - o) / (1.0 + o);
    let r1 = (b1 - (b1 * b1 - 4.0 * c1).max(0.0).sqrt()) / 2.0;
    // prediction shrunk by r on every side
    let b2 = 2.0 * (h + w);
    let c2 = (1.0 - o) * w * h;
    let r2 = (b2 - (b2 * b2 - 16.0 * c2).max(0.0).sqrt()) / 8.0;
    // prediction grown by r on every side
    let a3 = 4.0 * o;
    let b3 = 2.0 * o * (h + w);
    let c3 = (o - 1.0) * w * h;
    let r3 = (-b3 + (b3 * b3 - 4.0 * a3 * c3).max(0.0).sqrt()) / (2.0 * a3);
    r1.min(r2).min(r3).max(0.0)
}

/// `sigma = (2 * floor(r) + 1) / 6`.
pub fn sigma_from_radius(radius: f64) -> f64 {
    (2.0 * radius.max(0.0).floor() + 1.0) / 6.0
}

/// Max-composes the Gaussians of `specs` into a fresh heatmap.
pub fn encode_heatmap(specs: &[GaussianSpec], shape: HeatmapShape) -> Result<Heatmap> {
    let mut map = Heatmap::zeros(shape);
    for spec in specs {
        splat(&mut map, spec)?;
    }
    Ok(map)
}

fn splat(map: &mut Heatmap, spec: &GaussianSpec) -> Result<()> {
    let shape = map.shape;
    let GridIndex { u: cu, v: cv } = spec.center;
    if !shape.contains(spec.class, cu, cv) {
        return Err(Error::OutOfBounds(format!(
            "gaussian center ({cu}, {cv}) class {} outside {}x{}x{}",
            spec.class, shape.width, shape.height, shape.classes
        )));
    }
    if !(spec.sigma > 0.0) || !(0.0..=1.0).contains(&spec.amplitude) {
        return Err(Error::InvalidArgument(format!(
            "gaussian needs sigma > 0 and amplitude in [0, 1], got {} / {}",
            spec.sigma, spec.amplitude
        )));
    }
    let denom = 2.0 * spec.sigma * spec.sigma;
    let base = spec.class * shape.height * shape.width;
    for v in 0..shape.height {
        let dy = v as f64 - cv as f64;
        for u in 0..shape.width {
            let dx = u as f64 - cu as f64;
            let g = spec.amplitude * (-(dx * dx + dy * dy) / denom).exp();
            let cell = &mut map.values[base + v * shape.width + u];
            if g > *cell {
                *cell = g;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub class: usize,
    pub index: GridIndex,
    pub score: f64,
}

/// Proposals ordered by descending score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeypointSet(Vec<Keypoint>);

impl KeypointSet {
    /// Sorts into canonical order (descending score, then ascending position).
    pub fn from_unsorted(mut points: Vec<Keypoint>, shape: HeatmapShape) -> Self {
        points.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| {
                shape
                    .flat_index(a.class, a.index.u, a.index.v)
                    .cmp(&shape.flat_index(b.class, b.index.u, b.index.v))
            })
        });
        Self(points)
    }

    /// Wraps keypoints whose order the caller is responsible for, e.g. the
    /// ground-truth keypoints used during training.
    pub fn from_ordered(points: Vec<Keypoint>) -> Self {
        Self(points)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Keypoint> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Keypoint] {
        &self.0
    }

    pub fn indices(&self) -> Vec<GridIndex> {
        self.0.iter().map(|k| k.index).collect()
    }
}

impl<'a> IntoIterator for &'a KeypointSet {
    type Item = &'a Keypoint;
    type IntoIter = std::slice::Iter<'a, Keypoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn is_local_max(channel: &[f64], width: usize, height: usize, u: usize, v: usize) -> bool {
    let value = channel[v * width + u];
    let v_lo = v.saturating_sub(1);
    let v_hi = (v + 1).min(height - 1);
    let u_lo = u.saturating_sub(1);
    let u_hi = (u + 1).min(width - 1);
    for nv in v_lo..=v_hi {
        for nu in u_lo..=u_hi {
            if channel[nv * width + nu] > value {
                return false;
            }
        }
    }
    true
}

/// 3x3 max suppression per channel, then the `k` best survivors across all
/// channels. Equal scores are ordered by flat index.
pub fn topk(heatmap: &Heatmap, k: usize) -> KeypointSet {
    let shape = heatmap.shape;
    let mut survivors = Vec::new();
    if k == 0 {
        return KeypointSet(survivors);
    }
    for class in 0..shape.classes {
        let channel = heatmap.channel(class);
        for v in 0..shape.height {
            for u in 0..shape.width {
                if is_local_max(channel, shape.width, shape.height, u, v) {
                    survivors.push(Keypoint {
                        class,
                        index: GridIndex::new(u, v),
                        score: channel[v * shape.width + u],
                    });
                }
            }
        }
    }
    let mut set = KeypointSet::from_unsorted(survivors, shape);
    set.0.truncate(k);
    set
}

/// Heatmap values at `(class, u, v)` positions, order preserved.
pub fn sample_scores(heatmap: &Heatmap, indices: &[(usize, GridIndex)]) -> Result<Vec<f64>> {
    indices
        .iter()
        .map(|&(class, GridIndex { u, v })| {
            heatmap
                .get(class, u, v)
                .ok_or_else(|| Error::OutOfBounds(format!("sample ({class}, {u}, {v}) outside heatmap")))
        })
        .collect()
}
