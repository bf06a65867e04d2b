//! Oriented 3D boxes, pinhole projection, regression-tuple encoding and
//! rotated-box IoU.
//!
//! Coordinates follow the KITTI rectified camera frame: `x` right, `y` down,
//! `z` forward. Box dimensions are stored as `(h, w, l)`; at zero yaw the
//! length runs along `x` and the width along `z`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Decoded dimensions are clamped to this range (meters) so that an
/// exploding `exp` never produces a degenerate or infinite box.
pub const DIM_CLAMP: (f64, f64) = (0.1, 40.0);

/// Vertex tolerance used by the polygon clipper.
const CLIP_EPS: f64 = 1e-9;

/// Number of values in a [`RegressionTuple`].
pub const TAU_LEN: usize = 8;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Smallest absolute difference between two angles, in `[0, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Integer pixel on the 1/4-resolution output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub u: usize,
    pub v: usize,
}

impl GridIndex {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }
}

/// Oriented 3D box in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    center: [f64; 3],
    dims: [f64; 3],
    yaw: f64,
}

impl Box3D {
    /// `dims` is `(h, w, l)` and must be strictly positive. The yaw is
    /// normalized into `(-pi, pi]`.
    pub fn new(center: [f64; 3], dims: [f64; 3], yaw: f64) -> Result<Self> {
        if center.iter().any(|c| !c.is_finite()) || !yaw.is_finite() {
            return Err(Error::InvalidBox(format!(
                "non-finite center {center:?} or yaw {yaw}"
            )));
        }
        if dims.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::InvalidBox(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        Ok(Self {
            center,
            dims,
            yaw: normalize_angle(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    /// `(h, w, l)` in meters.
    pub fn dims(&self) -> [f64; 3] {
        self.dims
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn height(&self) -> f64 {
        self.dims[0]
    }

    pub fn width(&self) -> f64 {
        self.dims[1]
    }

    pub fn length(&self) -> f64 {
        self.dims[2]
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn bev_area(&self) -> f64 {
        self.dims[1] * self.dims[2]
    }

    /// Vertical extent `(top, bottom)` along camera `y`.
    pub fn y_range(&self) -> (f64, f64) {
        let half = 0.5 * self.dims[0];
        (self.center[1] - half, self.center[1] + half)
    }

    /// Footprint corners in the `x`-`z` plane, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.length();
        let hw = 0.5 * self.width();
        let local = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
        local.map(|[x, z]| [self.center[0] + c * x + s * z, self.center[2] - s * x + c * z])
    }

    /// The eight corners in camera coordinates (bottom face first).
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let bev = self.bev_corners();
        let (top, bottom) = self.y_range();
        let mut out = [[0.0; 3]; 8];
        for (i, [x, z]) in bev.iter().enumerate() {
            out[i] = [*x, bottom, *z];
            out[i + 4] = [*x, top, *z];
        }
        out
    }

    pub fn translated(&self, delta: [f64; 3]) -> Self {
        Self {
            center: [
                self.center[0] + delta[0],
                self.center[1] + delta[1],
                self.center[2] + delta[2],
            ],
            ..*self
        }
    }

    /// Total order used to make the IoU functions exactly symmetric.
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        let a = self.center.iter().chain(&self.dims).chain([&self.yaw]);
        let b = other.center.iter().chain(&other.dims).chain([&other.yaw]);
        for (x, y) in a.zip(b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

/// Camera projection matrix with KITTI `P2` semantics (row-major 3x4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalib {
    projection: [[f64; 4]; 3],
}

impl CameraCalib {
    pub fn new(projection: [[f64; 4]; 3]) -> Result<Self> {
        if projection.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCalib("non-finite entry".into()));
        }
        let bottom = &projection[2];
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 1.0 {
            return Err(Error::InvalidCalib(format!(
                "intrinsic bottom row must be (0, 0, 1), got ({}, {}, {})",
                bottom[0], bottom[1], bottom[2]
            )));
        }
        if projection[0][0] <= 0.0 || projection[1][1] <= 0.0 {
            return Err(Error::InvalidCalib("focal lengths must be positive".into()));
        }
        Ok(Self { projection })
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 12 {
            return Err(Error::InvalidCalib(format!(
                "expected 12 values, got {}",
                values.len()
            )));
        }
        let mut p = [[0.0; 4]; 3];
        for (i, v) in values.iter().enumerate() {
            p[i / 4][i % 4] = *v;
        }
        Self::new(p)
    }

    /// Pure intrinsics with a zero translation column.
    pub fn from_intrinsics(fu: f64, fv: f64, cu: f64, cv: f64) -> Result<Self> {
        Self::new([[fu, 0.0, cu, 0.0], [0.0, fv, cv, 0.0], [0.0, 0.0, 1.0, 0.0]])
    }

    /// `P2` of KITTI object frame 000000.
    pub fn kitti_reference() -> Self {
        Self {
            projection: [
                [7.215377e2, 0.0, 6.095593e2, 4.485728e1],
                [0.0, 7.215377e2, 1.728540e2, 2.163791e-1],
                [0.0, 0.0, 1.0, 2.745884e-3],
            ],
        }
    }

    pub fn projection(&self) -> &[[f64; 4]; 3] {
        &self.projection
    }

    pub fn fu(&self) -> f64 {
        self.projection[0][0]
    }

    pub fn fv(&self) -> f64 {
        self.projection[1][1]
    }

    pub fn cu(&self) -> f64 {
        self.projection[0][2]
    }

    pub fn cv(&self) -> f64 {
        self.projection[1][2]
    }

    /// Perspective projection of a camera-frame point to pixels.
    pub fn project(&self, point: [f64; 3]) -> Result<[f64; 2]> {
        let [x, y, z] = point;
        if !(z > 0.0) {
            return Err(Error::BehindCamera(z));
        }
        let p = &self.projection;
        let row = |r: &[f64; 4]| r[0] * x + r[1] * y + r[2] * z + r[3];
        let depth = row(&p[2]);
        if !(depth > 0.0) {
            return Err(Error::BehindCamera(depth));
        }
        Ok([row(&p[0]) / depth, row(&p[1]) / depth])
    }

    /// Inverse of [`project`](Self::project) for a known camera depth `z`.
    pub fn back_project(&self, pixel: [f64; 2], z: f64) -> Result<[f64; 3]> {
        if !(z > 0.0) {
            return Err(Error::BehindCamera(z));
        }
        let [u, v] = pixel;
        let p = &self.projection;
        // u * (p2 . X) = p0 . X and v * (p2 . X) = p1 . X, linear in (x, y).
        let a00 = p[0][0] - u * p[2][0];
        let a01 = p[0][1] - u * p[2][1];
        let a10 = p[1][0] - v * p[2][0];
        let a11 = p[1][1] - v * p[2][1];
        let b0 = u * (p[2][2] * z + p[2][3]) - p[0][2] * z - p[0][3];
        let b1 = v * (p[2][2] * z + p[2][3]) - p[1][2] * z - p[1][3];
        let det = a00 * a11 - a01 * a10;
        if det.abs() < f64::MIN_POSITIVE {
            return Err(Error::InvalidCalib("singular back-projection".into()));
        }
        let x = (b0 * a11 - a01 * b1) / det;
        let y = (a00 * b1 - b0 * a10) / det;
        Ok([x, y, z])
    }
}

/// Encoded 3D parameters at one keypoint:
/// `(dz, du, dv, dh, dw, dl, sin_alpha, cos_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTuple(pub [f64; TAU_LEN]);

impl RegressionTuple {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; TAU_LEN] = values.try_into().map_err(|_| {
            Error::ShapeMismatch(format!(
                "regression tuple needs {TAU_LEN} values, got {}",
                values.len()
            ))
        })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn depth_offset(&self) -> f64 {
        self.0[0]
    }

    pub fn center_offset(&self) -> [f64; 2] {
        [self.0[1], self.0[2]]
    }

    pub fn log_dims(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn orientation(&self) -> [f64; 2] {
        [self.0[6], self.0[7]]
    }
}

/// Constants of the regression-tuple encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStats {
    depth_mean: f64,
    depth_std: f64,
    mean_dims: Vec<[f64; 3]>,
    downsample: u32,
}

impl Default for DecodeStats {
    fn default() -> Self {
        Self {
            depth_mean: 28.01,
            depth_std: 16.32,
            mean_dims: vec![[1.63, 1.53, 3.88]],
            downsample: 4,
        }
    }
}

impl DecodeStats {
    pub fn new(depth_mean: f64, depth_std: f64, mean_dims: Vec<[f64; 3]>, downsample: u32) -> Result<Self> {
        if !depth_mean.is_finite() || !(depth_std > 0.0) || !depth_std.is_finite() {
            return Err(Error::InvalidArgument(
                "depth std must be positive and finite".into(),
            ));
        }
        if mean_dims.is_empty() || mean_dims.iter().flatten().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::InvalidArgument(
                "mean dims must be non-empty and positive".into(),
            ));
        }
        if downsample == 0 {
            return Err(Error::InvalidArgument("downsample must be positive".into()));
        }
        Ok(Self {
            depth_mean,
            depth_std,
            mean_dims,
            downsample,
        })
    }

    pub fn depth_mean(&self) -> f64 {
        self.depth_mean
    }

    pub fn depth_std(&self) -> f64 {
        self.depth_std
    }

    pub fn downsample(&self) -> u32 {
        self.downsample
    }

    pub fn num_classes(&self) -> usize {
        self.mean_dims.len()
    }

    pub fn mean_dims(&self, class: usize) -> Result<[f64; 3]> {
        self.mean_dims.get(class).copied().ok_or_else(|| {
            Error::OutOfBounds(format!(
                "class {class} has no mean dims ({} classes)",
                self.mean_dims.len()
            ))
        })
    }
}

/// Keypoint and regression targets for a ground-truth box.
pub fn encode_box(
    b: &Box3D,
    class: usize,
    calib: &CameraCalib,
    stats: &DecodeStats,
) -> Result<(GridIndex, RegressionTuple)> {
    let [x, _, z] = b.center;
    let [pu, pv] = calib.project(b.center)?;
    if !(pu >= 0.0 && pv >= 0.0) {
        return Err(Error::OutsideImage(pu, pv));
    }
    let s = f64::from(stats.downsample);
    let (gu, gv) = (pu / s, pv / s);
    let (ku, kv) = (gu.floor(), gv.floor());
    let mean = stats.mean_dims(class)?;
    let alpha = normalize_angle(b.yaw - x.atan2(z));
    let (sin_a, cos_a) = alpha.sin_cos();
    let tau = RegressionTuple([
        (z - stats.depth_mean) / stats.depth_std,
        gu - ku,
        gv - kv,
        (b.dims[0] / mean[0]).ln(),
        (b.dims[1] / mean[1]).ln(),
        (b.dims[2] / mean[2]).ln(),
        sin_a,
        cos_a,
    ]);
    Ok((GridIndex::new(ku as usize, kv as usize), tau))
}

/// Turns a regression tuple sampled at `keypoint` back into a 3D box.
pub fn decode_box(
    tau: &RegressionTuple,
    keypoint: GridIndex,
    class: usize,
    calib: &CameraCalib,
    stats: &DecodeStats,
) -> Result<Box3D> {
    if tau.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite regression tuple {:?}",
            tau.0
        )));
    }
    let z = stats.depth_mean + tau.depth_offset() * stats.depth_std;
    if !(z > 0.0) {
        return Err(Error::NonPositiveDepth(z));
    }
    let s = f64::from(stats.downsample);
    let [du, dv] = tau.center_offset();
    let pixel = [s * (keypoint.u as f64 + du), s * (keypoint.v as f64 + dv)];
    let center = calib.back_project(pixel, z)?;
    let mean = stats.mean_dims(class)?;
    let log_dims = tau.log_dims();
    let dims = [0, 1, 2].map(|i| (mean[i] * log_dims[i].exp()).clamp(DIM_CLAMP.0, DIM_CLAMP.1));
    let [sin_a, cos_a] = tau.orientation();
    let alpha = sin_a.atan2(cos_a);
    let yaw = alpha + center[0].atan2(center[2]);
    Box3D::new(center, dims, yaw)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice.abs()
}

fn line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let denom = d1 - d2;
    if denom.abs() < f64::MIN_POSITIVE {
        return p;
    }
    let t = d1 / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland–Hodgman clip of `subject` against the convex CCW polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let inside = |p: [f64; 2]| cross(a, b, p) >= -CLIP_EPS;
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(line_intersection(prev, cur, a, b)),
                (false, true) => {
                    output.push(line_intersection(prev, cur, a, b));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// Overlap area of the two footprints in the `x`-`z` plane.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let (a, b) = ordered(a, b);
    polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()))
}

fn ordered<'a>(a: &'a Box3D, b: &'a Box3D) -> (&'a Box3D, &'a Box3D) {
    if a.canonical_cmp(b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

fn ratio(inter: f64, size_a: f64, size_b: f64) -> f64 {
    // identical boxes were handled by the caller
    if !(size_a > 0.0) || !(size_b > 0.0) {
        return 0.0;
    }
    let union = size_a + size_b - inter;
    if !(union > 0.0) {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Bird's-eye-view IoU of the rotated footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a, b) = ordered(a, b);
    let inter = bev_intersection_area(a, b);
    ratio(inter, a.bev_area(), b.bev_area())
}

/// Volumetric IoU: BEV overlap times vertical overlap over the union volume.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a, b) = ordered(a, b);
    let (a_top, a_bottom) = a.y_range();
    let (b_top, b_bottom) = b.y_range();
    let overlap_h = (a_bottom.min(b_bottom) - a_top.max(b_top)).max(0.0);
    let inter = if overlap_h > 0.0 {
        bev_intersection_area(a, b) * overlap_h
    } else {
        0.0
    };
    ratio(inter, a.volume(), b.volume())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(x: f64, z: f64, yaw: f64) -> Box3D {
        Box3D::new([x, 0.0, z], [1.0, 1.0, 1.0], yaw).unwrap()
    }

    #[test]
    fn projection_examples() {
        let calib = CameraCalib::from_intrinsics(700.0, 700.0, 600.0, 180.0).unwrap();
        let [u, v] = calib.project([0.0, 0.0, 13.0]).unwrap();
        assert_eq!((u, v), (600.0, 180.0));
        let [u, v] = calib.project([2.0, 1.0, 10.0]).unwrap();
        assert!((u - 740.0).abs() < 1e-12 && (v - 250.0).abs() < 1e-12);
        assert!(matches!(
            calib.project([0.0, 0.0, -1.0]),
            Err(Error::BehindCamera(_))
        ));
        assert!(calib
            .project([0.0, 0.0, -1.0])
            .unwrap_err()
            .to_string()
            .contains("point behind camera"));
    }

    #[test]
    fn back_projection_inverts_projection_with_translation() {
        let calib = CameraCalib::kitti_reference();
        let p = [-3.2, 1.4, 17.5];
        let px = calib.project(p).unwrap();
        let q = calib.back_project(px, p[2]).unwrap();
        for i in 0..3 {
            assert!((p[i] - q[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn yaw_is_normalized() {
        let b = Box3D::new([0.0, 0.0, 5.0], [1.0, 1.0, 1.0], 3.0 * PI).unwrap();
        assert!((b.yaw() - PI).abs() < 1e-12);
        assert_eq!(normalize_angle(-PI), PI);
        assert_eq!(normalize_angle(PI), PI);
        assert!(Box3D::new([0.0; 3], [0.0, 1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn depth_decodes_to_mean_at_zero_offset() {
        let stats = DecodeStats::default();
        let calib = CameraCalib::from_intrinsics(700.0, 700.0, 600.0, 180.0).unwrap();
        let tau = RegressionTuple([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        // keypoint at the principal point so the center has x = 0
        let b = decode_box(&tau, GridIndex::new(150, 45), 0, &calib, &stats).unwrap();
        assert!((b.center()[2] - 28.01).abs() < 1e-12);
        assert!(b.center()[0].abs() < 1e-12);
        assert_eq!(b.yaw(), 0.0);
    }

    #[test]
    fn mean_dims_encode_to_zero() {
        let stats = DecodeStats::default();
        let calib = CameraCalib::kitti_reference();
        let b = Box3D::new([1.0, 1.0, 28.01], [1.63, 1.53, 3.88], 0.3).unwrap();
        let (_, tau) = encode_box(&b, 0, &calib, &stats).unwrap();
        assert_eq!(tau.log_dims(), [0.0, 0.0, 0.0]);
        assert!(tau.depth_offset().abs() < 1e-15);
    }

    #[test]
    fn decode_rejects_negative_depth() {
        let stats = DecodeStats::default();
        let calib = CameraCalib::kitti_reference();
        let tau = RegressionTuple([-5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let err = decode_box(&tau, GridIndex::new(1, 1), 0, &calib, &stats).unwrap_err();
        assert!(err.to_string().contains("non-positive decoded depth"));
    }

    #[test]
    fn encode_rejects_box_behind_camera() {
        let stats = DecodeStats::default();
        let calib = CameraCalib::kitti_reference();
        let b = Box3D::new([0.0, 1.0, -4.0], [1.5, 1.6, 3.9], 0.0).unwrap();
        assert!(encode_box(&b, 0, &calib, &stats).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = unit_box(0.0, 5.0, 0.0);
        assert_eq!(iou_bev(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        let b = unit_box(0.5, 5.0, 0.0);
        assert!((iou_bev(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou_3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let r = unit_box(0.0, 5.0, PI / 4.0);
        let octagon = 2.0 * (2f64.sqrt() - 1.0);
        let expected = octagon / (2.0 - octagon);
        assert!((iou_bev(&a, &r) - expected).abs() < 1e-12);
        assert!((iou_bev(&a, &r) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vertical_extents_give_zero() {
        let a = unit_box(0.0, 5.0, 0.0);
        let b = a.translated([0.0, 3.0, 0.0]);
        assert_eq!(iou_3d(&a, &b), 0.0);
        assert_eq!(iou_bev(&a, &b), 1.0);
    }

    #[test]
    fn iou_is_exactly_symmetric() {
        let a = Box3D::new([0.3, 0.1, 7.0], [1.5, 1.7, 4.1], 0.4).unwrap();
        let b = Box3D::new([0.9, -0.2, 7.8], [1.4, 1.6, 3.7], -1.1).unwrap();
        assert_eq!(iou_bev(&a, &b), iou_bev(&b, &a));
        assert_eq!(iou_3d(&a, &b), iou_3d(&b, &a));
    }

    #[test]
    fn far_apart_boxes_do_not_overlap() {
        let a = unit_box(0.0, 5.0, 0.2);
        let b = unit_box(10.0, 5.0, 0.2);
        assert_eq!(iou_bev(&a, &b), 0.0);
        assert_eq!(iou_3d(&a, &b), 0.0);
    }

    #[test]
    fn calib_validation() {
        assert!(CameraCalib::from_row_major(&[1.0; 11]).is_err());
        let bad = [700.0, 0.0, 600.0, 0.0, 0.0, 700.0, 180.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        assert!(CameraCalib::from_row_major(&bad).is_err());
        let c = CameraCalib::from_row_major(&[
            700.0, 0.0, 600.0, 0.0, 0.0, 700.0, 180.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        ])
        .unwrap();
        assert_eq!((c.fu(), c.fv(), c.cu(), c.cv()), (700.0, 700.0, 600.0, 180.0));
    }
}
