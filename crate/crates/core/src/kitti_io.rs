//! KITTI object label, calibration and split files.
//!
//! Label lines are whitespace separated:
//!
//! ```text
//! type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]
//! ```
//!
//! `location` is the bottom center of the box in camera coordinates. Calib
//! files hold `key: 12 floats` lines of which `P2` is used.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{Detection, GroundTruth};
use crate::geometry::{Box3D, CameraCalib};

pub const DONT_CARE: &str = "DontCare";

/// KITTI object split sizes for the common train/val partition.
pub const TRAIN_SIZE: usize = 3712;
pub const VAL_SIZE: usize = 3769;

#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabel {
    pub kind: String,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    /// `(left, top, right, bottom)` in pixels.
    pub bbox: [f64; 4],
    /// `(h, w, l)` in meters.
    pub dimensions: [f64; 3],
    /// Bottom center `(x, y, z)` in meters.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

const FIELD_NAMES: [&str; 16] = [
    "type",
    "truncated",
    "occluded",
    "alpha",
    "bbox_left",
    "bbox_top",
    "bbox_right",
    "bbox_bottom",
    "height",
    "width",
    "length",
    "x",
    "y",
    "z",
    "rotation_y",
    "score",
];

/// Parses one label line. `line_no` is only used in error messages.
pub fn parse_label_line(line: &str, line_no: usize) -> Result<KittiLabel> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(Error::FieldCount {
            line: line_no,
            found: fields.len(),
        });
    }
    let num = |i: usize| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::InvalidField {
                line: line_no,
                field: FIELD_NAMES[i],
                value: fields[i].to_string(),
            })
    };
    let occluded = fields[2].parse::<i32>().or_else(|_| {
        // some writers emit the occlusion flag as a float
        num(2).and_then(|v| {
            if v.fract() == 0.0 {
                Ok(v as i32)
            } else {
                Err(Error::InvalidField {
                    line: line_no,
                    field: FIELD_NAMES[2],
                    value: fields[2].to_string(),
                })
            }
        })
    })?;
    let label = KittiLabel {
        kind: fields[0].to_string(),
        truncated: num(1)?,
        occluded,
        alpha: num(3)?,
        bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
        dimensions: [num(8)?, num(9)?, num(10)?],
        location: [num(11)?, num(12)?, num(13)?],
        rotation_y: num(14)?,
        score: if fields.len() == 16 { Some(num(15)?) } else { None },
    };
    Ok(label)
}

/// Parses a whole label file, skipping blank lines.
pub fn parse_label_file(text: &str) -> Result<Vec<KittiLabel>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_label_line(l, i + 1))
        .collect()
}

/// Formats a label: two decimals for angles and geometry, six for the score.
pub fn serialize_label(label: &KittiLabel) -> String {
    let mut s = String::with_capacity(128);
    let _ = write!(
        s,
        "{} {:.2} {} {:.2}",
        label.kind, label.truncated, label.occluded, label.alpha
    );
    for v in label
        .bbox
        .iter()
        .chain(&label.dimensions)
        .chain(&label.location)
        .chain([&label.rotation_y])
    {
        let _ = write!(s, " {v:.2}");
    }
    if let Some(score) = label.score {
        let _ = write!(s, " {score:.6}");
    }
    s
}

pub fn serialize_label_file(labels: &[KittiLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&serialize_label(l));
        out.push('\n');
    }
    out
}

impl KittiLabel {
    pub fn is_dont_care(&self) -> bool {
        self.kind == DONT_CARE
    }

    /// Geometric center box (location is the bottom center, `y` points down).
    pub fn to_box(&self) -> Result<Box3D> {
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        Box3D::new([x, y - 0.5 * h, z], [h, w, l], self.rotation_y)
    }

    /// Label for a box; `bbox` and `alpha` are supplied by the caller.
    pub fn from_box(kind: &str, b: &Box3D, bbox: [f64; 4], alpha: f64, score: Option<f64>) -> Self {
        let [x, y, z] = b.center();
        let [h, w, l] = b.dims();
        Self {
            kind: kind.to_string(),
            truncated: 0.0,
            occluded: 0,
            alpha,
            bbox,
            dimensions: [h, w, l],
            location: [x, y + 0.5 * h, z],
            rotation_y: b.yaw(),
            score,
        }
    }

    /// Ground-truth record; `None` for DontCare regions and other labels
    /// without a valid 3D box.
    pub fn to_ground_truth(&self, frame: u32) -> Option<GroundTruth> {
        if self.is_dont_care() {
            return None;
        }
        Some(GroundTruth {
            box3d: self.to_box().ok()?,
            class: self.kind.clone(),
            bbox_height: self.bbox[3] - self.bbox[1],
            occlusion: self.occluded,
            truncation: self.truncated,
            frame,
        })
    }

    /// Detection record; labels without a score get score 1.
    pub fn to_detection(&self, frame: u32) -> Result<Detection> {
        Ok(Detection {
            box3d: self.to_box()?,
            class: self.kind.clone(),
            score: self.score.unwrap_or(1.0),
            frame,
        })
    }
}

/// Projection of a box into the image as `(left, top, right, bottom)`.
pub fn image_bbox(b: &Box3D, calib: &CameraCalib) -> Result<[f64; 4]> {
    let mut out = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in b.corners() {
        let [u, v] = calib.project(c)?;
        out[0] = out[0].min(u);
        out[1] = out[1].min(v);
        out[2] = out[2].max(u);
        out[3] = out[3].max(v);
    }
    Ok(out)
}

/// Reads the `P2` matrix from a calibration file.
pub fn parse_calib(text: &str) -> Result<CameraCalib> {
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        if key.trim() != "P2" {
            continue;
        }
        let values = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::CalibFormat(format!("P2 entry {t:?} is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 12 {
            return Err(Error::CalibFormat(format!(
                "P2 needs 12 values, found {}",
                values.len()
            )));
        }
        return CameraCalib::from_row_major(&values);
    }
    Err(Error::CalibFormat("missing P2 line".into()))
}

pub fn serialize_calib(calib: &CameraCalib) -> String {
    let mut s = String::from("P2:");
    for v in calib.projection().iter().flatten() {
        let _ = write!(s, " {v:e}");
    }
    s.push('\n');
    s
}

/// Train/val frame ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
}

/// One zero-padded six-digit frame id per line.
pub fn parse_split(text: &str) -> Result<Vec<u32>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            if l.len() != 6 || !l.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::SplitFormat(format!(
                    "frame id {l:?} is not six zero-padded digits"
                )));
            }
            Ok(l.parse::<u32>().expect("six ascii digits"))
        })
        .collect()
}

pub fn serialize_split(ids: &[u32]) -> String {
    ids.iter().map(|id| format!("{id:06}\n")).collect()
}

impl SplitSpec {
    /// Checks the partition sizes and disjointness of the standard split.
    pub fn validate(&self) -> Result<()> {
        if self.train.len() != TRAIN_SIZE || self.val.len() != VAL_SIZE {
            return Err(Error::SplitFormat(format!(
                "expected {TRAIN_SIZE} train / {VAL_SIZE} val ids, found {} / {}",
                self.train.len(),
                self.val.len()
            )));
        }
        let train: BTreeSet<u32> = self.train.iter().copied().collect();
        let val: BTreeSet<u32> = self.val.iter().copied().collect();
        if train.len() != self.train.len() || val.len() != self.val.len() {
            return Err(Error::SplitFormat("duplicate frame ids".into()));
        }
        if let Some(id) = train.intersection(&val).next() {
            return Err(Error::SplitFormat(format!("frame {id:06} in both train and val")));
        }
        Ok(())
    }

    /// Loads `train.txt` and `val.txt` from `dir` and validates them.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let spec = SplitSpec {
            train: parse_split(&read("train.txt")?)?,
            val: parse_split(&read("val.txt")?)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Frame ids of the `%06d.txt` files in `dir`, sorted.
pub fn list_frames(dir: &Path) -> Result<Vec<u32>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        if let Some(id) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| s.len() == 6)
            .and_then(|s| s.parse::<u32>().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

pub fn frame_path(dir: &Path, frame: u32) -> std::path::PathBuf {
    dir.join(format!("{frame:06}.txt"))
}

/// Reads every label file of `dir`, in frame-id order.
pub fn load_label_dir(dir: &Path) -> Result<Vec<(u32, Vec<KittiLabel>)>> {
    list_frames(dir)?
        .into_iter()
        .map(|id| {
            let path = frame_path(dir, id);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok((id, parse_label_file(&text)?))
        })
        .collect()
}

/// Writes one label file per frame into `dir`.
pub fn write_label_dir(dir: &Path, frames: &[(u32, Vec<KittiLabel>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, labels) in frames {
        let path = frame_path(dir, *id);
        fs::write(&path, serialize_label_file(labels)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
