//! Head-side pipeline of a keypoint-based monocular 3D object detector.
//!
//! The crate covers everything that happens after a backbone has produced
//! feature maps:
//!
//! 1. [`heatmap`] – Gaussian ground-truth heatmaps and top-K keypoint proposal.
//! 2. [`litefpn`] – cross-scale index mapping, sparse feature gathering into a
//!    `K x 3D` embedding and the shared linear regression head.
//! 3. [`geometry`] – regression-tuple encode/decode and rotated-box IoU.
//! 4. [`losses`] – focal, L1 and attention-weighted regression losses with
//!    analytic gradients and a finite-difference checker.
//! 5. [`eval`] – KITTI-style matching and interpolated average precision.
//! 6. [`kitti_io`] – label/calibration/split file formats.
//! 7. [`synth`] – synthetic scenes and an oracle backbone so the whole chain
//!    can run end to end without a trained network.
//! 8. [`bench`] – FLOP counts and timing of sparse vs dense regression.
//! 9. [`plot`] – bird's-eye-view SVG rendering.

// `!(x > 0.0)` also rejects NaN, which is the point
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod heatmap;
pub mod kitti_io;
pub mod litefpn;
pub mod losses;
pub mod plot;
pub mod synth;

pub use error::{Error, Result};
