//! Bird's-eye-view SVG plots of ground truth and detections in the x–z plane.

use std::fmt::Write as _;

use crate::geometry::Box3D;

#[derive(Debug, Clone, PartialEq)]
pub struct BevView {
    /// Lateral extent `(min, max)` in meters.
    pub x_range: (f64, f64),
    /// Forward extent `(min, max)` in meters.
    pub z_range: (f64, f64),
    /// Pixels per meter.
    pub scale: f64,
}

impl Default for BevView {
    fn default() -> Self {
        Self {
            x_range: (-20.0, 20.0),
            z_range: (0.0, 50.0),
            scale: 10.0,
        }
    }
}

impl BevView {
    fn size(&self) -> (f64, f64) {
        (
            (self.x_range.1 - self.x_range.0) * self.scale,
            (self.z_range.1 - self.z_range.0) * self.scale,
        )
    }

    // forward points up the page
    fn to_px(&self, x: f64, z: f64) -> (f64, f64) {
        (
            (x - self.x_range.0) * self.scale,
            (self.z_range.1 - z) * self.scale,
        )
    }
}

const GT_STYLE: &str = r##"fill="none" stroke="#2a7d2a" stroke-width="2""##;
const DET_STYLE: &str = r##"fill="none" stroke="#c0392b" stroke-width="1.5" stroke-dasharray="6,3""##;

fn polygon(out: &mut String, view: &BevView, b: &Box3D, style: &str) {
    let pts: Vec<String> = b
        .bev_corners()
        .iter()
        .map(|&[x, z]| {
            let (px, py) = view.to_px(x, z);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(out, r#"  <polygon points="{}" {style}/>"#, pts.join(" "));
}

/// Renders ground-truth boxes solid and detections dashed, with a legend.
/// Output depends only on the inputs, so repeated calls are byte-identical.
pub fn render_bev_svg(gts: &[Box3D], dets: &[(Box3D, f64)], view: &BevView) -> String {
    let (w, h) = view.size();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, r##"  <rect width="100%" height="100%" fill="#ffffff"/>"##);
    let (cx, cy) = view.to_px(0.0, view.z_range.0);
    let _ = writeln!(
        s,
        r##"  <circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="#000000"/>"##
    );
    for b in gts {
        polygon(&mut s, view, b, GT_STYLE);
    }
    for (b, score) in dets {
        polygon(&mut s, view, b, DET_STYLE);
        let [x, _, z] = b.center();
        let (px, py) = view.to_px(x, z);
        let _ = writeln!(
            s,
            r##"  <text x="{px:.2}" y="{py:.2}" font-size="10" fill="#c0392b">{score:.2}</text>"##
        );
    }
    let _ = writeln!(s, r#"  <g font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"    <line x1="10" y1="15" x2="40" y2="15" {GT_STYLE}/>"#);
    let _ = writeln!(s, r#"    <text x="46" y="19">ground truth</text>"#);
    let _ = writeln!(s, r#"    <line x1="10" y1="33" x2="40" y2="33" {DET_STYLE}/>"#);
    let _ = writeln!(s, r#"    <text x="46" y="37">detection</text>"#);
    let _ = writeln!(s, "  </g>");
    s.push_str("</svg>\n");
    s
}
