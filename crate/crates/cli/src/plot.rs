//! Minimal SVG output: precision-recall curves and box overlays.

use std::fmt::Write;

use bbav_core::dota_io::AnnotationRecord;
use bbav_core::geometry::Point2;
use bbav_core::Detection;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn pr_curve(class: &str, precision: &[f64], recall: &[f64], ap: f64) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let px = |r: f64| MARGIN + r * SIZE;
    let py = |p: f64| MARGIN + (1.0 - p) * SIZE;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{full}\" height=\"{full}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>"
    );
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{t:.1}</text>", px(t), full - 20.0);
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{t:.1}</text>", MARGIN - 4.0, py(t) + 4.0);
    }
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">recall</text>", px(0.5), full - 4.0);
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\">{} (AP {ap:.4})</text>",
        px(0.5),
        escape(class)
    );
    let points: Vec<String> = recall
        .iter()
        .zip(precision)
        .map(|(&r, &p)| format!("{:.2},{:.2}", px(r), py(p)))
        .collect();
    if !points.is_empty() {
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
            points.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn polygon(svg: &mut String, corners: &[Point2; 4], map: impl Fn(Point2) -> (f64, f64), style: &str) {
    let pts: Vec<String> = corners
        .iter()
        .map(|&p| {
            let (x, y) = map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(svg, "<polygon points=\"{}\" {style}/>", pts.join(" "));
}

/// Ground truth in green (difficult dashed), detections in red with scores.
pub fn overlay(image: &str, gt: &[AnnotationRecord], dets: &[Detection]) -> String {
    let all = gt.iter().map(|g| &g.corners).chain(dets.iter().map(|d| &d.corners)).flatten();
    let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in all.filter(|p| p.is_finite()) {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.is_finite() {
        (lo, hi) = (Point2::ZERO, Point2::new(1.0, 1.0));
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
    let scale = 2.0 * SIZE / span;
    let map = |p: Point2| (MARGIN + (p.x - lo.x) * scale, MARGIN + (p.y - lo.y) * scale);
    let (w, h) = ((hi.x - lo.x) * scale + 2.0 * MARGIN, (hi.y - lo.y) * scale + 2.0 * MARGIN);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(svg, "<text x=\"4\" y=\"14\">{}</text>", escape(image));
    for g in gt {
        let style = if g.difficult {
            "fill=\"none\" stroke=\"green\" stroke-dasharray=\"4 3\""
        } else {
            "fill=\"none\" stroke=\"green\" stroke-width=\"2\""
        };
        polygon(&mut svg, &g.corners, map, style);
    }
    for d in dets {
        polygon(&mut svg, &d.corners, map, "fill=\"none\" stroke=\"red\"");
        let (x, y) = map(d.corners[0]);
        let _ = writeln!(svg, "<text x=\"{x:.1}\" y=\"{:.1}\" fill=\"red\">{:.2}</text>", y - 2.0, d.score);
    }
    svg.push_str("</svg>\n");
    svg
}
