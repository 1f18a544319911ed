//! SVG rendering of the first two coordinates of a curve.

use std::fmt::Write;

use tangent_point::DiscreteCurve;

const SIZE: f64 = 512.0;
const MARGIN: f64 = 24.0;

/// A closed polyline through the nodes, fitted into a square canvas.
pub fn curve_svg(curve: &DiscreteCurve, caption: &str) -> String {
    let n = curve.n_nodes();
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| (curve.nodes().get(i, 0), curve.nodes().get(i, 1)))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let extent = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
    let scale = (SIZE - 2.0 * MARGIN) / extent;
    let cx = 0.5 * (x0 + x1);
    let cy = 0.5 * (y0 + y1);
    let mut points = String::new();
    for (x, y) in &pts {
        let px = SIZE / 2.0 + (x - cx) * scale;
        let py = SIZE / 2.0 - (y - cy) * scale;
        let _ = write!(points, "{px:.3},{py:.3} ");
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <title>{}</title>\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <polygon points=\"{}\" fill=\"none\" stroke=\"#1f4e79\" stroke-width=\"1.5\"/>\n\
         <text x=\"8\" y=\"16\" font-family=\"monospace\" font-size=\"12\">{}</text>\n\
         </svg>\n",
        escape(caption),
        points.trim_end(),
        escape(caption)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
