//! Minimal self-contained SVG emitter for ROC figures: axes, ticks, a
//! chance diagonal and the curve polyline. No plotting dependency.

use mdpad_core::metrics::RocCurve;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn x_px(fpr: f64) -> f64 {
    MARGIN + fpr * (SIZE - 2.0 * MARGIN)
}

fn y_px(tpr: f64) -> f64 {
    SIZE - MARGIN - tpr * (SIZE - 2.0 * MARGIN)
}

/// Renders the ROC curve (TPR against FPR) with the AUC in the caption.
pub fn roc_svg(curve: &RocCurve, auc: f64, title: &str) -> String {
    let mut pts: Vec<(f64, f64)> = curve.points().iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let polyline: Vec<String> =
        pts.iter().map(|&(f, t)| format!("{:.2},{:.2}", x_px(f), y_px(t))).collect();

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    s.push_str(&format!(
        "  <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"15\">{title} (AUC = {auc:.4})</text>\n",
        SIZE / 2.0
    ));
    // Axes.
    s.push_str(&format!(
        "  <line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{2:.1}\" y2=\"{1:.1}\" stroke=\"black\"/>\n",
        x_px(0.0),
        y_px(0.0),
        x_px(1.0)
    ));
    s.push_str(&format!(
        "  <line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" stroke=\"black\"/>\n",
        x_px(0.0),
        y_px(0.0),
        y_px(1.0)
    ));
    // Ticks and grid labels every 0.2.
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        s.push_str(&format!(
            "  <line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" stroke=\"black\"/>\n\
             \x20 <text x=\"{0:.1}\" y=\"{3:.1}\" text-anchor=\"middle\" \
             font-family=\"sans-serif\" font-size=\"11\">{v:.1}</text>\n",
            x_px(v),
            y_px(0.0),
            y_px(0.0) + 5.0,
            y_px(0.0) + 20.0
        ));
        s.push_str(&format!(
            "  <line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{2:.1}\" y2=\"{1:.1}\" stroke=\"black\"/>\n\
             \x20 <text x=\"{3:.1}\" y=\"{4:.1}\" text-anchor=\"end\" \
             font-family=\"sans-serif\" font-size=\"11\">{v:.1}</text>\n",
            x_px(0.0),
            y_px(v),
            x_px(0.0) - 5.0,
            x_px(0.0) - 8.0,
            y_px(v) + 4.0
        ));
    }
    // Axis titles.
    s.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">False positive rate</text>\n",
        SIZE / 2.0,
        SIZE - 12.0
    ));
    s.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\" transform=\"rotate(-90 16 {0:.1})\">True positive rate</text>\n",
        SIZE / 2.0
    ));
    // Chance diagonal.
    s.push_str(&format!(
        "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" \
         stroke-dasharray=\"6,4\"/>\n",
        x_px(0.0),
        y_px(0.0),
        x_px(1.0),
        y_px(1.0)
    ));
    // The curve itself.
    s.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#c33\" stroke-width=\"2\"/>\n",
        polyline.join(" ")
    ));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdpad_core::metrics::{auc, roc, ScoreSet};

    #[test]
    fn emits_self_contained_svg() {
        let s = ScoreSet::new(vec![(0.2, 0), (0.3, 0), (0.7, 1), (0.9, 1)]).unwrap();
        let curve = roc(&s).unwrap();
        let svg = roc_svg(&curve, auc(&curve), "test");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("False positive rate"));
        assert!(svg.contains("AUC = 1.0000"));
    }
}
