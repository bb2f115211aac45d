//! Tiny self-contained SVG line charts for sweep output.

use crate::output::fmt_sig;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let points = series.iter().flat_map(|s| s.points.iter());
    let mut bounds = None;
    for &(x, y) in points {
        let (x0, x1, y0, y1) = bounds.unwrap_or((x, x, y, y));
        bounds = Some((x0.min(x), x1.max(x), y0.min(y), y1.max(y)));
    }
    bounds.map(|(x0, x1, y0, y1)| {
        // A flat series still needs a nonzero span to project onto.
        let (y0, y1) = if y0 == y1 { (y0 - 1.0, y1 + 1.0) } else { (y0, y1) };
        let (x0, x1) = if x0 == x1 { (x0 - 1.0, x1 + 1.0) } else { (x0, x1) };
        (x0, x1, y0, y1)
    })
}

/// Renders the series as one SVG document with axes, min/max tick labels
/// and a legend. Returns `None` when there is nothing to draw.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Option<String> {
    let (x0, x1, y0, y1) = bounds(series)?;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    // Axes.
    let (left, right) = (MARGIN_L, WIDTH - MARGIN_R);
    let (top, bottom) = (MARGIN_T, HEIGHT - MARGIN_B);
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    for (value, x) in [(x0, left), (x1, right)] {
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            bottom + 18.0,
            fmt_sig(value, 4)
        ));
    }
    for (value, y) in [(y0, bottom), (y1, top)] {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            left - 6.0,
            y + 4.0,
            fmt_sig(value, 4)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (left + right) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    ));

    for (index, s) in series.iter().enumerate() {
        let color = COLORS[index % COLORS.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = top + 16.0 * index as f64;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            right - 120.0,
            right - 96.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            right - 90.0,
            ly + 4.0,
            escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_axes_series_and_labels() {
        let series = [
            Series {
                name: "contract".into(),
                points: vec![(0.1, 1.0), (0.5, 4.0), (0.9, 2.0)],
            },
            Series {
                name: "benchmark".into(),
                points: vec![(0.1, 3.0), (0.9, 3.0)],
            },
        ];
        let svg = line_chart("welfare vs epsilon", "epsilon", "welfare", &series).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("contract"));
        assert!(svg.contains("benchmark"));
        assert!(svg.contains("welfare vs epsilon"));
    }

    #[test]
    fn empty_series_yield_no_chart() {
        assert!(line_chart("t", "x", "y", &[]).is_none());
        let empty = [Series {
            name: "none".into(),
            points: vec![],
        }];
        assert!(line_chart("t", "x", "y", &empty).is_none());
    }
}
