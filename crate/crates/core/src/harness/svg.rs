//! Minimal SVG line chart of estimate and ground-truth traces: the
//! training-trace figure analogue. Distances are plotted on a natural-log
//! axis; the raw values stay in the CSV.

use super::{ExperimentReport, RecordRow};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 55.0;

const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
];

struct Series {
    label: String,
    color: String,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

/// Natural log clamped away from zero so degenerate distances stay
/// plottable.
fn log_value(v: f64) -> f64 {
    v.max(1e-6).ln()
}

pub fn render_traces(report: &ExperimentReport) -> String {
    // Pick the trace-like phase with the most rows.
    let phase = ["trace", "eval", "train", "oracle"]
        .iter()
        .max_by_key(|p| report.records.iter().filter(|r| &r.phase == *p).count())
        .copied()
        .unwrap_or("trace");
    let rows: Vec<&RecordRow> = report
        .records
        .iter()
        .filter(|r| r.phase == phase && r.repeat == 0)
        .collect();

    let mut methods: Vec<String> = Vec::new();
    for row in &rows {
        if !methods.contains(&row.method) {
            methods.push(row.method.clone());
        }
    }

    let mut series: Vec<Series> = Vec::new();
    for (k, method) in methods.iter().enumerate() {
        let color = COLORS[k % COLORS.len()].to_string();
        let of_method: Vec<&&RecordRow> = rows.iter().filter(|r| &r.method == method).collect();
        series.push(Series {
            label: format!("{method} est"),
            color: color.clone(),
            dashed: false,
            points: of_method
                .iter()
                .map(|r| (r.iter as f64, log_value(r.estimate)))
                .collect(),
        });
        let gt: Vec<(f64, f64)> = of_method
            .iter()
            .filter_map(|r| r.ground_truth.map(|g| (r.iter as f64, log_value(g))))
            .collect();
        if !gt.is_empty() {
            series.push(Series {
                label: format!("{method} true"),
                color,
                dashed: true,
                points: gt,
            });
        }
    }

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }

    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));
    out.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n",
        x = WIDTH / 2.0,
        y = HEIGHT - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {y})\">log distance</text>\n",
        y = HEIGHT / 2.0
    ));
    // Axis extremes.
    for (v, x, anchor) in [(x_min, sx(x_min), "start"), (x_max, sx(x_max), "end")] {
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"10\" text-anchor=\"{anchor}\">{v:.0}</text>\n",
            y = HEIGHT - MARGIN + 14.0
        ));
    }
    for (v, y) in [(y_min, sy(y_min)), (y_max, sy(y_max))] {
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"10\" text-anchor=\"end\">{v:.2}</text>\n",
            x = MARGIN - 6.0
        ));
    }

    for s in &series {
        if s.points.is_empty() {
            continue;
        }
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.3\"{} points=\"{}\"/>\n",
            s.color,
            dash,
            path.join(" ")
        ));
    }

    // Legend.
    for (k, s) in series.iter().enumerate() {
        let y = MARGIN + 16.0 * k as f64;
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{c}\"{dash} \
             stroke-width=\"2\"/>\n",
            x = WIDTH - MARGIN - 150.0,
            x2 = WIDTH - MARGIN - 120.0,
            c = s.color
        ));
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"11\">{label}</text>\n",
            x = WIDTH - MARGIN - 112.0,
            y = y + 4.0,
            label = s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}
