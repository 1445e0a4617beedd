//! Dependency-free SVG line plots for run-log curves. The CSVs are the
//! contract; these are convenience artifacts for eyeballing convergence.

use crate::error::{Error, Result};
use crate::train::runlog::{EpochRow, RunLog};

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 44.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Pull one named column out of a run log as (epoch, value) points.
pub fn column_series(log: &RunLog, column: &str, label: &str) -> Result<Series> {
    let pick: fn(&EpochRow) -> f64 = match column {
        "train_loss" => |r| r.train_loss,
        "train_seg_loss" => |r| r.train_seg_loss,
        "train_ist_loss" => |r| r.train_ist_loss,
        "lr" => |r| r.lr,
        "lambda" => |r| r.lambda,
        "val_precision" => |r| r.val_precision,
        "val_pixel_accuracy" => |r| r.val_pixel_accuracy,
        "val_jaccard" => |r| r.val_jaccard,
        "wall_seconds" => |r| r.wall_seconds,
        other => {
            return Err(Error::invalid(format!("unknown run-log column '{other}'")))
        }
    };
    Ok(Series {
        label: label.to_string(),
        points: log.rows.iter().map(|r| (r.epoch as f64, pick(r))).collect(),
    })
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 * span {
        out.push(t);
        t += step;
    }
    out
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 0.01 && a < 10000.0 {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Render series as an SVG line plot with axes, ticks and a legend.
pub fn render_svg(series: &[Series], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::invalid("nothing to plot"));
    }
    let all = series.iter().flat_map(|s| &s.points);
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_hi == x_lo {
        x_hi += 1.0;
    }
    if y_hi == y_lo {
        y_hi += 1.0;
        y_lo -= 1.0;
    }
    // a little headroom so curves don't hug the frame
    let pad = (y_hi - y_lo) * 0.05;
    y_lo -= pad;
    y_hi += pad;

    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    ));

    // frame
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));
    for t in nice_ticks(x_lo, x_hi) {
        let x = px(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            HEIGHT - MARGIN_B + 18.0,
            fmt(t)
        ));
    }
    for t in nice_ticks(y_lo, y_hi) {
        let y = py(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0,
            fmt(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
        let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_L + 8.0,
            MARGIN_L + 30.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN_L + 36.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::runlog::EpochRow;

    fn demo_log() -> RunLog {
        RunLog {
            rows: (0..5)
                .map(|e| EpochRow {
                    epoch: e,
                    train_loss: 1.0 / (e + 1) as f64,
                    train_seg_loss: 0.8 / (e + 1) as f64,
                    train_ist_loss: 0.2,
                    lr: 0.001,
                    lambda: 1.0,
                    val_precision: 0.9,
                    val_pixel_accuracy: 0.9,
                    val_jaccard: 0.5 + 0.08 * e as f64,
                    wall_seconds: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn svg_contains_curves_and_balanced_tags() {
        let log = demo_log();
        let s1 = column_series(&log, "val_jaccard", "run a").unwrap();
        let s2 = column_series(&log, "train_loss", "run b").unwrap();
        let svg = render_svg(&[s1, s2], "demo", "epoch", "value").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("run a") && svg.contains("run b"));
    }

    #[test]
    fn unknown_column_errors() {
        assert!(column_series(&demo_log(), "bogus", "x").is_err());
    }

    #[test]
    fn empty_input_errors() {
        assert!(render_svg(&[], "t", "x", "y").is_err());
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let s = Series {
            label: "flat".into(),
            points: vec![(0.0, 1.0), (1.0, 1.0)],
        };
        let svg = render_svg(&[s], "t", "x", "y").unwrap();
        assert!(!svg.contains("NaN"));
    }
}
