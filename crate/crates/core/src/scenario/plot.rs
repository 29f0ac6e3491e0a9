//! Four stacked panels — total load, BESS power, flexible-load power, SoC —
//! as a standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::sim::StepRecord;

use super::trace::TraceError;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 170.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const GAP: f64 = 30.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
/// Upper bound on points per polyline; longer series are decimated.
const MAX_POINTS: usize = 2000;

struct Series {
    label: String,
    values: Vec<f64>,
}

fn panel(svg: &mut String, index: usize, title: &str, unit: &str, t: &[f64], series: &[Series]) {
    let top = GAP + index as f64 * (PANEL_H + GAP);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let (t0, t1) = (t[0], *t.last().unwrap());
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |tv: f64| MARGIN_L + (tv - t0) / span_t * plot_w;
    let y = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;

    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_L}" y="{:.1}" font-size="13">{title} [{unit}]</text>"#,
        top - 6.0
    );
    for (v, anchor) in [(hi, top + 10.0), (lo, top + PANEL_H)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{anchor:.1}" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN_L - 4.0,
            fmt_tick(v)
        );
    }
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" x2="{:.1}" y1="{y0:.1}" y2="{y0:.1}" stroke="#ccc"/>"##,
            MARGIN_L + plot_w,
            y0 = y(0.0)
        );
    }
    let stride = t.len().div_ceil(MAX_POINTS).max(1);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = String::new();
        for i in (0..t.len()).step_by(stride).chain(std::iter::once(t.len() - 1)) {
            let _ = write!(pts, "{:.1},{:.1} ", x(t[i]), y(s.values[i]));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{color}" text-anchor="end">{}</text>"#,
            MARGIN_L + plot_w - 4.0,
            top + 12.0 + 12.0 * k as f64,
            s.label
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders the SVG document.
pub fn render_plot(trace: &[StepRecord]) -> Result<String, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let t: Vec<f64> = trace.iter().map(|r| r.t / 3600.0).collect();
    let nodes = trace[0].nodes.len();
    let col = |f: &dyn Fn(&StepRecord) -> f64| trace.iter().map(f).collect::<Vec<_>>();
    let per_node = |f: &dyn Fn(usize, &StepRecord) -> f64, prefix: &str| {
        (0..nodes)
            .map(|i| Series {
                label: format!("{prefix}{i}"),
                values: trace.iter().map(|r| f(i, r)).collect(),
            })
            .collect::<Vec<_>>()
    };
    let height = GAP + 4.0 * (PANEL_H + GAP) + 10.0;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">
<rect width="100%" height="100%" fill="white"/>
"#
    );
    panel(
        &mut svg,
        0,
        "Total load",
        "W",
        &t,
        &[
            Series {
                label: "nonflex + flex".into(),
                values: col(&|r| r.p_nonflex + r.p_flex),
            },
            Series {
                label: "pv".into(),
                values: col(&|r| r.p_pv),
            },
        ],
    );
    panel(&mut svg, 1, "BESS power (charging +)", "W", &t, &per_node(&|i, r| r.nodes[i].p_batt, "node "));
    panel(
        &mut svg,
        2,
        "Flexible load power",
        "W",
        &t,
        &[Series {
            label: "flex".into(),
            values: col(&|r| r.p_flex),
        }],
    );
    panel(&mut svg, 3, "State of charge", "-", &t, &per_node(&|i, r| r.nodes[i].soc, "node "));
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">time [h]</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        height - 4.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(trace: &[StepRecord], path: impl AsRef<Path>) -> Result<(), TraceError> {
    let svg = render_plot(trace)?;
    let path = path.as_ref();
    std::fs::write(path, svg).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })
}
