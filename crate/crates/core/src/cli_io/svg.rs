//! Minimal self-contained SVG line charts.

use std::fmt::Write as _;

use thiserror::Error;

use crate::experiments::{ConvergenceReport, StabilityCurve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("series `{0}` has fewer than 2 plottable points")]
    TooFewPoints(String),
    #[error("nothing to plot")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Loglog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub annotation: Option<String>,
}

impl Plot {
    /// MSE against step size with the fitted power law.
    pub fn from_convergence(report: &ConvergenceReport) -> Self {
        let x: Vec<f64> = report.rows.iter().map(|r| r.delta).collect();
        let fit = x
            .iter()
            .map(|d| (2.0 * (report.intercept + report.slope * d.ln())).exp())
            .collect();
        Plot {
            title: "strong mean-square error".into(),
            x_label: "delta".into(),
            y_label: "mse".into(),
            series: vec![
                Series {
                    name: "mse".into(),
                    x: x.clone(),
                    y: report.rows.iter().map(|r| r.mse).collect(),
                    dashed: false,
                },
                Series {
                    name: "fit".into(),
                    x,
                    y: fit,
                    dashed: true,
                },
            ],
            annotation: Some(format!("slope = {:.3}", report.slope)),
        }
    }

    /// Mean-square curve with its Mittag-Leffler envelope when present.
    pub fn from_stability(curve: &StabilityCurve) -> Self {
        let mut series = vec![Series {
            name: "msq".into(),
            x: curve.times.clone(),
            y: curve.msq.clone(),
            dashed: false,
        }];
        if let Some(env) = &curve.envelope {
            series.push(Series {
                name: "envelope".into(),
                x: curve.times.clone(),
                y: env.clone(),
                dashed: true,
            });
        }
        Plot {
            title: format!(
                "mean square, theta = {}, delta = {}",
                curve.theta, curve.delta
            ),
            x_label: "t".into(),
            y_label: "E|X|^2".into(),
            series,
            annotation: None,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the plot; log axes drop non-positive values.
pub fn render_svg(plot: &Plot, kind: PlotKind) -> Result<String, RenderError> {
    if plot.series.is_empty() {
        return Err(RenderError::Empty);
    }
    let map = |v: f64| {
        if kind == PlotKind::Loglog {
            v.log10()
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(plot.series.len());
    for s in &plot.series {
        let p: Vec<(f64, f64)> =
            s.x.iter()
                .zip(&s.y)
                .filter(|(x, y)| kind == PlotKind::Line || (**x > 0.0 && **y > 0.0))
                .map(|(&x, &y)| (map(x), map(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
        if p.len() < 2 {
            return Err(RenderError::TooFewPoints(s.name.clone()));
        }
        pts.push(p);
    }
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let tick = |v: f64| {
        if kind == PlotKind::Loglog {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3e}")
        }
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (i, (s, p)) in plot.series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = p
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 110.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    if let Some(a) = &plot.annotation {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            LEFT + 10.0,
            TOP + 18.0,
            escape(a)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
