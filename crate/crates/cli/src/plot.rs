//! Static SVG line plots. Output depends only on the input table, so figures
//! are byte-stable.

use std::fmt::Write;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::export::{Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub log_x: bool,
    pub log_y: bool,
    /// Columns whose value combination identifies a curve.
    pub series: &'static [&'static str],
    /// Column drawn dashed in the colour of its curve.
    pub overlay: Option<&'static str>,
    /// Horizontal reference line.
    pub hline: Option<f64>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
    overlay: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return if log {
                Axis { lo: 1.0, hi: 10.0, log }
            } else {
                Axis { lo: 0.0, hi: 1.0, log }
            };
        }
        if log {
            let (a, b) = (lo.log10().floor(), hi.log10().ceil());
            let b = if b <= a { a + 1.0 } else { b };
            Axis {
                lo: 10f64.powf(a),
                hi: 10f64.powf(b),
                log,
            }
        } else {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            let step = nice_step(span * 1.1 / 5.0);
            Axis {
                lo: (lo / step).floor() * step,
                hi: ((hi / step).ceil() * step).max((lo / step).floor() * step + step),
                log,
            }
        }
    }

    fn unit(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
            let stride = ((b - a) as f64 / 8.0).ceil().max(1.0) as i32;
            (a..=b)
                .filter(|k| (k - a) % stride == 0)
                .map(|k| (10f64.powi(k), format!("1e{k}")))
                .collect()
        } else {
            let step = nice_step((self.hi - self.lo) / 5.0);
            let mut out = Vec::new();
            let mut k = (self.lo / step).ceil() as i64;
            while (k as f64) * step <= self.hi + 1e-9 * step {
                let v = k as f64 * step;
                out.push((v, format_tick(v, step)));
                k += 1;
            }
            out
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn format_tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(cell: Option<&Cell>) -> Option<f64> {
    cell.and_then(Cell::as_f64).filter(|v| v.is_finite())
}

fn collect_curves(spec: &PlotSpec, table: &Table, source: &Path) -> Result<Vec<Curve>> {
    if table.columns.is_empty() {
        return Ok(Vec::new());
    }
    let need = |name: &str| {
        table.column(name).ok_or_else(|| CliError::Schema {
            path: source.to_path_buf(),
            reason: format!("missing column `{name}`"),
        })
    };
    let x = need(spec.x)?;
    let y = need(spec.y)?;
    let series: Vec<usize> = spec.series.iter().map(|s| need(s)).collect::<Result<_>>()?;
    let overlay = spec.overlay.map(need).transpose()?;
    let ok = |v: f64, log: bool| !log || v > 0.0;

    let mut curves: Vec<(Vec<String>, Curve)> = Vec::new();
    for row in &table.rows {
        let key: Vec<String> = series
            .iter()
            .map(|&c| match &row[c] {
                Cell::Num(v) => format!("{v}"),
                Cell::Text(t) => t.clone(),
                Cell::Empty => String::new(),
            })
            .collect();
        let idx = match curves.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let label = spec
                    .series
                    .iter()
                    .zip(&key)
                    .map(|(n, v)| format!("{n}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                curves.push((
                    key,
                    Curve {
                        label,
                        points: Vec::new(),
                        overlay: Vec::new(),
                    },
                ));
                curves.len() - 1
            }
        };
        let Some(xv) = num(row.get(x)).filter(|v| ok(*v, spec.log_x)) else { continue };
        if let Some(yv) = num(row.get(y)).filter(|v| ok(*v, spec.log_y)) {
            curves[idx].1.points.push((xv, yv));
        }
        if let Some(ov) = overlay.and_then(|c| num(row.get(c))).filter(|v| ok(*v, spec.log_y)) {
            curves[idx].1.overlay.push((xv, ov));
        }
    }
    let mut out: Vec<Curve> = curves.into_iter().map(|(_, c)| c).collect();
    for c in &mut out {
        c.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        c.overlay.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

/// Renders `table` as an SVG line plot. `source` is used in diagnostics.
pub fn render(spec: &PlotSpec, table: &Table, source: &Path) -> Result<String> {
    let curves = collect_curves(spec, table, source)?;
    let xs = curves.iter().flat_map(|c| c.points.iter().chain(&c.overlay).map(|p| p.0));
    let x_axis = Axis::fit(xs, spec.log_x);
    let ys = curves
        .iter()
        .flat_map(|c| c.points.iter().chain(&c.overlay).map(|p| p.1))
        .chain(spec.hline.filter(|v| !spec.log_y || *v > 0.0));
    let y_axis = Axis::fit(ys, spec.log_y);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + pw * x_axis.unit(v);
    let py = |v: f64| TOP + ph * (1.0 - y_axis.unit(v));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(spec.title)
    );
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(s, r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}"/>"#);
    for (v, _) in x_axis.ticks() {
        let x = px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#, TOP + ph, TOP + ph + 5.0);
    }
    for (v, _) in y_axis.ticks() {
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}"/>"#, LEFT - 5.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="tick-labels">"#);
    for (v, label) in x_axis.ticks() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(v),
            TOP + ph + 18.0,
            escape(&label)
        );
    }
    for (v, label) in y_axis.ticks() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py(v) + 4.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(spec.y_label)
    );
    let _ = writeln!(s, "</g>");

    if let Some(h) = spec.hline.filter(|v| !spec.log_y || *v > 0.0) {
        let y = py(h);
        let _ = writeln!(
            s,
            r##"<line class="reference" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#999999" stroke-width="1.5"/>"##,
            LEFT + pw
        );
    }

    let polyline = |pts: &[(f64, f64)]| -> String {
        pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect::<Vec<_>>().join(" ")
    };
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if !c.points.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                polyline(&c.points)
            );
            for (x, y) in &c.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(*x), py(*y));
            }
        }
        if !c.overlay.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline class="overlay" fill="none" stroke="{color}" stroke-width="1.2" stroke-dasharray="6 4" points="{}"/>"#,
                polyline(&c.overlay)
            );
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 26.0, escape(&c.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
