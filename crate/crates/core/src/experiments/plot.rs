//! Minimal SVG charts on a fixed 800x400 canvas. Every chart can also
//! print its data as CSV, and the CSV is the record; the picture is only a
//! convenience.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Series {
    Bars { labels: Vec<String>, values: Vec<f64> },
    Line { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    /// File stem for the SVG and its CSV twin.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Series,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Data range padded so flat series still get a visible box.
fn span(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = if include_zero { (0.0, 0.0) } else { (f64::INFINITY, f64::NEG_INFINITY) };
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

impl Chart {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.x_label, self.y_label);
        match &self.series {
            Series::Bars { labels, values } => {
                for (l, v) in labels.iter().zip(values) {
                    let _ = writeln!(s, "{l},{v}");
                }
            }
            Series::Line { xs, ys } => {
                for (x, y) in xs.iter().zip(ys) {
                    let _ = writeln!(s, "{x},{y}");
                }
            }
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        let (lo, hi) = match &self.series {
            Series::Bars { values, .. } => span(values.iter().copied(), true),
            Series::Line { ys, .. } => span(ys.iter().copied(), false),
        };
        let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

        for i in 0..=4 {
            let v = lo + (hi - lo) * f64::from(i) / 4.0;
            let y = y_of(v);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                format_tick(v)
            );
        }

        match &self.series {
            Series::Bars { labels, values } => {
                let slot = plot_w / values.len().max(1) as f64;
                let zero = y_of(0.0);
                for (i, (l, v)) in labels.iter().zip(values).enumerate() {
                    let x = LEFT + slot * i as f64 + slot * 0.15;
                    let y = y_of(*v);
                    let (top, h) = if y < zero { (y, zero - y) } else { (zero, y - zero) };
                    let fill = if *v >= 0.0 { "#3b6ea8" } else { "#c0504d" };
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="{fill}"/>"#,
                        slot * 0.7
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        x + slot * 0.35,
                        TOP + plot_h + 16.0,
                        escape(l)
                    );
                }
                let _ = writeln!(
                    s,
                    r#"<line x1="{LEFT}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="black"/>"#,
                    LEFT + plot_w
                );
            }
            Series::Line { xs, ys } => {
                let (x_lo, x_hi) = span(xs.iter().copied(), false);
                let x_of = |v: f64| LEFT + plot_w * (v - x_lo) / (x_hi - x_lo);
                let mut pts = String::new();
                for (x, y) in xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()) {
                    let _ = write!(pts, "{:.2},{:.2} ", x_of(*x), y_of(*y));
                }
                let _ = writeln!(
                    s,
                    r##"<polyline points="{}" fill="none" stroke="#3b6ea8" stroke-width="1.5"/>"##,
                    pts.trim_end()
                );
                for v in [x_lo, x_hi] {
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        x_of(v),
                        TOP + plot_h + 16.0,
                        format_tick(v)
                    );
                }
            }
        }

        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}
