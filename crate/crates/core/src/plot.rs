//! Line charts rendered both as standalone SVG and as gnuplot scripts with
//! inline data, so no plotting runtime is needed to produce figures.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dash {
    Solid,
    Dotted,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dash: Dash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl LineChart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    fn usable(&self, (x, y): (f64, f64)) -> bool {
        x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
    }

    fn tx(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.log10()
        } else {
            y
        }
    }

    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&p| self.usable(p))
            .map(|(x, y)| (self.tx(x), self.ty(y)))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 == x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 == y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.04 * (y1 - y0);
        Some((x0, x1, y0 - pad, y1 + pad))
    }

    fn tick_label(v: f64, log: bool) -> String {
        if log {
            format!("1e{}", v.round() as i64)
        } else if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
            format!("{v:.1e}")
        } else {
            format!("{}", (v * 1000.0).round() / 1000.0)
        }
    }

    fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
        if log {
            let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
            if b >= a {
                let step = ((b - a) / 6 + 1).max(1);
                return (a..=b).step_by(step as usize).map(|v| v as f64).collect();
            }
        }
        (0..=5).map(|i| lo + (hi - lo) * i as f64 / 5.0).collect()
    }

    pub fn to_svg(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(&self.title)
        );
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        if let Some((x0, x1, y0, y1)) = self.bounds() {
            let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
            let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
            for t in Self::ticks(x0, x1, self.log_x) {
                let _ = writeln!(
                    out,
                    r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/><text x="{0:.2}" y="{3}" text-anchor="middle">{4}</text>"#,
                    px(t),
                    TOP + ph,
                    TOP + ph + 5.0,
                    TOP + ph + 18.0,
                    Self::tick_label(t, self.log_x)
                );
            }
            for t in Self::ticks(y0, y1, self.log_y) {
                let _ = writeln!(
                    out,
                    r#"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="black"/><text x="{3}" y="{4:.2}" text-anchor="end">{5}</text>"#,
                    LEFT - 5.0,
                    py(t),
                    LEFT,
                    LEFT - 8.0,
                    py(t) + 4.0,
                    Self::tick_label(t, self.log_y)
                );
            }
            for (i, s) in self.series.iter().enumerate() {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .copied()
                    .filter(|&p| self.usable(p))
                    .map(|(x, y)| format!("{:.2},{:.2}", px(self.tx(x)), py(self.ty(y))))
                    .collect();
                if pts.is_empty() {
                    continue;
                }
                let dash = match s.dash {
                    Dash::Solid => "",
                    Dash::Dotted => r#" stroke-dasharray="2,3""#,
                    Dash::Dashed => r#" stroke-dasharray="8,4""#,
                };
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                    s.color,
                    pts.join(" ")
                );
                if i < 24 {
                    let ly = TOP + 10.0 + 16.0 * i as f64;
                    let lx = WIDTH - RIGHT + 10.0;
                    let _ = writeln!(
                        out,
                        r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
                        lx + 24.0,
                        s.color,
                        lx + 30.0,
                        ly + 4.0,
                        escape(&s.name)
                    );
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        out.push_str("</svg>\n");
        out
    }

    /// A gnuplot script with the data inline; renders to `<svg_name>`.
    pub fn to_gnuplot(&self, svg_name: &str) -> String {
        let q = |s: &str| s.replace('"', "'");
        let mut out = String::new();
        let _ = writeln!(out, "set terminal svg size 640,440 enhanced font 'sans,11'");
        let _ = writeln!(out, "set output \"{}\"", q(svg_name));
        let _ = writeln!(out, "set title \"{}\"", q(&self.title));
        let _ = writeln!(out, "set xlabel \"{}\"", q(&self.x_label));
        let _ = writeln!(out, "set ylabel \"{}\"", q(&self.y_label));
        let _ = writeln!(out, "set key outside right");
        if self.log_x {
            let _ = writeln!(out, "set logscale x");
        }
        if self.log_y {
            let _ = writeln!(out, "set logscale y");
        }
        for (i, s) in self.series.iter().enumerate() {
            let _ = writeln!(out, "$d{i} << EOD");
            for &(x, y) in s.points.iter().filter(|&&p| self.usable(p)) {
                let _ = writeln!(out, "{x} {y}");
            }
            let _ = writeln!(out, "EOD");
        }
        let plots: Vec<String> = self
            .series
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let dt = match s.dash {
                    Dash::Solid => 1,
                    Dash::Dashed => 2,
                    Dash::Dotted => 3,
                };
                format!("$d{i} with lines lw 1.5 dt {dt} lc rgb \"{}\" title \"{}\"", s.color, q(&s.name))
            })
            .collect();
        if plots.is_empty() {
            let _ = writeln!(out, "set label \"no data\" at graph 0.5,0.5 center\nplot NaN notitle");
        } else {
            let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
        }
        out
    }
}
