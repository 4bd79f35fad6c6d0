//! Minimal self-contained SVG plots: scatter, line and segment layers on a
//! shared frame with ticks and a legend.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = [
    "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#1f77b4", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.log10(),
        }
    }
}

/// A scatter layer: points drawn as small discs.
pub struct Scatter<'a> {
    pub label: String,
    pub color: &'a str,
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
}

/// A polyline with markers.
pub struct Line<'a> {
    pub label: String,
    pub color: &'a str,
    pub points: Vec<[f64; 2]>,
    pub dashed: bool,
}

/// A segment with its own opacity in [0, 1].
pub struct Segment {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub opacity: f64,
}

/// One figure. Layers are painted in the order: segments, lines, scatters.
pub struct Figure<'a> {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    /// Keep one data unit equally long on both axes.
    pub equal_aspect: bool,
    pub scatters: Vec<Scatter<'a>>,
    pub lines: Vec<Line<'a>>,
    pub segments: Vec<Segment>,
}

impl<'a> Figure<'a> {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            equal_aspect: false,
            scatters: Vec::new(),
            lines: Vec::new(),
            segments: Vec::new(),
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut xs = [f64::INFINITY, f64::NEG_INFINITY];
        let mut ys = [f64::INFINITY, f64::NEG_INFINITY];
        let mut add = |p: &[f64; 2]| {
            let (x, y) = (self.x_scale.apply(p[0]), self.y_scale.apply(p[1]));
            if x.is_finite() && y.is_finite() {
                xs = [xs[0].min(x), xs[1].max(x)];
                ys = [ys[0].min(y), ys[1].max(y)];
            }
        };
        self.scatters.iter().flat_map(|s| &s.points).for_each(&mut add);
        self.lines.iter().flat_map(|l| &l.points).for_each(&mut add);
        for s in &self.segments {
            add(&s.from);
            add(&s.to);
        }
        let widen = |r: [f64; 2]| {
            if !r[0].is_finite() {
                [0.0, 1.0]
            } else if r[1] - r[0] < 1e-12 {
                [r[0] - 0.5, r[1] + 0.5]
            } else {
                let pad = 0.05 * (r[1] - r[0]);
                [r[0] - pad, r[1] + pad]
            }
        };
        let (mut xs, mut ys) = (widen(xs), widen(ys));
        if self.equal_aspect {
            let plot_w = WIDTH - LEFT - RIGHT;
            let plot_h = HEIGHT - TOP - BOTTOM;
            let unit = ((xs[1] - xs[0]) / plot_w).max((ys[1] - ys[0]) / plot_h);
            let (cx, cy) = (0.5 * (xs[0] + xs[1]), 0.5 * (ys[0] + ys[1]));
            xs = [cx - 0.5 * unit * plot_w, cx + 0.5 * unit * plot_w];
            ys = [cy - 0.5 * unit * plot_h, cy + 0.5 * unit * plot_h];
        }
        (xs, ys)
    }

    pub fn render(&self) -> String {
        let (xr, yr) = self.bounds();
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (self.x_scale.apply(x) - xr[0]) / (xr[1] - xr[0]) * plot_w;
        let py = |y: f64| TOP + plot_h - (self.y_scale.apply(y) - yr[0]) / (yr[1] - yr[0]) * plot_h;

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        self.axes(&mut s, xr, yr, plot_w, plot_h);

        for seg in &self.segments {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-opacity="{:.3}"/>"#,
                px(seg.from[0]),
                py(seg.from[1]),
                px(seg.to[0]),
                py(seg.to[1]),
                seg.opacity.clamp(0.0, 1.0)
            );
        }
        for line in &self.lines {
            let pts: Vec<String> = line
                .points
                .iter()
                .filter(|p| self.x_scale.apply(p[0]).is_finite() && self.y_scale.apply(p[1]).is_finite())
                .map(|p| format!("{:.2},{:.2}", px(p[0]), py(p[1])))
                .collect();
            let dash = if line.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                pts.join(" "),
                line.color
            );
            for p in &pts {
                let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{}"/>"#, line.color);
            }
        }
        for sc in &self.scatters {
            let _ = writeln!(s, r#"<g fill="{}" fill-opacity="0.8">"#, sc.color);
            for p in &sc.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{}"/>"#, px(p[0]), py(p[1]), sc.radius);
            }
            let _ = writeln!(s, "</g>");
        }
        self.legend(&mut s);
        s.push_str("</svg>\n");
        s
    }

    fn axes(&self, s: &mut String, xr: [f64; 2], yr: [f64; 2], plot_w: f64, plot_h: f64) {
        let ticks = 5;
        for t in 0..=ticks {
            let frac = t as f64 / ticks as f64;
            let xv = xr[0] + frac * (xr[1] - xr[0]);
            let yv = yr[0] + frac * (yr[1] - yr[0]);
            let unscale = |sc: Scale, v: f64| if sc == Scale::Log { 10f64.powf(v) } else { v };
            let x = LEFT + frac * plot_w;
            let y = TOP + plot_h - frac * plot_h;
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + plot_h,
                TOP + plot_h + 5.0,
                TOP + plot_h + 18.0,
                tick_label(unscale(self.x_scale, xv))
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                tick_label(unscale(self.y_scale, yv))
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
    }

    fn legend(&self, s: &mut String) {
        let entries = self
            .lines
            .iter()
            .map(|l| (&l.label, l.color))
            .chain(self.scatters.iter().map(|p| (&p.label, p.color)))
            .filter(|(label, _)| !label.is_empty());
        let x = WIDTH - RIGHT + 12.0;
        for (row, (label, color)) in entries.enumerate() {
            let y = TOP + 10.0 + 16.0 * row as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                y - 8.0,
                x + 14.0,
                y + 1.0,
                escape(label)
            );
        }
    }
}
