//! Minimal static SVG panels: lines or bars, an optional shaded band, reference lines.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 44.0;

pub(crate) struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
    pub dashed: bool,
}

pub(crate) struct Panel<'a> {
    pub title: String,
    pub x_label: &'a str,
    pub x: &'a [f64],
    pub series: Vec<Series<'a>>,
    pub band: Option<(&'a [f64], &'a [f64])>,
    pub bars: bool,
    pub hline: Option<f64>,
    pub vline: Option<f64>,
}

struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str, dashed: bool) {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{}"/>"#,
        coords.join(" ")
    );
}

pub(crate) fn render(panel: &Panel) -> String {
    let mut y_values: Vec<f64> = panel.series.iter().flat_map(|s| s.values.iter().copied()).collect();
    if let Some((lo, hi)) = panel.band {
        y_values.extend(lo.iter().chain(hi));
    }
    y_values.extend(panel.hline);
    if panel.bars {
        y_values.push(0.0);
    }
    let mut x_values = panel.x.to_vec();
    x_values.extend(panel.vline);
    let xs = Scale::new(x_values.into_iter(), LEFT, WIDTH - RIGHT);
    let ys = Scale::new(y_values.into_iter(), HEIGHT - BOTTOM, TOP);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(&panel.title)
    );
    for t in ys.ticks() {
        let y = ys.map(t);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            label(t)
        );
    }
    for t in xs.ticks() {
        let x = xs.map(t);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 8.0,
        escape(panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );

    if let Some((lo, hi)) = panel.band {
        if panel.bars {
            for ((&x, &l), &h) in panel.x.iter().zip(lo).zip(hi) {
                let px = xs.map(x);
                let _ = writeln!(
                    out,
                    r#"<line x1="{px:.2}" x2="{px:.2}" y1="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.2"/>"#,
                    ys.map(l),
                    ys.map(h)
                );
            }
        } else {
            let mut points: Vec<String> = panel.x.iter().zip(hi).map(|(&x, &h)| format!("{:.2},{:.2}", xs.map(x), ys.map(h))).collect();
            points.extend(panel.x.iter().zip(lo).rev().map(|(&x, &l)| format!("{:.2},{:.2}", xs.map(x), ys.map(l))));
            let _ = writeln!(out, r##"<polygon fill="#9ecae1" fill-opacity="0.5" stroke="none" points="{}"/>"##, points.join(" "));
        }
    }

    if panel.bars {
        let n_series = panel.series.len().max(1) as f64;
        let spacing = if panel.x.len() > 1 {
            (xs.map(panel.x[1]) - xs.map(panel.x[0])).abs()
        } else {
            WIDTH / 4.0
        };
        let width = 0.7 * spacing / n_series;
        let zero = ys.map(0.0);
        for (s_idx, series) in panel.series.iter().enumerate() {
            for (&x, &v) in panel.x.iter().zip(series.values) {
                let left = xs.map(x) - 0.35 * spacing + s_idx as f64 * width;
                let top = ys.map(v).min(zero);
                let _ = writeln!(
                    out,
                    r#"<rect x="{left:.2}" y="{top:.2}" width="{width:.2}" height="{:.2}" fill="{}" fill-opacity="0.8"/>"#,
                    (ys.map(v) - zero).abs(),
                    series.color
                );
            }
        }
    } else {
        for series in &panel.series {
            let points: Vec<(f64, f64)> = panel
                .x
                .iter()
                .zip(series.values)
                .filter(|(_, v)| v.is_finite())
                .map(|(&x, &v)| (xs.map(x), ys.map(v)))
                .collect();
            polyline(&mut out, &points, series.color, series.dashed);
        }
    }

    if let Some(h) = panel.hline {
        let y = ys.map(h);
        let _ = writeln!(out, r#"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="gray" stroke-dasharray="3 3"/>"#, WIDTH - RIGHT);
    }
    if let Some(v) = panel.vline {
        let x = xs.map(v);
        let _ = writeln!(out, r#"<line x1="{x:.2}" x2="{x:.2}" y1="{TOP}" y2="{}" stroke="gray" stroke-dasharray="3 3"/>"#, HEIGHT - BOTTOM);
    }
    for (i, series) in panel.series.iter().enumerate() {
        let y = TOP + 14.0 + 14.0 * i as f64;
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{}" x2="{}" y1="{y}" y2="{y}" stroke="{}" stroke-width="1.8"{dash}/><text x="{}" y="{}">{}</text>"#,
            LEFT + 8.0,
            LEFT + 28.0,
            series.color,
            LEFT + 32.0,
            y + 4.0,
            escape(series.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_lines_and_bars() {
        let x = [0.1, 0.5, 0.9];
        let a = [1.0, 2.0, 3.0];
        let b = [1.5, 2.5, 2.0];
        for bars in [false, true] {
            let svg = render(&Panel {
                title: "period 3 <post>".into(),
                x_label: "quantile",
                x: &x,
                series: vec![Series { label: "effect", values: &a, color: "black", dashed: false }],
                band: Some((&a, &b)),
                bars,
                hline: Some(0.0),
                vline: None,
            });
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(svg.contains("&lt;post&gt;"));
            assert_eq!(svg.contains("<polyline"), !bars);
        }
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let svg = render(&Panel {
            title: String::new(),
            x_label: "",
            x: &[1.0],
            series: vec![Series { label: "a", values: &[2.0], color: "red", dashed: true }],
            band: None,
            bars: false,
            hline: None,
            vline: None,
        });
        assert!(!svg.contains("NaN"));
    }
}
