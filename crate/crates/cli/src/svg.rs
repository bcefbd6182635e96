//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
pub struct Axes {
    pub log_x: bool,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, ax: Axes) {
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT} {TOP} L{LEFT} {bx} L{by} {bx}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let lx = if ax.log_x { 10f64.powf(fx) } else { fx };
        let ly = if ax.log_y { 10f64.powf(fy) } else { fy };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(fx),
            bx + 18.0,
            tick(lx)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            f.py(fy) + 4.0,
            tick(ly)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y,
            escape(label)
        );
    }
}

/// One polyline per series. Points that cannot be drawn on a log axis are dropped.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    ax: Axes,
) -> String {
    let tx = |x: f64| if ax.log_x { x.log10() } else { x };
    let ty = |y: f64| if ax.log_y { y.log10() } else { y };
    let drawable: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .map(|&(x, y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let (x0, x1) = span(drawable.iter().flatten().map(|p| p.0));
    let (y0, y1) = span(drawable.iter().flatten().map(|p| p.1));
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label, ax);
    for (i, pts) in drawable.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            COLORS[i % COLORS.len()]
        );
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

pub struct Bars {
    pub label: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Overlaid step outlines of histograms, normalized to densities.
pub fn histogram_chart(title: &str, x_label: &str, hists: &[Bars]) -> String {
    let density = |h: &Bars| -> Vec<f64> {
        let n: u64 = h.counts.iter().sum();
        h.counts
            .iter()
            .zip(h.edges.windows(2))
            .map(|(c, e)| *c as f64 / (n.max(1) as f64 * (e[1] - e[0])))
            .collect()
    };
    let dens: Vec<Vec<f64>> = hists.iter().map(density).collect();
    let (x0, x1) = span(hists.iter().flat_map(|h| h.edges.iter().copied()));
    let (_, y1) = span(dens.iter().flatten().copied().chain([0.0]));
    let f = Frame {
        x0,
        x1,
        y0: 0.0,
        y1,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(
        &mut out,
        &f,
        x_label,
        "density",
        Axes {
            log_x: false,
            log_y: false,
        },
    );
    for (i, (h, d)) in hists.iter().zip(&dens).enumerate() {
        let mut path = format!("M{:.2} {:.2}", f.px(h.edges[0]), f.py(0.0));
        for (k, v) in d.iter().enumerate() {
            let _ = write!(
                path,
                " L{:.2} {:.2} L{:.2} {:.2}",
                f.px(h.edges[k]),
                f.py(*v),
                f.px(h.edges[k + 1]),
                f.py(*v)
            );
        }
        let _ = write!(
            path,
            " L{:.2} {:.2}",
            f.px(*h.edges.last().unwrap()),
            f.py(0.0)
        );
        let _ = writeln!(
            out,
            r#"<path d="{path}" fill="{c}" fill-opacity="0.25" stroke="{c}"/>"#,
            c = COLORS[i % COLORS.len()]
        );
    }
    let labels: Vec<&str> = hists.iter().map(|h| h.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_well_formed() {
        let s = line_chart(
            "decay <test>",
            "distance",
            "E",
            &[Series {
                label: "a&b".into(),
                points: vec![(1.0, 1.0), (10.0, 0.5), (100.0, -1.0)],
            }],
            Axes {
                log_x: true,
                log_y: true,
            },
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("decay &lt;test&gt;") && s.contains("a&amp;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }

    #[test]
    fn histogram_chart_has_one_path_per_series() {
        let bars = |label: &str| Bars {
            label: label.into(),
            edges: vec![0.0, 1.0, 2.0],
            counts: vec![3, 1],
        };
        let s = histogram_chart("h", "x", &[bars("rope"), bars("tapa")]);
        assert_eq!(s.matches("fill-opacity").count(), 2);
    }
}
