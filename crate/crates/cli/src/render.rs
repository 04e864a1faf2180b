//! Self-contained SVG figures. Every number is printed with a fixed number
//! of decimals so re-rendering the same data gives identical bytes.

use std::fmt::Write;

use lmcorr_core::search::SweepPoint;
use lmcorr_core::{Point, SquareMatrix};

/// Color scale of a heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorMap {
    /// Dark blue at `lo` to bright yellow at `hi`.
    Sequential { lo: f64, hi: f64 },
    /// Red at `-limit`, white at 0, green at `+limit`.
    Diverging { limit: f64 },
}

const SEQUENTIAL_STOPS: [[u8; 3]; 5] = [
    [0x0b, 0x1d, 0x51],
    [0x25, 0x4b, 0x9a],
    [0x1f, 0x96, 0x8b],
    [0x7a, 0xd1, 0x51],
    [0xfd, 0xe7, 0x25],
];

const DIVERGING_STOPS: [[u8; 3]; 3] = [[0xb2, 0x18, 0x2b], [0xff, 0xff, 0xff], [0x1b, 0x78, 0x37]];

fn interpolate(stops: &[[u8; 3]], t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let segments = (stops.len() - 1) as f64;
    let x = t * segments;
    let k = (x.floor() as usize).min(stops.len() - 2);
    let f = x - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let a = stops[k][c] as f64;
        let b = stops[k + 1][c] as f64;
        out[c] = (a + (b - a) * f).round() as u8;
    }
    out
}

impl ColorMap {
    /// Fraction of the color scale a value sits at.
    fn position(&self, v: f64) -> f64 {
        match *self {
            Self::Sequential { lo, hi } => {
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Diverging { limit } => {
                if limit > 0.0 {
                    0.5 + 0.5 * v / limit
                } else {
                    0.5
                }
            }
        }
    }

    pub fn color(&self, v: f64) -> String {
        let t = self.position(v);
        let rgb = match self {
            Self::Sequential { .. } => interpolate(&SEQUENTIAL_STOPS, t),
            Self::Diverging { .. } => interpolate(&DIVERGING_STOPS, t),
        };
        format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
    }

    fn range(&self) -> (f64, f64) {
        match *self {
            Self::Sequential { lo, hi } => (lo, hi),
            Self::Diverging { limit } => (-limit, limit),
        }
    }
}

/// Text labels for a heatmap.
pub struct HeatmapLabels<'a> {
    pub title: &'a str,
    pub one_based: bool,
}

const CELL_AREA: f64 = 600.0;
const MARGIN: f64 = 50.0;

fn label_stride(m: usize) -> usize {
    match m {
        0..=30 => 1,
        31..=60 => 2,
        61..=150 => 5,
        _ => 10,
    }
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Square heatmap of a landmark matrix with indexed axes and a colorbar.
pub fn heatmap(matrix: &SquareMatrix, map: ColorMap, labels: &HeatmapLabels<'_>) -> String {
    let m = matrix.m_size().max(1);
    let cell = CELL_AREA / m as f64;
    let bar_x = MARGIN + CELL_AREA + 30.0;
    let width = bar_x + 90.0;
    let height = MARGIN * 2.0 + CELL_AREA;
    let mut out = String::new();
    svg_open(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        MARGIN + CELL_AREA / 2.0,
        escape(labels.title)
    );

    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for i in 0..matrix.m_size() {
        for j in 0..matrix.m_size() {
            let _ = writeln!(
                out,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                MARGIN + j as f64 * cell,
                MARGIN + i as f64 * cell,
                cell,
                cell,
                map.color(matrix.get(i, j))
            );
        }
    }
    let _ = writeln!(out, "</g>");

    let offset = usize::from(labels.one_based);
    let stride = label_stride(matrix.m_size());
    let font = (cell * 0.8).clamp(6.0, 12.0);
    for k in (0..matrix.m_size()).step_by(stride) {
        let centre = MARGIN + (k as f64 + 0.5) * cell;
        let _ = writeln!(
            out,
            r#"<text x="{centre:.3}" y="{:.3}" text-anchor="middle" font-size="{font:.1}">{}</text>"#,
            MARGIN - 4.0,
            k + offset
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end" font-size="{font:.1}">{}</text>"#,
            MARGIN - 4.0,
            centre + font / 3.0,
            k + offset
        );
    }

    // Colorbar: 100 bands from the top (high) to the bottom (low).
    let (lo, hi) = map.range();
    let bands = 100;
    let band_h = CELL_AREA / bands as f64;
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for b in 0..bands {
        let v = hi - (hi - lo) * (b as f64 + 0.5) / bands as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x:.2}" y="{:.3}" width="20" height="{:.3}" fill="{}"/>"#,
            MARGIN + b as f64 * band_h,
            band_h,
            map.color(v)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<rect x="{bar_x:.2}" y="{MARGIN:.2}" width="20" height="{CELL_AREA:.2}" fill="none" stroke="black" stroke-width="0.5"/>"#
    );
    for (v, y) in [
        (hi, MARGIN),
        ((lo + hi) / 2.0, MARGIN + CELL_AREA / 2.0),
        (lo, MARGIN + CELL_AREA),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            bar_x + 24.0,
            y + 4.0,
            tick(v)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Sweep curve: mean coverage value per budget with a ±1 std band.
pub fn curve(points: &[SweepPoint], title: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    if points.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }

    let band: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| {
            let sd = p.c_hat_var.max(0.0).sqrt();
            (p.m as f64, p.c_hat_mean - sd, p.c_hat_mean + sd)
        })
        .collect();
    let m_lo = band.first().map_or(0.0, |b| b.0);
    let m_hi = band.last().map_or(1.0, |b| b.0);
    let y_lo = band.iter().map(|b| b.1).fold(f64::INFINITY, f64::min).min(0.0);
    let y_hi = band.iter().map(|b| b.2).fold(f64::NEG_INFINITY, f64::max).max(1.0);
    let sx = |m: f64| {
        if m_hi > m_lo {
            left + (m - m_lo) / (m_hi - m_lo) * pw
        } else {
            left + pw / 2.0
        }
    };
    let sy = |v: f64| top + (y_hi - v) / (y_hi - y_lo) * ph;

    // Axes with ticks.
    let _ = writeln!(
        out,
        r#"<path d="M{left:.2},{top:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for k in 0..=5 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let stride = (points.len().div_ceil(10)).max(1);
    for p in points.iter().step_by(stride) {
        let x = sx(p.m as f64);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            top + ph,
            top + ph + 4.0,
            top + ph + 18.0,
            p.m
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">number of selected landmarks m</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {:.2})">coverage value c</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    // Band polygon: upper edge left to right, lower edge back.
    let mut poly = String::new();
    for &(m, _, up) in &band {
        let _ = write!(poly, "{:.2},{:.2} ", sx(m), sy(up));
    }
    for &(m, low, _) in band.iter().rev() {
        let _ = write!(poly, "{:.2},{:.2} ", sx(m), sy(low));
    }
    let _ = writeln!(
        out,
        r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
        poly.trim_end()
    );
    let line: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.m as f64), sy(p.c_hat_mean)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        line.join(" ")
    );
    for p in points {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            sx(p.m as f64),
            sy(p.c_hat_mean)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Mean shape with selected landmarks highlighted and every unselected
/// landmark linked to its proxy.
pub fn overlay(mean_shape: &[Point], selected: &[usize], assignment: &[usize], title: &str, one_based: bool) -> String {
    let (w, h) = (600.0, 640.0);
    let pad = 40.0;
    let top = 40.0;
    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    if mean_shape.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in mean_shape {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
    let scale = (w - 2.0 * pad).min(h - top - pad) / span;
    let px = |p: Point| {
        (
            pad + (p[0] - x0) * scale + ((w - 2.0 * pad) - (x1 - x0) * scale) / 2.0,
            top + (p[1] - y0) * scale,
        )
    };
    for (j, &proxy) in assignment.iter().enumerate() {
        if proxy != j {
            let (ax, ay) = px(mean_shape[j]);
            let (bx, by) = px(mean_shape[proxy]);
            let _ = writeln!(
                out,
                r##"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="#999999" stroke-width="0.8"/>"##
            );
        }
    }
    let offset = usize::from(one_based);
    for (j, &p) in mean_shape.iter().enumerate() {
        let (x, y) = px(p);
        if selected.binary_search(&j).is_ok() {
            let _ = writeln!(
                out,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="#d62728"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"##,
                x + 6.0,
                y - 6.0,
                j + offset
            );
        } else {
            let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#555555"/>"##);
        }
    }
    out.push_str("</svg>\n");
    out
}
