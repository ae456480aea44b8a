//! Report writers: pretty JSON, plain CSV, and a small log-log SVG.

use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use threshold_scope::{Result, ScopeError};

fn io(path: &Path, e: std::io::Error) -> ScopeError {
    ScopeError::Config(format!("{}: {e}", path.display()))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Header line plus one row per record; floats use the shortest round-trip form.
pub fn to_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    /// log10 y = slope log10 x + intercept over [x_from, x_to].
    pub fit: Option<(f64, f64, f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: [f64; 4] = [70.0, 20.0, 40.0, 60.0]; // left, right, top, bottom

/// Log-log scatter with the fitted line and its slope in the corner.
pub fn loglog_svg(p: &Plot) -> String {
    let pts: Vec<(f64, f64)> = p.xs.iter().zip(p.ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.log10(), y.log10())).collect();
    let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |a, (x, y)| {
        (a.0.min(*x), a.1.max(*x), a.2.min(*y), a.3.max(*y))
    });
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |x: f64| M[0] + (x - x0) / (x1 - x0) * (W - M[0] - M[1]);
    let sy = |y: f64| H - M[3] - (y - y0) / (y1 - y0) * (H - M[2] - M[3]);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(p.title));
    for d in x0 as i64..=x1 as i64 {
        let x = sx(d as f64);
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, M[2], H - M[3]);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{d}</text>"#, H - M[3] + 16.0);
    }
    for d in y0 as i64..=y1 as i64 {
        let y = sy(d as f64);
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, M[0], W - M[1]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"#, M[0] - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#, M[0], M[2], W - M[0] - M[1], H - M[2] - M[3]);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (W + M[0] - M[1]) / 2.0, H - 12.0, escape(p.x_label));
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, H / 2.0, H / 2.0, escape(p.y_label));
    for (x, y) in &pts {
        let _ = writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#1f77b4"/>"##, sx(*x), sy(*y));
    }
    if let Some((slope, intercept, a, b)) = p.fit {
        let (la, lb) = (a.log10(), b.log10());
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#d62728" stroke-width="2"/>"##,
            sx(la),
            sy(slope * la + intercept),
            sx(lb),
            sy(slope * lb + intercept)
        );
        let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#d62728">slope = {slope:.3}</text>"##, W - M[1] - 8.0, M[2] + 18.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let s = to_csv(&["t", "a"], &[vec![1.0, 0.5], vec![2.0, 0.25]]);
        assert_eq!(s, "t,a\n1e0,5e-1\n2e0,2.5e-1\n");
    }

    #[test]
    fn svg_has_points_and_fit() {
        let xs = [1.0, 10.0, 100.0];
        let ys = [1.0, 0.1, 0.01];
        let svg = loglog_svg(&Plot { title: "a<b", x_label: "t", y_label: "y", xs: &xs, ys: &ys, fit: Some((-1.0, 0.0, 1.0, 100.0)) });
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("slope = -1.000") && svg.contains("a&lt;b"));
    }
}
