//! Truth-versus-prediction scatter data as CSV and static SVG.

use std::fmt::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::UserError;

pub fn write_scatter_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["truth", "pred"])?;
    for (t, p) in points {
        w.write_record([t.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scatter_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| UserError(format!("{}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| UserError(format!("{}: missing column {name}", path.display())))
    };
    let (ti, pi) = (col("truth")?, col("pred")?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    UserError(format!(
                        "{}: bad number on row {}",
                        path.display(),
                        line + 2
                    ))
                    .into()
                })
        };
        out.push((parse(ti)?, parse(pi)?));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Square scatter plot with the identity line. Provenance goes into a
/// `<metadata>` element.
pub fn scatter_svg(points: &[(f64, f64)], title: &str, provenance: Option<&Value>) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 64.0;
    let finite = points
        .iter()
        .filter(|(t, p)| t.is_finite() && p.is_finite());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, p) in finite.clone() {
        lo = lo.min(t.min(p));
        hi = hi.max(t.max(p));
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let sx = |v: f64| MARGIN + (v - lo) / (hi - lo) * SIZE;
    let sy = |v: f64| MARGIN + SIZE - (v - lo) / (hi - lo) * SIZE;
    let total = SIZE + 2.0 * MARGIN;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(p) = provenance {
        let _ = writeln!(s, "<metadata>{}</metadata>", escape(&p.to_string()));
    }
    let _ = writeln!(
        s,
        r#"<rect width="{total}" height="{total}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        total / 2.0,
        MARGIN / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let (x, y) = (sx(v), sy(v));
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.3e}</text>"#,
            MARGIN + SIZE + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{v:.3e}</text>"#,
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">truth</text>"#,
        total / 2.0,
        total - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">prediction</text>"#,
        total / 2.0,
        total / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    );
    for (t, p) in finite {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="steelblue" fill-opacity="0.5"/>"#,
            sx(*t),
            sy(*p)
        );
    }
    s.push_str("</svg>\n");
    s
}
