use std::fmt::Write as _;

const CELL_W: f64 = 64.0;
const CELL_H: f64 = 36.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 50.0;

/// Yellow (low) to dark red (high); failed cells are grey.
fn colour(v: f64, lo: f64, hi: f64) -> String {
    if !v.is_finite() {
        return "#bbbbbb".into();
    }
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 160.0), lerp(240.0, 20.0), lerp(160.0, 30.0))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Annotated heatmap with one row per `rows` label and one column per
/// `cols` label. `values[r][c]` may be NaN.
pub fn heatmap(title: &str, row_axis: &str, col_axis: &str, rows: &[String], cols: &[String], values: &[Vec<f64>]) -> String {
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let width = LEFT + CELL_W * cols.len() as f64 + 20.0;
    let height = TOP + CELL_H * rows.len() as f64 + 50.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(title)).unwrap();
    writeln!(s, r#"<text x="10" y="{}" >{}</text>"#, TOP - 8.0, escape(row_axis)).unwrap();
    for (r, label) in rows.iter().enumerate() {
        let y = TOP + CELL_H * r as f64;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + CELL_H / 2.0 + 4.0, escape(label))
            .unwrap();
        for (c, v) in values[r].iter().enumerate() {
            let x = LEFT + CELL_W * c as f64;
            writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="white"/>"#,
                colour(*v, lo, hi)
            )
            .unwrap();
            let text = if v.is_finite() { format!("{v:.3}") } else { "n/a".into() };
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{text}</text>"#,
                x + CELL_W / 2.0,
                y + CELL_H / 2.0 + 4.0
            )
            .unwrap();
        }
    }
    let base = TOP + CELL_H * rows.len() as f64;
    for (c, label) in cols.iter().enumerate() {
        let x = LEFT + CELL_W * c as f64 + CELL_W / 2.0;
        writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, base + 16.0, escape(label)).unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + CELL_W * cols.len() as f64 / 2.0,
        base + 38.0,
        escape(col_axis)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
