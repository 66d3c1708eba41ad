//! Static SVG heatmaps of a divergence matrix.
//!
//! Colors run linearly from 0 to the largest off-diagonal value through five
//! viridis stops (dark purple → yellow), so lighter always means larger.

use std::fmt::Write;

use crate::divergence::DivergenceMatrix;

const CELL: f64 = 28.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_TOP: f64 = 56.0;
const LEGEND_WIDTH: f64 = 16.0;
const LEGEND_GAP: f64 = 24.0;
const LEGEND_STEPS: usize = 32;

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Hex color for `t ∈ [0, 1]`.
pub fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |x: f64, y: f64| (x + f * (y - x)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `matrix` with module ids on both axes. `metadata` pairs (such as
/// the config hash and seed) are embedded as `data-*` attributes on the
/// root element and repeated in a `<desc>`.
pub fn render_svg(matrix: &DivergenceMatrix, title: &str, metadata: &[(&str, String)]) -> String {
    let w = matrix.size();
    let mut max: f64 = 0.0;
    for i in 0..w {
        for j in 0..w {
            if i != j {
                max = max.max(matrix.get(i, j));
            }
        }
    }
    let grid = CELL * w as f64;
    let legend_x = MARGIN_LEFT + grid + LEGEND_GAP;
    let width = legend_x + LEGEND_WIDTH + 80.0;
    let height = MARGIN_TOP + grid + 24.0;

    let mut out = String::new();
    let attrs: String = metadata
        .iter()
        .map(|(k, v)| format!(" data-{}=\"{}\"", escape(k), escape(v)))
        .collect();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11"{attrs}>"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(title)).unwrap();
    let desc: Vec<String> = metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "<desc>{}</desc>", escape(&desc.join(" "))).unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{MARGIN_LEFT}" y="18" font-size="13">{}</text>"#, escape(title)).unwrap();

    for (i, id) in matrix.module_ids.iter().enumerate() {
        let c = MARGIN_LEFT + (i as f64 + 0.5) * CELL;
        let r = MARGIN_TOP + (i as f64 + 0.5) * CELL;
        writeln!(out, r#"<text x="{c}" y="{}" text-anchor="middle">{id}</text>"#, MARGIN_TOP - 6.0).unwrap();
        writeln!(out, r#"<text x="{}" y="{r}" text-anchor="end" dominant-baseline="middle">{id}</text>"#, MARGIN_LEFT - 6.0).unwrap();
    }
    for i in 0..w {
        for j in 0..w {
            let v = matrix.get(i, j);
            let t = if max > 0.0 { v / max } else { 0.0 };
            writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"><title>{} vs {}: {v:.6e}</title></rect>"#,
                MARGIN_LEFT + j as f64 * CELL,
                MARGIN_TOP + i as f64 * CELL,
                color(t),
                matrix.module_ids[i],
                matrix.module_ids[j],
            )
            .unwrap();
        }
    }

    let step = grid / LEGEND_STEPS as f64;
    for s in 0..LEGEND_STEPS {
        let t = 1.0 - (s as f64 + 0.5) / LEGEND_STEPS as f64;
        writeln!(
            out,
            r#"<rect x="{legend_x}" y="{}" width="{LEGEND_WIDTH}" height="{}" fill="{}"/>"#,
            MARGIN_TOP + s as f64 * step,
            step + 0.5,
            color(t)
        )
        .unwrap();
    }
    let label_x = legend_x + LEGEND_WIDTH + 4.0;
    writeln!(out, r#"<text x="{label_x}" y="{}" dominant-baseline="hanging">{max:.3e}</text>"#, MARGIN_TOP).unwrap();
    writeln!(out, r#"<text x="{label_x}" y="{}">0</text>"#, MARGIN_TOP + grid).unwrap();
    writeln!(out, r#"<text x="{legend_x}" y="{}">JSD (nats)</text>"#, MARGIN_TOP + grid + 16.0).unwrap();
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_scale_is_monotone_in_luminance() {
        let lum = |hex: &str| {
            let c = |k: usize| u8::from_str_radix(&hex[k..k + 2], 16).unwrap() as f64;
            0.2126 * c(1) + 0.7152 * c(3) + 0.0722 * c(5)
        };
        let mut last = -1.0;
        for s in 0..=100 {
            let l = lum(&color(s as f64 / 100.0));
            assert!(l > last, "{s}");
            last = l;
        }
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
    }

    #[test]
    fn svg_parses_and_labels_axes() {
        let m = DivergenceMatrix {
            module_ids: vec![1, 2, 14],
            values: vec![0.0, 0.1, 0.3, 0.1, 0.0, 0.2, 0.3, 0.2, 0.0],
        };
        let svg = render_svg(&m, "C <test>", &[("config-hash", "abc".into()), ("seed", "7".into())]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let root = doc.root_element();
        assert_eq!(root.attribute("data-seed"), Some("7"));
        assert_eq!(root.attribute("data-config-hash"), Some("abc"));
        let cells = root.children().filter(|n| n.has_tag_name("rect") && n.has_children()).count();
        assert_eq!(cells, 9);
        let labels: Vec<_> = root.descendants().filter(|n| n.has_tag_name("text")).filter_map(|n| n.text()).collect();
        assert!(labels.contains(&"14"));
        assert!(labels.contains(&"C <test>"));
    }
}
