//! Top-down SVG rendering of a layout.
//!
//! The view looks down from `+y`: image x follows world x and image y
//! follows world z. Each object is a `polygon` of class `object` with a
//! `line` of class `heading` from its center to the middle of its front face.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::parser::fmt2;
use crate::scene::{footprint_polygon, SceneLayout, Vec2};

pub const SVG_CONTENT_TYPE: &str = "image/svg+xml";

const PADDING_PX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub pixels_per_meter: f64,
    /// Category (lowercase) to fill color; unknown categories get a hashed hue.
    pub palette: BTreeMap<String, String>,
    pub labels: bool,
    pub room_outline: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        let palette = [
            ("bed", "#8fb3d9"),
            ("double bed", "#8fb3d9"),
            ("wardrobe", "#b58f6b"),
            ("nightstand", "#d9b38f"),
            ("table", "#c9a66b"),
            ("desk", "#c9a66b"),
            ("chair", "#e0c48f"),
            ("sofa", "#9fc59f"),
            ("lamp", "#f2e394"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        RenderStyle {
            pixels_per_meter: 100.0,
            palette,
            labels: true,
            room_outline: true,
        }
    }
}

impl RenderStyle {
    fn color(&self, category: &str) -> String {
        let key = category.to_lowercase();
        if let Some(c) = self.palette.get(&key) {
            return c.clone();
        }
        // FNV-1a keeps the fallback stable across runs and platforms.
        let hash = key
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
        format!("hsl({}, 45%, 70%)", hash % 360)
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders the layout as a standalone SVG document.
pub fn render_layout(layout: &SceneLayout, style: &RenderStyle) -> String {
    let ppm = if style.pixels_per_meter > 0.0 {
        style.pixels_per_meter
    } else {
        RenderStyle::default().pixels_per_meter
    };
    let b = &layout.bounds;
    let width = 2.0 * b.half_x * ppm + 2.0 * PADDING_PX;
    let height = 2.0 * b.half_z * ppm + 2.0 * PADDING_PX;
    let px = |p: Vec2| ((p.x + b.half_x) * ppm + PADDING_PX, (p.z + b.half_z) * ppm + PADDING_PX);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = fmt2(width),
        h = fmt2(height)
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(&layout.room_type));
    if style.room_outline {
        let _ = writeln!(
            svg,
            r##"<rect class="room" x="{p}" y="{p}" width="{w}" height="{h}" fill="#fafafa" stroke="#333333" stroke-width="2"/>"##,
            p = fmt2(PADDING_PX),
            w = fmt2(2.0 * b.half_x * ppm),
            h = fmt2(2.0 * b.half_z * ppm)
        );
    }
    for obj in &layout.objects {
        let points: Vec<String> = footprint_polygon(obj)
            .iter()
            .map(|&p| {
                let (x, y) = px(p);
                format!("{},{}", fmt2(x), fmt2(y))
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<polygon class="object" data-name="{name}" data-category="{cat}" points="{pts}" fill="{fill}" fill-opacity="0.85" stroke="#444444" stroke-width="1"/>"##,
            name = escape(&obj.name),
            cat = escape(&obj.category),
            pts = points.join(" "),
            fill = style.color(&obj.category)
        );
        let center = Vec2::new(obj.center.x, obj.center.z);
        let front = obj.local_to_world(Vec2::new(0.0, obj.dims.d / 2.0));
        let (cx, cy) = px(center);
        let (fx, fy) = px(front);
        let _ = writeln!(
            svg,
            r##"<line class="heading" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#c0392b" stroke-width="2"/>"##,
            fmt2(cx),
            fmt2(cy),
            fmt2(fx),
            fmt2(fy)
        );
        if style.labels {
            let _ = writeln!(
                svg,
                r#"<text class="label" x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
                fmt2(cx),
                fmt2(cy),
                escape(&obj.name)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
