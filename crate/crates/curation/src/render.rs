//! SVG rendering of a page with its numbered detection overlays.

use std::fmt::Write;

use crate::error::CurationError;
use crate::state::{RunState, FLAG_REJECTED};

/// Rendered page width; height follows a US Letter aspect ratio.
pub const PAGE_WIDTH: f64 = 1000.0;
pub const PAGE_HEIGHT: f64 = 1294.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

/// The page image (by reference) with one labelled box per detection.
/// Markush scaffolds are drawn in a second colour; rejected detections are
/// dashed.
pub fn page_svg(state: &RunState, page: u32) -> Result<String, CurationError> {
    let rec = &state.record;
    let image = rec.parsed.page_image(page).map(|p| p.image.as_str());
    let detections: Vec<_> = rec.detections.iter().filter(|d| d.page == page).collect();
    if image.is_none() && detections.is_empty() {
        return Err(CurationError::UnknownPage(page));
    }
    let label_of = |id: usize| {
        rec.augmented_pages.iter().flat_map(|p| &p.overlays).find(|o| o.detection == id).map(|o| o.label)
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" viewBox="0 0 {PAGE_WIDTH} {PAGE_HEIGHT}" data-page="{page}">"#
    );
    if let Some(href) = image {
        let _ = writeln!(
            svg,
            r#"  <image href="{0}" xlink:href="{0}" x="0" y="0" width="{PAGE_WIDTH}" height="{PAGE_HEIGHT}" preserveAspectRatio="none"/>"#,
            escape(href)
        );
    }
    for d in detections {
        let (x, y) = (d.bbox.x0 * PAGE_WIDTH, d.bbox.y0 * PAGE_HEIGHT);
        let (w, h) = ((d.bbox.x1 - d.bbox.x0) * PAGE_WIDTH, (d.bbox.y1 - d.bbox.y0) * PAGE_HEIGHT);
        let colour = if d.is_markush { "#d9480f" } else { "#1971c2" };
        let dash = if d.flags.iter().any(|f| f == FLAG_REJECTED) { r#" stroke-dasharray="8 6""# } else { "" };
        let _ = writeln!(
            svg,
            r#"  <g data-detection="{}"><rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="{colour}" stroke-width="3"{dash}/>"#,
            d.id
        );
        if let Some(label) = label_of(d.id) {
            let _ = writeln!(
                svg,
                r#"    <text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="28" font-weight="bold" fill="{colour}">{label}</text>"#,
                x + 4.0,
                (y - 6.0).max(24.0)
            );
        }
        svg.push_str("  </g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
