//! Per-class F1 bar chart as a standalone SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kid3_core::metrics::MetricsReport;
use kid3_core::taxonomy::ActivityClass;

use crate::error::{Error, Result};

const COLORS: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
const GROUP_WIDTH: f64 = 60.0;
const PLOT_HEIGHT: f64 = 300.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 170.0;

/// One group per class that appears in any report, one bar per report.
/// Each group is labelled with the class name and its test support.
pub fn f1_chart_svg(reports: &[MetricsReport]) -> Result<String> {
    let mut classes: Vec<ActivityClass> = reports.iter().flat_map(|r| r.per_class.0.iter().map(|(c, _)| *c)).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return Err(Error::EmptyReport);
    }

    let width = LEFT + GROUP_WIDTH * classes.len() as f64 + 20.0;
    let height = TOP + PLOT_HEIGHT + BOTTOM;
    let base = TOP + PLOT_HEIGHT;
    let bar = (GROUP_WIDTH - 12.0) / reports.len() as f64;
    let mut s = String::new();
    let w = &mut s;
    // fmt::Write into a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(w, r#"<text x="{LEFT}" y="20" font-size="14">F1 score and support per activity</text>"#);
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = base - v * PLOT_HEIGHT;
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            width - 20.0,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (i, r) in reports.iter().enumerate() {
        let x = LEFT + 90.0 * i as f64 + 250.0;
        let _ = writeln!(
            w,
            r#"<rect x="{x}" y="10" width="12" height="12" fill="{}"/><text x="{}" y="20">{}</text>"#,
            COLORS[i % COLORS.len()],
            x + 16.0,
            r.variant
        );
    }
    for (g, class) in classes.iter().enumerate() {
        let x0 = LEFT + GROUP_WIDTH * g as f64 + 6.0;
        let _ = writeln!(w, r#"<g class="class-group" data-class="{}">"#, class.index());
        for (i, r) in reports.iter().enumerate() {
            let f1 = r.class(*class).map_or(0.0, |c| c.f1);
            let h = f1 * PLOT_HEIGHT;
            let _ = writeln!(
                w,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}" fill="{}"><title>{} {}: F1 {f1:.3}</title></rect>"#,
                x0 + bar * i as f64,
                base - h,
                COLORS[i % COLORS.len()],
                r.variant,
                class.canonical_name()
            );
        }
        let support = reports.iter().find_map(|r| r.class(*class)).map_or(0, |c| c.support);
        let cx = x0 + (GROUP_WIDTH - 12.0) / 2.0;
        let _ = writeln!(w, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">n={support}</text>"#, base + 14.0);
        let _ = writeln!(
            w,
            r#"<text transform="translate({cx:.2},{}) rotate(-60)" text-anchor="end">{}. {}</text>"#,
            base + 26.0,
            class.index(),
            escape(class.display_name())
        );
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, width - 20.0);
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

pub fn emit_plot(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let svg = f1_chart_svg(reports)?;
    fs::write(path, svg).map_err(Error::unwritable(path))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
